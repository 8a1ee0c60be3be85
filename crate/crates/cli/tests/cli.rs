use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bmera::io::TensorFile;
use bmera::network::{MeraConfig, MeraTensors};
use bmera::{Tensor, C64};
use tempfile::TempDir;

struct Run {
    out: Output,
    dir: PathBuf,
}

impl Run {
    fn code(&self) -> i32 {
        self.out.status.code().expect("exit code")
    }

    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.out.stderr).into_owned()
    }

    fn file(&self, name: &str) -> String {
        fs::read_to_string(self.dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }
}

fn bmera(tmp: &Path, command: &str, config: &str) -> Run {
    let cfg = tmp.join("run.toml");
    fs::write(&cfg, config).unwrap();
    let dir = tmp.join(format!("out-{command}"));
    let out = Command::new(env!("CARGO_BIN_EXE_bmera"))
        .args([command, "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    Run { out, dir }
}

fn network(d: usize, m: usize, n: u32, seed: u64) -> String {
    format!("[network]\nd = {d}\nm = {m}\nn = {n}\nseed = {seed}\n")
}

/// Data rows (after the header and the column line).
fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn note(csv: &str, key: &str) -> String {
    let prefix = format!("# {key} = ");
    csv.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no header {key}"))
        .to_string()
}

#[test]
fn check_passes_on_fresh_tensors() {
    let tmp = TempDir::new().unwrap();
    let r = bmera(tmp.path(), "check", &network(2, 2, 2, 5));
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let csv = r.file("check.csv");
    assert_eq!(note(&csv, "seed"), "5");
    assert_eq!(note(&csv, "config_sha256").len(), 64);
    assert_eq!(rows(&csv).len(), 5);
    assert!(rows(&csv).iter().all(|r| r[3] == "true"));
}

#[test]
fn impossible_tolerance_fails_with_code_2() {
    let tmp = TempDir::new().unwrap();
    let r = bmera(tmp.path(), "check", &format!("{}[check]\ntolerance = 1e-20\n", network(2, 2, 2, 5)));
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("tensor="));
}

#[test]
fn corrupted_tensors_name_the_offender() {
    let tmp = TempDir::new().unwrap();
    let cfg = MeraConfig::new(2, 1, 2, 3).unwrap();
    let mut t = MeraTensors::random_isometric(&cfg).unwrap();
    let mut data = t.chi.data().to_vec();
    data[0] += C64::new(0.1, 0.0);
    t.chi = Tensor::from_vec(t.chi.shape(), data).unwrap();
    TensorFile::new(t, Some(cfg)).save(&tmp.path().join("bad.json")).unwrap();
    let config = format!("{}tensors = \"bad.json\"\n", network(2, 1, 2, 3));
    let r = bmera(tmp.path(), "check", &config);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("tensor=chi"), "{}", r.stderr());
    // other commands refuse the same tensors with the same code
    let r = bmera(tmp.path(), "spectrum", &config);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("chi"));
}

#[test]
fn unknown_keys_and_bad_usage_exit_1() {
    let tmp = TempDir::new().unwrap();
    let r = bmera(tmp.path(), "check", &format!("{}colour = 1\n", network(2, 1, 2, 3)));
    assert_eq!(r.code(), 1);
    assert!(r.stderr().contains("colour"));
    let out = Command::new(env!("CARGO_BIN_EXE_bmera")).arg("check").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn trivial_network_has_unit_spectra() {
    let tmp = TempDir::new().unwrap();
    let r = bmera(tmp.path(), "spectrum", &network(1, 1, 2, 0));
    assert_eq!(r.code(), 0, "{}", r.stderr());
    for name in ["descend_l", "descend_r", "average", "stable_l", "stable_r", "twopoint"] {
        let rows = rows(&r.file(&format!("spectrum_{name}.csv")));
        assert_eq!(rows.len(), 1, "{name}");
        assert!((rows[0][1].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    }
    let two = r.file("spectrum_twopoint.csv");
    assert_eq!(note(&two, "descend_l_equals_descend_r"), "true");
    assert!(note(&two, "max_distance_to_pairwise_products").parse::<f64>().unwrap() < 1e-12);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let config = format!("{}[spectrum]\ntwopoint = false\n", network(2, 2, 2, 9));
    let a = bmera(tmp.path(), "spectrum", &config);
    let first: Vec<String> = ["average", "stable_l"].iter().map(|n| a.file(&format!("spectrum_{n}.csv"))).collect();
    let b = bmera(tmp.path(), "spectrum", &config);
    let second: Vec<String> = ["average", "stable_l"].iter().map(|n| b.file(&format!("spectrum_{n}.csv"))).collect();
    assert_eq!(first, second);
    assert_eq!(rows(&first[0]).len(), 64);
}

#[test]
fn profile_of_scaling_operator_recovers_exponent() {
    let tmp = TempDir::new().unwrap();
    let config = format!("{}[operator]\nkind = \"scaling\"\nindex = 0\n", network(2, 2, 2, 2));
    let r = bmera(tmp.path(), "profile", &config);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let fit = r.file("profile_fit.csv");
    let expect: f64 = note(&fit, "minus_log2_abs_kappa").parse().unwrap();
    let got: f64 = rows(&fit)[0][0].parse().unwrap();
    assert!((got - expect).abs() < 1e-8, "{got} vs {expect}");
    assert_eq!(rows(&r.file("profile.csv")).len(), 11);

    let r = bmera(tmp.path(), "correlator", &config);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let got: f64 = rows(&r.file("correlator_fit.csv"))[0][0].parse().unwrap();
    assert!((got - 2.0 * expect).abs() < 1e-8, "{got} vs {}", 2.0 * expect);
}

#[test]
fn exact_matches_oracle_at_n2() {
    let tmp = TempDir::new().unwrap();
    let config = format!("{}[operator]\nkind = \"pauli\"\nstring = \"ZIZ\"\n", network(2, 2, 2, 42));
    let r = bmera(tmp.path(), "exact", &config);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let csv = r.file("exact.csv");
    assert!(note(&csv, "discrepancy").parse::<f64>().unwrap() <= 1e-10);
    assert_eq!(rows(&csv).len(), 16);
    assert_eq!(rows(&r.file("exact_values.csv")).len(), 14);
}

#[test]
fn exact_over_budget_exits_5() {
    let tmp = TempDir::new().unwrap();
    let r = bmera(tmp.path(), "exact", &format!("{}[exact]\nbudget = 16\n", network(2, 2, 2, 42)));
    assert_eq!(r.code(), 5);
}

#[test]
fn energy_converges_without_slow_modes() {
    let tmp = TempDir::new().unwrap();
    let config = format!("{}[model]\nkind = \"ising\"\ng = 1.0\n[energy]\ntau = 60\n", network(2, 2, 2, 8));
    let r = bmera(tmp.path(), "energy", &config);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let csv = r.file("energy.csv");
    assert_eq!(note(&csv, "divergence_flag"), "false");
    assert_eq!(note(&csv, "converged"), "true");
    let comps = rows(&r.file("energy_components.csv"));
    assert!(comps.iter().skip(1).all(|c| c[3].parse::<f64>().unwrap() < 0.5));
}

/// Copy isometry `|u⟩ → |u u⟩` with identity disentanglers keeps both
/// classical product states fixed, so nothing mixes.
fn copy_network() -> MeraTensors {
    let (d, m) = (2, 1);
    let one = C64::new(1.0, 0.0);
    let chi = Tensor::from_fn(&[d, d, d, d], |i| if i[0] == i[2] && i[1] == i[3] { one } else { C64::default() });
    let lambda = Tensor::from_fn(&[d, d, d], |i| if i[0] == i[1] && i[1] == i[2] { one } else { C64::default() });
    let alpha = Tensor::from_fn(&[m, d, m, d], |i| if i[0] == i[2] && i[1] == i[3] { one } else { C64::default() });
    let hat = Tensor::from_fn(&[m, d, d, d, d, m], |i| if i.iter().all(|&x| x == 0) { one } else { C64::default() });
    MeraTensors::from_parts(d, m, chi, lambda, alpha.clone(), alpha, hat).unwrap()
}

#[test]
fn non_mixing_network_exits_3() {
    let tmp = TempDir::new().unwrap();
    TensorFile::new(copy_network(), None).save(&tmp.path().join("copy.json")).unwrap();
    let config = format!(
        "{}tensors = \"copy.json\"\n[operator]\nkind = \"pauli\"\nstring = \"ZII\"\n",
        network(2, 1, 2, 0)
    );
    let r = bmera(tmp.path(), "profile", &config);
    assert_eq!(r.code(), 3, "{}", r.stderr());
}

#[test]
fn optimize_writes_checkpoint_and_resumes() {
    let tmp = TempDir::new().unwrap();
    let config = format!("{}[model]\nkind = \"ising\"\ng = 1.0\n[optimize]\nsweeps = 3\n", network(2, 1, 2, 4));
    let r = bmera(tmp.path(), "optimize", &config);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let trace = rows(&r.file("optimize.csv"));
    assert_eq!(trace.len(), 4);
    let costs: Vec<f64> = trace.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(costs.windows(2).all(|w| w[1] <= w[0]));

    fs::copy(r.dir.join("checkpoint.json"), tmp.path().join("ck.json")).unwrap();
    fs::copy(r.dir.join("tensors.json"), tmp.path().join("opt.json")).unwrap();
    let resumed = format!("{config}[checkpoint]\nresume = \"ck.json\"\n");
    let r2 = bmera(tmp.path(), "optimize", &resumed);
    assert_eq!(r2.code(), 0, "{}", r2.stderr());
    let trace2 = rows(&r2.file("optimize.csv"));
    assert_eq!(trace2.len(), 7);
    assert_eq!(trace2[..4], trace[..]);

    let check = format!("{}tensors = \"opt.json\"\n", network(2, 1, 2, 4));
    assert_eq!(bmera(tmp.path(), "check", &check).code(), 0);
}
