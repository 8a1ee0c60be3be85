use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bmera::C64;

/// CSV table with `#` header lines. Every file starts with the command, the
/// config hash and the seed.
pub struct Table {
    header: Vec<String>,
    columns: String,
    rows: Vec<String>,
}

impl Table {
    pub fn new(command: &str, hash: &str, seed: u64, columns: &[&str]) -> Self {
        Self {
            header: vec![
                format!("bmera {command} {}", env!("CARGO_PKG_VERSION")),
                format!("config_sha256 = {hash}"),
                format!("seed = {seed}"),
            ],
            columns: columns.join(","),
            rows: Vec::new(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        self.header.push(format!("{key} = {value}"));
    }

    pub fn row(&mut self, cells: &[String]) {
        self.rows.push(cells.join(","));
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for h in &self.header {
            let _ = writeln!(s, "# {h}");
        }
        let _ = writeln!(s, "{}", self.columns);
        for r in &self.rows {
            let _ = writeln!(s, "{r}");
        }
        s
    }

    pub fn write(&self, dir: &Path, name: &str) -> std::io::Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, self.render())?;
        Ok(path)
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn re_im(z: C64) -> [String; 2] {
    [num(z.re), num(z.im)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_precedes_columns() {
        let mut t = Table::new("check", "abc", 7, &["a", "b"]);
        t.note("tolerance", 1e-10);
        t.row(&["1".into(), "2".into()]);
        let s = t.render();
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[0].starts_with("# bmera check"));
        assert_eq!(lines[1], "# config_sha256 = abc");
        assert_eq!(lines[2], "# seed = 7");
        assert_eq!(lines[3], "# tolerance = 0.0000000001");
        assert_eq!(&lines[4..], &["a,b", "1,2"]);
    }
}
