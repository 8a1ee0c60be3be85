//! Tensor container: JSON with shapes, complex entries as `[re, im]`, and
//! the generating config. Floats are written in shortest round-trip form and
//! parsed exactly, so save then load is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{MeraConfig, MeraTensors};

pub const FORMAT: &str = "bmera-tensors";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorFile {
    pub format: String,
    pub version: u32,
    /// Config the tensors were generated from, when known.
    pub config: Option<MeraConfig>,
    pub tensors: MeraTensors,
}

impl TensorFile {
    pub fn new(tensors: MeraTensors, config: Option<MeraConfig>) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            config,
            tensors,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        self.config.as_ref().map(|c| c.seed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: TensorFile = serde_json::from_str(s)?;
        if f.format != FORMAT || f.version != VERSION {
            return Err(Error::Format(format!(
                "expected {FORMAT} version {VERSION}, found {} version {}",
                f.format, f.version
            )));
        }
        f.tensors.check_shapes()?;
        if let Some(c) = &f.config {
            if c.d != f.tensors.d || c.m != f.tensors.m {
                return Err(Error::Format("config dimensions differ from the tensors".into()));
            }
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let c = MeraConfig::new(2, 3, 2, 17).unwrap();
        let t = MeraTensors::random_isometric(&c).unwrap();
        let f = TensorFile::new(t.clone(), Some(c));
        let back = TensorFile::from_json(&f.to_json().unwrap()).unwrap();
        for (a, b) in [(&t.chi, &back.tensors.chi), (&t.hat, &back.tensors.hat), (&t.alpha_l, &back.tensors.alpha_l)] {
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
        assert_eq!(back.seed(), Some(17));
    }

    #[test]
    fn rejects_wrong_format_and_unknown_keys() {
        let c = MeraConfig::new(2, 1, 1, 1).unwrap();
        let f = TensorFile::new(MeraTensors::random_isometric(&c).unwrap(), None);
        let s = f.to_json().unwrap();
        assert!(TensorFile::from_json(&s.replace(FORMAT, "other")).is_err());
        let extra = s.replacen('{', "{\"extra\": 1,", 1);
        assert!(TensorFile::from_json(&extra).is_err());
    }
}
