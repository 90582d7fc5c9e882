//! Run configuration, parsed from TOML with unknown keys rejected.
//!
//! ```toml
//! seed = 1
//! output_dir = "runs/toy"
//!
//! [model]
//! classes = 4
//! [model.planes]
//! top = [48, 48]
//!
//! [train]
//! steps = 500
//!
//! [[scenes]]
//! kind = "objects"
//! seed = 100
//! num_points = 1500
//!
//! [[eval_scenes]]
//! kind = "room"
//! seed = 7
//! num_points = 1000
//! num_classes = 4
//! room_extent = [5.0, 5.0, 2.5]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::scenes::SceneEntry;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TrainConfig};

fn default_output_dir() -> PathBuf {
    PathBuf::from("hexplane-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Training scenes, used round-robin.
    #[serde(default)]
    pub scenes: Vec<SceneEntry>,
    /// Held-out scenes for `eval`.
    #[serde(default)]
    pub eval_scenes: Vec<SceneEntry>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        for (list, scenes) in [("scenes", &self.scenes), ("eval_scenes", &self.eval_scenes)] {
            for (i, s) in scenes.iter().enumerate() {
                let s = s.spec();
                s.validate().map_err(|e| Error::Config(format!("{list}[{i}]: {e}")))?;
                if s.num_classes as usize != self.model.classes {
                    return Err(Error::Config(format!(
                        "{list}[{i}].num_classes = {} but model.classes = {}",
                        s.num_classes, self.model.classes
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[model]\nclasses = 3\n";

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.model.planes.top, [256, 256]);
        assert_eq!(c.train.lr_max, 3.5e-4);
        assert_eq!(c.train.aux_weight, 0.4);
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_named() {
        for (text, key) in [
            ("bogus = 1\n[model]\nclasses = 3\n", "bogus"),
            ("[model]\nclasses = 3\nlayers = 2\n", "layers"),
            ("[model]\nclasses = 3\n[model.planes]\ntopp = [1, 1]\n", "topp"),
            ("[model]\nclasses = 3\n[train]\nstep = 1\n", "step"),
        ] {
            let e = RunConfig::parse(text).unwrap_err().to_string();
            assert!(e.contains(key), "{e}");
        }
    }

    #[test]
    fn semantic_validation() {
        assert!(RunConfig::parse("[model]\nclasses = 1\n").is_err());
        let bad = "[model]\nclasses = 3\n[[scenes]]\nkind = \"room\"\nseed = 1\nnum_points = 10\nnum_classes = 2\nroom_extent = [1.0, 1.0, 1.0]\n";
        assert!(RunConfig::parse(bad).unwrap_err().to_string().contains("scenes[0]"));
        let bad = "[model]\nclasses = 3\n[[scenes]]\nkind = \"separable\"\nseed = 1\nnum_points = 10\n";
        assert!(RunConfig::parse(bad).unwrap_err().to_string().contains("num_classes"));
        let typo = "[model]\nclasses = 4\n[[scenes]]\nkind = \"objects\"\nseed = 1\nnum_pts = 10\n";
        assert!(RunConfig::parse(typo).unwrap_err().to_string().contains("num_pts"));
        let room = "[model]\nclasses = 2\n[[scenes]]\nkind = \"room\"\nseed = 1\nnum_points = 10\nnum_classes = 2\nroom_extent = [1.0, 1.0, 1.0]\nnoise = 1\n";
        assert!(RunConfig::parse(room).unwrap_err().to_string().contains("noise"));
    }
}
