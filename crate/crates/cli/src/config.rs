//! Run configuration assembled from flags, with an optional JSON file on top.

use std::path::Path;

use dofp::dataset::NoiseLevel;
use dofp::denoise::NoiseProfile;
use dofp::pipeline::RunConfig;
use dofp::Error;
use serde_json::Value;

use crate::CliError;

/// Flag values that feed a [`RunConfig`].
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub pattern: Option<dofp::PatternKind>,
    pub layout: Option<Vec<i64>>,
    pub demosaicker: Option<dofp::pipeline::Demosaicker>,
    pub pipeline: Option<dofp::pipeline::PipelineKind>,
    pub sigma: Option<f64>,
    pub sigma_rgb: [Option<f64>; 3],
    pub level: Option<NoiseLevel>,
    pub seed: Option<u64>,
}

impl Overrides {
    fn noise(&self, pattern: dofp::PatternKind) -> Result<Option<NoiseProfile>, CliError> {
        let rgb = self.sigma_rgb;
        if rgb.iter().any(Option::is_some) {
            let [r, g, b] = rgb;
            let (r, g, b) = match (r, g, b) {
                (Some(r), Some(g), Some(b)) => (r, g, b),
                _ => return Err(CliError::Usage("--sigma-r, --sigma-g and --sigma-b go together".into())),
            };
            let mut p = NoiseProfile::rgb(r, g, b);
            if let Some(s) = self.sigma {
                p = p.with(dofp::Channel::color_only(dofp::Color::Mono), s)?;
            }
            return Ok(Some(p));
        }
        if let Some(s) = self.sigma {
            return Ok(Some(NoiseProfile::new().with(dofp::Channel::color_only(dofp::Color::Mono), s)?));
        }
        Ok(self.level.map(|l| dofp::dataset::level_profile(l, pattern)))
    }

    fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(p) = self.pattern {
            cfg.pattern = p;
        }
        if let Some(l) = &self.layout {
            cfg.layout = l.clone();
        }
        if let Some(d) = self.demosaicker {
            cfg.demosaicker = d;
        }
        if let Some(k) = self.pipeline {
            cfg.pipeline = k;
        }
        if let Some(n) = self.noise(cfg.pattern)? {
            cfg.noise = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(())
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Flags first, then every key present in `file` replaces the flag value.
pub fn build(base: RunConfig, flags: &Overrides, file: Option<&Path>) -> Result<RunConfig, CliError> {
    let mut cfg = base;
    flags.apply(&mut cfg)?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let over: Value = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut v = serde_json::to_value(&cfg).expect("config serializes");
        merge(&mut v, over);
        cfg = serde_json::from_value(v).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dofp::pipeline::PipelineKind;

    #[test]
    fn file_keys_win_over_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"pipeline": "demosaick-only", "bm3d": {"step": 4}}"#).unwrap();
        let flags = Overrides {
            pipeline: Some(PipelineKind::DemosaickThenDenoise),
            sigma: Some(0.02),
            ..Overrides::default()
        };
        let cfg = build(RunConfig::default(), &flags, Some(&path)).unwrap();
        assert_eq!(cfg.pipeline, PipelineKind::DemosaickOnly);
        assert_eq!(cfg.bm3d.step, 4);
        assert_eq!(cfg.bm3d.block_size, 8);
        assert_eq!(cfg.noise.sigma(dofp::Channel::mono(dofp::Angle::A90)).unwrap(), 0.02);
    }

    #[test]
    fn partial_rgb_sigma_is_usage_error() {
        let flags = Overrides {
            sigma_rgb: [Some(0.1), None, Some(0.1)],
            ..Overrides::default()
        };
        assert!(matches!(build(RunConfig::default(), &flags, None), Err(CliError::Usage(_))));
    }

    #[test]
    fn level_uses_table_sigma() {
        let flags = Overrides {
            level: Some(NoiseLevel::High),
            ..Overrides::default()
        };
        let cfg = build(RunConfig::default(), &flags, None).unwrap();
        let s = cfg.noise.sigma(dofp::Channel::mono(dofp::Angle::A0)).unwrap();
        assert!((s - 7.31 / 255.0).abs() < 1e-15);
    }
}
