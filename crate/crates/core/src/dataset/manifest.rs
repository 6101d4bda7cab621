//! Dataset manifest: maps files to scenes, channels and roles.
//!
//! ```json
//! {"pattern": "mpfa", "layout": [90, 45, 135, 0],
//!  "entries": [{"file": "s01/gt_0.png", "scene": "s01", "angle": 0, "role": "gt"},
//!              {"file": "s01/high.pfi", "scene": "s01", "role": "noisy-high"}]}
//! ```
//!
//! Ground truth is either one file per channel (`angle`, optional `color`)
//! or a multi-channel pfi-raw stack with the angle omitted. Noisy entries
//! are single raw mosaics. Paths are relative to the manifest's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::NoiseLevel;
use crate::error::{Error, Result};
use crate::imagecore::{
    load_mosaic, load_pfi, load_plane, Angle, Channel, Color, MosaicImage, MpfaLayout,
    PatternDescriptor, PatternKind, PlaneFormat, PolarizationStack,
};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "gt")]
    Gt,
    #[serde(rename = "noisy-low")]
    NoisyLow,
    #[serde(rename = "noisy-medium")]
    NoisyMedium,
    #[serde(rename = "noisy-high")]
    NoisyHigh,
}

impl Role {
    pub fn noisy(level: NoiseLevel) -> Role {
        match level {
            NoiseLevel::Low => Role::NoisyLow,
            NoiseLevel::Medium => Role::NoisyMedium,
            NoiseLevel::High => Role::NoisyHigh,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: PathBuf,
    pub scene: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Color>,
    pub role: Role,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub pattern: PatternKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Vec<i64>>,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    base: PathBuf,
}

impl Manifest {
    pub fn new(pattern: PatternKind, layout: Option<MpfaLayout>, base: impl Into<PathBuf>) -> Self {
        Manifest {
            pattern,
            layout: layout.map(|l| l.to_degrees().iter().map(|&d| d as i64).collect()),
            entries: Vec::new(),
            base: base.into(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        m.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.pattern_descriptor()
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn pattern_descriptor(&self) -> Result<PatternDescriptor> {
        let layout = match &self.layout {
            Some(d) => MpfaLayout::from_degrees(d)?,
            None => MpfaLayout::default(),
        };
        Ok(PatternDescriptor::for_kind(self.pattern, layout))
    }

    pub fn resolve(&self, file: &Path) -> PathBuf {
        self.base.join(file)
    }

    /// Scene names in order of first appearance.
    pub fn scenes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.scene) {
                out.push(e.scene.clone());
            }
        }
        out
    }

    /// Noise levels that have a noisy input for `scene`.
    pub fn levels(&self, scene: &str) -> Vec<NoiseLevel> {
        NoiseLevel::ALL
            .into_iter()
            .filter(|&l| self.entries.iter().any(|e| e.scene == scene && e.role == Role::noisy(l)))
            .collect()
    }

    pub fn load_ground_truth<T: Scalar>(&self, scene: &str) -> Result<PolarizationStack<T>> {
        let mut planes = BTreeMap::new();
        for e in self.entries.iter().filter(|e| e.scene == scene && e.role == Role::Gt) {
            let path = self.resolve(&e.file);
            match e.angle {
                Some(deg) => {
                    let angle = Angle::from_degrees(deg).ok_or_else(|| {
                        Error::format(&path, format!("unsupported polarizer angle {deg}"))
                    })?;
                    let format = PlaneFormat::from_path(&path)
                        .ok_or_else(|| Error::format(&path, "unknown extension"))?;
                    let plane = load_plane(&path, format)?;
                    let color = e.color.unwrap_or(Color::Mono);
                    planes.insert(Channel::new(angle, color), plane);
                }
                None => {
                    let (_, chans) = load_pfi(&path)?;
                    for (ch, p) in chans {
                        if ch.angle.is_none() {
                            return Err(Error::format(&path, "ground-truth stack channels need angles"));
                        }
                        planes.insert(ch, p);
                    }
                }
            }
        }
        if planes.is_empty() {
            return Err(Error::contract(format!("scene {scene} has no ground truth")));
        }
        PolarizationStack::new(planes)
    }

    pub fn load_noisy<T: Scalar>(&self, scene: &str, level: NoiseLevel) -> Result<MosaicImage<T>> {
        let e = self
            .entries
            .iter()
            .find(|e| e.scene == scene && e.role == Role::noisy(level))
            .ok_or_else(|| Error::contract(format!("scene {scene} has no {level} input")))?;
        let pattern = self.pattern_descriptor()?;
        let m = load_mosaic(self.resolve(&e.file), Some(&pattern))?;
        if m.kind() != pattern.kind() {
            return Err(Error::format(
                self.resolve(&e.file),
                format!("mosaic is {}, manifest says {}", m.kind().name(), pattern.kind().name()),
            ));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::{store_mosaic, store_pfi, store_plane, Plane};
    use crate::mosaic::mosaic_from_stack;

    #[test]
    fn parse_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let planes = [0.125, 0.25, 0.375, 0.5].map(|v| Plane::<f64>::filled(4, 4, v));
        for (a, p) in Angle::ALL.iter().zip(&planes) {
            store_plane(p, dir.path().join(format!("gt_{}.pfi", a.degrees())), PlaneFormat::PfiRaw).unwrap();
        }
        let stack = PolarizationStack::mono(planes.clone()).unwrap();
        let m = mosaic_from_stack(&stack, &PatternDescriptor::mpfa(MpfaLayout::default())).unwrap();
        store_mosaic(&m, dir.path().join("high.pfi")).unwrap();
        let json = r#"{"pattern":"mpfa","entries":[
            {"file":"gt_0.pfi","scene":"s","angle":0,"role":"gt"},
            {"file":"gt_45.pfi","scene":"s","angle":45,"role":"gt"},
            {"file":"gt_90.pfi","scene":"s","angle":90,"role":"gt"},
            {"file":"gt_135.pfi","scene":"s","angle":135,"role":"gt"},
            {"file":"high.pfi","scene":"s","role":"noisy-high"}]}"#;
        let path = dir.path().join("manifest.json");
        std::fs::write(&path, json).unwrap();
        let man = Manifest::load(&path).unwrap();
        assert_eq!(man.scenes(), vec!["s".to_string()]);
        assert_eq!(man.levels("s"), vec![NoiseLevel::High]);
        assert_eq!(man.load_ground_truth::<f64>("s").unwrap(), stack);
        assert_eq!(man.load_noisy::<f64>("s", NoiseLevel::High).unwrap(), m);
        assert!(man.load_noisy::<f64>("s", NoiseLevel::Low).is_err());
        assert!(man.load_ground_truth::<f64>("other").is_err());
    }

    #[test]
    fn stacked_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        let planes = [0.125, 0.25, 0.375, 0.5].map(|v| Plane::<f64>::filled(4, 4, v));
        let stack = PolarizationStack::mono(planes).unwrap();
        let refs: Vec<_> = stack.iter().map(|(c, p)| (*c, p)).collect();
        store_pfi(dir.path().join("gt.pfi"), &refs, None, None).unwrap();
        let mut man = Manifest::new(PatternKind::Mpfa, None, dir.path());
        man.entries.push(ManifestEntry {
            file: "gt.pfi".into(),
            scene: "x".into(),
            angle: None,
            color: None,
            role: Role::Gt,
        });
        man.save(dir.path().join("m.json")).unwrap();
        let back = Manifest::load(dir.path().join("m.json")).unwrap();
        assert_eq!(back.load_ground_truth::<f64>("x").unwrap(), stack);
    }

    #[test]
    fn bad_manifest_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, r#"{"pattern":"mpfa","entries":[{"file":"a","scene":"s","role":"noisy-extreme"}]}"#).unwrap();
        assert!(matches!(Manifest::load(&path), Err(Error::Format { .. })));
    }
}
