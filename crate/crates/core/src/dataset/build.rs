//! Writing benchmark datasets to disk: synthetic scenes, and ground truth
//! plus noisy inputs built from capture bursts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::burst::{build_ground_truth, compute_digital_gain, estimate_noise_levels, FrameSource, NoiseLevel};
use super::manifest::{Manifest, ManifestEntry, Role};
use super::synth::{add_mosaic_noise, synthesize_scene, SceneKind, SceneSpec};
use crate::denoise::NoiseProfile;
use crate::error::{ensure, Error, Result};
use crate::imagecore::{
    load_rgb_pfi, store_mosaic, store_stack, Angle, Channel, Color, MpfaLayout, PatternDescriptor, PatternKind,
    Plane, PolarizationStack, RgbImage,
};
use crate::mosaic::mosaic_from_stack;
use crate::scalar::Scalar;

/// Table noise levels for a sensor: the green level for MPFA, per color for
/// CPFA.
pub fn level_profile(level: NoiseLevel, pattern: PatternKind) -> NoiseProfile {
    let c = level.condition();
    match pattern {
        PatternKind::Mpfa => c.mono_profile(),
        _ => c.rgb_profile(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticOptions {
    pub width: usize,
    pub height: usize,
    pub scenes: usize,
    pub seed: u64,
    pub levels: Vec<NoiseLevel>,
    pub pattern: PatternKind,
    pub layout: MpfaLayout,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        SyntheticOptions {
            width: 256,
            height: 192,
            scenes: 5,
            seed: 0,
            levels: NoiseLevel::ALL.to_vec(),
            pattern: PatternKind::Mpfa,
            layout: MpfaLayout::default(),
        }
    }
}

/// Scene description used for synthetic scene `index`.
pub fn synthetic_scene_spec(opts: &SyntheticOptions, index: usize) -> SceneSpec {
    SceneSpec {
        width: opts.width,
        height: opts.height,
        seed: opts.seed.wrapping_add(index as u64),
        color: opts.pattern == PatternKind::Cpfa,
        kind: SceneKind::Random { shapes: 14 },
    }
}

/// Noise seed for one (scene, level) pair; distinct from the scene seeds.
pub fn synthetic_noise_seed(opts: &SyntheticOptions, index: usize, level: NoiseLevel) -> u64 {
    let l = NoiseLevel::ALL.iter().position(|&x| x == level).unwrap_or(0) as u64;
    opts.seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(((index as u64) << 8) | (l + 1))
}

/// Writes `scene_NNN/gt.pfi`, `scene_NNN/<level>.pfi` and `manifest.json`
/// under `out_dir`; returns the manifest path.
pub fn write_synthetic_dataset(out_dir: &Path, opts: &SyntheticOptions) -> Result<PathBuf> {
    ensure!(
        opts.pattern != PatternKind::Bayer,
        "synthetic datasets are mpfa or cpfa"
    );
    ensure!(opts.scenes > 0, "need at least one scene");
    let pattern = PatternDescriptor::for_kind(opts.pattern, opts.layout);
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut manifest = Manifest::new(opts.pattern, Some(opts.layout), out_dir);
    for i in 0..opts.scenes {
        let scene = format!("scene_{i:03}");
        let dir = out_dir.join(&scene);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let gt = synthesize_scene::<f64>(&synthetic_scene_spec(opts, i))?;
        store_stack(&gt, dir.join("gt.pfi"))?;
        manifest.entries.push(ManifestEntry {
            file: PathBuf::from(&scene).join("gt.pfi"),
            scene: scene.clone(),
            angle: None,
            color: None,
            role: Role::Gt,
        });
        let clean = mosaic_from_stack(&gt, &pattern)?;
        for &level in &opts.levels {
            let noisy = add_mosaic_noise(
                &clean,
                &level_profile(level, opts.pattern),
                synthetic_noise_seed(opts, i, level),
            )?;
            let name = format!("{}.pfi", level.name());
            store_mosaic(&noisy, dir.join(&name))?;
            manifest.entries.push(ManifestEntry {
                file: PathBuf::from(&scene).join(name),
                scene: scene.clone(),
                angle: None,
                color: None,
                role: Role::noisy(level),
            });
        }
    }
    let path = out_dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

/// A burst stored as one RGB pfi-raw file per frame, read on demand in
/// file-name order.
#[derive(Clone, Debug)]
pub struct FileBurst {
    paths: Vec<PathBuf>,
}

impl FileBurst {
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "pfi"))
            .collect();
        paths.sort();
        ensure!(!paths.is_empty(), "no .pfi frames in {}", dir.display());
        Ok(FileBurst { paths })
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.paths
    }
}

impl<T: Scalar> FrameSource<T> for FileBurst {
    fn frame_count(&self) -> usize {
        self.paths.len()
    }

    fn frame(&self, index: usize) -> Result<RgbImage<T>> {
        load_rgb_pfi(&self.paths[index])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GainMode {
    /// Gain from the given percentile of the pooled ground-truth pixels.
    Percentile(f64),
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BurstBuildOptions {
    pub level: NoiseLevel,
    pub exclude_count: usize,
    pub gain: GainMode,
    pub layout: MpfaLayout,
}

impl Default for BurstBuildOptions {
    fn default() -> Self {
        BurstBuildOptions {
            level: NoiseLevel::High,
            exclude_count: 100,
            gain: GainMode::Percentile(99.0),
            layout: MpfaLayout::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SceneSummary {
    pub scene: String,
    pub level: NoiseLevel,
    pub gain: f64,
    pub frames: usize,
    /// Median frame per angle, keyed by degrees.
    pub median_frame: BTreeMap<u16, usize>,
    /// Estimated noise after gain, keyed by channel name.
    pub sigma: BTreeMap<String, f64>,
}

fn scale_rgb<T: Scalar>(img: &RgbImage<T>, g: f64) -> Result<RgbImage<T>> {
    let [r, gg, b] = img.planes().clone().map(|p| p.map(|v| v * T::lit(g)));
    RgbImage::new(r, gg, b)
}

fn stacks_from<T: Scalar>(per_angle: &BTreeMap<Angle, RgbImage<T>>) -> Result<(PolarizationStack<T>, PolarizationStack<T>)> {
    let mut color = BTreeMap::new();
    let mut mono = BTreeMap::new();
    for (&a, img) in per_angle {
        for c in Color::RGB {
            color.insert(Channel::new(a, c), img.channel(c).clone());
        }
        mono.insert(Channel::mono(a), img.channel(Color::G).clone());
    }
    Ok((PolarizationStack::new(color)?, PolarizationStack::new(mono)?))
}

fn upsert(manifest: &mut Manifest, entry: ManifestEntry) {
    manifest.entries.retain(|e| !(e.scene == entry.scene && e.role == entry.role));
    manifest.entries.push(entry);
}

/// Processes `<bursts_dir>/<scene>/<angle>/*.pfi` (angles named `0`, `45`,
/// `90`, `135`) into ground truth, noisy MPFA/CPFA mosaics, noise profiles
/// and per-level manifests under `out_dir`.
///
/// Per angle, the ground truth is the mean of the frames kept after outlier
/// exclusion and the noisy input is the median frame. Both are multiplied
/// by the digital gain; the monochrome data uses the green channel.
pub fn build_dataset_from_bursts(bursts_dir: &Path, out_dir: &Path, opts: &BurstBuildOptions) -> Result<Vec<SceneSummary>> {
    let mut scenes: Vec<PathBuf> = std::fs::read_dir(bursts_dir)
        .map_err(|e| Error::io(bursts_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    scenes.sort();
    ensure!(!scenes.is_empty(), "no scene directories in {}", bursts_dir.display());
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let level = opts.level;
    let manifest_path = |k: PatternKind| out_dir.join(format!("manifest_{}_{}.json", k.name(), level.name()));
    let open = |k: PatternKind| -> Result<Manifest> {
        let p = manifest_path(k);
        if p.exists() {
            Manifest::load(&p)
        } else {
            Ok(Manifest::new(k, Some(opts.layout), out_dir))
        }
    };
    let mut man_mpfa = open(PatternKind::Mpfa)?;
    let mut man_cpfa = open(PatternKind::Cpfa)?;
    let mut summaries = Vec::new();

    for scene_dir in scenes {
        let scene = scene_dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::contract(format!("bad scene directory {}", scene_dir.display())))?
            .to_string();
        let mut gts = BTreeMap::new();
        let mut medians = BTreeMap::new();
        let mut sigmas = BTreeMap::new();
        let mut frames = 0;
        for a in Angle::ALL {
            let burst = FileBurst::from_dir(&scene_dir.join(a.degrees().to_string()))?;
            frames = frames.max(burst.paths().len());
            let gt = build_ground_truth::<f64, _>(&burst, opts.exclude_count)?;
            let sigma = estimate_noise_levels(&burst, &gt.image, &gt.retained)?;
            let median: RgbImage<f64> = burst.frame(gt.median_frame)?;
            medians.insert(a, (gt.median_frame, median));
            sigmas.insert(a, sigma);
            gts.insert(a, gt.image);
        }
        let gain = match opts.gain {
            GainMode::Fixed(g) => {
                ensure!(g > 0.0 && g.is_finite(), "gain must be positive, got {g}");
                g
            }
            GainMode::Percentile(pct) => {
                let planes: Vec<&Plane<f64>> = gts.values().flat_map(|im| im.planes().iter()).collect();
                compute_digital_gain(&planes, pct, 1.0)?
            }
        };
        let gts: BTreeMap<Angle, RgbImage<f64>> =
            gts.iter().map(|(&a, im)| Ok((a, scale_rgb(im, gain)?))).collect::<Result<_>>()?;
        let noisy: BTreeMap<Angle, RgbImage<f64>> = medians
            .iter()
            .map(|(&a, (_, im))| Ok((a, scale_rgb(im, gain)?)))
            .collect::<Result<_>>()?;
        let (gt_color, gt_mono) = stacks_from(&gts)?;
        let (noisy_color, noisy_mono) = stacks_from(&noisy)?;
        let cpfa = mosaic_from_stack(&noisy_color, &PatternDescriptor::cpfa(opts.layout))?;
        let mpfa = mosaic_from_stack(&noisy_mono, &PatternDescriptor::mpfa(opts.layout))?;

        let mut profile_color = NoiseProfile::new();
        let mut profile_mono = NoiseProfile::new();
        let mut sigma_named = BTreeMap::new();
        for (&a, s) in &sigmas {
            for (c, v) in Color::RGB.iter().zip(s) {
                let ch = Channel::new(a, *c);
                profile_color = profile_color.with(ch, v * gain)?;
                sigma_named.insert(ch.to_string(), v * gain);
            }
            profile_mono = profile_mono.with(Channel::mono(a), s[1] * gain)?;
        }

        let dir = out_dir.join(&scene);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let rel = |name: String| PathBuf::from(&scene).join(name);
        let l = level.name();
        store_stack(&gt_color, dir.join(format!("gt_{l}.pfi")))?;
        store_stack(&gt_mono, dir.join(format!("gt_{l}_mono.pfi")))?;
        store_mosaic(&cpfa, dir.join(format!("{l}_cpfa.pfi")))?;
        store_mosaic(&mpfa, dir.join(format!("{l}_mpfa.pfi")))?;
        for (name, profile) in [(format!("{l}_noise.json"), &profile_color), (format!("{l}_noise_mono.json"), &profile_mono)] {
            let path = dir.join(name);
            let json = serde_json::to_string_pretty(profile).expect("profile serializes");
            std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        }
        for (man, gt_file, noisy_file) in [
            (&mut man_cpfa, format!("gt_{l}.pfi"), format!("{l}_cpfa.pfi")),
            (&mut man_mpfa, format!("gt_{l}_mono.pfi"), format!("{l}_mpfa.pfi")),
        ] {
            for (file, role) in [(gt_file, Role::Gt), (noisy_file, Role::noisy(level))] {
                upsert(
                    man,
                    ManifestEntry {
                        file: rel(file),
                        scene: scene.clone(),
                        angle: None,
                        color: None,
                        role,
                    },
                );
            }
        }
        summaries.push(SceneSummary {
            scene,
            level,
            gain,
            frames,
            median_frame: medians.iter().map(|(a, (i, _))| (a.degrees(), *i)).collect(),
            sigma: sigma_named,
        });
    }
    man_mpfa.save(manifest_path(PatternKind::Mpfa))?;
    man_cpfa.save(manifest_path(PatternKind::Cpfa))?;
    let path = out_dir.join(format!("summary_{}.json", level.name()));
    let json = serde_json::to_string_pretty(&summaries).expect("summary serializes");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(summaries)
}
