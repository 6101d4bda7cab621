//! Ground truth from capture bursts: median-based outlier exclusion,
//! averaging, noise estimation and digital gain.

use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::imagecore::{Angle, Plane, RgbImage};
use crate::polarimetry::percentile;
use crate::scalar::Scalar;

/// Random access to the frames of one burst. Frames are fetched on demand so
/// bursts far larger than memory can be processed.
pub trait FrameSource<T: Scalar>: Sync {
    fn frame_count(&self) -> usize;
    fn frame(&self, index: usize) -> Result<RgbImage<T>>;
}

/// In-memory burst of RGB frames taken at one polarizer angle.
#[derive(Clone, Debug)]
pub struct CaptureBurst<T = f64> {
    angle: Angle,
    frames: Vec<RgbImage<T>>,
}

impl<T: Scalar> CaptureBurst<T> {
    pub fn new(angle: Angle, frames: Vec<RgbImage<T>>) -> Result<Self> {
        ensure!(frames.len() >= 3, "a burst needs at least 3 frames, got {}", frames.len());
        let d = frames[0].dims();
        ensure!(
            frames.iter().all(|f| f.dims() == d),
            "burst frames differ in size"
        );
        Ok(CaptureBurst { angle, frames })
    }

    pub fn angle(&self) -> Angle {
        self.angle
    }

    pub fn frames(&self) -> &[RgbImage<T>] {
        &self.frames
    }
}

impl<T: Scalar> FrameSource<T> for CaptureBurst<T> {
    fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn frame(&self, index: usize) -> Result<RgbImage<T>> {
        Ok(self.frames[index].clone())
    }
}

#[derive(Clone, Debug)]
pub struct GroundTruth<T = f64> {
    pub image: RgbImage<T>,
    /// Lowest-index frame whose mean equals the (lower) median mean.
    pub median_frame: usize,
    /// Frames averaged into `image`, ascending.
    pub retained: Vec<usize>,
    /// Frames dropped as outliers, ascending.
    pub excluded: Vec<usize>,
    /// Per-frame mean over all pixels and channels.
    pub frame_means: Vec<f64>,
}

/// Lower median of `means` and the lowest index attaining it.
fn median_frame(means: &[f64]) -> (f64, usize) {
    let mut sorted = means.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = sorted[(sorted.len() - 1) / 2];
    let idx = means.iter().position(|&m| m == med).unwrap_or(0);
    (med, idx)
}

/// Sums `[f64]` buffers in a fixed pairwise tree over the index order.
struct PairwiseSum {
    stack: Vec<(u32, Vec<f64>)>,
}

impl PairwiseSum {
    fn new() -> Self {
        PairwiseSum { stack: Vec::new() }
    }

    fn push(&mut self, mut buf: Vec<f64>) {
        let mut level = 0;
        while let Some((l, _)) = self.stack.last() {
            if *l != level {
                break;
            }
            let (_, left) = self.stack.pop().unwrap();
            for (b, a) in buf.iter_mut().zip(&left) {
                *b += *a;
            }
            level += 1;
        }
        self.stack.push((level, buf));
    }

    fn finish(mut self) -> Option<Vec<f64>> {
        let mut acc = self.stack.pop()?.1;
        while let Some((_, left)) = self.stack.pop() {
            for (b, a) in acc.iter_mut().zip(&left) {
                *b += *a;
            }
        }
        Some(acc)
    }
}

fn flatten<T: Scalar>(img: &RgbImage<T>) -> Vec<f64> {
    img.planes()
        .iter()
        .flat_map(|p| p.samples().iter().map(|v| v.as_f64()))
        .collect()
}

/// Averages the burst after dropping the `exclude_count` frames whose mean
/// intensity is farthest from the median mean.
pub fn build_ground_truth<T: Scalar, S: FrameSource<T>>(source: &S, exclude_count: usize) -> Result<GroundTruth<T>> {
    let n = source.frame_count();
    ensure!(n >= 3, "a burst needs at least 3 frames, got {n}");
    ensure!(
        exclude_count < n,
        "cannot exclude {exclude_count} of {n} frames"
    );
    let stats: Vec<((usize, usize), f64)> = (0..n)
        .into_par_iter()
        .map(|k| source.frame(k).map(|f| (f.dims(), f.mean())))
        .collect::<Result<_>>()?;
    let dims = stats[0].0;
    ensure!(
        stats.iter().all(|s| s.0 == dims),
        "burst frames differ in size"
    );
    let means: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let (med, median_idx) = median_frame(&means);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        (means[a] - med)
            .abs()
            .total_cmp(&(means[b] - med).abs())
            .then(a.cmp(&b))
    });
    let mut retained = order[..n - exclude_count].to_vec();
    let mut excluded = order[n - exclude_count..].to_vec();
    retained.sort_unstable();
    excluded.sort_unstable();

    let mut sum = PairwiseSum::new();
    for &k in &retained {
        sum.push(flatten(&source.frame(k)?));
    }
    let total = sum.finish().expect("at least one retained frame");
    let count = retained.len() as f64;
    let (w, h) = dims;
    let np = w * h;
    let plane = |c: usize| Plane::from_vec(w, h, total[c * np..(c + 1) * np].iter().map(|v| T::lit(v / count)).collect());
    let image = RgbImage::new(plane(0), plane(1), plane(2))?;
    Ok(GroundTruth {
        image,
        median_frame: median_idx,
        retained,
        excluded,
        frame_means: means,
    })
}

/// Per-channel standard deviation of `frame − gt`, pooled over the listed
/// frames and all pixels.
pub fn estimate_noise_levels<T: Scalar, S: FrameSource<T>>(
    source: &S,
    gt: &RgbImage<T>,
    frames: &[usize],
) -> Result<[f64; 3]> {
    ensure!(!frames.is_empty(), "no frames to estimate noise from");
    let parts: Vec<[(f64, f64); 3]> = frames
        .par_iter()
        .map(|&k| {
            ensure!(k < source.frame_count(), "frame index {k} out of range");
            let f = source.frame(k)?;
            ensure!(f.dims() == gt.dims(), "frame {k} does not match the ground truth size");
            let mut acc = [(0.0, 0.0); 3];
            for (c, slot) in acc.iter_mut().enumerate() {
                for (a, b) in f.planes()[c].samples().iter().zip(gt.planes()[c].samples()) {
                    let d = a.as_f64() - b.as_f64();
                    slot.0 += d;
                    slot.1 += d * d;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let n = (frames.len() * gt.planes()[0].len()) as f64;
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let (s, ss) = parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p[c].0, acc.1 + p[c].1));
        *o = if n > 1.0 {
            ((ss - s * s / n) / (n - 1.0)).max(0.0).sqrt()
        } else {
            0.0
        };
    }
    Ok(out)
}

/// Gain that maps the `percentile`-th pooled sample to `full_scale`, so that
/// at least that share of samples stays at or below full scale afterwards.
pub fn compute_digital_gain<T: Scalar>(images: &[&Plane<T>], percentile_pct: f64, full_scale: f64) -> Result<f64> {
    ensure!(
        percentile_pct > 0.0 && percentile_pct < 100.0,
        "percentile must lie in (0, 100), got {percentile_pct}"
    );
    ensure!(full_scale > 0.0, "full scale must be positive");
    let mut all: Vec<f64> = images
        .iter()
        .flat_map(|p| p.samples().iter().map(|v| v.as_f64()))
        .collect();
    ensure!(!all.is_empty(), "no samples to compute a gain from");
    let p = percentile(&mut all, percentile_pct);
    if p <= 0.0 {
        return Err(Error::Degenerate(format!(
            "the {percentile_pct}th percentile is {p}; no gain can be derived"
        )));
    }
    let mut gain = full_scale / p;
    while p * gain > full_scale {
        gain = gain.next_down();
    }
    Ok(gain)
}

/// The three capture conditions of the reference dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLevel {
    Low,
    Medium,
    High,
}

impl NoiseLevel {
    pub const ALL: [NoiseLevel; 3] = [NoiseLevel::Low, NoiseLevel::Medium, NoiseLevel::High];

    pub fn name(self) -> &'static str {
        match self {
            NoiseLevel::Low => "low",
            NoiseLevel::Medium => "medium",
            NoiseLevel::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<NoiseLevel> {
        NoiseLevel::ALL.into_iter().find(|l| l.name().eq_ignore_ascii_case(s))
    }

    pub fn condition(self) -> NoiseCondition {
        match self {
            NoiseLevel::Low => NoiseCondition {
                level: self,
                analog_gain_db: 0.0,
                digital_gain: 2.14,
                shutter_s: 1.0 / 30.0,
                sigma_8bit: [2.12, 1.75, 3.27],
            },
            NoiseLevel::Medium => NoiseCondition {
                level: self,
                analog_gain_db: 12.0,
                digital_gain: 1.90,
                shutter_s: 1.0 / 120.0,
                sigma_8bit: [5.16, 4.29, 9.08],
            },
            NoiseLevel::High => NoiseCondition {
                level: self,
                analog_gain_db: 12.0,
                digital_gain: 3.67,
                shutter_s: 1.0 / 250.0,
                sigma_8bit: [8.62, 7.31, 15.79],
            },
        }
    }
}

impl std::fmt::Display for NoiseLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseCondition {
    pub level: NoiseLevel,
    pub analog_gain_db: f64,
    pub digital_gain: f64,
    pub shutter_s: f64,
    /// Average (R, G, B) noise standard deviation on the 8-bit scale.
    pub sigma_8bit: [f64; 3],
}

impl NoiseCondition {
    /// (R, G, B) standard deviations on the normalized scale.
    pub fn sigma(&self) -> [f64; 3] {
        self.sigma_8bit.map(|s| s / 255.0)
    }

    /// Profile for monochrome sensors, using the green level for all angles.
    pub fn mono_profile(&self) -> crate::denoise::NoiseProfile {
        crate::denoise::NoiseProfile::mono(self.sigma()[1])
    }

    pub fn rgb_profile(&self) -> crate::denoise::NoiseProfile {
        let [r, g, b] = self.sigma();
        crate::denoise::NoiseProfile::rgb(r, g, b)
    }
}
