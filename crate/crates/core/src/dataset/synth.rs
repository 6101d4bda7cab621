//! Synthetic polarization scenes and additive white Gaussian noise.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::denoise::NoiseProfile;
use crate::error::{ensure, Result};
use crate::imagecore::{Angle, Channel, Color, MosaicImage, Plane, PolarizationStack};
use crate::polarimetry::{angles_from_stokes, StokesImage};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SceneKind {
    /// Spatially uniform polarization state.
    Constant { s0: f64, dop: f64, aop_deg: f64 },
    /// Smooth random background plus `shapes` polarized objects with sharp
    /// edges and fine texture.
    Random { shapes: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub seed: u64,
    /// Twelve-channel RGB scene instead of a monochrome one.
    #[serde(default)]
    pub color: bool,
    pub kind: SceneKind,
}

impl SceneSpec {
    pub fn random(width: usize, height: usize, seed: u64) -> Self {
        SceneSpec {
            width,
            height,
            seed,
            color: false,
            kind: SceneKind::Random { shapes: 14 },
        }
    }
}

/// Intensity stack for per-pixel `S0`, DoP and AoP (degrees) fields.
pub fn synthesize_from_fields<T: Scalar>(s0: &Plane<T>, dop: &Plane<T>, aop_deg: &Plane<T>) -> Result<PolarizationStack<T>> {
    ensure!(
        s0.dims() == dop.dims() && dop.dims() == aop_deg.dims(),
        "field planes differ in size"
    );
    ensure!(
        dop.samples().iter().all(|d| d.as_f64() >= 0.0 && d.as_f64() <= 1.0),
        "DoP field must lie in [0, 1]"
    );
    ensure!(
        s0.samples().iter().all(|v| v.as_f64() >= 0.0),
        "S0 field must be non-negative"
    );
    let lin = s0.zip_map(dop, |a, d| a * d)?;
    let two = |a: T| T::lit(2.0 * a.as_f64().to_radians());
    let s1 = lin.zip_map(aop_deg, |l, a| l * two(a).cos())?;
    let s2 = lin.zip_map(aop_deg, |l, a| l * two(a).sin())?;
    PolarizationStack::mono(angles_from_stokes(&StokesImage::new(s0.clone(), s1, s2)?))
}

pub fn synthesize_scene<T: Scalar>(spec: &SceneSpec) -> Result<PolarizationStack<T>> {
    let (w, h) = (spec.width, spec.height);
    ensure!(w > 0 && h > 0, "scene must have positive size");
    match spec.kind {
        SceneKind::Constant { s0, dop, aop_deg } => {
            ensure!((0.0..=1.0).contains(&dop), "DoP {dop} outside [0, 1]");
            ensure!(s0 >= 0.0, "S0 must be non-negative");
            let c = |v: f64| Plane::filled(w, h, T::lit(v));
            let mono = synthesize_from_fields(&c(s0), &c(dop), &c(aop_deg))?;
            if spec.color {
                Ok(replicate_colors(&mono, [1.0; 3]))
            } else {
                Ok(mono)
            }
        }
        SceneKind::Random { shapes } => Ok(random_scene(spec, shapes)),
    }
}

fn replicate_colors<T: Scalar>(mono: &PolarizationStack<T>, gains: [f64; 3]) -> PolarizationStack<T> {
    let mut planes = BTreeMap::new();
    for (k, color) in Color::RGB.into_iter().enumerate() {
        let g = T::lit(gains[k]);
        for (ch, p) in mono.iter() {
            planes.insert(Channel::new(ch.angle.expect("mono stack has angles"), color), p.map(|v| v * g));
        }
    }
    PolarizationStack::new(planes).expect("twelve planes of equal size")
}

/// Sum of random plane waves, separably evaluated and rescaled to [0, 1].
fn smooth_field(rng: &mut ChaCha8Rng, w: usize, h: usize, waves: usize, min_period: f64, max_period: f64) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    let mut cx = vec![0.0; w];
    let mut sx = vec![0.0; w];
    for _ in 0..waves {
        let period = min_period * (max_period / min_period).powf(rng.random::<f64>());
        let theta = rng.random::<f64>() * PI;
        let phase = rng.random::<f64>() * 2.0 * PI;
        let amp = rng.random::<f64>() * 0.5 + 0.5;
        let (fx, fy) = (2.0 * PI * theta.cos() / period, 2.0 * PI * theta.sin() / period);
        for x in 0..w {
            let a = fx * x as f64 + phase;
            cx[x] = a.cos();
            sx[x] = a.sin();
        }
        for y in 0..h {
            let (cy, sy) = ((fy * y as f64).cos(), (fy * y as f64).sin());
            let row = &mut out[y * w..(y + 1) * w];
            for x in 0..w {
                row[x] += amp * (cx[x] * cy - sx[x] * sy);
            }
        }
    }
    let (lo, hi) = out.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    out.iter_mut().for_each(|v| *v = (*v - lo) / span);
    out
}

enum Shape {
    Disc { cx: f64, cy: f64, r: f64 },
    Rect { cx: f64, cy: f64, hw: f64, hh: f64, cos: f64, sin: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Shape::Rect { cx, cy, hw, hh, cos, sin } => {
                let (dx, dy) = (x - cx, y - cy);
                (dx * cos + dy * sin).abs() <= hw && (-dx * sin + dy * cos).abs() <= hh
            }
        }
    }
}

struct Layer {
    shape: Shape,
    s0: f64,
    dop: f64,
    aop: f64,
    albedo: [f64; 3],
}

fn random_scene<T: Scalar>(spec: &SceneSpec, shapes: usize) -> PolarizationStack<T> {
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = w.min(h) as f64;
    let shade = smooth_field(&mut rng, w, h, 6, scale * 0.5, scale * 2.0);
    let texture = smooth_field(&mut rng, w, h, 8, 6.0, 24.0);
    let dop_bg = smooth_field(&mut rng, w, h, 4, scale * 0.4, scale * 1.5);
    let aop_bg = smooth_field(&mut rng, w, h, 4, scale * 0.6, scale * 2.0);
    let tint: Vec<Vec<f64>> = (0..3).map(|_| smooth_field(&mut rng, w, h, 3, scale, scale * 3.0)).collect();

    let layers: Vec<Layer> = (0..shapes)
        .map(|_| {
            let cx = rng.random::<f64>() * w as f64;
            let cy = rng.random::<f64>() * h as f64;
            let size = scale * (0.05 + 0.15 * rng.random::<f64>());
            let shape = if rng.random::<bool>() {
                Shape::Disc { cx, cy, r: size }
            } else {
                let t = rng.random::<f64>() * PI;
                Shape::Rect {
                    cx,
                    cy,
                    hw: size * (0.5 + rng.random::<f64>()),
                    hh: size * (0.5 + rng.random::<f64>()),
                    cos: t.cos(),
                    sin: t.sin(),
                }
            };
            Layer {
                shape,
                s0: 0.15 + 0.7 * rng.random::<f64>(),
                dop: 0.8 * rng.random::<f64>(),
                aop: 180.0 * rng.random::<f64>(),
                albedo: [0.0; 3].map(|_: f64| 0.35 + 0.65 * rng.random::<f64>()),
            }
        })
        .collect();

    // Stokes fields per color; objects are composited with 2x2 supersampled
    // coverage so their edges carry a little anti-aliasing.
    let ncol = if spec.color { 3 } else { 1 };
    let mut fields = vec![[vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]]; ncol];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let s0 = (0.25 + 0.45 * shade[i]) * (0.9 + 0.2 * texture[i]);
            let dop = 0.3 * dop_bg[i];
            let ang = (180.0 * aop_bg[i]).to_radians() * 2.0;
            let mut st = [s0, s0 * dop * ang.cos(), s0 * dop * ang.sin()];
            let mut alb = [0.6 + 0.4 * tint[0][i], 0.6 + 0.4 * tint[1][i], 0.6 + 0.4 * tint[2][i]];
            for l in &layers {
                let cover = [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)]
                    .iter()
                    .filter(|(ox, oy)| l.shape.contains(x as f64 + ox, y as f64 + oy))
                    .count() as f64
                    / 4.0;
                if cover == 0.0 {
                    continue;
                }
                let s = l.s0 * (0.92 + 0.16 * texture[i]);
                let a = (2.0 * l.aop).to_radians();
                let obj = [s, s * l.dop * a.cos(), s * l.dop * a.sin()];
                for k in 0..3 {
                    st[k] = (1.0 - cover) * st[k] + cover * obj[k];
                    alb[k] = (1.0 - cover) * alb[k] + cover * l.albedo[k];
                }
            }
            for (c, f) in fields.iter_mut().enumerate() {
                let g = if spec.color { alb[c] } else { 1.0 };
                for k in 0..3 {
                    f[k][i] = st[k] * g;
                }
            }
        }
    }

    let to_plane = |v: &[f64]| Plane::from_vec(w, h, v.iter().map(|&s| T::lit(s)).collect());
    let mut planes = BTreeMap::new();
    let colors: Vec<Color> = if spec.color { Color::RGB.to_vec() } else { vec![Color::Mono] };
    for (f, color) in fields.iter().zip(colors) {
        let stokes = StokesImage::new(to_plane(&f[0]), to_plane(&f[1]), to_plane(&f[2])).expect("equal sizes");
        for (angle, p) in Angle::ALL.into_iter().zip(angles_from_stokes(&stokes)) {
            planes.insert(Channel::new(angle, color), p);
        }
    }
    PolarizationStack::new(planes).expect("complete channel set")
}

/// Adds i.i.d. Gaussian noise with standard deviation `sigma`; `sigma = 0`
/// returns the input unchanged. Values are not clamped.
pub fn add_awgn<T: Scalar>(plane: &Plane<T>, sigma: f64, seed: u64) -> Plane<T> {
    if sigma == 0.0 {
        return plane.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = plane
        .samples()
        .iter()
        .map(|&v| {
            let n: f64 = rng.sample(StandardNormal);
            v + T::lit(sigma * n)
        })
        .collect();
    Plane::from_vec(plane.width(), plane.height(), samples)
}

/// Adds Gaussian noise to a mosaic with the standard deviation of each
/// pixel's channel taken from `profile`.
pub fn add_mosaic_noise<T: Scalar>(mosaic: &MosaicImage<T>, profile: &NoiseProfile, seed: u64) -> Result<MosaicImage<T>> {
    let pat = mosaic.pattern().clone();
    let (tw, th) = (pat.tile_width(), pat.tile_height());
    let mut sig = vec![0.0; tw * th];
    for dy in 0..th {
        for dx in 0..tw {
            let s = profile.sigma(pat.channel_at(dx, dy))?;
            ensure!(s >= 0.0 && s.is_finite(), "invalid noise level {s}");
            sig[dy * tw + dx] = s;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = mosaic.plane();
    let noisy = Plane::from_fn(p.width(), p.height(), |x, y| {
        let n: f64 = rng.sample(StandardNormal);
        p.get(x, y) + T::lit(sig[(y % th) * tw + x % tw] * n)
    });
    MosaicImage::new(noisy, pat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polarimetry::{compute_aop, compute_dop, stokes_from_angles};

    #[test]
    fn awgn_identity_determinism_variance() {
        let p = Plane::from_fn(1000, 1000, |x, y| ((x + y) % 7) as f64 * 0.1);
        assert_eq!(add_awgn(&p, 0.0, 1), p);
        let sigma = 0.05;
        let a = add_awgn(&p, sigma, 42);
        assert_eq!(a, add_awgn(&p, sigma, 42));
        assert_ne!(a, add_awgn(&p, sigma, 43));
        let n = p.len() as f64;
        let d: Vec<f64> = a.samples().iter().zip(p.samples()).map(|(x, y)| x - y).collect();
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.01);
    }

    #[test]
    fn constant_scene_examples() {
        let spec = SceneSpec {
            width: 4,
            height: 2,
            seed: 0,
            color: false,
            kind: SceneKind::Constant { s0: 0.8, dop: 0.5, aop_deg: 0.0 },
        };
        let s = synthesize_scene::<f64>(&spec).unwrap();
        let want = [0.6, 0.4, 0.2, 0.4];
        for (p, w) in s.angles(Color::Mono).unwrap().iter().zip(want) {
            assert!(p.samples().iter().all(|v| (v - w).abs() < 1e-15));
        }
        let unpol = SceneSpec {
            kind: SceneKind::Constant { s0: 0.7, dop: 0.0, aop_deg: 33.0 },
            ..spec.clone()
        };
        for p in synthesize_scene::<f64>(&unpol).unwrap().angles(Color::Mono).unwrap() {
            assert!(p.samples().iter().all(|&v| v == 0.35));
        }
        let bad = SceneSpec {
            kind: SceneKind::Constant { s0: 0.7, dop: 1.2, aop_deg: 0.0 },
            ..spec
        };
        assert!(synthesize_scene::<f64>(&bad).is_err());
    }

    #[test]
    fn fields_round_trip() {
        let s0 = Plane::from_fn(16, 8, |x, y| 0.2 + 0.03 * x as f64 + 0.01 * y as f64);
        let dop = Plane::from_fn(16, 8, |x, y| 0.05 + 0.05 * ((x + y) % 10) as f64);
        let aop = Plane::from_fn(16, 8, |x, y| (11.0 * x as f64 + 7.0 * y as f64) % 180.0);
        let stack = synthesize_from_fields(&s0, &dop, &aop).unwrap();
        let st = stokes_from_angles(stack.angles(Color::Mono).unwrap()).unwrap();
        let (d, a) = (compute_dop(&st), compute_aop(&st));
        for k in 0..s0.len() {
            assert!((st.s0().samples()[k] - s0.samples()[k]).abs() < 1e-12);
            assert!((d.samples()[k] - dop.samples()[k]).abs() < 1e-12);
            let e = (a.samples()[k] - aop.samples()[k]).abs();
            assert!(e.min(180.0 - e) < 1e-9);
        }
        assert!(synthesize_from_fields(&s0, &dop.map(|v| v + 1.0), &aop).is_err());
    }

    #[test]
    fn random_scene_is_deterministic_and_physical() {
        let spec = SceneSpec::random(64, 48, 9);
        let a = synthesize_scene::<f64>(&spec).unwrap();
        assert_eq!(a, synthesize_scene::<f64>(&spec).unwrap());
        assert_ne!(a, synthesize_scene::<f64>(&SceneSpec::random(64, 48, 10)).unwrap());
        let st = stokes_from_angles(a.angles(Color::Mono).unwrap()).unwrap();
        for k in 0..st.s0().len() {
            let lin = st.s1().samples()[k].hypot(st.s2().samples()[k]);
            assert!(lin <= st.s0().samples()[k] + 1e-12);
            assert!(st.s0().samples()[k] <= 1.0);
        }
        let color = synthesize_scene::<f32>(&SceneSpec { color: true, ..spec }).unwrap();
        assert_eq!(color.colors(), Color::RGB.to_vec());
    }

    #[test]
    fn mosaic_noise_per_channel() {
        let pat = crate::imagecore::PatternDescriptor::bayer();
        let m = MosaicImage::new(Plane::<f64>::zeros(200, 200), pat).unwrap();
        let prof = NoiseProfile::rgb(0.01, 0.0, 0.04);
        let n = add_mosaic_noise(&m, &prof, 5).unwrap();
        let p = n.plane();
        assert!((0..200).step_by(2).all(|y| (0..200).step_by(2).all(|x| p.get(x + 1, y) == 0.0)));
        let rms = |ox: usize, oy: usize| {
            let mut s = 0.0;
            for y in (oy..200).step_by(2) {
                for x in (ox..200).step_by(2) {
                    s += p.get(x, y).powi(2);
                }
            }
            (s / 10000.0).sqrt()
        };
        assert!((rms(0, 0) / 0.01 - 1.0).abs() < 0.05);
        assert!((rms(1, 1) / 0.04 - 1.0).abs() < 0.05);
    }
}
