//! Pseudo four-channel denoising (PFCD).
//!
//! Four sub-sampled channels of a mosaic are decorrelated with a global PCA,
//! each principal component is denoised with BM3D at its propagated noise
//! level, and the result is transformed back. MPFA mosaics contribute their
//! four angle quads; CPFA mosaics are handled per polarizer angle on the
//! (R, G1, G2, B) phases of that angle's Bayer image.

mod bm3d;
mod pca;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use bm3d::{bm3d_basic_estimate, bm3d_denoise, Bm3dParams};
pub use pca::{compute_pca_transform, PcaTransform};

use crate::error::{ensure, Error, Result};
use crate::imagecore::{Channel, Color, MosaicImage, PatternKind, Plane, SidecarChannel};
use crate::mosaic;
use crate::scalar::Scalar;

/// Noise standard deviation per channel label, in normalized units.
///
/// Lookups fall back from the exact `(angle, color)` label to the color
/// alone, then to an unlabelled `mono` entry, so `NoiseProfile::mono(σ)`
/// applies one level to every channel.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NoiseProfile {
    sigma: BTreeMap<Channel, f64>,
}

impl NoiseProfile {
    pub fn new() -> Self {
        Self::default()
    }

    /// One level for every channel.
    pub fn mono(sigma: f64) -> Self {
        NoiseProfile::new()
            .with(Channel::color_only(Color::Mono), sigma)
            .expect("caller passes a valid sigma")
    }

    /// Per-color levels shared by all angles.
    pub fn rgb(r: f64, g: f64, b: f64) -> Self {
        NoiseProfile::new()
            .with(Channel::color_only(Color::R), r)
            .and_then(|p| p.with(Channel::color_only(Color::G), g))
            .and_then(|p| p.with(Channel::color_only(Color::B), b))
            .expect("caller passes valid sigmas")
    }

    pub fn with(mut self, channel: Channel, sigma: f64) -> Result<Self> {
        ensure!(
            sigma.is_finite() && sigma >= 0.0,
            "noise level for {channel} must be finite and non-negative, got {sigma}"
        );
        self.sigma.insert(channel, sigma);
        Ok(self)
    }

    pub fn sigma(&self, channel: Channel) -> Result<f64> {
        let candidates = [
            channel,
            Channel::color_only(channel.color),
            Channel::color_only(Color::Mono),
        ];
        candidates
            .iter()
            .find_map(|c| self.sigma.get(c).copied())
            .ok_or_else(|| Error::contract(format!("noise profile has no level for {channel}")))
    }

    pub fn entries(&self) -> impl Iterator<Item = (Channel, f64)> + '_ {
        self.sigma.iter().map(|(&c, &s)| (c, s))
    }

    pub fn is_zero(&self) -> bool {
        self.sigma.values().all(|&s| s == 0.0)
    }

    /// Every level multiplied by `k` (e.g. after a digital gain).
    pub fn scaled(&self, k: f64) -> Result<Self> {
        let mut out = NoiseProfile::new();
        for (c, s) in self.entries() {
            out = out.with(c, s * k)?;
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct ProfileEntry {
    #[serde(flatten)]
    channel: SidecarChannel,
    sigma: f64,
}

impl Serialize for NoiseProfile {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<ProfileEntry> = self
            .entries()
            .map(|(c, sigma)| ProfileEntry {
                channel: c.into(),
                sigma,
            })
            .collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for NoiseProfile {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let v = Vec::<ProfileEntry>::deserialize(d)?;
        let mut p = NoiseProfile::new();
        for e in v {
            let angle = match e.channel.angle {
                None => None,
                Some(deg) => Some(
                    crate::imagecore::Angle::from_degrees(deg)
                        .ok_or_else(|| D::Error::custom(format!("bad angle {deg}")))?,
                ),
            };
            p = p
                .with(
                    Channel {
                        angle,
                        color: e.channel.color,
                    },
                    e.sigma,
                )
                .map_err(D::Error::custom)?;
        }
        Ok(p)
    }
}

/// PFCD on four equally sized channels with per-channel noise levels.
pub fn pfcd_denoise<T: Scalar>(
    channels: [&Plane<T>; 4],
    sigmas: [f64; 4],
    params: &Bm3dParams,
) -> Result<[Plane<T>; 4]> {
    params.validate()?;
    pfcd_denoise_with(channels, sigmas, |p, s| bm3d_denoise(p, s, params))
}

/// PFCD with a caller-supplied per-component denoiser.
pub fn pfcd_denoise_with<T, F>(
    channels: [&Plane<T>; 4],
    sigmas: [f64; 4],
    denoiser: F,
) -> Result<[Plane<T>; 4]>
where
    T: Scalar,
    F: Fn(&Plane<T>, f64) -> Result<Plane<T>> + Sync,
{
    let pca = compute_pca_transform(channels)?;
    let comp_sigmas = pca.propagate_noise(sigmas)?;
    if comp_sigmas.iter().all(|&s| s == 0.0) {
        return Ok(channels.map(|p| p.clone()));
    }
    let components = pca.forward(channels)?;
    let denoised: Vec<Plane<T>> = components
        .par_iter()
        .zip(comp_sigmas.par_iter())
        .map(|(p, &s)| denoiser(p, s))
        .collect::<Result<_>>()?;
    pca.inverse([&denoised[0], &denoised[1], &denoised[2], &denoised[3]])
}

/// Denoises an MPFA mosaic on its four angle quads.
pub fn denoise_mpfa<T: Scalar>(
    mosaic_in: &MosaicImage<T>,
    profile: &NoiseProfile,
    params: &Bm3dParams,
) -> Result<MosaicImage<T>> {
    mosaic_in.require(PatternKind::Mpfa)?;
    let quads = mosaic::split_mpfa_quads(mosaic_in)?;
    let angles: Vec<_> = quads.keys().copied().collect();
    let sigmas = angles
        .iter()
        .map(|&a| profile.sigma(Channel::mono(a)))
        .collect::<Result<Vec<f64>>>()?;
    let planes: Vec<&Plane<T>> = angles.iter().map(|a| &quads[a]).collect();
    let out = pfcd_denoise(
        [planes[0], planes[1], planes[2], planes[3]],
        [sigmas[0], sigmas[1], sigmas[2], sigmas[3]],
        params,
    )?;
    let merged: BTreeMap<_, _> = angles.into_iter().zip(out).collect();
    mosaic::merge_quads_to_mpfa(&merged, mosaic_in.pattern())
}

/// Denoises a CPFA mosaic: PFCD on `(R, G1, G2, B)` of each angle's Bayer
/// image with levels `(σ_R, σ_G, σ_G, σ_B)`.
pub fn denoise_cpfa<T: Scalar>(
    mosaic_in: &MosaicImage<T>,
    profile: &NoiseProfile,
    params: &Bm3dParams,
) -> Result<MosaicImage<T>> {
    mosaic_in.require(PatternKind::Cpfa)?;
    let layout = mosaic_in
        .pattern()
        .mpfa_layout()
        .ok_or_else(|| Error::contract("CPFA pattern without angle layout"))?;
    let bayers = mosaic::split_cpfa_to_bayer(mosaic_in)?;
    let mut out = BTreeMap::new();
    for (&angle, bayer) in &bayers {
        let s = |c| profile.sigma(Channel::new(angle, c));
        let sigmas = [s(Color::R)?, s(Color::G)?, s(Color::G)?, s(Color::B)?];
        let [r, g1, g2, b] = mosaic::split_bayer_channels(bayer)?;
        let den = pfcd_denoise([&r, &g1, &g2, &b], sigmas, params)?;
        out.insert(angle, mosaic::merge_bayer_channels(&den)?);
    }
    mosaic::merge_bayer_to_cpfa(&out, layout)
}

/// Dispatches on the mosaic's pattern.
pub fn denoise_mosaic<T: Scalar>(
    mosaic_in: &MosaicImage<T>,
    profile: &NoiseProfile,
    params: &Bm3dParams,
) -> Result<MosaicImage<T>> {
    match mosaic_in.kind() {
        PatternKind::Mpfa => denoise_mpfa(mosaic_in, profile, params),
        PatternKind::Cpfa => denoise_cpfa(mosaic_in, profile, params),
        PatternKind::Bayer => {
            let [r, g1, g2, b] = mosaic::split_bayer_channels(mosaic_in)?;
            let s = |c| profile.sigma(Channel::color_only(c));
            let sigmas = [s(Color::R)?, s(Color::G)?, s(Color::G)?, s(Color::B)?];
            let den = pfcd_denoise([&r, &g1, &g2, &b], sigmas, params)?;
            mosaic::merge_bayer_channels(&den)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::add_awgn;
    use crate::imagecore::{Angle, MpfaLayout, PatternDescriptor, PolarizationStack};
    use crate::mosaic::mosaic_from_stack;

    fn smooth_stack(w: usize, h: usize) -> PolarizationStack<f64> {
        let s0 = |x: usize, y: usize| {
            0.5 + 0.25 * ((x as f64) * 0.07).sin() * ((y as f64) * 0.05).cos()
                + if x > w / 2 && y > h / 3 { 0.15 } else { 0.0 }
        };
        PolarizationStack::mono(Angle::ALL.map(|a| {
            let t = (a.degrees() as f64).to_radians();
            Plane::from_fn(w, h, |x, y| {
                let dop = 0.3 + 0.1 * ((x + y) as f64 * 0.02).sin();
                let psi = 0.4 + (x as f64) * 0.004;
                0.5 * s0(x, y) * (1.0 + dop * (2.0 * (t - psi)).cos())
            })
        }))
        .unwrap()
    }

    fn rmse(a: &Plane<f64>, b: &Plane<f64>) -> f64 {
        let n = a.len() as f64;
        (a.samples().iter().zip(b.samples()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n).sqrt()
    }

    #[test]
    fn profile_lookup_and_validation() {
        let p = NoiseProfile::rgb(0.1, 0.2, 0.3);
        assert_eq!(p.sigma(Channel::new(Angle::A45, Color::G)).unwrap(), 0.2);
        assert!(p.sigma(Channel::mono(Angle::A0)).is_err());
        let m = NoiseProfile::mono(0.05);
        assert_eq!(m.sigma(Channel::new(Angle::A90, Color::B)).unwrap(), 0.05);
        let q = m.clone().with(Channel::mono(Angle::A0), 0.07).unwrap();
        assert_eq!(q.sigma(Channel::mono(Angle::A0)).unwrap(), 0.07);
        assert_eq!(q.sigma(Channel::mono(Angle::A45)).unwrap(), 0.05);
        assert!(NoiseProfile::new().with(Channel::mono(Angle::A0), -1.0).is_err());
        let json = serde_json::to_string(&q).unwrap();
        let back: NoiseProfile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn zero_sigma_pfcd_is_exact_identity() {
        let s = smooth_stack(16, 16);
        let [a, b, c, d] = s.angles(Color::Mono).unwrap();
        let out = pfcd_denoise([a, b, c, d], [0.0; 4], &Bm3dParams::default()).unwrap();
        assert_eq!(&out[0], a);
        assert_eq!(&out[3], d);
    }

    #[test]
    fn identity_denoiser_round_trips() {
        let s = smooth_stack(20, 12);
        let [a, b, c, d] = s.angles(Color::Mono).unwrap();
        let out = pfcd_denoise_with([a, b, c, d], [0.1; 4], |p, _| Ok(p.clone())).unwrap();
        for (o, i) in out.iter().zip([a, b, c, d]) {
            for (x, y) in o.samples().iter().zip(i.samples()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identical_noisy_channels_stay_identical() {
        let x = add_awgn(&smooth_stack(48, 48).angles(Color::Mono).unwrap()[0].clone(), 0.03, 9);
        let out = pfcd_denoise([&x, &x, &x, &x], [0.03; 4], &Bm3dParams::default()).unwrap();
        for k in 1..4 {
            for (a, b) in out[0].samples().iter().zip(out[k].samples()) {
                assert!((a - b).abs() <= 1e-3);
            }
        }
    }

    #[test]
    fn mpfa_zero_profile_and_constant() {
        let pat = PatternDescriptor::mpfa(MpfaLayout::default());
        let m = mosaic_from_stack(&smooth_stack(16, 16), &pat).unwrap();
        assert_eq!(denoise_mpfa(&m, &NoiseProfile::mono(0.0), &Bm3dParams::default()).unwrap(), m);
        let c = MosaicImage::new(Plane::filled(24, 24, 0.42), pat).unwrap();
        assert_eq!(denoise_mpfa(&c, &NoiseProfile::mono(0.05), &Bm3dParams::default()).unwrap(), c);
    }

    #[test]
    fn mpfa_denoising_reduces_error() {
        let pat = PatternDescriptor::mpfa(MpfaLayout::default());
        let clean = mosaic_from_stack(&smooth_stack(128, 96), &pat).unwrap();
        let sigma = 7.31 / 255.0;
        let noisy = MosaicImage::new(add_awgn(clean.plane(), sigma, 21), pat).unwrap();
        let out = denoise_mpfa(&noisy, &NoiseProfile::mono(sigma), &Bm3dParams::default()).unwrap();
        let before = rmse(clean.plane(), noisy.plane());
        let after = rmse(clean.plane(), out.plane());
        assert!(after <= 0.6 * before, "rmse {before} -> {after}");
    }

    #[test]
    fn mpfa_commutes_with_angle_relabeling() {
        // Relabel angles by swapping layout positions and per-angle levels.
        let l1 = MpfaLayout::default();
        let l2 = MpfaLayout::from_degrees(&[45, 90, 0, 135]).unwrap();
        let plane = add_awgn(&Plane::from_fn(32, 32, |x, y| 0.3 + 0.01 * ((x * y) % 17) as f64), 0.03, 4);
        let m1 = MosaicImage::new(plane.clone(), PatternDescriptor::mpfa(l1)).unwrap();
        let m2 = MosaicImage::new(plane, PatternDescriptor::mpfa(l2)).unwrap();
        // l1 → l2 maps 90→45, 45→90, 135→0, 0→135.
        let p1 = NoiseProfile::new()
            .with(Channel::mono(Angle::A90), 0.03).unwrap()
            .with(Channel::mono(Angle::A45), 0.02).unwrap()
            .with(Channel::mono(Angle::A135), 0.04).unwrap()
            .with(Channel::mono(Angle::A0), 0.01).unwrap();
        let p2 = NoiseProfile::new()
            .with(Channel::mono(Angle::A45), 0.03).unwrap()
            .with(Channel::mono(Angle::A90), 0.02).unwrap()
            .with(Channel::mono(Angle::A0), 0.04).unwrap()
            .with(Channel::mono(Angle::A135), 0.01).unwrap();
        let o1 = denoise_mpfa(&m1, &p1, &Bm3dParams::default()).unwrap();
        let o2 = denoise_mpfa(&m2, &p2, &Bm3dParams::default()).unwrap();
        for (a, b) in o1.plane().samples().iter().zip(o2.plane().samples()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn cpfa_zero_profile_and_constant() {
        let pat = PatternDescriptor::cpfa(MpfaLayout::default());
        let plane = Plane::from_fn(16, 16, |x, y| ((x * 3 + y * 5) % 11) as f64 / 11.0);
        let m = MosaicImage::new(plane, pat.clone()).unwrap();
        assert_eq!(denoise_cpfa(&m, &NoiseProfile::rgb(0.0, 0.0, 0.0), &Bm3dParams::default()).unwrap(), m);
        let c = MosaicImage::new(Plane::filled(32, 32, 0.6), pat).unwrap();
        assert_eq!(
            denoise_cpfa(&c, &NoiseProfile::rgb(0.03, 0.02, 0.06), &Bm3dParams::default()).unwrap(),
            c
        );
        assert!(denoise_mpfa(&c, &NoiseProfile::mono(0.1), &Bm3dParams::default()).is_err());
    }
}
