//! Interpolation of mosaics back to full resolution.
//!
//! MPFA data goes through an edge-aware intensity guide followed by
//! per-angle residual interpolation (RI). Bayer data gets a directional
//! green plane and RI for red and blue. CPFA data chains the two. A plain
//! bilinear interpolator serves as a baseline.
//!
//! The guide is the four-angle average `(ΣI)/4`, half of the Stokes `S0`.
//! Guided filtering is invariant to guide scaling once ε is rescaled by the
//! square of the factor, so the convention only shifts the meaning of ε.

mod filters;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::imagecore::{
    Angle, Channel, Color, MosaicImage, MpfaLayout, PatternKind, Plane, PolarizationStack, RgbImage,
};
use crate::mosaic::{rearrange_rgb_to_mpfa, split_cpfa_to_bayer};
use crate::scalar::Scalar;

use filters::{blend_directional, convolve_separable, guided, lattice_interpolate, Beyond};

/// Regularizer of the directional blend weights.
pub const DIRECTION_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidedFilterParams {
    pub radius: usize,
    /// In squared normalized intensity.
    pub epsilon: f64,
}

impl GuidedFilterParams {
    pub const POLARIZATION: GuidedFilterParams = GuidedFilterParams {
        radius: 2,
        epsilon: 1e-6,
    };
    pub const BAYER: GuidedFilterParams = GuidedFilterParams {
        radius: 2,
        epsilon: 1e-5,
    };

    pub fn validate(&self) -> Result<()> {
        ensure!(self.radius >= 1, "guided filter radius must be at least 1");
        ensure!(
            self.epsilon > 0.0 && self.epsilon.is_finite(),
            "guided filter epsilon must be positive, got {}",
            self.epsilon
        );
        Ok(())
    }
}

impl Default for GuidedFilterParams {
    fn default() -> Self {
        GuidedFilterParams::POLARIZATION
    }
}

/// Settings for every demosaicker in this module.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemosaicParams {
    /// Used for the per-angle RI.
    pub polarization: GuidedFilterParams,
    /// Used for red and blue in Bayer RI.
    pub bayer: GuidedFilterParams,
    /// IGRI passes. Passes after the first rebuild the guide from the
    /// average of the previous pass's four angle planes.
    pub iterations: usize,
}

impl Default for DemosaicParams {
    fn default() -> Self {
        DemosaicParams {
            polarization: GuidedFilterParams::POLARIZATION,
            bayer: GuidedFilterParams::BAYER,
            iterations: 1,
        }
    }
}

impl DemosaicParams {
    pub fn validate(&self) -> Result<()> {
        self.polarization.validate()?;
        self.bayer.validate()?;
        ensure!(self.iterations >= 1, "at least one IGRI pass is required");
        Ok(())
    }
}

/// Samples of one channel on a rectangular lattice, zeros elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseChannel<T = f64> {
    plane: Plane<T>,
    mask: Plane<T>,
    phase: (usize, usize),
    period: (usize, usize),
}

impl<T: Scalar> SparseChannel<T> {
    /// Keeps the samples of `values` at `phase + period·ℤ²`.
    pub fn from_lattice(values: &Plane<T>, phase: (usize, usize), period: (usize, usize)) -> Result<Self> {
        let (w, h) = values.dims();
        ensure!(period.0 >= 1 && period.1 >= 1, "lattice period must be positive");
        ensure!(
            phase.0 < period.0 && phase.1 < period.1,
            "lattice phase {:?} outside period {:?}",
            phase,
            period
        );
        ensure!(
            phase.0 < w && phase.1 < h,
            "{}x{} plane holds no sample of phase {:?}",
            w,
            h,
            phase
        );
        let on = |x: usize, y: usize| x % period.0 == phase.0 && y % period.1 == phase.1;
        let mask = Plane::from_fn(w, h, |x, y| if on(x, y) { T::one() } else { T::zero() });
        let plane = Plane::from_fn(w, h, |x, y| if on(x, y) { values.get(x, y) } else { T::zero() });
        Ok(SparseChannel {
            plane,
            mask,
            phase,
            period,
        })
    }

    /// The samples of `channel`, which must occur once per pattern tile.
    pub fn from_mosaic(mosaic: &MosaicImage<T>, channel: Channel) -> Result<Self> {
        let pattern = mosaic.pattern();
        let phases = pattern.phases_of(channel);
        ensure!(
            phases.len() == 1,
            "channel {} occurs {} times per {} tile, expected once",
            channel,
            phases.len(),
            pattern.kind().name()
        );
        SparseChannel::from_lattice(
            mosaic.plane(),
            phases[0],
            (pattern.tile_width(), pattern.tile_height()),
        )
    }

    pub fn plane(&self) -> &Plane<T> {
        &self.plane
    }

    pub fn mask(&self) -> &Plane<T> {
        &self.mask
    }

    pub fn phase(&self) -> (usize, usize) {
        self.phase
    }

    pub fn period(&self) -> (usize, usize) {
        self.period
    }

    pub fn dims(&self) -> (usize, usize) {
        self.plane.dims()
    }

    fn restore_observed(&self, out: &mut Plane<T>) {
        let (w, h) = self.dims();
        for y in (self.phase.1..h).step_by(self.period.1) {
            for x in (self.phase.0..w).step_by(self.period.0) {
                out.set(x, y, self.plane.get(x, y));
            }
        }
    }
}

/// Local-linear-model filter of `p` with `guide`; box windows replicate
/// the borders.
pub fn guided_filter<T: Scalar>(p: &Plane<T>, guide: &Plane<T>, params: &GuidedFilterParams) -> Result<Plane<T>> {
    params.validate()?;
    ensure!(
        p.dims() == guide.dims(),
        "guided filter input {:?} and guide {:?} differ in size",
        p.dims(),
        guide.dims()
    );
    Ok(guided(p, guide, None, params.radius, params.epsilon))
}

/// Full-resolution intensity guide from an MPFA mosaic.
///
/// The horizontal estimate applies `[1,2,2,2,1]/8` along rows and
/// `[1,2,1]/4` along columns, so every output sees each angle with weight
/// ¼; the vertical estimate is its transpose. The two are blended with
/// weights inversely proportional to their own gradient energy.
pub fn generate_intensity_guide<T: Scalar>(mosaic: &MosaicImage<T>) -> Result<Plane<T>> {
    mosaic.require(PatternKind::Mpfa)?;
    let plane = mosaic.plane();
    let v0 = plane.samples()[0];
    let shifted = plane.map(|v| v - v0);
    let long: Vec<T> = [1.0, 2.0, 2.0, 2.0, 1.0].iter().map(|&c| T::lit(c / 8.0)).collect();
    let short: Vec<T> = [1.0, 2.0, 1.0].iter().map(|&c| T::lit(c / 4.0)).collect();
    let (hor, ver) = rayon::join(
        || convolve_separable(&shifted, &long, &short),
        || convolve_separable(&shifted, &short, &long),
    );
    Ok(blend_directional(&hor, &ver, DIRECTION_EPS).map(|v| v + v0))
}

/// Residual interpolation of one sparse channel against a full guide.
pub fn residual_interpolate_channel<T: Scalar>(
    sparse: &SparseChannel<T>,
    guide: &Plane<T>,
    params: &GuidedFilterParams,
) -> Result<Plane<T>> {
    params.validate()?;
    ensure!(
        sparse.dims() == guide.dims(),
        "sparse channel {:?} and guide {:?} differ in size",
        sparse.dims(),
        guide.dims()
    );
    ensure!(
        sparse.mask.samples().iter().any(|&m| m > T::zero()),
        "sparse channel has no observed samples"
    );
    let tentative = guided(&sparse.plane, guide, Some(&sparse.mask), params.radius, params.epsilon);
    let residual = Plane::from_fn(guide.width(), guide.height(), |x, y| {
        if sparse.mask.get(x, y) > T::zero() {
            sparse.plane.get(x, y) - tentative.get(x, y)
        } else {
            T::zero()
        }
    });
    let spread = lattice_interpolate(&residual, sparse.phase, sparse.period, Beyond::Linear);
    let mut out = tentative.zip_map(&spread, |t, r| t + r)?;
    sparse.restore_observed(&mut out);
    Ok(out)
}

fn mpfa_layout<T: Scalar>(mosaic: &MosaicImage<T>) -> Result<MpfaLayout> {
    mosaic
        .pattern()
        .mpfa_layout()
        .ok_or_else(|| Error::contract("pattern carries no angle layout"))
}

/// Four full-resolution angle planes from an MPFA mosaic.
pub fn demosaick_mpfa_igri2<T: Scalar>(
    mosaic: &MosaicImage<T>,
    params: &DemosaicParams,
) -> Result<PolarizationStack<T>> {
    params.validate()?;
    let planes = mpfa_planes(mosaic, params)?;
    PolarizationStack::mono(planes)
}

fn mpfa_planes<T: Scalar>(mosaic: &MosaicImage<T>, params: &DemosaicParams) -> Result<[Plane<T>; 4]> {
    let mut guide = generate_intensity_guide(mosaic)?;
    let sparse: Vec<SparseChannel<T>> = Angle::ALL
        .iter()
        .map(|&a| SparseChannel::from_mosaic(mosaic, Channel::mono(a)))
        .collect::<Result<_>>()?;
    let mut planes = Vec::new();
    for pass in 0..params.iterations {
        if pass > 0 {
            guide = average(&planes);
        }
        planes = sparse
            .par_iter()
            .map(|s| residual_interpolate_channel(s, &guide, &params.polarization))
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(planes.try_into().expect("four angles"))
}

fn average<T: Scalar>(planes: &[Plane<T>]) -> Plane<T> {
    let (w, h) = planes[0].dims();
    let n = T::from_count(planes.len());
    Plane::from_fn(w, h, |x, y| {
        let base = planes[0].get(x, y);
        base + planes[1..].iter().map(|p| p.get(x, y) - base).fold(T::zero(), |a, b| a + b) / n
    })
}

/// Green by directional Hamilton–Adams estimates blended like the MPFA
/// guide; red and blue by RI against the green plane.
pub fn demosaick_bayer_ri<T: Scalar>(bayer: &MosaicImage<T>, params: &DemosaicParams) -> Result<RgbImage<T>> {
    params.validate()?;
    bayer.require(PatternKind::Bayer)?;
    let green = bayer_green(bayer);
    let [r, b] = [Color::R, Color::B].map(|c| SparseChannel::from_mosaic(bayer, Channel::color_only(c)));
    let (r, b) = (r?, b?);
    let (red, blue) = rayon::join(
        || residual_interpolate_channel(&r, &green, &params.bayer),
        || residual_interpolate_channel(&b, &green, &params.bayer),
    );
    RgbImage::new(red?, green, blue?)
}

fn bayer_green<T: Scalar>(bayer: &MosaicImage<T>) -> Plane<T> {
    let m = bayer.plane();
    let (w, h) = m.dims();
    let v0 = m.samples()[0];
    let s = m.map(|v| v - v0);
    let is_green = |x: usize, y: usize| bayer.pattern().channel_at(x, y).color == Color::G;
    let at = |x: isize, y: isize| s.get(filters::reflect_index(x, w), filters::reflect_index(y, h));
    let (half, quarter) = (T::lit(0.5), T::lit(0.25));
    let estimate = |horizontal: bool| {
        Plane::from_fn(w, h, |x, y| {
            if is_green(x, y) {
                return s.get(x, y);
            }
            let (xi, yi) = (x as isize, y as isize);
            let (d1, d2) = if horizontal { (1, 0) } else { (0, 1) };
            let g = (at(xi - d1, yi - d2) + at(xi + d1, yi + d2)) * half;
            let c = at(xi, yi) + at(xi, yi) - at(xi - 2 * d1, yi - 2 * d2) - at(xi + 2 * d1, yi + 2 * d2);
            g + c * quarter
        })
    };
    let (hor, ver) = rayon::join(|| estimate(true), || estimate(false));
    let mut g = blend_directional(&hor, &ver, DIRECTION_EPS).map(|v| v + v0);
    for y in 0..h {
        for x in 0..w {
            if is_green(x, y) {
                g.set(x, y, m.get(x, y));
            }
        }
    }
    g
}

/// Twelve full-resolution planes from a CPFA mosaic: Bayer RI per angle,
/// regrouping into one MPFA mosaic per color, then IGRI per color.
///
/// Each per-angle RGB value is placed back at the sensor position of its
/// angle, so the per-color MPFA mosaics and the output keep the CPFA size.
pub fn demosaick_cpfa<T: Scalar>(mosaic: &MosaicImage<T>, params: &DemosaicParams) -> Result<PolarizationStack<T>> {
    params.validate()?;
    let layout = mpfa_layout(mosaic)?;
    let bayers = split_cpfa_to_bayer(mosaic)?;
    let rgb = bayers
        .into_par_iter()
        .map(|(a, b)| Ok((a, demosaick_bayer_ri(&b, params)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let per_color = rearrange_rgb_to_mpfa(&rgb, layout)?;
    let stacks = per_color
        .into_par_iter()
        .map(|(c, m)| Ok((c, mpfa_planes(&m, params)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut planes = BTreeMap::new();
    for (c, four) in stacks {
        for (a, p) in Angle::ALL.iter().zip(four) {
            planes.insert(Channel::new(*a, c), p);
        }
    }
    PolarizationStack::new(planes)
}

/// Each channel bilinearly interpolated on its own from an MPFA or CPFA
/// mosaic. A channel seen at several offsets per tile (CPFA green) gets the
/// mean of the per-offset interpolations.
pub fn demosaick_bilinear<T: Scalar>(mosaic: &MosaicImage<T>) -> Result<PolarizationStack<T>> {
    ensure!(
        mosaic.kind() != PatternKind::Bayer,
        "bilinear baseline needs a polarization mosaic"
    );
    let pattern = mosaic.pattern();
    let period = (pattern.tile_width(), pattern.tile_height());
    let planes = pattern
        .channels()
        .into_par_iter()
        .map(|ch| {
            let phases = pattern.phases_of(ch);
            let base = mosaic.plane().get(phases[0].0, phases[0].1);
            // Offset from one sample so constants come back exactly.
            let shifted = mosaic.plane().map(|v| v - base);
            let parts: Vec<Plane<T>> = phases
                .iter()
                .map(|&ph| lattice_interpolate(&shifted, ph, period, Beyond::Replicate))
                .collect();
            let n = T::from_count(parts.len());
            let mut out = Plane::from_fn(mosaic.width(), mosaic.height(), |x, y| {
                parts.iter().fold(T::zero(), |a, p| a + p.get(x, y)) / n + base
            });
            for y in 0..mosaic.height() {
                for x in 0..mosaic.width() {
                    if pattern.channel_at(x, y) == ch {
                        out.set(x, y, mosaic.plane().get(x, y));
                    }
                }
            }
            Ok((ch, out))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    PolarizationStack::new(planes)
}

/// Dispatches on the mosaic kind: IGRI for MPFA, the color chain for CPFA.
pub fn demosaick<T: Scalar>(mosaic: &MosaicImage<T>, params: &DemosaicParams) -> Result<PolarizationStack<T>> {
    match mosaic.kind() {
        PatternKind::Mpfa => demosaick_mpfa_igri2(mosaic, params),
        PatternKind::Cpfa => demosaick_cpfa(mosaic, params),
        PatternKind::Bayer => Err(Error::contract(
            "a Bayer mosaic carries no polarization; use demosaick_bayer_ri",
        )),
    }
}

#[cfg(test)]
mod tests;
