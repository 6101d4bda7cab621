//! Pattern-aware rearrangements between mosaics and sub-sampled planes.
//!
//! Pure index arithmetic: no sample is ever interpolated or modified. A
//! sub-sampled plane for tile phase `(dx, dy)` holds the mosaic samples at
//! `(dx + k·tw, dy + l·th)` at index `(k, l)`, so phase `(dx, dy)`'s
//! top-left sample lands at `(0, 0)`.

use std::collections::BTreeMap;

use crate::error::{ensure, Error, Result};
use crate::imagecore::{
    Angle, Channel, Color, MosaicImage, MpfaLayout, PatternDescriptor, PatternKind, Plane,
    PolarizationStack, RgbImage,
};
use crate::scalar::Scalar;

/// Splits a plane into its `tw × th` tile phases, phase index `dy·tw + dx`.
fn split_phases<T: Scalar>(plane: &Plane<T>, tw: usize, th: usize) -> Vec<Plane<T>> {
    let (w, h) = (plane.width() / tw, plane.height() / th);
    let mut out = Vec::with_capacity(tw * th);
    for dy in 0..th {
        for dx in 0..tw {
            out.push(Plane::from_fn(w, h, |x, y| plane.get(x * tw + dx, y * th + dy)));
        }
    }
    out
}

/// Inverse of [`split_phases`].
fn merge_phases<T: Scalar>(phases: &[&Plane<T>], tw: usize, th: usize) -> Result<Plane<T>> {
    ensure!(phases.len() == tw * th, "need {} phases, got {}", tw * th, phases.len());
    let dims = phases[0].dims();
    ensure!(
        phases.iter().all(|p| p.dims() == dims),
        "sub-sampled planes differ in size"
    );
    let (w, h) = (dims.0 * tw, dims.1 * th);
    let mut out = Plane::zeros(w, h);
    for dy in 0..th {
        for dx in 0..tw {
            let src = phases[dy * tw + dx];
            for y in 0..dims.1 {
                for x in 0..dims.0 {
                    out.set(x * tw + dx, y * th + dy, src.get(x, y));
                }
            }
        }
    }
    Ok(out)
}

fn layout_of(pattern: &PatternDescriptor) -> Result<MpfaLayout> {
    pattern
        .mpfa_layout()
        .ok_or_else(|| Error::contract("pattern has no polarization layout"))
}

/// ↓2: one half-resolution plane per polarizer angle.
pub fn split_mpfa_quads<T: Scalar>(mosaic: &MosaicImage<T>) -> Result<BTreeMap<Angle, Plane<T>>> {
    mosaic.require(PatternKind::Mpfa)?;
    let layout = layout_of(mosaic.pattern())?;
    let phases = split_phases(mosaic.plane(), 2, 2);
    Ok(Angle::ALL
        .iter()
        .map(|&a| {
            let (dx, dy) = layout.phase_of(a);
            (a, phases[dy * 2 + dx].clone())
        })
        .collect())
}

/// ↑2: re-interleaves four per-angle planes into an MPFA mosaic.
pub fn merge_quads_to_mpfa<T: Scalar>(
    quads: &BTreeMap<Angle, Plane<T>>,
    pattern: &PatternDescriptor,
) -> Result<MosaicImage<T>> {
    ensure!(
        pattern.kind() == PatternKind::Mpfa,
        "merge_quads_to_mpfa needs an MPFA pattern, got {}",
        pattern.kind().name()
    );
    let layout = layout_of(pattern)?;
    let plane = merge_by_layout(quads, layout)?;
    MosaicImage::new(plane, pattern.clone())
}

fn merge_by_layout<T: Scalar>(
    quads: &BTreeMap<Angle, Plane<T>>,
    layout: MpfaLayout,
) -> Result<Plane<T>> {
    let mut phases = Vec::with_capacity(4);
    for dy in 0..2 {
        for dx in 0..2 {
            let a = layout.angle_at(dx, dy);
            phases.push(
                quads
                    .get(&a)
                    .ok_or_else(|| Error::contract(format!("missing {a}° plane")))?,
            );
        }
    }
    merge_phases(&phases, 2, 2)
}

/// Collects, for each angle, the one sample of that angle from every 2×2
/// color block; each result is a half-resolution RGGB mosaic.
pub fn split_cpfa_to_bayer<T: Scalar>(
    mosaic: &MosaicImage<T>,
) -> Result<BTreeMap<Angle, MosaicImage<T>>> {
    mosaic.require(PatternKind::Cpfa)?;
    let layout = layout_of(mosaic.pattern())?;
    let phases = split_phases(mosaic.plane(), 2, 2);
    Angle::ALL
        .iter()
        .map(|&a| {
            let (dx, dy) = layout.phase_of(a);
            let bayer = MosaicImage::new(phases[dy * 2 + dx].clone(), PatternDescriptor::bayer())?;
            Ok((a, bayer))
        })
        .collect()
}

/// Inverse of [`split_cpfa_to_bayer`].
pub fn merge_bayer_to_cpfa<T: Scalar>(
    bayers: &BTreeMap<Angle, MosaicImage<T>>,
    layout: MpfaLayout,
) -> Result<MosaicImage<T>> {
    let mut quads = BTreeMap::new();
    for (&a, m) in bayers {
        m.require(PatternKind::Bayer)?;
        quads.insert(a, m.plane().clone());
    }
    let plane = merge_by_layout(&quads, layout)?;
    MosaicImage::new(plane, PatternDescriptor::cpfa(layout))
}

/// Splits an RGGB mosaic into its pseudo four channels `(R, G1, G2, B)`.
pub fn split_bayer_channels<T: Scalar>(bayer: &MosaicImage<T>) -> Result<[Plane<T>; 4]> {
    bayer.require(PatternKind::Bayer)?;
    let v = split_phases(bayer.plane(), 2, 2);
    let [r, g1, g2, b]: [Plane<T>; 4] = v.try_into().expect("four phases");
    Ok([r, g1, g2, b])
}

/// Inverse of [`split_bayer_channels`].
pub fn merge_bayer_channels<T: Scalar>(channels: &[Plane<T>; 4]) -> Result<MosaicImage<T>> {
    let refs: Vec<&Plane<T>> = channels.iter().collect();
    let plane = merge_phases(&refs, 2, 2)?;
    MosaicImage::new(plane, PatternDescriptor::bayer())
}

/// Rearranges four color-demosaicked per-angle images (one per polarizer
/// angle, at Bayer-split resolution) into one MPFA mosaic per color.
///
/// The mosaic for color `c` is the ↑2 merge of the four angle planes of
/// color `c`, so every value lands at the sensor position its angle occupies
/// in the CPFA. The result has the CPFA's full resolution.
pub fn rearrange_rgb_to_mpfa<T: Scalar>(
    per_angle: &BTreeMap<Angle, RgbImage<T>>,
    layout: MpfaLayout,
) -> Result<BTreeMap<Color, MosaicImage<T>>> {
    let dims = per_angle
        .values()
        .next()
        .map(RgbImage::dims)
        .ok_or_else(|| Error::contract("no per-angle images"))?;
    ensure!(
        per_angle.values().all(|im| im.dims() == dims),
        "per-angle RGB images differ in size"
    );
    let pattern = PatternDescriptor::mpfa(layout);
    Color::RGB
        .iter()
        .map(|&c| {
            let quads = per_angle
                .iter()
                .map(|(&a, im)| (a, im.channel(c).clone()))
                .collect();
            Ok((c, merge_quads_to_mpfa(&quads, &pattern)?))
        })
        .collect()
}

/// Samples a full stack through a pattern: each mosaic pixel takes the
/// stack plane of its cell's channel at that position.
pub fn mosaic_from_stack<T: Scalar>(
    stack: &PolarizationStack<T>,
    pattern: &PatternDescriptor,
) -> Result<MosaicImage<T>> {
    let mut planes: Vec<(Channel, &Plane<T>)> = Vec::new();
    for ch in pattern.channels() {
        let p = stack
            .get(ch)
            .ok_or_else(|| Error::contract(format!("stack has no plane for channel {ch}")))?;
        planes.push((ch, p));
    }
    let (w, h) = stack.dims();
    let plane = Plane::from_fn(w, h, |x, y| {
        let ch = pattern.channel_at(x, y);
        let p = planes
            .iter()
            .find(|(c, _)| *c == ch)
            .map(|(_, p)| *p)
            .expect("every pattern channel resolved above");
        p.get(x, y)
    });
    MosaicImage::new(plane, pattern.clone())
}
