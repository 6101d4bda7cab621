//! Image containers and sensor pattern descriptors.
//!
//! All samples are real intensities normalized so that full scale is 1.0.
//! Every container is an immutable value once built; constructors validate
//! the invariants (matching dimensions, finite samples, tiling).

mod io;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::scalar::Scalar;

pub use io::{
    load_mosaic, load_pfi, load_plane, load_rgb_pfi, load_stack, store_mosaic, store_pfi, store_plane,
    store_rgb8_png, store_stack,
    PfiHeader, PlaneFormat, SidecarChannel,
};

/// A single-channel row-major image.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T = f64> {
    width: usize,
    height: usize,
    samples: Vec<T>,
}

impl<T: Scalar> Plane<T> {
    pub fn new(width: usize, height: usize, samples: Vec<T>) -> Result<Self> {
        ensure!(
            samples.len() == width * height,
            "plane {}x{} needs {} samples, got {}",
            width,
            height,
            width * height,
            samples.len()
        );
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "non-finite sample at ({}, {})",
                i % width.max(1),
                i / width.max(1)
            )));
        }
        Ok(Plane {
            width,
            height,
            samples,
        })
    }

    /// Builds a plane without checking finiteness. Callers guarantee the
    /// length and finiteness invariants.
    pub(crate) fn from_vec(width: usize, height: usize, samples: Vec<T>) -> Self {
        debug_assert_eq!(samples.len(), width * height);
        debug_assert!(samples.iter().all(|v| v.is_finite()));
        Plane {
            width,
            height,
            samples,
        }
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(value.is_finite(), "fill value must be finite");
        Plane::from_vec(width, height, vec![value; width * height])
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Plane::from_vec(width, height, vec![T::zero(); width * height])
    }

    /// Evaluates `f(x, y)` at every pixel.
    ///
    /// Panics if `f` returns a non-finite value.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                assert!(v.is_finite(), "non-finite sample at ({x}, {y})");
                samples.push(v);
            }
        }
        Plane::from_vec(width, height, samples)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    #[inline]
    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.samples[y * self.width + x]
    }

    /// Sample with replicate padding outside the image.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.samples[y * self.width + x]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[T] {
        &self.samples[y * self.width..(y + 1) * self.width]
    }

    #[inline]
    pub(crate) fn set(&mut self, x: usize, y: usize, v: T) {
        self.samples[y * self.width + x] = v;
    }

    /// Applies `f` to every sample. Panics if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let samples: Vec<T> = self.samples.iter().map(|&v| f(v)).collect();
        assert!(samples.iter().all(|v| v.is_finite()), "map produced a non-finite sample");
        Plane::from_vec(self.width, self.height, samples)
    }

    /// Combines two equally sized planes sample by sample.
    pub fn zip_map(&self, other: &Plane<T>, f: impl Fn(T, T) -> T) -> Result<Self> {
        ensure!(
            self.dims() == other.dims(),
            "plane sizes differ: {:?} vs {:?}",
            self.dims(),
            other.dims()
        );
        let samples: Vec<T> = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Plane::new(self.width, self.height, samples)
    }

    pub fn transpose(&self) -> Self {
        Plane::from_fn(self.height, self.width, |x, y| self.get(y, x))
    }

    /// Converts the sample type.
    pub fn cast<U: Scalar>(&self) -> Plane<U> {
        Plane::from_vec(
            self.width,
            self.height,
            self.samples.iter().map(|&v| U::lit(v.as_f64())).collect(),
        )
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|v| v.as_f64()).sum::<f64>() / self.samples.len() as f64
    }
}

/// Polarizer orientation of a pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Angle {
    A0,
    A45,
    A90,
    A135,
}

impl Angle {
    pub const ALL: [Angle; 4] = [Angle::A0, Angle::A45, Angle::A90, Angle::A135];

    pub fn degrees(self) -> u16 {
        match self {
            Angle::A0 => 0,
            Angle::A45 => 45,
            Angle::A90 => 90,
            Angle::A135 => 135,
        }
    }

    pub fn from_degrees(deg: i64) -> Option<Angle> {
        match deg {
            0 => Some(Angle::A0),
            45 => Some(Angle::A45),
            90 => Some(Angle::A90),
            135 => Some(Angle::A135),
            _ => None,
        }
    }

    /// Position in [`Angle::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.degrees())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Color {
    R,
    G,
    B,
    #[serde(rename = "mono")]
    Mono,
}

impl Color {
    pub const RGB: [Color; 3] = [Color::R, Color::G, Color::B];

    pub fn name(self) -> &'static str {
        match self {
            Color::R => "R",
            Color::G => "G",
            Color::B => "B",
            Color::Mono => "mono",
        }
    }

    pub fn parse(s: &str) -> Option<Color> {
        match s {
            "R" | "r" => Some(Color::R),
            "G" | "g" => Some(Color::G),
            "B" | "b" => Some(Color::B),
            "mono" | "Mono" | "M" => Some(Color::Mono),
            _ => None,
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a pixel observes: a polarizer angle (absent for plain Bayer
/// mosaics) and a color.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Channel {
    pub angle: Option<Angle>,
    pub color: Color,
}

impl Channel {
    pub const fn new(angle: Angle, color: Color) -> Self {
        Channel {
            angle: Some(angle),
            color,
        }
    }

    pub const fn mono(angle: Angle) -> Self {
        Channel::new(angle, Color::Mono)
    }

    pub const fn color_only(color: Color) -> Self {
        Channel { angle: None, color }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.angle {
            Some(a) => write!(f, "{}@{}", self.color, a),
            None => write!(f, "{}", self.color),
        }
    }
}

/// Placement of the four polarizer angles inside a 2×2 tile, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MpfaLayout([[Angle; 2]; 2]);

impl MpfaLayout {
    pub fn new(rows: [[Angle; 2]; 2]) -> Result<Self> {
        let mut seen = [false; 4];
        for a in rows.iter().flatten() {
            seen[a.index()] = true;
        }
        ensure!(
            seen.iter().all(|&s| s),
            "MPFA layout must place each of the four angles exactly once"
        );
        Ok(MpfaLayout(rows))
    }

    /// Parses four angles in degrees, row-major (e.g. `[90, 45, 135, 0]`).
    pub fn from_degrees(deg: &[i64]) -> Result<Self> {
        ensure!(deg.len() == 4, "MPFA layout needs four angles, got {}", deg.len());
        let mut a = [Angle::A0; 4];
        for (slot, &d) in a.iter_mut().zip(deg) {
            *slot = Angle::from_degrees(d)
                .ok_or_else(|| Error::contract(format!("unsupported polarizer angle {d}")))?;
        }
        MpfaLayout::new([[a[0], a[1]], [a[2], a[3]]])
    }

    pub fn to_degrees(self) -> [u16; 4] {
        let r = self.0;
        [
            r[0][0].degrees(),
            r[0][1].degrees(),
            r[1][0].degrees(),
            r[1][1].degrees(),
        ]
    }

    #[inline]
    pub fn angle_at(&self, dx: usize, dy: usize) -> Angle {
        self.0[dy & 1][dx & 1]
    }

    /// Offset `(dx, dy)` of `angle` inside the tile.
    pub fn phase_of(&self, angle: Angle) -> (usize, usize) {
        for dy in 0..2 {
            for dx in 0..2 {
                if self.0[dy][dx] == angle {
                    return (dx, dy);
                }
            }
        }
        unreachable!("layout is a permutation of all angles")
    }

    pub fn transposed(self) -> Self {
        let r = self.0;
        MpfaLayout([[r[0][0], r[1][0]], [r[0][1], r[1][1]]])
    }
}

impl Default for MpfaLayout {
    /// 90/45 over 135/0, the layout of the common commercial sensor.
    fn default() -> Self {
        MpfaLayout([[Angle::A90, Angle::A45], [Angle::A135, Angle::A0]])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    /// Monochrome polarization filter array, 2×2 tile.
    Mpfa,
    /// RGGB color filter array, 2×2 tile.
    Bayer,
    /// Color polarization filter array: 2×2 Bayer arrangement of 2×2 angle
    /// blocks, 4×4 tile.
    Cpfa,
}

impl PatternKind {
    pub fn name(self) -> &'static str {
        match self {
            PatternKind::Mpfa => "mpfa",
            PatternKind::Bayer => "bayer",
            PatternKind::Cpfa => "cpfa",
        }
    }
}

const BAYER_RGGB: [[Color; 2]; 2] = [[Color::R, Color::G], [Color::G, Color::B]];

/// Periodic tile mapping pixel position to the channel it observes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PatternDescriptor {
    kind: PatternKind,
    tile_width: usize,
    tile_height: usize,
    cells: Vec<Channel>,
    layout: Option<MpfaLayout>,
}

impl PatternDescriptor {
    pub fn mpfa(layout: MpfaLayout) -> Self {
        let cells = (0..2)
            .flat_map(|dy| (0..2).map(move |dx| Channel::mono(layout.angle_at(dx, dy))))
            .collect();
        PatternDescriptor {
            kind: PatternKind::Mpfa,
            tile_width: 2,
            tile_height: 2,
            cells,
            layout: Some(layout),
        }
    }

    pub fn bayer() -> Self {
        let cells = (0..2)
            .flat_map(|dy| (0..2).map(move |dx| Channel::color_only(BAYER_RGGB[dy][dx])))
            .collect();
        PatternDescriptor {
            kind: PatternKind::Bayer,
            tile_width: 2,
            tile_height: 2,
            cells,
            layout: None,
        }
    }

    /// CPFA tile: Bayer-arranged color blocks, each block an MPFA tile.
    pub fn cpfa(layout: MpfaLayout) -> Self {
        let mut cells = Vec::with_capacity(16);
        for y in 0..4 {
            for x in 0..4 {
                let color = BAYER_RGGB[y / 2][x / 2];
                cells.push(Channel::new(layout.angle_at(x & 1, y & 1), color));
            }
        }
        PatternDescriptor {
            kind: PatternKind::Cpfa,
            tile_width: 4,
            tile_height: 4,
            cells,
            layout: Some(layout),
        }
    }

    pub fn for_kind(kind: PatternKind, layout: MpfaLayout) -> Self {
        match kind {
            PatternKind::Mpfa => PatternDescriptor::mpfa(layout),
            PatternKind::Bayer => PatternDescriptor::bayer(),
            PatternKind::Cpfa => PatternDescriptor::cpfa(layout),
        }
    }

    #[inline]
    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    #[inline]
    pub fn tile_width(&self) -> usize {
        self.tile_width
    }

    #[inline]
    pub fn tile_height(&self) -> usize {
        self.tile_height
    }

    /// Angle layout of the polarization blocks, `None` for Bayer.
    pub fn mpfa_layout(&self) -> Option<MpfaLayout> {
        self.layout
    }

    #[inline]
    pub fn channel_at(&self, x: usize, y: usize) -> Channel {
        self.cells[(y % self.tile_height) * self.tile_width + x % self.tile_width]
    }

    /// Distinct channels in the tile, sorted.
    pub fn channels(&self) -> Vec<Channel> {
        let mut c = self.cells.clone();
        c.sort();
        c.dedup();
        c
    }

    /// Tile offsets carrying `channel`.
    pub fn phases_of(&self, channel: Channel) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for dy in 0..self.tile_height {
            for dx in 0..self.tile_width {
                if self.channel_at(dx, dy) == channel {
                    out.push((dx, dy));
                }
            }
        }
        out
    }

    /// Pattern of the transposed sensor.
    pub fn transposed(&self) -> Self {
        let mut cells = Vec::with_capacity(self.cells.len());
        for y in 0..self.tile_width {
            for x in 0..self.tile_height {
                cells.push(self.channel_at(y, x));
            }
        }
        PatternDescriptor {
            kind: self.kind,
            tile_width: self.tile_height,
            tile_height: self.tile_width,
            cells,
            layout: self.layout.map(MpfaLayout::transposed),
        }
    }
}

/// Raw sensor data: one plane plus the pattern that says what each pixel saw.
#[derive(Clone, Debug, PartialEq)]
pub struct MosaicImage<T = f64> {
    plane: Plane<T>,
    pattern: PatternDescriptor,
}

impl<T: Scalar> MosaicImage<T> {
    /// Rejects planes whose dimensions are not whole multiples of the tile.
    pub fn new(plane: Plane<T>, pattern: PatternDescriptor) -> Result<Self> {
        ensure!(
            plane.width() > 0 && plane.height() > 0,
            "mosaic must not be empty"
        );
        ensure!(
            plane.width() % pattern.tile_width() == 0
                && plane.height() % pattern.tile_height() == 0,
            "{}x{} is not a multiple of the {}x{} {} tile",
            plane.width(),
            plane.height(),
            pattern.tile_width(),
            pattern.tile_height(),
            pattern.kind().name()
        );
        Ok(MosaicImage { plane, pattern })
    }

    #[inline]
    pub fn plane(&self) -> &Plane<T> {
        &self.plane
    }

    #[inline]
    pub fn pattern(&self) -> &PatternDescriptor {
        &self.pattern
    }

    #[inline]
    pub fn kind(&self) -> PatternKind {
        self.pattern.kind()
    }

    pub fn width(&self) -> usize {
        self.plane.width()
    }

    pub fn height(&self) -> usize {
        self.plane.height()
    }

    pub fn into_parts(self) -> (Plane<T>, PatternDescriptor) {
        (self.plane, self.pattern)
    }

    pub(crate) fn require(&self, kind: PatternKind) -> Result<()> {
        ensure!(
            self.kind() == kind,
            "expected a {} mosaic, got {}",
            kind.name(),
            self.kind().name()
        );
        Ok(())
    }

    /// Binary mask of the pixels observing `channel` (1 observed, 0 not).
    pub fn mask_of(&self, channel: Channel) -> Plane<T> {
        Plane::from_fn(self.width(), self.height(), |x, y| {
            if self.pattern.channel_at(x, y) == channel {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    pub fn transpose(&self) -> Self {
        MosaicImage {
            plane: self.plane.transpose(),
            pattern: self.pattern.transposed(),
        }
    }
}

/// Full-resolution polarization image: one plane per (angle, color).
///
/// A monochrome stack holds the four angles with [`Color::Mono`]; a color
/// stack holds the four angles for each of R, G and B.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarizationStack<T = f64> {
    planes: BTreeMap<Channel, Plane<T>>,
}

impl<T: Scalar> PolarizationStack<T> {
    pub fn new(planes: BTreeMap<Channel, Plane<T>>) -> Result<Self> {
        ensure!(!planes.is_empty(), "empty polarization stack");
        let dims = planes.values().next().map(Plane::dims).unwrap_or_default();
        ensure!(
            planes.values().all(|p| p.dims() == dims),
            "stack planes differ in size"
        );
        let mono: Vec<Channel> = Angle::ALL.iter().map(|&a| Channel::mono(a)).collect();
        let color: Vec<Channel> = Color::RGB
            .iter()
            .flat_map(|&c| Angle::ALL.iter().map(move |&a| Channel::new(a, c)))
            .collect();
        let keys: Vec<Channel> = planes.keys().copied().collect();
        let mut want_mono = mono.clone();
        want_mono.sort();
        let mut want_color = color.clone();
        want_color.sort();
        ensure!(
            keys == want_mono || keys == want_color,
            "a stack needs 4 mono angle planes or 12 color angle planes, got {:?}",
            keys.iter().map(|c| c.to_string()).collect::<Vec<_>>()
        );
        Ok(PolarizationStack { planes })
    }

    /// Monochrome stack from planes ordered 0°, 45°, 90°, 135°.
    pub fn mono(planes: [Plane<T>; 4]) -> Result<Self> {
        let map = Angle::ALL
            .iter()
            .zip(planes)
            .map(|(&a, p)| (Channel::mono(a), p))
            .collect();
        PolarizationStack::new(map)
    }

    pub fn is_color(&self) -> bool {
        self.planes.len() == 12
    }

    /// Colors present: `[Mono]` or `[R, G, B]`.
    pub fn colors(&self) -> Vec<Color> {
        if self.is_color() {
            Color::RGB.to_vec()
        } else {
            vec![Color::Mono]
        }
    }

    pub fn get(&self, channel: Channel) -> Option<&Plane<T>> {
        self.planes.get(&channel)
    }

    /// Planes of one color in angle order 0°, 45°, 90°, 135°.
    pub fn angles(&self, color: Color) -> Result<[&Plane<T>; 4]> {
        let get = |a: Angle| {
            self.planes
                .get(&Channel::new(a, color))
                .ok_or_else(|| Error::contract(format!("stack has no {color} planes")))
        };
        Ok([
            get(Angle::A0)?,
            get(Angle::A45)?,
            get(Angle::A90)?,
            get(Angle::A135)?,
        ])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Channel, &Plane<T>)> {
        self.planes.iter()
    }

    pub fn into_planes(self) -> BTreeMap<Channel, Plane<T>> {
        self.planes
    }

    pub fn dims(&self) -> (usize, usize) {
        self.planes.values().next().map(Plane::dims).unwrap_or_default()
    }

    pub fn map_planes(&self, mut f: impl FnMut(Channel, &Plane<T>) -> Plane<T>) -> Self {
        PolarizationStack {
            planes: self.planes.iter().map(|(&c, p)| (c, f(c, p))).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        self.map_planes(|_, p| p.transpose())
    }
}

/// Three equally sized color planes.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage<T = f64> {
    planes: [Plane<T>; 3],
}

impl<T: Scalar> RgbImage<T> {
    pub fn new(r: Plane<T>, g: Plane<T>, b: Plane<T>) -> Result<Self> {
        ensure!(
            r.dims() == g.dims() && g.dims() == b.dims(),
            "RGB planes differ in size"
        );
        Ok(RgbImage { planes: [r, g, b] })
    }

    pub fn planes(&self) -> &[Plane<T>; 3] {
        &self.planes
    }

    pub fn into_planes(self) -> [Plane<T>; 3] {
        self.planes
    }

    pub fn channel(&self, color: Color) -> &Plane<T> {
        match color {
            Color::R => &self.planes[0],
            Color::G | Color::Mono => &self.planes[1],
            Color::B => &self.planes[2],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    pub fn mean(&self) -> f64 {
        self.planes.iter().map(Plane::mean).sum::<f64>() / 3.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_rejects_bad_length_and_nan() {
        assert!(Plane::<f64>::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Plane::<f64>::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(Plane::<f64>::new(1, 2, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn mpfa_tile_holds_each_angle_once() {
        let p = PatternDescriptor::mpfa(MpfaLayout::default());
        for oy in 0..4 {
            for ox in 0..4 {
                let mut seen: Vec<Angle> = (0..2)
                    .flat_map(|dy| (0..2).map(move |dx| (dx, dy)))
                    .map(|(dx, dy)| p.channel_at(ox + dx, oy + dy).angle.unwrap())
                    .collect();
                seen.sort();
                assert_eq!(seen, Angle::ALL.to_vec());
            }
        }
        assert_eq!(p.channel_at(0, 0), Channel::mono(Angle::A90));
        assert_eq!(p.channel_at(1, 1), Channel::mono(Angle::A0));
    }

    #[test]
    fn cpfa_tile_layout() {
        let p = PatternDescriptor::cpfa(MpfaLayout::default());
        assert_eq!(p.channels().len(), 12);
        assert_eq!(p.channel_at(0, 0), Channel::new(Angle::A90, Color::R));
        assert_eq!(p.channel_at(3, 1), Channel::new(Angle::A0, Color::G));
        assert_eq!(p.channel_at(1, 3), Channel::new(Angle::A0, Color::G));
        assert_eq!(p.channel_at(2, 2), Channel::new(Angle::A90, Color::B));
        for ch in p.channels() {
            assert_eq!(p.phases_of(ch).len(), if ch.color == Color::G { 2 } else { 1 });
        }
    }

    #[test]
    fn layout_must_be_permutation() {
        assert!(MpfaLayout::from_degrees(&[0, 0, 90, 135]).is_err());
        assert!(MpfaLayout::from_degrees(&[0, 45, 90, 30]).is_err());
        let l = MpfaLayout::from_degrees(&[90, 45, 135, 0]).unwrap();
        assert_eq!(l, MpfaLayout::default());
        assert_eq!(l.phase_of(Angle::A0), (1, 1));
    }

    #[test]
    fn mosaic_rejects_partial_tiles() {
        let p = Plane::<f64>::zeros(6, 4);
        assert!(MosaicImage::new(p.clone(), PatternDescriptor::mpfa(MpfaLayout::default())).is_ok());
        assert!(MosaicImage::new(p, PatternDescriptor::cpfa(MpfaLayout::default())).is_err());
    }

    #[test]
    fn stack_requires_full_channel_set() {
        let z = || Plane::<f64>::zeros(2, 2);
        assert!(PolarizationStack::mono([z(), z(), z(), z()]).is_ok());
        let mut m = BTreeMap::new();
        m.insert(Channel::mono(Angle::A0), z());
        assert!(PolarizationStack::new(m).is_err());
    }

    #[test]
    fn transposed_pattern_matches_transposed_positions() {
        let p = PatternDescriptor::cpfa(MpfaLayout::default());
        let t = p.transposed();
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(p.channel_at(x, y), t.channel_at(y, x));
            }
        }
    }
}
