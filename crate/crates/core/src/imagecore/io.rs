//! Bit-exact file formats.
//!
//! * `png16`: single-channel 16-bit PNG, full scale 65535.
//! * `pfi-raw`: little-endian `f32` planar payload in `X.pfi` plus a JSON
//!   sidecar `X.pfi.json` giving `width`, `height` and the channel list.
//!   Multi-plane files concatenate planes in sidecar channel order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    Angle, Channel, Color, MosaicImage, MpfaLayout, PatternDescriptor, PatternKind, Plane,
    PolarizationStack, RgbImage,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const PNG16_FULL_SCALE: f64 = 65535.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlaneFormat {
    Png16,
    PfiRaw,
}

impl PlaneFormat {
    /// Picks the format from the file extension (`.png` or `.pfi`).
    pub fn from_path(path: &Path) -> Option<PlaneFormat> {
        match path.extension()?.to_str()? {
            "png" | "PNG" => Some(PlaneFormat::Png16),
            "pfi" => Some(PlaneFormat::PfiRaw),
            _ => None,
        }
    }
}

/// One entry of the sidecar channel list. `angle` is omitted for planes that
/// are not tied to a single polarizer angle (raw mosaics, Bayer data).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarChannel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<i64>,
    pub color: Color,
}

impl SidecarChannel {
    fn to_channel(self, path: &Path) -> Result<Channel> {
        let angle = match self.angle {
            None => None,
            Some(d) => Some(Angle::from_degrees(d).ok_or_else(|| {
                Error::format(path, format!("unsupported polarizer angle {d}"))
            })?),
        };
        Ok(Channel {
            angle,
            color: self.color,
        })
    }
}

impl From<Channel> for SidecarChannel {
    fn from(c: Channel) -> Self {
        SidecarChannel {
            angle: c.angle.map(|a| a.degrees() as i64),
            color: c.color,
        }
    }
}

/// Contents of `X.pfi.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PfiHeader {
    pub width: usize,
    pub height: usize,
    pub channels: Vec<SidecarChannel>,
    /// Mosaic pattern of a raw plane, when the file holds one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<PatternKind>,
    /// MPFA angle layout (row-major degrees) for MPFA/CPFA mosaics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Vec<i64>>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn load_plane<T: Scalar>(path: impl AsRef<Path>, format: PlaneFormat) -> Result<Plane<T>> {
    let path = path.as_ref();
    match format {
        PlaneFormat::Png16 => load_png16(path),
        PlaneFormat::PfiRaw => {
            let (header, mut planes) = load_pfi(path)?;
            if planes.len() != 1 {
                return Err(Error::format(
                    path,
                    format!("expected a single plane, found {}", header.channels.len()),
                ));
            }
            Ok(planes.remove(0).1)
        }
    }
}

/// Writes a plane. PNG output clamps to `[0, 1]` and rounds to 16 bits.
pub fn store_plane<T: Scalar>(
    plane: &Plane<T>,
    path: impl AsRef<Path>,
    format: PlaneFormat,
) -> Result<()> {
    let path = path.as_ref();
    match format {
        PlaneFormat::Png16 => store_png16(plane, path),
        PlaneFormat::PfiRaw => store_pfi(
            path,
            &[(Channel::color_only(Color::Mono), plane)],
            None,
            None,
        ),
    }
}

/// Writes a raw mosaic as pfi-raw, recording its pattern in the sidecar.
pub fn store_mosaic<T: Scalar>(mosaic: &MosaicImage<T>, path: impl AsRef<Path>) -> Result<()> {
    let layout = mosaic
        .pattern()
        .mpfa_layout()
        .map(|l| l.to_degrees().iter().map(|&d| d as i64).collect());
    store_pfi(
        path.as_ref(),
        &[(Channel::color_only(Color::Mono), mosaic.plane())],
        Some(mosaic.kind()),
        layout,
    )
}

/// Reads a raw mosaic. A pfi-raw sidecar that records a pattern wins over
/// `fallback`; PNG input always needs `fallback`.
pub fn load_mosaic<T: Scalar>(
    path: impl AsRef<Path>,
    fallback: Option<&PatternDescriptor>,
) -> Result<MosaicImage<T>> {
    let path = path.as_ref();
    let format = PlaneFormat::from_path(path)
        .ok_or_else(|| Error::format(path, "unknown extension (expected .png or .pfi)"))?;
    let (plane, pattern) = match format {
        PlaneFormat::Png16 => (load_png16(path)?, None),
        PlaneFormat::PfiRaw => {
            let (header, mut planes) = load_pfi(path)?;
            if planes.len() != 1 {
                return Err(Error::format(path, "a mosaic file holds exactly one plane"));
            }
            let pattern = match header.pattern {
                Some(kind) => Some(PatternDescriptor::for_kind(
                    kind,
                    header.mpfa_layout().map_err(|e| Error::format(path, e.to_string()))?,
                )),
                None => None,
            };
            (planes.remove(0).1, pattern)
        }
    };
    let pattern = match (pattern, fallback) {
        (Some(p), _) => p,
        (None, Some(f)) => f.clone(),
        (None, None) => return Err(Error::format(path, "mosaic pattern unknown")),
    };
    MosaicImage::new(plane, pattern).map_err(|e| Error::format(path, e.to_string()))
}

fn load_png16<T: Scalar>(path: &Path) -> Result<Plane<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Grayscale || depth != png::BitDepth::Sixteen {
        return Err(Error::format(
            path,
            format!("expected 16-bit grayscale PNG, found {color:?} {depth:?}"),
        ));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let bytes = &buf[..info.buffer_size()];
    let mut samples = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = &bytes[y * info.line_size..y * info.line_size + 2 * w];
        for px in row.chunks_exact(2) {
            let v = u16::from_be_bytes([px[0], px[1]]);
            samples.push(T::lit(v as f64 / PNG16_FULL_SCALE));
        }
    }
    Plane::new(w, h, samples)
}

fn store_png16<T: Scalar>(plane: &Plane<T>, path: &Path) -> Result<()> {
    let mut data = Vec::with_capacity(plane.len() * 2);
    for &v in plane.samples() {
        let q = (v.as_f64().clamp(0.0, 1.0) * PNG16_FULL_SCALE).round() as u16;
        data.extend_from_slice(&q.to_be_bytes());
    }
    write_png(
        path,
        plane.width(),
        plane.height(),
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
        &data,
    )
}

/// Writes interleaved 8-bit RGB.
pub fn store_rgb8_png(path: impl AsRef<Path>, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if rgb.len() != width * height * 3 {
        return Err(Error::contract(format!(
            "RGB buffer of {} bytes does not match {width}x{height}",
            rgb.len()
        )));
    }
    write_png(path, width, height, png::ColorType::Rgb, png::BitDepth::Eight, rgb)
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(depth);
    let to_err = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    };
    let mut writer = encoder.write_header().map_err(to_err)?;
    writer.write_image_data(data).map_err(to_err)?;
    writer.finish().map_err(to_err)
}

/// Reads every plane of a pfi-raw file, in sidecar order.
pub fn load_pfi<T: Scalar>(path: impl AsRef<Path>) -> Result<(PfiHeader, Vec<(Channel, Plane<T>)>)> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let header: PfiHeader =
        serde_json::from_str(&text).map_err(|e| Error::format(&side, e.to_string()))?;
    if header.channels.is_empty() {
        return Err(Error::format(&side, "sidecar lists no channels"));
    }
    let mut payload = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut payload))
        .map_err(|e| Error::io(path, e))?;
    let n = header.width * header.height;
    let expected = n * header.channels.len() * 4;
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "payload is {} bytes, sidecar {}x{}x{} implies {expected}",
                payload.len(),
                header.width,
                header.height,
                header.channels.len()
            ),
        ));
    }
    let mut out = Vec::with_capacity(header.channels.len());
    for (k, ch) in header.channels.iter().enumerate() {
        let bytes = &payload[k * n * 4..(k + 1) * n * 4];
        let samples: Vec<T> = bytes
            .chunks_exact(4)
            .map(|b| T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        let plane = Plane::new(header.width, header.height, samples)
            .map_err(|e| Error::format(path, e.to_string()))?;
        out.push((ch.to_channel(&side)?, plane));
    }
    Ok((header, out))
}

/// Writes planes of equal size as one pfi-raw file.
pub fn store_pfi<T: Scalar>(
    path: impl AsRef<Path>,
    planes: &[(Channel, &Plane<T>)],
    pattern: Option<PatternKind>,
    layout: Option<Vec<i64>>,
) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = match planes.first() {
        Some((_, p)) => p.dims(),
        None => return Err(Error::contract("no planes to store")),
    };
    if planes.iter().any(|(_, p)| p.dims() != (w, h)) {
        return Err(Error::contract("planes stored together must share dimensions"));
    }
    let header = PfiHeader {
        width: w,
        height: h,
        channels: planes.iter().map(|(c, _)| SidecarChannel::from(*c)).collect(),
        pattern,
        layout,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (_, p) in planes {
        for &v in p.samples() {
            out.write_all(&(v.as_f64() as f32).to_le_bytes())
                .map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&header).expect("header serializes");
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

/// Reads a three-plane R, G, B pfi-raw file.
pub fn load_rgb_pfi<T: Scalar>(path: impl AsRef<Path>) -> Result<RgbImage<T>> {
    let path = path.as_ref();
    let (_, planes) = load_pfi::<T>(path)?;
    let mut r = None;
    let mut g = None;
    let mut b = None;
    for (ch, p) in planes {
        match ch.color {
            Color::R => r = Some(p),
            Color::G => g = Some(p),
            Color::B => b = Some(p),
            Color::Mono => {}
        }
    }
    match (r, g, b) {
        (Some(r), Some(g), Some(b)) => RgbImage::new(r, g, b),
        _ => Err(Error::format(path, "expected R, G and B planes")),
    }
}

/// Writes every plane of a stack into one pfi-raw file.
pub fn store_stack<T: Scalar>(stack: &PolarizationStack<T>, path: impl AsRef<Path>) -> Result<()> {
    let planes: Vec<(Channel, &Plane<T>)> = stack.iter().map(|(c, p)| (*c, p)).collect();
    store_pfi(path, &planes, None, None)
}

/// Reads a stack written by [`store_stack`]; every channel needs an angle.
pub fn load_stack<T: Scalar>(path: impl AsRef<Path>) -> Result<PolarizationStack<T>> {
    let path = path.as_ref();
    let (_, planes) = load_pfi::<T>(path)?;
    if planes.iter().any(|(c, _)| c.angle.is_none()) {
        return Err(Error::format(path, "stack channels need polarizer angles"));
    }
    PolarizationStack::new(planes.into_iter().collect())
        .map_err(|e| Error::format(path, e.to_string()))
}

impl PfiHeader {
    /// MPFA layout recorded in the sidecar, or the default.
    pub fn mpfa_layout(&self) -> Result<MpfaLayout> {
        match &self.layout {
            Some(d) => MpfaLayout::from_degrees(d),
            None => Ok(MpfaLayout::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn png16_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let raw: Vec<u8> = [0u16, 65535, 32768, 0]
            .iter()
            .flat_map(|v| v.to_be_bytes())
            .collect();
        write_png(&path, 2, 2, png::ColorType::Grayscale, png::BitDepth::Sixteen, &raw).unwrap();
        let p: Plane<f64> = load_plane(&path, PlaneFormat::Png16).unwrap();
        assert_eq!(p.samples(), &[0.0, 1.0, 32768.0 / 65535.0, 0.0]);
        assert!((p.get(0, 1) - 0.5000076).abs() < 1e-7);
    }

    #[test]
    fn stack_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.pfi");
        let planes = [0.125, 0.25, 0.5, 0.75].map(|v| Plane::<f64>::filled(3, 2, v));
        let stack = PolarizationStack::mono(planes).unwrap();
        store_stack(&stack, &path).unwrap();
        assert_eq!(load_stack::<f64>(&path).unwrap(), stack);

        let raw = dir.path().join("m.pfi");
        store_plane(&Plane::<f64>::filled(2, 2, 0.5), &raw, PlaneFormat::PfiRaw).unwrap();
        assert!(matches!(load_stack::<f64>(&raw), Err(Error::Format { .. })));
    }

    #[test]
    fn png16_store_clamps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.png");
        let p = Plane::new(3, 1, vec![0.0, 1.0, 1.5]).unwrap();
        store_plane(&p, &path, PlaneFormat::Png16).unwrap();
        let q: Plane<f64> = load_plane(&path, PlaneFormat::Png16).unwrap();
        assert_eq!(q.samples(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn png16_rejects_8bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        write_png(&path, 1, 1, png::ColorType::Grayscale, png::BitDepth::Eight, &[7]).unwrap();
        assert!(matches!(
            load_plane::<f64>(&path, PlaneFormat::Png16),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn pfi_reads_payload_and_checks_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pfi");
        let vals: Vec<f32> = (0..12).map(|i| i as f32 * 0.25).collect();
        let bytes: Vec<u8> = vals.iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(&path, &bytes).unwrap();
        std::fs::write(
            dir.path().join("x.pfi.json"),
            r#"{"width":4,"height":3,"channels":[{"angle":0,"color":"mono"}]}"#,
        )
        .unwrap();
        let p: Plane<f64> = load_plane(&path, PlaneFormat::PfiRaw).unwrap();
        assert_eq!(p.dims(), (4, 3));
        assert_eq!(p.get(3, 2), 11.0 * 0.25);

        std::fs::write(
            dir.path().join("x.pfi.json"),
            r#"{"width":5,"height":3,"channels":[{"angle":0,"color":"mono"}]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_plane::<f64>(&path, PlaneFormat::PfiRaw),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn missing_file_reports_path() {
        let err = load_plane::<f64>("/nonexistent/q.png", PlaneFormat::Png16).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/q.png"));
    }

    #[test]
    fn pfi_sidecar_matches_plane() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.pfi");
        store_plane(&Plane::<f64>::zeros(5, 7), &path, PlaneFormat::PfiRaw).unwrap();
        let text = std::fs::read_to_string(dir.path().join("s.pfi.json")).unwrap();
        let h: PfiHeader = serde_json::from_str(&text).unwrap();
        assert_eq!((h.width, h.height), (5, 7));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn pfi_round_trip_is_identity(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("r.pfi");
            let mut s = seed;
            let p = Plane::<f32>::from_fn(w, h, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 40) as f32 / (1u64 << 24) as f32 * 3.0 - 1.0
            });
            store_plane(&p, &path, PlaneFormat::PfiRaw).unwrap();
            let q: Plane<f32> = load_plane(&path, PlaneFormat::PfiRaw).unwrap();
            prop_assert_eq!(p, q);
        }

        #[test]
        fn png16_round_trip_within_half_step(vals in proptest::collection::vec(0.0f64..=1.0, 1..64)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("r.png");
            let p = Plane::new(vals.len(), 1, vals).unwrap();
            store_plane(&p, &path, PlaneFormat::Png16).unwrap();
            let q: Plane<f64> = load_plane(&path, PlaneFormat::Png16).unwrap();
            for (a, b) in p.samples().iter().zip(q.samples()) {
                prop_assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
            }
        }
    }
}
