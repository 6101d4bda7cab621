//! PSNR, CPSNR and circular angle RMSE, plus the per-scene evaluation report.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::imagecore::{Color, Plane, PolarizationStack};
use crate::polarimetry::{compute_aop, compute_dop, stokes_from_angles, StokesImage};
use crate::scalar::Scalar;

pub const DEFAULT_BORDER: usize = 4;

/// A PSNR value; zero error is reported as `Identical` instead of infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psnr {
    Identical,
    Db(f64),
}

impl Psnr {
    fn from_mse(mse: f64, peak: f64) -> Psnr {
        if mse == 0.0 {
            Psnr::Identical
        } else {
            Psnr::Db(10.0 * (peak * peak / mse).log10())
        }
    }

    /// Decibels, with `Identical` mapped to `+∞`.
    pub fn db(self) -> f64 {
        match self {
            Psnr::Identical => f64::INFINITY,
            Psnr::Db(v) => v,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Identical => f.write_str("identical"),
            Psnr::Db(v) => write!(f, "{v:.4}"),
        }
    }
}

fn region(dims: (usize, usize), border: usize) -> Result<(usize, usize, usize, usize)> {
    let (w, h) = dims;
    ensure!(
        w > 2 * border && h > 2 * border,
        "a {border}-pixel border leaves nothing of a {w}x{h} image"
    );
    Ok((border, w - border, border, h - border))
}

/// Sum of squared differences over the interior and the sample count.
fn sq_error<T: Scalar>(a: &Plane<T>, b: &Plane<T>, border: usize) -> Result<(f64, usize)> {
    ensure!(
        a.dims() == b.dims(),
        "size mismatch: {:?} vs {:?}",
        a.dims(),
        b.dims()
    );
    let (x0, x1, y0, y1) = region(a.dims(), border)?;
    let mut sum = 0.0;
    for y in y0..y1 {
        let (ra, rb) = (&a.row(y)[x0..x1], &b.row(y)[x0..x1]);
        for (p, q) in ra.iter().zip(rb) {
            let d = p.as_f64() - q.as_f64();
            sum += d * d;
        }
    }
    Ok((sum, (x1 - x0) * (y1 - y0)))
}

/// Mean squared error pooled over several plane pairs.
pub fn pooled_mse<T: Scalar>(pairs: &[(&Plane<T>, &Plane<T>)], border: usize) -> Result<f64> {
    ensure!(!pairs.is_empty(), "no planes to compare");
    let mut sum = 0.0;
    let mut n = 0;
    for (a, b) in pairs {
        let (s, c) = sq_error(a, b, border)?;
        sum += s;
        n += c;
    }
    Ok(sum / n as f64)
}

pub fn psnr<T: Scalar>(reference: &Plane<T>, test: &Plane<T>, peak: f64, border: usize) -> Result<Psnr> {
    ensure!(peak > 0.0, "peak must be positive");
    Ok(Psnr::from_mse(pooled_mse(&[(reference, test)], border)?, peak))
}

/// [`psnr`] in dB, `+∞` for identical planes.
pub fn psnr_db<T: Scalar>(reference: &Plane<T>, test: &Plane<T>, peak: f64, border: usize) -> Result<f64> {
    psnr(reference, test, peak, border).map(Psnr::db)
}

/// PSNR with the MSE pooled jointly over the three color planes.
pub fn cpsnr<T: Scalar>(
    reference: [&Plane<T>; 3],
    test: [&Plane<T>; 3],
    peak: f64,
    border: usize,
) -> Result<Psnr> {
    ensure!(peak > 0.0, "peak must be positive");
    let pairs: Vec<_> = reference.into_iter().zip(test).collect();
    Ok(Psnr::from_mse(pooled_mse(&pairs, border)?, peak))
}

fn check_angles<T: Scalar>(p: &Plane<T>) -> Result<()> {
    match p
        .samples()
        .iter()
        .find(|v| !(0.0..180.0).contains(&v.as_f64()))
    {
        Some(v) => Err(Error::contract(format!("angle {v} outside [0, 180)"))),
        None => Ok(()),
    }
}

/// Circular RMSE in degrees between AoP planes, pooled over several pairs.
/// With a mask only pixels where the mask is positive count; if no pixel
/// qualifies the result is 0.
pub fn pooled_angle_rmse<T: Scalar>(
    pairs: &[(&Plane<T>, &Plane<T>)],
    border: usize,
    masks: Option<&[&Plane<T>]>,
) -> Result<f64> {
    ensure!(!pairs.is_empty(), "no planes to compare");
    if let Some(m) = masks {
        ensure!(m.len() == pairs.len(), "one mask per plane pair required");
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (k, (a, b)) in pairs.iter().enumerate() {
        ensure!(a.dims() == b.dims(), "size mismatch: {:?} vs {:?}", a.dims(), b.dims());
        check_angles(a)?;
        check_angles(b)?;
        let mask = masks.map(|m| m[k]);
        if let Some(m) = mask {
            ensure!(m.dims() == a.dims(), "mask size mismatch");
        }
        let (x0, x1, y0, y1) = region(a.dims(), border)?;
        for y in y0..y1 {
            for x in x0..x1 {
                if mask.is_some_and(|m| m.get(x, y) <= T::zero()) {
                    continue;
                }
                let d = (a.get(x, y).as_f64() - b.get(x, y).as_f64()).abs();
                let d = d.min(180.0 - d);
                sum += d * d;
                n += 1;
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { (sum / n as f64).sqrt() })
}

pub fn angle_rmse<T: Scalar>(reference: &Plane<T>, test: &Plane<T>, border: usize) -> Result<f64> {
    pooled_angle_rmse(&[(reference, test)], border, None)
}

/// Angle RMSE restricted to pixels whose reference DoP reaches `min_dop`.
pub fn angle_rmse_masked<T: Scalar>(
    reference: &Plane<T>,
    test: &Plane<T>,
    reference_dop: &Plane<T>,
    min_dop: f64,
    border: usize,
) -> Result<f64> {
    let thr = T::lit(min_dop);
    let mask = reference_dop.map(|d| if d >= thr { T::one() } else { T::zero() });
    pooled_angle_rmse(&[(reference, test)], border, Some(&[&mask]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub peak: f64,
    pub border: usize,
    /// When set, AoP error only counts pixels whose ground-truth DoP is at
    /// least this value.
    pub aop_min_dop: Option<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            peak: 1.0,
            border: DEFAULT_BORDER,
            aop_min_dop: None,
        }
    }
}

/// Scores of one reconstruction. Color stacks report CPSNR per quantity and
/// pool the AoP error over the three colors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub i0: Psnr,
    pub i45: Psnr,
    pub i90: Psnr,
    pub i135: Psnr,
    pub s0: Psnr,
    pub s1: Psnr,
    pub s2: Psnr,
    pub dop: Psnr,
    pub aop_err: f64,
}

impl Scores {
    pub fn psnrs(&self) -> [Psnr; 8] {
        [self.i0, self.i45, self.i90, self.i135, self.s0, self.s1, self.s2, self.dop]
    }
}

struct Derived<T> {
    stokes: StokesImage<T>,
    dop: Plane<T>,
    aop: Plane<T>,
}

fn derive<T: Scalar>(stack: &PolarizationStack<T>, color: Color) -> Result<Derived<T>> {
    let stokes = stokes_from_angles(stack.angles(color)?)?;
    let dop = compute_dop(&stokes);
    let aop = compute_aop(&stokes);
    Ok(Derived { stokes, dop, aop })
}

pub fn evaluate<T: Scalar>(
    reference: &PolarizationStack<T>,
    test: &PolarizationStack<T>,
    opts: &EvalOptions,
) -> Result<Scores> {
    ensure!(
        reference.colors() == test.colors(),
        "reference and test stacks carry different channels"
    );
    ensure!(opts.peak > 0.0, "peak must be positive");
    let colors = reference.colors();
    let rd: Vec<_> = colors.iter().map(|&c| derive(reference, c)).collect::<Result<_>>()?;
    let td: Vec<_> = colors.iter().map(|&c| derive(test, c)).collect::<Result<_>>()?;
    let score = |pick: &dyn Fn(&Derived<T>) -> &Plane<T>| -> Result<Psnr> {
        let pairs: Vec<_> = rd.iter().zip(&td).map(|(r, t)| (pick(r), pick(t))).collect();
        Ok(Psnr::from_mse(pooled_mse(&pairs, opts.border)?, opts.peak))
    };
    let mut angle = [Psnr::Identical; 4];
    for (k, slot) in angle.iter_mut().enumerate() {
        let mut pairs = Vec::new();
        for &c in &colors {
            pairs.push((reference.angles(c)?[k], test.angles(c)?[k]));
        }
        *slot = Psnr::from_mse(pooled_mse(&pairs, opts.border)?, opts.peak);
    }
    let aop_pairs: Vec<_> = rd.iter().zip(&td).map(|(r, t)| (&r.aop, &t.aop)).collect();
    let aop_err = match opts.aop_min_dop {
        None => pooled_angle_rmse(&aop_pairs, opts.border, None)?,
        Some(thr) => {
            let t = T::lit(thr);
            let masks: Vec<Plane<T>> = rd
                .iter()
                .map(|r| r.dop.map(|d| if d >= t { T::one() } else { T::zero() }))
                .collect();
            let refs: Vec<&Plane<T>> = masks.iter().collect();
            pooled_angle_rmse(&aop_pairs, opts.border, Some(&refs))?
        }
    };
    Ok(Scores {
        i0: angle[0],
        i45: angle[1],
        i90: angle[2],
        i135: angle[3],
        s0: score(&|d| d.stokes.s0())?,
        s1: score(&|d| d.stokes.s1())?,
        s2: score(&|d| d.stokes.s2())?,
        dop: score(&|d| &d.dop)?,
        aop_err,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub scene: String,
    pub method: String,
    pub noise_level: String,
    pub scores: Scores,
}

pub const CSV_HEADER: [&str; 12] = [
    "scene", "method", "noise_level", "I0", "I45", "I90", "I135", "S0", "S1", "S2", "DoP", "AoP_err",
];

impl EvalReport {
    fn record(&self) -> Vec<String> {
        let mut r = vec![self.scene.clone(), self.method.clone(), self.noise_level.clone()];
        r.extend(self.scores.psnrs().iter().map(|p| p.to_string()));
        r.push(format!("{:.4}", self.scores.aop_err));
        r
    }
}

/// Per-method means over scenes, in first-appearance order. PSNR means skip
/// `Identical` entries; a method whose entries are all identical stays
/// `Identical`.
pub fn summarize(reports: &[EvalReport]) -> Vec<(String, String, Scores)> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in reports {
        let k = (r.method.clone(), r.noise_level.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(method, level)| {
            let rows: Vec<&Scores> = reports
                .iter()
                .filter(|r| r.method == method && r.noise_level == level)
                .map(|r| &r.scores)
                .collect();
            let mean = |f: &dyn Fn(&Scores) -> Psnr| {
                let v: Vec<f64> = rows
                    .iter()
                    .filter_map(|s| match f(s) {
                        Psnr::Db(d) => Some(d),
                        Psnr::Identical => None,
                    })
                    .collect();
                if v.is_empty() {
                    Psnr::Identical
                } else {
                    Psnr::Db(v.iter().sum::<f64>() / v.len() as f64)
                }
            };
            let scores = Scores {
                i0: mean(&|s| s.i0),
                i45: mean(&|s| s.i45),
                i90: mean(&|s| s.i90),
                i135: mean(&|s| s.i135),
                s0: mean(&|s| s.s0),
                s1: mean(&|s| s.s1),
                s2: mean(&|s| s.s2),
                dop: mean(&|s| s.dop),
                aop_err: rows.iter().map(|s| s.aop_err).sum::<f64>() / rows.len() as f64,
            };
            (method, level, scores)
        })
        .collect()
}

/// Writes the per-scene rows followed by one `mean` row per method.
pub fn write_csv<W: Write>(out: W, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::contract(format!("CSV output failed: {e}"));
    w.write_record(CSV_HEADER).map_err(wrap)?;
    for r in reports {
        w.write_record(r.record()).map_err(wrap)?;
    }
    for (method, level, scores) in summarize(reports) {
        let row = EvalReport {
            scene: "mean".into(),
            method,
            noise_level: level,
            scores,
        };
        w.write_record(row.record()).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::contract(format!("CSV output failed: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::add_awgn;

    fn px(v: &[f64]) -> Plane<f64> {
        Plane::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = Plane::from_fn(8, 8, |x, y| (x * y) as f64 / 64.0);
        assert_eq!(psnr(&a, &a, 1.0, 0).unwrap(), Psnr::Identical);
        let b = a.map(|v| v + 0.1);
        let Psnr::Db(db) = psnr(&a, &b, 1.0, 0).unwrap() else { panic!() };
        assert!((db - 20.0).abs() < 1e-9);
        let c = a.map(|v| v + 0.01);
        assert!((psnr_db(&a, &c, 1.0, 0).unwrap() - 40.0).abs() < 1e-9);
        assert!(psnr(&a, &Plane::zeros(4, 4), 1.0, 0).is_err());
    }

    #[test]
    fn border_is_excluded() {
        let a = Plane::<f64>::zeros(10, 10);
        let b = Plane::from_fn(10, 10, |x, y| if x < 4 || y >= 6 { 1.0 } else { 0.0 });
        assert_eq!(psnr(&a, &b, 1.0, 4).unwrap(), Psnr::Identical);
        assert!(psnr(&a, &b, 1.0, 5).is_err());
    }

    #[test]
    fn cpsnr_examples() {
        let z = Plane::<f64>::zeros(4, 4);
        assert_eq!(cpsnr([&z, &z, &z], [&z, &z, &z], 1.0, 0).unwrap(), Psnr::Identical);
        let e = Plane::filled(4, 4, 0.1);
        let db = cpsnr([&z, &z, &z], [&e, &z, &z], 1.0, 0).unwrap().db();
        assert!((db - 10.0 * (3.0f64 / 0.01).log10()).abs() < 1e-9);
        assert!((db - 24.77).abs() < 0.005);
        let same = cpsnr([&z, &z, &z], [&e, &e, &e], 1.0, 0).unwrap();
        assert_eq!(same, psnr(&z, &e, 1.0, 0).unwrap());
    }

    #[test]
    fn angle_rmse_examples() {
        let a = px(&[10.0, 170.0, 90.0]);
        assert_eq!(angle_rmse(&a, &a, 0).unwrap(), 0.0);
        assert!((angle_rmse(&px(&[179.0]), &px(&[1.0]), 0).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(angle_rmse(&px(&[45.0]), &px(&[135.0]), 0).unwrap(), 90.0);
        assert!(angle_rmse(&px(&[180.0]), &px(&[0.0]), 0).is_err());
        assert!(angle_rmse(&px(&[-1.0]), &px(&[0.0]), 0).is_err());
    }

    #[test]
    fn angle_rmse_symmetric_bounded_shift_invariant() {
        let a = Plane::from_fn(16, 16, |x, y| ((x * 37 + y * 11) % 180) as f64 + 0.25);
        let b = Plane::from_fn(16, 16, |x, y| ((x * 5 + y * 71) % 180) as f64 + 0.5);
        let ab = angle_rmse(&a, &b, 2).unwrap();
        assert_eq!(ab, angle_rmse(&b, &a, 2).unwrap());
        assert!(ab <= 90.0);
        let shift = |p: &Plane<f64>| p.map(|v| (v + 123.0).rem_euclid(180.0));
        let shifted = angle_rmse(&shift(&a), &shift(&b), 2).unwrap();
        assert!((ab - shifted).abs() < 1e-9);
    }

    #[test]
    fn masked_angle_rmse() {
        let r = px(&[10.0, 20.0]);
        let t = px(&[10.0, 50.0]);
        let dop = px(&[0.5, 0.01]);
        assert_eq!(angle_rmse_masked(&r, &t, &dop, 0.1, 0).unwrap(), 0.0);
        assert_eq!(angle_rmse_masked(&r, &t, &dop, 0.0, 0).unwrap(), (900.0f64 / 2.0).sqrt());
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let clean = Plane::from_fn(64, 64, |x, y| 0.3 + 0.002 * (x + y) as f64);
        let mut last = f64::INFINITY;
        for (k, sigma) in [0.01, 0.03, 0.1].into_iter().enumerate() {
            let db = psnr_db(&clean, &add_awgn(&clean, sigma, 7 + k as u64), 1.0, 4).unwrap();
            assert!(db < last);
            last = db;
        }
    }

    fn report(method: &str, s0: f64) -> EvalReport {
        let p = Psnr::Db(s0);
        EvalReport {
            scene: "a".into(),
            method: method.into(),
            noise_level: "high".into(),
            scores: Scores { i0: p, i45: p, i90: p, i135: p, s0: p, s1: p, s2: p, dop: Psnr::Identical, aop_err: 1.5 },
        }
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[report("x", 30.0), report("y", 20.0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "scene,method,noise_level,I0,I45,I90,I135,S0,S1,S2,DoP,AoP_err");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "a,x,high,30.0000,30.0000,30.0000,30.0000,30.0000,30.0000,30.0000,identical,1.5000");
        assert!(lines[3].starts_with("mean,x,high,30.0000"));
    }

    #[test]
    fn evaluate_identical_and_color() {
        let planes = [0.1, 0.2, 0.3, 0.4].map(|v| Plane::from_fn(16, 16, |x, _| v + 0.01 * x as f64));
        let s = PolarizationStack::mono(planes).unwrap();
        let sc = evaluate(&s, &s, &EvalOptions::default()).unwrap();
        assert!(sc.psnrs().iter().all(|p| *p == Psnr::Identical));
        assert_eq!(sc.aop_err, 0.0);
        let noisy = s.map_planes(|_, p| p.map(|v| v + 0.01));
        let sc = evaluate(&s, &noisy, &EvalOptions::default()).unwrap();
        assert!((sc.i0.db() - 40.0).abs() < 1e-9);
        assert!((sc.s0.db() - 40.0 + 20.0 * 2f64.log10()).abs() < 1e-9);
        assert_eq!(sc.s1, Psnr::Identical);
    }
}
