//! Linear Stokes parameters and the derived degree/angle of polarization.
//!
//! Conventions: `S0 = (I0 + I45 + I90 + I135) / 2`, `S1 = I0 − I90`,
//! `S2 = I45 − I135`; AoP in degrees in `[0, 180)`; DoP clamped to `[0, 1]`
//! and defined as 0 where `S0 ≤ 1e-6`.

use crate::error::{ensure, Result};
use crate::imagecore::Plane;
use crate::scalar::Scalar;

/// `S0` below this is treated as no light when computing DoP.
pub const DOP_S0_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct StokesImage<T = f64> {
    s0: Plane<T>,
    s1: Plane<T>,
    s2: Plane<T>,
}

impl<T: Scalar> StokesImage<T> {
    /// Negative `S0` samples (noise) are clamped to zero.
    pub fn new(s0: Plane<T>, s1: Plane<T>, s2: Plane<T>) -> Result<Self> {
        ensure!(
            s0.dims() == s1.dims() && s1.dims() == s2.dims(),
            "Stokes planes differ in size"
        );
        let s0 = s0.map(|v| v.max(T::zero()));
        Ok(StokesImage { s0, s1, s2 })
    }

    pub fn s0(&self) -> &Plane<T> {
        &self.s0
    }

    pub fn s1(&self) -> &Plane<T> {
        &self.s1
    }

    pub fn s2(&self) -> &Plane<T> {
        &self.s2
    }

    pub fn dims(&self) -> (usize, usize) {
        self.s0.dims()
    }
}

/// Stokes parameters from the 0°, 45°, 90°, 135° intensity planes.
pub fn stokes_from_angles<T: Scalar>(angles: [&Plane<T>; 4]) -> Result<StokesImage<T>> {
    let [i0, i45, i90, i135] = angles;
    let d = i0.dims();
    ensure!(
        angles.iter().all(|p| p.dims() == d),
        "angle planes differ in size"
    );
    let half = T::lit(0.5);
    let (w, h) = d;
    let mut s0 = Vec::with_capacity(w * h);
    let mut s1 = Vec::with_capacity(w * h);
    let mut s2 = Vec::with_capacity(w * h);
    for k in 0..w * h {
        let (a, b, c, e) = (
            i0.samples()[k],
            i45.samples()[k],
            i90.samples()[k],
            i135.samples()[k],
        );
        s0.push(((a + b + c + e) * half).max(T::zero()));
        s1.push(a - c);
        s2.push(b - e);
    }
    Ok(StokesImage {
        s0: Plane::from_vec(w, h, s0),
        s1: Plane::from_vec(w, h, s1),
        s2: Plane::from_vec(w, h, s2),
    })
}

/// Malus-law synthesis `I_θ = (S0 + S1·cos 2θ + S2·sin 2θ) / 2` for the four
/// analyzer angles.
pub fn angles_from_stokes<T: Scalar>(stokes: &StokesImage<T>) -> [Plane<T>; 4] {
    let half = T::lit(0.5);
    let (s0, s1, s2) = (&stokes.s0, &stokes.s1, &stokes.s2);
    let make = |f: &dyn Fn(T, T, T) -> T| {
        let v = s0
            .samples()
            .iter()
            .zip(s1.samples())
            .zip(s2.samples())
            .map(|((&a, &b), &c)| f(a, b, c))
            .collect();
        Plane::from_vec(s0.width(), s0.height(), v)
    };
    [
        make(&|a, b, _| (a + b) * half),
        make(&|a, _, c| (a + c) * half),
        make(&|a, b, _| (a - b) * half),
        make(&|a, _, c| (a - c) * half),
    ]
}

pub fn compute_dop<T: Scalar>(stokes: &StokesImage<T>) -> Plane<T> {
    let floor = T::lit(DOP_S0_FLOOR);
    let v = stokes
        .s0
        .samples()
        .iter()
        .zip(stokes.s1.samples())
        .zip(stokes.s2.samples())
        .map(|((&s0, &s1), &s2)| {
            if s0 > floor {
                ((s1 * s1 + s2 * s2).sqrt() / s0).min(T::one()).max(T::zero())
            } else {
                T::zero()
            }
        })
        .collect();
    Plane::from_vec(stokes.s0.width(), stokes.s0.height(), v)
}

/// Angle of polarization `½·atan2(S2, S1)` in degrees, wrapped to `[0, 180)`.
pub fn compute_aop<T: Scalar>(stokes: &StokesImage<T>) -> Plane<T> {
    let v = stokes
        .s1
        .samples()
        .iter()
        .zip(stokes.s2.samples())
        .map(|(&s1, &s2)| T::lit(aop_degrees(s1.as_f64(), s2.as_f64())))
        .collect();
    Plane::from_vec(stokes.s0.width(), stokes.s0.height(), v)
}

pub(crate) fn aop_degrees(s1: f64, s2: f64) -> f64 {
    let mut deg = 0.5 * s2.atan2(s1).to_degrees();
    if deg < 0.0 {
        deg += 180.0;
    }
    if deg >= 180.0 {
        deg -= 180.0;
    }
    deg + 0.0
}

/// 8-bit interleaved RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rgb8Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Rgb8Image {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Nearest-rank percentile of the samples (`q` in percent).
pub(crate) fn percentile(values: &mut [f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len();
    let rank = ((q / 100.0) * n as f64).ceil().clamp(1.0, n as f64) as usize;
    let (_, v, _) = values.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *v
}

/// AoP–DoP visualization: hue from AoP (cyclic over 180°), saturation from
/// DoP, value from S0 normalized by its 99th percentile.
pub fn render_aop_dop<T: Scalar>(aop: &Plane<T>, dop: &Plane<T>, s0: &Plane<T>) -> Result<Rgb8Image> {
    ensure!(
        aop.dims() == dop.dims() && dop.dims() == s0.dims(),
        "AoP, DoP and S0 planes differ in size"
    );
    let mut v: Vec<f64> = s0.samples().iter().map(|x| x.as_f64()).collect();
    let p99 = percentile(&mut v, 99.0);
    let mut data = Vec::with_capacity(aop.len() * 3);
    for k in 0..aop.len() {
        let hue = (aop.samples()[k].as_f64() / 180.0).rem_euclid(1.0);
        let sat = dop.samples()[k].as_f64().clamp(0.0, 1.0);
        let val = if p99 > 0.0 {
            (s0.samples()[k].as_f64() / p99).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let rgb = hsv_to_rgb(hue, sat, val);
        data.extend(rgb.iter().map(|c| (c * 255.0).round() as u8));
    }
    Ok(Rgb8Image {
        width: aop.width(),
        height: aop.height(),
        data,
    })
}

/// Grayscale rendering of `plane` mapping `[lo, hi]` to `[0, 255]`.
pub fn render_gray<T: Scalar>(plane: &Plane<T>, lo: f64, hi: f64) -> Rgb8Image {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let data = plane
        .samples()
        .iter()
        .flat_map(|v| {
            let g = (((v.as_f64() - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8;
            [g, g, g]
        })
        .collect();
    Rgb8Image {
        width: plane.width(),
        height: plane.height(),
        data,
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as i64 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn px(v: f64) -> Plane<f64> {
        Plane::filled(1, 1, v)
    }

    fn stokes1(s0: f64, s1: f64, s2: f64) -> StokesImage<f64> {
        StokesImage::new(px(s0), px(s1), px(s2)).unwrap()
    }

    #[test]
    fn stokes_examples() {
        let k = 1.0 / 255.0;
        let s = stokes_from_angles([&px(30.0 * k), &px(20.0 * k), &px(10.0 * k), &px(20.0 * k)]).unwrap();
        assert!((s.s0().get(0, 0) - 40.0 * k).abs() < 1e-15);
        assert!((s.s1().get(0, 0) - 20.0 * k).abs() < 1e-15);
        assert_eq!(s.s2().get(0, 0), 0.0);
        let c = stokes_from_angles([&px(0.3), &px(0.3), &px(0.3), &px(0.3)]).unwrap();
        assert_eq!((c.s0().get(0, 0), c.s1().get(0, 0), c.s2().get(0, 0)), (0.6, 0.0, 0.0));
        let s = stokes_from_angles([&px(10.0 * k), &px(30.0 * k), &px(30.0 * k), &px(10.0 * k)]).unwrap();
        assert!((s.s0().get(0, 0) - 40.0 * k).abs() < 1e-15);
        assert!((s.s1().get(0, 0) + 20.0 * k).abs() < 1e-15);
        assert!((s.s2().get(0, 0) - 20.0 * k).abs() < 1e-15);
    }

    #[test]
    fn malus_examples() {
        let k = 1.0 / 255.0;
        let i = angles_from_stokes(&stokes1(40.0 * k, 20.0 * k, 0.0));
        let want = [30.0, 20.0, 10.0, 20.0];
        for (p, w) in i.iter().zip(want) {
            assert!((p.get(0, 0) - w * k).abs() < 1e-15);
        }
        for p in angles_from_stokes(&stokes1(0.5, 0.0, 0.0)) {
            assert_eq!(p.get(0, 0), 0.25);
        }
    }

    #[test]
    fn dop_examples() {
        let k = 1.0 / 255.0;
        assert!((compute_dop(&stokes1(40.0 * k, 20.0 * k, 0.0)).get(0, 0) - 0.5).abs() < 1e-15);
        let d = compute_dop(&stokes1(40.0 * k, -20.0 * k, 20.0 * k)).get(0, 0);
        assert!((d - 800f64.sqrt() / 40.0).abs() < 1e-12);
        assert!((d - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(compute_dop(&stokes1(0.0, 0.1, 0.1)).get(0, 0), 0.0);
        assert_eq!(compute_dop(&stokes1(0.1, 0.3, 0.0)).get(0, 0), 1.0);
    }

    #[test]
    fn aop_examples() {
        assert_eq!(compute_aop(&stokes1(1.0, 20.0, 0.0)).get(0, 0), 0.0);
        assert!((compute_aop(&stokes1(1.0, -20.0, 20.0)).get(0, 0) - 67.5).abs() < 1e-12);
        assert!((compute_aop(&stokes1(1.0, 0.0, -1.0)).get(0, 0) - 135.0).abs() < 1e-12);
        assert_eq!(aop_degrees(0.0, 0.0), 0.0);
        assert!(aop_degrees(1.0, -1e-300) < 180.0);
    }

    #[test]
    fn negative_s0_clamped() {
        let s = stokes1(-1e-4, 0.0, 0.0);
        assert_eq!(s.s0().get(0, 0), 0.0);
    }

    #[test]
    fn render_examples() {
        let gray = render_aop_dop(&Plane::filled(2, 1, 30.0), &Plane::zeros(2, 1), &Plane::new(2, 1, vec![0.25, 0.5]).unwrap()).unwrap();
        for x in 0..2 {
            let [r, g, b] = gray.pixel(x, 0);
            assert!(r == g && g == b);
        }
        let red = render_aop_dop(&px(0.0), &px(1.0), &px(0.8)).unwrap();
        assert_eq!(red.pixel(0, 0), [255, 0, 0]);
        let a = render_aop_dop(&px(0.0), &px(1.0), &px(1.0)).unwrap();
        let b = render_aop_dop(&px(179.9), &px(1.0), &px(1.0)).unwrap();
        for (p, q) in a.pixel(0, 0).iter().zip(b.pixel(0, 0)) {
            assert!((*p as i32 - q as i32).abs() <= 3);
        }
        assert!(render_aop_dop(&px(0.0), &Plane::zeros(2, 1), &px(1.0)).is_err());
    }

    fn plane_strategy(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Plane<f64>> {
        proptest::collection::vec(lo..hi, n).prop_map(move |v| Plane::new(n, 1, v).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn stokes_angles_stokes_identity(s0 in plane_strategy(16, 0.0, 2.0), s1 in plane_strategy(16, -1.0, 1.0), s2 in plane_strategy(16, -1.0, 1.0)) {
            let st = StokesImage::new(s0, s1, s2).unwrap();
            let i = angles_from_stokes(&st);
            let back = stokes_from_angles([&i[0], &i[1], &i[2], &i[3]]).unwrap();
            for (a, b) in [(st.s0(), back.s0()), (st.s1(), back.s1()), (st.s2(), back.s2())] {
                for (x, y) in a.samples().iter().zip(b.samples()) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn composition_projects_onto_consistent_stacks(i in proptest::array::uniform4(plane_strategy(12, 0.0, 1.0))) {
            let refs = [&i[0], &i[1], &i[2], &i[3]];
            let once = angles_from_stokes(&stokes_from_angles(refs).unwrap());
            let twice = angles_from_stokes(&stokes_from_angles([&once[0], &once[1], &once[2], &once[3]]).unwrap());
            for (a, b) in once.iter().zip(&twice) {
                for (x, y) in a.samples().iter().zip(b.samples()) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
            // Consistent stacks are fixed points.
            for k in 0..12 {
                let lhs = once[0].samples()[k] + once[2].samples()[k];
                let rhs = once[1].samples()[k] + once[3].samples()[k];
                prop_assert!((lhs - rhs).abs() <= 1e-12);
            }
        }

        #[test]
        fn dop_aop_ranges_and_scaling(s0 in plane_strategy(20, -0.5, 2.0), s1 in plane_strategy(20, -3.0, 3.0), s2 in plane_strategy(20, -3.0, 3.0), k in 0.01f64..100.0) {
            let st = StokesImage::new(s0.clone(), s1.clone(), s2.clone()).unwrap();
            let dop = compute_dop(&st);
            let aop = compute_aop(&st);
            prop_assert!(dop.samples().iter().all(|&d| (0.0..=1.0).contains(&d)));
            prop_assert!(aop.samples().iter().all(|&a| (0.0..180.0).contains(&a)));
            let scaled = StokesImage::new(s0.map(|v| v * k), s1.map(|v| v * k), s2.map(|v| v * k)).unwrap();
            let aop_k = compute_aop(&scaled);
            for (a, b) in aop.samples().iter().zip(aop_k.samples()) {
                let d = (a - b).abs();
                prop_assert!(d.min(180.0 - d) < 1e-9);
            }
            let dop_k = compute_dop(&scaled);
            for (idx, (a, b)) in dop.samples().iter().zip(dop_k.samples()).enumerate() {
                // Skip pixels where scaling crosses the S0 floor.
                let s = st.s0().samples()[idx];
                if s > 1e-5 && s * k > 1e-5 {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }
}
