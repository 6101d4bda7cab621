//! Two-stage BM3D denoising of a single plane.
//!
//! Stage 1 groups similar blocks of the noisy image, hard-thresholds the
//! group in a separable 3-D transform (orthonormal 2-D DCT per block, 1-D
//! Haar across blocks) and aggregates Kaiser-weighted estimates. Stage 2
//! re-matches on the stage-1 estimate and applies empirical Wiener shrinkage
//! whose gains come from the stage-1 group spectrum.
//!
//! The 3-D DC coefficient is never shrunk, so a group's mean passes through
//! both stages untouched: constants are fixed points and adding an offset
//! to the input shifts the output by the same offset. Each group is
//! transformed relative to a sample of its reference block and aggregation
//! accumulates corrections to the noisy image, which keeps both properties
//! exact up to rounding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::imagecore::Plane;
use crate::scalar::Scalar;

/// BM3D parameters. Thresholds are in normalized intensity units
/// (full scale 1.0); matching thresholds are mean squared differences per
/// pixel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm3dParams {
    pub block_size: usize,
    /// Spacing of reference blocks.
    pub step: usize,
    /// Half-width of the square search window.
    pub search_radius: usize,
    pub max_blocks_hard: usize,
    pub max_blocks_wiener: usize,
    /// Hard threshold multiplier λ (threshold is λ·σ).
    pub lambda_3d: f64,
    pub match_threshold_hard: f64,
    pub match_threshold_wiener: f64,
    pub kaiser_beta: f64,
}

impl Default for Bm3dParams {
    fn default() -> Self {
        Bm3dParams {
            block_size: 8,
            step: 3,
            search_radius: 19,
            max_blocks_hard: 16,
            max_blocks_wiener: 32,
            lambda_3d: 2.7,
            match_threshold_hard: 2500.0 / (255.0 * 255.0),
            match_threshold_wiener: 400.0 / (255.0 * 255.0),
            kaiser_beta: 2.0,
        }
    }
}

impl Bm3dParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.block_size >= 4, "block size must be at least 4");
        ensure!(self.step >= 1, "step must be at least 1");
        ensure!(
            self.max_blocks_hard.is_power_of_two() && self.max_blocks_wiener.is_power_of_two(),
            "max matched blocks must be powers of two"
        );
        ensure!(
            self.lambda_3d >= 0.0 && self.lambda_3d.is_finite(),
            "lambda must be finite and non-negative"
        );
        ensure!(
            self.match_threshold_hard >= 0.0 && self.match_threshold_wiener >= 0.0,
            "matching thresholds must be non-negative"
        );
        ensure!(self.kaiser_beta >= 0.0, "kaiser beta must be non-negative");
        Ok(())
    }
}

/// Denoises `noisy` corrupted by white Gaussian noise of standard deviation
/// `sigma`. `sigma == 0` returns the input unchanged.
///
/// Planes smaller than the block size are processed with a block as large
/// as the plane allows.
pub fn bm3d_denoise<T: Scalar>(noisy: &Plane<T>, sigma: f64, params: &Bm3dParams) -> Result<Plane<T>> {
    params.validate()?;
    ensure!(
        sigma.is_finite() && sigma >= 0.0,
        "sigma must be finite and non-negative, got {sigma}"
    );
    if sigma == 0.0 || noisy.is_empty() {
        return Ok(noisy.clone());
    }
    let bs = params.block_size.min(noisy.width()).min(noisy.height());
    let kernels = Kernels::new(bs, params.kaiser_beta);
    let basic = run_stage(noisy, None, sigma, params, &kernels);
    Ok(run_stage(noisy, Some(&basic), sigma, params, &kernels))
}

/// Only the hard-thresholding stage.
pub fn bm3d_basic_estimate<T: Scalar>(
    noisy: &Plane<T>,
    sigma: f64,
    params: &Bm3dParams,
) -> Result<Plane<T>> {
    params.validate()?;
    ensure!(sigma.is_finite() && sigma >= 0.0, "sigma must be finite and non-negative");
    if sigma == 0.0 || noisy.is_empty() {
        return Ok(noisy.clone());
    }
    let bs = params.block_size.min(noisy.width()).min(noisy.height());
    let kernels = Kernels::new(bs, params.kaiser_beta);
    Ok(run_stage(noisy, None, sigma, params, &kernels))
}

struct Kernels<T> {
    bs: usize,
    /// Orthonormal DCT-II matrix, `dct[k * bs + n]`.
    dct: Vec<T>,
    /// Its transpose, `dct_t[n * bs + k]`.
    dct_t: Vec<T>,
    kaiser: Vec<T>,
}

impl<T: Scalar> Kernels<T> {
    fn new(bs: usize, beta: f64) -> Self {
        let mut dct = Vec::with_capacity(bs * bs);
        for k in 0..bs {
            let alpha = if k == 0 {
                (1.0 / bs as f64).sqrt()
            } else {
                (2.0 / bs as f64).sqrt()
            };
            for n in 0..bs {
                let v = alpha
                    * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / (2 * bs) as f64).cos();
                dct.push(T::lit(v));
            }
        }
        let win = kaiser_window(bs, beta);
        let mut kaiser = Vec::with_capacity(bs * bs);
        for r in 0..bs {
            for c in 0..bs {
                kaiser.push(T::lit(win[r] * win[c]));
            }
        }
        let dct_t = (0..bs * bs).map(|i| dct[(i % bs) * bs + i / bs]).collect();
        Kernels {
            bs,
            dct,
            dct_t,
            kaiser,
        }
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn kaiser_window(n: usize, beta: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = bessel_i0(beta);
    (0..n)
        .map(|i| {
            let r = 2.0 * i as f64 / (n - 1) as f64 - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

/// Reference block origins along one axis: every `step`-th position plus
/// the last one, so the whole extent is covered.
fn reference_positions(n_positions: usize, step: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n_positions).step_by(step).collect();
    if v.last() != Some(&(n_positions - 1)) {
        v.push(n_positions - 1);
    }
    v
}

/// Reference rows handled together by one worker.
const BAND_ROWS: usize = 8;

struct Band<T> {
    y0: usize,
    rows: usize,
    num: Vec<T>,
    den: Vec<T>,
}

fn run_stage<T: Scalar>(
    noisy: &Plane<T>,
    basic: Option<&Plane<T>>,
    sigma: f64,
    params: &Bm3dParams,
    kernels: &Kernels<T>,
) -> Plane<T> {
    let (w, h) = noisy.dims();
    let bs = kernels.bs;
    let xs = reference_positions(w - bs + 1, params.step);
    let ys = reference_positions(h - bs + 1, params.step);
    let radius = params.search_radius;

    let bands: Vec<Band<T>> = ys
        .par_chunks(BAND_ROWS)
        .map(|band_ys| {
            let y0 = band_ys[0].saturating_sub(radius);
            let y1 = (band_ys[band_ys.len() - 1] + radius + bs).min(h);
            let mut band = Band {
                y0,
                rows: y1 - y0,
                num: vec![T::zero(); (y1 - y0) * w],
                den: vec![T::zero(); (y1 - y0) * w],
            };
            let mut worker = Worker::new(noisy, basic, sigma, params, kernels);
            process_band(&mut worker, band_ys, &xs, &mut band);
            band
        })
        .collect();

    let mut num = vec![T::zero(); w * h];
    let mut den = vec![T::zero(); w * h];
    for band in &bands {
        let off = band.y0 * w;
        for i in 0..band.rows * w {
            num[off + i] += band.num[i];
            den[off + i] += band.den[i];
        }
    }
    let out: Vec<T> = noisy
        .samples()
        .iter()
        .zip(num.iter().zip(&den))
        .map(|(&z, (&n, &d))| if d > T::zero() { z + n / d } else { z })
        .collect();
    Plane::from_vec(w, h, out)
}

/// Runs every reference block of a band. The loop is instantiated with a
/// compile-time block size for the default 8×8 blocks, and on x86-64 with
/// AVX2 once more with wider vectors. Lanes never mix, so every variant
/// gives bit-identical output.
fn process_band<T: Scalar>(worker: &mut Worker<'_, T>, ys: &[usize], xs: &[usize], band: &mut Band<T>) {
    let fixed = worker.kernels.bs == 8;
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: AVX2 support was just verified.
            unsafe {
                if fixed {
                    process_band_avx2::<T, 8>(worker, ys, xs, band);
                } else {
                    process_band_avx2::<T, 0>(worker, ys, xs, band);
                }
            }
            return;
        }
    }
    if fixed {
        process_band_portable::<T, 8>(worker, ys, xs, band);
    } else {
        process_band_portable::<T, 0>(worker, ys, xs, band);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn process_band_avx2<T: Scalar, const B: usize>(
    worker: &mut Worker<'_, T>,
    ys: &[usize],
    xs: &[usize],
    band: &mut Band<T>,
) {
    process_band_portable::<T, B>(worker, ys, xs, band);
}

/// `B == 0` reads the block size at run time.
#[inline(always)]
fn process_band_portable<T: Scalar, const B: usize>(
    worker: &mut Worker<'_, T>,
    ys: &[usize],
    xs: &[usize],
    band: &mut Band<T>,
) {
    let bs = if B == 0 { worker.kernels.bs } else { B };
    for &ry in ys {
        for &rx in xs {
            worker.process(bs, rx, ry, band);
        }
    }
}

struct Worker<'a, T> {
    noisy: &'a Plane<T>,
    basic: Option<&'a Plane<T>>,
    kernels: &'a Kernels<T>,
    sigma: T,
    sigma2: T,
    threshold: T,
    max_blocks: usize,
    tau: T,
    radius: usize,
    matches: Vec<(T, usize, usize)>,
    reference: Vec<T>,
    dist: Vec<T>,
    group: Vec<T>,
    group_basic: Vec<T>,
    scratch: Vec<T>,
    tmp: Vec<T>,
    est: Vec<T>,
}

impl<'a, T: Scalar> Worker<'a, T> {
    fn new(
        noisy: &'a Plane<T>,
        basic: Option<&'a Plane<T>>,
        sigma: f64,
        params: &Bm3dParams,
        kernels: &'a Kernels<T>,
    ) -> Self {
        let bs2 = kernels.bs * kernels.bs;
        let (max_blocks, tau) = match basic {
            None => (params.max_blocks_hard, params.match_threshold_hard),
            Some(_) => (params.max_blocks_wiener, params.match_threshold_wiener),
        };
        Worker {
            noisy,
            basic,
            kernels,
            sigma: T::lit(sigma),
            sigma2: T::lit(sigma * sigma),
            threshold: T::lit(params.lambda_3d * sigma),
            max_blocks,
            tau: T::lit(tau * bs2 as f64),
            radius: params.search_radius,
            matches: Vec::with_capacity(max_blocks + 1),
            reference: vec![T::zero(); bs2],
            dist: vec![T::zero(); 2 * params.search_radius + 1],
            group: vec![T::zero(); max_blocks * bs2],
            group_basic: vec![T::zero(); max_blocks * bs2],
            scratch: vec![T::zero(); max_blocks * bs2],
            tmp: vec![T::zero(); bs2],
            est: vec![T::zero(); bs2],
        }
    }

    #[inline(always)]
    fn process(&mut self, bs: usize, rx: usize, ry: usize, band: &mut Band<T>) {
        let bs2 = bs * bs;
        let image = self.basic.unwrap_or(self.noisy);
        self.find_matches(bs, image, rx, ry);
        let n = prev_power_of_two(self.matches.len());
        let shift = self.noisy.get(rx, ry);

        for i in 0..n {
            let (_, x, y) = self.matches[i];
            dct2(
                self.noisy,
                x,
                y,
                shift,
                self.kernels,
                bs,
                &mut self.tmp,
                &mut self.group[i * bs2..(i + 1) * bs2],
            );
        }
        haar_forward(&mut self.group[..n * bs2], n, bs2, &mut self.scratch);

        let weight = match self.basic {
            None => {
                let mut kept = 1usize;
                for c in self.group[1..n * bs2].iter_mut() {
                    if c.abs() <= self.threshold {
                        *c = T::zero();
                    } else {
                        kept += 1;
                    }
                }
                T::one() / (self.sigma2 * T::from_count(kept))
            }
            Some(basic) => {
                for i in 0..n {
                    let (_, x, y) = self.matches[i];
                    dct2(
                        basic,
                        x,
                        y,
                        shift,
                        self.kernels,
                        bs,
                        &mut self.tmp,
                        &mut self.group_basic[i * bs2..(i + 1) * bs2],
                    );
                }
                haar_forward(&mut self.group_basic[..n * bs2], n, bs2, &mut self.scratch);
                let mut energy = T::one();
                for (c, &b) in self.group[1..n * bs2]
                    .iter_mut()
                    .zip(&self.group_basic[1..n * bs2])
                {
                    let b2 = b * b;
                    let gain = b2 / (b2 + self.sigma2);
                    *c *= gain;
                    energy += gain * gain;
                }
                T::one() / (self.sigma2 * energy)
            }
        };
        debug_assert!(self.sigma > T::zero());

        haar_inverse(&mut self.group[..n * bs2], n, bs2, &mut self.scratch);
        let w = self.noisy.width();
        for i in 0..n {
            let (_, x, y) = self.matches[i];
            idct2(
                &self.group[i * bs2..(i + 1) * bs2],
                self.kernels,
                bs,
                &mut self.tmp,
                &mut self.est,
            );
            for r in 0..bs {
                let row = (y + r - band.y0) * w + x;
                let src = &self.noisy.row(y + r)[x..x + bs];
                for c in 0..bs {
                    let k = weight * self.kernels.kaiser[r * bs + c];
                    let d = self.est[r * bs + c] + shift - src[c];
                    band.num[row + c] += k * d;
                    band.den[row + c] += k;
                }
            }
        }
    }

    /// Fills `matches` with up to `max_blocks` blocks closest to the
    /// reference, the reference itself first.
    #[inline(always)]
    fn find_matches(&mut self, bs: usize, image: &Plane<T>, rx: usize, ry: usize) {
        let (w, h) = image.dims();
        let x_lo = rx.saturating_sub(self.radius);
        let x_hi = (rx + self.radius).min(w - bs);
        let y_lo = ry.saturating_sub(self.radius);
        let y_hi = (ry + self.radius).min(h - bs);
        let data = image.samples();
        for r in 0..bs {
            let src = &data[(ry + r) * w + rx..(ry + r) * w + rx + bs];
            self.reference[r * bs..(r + 1) * bs].copy_from_slice(src);
        }
        let n = x_hi - x_lo + 1;
        self.matches.clear();
        self.matches.push((T::zero(), rx, ry));
        for y in y_lo..=y_hi {
            candidate_distances(&self.reference, bs, data, w, y, x_lo, &mut self.dist[..n]);
            for (i, &dist) in self.dist[..n].iter().enumerate() {
                let x = x_lo + i;
                if x == rx && y == ry {
                    continue;
                }
                if self.matches.len() == self.max_blocks {
                    if dist >= self.matches[self.max_blocks - 1].0 {
                        continue;
                    }
                    self.matches.pop();
                } else if dist > self.tau {
                    continue;
                }
                let pos = self.matches.partition_point(|m| m.0 <= dist);
                self.matches.insert(pos, (dist, x, y));
            }
        }
    }
}

/// Squared distances between `reference` and the blocks whose top-left
/// corners are `(x0 .. x0 + out.len(), y)`. Each lane sums in the same order
/// on every code path, so results do not depend on the CPU.
#[inline(always)]
fn candidate_distances<T: Scalar>(reference: &[T], bs: usize, data: &[T], w: usize, y: usize, x0: usize, out: &mut [T]) {
    let n = out.len();
    out.fill(T::zero());
    for r in 0..bs {
        let row = &data[(y + r) * w + x0..(y + r) * w + x0 + n + bs - 1];
        for c in 0..bs {
            let v = reference[r * bs + c];
            for (o, &s) in out.iter_mut().zip(&row[c..c + n]) {
                let d = v - s;
                *o += d * d;
            }
        }
    }
}

fn prev_power_of_two(n: usize) -> usize {
    debug_assert!(n >= 1);
    1 << (usize::BITS - 1 - n.leading_zeros())
}

/// Forward 2-D DCT of the block at `(x, y)` minus `shift`.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn dct2<T: Scalar>(
    src: &Plane<T>,
    x: usize,
    y: usize,
    shift: T,
    k: &Kernels<T>,
    bs: usize,
    tmp: &mut [T],
    out: &mut [T],
) {
    // tmp = C · (B − shift)
    for (t, cu) in tmp.chunks_exact_mut(bs).zip(k.dct.chunks_exact(bs)) {
        t.fill(T::zero());
        for (r, &cur) in cu.iter().enumerate() {
            let row = &src.row(y + r)[x..x + bs];
            for (tv, &p) in t.iter_mut().zip(row) {
                *tv += cur * (p - shift);
            }
        }
    }
    // out = tmp · Cᵀ
    for (o, t) in out.chunks_exact_mut(bs).zip(tmp.chunks_exact(bs)) {
        o.fill(T::zero());
        for (&tv, ct) in t.iter().zip(k.dct_t.chunks_exact(bs)) {
            for (ov, &c) in o.iter_mut().zip(ct) {
                *ov += tv * c;
            }
        }
    }
}

/// Inverse 2-D DCT: `out = Cᵀ · X · C`.
#[inline(always)]
fn idct2<T: Scalar>(coef: &[T], k: &Kernels<T>, bs: usize, tmp: &mut [T], out: &mut [T]) {
    // tmp = X · C  (tmp[u][c] = Σ_v X[u][v] C[v][c])
    for (t, xu) in tmp.chunks_exact_mut(bs).zip(coef.chunks_exact(bs)) {
        t.fill(T::zero());
        for (&xv, cv) in xu.iter().zip(k.dct.chunks_exact(bs)) {
            for (tv, &c) in t.iter_mut().zip(cv) {
                *tv += xv * c;
            }
        }
    }
    // out[r][c] = Σ_u C[u][r] tmp[u][c] = Σ_u Cᵀ[r][u] tmp[u][c]
    for (o, ctr) in out.chunks_exact_mut(bs).zip(k.dct_t.chunks_exact(bs)) {
        o.fill(T::zero());
        for (&cur, t) in ctr.iter().zip(tmp.chunks_exact(bs)) {
            for (ov, &tv) in o.iter_mut().zip(t) {
                *ov += cur * tv;
            }
        }
    }
}

/// Orthonormal Haar transform along the block axis of a group of `n`
/// (power of two) blocks of `len` coefficients each.
#[inline(always)]
fn haar_forward<T: Scalar>(g: &mut [T], n: usize, len: usize, scratch: &mut [T]) {
    let s = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    let mut m = n;
    while m > 1 {
        let half = m / 2;
        for i in 0..half {
            for c in 0..len {
                let a = g[2 * i * len + c];
                let b = g[(2 * i + 1) * len + c];
                scratch[i * len + c] = (a + b) * s;
                scratch[(half + i) * len + c] = (a - b) * s;
            }
        }
        g[..m * len].copy_from_slice(&scratch[..m * len]);
        m = half;
    }
}

#[inline(always)]
fn haar_inverse<T: Scalar>(g: &mut [T], n: usize, len: usize, scratch: &mut [T]) {
    let s = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    let mut m = 2;
    while m <= n {
        let half = m / 2;
        for i in 0..half {
            for c in 0..len {
                let a = g[i * len + c];
                let d = g[(half + i) * len + c];
                scratch[2 * i * len + c] = (a + d) * s;
                scratch[(2 * i + 1) * len + c] = (a - d) * s;
            }
        }
        g[..m * len].copy_from_slice(&scratch[..m * len]);
        m *= 2;
    }
}
