//! Pixel kernels shared by the demosaickers: box means, guided filters,
//! lattice interpolation and the directional estimate blend.

use crate::imagecore::Plane;
use crate::scalar::Scalar;

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Mirror index without repeating the edge sample (`-1 → 1`), which keeps
/// the parity of 2-periodic mosaics intact.
#[inline]
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let p = 2 * (n as isize - 1);
    let m = i.rem_euclid(p);
    (if m >= n as isize { p - m } else { m }) as usize
}

/// Mean over the `(2r+1)²` window with replicated borders.
pub(crate) fn box_mean<T: Scalar>(src: &[T], w: usize, h: usize, r: usize) -> Vec<T> {
    let mut horiz = vec![T::zero(); w * h];
    let ri = r as isize;
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut horiz[y * w..(y + 1) * w];
        let mut s = T::zero();
        for k in -ri..=ri {
            s += row[clamp_index(k, w)];
        }
        out[0] = s;
        for x in 1..w {
            let xi = x as isize;
            s += row[clamp_index(xi + ri, w)] - row[clamp_index(xi - ri - 1, w)];
            out[x] = s;
        }
    }
    let mut out = vec![T::zero(); w * h];
    let norm = T::one() / T::from_count((2 * r + 1) * (2 * r + 1));
    let mut col = vec![T::zero(); w];
    for k in -ri..=ri {
        let y = clamp_index(k, h);
        for (c, v) in col.iter_mut().zip(&horiz[y * w..(y + 1) * w]) {
            *c += *v;
        }
    }
    out[..w].iter_mut().zip(&col).for_each(|(o, c)| *o = *c * norm);
    for y in 1..h {
        let yi = y as isize;
        let add = clamp_index(yi + ri, h);
        let sub = clamp_index(yi - ri - 1, h);
        for x in 0..w {
            col[x] += horiz[add * w + x] - horiz[sub * w + x];
            out[y * w + x] = col[x] * norm;
        }
    }
    out
}

/// Guided filter of `p` against `guide`. With a mask, window statistics only
/// use observed pixels (ratio of box filters) and windows without any
/// observation do not contribute coefficients.
pub(crate) fn guided<T: Scalar>(
    p: &Plane<T>,
    guide: &Plane<T>,
    mask: Option<&Plane<T>>,
    radius: usize,
    eps: f64,
) -> Plane<T> {
    let (w, h) = p.dims();
    let n = w * h;
    // Work on offsets from one sample so flat inputs stay exactly flat.
    let (p0, g0) = match mask {
        None => (p.samples()[0], guide.samples()[0]),
        Some(m) => {
            let k = m.samples().iter().position(|&v| v > T::zero()).unwrap_or(0);
            (p.samples()[k], guide.samples()[k])
        }
    };
    let pv: Vec<T> = p.samples().iter().map(|&v| v - p0).collect();
    let gv: Vec<T> = guide.samples().iter().map(|&v| v - g0).collect();
    let ones = vec![T::one(); n];
    let mv: &[T] = mask.map_or(&ones, |m| m.samples());

    let prod = |f: &dyn Fn(usize) -> T| -> Vec<T> { (0..n).map(f).collect() };
    let cnt = box_mean(mv, w, h, radius);
    let s_i = box_mean(&prod(&|k| mv[k] * gv[k]), w, h, radius);
    let s_p = box_mean(&prod(&|k| mv[k] * pv[k]), w, h, radius);
    let s_ip = box_mean(&prod(&|k| mv[k] * gv[k] * pv[k]), w, h, radius);
    let s_ii = box_mean(&prod(&|k| mv[k] * gv[k] * gv[k]), w, h, radius);

    let e = T::lit(eps);
    let mut a = vec![T::zero(); n];
    let mut b = vec![T::zero(); n];
    let mut valid = vec![T::zero(); n];
    for k in 0..n {
        if cnt[k] <= T::zero() {
            continue;
        }
        let mi = s_i[k] / cnt[k];
        let mp = s_p[k] / cnt[k];
        let cov = s_ip[k] / cnt[k] - mi * mp;
        let var = (s_ii[k] / cnt[k] - mi * mi).max(T::zero());
        let ak = cov / (var + e);
        a[k] = ak;
        b[k] = mp - ak * mi;
        valid[k] = T::one();
    }
    let ma = box_mean(&a, w, h, radius);
    let mb = box_mean(&b, w, h, radius);
    let out: Vec<T> = if mask.is_some() {
        let mvalid = box_mean(&valid, w, h, radius);
        (0..n)
            .map(|k| {
                if mvalid[k] > T::zero() {
                    (ma[k] * gv[k] + mb[k]) / mvalid[k] + p0
                } else {
                    p0
                }
            })
            .collect()
    } else {
        (0..n).map(|k| ma[k] * gv[k] + mb[k] + p0).collect()
    };
    Plane::from_vec(w, h, out)
}

/// How [`lattice_interpolate`] fills pixels outside the outermost samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Beyond {
    Replicate,
    /// Continue the line through the two outermost samples.
    Linear,
}

/// Bilinear interpolation of samples on the lattice `phase + period·ℤ²`.
pub(crate) fn lattice_interpolate<T: Scalar>(
    values: &Plane<T>,
    phase: (usize, usize),
    period: (usize, usize),
    beyond: Beyond,
) -> Plane<T> {
    let (w, h) = values.dims();
    let (px, py) = phase;
    let (sx, sy) = period;
    let rows: Vec<usize> = (py..h).step_by(sy).collect();
    let cols: Vec<usize> = (px..w).step_by(sx).collect();
    let lerp = |a: T, b: T, num: usize, den: usize| a + (b - a) * (T::from_count(num) / T::from_count(den));
    // Value at `edge ± d` given the outermost sample `a` and its neighbour `b`.
    let outside = |a: T, b: T, d: usize, step: usize| match beyond {
        Beyond::Replicate => a,
        Beyond::Linear => a + (a - b) * (T::from_count(d) / T::from_count(step)),
    };

    // Horizontal pass on the observed rows.
    let mut partial = vec![T::zero(); rows.len() * w];
    for (ri, &y) in rows.iter().enumerate() {
        let out = &mut partial[ri * w..(ri + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let (first, last) = (cols[0], cols[cols.len() - 1]);
            *o = if x <= first {
                let a = values.get(first, y);
                if cols.len() > 1 {
                    outside(a, values.get(first + sx, y), first - x, sx)
                } else {
                    a
                }
            } else if x >= last {
                let a = values.get(last, y);
                if cols.len() > 1 {
                    outside(a, values.get(last - sx, y), x - last, sx)
                } else {
                    a
                }
            } else {
                let k = (x - px) / sx;
                let x1 = px + k * sx;
                if x1 == x {
                    values.get(x, y)
                } else {
                    lerp(values.get(x1, y), values.get(x1 + sx, y), x - x1, sx)
                }
            };
        }
    }
    // Vertical pass between interpolated rows.
    let mut out = vec![T::zero(); w * h];
    let last = rows.len() - 1;
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        if y <= rows[0] || y >= rows[last] {
            let (edge, inner, d) = if y <= rows[0] {
                (0, 1.min(last), rows[0] - y)
            } else {
                (last, last.saturating_sub(1), y - rows[last])
            };
            let (a, b) = (&partial[edge * w..(edge + 1) * w], &partial[inner * w..(inner + 1) * w]);
            for x in 0..w {
                dst[x] = outside(a[x], b[x], d, sy);
            }
        } else {
            let k = (y - py) / sy;
            let y1 = py + k * sy;
            let (top, bot) = (&partial[k * w..(k + 1) * w], &partial[(k + 1) * w..(k + 2) * w]);
            if y1 == y {
                dst.copy_from_slice(top);
            } else {
                for x in 0..w {
                    dst[x] = lerp(top[x], bot[x], y - y1, sy);
                }
            }
        }
    }
    Plane::from_vec(w, h, out)
}

/// Separable convolution with odd kernels and mirrored borders.
pub(crate) fn convolve_separable<T: Scalar>(src: &Plane<T>, kx: &[T], ky: &[T]) -> Plane<T> {
    let (w, h) = src.dims();
    let (rx, ry) = ((kx.len() / 2) as isize, (ky.len() / 2) as isize);
    let mut tmp = vec![T::zero(); w * h];
    for y in 0..h {
        let row = src.row(y);
        for x in 0..w {
            let mut s = T::zero();
            for (k, &c) in kx.iter().enumerate() {
                s += c * row[reflect_index(x as isize + k as isize - rx, w)];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![T::zero(); w * h];
    for y in 0..h {
        for (k, &c) in ky.iter().enumerate() {
            let yy = reflect_index(y as isize + k as isize - ry, h);
            let srow = &tmp[yy * w..(yy + 1) * w];
            for (o, &v) in out[y * w..(y + 1) * w].iter_mut().zip(srow) {
                *o += c * v;
            }
        }
    }
    Plane::from_vec(w, h, out)
}

/// Blends horizontal and vertical estimates with weights inversely
/// proportional to each estimate's gradient energy along its own direction,
/// summed over a 5×5 window.
pub(crate) fn blend_directional<T: Scalar>(hor: &Plane<T>, ver: &Plane<T>, eps: f64) -> Plane<T> {
    let (w, h) = hor.dims();
    let mut gh = vec![T::zero(); w * h];
    let mut gv = vec![T::zero(); w * h];
    let half = T::lit(0.5);
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let dx = (hor.get(clamp_index(xi + 1, w), y) - hor.get(clamp_index(xi - 1, w), y)) * half;
            let dy = (ver.get(x, clamp_index(yi + 1, h)) - ver.get(x, clamp_index(yi - 1, h))) * half;
            gh[y * w + x] = dx * dx;
            gv[y * w + x] = dy * dy;
        }
    }
    let eh = box_mean(&gh, w, h, 2);
    let ev = box_mean(&gv, w, h, 2);
    let e = T::lit(eps);
    let out = (0..w * h)
        .map(|k| {
            let (a, b) = (hor.samples()[k], ver.samples()[k]);
            // w_H ∝ 1/(ε+E_H), w_V ∝ 1/(ε+E_V)  ⇒  share of V = (ε+E_H)/(2ε+E_H+E_V).
            let share = (e + eh[k]) / (e + e + eh[k] + ev[k]);
            a + share * (b - a)
        })
        .collect();
    Plane::from_vec(w, h, out)
}
