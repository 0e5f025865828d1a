//! Interpolation and finite-difference helpers on uniform grids.

use serde::{Deserialize, Serialize};

/// Weights of the 4-point Lagrange stencil for a uniform grid of `n+1`
/// nodes with spacing `h` starting at 0. Returns (first index, weights).
pub fn lagrange4(n: usize, h: f64, x: f64) -> (usize, [f64; 4]) {
    let u = x / h;
    let mut i0 = u.floor() as isize - 1;
    i0 = i0.clamp(0, n as isize - 3);
    let i0 = i0 as usize;
    let r = u - i0 as f64;
    // nodes at r = 0,1,2,3
    let w = [
        -(r - 1.0) * (r - 2.0) * (r - 3.0) / 6.0,
        r * (r - 2.0) * (r - 3.0) / 2.0,
        -r * (r - 1.0) * (r - 3.0) / 2.0,
        r * (r - 1.0) * (r - 2.0) / 6.0,
    ];
    (i0, w)
}

/// Derivative weights of the 4-point Lagrange stencil, same layout as
/// [`lagrange4`].
pub fn lagrange4_d(n: usize, h: f64, x: f64) -> (usize, [f64; 4]) {
    let (i0, _) = lagrange4(n, h, x);
    let r = x / h - i0 as f64;
    let (a, b, c, d) = (r, r - 1.0, r - 2.0, r - 3.0);
    let w = [
        -(b * c + b * d + c * d) / 6.0,
        (c * d + a * d + a * c) / 2.0,
        -(b * d + a * d + a * b) / 2.0,
        (b * c + a * c + a * b) / 6.0,
    ];
    (i0, [w[0] / h, w[1] / h, w[2] / h, w[3] / h])
}

/// Interpolate samples `f` on a uniform grid of spacing `h`.
pub fn interp1(f: &[f64], h: f64, x: f64) -> f64 {
    let (i0, w) = lagrange4(f.len() - 1, h, x);
    w[0] * f[i0] + w[1] * f[i0 + 1] + w[2] * f[i0 + 2] + w[3] * f[i0 + 3]
}

/// Derivative of [`interp1`].
pub fn interp1_d(f: &[f64], h: f64, x: f64) -> f64 {
    let (i0, w) = lagrange4_d(f.len() - 1, h, x);
    w[0] * f[i0] + w[1] * f[i0 + 1] + w[2] * f[i0 + 2] + w[3] * f[i0 + 3]
}

/// Scalar field on a uniform (x, t) tensor grid, row-major by time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub nx: usize,
    pub nt: usize,
    pub hx: f64,
    pub ht: f64,
    /// `data[k * (nx+1) + i]` is the value at (x_i, t_k).
    pub data: Vec<f64>,
}

impl Grid2 {
    pub fn zeros(nx: usize, nt: usize, hx: f64, ht: f64) -> Self {
        Grid2 {
            nx,
            nt,
            hx,
            ht,
            data: vec![0.0; (nx + 1) * (nt + 1)],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.data[k * (self.nx + 1) + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, k: usize, v: f64) {
        self.data[k * (self.nx + 1) + i] = v;
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * (self.nx + 1)..(k + 1) * (self.nx + 1)]
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.ht
    }

    /// Tensor 4-point Lagrange interpolation.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let (i0, wx) = lagrange4(self.nx, self.hx, x);
        let (k0, wt) = lagrange4(self.nt, self.ht, t);
        let mut acc = 0.0;
        for (b, wb) in wt.iter().enumerate() {
            let row = self.row(k0 + b);
            let s = wx[0] * row[i0]
                + wx[1] * row[i0 + 1]
                + wx[2] * row[i0 + 2]
                + wx[3] * row[i0 + 3];
            acc += wb * s;
        }
        acc
    }

    /// Interpolate in time only, at axial node `i`.
    pub fn eval_node(&self, i: usize, t: f64) -> f64 {
        let (k0, wt) = lagrange4(self.nt, self.ht, t);
        (0..4).map(|b| wt[b] * self.at(i, k0 + b)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Derivative along x (fourth order).
    pub fn dx(&self) -> Grid2 {
        let mut out = self.clone();
        for k in 0..=self.nt {
            let d = diff1(self.row(k), self.hx);
            out.data[k * (self.nx + 1)..(k + 1) * (self.nx + 1)].copy_from_slice(&d);
        }
        out
    }

    /// Second derivative along x (fourth order).
    pub fn dxx(&self) -> Grid2 {
        let mut out = self.clone();
        for k in 0..=self.nt {
            let d = diff2(self.row(k), self.hx);
            out.data[k * (self.nx + 1)..(k + 1) * (self.nx + 1)].copy_from_slice(&d);
        }
        out
    }

    /// Derivative along t (fourth order).
    pub fn dt(&self) -> Grid2 {
        let mut out = self.clone();
        let mut col = vec![0.0; self.nt + 1];
        for i in 0..=self.nx {
            for (k, c) in col.iter_mut().enumerate() {
                *c = self.at(i, k);
            }
            let d = diff1(&col, self.ht);
            for (k, v) in d.into_iter().enumerate() {
                out.set(i, k, v);
            }
        }
        out
    }
}

/// Fourth-order first derivative, one-sided five-point stencils at the ends.
pub fn diff1(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 5, "need at least 5 samples");
    let mut d = vec![0.0; n];
    let c = 1.0 / (12.0 * h);
    for i in 2..n - 2 {
        d[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) * c;
    }
    d[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) * c;
    d[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) * c;
    let m = n - 1;
    d[m] = (25.0 * f[m] - 48.0 * f[m - 1] + 36.0 * f[m - 2] - 16.0 * f[m - 3] + 3.0 * f[m - 4]) * c;
    d[m - 1] =
        (3.0 * f[m] + 10.0 * f[m - 1] - 18.0 * f[m - 2] + 6.0 * f[m - 3] - f[m - 4]) * c;
    d
}

/// Fourth-order second derivative, one-sided six-point stencils at the ends.
pub fn diff2(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 6, "need at least 6 samples");
    let mut d = vec![0.0; n];
    let c = 1.0 / (12.0 * h * h);
    for i in 2..n - 2 {
        d[i] = (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]) * c;
    }
    let s0 = [45.0, -154.0, 214.0, -156.0, 61.0, -10.0];
    let s1 = [10.0, -15.0, -4.0, 14.0, -6.0, 1.0];
    let m = n - 1;
    d[0] = (0..6).map(|j| s0[j] * f[j]).sum::<f64>() * c;
    d[1] = (0..6).map(|j| s1[j] * f[j]).sum::<f64>() * c;
    d[m] = (0..6).map(|j| s0[j] * f[m - j]).sum::<f64>() * c;
    d[m - 1] = (0..6).map(|j| s1[j] * f[m - j]).sum::<f64>() * c;
    d
}

/// Shape-preserving piecewise cubic Hermite interpolant.
///
/// Node slopes come from the three-point parabola; wherever the data are
/// monotone over the five surrounding nodes the slopes are clipped to the
/// Fritsch–Carlson region so the interpolant stays monotone there.
#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl MonotoneCubic {
    /// `xs` must be strictly increasing with at least two entries.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let n = xs.len();
        assert!(n >= 2 && ys.len() == n);
        let del: Vec<f64> = (0..n - 1)
            .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
            .collect();
        let mut ds = vec![0.0; n];
        if n == 2 {
            ds = vec![del[0], del[0]];
        } else {
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                ds[i] = (h1 * del[i - 1] + h0 * del[i]) / (h0 + h1);
            }
            let h0 = xs[1] - xs[0];
            let h1 = xs[2] - xs[1];
            ds[0] = ((2.0 * h0 + h1) * del[0] - h0 * del[1]) / (h0 + h1);
            let m = n - 1;
            let h0 = xs[m] - xs[m - 1];
            let h1 = xs[m - 1] - xs[m - 2];
            ds[m] = ((2.0 * h0 + h1) * del[m - 1] - h0 * del[m - 2]) / (h0 + h1);
            for i in 0..n {
                let left = if i > 0 { Some(del[i - 1]) } else { None };
                let right = if i < n - 1 { Some(del[i]) } else { None };
                let (lo, hi) = match (left, right) {
                    (Some(a), Some(b)) => (a, b),
                    (Some(a), None) => (a, a),
                    (None, Some(b)) => (b, b),
                    _ => unreachable!(),
                };
                // a chord of opposite sign one cell further out marks a smooth
                // extremum nearby, where clipping would only cost accuracy
                let wide = [i.checked_sub(2), i.checked_add(1)]
                    .into_iter()
                    .flatten()
                    .filter_map(|j| del.get(j))
                    .all(|d| d * lo >= 0.0);
                if lo * hi > 0.0 && wide {
                    let sgn = lo.signum();
                    let cap = 3.0 * lo.abs().min(hi.abs());
                    let mag = (ds[i] * sgn).clamp(0.0, cap);
                    ds[i] = sgn * mag;
                } else if lo == 0.0 || hi == 0.0 {
                    ds[i] = 0.0;
                }
            }
        }
        MonotoneCubic { xs, ys, ds }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let u = (x - self.xs[i]) / h;
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        h00 * self.ys[i] + h10 * h * self.ds[i] + h01 * self.ys[i + 1] + h11 * h * self.ds[i + 1]
    }
}

/// Least-squares line through (x, y); returns (slope, intercept, max |residual|).
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let res = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - icpt - slope * a).abs())
        .fold(0.0, f64::max);
    (slope, icpt, res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagrange_reproduces_cubics() {
        let n = 10;
        let h = 0.1;
        let f = |x: f64| 1.0 + x - 2.0 * x * x + 0.5 * x * x * x;
        for &x in &[0.0, 0.03, 0.55, 0.97, 1.0] {
            let (i0, w) = lagrange4(n, h, x);
            let v: f64 = (0..4).map(|j| w[j] * f((i0 + j) as f64 * h)).sum();
            assert!((v - f(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn lagrange_derivative_of_cubic() {
        let f: Vec<f64> = (0..=10).map(|i| (0.1 * i as f64).powi(3)).collect();
        for &x in &[0.0, 0.33, 0.71, 1.0] {
            assert!((interp1_d(&f, 0.1, x) - 3.0 * x * x).abs() < 1e-12);
        }
    }

    #[test]
    fn differences_are_fourth_order() {
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let f: Vec<f64> = (0..=n).map(|i| (i as f64 * h).sin()).collect();
            let d = diff1(&f, h);
            let d2 = diff2(&f, h);
            let e1 = (0..=n)
                .map(|i| (d[i] - (i as f64 * h).cos()).abs())
                .fold(0.0, f64::max);
            let e2 = (0..=n)
                .map(|i| (d2[i] + (i as f64 * h).sin()).abs())
                .fold(0.0, f64::max);
            (e1, e2)
        };
        let (a1, a2) = err(20);
        let (b1, b2) = err(40);
        assert!((a1 / b1).log2() > 3.7);
        assert!((a2 / b2).log2() > 3.4);
    }

    #[test]
    fn monotone_cubic_keeps_monotone_data_monotone() {
        let xs: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let ys = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 5.0, 5.1];
        let m = MonotoneCubic::new(xs, ys);
        let mut prev = m.eval(0.0);
        for k in 1..=700 {
            let v = m.eval(k as f64 * 0.01);
            assert!(v >= prev - 1e-14);
            prev = v;
        }
    }

    #[test]
    fn monotone_cubic_accurate_on_smooth_data() {
        let err = |n: usize| {
            let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin()).collect();
            let m = MonotoneCubic::new(xs, ys);
            (0..1000)
                .map(|k| {
                    let x = k as f64 / 999.0;
                    (m.eval(x) - (3.0 * x).sin()).abs()
                })
                .fold(0.0, f64::max)
        };
        assert!((err(40) / err(80)).log2() > 2.5);
    }

    #[test]
    fn fit_line_exact() {
        let (s, c, r) = fit_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((s - 2.0).abs() < 1e-14 && (c - 1.0).abs() < 1e-14 && r < 1e-14);
    }
}
