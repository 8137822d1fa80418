//! Discrete sine transform (type I) on interior nodes.
//!
//! The 5-point Laplacian with homogeneous Dirichlet data is diagonal in this
//! basis, so `(-Δ + γ Δ² + shift)` can be inverted exactly mode by mode.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustdct::{DctPlanner, Dst1};

#[derive(Clone)]
pub(crate) struct SineBasis {
    n: usize,
    plan: Option<Arc<dyn Dst1<f64>>>,
    /// Eigenvalues of the 1D negative second difference, mode-major.
    eigen: Vec<f64>,
}

impl fmt::Debug for SineBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SineBasis").field("n", &self.n).finish()
    }
}

impl SineBasis {
    /// Basis for `n` interior nodes with spacing `h`.
    pub(crate) fn new(n: usize, h: f64) -> Self {
        let m = (n + 1) as f64;
        let eigen = (1..=n)
            .map(|p| {
                let s = (PI * p as f64 / (2.0 * m)).sin();
                4.0 * s * s / (h * h)
            })
            .collect();
        let plan = (n > 0).then(|| DctPlanner::new().plan_dst1(n));
        Self { n, plan, eigen }
    }

    pub(crate) fn len(&self) -> usize {
        self.n
    }

    pub(crate) fn eigen(&self, p: usize) -> f64 {
        self.eigen[p]
    }

    /// In place, `x[p] <- Σ_k sin(π (p+1)(k+1) / (n+1)) x[k]`.
    pub(crate) fn transform(&self, x: &mut [f64], scratch: &mut Vec<f64>) {
        if let Some(plan) = &self.plan {
            scratch.resize(plan.get_scratch_len(), 0.0);
            plan.process_dst1_with_scratch(x, scratch);
        }
    }

    /// Inverse scale: applying the transform twice multiplies by `(n+1)/2`.
    pub(crate) fn inverse_scale(&self) -> f64 {
        2.0 / (self.n + 1) as f64
    }
}

/// Solves `mass * (-Δ + γ Δ² + shift) x = rhs` on an `nx × ny` interior block
/// (row-major) in place.
pub(crate) fn solve_2d(sx: &SineBasis, sy: &SineBasis, block: &mut [f64], gamma: f64, shift: f64, mass: f64) {
    let (nx, ny) = (sx.len(), sy.len());
    debug_assert_eq!(block.len(), nx * ny);
    if nx == 0 || ny == 0 {
        return;
    }
    let mut col = vec![0.0; ny];
    let mut scratch = Vec::new();
    forward_2d(sx, sy, block, &mut col, &mut scratch);
    for q in 0..ny {
        for p in 0..nx {
            let lambda = sx.eigen(p) + sy.eigen(q);
            block[q * nx + p] /= mass * (lambda + gamma * lambda * lambda + shift);
        }
    }
    forward_2d(sx, sy, block, &mut col, &mut scratch);
    let scale = sx.inverse_scale() * sy.inverse_scale();
    block.iter_mut().for_each(|v| *v *= scale);
}

fn forward_2d(sx: &SineBasis, sy: &SineBasis, block: &mut [f64], col: &mut [f64], scratch: &mut Vec<f64>) {
    let nx = sx.len();
    for row in block.chunks_mut(nx) {
        sx.transform(row, scratch);
    }
    for c in 0..nx {
        for (r, v) in col.iter_mut().enumerate() {
            *v = block[r * nx + c];
        }
        sy.transform(col, scratch);
        for (r, v) in col.iter().enumerate() {
            block[r * nx + c] = *v;
        }
    }
}

/// 1D counterpart of [`solve_2d`].
pub(crate) fn solve_1d(s: &SineBasis, line: &mut [f64], gamma: f64, shift: f64, mass: f64) {
    let n = s.len();
    if n == 0 {
        return;
    }
    let mut scratch = Vec::new();
    s.transform(line, &mut scratch);
    for (p, v) in line.iter_mut().enumerate() {
        let lambda = s.eigen(p);
        *v /= mass * (lambda + gamma * lambda * lambda + shift);
    }
    s.transform(line, &mut scratch);
    let scale = s.inverse_scale();
    line.iter_mut().for_each(|v| *v *= scale);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neg_laplacian_2d(x: &[f64], nx: usize, ny: usize, hx: f64, hy: f64) -> Vec<f64> {
        let at = |i: isize, j: isize| {
            if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
                0.0
            } else {
                x[j as usize * nx + i as usize]
            }
        };
        let mut out = vec![0.0; nx * ny];
        for j in 0..ny as isize {
            for i in 0..nx as isize {
                let c = at(i, j);
                out[j as usize * nx + i as usize] = (2.0 * c - at(i - 1, j) - at(i + 1, j)) / (hx * hx)
                    + (2.0 * c - at(i, j - 1) - at(i, j + 1)) / (hy * hy);
            }
        }
        out
    }

    #[test]
    fn inverts_shifted_bilaplacian() {
        let (nx, ny) = (6, 4);
        let (hx, hy) = (1.0 / 7.0, 1.0 / 5.0);
        let (gamma, shift, mass) = (0.01, 3.0, 0.5);
        let x: Vec<f64> = (0..nx * ny).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.4).collect();
        let lx = neg_laplacian_2d(&x, nx, ny, hx, hy);
        let llx = neg_laplacian_2d(&lx, nx, ny, hx, hy);
        let mut rhs: Vec<f64> = (0..nx * ny)
            .map(|i| mass * (lx[i] + gamma * llx[i] + shift * x[i]))
            .collect();
        solve_2d(
            &SineBasis::new(nx, hx),
            &SineBasis::new(ny, hy),
            &mut rhs,
            gamma,
            shift,
            mass,
        );
        for (a, b) in rhs.iter().zip(&x) {
            assert!((a - b).abs() < 1e-11, "{a} vs {b}");
        }
    }

    #[test]
    fn inverts_in_one_dimension() {
        let n = 7;
        let h = 1.0 / 8.0;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.9).sin()).collect();
        let lap = |v: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let l = if i == 0 { 0.0 } else { v[i - 1] };
                    let r = if i + 1 == n { 0.0 } else { v[i + 1] };
                    (2.0 * v[i] - l - r) / (h * h)
                })
                .collect()
        };
        let lx = lap(&x);
        let llx = lap(&lx);
        let mut rhs: Vec<f64> = (0..n).map(|i| 2.0 * (lx[i] + 0.1 * llx[i] + 0.5 * x[i])).collect();
        solve_1d(&SineBasis::new(n, h), &mut rhs, 0.1, 0.5, 2.0);
        for (a, b) in rhs.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
