//! Spatial discretizations the solvers run on.
//!
//! The registration, image-update and path solvers are written once against
//! [`Space`]. [`Plane`] is the 2D nodal grid used for images; [`Line`] is its
//! 1D reduction, used to compare the solver against exhaustive search.
//!
//! Displacements are stored node-major with `components()` entries per node
//! and are expressed in domain units.

use crate::deformation::{EnergyBreakdown, MatchingParams};
use crate::grid::{locate, spacing, trapezoid_weights};
use crate::sine::{self, SineBasis};

/// Interpolation stencil of one displaced node: sampled value is
/// `Σ w[j] img[idx[j]]`, its derivative along displacement component `c` is
/// `Σ dw[c][j] img[idx[j]]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Stencil {
    pub idx: [usize; 4],
    pub w: [f64; 4],
    pub dw: [[f64; 4]; 2],
    pub len: usize,
}

impl Stencil {
    #[inline]
    pub fn value(&self, img: &[f64]) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.len {
            acc += self.w[j] * img[self.idx[j]];
        }
        acc
    }

    #[inline]
    pub fn derivative(&self, c: usize, img: &[f64]) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.len {
            acc += self.dw[c][j] * img[self.idx[j]];
        }
        acc
    }
}

pub trait Space: Sync {
    fn node_count(&self) -> usize;

    /// Displacement components per node.
    fn components(&self) -> usize;

    /// Quadrature weight of every node.
    fn weights(&self) -> &[f64];

    fn is_boundary(&self, node: usize) -> bool;

    /// Smallest node spacing.
    fn cell_size(&self) -> f64;

    #[doc(hidden)]
    fn stencil(&self, node: usize, disp: &[f64]) -> Stencil;

    /// `(∫|Dv|², ∫|Δv|²)`.
    fn regularizer(&self, disp: &[f64]) -> (f64, f64);

    /// Adds `scale * ∇(∫|Dv|² + γ ∫|Δv|²)` to `grad`.
    fn add_regularizer_gradient(&self, disp: &[f64], gamma: f64, scale: f64, grad: &mut [f64]);

    /// Applies the inverse of `scale * Hess(∫|Dv|² + γ∫|Δv|² + shift ∫|v|²)`
    /// on interior degrees of freedom, in place; boundary entries become zero.
    fn solve_regularizer(&self, rhs: &mut [f64], gamma: f64, shift: f64, scale: f64);

    fn dof_count(&self) -> usize {
        self.node_count() * self.components()
    }

    /// Sets the displacement of every boundary node to zero.
    fn pin_boundary(&self, disp: &mut [f64]) {
        let c = self.components();
        for node in 0..self.node_count() {
            if self.is_boundary(node) {
                disp[node * c..(node + 1) * c].iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
}

/// Uniform `width × height` nodal grid on the unit square, bilinear sampling.
#[derive(Clone, Debug)]
pub struct Plane {
    width: usize,
    height: usize,
    hx: f64,
    hy: f64,
    weights: Vec<f64>,
    sine_x: SineBasis,
    sine_y: SineBasis,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 2 && height >= 2, "plane needs at least 2x2 nodes");
        let (hx, hy) = spacing(width, height);
        Self {
            width,
            height,
            hx,
            hy,
            weights: trapezoid_weights(width, height),
            sine_x: SineBasis::new(width - 2, hx),
            sine_y: SineBasis::new(height - 2, hy),
        }
    }

    fn laplacian_at(&self, disp: &[f64], i: usize, j: usize, c: usize) -> f64 {
        let w = self.width;
        let at = |i: usize, j: usize| disp[2 * (j * w + i) + c];
        let center = at(i, j);
        (at(i + 1, j) + at(i - 1, j) - 2.0 * center) / (self.hx * self.hx)
            + (at(i, j + 1) + at(i, j - 1) - 2.0 * center) / (self.hy * self.hy)
    }
}

#[inline]
fn edge_factor(i: usize, n: usize) -> f64 {
    if i == 0 || i == n - 1 {
        0.5
    } else {
        1.0
    }
}

impl Space for Plane {
    fn node_count(&self) -> usize {
        self.width * self.height
    }

    fn components(&self) -> usize {
        2
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn is_boundary(&self, node: usize) -> bool {
        let (i, j) = (node % self.width, node / self.width);
        i == 0 || j == 0 || i == self.width - 1 || j == self.height - 1
    }

    fn cell_size(&self) -> f64 {
        self.hx.min(self.hy)
    }

    #[inline]
    fn stencil(&self, node: usize, disp: &[f64]) -> Stencil {
        let (w, h) = (self.width, self.height);
        let (i, j) = (node % w, node / w);
        let sx = i as f64 + disp[0] * (w - 1) as f64;
        let sy = j as f64 + disp[1] * (h - 1) as f64;
        let (i0, fx, in_x) = locate(sx, w);
        let (j0, fy, in_y) = locate(sy, h);
        let base = j0 * w + i0;
        let dx = if in_x { (w - 1) as f64 } else { 0.0 };
        let dy = if in_y { (h - 1) as f64 } else { 0.0 };
        Stencil {
            idx: [base, base + 1, base + w, base + w + 1],
            w: [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
            dw: [
                [-(1.0 - fy) * dx, (1.0 - fy) * dx, -fy * dx, fy * dx],
                [-(1.0 - fx) * dy, -fx * dy, (1.0 - fx) * dy, fx * dy],
            ],
            len: 4,
        }
    }

    fn regularizer(&self, disp: &[f64]) -> (f64, f64) {
        let (w, h) = (self.width, self.height);
        let (hx, hy) = (self.hx, self.hy);
        let mut dirichlet = 0.0;
        for c in 0..2 {
            for j in 0..h {
                let weight = hx * hy * edge_factor(j, h) / (hx * hx);
                for i in 0..w - 1 {
                    let d = disp[2 * (j * w + i + 1) + c] - disp[2 * (j * w + i) + c];
                    dirichlet += weight * d * d;
                }
            }
            for j in 0..h - 1 {
                for i in 0..w {
                    let weight = hx * hy * edge_factor(i, w) / (hy * hy);
                    let d = disp[2 * ((j + 1) * w + i) + c] - disp[2 * (j * w + i) + c];
                    dirichlet += weight * d * d;
                }
            }
        }
        let mut laplacian = 0.0;
        for c in 0..2 {
            for j in 1..h - 1 {
                for i in 1..w - 1 {
                    let l = self.laplacian_at(disp, i, j, c);
                    laplacian += hx * hy * l * l;
                }
            }
        }
        (dirichlet, laplacian)
    }

    fn add_regularizer_gradient(&self, disp: &[f64], gamma: f64, scale: f64, grad: &mut [f64]) {
        let (w, h) = (self.width, self.height);
        let (hx, hy) = (self.hx, self.hy);
        for c in 0..2 {
            for j in 0..h {
                let weight = 2.0 * scale * hx * hy * edge_factor(j, h) / (hx * hx);
                for i in 0..w - 1 {
                    let (a, b) = (2 * (j * w + i) + c, 2 * (j * w + i + 1) + c);
                    let g = weight * (disp[b] - disp[a]);
                    grad[b] += g;
                    grad[a] -= g;
                }
            }
            for j in 0..h - 1 {
                for i in 0..w {
                    let weight = 2.0 * scale * hx * hy * edge_factor(i, w) / (hy * hy);
                    let (a, b) = (2 * (j * w + i) + c, 2 * ((j + 1) * w + i) + c);
                    let g = weight * (disp[b] - disp[a]);
                    grad[b] += g;
                    grad[a] -= g;
                }
            }
        }
        if gamma == 0.0 {
            return;
        }
        let (ix, iy) = (1.0 / (hx * hx), 1.0 / (hy * hy));
        for c in 0..2 {
            for j in 1..h - 1 {
                for i in 1..w - 1 {
                    let q = 2.0 * scale * gamma * hx * hy * self.laplacian_at(disp, i, j, c);
                    let n = j * w + i;
                    grad[2 * n + c] -= 2.0 * q * (ix + iy);
                    grad[2 * (n - 1) + c] += q * ix;
                    grad[2 * (n + 1) + c] += q * ix;
                    grad[2 * (n - w) + c] += q * iy;
                    grad[2 * (n + w) + c] += q * iy;
                }
            }
        }
    }

    fn solve_regularizer(&self, rhs: &mut [f64], gamma: f64, shift: f64, scale: f64) {
        let (w, h) = (self.width, self.height);
        let (nx, ny) = (w - 2, h - 2);
        let mass = 2.0 * scale * self.hx * self.hy;
        let mut block = vec![0.0; nx * ny];
        for c in 0..2 {
            for j in 0..ny {
                for i in 0..nx {
                    block[j * nx + i] = rhs[2 * ((j + 1) * w + i + 1) + c];
                }
            }
            sine::solve_2d(&self.sine_x, &self.sine_y, &mut block, gamma, shift, mass);
            for j in 0..ny {
                for i in 0..nx {
                    rhs[2 * ((j + 1) * w + i + 1) + c] = block[j * nx + i];
                }
            }
        }
        self.pin_boundary(rhs);
    }
}

/// `n` nodes on `[0, 1]`, linear interpolation: the 1D reduction of [`Plane`].
#[derive(Clone, Debug)]
pub struct Line {
    n: usize,
    h: f64,
    weights: Vec<f64>,
    sine: SineBasis,
}

impl Line {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "line needs at least 2 nodes");
        let h = 1.0 / (n - 1) as f64;
        let weights = (0..n).map(|i| h * edge_factor(i, n)).collect();
        Self {
            n,
            h,
            weights,
            sine: SineBasis::new(n - 2, h),
        }
    }
}

impl Space for Line {
    fn node_count(&self) -> usize {
        self.n
    }

    fn components(&self) -> usize {
        1
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn is_boundary(&self, node: usize) -> bool {
        node == 0 || node == self.n - 1
    }

    fn cell_size(&self) -> f64 {
        self.h
    }

    #[inline]
    fn stencil(&self, node: usize, disp: &[f64]) -> Stencil {
        let s = node as f64 + disp[0] * (self.n - 1) as f64;
        let (i0, f, inside) = locate(s, self.n);
        let d = if inside { (self.n - 1) as f64 } else { 0.0 };
        Stencil {
            idx: [i0, i0 + 1, 0, 0],
            w: [1.0 - f, f, 0.0, 0.0],
            dw: [[-d, d, 0.0, 0.0], [0.0; 4]],
            len: 2,
        }
    }

    fn regularizer(&self, disp: &[f64]) -> (f64, f64) {
        let h = self.h;
        let dirichlet = disp.windows(2).map(|p| (p[1] - p[0]) * (p[1] - p[0]) / h).sum();
        let laplacian = disp
            .windows(3)
            .map(|p| {
                let l = (p[0] - 2.0 * p[1] + p[2]) / (h * h);
                h * l * l
            })
            .sum();
        (dirichlet, laplacian)
    }

    fn add_regularizer_gradient(&self, disp: &[f64], gamma: f64, scale: f64, grad: &mut [f64]) {
        let h = self.h;
        for i in 0..self.n - 1 {
            let g = 2.0 * scale * (disp[i + 1] - disp[i]) / h;
            grad[i + 1] += g;
            grad[i] -= g;
        }
        if gamma == 0.0 {
            return;
        }
        let ih2 = 1.0 / (h * h);
        for i in 1..self.n - 1 {
            let l = (disp[i - 1] - 2.0 * disp[i] + disp[i + 1]) * ih2;
            let q = 2.0 * scale * gamma * h * l;
            grad[i] -= 2.0 * q * ih2;
            grad[i - 1] += q * ih2;
            grad[i + 1] += q * ih2;
        }
    }

    fn solve_regularizer(&self, rhs: &mut [f64], gamma: f64, shift: f64, scale: f64) {
        let n = self.n;
        sine::solve_1d(&self.sine, &mut rhs[1..n - 1], gamma, shift, 2.0 * scale * self.h);
        self.pin_boundary(rhs);
    }
}

/// Interpolation weights of every displaced node, for repeated sampling
/// through one fixed displacement.
pub(crate) struct Sampler {
    idx: Vec<[usize; 4]>,
    w: Vec<[f64; 4]>,
    len: usize,
}

impl Sampler {
    pub fn new<S: Space>(space: &S, disp: &[f64]) -> Self {
        let c = space.components();
        let n = space.node_count();
        let mut idx = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        let mut len = 0;
        for node in 0..n {
            let st = space.stencil(node, &disp[node * c..(node + 1) * c]);
            let mut i4 = [st.idx[0]; 4];
            let mut w4 = [0.0; 4];
            i4[..st.len].copy_from_slice(&st.idx[..st.len]);
            w4[..st.len].copy_from_slice(&st.w[..st.len]);
            idx.push(i4);
            w.push(w4);
            len = st.len;
        }
        Self { idx, w, len }
    }

    pub fn warp(&self, img: &[f64]) -> Vec<f64> {
        self.idx
            .iter()
            .zip(&self.w)
            .map(|(i, w)| (0..self.len).map(|j| w[j] * img[i[j]]).sum())
            .collect()
    }

    pub fn warp_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for ((i, w), &xv) in self.idx.iter().zip(&self.w).zip(x) {
            for j in 0..self.len {
                out[i[j]] += w[j] * xv;
            }
        }
        out
    }
}

/// Samples `img` at every displaced node.
pub(crate) fn warp<S: Space>(space: &S, img: &[f64], disp: &[f64]) -> Vec<f64> {
    let c = space.components();
    (0..space.node_count())
        .map(|node| space.stencil(node, &disp[node * c..(node + 1) * c]).value(img))
        .collect()
}

/// `Σ_nodes w (x - y)²`.
pub(crate) fn weighted_sq_distance<S: Space>(space: &S, x: &[f64], y: &[f64]) -> f64 {
    space
        .weights()
        .iter()
        .zip(x.iter().zip(y))
        .map(|(w, (a, b))| w * (a - b) * (a - b))
        .sum()
}

pub(crate) fn matching_energy<S: Space>(
    space: &S,
    u: &[f64],
    target: &[f64],
    disp: &[f64],
    params: MatchingParams,
) -> EnergyBreakdown {
    let (dirichlet, laplacian) = space.regularizer(disp);
    let warped = warp(space, target, disp);
    let mismatch = weighted_sq_distance(space, &warped, u);
    EnergyBreakdown::new(dirichlet, laplacian, mismatch, params)
}

/// Gradient of `scale * matching_energy(..).total` with respect to the
/// displacement degrees of freedom; boundary entries are zero.
pub(crate) fn matching_gradient<S: Space>(
    space: &S,
    u: &[f64],
    target: &[f64],
    disp: &[f64],
    params: MatchingParams,
    scale: f64,
) -> Vec<f64> {
    let c = space.components();
    let mut grad = vec![0.0; space.dof_count()];
    let weights = space.weights();
    for node in 0..space.node_count() {
        let st = space.stencil(node, &disp[node * c..(node + 1) * c]);
        let r = st.value(target) - u[node];
        let coeff = scale * 2.0 * weights[node] * r / params.delta;
        for comp in 0..c {
            grad[node * c + comp] += coeff * st.derivative(comp, target);
        }
    }
    space.add_regularizer_gradient(disp, params.gamma, scale, &mut grad);
    space.pin_boundary(&mut grad);
    grad
}

/// Area average of `|∇img|²` at the nodes.
pub(crate) fn mean_squared_gradient<S: Space>(space: &S, img: &[f64]) -> f64 {
    let c = space.components();
    let zero = vec![0.0; c];
    let weights = space.weights();
    let mut acc = 0.0;
    let mut total = 0.0;
    for (node, w) in weights.iter().enumerate() {
        let st = space.stencil(node, &zero);
        let g2: f64 = (0..c).map(|k| st.derivative(k, img).powi(2)).sum();
        acc += w * g2;
        total += w;
    }
    acc / total
}
