//! Admissible deformations `φ = id + v` with `v = 0` on the boundary, image
//! warping, and the single-segment matching energy
//!
//! ```text
//! ∫ |Dv|² + γ |Δv|² + (1/δ) |ũ∘φ − u|²  dx
//! ```

use crate::error::{check_positive, Error, Result};
use crate::grid::{check_dims, prolongate_values, same_dims, ImageGrid};
use crate::space::{self, Plane, Space};

/// Node-major displacement field `v`, two components per node.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationField {
    width: usize,
    height: usize,
    disp: Vec<f64>,
}

impl DeformationField {
    pub fn identity(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            disp: vec![0.0; 2 * width * height],
        })
    }

    /// Interleaved `[vx, vy]` per node. Fails unless boundary displacement is
    /// exactly zero and all entries are finite.
    pub fn new(width: usize, height: usize, disp: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if disp.len() != 2 * width * height {
            return Err(Error::LengthMismatch {
                expected: 2 * width * height,
                actual: disp.len(),
            });
        }
        if let Some(index) = disp.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        let field = Self { width, height, disp };
        for j in 0..height {
            for i in 0..width {
                if field.is_boundary(i, j) && field.displacement(i, j) != [0.0, 0.0] {
                    return Err(Error::InvalidArgument(format!(
                        "nonzero boundary displacement at node ({i}, {j})"
                    )));
                }
            }
        }
        Ok(field)
    }

    /// Evaluates `v(x, y)` at interior nodes in row-major order; boundary nodes are pinned to zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(f64, f64) -> [f64; 2]) -> Result<Self> {
        let mut field = Self::identity(width, height)?;
        let (hx, hy) = (1.0 / (width - 1) as f64, 1.0 / (height - 1) as f64);
        for j in 1..height - 1 {
            for i in 1..width - 1 {
                let v = f(i as f64 * hx, j as f64 * hy);
                let n = j * width + i;
                field.disp[2 * n] = v[0];
                field.disp[2 * n + 1] = v[1];
            }
        }
        if let Some(index) = field.disp.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(field)
    }

    pub(crate) fn from_parts(width: usize, height: usize, disp: Vec<f64>) -> Self {
        debug_assert_eq!(disp.len(), 2 * width * height);
        Self { width, height, disp }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.disp
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.disp
    }

    pub fn displacement(&self, i: usize, j: usize) -> [f64; 2] {
        let n = j * self.width + i;
        [self.disp[2 * n], self.disp[2 * n + 1]]
    }

    fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.width - 1 || j == self.height - 1
    }

    /// Largest displacement component magnitude.
    pub fn sup_norm(&self) -> f64 {
        self.disp.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
    }

    /// `c · v`.
    pub fn scaled(&self, c: f64) -> Self {
        Self::from_parts(self.width, self.height, self.disp.iter().map(|v| c * v).collect())
    }

    /// `φ(p) = p + v(p)` with `v` interpolated bilinearly (clamped).
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let sx = p[0] * (self.width - 1) as f64;
        let sy = p[1] * (self.height - 1) as f64;
        let (vx, vy) = (self.component(0), self.component(1));
        [
            p[0] + crate::grid::sample_index(&vx, self.width, self.height, sx, sy),
            p[1] + crate::grid::sample_index(&vy, self.width, self.height, sx, sy),
        ]
    }

    fn component(&self, c: usize) -> Vec<f64> {
        self.disp.iter().skip(c).step_by(2).copied().collect()
    }

    /// Bilinear resampling of both components onto a finer or coarser grid.
    /// Zero boundary data stays zero because boundary nodes interpolate along
    /// boundary edges.
    pub fn prolongate(&self, target: (usize, usize)) -> Result<Self> {
        check_dims(target.0, target.1)?;
        let vx = prolongate_values(&self.component(0), self.dims(), target);
        let vy = prolongate_values(&self.component(1), self.dims(), target);
        let disp = vx.iter().zip(&vy).flat_map(|(a, b)| [*a, *b]).collect();
        let mut field = Self::from_parts(target.0, target.1, disp);
        let plane_like = |n: usize| {
            let (i, j) = (n % target.0, n / target.0);
            i == 0 || j == 0 || i == target.0 - 1 || j == target.1 - 1
        };
        for n in 0..target.0 * target.1 {
            if plane_like(n) {
                field.disp[2 * n] = 0.0;
                field.disp[2 * n + 1] = 0.0;
            }
        }
        Ok(field)
    }
}

/// Weights of the matching functional.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchingParams {
    pub delta: f64,
    pub gamma: f64,
}

impl MatchingParams {
    pub fn new(delta: f64, gamma: f64) -> Result<Self> {
        check_positive("delta", delta)?;
        check_positive("gamma", gamma)?;
        Ok(Self { delta, gamma })
    }
}

/// Parts of one matching energy evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBreakdown {
    /// `∫|Dv|²`
    pub dirichlet: f64,
    /// `∫|Δv|²`
    pub laplacian: f64,
    /// `∫(ũ∘φ − u)²`
    pub mismatch: f64,
    /// `dirichlet + γ laplacian + mismatch / δ`
    pub total: f64,
}

impl EnergyBreakdown {
    pub(crate) fn new(dirichlet: f64, laplacian: f64, mismatch: f64, params: MatchingParams) -> Self {
        Self {
            dirichlet,
            laplacian,
            mismatch,
            total: dirichlet + params.gamma * laplacian + mismatch / params.delta,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

fn check_field(u: &ImageGrid, phi: &DeformationField) -> Result<()> {
    if u.dims() != phi.dims() {
        return Err(Error::DimensionMismatch {
            left: u.dims(),
            right: phi.dims(),
        });
    }
    Ok(())
}

/// Zero displacement on a `dims` grid.
pub fn identity(dims: (usize, usize)) -> Result<DeformationField> {
    DeformationField::identity(dims.0, dims.1)
}

/// `u ∘ φ` sampled at the nodes.
pub fn warp_image(u: &ImageGrid, phi: &DeformationField) -> Result<ImageGrid> {
    check_field(u, phi)?;
    let plane = Plane::new(u.width(), u.height());
    let values = space::warp(&plane, u.values(), phi.as_slice());
    Ok(ImageGrid::from_parts(u.width(), u.height(), values))
}

/// `∫|Dv|²` from forward differences on cell edges.
pub fn dirichlet_energy(phi: &DeformationField) -> f64 {
    Plane::new(phi.width, phi.height).regularizer(&phi.disp).0
}

/// `∫|Δv|²` from the 5-point Laplacian at interior nodes.
pub fn laplacian_energy(phi: &DeformationField) -> f64 {
    Plane::new(phi.width, phi.height).regularizer(&phi.disp).1
}

/// Matching energy of `target` warped by `phi` against `u`.
pub fn matching_energy(
    u: &ImageGrid,
    target: &ImageGrid,
    phi: &DeformationField,
    delta: f64,
    gamma: f64,
) -> Result<EnergyBreakdown> {
    same_dims(u, target)?;
    check_field(u, phi)?;
    let params = MatchingParams::new(delta, gamma)?;
    let plane = Plane::new(u.width(), u.height());
    Ok(space::matching_energy(
        &plane,
        u.values(),
        target.values(),
        phi.as_slice(),
        params,
    ))
}

/// Gradient of [`matching_energy`]'s total with respect to the interior
/// displacements. Boundary entries are zero, so the result is itself an
/// admissible field.
pub fn matching_gradient(
    u: &ImageGrid,
    target: &ImageGrid,
    phi: &DeformationField,
    delta: f64,
    gamma: f64,
) -> Result<DeformationField> {
    same_dims(u, target)?;
    check_field(u, phi)?;
    let params = MatchingParams::new(delta, gamma)?;
    let plane = Plane::new(u.width(), u.height());
    let grad = space::matching_gradient(&plane, u.values(), target.values(), phi.as_slice(), params, 1.0);
    Ok(DeformationField::from_parts(u.width(), u.height(), grad))
}

/// Smallest `det Dφ` over all cells, from forward differences at each cell's
/// lower-left corner. Diagnostic only; nothing enforces positivity.
pub fn min_jacobian_determinant(phi: &DeformationField) -> f64 {
    let (w, h) = phi.dims();
    let (sx, sy) = ((w - 1) as f64, (h - 1) as f64);
    let mut min = f64::INFINITY;
    for j in 0..h - 1 {
        for i in 0..w - 1 {
            let v = phi.displacement(i, j);
            let vr = phi.displacement(i + 1, j);
            let vu = phi.displacement(i, j + 1);
            let a = 1.0 + (vr[0] - v[0]) * sx;
            let b = (vu[0] - v[0]) * sy;
            let c = (vr[1] - v[1]) * sx;
            let d = 1.0 + (vu[1] - v[1]) * sy;
            min = min.min(a * d - b * c);
        }
    }
    min
}

/// Node trajectories `x, φ_1(x), φ_2(φ_1(x)), …` of the discrete motion path.
/// Entry `[k][n]` is the position of node `n` after `k` deformations.
pub fn compose_motion_path(deformations: &[DeformationField]) -> Result<Vec<Vec<[f64; 2]>>> {
    let Some(first) = deformations.first() else {
        return Ok(Vec::new());
    };
    let (w, h) = first.dims();
    if let Some(bad) = deformations.iter().find(|d| d.dims() != (w, h)) {
        return Err(Error::DimensionMismatch {
            left: (w, h),
            right: bad.dims(),
        });
    }
    let (hx, hy) = (1.0 / (w - 1) as f64, 1.0 / (h - 1) as f64);
    let start: Vec<[f64; 2]> = (0..h)
        .flat_map(|j| (0..w).map(move |i| [i as f64 * hx, j as f64 * hy]))
        .collect();
    let mut out = vec![start];
    for phi in deformations {
        let next = out.last().unwrap().iter().map(|&p| phi.apply(p)).collect();
        out.push(next);
    }
    Ok(out)
}
