//! Exhaustive-search ground truth for the geodesic solver on tiny 1D problems.
//!
//! Every interior displacement is restricted to `L` equispaced values in
//! `[-r, r]`. For each combination of displacements the optimal interior
//! images follow from a dense linear solve, so the quantized global minimum
//! of the path energy can be found by enumeration. The energy here is coded
//! directly from its definition and shares nothing with the solver's
//! discretization code beyond the formulas themselves.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::deformation::MatchingParams;
use crate::error::{check_positive, Error, Result};
use crate::geodesic::{solve_path, GeodesicSettings};
use crate::space::Line;

pub const MAX_NODES: usize = 9;
pub const MAX_STEPS: usize = 2;
pub const MAX_LEVELS: usize = 9;
pub const MAX_RADIUS: f64 = 0.2;
pub const MAX_SEARCH: f64 = 1e7;

/// Which first-order term the oracle minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DirichletVariant {
    /// `∫ |v'|²`, the form the solver uses.
    Displacement,
    /// `∫ |φ'|² = ∫ |1 + v'|²`.
    Deformation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Oracle1DProblem {
    /// Nodes `N` on `[0, 1]`.
    pub nodes: usize,
    /// Segments `K`.
    pub steps: usize,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub delta: f64,
    pub gamma: f64,
    /// Quantization levels `L` per interior node.
    pub levels: usize,
    /// Displacement range `r`.
    pub radius: f64,
}

impl Oracle1DProblem {
    /// Candidates per segment, `L^(N-2)`.
    pub fn segment_candidates(&self) -> f64 {
        (self.levels as f64).powi(self.nodes as i32 - 2)
    }

    /// Total candidates, `L^((N-2)K)`.
    pub fn search_size(&self) -> f64 {
        self.segment_candidates().powi(self.steps as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if !(3..=MAX_NODES).contains(&self.nodes) {
            return Err(Error::InvalidArgument(format!(
                "oracle needs 3..={MAX_NODES} nodes, got {}",
                self.nodes
            )));
        }
        if !(1..=MAX_STEPS).contains(&self.steps) {
            return Err(Error::InvalidArgument(format!(
                "oracle needs 1..={MAX_STEPS} steps, got {}",
                self.steps
            )));
        }
        if !(1..=MAX_LEVELS).contains(&self.levels) {
            return Err(Error::InvalidArgument(format!(
                "oracle needs 1..={MAX_LEVELS} quantization levels, got {}",
                self.levels
            )));
        }
        for (name, signal) in [("start", &self.start), ("end", &self.end)] {
            if signal.len() != self.nodes {
                return Err(Error::LengthMismatch {
                    expected: self.nodes,
                    actual: signal.len(),
                });
            }
            if let Some(index) = signal.iter().position(|v| !v.is_finite()) {
                log::debug!("non-finite {name} signal");
                return Err(Error::NonFiniteValue { index });
            }
        }
        MatchingParams::new(self.delta, self.gamma)?;
        check_positive("radius", self.radius)?;
        if self.radius > MAX_RADIUS {
            return Err(Error::InvalidParameter {
                name: "radius",
                value: self.radius,
            });
        }
        let size = self.search_size();
        if size > MAX_SEARCH {
            return Err(Error::SearchSpaceTooLarge {
                size,
                limit: MAX_SEARCH,
            });
        }
        Ok(())
    }

    /// The quantized displacement values, symmetric about zero.
    pub fn quantization(&self) -> Vec<f64> {
        if self.levels == 1 {
            return vec![0.0];
        }
        let span = (self.levels - 1) as f64;
        (0..self.levels)
            .map(|q| self.radius * (2.0 * q as f64 - span) / span)
            .collect()
    }

    fn h(&self) -> f64 {
        1.0 / (self.nodes - 1) as f64
    }

    fn weights(&self) -> Vec<f64> {
        let h = self.h();
        (0..self.nodes)
            .map(|i| if i == 0 || i == self.nodes - 1 { 0.5 * h } else { h })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    /// Path energy `K Σ_k W_k`.
    pub energy: f64,
    /// Displacement of every node for each segment (zero at both ends).
    pub deformations: Vec<Vec<f64>>,
    /// All `K + 1` images, endpoints included.
    pub images: Vec<Vec<f64>>,
}

/// Sampling rows and regularizer value of one segment's displacement.
struct Segment {
    rows: Vec<(usize, f64)>,
    regularizer: f64,
}

impl Segment {
    fn new(p: &Oracle1DProblem, disp: &[f64], variant: DirichletVariant) -> Self {
        let n = p.nodes;
        let h = p.h();
        let rows = (0..n)
            .map(|i| {
                let x = (i as f64 * h + disp[i]).clamp(0.0, 1.0);
                let s = x / h;
                let i0 = (s.floor() as usize).min(n - 2);
                (i0, s - i0 as f64)
            })
            .collect();
        let mut dirichlet = 0.0;
        for i in 0..n - 1 {
            let slope = (disp[i + 1] - disp[i]) / h;
            let slope = match variant {
                DirichletVariant::Displacement => slope,
                DirichletVariant::Deformation => 1.0 + slope,
            };
            dirichlet += h * slope * slope;
        }
        let mut laplacian = 0.0;
        for i in 1..n - 1 {
            let second = (disp[i - 1] - 2.0 * disp[i] + disp[i + 1]) / (h * h);
            laplacian += h * second * second;
        }
        Self {
            rows,
            regularizer: dirichlet + p.gamma * laplacian,
        }
    }

    fn sample(&self, img: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|&(i0, f)| (1.0 - f) * img[i0] + f * img[i0 + 1])
            .collect()
    }

    fn matrix(&self, n: usize) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(n, n);
        for (row, &(i0, f)) in self.rows.iter().enumerate() {
            s[(row, i0)] += 1.0 - f;
            s[(row, i0 + 1)] += f;
        }
        s
    }
}

fn decode(p: &Oracle1DProblem, quant: &[f64], mut index: usize) -> Vec<f64> {
    let mut disp = vec![0.0; p.nodes];
    for slot in disp[1..p.nodes - 1].iter_mut().rev() {
        *slot = quant[index % p.levels];
        index /= p.levels;
    }
    disp
}

/// Normal equations of the interior images for fixed segments `1..K-1`;
/// the last segment only enters the right-hand side.
struct InteriorSystem {
    factor: Option<Cholesky<f64, Dyn>>,
    rhs_fixed: DVector<f64>,
}

impl InteriorSystem {
    fn new(p: &Oracle1DProblem, leading: &[Segment], w: &[f64]) -> Self {
        let n = p.nodes;
        let blocks = p.steps - 1;
        if blocks == 0 {
            return Self {
                factor: None,
                rhs_fixed: DVector::zeros(0),
            };
        }
        let wm = DMatrix::from_diagonal(&DVector::from_column_slice(w));
        let mut a = DMatrix::zeros(blocks * n, blocks * n);
        for (m, segment) in leading.iter().enumerate().take(blocks) {
            let s = segment.matrix(n);
            let diag = s.transpose() * &wm * &s + &wm;
            a.view_mut((m * n, m * n), (n, n)).copy_from(&diag);
            if m > 0 {
                let off = -(s.transpose() * &wm);
                a.view_mut((m * n, (m - 1) * n), (n, n)).copy_from(&off);
                a.view_mut(((m - 1) * n, m * n), (n, n)).copy_from(&off.transpose());
            }
        }
        let s1 = leading[0].matrix(n);
        let mut rhs_fixed = DVector::zeros(blocks * n);
        let first = s1.transpose() * &wm * DVector::from_column_slice(&p.start);
        rhs_fixed.rows_mut(0, n).copy_from(&first);
        let factor = Cholesky::new(a).expect("the interior normal matrix is positive definite");
        Self {
            factor: Some(factor),
            rhs_fixed,
        }
    }

    fn images(&self, p: &Oracle1DProblem, last: &Segment, w: &[f64]) -> Vec<Vec<f64>> {
        let n = p.nodes;
        let mut images = vec![p.start.clone()];
        if let Some(factor) = &self.factor {
            let mut rhs = self.rhs_fixed.clone();
            let pulled = last.sample(&p.end);
            let blocks = p.steps - 1;
            for i in 0..n {
                rhs[(blocks - 1) * n + i] += w[i] * pulled[i];
            }
            let x = factor.solve(&rhs);
            images.extend(x.as_slice().chunks(n).map(|c| c.to_vec()));
        }
        images.push(p.end.clone());
        images
    }
}

fn path_value(p: &Oracle1DProblem, segments: &[&Segment], images: &[Vec<f64>], w: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (k, seg) in segments.iter().enumerate() {
        let warped = seg.sample(&images[k + 1]);
        let mismatch: f64 = warped
            .iter()
            .zip(&images[k])
            .zip(w)
            .map(|((a, b), wi)| wi * (a - b) * (a - b))
            .sum();
        sum += seg.regularizer + mismatch / p.delta;
    }
    p.steps as f64 * sum
}

/// Path energy for the given displacements with the optimal interior images.
pub fn path_energy_1d(
    p: &Oracle1DProblem,
    deformations: &[Vec<f64>],
    variant: DirichletVariant,
) -> Result<OracleResult> {
    p.validate()?;
    if deformations.len() != p.steps || deformations.iter().any(|d| d.len() != p.nodes) {
        return Err(Error::InvalidArgument(format!(
            "expected {} displacements of length {}",
            p.steps, p.nodes
        )));
    }
    let w = p.weights();
    let segments: Vec<Segment> = deformations.iter().map(|d| Segment::new(p, d, variant)).collect();
    let system = InteriorSystem::new(p, &segments[..p.steps - 1], &w);
    let images = system.images(p, &segments[p.steps - 1], &w);
    let refs: Vec<&Segment> = segments.iter().collect();
    Ok(OracleResult {
        energy: path_value(p, &refs, &images, &w),
        deformations: deformations.to_vec(),
        images,
    })
}

/// Global minimum of the path energy over all quantized displacements.
/// Ties go to the candidate enumerated first, so the result does not depend
/// on how the search is split across threads.
pub fn brute_force_geodesic_1d(p: &Oracle1DProblem, variant: DirichletVariant) -> Result<OracleResult> {
    p.validate()?;
    let quant = p.quantization();
    let w = p.weights();
    let per_segment = p.segment_candidates() as usize;
    let outer_count = per_segment.pow(p.steps as u32 - 1);

    let evaluate_outer = |outer: usize, inner_range: std::ops::Range<usize>| -> (f64, usize) {
        let mut leading = Vec::with_capacity(p.steps - 1);
        let mut rest = outer;
        for _ in 0..p.steps - 1 {
            leading.push(rest % per_segment);
            rest /= per_segment;
        }
        leading.reverse();
        let leading: Vec<Segment> = leading
            .into_iter()
            .map(|c| Segment::new(p, &decode(p, &quant, c), variant))
            .collect();
        let system = InteriorSystem::new(p, &leading, &w);
        let mut best = (f64::INFINITY, usize::MAX);
        for inner in inner_range {
            let last = Segment::new(p, &decode(p, &quant, inner), variant);
            let images = system.images(p, &last, &w);
            let mut refs: Vec<&Segment> = leading.iter().collect();
            refs.push(&last);
            let e = path_value(p, &refs, &images, &w);
            let index = outer * per_segment + inner;
            if e < best.0 {
                best = (e, index);
            }
        }
        best
    };
    let pick = |a: (f64, usize), b: (f64, usize)| {
        if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
            b
        } else {
            a
        }
    };

    const CHUNK: usize = 4096;
    let best = if outer_count > 1 {
        (0..outer_count)
            .into_par_iter()
            .map(|outer| evaluate_outer(outer, 0..per_segment))
            .reduce(|| (f64::INFINITY, usize::MAX), pick)
    } else {
        (0..per_segment.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| evaluate_outer(0, c * CHUNK..((c + 1) * CHUNK).min(per_segment)))
            .reduce(|| (f64::INFINITY, usize::MAX), pick)
    };

    let mut rest = best.1;
    let mut deformations = Vec::with_capacity(p.steps);
    for _ in 0..p.steps {
        deformations.push(decode(p, &quant, rest % per_segment));
        rest /= per_segment;
    }
    deformations.reverse();
    let result = path_energy_1d(p, &deformations, variant)?;
    log::debug!(
        "oracle searched {} candidates, minimum {:.6e}",
        p.search_size(),
        result.energy
    );
    Ok(result)
}

/// Checks that replacing `∫|v'|²` by `∫|φ'|²` only shifts the path energy by
/// the constant `K²` (each segment gains `∫ 1 = 1`) and leaves the minimizer
/// unchanged, up to exact ties.
pub fn verify_dirichlet_constant_shift(p: &Oracle1DProblem) -> bool {
    let (Ok(v), Ok(phi)) = (
        brute_force_geodesic_1d(p, DirichletVariant::Displacement),
        brute_force_geodesic_1d(p, DirichletVariant::Deformation),
    ) else {
        return false;
    };
    let shift = (p.steps * p.steps) as f64;
    let tol = 1e-9 * (1.0 + phi.energy.abs());
    if (phi.energy - v.energy - shift).abs() > tol {
        return false;
    }
    if v.deformations == phi.deformations {
        return v
            .images
            .iter()
            .flatten()
            .zip(phi.images.iter().flatten())
            .all(|(a, b)| (a - b).abs() <= 1e-12);
    }
    // Different argmins are acceptable only if they tie under either variant.
    match (
        path_energy_1d(p, &phi.deformations, DirichletVariant::Displacement),
        path_energy_1d(p, &v.deformations, DirichletVariant::Deformation),
    ) {
        (Ok(a), Ok(b)) => (a.energy - v.energy).abs() <= 1e-12 && (b.energy - phi.energy).abs() <= 1e-12,
        _ => false,
    }
}

/// The main solver run on the 1D reduction of the same problem.
/// Only single-level settings are supported here.
pub fn solve_geodesic_1d(p: &Oracle1DProblem, settings: &GeodesicSettings) -> Result<OracleResult> {
    p.validate()?;
    settings.validate()?;
    if settings.levels != 1 {
        return Err(Error::InvalidArgument("the 1D solver runs on a single level".into()));
    }
    let params = MatchingParams::new(p.delta, p.gamma)?;
    let line = Line::new(p.nodes);
    let run = solve_path(&line, &p.start, &p.end, p.steps, params, settings, None)?;
    Ok(OracleResult {
        energy: run.energy(),
        deformations: run.disps,
        images: run.images,
    })
}

/// Rounds displacements to the nearest quantization level, keeping the
/// boundary at zero.
pub fn project_to_quantization(p: &Oracle1DProblem, deformations: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let quant = p.quantization();
    deformations
        .iter()
        .map(|d| {
            d.iter()
                .enumerate()
                .map(|(i, &v)| {
                    if i == 0 || i + 1 == d.len() {
                        return 0.0;
                    }
                    *quant
                        .iter()
                        .min_by(|a, b| (*a - v).abs().total_cmp(&(*b - v).abs()))
                        .expect("at least one level")
                })
                .collect()
        })
        .collect()
}

/// `cos²` bump sampled on `n` nodes.
pub fn bump_1d(n: usize, center: f64, radius: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let r = (i as f64 / (n - 1) as f64 - center).abs();
            if r >= radius {
                0.0
            } else {
                (std::f64::consts::FRAC_PI_2 * r / radius).cos().powi(2)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(steps: usize, levels: usize, radius: f64) -> Oracle1DProblem {
        Oracle1DProblem {
            nodes: 9,
            steps,
            start: bump_1d(9, 0.375, 0.3),
            end: bump_1d(9, 0.625, 0.3),
            delta: 1e-2,
            gamma: 1e-3,
            levels,
            radius,
        }
    }

    #[test]
    fn quantization_is_symmetric_with_exact_zero() {
        let p = problem(2, 3, 0.125);
        assert_eq!(p.quantization(), vec![-0.125, 0.0, 0.125]);
        let q = problem(1, 9, 0.2).quantization();
        assert_eq!(q[4], 0.0);
        assert_eq!(q[0], -q[8]);
        assert_eq!(problem(1, 1, 0.2).quantization(), vec![0.0]);
    }

    #[test]
    fn oversized_and_invalid_problems_are_rejected() {
        let big = problem(2, 9, 0.2);
        assert!(matches!(big.validate(), Err(Error::SearchSpaceTooLarge { .. })));
        assert!(Oracle1DProblem {
            nodes: 10,
            ..problem(1, 3, 0.1)
        }
        .validate()
        .is_err());
        assert!(Oracle1DProblem {
            steps: 3,
            levels: 2,
            ..problem(1, 3, 0.1)
        }
        .validate()
        .is_err());
        assert!(problem(1, 3, 0.3).validate().is_err());
        assert!(Oracle1DProblem {
            start: vec![0.0; 8],
            ..problem(1, 3, 0.1)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn equal_signals_give_zero_energy_at_zero_displacement() {
        let mut p = problem(2, 3, 0.125);
        p.end = p.start.clone();
        let r = brute_force_geodesic_1d(&p, DirichletVariant::Displacement).unwrap();
        assert_eq!(r.energy, 0.0);
        assert!(r.deformations.iter().flatten().all(|&v| v == 0.0));
        assert!(verify_dirichlet_constant_shift(&p));
    }

    #[test]
    fn huge_delta_gives_zero_displacement_and_blend() {
        let mut p = problem(2, 3, 0.125);
        p.delta = 1e6;
        let r = brute_force_geodesic_1d(&p, DirichletVariant::Displacement).unwrap();
        assert!(r.deformations.iter().flatten().all(|&v| v == 0.0));
        for (a, (s, e)) in r.images[1].iter().zip(p.start.iter().zip(&p.end)) {
            assert!((a - 0.5 * (s + e)).abs() < 1e-12);
        }
        assert!(verify_dirichlet_constant_shift(&p));
    }

    #[test]
    fn dense_images_satisfy_stationarity() {
        // Perturbing the optimal middle image can only raise the energy.
        let p = problem(2, 3, 0.125);
        let d = vec![decode(&p, &p.quantization(), 1234), decode(&p, &p.quantization(), 777)];
        let r = path_energy_1d(&p, &d, DirichletVariant::Displacement).unwrap();
        let w = p.weights();
        let segs: Vec<Segment> = d
            .iter()
            .map(|x| Segment::new(&p, x, DirichletVariant::Displacement))
            .collect();
        let refs: Vec<&Segment> = segs.iter().collect();
        for i in 0..9 {
            for eps in [1e-4, -1e-4] {
                let mut images = r.images.clone();
                images[1][i] += eps;
                assert!(path_value(&p, &refs, &images, &w) > r.energy);
            }
        }
    }

    #[test]
    fn constant_shift_holds_on_translated_bump() {
        assert!(verify_dirichlet_constant_shift(&problem(2, 3, 0.125)));
    }

    #[test]
    fn projection_rounds_to_nearest_level() {
        let p = problem(1, 3, 0.125);
        let d = vec![vec![0.0, 0.1, -0.05, -0.07, 0.2, 0.0, 0.0, 0.01, 0.0]];
        assert_eq!(
            project_to_quantization(&p, &d),
            vec![vec![0.0, 0.125, 0.0, -0.125, 0.125, 0.0, 0.0, 0.0, 0.0]]
        );
    }

    /// With nine levels the quantization is fine enough that the solver and
    /// the exhaustive minimum agree closely.
    #[test]
    fn single_segment_oracle_brackets_solver() {
        let p = Oracle1DProblem {
            start: bump_1d(9, 0.5, 0.25),
            end: bump_1d(9, 0.5, 0.35),
            ..problem(1, 9, 0.1)
        };
        let oracle = brute_force_geodesic_1d(&p, DirichletVariant::Displacement).unwrap();
        let solver = solve_geodesic_1d(&p, &GeodesicSettings::default()).unwrap();
        let projected = path_energy_1d(
            &p,
            &project_to_quantization(&p, &solver.deformations),
            DirichletVariant::Displacement,
        )
        .unwrap();
        assert!(oracle.energy <= projected.energy);
        assert!(solver.energy <= oracle.energy);
        assert!(oracle.energy - solver.energy <= 0.02 * oracle.energy);
        assert_eq!(
            oracle.deformations[0],
            vec![0.0, -0.05, -0.1, -0.05, 0.0, 0.05, 0.1, 0.05, 0.0]
        );
    }
}
