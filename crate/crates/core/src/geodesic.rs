//! Discrete geodesics: the path energy `K Σ_k W[u_{k-1}, u_k]` over `K + 1`
//! images with fixed endpoints, and its minimization by alternating between
//! per-segment registration and an exact solve for the interior images.
//!
//! Segment `k` compares `u_k ∘ φ_k` with `u_{k-1}`.

use rayon::prelude::*;

use crate::cg;
use crate::deformation::{min_jacobian_determinant, DeformationField, EnergyBreakdown, MatchingParams};
use crate::error::{Error, Result};
use crate::grid::{linear_blend, max_pyramid_depth, restrict, same_dims, ImageGrid};
use crate::matching::{register_dofs, RegistrationSettings};
use crate::space::{self, Plane, Sampler, Space};

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicSettings {
    pub registration: RegistrationSettings,
    /// Stop once an outer round lowers the path energy by less than this fraction.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Relative residual for the interior image solve.
    pub cg_tol: f64,
    /// Coarse-to-fine levels; 1 solves on the input grid only.
    pub levels: usize,
    /// Positive factor applied to the registration objective. The minimizer
    /// does not depend on it.
    pub energy_scale: f64,
}

impl Default for GeodesicSettings {
    fn default() -> Self {
        Self {
            registration: RegistrationSettings::default(),
            outer_tol: 1e-6,
            max_outer: 50,
            cg_tol: 1e-10,
            levels: 1,
            energy_scale: 1.0,
        }
    }
}

impl GeodesicSettings {
    pub fn validate(&self) -> Result<()> {
        self.registration.validate()?;
        crate::error::check_positive("outer_tol", self.outer_tol)?;
        crate::error::check_positive("max_outer", self.max_outer as f64)?;
        crate::error::check_positive("cg_tol", self.cg_tol)?;
        crate::error::check_positive("levels", self.levels as f64)?;
        crate::error::check_positive("energy_scale", self.energy_scale)
    }
}

/// `K + 1` images and the `K` deformations between them.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePath {
    images: Vec<ImageGrid>,
    deformations: Vec<DeformationField>,
    delta: f64,
    gamma: f64,
}

impl DiscretePath {
    pub fn new(images: Vec<ImageGrid>, deformations: Vec<DeformationField>, delta: f64, gamma: f64) -> Result<Self> {
        MatchingParams::new(delta, gamma)?;
        if deformations.is_empty() || images.len() != deformations.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "a path needs K >= 1 deformations and K + 1 images, got {} and {}",
                deformations.len(),
                images.len()
            )));
        }
        let dims = images[0].dims();
        for img in &images {
            same_dims(&images[0], img)?;
        }
        if let Some(d) = deformations.iter().find(|d| d.dims() != dims) {
            return Err(Error::DimensionMismatch {
                left: dims,
                right: d.dims(),
            });
        }
        Ok(Self {
            images,
            deformations,
            delta,
            gamma,
        })
    }

    /// Number of segments `K`.
    pub fn steps(&self) -> usize {
        self.deformations.len()
    }

    pub fn images(&self) -> &[ImageGrid] {
        &self.images
    }

    pub fn into_images(self) -> Vec<ImageGrid> {
        self.images
    }

    pub fn deformations(&self) -> &[DeformationField] {
        &self.deformations
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn params(&self) -> MatchingParams {
        MatchingParams {
            delta: self.delta,
            gamma: self.gamma,
        }
    }
}

/// Path energy after one outer round (round 0 is the initialization).
#[derive(Clone, Debug, PartialEq)]
pub struct OuterRecord {
    pub iteration: usize,
    pub path_energy: f64,
    pub segments: Vec<EnergyBreakdown>,
}

#[derive(Clone, Debug)]
pub struct GeodesicSolution {
    pub path: DiscretePath,
    /// Non-increasing path energies, one record per outer round.
    pub history: Vec<OuterRecord>,
}

pub(crate) struct PathRun {
    pub images: Vec<Vec<f64>>,
    pub disps: Vec<Vec<f64>>,
    pub history: Vec<OuterRecord>,
}

impl PathRun {
    pub fn energy(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.path_energy)
    }
}

pub(crate) fn segment_energies<S: Space>(
    space: &S,
    images: &[Vec<f64>],
    disps: &[Vec<f64>],
    params: MatchingParams,
) -> Vec<EnergyBreakdown> {
    (0..disps.len())
        .into_par_iter()
        .map(|k| space::matching_energy(space, &images[k], &images[k + 1], &disps[k], params))
        .collect()
}

/// `K Σ_k W_k`, summed in segment order.
pub(crate) fn total_energy(segments: &[EnergyBreakdown]) -> f64 {
    let sum: f64 = segments.iter().map(|s| s.total).sum();
    segments.len() as f64 * sum
}

/// Exact minimizer over `images[1..K]` of `Σ_k ‖S_k u_k − u_{k−1}‖²_w`, where
/// `S_k` samples through `disps[k-1]`. The normal equations are block
/// tridiagonal:
///
/// ```text
/// (S_kᵀ W S_k + W) u_k − S_kᵀ W u_{k−1} − W S_{k+1} u_{k+1} = 0
/// ```
///
/// and are solved matrix-free by CG, warm-started from the current interior.
pub(crate) fn solve_interior_images<S: Space>(
    space: &S,
    images: &[Vec<f64>],
    disps: &[Vec<f64>],
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    let steps = disps.len();
    debug_assert!(steps >= 2 && images.len() == steps + 1);
    let n = space.node_count();
    let blocks = steps - 1;
    let w = space.weights();
    let weigh = |x: &[f64]| -> Vec<f64> { x.iter().zip(w).map(|(a, b)| a * b).collect() };
    let samplers: Vec<Sampler> = disps.iter().map(|d| Sampler::new(space, d)).collect();

    let apply = |x: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; blocks * n];
        for m in 0..blocks {
            let xm = &x[m * n..(m + 1) * n];
            let phi = &samplers[m];
            let sampled = weigh(&phi.warp(xm));
            let mut acc = phi.warp_transpose(&sampled);
            for ((a, xi), wi) in acc.iter_mut().zip(xm).zip(w) {
                *a += wi * xi;
            }
            if m > 0 {
                let prev = weigh(&x[(m - 1) * n..m * n]);
                let back = phi.warp_transpose(&prev);
                acc.iter_mut().zip(&back).for_each(|(a, b)| *a -= b);
            }
            if m + 1 < blocks {
                let next = samplers[m + 1].warp(&x[(m + 1) * n..(m + 2) * n]);
                acc.iter_mut()
                    .zip(next.iter().zip(w))
                    .for_each(|(a, (s, wi))| *a -= wi * s);
            }
            out[m * n..(m + 1) * n].copy_from_slice(&acc);
        }
        out
    };

    let mut rhs = vec![0.0; blocks * n];
    let first = samplers[0].warp_transpose(&weigh(&images[0]));
    rhs[..n].iter_mut().zip(&first).for_each(|(r, f)| *r += f);
    let last = samplers[steps - 1].warp(&images[steps]);
    rhs[(blocks - 1) * n..]
        .iter_mut()
        .zip(last.iter().zip(w))
        .for_each(|(r, (s, wi))| *r += wi * s);

    let mut x: Vec<f64> = images[1..steps].iter().flatten().copied().collect();
    let iterations = cg::solve(apply, &rhs, &mut x, tol, 10 * blocks * n)?;
    log::trace!("interior image solve: {iterations} CG iterations");
    Ok(x.chunks(n).map(|c| c.to_vec()).collect())
}

/// Alternating minimization of the path energy with `start`/`end` fixed.
pub(crate) fn solve_path<S: Space>(
    space: &S,
    start: &[f64],
    end: &[f64],
    steps: usize,
    params: MatchingParams,
    settings: &GeodesicSettings,
    initial_disps: Option<Vec<Vec<f64>>>,
) -> Result<PathRun> {
    let mut images: Vec<Vec<f64>> = (0..=steps)
        .map(|k| {
            let t = k as f64 / steps as f64;
            start.iter().zip(end).map(|(a, b)| (1.0 - t) * a + t * b).collect()
        })
        .collect();
    images[0] = start.to_vec();
    images[steps] = end.to_vec();
    let mut disps = initial_disps.unwrap_or_else(|| vec![vec![0.0; space.dof_count()]; steps]);

    let mut segments = segment_energies(space, &images, &disps, params);
    let mut energy = total_energy(&segments);
    if !energy.is_finite() {
        return Err(Error::NonFiniteEnergy("path initialization"));
    }
    let mut history = vec![OuterRecord {
        iteration: 0,
        path_energy: energy,
        segments: segments.clone(),
    }];

    for iteration in 1..=settings.max_outer {
        if energy == 0.0 {
            break;
        }
        let registered = (0..steps)
            .into_par_iter()
            .map(|k| {
                register_dofs(
                    space,
                    &images[k],
                    &images[k + 1],
                    disps[k].clone(),
                    params,
                    &settings.registration,
                    settings.energy_scale,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        segments = registered.iter().map(|r| r.energy).collect();
        disps = registered.into_iter().map(|r| r.disp).collect();
        let mut next_energy = total_energy(&segments);

        if steps >= 2 {
            let interior = solve_interior_images(space, &images, &disps, settings.cg_tol)?;
            let mut candidate = images.clone();
            for (slot, img) in candidate[1..steps].iter_mut().zip(interior) {
                *slot = img;
            }
            let candidate_segments = segment_energies(space, &candidate, &disps, params);
            let candidate_energy = total_energy(&candidate_segments);
            // The solve is exact up to the CG tolerance; keep the old images if
            // rounding would make the energy go up.
            if candidate_energy <= next_energy {
                images = candidate;
                segments = candidate_segments;
                next_energy = candidate_energy;
            }
        }
        if !next_energy.is_finite() {
            return Err(Error::NonFiniteEnergy("outer iteration"));
        }
        debug_assert!(next_energy <= energy);
        history.push(OuterRecord {
            iteration,
            path_energy: next_energy,
            segments: segments.clone(),
        });
        let previous = energy;
        energy = next_energy;
        if previous - energy <= settings.outer_tol * previous {
            break;
        }
    }
    Ok(PathRun { images, disps, history })
}

fn plane_path(
    start: &ImageGrid,
    end: &ImageGrid,
    steps: usize,
    params: MatchingParams,
    settings: &GeodesicSettings,
    levels: usize,
) -> Result<PathRun> {
    let initial = if levels > 1 {
        let coarse = plane_path(&restrict(start)?, &restrict(end)?, steps, params, settings, levels - 1)?;
        let (cw, ch) = (
            crate::grid::coarse_len(start.width()),
            crate::grid::coarse_len(start.height()),
        );
        let fine = coarse
            .disps
            .into_iter()
            .map(|d| {
                DeformationField::from_parts(cw, ch, d)
                    .prolongate(start.dims())
                    .map(DeformationField::into_vec)
            })
            .collect::<Result<Vec<_>>>()?;
        Some(fine)
    } else {
        None
    };
    let plane = Plane::new(start.width(), start.height());
    solve_path(&plane, start.values(), end.values(), steps, params, settings, initial)
}

/// Discrete geodesic between `start` and `end` with `steps` segments.
///
/// Images start as the linear blend and deformations as the identity; each
/// outer round registers every segment (independently, in parallel) and then
/// solves exactly for the interior images. The endpoints are returned
/// unchanged and the recorded path energy never increases.
pub fn solve_geodesic(
    start: &ImageGrid,
    end: &ImageGrid,
    steps: usize,
    delta: f64,
    gamma: f64,
    settings: &GeodesicSettings,
) -> Result<GeodesicSolution> {
    same_dims(start, end)?;
    let params = MatchingParams::new(delta, gamma)?;
    settings.validate()?;
    if steps == 0 {
        return Err(Error::InvalidArgument("a geodesic needs at least one step".into()));
    }
    let max = max_pyramid_depth(start.width(), start.height());
    if settings.levels > max {
        return Err(Error::InvalidArgument(format!(
            "{} levels requested, a {}x{} grid supports 1..={max}",
            settings.levels,
            start.width(),
            start.height()
        )));
    }
    let run = plane_path(start, end, steps, params, settings, settings.levels)?;
    let (w, h) = start.dims();
    let mut images: Vec<ImageGrid> = run.images.into_iter().map(|v| ImageGrid::from_parts(w, h, v)).collect();
    images[0] = start.clone();
    images[steps] = end.clone();
    let deformations: Vec<DeformationField> = run
        .disps
        .into_iter()
        .map(|d| DeformationField::from_parts(w, h, d))
        .collect();
    if log::log_enabled!(log::Level::Debug) {
        let dets: Vec<String> = deformations
            .iter()
            .map(|d| format!("{:.3}", min_jacobian_determinant(d)))
            .collect();
        log::debug!(
            "geodesic K={steps} on {w}x{h}: {} outer rounds, energy {:.6e}, min det Dφ per segment [{}]",
            run.history.len() - 1,
            run.history.last().unwrap().path_energy,
            dets.join(", ")
        );
    }
    Ok(GeodesicSolution {
        path: DiscretePath {
            images,
            deformations,
            delta,
            gamma,
        },
        history: run.history,
    })
}

/// The discrete geodesic interpolation: image `k` of the geodesic from
/// `start` to `end`. `k = 0` and `k = steps` return the endpoints without
/// solving.
pub fn interpolate(
    start: &ImageGrid,
    end: &ImageGrid,
    k: usize,
    steps: usize,
    delta: f64,
    gamma: f64,
    settings: &GeodesicSettings,
) -> Result<ImageGrid> {
    if k > steps {
        return Err(Error::StepOutOfRange { k, steps });
    }
    same_dims(start, end)?;
    if k == 0 {
        return Ok(start.clone());
    }
    if k == steps {
        return Ok(end.clone());
    }
    let mut solution = solve_geodesic(start, end, steps, delta, gamma, settings)?;
    Ok(solution.path.images.swap_remove(k))
}

/// Path energy at the path's current deformations, with the per-segment parts.
pub fn path_energy(path: &DiscretePath) -> Result<(f64, Vec<EnergyBreakdown>)> {
    let (w, h) = path.images[0].dims();
    let plane = Plane::new(w, h);
    let images: Vec<Vec<f64>> = path.images.iter().map(|i| i.values().to_vec()).collect();
    let disps: Vec<Vec<f64>> = path.deformations.iter().map(|d| d.as_slice().to_vec()).collect();
    let segments = segment_energies(&plane, &images, &disps, path.params());
    Ok((total_energy(&segments), segments))
}

/// Interior images minimizing the path energy for fixed deformations
/// (`deformations.len() = K >= 2`). `delta` scales every mismatch term
/// equally and so does not change the result.
pub fn optimal_images_given_deformations(
    start: &ImageGrid,
    end: &ImageGrid,
    deformations: &[DeformationField],
    delta: f64,
    tol: f64,
) -> Result<Vec<ImageGrid>> {
    crate::error::check_positive("delta", delta)?;
    crate::error::check_positive("tol", tol)?;
    same_dims(start, end)?;
    let steps = deformations.len();
    if steps < 2 {
        return Err(Error::InvalidArgument("the interior image solve needs K >= 2".into()));
    }
    if let Some(d) = deformations.iter().find(|d| d.dims() != start.dims()) {
        return Err(Error::DimensionMismatch {
            left: start.dims(),
            right: d.dims(),
        });
    }
    let (w, h) = start.dims();
    let plane = Plane::new(w, h);
    let images = (0..=steps)
        .map(|k| linear_blend(start, end, k as f64 / steps as f64).map(ImageGrid::into_values))
        .collect::<Result<Vec<_>>>()?;
    let disps: Vec<Vec<f64>> = deformations.iter().map(|d| d.as_slice().to_vec()).collect();
    let interior = solve_interior_images(&plane, &images, &disps, tol)?;
    Ok(interior.into_iter().map(|v| ImageGrid::from_parts(w, h, v)).collect())
}

/// Discrete material derivative `K (u_k ∘ φ_k − u_{k−1})` of segment `k` (1-based).
pub fn material_derivative(path: &DiscretePath, k: usize) -> Result<ImageGrid> {
    let steps = path.steps();
    if k == 0 || k > steps {
        return Err(Error::StepOutOfRange { k, steps });
    }
    let warped = crate::deformation::warp_image(&path.images[k], &path.deformations[k - 1])?;
    let values = warped
        .values()
        .iter()
        .zip(path.images[k - 1].values())
        .map(|(a, b)| steps as f64 * (a - b))
        .collect();
    let (w, h) = warped.dims();
    Ok(ImageGrid::from_parts(w, h, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deformation::identity;
    use crate::grid::l2_distance;
    use crate::scenes;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_path_has_zero_energy() {
        let u = scenes::bump(9, 9, [0.5, 0.5], 0.3);
        let path = DiscretePath::new(vec![u.clone(); 4], vec![identity((9, 9)).unwrap(); 3], 0.1, 1e-3).unwrap();
        assert_eq!(path_energy(&path).unwrap().0, 0.0);
    }

    #[test]
    fn single_segment_energy_is_matching_energy() {
        let a = scenes::bump(9, 9, [0.4, 0.5], 0.3);
        let b = scenes::bump(9, 9, [0.6, 0.5], 0.3);
        let phi = DeformationField::from_fn(9, 9, |x, _| [0.03 * (3.0 * x).sin(), 0.01]).unwrap();
        let path = DiscretePath::new(vec![a.clone(), b.clone()], vec![phi.clone()], 0.1, 1e-3).unwrap();
        let (e, parts) = path_energy(&path).unwrap();
        let direct = crate::deformation::matching_energy(&a, &b, &phi, 0.1, 1e-3).unwrap();
        assert_eq!(e, direct.total);
        assert_eq!(parts, vec![direct]);
    }

    #[test]
    fn path_validation() {
        let u = ImageGrid::constant(5, 5, 0.0).unwrap();
        let id = identity((5, 5)).unwrap();
        assert!(DiscretePath::new(vec![u.clone()], vec![], 0.1, 1e-3).is_err());
        assert!(DiscretePath::new(vec![u.clone(); 3], vec![id.clone()], 0.1, 1e-3).is_err());
        let other = ImageGrid::constant(6, 5, 0.0).unwrap();
        assert!(DiscretePath::new(vec![u, other], vec![id], 0.1, 1e-3).is_err());
    }

    #[test]
    fn identity_deformations_give_linear_interpolation() {
        let a = scenes::disk(9, 9, [0.4, 0.5], 0.2);
        let b = scenes::square(9, 9, [0.6, 0.5], 0.2);
        for steps in [2, 3, 5] {
            let defs = vec![identity((9, 9)).unwrap(); steps];
            let interior = optimal_images_given_deformations(&a, &b, &defs, 0.1, 1e-12).unwrap();
            for (m, img) in interior.iter().enumerate() {
                let blend = linear_blend(&a, &b, (m + 1) as f64 / steps as f64).unwrap();
                assert!(img.max_abs_diff(&blend).unwrap() < 1e-9);
            }
        }
    }

    #[test]
    fn equal_endpoints_with_identity_give_constant_interior() {
        let u = scenes::bump(9, 9, [0.5, 0.4], 0.3);
        let defs = vec![identity((9, 9)).unwrap(); 4];
        for img in optimal_images_given_deformations(&u, &u, &defs, 0.1, 1e-12).unwrap() {
            assert!(img.max_abs_diff(&u).unwrap() < 1e-9);
        }
    }

    /// Dense oracle: build each sampling matrix column by column from
    /// `warp_image` and solve the normal equations directly.
    #[test]
    fn interior_solve_matches_dense_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 9;
        let nodes = n * n;
        let a = ImageGrid::new(n, n, (0..nodes).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let b = ImageGrid::new(n, n, (0..nodes).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let defs: Vec<DeformationField> = (0..2)
            .map(|_| {
                DeformationField::from_fn(n, n, |_, _| [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)]).unwrap()
            })
            .collect();
        let sampling = |phi: &DeformationField| -> DMatrix<f64> {
            let mut s = DMatrix::zeros(nodes, nodes);
            for col in 0..nodes {
                let mut e = vec![0.0; nodes];
                e[col] = 1.0;
                let warped = crate::deformation::warp_image(&ImageGrid::new(n, n, e).unwrap(), phi).unwrap();
                for (row, v) in warped.values().iter().enumerate() {
                    s[(row, col)] = *v;
                }
            }
            s
        };
        let w = DMatrix::from_diagonal(&DVector::from_vec(crate::grid::trapezoid_weights(n, n)));
        let s1 = sampling(&defs[0]);
        let s2 = sampling(&defs[1]);
        let lhs = s1.transpose() * &w * &s1 + &w;
        let rhs = s1.transpose() * &w * DVector::from_column_slice(a.values())
            + &w * &s2 * DVector::from_column_slice(b.values());
        let dense = lhs.cholesky().unwrap().solve(&rhs);
        let cg = optimal_images_given_deformations(&a, &b, &defs, 0.05, 1e-10).unwrap();
        let err = cg[0]
            .values()
            .iter()
            .zip(dense.iter())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn equal_endpoints_give_constant_path() {
        let u = scenes::bump(17, 17, [0.5, 0.5], 0.25);
        let sol = solve_geodesic(&u, &u, 4, 1e-2, 1e-3, &Default::default()).unwrap();
        assert!(sol.history.last().unwrap().path_energy < 1e-10);
        for img in sol.path.images() {
            assert!(img.max_abs_diff(&u).unwrap() < 1e-8);
        }
    }

    #[test]
    fn endpoints_are_preserved_and_energy_decreases() {
        let a = scenes::bump(17, 17, [0.35, 0.5], 0.22);
        let b = scenes::bump(17, 17, [0.65, 0.5], 0.22);
        let sol = solve_geodesic(&a, &b, 3, 1e-2, 1e-3, &Default::default()).unwrap();
        assert_eq!(sol.path.images()[0], a);
        assert_eq!(sol.path.images()[3], b);
        assert!(sol.history.windows(2).all(|w| w[1].path_energy <= w[0].path_energy));
        let (e, _) = path_energy(&sol.path).unwrap();
        assert_eq!(e, sol.history.last().unwrap().path_energy);
        assert!(sol.history.len() > 2);
    }

    #[test]
    fn large_delta_reproduces_linear_blend() {
        let a = scenes::disk(17, 17, [0.4, 0.5], 0.2);
        let b = scenes::square(17, 17, [0.6, 0.5], 0.2);
        let sol = solve_geodesic(&a, &b, 4, 1e6, 1e-3, &Default::default()).unwrap();
        for (k, img) in sol.path.images().iter().enumerate() {
            let blend = linear_blend(&a, &b, k as f64 / 4.0).unwrap();
            assert!(img.max_abs_diff(&blend).unwrap() < 1e-3);
        }
        for d in sol.path.deformations() {
            assert!(d.sup_norm() < 1e-3);
        }
        let mid = interpolate(&a, &b, 2, 4, 1e6, 1e-3, &Default::default()).unwrap();
        assert!(mid.max_abs_diff(&linear_blend(&a, &b, 0.5).unwrap()).unwrap() < 1e-3);
    }

    #[test]
    fn interpolate_endpoints_and_range() {
        let a = scenes::disk(9, 9, [0.4, 0.5], 0.2);
        let b = scenes::disk(9, 9, [0.6, 0.5], 0.2);
        let s = GeodesicSettings::default();
        assert_eq!(interpolate(&a, &b, 0, 4, 1e-2, 1e-3, &s).unwrap(), a);
        assert_eq!(interpolate(&a, &b, 4, 4, 1e-2, 1e-3, &s).unwrap(), b);
        assert!(matches!(
            interpolate(&a, &b, 5, 4, 1e-2, 1e-3, &s),
            Err(Error::StepOutOfRange { k: 5, steps: 4 })
        ));
        let same = interpolate(&a, &a, 2, 4, 1e-2, 1e-3, &s).unwrap();
        assert!(same.max_abs_diff(&a).unwrap() < 1e-8);
    }

    #[test]
    fn energy_scale_leaves_minimizer_unchanged() {
        let a = scenes::bump(13, 13, [0.4, 0.45], 0.25);
        let b = scenes::bump(13, 13, [0.6, 0.55], 0.25);
        let base = solve_geodesic(&a, &b, 4, 1e-2, 1e-3, &Default::default()).unwrap();
        for scale in [4.0, 0.5] {
            let scaled = GeodesicSettings {
                energy_scale: scale,
                ..Default::default()
            };
            let other = solve_geodesic(&a, &b, 4, 1e-2, 1e-3, &scaled).unwrap();
            assert_eq!(base.path, other.path);
            assert_eq!(base.history, other.history);
        }
    }

    #[test]
    fn doubling_steps_keeps_energy_comparable() {
        let a = scenes::bump(17, 17, [0.4, 0.5], 0.25);
        let b = scenes::bump(17, 17, [0.6, 0.5], 0.25);
        let s = GeodesicSettings::default();
        let e2 = solve_geodesic(&a, &b, 2, 1e-2, 1e-3, &s)
            .unwrap()
            .history
            .last()
            .unwrap()
            .path_energy;
        let e4 = solve_geodesic(&a, &b, 4, 1e-2, 1e-3, &s)
            .unwrap()
            .history
            .last()
            .unwrap()
            .path_energy;
        assert!((e2 - e4).abs() <= 0.25 * e2.max(e4), "{e2} vs {e4}");
    }

    /// Speeds equalize slowly over outer rounds, so this runs past the
    /// default round limit.
    #[test]
    fn segments_have_nearly_constant_speed() {
        let a = scenes::bump(17, 17, [0.4, 0.5], 0.25);
        let b = scenes::bump(17, 17, [0.6, 0.5], 0.25);
        let s = GeodesicSettings {
            max_outer: 200,
            ..Default::default()
        };
        let sol = solve_geodesic(&a, &b, 3, 1e-2, 1e-3, &s).unwrap();
        let seg = &sol.history.last().unwrap().segments;
        let max = seg.iter().map(|s| s.total).fold(0.0, f64::max);
        let min = seg.iter().map(|s| s.total).fold(f64::INFINITY, f64::min);
        assert!(max / min <= 1.5, "{max} / {min}");
    }

    #[test]
    fn multilevel_geodesic_is_monotone_and_keeps_endpoints() {
        let a = scenes::bump(33, 33, [0.35, 0.5], 0.2);
        let b = scenes::bump(33, 33, [0.65, 0.5], 0.2);
        let s = GeodesicSettings {
            levels: 3,
            ..Default::default()
        };
        let sol = solve_geodesic(&a, &b, 2, 1e-2, 1e-3, &s).unwrap();
        assert_eq!(sol.path.images()[0], a);
        assert_eq!(sol.path.images()[2], b);
        assert!(sol.history.windows(2).all(|w| w[1].path_energy <= w[0].path_energy));
        let single = solve_geodesic(&a, &b, 2, 1e-2, 1e-3, &Default::default()).unwrap();
        let (e_ml, e_sl) = (
            sol.history.last().unwrap().path_energy,
            single.history.last().unwrap().path_energy,
        );
        assert!(e_ml <= 1.05 * e_sl, "{e_ml} vs {e_sl}");
    }

    #[test]
    fn material_derivative_of_static_path_vanishes() {
        let u = scenes::bump(9, 9, [0.5, 0.5], 0.3);
        let path = DiscretePath::new(vec![u.clone(); 3], vec![identity((9, 9)).unwrap(); 2], 0.1, 1e-3).unwrap();
        let md = material_derivative(&path, 1).unwrap();
        assert!(md.values().iter().all(|&v| v == 0.0));
        assert!(material_derivative(&path, 0).is_err());
        assert!(material_derivative(&path, 3).is_err());

        let v = ImageGrid::constant(9, 9, 0.5).unwrap();
        let path = DiscretePath::new(vec![u.clone(), v.clone()], vec![identity((9, 9)).unwrap()], 0.1, 1e-3).unwrap();
        let md = material_derivative(&path, 1).unwrap();
        let expected = l2_distance(&v, &u).unwrap();
        assert!((l2_distance(&md, &ImageGrid::constant(9, 9, 0.0).unwrap()).unwrap() - expected).abs() < 1e-12);
    }
}
