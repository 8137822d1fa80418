//! Single-pair registration: minimize the matching energy over admissible
//! deformations for two fixed images.
//!
//! The optimizer is gradient descent with Armijo backtracking, measured in
//! the metric of the (quadratic) regularizer shifted by the average data
//! curvature. That metric is diagonal in the sine basis, so each step costs
//! two dense transforms per component.

use crate::deformation::{DeformationField, EnergyBreakdown, MatchingParams};
use crate::error::{Error, Result};
use crate::grid::{max_pyramid_depth, same_dims, GridPyramid, ImageGrid};
use crate::space::{self, Plane, Space};

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationSettings {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the energy by less than this fraction.
    pub rel_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step shrink factor per backtrack, in `(0, 1)`.
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub step_init: f64,
    /// Largest displacement change of any node in one iteration, in grid cells.
    pub max_update: f64,
}

impl Default for RegistrationSettings {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            rel_tol: 1e-8,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
            step_init: 1.0,
            max_update: 0.5,
        }
    }
}

impl RegistrationSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_iterations", self.max_iterations as f64),
            ("rel_tol", self.rel_tol),
            ("armijo", self.armijo),
            ("max_backtracks", self.max_backtracks as f64),
            ("step_init", self.step_init),
            ("max_update", self.max_update),
        ];
        for (name, value) in positive {
            crate::error::check_positive(name, value)?;
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidParameter {
                name: "backtrack",
                value: self.backtrack,
            });
        }
        Ok(())
    }
}

/// Result of [`register_pair`].
#[derive(Clone, Debug)]
pub struct Registration {
    pub deformation: DeformationField,
    pub energy: EnergyBreakdown,
    /// Energy of the start and of every accepted iterate.
    pub log: Vec<f64>,
    /// Set when a step exhausted its backtracks; the last accepted iterate is
    /// returned.
    pub line_search_failed: bool,
}

impl Registration {
    pub fn iterations(&self) -> usize {
        self.log.len() - 1
    }
}

#[derive(Clone, Debug)]
pub(crate) struct DofRegistration {
    pub disp: Vec<f64>,
    pub energy: EnergyBreakdown,
    pub log: Vec<f64>,
    pub line_search_failed: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Descent on `scale * matching_energy`. `scale` only rescales the objective;
/// for powers of two the iterates are bit-identical to `scale = 1`.
pub(crate) fn register_dofs<S: Space>(
    space: &S,
    u: &[f64],
    target: &[f64],
    mut disp: Vec<f64>,
    params: MatchingParams,
    settings: &RegistrationSettings,
    scale: f64,
) -> Result<DofRegistration> {
    space.pin_boundary(&mut disp);
    let shift = space::mean_squared_gradient(space, target) / params.delta;
    let mut energy = space::matching_energy(space, u, target, &disp, params);
    if !energy.is_finite() {
        return Err(Error::NonFiniteEnergy("registration"));
    }
    let mut log = vec![energy.total];
    let mut line_search_failed = false;
    let mut trial = vec![0.0; disp.len()];

    for _ in 0..settings.max_iterations {
        if energy.total == 0.0 {
            break;
        }
        let grad = space::matching_gradient(space, u, target, &disp, params, scale);
        let mut dir = grad.clone();
        space.solve_regularizer(&mut dir, params.gamma, shift, scale);
        let slope = -dot(&grad, &dir);
        // Also stops on a NaN slope.
        if slope.is_nan() || slope >= 0.0 {
            break;
        }
        let current = scale * energy.total;
        let sup = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let mut step = settings.step_init.min(settings.max_update * space.cell_size() / sup);
        let mut accepted = None;
        for _ in 0..=settings.max_backtracks {
            for ((t, d), g) in trial.iter_mut().zip(&disp).zip(&dir) {
                *t = d - step * g;
            }
            let e = space::matching_energy(space, u, target, &trial, params);
            if e.is_finite() && scale * e.total <= current + settings.armijo * step * slope {
                accepted = Some(e);
                break;
            }
            step *= settings.backtrack;
        }
        let Some(next) = accepted else {
            line_search_failed = true;
            break;
        };
        std::mem::swap(&mut disp, &mut trial);
        let previous = energy.total;
        energy = next;
        log.push(energy.total);
        if previous - energy.total <= settings.rel_tol * previous {
            break;
        }
    }
    Ok(DofRegistration {
        disp,
        energy,
        log,
        line_search_failed,
    })
}

fn check_inputs(u: &ImageGrid, target: &ImageGrid, settings: &RegistrationSettings) -> Result<()> {
    same_dims(u, target)?;
    settings.validate()
}

/// Minimizes the matching energy of `target` warped onto `u`, starting at `phi0`.
pub fn register_pair(
    u: &ImageGrid,
    target: &ImageGrid,
    phi0: &DeformationField,
    delta: f64,
    gamma: f64,
    settings: &RegistrationSettings,
) -> Result<Registration> {
    check_inputs(u, target, settings)?;
    if phi0.dims() != u.dims() {
        return Err(Error::DimensionMismatch {
            left: u.dims(),
            right: phi0.dims(),
        });
    }
    let params = MatchingParams::new(delta, gamma)?;
    let plane = Plane::new(u.width(), u.height());
    let run = register_dofs(
        &plane,
        u.values(),
        target.values(),
        phi0.as_slice().to_vec(),
        params,
        settings,
        1.0,
    )?;
    log::debug!(
        "registration on {}x{}: {} iterations, energy {:.6e}{}",
        u.width(),
        u.height(),
        run.log.len() - 1,
        run.energy.total,
        if run.line_search_failed {
            " (line search failed)"
        } else {
            ""
        }
    );
    Ok(Registration {
        deformation: DeformationField::from_parts(u.width(), u.height(), run.disp),
        energy: run.energy,
        log: run.log,
        line_search_failed: run.line_search_failed,
    })
}

/// Coarse-to-fine registration from the identity. Displacements are in
/// domain units, so they are resampled between levels without rescaling.
/// With `levels == 1` this is [`register_pair`] from the identity.
pub fn register_pair_multilevel(
    u: &ImageGrid,
    target: &ImageGrid,
    delta: f64,
    gamma: f64,
    levels: usize,
    settings: &RegistrationSettings,
) -> Result<Registration> {
    check_inputs(u, target, settings)?;
    let max = max_pyramid_depth(u.width(), u.height());
    if levels == 0 || levels > max {
        return Err(Error::InvalidArgument(format!(
            "{levels} levels requested, a {}x{} grid supports 1..={max}",
            u.width(),
            u.height()
        )));
    }
    let pu = GridPyramid::build(u, levels)?;
    let pt = GridPyramid::build(target, levels)?;
    let mut phi = DeformationField::identity(pu.coarsest().width(), pu.coarsest().height())?;
    let mut result = None;
    for (lu, lt) in pu.levels().iter().zip(pt.levels()) {
        if phi.dims() != lu.dims() {
            phi = phi.prolongate(lu.dims())?;
        }
        let reg = register_pair(lu, lt, &phi, delta, gamma, settings)?;
        phi = reg.deformation.clone();
        result = Some(reg);
    }
    Ok(result.expect("at least one level"))
}
