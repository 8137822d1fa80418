//! JSON job description.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use metamorph_core::{GeodesicSettings, RegistrationSettings};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Discrete geodesic between exactly two images.
    Geodesic,
    /// Discrete Bézier curve through the control images.
    Bezier,
    /// Geodesics between consecutive controls, `K` segments in total.
    PiecewiseGeodesic,
    /// Registers consecutive images of a given path and reports its energy.
    EnergyReport,
}

/// Optional solver overrides; missing fields take the library defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub armijo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backtrack: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_backtracks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_init: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_update: Option<f64>,
}

impl SolverConfig {
    pub fn settings(&self, levels: usize) -> GeodesicSettings {
        let d = GeodesicSettings::default();
        let r = RegistrationSettings::default();
        GeodesicSettings {
            registration: RegistrationSettings {
                max_iterations: self.max_iterations.unwrap_or(r.max_iterations),
                rel_tol: self.rel_tol.unwrap_or(r.rel_tol),
                armijo: self.armijo.unwrap_or(r.armijo),
                backtrack: self.backtrack.unwrap_or(r.backtrack),
                max_backtracks: self.max_backtracks.unwrap_or(r.max_backtracks),
                step_init: self.step_init.unwrap_or(r.step_init),
                max_update: self.max_update.unwrap_or(r.max_update),
            },
            outer_tol: self.outer_tol.unwrap_or(d.outer_tol),
            max_outer: self.max_outer.unwrap_or(d.max_outer),
            cg_tol: self.cg_tol.unwrap_or(d.cg_tol),
            levels,
            energy_scale: self.energy_scale.unwrap_or(d.energy_scale),
        }
    }

    /// Every field filled in from `settings`.
    pub fn effective(settings: &GeodesicSettings) -> Self {
        let r = &settings.registration;
        Self {
            max_outer: Some(settings.max_outer),
            outer_tol: Some(settings.outer_tol),
            cg_tol: Some(settings.cg_tol),
            energy_scale: Some(settings.energy_scale),
            max_iterations: Some(r.max_iterations),
            rel_tol: Some(r.rel_tol),
            armijo: Some(r.armijo),
            backtrack: Some(r.backtrack),
            max_backtracks: Some(r.max_backtracks),
            step_init: Some(r.step_init),
            max_update: Some(r.max_update),
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub mode: Mode,
    /// Input images, relative paths resolved against the config file's directory.
    pub control_image_paths: Vec<PathBuf>,
    /// Segments per geodesic (total segments for piecewise mode). Implied by
    /// the image count in energy-report mode.
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    pub delta: f64,
    pub gamma: f64,
    #[serde(default = "one")]
    pub levels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_indices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl JobConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Checks arity and parameter ranges and returns the number of segments `K`.
    pub fn validate(&self) -> anyhow::Result<usize> {
        let images = self.control_image_paths.len();
        match self.mode {
            Mode::Geodesic if images != 2 => bail!("geodesic mode needs exactly 2 images, got {images}"),
            _ if images < 2 => bail!("{:?} mode needs at least 2 images, got {images}", self.mode),
            _ => {}
        }
        for (name, value) in [("delta", self.delta), ("gamma", self.gamma)] {
            if !(value.is_finite() && value > 0.0) {
                bail!("`{name}` must be positive, got {value}");
            }
        }
        if self.levels == 0 {
            bail!("`levels` must be at least 1");
        }
        let steps = match (self.mode, self.steps) {
            (Mode::EnergyReport, None) => images - 1,
            (Mode::EnergyReport, Some(k)) if k == images - 1 => k,
            (Mode::EnergyReport, Some(k)) => bail!(
                "energy-report mode takes K = {} from the images, got K = {k}",
                images - 1
            ),
            (_, None) => bail!("missing `K`"),
            (_, Some(0)) => bail!("`K` must be at least 1"),
            (_, Some(k)) => k,
        };
        if self.mode == Mode::PiecewiseGeodesic && steps < images - 1 {
            bail!("piecewise-geodesic mode needs K >= {}, got {steps}", images - 1);
        }
        if let Some(indices) = &self.eval_indices {
            if self.mode != Mode::Bezier {
                bail!("`eval_indices` only applies to bezier mode");
            }
            if let Some(k) = indices.iter().find(|&&k| k > steps) {
                bail!("eval index {k} outside 0..={steps}");
            }
            let mut sorted = indices.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                bail!("duplicate eval indices");
            }
        }
        self.solver.settings(self.levels).validate()?;
        Ok(steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(json: &str) -> anyhow::Result<JobConfig> {
        Ok(serde_json::from_str(json)?)
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let c =
            parse(r#"{"mode":"geodesic","control_image_paths":["a.pgm","b.pgm"],"K":4,"delta":0.01,"gamma":0.001}"#)
                .unwrap();
        assert_eq!(c.levels, 1);
        assert_eq!(c.validate().unwrap(), 4);
        assert_eq!(c.solver.settings(1), GeodesicSettings::default());
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            r#"{"mode":"geodesic","control_image_paths":["a.pgm"],"K":4,"delta":0.01,"gamma":0.001}"#,
            r#"{"mode":"geodesic","control_image_paths":["a","b"],"K":0,"delta":0.01,"gamma":0.001}"#,
            r#"{"mode":"geodesic","control_image_paths":["a","b"],"delta":0.01,"gamma":0.001}"#,
            r#"{"mode":"bezier","control_image_paths":["a","b"],"K":4,"delta":-1,"gamma":0.001}"#,
            r#"{"mode":"bezier","control_image_paths":["a","b"],"K":4,"delta":1,"gamma":0.001,"eval_indices":[5]}"#,
            r#"{"mode":"bezier","control_image_paths":["a","b"],"K":4,"delta":1,"gamma":0.001,"eval_indices":[1,1]}"#,
            r#"{"mode":"energy-report","control_image_paths":["a","b"],"K":4,"delta":1,"gamma":0.001}"#,
            r#"{"mode":"piecewise-geodesic","control_image_paths":["a","b","c"],"K":1,"delta":1,"gamma":0.001}"#,
            r#"{"mode":"bezier","control_image_paths":["a","b"],"K":4,"delta":1,"gamma":0.001,"solver":{"backtrack":2}}"#,
        ];
        for json in bad {
            let ok = parse(json).and_then(|c| c.validate().map(|_| ()));
            assert!(ok.is_err(), "{json}");
        }
        assert!(parse(r#"{"mode":"bezier","control_image_paths":[],"delta":1,"gamma":1,"typo":1}"#).is_err());
    }

    #[test]
    fn effective_solver_round_trips() {
        let s = SolverConfig {
            max_outer: Some(7),
            rel_tol: Some(1e-6),
            ..Default::default()
        }
        .settings(2);
        assert_eq!(SolverConfig::effective(&s).settings(2), s);
        assert_eq!(s.max_outer, 7);
        assert_eq!(s.levels, 2);
    }
}
