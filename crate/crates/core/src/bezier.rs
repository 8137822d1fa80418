//! Discrete Bézier curves in image space via the de Casteljau recursion,
//! with geodesic interpolation as the averaging primitive.

use rayon::prelude::*;

use crate::deformation::MatchingParams;
use crate::error::{Error, Result};
use crate::geodesic::{interpolate, solve_geodesic, GeodesicSettings, OuterRecord};
use crate::grid::{same_dims, ImageGrid};

#[derive(Clone, Debug)]
pub struct BezierJob {
    /// `n + 1` control images, `n >= 1`.
    pub controls: Vec<ImageGrid>,
    /// Segments `K` of every inner geodesic; the curve has indices `0..=K`.
    pub steps: usize,
    pub delta: f64,
    pub gamma: f64,
    /// Indices to evaluate, all of `0..=K` when `None`.
    pub eval_indices: Option<Vec<usize>>,
    pub settings: GeodesicSettings,
}

impl BezierJob {
    pub fn new(controls: Vec<ImageGrid>, steps: usize, delta: f64, gamma: f64) -> Self {
        Self {
            controls,
            steps,
            delta,
            gamma,
            eval_indices: None,
            settings: GeodesicSettings::default(),
        }
    }

    /// Curve degree `n`.
    pub fn degree(&self) -> usize {
        self.controls.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.controls.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a Bezier curve needs at least 2 controls, got {}",
                self.controls.len()
            )));
        }
        for c in &self.controls[1..] {
            same_dims(&self.controls[0], c)?;
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("a Bezier curve needs at least one step".into()));
        }
        MatchingParams::new(self.delta, self.gamma)?;
        self.settings.validate()?;
        for &k in self.eval_indices.iter().flatten() {
            if k > self.steps {
                return Err(Error::StepOutOfRange { k, steps: self.steps });
            }
        }
        Ok(())
    }

    /// The requested indices in the order given (all of `0..=K` by default).
    pub fn indices(&self) -> Vec<usize> {
        self.eval_indices.clone().unwrap_or_else(|| (0..=self.steps).collect())
    }
}

/// Convergence history of one geodesic solve performed for a curve.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveRecord {
    /// de Casteljau level `j` (1 for geodesics between consecutive controls).
    pub level: usize,
    /// Position `i` within the level; the solve connects entries `i - 1` and `i`.
    pub index: usize,
    /// Curve index the solve was made for; `None` for the shared level-1 solves.
    pub step: Option<usize>,
    pub history: Vec<OuterRecord>,
}

impl SolveRecord {
    pub fn label(&self) -> String {
        match self.step {
            Some(k) => format!("level {} index {} step {}", self.level, self.index, k),
            None => format!("level {} index {}", self.level, self.index),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BezierCurve {
    /// `(k, image)` in the order of the requested indices.
    pub frames: Vec<(usize, ImageGrid)>,
    /// Level-1 solves first, then the per-step solves by index and level.
    pub solves: Vec<SolveRecord>,
}

fn wrap(level: usize, index: usize, step: usize) -> impl FnOnce(Error) -> Error {
    move |source| Error::Bezier {
        level,
        index,
        step,
        source: Box::new(source),
    }
}

/// Evaluates the curve at index `k` by running the recursion
/// `u_i^j = I^K(u_{i-1}^{j-1}, u_i^{j-1}, k)` for `j = 1..=n`, `i = j..=n`.
pub fn de_casteljau_evaluate(job: &BezierJob, k: usize) -> Result<ImageGrid> {
    job.validate()?;
    if k > job.steps {
        return Err(Error::StepOutOfRange { k, steps: job.steps });
    }
    let mut level = job.controls.clone();
    for j in 1..=job.degree() {
        let next = (j..=job.degree())
            .map(|i| {
                interpolate(
                    &level[i - 1 - (j - 1)],
                    &level[i - (j - 1)],
                    k,
                    job.steps,
                    job.delta,
                    job.gamma,
                    &job.settings,
                )
                .map_err(wrap(j, i, k))
            })
            .collect::<Result<Vec<_>>>()?;
        level = next;
    }
    Ok(level.pop().expect("the last level holds one image"))
}

/// Evaluates the curve at every requested index.
///
/// Geodesics between consecutive controls are solved once and shared by all
/// indices. Higher levels depend on `k` and are solved per index, with
/// distinct indices evaluated in parallel. Errors from the shared level-1
/// solves are reported with step 0.
pub fn bezier_curve(job: &BezierJob) -> Result<BezierCurve> {
    job.validate()?;
    let n = job.degree();
    let steps = job.steps;
    let indices = job.indices();
    let interior = indices.iter().filter(|&&k| k > 0 && k < steps).count();
    log::info!(
        "Bezier curve of degree {n}, K={steps}: {n} shared geodesic solves and {} per-step solves",
        n * (n - 1) / 2 * interior
    );

    let needs_solves = interior > 0 || n == 1;
    let level_one = if needs_solves {
        (1..=n)
            .into_par_iter()
            .map(|i| {
                solve_geodesic(
                    &job.controls[i - 1],
                    &job.controls[i],
                    steps,
                    job.delta,
                    job.gamma,
                    &job.settings,
                )
                .map_err(wrap(1, i, 0))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let per_step = indices
        .par_iter()
        .map(|&k| -> Result<(ImageGrid, Vec<SolveRecord>)> {
            if k == 0 {
                return Ok((job.controls[0].clone(), Vec::new()));
            }
            if k == steps {
                return Ok((job.controls[n].clone(), Vec::new()));
            }
            let mut level: Vec<ImageGrid> = level_one.iter().map(|g| g.path.images()[k].clone()).collect();
            let mut records = Vec::new();
            for j in 2..=n {
                let mut next = Vec::with_capacity(level.len() - 1);
                for (offset, pair) in level.windows(2).enumerate() {
                    let i = j + offset;
                    let sol = solve_geodesic(&pair[0], &pair[1], steps, job.delta, job.gamma, &job.settings)
                        .map_err(wrap(j, i, k))?;
                    records.push(SolveRecord {
                        level: j,
                        index: i,
                        step: Some(k),
                        history: sol.history,
                    });
                    next.push(sol.path.into_images().swap_remove(k));
                }
                level = next;
            }
            Ok((level.pop().expect("the last level holds one image"), records))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut solves: Vec<SolveRecord> = level_one
        .into_iter()
        .enumerate()
        .map(|(offset, sol)| SolveRecord {
            level: 1,
            index: offset + 1,
            step: None,
            history: sol.history,
        })
        .collect();
    let mut frames = Vec::with_capacity(indices.len());
    for (&k, (img, records)) in indices.iter().zip(per_step) {
        frames.push((k, img));
        solves.extend(records);
    }
    Ok(BezierCurve { frames, solves })
}

/// Curve-index boundaries `round(i K / n)` assigning segments to control pairs.
pub fn piecewise_boundaries(steps: usize, pairs: usize) -> Vec<usize> {
    (0..=pairs)
        .map(|i| (i as f64 * steps as f64 / pairs as f64).round() as usize)
        .collect()
}

/// The comparison curve made of geodesics between consecutive controls,
/// `K` segments in total, split between the pairs by [`piecewise_boundaries`].
/// Controls appear as frames at the boundaries. `eval_indices` is ignored.
pub fn piecewise_geodesic(job: &BezierJob) -> Result<BezierCurve> {
    job.validate()?;
    let n = job.degree();
    if job.steps < n {
        return Err(Error::InvalidArgument(format!(
            "a piecewise geodesic through {} controls needs K >= {n}, got {}",
            n + 1,
            job.steps
        )));
    }
    let bounds = piecewise_boundaries(job.steps, n);
    let solutions = (1..=n)
        .into_par_iter()
        .map(|i| {
            let segs = bounds[i] - bounds[i - 1];
            solve_geodesic(
                &job.controls[i - 1],
                &job.controls[i],
                segs,
                job.delta,
                job.gamma,
                &job.settings,
            )
            .map_err(wrap(1, i, bounds[i - 1]))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut frames = vec![(0, job.controls[0].clone())];
    let mut solves = Vec::with_capacity(n);
    for (offset, sol) in solutions.into_iter().enumerate() {
        let base = bounds[offset];
        solves.push(SolveRecord {
            level: 1,
            index: offset + 1,
            step: None,
            history: sol.history,
        });
        frames.extend(
            sol.path
                .into_images()
                .into_iter()
                .enumerate()
                .skip(1)
                .map(|(m, img)| (base + m, img)),
        );
    }
    Ok(BezierCurve { frames, solves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::l2_distance;
    use crate::scenes;

    fn fast() -> GeodesicSettings {
        GeodesicSettings {
            max_outer: 15,
            outer_tol: 1e-4,
            ..Default::default()
        }
    }

    #[test]
    fn boundaries_split_steps_between_pairs() {
        assert_eq!(piecewise_boundaries(8, 3), vec![0, 3, 5, 8]);
        assert_eq!(piecewise_boundaries(8, 1), vec![0, 8]);
        assert_eq!(piecewise_boundaries(4, 2), vec![0, 2, 4]);
        assert_eq!(piecewise_boundaries(3, 3), vec![0, 1, 2, 3]);
    }

    #[test]
    fn validation() {
        let a = scenes::disk(9, 9, [0.5, 0.5], 0.2);
        assert!(BezierJob::new(vec![a.clone()], 4, 1e-2, 1e-3).validate().is_err());
        assert!(BezierJob::new(vec![a.clone(); 2], 0, 1e-2, 1e-3).validate().is_err());
        assert!(BezierJob::new(vec![a.clone(); 2], 4, 0.0, 1e-3).validate().is_err());
        let mut job = BezierJob::new(vec![a.clone(); 2], 4, 1e-2, 1e-3);
        job.eval_indices = Some(vec![5]);
        assert!(matches!(job.validate(), Err(Error::StepOutOfRange { k: 5, steps: 4 })));
        assert!(de_casteljau_evaluate(&BezierJob::new(vec![a.clone(); 2], 4, 1e-2, 1e-3), 5).is_err());
        let b = scenes::disk(11, 9, [0.5, 0.5], 0.2);
        assert!(BezierJob::new(vec![a, b], 4, 1e-2, 1e-3).validate().is_err());
    }

    #[test]
    fn linear_curve_is_the_geodesic() {
        let a = scenes::disk(13, 13, [0.4, 0.5], 0.2);
        let b = scenes::square(13, 13, [0.6, 0.5], 0.18);
        let mut job = BezierJob::new(vec![a.clone(), b.clone()], 4, 1e-2, 1e-3);
        job.settings = fast();
        let curve = bezier_curve(&job).unwrap();
        let geo = solve_geodesic(&a, &b, 4, 1e-2, 1e-3, &job.settings).unwrap();
        let frames: Vec<ImageGrid> = curve.frames.iter().map(|(_, f)| f.clone()).collect();
        assert_eq!(frames, geo.path.images());
        assert_eq!(de_casteljau_evaluate(&job, 2).unwrap(), geo.path.images()[2]);
        assert_eq!(curve.solves.len(), 1);
    }

    #[test]
    fn recursion_and_cached_evaluation_agree() {
        let [r, s, t, _] = scenes::shape_sequence(11);
        let mut job = BezierJob::new(vec![r.clone(), s, t.clone()], 4, 5e-2, 1e-3);
        job.settings = fast();
        job.eval_indices = Some(vec![4, 1, 0, 2]);
        let curve = bezier_curve(&job).unwrap();
        assert_eq!(curve.frames.iter().map(|f| f.0).collect::<Vec<_>>(), vec![4, 1, 0, 2]);
        assert_eq!(curve.frames[0].1, t);
        assert_eq!(curve.frames[2].1, r);
        assert_eq!(curve.frames[1].1, de_casteljau_evaluate(&job, 1).unwrap());
        assert_eq!(curve.frames[3].1, de_casteljau_evaluate(&job, 2).unwrap());
        // Two shared solves plus one level-2 solve per interior index.
        assert_eq!(curve.solves.len(), 4);
        assert!(curve.solves[..2].iter().all(|s| s.step.is_none()));
        assert_eq!(curve.solves[2].label(), "level 2 index 2 step 1");
    }

    #[test]
    fn identical_controls_give_a_constant_curve() {
        let u = scenes::bump(11, 11, [0.5, 0.5], 0.3);
        let job = BezierJob::new(vec![u.clone(); 4], 4, 1e-2, 1e-3);
        for (_, frame) in bezier_curve(&job).unwrap().frames {
            assert!(frame.max_abs_diff(&u).unwrap() < 1e-8);
        }
    }

    #[test]
    fn endpoints_only_need_no_solves() {
        let [a, b, c, d] = scenes::shape_sequence(9);
        let mut job = BezierJob::new(vec![a.clone(), b, c, d.clone()], 8, 5e-2, 1e-3);
        job.eval_indices = Some(vec![0, 8]);
        let curve = bezier_curve(&job).unwrap();
        assert_eq!(curve.frames, vec![(0, a), (8, d)]);
        assert!(curve.solves.is_empty());
    }

    #[test]
    fn piecewise_curve_passes_through_controls() {
        let [a, b, c, d] = scenes::shape_sequence(11);
        let mut job = BezierJob::new(vec![a.clone(), b.clone(), c.clone(), d.clone()], 8, 5e-2, 1e-3);
        job.settings = fast();
        let curve = piecewise_geodesic(&job).unwrap();
        let ks: Vec<usize> = curve.frames.iter().map(|f| f.0).collect();
        assert_eq!(ks, (0..=8).collect::<Vec<_>>());
        assert_eq!(curve.frames[0].1, a);
        assert_eq!(curve.frames[3].1, b);
        assert_eq!(curve.frames[5].1, c);
        assert_eq!(curve.frames[8].1, d);
        assert_eq!(curve.solves.len(), 3);
        job.steps = 2;
        assert!(piecewise_geodesic(&job).is_err());
    }

    /// With the middle control equal to the first, the quadratic curve stays
    /// close to the geodesic between the outer controls.
    #[test]
    fn degenerate_quadratic_tracks_outer_geodesic() {
        let a = scenes::disk(13, 13, [0.4, 0.5], 0.2);
        let c = scenes::disk(13, 13, [0.6, 0.5], 0.2);
        let mut job = BezierJob::new(vec![a.clone(), a.clone(), c.clone()], 4, 1e-2, 1e-3);
        job.settings = fast();
        let curve = bezier_curve(&job).unwrap();
        let geo = solve_geodesic(&a, &c, 4, 1e-2, 1e-3, &job.settings).unwrap();
        let scale = l2_distance(&a, &c).unwrap();
        for (k, frame) in &curve.frames {
            let d = l2_distance(frame, &geo.path.images()[*k]).unwrap();
            assert!(d <= 0.5 * scale, "k={k}: {d} vs {scale}");
        }
    }
}
