//! Runs a job and writes its outputs.
//!
//! Every output is first written into a staging directory next to the
//! output directory and only moved into place once the whole job has
//! succeeded, so a failed run leaves no partial results behind.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use metamorph_core::bezier::piecewise_boundaries;
use metamorph_core::{
    bezier_curve, piecewise_geodesic, register_pair_multilevel, solve_geodesic, BezierJob, EnergyBreakdown,
    GeodesicSettings, ImageGrid, OuterRecord,
};
use serde::Serialize;

use crate::config::{JobConfig, Mode, SolverConfig};
use crate::io::{load_image, save_image};

pub const FRAME_PREFIX: &str = "frame_";
pub const ENERGIES_FILE: &str = "energies.csv";
pub const SOLVES_FILE: &str = "solves.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One row of `energies.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyRow {
    pub outer_iter: usize,
    pub k: usize,
    pub dirichlet: f64,
    pub laplacian: f64,
    pub mismatch: f64,
    pub segment_total: f64,
    pub path_total: f64,
}

/// Rows `first_row..first_row + row_count` of `energies.csv` belong to this solve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveEntry {
    pub label: String,
    pub first_row: usize,
    pub row_count: usize,
    pub outer_iterations: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    config: &'a JobConfig,
    image_size: [usize; 2],
    frames: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    piecewise_boundaries: Option<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct JobSummary {
    pub steps: usize,
    pub frames: Vec<usize>,
    pub solves: Vec<SolveEntry>,
}

pub fn frame_name(k: usize) -> String {
    format!("{FRAME_PREFIX}{k:03}.pgm")
}

struct Outputs {
    frames: Vec<(usize, ImageGrid)>,
    solves: Vec<(String, Vec<OuterRecord>)>,
    boundaries: Option<Vec<usize>>,
}

fn rows_for(history: &[OuterRecord]) -> Vec<EnergyRow> {
    history
        .iter()
        .flat_map(|record| {
            record.segments.iter().enumerate().map(move |(i, s)| EnergyRow {
                outer_iter: record.iteration,
                k: i + 1,
                dirichlet: s.dirichlet,
                laplacian: s.laplacian,
                mismatch: s.mismatch,
                segment_total: s.total,
                path_total: record.path_energy,
            })
        })
        .collect()
}

fn energy_report(
    images: &[ImageGrid],
    config: &JobConfig,
    settings: &GeodesicSettings,
) -> anyhow::Result<Vec<OuterRecord>> {
    let segments = images
        .windows(2)
        .enumerate()
        .map(|(i, pair)| {
            register_pair_multilevel(
                &pair[0],
                &pair[1],
                config.delta,
                config.gamma,
                config.levels,
                &settings.registration,
            )
            .map(|r| r.energy)
            .with_context(|| format!("registering images {i} and {}", i + 1))
        })
        .collect::<anyhow::Result<Vec<EnergyBreakdown>>>()?;
    let sum: f64 = segments.iter().map(|s| s.total).sum();
    Ok(vec![OuterRecord {
        iteration: 0,
        path_energy: segments.len() as f64 * sum,
        segments,
    }])
}

fn compute(
    config: &JobConfig,
    steps: usize,
    images: Vec<ImageGrid>,
    settings: &GeodesicSettings,
) -> anyhow::Result<Outputs> {
    let bezier_job = |images: Vec<ImageGrid>| BezierJob {
        controls: images,
        steps,
        delta: config.delta,
        gamma: config.gamma,
        eval_indices: config.eval_indices.clone(),
        settings: settings.clone(),
    };
    let curve_outputs = |curve: metamorph_core::BezierCurve, boundaries| Outputs {
        frames: curve.frames,
        solves: curve.solves.into_iter().map(|s| (s.label(), s.history)).collect(),
        boundaries,
    };
    Ok(match config.mode {
        Mode::Geodesic => {
            let sol = solve_geodesic(&images[0], &images[1], steps, config.delta, config.gamma, settings)?;
            Outputs {
                frames: sol.path.into_images().into_iter().enumerate().collect(),
                solves: vec![("geodesic".to_string(), sol.history)],
                boundaries: None,
            }
        }
        Mode::Bezier => curve_outputs(bezier_curve(&bezier_job(images))?, None),
        Mode::PiecewiseGeodesic => {
            let bounds = piecewise_boundaries(steps, images.len() - 1);
            curve_outputs(piecewise_geodesic(&bezier_job(images))?, Some(bounds))
        }
        Mode::EnergyReport => {
            let history = energy_report(&images, config, settings)?;
            Outputs {
                frames: images.into_iter().enumerate().collect(),
                solves: vec![("energy report".to_string(), history)],
                boundaries: None,
            }
        }
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn write_outputs(dir: &Path, config: &JobConfig, outputs: &Outputs) -> anyhow::Result<(Vec<String>, Vec<SolveEntry>)> {
    let mut names = Vec::with_capacity(outputs.frames.len());
    for (k, img) in &outputs.frames {
        let name = frame_name(*k);
        save_image(img, &dir.join(&name))?;
        names.push(name);
    }

    let csv_path = dir.join(ENERGIES_FILE);
    let mut writer =
        csv::Writer::from_path(&csv_path).with_context(|| format!("cannot write {}", csv_path.display()))?;
    let mut entries = Vec::with_capacity(outputs.solves.len());
    let mut row = 0;
    for (label, history) in &outputs.solves {
        let rows = rows_for(history);
        entries.push(SolveEntry {
            label: label.clone(),
            first_row: row,
            row_count: rows.len(),
            outer_iterations: history.len().saturating_sub(1),
        });
        row += rows.len();
        for r in rows {
            writer.serialize(r)?;
        }
    }
    writer.flush()?;
    write_json(&dir.join(SOLVES_FILE), &entries)?;

    let (w, h) = outputs.frames[0].1.dims();
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config,
        image_size: [w, h],
        frames: names.clone(),
        piecewise_boundaries: outputs.boundaries.clone(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    let mut files = names;
    files.extend([ENERGIES_FILE, SOLVES_FILE, MANIFEST_FILE].map(String::from));
    Ok((files, entries))
}

/// Moves the staged files into `out`, undoing the move if any rename fails.
fn commit(staging: &Path, out: &Path, files: &[String]) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    for (i, name) in files.iter().enumerate() {
        if let Err(e) = fs::rename(staging.join(name), out.join(name)) {
            for done in &files[..i] {
                let _ = fs::remove_file(out.join(done));
            }
            return Err(e).with_context(|| format!("cannot move {name} into {}", out.display()));
        }
    }
    Ok(())
}

/// Runs `config`, resolving relative image paths against `base_dir`, and
/// writes all outputs to `output_dir`.
pub fn run_job(config: &JobConfig, base_dir: &Path, output_dir: &Path) -> anyhow::Result<JobSummary> {
    let steps = config.validate()?;
    let settings = config.solver.settings(config.levels);
    let images = config
        .control_image_paths
        .iter()
        .map(|p| load_image(&base_dir.join(p)))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(bad) = images.iter().find(|img| img.dims() != images[0].dims()) {
        anyhow::bail!(
            "all images must share one size: {:?} vs {:?}",
            images[0].dims(),
            bad.dims()
        );
    }
    log::info!(
        "{:?} job: {} images of {}x{}, K={steps}, delta={}, gamma={}, levels={}",
        config.mode,
        images.len(),
        images[0].width(),
        images[0].height(),
        config.delta,
        config.gamma,
        config.levels
    );

    let outputs = compute(config, steps, images, &settings)?;

    let effective = JobConfig {
        steps: Some(steps),
        output_dir: None,
        eval_indices: match config.mode {
            Mode::Bezier => Some(config.eval_indices.clone().unwrap_or_else(|| (0..=steps).collect())),
            _ => None,
        },
        solver: SolverConfig::effective(&settings),
        ..config.clone()
    };
    let parent = match output_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).with_context(|| format!("cannot create {}", parent.display()))?;
    let staging = tempfile::Builder::new()
        .prefix(".metamorph-staging-")
        .tempdir_in(&parent)
        .with_context(|| format!("cannot create a staging directory in {}", parent.display()))?;
    let (files, solves) = write_outputs(staging.path(), &effective, &outputs)?;
    commit(staging.path(), output_dir, &files)?;
    log::info!("wrote {} files to {}", files.len(), output_dir.display());
    Ok(JobSummary {
        steps,
        frames: outputs.frames.iter().map(|f| f.0).collect(),
        solves,
    })
}
