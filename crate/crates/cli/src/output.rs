//! Artifact emission. Every file goes through [`Bundle`], which records its
//! hash for the manifest; nothing time- or host-dependent is written.

use std::path::{Path, PathBuf};

use harvester_core::classify::{MotionKind, MotionLabel};
use harvester_core::dynamics::Trajectory;
use harvester_core::statistics::{CondProbCurve, ConditionalMap};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::pipeline::{BandResult, CaseResult, DensityResult};

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn trajectory_csv(traj: &Trajectory) -> Vec<u8> {
    csv_bytes(
        &["t", "x", "xdot", "v", "P"],
        traj.t.iter().zip(&traj.states).zip(&traj.power).map(|((&t, s), &p)| {
            [t, s.x, s.xdot, s.v, p].map(fmt_f64)
        }),
    )
}

/// Inputs and model outputs, one row per evaluation.
pub fn samples_csv(names: &[&str], inputs: &[Vec<f64>], values: &[f64]) -> Vec<u8> {
    let mut header = names.to_vec();
    header.push("power");
    csv_bytes(
        &header,
        inputs.iter().zip(values).map(|(row, &y)| row.iter().chain([&y]).map(|&v| fmt_f64(v)).collect::<Vec<_>>()),
    )
}

pub fn density_csv(grid: &[f64], density: &[f64]) -> Vec<u8> {
    csv_bytes(&["power_norm", "density"], grid.iter().zip(density).map(|(&x, &d)| [fmt_f64(x), fmt_f64(d)]))
}

/// Long format: one row per (parameter bin, power level).
pub fn map_csv(map: &ConditionalMap) -> Vec<u8> {
    let rows = map.param_grid.iter().zip(&map.cdf).flat_map(|(&x, row)| {
        map.power_grid.iter().zip(row).map(move |(&y, &c)| [fmt_f64(x), fmt_f64(y), fmt_f64(c)])
    });
    csv_bytes(&["param_value", "power_value", "cdf"], rows)
}

fn motion_str(m: Option<MotionKind>) -> String {
    m.map(|k| k.as_str().to_string()).unwrap_or_default()
}

pub fn condprob_csv(curves: &[CondProbCurve]) -> Vec<u8> {
    let rows = curves.iter().flat_map(|c| {
        c.points.iter().map(move |pt| {
            let (p, lo, hi, n, k) = match pt.result {
                Some(r) => (r.probability, r.ci_lo, r.ci_hi, r.n_event, r.n_success),
                None => (f64::NAN, f64::NAN, f64::NAN, 0, 0),
            };
            vec![
                fmt_f64(pt.f_nominal),
                c.param.name().to_string(),
                fmt_f64(p),
                fmt_f64(lo),
                fmt_f64(hi),
                motion_str(pt.motion),
                n.to_string(),
                k.to_string(),
            ]
        })
    });
    csv_bytes(&["f_nominal", "parameter", "probability", "ci_lo", "ci_hi", "motion", "n_event", "n_success"], rows)
}

pub fn band_csv(b: &BandResult) -> Vec<u8> {
    let band = &b.band;
    csv_bytes(
        &["t", "lower", "nominal", "upper"],
        (0..band.t.len()).map(|i| [band.t[i], band.lower[i], b.nominal[i], band.upper[i]].map(fmt_f64)),
    )
}

/// Rows of `(f_nominal, label, nominal mean power)`.
pub fn classify_csv(rows: &[(f64, Option<MotionLabel>, f64)]) -> Vec<u8> {
    csv_bytes(
        &["f_nominal", "motion", "crossings", "k_statistic", "nominal_power"],
        rows.iter().map(|&(f, label, power)| {
            let (kind, crossings, k) = match label {
                Some(m) => (Some(m.kind), m.crossings.to_string(), fmt_f64(m.k_statistic)),
                None => (None, String::new(), String::new()),
            };
            vec![fmt_f64(f), motion_str(kind), crossings, k, fmt_f64(power)]
        }),
    )
}

pub fn json_bytes(value: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

/// Writes the case artifacts shared by `fit`, `maps` and `sweep`.
pub fn write_case(
    bundle: &mut Bundle,
    dir: &str,
    case: &CaseResult,
    density: Option<&DensityResult>,
) -> Result<(), CliError> {
    let names = case.spec.names();
    bundle.write(&format!("{dir}/samples.csv"), &samples_csv(&names, &case.fit_inputs, &case.fit_values), Some(case.seeds.fit))?;
    bundle.write(&format!("{dir}/surrogate.json"), case.surrogate.to_document().as_bytes(), Some(case.seeds.fit))?;
    let diag = crate::pipeline::diagnostics(case, density);
    bundle.write(&format!("{dir}/diagnostics.json"), &json_bytes(&diag), None)?;
    if let Some(d) = density {
        bundle.write(&format!("{dir}/density.csv"), &density_csv(&d.grid, &d.density), Some(case.seeds.draws))?;
        bundle.write(&format!("{dir}/histogram.csv"), &density_csv(&d.hist_centers, &d.hist_density), Some(case.seeds.draws))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub case: String,
    pub error: String,
    pub numerical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config: String,
    pub config_sha256: String,
    pub artifacts: Vec<ManifestEntry>,
    pub failures: Vec<Failure>,
}

pub const MANIFEST: &str = "manifest.json";
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

/// An output directory under construction.
pub struct Bundle {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
    failures: Vec<Failure>,
}

impl Bundle {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(format!("cannot create {}", root.display()), e))?;
        Ok(Bundle { root: root.to_path_buf(), entries: Vec::new(), failures: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// `rel` uses `/` separators and stays inside the bundle.
    pub fn write(&mut self, rel: &str, bytes: &[u8], seed: Option<u64>) -> Result<(), CliError> {
        let path = rel.split('/').fold(self.root.clone(), |p, part| p.join(part));
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(format!("cannot create {}", parent.display()), e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))?;
        self.entries.retain(|e| e.path != rel);
        self.entries.push(ManifestEntry { path: rel.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len(), seed });
        Ok(())
    }

    pub fn fail(&mut self, case: String, error: &CliError) {
        log::error!("{case}: {error}");
        self.failures.push(Failure { case, error: error.to_string(), numerical: error.is_numerical() });
    }

    pub fn failures(&self) -> &[Failure] {
        &self.failures
    }

    /// Writes the resolved config and the manifest, then reports failures.
    pub fn finish(mut self, command: &str, config: &ExperimentConfig) -> Result<Manifest, CliError> {
        let text = config.to_toml();
        self.write(RESOLVED_CONFIG, text.as_bytes(), None)?;
        let mut artifacts = self.entries.clone();
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            command: command.to_string(),
            seed: config.seed,
            config: RESOLVED_CONFIG.to_string(),
            config_sha256: sha256_hex(text.as_bytes()),
            artifacts,
            failures: self.failures.clone(),
        };
        let bytes = json_bytes(&manifest);
        let path = self.root.join(MANIFEST);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))?;
        if self.failures.is_empty() {
            Ok(manifest)
        } else {
            Err(CliError::Partial {
                failed: self.failures.len(),
                numerical: self.failures.iter().any(|f| f.numerical),
            })
        }
    }
}
