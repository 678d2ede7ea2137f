//! Executing run configurations, persisting their logs, and parameter sweeps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    classify, tail, tail_mean, ClassifyParams, DiagnosticsRecord, RegimeLabel,
};
use crate::dynamics::{AgentState, Ensemble};
use crate::error::{FlockError, Result};
use crate::geometry::Vec3;
use crate::integrator::{simulate, Snapshot};
use crate::landscape::estimate_config_minimum;
use crate::scenario::RunConfig;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const METADATA_FILE: &str = "metadata.json";

const TRAJECTORY_HEADER: [&str; 8] = ["t", "agent", "x0", "x1", "x2", "v0", "v1", "v2"];
const DIAGNOSTICS_HEADER: [&str; 10] = [
    "t",
    "e_total",
    "e_kinetic",
    "e_config",
    "alignment",
    "centroid_norm",
    "rho",
    "max_diameter",
    "min_pair_dist",
    "max_constraint_drift",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config: RunConfig,
    pub code_version: String,
    pub e_c_min: f64,
    /// Riemannian gradient norm at the point that produced `e_c_min`.
    pub e_c_min_grad_norm: f64,
    pub warnings: Vec<String>,
    /// Set when the run stopped before `t_final`.
    pub partial: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything a run produced. Snapshots and diagnostics are index-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub metadata: RunMetadata,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<DiagnosticsRecord>,
}

/// Runs `cfg` to completion and, if `cfg.out_dir` is set, writes the three
/// output files there. A run that stops early still persists what it produced,
/// flagged as partial, and then reports the error.
pub fn run(cfg: &RunConfig) -> Result<TrajectoryLog> {
    execute(cfg).map_err(|e| e.in_run(&cfg.name))
}

fn execute(cfg: &RunConfig) -> Result<TrajectoryLog> {
    cfg.validate()?;
    let ens0 = cfg.initial_ensemble()?;
    let mut warnings = Vec::new();
    if let Some(psi) = cfg.model.psi() {
        if !psi.is_admissible() {
            warnings.push(format!("non-admissible psi {psi:?}: psi(2) != 0"));
        }
    }
    let (minimum, converged) =
        estimate_config_minimum(ens0.len(), cfg.model.energy_kernel(), &cfg.minimize)?;
    if !converged {
        warnings.push(format!(
            "e_c_min estimate did not converge (gradient norm {:e})",
            minimum.grad_norm
        ));
    }

    let outcome = simulate(&ens0, &cfg.model, &cfg.integrator);
    let mut error = outcome.error;
    let mut snapshots = Vec::with_capacity(outcome.snapshots.len());
    let mut diagnostics = Vec::with_capacity(outcome.snapshots.len());
    for snap in outcome.snapshots {
        match DiagnosticsRecord::compute(snap.t, &snap.ensemble, &cfg.model, minimum.e_c_min) {
            Ok(d) => {
                diagnostics.push(d);
                snapshots.push(snap);
            }
            Err(e) => {
                error.get_or_insert(e);
                break;
            }
        }
    }

    let log = TrajectoryLog {
        metadata: RunMetadata {
            config: cfg.clone(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            e_c_min: minimum.e_c_min,
            e_c_min_grad_norm: minimum.grad_norm,
            warnings,
            partial: error.is_some(),
            error: error.as_ref().map(|e| e.to_string()),
        },
        snapshots,
        diagnostics,
    };
    if let Some(dir) = &cfg.out_dir {
        log.persist(dir)?;
    }
    match error {
        Some(e) => Err(e),
        None => Ok(log),
    }
}

/// Shortest digits that parse back to the same f64 bit-for-bit.
fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

fn parse_f64(field: &str, what: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| FlockError::config(format!("bad number `{field}` in {what}")))
}

/// Writes through a temporary file in the same directory, then renames over the target.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| FlockError::config(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

impl TrajectoryLog {
    pub fn final_state(&self) -> Option<&Ensemble> {
        self.snapshots.last().map(|s| &s.ensemble)
    }

    pub fn trajectory_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TRAJECTORY_HEADER)?;
        for snap in &self.snapshots {
            let t = fmt_f64(snap.t);
            for (i, a) in snap.ensemble.agents().iter().enumerate() {
                let mut row = vec![t.clone(), i.to_string()];
                row.extend(a.x.0.iter().chain(&a.v.0).map(|&c| fmt_f64(c)));
                w.write_record(&row)?;
            }
        }
        w.into_inner().map_err(|e| FlockError::Io(e.into_error()))
    }

    pub fn diagnostics_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(DIAGNOSTICS_HEADER)?;
        for d in &self.diagnostics {
            w.write_record([
                fmt_f64(d.t),
                fmt_f64(d.e_total),
                fmt_f64(d.e_kinetic),
                fmt_f64(d.e_config),
                fmt_f64(d.alignment),
                fmt_f64(d.centroid_norm),
                d.rho.map(fmt_f64).unwrap_or_default(),
                fmt_f64(d.max_diameter),
                fmt_f64(d.min_pair_dist),
                fmt_f64(d.max_constraint_drift),
            ])?;
        }
        w.into_inner().map_err(|e| FlockError::Io(e.into_error()))
    }

    /// Writes the trajectory, diagnostics and metadata files into `dir`.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join(TRAJECTORY_FILE), &self.trajectory_csv()?)?;
        write_atomic(&dir.join(DIAGNOSTICS_FILE), &self.diagnostics_csv()?)?;
        let meta = serde_json::to_vec_pretty(&self.metadata)?;
        write_atomic(&dir.join(METADATA_FILE), &meta)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<TrajectoryLog> {
        let metadata: RunMetadata = serde_json::from_slice(&fs::read(dir.join(METADATA_FILE))?)?;
        let snapshots = read_trajectory(&dir.join(TRAJECTORY_FILE))?;
        let diagnostics = read_diagnostics(&dir.join(DIAGNOSTICS_FILE))?;
        if snapshots.len() != diagnostics.len()
            || snapshots
                .iter()
                .zip(&diagnostics)
                .any(|(s, d)| s.t.to_bits() != d.t.to_bits())
        {
            return Err(FlockError::config(format!(
                "trajectory and diagnostics in {} do not line up",
                dir.display()
            )));
        }
        Ok(TrajectoryLog {
            metadata,
            snapshots,
            diagnostics,
        })
    }
}

fn read_trajectory(path: &Path) -> Result<Vec<Snapshot>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out: Vec<Snapshot> = Vec::new();
    let mut current: Option<(f64, Vec<AgentState>)> = None;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != TRAJECTORY_HEADER.len() {
            return Err(FlockError::config(
                "trajectory row has the wrong number of fields",
            ));
        }
        let t = parse_f64(&rec[0], "trajectory")?;
        let mut c = [0.0; 6];
        for (k, slot) in c.iter_mut().enumerate() {
            *slot = parse_f64(&rec[k + 2], "trajectory")?;
        }
        let agent = AgentState::new(Vec3::new(c[0], c[1], c[2]), Vec3::new(c[3], c[4], c[5]));
        match &mut current {
            Some((ct, agents)) if ct.to_bits() == t.to_bits() => agents.push(agent),
            _ => {
                if let Some((ct, agents)) = current.take() {
                    out.push(Snapshot {
                        t: ct,
                        ensemble: Ensemble::new(agents)?,
                    });
                }
                current = Some((t, vec![agent]));
            }
        }
    }
    if let Some((t, agents)) = current {
        out.push(Snapshot {
            t,
            ensemble: Ensemble::new(agents)?,
        });
    }
    Ok(out)
}

fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            if rec.len() != DIAGNOSTICS_HEADER.len() {
                return Err(FlockError::config(
                    "diagnostics row has the wrong number of fields",
                ));
            }
            let f = |k: usize| parse_f64(&rec[k], "diagnostics");
            Ok(DiagnosticsRecord {
                t: f(0)?,
                e_total: f(1)?,
                e_kinetic: f(2)?,
                e_config: f(3)?,
                alignment: f(4)?,
                centroid_norm: f(5)?,
                rho: if rec[6].is_empty() { None } else { Some(f(6)?) },
                max_diameter: f(7)?,
                min_pair_dist: f(8)?,
                max_constraint_drift: f(9)?,
            })
        })
        .collect()
}

/// Final-state and tail statistics of a completed run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub max_diameter: f64,
    pub rho_tail_mean: Option<f64>,
    pub regime: Option<RegimeLabel>,
}

pub fn summarize(log: &TrajectoryLog, params: &ClassifyParams) -> RunSummary {
    let max_diameter = log.diagnostics.last().map_or(f64::NAN, |d| d.max_diameter);
    let rho_tail_mean = tail(&log.diagnostics, params.tail_fraction)
        .ok()
        .and_then(|t| t.iter().map(|d| d.rho).collect::<Option<Vec<f64>>>())
        .map(|rhos| tail_mean(rhos.into_iter()));
    let snaps: Vec<&Ensemble> = log.snapshots.iter().map(|s| &s.ensemble).collect();
    RunSummary {
        max_diameter,
        rho_tail_mean,
        regime: classify(&log.diagnostics, &snaps, params).ok(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub param: String,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["value", "max_diameter", "rho_tail_mean", "regime", "error"])?;
        for row in &self.rows {
            let s = row.summary;
            w.write_record([
                fmt_f64(row.value),
                s.map(|s| fmt_f64(s.max_diameter)).unwrap_or_default(),
                s.and_then(|s| s.rho_tail_mean)
                    .map(fmt_f64)
                    .unwrap_or_default(),
                s.and_then(|s| s.regime)
                    .map(|r| r.to_string())
                    .unwrap_or_default(),
                row.error.clone().unwrap_or_default(),
            ])?;
        }
        w.into_inner().map_err(|e| FlockError::Io(e.into_error()))
    }
}

/// Directory of the run for the `index`-th sweep value.
pub fn sweep_run_dir(base: &Path, index: usize) -> PathBuf {
    base.join(format!("run_{index:04}"))
}

/// Runs `base` once per value of the scalar at `path`, on up to `jobs` threads.
/// Failing runs become rows with an error; the sweep itself fails only for a bad
/// path or thread pool. Results do not depend on `jobs`.
pub fn sweep(base: &RunConfig, path: &str, values: &[f64], jobs: usize) -> Result<SweepReport> {
    if values.is_empty() {
        return Ok(SweepReport {
            param: path.to_string(),
            rows: Vec::new(),
        });
    }
    base.param(path)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| FlockError::config(format!("thread pool: {e}")))?;
    let params = ClassifyParams::default();
    let rows = pool.install(|| {
        values
            .par_iter()
            .enumerate()
            .map(|(i, &value)| {
                let outcome = base.with_param(path, value).and_then(|mut cfg| {
                    cfg.name = format!("{}[{path}={value}]", base.name);
                    cfg.out_dir = base.out_dir.as_deref().map(|d| sweep_run_dir(d, i));
                    run(&cfg)
                });
                match outcome {
                    Ok(log) => SweepRow {
                        value,
                        summary: Some(summarize(&log, &params)),
                        error: None,
                    },
                    Err(e) => SweepRow {
                        value,
                        summary: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    });
    let report = SweepReport {
        param: path.to_string(),
        rows,
    };
    if let Some(dir) = &base.out_dir {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join("sweep.csv"), &report.to_csv()?)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::scenario;

    fn short(name: &str, t_final: f64) -> RunConfig {
        let mut cfg = scenario(name).unwrap();
        cfg.integrator.t_final = t_final;
        cfg
    }

    #[test]
    fn log_lines_up_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = short("fig2", 0.35);
        cfg.integrator.output_every = 100;
        cfg.out_dir = Some(dir.path().to_path_buf());
        let log = run(&cfg).unwrap();
        let times: Vec<f64> = log.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(times.len(), 5);
        assert_eq!(*times.last().unwrap(), 0.35);
        assert!(log
            .diagnostics
            .iter()
            .zip(&log.snapshots)
            .all(|(d, s)| d.t == s.t));
        let back = TrajectoryLog::load(dir.path()).unwrap();
        assert_eq!(back, log);
        for (a, b) in back.snapshots.iter().zip(&log.snapshots) {
            for (p, q) in a.ensemble.agents().iter().zip(b.ensemble.agents()) {
                for k in 0..3 {
                    assert_eq!(p.x[k].to_bits(), q.x[k].to_bits());
                    assert_eq!(p.v[k].to_bits(), q.v[k].to_bits());
                }
            }
        }
        let entries: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert_eq!(entries.iter().filter(|e| e.ends_with(".json")).count(), 1);
        assert!(!entries.iter().any(|e| e.ends_with(".tmp")));
    }

    #[test]
    fn csv_headers() {
        let log = run(&short("fig2", 0.01)).unwrap();
        let traj = String::from_utf8(log.trajectory_csv().unwrap()).unwrap();
        assert!(traj.starts_with("t,agent,x0,x1,x2,v0,v1,v2\n"));
        let diag = String::from_utf8(log.diagnostics_csv().unwrap()).unwrap();
        assert!(diag.starts_with(
            "t,e_total,e_kinetic,e_config,alignment,centroid_norm,rho,max_diameter,min_pair_dist,max_constraint_drift\n"
        ));
        // 1 header + 2 snapshots of 6 agents.
        assert_eq!(traj.lines().count(), 13);
    }

    #[test]
    fn undefined_rho_is_an_empty_field() {
        let mut log = run(&short("fig2", 0.0)).unwrap();
        log.diagnostics[0].rho = None;
        let diag = String::from_utf8(log.diagnostics_csv().unwrap()).unwrap();
        let row: Vec<&str> = diag.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[6], "");
        let dir = tempfile::tempdir().unwrap();
        log.persist(dir.path()).unwrap();
        assert_eq!(
            TrajectoryLog::load(dir.path()).unwrap().diagnostics[0].rho,
            None
        );
    }

    #[test]
    fn zero_horizon_gives_single_snapshot() {
        let log = run(&short("fig2", 0.0)).unwrap();
        assert_eq!(log.snapshots.len(), 1);
        assert!(!log.metadata.partial);
    }

    #[test]
    fn metadata_records_context() {
        let log = run(&short("fig1", 0.01)).unwrap();
        assert_eq!(log.metadata.e_c_min, 0.0);
        assert!(log
            .metadata
            .warnings
            .iter()
            .any(|w| w.contains("non-admissible")));
        let fig2 = run(&short("fig2", 0.01)).unwrap();
        assert!(fig2.metadata.warnings.is_empty());
        assert!(fig2.metadata.e_c_min_grad_norm <= fig2.metadata.config.minimize.grad_tol);
        // E = E_K + E_C − E_C^min is nonnegative once E_C^min is the true minimum.
        assert!(fig2.diagnostics.iter().all(|d| d.e_total >= -1e-12));
    }

    #[test]
    fn failure_is_partial_and_in_context() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = short("fig2", 1.0);
        // Huge speeds trip the blowup guard on the first step.
        cfg.initial = crate::scenario::InitialData::Random {
            seed: 1,
            n: 3,
            speed_max: 1e4,
        };
        cfg.out_dir = Some(dir.path().to_path_buf());
        let err = run(&cfg).unwrap_err();
        assert!(matches!(err, FlockError::Run { .. }));
        assert!(err.is_numerical());
        assert!(matches!(err.root(), FlockError::Blowup { .. }));
        let back = TrajectoryLog::load(dir.path()).unwrap();
        assert!(back.metadata.partial);
        assert!(back.metadata.error.is_some());
        assert_eq!(back.snapshots.len(), 1);
    }

    #[test]
    fn config_errors_are_not_numerical() {
        let mut cfg = short("fig2", 1.0);
        cfg.integrator.dt = -1.0;
        let err = run(&cfg).unwrap_err();
        assert!(!err.is_numerical());
        assert!(matches!(err.root(), FlockError::Config(_)));
    }

    #[test]
    fn sweep_rows_and_determinism() {
        let base = short("fig2", 0.5);
        let values = [0.1, 0.3, -1.0];
        let one = sweep(&base, "sigma.sigma_r", &values, 1).unwrap();
        let many = sweep(&base, "sigma.sigma_r", &values, 3).unwrap();
        assert_eq!(one, many);
        assert_eq!(one.rows.len(), 3);
        assert!(one.rows[0].error.is_none() && one.rows[1].error.is_none());
        assert!(one.rows[2].error.is_some());
        assert!(sweep(&base, "sigma.nope", &values, 1).is_err());
        assert!(sweep(&base, "sigma.nope", &[], 1).unwrap().rows.is_empty());
    }

    #[test]
    fn sweep_writes_report_and_run_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let mut base = short("fig2", 0.2);
        base.out_dir = Some(dir.path().to_path_buf());
        sweep(&base, "sigma.sigma_a", &[1.0, 2.0], 2).unwrap();
        let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert!(csv.starts_with("value,max_diameter,rho_tail_mean,regime,error\n"));
        assert_eq!(csv.lines().count(), 3);
        for i in 0..2 {
            let log = TrajectoryLog::load(&sweep_run_dir(dir.path(), i)).unwrap();
            assert_eq!(
                log.metadata.config.model.energy_kernel().sigma_a,
                (i + 1) as f64
            );
        }
    }
}
