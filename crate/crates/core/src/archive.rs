//! Run-archive layout:
//!
//! ```text
//! out_dir/
//!   config.resolved        byte-exact echo of the effective config
//!   trace.csv              t,dt,area,U,maxK,theta_min,theta_max,maslov
//!   event.json             termination event
//!   snapshots/s_<i>.csv    x,y,theta,k
//!   snapshots/index.json   [{index, step, t}]
//!   verify_report.json     (written by the verify command)
//!   report.json            (written by the analyze command)
//!   density.csv, lemma33.csv, spectrum.csv
//!   frames/*.svg           (optional)
//! ```

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::curve::ImmersedCurve;
use crate::density::{BudgetReport, SampledCurve};
use crate::error::ArchiveError;
use crate::flow::{FlowOutcome, FlowTrace, Snapshot, TerminationEvent, TraceRow};
use crate::singularity::SpectrumCluster;

pub const TRACE_HEADER: &str = "t,dt,area,U,maxK,theta_min,theta_max,maslov";
pub const SNAPSHOT_HEADER: &str = "x,y,theta,k";
pub const DENSITY_HEADER: &str = "t,tau,phi,defect,slack,weight_term,resolved";
pub const DECAY_HEADER: &str = "lambda,f_perp_sq,h_sq,k_sq";
pub const SPECTRUM_HEADER: &str = "theta,mass";

fn io_err(path: &Path, source: std::io::Error) -> ArchiveError {
    ArchiveError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ArchiveError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(bytes).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArchiveError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| ArchiveError::Malformed {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    write_file(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ArchiveError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| ArchiveError::Malformed {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    index: usize,
    step: u64,
    t: f64,
}

fn trace_csv(trace: &FlowTrace) -> String {
    let mut s = String::with_capacity(64 * trace.rows.len() + 64);
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for r in &trace.rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.t, r.dt, r.area, r.u, r.max_k, r.theta_min, r.theta_max, r.maslov
        ));
    }
    s
}

fn snapshot_csv(s: &Snapshot) -> String {
    let mut out = String::with_capacity(48 * s.points.len() + 16);
    out.push_str(SNAPSHOT_HEADER);
    out.push('\n');
    for j in 0..s.points.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.points[j].re, s.points[j].im, s.theta[j], s.curvature[j]
        ));
    }
    out
}

/// Persist a finished run under `dir`.
pub fn write_run(
    dir: &Path,
    config: &RunConfig,
    outcome: &FlowOutcome,
) -> Result<(), ArchiveError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_file(
        &dir.join("config.resolved"),
        config.resolved_text().as_bytes(),
    )?;
    write_file(&dir.join("trace.csv"), trace_csv(&outcome.trace).as_bytes())?;
    write_json(&dir.join("event.json"), &outcome.event)?;
    let snap_dir = dir.join("snapshots");
    fs::create_dir_all(&snap_dir).map_err(|e| io_err(&snap_dir, e))?;
    let mut index = Vec::new();
    for s in &outcome.snapshots {
        write_file(
            &snap_dir.join(format!("s_{}.csv", s.index)),
            snapshot_csv(s).as_bytes(),
        )?;
        index.push(IndexEntry {
            index: s.index,
            step: s.step,
            t: s.t,
        });
    }
    write_json(&snap_dir.join("index.json"), &index)?;
    Ok(())
}

#[derive(Debug)]
pub struct RunArchive {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub trace: FlowTrace,
    pub event: TerminationEvent,
    pub snapshots: Vec<Snapshot>,
}

fn parse_f64_field(path: &Path, line: usize, v: &str) -> Result<f64, ArchiveError> {
    v.parse().map_err(|_| ArchiveError::Malformed {
        path: path.display().to_string(),
        msg: format!("line {line}: bad float `{v}`"),
    })
}

fn read_trace(path: &Path) -> Result<FlowTrace, ArchiveError> {
    let text = fs::read_to_string(path).map_err(|_| {
        ArchiveError::Missing(path.display().to_string())
    })?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != TRACE_HEADER {
                return Err(ArchiveError::Malformed {
                    path: path.display().to_string(),
                    msg: format!("unexpected header `{line}`"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return Err(ArchiveError::Malformed {
                path: path.display().to_string(),
                msg: format!("line {}: expected 8 fields", i + 1),
            });
        }
        rows.push(TraceRow {
            t: parse_f64_field(path, i + 1, parts[0])?,
            dt: parse_f64_field(path, i + 1, parts[1])?,
            area: parse_f64_field(path, i + 1, parts[2])?,
            u: parse_f64_field(path, i + 1, parts[3])?,
            max_k: parse_f64_field(path, i + 1, parts[4])?,
            theta_min: parse_f64_field(path, i + 1, parts[5])?,
            theta_max: parse_f64_field(path, i + 1, parts[6])?,
            maslov: parts[7].parse().map_err(|_| ArchiveError::Malformed {
                path: path.display().to_string(),
                msg: format!("line {}: bad maslov `{}`", i + 1, parts[7]),
            })?,
        });
    }
    Ok(FlowTrace { rows })
}

fn read_snapshot(path: &Path, index: usize, step: u64, t: f64) -> Result<Snapshot, ArchiveError> {
    let text = fs::read_to_string(path).map_err(|_| {
        ArchiveError::Missing(path.display().to_string())
    })?;
    let mut points = Vec::new();
    let mut theta = Vec::new();
    let mut curvature = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != SNAPSHOT_HEADER {
                return Err(ArchiveError::Malformed {
                    path: path.display().to_string(),
                    msg: format!("unexpected header `{line}`"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(ArchiveError::Malformed {
                path: path.display().to_string(),
                msg: format!("line {}: expected 4 fields", i + 1),
            });
        }
        points.push(Complex64::new(
            parse_f64_field(path, i + 1, parts[0])?,
            parse_f64_field(path, i + 1, parts[1])?,
        ));
        theta.push(parse_f64_field(path, i + 1, parts[2])?);
        curvature.push(parse_f64_field(path, i + 1, parts[3])?);
    }
    Ok(Snapshot {
        index,
        step,
        t,
        points,
        theta,
        curvature,
    })
}

/// Load a run archive; every file referenced by the index must exist.
pub fn read_run(dir: &Path) -> Result<RunArchive, ArchiveError> {
    let config_path = dir.join("config.resolved");
    let config_text = fs::read_to_string(&config_path)
        .map_err(|_| ArchiveError::Missing(config_path.display().to_string()))?;
    let config = RunConfig::parse(&config_text).map_err(|e| ArchiveError::Malformed {
        path: config_path.display().to_string(),
        msg: e.to_string(),
    })?;
    let trace = read_trace(&dir.join("trace.csv"))?;
    let event: TerminationEvent = read_json(&dir.join("event.json"))?;
    let index_path = dir.join("snapshots").join("index.json");
    let index: Vec<IndexEntry> = read_json(&index_path)?;
    let mut snapshots = Vec::with_capacity(index.len());
    for e in &index {
        let path = dir.join("snapshots").join(format!("s_{}.csv", e.index));
        snapshots.push(read_snapshot(&path, e.index, e.step, e.t)?);
    }
    Ok(RunArchive {
        dir: dir.to_path_buf(),
        config,
        trace,
        event,
        snapshots,
    })
}

impl RunArchive {
    /// Rebuild an in-memory outcome; the final curve comes from the last
    /// snapshot.
    pub fn to_outcome(&self) -> Result<FlowOutcome, ArchiveError> {
        let last = self.snapshots.last().ok_or_else(|| {
            ArchiveError::Missing("snapshots/ (archive has none)".into())
        })?;
        Ok(FlowOutcome {
            trace: FlowTrace {
                rows: self.trace.rows.clone(),
            },
            event: self.event.clone(),
            snapshots: self.snapshots.clone(),
            final_curve: ImmersedCurve {
                points: last.points.clone(),
                t: last.t,
            },
        })
    }
}

pub fn write_density_csv(path: &Path, report: &BudgetReport) -> Result<(), ArchiveError> {
    let mut s = String::new();
    s.push_str(DENSITY_HEADER);
    s.push('\n');
    for r in &report.rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.t, r.tau, r.phi, r.defect, r.slack, r.weight_term, r.resolved
        ));
    }
    write_file(path, s.as_bytes())
}

pub fn write_decay_csv(path: &Path, rows: &[(f64, f64, f64, f64)]) -> Result<(), ArchiveError> {
    let mut s = String::new();
    s.push_str(DECAY_HEADER);
    s.push('\n');
    for (lambda, a, b, c) in rows {
        s.push_str(&format!("{lambda},{a},{b},{c}\n"));
    }
    write_file(path, s.as_bytes())
}

pub fn write_spectrum_csv(path: &Path, clusters: &[SpectrumCluster]) -> Result<(), ArchiveError> {
    let mut s = String::new();
    s.push_str(SPECTRUM_HEADER);
    s.push('\n');
    for c in clusters {
        s.push_str(&format!("{},{}\n", c.theta, c.mass));
    }
    write_file(path, s.as_bytes())
}

/// Kernel-ready samples from archived snapshots (frames recomputed from the
/// stored points).
pub fn samples_from_archive(
    archive: &RunArchive,
) -> Result<Vec<SampledCurve>, crate::error::AnalysisError> {
    let space = archive
        .config
        .ambient()
        .map_err(|e| crate::error::AnalysisError::Probe(e.to_string()))?;
    let mut out = Vec::with_capacity(archive.snapshots.len());
    for s in &archive.snapshots {
        let curve = ImmersedCurve {
            points: s.points.clone(),
            t: s.t,
        };
        let frame = crate::frame::FrameData::compute(&curve, &space)?;
        out.push(SampledCurve::from_frame(&curve, &frame, &space));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{self, FlowConfig};

    #[test]
    fn archive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let space = cfg.ambient().unwrap();
        let flow_cfg = FlowConfig {
            t_end: 0.005,
            snapshot_stride: 10,
            ..Default::default()
        };
        let out = flow::run(
            ImmersedCurve::circle(1.0, 64),
            &space,
            &flow_cfg,
        )
        .unwrap();
        write_run(dir.path(), &cfg, &out).unwrap();

        let back = read_run(dir.path()).unwrap();
        assert_eq!(back.config, cfg);
        assert_eq!(back.trace.rows.len(), out.trace.rows.len());
        assert_eq!(back.snapshots.len(), out.snapshots.len());
        // floats survive the text round trip exactly
        for (a, b) in back.trace.rows.iter().zip(&out.trace.rows) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.u, b.u);
        }
        for (a, b) in back.snapshots.iter().zip(&out.snapshots) {
            assert_eq!(a.points, b.points);
            assert_eq!(a.theta, b.theta);
        }
    }

    #[test]
    fn missing_snapshot_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let space = cfg.ambient().unwrap();
        let out = flow::run(
            ImmersedCurve::circle(1.0, 64),
            &space,
            &FlowConfig {
                t_end: 0.002,
                snapshot_stride: 5,
                ..Default::default()
            },
        )
        .unwrap();
        write_run(dir.path(), &cfg, &out).unwrap();
        std::fs::remove_file(dir.path().join("snapshots").join("s_0.csv")).unwrap();
        match read_run(dir.path()) {
            Err(ArchiveError::Missing(p)) => assert!(p.contains("s_0.csv")),
            other => panic!("expected missing-file error, got {other:?}"),
        }
    }
}
