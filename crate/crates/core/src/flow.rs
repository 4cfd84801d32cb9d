//! Time integration of `dF/dt = K` with adaptive parabolic step control,
//! optional equal-arclength redistribution, and blow-up event detection.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ambient::AmbientSpace;
use crate::curve::{ImmersedCurve, QUALITY_FLOOR};
use crate::error::{FlowError, MeshError};
use crate::frame::{velocity_into, FrameData};
use crate::spline::PeriodicSpline;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub t_end: f64,
    /// step-safety factor in (0, 0.5]
    pub cfl: f64,
    pub dt_floor: f64,
    pub a2_ceiling: f64,
    pub remesh: bool,
    pub remesh_interval: u64,
    /// redistribution switches off once `max |A|^2` exceeds this, so the
    /// mesh can concentrate into the singular region
    pub remesh_until_a2: f64,
    pub snapshot_stride: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            cfl: 0.2,
            dt_floor: 1e-12,
            a2_ceiling: 1e8,
            remesh: false,
            remesh_interval: 10,
            remesh_until_a2: f64::INFINITY,
            snapshot_stride: 100,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return Err(FlowError::Resample(format!(
                "cfl {} outside (0, 0.5]",
                self.cfl
            )));
        }
        if self.dt_floor <= 0.0 {
            return Err(FlowError::NonPositiveStep(self.dt_floor));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub dt: f64,
    /// total curve length (the 1-dimensional area)
    pub area: f64,
    /// `U_t = max |A|^2`
    pub u: f64,
    pub max_k: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub maslov: i64,
}

#[derive(Debug, Clone, Default)]
pub struct FlowTrace {
    pub rows: Vec<TraceRow>,
}

impl FlowTrace {
    pub fn last_t(&self) -> Option<f64> {
        self.rows.last().map(|r| r.t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlowUpTrigger {
    CurvatureCeiling,
    DtFloor,
    Cusp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TerminationEvent {
    ReachedEnd { t: f64 },
    BlowUp { trigger: BlowUpTrigger, t: f64 },
    MeshDegenerate { t: f64, detail: String },
}

impl TerminationEvent {
    pub fn is_blow_up(&self) -> bool {
        matches!(self, TerminationEvent::BlowUp { .. })
    }
}

/// Full state archived during a run.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub index: usize,
    pub step: u64,
    pub t: f64,
    pub points: Vec<Complex64>,
    pub theta: Vec<f64>,
    pub curvature: Vec<f64>,
}

#[derive(Debug)]
pub struct FlowOutcome {
    pub trace: FlowTrace,
    pub event: TerminationEvent,
    pub snapshots: Vec<Snapshot>,
    pub final_curve: ImmersedCurve,
}

/// Parabolic step size `cfl * min(h_min^2, 1/U)`, unclamped; the run loop
/// compares it against `dt_floor`.
pub fn adapt_dt(frame: &FrameData, config: &FlowConfig) -> Result<f64, FlowError> {
    let h_min = frame.min_edge();
    if !(h_min > 0.0) || !h_min.is_finite() {
        return Err(FlowError::Mesh(MeshError::DegenerateEdge(0)));
    }
    let u = frame.a2_max();
    let cap = if u > 0.0 { 1.0 / u } else { f64::INFINITY };
    Ok(config.cfl * (h_min * h_min).min(cap))
}

/// One classical RK4 step of `dF/dt = K`, recomputing the frame at every
/// stage. Vertex count is preserved.
pub fn step(
    curve: &ImmersedCurve,
    space: &AmbientSpace,
    dt: f64,
) -> Result<ImmersedCurve, FlowError> {
    if !(dt > 0.0) {
        return Err(FlowError::NonPositiveStep(dt));
    }
    let n = curve.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut k1 = vec![zero; n];
    let mut k2 = vec![zero; n];
    let mut k3 = vec![zero; n];
    let mut k4 = vec![zero; n];
    let mut stage = vec![zero; n];

    velocity_into(&curve.points, space, &mut k1)?;
    for j in 0..n {
        stage[j] = curve.points[j] + k1[j] * (dt * 0.5);
    }
    velocity_into(&stage, space, &mut k2)?;
    for j in 0..n {
        stage[j] = curve.points[j] + k2[j] * (dt * 0.5);
    }
    velocity_into(&stage, space, &mut k3)?;
    for j in 0..n {
        stage[j] = curve.points[j] + k3[j] * dt;
    }
    velocity_into(&stage, space, &mut k4)?;

    let sixth = dt / 6.0;
    let points = (0..n)
        .map(|j| curve.points[j] + (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * sixth)
        .collect();
    Ok(ImmersedCurve {
        points,
        t: curve.t + dt,
    })
}

/// Resample the curve at equal arclength along its periodic cubic
/// interpolant. Vertex 0 stays anchored; vertex count is preserved.
///
/// Length bookkeeping: the interpolant arclength is preserved by
/// construction. The polygonal length can shift by `O(eps^2 h^2)` when the
/// input spacing is strongly nonuniform (remeshing recovers chord length the
/// stretched polygon was cutting); in the operational near-uniform regime
/// the change stays below 1e-8 relative.
pub fn redistribute(curve: &ImmersedCurve) -> Result<ImmersedCurve, FlowError> {
    let spline = PeriodicSpline::fit(&curve.points)?;
    let points = spline.resample(curve.len());
    let out = ImmersedCurve {
        points,
        t: curve.t,
    };
    out.validate()?;
    let quality = out.mesh_quality();
    if quality < QUALITY_FLOOR {
        return Err(FlowError::Mesh(MeshError::QualityFloor(
            quality,
            QUALITY_FLOOR,
        )));
    }
    Ok(out)
}

struct SnapshotPolicy {
    stride: u64,
    last_bucket: Option<i64>,
    last_step: Option<u64>,
}

impl SnapshotPolicy {
    fn new(stride: u64) -> Self {
        Self {
            stride: stride.max(1),
            last_bucket: None,
            last_step: None,
        }
    }

    /// Snapshot on the stride, and whenever `U` crosses an eighth-of-a-decade
    /// threshold so material accumulates densely toward blow-up.
    fn due(&mut self, step: u64, u: f64) -> bool {
        let mut take = step % self.stride == 0;
        if u >= 1.0 {
            let bucket = (u.log10() * 8.0).floor() as i64;
            if self.last_bucket.map_or(true, |b| bucket > b) {
                take = true;
            }
            if take {
                self.last_bucket = Some(bucket);
            }
        } else if take {
            self.last_bucket = None;
        }
        if take && self.last_step == Some(step) {
            return false;
        }
        if take {
            self.last_step = Some(step);
        }
        take
    }

    fn taken(&self, step: u64) -> bool {
        self.last_step == Some(step)
    }
}

/// Integrate until `t_end`, a blow-up event, or mesh degeneration.
///
/// The loop keeps going exactly while the second fundamental form stays
/// below the ceiling; crossing it, hitting the step floor, or a cusp ends
/// the run as a blow-up.
pub fn run(
    initial: ImmersedCurve,
    space: &AmbientSpace,
    config: &FlowConfig,
) -> Result<FlowOutcome, FlowError> {
    initial.validate()?;
    config.validate()?;
    let mut curve = initial;
    let mut trace = FlowTrace::default();
    let mut snapshots: Vec<Snapshot> = Vec::new();
    let mut policy = SnapshotPolicy::new(config.snapshot_stride);
    let mut step_idx: u64 = 0;

    let push_snapshot =
        |snaps: &mut Vec<Snapshot>, step: u64, curve: &ImmersedCurve, frame: &FrameData| {
            snaps.push(Snapshot {
                index: snaps.len(),
                step,
                t: curve.t,
                points: curve.points.clone(),
                theta: frame.theta.clone(),
                curvature: frame.curvature.clone(),
            });
        };

    let event = loop {
        let frame = match FrameData::compute(&curve, space) {
            Ok(f) => f,
            Err(MeshError::Cusp { .. }) => {
                break TerminationEvent::BlowUp {
                    trigger: BlowUpTrigger::Cusp,
                    t: curve.t,
                }
            }
            Err(e) => {
                break TerminationEvent::MeshDegenerate {
                    t: curve.t,
                    detail: e.to_string(),
                }
            }
        };
        let u = frame.a2_max();
        let (theta_min, theta_max) = frame.theta_range();

        // provisional dt for the row; replaced by the step actually taken
        let dt_raw = match adapt_dt(&frame, config) {
            Ok(v) => v,
            Err(e) => {
                break TerminationEvent::MeshDegenerate {
                    t: curve.t,
                    detail: e.to_string(),
                }
            }
        };

        let remaining = config.t_end - curve.t;
        let dt_row = if remaining > 0.0 {
            dt_raw.min(remaining)
        } else {
            dt_raw
        };
        trace.rows.push(TraceRow {
            t: curve.t,
            dt: dt_row,
            area: frame.edge_len.iter().sum(),
            u,
            max_k: frame.max_speed(),
            theta_min,
            theta_max,
            maslov: frame.maslov,
        });

        if policy.due(step_idx, u) {
            push_snapshot(&mut snapshots, step_idx, &curve, &frame);
        }

        if u >= config.a2_ceiling {
            if !policy.taken(step_idx) {
                push_snapshot(&mut snapshots, step_idx, &curve, &frame);
            }
            break TerminationEvent::BlowUp {
                trigger: BlowUpTrigger::CurvatureCeiling,
                t: curve.t,
            };
        }
        if remaining <= 0.0 {
            if !policy.taken(step_idx) {
                push_snapshot(&mut snapshots, step_idx, &curve, &frame);
            }
            break TerminationEvent::ReachedEnd { t: curve.t };
        }
        if dt_raw < config.dt_floor {
            if !policy.taken(step_idx) {
                push_snapshot(&mut snapshots, step_idx, &curve, &frame);
            }
            break TerminationEvent::BlowUp {
                trigger: BlowUpTrigger::DtFloor,
                t: curve.t,
            };
        }
        let dt = dt_raw.min(remaining);

        curve = match step(&curve, space, dt) {
            Ok(c) => c,
            Err(FlowError::Mesh(MeshError::Cusp { .. })) => {
                break TerminationEvent::BlowUp {
                    trigger: BlowUpTrigger::Cusp,
                    t: curve.t,
                }
            }
            Err(e) => {
                break TerminationEvent::MeshDegenerate {
                    t: curve.t,
                    detail: e.to_string(),
                }
            }
        };
        step_idx += 1;

        if config.remesh
            && u <= config.remesh_until_a2
            && step_idx % config.remesh_interval.max(1) == 0
        {
            curve = match redistribute(&curve) {
                Ok(c) => c,
                Err(e) => {
                    break TerminationEvent::MeshDegenerate {
                        t: curve.t,
                        detail: e.to_string(),
                    }
                }
            };
        }
    };

    Ok(FlowOutcome {
        trace,
        event,
        snapshots,
        final_curve: curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::AmbientSpace;

    fn flat() -> AmbientSpace {
        AmbientSpace::flat(1)
    }

    #[test]
    fn shrinking_circle_matches_exact_radius_law() {
        // R(t) = sqrt(R0^2 - 2t)
        let mut curve = ImmersedCurve::circle(1.0, 256);
        let space = flat();
        let cfg = FlowConfig::default();
        while curve.t < 0.18 {
            let frame = FrameData::compute(&curve, &space).unwrap();
            let dt = adapt_dt(&frame, &cfg)
                .unwrap()
                .min(0.18 - curve.t);
            curve = step(&curve, &space, dt).unwrap();
        }
        let expect = (1.0f64 - 2.0 * 0.18).sqrt();
        for p in &curve.points {
            assert!(
                (p.norm() - expect).abs() < 1e-4,
                "radius {} vs {}",
                p.norm(),
                expect
            );
        }
    }

    #[test]
    fn straight_window_is_a_fixed_point() {
        // stadium curve: collinear vertices have exactly zero turning angle,
        // so with W = 0 their velocity vanishes and one step must leave the
        // straight window untouched while the caps move
        let m = 40;
        let mut pts = Vec::new();
        for j in 0..m {
            pts.push(Complex64::new(-2.0 + 4.0 * j as f64 / m as f64, 0.0));
        }
        for j in 0..m {
            let a = std::f64::consts::PI * j as f64 / m as f64;
            pts.push(Complex64::new(2.0 + a.sin(), 1.0 - a.cos()));
        }
        for j in 0..m {
            pts.push(Complex64::new(2.0 - 4.0 * j as f64 / m as f64, 2.0));
        }
        for j in 0..m {
            let a = std::f64::consts::PI * j as f64 / m as f64;
            pts.push(Complex64::new(-2.0 - a.sin(), 1.0 + a.cos()));
        }
        let c = ImmersedCurve { points: pts, t: 0.0 };
        let stepped = step(&c, &flat(), 1e-4).unwrap();
        // interior straight vertices (away from cap influence) are pinned
        for j in 5..m - 5 {
            assert!(
                (stepped.points[j] - c.points[j]).norm() <= 1e-12,
                "window vertex {j} moved"
            );
        }
        // cap vertices do move
        let cap = m + m / 2;
        assert!((stepped.points[cap] - c.points[cap]).norm() > 1e-6);
    }

    #[test]
    fn adapt_dt_arithmetic() {
        let c = ImmersedCurve::circle(1.0, 256);
        let f = FrameData::compute(&c, &flat()).unwrap();
        let cfg = FlowConfig {
            cfl: 0.2,
            ..Default::default()
        };
        let dt = adapt_dt(&f, &cfg).unwrap();
        let h = 2.0 * (std::f64::consts::PI / 256.0).sin();
        assert!((dt - 0.2 * h * h).abs() < 1e-6 * dt);
    }

    #[test]
    fn adapt_dt_ceiling_branch() {
        // U = 1e9 forces dt = cfl / U = 2e-10
        let c = ImmersedCurve::circle(1.0, 256);
        let mut f = FrameData::compute(&c, &flat()).unwrap();
        f.curvature[7] = (1e9f64).sqrt();
        let cfg = FlowConfig {
            cfl: 0.2,
            ..Default::default()
        };
        let dt = adapt_dt(&f, &cfg).unwrap();
        assert!((dt - 2e-10).abs() < 1e-22);
    }

    #[test]
    fn figure_eight_step_keeps_maslov_zero() {
        let c = ImmersedCurve::figure_eight(1.0, 1.0, 512);
        let space = flat();
        let stepped = step(&c, &space, 1e-5).unwrap();
        let f = FrameData::compute(&stepped, &space).unwrap();
        assert_eq!(f.maslov_index().unwrap(), 0);
    }

    #[test]
    fn run_circle_blow_up_time() {
        let cfg = FlowConfig {
            t_end: 10.0,
            cfl: 0.4,
            a2_ceiling: 1e6,
            snapshot_stride: 5000,
            ..Default::default()
        };
        let out = run(ImmersedCurve::circle(1.0, 256), &flat(), &cfg).unwrap();
        assert!(out.event.is_blow_up());
        let t_last = out.trace.last_t().unwrap();
        assert!(
            (t_last - 0.5).abs() < 1e-3,
            "terminal time {t_last} vs 0.5"
        );
        // (T - t) U ~ 1/2 on the last rows, measured against the discrete
        // singular time: the polygon shrinks with k = c/R,
        // c = (pi/N)/sin(pi/N), so T_disc = t + c/(2 U)
        let last = out.trace.rows.last().unwrap();
        let c_disc = (std::f64::consts::PI / 256.0) / (std::f64::consts::PI / 256.0).sin();
        let t_disc = last.t + c_disc / (2.0 * last.u);
        let n = out.trace.rows.len();
        for row in &out.trace.rows[n - 20..] {
            let q = (t_disc - row.t) * row.u;
            assert!((q - 0.5).abs() < 0.01, "q = {q}");
        }
        // maslov stays 1 on every row
        assert!(out.trace.rows.iter().all(|r| r.maslov == 1));
    }

    #[test]
    fn redistribute_is_idempotent() {
        let n = 256;
        let points: Vec<Complex64> = (0..n)
            .map(|j| {
                let u = std::f64::consts::TAU * j as f64 / n as f64;
                let phi = u + 0.15 * u.sin();
                Complex64::from_polar(1.0, phi)
            })
            .collect();
        let c = ImmersedCurve { points, t: 0.0 };
        let once = redistribute(&c).unwrap();
        let twice = redistribute(&once).unwrap();
        for j in 0..n {
            assert!(
                (once.points[j] - twice.points[j]).norm() < 1e-9,
                "vertex {j}"
            );
        }
    }

    #[test]
    fn redistribute_preserves_interpolant_length() {
        // operational regime: mildly nonuniform input
        let n = 512;
        let points: Vec<Complex64> = (0..n)
            .map(|j| {
                let u = std::f64::consts::TAU * j as f64 / n as f64;
                let phi = u + 0.02 * (2.0 * u).sin();
                Complex64::from_polar(1.0, phi)
            })
            .collect();
        let c = ImmersedCurve { points, t: 0.0 };
        let before = PeriodicSpline::fit(&c.points).unwrap().total_arclength();
        let after_curve = redistribute(&c).unwrap();
        let after = PeriodicSpline::fit(&after_curve.points)
            .unwrap()
            .total_arclength();
        assert!(
            ((after - before) / before).abs() < 1e-8,
            "relative length drift {}",
            (after - before) / before
        );
        // polygonal drift also stays tiny in this regime
        let poly = (after_curve.total_length() - c.total_length()) / c.total_length();
        assert!(poly.abs() < 1e-6, "polygon drift {poly}");
    }

    #[test]
    fn remesh_toggle_changes_little_on_circle() {
        let cfg_off = FlowConfig {
            t_end: 0.2,
            snapshot_stride: 10_000,
            ..Default::default()
        };
        let cfg_on = FlowConfig {
            remesh: true,
            remesh_interval: 10,
            ..cfg_off.clone()
        };
        let a = run(ImmersedCurve::circle(1.0, 256), &flat(), &cfg_off).unwrap();
        let b = run(ImmersedCurve::circle(1.0, 256), &flat(), &cfg_on).unwrap();
        let ra = a.trace.rows.last().unwrap();
        let rb = b.trace.rows.last().unwrap();
        assert!((ra.area - rb.area).abs() / ra.area < 5e-3);
        assert!((ra.u - rb.u).abs() / ra.u < 5e-3);
    }
}
