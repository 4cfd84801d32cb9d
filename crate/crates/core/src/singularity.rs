//! Post-processing of blow-up runs: singular-time estimation, blow-up-rate
//! classification, tangent-flow extraction, and the angle-spectrum
//! diagnostic.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::ambient::{dot, AmbientSpace};
use crate::curve::ImmersedCurve;
use crate::density::{
    self, volume_ratio, DensityProbe, RescaledSnapshot, SampledCurve, WeightFn,
};
use crate::error::AnalysisError;
use crate::flow::{FlowOutcome, FlowTrace};
use crate::frame::FrameData;
use crate::verify;

pub const DEFAULT_CLUSTER_GAP: f64 = 0.1;
pub const DEFAULT_C_MAX: f64 = 5.0;
/// Q-flatness threshold: |dQ/dlog(T-t)| <= 5% of mean Q counts as Type-I
pub const FLATNESS: f64 = 0.05;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn decimate<T: Copy>(xs: &[T], cap: usize) -> Vec<T> {
    if xs.len() <= cap {
        return xs.to_vec();
    }
    let stride = xs.len() as f64 / cap as f64;
    (0..cap)
        .map(|i| xs[(i as f64 * stride) as usize])
        .collect()
}

/// Tail of the trace where `U >= 100 median(U)`.
fn blowup_tail(trace: &FlowTrace) -> Vec<(f64, f64)> {
    let med = median(trace.rows.iter().map(|r| r.u).collect());
    trace
        .rows
        .iter()
        .filter(|r| r.u >= 100.0 * med)
        .map(|r| (r.t, r.u))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TEstimate {
    pub t_est: f64,
    pub uncertainty: f64,
    /// R^2 of the linear fit of 1/U against t on the tail
    pub fit_quality: f64,
    pub tail_rows: usize,
    /// quality gate failed; fell back to last time + dt_floor
    pub fallback: bool,
}

/// Recover the singular time from the tail of `1/U` by a robust
/// (median-of-slopes) linear fit; `T` is the time intercept.
pub fn estimate_t(trace: &FlowTrace, dt_floor: f64) -> Result<TEstimate, AnalysisError> {
    let tail = blowup_tail(trace);
    let last_t = trace
        .rows
        .last()
        .map(|r| r.t)
        .ok_or(AnalysisError::TooFewSamples { need: 2, got: 0 })?;
    let fallback = |rows: usize| TEstimate {
        t_est: last_t + dt_floor,
        uncertainty: f64::NAN,
        fit_quality: 0.0,
        tail_rows: rows,
        fallback: true,
    };
    if tail.len() < 8 {
        return Ok(fallback(tail.len()));
    }
    let pts: Vec<(f64, f64)> = decimate(&tail, 801)
        .into_iter()
        .map(|(t, u)| (t, 1.0 / u))
        .collect();

    // Theil-Sen slope and intercept
    let mut slopes = Vec::with_capacity(pts.len() * (pts.len() - 1) / 2);
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let dt = pts[j].0 - pts[i].0;
            if dt != 0.0 {
                slopes.push((pts[j].1 - pts[i].1) / dt);
            }
        }
    }
    let m = median(slopes);
    if !(m < 0.0) {
        return Ok(fallback(tail.len()));
    }
    let b = median(pts.iter().map(|(t, y)| y - m * t).collect());
    let t_est = -b / m;

    // quality and scatter of the fitted line
    let resid: Vec<f64> = pts.iter().map(|(t, y)| y - (m * t + b)).collect();
    let ss_res: f64 = resid.iter().map(|r| r * r).sum();
    let mean_y: f64 = pts.iter().map(|(_, y)| y).sum::<f64>() / pts.len() as f64;
    let ss_tot: f64 = pts.iter().map(|(_, y)| (y - mean_y).powi(2)).sum();
    let quality = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    if quality < 0.9 {
        return Ok(fallback(tail.len()));
    }
    let mad = median(resid.iter().map(|r| r.abs()).collect());
    let uncertainty = 1.4826 * mad / m.abs() / (pts.len() as f64).sqrt();
    Ok(TEstimate {
        t_est,
        uncertainty,
        fit_quality: quality,
        tail_rows: tail.len(),
        fallback: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Verdict {
    TypeI {
        c_est: f64,
    },
    /// the run is not Type-I at the resolved scales; a finite computation
    /// cannot certify the unbounded limsup, so the evidence string carries
    /// what was actually observed
    TypeII {
        q_max: f64,
        note: String,
    },
    NoSingularity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    /// raw `(t, Q)` series on the tail, `Q = (T_est - t) U`
    pub q_series: Vec<(f64, f64)>,
    /// OLS slope of `Q` against `log(T_est - t)`
    pub slope: f64,
    pub q_mean: f64,
    pub q_max: f64,
}

/// Classify the blow-up rate from the tail behaviour of
/// `Q(t) = (T_est - t) max|A|^2`.
pub fn classify(trace: &FlowTrace, t_est: f64, c_max: f64) -> Classification {
    let tail = blowup_tail(trace);
    let q_full: Vec<(f64, f64)> = tail
        .iter()
        .filter(|(t, _)| *t < t_est)
        .map(|(t, u)| (*t, (t_est - t) * u))
        .collect();
    let qs = decimate(&q_full, 801);
    if qs.len() < 4 {
        return Classification {
            verdict: Verdict::TypeII {
                q_max: f64::NAN,
                note: "tail too short to classify; not Type-I at resolved scales".into(),
            },
            q_series: qs,
            slope: f64::NAN,
            q_mean: f64::NAN,
            q_max: f64::NAN,
        };
    }
    let q_mean = qs.iter().map(|(_, q)| q).sum::<f64>() / qs.len() as f64;
    let q_max = qs.iter().map(|(_, q)| *q).fold(0.0, f64::max);
    // OLS of Q against x = log(T - t)
    let xs: Vec<f64> = qs.iter().map(|(t, _)| (t_est - t).ln()).collect();
    let ys: Vec<f64> = qs.iter().map(|(_, q)| *q).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };

    let flat = slope.abs() <= FLATNESS * q_mean;
    let bounded = q_max <= c_max;
    let verdict = if bounded && flat {
        Verdict::TypeI { c_est: q_mean }
    } else if q_max > c_max && slope < 0.0 {
        Verdict::TypeII {
            q_max,
            note: format!(
                "not Type-I at resolved scales: Q exceeded C_max = {c_max} and keeps \
                 growing toward the singular time (slope {slope:.3})"
            ),
        }
    } else {
        Verdict::TypeII {
            q_max,
            note: format!(
                "not Type-I at resolved scales: Q neither bounded-flat nor conclusively \
                 growing (max {q_max:.3}, slope {slope:.3})"
            ),
        }
    };
    Classification {
        verdict,
        q_series: qs,
        slope,
        q_mean,
        q_max,
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpectrumCluster {
    /// mass-weighted circular mean, reported mod 2 pi in [0, 2 pi)
    pub theta: f64,
    pub mass: f64,
}

/// Gaussian-weighted angle histogram of a rescaled snapshot, clustered by a
/// circular gap threshold. Returns the clusters and the total Gaussian mass.
pub fn extract_spectrum(
    snap: &RescaledSnapshot,
    gap: f64,
    r: f64,
) -> Result<(Vec<SpectrumCluster>, f64), AnalysisError> {
    let probe = snap.probe(WeightFn::One, r);
    let (resolved, width, h) = density::kernel_resolution(&snap.data, &probe);
    if !resolved {
        return Err(AnalysisError::Unresolved { width, h });
    }
    let d = &snap.data;
    let mut weighted: Vec<(f64, f64)> = Vec::with_capacity(d.len());
    let mut total = 0.0;
    for j in 0..d.len() {
        let phi = density::cutoff(&probe, d.points[j]);
        if phi == 0.0 {
            continue;
        }
        let w = phi * density::backward_kernel(&probe, d.points[j], d.t)? * d.dual_len[j];
        if w <= 0.0 {
            continue;
        }
        total += w;
        weighted.push((d.theta[j].rem_euclid(TAU), w));
    }
    if weighted.is_empty() {
        return Ok((Vec::new(), 0.0));
    }
    weighted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // circular gap split: find boundaries where consecutive angles jump by
    // more than `gap`
    let m = weighted.len();
    let mut cut_after: Vec<usize> = Vec::new();
    for i in 0..m {
        let a = weighted[i].0;
        let b = if i + 1 < m {
            weighted[i + 1].0
        } else {
            weighted[0].0 + TAU
        };
        if b - a > gap {
            cut_after.push(i);
        }
    }
    let mut clusters = Vec::new();
    if cut_after.is_empty() {
        clusters.push(circular_mean(&weighted));
    } else {
        let first_start = (cut_after[cut_after.len() - 1] + 1) % m;
        let mut start = first_start;
        for &cut in &cut_after {
            let mut chunk = Vec::new();
            let mut i = start;
            loop {
                chunk.push(weighted[i]);
                if i == cut {
                    break;
                }
                i = (i + 1) % m;
            }
            clusters.push(circular_mean(&chunk));
            start = (cut + 1) % m;
        }
    }
    // drop numerical dust, keep raw masses otherwise
    let floor = 1e-3 * total;
    let mut clusters: Vec<SpectrumCluster> = clusters
        .into_iter()
        .filter(|c| c.mass >= floor)
        .collect();
    clusters.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    Ok((clusters, total))
}

fn circular_mean(chunk: &[(f64, f64)]) -> SpectrumCluster {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut mass = 0.0;
    for (a, w) in chunk {
        sx += w * a.cos();
        sy += w * a.sin();
        mass += w;
    }
    SpectrumCluster {
        theta: sy.atan2(sx).rem_euclid(TAU),
        mass,
    }
}

/// Radial-alignment diagnostic `int |F^perp|^2 phi rho / int phi rho`; small
/// values certify conical structure.
pub fn cone_alignment(snap: &RescaledSnapshot, r: f64) -> Result<f64, AnalysisError> {
    let probe = snap.probe(WeightFn::One, r);
    let d = &snap.data;
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..d.len() {
        let phi = density::cutoff(&probe, d.points[j]);
        if phi == 0.0 {
            continue;
        }
        let w = phi * density::backward_kernel(&probe, d.points[j], d.t)? * d.dual_len[j];
        let fperp = dot(d.points[j], d.normal[j]);
        num += fperp * fperp * w;
        den += w;
    }
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentCheck {
    pub q: u32,
    pub y: f64,
    /// `sum_j mass_j (theta_j - y)^{2q}`
    pub cluster_sum: f64,
    /// `int (theta - y)^{2q} phi rho dmu`
    pub integral: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub x0: Option<Complex64>,
    pub r: f64,
    pub cluster_gap: f64,
    pub c_max: f64,
    /// rescaled time at which spectra are extracted
    pub s_extract: f64,
    /// number of dyadic rescale levels ending at the anchor
    pub levels: usize,
    pub dt_floor: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            x0: None,
            r: f64::INFINITY,
            cluster_gap: DEFAULT_CLUSTER_GAP,
            c_max: DEFAULT_C_MAX,
            s_extract: -0.5,
            levels: 4,
            dt_floor: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularityReport {
    pub verdict: Verdict,
    pub t_est: Option<f64>,
    pub t_uncertainty: Option<f64>,
    pub fit_quality: Option<f64>,
    pub fit_fallback: bool,
    pub q_series: Vec<(f64, f64)>,
    pub q_slope: Option<f64>,
    pub lower_bound_margin: Option<f64>,
    pub lower_bound_passed: Option<bool>,
    pub maslov: i64,
    pub zero_maslov: bool,
    pub center: Option<(f64, f64)>,
    pub rescales_used: Vec<f64>,
    pub spectrum: Vec<SpectrumCluster>,
    pub spectrum_total_mass: Option<f64>,
    pub spectrum_note: String,
    /// largest matched cluster-center drift across the rescale family (rad)
    pub center_drift: Option<f64>,
    pub cone_alignment: Option<f64>,
    /// max volume ratio over the rescale family and R in [0.1, 10]
    pub volume_ratio_bound: Option<f64>,
    /// same bound with one extra dyadic level, for stability auditing
    pub volume_ratio_bound_extended: Option<f64>,
    pub moment_checks: Vec<MomentCheck>,
}

impl SingularityReport {
    fn minimal(maslov: i64) -> Self {
        Self {
            verdict: Verdict::NoSingularity,
            t_est: None,
            t_uncertainty: None,
            fit_quality: None,
            fit_fallback: false,
            q_series: Vec::new(),
            q_slope: None,
            lower_bound_margin: None,
            lower_bound_passed: None,
            maslov,
            zero_maslov: maslov == 0,
            center: None,
            rescales_used: Vec::new(),
            spectrum: Vec::new(),
            spectrum_total_mass: None,
            spectrum_note: "no singularity: run reached its end time".into(),
            center_drift: None,
            cone_alignment: None,
            volume_ratio_bound: None,
            volume_ratio_bound_extended: None,
            moment_checks: Vec::new(),
        }
    }
}

/// Density-weighted centroid of the highest-curvature region
/// (`k^2 >= U/4`) of a sample.
pub fn curvature_centroid(sample: &SampledCurve) -> Complex64 {
    let u = sample
        .curvature
        .iter()
        .map(|k| k * k)
        .fold(0.0, f64::max);
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = 0.0;
    for j in 0..sample.len() {
        let k2 = sample.curvature[j] * sample.curvature[j];
        if k2 >= 0.25 * u {
            let w = k2 * sample.dual_len[j];
            num += sample.points[j] * w;
            den += w;
        }
    }
    if den == 0.0 {
        // flat configuration: fall back to the plain centroid
        let n = sample.len() as f64;
        return sample.points.iter().sum::<Complex64>() / n;
    }
    num / den
}

const RATIO_GRID: [f64; 9] = [0.1, 0.2, 0.46, 1.0, 2.2, 4.6, 6.8, 8.4, 10.0];

/// Full post-processing of a finished run.
pub fn analyze(
    outcome: &FlowOutcome,
    space: &AmbientSpace,
    opts: &AnalysisOptions,
) -> Result<SingularityReport, AnalysisError> {
    let maslov = outcome.trace.rows.last().map(|r| r.maslov).unwrap_or(0);
    if !outcome.event.is_blow_up() {
        return Ok(SingularityReport::minimal(maslov));
    }
    let est = estimate_t(&outcome.trace, opts.dt_floor)?;
    let class = classify(&outcome.trace, est.t_est, opts.c_max);
    let bound = verify::blowup_lower_bound(&outcome.trace, true, est.t_est);

    // snapshots as kernel-ready samples
    let mut samples: Vec<SampledCurve> = Vec::with_capacity(outcome.snapshots.len());
    for s in &outcome.snapshots {
        if s.t >= est.t_est {
            continue;
        }
        let c = ImmersedCurve {
            points: s.points.clone(),
            t: s.t,
        };
        let f = FrameData::compute(&c, space)?;
        samples.push(SampledCurve::from_frame(&c, &f, space));
    }

    let mut report = SingularityReport {
        verdict: class.verdict.clone(),
        t_est: Some(est.t_est),
        t_uncertainty: Some(est.uncertainty),
        fit_quality: Some(est.fit_quality),
        fit_fallback: est.fallback,
        q_series: class.q_series.clone(),
        q_slope: Some(class.slope),
        lower_bound_margin: if bound.applicable {
            Some(bound.margin)
        } else {
            None
        },
        lower_bound_passed: if bound.applicable {
            Some(bound.passed)
        } else {
            None
        },
        maslov,
        zero_maslov: maslov == 0,
        center: None,
        rescales_used: Vec::new(),
        spectrum: Vec::new(),
        spectrum_total_mass: None,
        spectrum_note: String::new(),
        center_drift: None,
        cone_alignment: None,
        volume_ratio_bound: None,
        volume_ratio_bound_extended: None,
        moment_checks: Vec::new(),
    };

    if samples.len() < 2 {
        report.spectrum_note = "too few snapshots before the singular time".into();
        return Ok(report);
    }

    let x0 = opts
        .x0
        .unwrap_or_else(|| curvature_centroid(samples.last().unwrap()));
    report.center = Some((x0.re, x0.im));

    // last snapshot resolved for the kernel anchored at (x0, T_est)
    let anchor_probe = |t0: f64| DensityProbe {
        x0,
        t0,
        r: opts.r,
        weight: WeightFn::One,
        eps: 0.01,
        n: 1,
    };
    let t_last_resolved = samples
        .iter()
        .rev()
        .find(|s| density::kernel_resolution(s, &anchor_probe(est.t_est)).0)
        .map(|s| s.t);
    let Some(t_last) = t_last_resolved else {
        report.spectrum_note = "no snapshot passes the kernel-resolution gate".into();
        return Ok(report);
    };

    // dyadic rescale family anchored so the deepest level lands the
    // extraction time exactly on the last resolved snapshot
    let lambda_anchor = ((-opts.s_extract) / (est.t_est - t_last)).sqrt();
    let levels = opts.levels.max(1);
    let lambdas: Vec<f64> = (0..levels)
        .map(|i| lambda_anchor / 2f64.powi((levels - 1 - i) as i32))
        .collect();
    report.rescales_used = lambdas.clone();

    if maslov != 0 {
        report.spectrum_note = format!(
            "spectrum rejected: Maslov index {maslov} != 0, the cone-spectrum \
             diagnostic assumes a single-valued angle"
        );
    }

    let mut spectra: Vec<(f64, Vec<SpectrumCluster>, f64)> = Vec::new();
    let mut ratio_bound: f64 = 0.0;
    let mut deepest: Option<(RescaledSnapshot, Vec<SpectrumCluster>, f64)> = None;
    for &lambda in &lambdas {
        let resc = density::rescale(&samples, lambda, x0, est.t_est, space);
        let Some(snap) = resc.into_iter().min_by(|a, b| {
            (a.s - opts.s_extract)
                .abs()
                .total_cmp(&(b.s - opts.s_extract).abs())
        }) else {
            continue;
        };
        for r in RATIO_GRID {
            ratio_bound = ratio_bound.max(volume_ratio(&snap, r));
        }
        if maslov == 0 {
            match extract_spectrum(&snap, opts.cluster_gap, opts.r) {
                Ok((clusters, total)) => {
                    spectra.push((lambda, clusters.clone(), total));
                    deepest = Some((snap, clusters, total));
                }
                Err(AnalysisError::Unresolved { .. }) => {}
                Err(e) => return Err(e),
            }
        } else {
            deepest = Some((snap, Vec::new(), 0.0));
        }
    }
    report.volume_ratio_bound = Some(ratio_bound);

    // one extra dyadic level for the stability audit
    {
        let lambda = lambda_anchor * 2.0;
        let resc = density::rescale(&samples, lambda, x0, est.t_est, space);
        let mut extended = ratio_bound;
        if let Some(snap) = resc.into_iter().min_by(|a, b| {
            (a.s - opts.s_extract)
                .abs()
                .total_cmp(&(b.s - opts.s_extract).abs())
        }) {
            for r in RATIO_GRID {
                extended = extended.max(volume_ratio(&snap, r));
            }
        }
        report.volume_ratio_bound_extended = Some(extended);
    }

    if let Some((snap, clusters, total)) = deepest {
        report.cone_alignment = Some(cone_alignment(&snap, opts.r)?);
        if maslov == 0 {
            report.spectrum = clusters.clone();
            report.spectrum_total_mass = Some(total);
            if report.spectrum_note.is_empty() {
                report.spectrum_note = format!(
                    "spectrum from lambda = {:.3} at s = {:.3}",
                    snap.lambda, snap.s
                );
            }
            // stability of cluster centers across the family
            if spectra.len() >= 2 {
                let mut drift: f64 = 0.0;
                for w in spectra.windows(2) {
                    for c in &w[1].1 {
                        if let Some(best) = w[0]
                            .1
                            .iter()
                            .map(|p| {
                                let d = (p.theta - c.theta).abs();
                                d.min(TAU - d)
                            })
                            .min_by(f64::total_cmp)
                        {
                            drift = drift.max(best);
                        }
                    }
                }
                report.center_drift = Some(drift);
            }
            // moment cross-check against the cluster decomposition
            if !clusters.is_empty() {
                let y = clusters
                    .iter()
                    .map(|c| c.theta)
                    .fold(f64::INFINITY, f64::min)
                    - 1.0;
                for q in [1u32, 2u32] {
                    let cluster_sum: f64 = clusters
                        .iter()
                        .map(|c| c.mass * (c.theta - y).powi(2 * q as i32))
                        .sum();
                    let integral = density::angle_moments(&snap, y, q, opts.r)?;
                    let rel = (cluster_sum - integral).abs() / integral.abs().max(1e-300);
                    report.moment_checks.push(MomentCheck {
                        q,
                        y,
                        cluster_sum,
                        integral,
                        rel_err: rel,
                    });
                }
            }
        }
    } else if report.spectrum_note.is_empty() {
        report.spectrum_note = "no resolved rescaled snapshot near the extraction time".into();
    }

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{self, FlowConfig, TraceRow};

    fn synthetic_circle_trace(t_end: f64, rows: usize) -> FlowTrace {
        let mut trace = FlowTrace::default();
        for i in 0..rows {
            let t = t_end * (i as f64 + 0.5) / (rows as f64 + 1.0);
            trace.rows.push(TraceRow {
                t,
                dt: 1e-4,
                area: 1.0,
                u: 1.0 / (2.0 * (t_end - t)),
                max_k: 0.0,
                theta_min: 0.0,
                theta_max: TAU,
                maslov: 1,
            });
        }
        trace
    }

    #[test]
    fn exact_law_gives_exact_intercept() {
        let trace = synthetic_circle_trace(0.5, 4000);
        let est = estimate_t(&trace, 1e-12).unwrap();
        assert!(!est.fallback);
        assert!((est.t_est - 0.5).abs() < 1e-9, "t_est {}", est.t_est);
        assert!(est.fit_quality > 0.999);
    }

    #[test]
    fn exact_law_classifies_type_one() {
        let trace = synthetic_circle_trace(0.5, 4000);
        let class = classify(&trace, 0.5, DEFAULT_C_MAX);
        match class.verdict {
            Verdict::TypeI { c_est } => {
                assert!((c_est - 0.5).abs() < 0.01, "c_est {c_est}")
            }
            other => panic!("expected TypeI, got {other:?}"),
        }
    }

    #[test]
    fn growing_q_is_not_type_one() {
        // Q ~ log(1/(T-t)) exceeds the ceiling and keeps growing
        let mut trace = FlowTrace::default();
        let t_end = 0.1;
        for i in 0..3000 {
            let tau = 0.05 * (1.0 - i as f64 / 3000.0).powi(8) + 1e-9;
            let t = t_end - tau;
            let q = 2.0 * (0.05f64 / tau).ln().max(0.1);
            trace.rows.push(TraceRow {
                t,
                dt: 1e-5,
                area: 1.0,
                u: q / tau,
                max_k: 0.0,
                theta_min: 0.0,
                theta_max: 1.0,
                maslov: 0,
            });
        }
        let class = classify(&trace, t_end, DEFAULT_C_MAX);
        match class.verdict {
            Verdict::TypeII { q_max, ref note } => {
                assert!(q_max > DEFAULT_C_MAX);
                assert!(note.contains("not Type-I at resolved scales"));
            }
            other => panic!("expected TypeII evidence, got {other:?}"),
        }
    }

    fn two_line_snapshot(a1: f64, a2: f64) -> RescaledSnapshot {
        let m = 4001;
        let half = 15.0;
        let step = 2.0 * half / (m - 1) as f64;
        let mut points = Vec::new();
        let mut theta = Vec::new();
        let mut normal = Vec::new();
        for ang in [a1, a2] {
            let dir = Complex64::from_polar(1.0, ang);
            for j in 0..m {
                points.push(dir * (-half + step * j as f64));
                theta.push(ang);
                normal.push(dir * Complex64::new(0.0, 1.0));
            }
        }
        let n = points.len();
        RescaledSnapshot {
            lambda: 1.0,
            s: -1.0,
            data: SampledCurve {
                t: -1.0,
                points,
                theta,
                normal,
                curvature: vec![0.0; n],
                drift: vec![0.0; n],
                dual_len: vec![step; n],
                angle_deriv: None,
                grad_tangent: None,
            },
            drift_magnitude: 0.0,
        }
    }

    #[test]
    fn two_line_spectrum_recovers_angles_and_masses() {
        let snap = two_line_snapshot(0.3, 1.7);
        let (clusters, total) = extract_spectrum(&snap, 0.1, f64::INFINITY).unwrap();
        assert_eq!(clusters.len(), 2, "clusters: {clusters:?}");
        assert!((clusters[0].theta - 0.3).abs() < 0.01);
        assert!((clusters[1].theta - 1.7).abs() < 0.01);
        // equal Gaussian masses, each ~ 1
        assert!((clusters[0].mass - 1.0).abs() < 0.02);
        assert!((clusters[1].mass - 1.0).abs() < 0.02);
        let mass_sum: f64 = clusters.iter().map(|c| c.mass).sum();
        assert!((mass_sum - total).abs() <= 0.02 * total);
    }

    #[test]
    fn single_line_spectrum_and_alignment() {
        let m = 4001;
        let half = 15.0;
        let step = 2.0 * half / (m - 1) as f64;
        let dir = Complex64::new(1.0, 0.0);
        let snap = RescaledSnapshot {
            lambda: 1.0,
            s: -1.0,
            data: SampledCurve {
                t: -1.0,
                points: (0..m).map(|j| dir * (-half + step * j as f64)).collect(),
                theta: vec![0.0; m],
                normal: vec![Complex64::new(0.0, 1.0); m],
                curvature: vec![0.0; m],
                drift: vec![0.0; m],
                dual_len: vec![step; m],
                angle_deriv: None,
                grad_tangent: None,
            },
            drift_magnitude: 0.0,
        };
        let (clusters, _) = extract_spectrum(&snap, 0.1, f64::INFINITY).unwrap();
        assert_eq!(clusters.len(), 1);
        assert!(clusters[0].theta.min(TAU - clusters[0].theta) < 0.01);
        assert!(cone_alignment(&snap, f64::INFINITY).unwrap() <= 1e-10);
    }

    #[test]
    fn unit_circle_alignment_is_one() {
        let c = ImmersedCurve::circle(1.0, 512);
        let space = AmbientSpace::flat(1);
        let f = FrameData::compute(&c, &space).unwrap();
        let mut data = SampledCurve::from_frame(&c, &f, &space);
        data.t = -0.5;
        let snap = RescaledSnapshot {
            lambda: 1.0,
            s: -0.5,
            data,
            drift_magnitude: 0.0,
        };
        let a = cone_alignment(&snap, f64::INFINITY).unwrap();
        assert!((a - 1.0).abs() < 1e-6, "alignment {a}");
    }

    #[test]
    fn rotation_shifts_spectrum_uniformly() {
        let base = two_line_snapshot(0.3, 1.7);
        let beta = 0.4;
        let rot = Complex64::from_polar(1.0, beta);
        let mut rotated = base.clone();
        rotated.data.points.iter_mut().for_each(|p| *p *= rot);
        rotated.data.normal.iter_mut().for_each(|n| *n *= rot);
        rotated.data.theta.iter_mut().for_each(|t| *t += beta);
        let (c0, _) = extract_spectrum(&base, 0.1, f64::INFINITY).unwrap();
        let (c1, _) = extract_spectrum(&rotated, 0.1, f64::INFINITY).unwrap();
        assert_eq!(c0.len(), c1.len());
        for (a, b) in c0.iter().zip(&c1) {
            let shift = (b.theta - a.theta - beta).rem_euclid(TAU);
            let shift = shift.min(TAU - shift);
            assert!(shift < 1e-9, "center shift {shift}");
            assert!((a.mass - b.mass).abs() < 1e-9 * a.mass.max(1.0));
        }
    }

    #[test]
    fn circle_run_report_is_type_one_with_rejected_spectrum() {
        let space = AmbientSpace::flat(1);
        let cfg = FlowConfig {
            t_end: 10.0,
            cfl: 0.4,
            a2_ceiling: 1e5,
            snapshot_stride: 4000,
            ..Default::default()
        };
        let out = flow::run(ImmersedCurve::circle(1.0, 256), &space, &cfg).unwrap();
        let report = analyze(&out, &space, &AnalysisOptions::default()).unwrap();
        assert!(matches!(report.verdict, Verdict::TypeI { .. }));
        assert!(!report.zero_maslov);
        assert!(report.spectrum.is_empty());
        assert!(report.spectrum_note.contains("Maslov"));
        let margin = report.lower_bound_margin.unwrap();
        assert!(
            (margin - 4.0 * 2.0f64.sqrt()).abs() < 0.1,
            "margin {margin}"
        );
        // the shrinking circle is a genuine cone-alignment negative control
        let align = report.cone_alignment.unwrap();
        assert!(align > 0.5, "alignment {align}");
    }

    #[test]
    fn ended_run_reports_no_singularity() {
        let space = AmbientSpace::flat(1);
        let cfg = FlowConfig {
            t_end: 0.01,
            snapshot_stride: 50,
            ..Default::default()
        };
        let out = flow::run(ImmersedCurve::ellipse(1.0, 0.8, 128), &space, &cfg).unwrap();
        let report = analyze(&out, &space, &AnalysisOptions::default()).unwrap();
        assert_eq!(report.verdict, Verdict::NoSingularity);
        assert!(report.t_est.is_none());
    }
}
