//! Per-vertex geometry of an immersed curve: frames, curvature, Lagrangian
//! angle, and the generalized mean curvature computed two independent ways.
//!
//! Conventions (used everywhere downstream):
//! - `N = i T` (left normal). A counter-clockwise circle has `k = +1/R` and
//!   `H = k N` points toward the center.
//! - Curvature is the vertex turning angle divided by the dual length
//!   `(l_{j-1} + l_j)/2`, so it integrates exactly to `2 pi` times the
//!   turning number.
//! - `theta_j = arg(T_j) + Im W(F_j)`, unwrapped from vertex 0 with the
//!   starting branch in `(-pi, pi]`. The closure defect over one loop is
//!   `2 pi` times the Maslov index.

use num_complex::Complex64;
use std::f64::consts::{PI, TAU};

use crate::ambient::{dot, AmbientSpace};
use crate::curve::ImmersedCurve;
use crate::error::MeshError;

/// Turning angles within `CUSP_GUARD` of `pi` abort instead of unwrapping
/// wrongly.
pub const CUSP_GUARD: f64 = 0.01;

const WINDING_TOL: f64 = 0.01;

/// Wrap an angle to `(-pi, pi]`.
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

#[derive(Debug, Clone)]
pub struct FrameData {
    pub t: f64,
    /// `l_j = |F_{j+1} - F_j|`
    pub edge_len: Vec<f64>,
    /// `(l_{j-1} + l_j) / 2`
    pub dual_len: Vec<f64>,
    /// unit tangent from the centered difference `F_{j+1} - F_{j-1}`
    pub tangent: Vec<Complex64>,
    /// `N = i T`
    pub normal: Vec<Complex64>,
    /// signed curvature `k_j`
    pub curvature: Vec<f64>,
    /// unwrapped Lagrangian angle
    pub theta: Vec<f64>,
    /// drift component `<grad psi, N>` (the scalar in front of `N` in `V`)
    pub drift: Vec<f64>,
    pub maslov: i64,
    winding_residual: f64,
}

impl FrameData {
    /// Build the full frame. Fails on degenerate edges, cusps, or an
    /// inconsistent angle winding.
    pub fn compute(curve: &ImmersedCurve, space: &AmbientSpace) -> Result<Self, MeshError> {
        let n = curve.len();
        if n < crate::curve::MIN_VERTICES {
            return Err(MeshError::TooFewVertices(n));
        }
        let pts = &curve.points;

        let mut edge_len = vec![0.0; n];
        let mut edges = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            let e = pts[(j + 1) % n] - pts[j];
            let l = e.norm();
            if l == 0.0 {
                return Err(MeshError::DegenerateEdge(j));
            }
            if !l.is_finite() {
                return Err(MeshError::NonFinitePoint(j));
            }
            edges[j] = e;
            edge_len[j] = l;
        }

        let mut dual_len = vec![0.0; n];
        let mut tangent = vec![Complex64::new(0.0, 0.0); n];
        let mut normal = vec![Complex64::new(0.0, 0.0); n];
        let mut curvature = vec![0.0; n];
        let mut theta_raw = vec![0.0; n];
        let mut drift = vec![0.0; n];
        let weightless = space.is_weightless();

        for j in 0..n {
            let jm = (j + n - 1) % n;
            let ep = edges[jm];
            let en = edges[j];
            let turn = (ep.re * en.im - ep.im * en.re).atan2(ep.re * en.re + ep.im * en.im);
            if turn.abs() >= PI - CUSP_GUARD {
                return Err(MeshError::Cusp {
                    index: j,
                    angle: turn,
                });
            }
            let dual = 0.5 * (edge_len[jm] + edge_len[j]);
            dual_len[j] = dual;
            curvature[j] = turn / dual;
            let chord = ep + en; // F_{j+1} - F_{j-1}
            let t = chord / chord.norm();
            tangent[j] = t;
            let nv = Complex64::new(-t.im, t.re); // i T
            normal[j] = nv;
            theta_raw[j] = t.im.atan2(t.re)
                + if weightless { 0.0 } else { space.im_w1(pts[j]) };
            if !weightless {
                drift[j] = dot(space.drift1(pts[j]), nv);
            }
        }

        // unwrap from vertex 0; record the closure winding
        let mut theta = vec![0.0; n];
        theta[0] = wrap_angle(theta_raw[0]);
        for j in 1..n {
            theta[j] = theta[j - 1] + wrap_angle(theta_raw[j] - theta_raw[j - 1]);
        }
        let closure = theta[n - 1] + wrap_angle(theta_raw[0] - theta_raw[n - 1]) - theta[0];
        let winding = (closure / TAU).round();
        let residual = (closure - winding * TAU).abs();
        if residual > WINDING_TOL {
            return Err(MeshError::WindingResidual(residual));
        }

        Ok(Self {
            t: curve.t,
            edge_len,
            dual_len,
            tangent,
            normal,
            curvature,
            theta,
            drift,
            maslov: winding as i64,
            winding_residual: residual,
        })
    }

    pub fn len(&self) -> usize {
        self.curvature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curvature.is_empty()
    }

    /// Winding-aware angle lookup: `theta(j + N) = theta(j) + 2 pi maslov`.
    #[inline]
    pub fn theta_at(&self, idx: isize) -> f64 {
        let n = self.len() as isize;
        let wrapped = idx.rem_euclid(n);
        let turns = (idx - wrapped) / n;
        self.theta[wrapped as usize] + TAU * self.maslov as f64 * turns as f64
    }

    /// Scalar flow speed `k - <grad psi, N>`; the velocity is `speed * N`.
    #[inline]
    pub fn speed(&self, j: usize) -> f64 {
        self.curvature[j] - self.drift[j]
    }

    /// `max_j |A_j|^2 = max_j k_j^2`.
    pub fn a2_max(&self) -> f64 {
        self.curvature
            .iter()
            .map(|k| k * k)
            .fold(0.0, f64::max)
    }

    pub fn max_speed(&self) -> f64 {
        (0..self.len())
            .map(|j| self.speed(j).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_edge(&self) -> f64 {
        self.edge_len.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_edge(&self) -> f64 {
        self.edge_len.iter().cloned().fold(0.0, f64::max)
    }

    pub fn theta_range(&self) -> (f64, f64) {
        let min = self.theta.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = self.theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    /// Maslov index with the winding-residual gate.
    pub fn maslov_index(&self) -> Result<i64, MeshError> {
        if self.winding_residual > WINDING_TOL {
            return Err(MeshError::WindingResidual(self.winding_residual));
        }
        Ok(self.maslov)
    }

    /// Generalized mean curvature from the geometry:
    /// `K_j = (k_j - <grad psi, N_j>) N_j`.
    pub fn k_geometric(&self) -> Vec<Complex64> {
        (0..self.len()).map(|j| self.normal[j] * self.speed(j)).collect()
    }

    /// `d theta / d s` by centered differences over arclength.
    pub fn angle_derivative(&self) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|j| {
                let jm = (j + n - 1) % n;
                let span = self.edge_len[jm] + self.edge_len[j];
                (self.theta_at(j as isize + 1) - self.theta_at(j as isize - 1)) / span
            })
            .collect()
    }

    /// Generalized mean curvature from the angle route: `K_j = theta_s N_j`.
    pub fn k_from_angle(&self) -> Vec<Complex64> {
        self.angle_derivative()
            .iter()
            .zip(&self.normal)
            .map(|(ds, nv)| nv * *ds)
            .collect()
    }

    /// Largest pointwise gap between the two curvature routes.
    pub fn k_identity_gap(&self) -> f64 {
        let geo = self.k_geometric();
        let ang = self.k_from_angle();
        geo.iter()
            .zip(&ang)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Arclength derivatives of the second fundamental form and the second
/// normal-covariant derivative of the drift field.
#[derive(Debug, Clone)]
pub struct CurvatureDerivatives {
    /// `k_s` by centered differences
    pub k_s: Vec<f64>,
    /// `V_{,11}` assembled from the exact first, second and third
    /// derivatives of `psi` plus `k`, `k_s`
    pub v11: Vec<f64>,
}

/// Compute `k_s` and `V_{,11}` along the curve (flat ambient, n = 1).
///
/// For a curve flowing in flat `C` the normal-bundle second covariant
/// derivative of `V = <grad psi, N> N` reduces to the plain second arclength
/// derivative of the scalar `<grad psi, N>`, which expands to
///
/// `V11 = D3psi(T,T,N) + k <Hess N, N> - 2 k <Hess T, T>
///        - k_s <grad psi, T> - k^2 <grad psi, N>`.
pub fn curvature_derivatives(
    curve: &ImmersedCurve,
    frame: &FrameData,
    space: &AmbientSpace,
) -> CurvatureDerivatives {
    let n = frame.len();
    let mut k_s = vec![0.0; n];
    for j in 0..n {
        let jm = (j + n - 1) % n;
        let jp = (j + 1) % n;
        let span = frame.edge_len[jm] + frame.edge_len[j];
        k_s[j] = (frame.curvature[jp] - frame.curvature[jm]) / span;
    }
    let mut v11 = vec![0.0; n];
    if !space.is_weightless() {
        let inv_n = 1.0 / space.n() as f64;
        for j in 0..n {
            let z = curve.points[j];
            let t = frame.tangent[j];
            let nv = frame.normal[j];
            let k = frame.curvature[j];
            let w1 = space.w1(z, 1);
            let w2 = space.w1(z, 2);
            let w3 = space.w1(z, 3);
            let grad_t = (w1 * t).re * inv_n;
            let grad_n = (w1 * nv).re * inv_n;
            let hess_tt = (w2 * t * t).re * inv_n;
            let hess_nn = (w2 * nv * nv).re * inv_n;
            let third = (w3 * t * t * nv).re * inv_n;
            v11[j] = third + k * hess_nn - 2.0 * k * hess_tt - k_s[j] * grad_t
                - k * k * grad_n;
        }
    }
    CurvatureDerivatives { k_s, v11 }
}

/// Nonuniform three-point Laplacian
/// `Delta f_j = 2((f_{j+1}-f_j)/l_j - (f_j-f_{j-1})/l_{j-1}) / (l_j + l_{j-1})`.
#[inline]
pub fn laplacian_at(f: impl Fn(isize) -> f64, edge_len: &[f64], j: usize) -> f64 {
    let n = edge_len.len();
    let jm = (j + n - 1) % n;
    let lj = edge_len[j];
    let lm = edge_len[jm];
    let fj = f(j as isize);
    2.0 * ((f(j as isize + 1) - fj) / lj - (fj - f(j as isize - 1)) / lm) / (lj + lm)
}

/// Fast velocity evaluation for the integrator: writes
/// `(k_j - <grad psi, N_j>) N_j` into `out` without angle bookkeeping.
pub(crate) fn velocity_into(
    points: &[Complex64],
    space: &AmbientSpace,
    out: &mut [Complex64],
) -> Result<(), MeshError> {
    let n = points.len();
    debug_assert_eq!(out.len(), n);
    let weightless = space.is_weightless();
    let mut e_prev = points[0] - points[n - 1];
    let mut l_prev = e_prev.norm();
    if l_prev == 0.0 {
        return Err(MeshError::DegenerateEdge(n - 1));
    }
    for j in 0..n {
        let e_next = points[(j + 1) % n] - points[j];
        let l_next = e_next.norm();
        if l_next == 0.0 {
            return Err(MeshError::DegenerateEdge(j));
        }
        let turn = (e_prev.re * e_next.im - e_prev.im * e_next.re)
            .atan2(e_prev.re * e_next.re + e_prev.im * e_next.im);
        if turn.abs() >= PI - CUSP_GUARD {
            return Err(MeshError::Cusp {
                index: j,
                angle: turn,
            });
        }
        let k = turn / (0.5 * (l_prev + l_next));
        let chord = e_prev + e_next;
        let t = chord / chord.norm();
        let nv = Complex64::new(-t.im, t.re);
        let speed = if weightless {
            k
        } else {
            k - dot(space.drift1(points[j]), nv)
        };
        out[j] = nv * speed;
        e_prev = e_next;
        l_prev = l_next;
    }
    Ok(())
}
