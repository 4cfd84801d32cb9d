//! Periodic cubic spline through the curve vertices, used for
//! equal-arclength redistribution.

use num_complex::Complex64;

use crate::error::FlowError;

// 5-point Gauss-Legendre nodes/weights on [-1, 1]
const GL_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_W: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

pub struct PeriodicSpline {
    knots: Vec<f64>,     // u_0 = 0 .. u_N = total chord length
    points: Vec<Complex64>,
    moments: Vec<Complex64>, // second derivatives at knots, periodic
    seg_len: Vec<f64>,       // arclength of each segment
    cum_len: Vec<f64>,       // cumulative arclength at knots
}

impl PeriodicSpline {
    /// Fit a periodic cubic through `points`, parametrized by cumulative
    /// chord length.
    pub fn fit(points: &[Complex64]) -> Result<Self, FlowError> {
        let n = points.len();
        if n < 3 {
            return Err(FlowError::Resample("need at least 3 points".into()));
        }
        let mut knots = Vec::with_capacity(n + 1);
        knots.push(0.0);
        for j in 0..n {
            let h = (points[(j + 1) % n] - points[j]).norm();
            if h == 0.0 {
                return Err(FlowError::Resample(format!("zero chord at {j}")));
            }
            knots.push(knots[j] + h);
        }

        let moments = solve_periodic_moments(points, &knots)?;

        let mut spline = Self {
            knots,
            points: points.to_vec(),
            moments,
            seg_len: vec![0.0; n],
            cum_len: vec![0.0; n + 1],
        };
        for j in 0..n {
            let len = spline.quad_len(j, spline.knots[j], spline.knots[j + 1]);
            spline.seg_len[j] = len;
            spline.cum_len[j + 1] = spline.cum_len[j] + len;
        }
        Ok(spline)
    }

    pub fn total_arclength(&self) -> f64 {
        *self.cum_len.last().unwrap()
    }

    fn n(&self) -> usize {
        self.points.len()
    }

    fn point_at(&self, j: usize) -> Complex64 {
        self.points[j % self.n()]
    }

    fn moment_at(&self, j: usize) -> Complex64 {
        self.moments[j % self.n()]
    }

    /// Position on segment `j` at parameter `u` in `[u_j, u_{j+1}]`.
    pub fn eval(&self, j: usize, u: f64) -> Complex64 {
        let h = self.knots[j + 1] - self.knots[j];
        let a = self.knots[j + 1] - u;
        let b = u - self.knots[j];
        self.moment_at(j) * (a * a * a) / (6.0 * h)
            + self.moment_at(j + 1) * (b * b * b) / (6.0 * h)
            + (self.point_at(j) / h - self.moment_at(j) * h / 6.0) * a
            + (self.point_at(j + 1) / h - self.moment_at(j + 1) * h / 6.0) * b
    }

    fn deriv(&self, j: usize, u: f64) -> Complex64 {
        let h = self.knots[j + 1] - self.knots[j];
        let a = self.knots[j + 1] - u;
        let b = u - self.knots[j];
        -self.moment_at(j) * (a * a) / (2.0 * h)
            + self.moment_at(j + 1) * (b * b) / (2.0 * h)
            + (self.point_at(j + 1) - self.point_at(j)) / h
            - (self.moment_at(j + 1) - self.moment_at(j)) * h / 6.0
    }

    fn quad_len(&self, j: usize, from: f64, to: f64) -> f64 {
        let mid = 0.5 * (from + to);
        let half = 0.5 * (to - from);
        let mut acc = 0.0;
        for (x, w) in GL_X.iter().zip(GL_W.iter()) {
            acc += w * self.deriv(j, mid + half * x).norm();
        }
        acc * half
    }

    /// Point at arclength `s` from the first vertex (`s` taken mod total).
    pub fn point_at_arclength(&self, s: f64) -> Complex64 {
        let total = self.total_arclength();
        let s = s.rem_euclid(total);
        // segment lookup
        let mut lo = 0usize;
        let mut hi = self.n();
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cum_len[mid] <= s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let j = lo;
        let want = s - self.cum_len[j];
        // Newton with bisection safeguard on the in-segment arclength
        let (mut ua, mut ub) = (self.knots[j], self.knots[j + 1]);
        let mut u = ua + (ub - ua) * want / self.seg_len[j].max(1e-300);
        for _ in 0..60 {
            let got = self.quad_len(j, self.knots[j], u);
            let err = got - want;
            if err.abs() <= 1e-13 * self.total_arclength().max(1.0) {
                break;
            }
            if err > 0.0 {
                ub = u;
            } else {
                ua = u;
            }
            let slope = self.deriv(j, u).norm();
            let mut next = u - err / slope.max(1e-300);
            if !(next > ua && next < ub) {
                next = 0.5 * (ua + ub);
            }
            u = next;
        }
        self.eval(j, u)
    }

    /// `count` points at equal arclength spacing, starting at the first
    /// vertex.
    pub fn resample(&self, count: usize) -> Vec<Complex64> {
        let total = self.total_arclength();
        (0..count)
            .map(|k| self.point_at_arclength(total * k as f64 / count as f64))
            .collect()
    }
}

/// Cyclic tridiagonal solve for the periodic spline moments.
fn solve_periodic_moments(
    points: &[Complex64],
    knots: &[f64],
) -> Result<Vec<Complex64>, FlowError> {
    let n = points.len();
    let h = |j: usize| knots[j + 1] - knots[j];
    // rows j = 0..n with periodic wrap: sub, diag, sup and rhs
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        let jm = (j + n - 1) % n;
        let hm = h(jm);
        let hj = h(j);
        sub[j] = hm / 6.0;
        diag[j] = (hm + hj) / 3.0;
        sup[j] = hj / 6.0;
        let dj = (points[(j + 1) % n] - points[j]) / hj;
        let dm = (points[j] - points[jm]) / hm;
        rhs[j] = dj - dm;
    }
    // Sherman-Morrison: peel off the two corner entries
    let gamma = -diag[0];
    let corner_top = sub[0]; // coupling of row 0 to x_{n-1}
    let corner_bot = sup[n - 1]; // coupling of row n-1 to x_0
    let mut d = diag.clone();
    d[0] -= gamma;
    d[n - 1] -= corner_top * corner_bot / gamma;

    let solve = |d: &[f64], rhs: &[Complex64]| -> Result<Vec<Complex64>, FlowError> {
        let mut c = vec![0.0; n];
        let mut x = rhs.to_vec();
        let mut beta = d[0];
        if beta == 0.0 {
            return Err(FlowError::Resample("singular spline system".into()));
        }
        x[0] /= beta;
        for j in 1..n {
            c[j] = sup[j - 1] / beta;
            beta = d[j] - sub[j] * c[j];
            if beta == 0.0 {
                return Err(FlowError::Resample("singular spline system".into()));
            }
            x[j] = (x[j] - x[j - 1] * sub[j]) / beta;
        }
        for j in (0..n - 1).rev() {
            let xn = x[j + 1];
            x[j] -= xn * c[j + 1];
        }
        Ok(x)
    };

    let y = solve(&d, &rhs)?;
    let mut u_vec = vec![Complex64::new(0.0, 0.0); n];
    u_vec[0] = Complex64::new(gamma, 0.0);
    u_vec[n - 1] = Complex64::new(corner_bot, 0.0);
    let z = solve(&d, &u_vec)?;
    // v = e_0 + (corner_top/gamma) e_{n-1}; z solves against a real vector so
    // v.z is real
    let vy = y[0] + y[n - 1] * (corner_top / gamma);
    let vz = z[0] + z[n - 1] * (corner_top / gamma);
    let denom = 1.0 + vz.re;
    if denom.abs() < 1e-300 {
        return Err(FlowError::Resample("singular periodic closure".into()));
    }
    let scale = vy / denom;
    Ok((0..n).map(|j| y[j] - z[j] * scale).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::ImmersedCurve;

    #[test]
    fn circle_arclength_close_to_circumference() {
        let c = ImmersedCurve::circle(1.0, 256);
        let s = PeriodicSpline::fit(&c.points).unwrap();
        let err = (s.total_arclength() - std::f64::consts::TAU).abs();
        assert!(err < 1e-6, "arclength error {err}");
    }

    #[test]
    fn interpolates_knots() {
        let c = ImmersedCurve::figure_eight(1.0, 1.0, 64);
        let s = PeriodicSpline::fit(&c.points).unwrap();
        for j in 0..c.len() {
            let p = s.eval(j, s.knots[j]);
            assert!((p - c.points[j]).norm() < 1e-10);
        }
    }

    #[test]
    fn resample_uniform_circle_is_fixed_point() {
        let c = ImmersedCurve::circle(1.0, 128);
        let s = PeriodicSpline::fit(&c.points).unwrap();
        let r = s.resample(128);
        for j in 0..128 {
            assert!((r[j] - c.points[j]).norm() < 1e-10, "vertex {j}");
        }
    }

    #[test]
    fn resample_lands_on_geometric_circle() {
        // stretched parametrization of the unit circle
        let n = 256;
        let points: Vec<Complex64> = (0..n)
            .map(|j| {
                let u = std::f64::consts::TAU * j as f64 / n as f64;
                let phi = u + 0.2 * u.sin();
                Complex64::from_polar(1.0, phi)
            })
            .collect();
        let s = PeriodicSpline::fit(&points).unwrap();
        let r = s.resample(n);
        // Hausdorff-style check against the circle plus equal spacing
        let mut spacing = Vec::new();
        for j in 0..n {
            assert!((r[j].norm() - 1.0).abs() < 1e-6);
            spacing.push((r[(j + 1) % n] - r[j]).norm());
        }
        let smin = spacing.iter().cloned().fold(f64::INFINITY, f64::min);
        let smax = spacing.iter().cloned().fold(0.0, f64::max);
        assert!((smax - smin) / smax < 1e-4, "spacing spread {}", (smax - smin) / smax);
    }
}
