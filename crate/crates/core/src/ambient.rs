//! Flat ambient space `C^n` carrying a holomorphic volume form `e^W dz`.
//!
//! The weight `W` is a holomorphic polynomial in the complex coordinates,
//! stored as a finite coefficient map over multi-indices. The potential is
//! `psi = Re W / n`, which is automatically pluriharmonic, so every
//! derivative of `psi` is available in closed form through the complex
//! derivatives of `W`:
//!
//! for n = 1,  `D^k psi (v_1, ..., v_k) = Re( W^(k)(z) v_1 ... v_k ) / n`
//!
//! with the vectors `v_i` read as complex numbers. The same identity holds
//! coordinate-blockwise for n = 2.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::AmbientError;

pub const DEFAULT_DEGREE_CAP: u32 = 6;

/// Multi-index of a monomial `z_1^{k_1} ... z_n^{k_n}`.
pub type MultiIndex = Vec<u32>;

#[derive(Debug, Clone)]
pub struct AmbientSpace {
    n: usize,
    terms: BTreeMap<MultiIndex, Complex64>,
    degree_cap: u32,
    // dense coefficients of W, W', W'', W''' for the n = 1 hot path
    dense1: [Vec<Complex64>; 4],
}

impl AmbientSpace {
    pub fn new(
        n: usize,
        terms: BTreeMap<MultiIndex, Complex64>,
    ) -> Result<Self, AmbientError> {
        Self::with_degree_cap(n, terms, DEFAULT_DEGREE_CAP)
    }

    pub fn with_degree_cap(
        n: usize,
        terms: BTreeMap<MultiIndex, Complex64>,
        degree_cap: u32,
    ) -> Result<Self, AmbientError> {
        if n != 1 && n != 2 {
            return Err(AmbientError::UnsupportedDimension(n));
        }
        let mut clean = BTreeMap::new();
        for (mi, c) in terms {
            if mi.len() != n {
                return Err(AmbientError::WeightParse(
                    format!("{mi:?}"),
                    format!("multi-index has {} entries, ambient has n = {n}", mi.len()),
                ));
            }
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(AmbientError::NonFiniteCoefficient);
            }
            let deg: u32 = mi.iter().sum();
            if deg > degree_cap {
                return Err(AmbientError::DegreeCap {
                    found: deg,
                    cap: degree_cap,
                });
            }
            if c.norm_sqr() != 0.0 {
                clean.insert(mi, c);
            }
        }
        let dense1 = if n == 1 {
            Self::dense_derivatives(&clean, degree_cap)
        } else {
            Default::default()
        };
        Ok(Self {
            n,
            terms: clean,
            degree_cap,
            dense1,
        })
    }

    /// Weightless ambient (`W = 0`, standard Calabi-Yau `C^n`).
    pub fn flat(n: usize) -> Self {
        Self::new(n, BTreeMap::new()).expect("flat ambient is always valid")
    }

    fn dense_derivatives(
        terms: &BTreeMap<MultiIndex, Complex64>,
        cap: u32,
    ) -> [Vec<Complex64>; 4] {
        let mut c0 = vec![Complex64::new(0.0, 0.0); cap as usize + 1];
        let mut top = 0usize;
        for (mi, c) in terms {
            let k = mi[0] as usize;
            c0[k] = *c;
            top = top.max(k);
        }
        c0.truncate(top + 1);
        let diff = |c: &[Complex64]| -> Vec<Complex64> {
            if c.len() <= 1 {
                return vec![];
            }
            c.iter()
                .enumerate()
                .skip(1)
                .map(|(k, a)| a * k as f64)
                .collect()
        };
        let c1 = diff(&c0);
        let c2 = diff(&c1);
        let c3 = diff(&c2);
        [c0, c1, c2, c3]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &BTreeMap<MultiIndex, Complex64> {
        &self.terms
    }

    pub fn degree_cap(&self) -> u32 {
        self.degree_cap
    }

    fn check_point(&self, z: &[Complex64]) -> Result<(), AmbientError> {
        if z.len() != self.n {
            return Err(AmbientError::PointDimension {
                found: z.len(),
                expected: self.n,
            });
        }
        Ok(())
    }

    /// Evaluate `W(z)`.
    pub fn eval_w(&self, z: &[Complex64]) -> Result<Complex64, AmbientError> {
        self.check_point(z)?;
        Ok(self.eval_w_deriv(z, &vec![0; self.n]))
    }

    /// Evaluate a mixed complex derivative of `W` given per-coordinate orders.
    pub fn eval_w_deriv(&self, z: &[Complex64], orders: &[u32]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        'terms: for (mi, c) in &self.terms {
            let mut v = *c;
            for a in 0..self.n {
                let k = mi[a];
                let d = orders[a];
                if k < d {
                    continue 'terms;
                }
                // falling factorial k (k-1) ... (k-d+1) then z^(k-d)
                for j in 0..d {
                    v *= (k - j) as f64;
                }
                v *= z[a].powu(k - d);
            }
            acc += v;
        }
        acc
    }

    /// `psi(z) = Re W(z) / n`.
    pub fn psi(&self, z: &[Complex64]) -> Result<f64, AmbientError> {
        Ok(self.eval_w(z)?.re / self.n as f64)
    }

    /// Ambient gradient of `psi` as a real `2n`-vector `(x_1, y_1, ..., x_n, y_n)`.
    ///
    /// From the Cauchy-Riemann relations, `d(Re W)/dx_a = Re W_{z_a}` and
    /// `d(Re W)/dy_a = -Im W_{z_a}`.
    pub fn grad_psi(&self, z: &[Complex64]) -> Result<Vec<f64>, AmbientError> {
        self.check_point(z)?;
        let inv_n = 1.0 / self.n as f64;
        let mut g = vec![0.0; 2 * self.n];
        for a in 0..self.n {
            let mut orders = vec![0u32; self.n];
            orders[a] = 1;
            let wa = self.eval_w_deriv(z, &orders);
            g[2 * a] = wa.re * inv_n;
            g[2 * a + 1] = -wa.im * inv_n;
        }
        Ok(g)
    }

    /// Hessian of `psi` as a symmetric `2n x 2n` matrix (row-major).
    ///
    /// Each complex coordinate pair contributes the block
    /// `[[Re w, -Im w], [-Im w, -Re w]]` with `w = W_{z_a z_b}`, so the trace
    /// over every complex line vanishes identically.
    pub fn hess_psi(&self, z: &[Complex64]) -> Result<Vec<Vec<f64>>, AmbientError> {
        self.check_point(z)?;
        let dim = 2 * self.n;
        let inv_n = 1.0 / self.n as f64;
        let mut h = vec![vec![0.0; dim]; dim];
        for a in 0..self.n {
            for b in 0..self.n {
                let mut orders = vec![0u32; self.n];
                orders[a] += 1;
                orders[b] += 1;
                let w = self.eval_w_deriv(z, &orders) * inv_n;
                h[2 * a][2 * b] = w.re;
                h[2 * a][2 * b + 1] = -w.im;
                h[2 * a + 1][2 * b] = -w.im;
                h[2 * a + 1][2 * b + 1] = -w.re;
            }
        }
        Ok(h)
    }

    /// `Im W(z)`; defined only for n = 1 where it fixes the angle gauge.
    pub fn im_w(&self, z: &[Complex64]) -> Result<f64, AmbientError> {
        if self.n != 1 {
            return Err(AmbientError::RequiresDimensionOne(self.n));
        }
        self.check_point(z)?;
        Ok(self.eval_w(z)?.im)
    }

    // ---- n = 1 hot path -------------------------------------------------

    /// `W^(order)(z)` for n = 1, `order <= 3`, by Horner evaluation.
    #[inline]
    pub fn w1(&self, z: Complex64, order: usize) -> Complex64 {
        debug_assert_eq!(self.n, 1);
        let c = &self.dense1[order];
        let mut acc = Complex64::new(0.0, 0.0);
        for a in c.iter().rev() {
            acc = acc * z + a;
        }
        acc
    }

    #[inline]
    pub fn psi1(&self, z: Complex64) -> f64 {
        self.w1(z, 0).re
    }

    #[inline]
    pub fn im_w1(&self, z: Complex64) -> f64 {
        self.w1(z, 0).im
    }

    /// Gradient of `psi` at `z` encoded as the complex number `psi_x + i psi_y`.
    #[inline]
    pub fn drift1(&self, z: Complex64) -> Complex64 {
        self.w1(z, 1).conj()
    }

    /// True when `W` has no terms, so the flow degenerates to plain curve
    /// shortening.
    pub fn is_weightless(&self) -> bool {
        self.terms.is_empty()
    }

    /// Canonical weight spec string (`idx:re,im;...`), parse-compatible with
    /// [`AmbientSpace::from_weight_spec`].
    pub fn weight_spec(&self) -> String {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(mi, c)| {
                let idx = mi
                    .iter()
                    .map(|k| k.to_string())
                    .collect::<Vec<_>>()
                    .join(" ");
                format!("{idx}:{},{}", c.re, c.im)
            })
            .collect();
        parts.join(";")
    }

    /// Parse a weight spec: terms separated by `;`, each term
    /// `<multi-index>:<re>,<im>` with the multi-index as `n` whitespace
    /// separated exponents. The empty string is `W = 0`.
    pub fn from_weight_spec(n: usize, spec: &str) -> Result<Self, AmbientError> {
        let mut terms: BTreeMap<MultiIndex, Complex64> = BTreeMap::new();
        for raw in spec.split(';') {
            let part = raw.trim();
            if part.is_empty() {
                continue;
            }
            let (idx, coeff) = part.split_once(':').ok_or_else(|| {
                AmbientError::WeightParse(part.to_string(), "missing `:`".into())
            })?;
            let mi: MultiIndex = idx
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<u32>().map_err(|e| {
                        AmbientError::WeightParse(part.to_string(), e.to_string())
                    })
                })
                .collect::<Result<_, _>>()?;
            if mi.len() != n {
                return Err(AmbientError::WeightParse(
                    part.to_string(),
                    format!("multi-index needs {n} exponents"),
                ));
            }
            let (re, im) = coeff.split_once(',').ok_or_else(|| {
                AmbientError::WeightParse(part.to_string(), "coefficient needs `re,im`".into())
            })?;
            let re: f64 = re.trim().parse().map_err(|e: std::num::ParseFloatError| {
                AmbientError::WeightParse(part.to_string(), e.to_string())
            })?;
            let im: f64 = im.trim().parse().map_err(|e: std::num::ParseFloatError| {
                AmbientError::WeightParse(part.to_string(), e.to_string())
            })?;
            let c = Complex64::new(re, im);
            let entry = terms.entry(mi).or_insert(Complex64::new(0.0, 0.0));
            *entry += c;
        }
        Self::new(n, terms)
    }
}

/// Real inner product of two vectors in `C ~ R^2`.
#[inline]
pub fn dot(a: Complex64, b: Complex64) -> f64 {
    a.re * b.re + a.im * b.im
}
