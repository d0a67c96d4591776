//! The matching law `a' = a/log a * (1 + 5/(2 log a) + K/log^2 a)`, `a(0) = 2`,
//! and the derived `b = a'/a^2`, `gamma = (a/a')'`.
//!
//! The ODE is integrated for `L = log a`, where it reads
//! `L' = (1 + 5/(2L) + K/L^2) / L`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `A(t) = exp(5/2 + sqrt(2t))`.
pub fn closed_a(t: f64) -> f64 {
    (2.5 + (2.0 * t).sqrt()).exp()
}

/// `1 + 5/(2L) + K/L^2`.
fn eta_factor(l: f64, k: f64) -> f64 {
    let s = 1.0 / l;
    1.0 + 2.5 * s + k * s * s
}

/// `dL/dt`.
fn rhs(l: f64, k: f64) -> f64 {
    eta_factor(l, k) / l
}

/// `H(s) = s (1 + 5s + 3K s^2) / (1 + 5s/2 + K s^2)`.
pub fn gamma_h(s: f64, k: f64) -> f64 {
    s * (1.0 + 5.0 * s + 3.0 * k * s * s) / (1.0 + 2.5 * s + k * s * s)
}

fn gamma_h_prime(s: f64, k: f64) -> f64 {
    let num = s * (1.0 + 5.0 * s + 3.0 * k * s * s);
    let den = 1.0 + 2.5 * s + k * s * s;
    let dnum = 1.0 + 10.0 * s + 9.0 * k * s * s;
    let dden = 2.5 + 2.0 * k * s;
    (dnum * den - num * dden) / (den * den)
}

/// `gamma = H(1/log a)`.
pub fn gamma_of_a(a: f64, k: f64) -> Result<f64> {
    if !(a > 1.0) {
        return Err(Error::Domain { a });
    }
    Ok(gamma_h(1.0 / a.ln(), k))
}

/// Everything the barriers need at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathState {
    pub t: f64,
    pub log_a: f64,
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub gamma: f64,
    /// `d gamma / dt`.
    pub gamma_dot: f64,
}

impl PathState {
    fn from_log_a(t: f64, l: f64, k: f64) -> Self {
        let a = l.exp();
        let lp = rhs(l, k);
        let a_prime = a * lp;
        let s = 1.0 / l;
        Self {
            t,
            log_a: l,
            a,
            a_prime,
            b: a_prime / (a * a),
            gamma: gamma_h(s, k),
            gamma_dot: gamma_h_prime(s, k) * (-s * s * lp),
        }
    }
}

/// How `a(t)` is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum Law {
    /// The matching ODE with constant `K`.
    Ode { k: f64 },
    /// Time-independent `a`, `b`, `gamma` (diagnostics and degenerate cases).
    Frozen { a: f64, b: f64, gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchOptions {
    /// Local relative error per step.
    pub rtol: f64,
    /// Samples per decade of the geometric time lattice.
    pub samples_per_decade: usize,
    pub max_step: f64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            samples_per_decade: 40,
            max_step: 5.0,
        }
    }
}

/// Samples of `a, a', b, gamma, epsilon` on an increasing time lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingPath {
    pub law: Law,
    pub options: MatchOptions,
    pub t_samples: Vec<f64>,
    pub log_a: Vec<f64>,
    pub a: Vec<f64>,
    pub a_prime: Vec<f64>,
    pub b: Vec<f64>,
    pub gamma: Vec<f64>,
    pub epsilon: Vec<f64>,
}

impl MatchingPath {
    pub fn k(&self) -> Option<f64> {
        match self.law {
            Law::Ode { k } => Some(k),
            Law::Frozen { .. } => None,
        }
    }

    /// A frozen path sampled at `t_samples`.
    pub fn frozen(a: f64, b: f64, gamma: f64, t_samples: Vec<f64>) -> Self {
        let n = t_samples.len();
        Self {
            law: Law::Frozen { a, b, gamma },
            options: MatchOptions::default(),
            t_samples,
            log_a: vec![a.ln(); n],
            a: vec![a; n],
            a_prime: vec![b * a * a; n],
            b: vec![b; n],
            gamma: vec![gamma; n],
            epsilon: vec![gamma; n],
        }
    }

    pub fn t_end(&self) -> f64 {
        *self.t_samples.last().unwrap()
    }

    /// State at any `t >= 0`, integrating from the nearest earlier sample.
    pub fn state(&self, t: f64) -> Result<PathState> {
        if !(t >= 0.0) {
            return Err(Error::InvalidInput(format!("path time {t} < 0")));
        }
        match self.law {
            Law::Frozen { a, b, gamma } => Ok(PathState {
                t,
                log_a: a.ln(),
                a,
                a_prime: b * a * a,
                b,
                gamma,
                gamma_dot: 0.0,
            }),
            Law::Ode { k } => {
                let i = self.t_samples.partition_point(|&s| s <= t).max(1) - 1;
                let l = if self.t_samples[i] == t {
                    self.log_a[i]
                } else {
                    dopri_to(self.log_a[i], self.t_samples[i], t, k, &self.options)?
                };
                Ok(PathState::from_log_a(t, l, k))
            }
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,a,a',b,gamma")?;
        for i in 0..self.t_samples.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.t_samples[i], self.a[i], self.a_prime[i], self.b[i], self.gamma[i]
            )?;
        }
        Ok(())
    }

    pub fn header(&self) -> PathHeader {
        PathHeader {
            k: self.k(),
            rtol: self.options.rtol,
            integrator_order: 5,
            t_end: self.t_end(),
            samples: self.t_samples.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathHeader {
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub rtol: f64,
    pub integrator_order: u32,
    pub t_end: f64,
    pub samples: usize,
}

fn check_k(k: f64) -> Result<()> {
    if !k.is_finite() || eta_factor(std::f64::consts::LN_2, k) <= 0.0 {
        return Err(Error::InvalidK { k });
    }
    Ok(())
}

/// Geometric time lattice `0, t0, t0 q, ...` up to `t_end`, merged with `extra`.
fn time_lattice(t_end: f64, per_decade: usize, extra: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0];
    let q = 10f64.powf(1.0 / per_decade as f64);
    let mut s = 1e-3;
    while s < t_end {
        t.push(s);
        s *= q;
    }
    // exact times (t_end, extras) replace lattice points within rounding
    let exact: Vec<f64> = std::iter::once(t_end)
        .chain(extra.iter().copied().filter(|&e| e > 0.0 && e <= t_end))
        .collect();
    t.retain(|s| !exact.iter().any(|e| (s - e).abs() <= 1e-9 * e));
    t.extend(exact);
    t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    t.dedup();
    t
}

/// Integrate the matching law from `a(0) = 2` to `t_end`, sampling on a
/// geometric lattice plus the `extra` times.
pub fn integrate_a(k: f64, t_end: f64, options: MatchOptions, extra: &[f64]) -> Result<MatchingPath> {
    check_k(k)?;
    if !(t_end > 0.0) {
        return Err(Error::InvalidInput(format!("t_end = {t_end} must be positive")));
    }
    let times = time_lattice(t_end, options.samples_per_decade, extra);
    let mut log_a = Vec::with_capacity(times.len());
    let mut l = std::f64::consts::LN_2;
    log_a.push(l);
    for w in times.windows(2) {
        l = dopri_to(l, w[0], w[1], k, &options)?;
        log_a.push(l);
    }
    let states: Vec<PathState> = times
        .iter()
        .zip(&log_a)
        .map(|(&t, &l)| PathState::from_log_a(t, l, k))
        .collect();
    Ok(MatchingPath {
        law: Law::Ode { k },
        options,
        t_samples: times,
        log_a,
        a: states.iter().map(|s| s.a).collect(),
        a_prime: states.iter().map(|s| s.a_prime).collect(),
        b: states.iter().map(|s| s.b).collect(),
        gamma: states.iter().map(|s| s.gamma).collect(),
        epsilon: states.iter().map(|s| s.gamma).collect(),
    })
}

/// `b_i = a'_i / a_i^2`.
pub fn b_of(path: &MatchingPath) -> Vec<f64> {
    path.a
        .iter()
        .zip(&path.a_prime)
        .map(|(a, ap)| ap / (a * a))
        .collect()
}

/// True when `gamma` never increases after the first sample with `log a >= 3`.
pub fn gamma_monotone_check(path: &MatchingPath) -> bool {
    let Some(start) = path.log_a.iter().position(|&l| l >= 3.0) else {
        return true;
    };
    path.gamma[start..].windows(2).all(|w| w[1] <= w[0])
}

/// First sample time after which `gamma` is nonincreasing to the end.
pub fn gamma_monotone_onset(path: &MatchingPath) -> Option<f64> {
    let n = path.gamma.len();
    let mut i = n - 1;
    while i > 0 && path.gamma[i] <= path.gamma[i - 1] {
        i -= 1;
    }
    if i == n - 1 && n > 1 {
        None
    } else {
        Some(path.t_samples[i])
    }
}

/// Classical RK4 with `steps` equal steps; returns `a(t_end)`.
pub fn integrate_a_rk4(k: f64, t_end: f64, steps: usize) -> Result<f64> {
    check_k(k)?;
    let h = t_end / steps as f64;
    let mut l = std::f64::consts::LN_2;
    for _ in 0..steps {
        let k1 = rhs(l, k);
        let k2 = rhs(l + 0.5 * h * k1, k);
        let k3 = rhs(l + 0.5 * h * k2, k);
        let k4 = rhs(l + h * k3, k);
        l += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    Ok(l.exp())
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand-Prince from `(t0, l0)` to `t1`.
fn dopri_to(
    l0: f64,
    t0: f64,
    t1: f64,
    k: f64,
    opts: &MatchOptions,
) -> Result<f64> {
    let mut t = t0;
    let mut l = l0;
    let mut h = (1e-3 * l / rhs(l, k).abs()).min(t1 - t0).min(opts.max_step);
    let mut guard = 0usize;
    while t < t1 {
        guard += 1;
        if guard > 10_000_000 {
            return Err(Error::InvalidInput("matching integration did not finish".into()));
        }
        let last = t + h >= t1;
        let step = if last { t1 - t } else { h };
        let mut ks = [0.0; 7];
        for s in 0..7 {
            let y = l + step * (0..s).map(|j| A[s][j] * ks[j]).sum::<f64>();
            ks[s] = rhs(y, k);
        }
        let y5 = l + step * (0..7).map(|j| B5[j] * ks[j]).sum::<f64>();
        let y4 = l + step * (0..7).map(|j| B4[j] * ks[j]).sum::<f64>();
        let err = (y5 - y4).abs();
        let tol = opts.rtol * l.abs().max(y5.abs()) + 1e-15;
        let fac = if err == 0.0 { 5.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0) };
        if err <= tol {
            if last {
                return Ok(y5);
            }
            t += step;
            l = y5;
            h = (h * fac).min(opts.max_step);
        } else {
            h = step * fac;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::InvalidInput(format!("step size underflow at t = {t}")));
        }
    }
    Ok(l)
}
