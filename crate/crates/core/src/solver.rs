//! Implicit finite-volume solver for `u_t = x u_xx + 2 u u_x` and for the
//! radial form `w_t = w_rr + 3 w_r / r + w^2 + (r/2) w w_r`.
//!
//! The u-equation is written as `u_t = (x u_x - u (1 - u))_x` and discretised
//! with the face flux
//!
//! ```text
//! F = (x_f + eps) (u_R - u_L) / h - (u_L (1 - u_R) + u_R (1 - u_L)) / 2.
//! ```
//!
//! With `eps = 0` every steady profile `a x / (a x + 1)` has zero flux on any
//! grid, and the off-diagonal Jacobian entries are nonnegative for
//! `0 <= u <= 1`, so backward Euler is monotone without upwinding.
//! The w-equation uses `r^3 w_t = (r^3 w_r + r^4 w^2 / 4)_r` with the face
//! value `w_L w_R` for `w^2`, which keeps `8a / (a r^2 + 1)` exact as well.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GradedGrid, RadialField, Snapshot};
use crate::tridiag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Backward Euler, adaptive by step doubling.
    #[default]
    BackwardEuler,
    /// Fixed-step BDF2 started with one backward Euler step.
    Bdf2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid: GradedGrid,
    pub dt_initial: f64,
    pub dt_max: f64,
    pub newton_tol: f64,
    pub reg_epsilon: f64,
    pub scheme: Scheme,
    pub right_bc: f64,
    /// Step-doubling control for backward Euler; `false` means fixed steps of
    /// `dt_initial`.
    pub adaptive: bool,
    pub rtol: f64,
    pub atol: f64,
    /// Allowed overshoot of `[0, right_bc]` and of monotonicity.
    pub principle_tol: f64,
    /// Cap on `max w` in the radial form.
    pub blowup_cap: f64,
}

impl SolverConfig {
    pub fn new(grid: GradedGrid) -> Self {
        Self {
            grid,
            dt_initial: 1e-6,
            dt_max: 0.25,
            newton_tol: 1e-12,
            reg_epsilon: 0.0,
            scheme: Scheme::BackwardEuler,
            right_bc: 1.0,
            adaptive: true,
            rtol: 1e-4,
            atol: 1e-8,
            principle_tol: 1e-9,
            blowup_cap: 1e8,
        }
    }

    /// Grid sized so that `x_min * A(t_end) <= 0.01`, geometric with ratio
    /// 1.04 and a uniform tail.
    pub fn long_run(t_end: f64) -> Result<Self> {
        let layer = 1.0 / crate::closed_a(t_end);
        let x_min = (0.01 * layer).min(1e-4);
        let x_min = 10f64.powf(x_min.log10().floor());
        Ok(Self::new(crate::grid::make_graded_grid(600, x_min, 1.04)?))
    }

    fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) {
            return Err(Error::InvalidInput("newton_tol must be positive".into()));
        }
        if !(self.dt_initial > 0.0 && self.dt_initial <= self.dt_max) {
            return Err(Error::InvalidInput("need 0 < dt_initial <= dt_max".into()));
        }
        if !(self.reg_epsilon >= 0.0) {
            return Err(Error::InvalidInput("reg_epsilon must be >= 0".into()));
        }
        if !(self.right_bc > 0.0) {
            return Err(Error::InvalidInput("right boundary value must be positive".into()));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.principle_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// One accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiag {
    pub t: f64,
    pub dt: f64,
    pub newton_iters: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<StepDiag>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| (s.time - t).abs() <= 1e-12 * t.max(1.0))
    }
}

/// Semi-discrete system `dv/dt = F(v)` with tridiagonal Jacobian; rows of
/// fixed (Dirichlet) nodes are left zero.
trait System {
    fn len(&self) -> usize;
    fn fixed(&self, i: usize) -> bool;
    fn eval(&self, v: &[f64], f: &mut [f64], lo: &mut [f64], di: &mut [f64], up: &mut [f64]);
}

struct UForm<'a> {
    x: &'a [f64],
    eps: f64,
}

impl System for UForm<'_> {
    fn len(&self) -> usize {
        self.x.len()
    }

    fn fixed(&self, i: usize) -> bool {
        i == 0 || i + 1 == self.x.len()
    }

    fn eval(&self, u: &[f64], f: &mut [f64], lo: &mut [f64], di: &mut [f64], up: &mut [f64]) {
        let n = self.x.len();
        for i in 0..n {
            f[i] = 0.0;
            lo[i] = 0.0;
            di[i] = 0.0;
            up[i] = 0.0;
        }
        // face i+1/2: flux and its partials in u_i (dl) and u_{i+1} (dr)
        let face = |i: usize| {
            let h = self.x[i + 1] - self.x[i];
            let c = (0.5 * (self.x[i] + self.x[i + 1]) + self.eps) / h;
            let (ul, ur) = (u[i], u[i + 1]);
            let flux = c * (ur - ul) - 0.5 * (ul + ur - 2.0 * ul * ur);
            let dl = -c - 0.5 * (1.0 - 2.0 * ur);
            let dr = c - 0.5 * (1.0 - 2.0 * ul);
            (flux, dl, dr)
        };
        let mut left = face(0);
        for i in 1..n - 1 {
            let right = face(i);
            let vol = 0.5 * (self.x[i + 1] - self.x[i - 1]);
            f[i] = (right.0 - left.0) / vol;
            lo[i] = -left.1 / vol;
            di[i] = (right.1 - left.2) / vol;
            up[i] = right.2 / vol;
            left = right;
        }
    }
}

struct WForm<'a> {
    r: &'a [f64],
}

impl System for WForm<'_> {
    fn len(&self) -> usize {
        self.r.len()
    }

    fn fixed(&self, i: usize) -> bool {
        i + 1 == self.r.len()
    }

    fn eval(&self, w: &[f64], f: &mut [f64], lo: &mut [f64], di: &mut [f64], up: &mut [f64]) {
        let n = self.r.len();
        for i in 0..n {
            f[i] = 0.0;
            lo[i] = 0.0;
            di[i] = 0.0;
            up[i] = 0.0;
        }
        let face = |j: usize| {
            let h = self.r[j + 1] - self.r[j];
            let rf = 0.5 * (self.r[j] + self.r[j + 1]);
            let (r3, r4) = (rf * rf * rf, rf * rf * rf * rf);
            let flux = r3 * (w[j + 1] - w[j]) / h + 0.25 * r4 * w[j] * w[j + 1];
            let dl = -r3 / h + 0.25 * r4 * w[j + 1];
            let dr = r3 / h + 0.25 * r4 * w[j];
            (flux, dl, dr, rf)
        };
        let mut left: (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
        for j in 0..n - 1 {
            let right = face(j);
            let vol = 0.25 * (right.3.powi(4) - left.3.powi(4));
            f[j] = (right.0 - left.0) / vol;
            lo[j] = -left.1 / vol;
            di[j] = (right.1 - left.2) / vol;
            up[j] = right.2 / vol;
            left = right;
        }
    }
}

/// Solve `v - base - beta dt F(v) = 0` by Newton from `guess`.
fn newton<S: System>(sys: &S, base: &[f64], beta_dt: f64, guess: &[f64], tol: f64) -> Option<(Vec<f64>, u32)> {
    let n = sys.len();
    let mut v = guess.to_vec();
    let (mut f, mut lo, mut di, mut up) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut res = vec![0.0; n];
    for it in 1..=30u32 {
        sys.eval(&v, &mut f, &mut lo, &mut di, &mut up);
        for i in 0..n {
            if sys.fixed(i) {
                res[i] = base[i] - v[i];
                lo[i] = 0.0;
                up[i] = 0.0;
                di[i] = 1.0;
            } else {
                res[i] = -(v[i] - base[i] - beta_dt * f[i]);
                lo[i] *= -beta_dt;
                up[i] *= -beta_dt;
                di[i] = 1.0 - beta_dt * di[i];
            }
        }
        tridiag::solve(&lo, &di, &up, &mut res)?;
        let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let mut step = 0.0f64;
        for i in 0..n {
            v[i] += res[i];
            step = step.max(res[i].abs());
        }
        if !step.is_finite() {
            return None;
        }
        if step <= tol * scale {
            return Some((v, it));
        }
    }
    None
}

struct Stepper<'a, S: System> {
    sys: S,
    cfg: &'a SolverConfig,
}

impl<S: System> Stepper<'_, S> {
    fn be(&self, v: &[f64], dt: f64) -> Option<(Vec<f64>, u32)> {
        newton(&self.sys, v, dt, v, self.cfg.newton_tol)
    }

    fn bdf2(&self, v: &[f64], v_old: &[f64], dt: f64) -> Option<(Vec<f64>, u32)> {
        let base: Vec<f64> = v.iter().zip(v_old).map(|(a, b)| (4.0 * a - b) / 3.0).collect();
        newton(&self.sys, &base, 2.0 * dt / 3.0, v, self.cfg.newton_tol)
    }

    /// March to `t_end`, hitting every output time exactly. `check` runs on
    /// each accepted state and may abort; `record` stores outputs.
    fn run(
        &self,
        v0: Vec<f64>,
        t_end: f64,
        outputs: &[f64],
        check: &mut dyn FnMut(f64, &[f64]) -> Result<bool>,
        record: &mut dyn FnMut(f64, &[f64]) -> Result<()>,
    ) -> Result<Vec<StepDiag>> {
        let cfg = self.cfg;
        let mut targets: Vec<f64> = outputs.iter().copied().filter(|&t| t > 0.0 && t <= t_end).collect();
        targets.push(t_end);
        targets.sort_by(|a, b| a.partial_cmp(b).unwrap());
        targets.dedup();
        if outputs.iter().any(|&t| t == 0.0) {
            record(0.0, &v0)?;
        }
        let mut diags = Vec::new();
        let mut v = v0;
        let mut v_old: Option<Vec<f64>> = None;
        let mut t = 0.0;
        let mut dt = cfg.dt_initial;
        let floor = 1e-12;
        for &target in &targets {
            while t < target {
                let remaining = target - t;
                let truncated = dt >= remaining * (1.0 - 1e-12);
                let h = if truncated { remaining } else { dt };
                let attempt = match (cfg.scheme, cfg.adaptive, &v_old) {
                    (Scheme::Bdf2, _, Some(old)) => self.bdf2(&v, old, h).map(|(w, k)| (w, k, 0.0)),
                    (Scheme::Bdf2, _, None) | (Scheme::BackwardEuler, false, _) => {
                        self.be(&v, h).map(|(w, k)| (w, k, 0.0))
                    }
                    (Scheme::BackwardEuler, true, _) => self.doubled(&v, h),
                };
                let Some((next, iters, err)) = attempt else {
                    dt = h / 2.0;
                    if dt < floor {
                        return Err(Error::SolverFailure { t, dt });
                    }
                    continue;
                };
                if err > 1.0 {
                    dt = h * (0.9 / err.sqrt()).max(0.2);
                    if dt < floor {
                        return Err(Error::SolverFailure { t, dt });
                    }
                    continue;
                }
                t = if truncated { target } else { t + h };
                if cfg.scheme == Scheme::Bdf2 {
                    v_old = Some(std::mem::replace(&mut v, next));
                } else {
                    v = next;
                }
                diags.push(StepDiag { t, dt: h, newton_iters: iters });
                if !check(t, &v)? {
                    return Ok(diags);
                }
                if cfg.adaptive && cfg.scheme == Scheme::BackwardEuler {
                    let grow = if err == 0.0 { 2.0 } else { (0.9 / err.sqrt()).clamp(0.2, 2.0) };
                    let proposal = h * grow;
                    // a step cut short by an output time says little about dt
                    dt = if !truncated { proposal } else if grow < 1.0 { proposal.min(dt) } else { dt };
                    dt = dt.min(cfg.dt_max);
                }
            }
            record(t, &v)?;
        }
        Ok(diags)
    }

    /// One step of size `h` against two of size `h/2`; returns the two-step
    /// result and the scaled difference.
    fn doubled(&self, v: &[f64], h: f64) -> Option<(Vec<f64>, u32, f64)> {
        let (big, k1) = self.be(v, h)?;
        let (mid, k2) = self.be(v, 0.5 * h)?;
        let (fine, k3) = self.be(&mid, 0.5 * h)?;
        let err = big
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).abs() / (self.cfg.atol + self.cfg.rtol * b.abs()))
            .fold(0.0, f64::max);
        Some((fine, k1 + k2 + k3, err))
    }
}

/// Integrate the u-problem from `u0` to `t_end`, storing the listed output
/// times (and `t_end`).
pub fn solve(u0: &Snapshot, config: &SolverConfig, t_end: f64, output_times: &[f64]) -> Result<Trajectory> {
    config.validate()?;
    if u0.grid.nodes != config.grid.nodes {
        return Err(Error::InvalidInput("initial data lives on a different grid".into()));
    }
    if u0.values[0] != 0.0 {
        return Err(Error::InvalidInput("u0(0) must be 0".into()));
    }
    if (u0.right_bc - config.right_bc).abs() > 1e-15 {
        return Err(Error::InvalidInput(format!(
            "u0(1) = {} but the boundary value is {}",
            u0.right_bc, config.right_bc
        )));
    }
    let tol = config.principle_tol;
    if u0.monotonicity_violation() > tol || u0.bound_violation() > tol {
        return Err(Error::InvalidInput("u0 must be nondecreasing with values in [0, u0(1)]".into()));
    }
    let stepper = Stepper {
        sys: UForm {
            x: &config.grid.nodes,
            eps: config.reg_epsilon,
        },
        cfg: config,
    };
    let xi = config.right_bc;
    let mut check = |t: f64, v: &[f64]| -> Result<bool> {
        let low = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let high = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if low < -tol || high > xi + tol {
            return Err(Error::MaximumPrinciple {
                t,
                detail: format!("values in [{low:e}, {high}] leave [0, {xi}]"),
            });
        }
        if let Some(i) = (1..v.len()).find(|&i| v[i] < v[i - 1] - tol) {
            return Err(Error::MaximumPrinciple {
                t,
                detail: format!("monotonicity lost at node {i}"),
            });
        }
        Ok(true)
    };
    let mut snaps = Vec::new();
    let mut record = |t: f64, v: &[f64]| -> Result<()> {
        snaps.push(Snapshot {
            grid: config.grid.clone(),
            values: v.to_vec(),
            time: t,
            left_bc: 0.0,
            right_bc: xi,
        });
        Ok(())
    };
    let diagnostics = stepper.run(u0.values.clone(), t_end, output_times, &mut check, &mut record)?;
    Ok(Trajectory {
        snapshots: snaps,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WSnapshot {
    pub time: f64,
    pub field: RadialField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WTrajectory {
    pub snapshots: Vec<WSnapshot>,
    pub diagnostics: Vec<StepDiag>,
    /// Time at which `max w` first exceeded the cap.
    pub blowup_time: Option<f64>,
}

/// Integrate the radial w-form on the r-nodes of `w0`; `w(1)` is held at the
/// last value of `w0`. Stops early when `max w` exceeds `config.blowup_cap`.
pub fn solve_w(w0: &RadialField, config: &SolverConfig, t_end: f64, output_times: &[f64]) -> Result<WTrajectory> {
    config.validate()?;
    if w0.values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("w0 must be finite and nonnegative".into()));
    }
    if *w0.r_nodes.last().unwrap() != 1.0 {
        return Err(Error::InvalidInput("w0 must be given on [0, 1]".into()));
    }
    let stepper = Stepper {
        sys: WForm { r: &w0.r_nodes },
        cfg: config,
    };
    let tol = config.principle_tol;
    let cap = config.blowup_cap;
    let mut blowup = None;
    let mut check = |t: f64, v: &[f64]| -> Result<bool> {
        let low = v.iter().cloned().fold(f64::INFINITY, f64::min);
        if low < -tol {
            return Err(Error::MaximumPrinciple {
                t,
                detail: format!("w = {low:e} < 0"),
            });
        }
        if v.iter().any(|&x| x > cap) {
            blowup = Some(t);
            return Ok(false);
        }
        Ok(true)
    };
    let mut snaps = Vec::new();
    let mut record = |t: f64, v: &[f64]| -> Result<()> {
        snaps.push(WSnapshot {
            time: t,
            field: RadialField::from_mean_density(w0.r_nodes.clone(), v.to_vec())?,
        });
        Ok(())
    };
    let diagnostics = stepper.run(w0.values.clone(), t_end, output_times, &mut check, &mut record)?;
    Ok(WTrajectory {
        snapshots: snaps,
        diagnostics,
        blowup_time: blowup,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlopeMethod {
    Fit,
    Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub slope: f64,
    pub method: SlopeMethod,
    /// RMS residual of the inner fit relative to the slope.
    pub residual: f64,
    pub nodes_used: usize,
    pub warning: Option<String>,
}

/// Relative RMS residual above which the inner fit is distrusted.
pub const SLOPE_FIT_TOL: f64 = 1e-3;

/// Slope of `u` at the origin from the inner form `u = a x / (a x + 1)`:
/// the local values `a_i = u_i / (x_i (1 - u_i))` on nodes with
/// `a_i x_i <= 0.01` (at least three) are fitted by a line in `x`, whose
/// intercept is returned. When the fit is poor or the first node lies
/// outside the layer, `u_1 / x_1` is used instead if it agrees with the fit
/// to 10%; otherwise the layer counts as unresolved.
pub fn slope_origin(s: &Snapshot) -> Result<SlopeEstimate> {
    let x = s.x();
    let u = &s.values;
    if x.len() < 4 {
        return Err(Error::Resolution("need at least four nodes".into()));
    }
    let local = |i: usize| -> Result<f64> {
        if !(u[i] < 1.0) {
            return Err(Error::DegenerateSlope(format!(
                "u = {} at x = {:e} leaves no room for a finite slope",
                u[i], x[i]
            )));
        }
        Ok(u[i] / (x[i] * (1.0 - u[i])))
    };
    let mut pts = Vec::new();
    for i in 1..x.len() - 1 {
        let a = local(i)?;
        if pts.len() >= 3 && a * x[i] > 0.01 {
            break;
        }
        pts.push((x[i], a));
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(p, q), (x, y)| (p + x, q + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxx, sxy) = pts
        .iter()
        .fold((0.0, 0.0), |(p, q), (x, y)| (p + (x - mx) * (x - mx), q + (x - mx) * (y - my)));
    let slope_x = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope_x * mx;
    let rms = (pts
        .iter()
        .map(|(x, y)| (y - intercept - slope_x * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let residual = rms / intercept.abs();
    if !intercept.is_finite() || !(intercept > 0.0) {
        return Err(Error::DegenerateSlope(format!("fitted slope {intercept}")));
    }
    // the first node must at least sit inside the layer 1/a
    let inside = pts[0].1 * pts[0].0 <= 1.0;
    if residual <= SLOPE_FIT_TOL && inside {
        return Ok(SlopeEstimate {
            slope: intercept,
            method: SlopeMethod::Fit,
            residual,
            nodes_used: pts.len(),
            warning: None,
        });
    }
    let ratio = u[1] / x[1];
    if ((ratio - intercept) / intercept).abs() > 0.1 {
        return Err(Error::Resolution(format!(
            "inner fit residual {residual:.2e}; fit {intercept:.6e} and u1/x1 {ratio:.6e} disagree"
        )));
    }
    Ok(SlopeEstimate {
        slope: ratio,
        method: SlopeMethod::Ratio,
        residual,
        nodes_used: pts.len(),
        warning: Some(format!(
            "layer poorly resolved (fit residual {residual:.2e}); using u(x1)/x1"
        )),
    })
}

/// Trapezoid rule for `int_0^1 (1 - u) dx`.
pub fn l1_to_one(s: &Snapshot) -> f64 {
    s.x()
        .windows(2)
        .zip(s.values.windows(2))
        .map(|(x, u)| 0.5 * (x[1] - x[0]) * ((1.0 - u[0]) + (1.0 - u[1])))
        .sum()
}

/// Solve from both data and report whether `low <= high` holds at every
/// output (within `principle_tol`).
pub fn ordered_pair_test(
    low: &Snapshot,
    high: &Snapshot,
    config: &SolverConfig,
    t_end: f64,
    output_times: &[f64],
) -> Result<bool> {
    let (a, b) = rayon::join(
        || solve(low, config, t_end, output_times),
        || solve(high, config, t_end, output_times),
    );
    let (a, b) = (a?, b?);
    let tol = config.principle_tol.max(1e-9);
    Ok(a.snapshots.iter().zip(&b.snapshots).all(|(p, q)| {
        p.time == q.time && p.values.iter().zip(&q.values).all(|(x, y)| *x <= *y + tol)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallTimeReport {
    pub k: f64,
    pub tau: f64,
    /// `max (u - 2 K x)` over outputs with `t <= tau`.
    pub worst_excess: f64,
    pub bound_holds: bool,
    /// Largest `eta` with `u(x, tau) <= 1 - eta (1 - x)`, when `tau` is an output.
    pub eta_at_tau: Option<f64>,
    pub delta: f64,
    /// First output time with `u >= min(1 - delta, x / delta)` at every node.
    pub t_delta: Option<f64>,
}

/// Short-time bounds: `u <= 2Kx` up to `tau = 1/(4K)`, the margin below 1
/// at `tau`, and the first time `u >= min(1 - delta, x/delta)`.
pub fn small_time_checks(traj: &Trajectory, k: f64, delta: f64) -> Result<SmallTimeReport> {
    if !(k > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput("need K > 0 and 0 < delta < 1".into()));
    }
    let tau = 1.0 / (4.0 * k);
    let tol = 1e-9;
    let mut worst = f64::NEG_INFINITY;
    for s in traj.snapshots.iter().filter(|s| s.time <= tau * (1.0 + 1e-12)) {
        for (x, u) in s.x().iter().zip(&s.values) {
            worst = worst.max(u - 2.0 * k * x);
        }
    }
    let eta_at_tau = traj.at(tau).map(|s| {
        s.x()
            .iter()
            .zip(&s.values)
            .filter(|(x, _)| **x < 1.0)
            .map(|(x, u)| (1.0 - u) / (1.0 - x))
            .fold(f64::INFINITY, f64::min)
    });
    let t_delta = traj
        .snapshots
        .iter()
        .find(|s| {
            s.x()
                .iter()
                .zip(&s.values)
                .all(|(x, u)| *u >= (1.0 - delta).min(x / delta) - tol)
        })
        .map(|s| s.time);
    Ok(SmallTimeReport {
        k,
        tau,
        worst_excess: worst,
        bound_holds: worst <= tol,
        eta_at_tau,
        delta,
        t_delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_graded_grid;
    use proptest::prelude::*;

    fn u_a(a: f64) -> impl Fn(f64) -> f64 {
        move |x| a * x / (a * x + 1.0)
    }

    #[test]
    fn steady_profile_is_discrete_fixed_point() {
        let grid = make_graded_grid(200, 1e-6, 1.1).unwrap();
        let sys = UForm { x: &grid.nodes, eps: 0.0 };
        let v: Vec<f64> = grid.nodes.iter().map(|&x| u_a(50.0)(x)).collect();
        let n = v.len();
        let (mut f, mut lo, mut di, mut up) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        sys.eval(&v, &mut f, &mut lo, &mut di, &mut up);
        let scale = grid.nodes[1..n - 1]
            .iter()
            .zip(grid.widths())
            .map(|(x, h)| x / (h * h))
            .fold(0.0f64, f64::max);
        assert!(f.iter().all(|r| r.abs() < 1e-13 * scale), "{:e}", f.iter().fold(0.0f64, |m, r| m.max(r.abs())));
        // off-diagonals are nonnegative
        assert!(lo.iter().chain(&up).all(|&c| c >= 0.0));
    }

    #[test]
    fn linear_growth_is_exact() {
        // v = c x with c = K / (1 - 2Kt) gives dv/dt = 2 c^2 x exactly
        let grid = make_graded_grid(50, 1e-3, 1.2).unwrap();
        let sys = UForm { x: &grid.nodes, eps: 0.0 };
        let c = 0.7;
        let v: Vec<f64> = grid.nodes.iter().map(|&x| c * x).collect();
        let n = v.len();
        let (mut f, mut lo, mut di, mut up) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        sys.eval(&v, &mut f, &mut lo, &mut di, &mut up);
        for i in 1..n - 1 {
            assert!((f[i] - 2.0 * c * c * grid.nodes[i]).abs() < 1e-10, "{i}");
        }
    }

    #[test]
    fn slope_examples() {
        let g = make_graded_grid(400, 1e-9, 1.06).unwrap();
        for a in [3.0, 1e3, 2.7e5] {
            let s = Snapshot::from_fn(g.clone(), 0.0, u_a(a)).unwrap();
            let est = slope_origin(&s).unwrap();
            assert_eq!(est.method, SlopeMethod::Fit);
            assert!((est.slope / a - 1.0).abs() < 1e-6, "{a}: {}", est.slope);
        }
        let lin = Snapshot::from_fn(g.clone(), 0.0, |x| x).unwrap();
        let est = slope_origin(&lin).unwrap();
        // 1/(1-x) is not constant, so the fit window costs O(1e-6)
        assert!((est.slope - 1.0).abs() < 1e-5, "{est:?}");
        // unresolved layer: the first node is far outside 1/a
        let coarse = make_graded_grid(20, 1e-2, 1.2).unwrap();
        let s = Snapshot::from_fn(coarse, 0.0, |x| {
            let a = 1e4;
            (a * x / (a * x + 1.0)).powf(0.3)
        })
        .unwrap();
        let r = slope_origin(&s);
        assert!(r.is_err(), "{r:?}");
    }

    #[test]
    fn l1_examples() {
        let g = make_graded_grid(2000, 1e-8, 1.02).unwrap();
        let one = Snapshot::from_fn(g.clone(), 0.0, |x| if x == 0.0 { 0.0 } else { 1.0 }).unwrap();
        assert!(l1_to_one(&one) < 1e-7);
        let lin = Snapshot::from_fn(g.clone(), 0.0, |x| x).unwrap();
        assert!((l1_to_one(&lin) - 0.5).abs() < 1e-14);
        for a in [10.0, 1e4] {
            let s = Snapshot::from_fn(g.clone(), 0.0, u_a(a)).unwrap();
            let exact = (1.0 + a).ln() / a;
            assert!((l1_to_one(&s) / exact - 1.0).abs() < 1e-4, "{a}");
        }
    }

    #[test]
    fn sub_critical_steady_state_does_not_drift() {
        let a = 30.0;
        let grid = make_graded_grid(300, 1e-7, 1.08).unwrap();
        let u0 = Snapshot::from_fn(grid.clone(), 0.0, u_a(a)).unwrap();
        let mut cfg = SolverConfig::new(grid);
        cfg.right_bc = a / (1.0 + a);
        let traj = solve(&u0, &cfg, 10.0, &[1.0, 5.0]).unwrap();
        for s in &traj.snapshots {
            let drift = s.values.iter().zip(&u0.values).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(drift <= 1e-8, "{}: {drift:e}", s.time);
        }
        assert_eq!(traj.times(), vec![1.0, 5.0, 10.0]);
    }

    #[test]
    fn wrong_boundary_is_rejected() {
        let grid = make_graded_grid(50, 1e-4, 1.2).unwrap();
        let u0 = Snapshot::from_fn(grid.clone(), 0.0, |x| x * 0.5).unwrap();
        let cfg = SolverConfig::new(grid);
        assert!(solve(&u0, &cfg, 1.0, &[]).is_err());
    }

    #[test]
    fn w_form_steady_state_and_linear_start() {
        let a = 12.0;
        let grid = make_graded_grid(300, 1e-7, 1.08).unwrap();
        let u0 = Snapshot::from_fn(grid.clone(), 0.0, u_a(a)).unwrap();
        let w0 = crate::grid::w_from_u(&u0).unwrap();
        let cfg = SolverConfig::new(grid);
        let traj = solve_w(&w0, &cfg, 2.0, &[]).unwrap();
        let last = &traj.snapshots.last().unwrap().field;
        for (r, w) in last.r_nodes.iter().zip(&last.values) {
            let exact = 8.0 * a / (a * r * r + 1.0);
            assert!((w - exact).abs() < 1e-8 * exact, "{r}");
        }
        assert!(traj.blowup_time.is_none());
    }

    #[test]
    fn supercritical_w_run_blows_up() {
        let grid = make_graded_grid(300, 1e-8, 1.08).unwrap();
        let r: Vec<f64> = grid.nodes.iter().map(|x| x.sqrt()).collect();
        // 1.5 times the critical boundary value
        let w0 = RadialField::from_mean_density(r, vec![12.0; grid.len()]).unwrap();
        let mut cfg = SolverConfig::new(grid);
        cfg.blowup_cap = 1e6;
        let traj = solve_w(&w0, &cfg, 50.0, &[]).unwrap();
        let tb = traj.blowup_time.expect("no blow-up detected");
        assert!(tb < 50.0);
    }

    #[test]
    fn short_time_bound_for_linear_data() {
        let grid = make_graded_grid(300, 1e-6, 1.06).unwrap();
        let u0 = Snapshot::from_fn(grid.clone(), 0.0, |x| x).unwrap();
        let cfg = SolverConfig::new(grid);
        let outs: Vec<f64> = (1..=25).map(|k| k as f64 * 0.01).collect();
        let traj = solve(&u0, &cfg, 3.0, &[&outs[..], &[0.5, 1.0, 2.0, 3.0]].concat()).unwrap();
        let rep = small_time_checks(&traj, 1.0, 0.5).unwrap();
        assert!(rep.bound_holds, "{}", rep.worst_excess);
        assert!(rep.eta_at_tau.unwrap() > 0.0);
        let td = rep.t_delta.expect("no T_delta");
        assert!(td <= 3.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn comparison_principle(p in 1.2f64..4.0, c in 0.05f64..0.9, seed_a in 1.0f64..20.0) {
            let grid = make_graded_grid(120, 1e-5, 1.12).unwrap();
            let cfg = SolverConfig::new(grid.clone());
            // x^p <= x, and U_a <= U_a + c x (1 - x)(1 - U_a)
            let low = Snapshot::from_fn(grid.clone(), 0.0, |x| x.powf(p)).unwrap();
            let high = Snapshot::from_fn(grid.clone(), 0.0, |x| x).unwrap();
            prop_assert!(ordered_pair_test(&low, &high, &cfg, 2.0, &[0.1, 0.5, 1.0]).unwrap());
            let ua = u_a(seed_a);
            let norm = ua(1.0);
            let low = Snapshot::from_fn(grid.clone(), 0.0, |x| ua(x) / norm).unwrap();
            let high = Snapshot::from_fn(grid, 0.0, |x| {
                let v = ua(x) / norm;
                v + c * x * (1.0 - x) * (1.0 - v)
            })
            .unwrap();
            prop_assert!(ordered_pair_test(&low, &high, &cfg, 2.0, &[0.1, 0.5, 1.0]).unwrap());
        }
    }
}
