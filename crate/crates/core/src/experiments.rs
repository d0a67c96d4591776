//! Diagnostics computed from long solver runs: origin-slope rates, the
//! `L^1` deficit, profile errors, and sensitivity of the special functions
//! to the blend choices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{make_graded_grid, GradedGrid, Snapshot};
use crate::matching::closed_a;
use crate::solver::{l1_to_one, slope_origin, solve, Scheme, SlopeMethod, SolverConfig, Trajectory};
use crate::special::{build_component_gi, build_f, min_m, CutoffBlend, PhiSpec, TableConfig};

/// One row of a rate run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub t: f64,
    /// Fitted `u_x(0, t)`.
    pub slope: f64,
    /// `log u_x(0, t) - sqrt(2t)`.
    pub d: f64,
    /// `||1 - u||_1 / (sqrt(2t) exp(-5/2 - sqrt(2t)))`.
    pub l1_ratio: f64,
    /// `sup_x |(1 - u)(1 + a x) - (1 - x)|` with `a` the fitted slope.
    pub profile_error: f64,
    pub fit: SlopeMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
}

impl RateReport {
    pub fn from_trajectory(traj: &Trajectory, t_min: f64) -> Result<Self> {
        let rows = traj
            .snapshots
            .iter()
            .filter(|s| s.time >= t_min && s.time > 0.0)
            .map(rate_row)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }

    pub fn at(&self, t: f64) -> Option<&RateRow> {
        self.rows.iter().find(|r| (r.t - t).abs() <= 1e-9 * t.max(1.0))
    }

    /// Rows with `t` in `[t0, t1]`.
    pub fn window(&self, t0: f64, t1: f64) -> Vec<&RateRow> {
        self.rows.iter().filter(|r| r.t >= t0 && r.t <= t1).collect()
    }

    /// Least-squares slope of `|d - 5/2|` against `t` over `[t0, t1]`.
    pub fn d_trend(&self, t0: f64, t1: f64) -> Option<f64> {
        let w = self.window(t0, t1);
        ls_slope(w.iter().map(|r| (r.t, (r.d - 2.5).abs())))
    }

    /// Least-squares slope of `|r - 1|` against `t` over `[t0, t1]`.
    pub fn ratio_trend(&self, t0: f64, t1: f64) -> Option<f64> {
        let w = self.window(t0, t1);
        ls_slope(w.iter().map(|r| (r.t, (r.l1_ratio - 1.0).abs())))
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,slope,d,l1_ratio,profile_error")?;
        for r in &self.rows {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.t, r.slope, r.d, r.l1_ratio, r.profile_error
            )?;
        }
        Ok(())
    }
}

fn rate_row(s: &Snapshot) -> Result<RateRow> {
    let est = slope_origin(s)?;
    let t = s.time;
    let root = (2.0 * t).sqrt();
    let scale = root * (-2.5 - root).exp();
    Ok(RateRow {
        t,
        slope: est.slope,
        d: est.slope.ln() - root,
        l1_ratio: l1_to_one(s) / scale,
        profile_error: profile_error(s, est.slope),
        fit: est.method,
    })
}

/// `sup_x |(1 - u)(1 + a x) - (1 - x)|`.
pub fn profile_error(s: &Snapshot, a: f64) -> f64 {
    s.x()
        .iter()
        .zip(&s.values)
        .map(|(&x, &u)| ((1.0 - u) * (1.0 + a * x) - (1.0 - x)).abs())
        .fold(0.0, f64::max)
}

/// Ordinary least-squares slope; `None` with fewer than two distinct points.
pub fn ls_slope(points: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// `u = 1 - 1/(1 + A(t) x)` scaled so that `u(1) = 1`, on the given grid.
/// Used as a reference initial state for long runs.
pub fn steady_profile(grid: crate::grid::GradedGrid, a: f64, time: f64) -> Result<Snapshot> {
    if !(a > 0.0) {
        return Err(Error::InvalidInput(format!("steady profile needs a > 0, got {a}")));
    }
    Snapshot::from_fn(grid, time, |x| (a + 1.0) * x / (a * x + 1.0))
}

/// `A(t)` evaluated on a list of times.
pub fn reference_slopes(times: &[f64]) -> Vec<f64> {
    times.iter().map(|&t| closed_a(t)).collect()
}

/// Errors of a refinement sequence against a reference run, and the observed
/// orders `log2(e_k / e_{k+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `dt` or `h` of each run.
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
}

impl ConvergenceReport {
    fn new(steps: Vec<f64>, errors: Vec<f64>) -> Self {
        let orders = errors
            .windows(2)
            .zip(steps.windows(2))
            .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            .collect();
        Self { steps, errors, orders }
    }

    pub fn min_order(&self) -> f64 {
        self.orders.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn fixed_step(grid: GradedGrid, dt: f64, scheme: Scheme) -> SolverConfig {
    let mut cfg = SolverConfig::new(grid);
    cfg.adaptive = false;
    cfg.scheme = scheme;
    cfg.dt_initial = dt;
    cfg.dt_max = dt;
    cfg
}

fn run_to(cfg: &SolverConfig, u0: &dyn Fn(f64) -> f64, t_end: f64) -> Result<Snapshot> {
    let s0 = Snapshot::from_fn(cfg.grid.clone(), 0.0, u0)?;
    let traj = solve(&s0, cfg, t_end, &[])?;
    Ok(traj.snapshots.into_iter().last().expect("t_end is always recorded"))
}

/// Backward Euler with fixed steps `dts` on one grid, against BDF2 at
/// `dt_min / 16`.
pub fn time_convergence(grid: &GradedGrid, u0: &dyn Fn(f64) -> f64, t_end: f64, dts: &[f64]) -> Result<ConvergenceReport> {
    let dt_ref = dts.iter().cloned().fold(f64::INFINITY, f64::min) / 16.0;
    let reference = run_to(&fixed_step(grid.clone(), dt_ref, Scheme::Bdf2), u0, t_end)?;
    let errors = dts
        .iter()
        .map(|&dt| {
            let s = run_to(&fixed_step(grid.clone(), dt, Scheme::BackwardEuler), u0, t_end)?;
            Ok(max_diff(&s.values, &reference.values))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport::new(dts.to_vec(), errors))
}

/// Uniform grids with `cells` cells (each dividing `reference_cells`),
/// compared at their own nodes with a run on `reference_cells` cells. Time
/// stepping is BDF2 with step `dt` on every grid.
pub fn space_convergence(
    u0: &dyn Fn(f64) -> f64,
    t_end: f64,
    cells: &[usize],
    reference_cells: usize,
    dt: f64,
) -> Result<ConvergenceReport> {
    let uniform = |m: usize| make_graded_grid(m + 1, 1.0 / m as f64, 1.0);
    let reference = run_to(&fixed_step(uniform(reference_cells)?, dt, Scheme::Bdf2), u0, t_end)?;
    let mut errors = Vec::new();
    for &m in cells {
        if reference_cells % m != 0 {
            return Err(Error::InvalidInput(format!("{m} cells do not nest in {reference_cells}")));
        }
        let s = run_to(&fixed_step(uniform(m)?, dt, Scheme::Bdf2), u0, t_end)?;
        let stride = reference_cells / m;
        let sub: Vec<f64> = reference.values.iter().step_by(stride).copied().collect();
        errors.push(max_diff(&s.values, &sub));
    }
    let steps = cells.iter().map(|&m| 1.0 / m as f64).collect();
    Ok(ConvergenceReport::new(steps, errors))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Sensitivity of the upper-barrier ingredients to the blend choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub phi_slope0: f64,
    pub blend: CutoffBlend,
    #[serde(rename = "min_M")]
    pub min_m: f64,
    /// `g_2(y)` at each probe point.
    pub g2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub probes: Vec<f64>,
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityReport {
    /// Largest relative spread of `g_2` across rows at each probe.
    pub fn g2_spread(&self) -> Vec<f64> {
        (0..self.probes.len())
            .map(|j| {
                let vals: Vec<f64> = self.rows.iter().map(|r| r.g2[j]).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (hi - lo) / hi.abs().max(1e-300)
            })
            .collect()
    }
}

pub fn sensitivity(config: &TableConfig, slopes: &[f64], probes: &[f64]) -> Result<SensitivityReport> {
    let f = build_f(config)?;
    let mut rows = Vec::new();
    for &s in slopes {
        let phi = PhiSpec::new(s)?;
        let m = min_m(&f, phi)?;
        for blend in [CutoffBlend::Smoothstep, CutoffBlend::Quadratic] {
            let g2 = build_component_gi(2, config, blend, phi)?;
            let vals = probes
                .iter()
                .map(|&y| g2.eval(y).map(|v| v.0))
                .collect::<Result<Vec<_>>>()?;
            rows.push(SensitivityRow {
                phi_slope0: s,
                blend,
                min_m: m,
                g2: vals,
            });
        }
    }
    Ok(SensitivityReport {
        probes: probes.to_vec(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_graded_grid;

    #[test]
    fn convergence_orders_on_short_run() {
        let u0 = |x: f64| x;
        let g = make_graded_grid(101, 0.01, 1.0).unwrap();
        let t = time_convergence(&g, &u0, 0.25, &[0.02, 0.01, 0.005]).unwrap();
        assert!(t.min_order() > 0.9, "{t:?}");
        let s = space_convergence(&u0, 0.25, &[10, 20, 40], 320, 1e-3).unwrap();
        assert!(s.min_order() > 1.8, "{s:?}");
    }

    #[test]
    fn ls_slope_line() {
        let s = ls_slope((0..5).map(|i| (i as f64, 3.0 * i as f64 - 1.0))).unwrap();
        assert!((s - 3.0).abs() < 1e-14);
        assert!(ls_slope([(1.0, 2.0)].into_iter()).is_none());
    }

    #[test]
    fn steady_profile_has_zero_profile_error_in_the_limit() {
        let g = make_graded_grid(300, 1e-6, 1.05).unwrap();
        let a = 1e4;
        let s = steady_profile(g, a, 0.0).unwrap();
        // (1-u)(1+ax) = 1 - x exactly for the scaled profile
        let e = profile_error(&s, a);
        assert!(e < 1e-10, "{e}");
        assert!(profile_error(&s, 2.0 * a) > 0.1);
    }

    #[test]
    fn rate_row_of_steady_profile() {
        let g = make_graded_grid(300, 1e-7, 1.05).unwrap();
        let t = 10.0;
        let a = closed_a(t);
        let s = steady_profile(g, a, t).unwrap();
        let r = rate_row(&s).unwrap();
        assert!((r.d - (2.5 + (1.0 + 1.0 / a).ln())).abs() < 1e-3, "{}", r.d);
        assert!(r.l1_ratio > 0.0);
    }
}
