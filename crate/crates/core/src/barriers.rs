//! Lower and upper barriers
//!
//! ```text
//! lower: 1 - 1/(y+1) + b f(y) - b^2 g(y)
//! upper: 1 - 1/(y+1) + b f(y) - (1 + gamma) b^2 h(y),      y = a(t) x,
//! ```
//!
//! their parabolic residuals `P v = v_t - x v_xx - 2 v v_x`, and scans that
//! certify residual signs, monotonicity, the boundary condition at `x = 1`,
//! and the ordering against a computed solution.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{MatchingPath, PathState};
use crate::solver::Trajectory;
use crate::special::{SpecialPoint, SpecialTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BarrierKind {
    Lower,
    Upper,
}

impl BarrierKind {
    pub fn name(self) -> &'static str {
        match self {
            BarrierKind::Lower => "lower",
            BarrierKind::Upper => "upper",
        }
    }
}

/// A barrier evaluated at path time `t + time_shift`.
#[derive(Debug, Clone)]
pub struct BarrierSpec {
    pub kind: BarrierKind,
    pub path: MatchingPath,
    pub tables: Arc<SpecialTable>,
    pub time_shift: f64,
}

impl BarrierSpec {
    pub fn new(kind: BarrierKind, path: MatchingPath, tables: Arc<SpecialTable>) -> Self {
        Self {
            kind,
            path,
            tables,
            time_shift: 0.0,
        }
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        assert!(shift >= 0.0, "time shift must be nonnegative");
        self.time_shift = shift;
        self
    }

    pub fn state(&self, t: f64) -> Result<PathState> {
        self.path.state(t + self.time_shift)
    }

    /// `a(t)` of the shifted path.
    pub fn a(&self, t: f64) -> Result<f64> {
        Ok(self.state(t)?.a)
    }
}

/// Barrier value and `x`-derivative at `(x, t)`.
pub fn eval_barrier(spec: &BarrierSpec, x: f64, t: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfRange {
            value: x,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let st = spec.state(t)?;
    let y = st.a * x;
    let p = spec.tables.eval(y)?;
    Ok(value_and_slope(spec.kind, &st, y, &p))
}

fn value_and_slope(kind: BarrierKind, st: &PathState, y: f64, p: &SpecialPoint) -> (f64, f64) {
    let (b, a) = (st.b, st.a);
    let (corr, corr_p) = match kind {
        BarrierKind::Lower => (p.g, p.g_prime),
        BarrierKind::Upper => ((1.0 + st.gamma) * p.h, (1.0 + st.gamma) * p.h_prime),
    };
    let q = 1.0 + y;
    let value = y / q + b * p.f - b * b * corr;
    let slope = a * (1.0 / (q * q) + b * p.f_prime - b * b * corr_p);
    (value, slope)
}

/// The reduced residual: `A` for the lower barrier and `B` for the upper one,
/// with `P v = a b^2 A` (resp. `a b^2 B`).
pub fn residual_reduced(spec: &BarrierSpec, y: f64, t: f64) -> Result<f64> {
    let st = spec.state(t)?;
    let p = spec.tables.eval(y)?;
    Ok(reduced(spec.kind, spec.tables.m, &st, y, &p))
}

fn reduced(kind: BarrierKind, m: f64, st: &PathState, y: f64, p: &SpecialPoint) -> f64 {
    let (b, gamma) = (st.b, st.gamma);
    match kind {
        BarrierKind::Lower => {
            let (f, fp, g, gp) = (p.f, p.f_prime, p.g, p.g_prime);
            -gamma * f + b * (2.0 * fp * g + 2.0 * f * gp - y * gp + 2.0 * (1.0 + gamma) * g)
                - 2.0 * b * b * g * gp
        }
        BarrierKind::Upper => {
            let (f, fp, h, hp) = (p.f, p.f_prime, p.h, p.h_prime);
            let e = 1.0 + gamma;
            let b0 = gamma * (2.0 * f * fp - y * fp) + m * e * p.phi - st.gamma_dot / st.a * h;
            b0 + e * b * (2.0 * fp * h + 2.0 * f * hp - y * hp + 2.0 * e * h) - 2.0 * e * e * b * b * h * hp
        }
    }
}

/// `P v` from the grouped expansion, `a b^2 A` or `a b^2 B`.
pub fn residual_full(spec: &BarrierSpec, x: f64, t: f64) -> Result<f64> {
    let st = spec.state(t)?;
    let y = st.a * x;
    let p = spec.tables.eval(y)?;
    Ok(st.a * st.b * st.b * reduced(spec.kind, spec.tables.m, &st, y, &p))
}

/// Steps for [`residual_fd`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSteps {
    pub dx: f64,
    pub dt: f64,
}

/// `P v = v_t - x v_xx - 2 v v_x` by central differences of [`eval_barrier`]:
/// `v_t` from values at `t +- dt`, `v_xx` from slopes at `x +- dx`.
pub fn residual_fd(spec: &BarrierSpec, x: f64, t: f64, steps: FdSteps) -> Result<f64> {
    let FdSteps { dx, dt } = steps;
    if x - dx < 0.0 || x + dx > 1.0 || t - dt + spec.time_shift < 0.0 {
        return Err(Error::Resolution(format!(
            "difference stencil leaves the domain at x = {x}, t = {t}"
        )));
    }
    let (v, vx) = eval_barrier(spec, x, t)?;
    let (vp, _) = eval_barrier(spec, x, t + dt)?;
    let (vm, _) = eval_barrier(spec, x, t - dt)?;
    let (_, sxp) = eval_barrier(spec, x + dx, t)?;
    let (_, sxm) = eval_barrier(spec, x - dx, t)?;
    let vt = (vp - vm) / (2.0 * dt);
    let vxx = (sxp - sxm) / (2.0 * dx);
    Ok(vt - x * vxx - 2.0 * v * vx)
}

/// [`residual_fd`] at steps `s` and `s/2` against the grouped residual.
/// Returns the two discrepancies; a resolution error is raised when the finer
/// one is not smaller than the coarser by the second-order factor (within
/// the round-off floor `floor`).
pub fn fd_agreement(spec: &BarrierSpec, x: f64, t: f64, steps: FdSteps, floor: f64) -> Result<(f64, f64)> {
    let exact = residual_full(spec, x, t)?;
    let e1 = (residual_fd(spec, x, t, steps)? - exact).abs();
    let half = FdSteps {
        dx: steps.dx / 2.0,
        dt: steps.dt / 2.0,
    };
    let e2 = (residual_fd(spec, x, t, half)? - exact).abs();
    if e2 > floor && e2 > e1 / 3.0 {
        return Err(Error::Resolution(format!(
            "finite differences at x = {x}, t = {t} do not converge at second order ({e1:e} -> {e2:e})"
        )));
    }
    Ok((e1, e2))
}

/// Geometric time lattice with `per_decade` points on `[t0, t1]`.
pub fn time_lattice(t0: f64, t1: f64, per_decade: usize) -> Vec<f64> {
    let t0 = t0.max(1e-3);
    let n = ((t1 / t0).log10() * per_decade as f64).ceil().max(1.0) as usize;
    (0..=n)
        .map(|k| t0 * (t1 / t0).powf(k as f64 / n as f64))
        .collect()
}

/// y-nodes for a sign scan: 0, then `per_decade` log-spaced points from
/// `1e-6` up to `a`, and `a` itself. Doubling `per_decade` refines the set
/// (every coarse point stays).
pub fn scan_nodes(a: f64, per_decade: usize) -> Vec<f64> {
    let mut ys = vec![0.0];
    let lo = 1e-6f64;
    let step = 1.0 / per_decade as f64;
    let mut k = 0usize;
    loop {
        let y = lo * 10f64.powf(k as f64 * step);
        if y >= a {
            break;
        }
        ys.push(y);
        k += 1;
    }
    ys.push(a);
    ys
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanBox {
    pub x_range: (f64, f64),
    pub t_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub kind: BarrierKind,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "box")]
    pub scan_box: ScanBox,
    /// First lattice time from which the sign holds at every later sample.
    #[serde(rename = "threshold_T")]
    pub threshold_t: Option<f64>,
    /// Worst residual (`max A` or `min B`) for `t >= threshold_T`, or over the
    /// whole box when no threshold exists.
    pub worst_value: f64,
    /// `(x, t)` of the worst value.
    pub worst_location: (f64, f64),
    pub sign_ok: bool,
}

/// Residual values within this multiple of the local term size count as 0.
const SIGN_SLACK: f64 = 1e-12;

/// Worst reduced residual at one time: `(value, y)`, signed so that a
/// positive value violates the required sign.
fn worst_at(spec: &BarrierSpec, t: f64, per_decade: usize) -> Result<(f64, f64, f64)> {
    let st = spec.state(t)?;
    let sign = match spec.kind {
        BarrierKind::Lower => 1.0,
        BarrierKind::Upper => -1.0,
    };
    let mut worst = (f64::NEG_INFINITY, 0.0, 0.0);
    for y in scan_nodes(st.a, per_decade) {
        let p = spec.tables.eval(y)?;
        let r = reduced(spec.kind, spec.tables.m, &st, y, &p);
        let v = sign * r - SIGN_SLACK * (1.0 + p.f.abs());
        // y = 0 is an exact zero of both residuals, so it only counts when violated
        if (y > 0.0 || v > 0.0) && v > worst.0 {
            worst = (v, y, r);
        }
    }
    Ok((worst.0, worst.1 / st.a, worst.2))
}

/// Scan `y in [0, a(t)]` at `per_decade` points per decade for each time of a
/// geometric lattice on `t_range`.
pub fn certify_sign(spec: &BarrierSpec, t_range: (f64, f64), per_decade: usize) -> Result<ResidualReport> {
    let times = time_lattice(t_range.0, t_range.1, 40);
    let rows: Vec<(f64, f64, f64, f64)> = times
        .par_iter()
        .map(|&t| worst_at(spec, t, per_decade).map(|(v, x, r)| (t, v, x, r)))
        .collect::<Result<Vec<_>>>()?;
    let threshold_idx = match rows.iter().rposition(|r| r.1 > 0.0) {
        None => Some(0),
        Some(i) if i + 1 < rows.len() => Some(i + 1),
        Some(_) => None,
    };
    let considered = &rows[threshold_idx.unwrap_or(0)..];
    let worst = considered
        .iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    Ok(ResidualReport {
        kind: spec.kind,
        k: spec.path.k(),
        m: spec.tables.m,
        scan_box: ScanBox {
            x_range: (0.0, 1.0),
            t_range,
        },
        threshold_t: threshold_idx.map(|i| rows[i].0),
        worst_value: worst.3,
        worst_location: (worst.2, worst.0),
        sign_ok: threshold_idx.is_some(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneReport {
    pub t_range: (f64, f64),
    pub monotone: bool,
    /// Smallest slope found, with its `(x, t)`.
    pub min_slope: f64,
    pub min_location: (f64, f64),
    /// First lattice time from which every sampled slope is positive.
    pub onset: Option<f64>,
}

/// Slope of the lower barrier on a dense `(x, t)` sample.
pub fn lower_monotone_report(spec: &BarrierSpec, t_range: (f64, f64)) -> Result<MonotoneReport> {
    let times = time_lattice(t_range.0, t_range.1, 40);
    let rows: Vec<(f64, f64, f64)> = times
        .par_iter()
        .map(|&t| -> Result<(f64, f64, f64)> {
            let a = spec.a(t)?;
            let mut worst = (f64::INFINITY, 0.0);
            for y in scan_nodes(a, 20) {
                let x = (y / a).min(1.0);
                let (_, s) = eval_barrier(spec, x, t)?;
                if s < worst.0 {
                    worst = (s, x);
                }
            }
            Ok((t, worst.0, worst.1))
        })
        .collect::<Result<Vec<_>>>()?;
    let onset = match rows.iter().rposition(|r| !(r.1 > 0.0)) {
        None => Some(rows[0].0),
        Some(i) if i + 1 < rows.len() => Some(rows[i + 1].0),
        Some(_) => None,
    };
    let worst = rows.iter().min_by(|a, b| a.1.partial_cmp(&b.1).unwrap()).unwrap();
    Ok(MonotoneReport {
        t_range,
        monotone: rows.iter().all(|r| r.1 > 0.0),
        min_slope: worst.1,
        min_location: (worst.2, worst.0),
        onset,
    })
}

/// True when the slope is positive at every sampled `(x, t)` of the range.
pub fn check_lower_monotone(spec: &BarrierSpec, t_range: (f64, f64)) -> Result<bool> {
    Ok(lower_monotone_report(spec, t_range)?.monotone)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingReport {
    pub kind: BarrierKind,
    pub t_range: (f64, f64),
    /// First lattice time from which the inequality holds to the end.
    pub onset: Option<f64>,
    /// `(a+1)(b f(a) - b^2 g(a)) - 1` (lower, must be < 0) or
    /// `(a+1)(b f(a) - (1+gamma) b^2 h(a)) - 1` (upper, must be >= 0) at the
    /// last sample.
    pub final_margin: f64,
    pub samples: Vec<(f64, f64)>,
}

impl MatchingReport {
    pub fn holds(&self) -> bool {
        self.onset.is_some()
    }
}

/// The barrier at `x = 1` against the boundary value 1, written as the
/// normalised margin `(a+1)(u(1) - 1 + 1/(a+1)) - 1`.
pub fn matching_margin(spec: &BarrierSpec, t: f64) -> Result<f64> {
    let st = spec.state(t)?;
    let p = spec.tables.eval(st.a)?;
    let corr = match spec.kind {
        BarrierKind::Lower => p.g,
        BarrierKind::Upper => (1.0 + st.gamma) * p.h,
    };
    Ok((st.a + 1.0) * (st.b * p.f - st.b * st.b * corr) - 1.0)
}

pub fn check_boundary_matching(spec: &BarrierSpec, t_range: (f64, f64)) -> Result<MatchingReport> {
    let times = time_lattice(t_range.0, t_range.1, 40);
    let samples: Vec<(f64, f64)> = times
        .par_iter()
        .map(|&t| matching_margin(spec, t).map(|m| (t, m)))
        .collect::<Result<Vec<_>>>()?;
    let ok = |m: f64| match spec.kind {
        BarrierKind::Lower => m < 0.0,
        BarrierKind::Upper => m >= 0.0,
    };
    let onset = match samples.iter().rposition(|s| !ok(s.1)) {
        None => Some(samples[0].0),
        Some(i) if i + 1 < samples.len() => Some(samples[i + 1].0),
        Some(_) => None,
    };
    Ok(MatchingReport {
        kind: spec.kind,
        t_range,
        onset,
        final_margin: samples.last().unwrap().1,
        samples,
    })
}

/// Certification of one barrier over `[t_min, t_max]` and the resulting shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub residual: ResidualReport,
    pub matching: MatchingReport,
    pub monotone: Option<MonotoneReport>,
    /// Max of the residual threshold, the matching onset and (lower only)
    /// the monotonicity onset; `None` when any of them is missing.
    pub time_shift: Option<f64>,
}

pub fn certify(spec: &BarrierSpec, t_range: (f64, f64), per_decade: usize) -> Result<Certification> {
    let residual = certify_sign(spec, t_range, per_decade)?;
    let matching = check_boundary_matching(spec, t_range)?;
    let monotone = match spec.kind {
        BarrierKind::Lower => Some(lower_monotone_report(spec, t_range)?),
        BarrierKind::Upper => None,
    };
    let mut shift = Some(spec.time_shift);
    for part in [residual.threshold_t, matching.onset, monotone.as_ref().map_or(Some(0.0), |m| m.onset)] {
        shift = match (shift, part) {
            (Some(s), Some(p)) => Some(s.max(p + spec.time_shift)),
            _ => None,
        };
    }
    Ok(Certification {
        residual,
        matching,
        monotone,
        time_shift: shift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftOptions {
    pub shift_max: f64,
    pub lattice: f64,
    /// Upper ordering is checked from this time on.
    pub upper_from: f64,
    pub tol_abs: f64,
    pub tol_rel: f64,
}

impl Default for ShiftOptions {
    fn default() -> Self {
        Self {
            shift_max: 200.0,
            lattice: 0.25,
            upper_from: 0.25,
            tol_abs: 1e-8,
            tol_rel: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub t1: f64,
    pub t2: f64,
    /// Output times at which the lower ordering was checked.
    pub lower_times: Vec<f64>,
    pub upper_times: Vec<f64>,
    /// Smallest `u - lower` and `upper - u` over the checked nodes.
    pub lower_gap: f64,
    pub upper_gap: f64,
}

fn ordered(spec: &BarrierSpec, traj: &Trajectory, shift: f64, opts: &ShiftOptions, t_from: f64) -> Result<Option<(f64, Vec<f64>)>> {
    let sign = match spec.kind {
        BarrierKind::Lower => -1.0,
        BarrierKind::Upper => 1.0,
    };
    let mut gap = f64::INFINITY;
    let mut times = Vec::new();
    for snap in traj.snapshots.iter().filter(|s| s.time >= t_from) {
        let tb = snap.time + sign * shift;
        if tb < 0.0 {
            continue;
        }
        times.push(snap.time);
        let st = spec.state(tb)?;
        for (&x, &u) in snap.x().iter().zip(&snap.values) {
            let p = spec.tables.eval(st.a * x)?;
            let (v, _) = value_and_slope(spec.kind, &st, st.a * x, &p);
            let d = sign * (v - u);
            if d < -(opts.tol_abs + opts.tol_rel * u.abs()) {
                return Ok(None);
            }
            gap = gap.min(d);
        }
    }
    Ok(Some((gap, times)))
}

/// Smallest lattice shifts with `lower(., t - T1) <= u(., t)` for outputs
/// `t >= T1` and `u(., t) <= upper(., t + T2)` for outputs `t >= upper_from`.
pub fn find_time_shifts(
    lower: &BarrierSpec,
    upper: &BarrierSpec,
    traj: &Trajectory,
    opts: &ShiftOptions,
) -> Result<ShiftReport> {
    let n = (opts.shift_max / opts.lattice).round() as usize;
    let search = |spec: &BarrierSpec, which: &'static str| -> Result<(f64, f64, Vec<f64>)> {
        for k in 0..=n {
            let s = k as f64 * opts.lattice;
            let from = match spec.kind {
                BarrierKind::Lower => s,
                BarrierKind::Upper => opts.upper_from,
            };
            if let Some((gap, times)) = ordered(spec, traj, s, opts, from)? {
                if !times.is_empty() {
                    return Ok((s, gap, times));
                }
            }
        }
        Err(Error::OrderingFailure {
            which,
            shift_max: opts.shift_max,
        })
    };
    let ((t1, lower_gap, lower_times), (t2, upper_gap, upper_times)) = {
        let (l, u) = rayon::join(|| search(lower, "lower"), || search(upper, "upper"));
        (l?, u?)
    };
    Ok(ShiftReport {
        t1,
        t2,
        lower_times,
        upper_times,
        lower_gap,
        upper_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::{integrate_a, MatchOptions};
    use crate::special::{PhiSpec, TableConfig};
    use std::sync::OnceLock;

    fn tables() -> Arc<SpecialTable> {
        static T: OnceLock<Arc<SpecialTable>> = OnceLock::new();
        T.get_or_init(|| Arc::new(SpecialTable::build(TableConfig::with_y_max(1e30), None, PhiSpec::default()).unwrap()))
            .clone()
    }

    fn spec(kind: BarrierKind, k: f64) -> BarrierSpec {
        let path = integrate_a(k, 1000.0, MatchOptions::default(), &[]).unwrap();
        BarrierSpec::new(kind, path, tables())
    }

    #[test]
    fn anchoring_at_origin() {
        for kind in [BarrierKind::Lower, BarrierKind::Upper] {
            let s = spec(kind, 5.0);
            for t in [0.0, 3.0, 200.0] {
                let (v, slope) = eval_barrier(&s, 0.0, t).unwrap();
                assert_eq!(v, 0.0);
                let st = s.state(t).unwrap();
                // f'(0) = 1 and g'(0) = h'(0) = 0
                assert!((slope - st.a * (1.0 + st.b)).abs() <= 1e-14 * slope);
            }
        }
        assert!(eval_barrier(&spec(BarrierKind::Lower, 5.0), 1.5, 1.0).is_err());
    }

    #[test]
    fn frozen_b_zero_is_steady_profile() {
        let a = 40.0;
        let path = MatchingPath::frozen(a, 0.0, 0.0, vec![0.0, 1.0]);
        for kind in [BarrierKind::Lower, BarrierKind::Upper] {
            let s = BarrierSpec::new(kind, path.clone(), tables());
            for x in [0.0, 1e-3, 0.2, 1.0] {
                let (v, _) = eval_barrier(&s, x, 0.5).unwrap();
                assert!((v - a * x / (a * x + 1.0)).abs() < 1e-15);
                let r = residual_fd(&s, x.clamp(1e-2, 0.99), 0.5, FdSteps { dx: 1e-6, dt: 1e-3 }).unwrap();
                assert!(r.abs() < 1e-6, "{r}");
            }
            let rep = certify_sign(&s, (0.1, 1.0), 10).unwrap();
            assert!(rep.sign_ok);
            match kind {
                BarrierKind::Lower => assert!(rep.worst_value <= 0.0),
                BarrierKind::Upper => assert!(rep.worst_value >= 0.0),
            }
        }
    }

    #[test]
    fn reduced_residual_vanishes_at_origin() {
        let low = spec(BarrierKind::Lower, 5.0);
        let up = spec(BarrierKind::Upper, 6.0);
        assert_eq!(residual_reduced(&low, 0.0, 10.0).unwrap(), 0.0);
        assert!(residual_reduced(&up, 0.0, 10.0).unwrap() >= 0.0);
    }

    #[test]
    fn finite_differences_match_grouped_residual() {
        for (kind, k) in [(BarrierKind::Lower, 5.0), (BarrierKind::Upper, 6.0)] {
            let s = spec(kind, k);
            for (x, t) in [(0.3, 2.0), (0.01, 5.0), (0.7, 8.0)] {
                let a = s.a(t).unwrap();
                let steps = FdSteps {
                    dx: 0.02 * (x + 1.0 / a).min(1.0 - x).min(x),
                    dt: 0.02,
                };
                let (e1, e2) = fd_agreement(&s, x, t, steps, 1e-9).unwrap();
                assert!(e1.is_finite() && e2 <= e1, "{kind:?} {x} {t}: {e1:e} {e2:e}");
            }
        }
    }

    #[test]
    fn linear_growth_solution_has_zero_fd_residual() {
        // v = K x / (1 - 2Kt) as a frozen barrier does not fit; check the
        // difference operator on it directly instead
        let k = 0.8;
        let v = |x: f64, t: f64| k * x / (1.0 - 2.0 * k * t);
        let (x, t, h) = (0.4, 0.1, 1e-4);
        let vt = (v(x, t + h) - v(x, t - h)) / (2.0 * h);
        let vx = (v(x + h, t) - v(x - h, t)) / (2.0 * h);
        let vxx = (v(x + h, t) - 2.0 * v(x, t) + v(x - h, t)) / (h * h);
        assert!((vt - x * vxx - 2.0 * v(x, t) * vx).abs() < 1e-6);
    }

    #[test]
    fn lower_matching_and_swaps() {
        let low = spec(BarrierKind::Lower, 5.0);
        assert!(check_boundary_matching(&low, (1.0, 1000.0)).unwrap().holds());
        let low7 = spec(BarrierKind::Lower, 7.0);
        let rep = check_boundary_matching(&low7, (1.0, 1000.0)).unwrap();
        assert!(!rep.holds());
        assert!(rep.final_margin > 0.0);
        let up5 = spec(BarrierKind::Upper, 5.0);
        let rep = check_boundary_matching(&up5, (1.0, 1000.0)).unwrap();
        assert!(!rep.holds());
    }

    #[test]
    fn lower_residual_sign_and_monotone() {
        let low = spec(BarrierKind::Lower, 5.0);
        let rep = certify_sign(&low, (1.0, 1000.0), 10).unwrap();
        assert!(rep.sign_ok, "{rep:?}");
        assert!(rep.worst_value <= 0.0);
        let mono = lower_monotone_report(&low, (1.0, 1000.0)).unwrap();
        assert!(mono.onset.is_some());
        let huge = BarrierSpec::new(BarrierKind::Lower, MatchingPath::frozen(1e3, 1.0, 0.1, vec![0.0, 1.0]), tables());
        assert!(!check_lower_monotone(&huge, (0.1, 1.0)).unwrap());
    }

    #[test]
    fn finer_scan_never_improves_sign() {
        let up = spec(BarrierKind::Upper, 6.0);
        let coarse = certify_sign(&up, (1.0, 100.0), 5).unwrap();
        let fine = certify_sign(&up, (1.0, 100.0), 10).unwrap();
        if !coarse.sign_ok {
            assert!(!fine.sign_ok);
        }
        if let (Some(c), Some(f)) = (coarse.threshold_t, fine.threshold_t) {
            assert!(f >= c);
        }
    }

    #[test]
    fn lattices() {
        let t = time_lattice(1.0, 1000.0, 10);
        assert_eq!(t.len(), 31);
        assert!((t[30] - 1000.0).abs() < 1e-9);
        let c = scan_nodes(1e3, 5);
        let f = scan_nodes(1e3, 10);
        for y in &c {
            assert!(f.iter().any(|z| (z - y).abs() <= 1e-12 * y.max(1e-300)), "{y}");
        }
    }
}
