use std::sync::Arc;

use growup::barriers::{check_boundary_matching, eval_barrier, find_time_shifts, BarrierKind, BarrierSpec, ShiftOptions};
use growup::experiments::profile_error;
use growup::grid::{make_graded_grid, w_from_u, GradedGrid, Snapshot};
use growup::matching::{integrate_a, MatchOptions};
use growup::solver::{slope_origin, small_time_checks, solve, solve_w, SolverConfig};
use growup::special::{PhiSpec, SpecialTable, TableConfig};
use proptest::prelude::*;

fn grid() -> GradedGrid {
    make_graded_grid(300, 1e-6, 1.05).unwrap()
}

fn config(g: &GradedGrid) -> SolverConfig {
    let mut c = SolverConfig::new(g.clone());
    c.rtol = 1e-6;
    c
}

#[test]
fn regularized_solutions_increase_as_epsilon_shrinks() {
    let g = grid();
    let u0 = Snapshot::from_fn(g.clone(), 0.0, |x| x).unwrap();
    let outs = [1.0, 2.0, 3.0];
    let runs: Vec<_> = [1e-1, 1e-3, 1e-5, 0.0]
        .iter()
        .map(|&eps| {
            let mut c = config(&g);
            c.reg_epsilon = eps;
            solve(&u0, &c, 3.0, &outs).unwrap()
        })
        .collect();
    for pair in runs.windows(2) {
        for (p, q) in pair[0].snapshots.iter().zip(&pair[1].snapshots) {
            let worst = p.values.iter().zip(&q.values).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
            assert!(worst <= 1e-9, "ordering broken by {worst:e} at t = {}", p.time);
        }
    }
}

#[test]
fn u_and_w_forms_give_the_same_slope() {
    let g = grid();
    let c = config(&g);
    let u0 = Snapshot::from_fn(g.clone(), 0.0, |x| x).unwrap();
    let w0 = w_from_u(&u0).unwrap();
    for t in [1.0, 4.0] {
        let u = solve(&u0, &c, t, &[t]).unwrap();
        let w = solve_w(&w0, &c, t / 4.0, &[t / 4.0]).unwrap();
        let su = slope_origin(&u.snapshots[0]).unwrap().slope;
        let sw = w.snapshots[0].field.values[0] / 8.0;
        assert!((su / sw - 1.0).abs() < 0.01, "t = {t}: {su} vs {sw}");
    }
}

#[test]
fn steady_data_obeys_short_time_bound() {
    let g = grid();
    let a = 5.0;
    let mut c = config(&g);
    c.right_bc = 1.0;
    let u0 = Snapshot::from_fn(g.clone(), 0.0, |x| a * x / (a * x + 1.0) / (a / (a + 1.0))).unwrap();
    // u0 <= K x with K = a + 1
    let k = a + 1.0;
    let tau = 1.0 / (4.0 * k);
    let outs: Vec<f64> = (1..=20).map(|k| tau * k as f64 / 20.0).collect();
    let traj = solve(&u0, &c, tau, &outs).unwrap();
    let rep = small_time_checks(&traj, k, 0.5).unwrap();
    assert!(rep.bound_holds, "excess {}", rep.worst_excess);
}

#[test]
fn subcritical_boundary_value_gives_bounded_slope() {
    let g = grid();
    let a = 50.0;
    let mut c = config(&g);
    c.right_bc = 0.9;
    let u0 = Snapshot::from_fn(g.clone(), 0.0, |x| 0.9 * x).unwrap();
    let outs = [5.0, 10.0, 20.0];
    let traj = solve(&u0, &c, 20.0, &outs).unwrap();
    let slopes: Vec<f64> = traj.snapshots.iter().map(|s| slope_origin(s).unwrap().slope).collect();
    // the steady state with u(1) = 0.9 has slope 9
    assert!(slopes.iter().all(|s| *s < a), "{slopes:?}");
    assert!((slopes[2] - 9.0).abs() < 1e-3, "{slopes:?}");
    let crit = solve(&Snapshot::from_fn(g.clone(), 0.0, |x| x).unwrap(), &config(&g), 20.0, &[20.0]).unwrap();
    let sc = slope_origin(&crit.snapshots[0]).unwrap().slope;
    assert!(sc > 100.0 * slopes[2], "critical slope {sc}");
}

#[test]
fn lower_barrier_as_initial_data_needs_no_shift() {
    let tables = Arc::new(SpecialTable::build(TableConfig::with_y_max(1e40), None, PhiSpec::default()).unwrap());
    let lower = BarrierSpec::new(BarrierKind::Lower, integrate_a(5.0, 3000.0, MatchOptions::default(), &[]).unwrap(), tables.clone());
    let onset = check_boundary_matching(&lower, (0.01, 100.0)).unwrap().onset.unwrap();
    let lower = lower.with_shift(onset.ceil());
    let upper = BarrierSpec::new(BarrierKind::Upper, integrate_a(6.0, 3000.0, MatchOptions::default(), &[]).unwrap(), tables);
    let upper_onset = check_boundary_matching(&upper, (0.01, 2900.0)).unwrap().onset.unwrap();
    let upper = upper.with_shift(upper_onset.ceil());

    let g = grid();
    let c = config(&g);
    // lift by a multiple of x so that u0(1) = 1; u0 stays above the barrier
    let gap = 1.0 - eval_barrier(&lower, 1.0, 0.0).unwrap().0;
    assert!(gap >= 0.0);
    let u0 = Snapshot::from_fn(g.clone(), 0.0, |x| eval_barrier(&lower, x, 0.0).unwrap().0 + gap * x).unwrap();
    let outs: Vec<f64> = (0..=8).map(|k| 0.5 * k as f64).collect();
    let traj = solve(&u0, &c, 4.0, &outs).unwrap();
    let rep = find_time_shifts(&lower, &upper, &traj, &ShiftOptions::default()).unwrap();
    assert_eq!(rep.t1, 0.0);
    assert_eq!(rep.lower_times.len(), outs.len());
}

#[test]
fn pure_inner_profile_has_unit_profile_error() {
    // (1 - U_a)(1 + a x) = 1, so the error is sup x = 1, attained at x = 1
    let a = 250.0;
    let s = Snapshot::from_fn(grid(), 0.0, |x| a * x / (a * x + 1.0)).unwrap();
    assert!((profile_error(&s, a) - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn slope_grows_for_critical_data(c in 0.2f64..1.0, p in 1.0f64..3.0) {
        // any u0 in [0, 1] with u0(1) = 1 and a finite slope
        let g = make_graded_grid(200, 1e-5, 1.06).unwrap();
        let cfg = SolverConfig::new(g.clone());
        let u0 = Snapshot::from_fn(g, 0.0, |x| c * x + (1.0 - c) * x.powf(p)).unwrap();
        let traj = solve(&u0, &cfg, 6.0, &[2.0, 4.0, 6.0]).unwrap();
        let s: Vec<f64> = traj.snapshots.iter().map(|s| slope_origin(s).unwrap().slope).collect();
        prop_assert!(s[0] < s[1] && s[1] < s[2], "{:?}", s);
    }
}
