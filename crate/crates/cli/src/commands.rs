use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use growup::barriers::{certify, check_boundary_matching, find_time_shifts, BarrierKind, BarrierSpec, Certification, ShiftOptions};
use growup::experiments::{sensitivity, RateReport};
use growup::grid::{make_graded_grid, w_from_u, Snapshot};
use growup::matching::{integrate_a, MatchOptions, MatchingPath};
use growup::solver::{solve, solve_w, SolverConfig, Trajectory};
use growup::special::{
    asymptotic_windows, build_component_gi, build_f, check_asymptotics, min_m, CutoffBlend, PhiSpec,
    SpecialTable, TableConfig,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, InitialData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

/// Result of one command; written as `<command>.json` in its output dir.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub command: &'static str,
    pub checks: Vec<Check>,
    pub outputs: Vec<String>,
    pub data: serde_json::Value,
}

impl Verdict {
    fn new(command: &'static str) -> Self {
        Self {
            command,
            checks: Vec::new(),
            outputs: Vec::new(),
            data: json!({}),
        }
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            detail,
        });
    }

    fn skip(&mut self, name: &str, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            status: Status::Skipped,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }
}

/// Shared state of one invocation; `all` reuses tables, paths and the run.
pub struct Session {
    pub cfg: ExperimentConfig,
    pub quiet: bool,
    tables: Option<Arc<SpecialTable>>,
    certified: Option<[BarrierSpec; 2]>,
    run: Option<Arc<Trajectory>>,
}

fn create(dir: &Path, name: &str, verdict: &mut Verdict) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    verdict.outputs.push(name.into());
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, verdict: &mut Verdict) -> Result<()> {
    let w = create(dir, name, verdict)?;
    serde_json::to_writer_pretty(w, value)?;
    Ok(())
}

fn table_config(y_max: f64, cfg: &ExperimentConfig) -> TableConfig {
    TableConfig {
        y_max,
        panels_per_decade: cfg.tables.panels_per_decade,
        order: cfg.tables.gauss_order,
        ..TableConfig::default()
    }
}

/// Tables for `y_max`, refusing `M` below the admissible minimum.
fn build_tables(tc: TableConfig, cfg: &ExperimentConfig) -> Result<SpecialTable> {
    let phi = PhiSpec::new(cfg.tables.phi_slope0)?;
    if let Some(m) = cfg.tables.m {
        let f = build_f(&tc)?;
        let floor = min_m(&f, phi)?;
        if m < floor {
            bail!("M too small: M = {m} is below min_M = {floor}");
        }
    }
    Ok(SpecialTable::build(tc, cfg.tables.m, phi)?)
}

fn match_options(cfg: &ExperimentConfig) -> MatchOptions {
    MatchOptions {
        rtol: cfg.matching.rtol,
        samples_per_decade: cfg.matching.samples_per_decade,
        max_step: cfg.matching.max_step,
    }
}

fn kind_of(name: &str) -> BarrierKind {
    if name == "upper" {
        BarrierKind::Upper
    } else {
        BarrierKind::Lower
    }
}

impl Session {
    pub fn new(cfg: ExperimentConfig, quiet: bool) -> Self {
        Self {
            cfg,
            quiet,
            tables: None,
            certified: None,
            run: None,
        }
    }

    fn tables(&mut self) -> Result<Arc<SpecialTable>> {
        if self.tables.is_none() {
            let tc = table_config(self.cfg.tables.y_max, &self.cfg);
            self.tables = Some(Arc::new(build_tables(tc, &self.cfg)?));
        }
        Ok(self.tables.clone().unwrap())
    }

    fn path(&self, k: f64) -> Result<MatchingPath> {
        Ok(integrate_a(k, self.cfg.certify.t_max, match_options(&self.cfg), &[])?)
    }

    fn spec(&mut self, kind: BarrierKind, k: f64) -> Result<BarrierSpec> {
        let tables = self.tables()?;
        Ok(BarrierSpec::new(kind, self.path(k)?, tables))
    }

    fn run(&mut self) -> Result<Arc<Trajectory>> {
        if self.run.is_none() {
            let s = &self.cfg.solve;
            if s.xi > 1.0 {
                bail!("xi = {} > 1 has no grow-up run; use `solve` for the supercritical diagnostic", s.xi);
            }
            let (config, u0) = solver_setup(&self.cfg)?;
            let traj = solve(&u0, &config, s.t_end, &output_times(&self.cfg))?;
            self.run = Some(Arc::new(traj));
        }
        Ok(self.run.clone().unwrap())
    }

    fn say(&self, msg: &str) {
        if !self.quiet {
            println!("{msg}");
        }
    }

    pub fn tabulate(&mut self, out: &Path) -> Result<Verdict> {
        let mut v = Verdict::new("tabulate");
        let t = self.cfg.tabulate.clone();
        let tc = table_config(t.y_max, &self.cfg);
        let table = build_tables(tc, &self.cfg)?;
        table.write_csv(create(out, "tables.csv", &mut v)?)?;
        write_json(out, "tables_header.json", &table.header(), &mut v)?;

        if asymptotic_windows(t.y_max).is_err() {
            let msg = format!("Y_max = {:e} is too small for an asymptotic window (need >= 1e4)", t.y_max);
            eprintln!("warning: {msg}");
            v.skip("asymptotics", msg);
        } else {
            let phi = table.phi;
            let comps = [1, 2, 3, 4].map(|i| build_component_gi(i, &tc, CutoffBlend::default(), phi));
            let [c1, c2, c3, c4] = comps;
            let comps = [c1?, c2?, c3?, c4?];
            let rep = check_asymptotics(&table, &comps)?;
            let growing: Vec<&str> = rep.claims.iter().filter(|c| !c.bounded).map(|c| c.claim.as_str()).collect();
            v.check(
                "asymptotics",
                growing.is_empty(),
                format!("{} claims, growing ratios: {:?}", rep.claims.len(), growing),
            );
            write_json(out, "asymptotics.json", &rep, &mut v)?;
            let y = t.y_max;
            let p = table.eval(y)?;
            let df = (p.f - (y.ln() - 2.0)).abs();
            let dg = (p.g / y - (y.ln() / 2.0 - 2.25)).abs();
            v.check("f leading terms", df <= t.f_tol, format!("|f - (log y - 2)| = {df:.3e} at y = {y:e}"));
            v.check("g leading terms", dg <= t.g_tol, format!("|g/y - (log y/2 - 9/4)| = {dg:.3e} at y = {y:e}"));
        }
        if !t.sensitivity_slopes.is_empty() {
            let probes: Vec<f64> = t.sensitivity_probes.iter().copied().filter(|&y| y <= t.y_max).collect();
            let rep = sensitivity(&tc, &t.sensitivity_slopes, &probes)?;
            write_json(out, "sensitivity.json", &json!({ "report": rep, "g2_spread": rep.g2_spread() }), &mut v)?;
        }
        v.data = json!({ "M": table.m, "nodes": table.y_nodes().len() });
        Ok(v)
    }

    pub fn matching(&mut self, out: &Path) -> Result<Verdict> {
        let mut v = Verdict::new("match");
        let m = self.cfg.matching.clone();
        let (w0, w1) = m.check_window;
        for (i, &k) in m.k.iter().enumerate() {
            let p = integrate_a(k, m.t_end, match_options(&self.cfg), &[w0, w1])?;
            p.write_csv(create(out, &format!("path_K{k}.csv"), &mut v)?)?;
            write_json(out, &format!("path_K{k}.json"), &p.header(), &mut v)?;
            if i > 0 {
                continue;
            }
            let devs: Vec<f64> = p
                .t_samples
                .iter()
                .zip(&p.log_a)
                .filter(|(t, _)| (w0..=w1).contains(*t))
                .map(|(t, l)| l - (2.0 * t).sqrt())
                .collect();
            if devs.is_empty() {
                v.skip("deviation", format!("no samples in [{w0}, {w1}] (t_end = {})", m.t_end));
                continue;
            }
            let (lo, hi) = devs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &d| (a.min(d), b.max(d)));
            let (b0, b1) = m.deviation_bracket;
            v.check(
                "deviation bracket",
                lo >= b0 && hi <= b1,
                format!("K = {k}: log a - sqrt(2t) in [{lo:.4}, {hi:.4}] on [{w0}, {w1}]"),
            );
            let trend = devs.windows(2).all(|w| (w[1] - 2.5).abs() <= (w[0] - 2.5).abs());
            v.check("deviation trend", trend, format!("|log a - sqrt(2t) - 5/2| nonincreasing: {trend}"));
        }
        Ok(v)
    }

    fn certify_pair(&mut self) -> Result<(Vec<Certification>, [BarrierSpec; 2])> {
        let c = self.cfg.certify.clone();
        let mut certs = Vec::new();
        let mut specs = Vec::new();
        for (kind, k) in [(BarrierKind::Lower, c.k_lower), (BarrierKind::Upper, c.k_upper)] {
            let spec = self.spec(kind, k)?;
            let cert = certify(&spec, (c.t_min, c.t_max), c.per_decade)?;
            let shift = cert.time_shift;
            certs.push(cert);
            specs.push(match shift {
                Some(s) => spec.with_shift(s),
                None => spec,
            });
        }
        let specs: [BarrierSpec; 2] = specs.try_into().map_err(|_| anyhow::anyhow!("two barriers expected"))?;
        Ok((certs, specs))
    }

    pub fn certify(&mut self, out: &Path) -> Result<Verdict> {
        let mut v = Verdict::new("certify");
        let c = self.cfg.certify.clone();
        let (certs, specs) = self.certify_pair()?;
        for cert in &certs {
            let name = cert.residual.kind.name();
            let thr = cert.residual.threshold_t;
            v.check(
                &format!("{name} residual sign"),
                cert.residual.sign_ok && thr.is_some_and(|t| t <= c.threshold_max),
                format!(
                    "K = {:?}: threshold {} (max {}), worst {:.3e}",
                    cert.residual.k,
                    thr.map_or("none".into(), |t| format!("{t:.4}")),
                    c.threshold_max,
                    cert.residual.worst_value
                ),
            );
            v.check(
                &format!("{name} boundary matching"),
                cert.matching.holds(),
                format!("onset {:?}, final margin {:.3e}", cert.matching.onset, cert.matching.final_margin),
            );
            if let Some(m) = &cert.monotone {
                v.check(&format!("{name} monotone"), m.onset.is_some(), format!("onset {:?}", m.onset));
            }
        }
        let mut swaps = Vec::new();
        for (kind, k) in &c.swaps {
            let spec = self.spec(kind_of(kind), *k)?;
            let rep = check_boundary_matching(&spec, (c.t_min, c.t_max))?;
            v.check(
                &format!("{kind} K = {k} matching fails"),
                !rep.holds(),
                format!("final margin {:.3e}", rep.final_margin),
            );
            swaps.push(json!({ "kind": kind, "K": k, "onset": rep.onset, "final_margin": rep.final_margin }));
        }
        let summary: Vec<_> = certs
            .iter()
            .map(|c| json!({ "residual": c.residual, "monotone": c.monotone, "matching_onset": c.matching.onset, "time_shift": c.time_shift }))
            .collect();
        write_json(out, "certification.json", &json!({ "barriers": summary, "swaps": swaps }), &mut v)?;
        let mut w = create(out, "matching_margins.csv", &mut v)?;
        use std::io::Write;
        writeln!(w, "kind,t,margin")?;
        for cert in &certs {
            for (t, m) in &cert.matching.samples {
                writeln!(w, "{},{t:.16e},{m:.16e}", cert.matching.kind.name())?;
            }
        }
        if certs.iter().all(|c| c.time_shift.is_some()) {
            self.certified = Some(specs);
        }
        Ok(v)
    }

    pub fn solve(&mut self, out: &Path) -> Result<Verdict> {
        let mut v = Verdict::new("solve");
        let s = self.cfg.solve.clone();
        let dir = out.join("snapshots");
        fs::create_dir_all(&dir)?;
        if s.xi > 1.0 {
            let (config, u0) = solver_setup(&self.cfg)?;
            let w0 = w_from_u(&u0)?;
            let traj = solve_w(&w0, &config, s.t_end / 4.0, &output_times(&self.cfg).iter().map(|t| t / 4.0).collect::<Vec<_>>())?;
            for snap in &traj.snapshots {
                let name = format!("snapshots/w_{:010.4}.csv", snap.time);
                snap.field.write_csv(create(out, &name, &mut v)?)?;
            }
            let event = json!({ "xi": s.xi, "blowup_cap": s.blowup_cap, "w_time": traj.blowup_time, "u_time": traj.blowup_time.map(|t| 4.0 * t) });
            write_json(out, "blowup.json", &event, &mut v)?;
            v.skip("grow-up", format!("supercritical run, blow-up detected at w-time {:?}", traj.blowup_time));
            v.data = json!({ "steps": traj.diagnostics.len() });
            return Ok(v);
        }
        let traj = self.run()?;
        for snap in &traj.snapshots {
            let name = format!("snapshots/u_{:08.3}.csv", snap.time);
            snap.write_csv(create(out, &name, &mut v)?)?;
        }
        let newton: u64 = traj.diagnostics.iter().map(|d| d.newton_iters as u64).sum();
        let mut w = create(out, "steps.csv", &mut v)?;
        use std::io::Write;
        writeln!(w, "t,dt,newton_iters")?;
        for d in &traj.diagnostics {
            writeln!(w, "{:.16e},{:.16e},{}", d.t, d.dt, d.newton_iters)?;
        }
        v.data = json!({
            "steps": traj.diagnostics.len(),
            "newton_iterations": newton,
            "grid_nodes": traj.snapshots[0].grid.len(),
            "x_min": traj.snapshots[0].x()[1],
        });
        v.check("run completed", true, format!("{} steps to t = {}", traj.diagnostics.len(), s.t_end));
        Ok(v)
    }

    pub fn rate(&mut self, out: &Path) -> Result<Verdict> {
        let mut v = Verdict::new("rate");
        let r = self.cfg.rate.clone();
        let traj = self.run()?;
        let rep = RateReport::from_trajectory(&traj, f64::MIN_POSITIVE)?;
        rep.write_csv(create(out, "rate.csv", &mut v)?)?;
        let (t0, t1) = r.window;
        let win = rep.window(t0, t1);
        let Some(last) = win.last() else {
            bail!("no outputs in the rate window [{t0}, {t1}]");
        };
        let (lo, hi) = win.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), w| (a.min(w.d), b.max(w.d)));
        v.check(
            "d bracket",
            lo >= r.d_bracket.0 && hi <= r.d_bracket.1,
            format!("d = log u_x(0,t) - sqrt(2t) in [{lo:.4}, {hi:.4}] on [{t0}, {t1}]"),
        );
        let trend = rep.d_trend(t0, t1).unwrap_or(f64::NAN);
        v.check("d trend", trend < 0.0, format!("slope of |d - 5/2| = {trend:.3e}"));
        v.check(
            "L1 ratio",
            (r.r_bracket.0..=r.r_bracket.1).contains(&last.l1_ratio),
            format!("r({}) = {:.4}", last.t, last.l1_ratio),
        );
        let rt = rep.ratio_trend(t0, t1).unwrap_or(f64::NAN);
        v.check("L1 ratio trend", rt < 0.0, format!("slope of |r - 1| = {rt:.3e}"));
        v.data = json!({ "t": last.t, "d": last.d, "slope": last.slope, "l1_ratio": last.l1_ratio });
        Ok(v)
    }

    pub fn profile(&mut self, out: &Path) -> Result<Verdict> {
        let mut v = Verdict::new("profile");
        let p = self.cfg.profile.clone();
        let traj = self.run()?;
        let rep = RateReport::from_trajectory(&traj, f64::MIN_POSITIVE)?;
        let mut w = create(out, "profile.csv", &mut v)?;
        use std::io::Write;
        writeln!(w, "t,slope,profile_error")?;
        for r in &rep.rows {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", r.t, r.slope, r.profile_error)?;
        }
        let win = rep.window(p.t_from, f64::INFINITY);
        let Some(last) = win.last() else {
            bail!("no outputs after t = {}", p.t_from);
        };
        let decreasing = win.windows(2).all(|q| q[1].profile_error < q[0].profile_error);
        v.check(
            "E decreasing",
            decreasing,
            format!("E({}) = {:.4} -> E({}) = {:.4}", win[0].t, win[0].profile_error, last.t, last.profile_error),
        );
        v.check("E bound", last.profile_error <= p.e_max, format!("E({}) = {:.4} (max {})", last.t, last.profile_error, p.e_max));
        Ok(v)
    }

    pub fn sandwich(&mut self, out: &Path) -> Result<Verdict> {
        let mut v = Verdict::new("sandwich");
        if self.certified.is_none() {
            let (certs, specs) = self.certify_pair()?;
            if let Some(c) = certs.iter().find(|c| c.time_shift.is_none()) {
                v.check("certified barriers", false, format!("{} barrier has no certified start", c.residual.kind.name()));
                return Ok(v);
            }
            self.certified = Some(specs);
        }
        let [lower, upper] = self.certified.clone().unwrap();
        let traj = self.run()?;
        let s = &self.cfg.sandwich;
        let opts = ShiftOptions {
            shift_max: s.shift_max,
            lattice: s.lattice,
            upper_from: s.upper_from,
            tol_abs: s.tol_abs,
            tol_rel: s.tol_rel,
        };
        match find_time_shifts(&lower, &upper, &traj, &opts) {
            Ok(rep) => {
                v.check(
                    "sandwich",
                    !rep.lower_times.is_empty() && !rep.upper_times.is_empty(),
                    format!(
                        "T1 = {}, T2 = {}; lower checked at {} outputs, upper at {}",
                        rep.t1,
                        rep.t2,
                        rep.lower_times.len(),
                        rep.upper_times.len()
                    ),
                );
                let data = json!({ "report": rep, "lower_start": lower.time_shift, "upper_start": upper.time_shift });
                write_json(out, "shifts.json", &data, &mut v)?;
            }
            Err(e @ growup::Error::OrderingFailure { .. }) => v.check("sandwich", false, e.to_string()),
            Err(e) => return Err(e.into()),
        }
        Ok(v)
    }
}

pub fn output_times(cfg: &ExperimentConfig) -> Vec<f64> {
    let s = &cfg.solve;
    let n = (s.t_end / s.output_step).round() as usize;
    let mut t: Vec<f64> = (0..=n).map(|k| k as f64 * s.output_step).filter(|&t| t < s.t_end).collect();
    t.push(s.t_end);
    t
}

fn solver_setup(cfg: &ExperimentConfig) -> Result<(SolverConfig, Snapshot)> {
    let s = &cfg.solve;
    let x_min = match s.x_min {
        Some(x) => x,
        None => {
            // decade below 1% of the layer width 1/A(t_end)
            let x = (0.01 / growup::closed_a(s.t_end)).min(1e-4);
            10f64.powf(x.log10().floor())
        }
    };
    let grid = make_graded_grid(s.nodes, x_min, s.grading)?;
    let mut config = SolverConfig::new(grid.clone());
    config.rtol = s.rtol;
    config.atol = s.atol;
    config.dt_max = s.dt_max;
    config.reg_epsilon = s.reg_epsilon;
    config.right_bc = s.xi;
    config.blowup_cap = s.blowup_cap;
    let (xi, a) = (s.xi, s.steady_a);
    let u0 = match s.initial {
        InitialData::Linear => Snapshot::from_fn(grid, 0.0, |x| xi * x)?,
        InitialData::Steady => Snapshot::from_fn(grid, 0.0, |x| xi * (a + 1.0) * x / (a * x + 1.0))?,
    };
    Ok((config, u0))
}

pub const COMMANDS: [&str; 7] = ["tabulate", "match", "certify", "solve", "rate", "profile", "sandwich"];

/// Run one command into `out`, write its manifest and print its checks.
pub fn run_command(session: &mut Session, name: &str, out: &Path) -> Result<Verdict> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut verdict = match name {
        "tabulate" => session.tabulate(out),
        "match" => session.matching(out),
        "certify" => session.certify(out),
        "solve" => session.solve(out),
        "rate" => session.rate(out),
        "profile" => session.profile(out),
        "sandwich" => session.sandwich(out),
        _ => bail!("unknown command {name}"),
    }?;
    let manifest = json!({
        "command": verdict.command,
        "passed": verdict.passed(),
        "checks": verdict.checks,
        "outputs": verdict.outputs,
        "data": verdict.data,
        "config": session.cfg,
    });
    let path: PathBuf = out.join(format!("{name}.json"));
    serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &manifest)?;
    verdict.outputs.push(format!("{name}.json"));
    for c in &verdict.checks {
        let tag = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        session.say(&format!("[{tag}] {name}: {}: {}", c.name, c.detail));
    }
    Ok(verdict)
}
