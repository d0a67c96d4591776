//! Experiment configuration. One TOML file with an optional section per
//! command; every key has a default, see `configs/default.toml`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tables: Tables,
    pub tabulate: Tabulate,
    #[serde(rename = "match")]
    pub matching: Matching,
    pub certify: Certify,
    pub solve: Solve,
    pub rate: Rate,
    pub profile: Profile,
    pub sandwich: Sandwich,
}

/// Tables shared by the barrier commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tables {
    pub y_max: f64,
    /// Amplitude of the `phi` correction; unset means the default `M`.
    #[serde(rename = "M")]
    pub m: Option<f64>,
    pub phi_slope0: f64,
    pub panels_per_decade: usize,
    pub gauss_order: usize,
}

impl Default for Tables {
    fn default() -> Self {
        Self {
            y_max: 1e50,
            m: None,
            phi_slope0: 1.0 / (2.0 * std::f64::consts::LN_2),
            panels_per_decade: 4,
            gauss_order: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tabulate {
    /// End of the tabulated range; asymptotic windows run up to here.
    pub y_max: f64,
    pub f_tol: f64,
    pub g_tol: f64,
    /// `phi'(0)` values for the sensitivity sweep.
    pub sensitivity_slopes: Vec<f64>,
    pub sensitivity_probes: Vec<f64>,
}

impl Default for Tabulate {
    fn default() -> Self {
        Self {
            y_max: 1e6,
            f_tol: 0.01,
            g_tol: 0.02,
            sensitivity_slopes: vec![0.5, 1.0 / (2.0 * std::f64::consts::LN_2), 1.0],
            sensitivity_probes: vec![0.5, 10.0, 1e3, 1e5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Matching {
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    pub t_end: f64,
    pub rtol: f64,
    pub max_step: f64,
    pub samples_per_decade: usize,
    /// Window for the check on `log a - sqrt(2t)`, done for the first `K`.
    pub check_window: (f64, f64),
    pub deviation_bracket: (f64, f64),
}

impl Default for Matching {
    fn default() -> Self {
        Self {
            k: vec![5.0, 6.0],
            t_end: 1000.0,
            rtol: 1e-12,
            max_step: 5.0,
            samples_per_decade: 40,
            check_window: (100.0, 1000.0),
            deviation_bracket: (2.0, 3.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Certify {
    pub k_lower: f64,
    pub k_upper: f64,
    pub t_min: f64,
    /// Scans run to here; the upper matching onset lies beyond t = 1000.
    pub t_max: f64,
    pub per_decade: usize,
    pub threshold_max: f64,
    /// `(kind, K)` pairs whose boundary matching must fail.
    pub swaps: Vec<(String, f64)>,
}

impl Default for Certify {
    fn default() -> Self {
        Self {
            k_lower: 5.0,
            k_upper: 6.0,
            t_min: 0.01,
            t_max: 5000.0,
            per_decade: 20,
            threshold_max: 1000.0,
            swaps: vec![("lower".into(), 6.0), ("lower".into(), 7.0), ("upper".into(), 5.0)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitialData {
    /// `u0 = xi x`
    #[default]
    Linear,
    /// `u0 = xi (a+1) x / (a x + 1)` with `a = steady_a`
    Steady,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Solve {
    pub t_end: f64,
    pub output_step: f64,
    pub xi: f64,
    pub initial: InitialData,
    pub steady_a: f64,
    pub nodes: usize,
    pub grading: f64,
    /// Smallest cell; unset sizes it from the layer width at `t_end`.
    pub x_min: Option<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub dt_max: f64,
    pub reg_epsilon: f64,
    /// Cap on `max w` for supercritical runs.
    pub blowup_cap: f64,
}

impl Default for Solve {
    fn default() -> Self {
        Self {
            t_end: 50.0,
            output_step: 0.5,
            xi: 1.0,
            initial: InitialData::Linear,
            steady_a: 10.0,
            nodes: 600,
            grading: 1.04,
            x_min: None,
            rtol: 1e-6,
            atol: 1e-8,
            dt_max: 0.25,
            reg_epsilon: 0.0,
            blowup_cap: 1e8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rate {
    pub window: (f64, f64),
    pub d_bracket: (f64, f64),
    pub r_bracket: (f64, f64),
}

impl Default for Rate {
    fn default() -> Self {
        Self {
            window: (20.0, 50.0),
            d_bracket: (1.5, 3.5),
            r_bracket: (0.4, 2.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Profile {
    pub t_from: f64,
    pub e_max: f64,
}

impl Default for Profile {
    fn default() -> Self {
        Self { t_from: 10.0, e_max: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sandwich {
    pub shift_max: f64,
    pub lattice: f64,
    pub upper_from: f64,
    pub tol_abs: f64,
    pub tol_rel: f64,
}

impl Default for Sandwich {
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

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg: Self = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tables.y_max", self.tables.y_max),
            ("tables.phi_slope0", self.tables.phi_slope0),
            ("tabulate.y_max", self.tabulate.y_max),
            ("tabulate.f_tol", self.tabulate.f_tol),
            ("tabulate.g_tol", self.tabulate.g_tol),
            ("match.t_end", self.matching.t_end),
            ("match.rtol", self.matching.rtol),
            ("match.max_step", self.matching.max_step),
            ("certify.t_min", self.certify.t_min),
            ("certify.threshold_max", self.certify.threshold_max),
            ("solve.t_end", self.solve.t_end),
            ("solve.output_step", self.solve.output_step),
            ("solve.xi", self.solve.xi),
            ("solve.steady_a", self.solve.steady_a),
            ("solve.grading", self.solve.grading),
            ("solve.rtol", self.solve.rtol),
            ("solve.atol", self.solve.atol),
            ("solve.dt_max", self.solve.dt_max),
            ("solve.blowup_cap", self.solve.blowup_cap),
            ("profile.e_max", self.profile.e_max),
            ("sandwich.shift_max", self.sandwich.shift_max),
            ("sandwich.lattice", self.sandwich.lattice),
            ("sandwich.tol_abs", self.sandwich.tol_abs),
            ("sandwich.tol_rel", self.sandwich.tol_rel),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{name} = {v} must be positive and finite");
            }
        }
        if self.matching.k.is_empty() {
            bail!("match.K lists no matching constant");
        }
        if self.certify.t_max <= self.certify.t_min {
            bail!("certify.t_max must exceed certify.t_min");
        }
        if self.solve.reg_epsilon < 0.0 {
            bail!("solve.reg_epsilon must be >= 0");
        }
        if let Some(x) = self.solve.x_min {
            if !(x > 0.0 && x < 1.0) {
                bail!("solve.x_min = {x} must lie in (0, 1)");
            }
        }
        if let Some(m) = self.tables.m {
            if !m.is_finite() {
                bail!("tables.M must be finite");
            }
        }
        for (kind, _) in &self.certify.swaps {
            if kind != "lower" && kind != "upper" {
                bail!("certify.swaps: unknown barrier kind `{kind}`");
            }
        }
        for (name, (lo, hi)) in [
            ("match.deviation_bracket", self.matching.deviation_bracket),
            ("match.check_window", self.matching.check_window),
            ("rate.window", self.rate.window),
            ("rate.d_bracket", self.rate.d_bracket),
            ("rate.r_bracket", self.rate.r_bracket),
        ] {
            if !(lo < hi) {
                bail!("{name} = [{lo}, {hi}] is empty");
            }
        }
        Ok(())
    }
}
