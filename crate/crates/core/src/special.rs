//! The operator `L w = y w'' + 2y w'/(1+y) + 2w/(1+y)^2`, its inverse
//! anchored at the origin, and the special functions built from it.
//!
//! `L0^{-1} psi = y/(y+1)^2 int_0^y ((t+1)/t)^2 int_0^t psi(s) ds dt` is
//! evaluated with two spectral cumulative integrations on shared
//! Gauss-Legendre panels. The derivative always comes from
//! `w' = (1/y - 2/(y+1)) w + Psi(y)/y`, never from differencing.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{log_breaks, Panels};

/// `L w` from pointwise values of `w, w', w''`.
pub fn apply_l(w: f64, wp: f64, wpp: f64, y: f64) -> f64 {
    let q = 1.0 + y;
    y * wpp + 2.0 * y * wp / q + 2.0 * w / (q * q)
}

/// Kernel element `w0 = y/(y+1)^2` and its derivative.
pub fn w0(y: f64) -> (f64, f64) {
    let q = 1.0 + y;
    (y / (q * q), (1.0 - y) / (q * q * q))
}

/// C^1 extension of `1/log y` to `[0, 2)`: the cubic Hermite with
/// `phi(0) = 0`, `phi'(0) = slope0` matching value and slope at 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiSpec {
    pub slope0: f64,
}

impl Default for PhiSpec {
    fn default() -> Self {
        Self {
            slope0: 1.0 / (2.0 * std::f64::consts::LN_2),
        }
    }
}

impl PhiSpec {
    pub fn new(slope0: f64) -> Result<Self> {
        let spec = Self { slope0 };
        if !(slope0 > 0.0) || !slope0.is_finite() {
            return Err(Error::InvalidInput(format!("phi'(0) = {slope0} must be positive")));
        }
        if (1..2000).any(|k| spec.value(k as f64 * 1e-3) <= 0.0) {
            return Err(Error::InvalidInput(format!(
                "phi'(0) = {slope0} makes the blend nonpositive on (0, 2)"
            )));
        }
        Ok(spec)
    }

    pub fn value(&self, y: f64) -> f64 {
        self.value_and_derivative(y).0
    }

    pub fn value_and_derivative(&self, y: f64) -> (f64, f64) {
        if y >= 2.0 {
            let l = y.ln();
            return (1.0 / l, -1.0 / (y * l * l));
        }
        let l2 = std::f64::consts::LN_2;
        let (p1, m1) = (1.0 / l2, -1.0 / (2.0 * l2 * l2));
        let s = y / 2.0;
        let (s2, s3) = (s * s, s * s * s);
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let v = 2.0 * h10 * self.slope0 + h01 * p1 + 2.0 * h11 * m1;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -6.0 * s2 + 6.0 * s;
        let d11 = 3.0 * s2 - 2.0 * s;
        let d = d10 * self.slope0 + 0.5 * d01 * p1 + d11 * m1;
        (v, d)
    }
}

/// Shape of the cutoff `f2` on `[0, 1)`; `f2 = 1` for `y >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CutoffBlend {
    /// `3y^2 - 2y^3`
    #[default]
    Smoothstep,
    /// `y (2 - y)`
    Quadratic,
}

pub fn cutoff(y: f64, blend: CutoffBlend) -> f64 {
    if y >= 1.0 {
        return 1.0;
    }
    match blend {
        CutoffBlend::Smoothstep => y * y * (3.0 - 2.0 * y),
        CutoffBlend::Quadratic => y * (2.0 - y),
    }
}

/// Panel layout for all tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub y_max: f64,
    /// Log panels per decade above `y_lo`.
    pub panels_per_decade: usize,
    /// Gauss nodes per panel.
    pub order: usize,
    /// End of the linear patch at the origin.
    pub y_lo: f64,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            y_max: 1e6,
            panels_per_decade: 4,
            order: 16,
            y_lo: 1e-6,
        }
    }
}

impl TableConfig {
    pub fn with_y_max(y_max: f64) -> Self {
        Self {
            y_max,
            ..Self::default()
        }
    }

    pub fn panels(&self) -> Result<Arc<Panels>> {
        if !(self.y_max > self.y_lo) || !self.y_max.is_finite() {
            return Err(Error::InvalidInput(format!("Y_max = {} too small", self.y_max)));
        }
        let breaks = log_breaks(self.y_lo, self.y_max, self.panels_per_decade, &[1.0, 2.0]);
        Ok(Arc::new(Panels::new(breaks, self.order)?))
    }
}

/// `w = L0^{-1} psi` tabulated at the panel nodes.
#[derive(Debug, Clone)]
pub struct InverseTable {
    panels: Arc<Panels>,
    psi: Vec<f64>,
    /// `Psi(y) = int_0^y psi`.
    psi_int: Vec<f64>,
    w: Vec<f64>,
    w_prime: Vec<f64>,
}

impl InverseTable {
    /// Invert from the source sampled at `panels.nodes()`.
    pub fn from_samples(panels: Arc<Panels>, psi: Vec<f64>) -> Self {
        let y = panels.nodes();
        let (psi_int, _) = panels.cumulative(&psi, 0.0);
        let integrand: Vec<f64> = y
            .iter()
            .zip(&psi_int)
            .map(|(&t, &p)| {
                let q = (t + 1.0) / t;
                q * q * p
            })
            .collect();
        let (outer, _) = panels.cumulative(&integrand, 0.0);
        let w: Vec<f64> = y
            .iter()
            .zip(&outer)
            .map(|(&t, &i)| t / ((t + 1.0) * (t + 1.0)) * i)
            .collect();
        let w_prime = y
            .iter()
            .zip(w.iter().zip(&psi_int))
            .map(|(&t, (&wv, &p))| derivative_identity(t, wv, p))
            .collect();
        Self {
            panels,
            psi,
            psi_int,
            w,
            w_prime,
        }
    }

    pub fn panels(&self) -> &Arc<Panels> {
        &self.panels
    }

    pub fn y_nodes(&self) -> &[f64] {
        self.panels.nodes()
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    pub fn derivatives(&self) -> &[f64] {
        &self.w_prime
    }

    pub fn source(&self) -> &[f64] {
        &self.psi
    }

    pub fn y_max(&self) -> f64 {
        self.panels.upper()
    }

    /// `(w(y), w'(y))` at any `y` in the table range.
    pub fn eval(&self, y: f64) -> Result<(f64, f64)> {
        if y == 0.0 {
            return Ok((0.0, 0.0));
        }
        let range = || Error::OutOfRange {
            value: y,
            lo: 0.0,
            hi: self.panels.upper(),
        };
        let w = self.panels.interpolate(&self.w, y).ok_or_else(range)?;
        let p = self.panels.interpolate(&self.psi_int, y).ok_or_else(range)?;
        Ok((w, derivative_identity(y, w, p)))
    }

    /// `w''` by spectral differentiation of the `w'` samples.
    pub fn second_derivative(&self, y: f64) -> Result<f64> {
        self.panels
            .interpolate_derivs(&self.w_prime, y)
            .map(|(_, d, _)| d)
            .ok_or(Error::OutOfRange {
                value: y,
                lo: 0.0,
                hi: self.panels.upper(),
            })
    }

    /// `alpha * self + beta * other` (same panels).
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        assert!(Arc::ptr_eq(&self.panels, &other.panels) || self.panels.nodes() == other.panels.nodes());
        let lin = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| alpha * x + beta * y).collect()
        };
        Self {
            panels: self.panels.clone(),
            psi: lin(&self.psi, &other.psi),
            psi_int: lin(&self.psi_int, &other.psi_int),
            w: lin(&self.w, &other.w),
            w_prime: lin(&self.w_prime, &other.w_prime),
        }
    }
}

fn derivative_identity(y: f64, w: f64, psi_int: f64) -> f64 {
    (1.0 / y - 2.0 / (y + 1.0)) * w + psi_int / y
}

/// Reject sources that are not `O(y)` at the origin.
fn check_source_at_origin(psi: &dyn Fn(f64) -> f64) -> Result<()> {
    let ratio = |y: f64| psi(y).abs() / y;
    let near = ratio(1e-8);
    for y in [1e-10, 1e-12] {
        let r = ratio(y);
        if !r.is_finite() || r > 10.0 * near.max(1.0) {
            return Err(Error::SingularSource { y, ratio: r });
        }
    }
    Ok(())
}

/// `L0^{-1} psi` on the default panels up to `y_max`.
pub fn invert_l0(psi: impl Fn(f64) -> f64, y_max: f64) -> Result<InverseTable> {
    let panels = TableConfig::with_y_max(y_max).panels()?;
    invert_l0_on(panels, psi)
}

pub fn invert_l0_on(panels: Arc<Panels>, psi: impl Fn(f64) -> f64) -> Result<InverseTable> {
    check_source_at_origin(&psi)?;
    let samples: Vec<f64> = panels.nodes().iter().map(|&y| psi(y)).collect();
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "source is not finite at y = {}",
            panels.nodes()[i]
        )));
    }
    Ok(InverseTable::from_samples(panels, samples))
}

/// `f = w0 + L0^{-1} w0` at the nodes.
#[derive(Debug, Clone)]
pub struct FTable {
    /// `L0^{-1} w0`.
    pub correction: InverseTable,
    pub f: Vec<f64>,
    pub f_prime: Vec<f64>,
}

impl FTable {
    pub fn y_nodes(&self) -> &[f64] {
        self.correction.y_nodes()
    }

    pub fn eval(&self, y: f64) -> Result<(f64, f64)> {
        let (c, cp) = self.correction.eval(y)?;
        let (w, wp) = w0(y);
        Ok((w + c, wp + cp))
    }

    /// `2 f f' - y f' + f` at the nodes.
    pub fn tilde_f(&self) -> Vec<f64> {
        self.y_nodes()
            .iter()
            .zip(self.f.iter().zip(&self.f_prime))
            .map(|(&y, (&f, &fp))| 2.0 * f * fp - y * fp + f)
            .collect()
    }
}

pub fn build_f(config: &TableConfig) -> Result<FTable> {
    if config.y_max < 10.0 {
        return Err(Error::InvalidInput(format!("Y_max = {} < 10", config.y_max)));
    }
    let correction = invert_l0_on(config.panels()?, |y| w0(y).0)?;
    let y = correction.y_nodes();
    let f = y.iter().zip(correction.values()).map(|(&y, c)| w0(y).0 + c).collect();
    let f_prime = y.iter().zip(correction.derivatives()).map(|(&y, c)| w0(y).1 + c).collect();
    Ok(FTable {
        correction,
        f,
        f_prime,
    })
}

/// `g = L0^{-1}(2 f f' - y f' + f)`.
pub fn build_g(f: &FTable) -> InverseTable {
    InverseTable::from_samples(f.correction.panels().clone(), f.tilde_f())
}

/// `L0^{-1} phi`.
pub fn build_g4(panels: Arc<Panels>, phi: PhiSpec) -> InverseTable {
    let samples = panels.nodes().iter().map(|&y| phi.value(y)).collect();
    InverseTable::from_samples(panels, samples)
}

/// `h = L0^{-1}(g~ + M phi) = g + M L0^{-1} phi`, after checking that the
/// source is nonnegative at every node.
pub fn build_h(f: &FTable, g: &InverseTable, g4: &InverseTable, m: f64) -> Result<InverseTable> {
    let tf = f.tilde_f();
    let mut worst = (f64::INFINITY, 0.0);
    for ((&y, &t), &p) in f.y_nodes().iter().zip(&tf).zip(g4.source()) {
        let s = t + m * p;
        if s < worst.0 {
            worst = (s, y);
        }
    }
    if worst.0 < 0.0 {
        return Err(Error::MTooSmall {
            m,
            y: worst.1,
            min_value: worst.0,
        });
    }
    Ok(g.combine(1.0, g4, m))
}

/// Lattice step of the `M` search.
pub const M_LATTICE: f64 = 0.01;
/// Lower clamp on `M`.
pub const M_FLOOR: f64 = 3.0;
const M_LIMIT: f64 = 1e6;

/// Smallest `M` on the lattice `k * step` with `source + M * weight >= 0`
/// wherever `weight > 0` (no clamp).
pub fn min_m_lattice(source: &[f64], weight: &[f64], step: f64) -> Result<f64> {
    let mut need = 0.0f64;
    for (&s, &w) in source.iter().zip(weight) {
        if s < 0.0 {
            if w <= 0.0 {
                return Err(Error::MInfeasible { limit: M_LIMIT });
            }
            need = need.max(-s / w);
        }
    }
    let mut m = (need / step).ceil() * step;
    // guard against the rounding in k * step landing just below `need`
    while source.iter().zip(weight).any(|(&s, &w)| s + m * w < 0.0) {
        m += step;
    }
    if m > M_LIMIT {
        return Err(Error::MInfeasible { limit: M_LIMIT });
    }
    Ok(m)
}

/// Unclamped lattice minimum for `g~ + M phi >= 0`.
pub fn min_m_raw(f: &FTable, phi: PhiSpec) -> Result<f64> {
    let weight: Vec<f64> = f.y_nodes().iter().map(|&y| phi.value(y)).collect();
    min_m_lattice(&f.tilde_f(), &weight, M_LATTICE)
}

/// [`min_m_raw`] clamped below by [`M_FLOOR`].
pub fn min_m(f: &FTable, phi: PhiSpec) -> Result<f64> {
    Ok(min_m_raw(f, phi)?.max(M_FLOOR))
}

/// Default amplitude: `min_m` rounded up to the next multiple of 0.5.
pub fn default_m(f: &FTable, phi: PhiSpec) -> Result<f64> {
    Ok((min_m(f, phi)? * 2.0).ceil() / 2.0)
}

/// `g_i = L0^{-1} f_i` for `f_1 = log(1+y)`, `f_2` = cutoff, `f_3 =
/// log^2(1+y)/(1+y)`, `f_4 = phi`.
pub fn build_component_gi(
    i: usize,
    config: &TableConfig,
    blend: CutoffBlend,
    phi: PhiSpec,
) -> Result<InverseTable> {
    let panels = config.panels()?;
    match i {
        1 => invert_l0_on(panels, |y| y.ln_1p()),
        2 => invert_l0_on(panels, |y| cutoff(y, blend)),
        3 => invert_l0_on(panels, |y| y.ln_1p().powi(2) / (1.0 + y)),
        4 => Ok(build_g4(panels, phi)),
        _ => Err(Error::InvalidInput(format!("component index {i} not in 1..=4"))),
    }
}

/// Values of all tabulated functions at one `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecialPoint {
    pub f: f64,
    pub f_prime: f64,
    pub tilde_f: f64,
    pub g: f64,
    pub g_prime: f64,
    pub h: f64,
    pub h_prime: f64,
    pub phi: f64,
}

/// `f, g, h` and `L0^{-1} phi` on shared panels.
#[derive(Debug, Clone)]
pub struct SpecialTable {
    pub config: TableConfig,
    pub m: f64,
    pub phi: PhiSpec,
    pub f: FTable,
    pub g: InverseTable,
    pub g4: InverseTable,
    pub h: InverseTable,
}

impl SpecialTable {
    /// Build every table; `m = None` uses [`default_m`].
    pub fn build(config: TableConfig, m: Option<f64>, phi: PhiSpec) -> Result<Self> {
        let f = build_f(&config)?;
        let m = match m {
            Some(m) => m,
            None => default_m(&f, phi)?,
        };
        let g = build_g(&f);
        let g4 = build_g4(f.correction.panels().clone(), phi);
        let h = build_h(&f, &g, &g4, m)?;
        Ok(Self {
            config,
            m,
            phi,
            f,
            g,
            g4,
            h,
        })
    }

    pub fn y_max(&self) -> f64 {
        self.g.y_max()
    }

    pub fn y_nodes(&self) -> &[f64] {
        self.g.y_nodes()
    }

    pub fn eval(&self, y: f64) -> Result<SpecialPoint> {
        let (f, fp) = self.f.eval(y)?;
        let (g, gp) = self.g.eval(y)?;
        let (g4, g4p) = self.g4.eval(y)?;
        Ok(SpecialPoint {
            f,
            f_prime: fp,
            tilde_f: 2.0 * f * fp - y * fp + f,
            g,
            g_prime: gp,
            h: g + self.m * g4,
            h_prime: gp + self.m * g4p,
            phi: self.phi.value(y),
        })
    }

    /// CSV with columns `y, f, f', tilde_f, g, g', h, h'`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "y,f,f',tilde_f,g,g',h,h'")?;
        let tf = self.f.tilde_f();
        for i in 0..self.y_nodes().len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.y_nodes()[i],
                self.f.f[i],
                self.f.f_prime[i],
                tf[i],
                self.g.values()[i],
                self.g.derivatives()[i],
                self.h.values()[i],
                self.h.derivatives()[i],
            )?;
        }
        Ok(())
    }

    pub fn header(&self) -> TableHeader {
        TableHeader {
            m: self.m,
            y_max: self.y_max(),
            phi_slope0: self.phi.slope0,
            panels_per_decade: self.config.panels_per_decade,
            gauss_order: self.config.order,
            y_lo: self.config.y_lo,
            nodes: self.y_nodes().len(),
        }
    }
}

/// JSON header written next to the table CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableHeader {
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "Y_max")]
    pub y_max: f64,
    pub phi_slope0: f64,
    pub panels_per_decade: usize,
    pub gauss_order: usize,
    pub y_lo: f64,
    pub nodes: usize,
}

/// Deviation ratios of one asymptotic claim over the windows `[Y/100, Y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRatios {
    pub claim: String,
    pub windows: Vec<f64>,
    pub ratios: Vec<f64>,
    pub bounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub claims: Vec<ClaimRatios>,
}

impl AsymptoticsReport {
    pub fn all_bounded(&self) -> bool {
        self.claims.iter().all(|c| c.bounded)
    }

    pub fn get(&self, claim: &str) -> Option<&ClaimRatios> {
        self.claims.iter().find(|c| c.claim == claim)
    }
}

/// A ratio sequence counts as growing when its last step increases by more
/// than 5% and by at least 0.8 times the previous increase, i.e. the
/// increments do not shrink.
pub fn ratios_bounded(r: &[f64]) -> bool {
    if r.iter().any(|v| !v.is_finite()) {
        return false;
    }
    if r.len() < 3 {
        return r.len() < 2 || r[1] <= r[0] * 1.05;
    }
    let n = r.len();
    let (r1, r2, r3) = (r[n - 3], r[n - 2], r[n - 1]);
    !(r3 > r2 * 1.05 && r3 - r2 > 0.8 * (r2 - r1))
}

/// Windows `[Y/100, Y]` with `Y = 10^4, 10^5, ...` up to `y_max`.
pub fn asymptotic_windows(y_max: f64) -> Result<Vec<f64>> {
    if y_max < 1e4 * (1.0 - 1e-12) {
        return Err(Error::InvalidInput(format!(
            "Y_max = {y_max} < 1e4 leaves no asymptotic window"
        )));
    }
    let mut out = Vec::new();
    let mut y = 1e4;
    while y <= y_max * (1.0 + 1e-12) {
        out.push(y);
        y *= 10.0;
    }
    Ok(out)
}

type Claim<'a> = (&'a str, Box<dyn Fn(f64) -> Result<(f64, f64)> + 'a>);

/// Sup of `|actual - leading| / |O-term|` over `[Y/100, Y]` for every claim
/// about `f, g, h` and the components `g_1 .. g_4`.
pub fn check_asymptotics(table: &SpecialTable, components: &[InverseTable; 4]) -> Result<AsymptoticsReport> {
    let windows = asymptotic_windows(table.y_max())?;
    let ln = |y: f64| y.ln();
    let comp = |i: usize, deriv: bool| {
        move |y: f64| -> Result<f64> {
            let (v, d) = components[i].eval(y)?;
            Ok(if deriv { d } else { v })
        }
    };
    let claims: Vec<Claim> = vec![
        ("f", Box::new(|y| Ok((table.eval(y)?.f - (ln(y) - 2.0), ln(y).powi(2) / y)))),
        ("f'", Box::new(|y| Ok((table.eval(y)?.f_prime - 1.0 / y, ln(y).powi(2) / (y * y))))),
        ("g", Box::new(|y| Ok((table.eval(y)?.g - (y * ln(y) / 2.0 - 2.25 * y), ln(y).powi(3))))),
        ("g'", Box::new(|y| Ok((table.eval(y)?.g_prime - (ln(y) / 2.0 - 1.75), ln(y).powi(3) / y)))),
        ("h", Box::new(|y| Ok((table.eval(y)?.h - (y * ln(y) / 2.0 - 2.25 * y), y / ln(y))))),
        ("h'", Box::new(|y| Ok((table.eval(y)?.h_prime - (ln(y) / 2.0 - 1.75), 1.0 / ln(y))))),
        ("g1", Box::new(move |y| Ok((comp(0, false)(y)? - (y * ln(y) / 2.0 - 0.75 * y), ln(y))))),
        ("g1'", Box::new(move |y| Ok((comp(0, true)(y)? - (ln(y) / 2.0 - 0.25), ln(y) / y)))),
        ("g2", Box::new(move |y| Ok((comp(1, false)(y)? - y / 2.0, 1.0)))),
        ("g2'", Box::new(move |y| Ok((comp(1, true)(y)? - 0.5, 1.0 / y)))),
        ("g3", Box::new(move |y| Ok((comp(2, false)(y)?, ln(y).powi(3))))),
        ("g3'", Box::new(move |y| Ok((comp(2, true)(y)?, ln(y).powi(3) / y)))),
        ("g4", Box::new(move |y| Ok((comp(3, false)(y)?, y / ln(y))))),
        ("g4'", Box::new(move |y| Ok((comp(3, true)(y)?, 1.0 / ln(y))))),
    ];
    let mut report = Vec::with_capacity(claims.len());
    for (name, eval) in &claims {
        let mut ratios = Vec::with_capacity(windows.len());
        for &big_y in &windows {
            let mut sup = 0.0f64;
            // 50 samples per decade on a log scale, both ends included
            let k_max = 100;
            for k in 0..=k_max {
                let y = big_y / 100.0 * 100f64.powf(k as f64 / k_max as f64);
                let y = y.min(table.y_max());
                let (dev, scale) = eval(y)?;
                sup = sup.max(dev.abs() / scale.abs());
            }
            ratios.push(sup);
        }
        let bounded = ratios_bounded(&ratios);
        report.push(ClaimRatios {
            claim: name.to_string(),
            windows: windows.clone(),
            ratios,
            bounded,
        });
    }
    let out = AsymptoticsReport { claims: report };
    if let Some(bad) = out.claims.iter().find(|c| !c.bounded) {
        return Err(Error::AsymptoticsViolation {
            claim: bad.claim.clone(),
            ratios: bad.ratios.clone(),
        });
    }
    Ok(out)
}
