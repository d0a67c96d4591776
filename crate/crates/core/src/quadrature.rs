//! Gauss-Legendre panels with spectral (Legendre-series) integration and
//! interpolation.
//!
//! Functions are represented by their values at the Gauss nodes of each
//! panel. On a panel the samples define a unique polynomial of degree `n-1`;
//! cumulative integrals, point values and derivatives are all taken from that
//! polynomial, so chained constructions (integrate, multiply, integrate
//! again) stay on the same node set without re-interpolation.

use crate::error::{Error, Result};

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of `f` over [a, b].
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `P_0(x) .. P_{m}(x)`.
fn legendre_table(m: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; m + 1];
    p[0] = 1.0;
    if m >= 1 {
        p[1] = x;
    }
    for k in 2..=m {
        let kf = k as f64;
        p[k] = ((2.0 * kf - 1.0) * x * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf;
    }
    p
}

/// Values, first and second derivatives of a Legendre series at `x`.
fn legendre_series_derivs(coef: &[f64], x: f64) -> (f64, f64, f64) {
    let d1 = derivative_coefficients(coef);
    let d2 = derivative_coefficients(&d1);
    let m = coef.len().saturating_sub(1);
    let p = legendre_table(m, x);
    let dot = |c: &[f64]| c.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>();
    (dot(coef), dot(&d1), dot(&d2))
}

/// Legendre coefficients of the derivative of `sum c_k P_k`.
fn derivative_coefficients(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut d = vec![0.0; n];
    // d_k = (2k+1) * sum_{j>k, j-k odd} c_j, accumulated from the top.
    let mut odd_tail = 0.0; // sum over j with parity opposite to k
    let mut even_tail = 0.0;
    for k in (0..n).rev() {
        if k + 1 < n {
            if (k + 1) % 2 == 0 {
                even_tail += c[k + 1];
            } else {
                odd_tail += c[k + 1];
            }
        }
        let tail = if k % 2 == 0 { odd_tail } else { even_tail };
        d[k] = (2.0 * k as f64 + 1.0) * tail;
    }
    d
}

/// A partition of `[breaks[0], breaks[last]]` into Gauss-Legendre panels.
#[derive(Debug, Clone)]
pub struct Panels {
    breaks: Vec<f64>,
    rule: GaussLegendre,
    /// `int_mat[k][j] = \int_{-1}^{xi_k} l_j(s) ds`.
    int_mat: Vec<Vec<f64>>,
    /// `fwd[k][j]`: samples -> Legendre coefficient `k`.
    fwd: Vec<Vec<f64>>,
    /// Barycentric weights of the Gauss nodes.
    bary: Vec<f64>,
    nodes: Vec<f64>,
}

impl Panels {
    /// Panels from explicit breakpoints (strictly increasing) and `order`
    /// Gauss nodes per panel.
    pub fn new(breaks: Vec<f64>, order: usize) -> Result<Self> {
        if breaks.len() < 2 {
            return Err(Error::InvalidInput("need at least one panel".into()));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "panel breakpoints must be strictly increasing".into(),
            ));
        }
        if order < 2 {
            return Err(Error::InvalidInput("panel order must be >= 2".into()));
        }
        let rule = GaussLegendre::new(order);
        let n = order;
        let ptab: Vec<Vec<f64>> = rule.nodes.iter().map(|&x| legendre_table(n, x)).collect();
        let fwd: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                (0..n)
                    .map(|j| (2.0 * k as f64 + 1.0) / 2.0 * rule.weights[j] * ptab[j][k])
                    .collect()
            })
            .collect();
        // \int_{-1}^x P_0 = x + 1; \int_{-1}^x P_k = (P_{k+1} - P_{k-1}) / (2k+1).
        let int_mat: Vec<Vec<f64>> = (0..n)
            .map(|kk| {
                let p = &ptab[kk];
                let xk = rule.nodes[kk];
                let ip: Vec<f64> = (0..n)
                    .map(|m| {
                        if m == 0 {
                            xk + 1.0
                        } else {
                            (p[m + 1] - p[m - 1]) / (2.0 * m as f64 + 1.0)
                        }
                    })
                    .collect();
                (0..n)
                    .map(|j| (0..n).map(|m| fwd[m][j] * ip[m]).sum())
                    .collect()
            })
            .collect();
        let bary: Vec<f64> = (0..n)
            .map(|j| {
                let xj = rule.nodes[j];
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                s * ((1.0 - xj * xj) * rule.weights[j]).sqrt()
            })
            .collect();
        let mut nodes = Vec::with_capacity((breaks.len() - 1) * n);
        for w in breaks.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let half = 0.5 * (w[1] - w[0]);
            nodes.extend(rule.nodes.iter().map(|&x| mid + half * x));
        }
        Ok(Self {
            breaks,
            rule,
            int_mat,
            fwd,
            bary,
            nodes,
        })
    }

    pub fn order(&self) -> usize {
        self.rule.len()
    }

    pub fn n_panels(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    /// All Gauss nodes, panel by panel, increasing.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn lower(&self) -> f64 {
        self.breaks[0]
    }

    pub fn upper(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    fn half_width(&self, p: usize) -> f64 {
        0.5 * (self.breaks[p + 1] - self.breaks[p])
    }

    /// Cumulative integral from `lower()` of the sampled function.
    /// Returns the value at every node and at every breakpoint.
    pub fn cumulative(&self, values: &[f64], start: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.order();
        assert_eq!(values.len(), self.nodes.len());
        let mut at_nodes = vec![0.0; values.len()];
        let mut at_breaks = Vec::with_capacity(self.breaks.len());
        let mut acc = start;
        at_breaks.push(acc);
        for p in 0..self.n_panels() {
            let h = self.half_width(p);
            let v = &values[p * n..(p + 1) * n];
            for k in 0..n {
                let s: f64 = self.int_mat[k].iter().zip(v).map(|(a, b)| a * b).sum();
                at_nodes[p * n + k] = acc + h * s;
            }
            let total: f64 = self.rule.weights.iter().zip(v).map(|(a, b)| a * b).sum();
            acc += h * total;
            at_breaks.push(acc);
        }
        (at_nodes, at_breaks)
    }

    /// Panel containing `y` (right-closed except at the lower end).
    pub fn locate(&self, y: f64) -> Option<usize> {
        if !(y >= self.lower() && y <= self.upper()) {
            return None;
        }
        let idx = self.breaks.partition_point(|&b| b < y);
        Some(idx.saturating_sub(1).min(self.n_panels() - 1))
    }

    fn local(&self, p: usize, y: f64) -> f64 {
        let mid = 0.5 * (self.breaks[p] + self.breaks[p + 1]);
        (y - mid) / self.half_width(p)
    }

    /// Barycentric interpolation of node samples at `y`.
    pub fn interpolate(&self, values: &[f64], y: f64) -> Option<f64> {
        let p = self.locate(y)?;
        let n = self.order();
        let x = self.local(p, y);
        let v = &values[p * n..(p + 1) * n];
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..n {
            let d = x - self.rule.nodes[j];
            if d == 0.0 {
                return Some(v[j]);
            }
            let c = self.bary[j] / d;
            num += c * v[j];
            den += c;
        }
        Some(num / den)
    }

    /// Value, first and second derivative (in `y`) of the panel polynomial.
    pub fn interpolate_derivs(&self, values: &[f64], y: f64) -> Option<(f64, f64, f64)> {
        let p = self.locate(y)?;
        let n = self.order();
        let x = self.local(p, y);
        let v = &values[p * n..(p + 1) * n];
        let coef: Vec<f64> = (0..n)
            .map(|k| self.fwd[k].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect();
        let (f, d1, d2) = legendre_series_derivs(&coef, x);
        let h = self.half_width(p);
        Some((f, d1 / h, d2 / (h * h)))
    }
}

/// Breakpoints `0, y_lo` followed by `per_decade` log-spaced panels per decade
/// up to at least `y_max`, with every value of `extra` inserted.
pub fn log_breaks(y_lo: f64, y_max: f64, per_decade: usize, extra: &[f64]) -> Vec<f64> {
    let mut breaks = vec![0.0, y_lo];
    let ratio = 10f64.powf(1.0 / per_decade as f64);
    let mut k = 1i64;
    loop {
        let b = y_lo * ratio.powi(k as i32);
        // snap to exact decades so that y = 1, 10, ... are breakpoints
        let snapped = {
            let l = b.log10();
            if (l - l.round()).abs() < 1e-9 {
                10f64.powi(l.round() as i32)
            } else {
                b
            }
        };
        breaks.push(snapped);
        if snapped >= y_max {
            break;
        }
        k += 1;
    }
    for &e in extra {
        if e > y_lo && e < *breaks.last().unwrap() && !breaks.iter().any(|&b| (b - e).abs() < 1e-12 * e) {
            breaks.push(e);
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks
}
