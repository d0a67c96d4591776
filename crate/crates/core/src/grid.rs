//! Spatial grids, snapshots and the change of variables
//! `rho -> Q -> N -> u -> w`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing nodes on `[0, 1]` with geometric refinement at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedGrid {
    pub nodes: Vec<f64>,
    pub x_min: f64,
    pub grading_ratio: f64,
}

impl GradedGrid {
    /// Wrap an arbitrary node list. The grading ratio is read off the first
    /// two cells.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::Grid("need at least three nodes".into()));
        }
        if nodes[0] != 0.0 || *nodes.last().unwrap() != 1.0 {
            return Err(Error::Grid("nodes must start at 0 and end at 1".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("nodes must be strictly increasing".into()));
        }
        let x_min = nodes[1];
        let grading_ratio = (nodes[2] - nodes[1]) / nodes[1];
        Ok(Self {
            nodes,
            x_min,
            grading_ratio,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Cell widths `h_i = x_{i+1} - x_i`.
    pub fn widths(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn max_width(&self) -> f64 {
        self.widths().into_iter().fold(0.0, f64::max)
    }
}

/// Graded grid with `n` nodes: cells `x_min * ratio^k` from the origin until
/// the remaining interval can be split uniformly into cells no wider than
/// the next geometric one.
pub fn make_graded_grid(n: usize, x_min: f64, grading_ratio: f64) -> Result<GradedGrid> {
    if n < 3 {
        return Err(Error::Grid(format!("n = {n} is below the minimum of 3")));
    }
    if !(x_min > 0.0 && x_min < 1.0) {
        return Err(Error::Grid(format!("x_min = {x_min} not in (0, 1)")));
    }
    if !(grading_ratio >= 1.0) || !grading_ratio.is_finite() {
        return Err(Error::Grid(format!("grading ratio {grading_ratio} < 1")));
    }
    let cells = n - 1;
    let mut nodes = Vec::with_capacity(n);
    nodes.push(0.0);
    if grading_ratio == 1.0 {
        let rest = n - 2;
        let h = (1.0 - x_min) / rest as f64;
        nodes.push(x_min);
        for k in 1..rest {
            nodes.push(x_min + h * k as f64);
        }
        nodes.push(1.0);
        return Ok(GradedGrid {
            nodes,
            x_min,
            grading_ratio,
        });
    }
    let mut sum = 0.0;
    let mut width = x_min;
    let mut m = 0;
    loop {
        if m >= cells {
            return Err(Error::Grid(format!(
                "{n} nodes with x_min = {x_min} and ratio {grading_ratio} cannot reach x = 1"
            )));
        }
        let tail = (1.0 - sum) / (cells - m) as f64;
        if tail <= width && m >= 1 {
            break;
        }
        sum += width;
        if sum >= 1.0 {
            return Err(Error::Grid(format!(
                "geometric cells overshoot x = 1 after {} cells",
                m + 1
            )));
        }
        nodes.push(sum);
        width *= grading_ratio;
        m += 1;
    }
    let start = sum;
    let tail_cells = cells - m;
    let h = (1.0 - start) / tail_cells as f64;
    for k in 1..tail_cells {
        nodes.push(start + h * k as f64);
    }
    nodes.push(1.0);
    Ok(GradedGrid {
        nodes,
        x_min,
        grading_ratio,
    })
}

/// Values of `u` on a grid at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub grid: GradedGrid,
    pub values: Vec<f64>,
    pub time: f64,
    pub left_bc: f64,
    pub right_bc: f64,
}

impl Snapshot {
    /// Boundary data is read from the end values.
    pub fn new(grid: GradedGrid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite snapshot value".into()));
        }
        let left_bc = values[0];
        let right_bc = *values.last().unwrap();
        Ok(Self {
            grid,
            values,
            time,
            left_bc,
            right_bc,
        })
    }

    /// Sample `u` at the grid nodes.
    pub fn from_fn(grid: GradedGrid, time: f64, u: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes.iter().map(|&x| u(x)).collect();
        Self::new(grid, values, time)
    }

    pub fn x(&self) -> &[f64] {
        &self.grid.nodes
    }

    /// Largest violation of `0 <= u <= right_bc` (0 when the bounds hold).
    pub fn bound_violation(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| (-v).max(v - self.right_bc).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Largest decrease between neighbouring nodes (0 when monotone).
    pub fn monotonicity_violation(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| (w[0] - w[1]).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,value")?;
        for (x, v) in self.grid.nodes.iter().zip(&self.values) {
            writeln!(out, "{x:.16e},{v:.16e}")?;
        }
        Ok(())
    }

    /// Read a two-column CSV written by [`Snapshot::write_csv`].
    pub fn read_csv<R: BufRead>(input: R, time: f64) -> Result<Self> {
        let (x, v) = read_two_columns(input)?;
        Self::new(GradedGrid::from_nodes(x)?, v, time)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&SnapshotRecord::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: SnapshotRecord = serde_json::from_str(s)?;
        let snap = Self::new(rec.grid, rec.values, rec.time)?;
        if snap.left_bc != rec.bc[0] || snap.right_bc != rec.bc[1] {
            return Err(Error::Parse("boundary record disagrees with values".into()));
        }
        Ok(snap)
    }
}

#[derive(Serialize, Deserialize)]
struct SnapshotRecord {
    grid: GradedGrid,
    values: Vec<f64>,
    time: f64,
    bc: [f64; 2],
}

impl From<&Snapshot> for SnapshotRecord {
    fn from(s: &Snapshot) -> Self {
        Self {
            grid: s.grid.clone(),
            values: s.values.clone(),
            time: s.time,
            bc: [s.left_bc, s.right_bc],
        }
    }
}

pub(crate) fn read_two_columns<R: BufRead>(input: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.ok_or_else(|| Error::Parse(format!("line {}: missing column", lineno + 1)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
        };
        xs.push(parse(it.next())?);
        vs.push(parse(it.next())?);
    }
    Ok((xs, vs))
}

/// A radial profile on `[0, R]`: a density `rho` or the mean density `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialField {
    pub r_nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub total_mass: f64,
}

impl RadialField {
    /// A density; the mass `2 pi int s rho ds` is computed by the trapezoid rule.
    pub fn from_density(r_nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        validate_radial(&r_nodes, &values)?;
        let q = cumulative_mass(&r_nodes, &values);
        let total_mass = *q.last().unwrap();
        Ok(Self {
            r_nodes,
            values,
            total_mass,
        })
    }

    /// A mean-density field `w = Q(r) / (pi r^2)`, so the mass is `pi R^2 w(R)`.
    pub fn from_mean_density(r_nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        validate_radial(&r_nodes, &values)?;
        let r = *r_nodes.last().unwrap();
        let total_mass = PI * r * r * values.last().unwrap();
        Ok(Self {
            r_nodes,
            values,
            total_mass,
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "r,value")?;
        for (r, v) in self.r_nodes.iter().zip(&self.values) {
            writeln!(out, "{r:.16e},{v:.16e}")?;
        }
        Ok(())
    }
}

fn validate_radial(r: &[f64], v: &[f64]) -> Result<()> {
    if r.len() != v.len() || r.len() < 2 {
        return Err(Error::InvalidInput("radial field needs matching r and values".into()));
    }
    if r[0] != 0.0 || r.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("r nodes must start at 0 and increase".into()));
    }
    if let Some(bad) = v.iter().find(|&&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidInput(format!("negative or non-finite entry {bad}")));
    }
    Ok(())
}

fn cumulative_mass(r: &[f64], rho: &[f64]) -> Vec<f64> {
    let mut q = Vec::with_capacity(r.len());
    q.push(0.0);
    for i in 1..r.len() {
        let step = PI * (r[i] - r[i - 1]) * (r[i] * rho[i] + r[i - 1] * rho[i - 1]);
        q.push(q[i - 1] + step);
    }
    q
}

/// A tabulated scalar function of one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionTable {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
}

/// `Q(r) = 2 pi int_0^r s rho(s) ds` by the trapezoid rule on the given nodes.
pub fn q_from_rho(rho: &RadialField) -> Result<FunctionTable> {
    validate_radial(&rho.r_nodes, &rho.values)?;
    Ok(FunctionTable {
        x: rho.r_nodes.clone(),
        values: cumulative_mass(&rho.r_nodes, &rho.values),
    })
}

/// Richardson estimate of the trapezoid error in the total mass, from the
/// rule on all nodes against the rule on every other node.
pub fn mass_richardson_error(rho: &RadialField) -> f64 {
    let n = rho.r_nodes.len();
    if n < 3 {
        return f64::NAN;
    }
    let fine = cumulative_mass(&rho.r_nodes, &rho.values);
    let idx: Vec<usize> = (0..n).step_by(2).chain(if (n - 1) % 2 == 1 { Some(n - 1) } else { None }).collect();
    let r: Vec<f64> = idx.iter().map(|&i| rho.r_nodes[i]).collect();
    let v: Vec<f64> = idx.iter().map(|&i| rho.values[i]).collect();
    let coarse = cumulative_mass(&r, &v);
    (fine.last().unwrap() - coarse.last().unwrap()) / 3.0
}

/// Rescale `Q` on `[0, R]` to the unit disc: `Q(R s)` on `s in [0, 1]`.
pub fn normalize_radius(q: &FunctionTable) -> FunctionTable {
    let r = *q.x.last().unwrap();
    FunctionTable {
        x: q.x.iter().map(|&s| s / r).collect(),
        values: q.values.clone(),
    }
}

/// `N(x) = Q(sqrt x)`: the nodes move to `x = r^2`.
pub fn n_from_q(q: &FunctionTable) -> Result<FunctionTable> {
    if q.x.first() != Some(&0.0) || q.x.last() != Some(&1.0) {
        return Err(Error::InvalidInput(
            "Q must be tabulated on [0, 1]; normalize the radius first".into(),
        ));
    }
    if q.x.len() != q.values.len() {
        return Err(Error::InvalidInput("length mismatch".into()));
    }
    Ok(FunctionTable {
        x: q.x.iter().map(|r| r * r).collect(),
        values: q.values.clone(),
    })
}

/// `u(x, t) = N(x, 4t) / (8 pi)`; `t_n` is the time of `N`, the snapshot time is `t_n / 4`.
pub fn u_from_n(n: &FunctionTable, t_n: f64) -> Result<Snapshot> {
    let grid = GradedGrid::from_nodes(n.x.clone())?;
    let values = n.values.iter().map(|v| v / (8.0 * PI)).collect();
    Snapshot::new(grid, values, t_n / 4.0)
}

/// Inverse of [`u_from_n`]: returns `N` and its time `4 t`.
pub fn n_from_u(u: &Snapshot) -> (FunctionTable, f64) {
    (
        FunctionTable {
            x: u.grid.nodes.clone(),
            values: u.values.iter().map(|v| 8.0 * PI * v).collect(),
        },
        4.0 * u.time,
    )
}

/// `w(r) = 8 u(r^2) / r^2` on `r = sqrt x`, with `w(0) = 8 u_x(0)` from the
/// fitted slope at the origin.
pub fn w_from_u(u: &Snapshot) -> Result<RadialField> {
    if u.values[0] != 0.0 {
        return Err(Error::DegenerateSlope(format!("u(0) = {} != 0", u.values[0])));
    }
    let slope = crate::solver::slope_origin(u)
        .map_err(|e| Error::DegenerateSlope(e.to_string()))?
        .slope;
    if !slope.is_finite() {
        return Err(Error::DegenerateSlope("slope estimate is not finite".into()));
    }
    let r: Vec<f64> = u.x().iter().map(|x| x.sqrt()).collect();
    let mut w = Vec::with_capacity(r.len());
    w.push(8.0 * slope);
    for (x, v) in u.x().iter().zip(&u.values).skip(1) {
        w.push(8.0 * v / x);
    }
    RadialField::from_mean_density(r, w)
}

/// Monotone piecewise-cubic Hermite interpolation of the snapshot at `x`.
pub fn interp(snapshot: &Snapshot, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfRange {
            value: x,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let slopes = pchip_slopes(snapshot.x(), &snapshot.values);
    Ok(pchip_eval(snapshot.x(), &snapshot.values, &slopes, x))
}

/// Derivative estimates at the nodes (Fritsch-Butland weighted harmonic
/// mean, one-sided three-point formula at the ends).
pub fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = del[0];
        d[1] = del[0];
        return d;
    }
    for i in 1..n - 1 {
        if del[i - 1] * del[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
        }
    }
    d[0] = end_slope(h[0], h[1], del[0], del[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    d
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d * del0 <= 0.0 {
        0.0
    } else if del0 * del1 <= 0.0 && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

pub fn pchip_eval(x: &[f64], y: &[f64], d: &[f64], q: f64) -> f64 {
    let i = x.partition_point(|&v| v <= q).clamp(1, x.len() - 1) - 1;
    let h = x[i + 1] - x[i];
    let s = (q - x[i]) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y[i] + h10 * h * d[i] + h01 * y[i + 1] + h11 * h * d[i + 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn u_a(a: f64) -> impl Fn(f64) -> f64 {
        move |x| a * x / (a * x + 1.0)
    }

    #[test]
    fn small_doubling_grid() {
        let g = make_graded_grid(11, 1e-3, 2.0).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g.nodes[0], 0.0);
        assert_eq!(g.nodes[1], 1e-3);
        assert_eq!(*g.nodes.last().unwrap(), 1.0);
        let h = g.widths();
        for k in 1..8 {
            assert!((h[k] / h[k - 1] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_request() {
        let g = make_graded_grid(12, 0.1, 1.0).unwrap();
        let h = g.widths();
        assert_eq!(g.nodes[1], 0.1);
        for w in &h[1..] {
            assert!((w - 0.09).abs() < 1e-12);
        }
    }

    #[test]
    fn long_run_grid_resolves_layer() {
        let g = make_graded_grid(400, 1e-12, 1.07).unwrap();
        let a50 = crate::closed_a(50.0);
        assert!(g.x_min * a50 < 1e-3);
        // dozens of nodes inside the layer x < 1/A(50)
        let inside = g.nodes.iter().filter(|&&x| x > 0.0 && x < 1.0 / a50).count();
        assert!(inside > 50, "{inside}");
        assert!(g.nodes.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn infeasible_grid_is_rejected() {
        // geometric cells never reach the point where a uniform tail fits
        assert!(make_graded_grid(5, 1e-9, 1.01).is_err());
        assert!(make_graded_grid(10, 0.0, 2.0).is_err());
        assert!(make_graded_grid(10, 0.1, 0.5).is_err());
    }

    #[test]
    fn q_of_constant_and_zero_density() {
        let r: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let zero = RadialField::from_density(r.clone(), vec![0.0; 101]).unwrap();
        assert!(q_from_rho(&zero).unwrap().values.iter().all(|&q| q == 0.0));
        let one = RadialField::from_density(r.clone(), vec![1.0 / PI; 101]).unwrap();
        let q = q_from_rho(&one).unwrap();
        for (s, v) in r.iter().zip(&q.values) {
            // trapezoid is exact for the linear integrand 2 s
            assert!((v - s * s).abs() < 1e-14);
        }
        assert!(RadialField::from_density(r, vec![-1.0; 101]).is_err());
    }

    #[test]
    fn steady_density_chain_reproduces_u_a() {
        let a = 7.0;
        let g = make_graded_grid(2001, 1e-6, 1.01).unwrap();
        let r: Vec<f64> = g.nodes.iter().map(|x| x.sqrt()).collect();
        let rho: Vec<f64> = r.iter().map(|s| 8.0 * a / (a * s * s + 1.0).powi(2)).collect();
        let field = RadialField::from_density(r.clone(), rho).unwrap();
        let q = q_from_rho(&field).unwrap();
        let expect_q = |s: f64| 8.0 * PI * a * s * s / (a * s * s + 1.0);
        let qerr = q
            .x
            .iter()
            .zip(&q.values)
            .map(|(&s, &v)| (v - expect_q(s)).abs())
            .fold(0.0, f64::max);
        let rich = mass_richardson_error(&field).abs();
        assert!(qerr < 1e-4, "{qerr}");
        assert!(rich < 1e-3 && rich > 0.0);
        let n = n_from_q(&normalize_radius(&q)).unwrap();
        let u = u_from_n(&n, 8.0).unwrap();
        assert_eq!(u.time, 2.0);
        let err = u
            .x()
            .iter()
            .zip(&u.values)
            .map(|(&x, &v)| (v - u_a(a)(x)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn n_from_q_substitution() {
        let a = 3.0;
        let r: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let q = FunctionTable {
            x: r.clone(),
            values: r.iter().map(|s| 8.0 * PI * a * s * s / (a * s * s + 1.0)).collect(),
        };
        let n = n_from_q(&q).unwrap();
        for (x, v) in n.x.iter().zip(&n.values) {
            assert!((v - 8.0 * PI * a * x / (a * x + 1.0)).abs() < 1e-12);
        }
        let lam = FunctionTable {
            x: r.clone(),
            values: vec![5.0; 51],
        };
        assert!(n_from_q(&lam).unwrap().values.iter().all(|&v| v == 5.0));
        let sq = FunctionTable {
            x: r.clone(),
            values: r.iter().map(|s| s * s).collect(),
        };
        let n = n_from_q(&sq).unwrap();
        for (x, v) in n.x.iter().zip(&n.values) {
            assert!((v - x).abs() < 1e-15);
        }
    }

    #[test]
    fn u_n_round_trip_and_singular_state() {
        let g = make_graded_grid(40, 1e-3, 1.2).unwrap();
        let n = FunctionTable {
            x: g.nodes.clone(),
            values: vec![8.0 * PI; g.len()],
        };
        let u = u_from_n(&n, 1.0).unwrap();
        assert!(u.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let s = Snapshot::from_fn(g, 0.3, u_a(4.0)).unwrap();
        let (nn, tn) = n_from_u(&s);
        let back = u_from_n(&nn, tn).unwrap();
        for (p, q) in back.values.iter().zip(&s.values) {
            assert!((p - q).abs() <= 4.0 * f64::EPSILON * q.abs());
        }
        assert_eq!(back.time, 0.3);
    }

    #[test]
    fn w_transform_examples() {
        let g = make_graded_grid(300, 1e-6, 1.05).unwrap();
        let lin = Snapshot::from_fn(g.clone(), 0.0, |x| x).unwrap();
        let w = w_from_u(&lin).unwrap();
        assert!((w.values[0] - 8.0).abs() < 1e-4);
        assert!(w.values[1..].iter().all(|&v| (v - 8.0).abs() < 1e-13));
        assert!((w.total_mass - 8.0 * PI).abs() < 1e-12);

        let a = 20.0;
        let ua = Snapshot::from_fn(g.clone(), 0.0, u_a(a)).unwrap();
        let w = w_from_u(&ua).unwrap();
        for (r, v) in w.r_nodes.iter().zip(&w.values) {
            let exact = 8.0 * a / (a * r * r + 1.0);
            assert!((v - exact).abs() < 1e-6 * exact, "{r} {v} {exact}");
        }

        let one = Snapshot::from_fn(g, 0.0, |x| if x == 0.0 { 0.0 } else { 1.0 }).unwrap();
        assert!(matches!(w_from_u(&one), Err(Error::DegenerateSlope(_))));
    }

    #[test]
    fn interp_examples() {
        let g = make_graded_grid(60, 1e-3, 1.15).unwrap();
        let lin = Snapshot::from_fn(g.clone(), 0.0, |x| 0.7 * x).unwrap();
        for q in [0.0, 1e-4, 0.3333, 0.9, 1.0] {
            assert!((interp(&lin, q).unwrap() - 0.7 * q).abs() < 1e-15);
        }
        for (x, v) in lin.x().iter().zip(&lin.values) {
            assert_eq!(interp(&lin, *x).unwrap(), *v);
        }
        assert!(interp(&lin, 1.5).is_err());
        assert!(interp(&lin, -0.1).is_err());
    }

    #[test]
    fn interp_third_order_on_u_a() {
        let a = 5.0;
        let f = u_a(a);
        let mut errs = Vec::new();
        for n in [41usize, 81, 161, 321] {
            let nodes: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            let s = Snapshot::new(
                GradedGrid::from_nodes(nodes.clone()).unwrap(),
                nodes.iter().map(|&x| f(x)).collect(),
                0.0,
            )
            .unwrap();
            let e = nodes
                .windows(2)
                .map(|w| {
                    let m = 0.5 * (w[0] + w[1]);
                    (interp(&s, m).unwrap() - f(m)).abs()
                })
                .fold(0.0, f64::max);
            errs.push(e);
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 2.6, "{errs:?}");
        }
    }

    #[test]
    fn csv_and_json_round_trip_bit_exact() {
        let g = make_graded_grid(60, 1e-7, 1.3).unwrap();
        let s = Snapshot::from_fn(g, 1.0 / 3.0, |x| (1.0 + x).ln() / 2f64.ln()).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = Snapshot::read_csv(&buf[..], s.time).unwrap();
        assert_eq!(back.values, s.values);
        assert_eq!(back.grid.nodes, s.grid.nodes);
        let js = s.to_json().unwrap();
        let back = Snapshot::from_json(&js).unwrap();
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn q_is_nondecreasing(vals in proptest::collection::vec(0.0f64..10.0, 2..60)) {
            let n = vals.len();
            let r: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            let field = RadialField::from_density(r, vals).unwrap();
            let q = q_from_rho(&field).unwrap();
            prop_assert!(q.values.windows(2).all(|w| w[1] >= w[0]));
            prop_assert!((q.values.last().unwrap() - field.total_mass).abs() <= 1e-12 * field.total_mass.max(1.0));
        }

        #[test]
        fn interp_preserves_monotonicity_and_bounds(
            incs in proptest::collection::vec(0.0f64..1.0, 4..40),
            probes in proptest::collection::vec(0.0f64..1.0, 50),
        ) {
            let total: f64 = incs.iter().sum::<f64>() + 1e-9;
            let n = incs.len() + 1;
            let mut vals = vec![0.0];
            for d in &incs { vals.push(vals.last().unwrap() + d / total); }
            *vals.last_mut().unwrap() = 1.0;
            let x: Vec<f64> = (0..n).map(|i| (i as f64 / (n - 1) as f64).powi(2)).collect();
            let s = Snapshot::new(GradedGrid::from_nodes(x).unwrap(), vals, 0.0).unwrap();
            let mut p = probes.clone();
            p.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let v: Vec<f64> = p.iter().map(|&q| interp(&s, q).unwrap()).collect();
            prop_assert!(v.windows(2).all(|w| w[1] >= w[0] - 1e-15));
            prop_assert!(v.iter().all(|&z| (-1e-15..=1.0 + 1e-15).contains(&z)));
        }

        #[test]
        fn graded_grid_invariants(n in 16usize..800, lx in -12.0f64..-2.0, ratio in 1.0f64..1.5) {
            let x_min = 10f64.powf(lx);
            if let Ok(g) = make_graded_grid(n, x_min, ratio) {
                prop_assert_eq!(g.len(), n);
                prop_assert_eq!(g.nodes[0], 0.0);
                prop_assert_eq!(*g.nodes.last().unwrap(), 1.0);
                prop_assert!(g.nodes.windows(2).all(|w| w[1] > w[0]));
                let h = g.widths();
                prop_assert!((h[0] - x_min).abs() <= 1e-15 * x_min);
                prop_assert!(h.windows(2).all(|w| w[1] <= w[0] * ratio * (1.0 + 1e-9)));
            }
        }
    }
}
