//! Uniform grids with homogeneous Dirichlet boundaries, space-time fields,
//! quadrature norms and smooth cutoffs.

use crate::error::{Error, Result};
use crate::heat::Scalar;

/// Open interval `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn contains_closed(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Interior nodes `x_i = i·dx`, `i = 1..=nx`, of `(0, L)` with `dx = L/(nx+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    length: f64,
    nx: usize,
}

impl SpatialGrid {
    pub fn new(length: f64, nx: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::config("L", "length must be positive and finite"));
        }
        if nx < 3 {
            return Err(Error::config(
                "nx",
                "at least 3 interior nodes are required",
            ));
        }
        Ok(Self { length, nx })
    }

    pub fn unit(nx: usize) -> Result<Self> {
        Self::new(1.0, nx)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dx(&self) -> f64 {
        self.length / (self.nx + 1) as f64
    }

    /// Coordinate of the stored node `i` (0-based), i.e. `(i+1)·dx`.
    pub fn x(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    /// Quadrature weight of node `i`. The two boundary-adjacent nodes also
    /// carry the outer half cell, so the rule integrates constants exactly.
    pub fn weight(&self, i: usize) -> f64 {
        let dx = self.dx();
        if i == 0 || i + 1 == self.nx {
            1.5 * dx
        } else {
            dx
        }
    }

    /// Samples `f` on the interior nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.nx).map(|i| f(self.x(i))).collect()
    }
}

/// Time nodes `t_j = t0 + j·dt`, `j = 0..=nt`, `dt = T/nt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    nt: usize,
    start: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, nt: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config("T", "horizon must be positive and finite"));
        }
        if nt < 4 || nt % 2 != 0 {
            return Err(Error::config(
                "nt",
                format!("must be even and at least 4, got {nt}"),
            ));
        }
        Ok(Self {
            horizon,
            nt,
            start: 0.0,
        })
    }

    /// Grid over one half of the horizon. `second` selects `(T/2, T)`.
    /// The half grid may have an odd number of steps.
    pub fn half(&self, second: bool) -> TimeGrid {
        let h = 0.5 * self.horizon;
        TimeGrid {
            horizon: h,
            nt: self.nt / 2,
            start: if second { self.start + h } else { self.start },
        }
    }

    /// Length of this grid's interval.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    /// Absolute time of node `j`.
    pub fn t(&self, j: usize) -> f64 {
        self.start + j as f64 * self.dt()
    }

    /// Time of node `j` measured from the start of this grid.
    pub fn local_t(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    /// Trapezoid weight of node `j`.
    pub fn weight(&self, j: usize) -> f64 {
        let dt = self.dt();
        if j == 0 || j == self.nt {
            0.5 * dt
        } else {
            dt
        }
    }
}

/// Space and time grids of one problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grids {
    pub space: SpatialGrid,
    pub time: TimeGrid,
}

impl Grids {
    pub fn new(space: SpatialGrid, time: TimeGrid) -> Self {
        Self { space, time }
    }

    pub fn half(&self, second: bool) -> Grids {
        Grids {
            space: self.space,
            time: self.time.half(second),
        }
    }

    pub fn nx(&self) -> usize {
        self.space.nx()
    }

    pub fn nt(&self) -> usize {
        self.time.nt()
    }

    pub fn zeros<S: Scalar>(&self) -> SpaceTimeField<S> {
        SpaceTimeField::zeros(self.nt() + 1, self.nx())
    }
}

/// Values on `(nt+1)` time nodes × `nx` interior space nodes, row-major in time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField<S = f64> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

pub type RealField = SpaceTimeField<f64>;
pub type ComplexField = SpaceTimeField<num_complex::Complex64>;

impl<S: Scalar> SpaceTimeField<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..rows {
            for i in 0..cols {
                data.push(f(j, i));
            }
        }
        Self { rows, cols, data }
    }

    /// Number of time nodes.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of space nodes.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn row(&self, j: usize) -> &[S] {
        &self.data[j * self.cols..(j + 1) * self.cols]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [S] {
        &mut self.data[j * self.cols..(j + 1) * self.cols]
    }

    pub fn get(&self, j: usize, i: usize) -> S {
        self.data[j * self.cols + i]
    }

    pub fn set(&mut self, j: usize, i: usize, v: S) {
        self.data[j * self.cols + i] = v;
    }

    pub fn last_row(&self) -> &[S] {
        self.row(self.rows - 1)
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> SpaceTimeField<T> {
        SpaceTimeField {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map<T: Scalar, U: Scalar>(
        &self,
        other: &SpaceTimeField<T>,
        f: impl Fn(S, T) -> U,
    ) -> SpaceTimeField<U> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        SpaceTimeField {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.modulus()))
    }

    /// Rows `from..=to` as a new field.
    pub fn rows_range(&self, from: usize, to: usize) -> Self {
        Self {
            rows: to - from + 1,
            cols: self.cols,
            data: self.data[from * self.cols..(to + 1) * self.cols].to_vec(),
        }
    }

    /// Joins two fields sharing the boundary row: `self`'s last row is kept.
    pub fn concat(&self, next: &Self) -> Self {
        assert_eq!(self.cols, next.cols);
        let mut data = self.data.clone();
        data.extend_from_slice(&next.data[next.cols..]);
        Self {
            rows: self.rows + next.rows - 1,
            cols: self.cols,
            data,
        }
    }

    pub fn check_shape(&self, grids: &Grids) -> Result<()> {
        if self.rows != grids.nt() + 1 || self.cols != grids.nx() {
            return Err(Error::shape(
                format!("{}x{}", grids.nt() + 1, grids.nx()),
                format!("{}x{}", self.rows, self.cols),
            ));
        }
        Ok(())
    }
}

impl SpaceTimeField<f64> {
    pub fn to_complex(&self) -> ComplexField {
        self.map(num_complex::Complex64::from)
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Domain(format!(
            "norm exponent must be at least 1, got {p}"
        )));
    }
    Ok(())
}

/// Discrete `L^p(Q_T)` norm by trapezoid quadrature in both variables.
pub fn lp_norm<S: Scalar>(field: &SpaceTimeField<S>, grids: &Grids, p: f64) -> Result<f64> {
    check_exponent(p)?;
    field.check_shape(grids)?;
    if p.is_infinite() {
        return Ok(field.max_abs());
    }
    let scale = field.max_abs();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for j in 0..field.rows() {
        let wt = grids.time.weight(j);
        let mut row = 0.0;
        for (i, v) in field.row(j).iter().enumerate() {
            row += grids.space.weight(i) * (v.modulus() / scale).powf(p);
        }
        acc += wt * row;
    }
    Ok(scale * acc.powf(1.0 / p))
}

/// Discrete `L^p(Ω)` norm of a space field.
pub fn space_lp_norm<S: Scalar>(values: &[S], space: &SpatialGrid, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.modulus()));
    if p.is_infinite() || scale == 0.0 {
        return Ok(scale);
    }
    let acc: f64 = values
        .iter()
        .enumerate()
        .map(|(i, v)| space.weight(i) * (v.modulus() / scale).powf(p))
        .sum();
    Ok(scale * acc.powf(1.0 / p))
}

/// `(∫∫ exp(q·w) |f|^q)^{1/q}` where `w = weight_log`.
///
/// The exponent `q·w + q·ln|f|` is clamped at −700; nodes where `f = 0` add
/// nothing even where the weight is infinite.
pub fn weighted_lq_norm<S: Scalar>(
    field: &SpaceTimeField<S>,
    weight_log: &RealField,
    grids: &Grids,
    q: f64,
) -> Result<f64> {
    check_exponent(q)?;
    field.check_shape(grids)?;
    weight_log.check_shape(grids)?;
    if q.is_infinite() {
        return Err(Error::Domain(
            "weighted norm needs a finite exponent".into(),
        ));
    }
    let mut logs = Vec::with_capacity(field.data().len());
    for j in 0..field.rows() {
        let lt = grids.time.weight(j).ln();
        for i in 0..field.cols() {
            let a = field.get(j, i).modulus();
            if a == 0.0 {
                continue;
            }
            logs.push(lt + grids.space.weight(i).ln() + q * (weight_log.get(j, i) + a.ln()));
        }
    }
    Ok((log_sum_exp(&logs) / q).exp())
}

/// `ln Σ exp(v)` with the clamp at −700 applied after shifting by the max.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = values.iter().map(|&v| clamped_exp(v - m)).sum();
    m + s.ln()
}

/// `exp(x)` with `x` clamped at −700, below which the result is exactly 0.
#[inline]
pub fn clamped_exp(x: f64) -> f64 {
    if x < -700.0 {
        0.0
    } else {
        x.exp()
    }
}

/// Smooth plateau function: `χ = σ^r`, 1 on `ω₁`, 0 outside `ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cutoff {
    pub sigma: Vec<f64>,
    pub power: u32,
    pub chi: Vec<f64>,
    pub support: Interval,
}

/// Degree-7 smoothstep, `C³` at both ends.
pub(crate) fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let t4 = t * t * t * t;
        t4 * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t)))
    }
}

/// Plateau equal to 1 on `inner` and vanishing at or beyond `lo`/`hi`.
pub(crate) fn plateau(x: f64, lo: f64, inner: Interval, hi: f64) -> f64 {
    if x <= lo || x >= hi {
        0.0
    } else if x < inner.lo {
        smoothstep((x - lo) / (inner.lo - lo))
    } else if x > inner.hi {
        smoothstep((hi - x) / (hi - inner.hi))
    } else {
        1.0
    }
}

/// Builds `χ = σ^r` with `σ` rising from zero one cell inside `ω` to one on `ω₁`.
///
/// Nonzero values stay a full cell away from `∂ω`, so three-point stencils
/// applied to functions carrying `χ` never reach outside `ω`.
pub fn make_cutoff(
    grid: &SpatialGrid,
    omega: Interval,
    omega1: Interval,
    r: u32,
) -> Result<Cutoff> {
    if r == 0 {
        return Err(Error::config("r", "cutoff power must be at least 1"));
    }
    if !(omega.lo > 0.0 && omega.hi < grid.length() && omega.lo < omega.hi) {
        return Err(Error::config("omega", "must lie strictly inside (0, L)"));
    }
    if omega1.lo >= omega1.hi {
        return Err(Error::config("omega1", "empty interval"));
    }
    let dx = grid.dx();
    let tol = 1e-12 * dx;
    if omega1.lo - omega.lo < 2.0 * dx - tol {
        return Err(Error::config(
            "omega1",
            "left margin inside omega is smaller than 2 grid cells",
        ));
    }
    if omega.hi - omega1.hi < 2.0 * dx - tol {
        return Err(Error::config(
            "omega1",
            "right margin inside omega is smaller than 2 grid cells",
        ));
    }
    let lo = omega.lo + dx;
    let hi = omega.hi - dx;
    let sigma = grid.sample(|x| plateau(x, lo, omega1, hi));
    let chi = sigma.iter().map(|&s| s.powi(r as i32)).collect();
    Ok(Cutoff {
        sigma,
        power: r,
        chi,
        support: Interval::new(lo, hi),
    })
}
