//! Reference trajectory from rest to rest for
//! `∂t u − Δu = f₁(u,v) + 1_ω h`, `∂t v − Δv = g₁(u)g₂(v)`.
//!
//! On `(0, T/2)` the `u`-component is a prescribed bump of height `ε` and `v`
//! is obtained by a Picard iteration. On `(T/2, T)` a penalized solve for `v`
//! produces a source `H` that is an exact odd power, and `u` is recovered
//! from `g₁(u)g₂(v) = H` through the factorization `g₁ = g̃₁^{2k+1}`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::carleman::WeightSystem;
use crate::error::{Error, Result};
use crate::grid::{make_cutoff, plateau, Grids, Interval, RealField, SpaceTimeField};
use crate::heat::{HeatSolver, ParabolicOperator, Scheme};
use crate::powers::signed_root;
use crate::rum::{solve_rum, RumOptions, RumProblem};

type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Dense polynomial `Σ c_j x^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// `c·x^d`.
    pub fn monomial(c: f64, d: usize) -> Self {
        let mut coeffs = vec![0.0; d + 1];
        coeffs[d] = c;
        Self { coeffs }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, &c)| j as f64 * c)
                .collect(),
        }
    }

    pub fn nth_derivative(&self, n: usize) -> Self {
        (0..n).fold(self.clone(), |p, _| p.derivative())
    }
}

/// `f₁`, `g₁`, `g₂` and the odd order `2k+1` at which `g₁` first becomes nonzero.
#[derive(Clone)]
pub struct NonlinearitySpec {
    pub name: String,
    pub k: u32,
    f1: Fn2,
    g1: Fn1,
    g2: Fn1,
    /// `g₁^{(2k+1)}`, exact when supplied, else a Richardson estimate.
    g1_top: Fn1,
    pub derivative_supplied: bool,
    /// `g₁^{(2k+1)}(0)`.
    pub top_derivative_at_zero: f64,
    pub g2_at_zero: f64,
    /// Half-width of the certified neighbourhood `(−a, a)`.
    pub radius: f64,
}

impl fmt::Debug for NonlinearitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearitySpec")
            .field("name", &self.name)
            .field("k", &self.k)
            .field("derivative_supplied", &self.derivative_supplied)
            .field("top_derivative_at_zero", &self.top_derivative_at_zero)
            .field("g2_at_zero", &self.g2_at_zero)
            .field("radius", &self.radius)
            .finish()
    }
}

/// Names accepted by [`NonlinearitySpec::builtin`].
pub const CATALOG: [&str; 3] = ["cubic", "cubic-plus-quintic", "reaction-2k1"];

impl NonlinearitySpec {
    /// Checks the hypotheses and certifies the neighbourhood.
    ///
    /// `g1_top` is `g₁^{(2k+1)}`; when absent it is estimated by
    /// Richardson-extrapolated central differences.
    pub fn new(
        name: impl Into<String>,
        k: u32,
        f1: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        g1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g2: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g1_top: Option<Fn1>,
    ) -> Result<Self> {
        let g1: Fn1 = Arc::new(g1);
        let derivative_supplied = g1_top.is_some();
        let top = g1_top.unwrap_or_else(|| {
            let g = g1.clone();
            let order = 2 * k as usize + 1;
            Arc::new(move |x| richardson_derivative(&*g, x, order, 1e-2))
        });
        let mut spec = Self {
            name: name.into(),
            k,
            f1: Arc::new(f1),
            g2: Arc::new(g2),
            top_derivative_at_zero: top(0.0),
            g1_top: top,
            g1,
            derivative_supplied,
            g2_at_zero: 0.0,
            radius: 0.0,
        };
        spec.g2_at_zero = (spec.g2)(0.0);
        spec.check_hypotheses()?;
        spec.radius = spec.certify_radius()?;
        Ok(spec)
    }

    /// `f₁(u,v) = p(u)`, `g₁`, `g₂` polynomial; derivatives are exact.
    pub fn polynomial(
        name: impl Into<String>,
        k: u32,
        f1: Polynomial,
        g1: Polynomial,
        g2: Polynomial,
    ) -> Result<Self> {
        let top = g1.nth_derivative(2 * k as usize + 1);
        Self::new(
            name,
            k,
            move |u, _| f1.eval(u),
            move |u| g1.eval(u),
            move |v| g2.eval(v),
            Some(Arc::new(move |x| top.eval(x))),
        )
    }

    /// One of [`CATALOG`]; `k` is used by `reaction-2k1` only.
    pub fn builtin(name: &str, k: u32) -> Result<Self> {
        let one = Polynomial::new(vec![1.0]);
        let zero = Polynomial::new(vec![0.0]);
        match name {
            "cubic" => Self::polynomial(name, 1, zero, Polynomial::monomial(1.0, 3), one),
            "cubic-plus-quintic" => Self::polynomial(
                name,
                1,
                zero,
                Polynomial::new(vec![0.0, 0.0, 0.0, 1.0, 0.0, 1.0]),
                one,
            ),
            "reaction-2k1" => {
                if k == 0 {
                    return Err(Error::config("k", "must be at least 1"));
                }
                let d = 2 * k as usize + 1;
                Self::polynomial(
                    name,
                    k,
                    Polynomial::monomial(-1.0, d),
                    Polynomial::monomial(1.0, d),
                    one,
                )
            }
            _ => Err(Error::config(
                "nonlinearity",
                format!("unknown name {name:?}; expected one of {CATALOG:?}"),
            )),
        }
    }

    pub fn f1(&self, u: f64, v: f64) -> f64 {
        (self.f1)(u, v)
    }

    pub fn g1(&self, u: f64) -> f64 {
        (self.g1)(u)
    }

    pub fn g2(&self, v: f64) -> f64 {
        (self.g2)(v)
    }

    /// `f₂(u,v) = g₁(u)g₂(v)`.
    pub fn f2(&self, u: f64, v: f64) -> f64 {
        self.g1(u) * self.g2(v)
    }

    /// `2k+1`.
    pub fn order(&self) -> u32 {
        2 * self.k + 1
    }

    fn check_hypotheses(&self) -> Result<()> {
        for j in 0..=40 {
            let v = -2.0 + 0.1 * j as f64;
            let value = self.f1(0.0, v);
            if value != 0.0 {
                return Err(Error::config(
                    "f1",
                    format!("f1(0, {v}) = {value:e}, must vanish"),
                ));
            }
        }
        if !(self.g2_at_zero.abs() > 0.0) {
            return Err(Error::config("g2", "g2(0) must be nonzero"));
        }
        let scale = self.top_derivative_at_zero.abs();
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::config(
                "g1",
                format!("derivative of order {} vanishes at 0", self.order()),
            ));
        }
        let g = &*self.g1;
        for order in 0..self.order() as usize {
            let d = if order == 0 {
                g(0.0)
            } else {
                richardson_derivative(g, 0.0, order, 1e-2)
            };
            if d.abs() > 1e-6 * scale.max(1.0) {
                return Err(Error::config(
                    "g1",
                    format!("derivative of order {order} at 0 is {d:e}, must vanish"),
                ));
            }
        }
        Ok(())
    }

    /// Halves `a` from 1 until the remainder integrand keeps its sign on
    /// `(−a, a) × [0, 1]` and `|g₂| ≥ |g₂(0)|/2` on `(−a, a)`.
    fn certify_radius(&self) -> Result<f64> {
        let sign = self.top_derivative_at_zero.signum();
        let mut a = 1.0;
        for _ in 0..40 {
            let ok = (-16..=16).all(|j| {
                let x = a * j as f64 / 16.0;
                let g2_ok = self.g2(x).abs() >= 0.5 * self.g2_at_zero.abs();
                g2_ok && (0..=32).all(|m| sign * (self.g1_top)(m as f64 / 32.0 * x) > 0.0)
            });
            if ok {
                return Ok(a);
            }
            a *= 0.5;
        }
        Err(Error::config(
            "g1",
            "no neighbourhood of 0 passes the sign and size checks",
        ))
    }
}

/// Central difference of order `order` refined by three Richardson levels.
pub fn richardson_derivative(f: &dyn Fn(f64) -> f64, x: f64, order: usize, step: f64) -> f64 {
    let central = |h: f64| {
        let mut acc = 0.0;
        let mut binom = 1.0;
        for j in 0..=order {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binom * f(x + (order as f64 / 2.0 - j as f64) * h);
            binom = binom * (order - j) as f64 / (j + 1) as f64;
        }
        acc / h.powi(order as i32)
    };
    let mut table: Vec<f64> = (0..3).map(|l| central(step / 2f64.powi(l))).collect();
    let mut factor = 4.0;
    for level in 1..3 {
        for l in (level..3).rev() {
            table[l] = (factor * table[l] - table[l - 1]) / (factor - 1.0);
        }
        factor *= 4.0;
    }
    table[2]
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 14)
}

/// `g̃₁(x) = x·(∫₀¹ (1−u)^{2k}/(2k)! g₁^{(2k+1)}(ux) du)^{1/(2k+1)}`.
pub fn g1_tilde(spec: &NonlinearitySpec, x: f64) -> Result<f64> {
    if !(x.abs() < spec.radius) {
        return Err(Error::Domain(format!(
            "g1_tilde argument {x} outside the certified neighbourhood (−{0}, {0})",
            spec.radius
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let two_k = 2 * spec.k as i32;
    let factorial: f64 = (1..=two_k).map(f64::from).product();
    let integrand = |u: f64| (1.0 - u).powi(two_k) / factorial * (spec.g1_top)(u * x);
    let scale = (spec.top_derivative_at_zero / factorial).abs();
    let integral = adaptive_simpson(&integrand, 0.0, 1.0, 1e-15 * scale);
    if integral.signum() != spec.top_derivative_at_zero.signum() {
        return Err(Error::Domain(format!(
            "remainder integral changes sign at x = {x}"
        )));
    }
    Ok(signed_root(integral, spec.order()) * x)
}

/// Solves `g̃₁(x) = y` on the certified neighbourhood.
pub fn g1_tilde_inverse(spec: &NonlinearitySpec, y: f64) -> Result<f64> {
    if y == 0.0 {
        return Ok(0.0);
    }
    let edge = spec.radius * (1.0 - 1e-12);
    let (mut lo, mut hi) = (-edge, edge);
    let mut f_lo = g1_tilde(spec, lo)? - y;
    let f_hi = g1_tilde(spec, hi)? - y;
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Domain(format!(
            "{y} outside the range of g1_tilde on the certified neighbourhood"
        )));
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let f_mid = g1_tilde(spec, mid)? - y;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    let (mut x0, mut x1) = (lo, hi);
    let mut f0 = g1_tilde(spec, x0)? - y;
    let mut f1 = g1_tilde(spec, x1)? - y;
    for _ in 0..50 {
        if f1.abs() <= 1e-15 * y.abs() || f1 == f0 {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = g1_tilde(spec, x1)? - y;
    }
    if f1.abs() > 1e-12 * y.abs().max(1.0) {
        return Err(Error::NonConvergence {
            method: "g1_tilde_inverse",
            iterations: 90,
            residual: f1.abs(),
        });
    }
    Ok(x1)
}

/// `ε θ(t) b(x)` on the full horizon: `θ` rises on `[T/16, T/8]`, equals 1
/// on `[T/8, 3T/8]` and falls back to 0 by `7T/16`; `b` is 1 on `ω₀` and
/// vanishes one cell inside `ω`.
pub fn build_bump(grids: &Grids, omega: Interval, omega0: Interval, eps: f64) -> Result<RealField> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::config("eps", "bump amplitude must be positive"));
    }
    let profile = make_cutoff(&grids.space, omega, omega0, 1)?.sigma;
    let horizon = grids.time.horizon();
    let rise = Interval::new(horizon / 8.0, 3.0 * horizon / 8.0);
    let theta: Vec<f64> = (0..=grids.nt())
        .map(|j| {
            plateau(
                grids.time.t(j) - grids.time.start(),
                horizon / 16.0,
                rise,
                7.0 * horizon / 16.0,
            )
        })
        .collect();
    Ok(SpaceTimeField::from_fn(
        grids.nt() + 1,
        grids.nx(),
        |j, i| eps * theta[j] * profile[i],
    ))
}

/// Picard iteration `v ← forward(0, f₂(ū, v))`; returns the fixed point and
/// the number of forward solves.
pub fn picard_solve_v1(
    spec: &NonlinearitySpec,
    u_bar: &RealField,
    solver: &HeatSolver,
    tol: f64,
) -> Result<(RealField, usize)> {
    u_bar.check_shape(solver.grids())?;
    let nx = solver.grids().nx();
    let zero = vec![0.0; nx];
    let mut v = solver.grids().zeros::<f64>();
    for iteration in 1..=50 {
        let next = solver.forward(&zero, &u_bar.zip_map(&v, |u, w| spec.f2(u, w)))?;
        let change = next
            .data()
            .iter()
            .zip(v.data())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v = next;
        if !change.is_finite() {
            break;
        }
        if change <= tol {
            return Ok((v, iteration));
        }
    }
    Err(Error::NonConvergence {
        method: "picard (try a smaller bump amplitude)",
        iterations: 50,
        residual: f64::NAN,
    })
}

/// Geometry and solver settings of the construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySetup {
    pub omega: Interval,
    pub omega1: Interval,
    pub omega0: Interval,
    pub scheme: Scheme,
    pub s: f64,
    pub lambda: f64,
    /// Penalty of the phase-2 solve.
    pub penalty: f64,
    pub rum_options: RumOptions,
    pub picard_tol: f64,
    /// Accepted `‖f₂(ū₂, v̄₂) − H‖_∞ / ‖H‖_∞`.
    pub consistency_tol: f64,
}

impl Default for TrajectorySetup {
    fn default() -> Self {
        Self {
            omega: Interval::new(0.3, 0.7),
            omega1: Interval::new(0.4, 0.6),
            omega0: Interval::new(0.4, 0.6),
            scheme: Scheme::ImplicitEuler,
            s: 1.0,
            lambda: 1.0,
            penalty: 1e-6,
            rum_options: RumOptions::default(),
            picard_tol: 1e-15,
            consistency_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub u: RealField,
    pub v: RealField,
    pub control: RealField,
    pub amplitude: f64,
    /// `min ∂f₂/∂u(ū, v̄)` over `(T/8, 3T/8) × ω₀`.
    pub certificate: f64,
    /// `min ū` over the same region.
    pub plateau_min: f64,
    pub picard_iterations: usize,
    /// `‖v̄(T/2)‖_∞`.
    pub v_mid: f64,
    pub terminal_u: f64,
    pub terminal_v: f64,
    pub consistency_defect: f64,
    /// Largest `|h̄|` at nodes outside `ω`.
    pub support_leak: f64,
    pub flag: Option<String>,
}

fn sup(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Builds `(ū, v̄, h̄)` from rest to rest with bump height `eps`.
pub fn build_reference_trajectory(
    spec: &NonlinearitySpec,
    grids: &Grids,
    setup: &TrajectorySetup,
    eps: f64,
) -> Result<TrajectoryResult> {
    let nx = grids.nx();
    let heat = ParabolicOperator::heat(nx);
    let full_u = build_bump(grids, setup.omega, setup.omega0, eps)?;
    if sup(full_u.data()) >= spec.radius {
        return Err(Error::config(
            "eps",
            "bump leaves the certified neighbourhood; use a smaller amplitude",
        ));
    }
    let mid = grids.nt() / 2;

    let first = grids.half(false);
    let u1 = full_u.rows_range(0, mid);
    let solver1 = HeatSolver::new(&heat, &first, setup.scheme)?;
    let (v1, picard_iterations) = picard_solve_v1(spec, &u1, &solver1, setup.picard_tol)?;
    let g1 = solver1.apply_operator(&u1)?;
    let h1 = SpaceTimeField::from_fn(g1.rows(), nx, |j, i| {
        g1.get(j, i) - spec.f1(u1.get(j, i), v1.get(j, i))
    });

    let second = grids.half(true);
    let n = spec.order();
    let solver2 = HeatSolver::new(&heat, &second, setup.scheme)?;
    let weights = WeightSystem::build(&second, setup.omega1, setup.s, setup.lambda, spec.k)?;
    let cutoff = make_cutoff(&second.space, setup.omega, setup.omega1, n)?;
    let problem = RumProblem::new(
        solver2.clone(),
        weights,
        cutoff,
        n,
        setup.penalty,
        v1.last_row().to_vec(),
    )?;
    let rum = solve_rum(&problem, &setup.rum_options)?;
    let source = problem.apply_chi(rum.control());
    let v2 = solver2.forward(v1.last_row(), &source)?;
    if sup(v2.data()) >= spec.radius {
        return Err(Error::config(
            "eps",
            "v leaves the certified neighbourhood; use a smaller amplitude",
        ));
    }
    let rows: Vec<Vec<f64>> = (0..v2.rows())
        .into_par_iter()
        .map(|j| {
            (0..nx)
                .map(|i| {
                    let h = source.get(j, i);
                    let target = signed_root(h, n) / signed_root(spec.g2(v2.get(j, i)), n);
                    g1_tilde_inverse(spec, target)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let u2 = SpaceTimeField::from_vec(v2.rows(), nx, rows.concat())?;
    let scale = source.max_abs();
    let defect = u2
        .data()
        .iter()
        .zip(v2.data())
        .zip(source.data())
        .fold(0.0f64, |m, ((&u, &v), &h)| m.max((spec.f2(u, v) - h).abs()));
    let consistency_defect = if scale == 0.0 { defect } else { defect / scale };
    let g2 = solver2.apply_operator(&u2)?;
    let h2 = SpaceTimeField::from_fn(g2.rows(), nx, |j, i| {
        g2.get(j, i) - spec.f1(u2.get(j, i), v2.get(j, i))
    });

    let u = u1.concat(&u2);
    let v = v1.concat(&v2);
    let control = h1.concat(&h2);

    let mut support_leak = 0.0f64;
    for i in (0..nx).filter(|&i| !setup.omega.contains(grids.space.x(i))) {
        for j in 0..control.rows() {
            support_leak = support_leak.max(control.get(j, i).abs());
        }
    }

    let horizon = grids.time.horizon();
    let mut certificate = f64::INFINITY;
    let mut plateau_min = f64::INFINITY;
    for j in 0..=grids.nt() {
        let t = grids.time.t(j);
        if !(t > horizon / 8.0 && t < 3.0 * horizon / 8.0) {
            continue;
        }
        for i in (0..nx).filter(|&i| setup.omega0.contains(grids.space.x(i))) {
            let (uu, vv) = (u.get(j, i), v.get(j, i));
            let d = 1e-5 * uu.abs().max(1e-3);
            let slope = (spec.f2(uu + d, vv) - spec.f2(uu - d, vv)) / (2.0 * d);
            certificate = certificate.min(slope);
            plateau_min = plateau_min.min(uu);
        }
    }

    let flag = if consistency_defect > setup.consistency_tol {
        Some(format!(
            "f2(u2, v2) misses the source by {consistency_defect:e} relative"
        ))
    } else if support_leak > 0.0 {
        Some(format!("control reaches {support_leak:e} outside omega"))
    } else if !rum.converged {
        Some("phase-2 penalized solve did not converge".to_string())
    } else {
        None
    };
    Ok(TrajectoryResult {
        amplitude: eps,
        certificate,
        plateau_min,
        picard_iterations,
        v_mid: sup(v1.last_row()),
        terminal_u: sup(u.last_row()),
        terminal_v: sup(v.last_row()),
        consistency_defect,
        support_leak,
        flag,
        u,
        v,
        control,
    })
}

/// Solves the nonlinear system from rest with control `h`, resolving each
/// implicit step by fixed-point iteration.
pub fn resimulate(
    spec: &NonlinearitySpec,
    grids: &Grids,
    scheme: Scheme,
    control: &RealField,
) -> Result<(RealField, RealField)> {
    control.check_shape(grids)?;
    let nx = grids.nx();
    let solver = HeatSolver::new(&ParabolicOperator::heat(nx), grids, scheme)?;
    let mut u = grids.zeros::<f64>();
    let mut v = grids.zeros::<f64>();
    let (mut su, mut sv) = (vec![0.0; nx], vec![0.0; nx]);
    let (mut gu_prev, mut gv_prev) = (control.row(0).to_vec(), vec![0.0; nx]);
    let (mut gu, mut gv) = (vec![0.0; nx], vec![0.0; nx]);
    for j in 1..=grids.nt() {
        let (u_prev, v_prev) = (u.row(j - 1).to_vec(), v.row(j - 1).to_vec());
        let (mut uj, mut vj) = (u_prev.clone(), v_prev.clone());
        let mut converged = false;
        for _ in 0..200 {
            for i in 0..nx {
                gu[i] = control.get(j, i) + spec.f1(uj[i], vj[i]);
                gv[i] = spec.f2(uj[i], vj[i]);
            }
            solver.step(&u_prev, &gu_prev, &gu, &mut su);
            solver.step(&v_prev, &gv_prev, &gv, &mut sv);
            let change = su
                .iter()
                .zip(&uj)
                .chain(sv.iter().zip(&vj))
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let size = sup(&su).max(sup(&sv));
            std::mem::swap(&mut uj, &mut su);
            std::mem::swap(&mut vj, &mut sv);
            if change <= 1e-15 * size.max(1e-300) || change == 0.0 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                method: "implicit step",
                iterations: 200,
                residual: f64::NAN,
            });
        }
        for i in 0..nx {
            gu_prev[i] = control.get(j, i) + spec.f1(uj[i], vj[i]);
            gv_prev[i] = spec.f2(uj[i], vj[i]);
        }
        u.row_mut(j).copy_from_slice(&uj);
        v.row_mut(j).copy_from_slice(&vj);
    }
    Ok((u, v))
}
