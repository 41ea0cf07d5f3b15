//! Penalized minimization in the reflexive space `L^q`, `q = (n+1)/n`.
//!
//! The functional is
//! `J(h) = (1/q)⟨⟨ω|h|^q⟩⟩ + (1/(qε)) ‖ζ(T)‖_q^q` with state source `χh` and
//! weight `ω = 1/W`, `W = e^{-(q/2)sρη}(sη)^{3q/2}`. Its minimizer satisfies
//! `h = Φ_n(W χ G(φ_T))` for the adjoint datum `φ_T = −ε^{-1} Φ_n^{-1}(ζ(T))`,
//! so `h` is an exact `n`-th power.
//!
//! [`solve_rum`] works on the adjoint datum `ψ`: it minimizes the concave
//! dual's negative
//! `D(ψ) = (1/p)⟨⟨W^n|χGψ|^p⟩⟩ + (ε^n/p)‖ψ‖_p^p + ⟨ψ, ζ_free(T)⟩`, `p = n+1`,
//! whose gradient is `ζ(T) + ε^n Φ_n(ψ)` for the control `h(ψ) = Φ_n(WχGψ)`.

use rayon::prelude::*;

use crate::carleman::WeightSystem;
use crate::error::{Error, Result};
use crate::grid::{
    clamped_exp, space_lp_norm, weighted_lq_norm, Cutoff, Grids, RealField, SpaceTimeField,
};
use crate::heat::{pairing, HeatSolver};
use crate::powers::{signed_pow, signed_root};

/// One penalized problem: power `n`, penalty `ε`, initial state `ζ₀`.
#[derive(Debug, Clone)]
pub struct RumProblem {
    power: u32,
    eps: f64,
    zeta0: Vec<f64>,
    solver: HeatSolver,
    weights: WeightSystem,
    cutoff: Cutoff,
    inv_weight: RealField,
    log_inv_weight: RealField,
    log_gain: f64,
    free_terminal: Vec<f64>,
}

impl RumProblem {
    /// Problem with `n = 2k+1`.
    pub fn odd(
        solver: HeatSolver,
        weights: WeightSystem,
        cutoff: Cutoff,
        k: u32,
        eps: f64,
        zeta0: Vec<f64>,
    ) -> Result<Self> {
        Self::new(solver, weights, cutoff, 2 * k + 1, eps, zeta0)
    }

    /// Problem with an arbitrary power `n ≥ 1`.
    ///
    /// The cost weight is rescaled once per geometry so that the weighted
    /// control-to-terminal-state map has unit `L²` gain; `ε` is then measured
    /// against that gain.
    pub fn new(
        solver: HeatSolver,
        weights: WeightSystem,
        cutoff: Cutoff,
        power: u32,
        eps: f64,
        zeta0: Vec<f64>,
    ) -> Result<Self> {
        if power == 0 {
            return Err(Error::config("n", "power must be at least 1"));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::config("eps", "penalty must be positive"));
        }
        let grids = *solver.grids();
        if weights.grids() != &grids {
            return Err(Error::config(
                "weights",
                "built on a different grid than the solver",
            ));
        }
        if cutoff.chi.len() != grids.nx() {
            return Err(Error::shape(grids.nx(), cutoff.chi.len()));
        }
        if zeta0.len() != grids.nx() {
            return Err(Error::shape(grids.nx(), zeta0.len()));
        }
        let q = (power as f64 + 1.0) / power as f64;
        let raw = weights.log_weight_field(0.5 * q, 1.5 * q);
        let top = raw.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::config(
                "s",
                "Carleman weights vanish on the whole grid",
            ));
        }
        let mut problem = Self {
            power,
            eps,
            zeta0,
            free_terminal: Vec::new(),
            inv_weight: raw.map(|v| clamped_exp(v - top)),
            log_inv_weight: raw.map(|v| v - top),
            log_gain: 0.0,
            solver,
            weights,
            cutoff,
        };
        let gain = problem.gain()?;
        if !(gain > 0.0) {
            return Err(Error::config(
                "omega1",
                "controls do not reach the terminal state",
            ));
        }
        let shift = q * gain.ln();
        problem.log_gain = shift;
        problem.log_inv_weight = problem.log_inv_weight.map(|v| v - shift);
        problem.inv_weight = problem.log_inv_weight.map(clamped_exp);
        problem.free_terminal = problem.solver.terminal(&problem.zeta0, &grids.zeros())?;
        Ok(problem)
    }

    /// `L²` operator norm of `b ↦ ζ_T(χ W^{1/q} b)` by power iteration.
    fn gain(&self) -> Result<f64> {
        let q = self.q();
        let weight = self.log_inv_weight.map(|v| clamped_exp(2.0 * v / q));
        let dx = self.grids().space.dx();
        let zero = vec![0.0; self.grids().nx()];
        let mut v: Vec<f64> = self.cutoff.chi.iter().map(|c| c + 1e-3).collect();
        let mut value = 0.0;
        for _ in 0..200 {
            let norm = pairing(&v, &v, dx).sqrt();
            if norm == 0.0 {
                return Ok(0.0);
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let b = self.chi_dual_source(&v)?;
            let src = self.apply_chi(&b.zip_map(&weight, |x, w| x * w));
            let next = self.solver.terminal(&zero, &src)?;
            let est = pairing(&next, &v, dx);
            let done = (est - value).abs() <= 1e-13 * est.abs();
            value = est;
            v = next;
            if done {
                break;
            }
        }
        Ok(value.max(0.0).sqrt())
    }

    pub fn power(&self) -> u32 {
        self.power
    }

    /// `q = (n+1)/n`.
    pub fn q(&self) -> f64 {
        (self.power as f64 + 1.0) / self.power as f64
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn zeta0(&self) -> &[f64] {
        &self.zeta0
    }

    pub fn grids(&self) -> &Grids {
        self.solver.grids()
    }

    pub fn solver(&self) -> &HeatSolver {
        &self.solver
    }

    pub fn weights(&self) -> &WeightSystem {
        &self.weights
    }

    pub fn cutoff(&self) -> &Cutoff {
        &self.cutoff
    }

    /// Uncontrolled terminal state.
    pub fn free_terminal(&self) -> &[f64] {
        &self.free_terminal
    }

    /// `ln` of the factor dividing the raw weight `W`.
    pub fn log_gain(&self) -> f64 {
        self.log_gain
    }

    /// Normalized `W` at every node; exactly 0 at the first and last time node.
    pub fn inverse_weight(&self) -> &RealField {
        &self.inv_weight
    }

    /// `ln` of the pointwise factor in the weighted control norm, i.e. `−ln W / q`.
    pub fn control_weight_log(&self) -> RealField {
        let q = self.q();
        self.log_inv_weight.map(|v| -v / q)
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::config("eps", "penalty must be positive"));
        }
        let mut p = self.clone();
        p.eps = eps;
        Ok(p)
    }

    pub fn with_initial(&self, zeta0: Vec<f64>) -> Result<Self> {
        if zeta0.len() != self.grids().nx() {
            return Err(Error::shape(self.grids().nx(), zeta0.len()));
        }
        let mut p = self.clone();
        p.free_terminal = p.solver.terminal(&zeta0, &p.grids().zeros())?;
        p.zeta0 = zeta0;
        Ok(p)
    }

    /// `χ·h`, the source actually fed to the state equation.
    pub fn apply_chi(&self, h: &RealField) -> RealField {
        let chi = &self.cutoff.chi;
        SpaceTimeField::from_fn(h.rows(), h.cols(), |j, i| chi[i] * h.get(j, i))
    }

    /// `χ ⊙ G(φ_T)` where `G` pairs sources with the adjoint.
    pub fn chi_dual_source(&self, phi_t: &[f64]) -> Result<RealField> {
        let adj = self.solver.adjoint(phi_t)?;
        Ok(self.apply_chi(&adj.source_dual))
    }

    /// `h = Φ_n(W b)`.
    pub fn control_from_dual(&self, b: &RealField) -> RealField {
        let n = self.power;
        b.zip_map(&self.inv_weight, |x, w| signed_pow(w * x, n))
    }

    /// Full state trajectory for control `h`.
    pub fn state(&self, h: &RealField) -> Result<RealField> {
        self.solver.forward(&self.zeta0, &self.apply_chi(h))
    }

    fn terminal(&self, h: &RealField) -> Result<Vec<f64>> {
        self.solver.terminal(&self.zeta0, &self.apply_chi(h))
    }

    fn control_cost(&self, h: &RealField) -> f64 {
        let q = self.q();
        let g = self.grids();
        let cell = g.time.dt() * g.space.dx();
        let mut acc = 0.0;
        for (&v, &lw) in h.data().iter().zip(self.log_inv_weight.data()) {
            if v != 0.0 {
                acc += clamped_exp(q * v.abs().ln() - lw);
            }
        }
        acc * cell / q
    }

    fn terminal_cost(&self, zt: &[f64]) -> f64 {
        let q = self.q();
        let dx = self.grids().space.dx();
        zt.iter().map(|v| v.abs().powf(q)).sum::<f64>() * dx / (q * self.eps)
    }

    fn j_from_terminal(&self, h: &RealField, zt: &[f64]) -> f64 {
        self.control_cost(h) + self.terminal_cost(zt)
    }

    /// Builds a consistent iterate for `h`.
    pub fn iterate(&self, h: RealField, iteration: usize) -> Result<RumIterate> {
        h.check_shape(self.grids())?;
        let state = self.state(&h)?;
        let j_value = self.j_from_terminal(&h, state.last_row());
        let phi_t = self.adjoint_terminal(state.last_row());
        let adjoint = self.solver.adjoint(&phi_t)?.state;
        let mut it = RumIterate {
            control: h,
            state,
            adjoint,
            j_value,
            residual: 0.0,
            iteration,
        };
        it.residual = el_residual(self, &it)?;
        Ok(it)
    }

    /// `φ_T = −ε^{-1} Φ_n^{-1}(ζ_T)`.
    pub fn adjoint_terminal(&self, zt: &[f64]) -> Vec<f64> {
        zt.iter()
            .map(|&z| -signed_root(z, self.power) / self.eps)
            .collect()
    }
}

/// `J(h)`; forward-solves the state.
pub fn evaluate_j(problem: &RumProblem, h: &RealField) -> Result<f64> {
    h.check_shape(problem.grids())?;
    let zt = problem.terminal(h)?;
    Ok(problem.j_from_terminal(h, &zt))
}

/// Control, its state and adjoint, and the objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct RumIterate {
    pub control: RealField,
    pub state: RealField,
    pub adjoint: RealField,
    pub j_value: f64,
    pub residual: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub j_value: f64,
    /// `‖ζ(T) + ε^n Φ_n(ψ)‖ / ‖ζ_free(T)‖`.
    pub residual: f64,
    pub dual_objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RumResult {
    pub iterate: RumIterate,
    pub converged: bool,
    pub history: Vec<HistoryEntry>,
    pub terminal_q_norm: f64,
    pub weighted_control_norm: f64,
    /// Final adjoint datum.
    pub dual_terminal: Vec<f64>,
}

impl RumResult {
    pub fn control(&self) -> &RealField {
        &self.iterate.control
    }

    pub fn terminal(&self) -> &[f64] {
        self.iterate.state.last_row()
    }

    pub fn iterations(&self) -> usize {
        self.iterate.iteration
    }
}

/// Euler–Lagrange defect `‖Φ_n^{-1}(h) − WχG(φ_T(ζ_T))‖₂`, relative to the larger side.
pub fn el_residual(problem: &RumProblem, iterate: &RumIterate) -> Result<f64> {
    let n = problem.power;
    let phi_t = problem.adjoint_terminal(iterate.state.last_row());
    let b = problem.chi_dual_source(&phi_t)?;
    let (mut diff, mut left, mut right) = (0.0, 0.0, 0.0);
    for ((&h, &bv), &w) in iterate
        .control
        .data()
        .iter()
        .zip(b.data())
        .zip(problem.inv_weight.data())
    {
        let r = signed_root(h, n);
        let t = w * bv;
        diff += (r - t) * (r - t);
        left += r * r;
        right += t * t;
    }
    let scale = left.max(right).sqrt();
    Ok(if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    })
}

/// Damped Euler–Lagrange step `h ← (1−r)h + r Φ_n(WχGφ_T)`, halving `r` until `J` does not increase.
pub fn fixed_point_step(
    problem: &RumProblem,
    iterate: &RumIterate,
    relax: f64,
) -> Result<RumIterate> {
    if !(relax > 0.0 && relax <= 1.0) {
        return Err(Error::Domain(format!(
            "relaxation must lie in (0, 1], got {relax}"
        )));
    }
    let phi_t = problem.adjoint_terminal(iterate.state.last_row());
    let target = problem.control_from_dual(&problem.chi_dual_source(&phi_t)?);
    let mut r = relax;
    for _ in 0..=30 {
        let h = iterate
            .control
            .zip_map(&target, |a, b| (1.0 - r) * a + r * b);
        let j = evaluate_j(problem, &h)?;
        if j <= iterate.j_value {
            return problem.iterate(h, iterate.iteration + 1);
        }
        r *= 0.5;
    }
    Err(Error::Stagnation {
        halvings: 30,
        last: Box::new(iterate.clone()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RumOptions {
    /// Relative dual-gradient tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of stored quasi-Newton pairs.
    pub memory: usize,
}

impl Default for RumOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 2000,
            memory: 12,
        }
    }
}

/// Evaluation of the dual objective along `ψ + α d`.
struct LineModel<'a> {
    problem: &'a RumProblem,
    b: &'a RealField,
    bd: &'a RealField,
    psi: &'a [f64],
    dir: &'a [f64],
    eps_n: f64,
    linear: f64,
}

impl LineModel<'_> {
    fn slope(&self, alpha: f64) -> f64 {
        let g = self.problem.grids();
        let n = self.problem.power;
        let mut acc = 0.0;
        for ((&b, &bd), &w) in self
            .b
            .data()
            .iter()
            .zip(self.bd.data())
            .zip(self.problem.inv_weight.data())
        {
            if w != 0.0 {
                acc += signed_pow(w * (b + alpha * bd), n) * bd;
            }
        }
        let mut reg = 0.0;
        for (&p, &d) in self.psi.iter().zip(self.dir) {
            reg += signed_pow(p + alpha * d, n) * d;
        }
        acc * g.time.dt() * g.space.dx() + (self.eps_n * reg + self.linear) * g.space.dx()
    }

    /// Root of the increasing function `slope`.
    fn minimize(&self, first_guess: f64) -> f64 {
        let s0 = self.slope(0.0);
        let (mut lo, mut slo) = (0.0, s0);
        let mut hi = first_guess;
        let mut shi = self.slope(hi);
        let mut grow = 0;
        while shi < 0.0 && grow < 80 {
            lo = hi;
            slo = shi;
            hi *= 4.0;
            shi = self.slope(hi);
            grow += 1;
        }
        if shi < 0.0 {
            return hi;
        }
        let target = 1e-12 * s0.abs();
        let mut side = 0i32;
        let mut alpha = hi;
        for _ in 0..200 {
            alpha = (lo * shi - hi * slo) / (shi - slo);
            if !(alpha > lo && alpha < hi) {
                alpha = 0.5 * (lo + hi);
            }
            let sa = self.slope(alpha);
            if sa.abs() <= target || (hi - lo) <= 1e-15 * hi {
                break;
            }
            if sa < 0.0 {
                lo = alpha;
                slo = sa;
                if side == -1 {
                    shi *= 0.5;
                }
                side = -1;
            } else {
                hi = alpha;
                shi = sa;
                if side == 1 {
                    slo *= 0.5;
                }
                side = 1;
            }
        }
        alpha
    }
}

struct DualPoint {
    psi: Vec<f64>,
    b: RealField,
    h: RealField,
    grad: Vec<f64>,
    dual: f64,
    j_value: f64,
}

impl RumProblem {
    fn dual_point(&self, psi: Vec<f64>) -> Result<DualPoint> {
        let b = self.chi_dual_source(&psi)?;
        let h = self.control_from_dual(&b);
        let terminal = self.terminal(&h)?;
        let n = self.power;
        let eps_n = self.eps.powi(n as i32);
        let grad: Vec<f64> = terminal
            .iter()
            .zip(&psi)
            .map(|(&z, &p)| z + eps_n * signed_pow(p, n))
            .collect();
        let g = self.grids();
        let p = n as f64 + 1.0;
        let cell = g.time.dt() * g.space.dx();
        let cost: f64 = h
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| x * y)
            .sum::<f64>()
            * cell
            / p;
        let reg: f64 = psi.iter().map(|v| v.abs().powf(p)).sum::<f64>() * eps_n / p;
        let dual = cost
            + (reg
                + psi
                    .iter()
                    .zip(&self.free_terminal)
                    .map(|(a, b)| a * b)
                    .sum::<f64>())
                * g.space.dx();
        let j_value = self.j_from_terminal(&h, &terminal);
        Ok(DualPoint {
            psi,
            b,
            h,
            grad,
            dual,
            j_value,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimizes `J` through its dual with limited-memory BFGS and exact line search.
///
/// The primal iterate is replaced by the Euler–Lagrange control of the
/// current dual point only when that does not increase `J` beyond round-off,
/// so the recorded `J` history is nonincreasing.
pub fn solve_rum(problem: &RumProblem, options: &RumOptions) -> Result<RumResult> {
    if !(options.tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let nx = problem.grids().nx();
    let scale = norm(&problem.free_terminal);
    let eps_n = problem.eps.powi(problem.power as i32);
    let mut point = problem.dual_point(vec![0.0; nx])?;
    let mut best_h = point.h.clone();
    let mut best_j = point.j_value;
    let mut best_psi = point.psi.clone();
    let rel = |g: &[f64]| if scale == 0.0 { 0.0 } else { norm(g) / scale };
    let mut history = vec![HistoryEntry {
        j_value: best_j,
        residual: rel(&point.grad),
        dual_objective: point.dual,
    }];
    let mut pairs: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
    let mut converged = rel(&point.grad) <= options.tol;
    let mut iteration = 0;
    while !converged && iteration < options.max_iter {
        iteration += 1;
        let mut dir = two_loop(&point.grad, &pairs);
        if dot(&dir, &point.grad) >= 0.0 {
            pairs.clear();
            dir = point.grad.iter().map(|g| -g).collect();
        }
        let bd = problem.chi_dual_source(&dir)?;
        let model = LineModel {
            problem,
            b: &point.b,
            bd: &bd,
            psi: &point.psi,
            dir: &dir,
            eps_n,
            linear: dot(&dir, &problem.free_terminal),
        };
        let alpha = model.minimize(1.0);
        let psi: Vec<f64> = point
            .psi
            .iter()
            .zip(&dir)
            .map(|(p, d)| p + alpha * d)
            .collect();
        let next = problem.dual_point(psi)?;
        let s: Vec<f64> = next
            .psi
            .iter()
            .zip(&point.psi)
            .map(|(a, b)| a - b)
            .collect();
        let y: Vec<f64> = next
            .grad
            .iter()
            .zip(&point.grad)
            .map(|(a, b)| a - b)
            .collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * norm(&s) * norm(&y) && sy > 0.0 {
            pairs.push_back((s, y, 1.0 / sy));
            if pairs.len() > options.memory {
                pairs.pop_front();
            }
        }
        let dual_change = (point.dual - next.dual).abs();
        point = next;
        if point.j_value <= best_j + 1e-12 * best_j.abs() {
            best_j = point.j_value;
            best_h = point.h.clone();
            best_psi = point.psi.clone();
        }
        let residual = rel(&point.grad);
        history.push(HistoryEntry {
            j_value: best_j,
            residual,
            dual_objective: point.dual,
        });
        converged = residual <= options.tol
            || (dual_change <= options.tol * options.tol * point.dual.abs()
                && residual <= options.tol.sqrt());
    }
    let mut it = problem.iterate(best_h, iteration)?;
    it.j_value = best_j;
    let q = problem.q();
    let terminal_q_norm = space_lp_norm(it.state.last_row(), &problem.grids().space, q)?;
    let weighted_control_norm = weighted_lq_norm(
        &it.control,
        &problem.control_weight_log(),
        problem.grids(),
        q,
    )?;
    Ok(RumResult {
        iterate: it,
        converged,
        history,
        terminal_q_norm,
        weighted_control_norm,
        dual_terminal: best_psi,
    })
}

fn two_loop(
    grad: &[f64],
    pairs: &std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)>,
) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// `ψ ↦ ζ_T(χ W χ G ψ)` at `n = 1`.
pub fn gramian_apply(problem: &RumProblem, psi: &[f64]) -> Result<Vec<f64>> {
    let b = problem.chi_dual_source(psi)?;
    let h = b.zip_map(&problem.inv_weight, |x, w| w * x);
    problem
        .solver
        .terminal(&vec![0.0; psi.len()], &problem.apply_chi(&h))
}

/// Conjugate gradients on `(εI + Λ)ψ = −ζ_free(T)` for the quadratic case.
pub fn linear_hum_oracle(problem: &RumProblem, tol: f64) -> Result<RumResult> {
    if problem.power != 1 {
        return Err(Error::Domain("the linear oracle needs n = 1".into()));
    }
    let dx = problem.grids().space.dx();
    let nx = problem.grids().nx();
    let ip = |a: &[f64], b: &[f64]| pairing(a, b, dx);
    let rhs: Vec<f64> = problem.free_terminal.iter().map(|v| -v).collect();
    let bnorm = ip(&rhs, &rhs).sqrt();
    let mut x = vec![0.0; nx];
    let mut iterations = 0;
    if bnorm > 0.0 {
        let mut r = rhs.clone();
        let mut p = r.clone();
        let mut rr = ip(&r, &r);
        let limit = 10 * nx;
        loop {
            if rr.sqrt() <= tol * bnorm {
                break;
            }
            if iterations >= limit {
                return Err(Error::NonConvergence {
                    method: "conjugate gradients",
                    iterations,
                    residual: rr.sqrt() / bnorm,
                });
            }
            iterations += 1;
            let lp = gramian_apply(problem, &p)?;
            let ap: Vec<f64> = lp
                .iter()
                .zip(&p)
                .map(|(l, v)| l + problem.eps * v)
                .collect();
            let alpha = rr / ip(&p, &ap);
            x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
            r.iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
            let rr_new = ip(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            p = r.iter().zip(&p).map(|(ri, pi)| ri + beta * pi).collect();
        }
    }
    let point = problem.dual_point(x)?;
    let it = problem.iterate(point.h, iterations)?;
    let q = problem.q();
    let terminal_q_norm = space_lp_norm(it.state.last_row(), &problem.grids().space, q)?;
    let weighted_control_norm = weighted_lq_norm(
        &it.control,
        &problem.control_weight_log(),
        problem.grids(),
        q,
    )?;
    let scale = norm(&problem.free_terminal);
    Ok(RumResult {
        history: vec![HistoryEntry {
            j_value: it.j_value,
            residual: if scale == 0.0 {
                0.0
            } else {
                norm(&point.grad) / scale
            },
            dual_objective: point.dual,
        }],
        iterate: it,
        converged: true,
        terminal_q_norm,
        weighted_control_norm,
        dual_terminal: point.psi,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub terminal_q_norm: f64,
    pub weighted_control_norm: f64,
    pub j_value: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `ln ‖ζ(T)‖_q` against `ln ε`.
    pub slope: f64,
}

/// Solves the template once per `ε`; rungs run in parallel.
pub fn epsilon_sweep(
    template: &RumProblem,
    eps_list: &[f64],
    options: &RumOptions,
) -> Result<(SweepTable, Vec<RumResult>)> {
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config("eps_ladder", "must be strictly decreasing"));
    }
    let results: Vec<RumResult> = eps_list
        .par_iter()
        .map(|&eps| solve_rum(&template.with_eps(eps)?, options))
        .collect::<Result<_>>()?;
    let rows: Vec<SweepRow> = eps_list
        .iter()
        .zip(&results)
        .map(|(&eps, r)| SweepRow {
            eps,
            terminal_q_norm: r.terminal_q_norm,
            weighted_control_norm: r.weighted_control_norm,
            j_value: r.iterate.j_value,
            converged: r.converged,
            iterations: r.iterations(),
        })
        .collect();
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.terminal_q_norm > 0.0)
        .map(|r| (r.eps.ln(), r.terminal_q_norm.ln()))
        .collect();
    Ok((
        SweepTable {
            slope: fit_slope(&pts),
            rows,
        },
        results,
    ))
}

/// Least-squares slope; `NaN` with fewer than two points.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return f64::NAN;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Discrete `X_{T,p}` norm of `Φ_n^{-1}(h)`: the field, its backward time
/// difference and its second space difference, each in `L^p`.
pub fn xp_norm_diagnostic(problem: &RumProblem, h: &RealField, p: f64) -> Result<f64> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(Error::Domain(format!(
            "diagnostic exponent must lie in [2, ∞), got {p}"
        )));
    }
    let g = problem.grids();
    h.check_shape(g)?;
    let n = problem.power;
    let root = h.map(|v| signed_root(v, n));
    let dt = g.time.dt();
    let dx = g.space.dx();
    let nt = g.nt();
    let time_diff = SpaceTimeField::from_fn(nt + 1, g.nx(), |j, i| {
        let j = j.max(1);
        (root.get(j, i) - root.get(j - 1, i)) / dt
    });
    let nx = g.nx();
    let space_diff = SpaceTimeField::from_fn(nt + 1, nx, |j, i| {
        let left = if i > 0 { root.get(j, i - 1) } else { 0.0 };
        let right = if i + 1 < nx { root.get(j, i + 1) } else { 0.0 };
        (left - 2.0 * root.get(j, i) + right) / (dx * dx)
    });
    Ok(crate::grid::lp_norm(&root, g, p)?
        + crate::grid::lp_norm(&time_diff, g, p)?
        + crate::grid::lp_norm(&space_diff, g, p)?)
}
