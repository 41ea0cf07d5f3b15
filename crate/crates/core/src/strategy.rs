//! Two-phase null control of the cascade
//! `∂t u − L₁u = 1_ω h`, `∂t v − L₂v = P(u)`.
//!
//! Phase 1 steers `u` to rest on `(0, T/2)` with a linear penalized solve
//! while `v` evolves under the coupling. Phase 2 solves a penalized problem
//! for `v` on `(T/2, T)` whose source `H` is an exact power, takes
//! `u₂ = P⁻¹(H)` nodewise and recovers the control as `h₂ = (∂t − L₁)u₂`
//! through the discrete stepping relation.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::carleman::WeightSystem;
use crate::error::{Error, Result};
use crate::grid::{lp_norm, make_cutoff, Grids, Interval, RealField, SpaceTimeField};
use crate::heat::{HeatSolver, ParabolicOperator, Scalar, Scheme};
use crate::powers::{signed_pow, signed_root};
use crate::rum::{solve_rum, RumOptions, RumProblem};

/// Exponents at which control norms are reported.
pub const CONTROL_NORM_EXPONENTS: [f64; 4] = [2.0, 4.0, 8.0, f64::INFINITY];

/// Bound on `|P(u₂) − H| / ‖H‖_∞` beyond which the root map is considered broken.
const IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

/// Coupled system, geometry, data and solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSystemConfig {
    pub power: u32,
    pub grids: Grids,
    pub u_operator: ParabolicOperator,
    pub v_operator: ParabolicOperator,
    pub scheme: Scheme,
    pub omega: Interval,
    pub omega1: Interval,
    pub s: f64,
    pub lambda: f64,
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
    pub phase1_eps: f64,
    pub phase2_eps: f64,
    /// Largest accepted `‖u₁(T/2)‖_∞ / ‖u₀‖_∞`.
    pub phase1_tol: f64,
    pub phase1_options: RumOptions,
    pub phase2_options: RumOptions,
}

impl PowerSystemConfig {
    /// Pure heat operators, implicit Euler, `ω = (0.3, 0.7)`, `ω₁ = (0.4, 0.6)`.
    pub fn new(power: u32, grids: Grids, u0: Vec<f64>, v0: Vec<f64>) -> Result<Self> {
        let nx = grids.nx();
        let config = Self {
            power,
            grids,
            u_operator: ParabolicOperator::heat(nx),
            v_operator: ParabolicOperator::heat(nx),
            scheme: Scheme::ImplicitEuler,
            omega: Interval::new(0.3, 0.7),
            omega1: Interval::new(0.4, 0.6),
            s: 1.0,
            lambda: 1.0,
            u0,
            v0,
            phase1_eps: 1e-8,
            phase2_eps: 1e-6,
            phase1_tol: 1e-6,
            phase1_options: RumOptions {
                tol: 1e-12,
                ..RumOptions::default()
            },
            phase2_options: RumOptions::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn parity(&self) -> Parity {
        if self.power % 2 == 1 {
            Parity::Odd
        } else {
            Parity::Even
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nx = self.grids.nx();
        if self.power < 2 {
            return Err(Error::config("n", "coupling power must be at least 2"));
        }
        if self.u0.len() != nx {
            return Err(Error::config(
                "u0",
                format!("expected {nx} values, got {}", self.u0.len()),
            ));
        }
        if self.v0.len() != nx {
            return Err(Error::config(
                "v0",
                format!("expected {nx} values, got {}", self.v0.len()),
            ));
        }
        if self.u0.iter().chain(&self.v0).any(|v| !v.is_finite()) {
            return Err(Error::config("u0", "initial data must be finite"));
        }
        for (name, op) in [
            ("u_operator", &self.u_operator),
            ("v_operator", &self.v_operator),
        ] {
            if op.drift.len() != nx || op.reaction.len() != nx {
                return Err(Error::config(name, "coefficients do not match the grid"));
            }
        }
        if !(self.phase1_eps > 0.0 && self.phase2_eps > 0.0) {
            return Err(Error::config("eps", "penalties must be positive"));
        }
        if !(self.phase1_tol > 0.0) {
            return Err(Error::config("phase1_tol", "must be positive"));
        }
        make_cutoff(&self.grids.space, self.omega, self.omega1, 1)?;
        Ok(())
    }

    pub fn with_initial(&self, u0: Vec<f64>, v0: Vec<f64>) -> Result<Self> {
        let mut c = self.clone();
        c.u0 = u0;
        c.v0 = v0;
        c.validate()?;
        Ok(c)
    }
}

/// One half of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport<S = f64> {
    pub phase: u8,
    /// Control on the half interval, zero outside `ω`.
    pub control: SpaceTimeField<S>,
    pub u: SpaceTimeField<S>,
    pub v: SpaceTimeField<S>,
    /// `(p, ‖control‖_p)` for each entry of [`CONTROL_NORM_EXPONENTS`].
    pub control_norms: Vec<(f64, f64)>,
    /// `‖u(T/2)‖_∞` after phase 1, `max(‖u(T)‖_∞, ‖v(T)‖_∞)` after phase 2.
    pub terminal_norm: f64,
    pub converged: bool,
    pub flag: Option<String>,
}

/// Phase 2 together with the quantities its construction must preserve.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase2Outcome<S = f64> {
    pub report: PhaseReport<S>,
    /// Source `H` produced by the penalized solve.
    pub source: RealField,
    /// `u₂ = P⁻¹(H)`.
    pub root: SpaceTimeField<S>,
    /// `max |P(u₂) − H| / ‖H‖_∞`.
    pub coupling_defect: f64,
    /// `‖forward(0, h₂) − u₂‖_∞ / ‖u₂‖_∞`.
    pub reconstruction_defect: f64,
    /// `‖v(T)‖_q` of the penalized solve alone, `q = (n+1)/n`.
    pub penalized_terminal: f64,
}

/// Both phases and the concatenated solution on `(0, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyReport<S = f64> {
    pub power: u32,
    pub grids: Grids,
    pub phase1: PhaseReport<S>,
    pub phase2: Phase2Outcome<S>,
    pub control: SpaceTimeField<S>,
    pub u: SpaceTimeField<S>,
    pub v: SpaceTimeField<S>,
    pub final_u: f64,
    pub final_v: f64,
    /// Largest nodal gap between a full-horizon re-solve from `control` and `(u, v)`.
    pub resimulation_defect: f64,
    pub u0_sup: f64,
    pub v0_sup: f64,
}

impl<S: Scalar> StrategyReport<S> {
    /// `max(‖u(T)‖_∞, ‖v(T)‖_∞)`.
    pub fn final_residual(&self) -> f64 {
        self.final_u.max(self.final_v)
    }

    pub fn flags(&self) -> Vec<String> {
        [&self.phase1.flag, &self.phase2.report.flag]
            .into_iter()
            .flatten()
            .cloned()
            .collect()
    }

    pub fn is_flagged(&self) -> bool {
        !self.flags().is_empty()
    }
}

/// How the coupling acts on `u` and how its inverse is taken.
trait Law: Sync {
    type S: Scalar;
    /// Power of the phase-2 penalized problem.
    fn rum_power(&self) -> u32;
    fn couple(&self, u: Self::S) -> Self::S;
    fn root(&self, h: f64) -> Self::S;
}

/// `P(u) = |u|^{n−1}u` on real fields.
struct SignedPower(u32);

impl Law for SignedPower {
    type S = f64;
    fn rum_power(&self) -> u32 {
        self.0
    }
    fn couple(&self, u: f64) -> f64 {
        signed_pow(u, self.0)
    }
    fn root(&self, h: f64) -> f64 {
        signed_root(h, self.0)
    }
}

/// `P(u) = u^{2k}` on complex fields, inverted through a power-`4k` problem.
struct ComplexEven {
    k: u32,
    alpha: Complex64,
}

impl ComplexEven {
    fn new(k: u32) -> Self {
        Self {
            k,
            alpha: Complex64::from_polar(1.0, std::f64::consts::PI / (2 * k) as f64),
        }
    }
}

impl Law for ComplexEven {
    type S = Complex64;
    fn rum_power(&self) -> u32 {
        4 * self.k
    }
    fn couple(&self, u: Complex64) -> Complex64 {
        u.powu(2 * self.k)
    }
    fn root(&self, h: f64) -> Complex64 {
        complex_even_root(h, self.k, self.alpha)
    }
}

/// `(r⁺)² + α(r⁻)²` with `r = Φ_{4k}^{-1}(h)`; its `2k`-th power is `h`.
pub fn even_complex_root(h: f64, k: u32) -> Result<Complex64> {
    if k == 0 {
        return Err(Error::config("k", "must be at least 1"));
    }
    Ok(ComplexEven::new(k).root(h))
}

fn complex_even_root(h: f64, k: u32, alpha: Complex64) -> Complex64 {
    let r = signed_root(h, 4 * k);
    let plus = r.max(0.0);
    let minus = (-r).max(0.0);
    Complex64::new(plus * plus, 0.0) + alpha * (minus * minus)
}

fn sup<S: Scalar>(values: &[S]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.modulus()))
}

fn lift<S: Scalar>(values: &[f64]) -> Vec<S> {
    values.iter().map(|&v| S::from_real(v)).collect()
}

fn control_norms<S: Scalar>(control: &SpaceTimeField<S>, grids: &Grids) -> Result<Vec<(f64, f64)>> {
    CONTROL_NORM_EXPONENTS
        .iter()
        .map(|&p| Ok((p, lp_norm(control, grids, p)?)))
        .collect()
}

fn max_gap<S: Scalar>(a: &SpaceTimeField<S>, b: &SpaceTimeField<S>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .fold(0.0f64, |m, (&x, &y)| m.max((x - y).modulus()))
}

fn check_support<S: Scalar>(
    control: &SpaceTimeField<S>,
    config: &PowerSystemConfig,
    phase: u8,
) -> Result<()> {
    let space = &config.grids.space;
    for i in 0..space.nx() {
        if config.omega.contains(space.x(i)) {
            continue;
        }
        if (0..control.rows()).any(|j| control.get(j, i) != S::zero()) {
            return Err(Error::config(
                "omega1",
                format!(
                    "phase-{phase} control is nonzero at x = {} outside omega",
                    space.x(i)
                ),
            ));
        }
    }
    Ok(())
}

fn phase1<L: Law>(config: &PowerSystemConfig, law: &L) -> Result<PhaseReport<L::S>> {
    config.validate()?;
    let g = config.grids.half(false);
    let u_solver = HeatSolver::new(&config.u_operator, &g, config.scheme)?;
    let v_solver = HeatSolver::new(&config.v_operator, &g, config.scheme)?;
    let weights = WeightSystem::build(&g, config.omega1, config.s, config.lambda, 0)?;
    let cutoff = make_cutoff(&g.space, config.omega, config.omega1, 1)?;
    let problem = RumProblem::new(
        u_solver,
        weights,
        cutoff,
        1,
        config.phase1_eps,
        config.u0.clone(),
    )?;
    let result = solve_rum(&problem, &config.phase1_options)?;
    let control: SpaceTimeField<L::S> = problem.apply_chi(result.control()).map(L::S::from_real);
    check_support(&control, config, 1)?;
    let u = result.iterate.state.map(L::S::from_real);
    let v = v_solver.forward(&lift::<L::S>(&config.v0), &u.map(|x| law.couple(x)))?;
    let terminal_norm = sup(u.last_row());
    let u0_sup = sup(&config.u0);
    let flag = if terminal_norm > config.phase1_tol * u0_sup {
        Some(format!(
            "phase 1 left ‖u(T/2)‖_∞ = {terminal_norm:e} above {:e}·‖u₀‖_∞",
            config.phase1_tol
        ))
    } else if !result.converged {
        Some("phase-1 penalized solve did not converge".to_string())
    } else {
        None
    };
    Ok(PhaseReport {
        phase: 1,
        control_norms: control_norms(&control, &g)?,
        control,
        u,
        v,
        terminal_norm,
        converged: result.converged,
        flag,
    })
}

fn phase2<L: Law>(
    config: &PowerSystemConfig,
    law: &L,
    v_mid: &[L::S],
    u_mid: &[L::S],
) -> Result<Phase2Outcome<L::S>> {
    config.validate()?;
    let nx = config.grids.nx();
    if v_mid.len() != nx {
        return Err(Error::shape(nx, v_mid.len()));
    }
    if u_mid.len() != nx {
        return Err(Error::shape(nx, u_mid.len()));
    }
    let g = config.grids.half(true);
    let n = law.rum_power();
    let u_solver = HeatSolver::new(&config.u_operator, &g, config.scheme)?;
    let v_solver = HeatSolver::new(&config.v_operator, &g, config.scheme)?;
    let weights = WeightSystem::build(&g, config.omega1, config.s, config.lambda, (n - 1) / 2)?;
    let cutoff = make_cutoff(&g.space, config.omega, config.omega1, n)?;
    let start: Vec<f64> = v_mid.iter().map(|z| z.re()).collect();
    let problem = RumProblem::new(
        v_solver.clone(),
        weights,
        cutoff,
        n,
        config.phase2_eps,
        start,
    )?;
    let result = solve_rum(&problem, &config.phase2_options)?;
    let source = problem.apply_chi(result.control());
    let root = source.map(|h| law.root(h));

    let scale = source.max_abs();
    let worst = root
        .data()
        .iter()
        .zip(source.data())
        .fold(0.0f64, |m, (&r, &h)| {
            m.max((law.couple(r) - L::S::from_real(h)).modulus())
        });
    let coupling_defect = if scale == 0.0 { 0.0 } else { worst / scale };
    if coupling_defect > IDENTITY_TOL {
        return Err(Error::Identity(format!(
            "coupling of the root differs from the source by {coupling_defect:e} relative"
        )));
    }

    let control = u_solver.apply_operator(&root)?;
    check_support(&control, config, 2)?;
    let rebuilt = u_solver.forward(&vec![L::S::zero(); nx], &control)?;
    let root_sup = root.max_abs();
    let reconstruction_defect = if root_sup == 0.0 {
        max_gap(&rebuilt, &root)
    } else {
        max_gap(&rebuilt, &root) / root_sup
    };

    let u = u_solver.forward(u_mid, &control)?;
    let v = v_solver.forward(v_mid, &u.map(|x| law.couple(x)))?;
    let terminal_norm = sup(u.last_row()).max(sup(v.last_row()));
    let flag = (!result.converged).then(|| "phase-2 penalized solve did not converge".to_string());
    Ok(Phase2Outcome {
        report: PhaseReport {
            phase: 2,
            control_norms: control_norms(&control, &g)?,
            control,
            u,
            v,
            terminal_norm,
            converged: result.converged,
            flag,
        },
        source,
        root,
        coupling_defect,
        reconstruction_defect,
        penalized_terminal: result.terminal_q_norm,
    })
}

fn run<L: Law>(config: &PowerSystemConfig, law: &L) -> Result<StrategyReport<L::S>> {
    let p1 = phase1(config, law)?;
    let p2 = phase2(config, law, p1.v.last_row(), p1.u.last_row())?;
    let control = p1.control.concat(&p2.report.control);
    let u = p1.u.concat(&p2.report.u);
    let v = p1.v.concat(&p2.report.v);

    let g = config.grids;
    let u_solver = HeatSolver::new(&config.u_operator, &g, config.scheme)?;
    let v_solver = HeatSolver::new(&config.v_operator, &g, config.scheme)?;
    let u_again = u_solver.forward(&lift::<L::S>(&config.u0), &control)?;
    let v_again = v_solver.forward(&lift::<L::S>(&config.v0), &u_again.map(|x| law.couple(x)))?;
    let resimulation_defect = max_gap(&u_again, &u).max(max_gap(&v_again, &v));

    Ok(StrategyReport {
        power: config.power,
        grids: g,
        final_u: sup(u.last_row()),
        final_v: sup(v.last_row()),
        resimulation_defect,
        u0_sup: sup(&config.u0),
        v0_sup: sup(&config.v0),
        phase1: p1,
        phase2: p2,
        control,
        u,
        v,
    })
}

/// Phase 1 alone, coupling `|u|^{n−1}u`.
pub fn phase1_steer_u(config: &PowerSystemConfig) -> Result<PhaseReport> {
    phase1(config, &SignedPower(config.power))
}

/// Phase 2 for odd `n`, started from `v_mid` with `u(T/2) = u_mid_residual`.
pub fn phase2_odd(
    config: &PowerSystemConfig,
    v_mid: &[f64],
    u_mid_residual: &[f64],
) -> Result<Phase2Outcome> {
    if config.parity() != Parity::Odd {
        return Err(Error::config("n", "odd pipeline needs an odd power"));
    }
    phase2(config, &SignedPower(config.power), v_mid, u_mid_residual)
}

/// Phase 2 for coupling `|u|^{n−1}u` with any `n ≥ 2`.
pub fn phase2_power(
    config: &PowerSystemConfig,
    v_mid: &[f64],
    u_mid_residual: &[f64],
) -> Result<Phase2Outcome> {
    phase2(config, &SignedPower(config.power), v_mid, u_mid_residual)
}

/// Full pipeline for `n = 2k+1`.
pub fn run_odd_strategy(config: &PowerSystemConfig) -> Result<StrategyReport> {
    if config.parity() != Parity::Odd {
        return Err(Error::config("n", "odd pipeline needs an odd power"));
    }
    run(config, &SignedPower(config.power))
}

/// Full pipeline for coupling `|u|^{n−1}u`, `n ≥ 2`.
pub fn run_general_power(config: &PowerSystemConfig) -> Result<StrategyReport> {
    run(config, &SignedPower(config.power))
}

/// Full pipeline for coupling `u^{2k}` with a complex control.
pub fn run_even_complex(config: &PowerSystemConfig) -> Result<StrategyReport<Complex64>> {
    if config.parity() != Parity::Even {
        return Err(Error::config(
            "n",
            "complex construction needs an even power",
        ));
    }
    run(config, &ComplexEven::new(config.power / 2))
}

/// Comparison check for real controls and coupling `u^n`, `n` even.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstructionReport {
    pub controls_tested: usize,
    /// Number of (control, node) pairs with `v < ṽ` at any time.
    pub violations: usize,
    /// Smallest `v − ṽ` over all nodes, times and controls.
    pub min_gap: f64,
    /// `min ṽ(T)` over interior nodes.
    pub free_terminal_min: f64,
    /// `ṽ(T)` at the node nearest `L/2`.
    pub free_terminal_midpoint: f64,
}

/// Drives `u` with `draws` seeded random controls on `ω` plus every field in
/// `extra`, and compares the resulting `v` with the free evolution `ṽ` of `v₀`.
pub fn demo_even_obstruction(
    config: &PowerSystemConfig,
    draws: usize,
    seed: u64,
    extra: &[RealField],
) -> Result<ObstructionReport> {
    config.validate()?;
    if config.parity() != Parity::Even {
        return Err(Error::config("n", "obstruction applies to even powers"));
    }
    if config.v0.iter().any(|&v| v < 0.0) || config.v0.iter().all(|&v| v == 0.0) {
        return Err(Error::config(
            "v0",
            "must be nonnegative and not identically zero",
        ));
    }
    let g = config.grids;
    let u_solver = HeatSolver::new(&config.u_operator, &g, config.scheme)?;
    let v_solver = HeatSolver::new(&config.v_operator, &g, config.scheme)?;
    if !v_solver.is_monotone() {
        return Err(Error::config(
            "scheme",
            "comparison needs implicit Euler with no drift and nonnegative reaction",
        ));
    }
    let free = v_solver.forward_free(&config.v0)?;
    let inside: Vec<bool> = g
        .space
        .nodes()
        .iter()
        .map(|&x| config.omega.contains(x))
        .collect();
    let n = config.power as i32;

    let mut controls: Vec<RealField> = (0..draws)
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64);
            let amplitude = 10.0;
            SpaceTimeField::from_fn(g.nt() + 1, g.nx(), |_, i| {
                let v = rng.gen_range(-amplitude..=amplitude);
                if inside[i] {
                    v
                } else {
                    0.0
                }
            })
        })
        .collect();
    for h in extra {
        h.check_shape(&g)?;
        controls.push(h.clone());
    }

    let gaps: Vec<(usize, f64)> = controls
        .par_iter()
        .map(|h| {
            let u = u_solver.forward(&config.u0, h)?;
            let v = v_solver.forward(&config.v0, &u.map(|x| x.powi(n)))?;
            let mut count = 0;
            let mut least = f64::INFINITY;
            for (&a, &b) in v.data().iter().zip(free.data()) {
                let gap = a - b;
                if gap < 0.0 {
                    count += 1;
                }
                least = least.min(gap);
            }
            Ok((count, least))
        })
        .collect::<Result<_>>()?;

    let last = free.last_row();
    let mid = (0..g.nx())
        .min_by(|&a, &b| {
            let c = 0.5 * g.space.length();
            (g.space.x(a) - c)
                .abs()
                .total_cmp(&(g.space.x(b) - c).abs())
        })
        .unwrap_or(0);
    Ok(ObstructionReport {
        controls_tested: controls.len(),
        violations: gaps.iter().map(|g| g.0).sum(),
        min_gap: gaps.iter().map(|g| g.1).fold(f64::INFINITY, f64::min),
        free_terminal_min: last.iter().cloned().fold(f64::INFINITY, f64::min),
        free_terminal_midpoint: last[mid],
    })
}

/// `(p, ‖h‖_p / (‖u₀‖_∞ + ‖v₀‖_∞^{1/n}))`; zero data gives ratio 0.
pub fn scaling_certificate<S: Scalar>(
    report: &StrategyReport<S>,
    p_list: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let denom = report.u0_sup + report.v0_sup.powf(1.0 / report.power as f64);
    p_list
        .iter()
        .map(|&p| {
            let norm = lp_norm(&report.control, &report.grids, p)?;
            Ok((p, if denom == 0.0 { 0.0 } else { norm / denom }))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{SpatialGrid, TimeGrid};
    use std::f64::consts::PI;

    fn grids(nx: usize, nt: usize) -> Grids {
        Grids::new(
            SpatialGrid::unit(nx).unwrap(),
            TimeGrid::new(1.0, nt).unwrap(),
        )
    }

    fn config(
        power: u32,
        nx: usize,
        nt: usize,
        u0: impl Fn(f64) -> f64,
        v0: impl Fn(f64) -> f64,
    ) -> PowerSystemConfig {
        let g = grids(nx, nt);
        PowerSystemConfig::new(power, g, g.space.sample(u0), g.space.sample(v0)).unwrap()
    }

    #[test]
    fn complex_root_examples() {
        let z = even_complex_root(-16.0, 1).unwrap();
        assert!((z - Complex64::new(0.0, 4.0)).norm() < 1e-14);
        assert!((z * z - Complex64::new(-16.0, 0.0)).norm() < 1e-13);
        let w = even_complex_root(81.0, 1).unwrap();
        assert_eq!(w.im, 0.0);
        assert!((w.re - 9.0).abs() < 1e-13);
        for k in 1..4 {
            for h in [-7.5, -1e-3, 0.0, 2.0, 1e4] {
                let u = even_complex_root(h, k).unwrap();
                let back = u.powu(2 * k);
                assert!(
                    (back - Complex64::new(h, 0.0)).norm() <= 1e-12 * h.abs().max(1.0),
                    "{k} {h}"
                );
            }
        }
    }

    #[test]
    fn zero_data_gives_zero_everything() {
        let c = config(3, 31, 64, |_| 0.0, |_| 0.0);
        let r = run_odd_strategy(&c).unwrap();
        assert_eq!(r.control.max_abs(), 0.0);
        assert_eq!(r.u.max_abs(), 0.0);
        assert_eq!(r.v.max_abs(), 0.0);
        for (_, ratio) in scaling_certificate(&r, &[2.0, 4.0]).unwrap() {
            assert_eq!(ratio, 0.0);
        }
    }

    #[test]
    fn phase1_with_zero_u_is_free_v() {
        let c = config(3, 31, 64, |_| 0.0, |x| x * (1.0 - x));
        let p = phase1_steer_u(&c).unwrap();
        assert_eq!(p.control.max_abs(), 0.0);
        let g = c.grids.half(false);
        let free = HeatSolver::new(&c.v_operator, &g, c.scheme)
            .unwrap()
            .forward_free(&c.v0)
            .unwrap();
        assert_eq!(p.v, free);
    }

    #[test]
    fn phase1_steers_u_to_rest() {
        let c = config(3, 63, 256, |x| (PI * x).sin(), |_| 0.0);
        let p = phase1_steer_u(&c).unwrap();
        assert!(p.flag.is_none(), "{:?}", p.flag);
        assert!(p.terminal_norm <= 1e-6);
        assert_eq!(
            p.control.row(0).iter().fold(0.0f64, |m, v| m.max(v.abs())),
            0.0
        );
        assert_eq!(
            p.control
                .last_row()
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs())),
            0.0
        );
    }

    #[test]
    fn phase2_zero_start_is_zero() {
        let c = config(3, 31, 64, |_| 0.0, |_| 0.0);
        let z = vec![0.0; 31];
        let out = phase2_odd(&c, &z, &z).unwrap();
        assert_eq!(out.source.max_abs(), 0.0);
        assert_eq!(out.root.max_abs(), 0.0);
        assert_eq!(out.report.control.max_abs(), 0.0);
    }

    #[test]
    fn odd_pipeline_reaches_rest() {
        let c = config(3, 63, 256, |x| (PI * x).sin(), |x| x * (1.0 - x));
        let r = run_odd_strategy(&c).unwrap();
        assert!(!r.is_flagged(), "{:?}", r.flags());
        assert!(r.final_residual() <= 1e-3 * 1.0, "{}", r.final_residual());
        assert!(r.phase2.coupling_defect <= 4.0 * f64::EPSILON);
        assert!(r.phase2.reconstruction_defect <= 1e-12);
        assert!(r.resimulation_defect <= 1e-10, "{}", r.resimulation_defect);
        let mid = c.grids.nt() / 2;
        assert_eq!(r.u.row(mid), r.phase1.u.last_row());
        assert_eq!(r.v.row(mid), r.phase1.v.last_row());
    }

    #[test]
    fn general_power_at_three_is_the_odd_pipeline() {
        let c = config(3, 31, 64, |x| (PI * x).sin(), |x| x * (1.0 - x));
        assert_eq!(
            run_odd_strategy(&c).unwrap(),
            run_general_power(&c).unwrap()
        );
    }

    #[test]
    fn odd_pipeline_rejects_even_power() {
        let c = config(2, 31, 64, |_| 0.0, |_| 0.0);
        assert!(matches!(run_odd_strategy(&c), Err(Error::Config { .. })));
        let c = config(3, 31, 64, |_| 0.0, |_| 0.0);
        assert!(matches!(run_even_complex(&c), Err(Error::Config { .. })));
    }

    #[test]
    fn square_signed_power_pipeline() {
        let c = config(2, 63, 256, |x| (PI * x).sin(), |x| x * (1.0 - x));
        let r = run_general_power(&c).unwrap();
        assert!(r.final_residual() <= 1e-3, "{}", r.final_residual());
        assert!(
            r.phase2.root.data().iter().any(|&v| v < 0.0)
                || r.phase2.source.data().iter().all(|&v| v >= 0.0)
        );
    }

    #[test]
    fn even_complex_pipeline() {
        let c = config(2, 63, 256, |x| (PI * x).sin(), |x| x * (1.0 - x));
        let r = run_even_complex(&c).unwrap();
        assert!(r.phase2.coupling_defect <= 1e-10);
        assert!(r.final_v <= 1e-3, "{}", r.final_v);
    }

    #[test]
    fn homogeneity_in_v0() {
        let base = config(3, 31, 128, |_| 0.0, |x| x * (1.0 - x));
        let r1 = run_odd_strategy(&base).unwrap();
        let r8 = run_odd_strategy(
            &base
                .with_initial(base.u0.clone(), base.v0.iter().map(|v| 8.0 * v).collect())
                .unwrap(),
        )
        .unwrap();
        let s = r1.phase2.source.max_abs();
        let gap = max_gap(&r8.phase2.source, &r1.phase2.source.scale(8.0));
        assert!(gap <= 1e-6 * 8.0 * s, "{gap}");
        let gap = max_gap(&r8.phase2.root, &r1.phase2.root.scale(2.0));
        assert!(gap <= 1e-6 * 2.0 * r1.phase2.root.max_abs(), "{gap}");
    }

    #[test]
    fn obstruction_holds() {
        let c = config(2, 31, 64, |_| 0.0, |x| (PI * x).sin());
        let rep = demo_even_obstruction(&c, 8, 3, &[]).unwrap();
        assert_eq!(rep.controls_tested, 8);
        assert_eq!(rep.violations, 0);
        assert!(rep.free_terminal_min > 0.0);
    }

    #[test]
    fn obstruction_with_zero_control_is_exact() {
        let c = config(2, 31, 64, |_| 0.0, |x| (PI * x).sin());
        let rep = demo_even_obstruction(&c, 0, 0, &[c.grids.zeros()]).unwrap();
        assert_eq!(rep.min_gap, 0.0);
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn obstruction_needs_monotone_scheme() {
        let mut c = config(2, 31, 64, |_| 0.0, |x| (PI * x).sin());
        c.scheme = Scheme::CrankNicolson;
        assert!(demo_even_obstruction(&c, 1, 0, &[]).is_err());
    }
}
