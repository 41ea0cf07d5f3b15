//! Forward and adjoint solvers for `∂t − d∂xx + b∂x + a` with homogeneous
//! Dirichlet conditions.
//!
//! The adjoint is the exact transpose of the discrete forward map, so the
//! duality identity holds to round-off for both schemes.

pub mod tridiag;

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grids, SpaceTimeField};
pub use tridiag::{Tridiagonal, TridiagonalLu};

/// Field values: `f64` or `Complex64`. Operator coefficients are always real.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + 'static
{
    fn zero() -> Self;
    fn from_real(x: f64) -> Self;
    fn modulus(self) -> f64;
    fn re(self) -> f64;
    fn im(self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn re(self) -> f64 {
        self
    }
    fn im(self) -> f64 {
        0.0
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn re(self) -> f64 {
        self.re
    }
    fn im(self) -> f64 {
        self.im
    }
}

/// Bilinear pairing `dx·Σ a_i b_i` (no conjugation).
pub fn pairing<S: Scalar>(a: &[S], b: &[S], dx: f64) -> S {
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc * dx
}

/// `∂t − d∂xx + b∂x + a` with time-independent real coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicOperator {
    pub diffusion: f64,
    pub drift: Vec<f64>,
    pub reaction: Vec<f64>,
}

impl ParabolicOperator {
    pub fn new(diffusion: f64, drift: Vec<f64>, reaction: Vec<f64>) -> Result<Self> {
        if !(diffusion > 0.0 && diffusion.is_finite()) {
            return Err(Error::config("diffusion", "must be positive and finite"));
        }
        if drift.len() != reaction.len() {
            return Err(Error::shape(drift.len(), reaction.len()));
        }
        if drift.iter().chain(&reaction).any(|v| !v.is_finite()) {
            return Err(Error::config(
                "coefficients",
                "drift and reaction must be finite",
            ));
        }
        Ok(Self {
            diffusion,
            drift,
            reaction,
        })
    }

    /// Pure heat operator `∂t − ∂xx`.
    pub fn heat(nx: usize) -> Self {
        Self {
            diffusion: 1.0,
            drift: vec![0.0; nx],
            reaction: vec![0.0; nx],
        }
    }

    pub fn is_pure_diffusion(&self) -> bool {
        self.drift.iter().all(|&b| b == 0.0)
    }

    /// Spatial part `−d D2 + b D1 + a` on interior nodes.
    pub fn spatial_matrix(&self, dx: f64) -> Tridiagonal {
        let n = self.drift.len();
        let k = self.diffusion / (dx * dx);
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut diag = vec![0.0; n];
        for i in 0..n {
            let c = self.drift[i] / (2.0 * dx);
            diag[i] = 2.0 * k + self.reaction[i];
            if i > 0 {
                lower[i] = -k - c;
            }
            if i + 1 < n {
                upper[i] = -k + c;
            }
        }
        Tridiagonal { lower, diag, upper }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    ImplicitEuler,
    CrankNicolson,
}

impl Scheme {
    fn theta(self) -> f64 {
        match self {
            Scheme::ImplicitEuler => 1.0,
            Scheme::CrankNicolson => 0.5,
        }
    }
}

/// Adjoint trajectory together with the weights that pair it with a source.
///
/// For any `y0`, `g`: `⟨y(T), φ_T⟩ = ⟨y0, state(0)⟩ + Σ_j dt·⟨g_j, source_dual_j⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSolution<S = f64> {
    pub state: SpaceTimeField<S>,
    pub source_dual: SpaceTimeField<S>,
}

/// Assembled and factored one-step maps for a fixed operator, grid and scheme.
///
/// Step: `M y_j = N y_{j-1} + dt (θ g_j + (1-θ) g_{j-1})` with
/// `M = I + θ dt A`, `N = I − (1-θ) dt A`.
#[derive(Debug, Clone)]
pub struct HeatSolver {
    grids: Grids,
    scheme: Scheme,
    implicit: Tridiagonal,
    explicit: Tridiagonal,
    implicit_lu: TridiagonalLu,
    implicit_t_lu: TridiagonalLu,
    explicit_t: Tridiagonal,
    pure_diffusion: bool,
    nonnegative_reaction: bool,
}

impl HeatSolver {
    pub fn new(op: &ParabolicOperator, grids: &Grids, scheme: Scheme) -> Result<Self> {
        if op.drift.len() != grids.nx() {
            return Err(Error::shape(grids.nx(), op.drift.len()));
        }
        let a = op.spatial_matrix(grids.space.dx());
        let dt = grids.time.dt();
        let theta = scheme.theta();
        let build = |sign: f64, w: f64| Tridiagonal {
            lower: a.lower.iter().map(|v| sign * w * dt * v).collect(),
            diag: a.diag.iter().map(|v| 1.0 + sign * w * dt * v).collect(),
            upper: a.upper.iter().map(|v| sign * w * dt * v).collect(),
        };
        let implicit = build(1.0, theta);
        let explicit = build(-1.0, 1.0 - theta);
        let implicit_lu = implicit.factor()?;
        let implicit_t_lu = implicit.transpose().factor()?;
        let explicit_t = explicit.transpose();
        Ok(Self {
            grids: *grids,
            scheme,
            implicit,
            explicit,
            implicit_lu,
            implicit_t_lu,
            explicit_t,
            pure_diffusion: op.is_pure_diffusion(),
            nonnegative_reaction: op.reaction.iter().all(|&a| a >= 0.0),
        })
    }

    pub fn grids(&self) -> &Grids {
        &self.grids
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Implicit Euler with `b = 0`, `a ≥ 0`: every step inverse is entrywise nonnegative.
    pub fn is_monotone(&self) -> bool {
        self.scheme == Scheme::ImplicitEuler && self.pure_diffusion && self.nonnegative_reaction
    }

    /// One step from `prev` with sources at the two ends of the step.
    pub fn step<S: Scalar>(&self, prev: &[S], g_prev: &[S], g_next: &[S], out: &mut [S]) {
        let dt = self.grids.time.dt();
        match self.scheme {
            Scheme::ImplicitEuler => {
                for i in 0..prev.len() {
                    out[i] = prev[i] + g_next[i] * dt;
                }
            }
            Scheme::CrankNicolson => {
                self.explicit.mul_vec(prev, out);
                for i in 0..prev.len() {
                    out[i] += (g_prev[i] + g_next[i]) * (0.5 * dt);
                }
            }
        }
        self.implicit_lu.solve(out);
    }

    pub fn forward<S: Scalar>(
        &self,
        y0: &[S],
        source: &SpaceTimeField<S>,
    ) -> Result<SpaceTimeField<S>> {
        source.check_shape(&self.grids)?;
        self.forward_with(y0, |j| source.row(j))
    }

    /// Free evolution of `y0`.
    pub fn forward_free<S: Scalar>(&self, y0: &[S]) -> Result<SpaceTimeField<S>> {
        let zero = vec![S::zero(); self.grids.nx()];
        self.forward_with(y0, |_| &zero)
    }

    /// Terminal value only, without storing the trajectory.
    pub fn terminal<S: Scalar>(&self, y0: &[S], source: &SpaceTimeField<S>) -> Result<Vec<S>> {
        source.check_shape(&self.grids)?;
        let nx = self.grids.nx();
        if y0.len() != nx {
            return Err(Error::shape(nx, y0.len()));
        }
        let mut y = y0.to_vec();
        let mut next = vec![S::zero(); nx];
        for j in 1..=self.grids.nt() {
            self.step(&y, source.row(j - 1), source.row(j), &mut next);
            std::mem::swap(&mut y, &mut next);
        }
        Ok(y)
    }

    fn forward_with<'a, S: Scalar>(
        &self,
        y0: &[S],
        source: impl Fn(usize) -> &'a [S],
    ) -> Result<SpaceTimeField<S>> {
        let nx = self.grids.nx();
        if y0.len() != nx {
            return Err(Error::shape(nx, y0.len()));
        }
        let nt = self.grids.nt();
        let mut y = SpaceTimeField::zeros(nt + 1, nx);
        y.row_mut(0).copy_from_slice(y0);
        let mut next = vec![S::zero(); nx];
        for j in 1..=nt {
            self.step(y.row(j - 1), source(j - 1), source(j), &mut next);
            y.row_mut(j).copy_from_slice(&next);
        }
        Ok(y)
    }

    /// Transposed backward sweep from `φ_T`.
    pub fn adjoint<S: Scalar>(&self, phi_t: &[S]) -> Result<AdjointSolution<S>> {
        let nx = self.grids.nx();
        if phi_t.len() != nx {
            return Err(Error::shape(nx, phi_t.len()));
        }
        let nt = self.grids.nt();
        let mut state = SpaceTimeField::zeros(nt + 1, nx);
        let mut dual = SpaceTimeField::zeros(nt + 1, nx);
        state.row_mut(nt).copy_from_slice(phi_t);
        let mut r = vec![S::zero(); nx];
        match self.scheme {
            Scheme::ImplicitEuler => {
                for j in (1..=nt).rev() {
                    r.copy_from_slice(state.row(j));
                    self.implicit_t_lu.solve(&mut r);
                    state.row_mut(j - 1).copy_from_slice(&r);
                    dual.row_mut(j).copy_from_slice(&r);
                }
            }
            Scheme::CrankNicolson => {
                let mut r_next = vec![S::zero(); nx];
                let mut p = vec![S::zero(); nx];
                for j in (1..=nt).rev() {
                    r.copy_from_slice(state.row(j));
                    self.implicit_t_lu.solve(&mut r);
                    self.explicit_t.mul_vec(&r, &mut p);
                    state.row_mut(j - 1).copy_from_slice(&p);
                    let row = dual.row_mut(j);
                    for i in 0..nx {
                        row[i] = (r[i] + r_next[i]) * 0.5;
                    }
                    std::mem::swap(&mut r, &mut r_next);
                }
                let row = dual.row_mut(0);
                for i in 0..nx {
                    row[i] = r_next[i] * 0.5;
                }
            }
        }
        Ok(AdjointSolution {
            state,
            source_dual: dual,
        })
    }

    /// Source `g` with `forward(u(t_0), g) = u`; `g_0 = 0`.
    pub fn apply_operator<S: Scalar>(&self, u: &SpaceTimeField<S>) -> Result<SpaceTimeField<S>> {
        u.check_shape(&self.grids)?;
        let nx = self.grids.nx();
        let nt = self.grids.nt();
        let dt = self.grids.time.dt();
        let mut g = SpaceTimeField::zeros(nt + 1, nx);
        let mut mu = vec![S::zero(); nx];
        let mut nu = vec![S::zero(); nx];
        for j in 1..=nt {
            self.implicit.mul_vec(u.row(j), &mut mu);
            match self.scheme {
                Scheme::ImplicitEuler => {
                    let prev = u.row(j - 1);
                    let row = g.row_mut(j);
                    for i in 0..nx {
                        row[i] = (mu[i] - prev[i]) / dt;
                    }
                }
                Scheme::CrankNicolson => {
                    self.explicit.mul_vec(u.row(j - 1), &mut nu);
                    let gp = g.row(j - 1).to_vec();
                    let row = g.row_mut(j);
                    for i in 0..nx {
                        row[i] = (mu[i] - nu[i]) * (2.0 / dt) - gp[i];
                    }
                }
            }
        }
        Ok(g)
    }

    /// Right side of the duality identity for a given source and adjoint.
    pub fn source_pairing<S: Scalar>(&self, g: &SpaceTimeField<S>, adj: &AdjointSolution<S>) -> S {
        let dx = self.grids.space.dx();
        let dt = self.grids.time.dt();
        let mut acc = S::zero();
        for j in 0..g.rows() {
            acc += pairing(g.row(j), adj.source_dual.row(j), dx);
        }
        acc * dt
    }
}

/// Forward solve with implicit Euler.
pub fn forward_solve<S: Scalar>(
    op: &ParabolicOperator,
    y0: &[S],
    source: &SpaceTimeField<S>,
    grids: &Grids,
) -> Result<SpaceTimeField<S>> {
    HeatSolver::new(op, grids, Scheme::ImplicitEuler)?.forward(y0, source)
}

/// Adjoint solve with implicit Euler.
pub fn adjoint_solve<S: Scalar>(
    op: &ParabolicOperator,
    phi_t: &[S],
    grids: &Grids,
) -> Result<AdjointSolution<S>> {
    HeatSolver::new(op, grids, Scheme::ImplicitEuler)?.adjoint(phi_t)
}

/// Inverse of the implicit-Euler stepping relation.
pub fn apply_heat_operator<S: Scalar>(
    op: &ParabolicOperator,
    u: &SpaceTimeField<S>,
    grids: &Grids,
) -> Result<SpaceTimeField<S>> {
    HeatSolver::new(op, grids, Scheme::ImplicitEuler)?.apply_operator(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{SpatialGrid, TimeGrid};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grids(nx: usize, t: f64, nt: usize) -> Grids {
        Grids::new(
            SpatialGrid::unit(nx).unwrap(),
            TimeGrid::new(t, nt).unwrap(),
        )
    }

    fn random_field(rng: &mut ChaCha8Rng, g: &Grids) -> SpaceTimeField {
        SpaceTimeField::from_fn(g.nt() + 1, g.nx(), |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn general_op(rng: &mut ChaCha8Rng, nx: usize) -> ParabolicOperator {
        ParabolicOperator::new(
            0.7,
            random_vec(rng, nx),
            (0..nx).map(|_| rng.gen_range(-1.0..2.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let g = grids(15, 1.0, 16);
        let s = HeatSolver::new(&ParabolicOperator::heat(15), &g, Scheme::ImplicitEuler).unwrap();
        let y = s.forward(&vec![0.0; 15], &g.zeros()).unwrap();
        assert_eq!(y.max_abs(), 0.0);
        let adj = s.adjoint(&vec![0.0; 15]).unwrap();
        assert_eq!(adj.state.max_abs(), 0.0);
        assert_eq!(s.apply_operator(&g.zeros::<f64>()).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn eigenmode_decay() {
        let g = grids(63, 0.1, 128);
        let y0 = g.space.sample(|x| (PI * x).sin());
        let y = forward_solve(&ParabolicOperator::heat(63), &y0, &g.zeros(), &g).unwrap();
        let peak = y.last_row().iter().cloned().fold(0.0, f64::max);
        assert!((peak - 0.37245).abs() <= 2e-3, "{peak}");
    }

    #[test]
    fn stationary_profile() {
        let g = grids(63, 20.0, 512);
        let ones = SpaceTimeField::from_fn(513, 63, |_, _| 1.0);
        let y = forward_solve(&ParabolicOperator::heat(63), &vec![0.0; 63], &ones, &g).unwrap();
        assert!((y.get(512, 31) - 0.125).abs() <= 2e-3);
    }

    #[test]
    fn heat_operator_of_t_sine() {
        let g = grids(63, 1.0, 256);
        let u = SpaceTimeField::from_fn(257, 63, |j, i| g.time.t(j) * (PI * g.space.x(i)).sin());
        let h = apply_heat_operator(&ParabolicOperator::heat(63), &u, &g).unwrap();
        for j in 1..=256 {
            for i in 0..63 {
                let exact = (PI * g.space.x(i)).sin() * (1.0 + PI * PI * g.time.t(j));
                assert!((h.get(j, i) - exact).abs() < 2e-2, "{j} {i}");
            }
        }
    }

    #[test]
    fn round_trip_both_schemes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = grids(31, 1.0, 64);
        let op = general_op(&mut rng, 31);
        for scheme in [Scheme::ImplicitEuler, Scheme::CrankNicolson] {
            let s = HeatSolver::new(&op, &g, scheme).unwrap();
            let mut u = random_field(&mut rng, &g);
            u.row_mut(0).fill(0.0);
            let h = s.apply_operator(&u).unwrap();
            let back = s.forward(&vec![0.0; 31], &h).unwrap();
            let err = back.zip_map(&u, |a, b| a - b).max_abs();
            assert!(err <= 1e-12, "{scheme:?} {err}");
        }
    }

    #[test]
    fn self_adjoint_step_runs_backward_like_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = grids(63, 1.0, 128);
        let op = ParabolicOperator::new(
            1.3,
            vec![0.0; 63],
            (0..63).map(|_| rng.gen_range(0.0..3.0)).collect(),
        )
        .unwrap();
        for scheme in [Scheme::ImplicitEuler, Scheme::CrankNicolson] {
            let s = HeatSolver::new(&op, &g, scheme).unwrap();
            let phi = random_vec(&mut rng, 63);
            let adj = s.adjoint(&phi).unwrap();
            let fwd = s.forward_free(&phi).unwrap();
            for j in 0..=128 {
                for i in 0..63 {
                    assert!((adj.state.get(128 - j, i) - fwd.get(j, i)).abs() <= 1e-12);
                }
            }
        }
    }

    fn duality_error<S: Scalar>(s: &HeatSolver, y0: &[S], g: &SpaceTimeField<S>, phi: &[S]) -> f64 {
        let dx = s.grids().space.dx();
        let y = s.forward(y0, g).unwrap();
        let adj = s.adjoint(phi).unwrap();
        let lhs = pairing(y.last_row(), phi, dx);
        let rhs = pairing(y0, adj.state.row(0), dx) + s.source_pairing(g, &adj);
        (lhs - rhs).modulus() / lhs.modulus().max(rhs.modulus()).max(1e-300)
    }

    #[test]
    fn duality_real_and_complex() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grids(63, 1.0, 128);
        let op = general_op(&mut rng, 63);
        for scheme in [Scheme::ImplicitEuler, Scheme::CrankNicolson] {
            let s = HeatSolver::new(&op, &g, scheme).unwrap();
            for _ in 0..10 {
                let y0 = random_vec(&mut rng, 63);
                let src = random_field(&mut rng, &g);
                let phi = random_vec(&mut rng, 63);
                assert!(duality_error(&s, &y0, &src, &phi) <= 1e-11);
                let y0c: Vec<Complex64> = y0.iter().map(|&v| Complex64::new(v, -0.5 * v)).collect();
                let srcc = src.map(|v| Complex64::new(0.3 * v, v));
                let phic: Vec<Complex64> = phi.iter().map(|&v| Complex64::new(v, 1.0)).collect();
                assert!(duality_error(&s, &y0c, &srcc, &phic) <= 1e-11);
            }
        }
    }

    #[test]
    fn singular_step_reports_error() {
        let g = grids(7, 1.0, 4);
        let dt = g.time.dt();
        let dx = g.space.dx();
        let a = -(1.0 / dt + 2.0 / (dx * dx));
        let op = ParabolicOperator::new(1.0, vec![0.0; 7], vec![a; 7]).unwrap();
        let r = HeatSolver::new(&op, &g, Scheme::ImplicitEuler);
        assert!(r.is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn comparison_principle(seed in any::<u64>(), react in 0.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = grids(15, 0.5, 16);
            let op = ParabolicOperator::new(1.0, vec![0.0; 15], vec![react; 15]).unwrap();
            let s = HeatSolver::new(&op, &g, Scheme::ImplicitEuler).unwrap();
            prop_assert!(s.is_monotone());
            let y0: Vec<f64> = (0..15).map(|_| rng.gen_range(0.0..1.0)).collect();
            let src = SpaceTimeField::from_fn(17, 15, |_, _| rng.gen_range(0.0..1.0));
            let y = s.forward(&y0, &src).unwrap();
            prop_assert!(y.data().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn forward_is_linear(seed in any::<u64>(), c in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = grids(15, 1.0, 8);
            let op = general_op(&mut rng, 15);
            let s = HeatSolver::new(&op, &g, Scheme::CrankNicolson).unwrap();
            let (a0, b0) = (random_vec(&mut rng, 15), random_vec(&mut rng, 15));
            let (ga, gb) = (random_field(&mut rng, &g), random_field(&mut rng, &g));
            let ya = s.forward(&a0, &ga).unwrap();
            let yb = s.forward(&b0, &gb).unwrap();
            let mix0: Vec<f64> = a0.iter().zip(&b0).map(|(x, y)| x + c * y).collect();
            let ymix = s.forward(&mix0, &ga.zip_map(&gb, |x, y| x + c * y)).unwrap();
            let err = ymix.zip_map(&ya.zip_map(&yb, |x, y| x + c * y), |x, y| x - y).max_abs();
            prop_assert!(err <= 1e-12 * (1.0 + ymix.max_abs()));
        }

        #[test]
        fn duality_holds(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = grids(9, 0.7, 10);
            let op = general_op(&mut rng, 9);
            let s = HeatSolver::new(&op, &g, Scheme::ImplicitEuler).unwrap();
            let e = duality_error(&s, &random_vec(&mut rng, 9), &random_field(&mut rng, &g), &random_vec(&mut rng, 9));
            prop_assert!(e <= 1e-11);
        }

        #[test]
        fn linf_stability(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = grids(15, 1.0, 16);
            let s = HeatSolver::new(&ParabolicOperator::heat(15), &g, Scheme::ImplicitEuler).unwrap();
            let y0 = random_vec(&mut rng, 15);
            let src = random_field(&mut rng, &g);
            let y = s.forward(&y0, &src).unwrap();
            let bound = y0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
                + (1..=16).map(|j| g.time.dt() * src.row(j).iter().fold(0.0f64, |m, v| m.max(v.abs()))).sum::<f64>();
            prop_assert!(y.max_abs() <= bound * (1.0 + 1e-12));
        }
    }
}
