//! Carleman weights `e^{-sρη}` and the empirical ratios of the weighted
//! inequalities they enter.

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{log_sum_exp, Cutoff, Grids, Interval, RealField, SpaceTimeField};
use crate::heat::HeatSolver;

/// Sobolev exponents `p_{-1} = 2, p_0, …` until the first exceeding `2k+2`.
///
/// `None` stands for `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentTable {
    pub dim: u32,
    pub k: u32,
    pub exponents: Vec<Option<Ratio<i64>>>,
    pub n0: u32,
    pub m: u32,
}

impl ExponentTable {
    /// `p_n` for `n ≥ -1`.
    pub fn p(&self, n: i32) -> Option<Ratio<i64>> {
        self.exponents[(n + 1) as usize]
    }
}

/// Builds the exponent recursion with exact rational arithmetic.
pub fn exponent_table(dim: u32, k: u32) -> Result<ExponentTable> {
    if dim == 0 || k == 0 {
        return Err(Error::Domain("exponent table needs N ≥ 1 and k ≥ 1".into()));
    }
    let target = Ratio::from_integer(2 * k as i64 + 2);
    let crit = Ratio::from_integer(dim as i64 + 2);
    let mut exponents = vec![Some(Ratio::from_integer(2))];
    let mut n0 = 0u32;
    loop {
        let prev = exponents.last().copied().flatten();
        let next = match prev {
            None => None,
            Some(p) if p < crit => Some(crit * p / (crit - p)),
            Some(p) if p == crit => Some(p * 2),
            Some(_) => None,
        };
        exponents.push(next);
        match next {
            None => break,
            Some(p) if p > target => break,
            Some(_) => n0 += 1,
        }
    }
    Ok(ExponentTable {
        dim,
        k,
        exponents,
        n0,
        m: 4 * n0 + 1,
    })
}

/// Carleman data on one grid: `ψ`, `ρ = e^{2λ max ψ} − e^{λψ}`, `η = 1/(t(T−t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSystem {
    pub s: f64,
    pub lambda: f64,
    pub psi: Vec<f64>,
    pub rho: Vec<f64>,
    /// `+∞` at the two end nodes.
    pub eta: Vec<f64>,
    pub k: u32,
    pub m: u32,
    pub exponents: ExponentTable,
    pub omega1: Interval,
    grids: Grids,
}

/// Quartic with `ψ(0) = ψ(L) = 0`, single maximum 1 at `center`.
///
/// `ψ' = K (c − x)(1 + β((x − a)/L)²)` where the anchor `a` is the far end
/// and `β ≥ 0` makes `ψ(L) = 0`. Needs `c ∈ (L/4, 3L/4)`.
fn quartic_profile(length: f64, center: f64) -> Result<impl Fn(f64) -> f64> {
    let l = length;
    if !(center > 0.25 * l && center < 0.75 * l) {
        return Err(Error::config(
            "omega1",
            "center must lie in (L/4, 3L/4) for the quartic weight profile",
        ));
    }
    let (anchor, beta) = if center <= 0.5 * l {
        (l, 12.0 * (0.5 * l - center) / (4.0 * center - l))
    } else {
        (0.0, 12.0 * (center - 0.5 * l) / (3.0 * l - 4.0 * center))
    };
    let d = center - anchor;
    let b = beta / (l * l);
    let prim =
        move |z: f64| d * z - 0.5 * z * z + b * d * z * z * z / 3.0 - 0.25 * b * z * z * z * z;
    let base = prim(-anchor);
    let peak = prim(center - anchor) - base;
    Ok(move |x: f64| (prim(x - anchor) - base) / peak)
}

impl WeightSystem {
    pub fn build(grids: &Grids, omega1: Interval, s: f64, lambda: f64, k: u32) -> Result<Self> {
        if !(s >= 1.0 && s.is_finite()) {
            return Err(Error::config("s", "Carleman parameter must be at least 1"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::config("lambda", "must be positive"));
        }
        let l = grids.space.length();
        if !(omega1.lo > 0.0 && omega1.hi < l && omega1.lo < omega1.hi) {
            return Err(Error::config("omega1", "must lie strictly inside (0, L)"));
        }
        let profile = quartic_profile(l, omega1.center())?;
        let psi = grids.space.sample(&profile);
        let top = (2.0 * lambda).exp();
        let rho = psi.iter().map(|&p| top - (lambda * p).exp()).collect();
        let nt = grids.nt();
        let horizon = grids.time.horizon();
        let eta = (0..=nt)
            .map(|j| {
                if j == 0 || j == nt {
                    f64::INFINITY
                } else {
                    let t = grids.time.local_t(j);
                    1.0 / (t * (horizon - t))
                }
            })
            .collect();
        let exponents = exponent_table(1, k.max(1))?;
        Ok(Self {
            s,
            lambda,
            psi,
            rho,
            eta,
            k,
            m: exponents.m,
            exponents,
            omega1,
            grids: *grids,
        })
    }

    pub fn grids(&self) -> &Grids {
        &self.grids
    }

    /// `ln( e^{-a·sρη} (sη)^b )`; `−∞` at the end nodes.
    pub fn log_weight(&self, j: usize, i: usize, a: f64, b: f64) -> f64 {
        let eta = self.eta[j];
        if eta.is_infinite() {
            return f64::NEG_INFINITY;
        }
        -a * self.s * self.rho[i] * eta + b * (self.s * eta).ln()
    }

    pub fn log_weight_field(&self, a: f64, b: f64) -> RealField {
        SpaceTimeField::from_fn(self.eta.len(), self.rho.len(), |j, i| {
            self.log_weight(j, i, a, b)
        })
    }

    /// Node index where `ρ` is smallest.
    pub fn argmin_rho(&self) -> usize {
        let mut best = 0;
        for (i, &r) in self.rho.iter().enumerate() {
            if r < self.rho[best] {
                best = i;
            }
        }
        best
    }

    fn in_omega1(&self, i: usize) -> bool {
        self.omega1.contains_closed(self.grids.space.x(i))
    }
}

fn centered_gradient(row: &[f64], dx: f64) -> Vec<f64> {
    let n = row.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { row[i - 1] } else { 0.0 };
            let right = if i + 1 < n { row[i + 1] } else { 0.0 };
            (right - left) / (2.0 * dx)
        })
        .collect()
}

fn ln_abs(v: f64) -> f64 {
    if v == 0.0 {
        f64::NEG_INFINITY
    } else {
        v.abs().ln()
    }
}

/// `exp(lhs − rhs)` of two log-integrals with the conventions `0/0 = 0`, `x/0 = ∞`.
fn ratio_from_logs(lhs: f64, rhs: f64) -> f64 {
    if lhs == f64::NEG_INFINITY {
        0.0
    } else if rhs == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        (lhs - rhs).exp()
    }
}

struct RatioExponents {
    scale: f64,
    value_power: f64,
    gradient_power: f64,
    observed_power: f64,
    p: f64,
}

fn weighted_ratio(
    ws: &WeightSystem,
    solver: &HeatSolver,
    phi_t: &[f64],
    e: RatioExponents,
) -> Result<f64> {
    let g = &ws.grids;
    let phi = solver.adjoint(phi_t)?.state;
    let dx = g.space.dx();
    let dt = g.time.dt();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for j in 1..g.nt() {
        let grad = centered_gradient(phi.row(j), dx);
        for i in 0..g.nx() {
            let base = (dt * g.space.weight(i)).ln();
            let lv = e.p * ln_abs(phi.get(j, i));
            let lg = e.p * ln_abs(grad[i]);
            lhs.push(base + ws.log_weight(j, i, e.scale, e.value_power) + lv);
            lhs.push(base + ws.log_weight(j, i, e.scale, e.gradient_power) + lg);
            if ws.in_omega1(i) {
                rhs.push(base + ws.log_weight(j, i, e.scale, e.observed_power) + lv);
            }
        }
    }
    Ok(ratio_from_logs(log_sum_exp(&lhs), log_sum_exp(&rhs)))
}

/// Left over right side of the `L²` Carleman inequality for the adjoint from `φ_T`.
pub fn carleman_ratio_l2(ws: &WeightSystem, solver: &HeatSolver, phi_t: &[f64]) -> Result<f64> {
    weighted_ratio(
        ws,
        solver,
        phi_t,
        RatioExponents {
            scale: 1.0,
            value_power: 3.0,
            gradient_power: 1.0,
            observed_power: 3.0,
            p: 2.0,
        },
    )
}

/// Left over right side of the `L^{2k+2}` Carleman inequality.
pub fn carleman_ratio_l2kp2(ws: &WeightSystem, solver: &HeatSolver, phi_t: &[f64]) -> Result<f64> {
    let k1 = ws.k as f64 + 1.0;
    let m = ws.m as f64;
    weighted_ratio(
        ws,
        solver,
        phi_t,
        RatioExponents {
            scale: k1,
            value_power: -k1 * m,
            gradient_power: -k1 * (m + 2.0),
            observed_power: 3.0 * k1,
            p: 2.0 * k1,
        },
    )
}

/// Natural log of the observability ratio; `−∞` for `φ_T = 0`.
pub fn log_observability_ratio(
    ws: &WeightSystem,
    cutoff: &Cutoff,
    solver: &HeatSolver,
    phi_t: &[f64],
) -> Result<f64> {
    let g = &ws.grids;
    let p = 2.0 * (ws.k as f64 + 1.0);
    let k1 = ws.k as f64 + 1.0;
    let phi = solver.adjoint(phi_t)?.state;
    let num: Vec<f64> = (0..g.nx())
        .map(|i| g.space.weight(i).ln() + p * ln_abs(phi.get(0, i)))
        .collect();
    let dt = g.time.dt();
    let mut den = Vec::new();
    for j in 1..g.nt() {
        for i in 0..g.nx() {
            den.push(
                (dt * g.space.weight(i)).ln()
                    + p * ln_abs(cutoff.chi[i])
                    + ws.log_weight(j, i, k1, 3.0 * k1)
                    + p * ln_abs(phi.get(j, i)),
            );
        }
    }
    let (n, d) = (log_sum_exp(&num), log_sum_exp(&den));
    Ok(if n == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if d == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        n - d
    })
}

/// `‖φ(0)‖^{2k+2}_{2k+2}` over the localized weighted integral. Overflows to `+∞` for large `s`.
pub fn observability_ratio(
    ws: &WeightSystem,
    cutoff: &Cutoff,
    solver: &HeatSolver,
    phi_t: &[f64],
) -> Result<f64> {
    let l = log_observability_ratio(ws, cutoff, solver, phi_t)?;
    Ok(if l == f64::NEG_INFINITY { 0.0 } else { l.exp() })
}

/// Maxima over random draws of the three ratios at one `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSample {
    pub s: f64,
    pub l2_max: f64,
    pub l2kp2_max: f64,
    pub log_observability_max: f64,
}

/// `φ_T` with independent uniform node values in `[-1, 1]`, one stream per draw.
pub fn random_terminal(nx: usize, seed: u64, draw: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    (0..nx).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Monte-Carlo maxima of the ratios for each `s`.
#[allow(clippy::too_many_arguments)]
pub fn ratio_sweep(
    grids: &Grids,
    solver: &HeatSolver,
    cutoff: &Cutoff,
    omega1: Interval,
    lambda: f64,
    k: u32,
    s_values: &[f64],
    draws: usize,
    seed: u64,
) -> Result<Vec<RatioSample>> {
    let terminals: Vec<Vec<f64>> = (0..draws as u64)
        .map(|d| random_terminal(grids.nx(), seed, d))
        .collect();
    s_values
        .iter()
        .map(|&s| {
            let ws = WeightSystem::build(grids, omega1, s, lambda, k)?;
            let rows: Vec<(f64, f64, f64)> = terminals
                .par_iter()
                .map(|phi| {
                    Ok((
                        carleman_ratio_l2(&ws, solver, phi)?,
                        carleman_ratio_l2kp2(&ws, solver, phi)?,
                        log_observability_ratio(&ws, cutoff, solver, phi)?,
                    ))
                })
                .collect::<Result<_>>()?;
            let fold = |f: fn(&(f64, f64, f64)) -> f64| {
                rows.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
            };
            Ok(RatioSample {
                s,
                l2_max: fold(|r| r.0),
                l2kp2_max: fold(|r| r.1),
                log_observability_max: fold(|r| r.2),
            })
        })
        .collect()
}

/// The candidate with the smallest empirical observability constant.
pub fn select_s(samples: &[RatioSample]) -> Option<f64> {
    samples
        .iter()
        .filter(|r| r.log_observability_max.is_finite())
        .min_by(|a, b| a.log_observability_max.total_cmp(&b.log_observability_max))
        .map(|r| r.s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_cutoff, SpatialGrid, TimeGrid};
    use crate::heat::{ParabolicOperator, Scheme};
    use proptest::prelude::*;

    fn setup(nx: usize, nt: usize) -> (Grids, HeatSolver) {
        let g = Grids::new(
            SpatialGrid::unit(nx).unwrap(),
            TimeGrid::new(1.0, nt).unwrap(),
        );
        let s = HeatSolver::new(&ParabolicOperator::heat(nx), &g, Scheme::ImplicitEuler).unwrap();
        (g, s)
    }

    fn r(n: i64, d: i64) -> Option<Ratio<i64>> {
        Some(Ratio::new(n, d))
    }

    #[test]
    fn exponent_tables() {
        let t = exponent_table(1, 1).unwrap();
        assert_eq!((t.n0, t.m), (0, 1));
        assert_eq!(t.p(0), r(6, 1));
        let t = exponent_table(3, 1).unwrap();
        assert_eq!((t.n0, t.m), (1, 5));
        assert_eq!(t.p(0), r(10, 3));
        assert_eq!(t.p(1), r(10, 1));
        let t = exponent_table(1, 2).unwrap();
        assert_eq!((t.n0, t.m), (1, 5));
        assert_eq!(t.p(1), None);
        let t = exponent_table(2, 1).unwrap();
        assert_eq!(t.p(0), r(4, 1));
        assert_eq!(t.p(1), r(8, 1));
        assert_eq!(t.n0, 1);
    }

    #[test]
    fn exponent_tables_total() {
        for n in 1..=4 {
            for k in 1..=5 {
                let t = exponent_table(n, k).unwrap();
                let target = Ratio::from_integer(2 * k as i64 + 2);
                let last = t.p(t.n0 as i32);
                assert!(last.map_or(true, |p| p > target));
                if t.n0 > 0 {
                    assert!(t.p(t.n0 as i32 - 1).unwrap() <= target);
                }
                for w in t.exponents.windows(2) {
                    if let (Some(a), Some(b)) = (w[0], w[1]) {
                        assert!(b > a);
                    }
                }
                assert_eq!(t, exponent_table(n, k).unwrap());
            }
        }
    }

    #[test]
    fn profile_shape() {
        let (g, _) = setup(63, 8);
        for c in [0.3, 0.5, 0.62] {
            let w =
                WeightSystem::build(&g, Interval::new(c - 0.05, c + 0.05), 1.0, 1.0, 1).unwrap();
            let f = quartic_profile(1.0, c).unwrap();
            assert!(f(0.0).abs() < 1e-14 && f(1.0).abs() < 1e-12);
            assert!((f(c) - 1.0).abs() < 1e-14);
            assert!(w.psi.iter().all(|&p| p > 0.0 && p <= 1.0 + 1e-14));
            let top = (2.0f64).exp();
            assert!(w.rho.iter().all(|&r| r > 0.0 && r < top - 1.0 + 1e-12));
            let imin = w.argmin_rho();
            let imax = (0..63)
                .max_by(|&a, &b| w.psi[a].total_cmp(&w.psi[b]))
                .unwrap();
            assert_eq!(imin, imax);
            assert!((g.space.x(imin) - c).abs() <= g.space.dx());
            // derivative stays away from zero outside the observation interval
            for i in 0..62 {
                let xm = 0.5 * (g.space.x(i) + g.space.x(i + 1));
                if (xm - c).abs() > 0.05 {
                    assert!((w.psi[i + 1] - w.psi[i]).abs() / g.space.dx() > 0.1);
                }
            }
        }
        assert!(quartic_profile(1.0, 0.2).is_err());
    }

    #[test]
    fn weights_vanish_at_time_ends() {
        let (g, _) = setup(15, 8);
        let w = WeightSystem::build(&g, Interval::new(0.4, 0.6), 2.0, 1.0, 1).unwrap();
        let f = w.log_weight_field(0.5, 1.5);
        for i in 0..15 {
            assert_eq!(crate::grid::clamped_exp(f.get(0, i)), 0.0);
            assert_eq!(crate::grid::clamped_exp(f.get(8, i)), 0.0);
        }
        assert!((w.eta[4] - 4.0).abs() < 1e-14);
        // −sρη at T/2 with s = 2, ρ = 3 would be −24
        let rho = w.rho[7];
        assert!((w.log_weight(4, 7, 1.0, 0.0) + 2.0 * rho * 4.0).abs() < 1e-12);
        assert!((-2.0 * 3.0 * w.eta[4] + 24.0f64).abs() < 1e-12);
    }

    #[test]
    fn spread_decreases_with_lambda() {
        let (g, _) = setup(63, 8);
        let mut prev = f64::INFINITY;
        for lambda in [0.5, 1.0, 2.0, 4.0] {
            let w = WeightSystem::build(&g, Interval::new(0.4, 0.6), 1.0, lambda, 1).unwrap();
            let hi = w.rho.iter().cloned().fold(0.0, f64::max);
            let lo = w.rho.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(hi / lo < prev);
            prev = hi / lo;
        }
    }

    #[test]
    fn zero_terminal_gives_zero_ratios() {
        let (g, s) = setup(31, 32);
        let w = WeightSystem::build(&g, Interval::new(0.4, 0.6), 5.0, 1.0, 1).unwrap();
        let c = make_cutoff(
            &g.space,
            Interval::new(0.3, 0.7),
            Interval::new(0.4, 0.6),
            3,
        )
        .unwrap();
        let z = vec![0.0; 31];
        assert_eq!(carleman_ratio_l2(&w, &s, &z).unwrap(), 0.0);
        assert_eq!(carleman_ratio_l2kp2(&w, &s, &z).unwrap(), 0.0);
        assert_eq!(observability_ratio(&w, &c, &s, &z).unwrap(), 0.0);
    }

    #[test]
    fn dissipation_backward() {
        let (g, s) = setup(31, 64);
        let phi = s.adjoint(&random_terminal(31, 7, 0)).unwrap().state;
        let norms: Vec<f64> = (0..=64)
            .map(|j| crate::grid::space_lp_norm(phi.row(j), &g.space, 4.0).unwrap())
            .collect();
        for j in 0..64 {
            assert!(norms[j] <= norms[j + 1] * (1.0 + 1e-14));
        }
    }

    #[test]
    fn localized_terminal_has_small_l2_ratio() {
        let (g, s) = setup(63, 128);
        let w = WeightSystem::build(&g, Interval::new(0.4, 0.6), 20.0, 1.0, 1).unwrap();
        let phi = g
            .space
            .sample(|x| if (0.45..0.55).contains(&x) { 1.0 } else { 0.0 });
        let r = carleman_ratio_l2(&w, &s, &phi).unwrap();
        assert!(r.is_finite() && r <= 10.0, "{r}");
    }

    #[test]
    fn ratios_finite_for_large_s() {
        let (g, s) = setup(63, 128);
        let phi = random_terminal(63, 3, 1);
        for sv in [5.0, 40.0] {
            let w = WeightSystem::build(&g, Interval::new(0.4, 0.6), sv, 1.0, 1).unwrap();
            assert!(carleman_ratio_l2(&w, &s, &phi).unwrap().is_finite());
            assert!(carleman_ratio_l2kp2(&w, &s, &phi).unwrap().is_finite());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn ratios_scale_invariant(seed in any::<u64>(), c in 0.01f64..100.0) {
            let (g, s) = setup(31, 32);
            let w = WeightSystem::build(&g, Interval::new(0.4, 0.6), 5.0, 1.0, 1).unwrap();
            let phi = random_terminal(31, seed, 0);
            let scaled: Vec<f64> = phi.iter().map(|v| -c * v).collect();
            let a = carleman_ratio_l2(&w, &s, &phi).unwrap();
            let b = carleman_ratio_l2(&w, &s, &scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a);
            let a = carleman_ratio_l2kp2(&w, &s, &phi).unwrap();
            let b = carleman_ratio_l2kp2(&w, &s, &scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a);
        }
    }
}
