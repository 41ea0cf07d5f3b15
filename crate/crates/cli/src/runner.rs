use std::collections::BTreeMap;
use std::time::Instant;

use rumheat::carleman::{exponent_table, ratio_sweep, select_s};
use rumheat::grid::{make_cutoff, Grids, Interval, SpatialGrid, TimeGrid};
use rumheat::rum::{
    el_residual, epsilon_sweep, solve_rum, xp_norm_diagnostic, RumOptions, RumProblem,
};
use rumheat::strategy::{
    demo_even_obstruction, run_even_complex, run_general_power, run_odd_strategy,
    scaling_certificate, PowerSystemConfig, StrategyReport, CONTROL_NORM_EXPONENTS,
};
use rumheat::trajectory::{
    build_reference_trajectory, resimulate, NonlinearitySpec, Polynomial, TrajectorySetup,
};
use rumheat::{HeatSolver, ParabolicOperator, Scalar, Scheme, WeightSystem};
use serde::Serialize;

use crate::config::{RunConfig, Scenario, SchemeTag};
use crate::error::CliResult;
use crate::output::{field_csv, num, FileEntry, OutputDir, Summary};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifact {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub artifact: Artifact,
    pub wall_clock_seconds: f64,
    pub flags: Vec<String>,
    pub config: RunConfig,
    pub metrics: BTreeMap<String, f64>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }
}

/// Runs one scenario, writes every output file and the manifest.
pub fn run(config: &RunConfig) -> CliResult<RunManifest> {
    config.validate()?;
    let started = Instant::now();
    let mut out = OutputDir::create(&config.out)?;
    let mut summary = Summary::default();
    let mut flags = Vec::new();
    let ctx = Context::new(config)?;
    match config.scenario {
        Scenario::Rum => ctx.rum(&mut out, &mut summary, &mut flags)?,
        Scenario::Sweep => ctx.sweep(&mut out, &mut summary, &mut flags)?,
        Scenario::Odd => {
            let report = run_odd_strategy(&ctx.power_config(config.n)?)?;
            ctx.strategy(&report, &mut out, &mut summary, &mut flags)?
        }
        Scenario::Power => {
            let report = run_general_power(&ctx.power_config(config.n)?)?;
            ctx.strategy(&report, &mut out, &mut summary, &mut flags)?
        }
        Scenario::EvenComplex => {
            let report = run_even_complex(&ctx.power_config(config.n)?)?;
            ctx.strategy(&report, &mut out, &mut summary, &mut flags)?
        }
        Scenario::EvenReal => ctx.even_real(&mut out, &mut summary, &mut flags)?,
        Scenario::Carleman => ctx.carleman(&mut summary)?,
        Scenario::Trajectory => ctx.trajectory(&mut out, &mut summary, &mut flags)?,
    }
    out.write("summary.csv", &summary.to_csv())?;
    let manifest = RunManifest {
        artifact: Artifact {
            name: "rumheat".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        },
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        flags,
        config: config.clone(),
        metrics: summary.rows().iter().cloned().collect(),
        files: out.files().to_vec(),
    };
    let text = toml::to_string(&manifest).map_err(|e| crate::error::CliError::Config {
        field: "manifest".into(),
        reason: e.to_string(),
    })?;
    out.write("manifest.toml", &text)?;
    Ok(manifest)
}

struct Context<'a> {
    config: &'a RunConfig,
    grids: Grids,
    scheme: Scheme,
    omega: Interval,
    omega1: Interval,
    options: RumOptions,
}

fn interval(v: [f64; 2]) -> Interval {
    Interval::new(v[0], v[1])
}

impl<'a> Context<'a> {
    fn new(config: &'a RunConfig) -> CliResult<Self> {
        let grids = Grids::new(
            SpatialGrid::new(config.length, config.nx)?,
            TimeGrid::new(config.horizon, config.nt)?,
        );
        Ok(Self {
            config,
            grids,
            scheme: match config.scheme {
                SchemeTag::ImplicitEuler => Scheme::ImplicitEuler,
                SchemeTag::CrankNicolson => Scheme::CrankNicolson,
            },
            omega: interval(config.omega),
            omega1: interval(config.omega1),
            options: RumOptions {
                tol: config.tol,
                max_iter: config.max_iter,
                ..RumOptions::default()
            },
        })
    }

    fn solver(&self) -> CliResult<HeatSolver> {
        Ok(HeatSolver::new(
            &ParabolicOperator::heat(self.grids.nx()),
            &self.grids,
            self.scheme,
        )?)
    }

    fn rum_problem(&self, eps: f64) -> CliResult<RumProblem> {
        let c = self.config;
        let n = 2 * c.k + 1;
        let weights = WeightSystem::build(&self.grids, self.omega1, c.s, c.lambda, c.k)?;
        let cutoff = make_cutoff(&self.grids.space, self.omega, self.omega1, n)?;
        let zeta0 = self
            .grids
            .space
            .sample(|x| c.zeta0_scale * c.zeta0.eval(x, c.length));
        Ok(RumProblem::new(
            self.solver()?,
            weights,
            cutoff,
            n,
            eps,
            zeta0,
        )?)
    }

    fn rum(
        &self,
        out: &mut OutputDir,
        summary: &mut Summary,
        flags: &mut Vec<String>,
    ) -> CliResult<()> {
        let problem = self.rum_problem(self.config.eps)?;
        let result = solve_rum(&problem, &self.options)?;
        summary.push("power", problem.power() as f64);
        summary.push("eps", problem.eps());
        summary.push("terminal_q_norm", result.terminal_q_norm);
        summary.push("weighted_control_norm", result.weighted_control_norm);
        summary.push("J", result.iterate.j_value);
        summary.push("iterations", result.iterations() as f64);
        summary.flag("converged", result.converged);
        summary.push(
            "dual_residual",
            result.history.last().map_or(0.0, |h| h.residual),
        );
        summary.push("el_residual", el_residual(&problem, &result.iterate)?);
        summary.push("log_gain", problem.log_gain());
        summary.push("control_sup", result.control().max_abs());
        summary.push(
            "xp_norm_p2",
            xp_norm_diagnostic(&problem, result.control(), 2.0)?,
        );
        if !result.converged {
            flags.push("penalized solve did not converge".into());
        }
        out.write(
            "field_control.csv",
            &field_csv(&problem.apply_chi(result.control()), &self.grids),
        )?;
        out.write(
            "field_state.csv",
            &field_csv(&result.iterate.state, &self.grids),
        )?;
        Ok(())
    }

    fn sweep(
        &self,
        out: &mut OutputDir,
        summary: &mut Summary,
        flags: &mut Vec<String>,
    ) -> CliResult<()> {
        let ladder = &self.config.eps_ladder;
        let template = self.rum_problem(ladder[0])?;
        let (table, _) = epsilon_sweep(&template, ladder, &self.options)?;
        let mut csv = String::from("eps,terminal_q_norm,weighted_control_norm,J,slope\n");
        for row in &table.rows {
            csv.push_str(&format!(
                "{},{},{},{},\n",
                num(row.eps),
                num(row.terminal_q_norm),
                num(row.weighted_control_norm),
                num(row.j_value)
            ));
            if !row.converged {
                flags.push(format!("rung eps = {:e} did not converge", row.eps));
            }
        }
        csv.push_str(&format!("slope,,,,{}\n", num(table.slope)));
        out.write("sweep.csv", &csv)?;
        let norms: Vec<f64> = table.rows.iter().map(|r| r.weighted_control_norm).collect();
        let hi = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = norms.iter().cloned().fold(f64::INFINITY, f64::min);
        summary.push("rungs", table.rows.len() as f64);
        summary.push("slope", table.slope);
        summary.push(
            "weighted_norm_variation",
            if hi > 0.0 { (hi - lo) / hi } else { 0.0 },
        );
        summary.flag("all_converged", table.rows.iter().all(|r| r.converged));
        Ok(())
    }

    fn power_config(&self, n: u32) -> CliResult<PowerSystemConfig> {
        let c = self.config;
        let sample = |p: crate::config::Profile, scale: f64| {
            self.grids.space.sample(|x| scale * p.eval(x, c.length))
        };
        let mut pc = PowerSystemConfig::new(
            n,
            self.grids,
            sample(c.u0, c.u0_scale),
            sample(c.v0, c.v0_scale),
        )?;
        pc.scheme = self.scheme;
        pc.omega = self.omega;
        pc.omega1 = self.omega1;
        pc.s = c.s;
        pc.lambda = c.lambda;
        pc.phase1_eps = c.phase1_eps;
        pc.phase2_eps = c.eps;
        pc.phase2_options = self.options;
        pc.validate()?;
        Ok(pc)
    }

    fn strategy<S: Scalar>(
        &self,
        report: &StrategyReport<S>,
        out: &mut OutputDir,
        summary: &mut Summary,
        flags: &mut Vec<String>,
    ) -> CliResult<()> {
        let scale = report.u0_sup.max(report.v0_sup);
        summary.push("power", report.power as f64);
        summary.push("final_u", report.final_u);
        summary.push("final_v", report.final_v);
        summary.push("final_residual", report.final_residual());
        summary.push(
            "relative_final_residual",
            if scale > 0.0 {
                report.final_residual() / scale
            } else {
                0.0
            },
        );
        summary.push("phase1_terminal_u", report.phase1.terminal_norm);
        summary.push(
            "phase2_penalized_terminal",
            report.phase2.penalized_terminal,
        );
        summary.push("coupling_defect", report.phase2.coupling_defect);
        summary.push("reconstruction_defect", report.phase2.reconstruction_defect);
        summary.push("resimulation_defect", report.resimulation_defect);
        summary.push(
            "imag_sup_u",
            report
                .u
                .data()
                .iter()
                .fold(0.0f64, |m, v| m.max(v.im().abs())),
        );
        for (phase, norms) in [
            (1, &report.phase1.control_norms),
            (2, &report.phase2.report.control_norms),
        ] {
            for &(p, value) in norms.iter() {
                summary.push(format!("phase{phase}_control_norm_{}", p_name(p)), value);
            }
        }
        for (p, ratio) in scaling_certificate(report, &CONTROL_NORM_EXPONENTS)? {
            summary.push(format!("scaling_ratio_{}", p_name(p)), ratio);
        }
        flags.extend(report.flags());
        if report.resimulation_defect > 1e-10 {
            flags.push(format!(
                "re-solve differs by {:e}",
                report.resimulation_defect
            ));
        }
        out.write(
            "field_control.csv",
            &field_csv(&report.control, &self.grids),
        )?;
        out.write("field_u.csv", &field_csv(&report.u, &self.grids))?;
        out.write("field_v.csv", &field_csv(&report.v, &self.grids))?;
        Ok(())
    }

    fn even_real(
        &self,
        out: &mut OutputDir,
        summary: &mut Summary,
        flags: &mut Vec<String>,
    ) -> CliResult<()> {
        let c = self.config;
        let odd = run_odd_strategy(&self.power_config(c.n + 1)?)?;
        let report = demo_even_obstruction(
            &self.power_config(c.n)?,
            c.draws,
            c.seed,
            &[odd.control.clone()],
        )?;
        summary.push("power", c.n as f64);
        summary.push("controls_tested", report.controls_tested as f64);
        summary.push("violations", report.violations as f64);
        summary.push("min_gap", report.min_gap);
        summary.push("free_terminal_min", report.free_terminal_min);
        summary.push("free_terminal_midpoint", report.free_terminal_midpoint);
        if report.violations > 0 {
            flags.push(format!("{} comparison violations", report.violations));
        }
        out.write(
            "field_adversarial_control.csv",
            &field_csv(&odd.control, &self.grids),
        )?;
        Ok(())
    }

    fn carleman(&self, summary: &mut Summary) -> CliResult<()> {
        let c = self.config;
        let table = exponent_table(1, c.k)?;
        summary.push("n0", table.n0 as f64);
        summary.push("m", table.m as f64);
        let cutoff = make_cutoff(&self.grids.space, self.omega, self.omega1, 2 * c.k + 1)?;
        let samples = ratio_sweep(
            &self.grids,
            &self.solver()?,
            &cutoff,
            self.omega1,
            c.lambda,
            c.k,
            &c.s_values,
            c.draws,
            c.seed,
        )?;
        for r in &samples {
            summary.push(format!("l2_max_s{}", r.s), r.l2_max);
            summary.push(format!("l2kp2_max_s{}", r.s), r.l2kp2_max);
            summary.push(
                format!("log_observability_max_s{}", r.s),
                r.log_observability_max,
            );
        }
        summary.push("selected_s", select_s(&samples).unwrap_or(f64::NAN));
        for (name, pick) in [("l2", 0usize), ("l2kp2", 1)] {
            let value =
                |r: &rumheat::carleman::RatioSample| if pick == 0 { r.l2_max } else { r.l2kp2_max };
            let best = samples.iter().map(value).fold(f64::INFINITY, f64::min);
            let worst_large = samples
                .iter()
                .filter(|r| r.s >= 10.0)
                .map(value)
                .fold(f64::NEG_INFINITY, f64::max);
            summary.push(format!("{name}_stability"), worst_large / best);
        }
        Ok(())
    }

    fn nonlinearity(&self) -> CliResult<NonlinearitySpec> {
        let c = self.config;
        Ok(match (&c.f1, &c.g1, &c.g2) {
            (Some(f1), Some(g1), Some(g2)) => NonlinearitySpec::polynomial(
                "table",
                c.k,
                Polynomial::new(f1.clone()),
                Polynomial::new(g1.clone()),
                Polynomial::new(g2.clone()),
            )?,
            _ => NonlinearitySpec::builtin(&c.nonlinearity, c.k)?,
        })
    }

    fn trajectory(
        &self,
        out: &mut OutputDir,
        summary: &mut Summary,
        flags: &mut Vec<String>,
    ) -> CliResult<()> {
        let c = self.config;
        let spec = self.nonlinearity()?;
        let setup = TrajectorySetup {
            omega: self.omega,
            omega1: self.omega1,
            omega0: interval(c.omega0),
            scheme: self.scheme,
            s: c.s,
            lambda: c.lambda,
            penalty: c.eps,
            rum_options: self.options,
            ..TrajectorySetup::default()
        };
        let r = build_reference_trajectory(&spec, &self.grids, &setup, c.amplitude)?;
        let half = build_reference_trajectory(&spec, &self.grids, &setup, 0.5 * c.amplitude)?;
        let (u, v) = resimulate(&spec, &self.grids, self.scheme, &r.control)?;
        let gap = |a: &rumheat::grid::RealField, b: &rumheat::grid::RealField| {
            a.data()
                .iter()
                .zip(b.data())
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        };
        let resim = gap(&u, &r.u).max(gap(&v, &r.v));
        let order = spec.order() as i32;
        let scaled = |t: &rumheat::trajectory::TrajectoryResult| t.v_mid / t.amplitude.powi(order);
        summary.push("amplitude", r.amplitude);
        summary.push("picard_iterations", r.picard_iterations as f64);
        summary.push("plateau_min", r.plateau_min);
        summary.push("certificate", r.certificate);
        summary.push(
            "certificate_over_amplitude_sq",
            r.certificate / (r.amplitude * r.amplitude),
        );
        summary.push("v_mid", r.v_mid);
        summary.push("v_mid_scaled", scaled(&r));
        summary.push("v_mid_scaled_half_amplitude", scaled(&half));
        summary.push("terminal_u", r.terminal_u);
        summary.push("terminal_v", r.terminal_v);
        summary.push("consistency_defect", r.consistency_defect);
        summary.push("support_leak", r.support_leak);
        summary.push("resimulation_defect", resim);
        summary.push("radius", spec.radius);
        flags.extend(r.flag.clone());
        if resim > 1e-8 {
            flags.push(format!("nonlinear re-solve differs by {resim:e}"));
        }
        out.write("field_u.csv", &field_csv(&r.u, &self.grids))?;
        out.write("field_v.csv", &field_csv(&r.v, &self.grids))?;
        out.write("field_control.csv", &field_csv(&r.control, &self.grids))?;
        Ok(())
    }
}

fn p_name(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p}")
    }
}
