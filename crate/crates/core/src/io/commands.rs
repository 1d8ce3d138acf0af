//! Entry points behind the command-line subcommands. Each writes its data files and a
//! manifest under the output directory and reports whether its assertions held.

use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::diagnostics::{
    energy_bound_lhs, mc_energy_bound, mc_moment_bound, moment_terms, pathwise_uniqueness_check,
    run_ensemble, MomentConfig, MomentReport, UniquenessReport,
};
use crate::eps_limit::{epsilon_sweep, EpsSweepPlan};
use crate::error::{Error, Result};
use crate::integrator::{energy_residual, Problem};
use crate::operators::{run_inequality_suite, CheckKind, InequalitySuite};

use super::config::RunConfig;
use super::output::{fmt_f64, ledger_table, path_table, unix_now, CsvTable, ManifestInputs, OutputDir, CODE_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Run,
    Verify,
    McEnergy,
    McMoment,
    Uniqueness,
    SweepEps,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Run,
        Command::Verify,
        Command::McEnergy,
        Command::McMoment,
        Command::Uniqueness,
        Command::SweepEps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Verify => "verify",
            Command::McEnergy => "mc-energy",
            Command::McMoment => "mc-moment",
            Command::Uniqueness => "uniqueness",
            Command::SweepEps => "sweep-eps",
        }
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config(format!("unknown subcommand {s:?}")))
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub pass: bool,
    /// One human-readable line per assertion.
    pub lines: Vec<String>,
    pub manifest: PathBuf,
}

fn check_line(pass: bool, text: String) -> String {
    format!("[{}] {text}", if pass { "PASS" } else { "FAIL" })
}

pub fn execute(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let started = unix_now();
    let inputs = ManifestInputs {
        command: cmd.name(),
        code_version: CODE_VERSION,
        seed: cfg.problem.solver.seed,
        config: cfg,
    };
    let mut dir = OutputDir::create(out, inputs.digest()?)?;
    let (pass, lines) = match cmd {
        Command::Run => run(cfg, &mut dir)?,
        Command::Verify => verify(cfg, &mut dir)?,
        Command::McEnergy => mc_energy(cfg, &mut dir)?,
        Command::McMoment => mc_moment(cfg, &mut dir)?,
        Command::Uniqueness => uniqueness(cfg, &mut dir)?,
        Command::SweepEps => sweep(cfg, &mut dir)?,
    };
    let manifest = dir.finish(inputs, started)?;
    Ok(Outcome {
        pass,
        lines,
        manifest,
    })
}

type Checks = (bool, Vec<String>);

fn run(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Checks> {
    let (solver, init) = cfg.problem.build()?;
    let rec = solver.run_path(&init, 0)?;
    dir.write_csv("path.csv", &path_table(&rec))?;
    dir.write_csv("ledger.csv", &ledger_table(&rec.ledger))?;
    dir.write_snapshot("final.snap", &rec.final_state)?;
    let (max_abs, _) = energy_residual(&[(rec.dt, &rec.ledger)]);
    let last = rec.rows.last().expect("at least one row");
    dir.write_json(
        "summary.json",
        &json!({
            "steps": rec.ledger.len(),
            "t_final": last.t,
            "final_energy": last.energy,
            "max_abs_residual": max_abs,
            "pass": true,
        }),
    )?;
    Ok((
        true,
        vec![check_line(
            true,
            format!(
                "run: {} steps, final energy {}, max ledger residual {:e}",
                rec.ledger.len(),
                last.energy,
                max_abs
            ),
        )],
    ))
}

fn verify(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Checks> {
    let e = &cfg.experiment;
    let suite = InequalitySuite {
        seed: cfg.problem.solver.seed,
        samples: e.samples,
        n_values: e.verify_n.clone(),
        nu_values: e.verify_nu.clone(),
        ..Default::default()
    };
    let summary = run_inequality_suite(&suite)?;
    let mut t = CsvTable::new(&["lemma", "seed", "lhs", "rhs", "margin", "pass", "n_modes", "nu"]);
    for r in &summary.rows {
        t.push(vec![
            r.lemma.name().to_string(),
            r.seed.to_string(),
            fmt_f64(r.lhs),
            fmt_f64(r.rhs),
            fmt_f64(r.margin),
            r.pass.to_string(),
            r.n_modes.to_string(),
            r.nu.map(fmt_f64).unwrap_or_default(),
        ]);
    }
    dir.write_csv("inequalities.csv", &t)?;
    let mut lines = Vec::new();
    let mut counts = serde_json::Map::new();
    for kind in CheckKind::ALL {
        let (n, bad) = summary.count(kind);
        lines.push(check_line(bad == 0, format!("{}: {bad} violations in {n} checks", kind.name())));
        counts.insert(kind.name().into(), json!({ "checks": n, "violations": bad }));
    }
    let pass = summary.all_pass();
    dir.write_json("summary.json", &json!({ "pass": pass, "checks": counts }))?;
    Ok((pass, lines))
}

fn mc_energy(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Checks> {
    let e = &cfg.experiment;
    let (solver, init) = cfg.problem.build()?;
    let records = run_ensemble(&solver, &init, e.paths)?;
    let mut t = CsvTable::new(&["delta", "t", "lhs", "lhs_se", "rhs", "margin"]);
    let mut lines = Vec::new();
    let mut reports = Vec::new();
    for &delta in &e.deltas {
        let rep = mc_energy_bound(&solver, &init, &records, delta, e.confidence_z)?;
        for r in &rep.rows {
            t.push_f64(&[delta, r.t, r.lhs, r.lhs_se, r.rhs, r.margin]);
        }
        lines.push(check_line(
            rep.pass,
            format!("energy bound, delta {delta}: min margin {:e} over {} paths", rep.min_margin, rep.paths),
        ));
        reports.push(json!({ "delta": delta, "pass": rep.pass, "min_margin": rep.min_margin }));
    }
    dir.write_csv("energy_bound.csv", &t)?;
    let pass = reports.iter().all(|r| r["pass"] == true);
    dir.write_json("summary.json", &json!({ "pass": pass, "paths": e.paths, "deltas": reports }))?;
    Ok((pass, lines))
}

/// Relative change tolerated in the implied moment constant between half and all paths.
pub const MOMENT_STABILITY: f64 = 0.25;

#[derive(Clone, Debug, Serialize)]
pub struct MomentStudy {
    pub half: MomentReport,
    pub full: MomentReport,
    pub relative_change: Option<f64>,
    pub stable: bool,
    /// Largest difference between the `p = 2` dissipation term and the energy-bound one.
    pub p2_dissipation_gap: f64,
    /// Every `p = 2` path value dominates the energy-bound value at every time.
    pub p2_sup_dominates: bool,
}

pub fn moment_study(problem: &Problem, paths: usize) -> Result<MomentStudy> {
    let (solver, init) = problem.build()?;
    let cfg = solver.config();
    let records = run_ensemble(&solver, &init, paths)?;
    let mc = MomentConfig::new(cfg.moment_p, cfg.delta, paths);
    let full = mc_moment_bound(&solver, &init, &records, &mc)?;
    let half_n = paths / 2;
    let half = mc_moment_bound(&solver, &init, &records[..half_n], &MomentConfig { paths: half_n, ..mc })?;
    let relative_change = match (half.implied_c, full.implied_c) {
        (Some(a), Some(b)) if b != 0.0 => Some((a - b).abs() / b.abs()),
        _ => None,
    };
    let stable = full.implied_c.is_some_and(f64::is_finite)
        && relative_change.is_some_and(|r| r <= MOMENT_STABILITY);
    let mut gap: f64 = 0.0;
    let mut dominates = true;
    for rec in &records {
        let fixed = energy_bound_lhs(rec, cfg.nu, cfg.delta);
        let (sup, diss) = moment_terms(rec, cfg.nu, cfg.eps, 2.0, cfg.delta);
        let energy_diss = crate::diagnostics::weighted_dissipation(&rec.rows, cfg.nu, 2.0, cfg.delta);
        gap = gap.max((diss - energy_diss.last().unwrap()).abs());
        dominates &= fixed.iter().all(|&v| sup + diss >= v * (1.0 - crate::diagnostics::ROUNDING_SLACK));
    }
    Ok(MomentStudy {
        half,
        full,
        relative_change,
        stable,
        p2_dissipation_gap: gap,
        p2_sup_dominates: dominates,
    })
}

fn mc_moment(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Checks> {
    let study = moment_study(&cfg.problem, cfg.experiment.paths)?;
    let mut t = CsvTable::new(&[
        "paths",
        "moment_p",
        "delta",
        "lhs",
        "lhs_se",
        "initial",
        "rhs_without_constant",
        "implied_c",
    ]);
    for r in [&study.half, &study.full] {
        t.push(vec![
            r.paths.to_string(),
            fmt_f64(r.moment_p),
            fmt_f64(r.delta),
            fmt_f64(r.lhs),
            fmt_f64(r.lhs_se),
            fmt_f64(r.initial),
            fmt_f64(r.rhs_without_constant),
            r.implied_c.map(fmt_f64).unwrap_or_default(),
        ]);
    }
    dir.write_csv("moment.csv", &t)?;
    let consistent = study.p2_dissipation_gap == 0.0 && study.p2_sup_dominates;
    let pass = study.stable && consistent;
    let lines = vec![
        check_line(
            study.stable,
            format!(
                "implied constant {:?} ({} paths) vs {:?} ({} paths), relative change {:?}",
                study.full.implied_c, study.full.paths, study.half.implied_c, study.half.paths, study.relative_change
            ),
        ),
        check_line(
            consistent,
            format!("p = 2 consistency: dissipation gap {:e}", study.p2_dissipation_gap),
        ),
    ];
    dir.write_json(
        "summary.json",
        &json!({
            "pass": pass,
            "implied_c": study.full.implied_c,
            "implied_c_half": study.half.implied_c,
            "relative_change": study.relative_change,
            "p2_dissipation_gap": study.p2_dissipation_gap,
            "p2_sup_dominates": study.p2_sup_dominates,
        }),
    )?;
    Ok((pass, lines))
}

/// Acceptable range of `max_increase(dt) / max_increase(dt/2)`.
pub const HALVING_RANGE: (f64, f64) = (1.5, 2.5);

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessStudy {
    pub identical_zero: bool,
    pub coarse: UniquenessReport,
    pub fine: UniquenessReport,
    pub halving_ratio: f64,
}

/// Identical-input run, then perturbed runs at `dt` and `dt/2`.
pub fn uniqueness_study(problem: &Problem, perturbation: f64, c_check: f64) -> Result<UniquenessStudy> {
    let run = |dt: f64| -> Result<(UniquenessReport, UniquenessReport)> {
        let mut p = problem.clone();
        p.solver.dt = dt;
        let (solver, init) = p.build()?;
        let mut b = init.clone();
        b.u.coeffs_mut()[0] += perturbation;
        let same = pathwise_uniqueness_check(&solver, &init, &init, 0, c_check)?;
        Ok((same, pathwise_uniqueness_check(&solver, &init, &b, 0, c_check)?))
    };
    let (same, coarse) = run(problem.solver.dt)?;
    let (_, fine) = run(problem.solver.dt / 2.0)?;
    Ok(UniquenessStudy {
        identical_zero: same.weighted_diff.iter().all(|&d| d == 0.0),
        halving_ratio: coarse.max_increase / fine.max_increase,
        coarse,
        fine,
    })
}

fn uniqueness(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Checks> {
    let e = &cfg.experiment;
    let study = uniqueness_study(&cfg.problem, e.perturbation, e.c_check)?;
    let mut t = CsvTable::new(&["dt", "t", "weight", "weighted_diff"]);
    for rep in [&study.coarse, &study.fine] {
        for ((&time, &w), &d) in rep.times.iter().zip(&rep.weight).zip(&rep.weighted_diff) {
            t.push_f64(&[rep.dt, time, w, d]);
        }
    }
    dir.write_csv("uniqueness.csv", &t)?;
    let ratio_ok = (HALVING_RANGE.0..=HALVING_RANGE.1).contains(&study.halving_ratio);
    let pass = study.identical_zero && study.coarse.pass && ratio_ok;
    let lines = vec![
        check_line(study.identical_zero, "identical inputs give a zero weighted difference".into()),
        check_line(
            study.coarse.pass,
            format!(
                "max step increase {:e} within tolerance {:e}",
                study.coarse.max_increase, study.coarse.tolerance
            ),
        ),
        check_line(ratio_ok, format!("dt-halving ratio {}", study.halving_ratio)),
    ];
    dir.write_json(
        "summary.json",
        &json!({
            "pass": pass,
            "identical_zero": study.identical_zero,
            "max_increase": study.coarse.max_increase,
            "max_increase_half_dt": study.fine.max_increase,
            "tolerance": study.coarse.tolerance,
            "halving_ratio": study.halving_ratio,
        }),
    )?;
    Ok((pass, lines))
}

pub fn sweep_plan(cfg: &RunConfig) -> EpsSweepPlan {
    let mut problem = cfg.problem.clone();
    problem.initial.velocity = cfg.experiment.sweep_velocity.clone();
    EpsSweepPlan {
        eps_values: cfg.experiment.eps_values.clone(),
        problem,
        paths: cfg.experiment.sweep_paths,
    }
}

fn sweep(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Checks> {
    let rep = epsilon_sweep(&sweep_plan(cfg))?;
    let mut t = CsvTable::new(&[
        "eps",
        "paths",
        "diverged",
        "div_sq",
        "div_sq_se",
        "diff_sq",
        "diff_sq_se",
        "pressure_energy",
        "pressure_energy_se",
    ]);
    for r in &rep.rows {
        t.push(vec![
            fmt_f64(r.eps),
            r.paths.to_string(),
            r.diverged.to_string(),
            fmt_f64(r.div_sq.mean),
            fmt_f64(r.div_sq.se),
            fmt_f64(r.diff_sq.mean),
            fmt_f64(r.diff_sq.se),
            fmt_f64(r.pressure_energy.mean),
            fmt_f64(r.pressure_energy.se),
        ]);
    }
    dir.write_csv("sweep.csv", &t)?;
    dir.write_json("summary.json", &rep)?;
    let lines = vec![
        check_line(rep.div_decreasing, "sup_t E|Div u|² decreases beyond combined SE".into()),
        check_line(rep.diff_decreasing, "sup_t E|u - u_ref|² decreases".into()),
        check_line(
            rep.pressure_bounded,
            format!("scaled pressure energy below {:e}", rep.pressure_bound),
        ),
        check_line(rep.divergence_ok, "diverged paths within limit".into()),
    ];
    Ok((rep.pass, lines))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::config_from_str;

    const SMALL: &str = "[solver]\nn_modes = 3\ndt = 0.01\nt_final = 0.05\n\
                         [mc]\npaths = 4\n[sweep]\npaths = 3\neps_values = [0.1, 0.01]\n\
                         [verify]\nsamples = 3\nn_modes = [2]\nnu = [0.1]\n";

    #[test]
    fn every_command_writes_stamped_outputs() {
        let cfg = config_from_str(SMALL, &[]).unwrap();
        for cmd in Command::ALL {
            let dir = tempfile::tempdir().unwrap();
            let outcome = execute(cmd, &cfg, dir.path()).unwrap();
            let manifest: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(&outcome.manifest).unwrap()).unwrap();
            let digest = manifest["digest"].as_str().unwrap();
            for f in manifest["outputs"].as_array().unwrap() {
                let name = f["name"].as_str().unwrap();
                let bytes = std::fs::read(dir.path().join(name)).unwrap();
                if name.ends_with(".csv") {
                    assert!(String::from_utf8(bytes).unwrap().starts_with(&format!("# manifest {digest}\n")));
                } else if name.ends_with(".json") {
                    assert!(String::from_utf8(bytes).unwrap().contains(digest));
                } else {
                    assert_eq!(hex::encode(&bytes[28..60]), digest);
                }
            }
        }
    }

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        assert!("nope".parse::<Command>().is_err());
    }
}
