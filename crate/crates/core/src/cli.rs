//! Command-line surface: `analyze`, `simulate`, `equilibrium`, `partition`,
//! `stochastic` and `sweep` over scenario files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::dynamics::{
    crossing_monitor, simulate, Crossing, Outcome, SimOutcome, Trajectory, IFE_INFECTED_TOL,
};
use crate::equilibria::{ee_stability, sample_m0, solve_ee, M0Sample};
use crate::model::{classify_case, stubborn_agents, ImmunityCase};
use crate::reproduction::{classify_regime, extreme_numbers, Regime, ReproductionSet};
use crate::scenario::{ControlAction, Scenario};
use crate::stochastic::{monte_carlo_mean, McEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Parser)]
#[command(name = "netsiri", version, about = "Network SIRI contagion analysis")]
pub struct Cli {
    /// Directory for written artifacts.
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Overrides the scenario's stochastic seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Extra control action as JSON, applied after the scenario's own controls.
    #[arg(long = "control", global = true)]
    pub controls: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Immunity case, reproduction numbers and regime.
    Analyze { scenario: PathBuf },
    /// Integrate the mean-field equations and report the outcome.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Endemic equilibrium and its stability.
    Equilibrium { scenario: PathBuf },
    /// Sample the center set of the infection-free manifold.
    Partition {
        scenario: PathBuf,
        #[arg(long, default_value_t = 16)]
        rays: usize,
    },
    /// Monte Carlo estimate of per-agent infection probabilities.
    Stochastic {
        scenario: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        t_step: Option<f64>,
    },
    /// Compare outcomes across vaccination sets (the unvaccinated baseline is always included).
    Sweep {
        scenario: PathBuf,
        /// Comma-separated one-based agent labels; repeatable.
        #[arg(long = "vaccinate")]
        sets: Vec<String>,
    },
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn load(cli: &Cli, path: &Path) -> anyhow::Result<Scenario> {
    let base = Scenario::load(path).with_context(|| format!("loading {}", path.display()))?;
    let mut s = base.with_controls_applied()?;
    for text in &cli.controls {
        let action: ControlAction =
            serde_json::from_str(text).with_context(|| format!("parsing control {text}"))?;
        s = s.apply_control(&action)?;
    }
    Ok(s)
}

fn out_path(cli: &Cli, name: &str) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(&cli.output_dir)
        .with_context(|| format!("creating {}", cli.output_dir.display()))?;
    Ok(cli.output_dir.join(name))
}

fn write_json(cli: &Cli, name: &str, value: &impl Serialize) -> anyhow::Result<PathBuf> {
    let path = out_path(cli, name)?;
    fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(path)
}

fn write_csv(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|j| format!("{prefix}_{j}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub case: ImmunityCase,
    /// One-based labels.
    pub stubborn: Vec<usize>,
    pub r0: f64,
    pub r1: f64,
    pub rmin: f64,
    pub rmax: f64,
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
    pub exact: bool,
    pub regime: Regime,
    pub rbar_min: f64,
    pub rbar_max: f64,
}

pub fn analysis_report(s: &Scenario) -> crate::Result<AnalysisReport> {
    let case = classify_case(&s.model)?;
    let rs: ReproductionSet = extreme_numbers(&s.model)?;
    Ok(AnalysisReport {
        case,
        stubborn: stubborn_agents(&s.model)
            .into_iter()
            .map(|j| j + 1)
            .collect(),
        r0: rs.r0,
        r1: rs.r1,
        rmin: rs.rmin,
        rmax: rs.rmax,
        p_min: rs.p_min.clone(),
        p_max: rs.p_max.clone(),
        exact: rs.exact,
        regime: classify_regime(&rs),
        rbar_min: rs.rbar_min,
        rbar_max: rs.rbar_max,
    })
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn analyze(cli: &Cli, path: &Path, out: &mut dyn Write) -> anyhow::Result<()> {
    let s = load(cli, path)?;
    let r = analysis_report(&s)?;
    match cli.format {
        Format::Json => {
            writeln!(out, "{}", serde_json::to_string_pretty(&r)?)?;
            write_json(cli, "analysis.json", &r)?;
        }
        Format::Csv => {
            let path = out_path(cli, "analysis.csv")?;
            let header: Vec<String> = ["case", "regime", "r0", "r1", "rmin", "rmax", "exact"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            let row = vec![
                r.case.label().to_string(),
                format!("{:?}", r.regime),
                fmt_f64(r.r0),
                fmt_f64(r.r1),
                fmt_f64(r.rmin),
                fmt_f64(r.rmax),
                r.exact.to_string(),
            ];
            write_csv(&path, &header, [row])?;
            writeln!(out, "wrote {}", path.display())?;
        }
        Format::Text => {
            writeln!(out, "case      {}", r.case.label())?;
            writeln!(out, "stubborn  {:?}", r.stubborn)?;
            writeln!(out, "R0        {:.6}", r.r0)?;
            writeln!(out, "R1        {:.6}", r.r1)?;
            writeln!(out, "Rmin      {:.6}  at p = [{}]", r.rmin, join(&r.p_min))?;
            writeln!(out, "Rmax      {:.6}  at p = [{}]", r.rmax, join(&r.p_max))?;
            writeln!(out, "exact     {}", r.exact)?;
            writeln!(out, "regime    {:?}", r.regime)?;
        }
    }
    Ok(())
}

pub fn trajectory_rows(traj: &Trajectory) -> (Vec<String>, Vec<Vec<String>>) {
    let n = traj.states.first().map_or(0, |s| s.n());
    let mut header = vec!["t".to_string()];
    header.extend(labels("pS", n));
    header.extend(labels("pI", n));
    header.push("pI_avg".into());
    header.push("lambda".into());
    let rows = (0..traj.times.len())
        .map(|i| {
            let s = &traj.states[i];
            let mut r = vec![fmt_f64(traj.times[i])];
            r.extend(s.p_s.iter().map(|&x| fmt_f64(x)));
            r.extend(s.p_i.iter().map(|&x| fmt_f64(x)));
            r.push(fmt_f64(traj.weighted_avg[i]));
            r.push(
                traj.lambda_track
                    .get(i)
                    .map_or(String::new(), |&l| fmt_f64(l)),
            );
            r
        })
        .collect();
    (header, rows)
}

fn outcome_json(o: &SimOutcome, crossings: &[Crossing]) -> serde_json::Value {
    json!({
        "outcome": o.outcome.label(),
        "detail": o.outcome,
        "resurgence": o.resurgence,
        "final_time": o.trajectory.final_time(),
        "final_p_i": o.trajectory.last().p_i.iter().collect::<Vec<_>>(),
        "crossings": crossings,
    })
}

fn run_simulation(
    s: &Scenario,
    t_end: Option<f64>,
    dt: Option<f64>,
    stride: Option<usize>,
) -> crate::Result<SimOutcome> {
    let mut settings = s.integration_settings();
    if let Some(t) = t_end {
        settings.t_end = t;
    }
    if let Some(h) = dt {
        settings.dt = h;
    }
    if let Some(k) = stride {
        settings.output_stride = k;
    }
    simulate(&s.model, &s.initial, &settings)
}

fn simulate_cmd(
    cli: &Cli,
    path: &Path,
    t_end: Option<f64>,
    dt: Option<f64>,
    stride: Option<usize>,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    let s = load(cli, path)?;
    let o = run_simulation(&s, t_end, dt, stride)?;
    let crossings = crossing_monitor(&s.model, &o.trajectory, dt.unwrap_or(s.dt))?;
    let csv_path = out_path(cli, "trajectory.csv")?;
    let (header, rows) = trajectory_rows(&o.trajectory);
    write_csv(&csv_path, &header, rows)?;
    let summary = outcome_json(&o, &crossings);
    write_json(cli, "outcome.json", &summary)?;
    match cli.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?,
        Format::Csv | Format::Text => {
            writeln!(out, "outcome   {}", o.outcome.label())?;
            match &o.outcome {
                Outcome::ConvergedEe { distance } => writeln!(out, "distance  {distance:e}")?,
                Outcome::Undecided { horizon } => writeln!(out, "horizon   {horizon}")?,
                Outcome::ConvergedIfe { p_s_final } => {
                    writeln!(out, "p_s final [{}]", join(p_s_final))?
                }
            }
            match &o.resurgence {
                Some(r) => writeln!(
                    out,
                    "resurgence dip {:.3e} at t = {:.2}, resurges at t = {:.2}",
                    r.dip_value, r.dip_time, r.resurge_time
                )?,
                None => writeln!(out, "resurgence none")?,
            }
            for c in &crossings {
                writeln!(out, "crossing  t = {:.6} {:?}", c.time, c.direction)?;
            }
            writeln!(out, "wrote {}", csv_path.display())?;
        }
    }
    Ok(())
}

fn equilibrium_cmd(cli: &Cli, path: &Path, out: &mut dyn Write) -> anyhow::Result<()> {
    let s = load(cli, path)?;
    let report = match solve_ee(&s.model)? {
        None => json!({ "exists": false }),
        Some(ee) => {
            let st = ee_stability(&s.model, &ee)?;
            json!({
                "exists": true,
                "p_i_star": ee.p_i_star,
                "residual": ee.residual,
                "iterations": ee.iterations,
                "ja_lambda": st.ja_lambda,
                "is_stable": st.is_stable,
            })
        }
    };
    write_json(cli, "equilibrium.json", &report)?;
    match cli.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
        Format::Csv | Format::Text => {
            if report["exists"] == json!(false) {
                writeln!(out, "no endemic equilibrium (R1 <= 1)")?;
            } else {
                writeln!(out, "p_i_star  {}", report["p_i_star"])?;
                writeln!(out, "residual  {}", report["residual"])?;
                writeln!(out, "ja_lambda {}", report["ja_lambda"])?;
                writeln!(out, "stable    {}", report["is_stable"])?;
            }
        }
    }
    Ok(())
}

pub fn m0_rows(sample: &M0Sample, n: usize) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = labels("pS", n);
    header.push("lambda".into());
    let rows = sample
        .points
        .iter()
        .zip(&sample.lambdas)
        .map(|(p, &l)| {
            let mut r: Vec<String> = p.iter().map(|&x| fmt_f64(x)).collect();
            r.push(fmt_f64(l));
            r
        })
        .collect();
    (header, rows)
}

fn partition_cmd(cli: &Cli, path: &Path, rays: usize, out: &mut dyn Write) -> anyhow::Result<()> {
    let s = load(cli, path)?;
    let sample = sample_m0(&s.model, rays)?;
    let csv_path = out_path(cli, "m0.csv")?;
    let (header, rows) = m0_rows(&sample, s.model.n());
    write_csv(&csv_path, &header, rows)?;
    match cli.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&sample)?)?,
        Format::Csv | Format::Text => {
            writeln!(out, "anchor    [{}]", join(&sample.anchor))?;
            writeln!(out, "points    {} of {} rays", sample.points.len(), rays)?;
            for p in &sample.points {
                writeln!(out, "  [{}]", join(p))?;
            }
            writeln!(out, "wrote {}", csv_path.display())?;
        }
    }
    Ok(())
}

pub fn mc_rows(est: &McEstimate) -> (Vec<String>, Vec<Vec<String>>) {
    let n = est.p_hat.first().map_or(0, |r| r.len());
    let mut header = vec!["t".to_string()];
    header.extend(labels("pIhat", n));
    header.extend(labels("stderr", n));
    let rows = est
        .times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut r = vec![fmt_f64(t)];
            r.extend(est.p_hat[i].iter().map(|&x| fmt_f64(x)));
            r.extend(est.stderr[i].iter().map(|&x| fmt_f64(x)));
            r
        })
        .collect();
    (header, rows)
}

fn stochastic_cmd(
    cli: &Cli,
    path: &Path,
    trials: Option<usize>,
    t_end: Option<f64>,
    t_step: Option<f64>,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    let s = load(cli, path)?;
    let cfg = s.stochastic.clone();
    let trials = trials.or(cfg.as_ref().map(|c| c.trials)).unwrap_or(1000);
    let seed = cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let t_step = t_step.or(cfg.as_ref().map(|c| c.t_step)).unwrap_or(0.5);
    let t_end = t_end.unwrap_or(s.t_end);
    if t_step.is_nan() || t_step <= 0.0 {
        bail!("t_step must be positive");
    }
    let steps = (t_end / t_step).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| i as f64 * t_step).collect();
    let est = monte_carlo_mean(
        &s.model,
        &s.initial.p_s,
        &s.initial.p_i,
        &grid,
        trials,
        seed,
    )?;
    let csv_path = out_path(cli, "stochastic.csv")?;
    let (header, rows) = mc_rows(&est);
    write_csv(&csv_path, &header, rows)?;
    match cli.format {
        Format::Json => writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&json!({
                "trials": trials,
                "seed": seed,
                "generator": crate::stochastic::GENERATOR,
                "output": csv_path,
            }))?
        )?,
        Format::Csv | Format::Text => {
            writeln!(out, "trials    {trials}")?;
            writeln!(out, "seed      {seed}")?;
            writeln!(out, "wrote {}", csv_path.display())?;
        }
    }
    Ok(())
}

fn parse_set(text: &str) -> anyhow::Result<Vec<usize>> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .with_context(|| format!("bad agent label `{t}`"))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub vaccinated: Vec<usize>,
    pub outcome: String,
    pub resurge_time: Option<f64>,
    /// First sample time with every `p^I_j ≤ 1e-7`.
    pub eradication_time: Option<f64>,
}

pub fn sweep_entry(s: &Scenario, agents: &[usize]) -> crate::Result<(SweepEntry, SimOutcome)> {
    let v = if agents.is_empty() {
        s.clone()
    } else {
        s.apply_control(&ControlAction::Vaccinate {
            agents: agents.to_vec(),
        })?
    };
    let mut settings = v.integration_settings();
    settings.early_stop = false;
    let o = simulate(&v.model, &v.initial, &settings)?;
    let eradication_time = o
        .trajectory
        .states
        .iter()
        .position(|st| st.p_i.amax() <= IFE_INFECTED_TOL)
        .map(|i| o.trajectory.times[i]);
    Ok((
        SweepEntry {
            vaccinated: agents.to_vec(),
            outcome: o.outcome.label().to_string(),
            resurge_time: o.resurgence.as_ref().map(|r| r.resurge_time),
            eradication_time,
        },
        o,
    ))
}

fn sweep_cmd(cli: &Cli, path: &Path, sets: &[String], out: &mut dyn Write) -> anyhow::Result<()> {
    let s = load(cli, path)?;
    let regime = classify_regime(&extreme_numbers(&s.model)?);
    if !matches!(regime, Regime::Bistable | Regime::Epidemic) {
        eprintln!(
            "warning: regime is {regime:?}; vaccination outcomes are decided by the regime alone"
        );
    }
    let mut all_sets = vec![vec![]];
    for t in sets {
        all_sets.push(parse_set(t)?);
    }
    let mut entries = Vec::new();
    let mut trajectories = Vec::new();
    for set in &all_sets {
        let (e, o) = sweep_entry(&s, set)?;
        entries.push(e);
        trajectories.push(o.trajectory);
    }

    let name = |set: &[usize]| {
        if set.is_empty() {
            "none".to_string()
        } else {
            set.iter()
                .map(|j| j.to_string())
                .collect::<Vec<_>>()
                .join("+")
        }
    };
    let csv_path = out_path(cli, "sweep.csv")?;
    let mut header = vec!["t".to_string()];
    header.extend(all_sets.iter().map(|set| format!("mean_pI_{}", name(set))));
    let rows = trajectories[0].times.iter().enumerate().map(|(i, &t)| {
        let mut r = vec![fmt_f64(t)];
        r.extend(
            trajectories
                .iter()
                .map(|tr| fmt_f64(tr.states[i].p_i.mean())),
        );
        r
    });
    write_csv(&csv_path, &header, rows)?;
    write_json(cli, "sweep.json", &entries)?;

    match cli.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&entries)?)?,
        Format::Csv | Format::Text => {
            writeln!(
                out,
                "{:<16} {:<14} {:>12} {:>12}",
                "vaccinated", "outcome", "resurge_t", "eradicate_t"
            )?;
            for e in &entries {
                let t = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}"));
                writeln!(
                    out,
                    "{:<16} {:<14} {:>12} {:>12}",
                    name(&e.vaccinated),
                    e.outcome,
                    t(e.resurge_time),
                    t(e.eradication_time)
                )?;
            }
            writeln!(out, "wrote {}", csv_path.display())?;
        }
    }
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    match &cli.command {
        Command::Analyze { scenario } => analyze(cli, scenario, out),
        Command::Simulate {
            scenario,
            t_end,
            dt,
            stride,
        } => simulate_cmd(cli, scenario, *t_end, *dt, *stride, out),
        Command::Equilibrium { scenario } => equilibrium_cmd(cli, scenario, out),
        Command::Partition { scenario, rays } => partition_cmd(cli, scenario, *rays, out),
        Command::Stochastic {
            scenario,
            trials,
            t_end,
            t_step,
        } => stochastic_cmd(cli, scenario, *trials, *t_end, *t_step, out),
        Command::Sweep { scenario, sets } => sweep_cmd(cli, scenario, sets, out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5e-7] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn set_parsing() {
        assert_eq!(parse_set("7, 11,13").unwrap(), vec![7, 11, 13]);
        assert!(parse_set("").unwrap().is_empty());
        assert!(parse_set("a").is_err());
    }

    #[test]
    fn verbs_parse() {
        let cli = Cli::try_parse_from([
            "netsiri",
            "--format",
            "json",
            "partition",
            "x.json",
            "--rays",
            "4",
        ])
        .unwrap();
        assert_eq!(cli.format, Format::Json);
        assert!(matches!(cli.command, Command::Partition { rays: 4, .. }));
        let cli = Cli::try_parse_from([
            "netsiri",
            "sweep",
            "x.json",
            "--vaccinate",
            "7,11,13",
            "--vaccinate",
            "11",
        ])
        .unwrap();
        assert!(matches!(&cli.command, Command::Sweep { sets, .. } if sets.len() == 2));
    }
}
