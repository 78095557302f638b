use std::error::Error;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use probewalk::config::{
    build_custom_scheme, initial_state, parse_config, revalidate, RunConfig, SchemeKind,
};
use probewalk::output::{csv_header, render_summary, summary_row, trajectory_rows, write_text};
use probewalk::verify::run_check;
use probewalk::walk::{
    fidelity_targets, reduce_summaries, run_trajectory, summarize_trajectory, trajectory_rng,
    StepTable, TrajectorySummary, WalkConfig,
};
use probewalk::zz::{build_zz_scheme, DiagonalTarget};
use probewalk::{ProbeScheme, QuantumState};

#[derive(Parser)]
#[command(
    name = "probewalk",
    version,
    about = "Decompose two-outcome quantum measurements into probe-mediated random walks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a trajectory ensemble and export trajectories.csv + summary.txt
    Simulate(CommonArgs),
    /// Run a named invariant suite and report pass/fail with residuals
    Verify(VerifyArgs),
    /// Re-run the ensemble over a list of parameter values
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Path to a key = value run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    boundary: Option<f64>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides output_dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record every step of every trajectory in the CSV
    #[arg(long)]
    record_states: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// One of completeness|reversibility|expansion|riccati|structure|endpoints
    #[arg(long)]
    check: String,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Parameter to sweep: delta|boundary|alpha|beta
    #[arg(long)]
    param: String,
    /// Comma-separated list of values
    #[arg(long)]
    values: String,
}

fn load_config(args: &CommonArgs) -> Result<RunConfig, Box<dyn Error>> {
    let mut cfg = match &args.config {
        Some(path) => parse_config(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.beta {
        cfg.beta = v;
    }
    if let Some(v) = args.delta {
        cfg.delta = v;
    }
    if let Some(v) = args.boundary {
        cfg.boundary = v;
    }
    if let Some(v) = args.trajectories {
        cfg.trajectories = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.out {
        cfg.output_dir = v.clone();
    }
    if args.record_states {
        cfg.record_states = true;
    }
    revalidate(&mut cfg)?;
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

struct Prepared {
    scheme: ProbeScheme,
    init: QuantumState,
    targets: Option<(probewalk::Operator, probewalk::Operator)>,
    p1_analytic: f64,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared, Box<dyn Error>> {
    let init = initial_state(cfg);
    match cfg.scheme {
        SchemeKind::Zz => {
            let target = DiagonalTarget::new(cfg.alpha, cfg.beta)?;
            let zz = build_zz_scheme(target, cfg.boundary, cfg.delta)?;
            let (m1, m2) = zz.endpoint_operators();
            let p1 = zz.born_probability_plus(&init);
            Ok(Prepared {
                scheme: zz.probe_scheme().clone(),
                init,
                targets: Some((m1, m2)),
                p1_analytic: p1,
            })
        }
        SchemeKind::Custom => Ok(Prepared {
            scheme: build_custom_scheme(cfg)?,
            init,
            targets: None,
            p1_analytic: f64::NAN,
        }),
    }
}

fn cmd_simulate(args: &CommonArgs) -> Result<(), Box<dyn Error>> {
    let cfg = load_config(args)?;
    let prep = prepare(&cfg)?;
    let wcfg = WalkConfig::symmetric(cfg.delta, cfg.boundary, cfg.seed)?
        .with_record_states(cfg.record_states);
    let table = StepTable::new(&prep.scheme, &wcfg)?;
    let start = Instant::now();

    let mut csv = String::new();
    csv.push_str(&csv_header(table.dim()));
    csv.push('\n');

    let summaries: Vec<TrajectorySummary> = if cfg.record_states {
        // Full per-step rows: run sequentially with the same per-trajectory
        // streams the parallel path would use.
        let mut out = Vec::with_capacity(cfg.trajectories);
        for i in 0..cfg.trajectories {
            let mut rng = trajectory_rng(cfg.seed, i as u64);
            let rec = run_trajectory(&prep.init, &table, wcfg.max_steps, true, &mut rng)?;
            trajectory_rows(i, &rec, cfg.delta, &mut csv);
            out.push(summarize_trajectory(&rec, cfg.delta));
        }
        out
    } else {
        let (_, runs) = probewalk::walk::run_ensemble(
            &prep.init,
            &table,
            cfg.seed,
            wcfg.max_steps,
            cfg.trajectories,
            prep.targets.as_ref().map(|(a, b)| (a, b)),
        )?;
        for (i, s) in runs.iter().enumerate() {
            summary_row(i, s, &mut csv);
        }
        runs
    };

    let target_states = prep
        .targets
        .as_ref()
        .map(|(m1, m2)| fidelity_targets(&prep.init, m1, m2));
    let stats = reduce_summaries(&summaries, target_states.as_ref());
    let wall = start.elapsed().as_secs_f64();

    write_text(&cfg.output_dir.join("trajectories.csv"), &csv)?;
    let summary = render_summary(&stats, prep.p1_analytic, cfg.seed, wall);
    write_text(&cfg.output_dir.join("summary.txt"), &summary)?;
    print!("{summary}");

    if stats.timeouts as f64 > 0.01 * cfg.trajectories as f64 {
        return Err(format!(
            "{} of {} trajectories timed out (> 1%); raise max steps or shrink the boundary",
            stats.timeouts, cfg.trajectories
        )
        .into());
    }
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool, Box<dyn Error>> {
    let cfg = load_config(&args.common)?;
    let report = run_check(&cfg, &args.check)?;
    print!("{}", report.render());
    Ok(report.passed())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Box<dyn Error>> {
    let base = load_config(&args.common)?;
    let values: Vec<f64> = args
        .values
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("--values: {e}"))?;
    if values.is_empty() {
        return Err("--values: empty list".into());
    }
    if !matches!(args.param.as_str(), "delta" | "boundary" | "alpha" | "beta") {
        return Err(format!(
            "--param `{}` is not sweepable (use delta|boundary|alpha|beta)",
            args.param
        )
        .into());
    }

    let mut combined = String::from(
        "param,value,n,freq_outcome1,ci95,p1_analytic,mean_fidelity_1,mean_steps,timeouts\n",
    );
    for &v in &values {
        let mut cfg = base.clone();
        match args.param.as_str() {
            "delta" => cfg.delta = v,
            "boundary" => cfg.boundary = v,
            "alpha" => cfg.alpha = v,
            "beta" => cfg.beta = v,
            _ => unreachable!(),
        }
        revalidate(&mut cfg)?;
        let prep = prepare(&cfg)?;
        let wcfg = WalkConfig::symmetric(cfg.delta, cfg.boundary, cfg.seed)?;
        let table = StepTable::new(&prep.scheme, &wcfg)?;
        let start = Instant::now();
        let (stats, _) = probewalk::walk::run_ensemble(
            &prep.init,
            &table,
            cfg.seed,
            wcfg.max_steps,
            cfg.trajectories,
            prep.targets.as_ref().map(|(a, b)| (a, b)),
        )?;
        let wall = start.elapsed().as_secs_f64();
        let summary = render_summary(&stats, prep.p1_analytic, cfg.seed, wall);
        let name = format!("summary_{}_{}.txt", args.param, v);
        write_text(&cfg.output_dir.join(name), &summary)?;
        let fid1 = stats
            .mean_fidelity_1
            .map(|f| f.to_string())
            .unwrap_or_else(|| "nan".into());
        combined.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            args.param,
            v,
            stats.n,
            stats.freq_outcome1,
            stats.ci95_halfwidth,
            prep.p1_analytic,
            fid1,
            stats.mean_steps,
            stats.timeouts
        ));
        println!(
            "{} = {}: freq_outcome1 = {:.6} ± {:.6} (analytic {:.6})",
            args.param, v, stats.freq_outcome1, stats.ci95_halfwidth, prep.p1_analytic
        );
    }
    write_text(&base.output_dir.join("sweep.csv"), &combined)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome: Result<bool, Box<dyn Error>> = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args).map(|_| true),
        Command::Verify(args) => cmd_verify(args),
        Command::Sweep(args) => cmd_sweep(args).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
