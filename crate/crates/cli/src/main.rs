use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use stackbelief_core::{compare_beliefs, run_fixed_periodic, InfoStructure};
use stackbelief_sim::output::{
    bar_chart_svg, tau_sweep_svg, write_pct_higher, write_posterior_trace, write_run_log, write_stats_json,
    write_tau_sweep, write_text, write_win_matrix,
};
use stackbelief_sim::worked::{example1, example2, ExampleReport};
use stackbelief_sim::{load_experiment, run_experiment, ExperimentConfig, GameConfig, Scheme, StatsTable, TruthSelection};

/// Exit code for a failed golden check or too many excluded runs.
const EXIT_CHECK_FAILED: u8 = 1;
/// Exit code for configuration, I/O or solver errors.
const EXIT_ERROR: u8 = 2;
/// `simulate` fails when more than this fraction of runs is excluded.
const MAX_EXCLUDED_FRACTION: f64 = 0.01;

#[derive(Parser)]
#[command(name = "stackbelief", version, about = "LQ Stackelberg games with mid-game follower belief updates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay the scalar open-loop example and check the published values.
    Example1(GameArgs),
    /// Replay the scalar feedback example and check the published values.
    Example2(GameArgs),
    /// Solve one game from a config file and compare its beliefs.
    Solve(GameArgs),
    /// Run a Monte Carlo experiment on the collision-avoidance scenario.
    Simulate(SimArgs),
    /// Like `simulate`, over several update periods (default 1,2,5,10,20).
    Sweep(SimArgs),
}

#[derive(Args)]
struct GameArgs {
    /// Game config (TOML). The examples default to their published setup.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the report and run log.
    #[arg(long, env = "STACKBELIEF_OUT")]
    out: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long, value_name = "open-loop|feedback")]
    info_structure: Option<InfoStructure>,
    /// Accepted for symmetry; the games here are deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimArgs {
    /// Experiment config (TOML); defaults apply to anything omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "STACKBELIEF_OUT", default_value = "stackbelief-out")]
    out: PathBuf,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Single update period.
    #[arg(long, conflicts_with = "tau_sweep")]
    tau: Option<usize>,
    /// Comma-separated update periods.
    #[arg(long, value_delimiter = ',')]
    tau_sweep: Option<Vec<usize>>,
    #[arg(long, value_name = "open-loop|feedback")]
    info_structure: Option<InfoStructure>,
    /// Comma-separated: fixed-T, fixed-I, fixed-A, adaptive.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    #[arg(long, value_name = "T|I|A|sweep")]
    true_intention: Option<TruthSelection>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write SVG charts.
    #[arg(long)]
    emit_svg: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Example1(a) => cmd_example(a, GameConfig::example1(), example1),
        Command::Example2(a) => cmd_example(a, GameConfig::example2(), example2),
        Command::Solve(a) => cmd_solve(a),
        Command::Simulate(a) => cmd_simulate(a, false),
        Command::Sweep(a) => cmd_simulate(a, true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn game_config(args: &GameArgs, default: GameConfig) -> Result<GameConfig> {
    let mut cfg = match &args.config {
        Some(p) => GameConfig::load(p)?,
        None => default,
    };
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    if let Some(t) = args.tau {
        cfg.tau = t;
    }
    if let Some(i) = args.info_structure {
        cfg.info_structure = i;
    }
    if args.seed.is_some() {
        eprintln!("warning: --seed is ignored; this command is deterministic");
    }
    Ok(cfg)
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_runs_jsonl(path: &Path, runs: &[stackbelief_core::Run]) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    for r in runs {
        serde_json::to_writer(&mut f, &r.summary())?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

fn cmd_example(args: GameArgs, default: GameConfig, run: fn(&GameConfig) -> stackbelief_sim::Result<ExampleReport>) -> Result<bool> {
    let cfg = game_config(&args, default)?;
    let report = run(&cfg)?;
    let text = report.render();
    print!("{text}");
    if let Some(dir) = &args.out {
        create_out(dir)?;
        write_text(&dir.join("report.txt"), &text)?;
        write_runs_jsonl(&dir.join("runs.jsonl"), &report.runs)?;
    }
    Ok(!report.golden || report.passed())
}

fn cmd_solve(args: GameArgs) -> Result<bool> {
    let Some(path) = &args.config else { bail!("solve needs --config <game.toml>") };
    let cfg = game_config(&args, GameConfig::load(path)?)?;
    let setup = cfg.build()?;
    let cmp = compare_beliefs(&setup.game, &setup.x0, &setup.beliefs, cfg.tau, cfg.info_structure)?;
    println!("T = {}, tau = {}, info = {}", cfg.horizon, cfg.tau, cfg.info_structure);
    println!("{:<12} {:>14}", "belief", "leader total");
    for (l, j) in cmp.labels.iter().zip(&cmp.totals) {
        println!("{l:<12} {j:>14.4}");
    }
    println!("lowest total: {}", cmp.winner_label());
    if let Some(dir) = &args.out {
        create_out(dir)?;
        let runs = setup
            .beliefs
            .iter()
            .map(|b| run_fixed_periodic(&setup.game, &setup.x0, b, cfg.tau, cfg.info_structure))
            .collect::<stackbelief_core::Result<Vec<_>>>()?;
        write_runs_jsonl(&dir.join("runs.jsonl"), &runs)?;
    }
    Ok(true)
}

fn experiment_config(args: &SimArgs, sweep: bool) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => load_experiment(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if let Some(n) = args.runs {
        cfg.n_runs = n;
    }
    if let Some(h) = args.horizon {
        cfg.scenario.horizon = h;
    }
    if let Some(i) = args.info_structure {
        cfg.info_structure = i;
    }
    if let Some(s) = &args.schemes {
        cfg.schemes = s.clone();
    }
    if let Some(t) = args.true_intention {
        cfg.true_intention = t;
    }
    if let Some(t) = args.tau {
        cfg.tau_values = vec![t];
    } else if let Some(ts) = &args.tau_sweep {
        cfg.tau_values = ts.clone();
    } else if !sweep && args.config.is_none() {
        cfg.tau_values = vec![1];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_table(t: &StatsTable) {
    println!("tau = {} ({}), runs per row: {:?}", t.tau, t.info_structure, t.run_count);
    print!("{:<8}", "true");
    for s in &t.schemes {
        print!(" {:>18}", s.to_string());
    }
    println!();
    for (r, truth) in t.truths.iter().enumerate() {
        print!("{:<8}", truth.to_string());
        for c in 0..t.schemes.len() {
            print!(" {:>8.1}% / {:>6.3}%", t.win_percent[r][c], t.pct_higher[r][c]);
        }
        println!();
    }
    if t.excluded() > 0 {
        println!("excluded: {} failed, {} zero-cost", t.excluded_failed.iter().sum::<usize>(), t.excluded_zero_cost.iter().sum::<usize>());
    }
}

fn cmd_simulate(args: SimArgs, sweep: bool) -> Result<bool> {
    let cfg = experiment_config(&args, sweep)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build()?;
    let result = pool.install(|| run_experiment(&cfg))?;
    let tables = result.tables();

    let out = &args.out;
    create_out(out)?;
    let primary = &tables[0];
    write_win_matrix(&out.join("win_matrix.csv"), primary)?;
    write_pct_higher(&out.join("pct_higher.csv"), primary)?;
    if tables.len() > 1 || sweep {
        write_tau_sweep(&out.join("tau_sweep.csv"), &tables)?;
    }
    if cfg.schemes.contains(&Scheme::Adaptive) {
        write_posterior_trace(&out.join("posterior_trace.csv"), &result)?;
    }
    write_stats_json(&out.join("stats.json"), &tables)?;
    write_run_log(&out.join("runs.jsonl"), &result)?;
    if args.emit_svg {
        let info = cfg.info_structure;
        write_text(
            &out.join("win_matrix.svg"),
            &bar_chart_svg(&format!("Lowest-cost wins, {info}, tau = {}", primary.tau), primary, &primary.win_percent, "% of runs"),
        )?;
        write_text(
            &out.join("pct_higher.svg"),
            &bar_chart_svg(&format!("Mean % above per-run minimum, {info}"), primary, &primary.pct_higher, "% above min"),
        )?;
        if tables.len() > 1 {
            write_text(&out.join("tau_sweep.svg"), &tau_sweep_svg(&format!("Wins vs update period, {info}"), &tables))?;
        }
    }

    for t in &tables {
        print_table(t);
    }
    println!("(cells: win % / mean % above per-run minimum)");
    println!("outputs written to {}", out.display());
    let attempted: usize = tables.iter().map(StatsTable::attempted).sum();
    let excluded: usize = tables.iter().map(StatsTable::excluded).sum();
    let ok = (excluded as f64) <= MAX_EXCLUDED_FRACTION * attempted as f64;
    if !ok {
        eprintln!("too many excluded runs: {excluded} of {attempted}");
    }
    Ok(ok)
}
