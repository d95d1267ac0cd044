use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use local_regret::experiment::{
    run_distinguish, run_regret, run_verify, DistinguishConfig, EnvKind, FtrlSettings, LearnerKind, Metadata,
    RegimeChoice, RegretConfig, VerifyConfig,
};
use local_regret::reduction::{regret_target, RegimeParams};
use local_regret::{Error, Graph, Result};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// Play FTRL against an adversary and report regret against OPT.
    Regret,
    /// Run the planted-vs-random distinguisher over several graphs.
    Distinguish,
    /// Numerical checks of the regularizer, projection and polytope.
    Verify,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EnvArg {
    Maxcut,
    Random,
    Cluster,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RegimeArg {
    Clique,
    Dense,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LearnerArg {
    Ftrl,
    Oracle,
    Uniform,
}

/// Online local learning experiments.
#[derive(Debug, Parser)]
#[command(name = "local-regret", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Number of items (regret) or vertices (distinguish).
    #[arg(long)]
    n: Option<usize>,
    /// Number of labels.
    #[arg(long = "L")]
    labels: Option<usize>,
    /// Number of rounds.
    #[arg(long = "T")]
    rounds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "random")]
    env: EnvArg,
    /// Graph file: first line `n m`, then `u v` per edge.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Learning rate; defaults to sqrt(nL / 4T).
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    inner_iters: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long, value_enum, default_value = "clique")]
    regime: RegimeArg,
    /// Planted set size.
    #[arg(long)]
    k: Option<usize>,
    /// Ambient edge density (dense regime).
    #[arg(long)]
    p: Option<f64>,
    /// Planted edge density (dense regime).
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    eps_prime: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    slack: f64,
    /// Repetitions per distinguisher call; defaults to the formula.
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    learner: LearnerArg,
    /// Skip the exhaustive OPT computation in regret runs.
    #[arg(long)]
    no_opt: bool,
    /// Output CSV; a `.summary.csv` sibling holds the summary.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn ftrl_settings(cli: &Cli) -> FtrlSettings {
    FtrlSettings {
        nu: cli.nu,
        inner_iters: cli.inner_iters,
        grad_tol: cli.grad_tol,
    }
}

fn read_graph(path: &Path) -> Result<Graph> {
    Graph::read_text(BufReader::new(File::open(path)?))
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.csv"))
}

/// Write `main` then `summary` either to `--out` and its sibling or both to
/// stdout.
fn emit<F, G>(out: Option<&Path>, main: F, summary: G) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
    G: FnOnce(&mut dyn Write) -> Result<()>,
{
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            main(&mut w)?;
            w.flush()?;
            let mut s = BufWriter::new(File::create(summary_path(path))?);
            summary(&mut s)?;
            s.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            main(&mut w)?;
            summary(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn regret(cli: &Cli) -> Result<()> {
    let env = match cli.env {
        EnvArg::Maxcut => EnvKind::Maxcut,
        EnvArg::Random => EnvKind::Random,
        EnvArg::Cluster => EnvKind::Cluster,
    };
    let mut cfg = RegretConfig::new(
        cli.n.unwrap_or(3),
        cli.labels.unwrap_or(2),
        cli.rounds.unwrap_or(100),
        cli.seed,
        env,
    );
    if let Some(path) = &cli.graph {
        let g = read_graph(path)?;
        if cli.n.is_none() {
            cfg.n = g.n();
        }
        cfg.graph = Some(g);
    }
    cfg.k = cli.k;
    cfg.ftrl = ftrl_settings(cli);
    cfg.compute_opt = !cli.no_opt;
    let report = run_regret(&cfg)?;
    emit(
        cli.out.as_deref(),
        |w| report.write_trace(w),
        |w| report.write_summary(w),
    )
}

fn regime_target(cli: &Cli, n: usize, meta: &mut Metadata) -> Result<()> {
    let params = match (cli.regime, cli.eps) {
        (_, None) => return Ok(()),
        (RegimeArg::Clique, Some(eps)) => RegimeParams::Clique {
            n,
            eps,
            slack: cli.slack,
        },
        (RegimeArg::Dense, Some(eps)) => RegimeParams::Dense {
            n,
            alpha: cli
                .alpha
                .ok_or_else(|| Error::InvalidArgument("dense regime needs --alpha".into()))?,
            eps,
            eps_prime: cli
                .eps_prime
                .ok_or_else(|| Error::InvalidArgument("dense regime needs --eps-prime".into()))?,
            slack: cli.slack,
        },
    };
    let t = regret_target(params)?;
    meta.push("slack", cli.slack);
    meta.push("beta", t.beta);
    meta.push("target_regret", t.target_regret);
    meta.push("separation_ratio", t.separation_ratio);
    Ok(())
}

fn distinguish(cli: &Cli) -> Result<()> {
    let n = cli
        .n
        .ok_or_else(|| Error::InvalidArgument("distinguish needs --n".into()))?;
    let k = cli
        .k
        .ok_or_else(|| Error::InvalidArgument("distinguish needs --k".into()))?;
    let regime = match cli.regime {
        RegimeArg::Clique => RegimeChoice::Clique,
        RegimeArg::Dense => {
            let p = match (cli.p, cli.alpha) {
                (Some(p), _) => p,
                (None, Some(alpha)) => (n as f64).powf(-alpha),
                (None, None) => return Err(Error::InvalidArgument("dense regime needs --p or --alpha".into())),
            };
            let q = match (cli.q, cli.alpha, cli.eps) {
                (Some(q), _, _) => q,
                (None, Some(alpha), Some(eps)) => (k as f64).powf(-alpha - eps),
                _ => {
                    return Err(Error::InvalidArgument(
                        "dense regime needs --q or --alpha with --eps".into(),
                    ))
                }
            };
            RegimeChoice::Dense { p, q }
        }
    };
    let learner = match cli.learner {
        LearnerArg::Ftrl => LearnerKind::Ftrl,
        LearnerArg::Oracle => LearnerKind::Oracle,
        LearnerArg::Uniform => LearnerKind::Uniform,
    };
    let mut cfg = DistinguishConfig::new(n, k, regime, cli.trials, learner, cli.seed);
    cfg.repetitions = cli.repetitions;
    cfg.ftrl = ftrl_settings(cli);
    let mut report = run_distinguish(&cfg)?;
    regime_target(cli, n, &mut report.metadata)?;
    emit(
        cli.out.as_deref(),
        |w| report.write_rows(w),
        |w| report.write_summary(w),
    )
}

fn verify(cli: &Cli) -> Result<bool> {
    let cfg = VerifyConfig {
        seed: cli.seed,
        ..VerifyConfig::default()
    };
    let report = run_verify(&cfg)?;
    let gamma = report.suite("gamma").map_or(f64::NAN, |s| s.worst);
    let write = |w: &mut dyn Write| -> Result<()> {
        report.write_table(w)?;
        writeln!(w, "# max_abs_quadform = {gamma}")?;
        Ok(())
    };
    match &cli.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write(&mut w)?;
            w.flush()?;
            println!("max |quadform| = {gamma}");
        }
        None => write(&mut io::stdout().lock())?,
    }
    for s in report.suites.iter().filter(|s| !s.passed && !s.skipped) {
        eprintln!("suite {} failed: worst {} > limit {}", s.name, s.worst, s.limit);
    }
    Ok(report.all_passed())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("LOCAL_REGRET_THREADS") {
        let threads: usize = v.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!("LOCAL_REGRET_THREADS must be a positive integer, got {v:?}"))
        })?;
        if threads == 0 {
            return Err(Error::InvalidArgument("LOCAL_REGRET_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::Regret => regret(&cli).map(|()| true),
        Command::Distinguish => distinguish(&cli).map(|()| true),
        Command::Verify => verify(&cli),
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
