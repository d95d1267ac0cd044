//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use local_regret::environments::cluster_edge_env;
use local_regret::experiment::{
    diameter_suite, gamma_suite, gradient_suite, hessian_suites, projection_suite, run_distinguish, run_regret,
    DistinguishConfig, EnvKind, LearnerKind, RegimeChoice, RegretConfig, VerifyConfig,
};
use local_regret::learner::run_game;
use local_regret::reduction::{
    choose2, clique_beta, clique_corollary, dense_beta, gen_planted, oracle_labeling_payoff, random_partition, Case,
    CheatingOracleLearner,
};
use local_regret::rng::stream;
use local_regret::Result;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn gamma() -> Result<Outcome> {
    let start = Instant::now();
    let s = gamma_suite(&VerifyConfig::default())?;
    let took = start.elapsed();
    outcome(
        s.samples >= 1000 && s.passed && took < Duration::from_secs(60),
        format!(
            "max |quadform| {:.6} over {} samples (limit 4), {}",
            s.worst,
            s.samples,
            secs(took)
        ),
    )
}

fn hessian() -> Result<Outcome> {
    let start = Instant::now();
    let (identity, fd) = hessian_suites(&VerifyConfig::default())?;
    let took = start.elapsed();
    outcome(
        identity.passed && fd.passed && took < Duration::from_secs(60),
        format!(
            "identity deviation {:.3e} (limit 1e-6), relative FD error {:.3e} (limit 1e-3), {} samples, {}",
            identity.worst,
            fd.worst,
            identity.samples,
            secs(took)
        ),
    )
}

fn gradient() -> Result<Outcome> {
    let s = gradient_suite(&VerifyConfig::default())?;
    outcome(
        s.samples == 20 && s.passed,
        format!(
            "relative error {:.3e} over {} matrices (limit 1e-4)",
            s.worst, s.samples
        ),
    )
}

fn diameter() -> Result<Outcome> {
    let s = diameter_suite(&VerifyConfig::default())?;
    outcome(
        s.samples == 100 && s.passed,
        format!(
            "max |logdet| - nL = {:.4} over {} matrices (limit 0)",
            s.worst, s.samples
        ),
    )
}

fn regret() -> Result<Outcome> {
    let start = Instant::now();
    let mut jobs = Vec::new();
    for n in [3, 4] {
        for env in [EnvKind::Random, EnvKind::Maxcut] {
            for t in [50, 200] {
                for seed in 1..=10u64 {
                    jobs.push((n, env, t, seed));
                }
            }
        }
    }
    let runs = jobs
        .par_iter()
        .map(|&(n, env, t, seed)| {
            let rep = run_regret(&RegretConfig::new(n, 2, t, seed, env))?;
            Ok((n, env, t, rep.regret.unwrap_or(f64::INFINITY), rep.bound))
        })
        .collect::<Result<Vec<_>>>()?;
    let took = start.elapsed();

    let mut passed = took < Duration::from_secs(600);
    let mut worst_fraction = 0.0f64;
    for &(_, _, _, r, bound) in &runs {
        worst_fraction = worst_fraction.max(r / bound);
        passed &= r <= bound;
    }
    let mut ratios = Vec::new();
    for n in [3, 4] {
        for env in [EnvKind::Random, EnvKind::Maxcut] {
            let mean = |t: usize| {
                let v: Vec<f64> = runs
                    .iter()
                    .filter(|r| r.0 == n && r.1 == env && r.2 == t)
                    .map(|r| r.3)
                    .collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            let (short, long) = (mean(50), mean(200));
            passed &= long <= 2.5 * short.max(0.0) || long <= 0.0;
            let trend = if short > 0.0 {
                format!("x{:.2}", long / short)
            } else {
                "not positive".to_string()
            };
            ratios.push(format!("n={n} {}: {short:.2} -> {long:.2} {trend}", env.name()));
        }
    }
    outcome(
        passed,
        format!(
            "{} runs, worst regret/bound {:.3}; {}; {}",
            runs.len(),
            worst_fraction,
            ratios.join(", "),
            secs(took)
        ),
    )
}

fn projection() -> Result<Outcome> {
    let s = projection_suite(&VerifyConfig::default())?;
    outcome(
        s.samples == 50 && s.passed && !s.skipped,
        format!(
            "max Frobenius distance {:.3e} over {} inputs (limit 1e-4)",
            s.worst, s.samples
        ),
    )
}

fn reduction_random_case() -> Result<Outcome> {
    let mut cfg = DistinguishConfig::new(200, 40, RegimeChoice::Clique, 100, LearnerKind::Uniform, 11);
    cfg.repetitions = Some(50);
    cfg.only_case = Some(Case::Random);
    let rep = run_distinguish(&cfg)?;
    let t = rep.config.rounds as f64;
    let cut = t / 2.0 + 5.0 * t.sqrt() / 2.0;
    let exceed = rep.rows.iter().filter(|r| r.avg_payoff > cut).count();
    let freq = exceed as f64 / rep.rows.len() as f64;
    let mean = rep.rows.iter().map(|r| r.avg_payoff).sum::<f64>() / rep.rows.len() as f64;
    outcome(
        rep.rows.len() == 100 && freq <= 0.05,
        format!("T={t}, {exceed}/100 trials above {cut:.3}, mean average payoff {mean:.3}"),
    )
}

fn reduction_planted_case() -> Result<Outcome> {
    let (n, runs) = (500, 20u64);
    let results = (0..runs)
        .into_par_iter()
        .map(|run| {
            let k = [20, 30, 40, 50, 70][run as usize % 5];
            let mut rng = stream(3, "acceptance-planted", run);
            let (graph, planted) = gen_planted(n, 0.5, k, 1.0, &mut rng)?;
            let partition = random_partition(&graph, k, &mut rng)?;
            let mut learner = CheatingOracleLearner::new(&partition, &planted);
            let covered = learner.choices().to_vec();
            let mut env = cluster_edge_env(&graph, &partition)?;
            let records = run_game(&mut learner, &mut env, &mut rng)?;
            let collected: f64 = records
                .iter()
                .filter(|r| covered[r.pair.0].is_some() && covered[r.pair.1].is_some())
                .map(|r| r.payoff_received)
                .sum();
            let m = partition.covered_clusters(&planted);
            Ok((m, collected, oracle_labeling_payoff(&graph, &partition, &planted)))
        })
        .collect::<Result<Vec<_>>>()?;
    let exact = results
        .iter()
        .filter(|&&(m, got, count)| got == choose2(m as f64) && count as f64 == got)
        .count();
    let mut ms: Vec<usize> = results.iter().map(|r| r.0).collect();
    ms.sort_unstable();
    ms.dedup();
    outcome(
        exact == results.len(),
        format!("{exact}/{} runs collect exactly C(m,2), m in {ms:?}", results.len()),
    )
}

fn reduction_coverage() -> Result<Outcome> {
    let (n, k, runs) = (500, 50, 200u64);
    let need = 2 * k / 25;
    let hits = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = stream(5, "acceptance-coverage", run);
            let (graph, planted) = gen_planted(n, 0.5, k, 1.0, &mut rng)?;
            let partition = random_partition(&graph, k, &mut rng)?;
            Ok(partition.covered_clusters(&planted) >= need)
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&h| h)
        .count();
    let frac = hits as f64 / runs as f64;
    outcome(
        frac >= 7.0 / 8.0,
        format!("{hits}/{runs} partitions cover at least {need} clusters ({frac:.3}, need 0.875)"),
    )
}

fn reduction_threshold() -> Result<Outcome> {
    let mut worst = f64::INFINITY;
    let mut passed = true;
    for k in (100..=1000).step_by(25) {
        let k = k as f64;
        let lhs = choose2(2.0 * k / 25.0);
        let rhs = 1.01 * 0.5 * choose2(k / 10.0);
        passed &= lhs >= rhs;
        worst = worst.min(lhs - rhs);
    }
    outcome(passed, format!("37 values of k, smallest margin {worst:.4}"))
}

fn calculators() -> Result<Outcome> {
    let clique = clique_beta(0.5, 0.0)?;
    let dense = dense_beta(0.125, 0.125, 0.125, 0.0)?;
    let mut passed = clique.abs() <= 1e-12 && (dense - 0.3).abs() <= 1e-12;
    let mut worst = 0.0f64;
    for eps in [0.05, 0.1, 0.2, 0.3, 0.45] {
        let c = clique_corollary(1_000_000, eps)?;
        let err = (c.eps_tilde - eps / 6.0)
            .abs()
            .max((c.k_exponent - (0.5 - eps / 6.0)).abs());
        worst = worst.max(err);
        passed &= err <= 1e-12 && c.holds;
    }
    outcome(
        passed,
        format!("clique beta {clique:e}, dense beta {dense:.15}, corollary exponent error {worst:e}"),
    )
}

fn cli_run(dir: &Path, tag: &str, threads: &str, args: &[&str]) -> std::io::Result<(Vec<u8>, Vec<u8>)> {
    let out = dir.join(format!("{tag}.csv"));
    let status = Command::new(env!("CARGO_BIN_EXE_local-regret"))
        .args(args)
        .arg("--out")
        .arg(&out)
        .env("LOCAL_REGRET_THREADS", threads)
        .output()?;
    if !status.status.success() {
        return Err(std::io::Error::other(
            String::from_utf8_lossy(&status.stderr).into_owned(),
        ));
    }
    let summary = std::fs::read(dir.join(format!("{tag}.summary.csv"))).unwrap_or_default();
    Ok((std::fs::read(out)?, summary))
}

fn determinism() -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let cases: [(&str, &[&str]); 4] = [
        (
            "regret",
            &[
                "regret", "--n", "3", "--L", "2", "--T", "40", "--env", "maxcut", "--seed", "7",
            ],
        ),
        (
            "random",
            &[
                "regret", "--n", "4", "--L", "2", "--T", "30", "--env", "random", "--seed", "8",
            ],
        ),
        (
            "distinguish",
            &[
                "distinguish",
                "--n",
                "200",
                "--k",
                "40",
                "--trials",
                "6",
                "--repetitions",
                "20",
                "--seed",
                "9",
            ],
        ),
        ("verify", &["verify", "--seed", "4"]),
    ];
    let mut same = 0;
    for (tag, args) in cases {
        let a = cli_run(dir.path(), &format!("{tag}-a"), "1", args)?;
        let b = cli_run(dir.path(), &format!("{tag}-b"), "4", args)?;
        same += usize::from(a == b && !a.0.is_empty());
    }
    outcome(
        same == cases.len(),
        format!("{same}/{} commands byte-identical across repeats", cases.len()),
    )
}

fn main() -> ExitCode {
    type Check = fn() -> Result<Outcome>;
    let criteria: [(&str, Check); 12] = [
        ("1", gamma),
        ("2", hessian),
        ("3", gradient),
        ("4", diameter),
        ("5", regret),
        ("6", projection),
        ("7a", reduction_random_case),
        ("7b", reduction_planted_case),
        ("7c", reduction_coverage),
        ("7d", reduction_threshold),
        ("8", calculators),
        ("9", determinism),
    ];
    let names = [
        "curvature bound",
        "inverse Hessian",
        "gradient",
        "diameter",
        "regret",
        "projection",
        "random-case payoff",
        "oracle payoff",
        "cluster coverage",
        "threshold gap",
        "calculators",
        "determinism",
    ];
    let mut failed = 0;
    for ((id, check), name) in criteria.iter().zip(names) {
        let (passed, detail) = match check() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!passed);
        println!(
            "{} criterion {id} {name}: {detail}",
            if passed { "PASS" } else { "FAIL" }
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
