use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use e3b_core::bench::bench_ellipse;
use e3b_core::config::{fingerprint, from_pairs, parse_config, to_pairs};
use e3b_core::record::{footer_line, header_line, row_line, MetricRow, RunRecord, RunStatus};
use e3b_core::stats::{aggregate, DEFAULT_CONFIDENCE, DEFAULT_RESAMPLES, DEFAULT_RESAMPLE_SEED};
use e3b_core::trainer::{train_with, TrainConfig, TrainOptions};
use e3b_core::Error;

#[derive(Parser)]
#[command(name = "e3b", version, about = "Elliptical episodic bonus experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one run per seed and write JSON-lines records.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed (overrides `seed`/`seeds` in the config).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Aggregate final scores across record files.
    Eval {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: usize,
        #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
        confidence: f64,
        #[arg(long, default_value_t = DEFAULT_RESAMPLE_SEED)]
        resample_seed: u64,
    },
    /// Micro-benchmarks.
    Bench {
        #[command(subcommand)]
        what: BenchCmd,
    },
    /// Re-run a record's config and re-derive every bonus offline.
    Replay {
        #[arg(long)]
        record: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Rank-1 inverse-covariance updates vs. re-inversion.
    Ellipse {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0.1)]
        ridge: f64,
    },
}

/// Exit code 1 for bad input, 2 for failures while running.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn record_name(cfg: &TrainConfig) -> String {
    let label = cfg.label.clone().unwrap_or_else(|| cfg.bonus.algo.name().to_string());
    format!("{label}__{}__seed{}.jsonl", cfg.env, cfg.seed)
}

/// Streams the record to disk as it is produced so an interrupted run leaves
/// a file without a status line (read back as failed).
fn run_one(cfg: &TrainConfig, dir: &Path, quiet: bool) -> Result<(PathBuf, RunStatus), Failure> {
    let path = dir.join(record_name(cfg));
    let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
    file.write_all(header_line(&fingerprint(cfg), cfg.seed, &to_pairs(cfg))?.as_bytes())?;
    file.flush()?;
    let mut io_err = None;
    let outcome = train_with(cfg, TrainOptions::default(), |row: &MetricRow| {
        let res = row_line(row).map_err(Failure::from).and_then(|l| {
            file.write_all(l.as_bytes())?;
            file.flush().map_err(Failure::from)
        });
        if let Err(e) = res {
            io_err.get_or_insert(e);
        }
        if !quiet {
            eprintln!(
                "seed {} step {:>8} return {:.3} bonus {:.4} entropy {:.3}",
                cfg.seed, row.step, row.episode_return_mean, row.intrinsic_mean, row.entropy
            );
        }
    });
    if let Some(e) = io_err {
        return Err(e);
    }
    let rec = outcome.record;
    file.write_all(footer_line(rec.status, rec.error.as_deref())?.as_bytes())?;
    file.flush()?;
    if let Some(e) = &rec.error {
        eprintln!("seed {} failed: {e}", cfg.seed);
    }
    Ok((path, rec.status))
}

fn train(config: &Path, seed: Option<u64>, out: Option<PathBuf>, quiet: bool) -> Result<(), Failure> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", config.display())))?;
    let rc = parse_config(&text)?;
    let dir = out.or(rc.out).unwrap_or_else(|| PathBuf::from("runs"));
    std::fs::create_dir_all(&dir)?;
    let seeds = seed.map(|s| vec![s]).unwrap_or(rc.seeds);
    let mut failed = 0;
    for s in seeds {
        let mut cfg = rc.train.clone();
        cfg.seed = s;
        let (path, status) = run_one(&cfg, &dir, quiet)?;
        println!("{}", path.display());
        if status == RunStatus::Failed {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} run(s) failed")));
    }
    Ok(())
}

fn eval(records: &Path, report: &Path, resamples: usize, confidence: f64, seed: u64) -> Result<(), Failure> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(records)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", records.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let recs = paths
        .iter()
        .map(|p| RunRecord::load(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    let rep = aggregate(&recs, resamples, confidence, seed)?;
    std::fs::write(report, serde_json::to_string_pretty(&rep).map_err(Error::from)?)?;
    print!("{}", rep.to_table());
    Ok(())
}

fn replay(path: &Path, tolerance: f64) -> Result<(), Failure> {
    let rec = RunRecord::load(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut cfg = from_pairs(&rec.config)?;
    cfg.seed = rec.seed;
    if fingerprint(&cfg) != rec.fingerprint {
        return Err(Failure::Runtime(
            "config does not reproduce the recorded fingerprint".into(),
        ));
    }
    let outcome = train_with(&cfg, TrainOptions { verify_bonuses: true }, |_| {});
    if let Some(e) = &outcome.record.error {
        return Err(Failure::Runtime(format!("replay failed: {e}")));
    }
    let strip = |m: &MetricRow| MetricRow {
        steps_per_second: None,
        ..m.clone()
    };
    let logged: Vec<MetricRow> = rec.metrics.iter().map(strip).collect();
    let rerun: Vec<MetricRow> = outcome.record.metrics.iter().map(strip).collect();
    let matches = logged.len() <= rerun.len() && logged.iter().zip(&rerun).all(|(a, b)| a == b);
    println!(
        "bonuses checked {} max deviation {:e} metric rows {} ({} logged)",
        outcome.bonuses_checked,
        outcome.max_bonus_deviation,
        if matches { "match" } else { "differ" },
        logged.len()
    );
    if outcome.max_bonus_deviation > tolerance {
        return Err(Failure::Runtime(format!(
            "bonus deviation {:e} exceeds {tolerance:e}",
            outcome.max_bonus_deviation
        )));
    }
    if !matches {
        return Err(Failure::Runtime("re-run metrics differ from the record".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.cmd {
        Cmd::Train {
            config,
            seed,
            out,
            quiet,
        } => train(&config, seed, out, quiet),
        Cmd::Eval {
            records,
            report,
            resamples,
            confidence,
            resample_seed,
        } => eval(&records, &report, resamples, confidence, resample_seed),
        Cmd::Bench {
            what:
                BenchCmd::Ellipse {
                    dim,
                    steps,
                    repeats,
                    ridge,
                },
        } => bench_ellipse(dim, steps, repeats, ridge)
            .map_err(Failure::from)
            .and_then(|r| {
                println!("{}", serde_json::to_string(&r).map_err(Error::from)?);
                Ok(())
            }),
        Cmd::Replay { record, tolerance } => replay(&record, tolerance),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
