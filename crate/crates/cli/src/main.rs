use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use ghalab::exact_arith::{fmt_rational, parse_rational, Rational};
use ghalab::problems::Branch;
use ghalab_cli::*;

#[derive(Parser)]
#[command(name = "ghalab", version, about = "Exact experiments on inverse-problem training families")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = OUT_ENV)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a family from a config and write its manifest and members.
    Build {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train on one member and write the cell with its transcript.
    Train {
        /// Family manifest or config.
        #[arg(long)]
        family: PathBuf,
        #[arg(long, default_value = "1", value_parser = parse_branch)]
        branch: Branch,
        #[arg(long, default_value_t = 1)]
        n: u32,
        #[arg(long, value_parser = parse_eps)]
        eps: Rational,
        #[arg(long, default_value = "rbf")]
        trainer: TrainerKey,
        /// Use a jittered oracle with this seed instead of exact rounding.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Play the breakdown game against every registered algorithm.
    Game {
        #[arg(long)]
        family: PathBuf,
        #[arg(long, value_parser = parse_eps)]
        eps: Rational,
        #[arg(long, default_value_t = ghalab::adversary::DEFAULT_BUDGET)]
        budget: u64,
        /// Only this algorithm.
        #[arg(long)]
        algorithm: Option<String>,
    },
    /// Run a sweep spec and write results.csv.
    Sweep {
        spec: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Re-derive every stored cell in the output directory.
    Verify {
        #[arg(long)]
        family: PathBuf,
    },
    /// Rerun a trainer from a recorded transcript.
    Replay {
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long, default_value = "1", value_parser = parse_branch)]
        branch: Branch,
        #[arg(long, default_value_t = 1)]
        n: u32,
        #[arg(long, value_parser = parse_eps)]
        eps: Rational,
        #[arg(long, default_value = "rbf")]
        trainer: TrainerKey,
    },
}

fn parse_branch(s: &str) -> Result<Branch, String> {
    let b: u8 = s.parse().map_err(|_| format!("bad branch {s:?}"))?;
    Branch::try_from(b).map_err(|e| e.to_string())
}

fn parse_eps(s: &str) -> Result<Rational, String> {
    let q = parse_rational(s).map_err(|e| e.to_string())?;
    if q <= Rational::from_integer(0.into()) {
        return Err(format!("eps must be positive, got {s}"));
    }
    Ok(q)
}

fn run(cli: Cli) -> Result<bool> {
    let out = cli.out.unwrap_or_else(default_out_dir);
    match cli.cmd {
        Cmd::Build { config } => {
            let f = cmd_build(&config, &out)?;
            println!(
                "built {} family: ell={} kappa={} -> {}",
                f.kind,
                f.ell,
                fmt_rational(&f.kappa),
                out.display()
            );
            Ok(true)
        }
        Cmd::Train {
            family,
            branch,
            n,
            eps,
            trainer,
            seed,
        } => {
            let family = load_family(&family)?;
            let (cell, log) = train_cell(&family, branch, n, &eps, trainer, seed)?;
            let dir = save_train_cell(&out, &cell, &log)?;
            match (&cell.verdict, &cell.error) {
                (Some(v), _) => println!(
                    "{} violation_sq={} bound_sq={} queries={} -> {}",
                    if v.pass { "PASS" } else { "FAIL" },
                    fmt_rational(&v.violation_sq),
                    fmt_rational(&v.bound_sq),
                    cell.queries,
                    dir.display()
                ),
                (None, e) => println!("ERROR {}", e.as_deref().unwrap_or("")),
            }
            Ok(cell.verdict.is_some())
        }
        Cmd::Game {
            family,
            eps,
            budget,
            algorithm,
        } => {
            let family = load_family(&family)?;
            for cell in play_games(&family, &eps, budget, algorithm.as_deref())? {
                save_game_cell(&out, &cell)?;
                let g = &cell.game;
                println!(
                    "{:<20} branch={} n_adv={} error_sq={} {}",
                    g.algorithm,
                    g.declared_branch,
                    g.n_adv,
                    g.error_sq.as_ref().map(fmt_rational).unwrap_or_else(|| "-".into()),
                    if g.nonhalting {
                        "NONHALTING"
                    } else if g.defeated() {
                        "DEFEATED"
                    } else {
                        "SURVIVED"
                    }
                );
            }
            Ok(true)
        }
        Cmd::Sweep { spec, jobs } => {
            let rows = cmd_sweep(&spec, &out, jobs)?;
            let failed = rows.iter().filter(|r| r.verdict.starts_with("ERROR")).count();
            println!(
                "{} rows, {} without a verdict -> {}",
                rows.len(),
                failed,
                out.join("results.csv").display()
            );
            Ok(failed == 0)
        }
        Cmd::Verify { family } => {
            let family = load_family(&family)?;
            let s = cmd_verify(&family, &out)?;
            for m in &s.mismatches {
                println!("MISMATCH {m}");
            }
            println!("{} cells checked, {} mismatches", s.checked, s.mismatches.len());
            Ok(s.mismatches.is_empty())
        }
        Cmd::Replay {
            family,
            transcript,
            branch,
            n,
            eps,
            trainer,
        } => {
            let family = load_family(&family)?;
            let o = cmd_replay(&family, branch, n, &eps, trainer, &transcript)
                .context("replay")?;
            println!("{}", serde_json::to_string_pretty(&o.net)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
