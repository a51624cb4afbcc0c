use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bichore::bench::{bench, beta_text, rows_to_csv, BenchCell, BenchGrid};
use bichore::format::{load_instance, parse_json, read, to_json, write, InstanceFile, StateJson};
use bichore::gen::{gen_instance, GenParams};
use bichore::pipeline::{audit_report, normalize, uniform_instance, Mode, PipelineOptions, HARNESS_ORACLE_BUDGET};
use bichore::trace::{replay, TraceFile};
use bichore::{run_pipeline, RunReport};
use bichore_core::approx_efx::approx_factor;
use bichore_core::oracle::{best_efx_beta_over_po, exists_efx_po, DEFAULT_BUDGET};
use bichore_core::{Beta, Rational};
use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "bichore", version, about = "Fair and Pareto optimal chore allocation for bi-valued costs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        /// High cost, as NUM/DEN or an integer.
        #[arg(long, value_parser = parse_rational)]
        k: Rational,
        /// Probability of a high entry, as NUM/DEN.
        #[arg(long, default_value = "1/2", value_parser = parse_rational)]
        high_prob: Rational,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pipeline on an instance file and write a report.
    Solve {
        instance: PathBuf,
        #[arg(long, default_value = "auto", value_parser = parse_mode)]
        mode: Mode,
        /// Write the round trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Oracle checks run when n^m is below this; 0 disables them.
        #[arg(long, default_value_t = HARNESS_ORACLE_BUDGET)]
        oracle_budget: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute a report's verdicts, optionally replaying its trace.
    Verify {
        instance: PathBuf,
        report: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Exhaustive EFX + PO search.
    Oracle {
        instance: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        oracle_budget: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid of generated instances and write CSV.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "4")]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "8")]
        m: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2,3", value_parser = parse_rational)]
        k: Vec<Rational>,
        #[arg(long, value_delimiter = ',', default_value = "1/2", value_parser = parse_rational)]
        high_prob: Vec<Rational>,
        /// First seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of seeds per grid cell.
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value = "auto", value_parser = parse_mode)]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        oracle_budget: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_rational(s: &str) -> std::result::Result<Rational, String> {
    s.parse::<Rational>().map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse()
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleOutput {
    n: usize,
    m: usize,
    k: Option<String>,
    efx_po_witness: Option<Vec<usize>>,
    best_efx_beta_over_po: String,
    best_witness: Vec<usize>,
    bound: String,
    bound_met: bool,
}

/// Ok(true) when every contractual verdict holds.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gen { n, m, k, high_prob, seed, out } => {
            let raw = gen_instance(&GenParams { n, m, k, high_prob, seed })?;
            emit(out.as_deref(), &to_json(&InstanceFile::from_raw(&raw)))?;
            Ok(true)
        }
        Command::Solve { instance, mode, trace, oracle_budget, out } => {
            let loaded = load_instance(&instance)?;
            let opts = PipelineOptions { oracle_budget, trace: trace.is_some() };
            let output = run_pipeline(&loaded.raw, mode, loaded.start.as_ref(), &opts);
            if let (Some(path), Some(t)) = (trace.as_deref(), output.trace.as_ref()) {
                write(path, &to_json(t))?;
            }
            emit(out.as_deref(), &to_json(&output.report))?;
            if let Some(e) = &output.report.error {
                eprintln!("error: {e}");
            }
            Ok(output.report.success)
        }
        Command::Verify { instance, report, trace } => {
            let loaded = load_instance(&instance)?;
            let report: RunReport = parse_json(&read(&report)?).context("reading report")?;
            let mut problems = audit_report(&loaded.raw, &report)?;
            if let Some(path) = trace {
                let trace: TraceFile = parse_json(&read(&path)?).context("reading trace")?;
                let inst = normalize(&loaded.raw)?
                    .unwrap_or_else(|| uniform_instance(loaded.raw.agents(), loaded.raw.items()));
                let (owners, payments) = replay(&inst, &trace)?;
                match &report.final_state {
                    Some(StateJson { owners: o, payments: p, .. }) if *o == owners && *p == payments => {}
                    _ => problems.push("trace replay does not reproduce the final state".into()),
                }
            }
            for p in &problems {
                println!("FAIL {p}");
            }
            if problems.is_empty() {
                println!("OK");
            }
            Ok(problems.is_empty())
        }
        Command::Oracle { instance, oracle_budget, out } => {
            let loaded = load_instance(&instance)?;
            let normalized = normalize(&loaded.raw)?;
            let k = normalized.as_ref().map(|i| i.k());
            let inst = normalized.unwrap_or_else(|| uniform_instance(loaded.raw.agents(), loaded.raw.items()));
            let witness = exists_efx_po(&inst, oracle_budget)?;
            let (best, best_alloc) = best_efx_beta_over_po(&inst, oracle_budget)?;
            let bound = match k {
                Some(k) if k != Rational::integer(2) => approx_factor(k),
                _ => Rational::ONE,
            };
            let one_based = |o: &[usize]| o.iter().map(|a| a + 1).collect::<Vec<_>>();
            let result = OracleOutput {
                n: inst.agents(),
                m: inst.items(),
                k: k.map(|k| k.to_string()),
                efx_po_witness: witness.as_ref().map(|a| one_based(a.owners())),
                best_efx_beta_over_po: beta_text(best),
                best_witness: one_based(best_alloc.owners()),
                bound: bound.to_string(),
                bound_met: best <= Beta::Finite(bound),
            };
            emit(out.as_deref(), &to_json(&result))?;
            Ok(result.bound_met)
        }
        Command::Bench { n, m, k, high_prob, seed, seeds, mode, oracle_budget, out } => {
            if n.is_empty() || m.is_empty() || k.is_empty() || high_prob.is_empty() {
                bail!("every grid axis needs at least one value");
            }
            let mut cells = Vec::new();
            for &k in &k {
                for &n in &n {
                    for &m in &m {
                        for &high_prob in &high_prob {
                            cells.push(BenchCell { n, m, k, high_prob });
                        }
                    }
                }
            }
            let grid = BenchGrid { cells, seeds: seed..seed.saturating_add(seeds), mode, oracle_budget };
            let rows = bench(&grid);
            emit(out.as_deref(), &rows_to_csv(&rows))?;
            Ok(rows.iter().all(|r| r.pass != Some(false)))
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
