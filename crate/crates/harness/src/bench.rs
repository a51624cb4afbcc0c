//! Batch runs over a parameter grid, emitted as CSV.

use std::ops::Range;

use bichore_core::{Beta, Rational};
use rayon::prelude::*;
use serde::Serialize;

use crate::gen::{gen_instance, GenParams};
use crate::pipeline::{run_pipeline, Mode, PipelineOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchCell {
    pub n: usize,
    pub m: usize,
    pub k: Rational,
    pub high_prob: Rational,
}

#[derive(Clone, Debug)]
pub struct BenchGrid {
    pub cells: Vec<BenchCell>,
    pub seeds: Range<u64>,
    pub mode: Mode,
    pub oracle_budget: u64,
}

/// One CSV line. `kind` is `run` for a (cell, seed) pair and `max_beta` for
/// the per-`k` aggregate, which leaves the per-run columns empty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BenchRow {
    pub kind: &'static str,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub k: String,
    pub high_prob: Option<String>,
    pub seed: Option<u64>,
    pub digest: Option<String>,
    pub stage: Option<String>,
    pub pef1_rounds: Option<usize>,
    pub approx_rounds: Option<usize>,
    pub exact2_rounds: Option<usize>,
    pub beta_efx: Option<String>,
    pub beta_pefx: Option<String>,
    pub pass: Option<bool>,
    pub error: Option<String>,
    pub micros: Option<u64>,
}

pub const HEADER: [&str; 16] = [
    "kind",
    "n",
    "m",
    "k",
    "high_prob",
    "seed",
    "digest",
    "stage",
    "pef1_rounds",
    "approx_rounds",
    "exact2_rounds",
    "beta_efx",
    "beta_pefx",
    "pass",
    "error",
    "micros",
];

pub fn beta_text(b: Beta) -> String {
    match b {
        Beta::Finite(v) => v.to_string(),
        Beta::Unbounded => "unbounded".into(),
    }
}

fn run_cell(cell: &BenchCell, seed: u64, mode: Mode, oracle_budget: u64) -> (BenchRow, Option<Beta>) {
    let params = GenParams { n: cell.n, m: cell.m, k: cell.k, high_prob: cell.high_prob, seed };
    let mut row = BenchRow {
        kind: "run",
        n: Some(cell.n),
        m: Some(cell.m),
        k: cell.k.to_string(),
        high_prob: Some(cell.high_prob.to_string()),
        seed: Some(seed),
        digest: None,
        stage: None,
        pef1_rounds: None,
        approx_rounds: None,
        exact2_rounds: None,
        beta_efx: None,
        beta_pefx: None,
        pass: Some(false),
        error: None,
        micros: None,
    };
    let raw = match gen_instance(&params) {
        Ok(raw) => raw,
        Err(e) => {
            row.error = Some(e.to_string());
            return (row, None);
        }
    };
    let opts = PipelineOptions { oracle_budget, trace: false };
    let r = run_pipeline(&raw, mode, None, &opts).report;
    row.digest = Some(r.digest.clone());
    row.stage = Some(r.stage.clone());
    row.pef1_rounds = Some(r.rounds("pef1"));
    row.approx_rounds = Some(r.rounds("approx"));
    row.exact2_rounds = Some(r.rounds("exact2"));
    let beta = r.beta_efx();
    row.beta_efx = beta.map(beta_text);
    row.beta_pefx = r.verdicts.as_ref().map(|v| beta_text(v.beta_pefx.into()));
    row.pass = Some(r.success);
    row.error = r.error.clone();
    row.micros = r.timings_us.get("total").copied();
    (row, beta)
}

/// Every (cell, seed) pair in grid order, then one `max_beta` row per
/// distinct `k` in order of first appearance.
pub fn bench(grid: &BenchGrid) -> Vec<BenchRow> {
    let jobs: Vec<(usize, u64)> =
        (0..grid.cells.len()).flat_map(|c| grid.seeds.clone().map(move |s| (c, s))).collect();
    let results: Vec<(BenchRow, Option<Beta>)> = jobs
        .par_iter()
        .map(|&(c, s)| run_cell(&grid.cells[c], s, grid.mode, grid.oracle_budget))
        .collect();
    let mut ks: Vec<Rational> = Vec::new();
    for cell in &grid.cells {
        if !ks.contains(&cell.k) {
            ks.push(cell.k);
        }
    }
    let mut rows: Vec<BenchRow> = Vec::with_capacity(results.len() + ks.len());
    let mut maxima: Vec<Option<Beta>> = vec![None; ks.len()];
    for ((c, _), (row, beta)) in jobs.iter().zip(results) {
        let slot = ks.iter().position(|&k| k == grid.cells[*c].k).expect("k listed");
        if let Some(b) = beta {
            maxima[slot] = Some(maxima[slot].map_or(b, |m| m.max(b)));
        }
        rows.push(row);
    }
    for (k, max) in ks.iter().zip(maxima) {
        if let Some(max) = max {
            rows.push(BenchRow {
                kind: "max_beta",
                n: None,
                m: None,
                k: k.to_string(),
                high_prob: None,
                seed: None,
                digest: None,
                stage: None,
                pef1_rounds: None,
                approx_rounds: None,
                exact2_rounds: None,
                beta_efx: Some(beta_text(max)),
                beta_pefx: None,
                pass: None,
                error: None,
                micros: None,
            });
        }
    }
    rows
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for row in rows {
        w.serialize(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn bench_csv(grid: &BenchGrid) -> String {
    rows_to_csv(&bench(grid))
}
