//! Stage orchestration and run reports.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use bichore_core::approx_efx::{approx_factor, run_approx_efx};
use bichore_core::exact_efx_k2::run_efx_k2;
use bichore_core::market_init::build_initial_state;
use bichore_core::model::{build_market_state, normalize_instance, Allocation, Instance, MarketState, PaymentVector};
use bichore_core::oracle::{allocation_count, best_efx_beta_over_po, is_pareto_optimal};
use bichore_core::pef1_solver::run_pef1_traced;
use bichore_core::verify::{check_ef1, check_equilibrium, check_pef1, min_beta_efx, min_beta_pefx};
use bichore_core::{Beta, Error as CoreError, RawInstance, Rational};
use serde::{Deserialize, Serialize};

use crate::digest::instance_digest;
use crate::error::{HarnessError, Result};
use crate::format::{BetaJson, StateJson, Q, FORMAT_VERSION};
use crate::trace::{TraceFile, TraceRecord};

/// Oracle checks in `solve` run only when `nᵐ` is below this.
pub const HARNESS_ORACLE_BUDGET: u64 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pef1,
    Approx,
    Exact2,
    Auto,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Pef1 => "pef1",
            Mode::Approx => "approx",
            Mode::Exact2 => "exact2",
            Mode::Auto => "auto",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pef1" => Ok(Mode::Pef1),
            "approx" => Ok(Mode::Approx),
            "exact2" => Ok(Mode::Exact2),
            "auto" => Ok(Mode::Auto),
            _ => Err(format!("unknown mode {s:?} (expected pef1, approx, exact2 or auto)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PipelineOptions {
    /// 0 disables the oracle.
    pub oracle_budget: u64,
    pub trace: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions { oracle_budget: HARNESS_ORACLE_BUDGET, trace: false }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    /// Rounds for solver stages, transfers for `init`.
    pub steps: usize,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    pub equilibrium: bool,
    pub pef1: bool,
    pub ef1: bool,
    pub beta_pefx: BetaJson,
    pub beta_efx: BetaJson,
    /// Required bound on `beta_efx` for the stage that produced the output.
    pub beta_target: Option<Q>,
    pub contract_met: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleReport {
    pub budget: u64,
    pub pareto_optimal: bool,
    pub best_efx_beta_over_po: BetaJson,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub digest: String,
    pub n: usize,
    pub m: usize,
    pub k: Option<Q>,
    pub mode: Mode,
    /// `pef1`, `approx`, `exact2` or `uniform`.
    pub stage: String,
    pub success: bool,
    pub error: Option<String>,
    pub stages: Vec<StageReport>,
    pub final_state: Option<StateJson>,
    pub earnings: Vec<Q>,
    pub verdicts: Option<Verdicts>,
    pub oracle: Option<OracleReport>,
    pub timings_us: BTreeMap<String, u64>,
}

impl RunReport {
    pub fn rounds(&self, stage: &str) -> usize {
        self.stages.iter().find(|s| s.name == stage).map_or(0, |s| s.steps)
    }

    pub fn beta_efx(&self) -> Option<Beta> {
        self.verdicts.as_ref().map(|v| v.beta_efx.into())
    }

    pub fn without_timings(&self) -> RunReport {
        RunReport { timings_us: BTreeMap::new(), ..self.clone() }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub trace: Option<TraceFile>,
}

/// Normalized instance, or `None` for uniform costs.
pub fn normalize(raw: &RawInstance) -> Result<Option<Instance>> {
    match normalize_instance(raw) {
        Ok(inst) => Ok(Some(inst)),
        Err(CoreError::AlreadyUniform) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// All-ones stand-in used for uniform instances: every cost is 1.
pub fn uniform_instance(n: usize, m: usize) -> Instance {
    Instance::new(Rational::integer(2), vec![vec![false; m]; n]).expect("non-empty")
}

pub fn digest_of(raw: &RawInstance) -> Result<String> {
    Ok(instance_digest(raw.agents(), raw.items(), normalize(raw)?.as_ref()))
}

fn target_for(stage: &str, k: Rational) -> Option<Rational> {
    match stage {
        "approx" => Some(approx_factor(k)),
        "exact2" | "uniform" => Some(Rational::ONE),
        _ => None,
    }
}

pub fn compute_verdicts(market: &MarketState, stage: &str) -> Verdicts {
    let (inst, alloc) = (market.instance(), market.allocation());
    let equilibrium = check_equilibrium(market).holds();
    let pef1 = check_pef1(market).holds();
    let ef1 = check_ef1(inst, alloc).holds();
    let beta_efx = min_beta_efx(inst, alloc);
    let target = target_for(stage, market.k());
    let contract_met = equilibrium
        && match target {
            Some(t) => beta_efx.at_most(t),
            None => pef1 && ef1,
        };
    Verdicts {
        equilibrium,
        pef1,
        ef1,
        beta_pefx: min_beta_pefx(market).value.into(),
        beta_efx: beta_efx.value.into(),
        beta_target: target.map(Q),
        contract_met,
    }
}

fn oracle_report(market: &MarketState, budget: u64) -> Result<Option<OracleReport>> {
    let (n, m) = (market.agents(), market.items());
    if budget == 0 || allocation_count(n, m).is_none_or(|c| c >= budget) {
        return Ok(None);
    }
    let inst = market.instance();
    let pareto_optimal = is_pareto_optimal(inst, market.allocation(), budget)?;
    let (best, _) = best_efx_beta_over_po(inst, budget)?;
    Ok(Some(OracleReport { budget, pareto_optimal, best_efx_beta_over_po: best.into() }))
}

struct Run {
    report: RunReport,
    trace: Option<TraceFile>,
    clock: Instant,
}

impl Run {
    fn time(&mut self, name: &str, since: Instant) {
        self.report.timings_us.insert(name.into(), since.elapsed().as_micros() as u64);
    }

    fn stage(&mut self, name: &str, steps: usize, ok: bool) {
        self.report.stages.push(StageReport { name: name.into(), steps, ok });
    }

    fn record(&mut self, rec: TraceRecord) {
        if let Some(t) = &mut self.trace {
            t.records.push(rec);
        }
    }

    fn finish(&mut self, market: &MarketState, unraised: Option<&[bool]>, opts: &PipelineOptions) {
        let st = StateJson::from_parts(market.allocation(), market.payments(), unraised);
        self.report.final_state = Some(st);
        self.report.earnings = market.earnings().into_iter().map(Q).collect();
        let verdicts = compute_verdicts(market, &self.report.stage);
        let mut success = self.report.error.is_none() && verdicts.contract_met;
        self.report.verdicts = Some(verdicts);
        if self.report.error.is_none() {
            let t = Instant::now();
            match oracle_report(market, opts.oracle_budget) {
                Ok(o) => {
                    success &= o.as_ref().is_none_or(|o| o.pareto_optimal);
                    self.report.oracle = o;
                }
                Err(e) => {
                    success = false;
                    self.report.error = Some(e.to_string());
                }
            }
            self.time("oracle", t);
        }
        self.report.success = success;
        self.report.timings_us.insert("total".into(), self.clock.elapsed().as_micros() as u64);
    }

    fn fail(&mut self, e: impl fmt::Display) {
        self.report.error = Some(e.to_string());
        self.report.success = false;
        self.report.timings_us.insert("total".into(), self.clock.elapsed().as_micros() as u64);
    }
}

/// Runs the requested stages on `raw`. A `start` state skips the pEF1 stage
/// and feeds the given equilibrium to the approx or `k = 2` phase.
pub fn run_pipeline(raw: &RawInstance, mode: Mode, start: Option<&StateJson>, opts: &PipelineOptions) -> RunOutput {
    let (n, m) = (raw.agents(), raw.items());
    let normalized = normalize(raw);
    let digest = instance_digest(n, m, normalized.as_ref().ok().and_then(Option::as_ref));
    let mut run = Run {
        report: RunReport {
            format_version: FORMAT_VERSION,
            digest: digest.clone(),
            n,
            m,
            k: None,
            mode,
            stage: String::new(),
            success: false,
            error: None,
            stages: Vec::new(),
            final_state: None,
            earnings: Vec::new(),
            verdicts: None,
            oracle: None,
            timings_us: BTreeMap::new(),
        },
        trace: None,
        clock: Instant::now(),
    };
    let inst = match normalized {
        Err(e) => {
            run.fail(e);
            return RunOutput { report: run.report, trace: None };
        }
        Ok(None) => {
            run.report.stage = "uniform".into();
            let inst = uniform_instance(n, m);
            let alloc = Allocation::new(n, (0..m).map(|e| e % n).collect()).expect("owners in range");
            let market = build_market_state(inst, alloc, PaymentVector::all_low(Rational::integer(2), m))
                .expect("uniform state is consistent");
            if opts.trace {
                let initial = StateJson::from_parts(market.allocation(), market.payments(), None);
                run.trace = Some(TraceFile::new(digest, initial));
            }
            run.stage("uniform", 0, true);
            run.finish(&market, None, opts);
            return RunOutput { report: run.report, trace: run.trace };
        }
        Ok(Some(inst)) => inst,
    };
    let k = inst.k();
    run.report.k = Some(Q(k));
    let stage = match mode {
        Mode::Pef1 => "pef1",
        Mode::Approx => "approx",
        Mode::Exact2 => "exact2",
        Mode::Auto if k == Rational::integer(2) => "exact2",
        Mode::Auto => "approx",
    };
    run.report.stage = stage.into();
    if stage == "exact2" && k != Rational::integer(2) {
        run.fail(CoreError::RequiresKTwo(k));
        return RunOutput { report: run.report, trace: None };
    }

    let (market, unraised) = match start {
        Some(st) => {
            if stage == "pef1" {
                run.fail("a start state requires mode approx, exact2 or auto");
                return RunOutput { report: run.report, trace: None };
            }
            match start_state(&inst, st) {
                Ok((market, unraised)) => {
                    if opts.trace {
                        run.trace = Some(TraceFile::new(digest, st.clone()));
                    }
                    (market, unraised)
                }
                Err(e) => {
                    run.fail(e);
                    return RunOutput { report: run.report, trace: None };
                }
            }
        }
        None => {
            let t = Instant::now();
            if opts.trace {
                match build_initial_state(&inst) {
                    Ok(s) => {
                        let initial = StateJson::from_parts(s.allocation(), s.payments(), None);
                        run.trace = Some(TraceFile::new(digest, initial));
                    }
                    Err(e) => {
                        run.fail(e);
                        return RunOutput { report: run.report, trace: None };
                    }
                }
            }
            let pef1 = match run_pef1_traced(&inst) {
                Ok(r) => r,
                Err(e) => {
                    run.stage("pef1", 0, false);
                    run.fail(e);
                    return RunOutput { report: run.report, trace: run.trace };
                }
            };
            run.time("pef1", t);
            run.stage("init", pef1.init_transfers.len(), true);
            run.stage("pef1", pef1.rounds.len(), true);
            run.record(TraceRecord::init(&pef1.init_transfers));
            for r in &pef1.rounds {
                run.record(TraceRecord::pef1(r));
            }
            let unraised = pef1.state.unraised().to_vec();
            (pef1.state.into_market(), unraised)
        }
    };

    let t = Instant::now();
    let result: std::result::Result<MarketState, (MarketState, CoreError)> = match stage {
        "pef1" => Ok(market),
        "approx" => match run_approx_efx(market.clone()) {
            Ok(out) => {
                run.stage("approx", out.rounds.len(), true);
                for r in &out.rounds {
                    run.record(TraceRecord::approx(r));
                }
                Ok(out.market().clone())
            }
            Err(e) => Err((market, e)),
        },
        _ => match run_efx_k2(market.clone(), &unraised) {
            Ok(out) => {
                run.stage("exact2", out.rounds.len(), true);
                for r in &out.rounds {
                    run.record(TraceRecord::exact2(r));
                }
                Ok(out.market)
            }
            Err(e) => Err((market, e)),
        },
    };
    if stage != "pef1" {
        run.time(stage, t);
    }
    match result {
        Ok(final_market) => run.finish(&final_market, Some(&unraised), opts),
        Err((market, e)) => {
            run.stage(stage, 0, false);
            run.report.error = Some(e.to_string());
            run.finish(&market, Some(&unraised), opts);
        }
    }
    RunOutput { report: run.report, trace: run.trace }
}

/// Market state and unraised flags from a file's start block.
pub fn start_state(inst: &Instance, st: &StateJson) -> Result<(MarketState, Vec<bool>)> {
    let (n, m) = (inst.agents(), inst.items());
    let alloc = st.allocation(n, m)?;
    let pay = st.payment_vector(inst.k(), m)?;
    let unraised = st.unraised.clone().unwrap_or_else(|| vec![true; n]);
    if unraised.len() != n {
        return Err(HarnessError::field("start.unraised", format!("expected {n} entries")));
    }
    Ok((build_market_state(inst.clone(), alloc, pay)?, unraised))
}

/// Rebuilds the final state stored in a report.
pub fn report_market(raw: &RawInstance, report: &RunReport) -> Result<MarketState> {
    let st = report
        .final_state
        .as_ref()
        .ok_or_else(|| HarnessError::field("final_state", "missing"))?;
    let inst = normalize(raw)?.unwrap_or_else(|| uniform_instance(raw.agents(), raw.items()));
    let alloc = st.allocation(inst.agents(), inst.items())?;
    let pay = st.payment_vector(inst.k(), inst.items())?;
    Ok(build_market_state(inst, alloc, pay)?)
}

/// Recomputes the verdicts of a stored report from its final state and lists
/// every mismatch or failed contract.
pub fn audit_report(raw: &RawInstance, report: &RunReport) -> Result<Vec<String>> {
    let mut problems = Vec::new();
    if digest_of(raw)? != report.digest {
        problems.push("digest does not match the instance".into());
    }
    let market = report_market(raw, report)?;
    let fresh = compute_verdicts(&market, &report.stage);
    match &report.verdicts {
        Some(v) if *v == fresh => {}
        Some(_) => problems.push("stored verdicts differ from recomputed ones".into()),
        None => problems.push("report has no verdicts".into()),
    }
    if !fresh.contract_met {
        problems.push(format!("contract for stage {} fails", report.stage));
    }
    if let Some(e) = &report.error {
        problems.push(format!("run error: {e}"));
    }
    if report.oracle.as_ref().is_some_and(|o| !o.pareto_optimal) {
        problems.push("oracle found a Pareto improvement".into());
    }
    Ok(problems)
}
