//! Round traces and their replay.

use bichore_core::approx_efx::ApproxRound;
use bichore_core::exact_efx_k2::{K2Branch, K2Round};
use bichore_core::market_init::Transfer;
use bichore_core::pef1_solver::{Pef1Branch, Pef1Round};
use bichore_core::{Instance, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::format::{StateJson, Q, FORMAT_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferJson {
    pub item: usize,
    pub from: usize,
    pub to: usize,
}

impl From<&Transfer> for TransferJson {
    fn from(t: &Transfer) -> Self {
        TransferJson { item: t.item + 1, from: t.from + 1, to: t.to + 1 }
    }
}

fn transfers(ts: &[Transfer]) -> Vec<TransferJson> {
    ts.iter().map(TransferJson::from).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum TraceRecord {
    /// Path resolution on the greedy initial state.
    Init { transfers: Vec<TransferJson> },
    Pef1 {
        round: usize,
        big: usize,
        least: usize,
        branch: String,
        intermediary: Option<usize>,
        raised_agents: Vec<usize>,
        raised_items: Vec<usize>,
        transfers: Vec<TransferJson>,
    },
    Approx {
        round: usize,
        envier: usize,
        target: usize,
        item: usize,
        earnings_before: [Q; 2],
        earnings_after: [Q; 2],
        transfers: Vec<TransferJson>,
    },
    Exact2 {
        round: usize,
        envier: usize,
        target: usize,
        branch: String,
        item_out: usize,
        item_in: Option<usize>,
        earnings_before: [Q; 2],
        earnings_after: [Q; 2],
        eta: usize,
        transfers: Vec<TransferJson>,
    },
}

impl TraceRecord {
    pub fn init(ts: &[Transfer]) -> Self {
        TraceRecord::Init { transfers: transfers(ts) }
    }

    pub fn pef1(r: &Pef1Round) -> Self {
        TraceRecord::Pef1 {
            round: r.round,
            big: r.big + 1,
            least: r.least + 1,
            branch: match r.branch {
                Pef1Branch::Direct => "direct",
                Pef1Branch::ViaIntermediary => "intermediary",
            }
            .into(),
            intermediary: r.intermediary.map(|i| i + 1),
            raised_agents: r.raised_agents.iter().map(|a| a + 1).collect(),
            raised_items: r.raised_items.iter().map(|e| e + 1).collect(),
            transfers: transfers(&r.transfers),
        }
    }

    pub fn approx(r: &ApproxRound) -> Self {
        TraceRecord::Approx {
            round: r.round,
            envier: r.envier + 1,
            target: r.target + 1,
            item: r.item + 1,
            earnings_before: [Q(r.earnings_before.0), Q(r.earnings_before.1)],
            earnings_after: [Q(r.earnings_after.0), Q(r.earnings_after.1)],
            transfers: transfers(&r.transfers),
        }
    }

    pub fn exact2(r: &K2Round) -> Self {
        TraceRecord::Exact2 {
            round: r.round,
            envier: r.envier + 1,
            target: r.target + 1,
            branch: match r.branch {
                K2Branch::Swap => "swap",
                K2Branch::Move => "move",
            }
            .into(),
            item_out: r.item_out + 1,
            item_in: r.item_in.map(|e| e + 1),
            earnings_before: [Q(r.earnings_before.0), Q(r.earnings_before.1)],
            earnings_after: [Q(r.earnings_after.0), Q(r.earnings_after.1)],
            eta: r.eta,
            transfers: transfers(&r.transfers),
        }
    }

    fn raised_items(&self) -> &[usize] {
        match self {
            TraceRecord::Pef1 { raised_items, .. } => raised_items,
            _ => &[],
        }
    }

    fn transfer_list(&self) -> &[TransferJson] {
        match self {
            TraceRecord::Init { transfers }
            | TraceRecord::Pef1 { transfers, .. }
            | TraceRecord::Approx { transfers, .. }
            | TraceRecord::Exact2 { transfers, .. } => transfers,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceFile {
    pub format_version: u32,
    pub digest: String,
    /// State the records apply to, in order.
    pub initial: StateJson,
    pub records: Vec<TraceRecord>,
}

impl TraceFile {
    pub fn new(digest: String, initial: StateJson) -> Self {
        TraceFile { format_version: FORMAT_VERSION, digest, initial, records: Vec::new() }
    }
}

/// Applies every record to the initial state: raises first, then transfers.
/// Returns the final 1-based owners and payments.
pub fn replay(instance: &Instance, trace: &TraceFile) -> Result<(Vec<usize>, Vec<Q>)> {
    Ok(replay_states(instance, trace)?.pop().expect("initial state present"))
}

/// The initial state followed by the state after each record.
pub fn replay_states(instance: &Instance, trace: &TraceFile) -> Result<Vec<(Vec<usize>, Vec<Q>)>> {
    let k = instance.k();
    let mut owners = trace.initial.owners.clone();
    let mut payments = trace.initial.payments.clone();
    if owners.len() != instance.items() || payments.len() != instance.items() {
        return Err(HarnessError::Replay("initial state does not match the instance size".into()));
    }
    let mut states = vec![(owners.clone(), payments.clone())];
    for (idx, rec) in trace.records.iter().enumerate() {
        for &e in rec.raised_items() {
            let p = payments
                .get_mut(e.wrapping_sub(1))
                .ok_or_else(|| HarnessError::Replay(format!("record {idx}: item {e} out of range")))?;
            if p.0 != Rational::ONE {
                return Err(HarnessError::Replay(format!("record {idx}: item {e} raised twice")));
            }
            p.0 = k;
        }
        for t in rec.transfer_list() {
            let slot = owners
                .get_mut(t.item.wrapping_sub(1))
                .ok_or_else(|| HarnessError::Replay(format!("record {idx}: item {} out of range", t.item)))?;
            if *slot != t.from {
                return Err(HarnessError::Replay(format!(
                    "record {idx}: item {} is held by agent {}, not {}",
                    t.item, slot, t.from
                )));
            }
            *slot = t.to;
        }
        states.push((owners.clone(), payments.clone()));
    }
    Ok(states)
}
