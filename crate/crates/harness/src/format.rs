//! JSON documents for instances, reports and traces.
//!
//! Rationals are `[numerator, denominator]` pairs. Agents and items are
//! 1-based in every file.

use std::fs;
use std::path::Path;

use bichore_core::model::{normalize_instance, Allocation, Instance, PaymentVector, RawInstance};
use bichore_core::{Beta, Error as CoreError, Rational};
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const FORMAT_VERSION: u32 = 1;

/// A rational stored as `[num, den]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Q(pub Rational);

impl Serialize for Q {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.0.numer(), self.0.denom()].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Q {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match BetaJson::deserialize(d)? {
            BetaJson::Finite(q) => Ok(q),
            BetaJson::Unbounded => Err(de::Error::custom("expected a [num, den] pair")),
        }
    }
}

/// An integer read through `deserialize_any`, so it also works inside
/// buffered (tagged) content, which cannot carry `i128` directly.
struct Int(i128);

impl<'de> Deserialize<'de> for Int {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = Int;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("an integer")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Int, E> {
                Ok(Int(v.into()))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Int, E> {
                Ok(Int(v.into()))
            }

            fn visit_i128<E: de::Error>(self, v: i128) -> std::result::Result<Int, E> {
                Ok(Int(v))
            }
        }
        d.deserialize_any(V)
    }
}

/// `[num, den]`, or the string `"unbounded"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BetaJson {
    Finite(Q),
    Unbounded,
}

impl Serialize for BetaJson {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BetaJson::Finite(q) => q.serialize(s),
            BetaJson::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for BetaJson {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> de::Visitor<'de> for V {
            type Value = BetaJson;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a [num, den] pair or \"unbounded\"")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<BetaJson, E> {
                match v {
                    "unbounded" => Ok(BetaJson::Unbounded),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }

            fn visit_seq<A: de::SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<BetaJson, A::Error> {
                let Int(n) = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let Int(den) = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(1, &self))?;
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::invalid_length(3, &self));
                }
                Rational::new(n, den)
                    .map(|r| BetaJson::Finite(Q(r)))
                    .ok_or_else(|| de::Error::custom("rational has a zero denominator"))
            }
        }
        d.deserialize_any(V)
    }
}

impl From<Beta> for BetaJson {
    fn from(b: Beta) -> Self {
        match b {
            Beta::Finite(v) => BetaJson::Finite(Q(v)),
            Beta::Unbounded => BetaJson::Unbounded,
        }
    }
}

impl From<BetaJson> for Beta {
    fn from(b: BetaJson) -> Self {
        match b {
            BetaJson::Finite(q) => Beta::Finite(q.0),
            BetaJson::Unbounded => Beta::Unbounded,
        }
    }
}

/// An allocation with payments, used as a start state and inside traces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateJson {
    /// Owner of each item, 1-based.
    pub owners: Vec<usize>,
    pub payments: Vec<Q>,
    /// Agents whose payments were never raised; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unraised: Option<Vec<bool>>,
}

impl StateJson {
    pub fn from_parts(alloc: &Allocation, payments: &PaymentVector, unraised: Option<&[bool]>) -> Self {
        StateJson {
            owners: alloc.owners().iter().map(|&a| a + 1).collect(),
            payments: payments.values().into_iter().map(Q).collect(),
            unraised: unraised.map(<[bool]>::to_vec),
        }
    }

    /// 0-based owners, checked against `n` and `m`.
    pub fn allocation(&self, n: usize, m: usize) -> Result<Allocation> {
        if self.owners.len() != m {
            return Err(HarnessError::field("start.owners", format!("expected {m} entries")));
        }
        let owners = self
            .owners
            .iter()
            .enumerate()
            .map(|(e, &a)| {
                if a == 0 || a > n {
                    Err(HarnessError::field(format!("start.owners[{e}]"), format!("agent {a} outside 1..={n}")))
                } else {
                    Ok(a - 1)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Allocation::new(n, owners)?)
    }

    pub fn payment_vector(&self, k: Rational, m: usize) -> Result<PaymentVector> {
        if self.payments.len() != m {
            return Err(HarnessError::field("start.payments", format!("expected {m} entries")));
        }
        let values: Vec<Rational> = self.payments.iter().map(|q| q.0).collect();
        PaymentVector::from_values(k, &values).map_err(|e| HarnessError::field("start.payments", e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub format_version: u32,
    pub n: usize,
    pub m: usize,
    /// Absent for instances where every agent values all items equally.
    #[serde(default)]
    pub k: Option<Q>,
    pub costs: Vec<Vec<Q>>,
    /// Normalized form: `true` where the cost is `k` times the agent's low cost.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<Vec<Vec<bool>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<StateJson>,
}

/// A loaded instance file: the raw matrix and an optional start state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoadedInstance {
    pub raw: RawInstance,
    pub start: Option<StateJson>,
}

impl InstanceFile {
    pub fn from_raw(raw: &RawInstance) -> Self {
        let costs = (0..raw.agents()).map(|i| raw.row(i).iter().copied().map(Q).collect()).collect();
        let (k, high) = match normalize_instance(raw) {
            Ok(inst) => (Some(Q(inst.k())), Some(high_matrix(&inst))),
            Err(_) => (None, None),
        };
        InstanceFile { format_version: FORMAT_VERSION, n: raw.agents(), m: raw.items(), k, costs, high, start: None }
    }

    /// Structural checks plus agreement of `k` and `high` with the costs.
    pub fn validate(self) -> Result<LoadedInstance> {
        if self.format_version != FORMAT_VERSION {
            return Err(HarnessError::field(
                "format_version",
                format!("unsupported version {}", self.format_version),
            ));
        }
        if self.costs.len() != self.n {
            return Err(HarnessError::field("costs", format!("expected {} rows, found {}", self.n, self.costs.len())));
        }
        for (i, row) in self.costs.iter().enumerate() {
            if row.len() != self.m {
                return Err(HarnessError::field(
                    format!("costs[{i}]"),
                    format!("expected {} entries, found {}", self.m, row.len()),
                ));
            }
        }
        let rows = self.costs.iter().map(|r| r.iter().map(|q| q.0).collect()).collect();
        let raw = RawInstance::new(rows).map_err(|e| HarnessError::field("costs", e.to_string()))?;
        match normalize_instance(&raw) {
            Ok(inst) => {
                if let Some(k) = self.k {
                    if k.0 != inst.k() {
                        return Err(HarnessError::field("k", format!("costs give k = {}, file says {}", inst.k(), k.0)));
                    }
                }
                if let Some(high) = &self.high {
                    if *high != high_matrix(&inst) {
                        return Err(HarnessError::field("high", "does not match the normalized costs"));
                    }
                }
            }
            Err(CoreError::AlreadyUniform) => {
                if let Some(k) = self.k {
                    return Err(HarnessError::field("k", format!("costs are uniform, file says {}", k.0)));
                }
            }
            Err(e) => return Err(HarnessError::field("costs", e.to_string())),
        }
        Ok(LoadedInstance { raw, start: self.start })
    }
}

pub fn high_matrix(inst: &Instance) -> Vec<Vec<bool>> {
    (0..inst.agents()).map(|i| inst.high_row(i).to_vec()).collect()
}

/// Parses JSON, reporting line, column and the field path on failure.
pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        HarnessError::Parse { line: inner.line(), column: inner.column(), field: path, message: inner.to_string() }
    })?;
    de.end().map_err(|e| HarnessError::Parse {
        line: e.line(),
        column: e.column(),
        field: ".".into(),
        message: e.to_string(),
    })?;
    Ok(value)
}

pub fn parse_instance(text: &str) -> Result<LoadedInstance> {
    parse_json::<InstanceFile>(text)?.validate()
}

pub fn load_instance(path: &Path) -> Result<LoadedInstance> {
    parse_instance(&read(path)?)
}

pub fn instance_to_string(file: &InstanceFile) -> String {
    serde_json::to_string_pretty(file).expect("instance serializes") + "\n"
}

pub fn save_instance(path: &Path, file: &InstanceFile) -> Result<()> {
    write(path, &instance_to_string(file))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("document serializes") + "\n"
}

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| HarnessError::Io { path: path.display().to_string(), source: e })
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::Io { path: path.display().to_string(), source: e })
}
