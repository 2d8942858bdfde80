//! The versioned JSON report every subcommand emits.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const SCHEMA: &str = "blduality/1";

/// Outcome class of a run; anything but `Ok` exits with code 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Unbounded,
    NotConverged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema: String,
    pub subcommand: String,
    pub inputs_digest: String,
    pub status: Status,
    pub units: String,
    pub seed: u64,
    pub restarts: usize,
    pub tolerances: BTreeMap<String, f64>,
    pub values: BTreeMap<String, Value>,
    /// Information quantities from `values`, converted to bits.
    pub values_bits: BTreeMap<String, Value>,
    pub certificates: BTreeMap<String, Value>,
}

/// JSON has no infinities; they are written as the strings `"inf"`,
/// `"-inf"` and `"nan"`.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

pub fn matrix(m: &nalgebra::DMatrix<f64>) -> Value {
    Value::Array((0..m.nrows()).map(|i| nums(&m.row(i).iter().copied().collect::<Vec<_>>())).collect())
}

/// Reads back a number written by [`num`].
pub fn parse_num(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => match s.as_str() {
            "inf" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            "nan" => Some(f64::NAN),
            _ => None,
        },
        _ => None,
    }
}

/// SHA-256 over the canonical input together with everything else that
/// determines the output.
pub fn inputs_digest(subcommand: &str, input: &Value, extra: &Value, cfg: &RunConfig) -> String {
    let canonical = json!({
        "subcommand": subcommand,
        "input": input,
        "extra": extra,
        "seed": cfg.seed,
        "restarts": cfg.restarts,
        "tolerances": cfg.tolerances,
    });
    let bytes = serde_json::to_vec(&canonical).expect("JSON values always serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Report {
    pub fn new(subcommand: &str, digest: String, cfg: &RunConfig) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            subcommand: subcommand.to_string(),
            inputs_digest: digest,
            status: Status::Ok,
            units: "nats".to_string(),
            seed: cfg.seed,
            restarts: cfg.restarts,
            tolerances: cfg.tolerances.clone(),
            values: BTreeMap::new(),
            values_bits: BTreeMap::new(),
            certificates: BTreeMap::new(),
        }
    }

    pub fn value(&mut self, key: &str, v: Value) -> &mut Self {
        self.values.insert(key.to_string(), v);
        self
    }

    /// An information quantity in nats, echoed in bits.
    pub fn info(&mut self, key: &str, nats: f64) -> &mut Self {
        self.values.insert(key.to_string(), num(nats));
        self.values_bits.insert(key.to_string(), num(nats / LN_2));
        self
    }

    pub fn cert(&mut self, key: &str, v: Value) -> &mut Self {
        self.certificates.insert(key.to_string(), v);
        self
    }

    pub fn status(&mut self, status: Status) -> &mut Self {
        self.status = status;
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }
}
