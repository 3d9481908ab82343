//! Canonical serialization and the append-only, hash-chained event log.
//!
//! Every record carries the digest of its predecessor, so editing, dropping or
//! reordering any line breaks verification from that line on. Records are
//! written in canonical form (sorted keys, no whitespace, reals at six
//! significant digits) and verification also rejects non-canonical lines.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Digest used as `prev_hash` of the first event.
pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

/// Rounds to six significant digits; non-finite values are returned unchanged.
pub fn round_sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

/// Shortest decimal form of a real rounded to six significant digits.
pub fn fmt_real(x: f64) -> String {
    let r = round_sig6(x);
    if r.is_finite() {
        format!("{r}")
    } else {
        "NaN".to_string()
    }
}

/// Rounds every real in `v` to six significant digits.
pub fn normalize(v: &Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|f| Number::from_f64(round_sig6(f)))
            .map_or(Value::Null, Value::Number),
        Value::Array(a) => Value::Array(a.iter().map(normalize).collect()),
        Value::Object(m) => Value::Object(m.iter().map(|(k, v)| (k.clone(), normalize(v))).collect()),
        other => other.clone(),
    }
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => match Number::from_f64(round_sig6(f)) {
                Some(r) => write!(out, "{r}").expect("write to string"),
                None => out.push_str("null"),
            },
            _ => write!(out, "{n}").expect("write to string"),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(x, out);
            }
            out.push(']');
        }
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("key serializes"));
                out.push(':');
                write_canonical(&m[k], out);
            }
            out.push('}');
        }
    }
}

/// Sorted keys, no insignificant whitespace, reals at six significant digits.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_canonical(v, &mut out);
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TriageSummary,
    PolicyUpdate,
    Escalation,
    AssignmentFallback,
    CollusionState,
    Intervention,
    DecisionBatchSummary,
    RunMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub t: u32,
    pub kind: EventKind,
    pub payload: Value,
    pub prev_hash: String,
    pub hash: String,
}

fn event_digest(prev_hash: &str, seq: u64, t: u32, kind: EventKind, payload: &Value) -> String {
    let body = serde_json::json!({ "seq": seq, "t": t, "kind": kind, "payload": payload });
    let mut h = Sha256::new();
    h.update(prev_hash.as_bytes());
    h.update(canonical_json(&body).as_bytes());
    hex::encode(h.finalize())
}

impl AuditEvent {
    /// The on-disk line (without trailing newline).
    pub fn to_line(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("event serializes"))
    }
}

/// Running head of a chain. Cheap to clone, so simulations can be forked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditChain {
    next_seq: u64,
    head: String,
}

impl Default for AuditChain {
    fn default() -> Self {
        Self {
            next_seq: 0,
            head: GENESIS_HASH.to_string(),
        }
    }
}

impl AuditChain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn head(&self) -> &str {
        &self.head
    }

    pub fn len(&self) -> u64 {
        self.next_seq
    }

    pub fn is_empty(&self) -> bool {
        self.next_seq == 0
    }

    pub fn append(&mut self, t: u32, kind: EventKind, payload: Value) -> AuditEvent {
        let payload = normalize(&payload);
        let seq = self.next_seq;
        let hash = event_digest(&self.head, seq, t, kind, &payload);
        let ev = AuditEvent {
            seq,
            t,
            kind,
            payload,
            prev_hash: std::mem::replace(&mut self.head, hash.clone()),
            hash,
        };
        self.next_seq += 1;
        ev
    }
}

/// Line-oriented writer for `events.jsonl`.
pub struct EventWriter {
    out: BufWriter<File>,
}

impl EventWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn write(&mut self, ev: &AuditEvent) -> Result<()> {
        self.out.write_all(ev.to_line().as_bytes())?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStatus {
    Ok { events: u64, head: String },
    BrokenAt { seq: u64 },
}

fn check_line(line: &str, seq: u64, prev: &str) -> Option<String> {
    let v: Value = serde_json::from_str(line).ok()?;
    if canonical_json(&v) != line {
        return None;
    }
    let ev: AuditEvent = serde_json::from_value(v).ok()?;
    if ev.seq != seq || ev.prev_hash != prev {
        return None;
    }
    (event_digest(prev, ev.seq, ev.t, ev.kind, &ev.payload) == ev.hash).then_some(ev.hash)
}

/// Verifies a chain given as raw bytes. The `n`th line must carry `seq = n`.
pub fn verify_bytes(bytes: &[u8]) -> ChainStatus {
    let mut prev = GENESIS_HASH.to_string();
    let mut seq = 0u64;
    let mut rest = bytes;
    while !rest.is_empty() {
        let (line, tail) = match rest.iter().position(|b| *b == b'\n') {
            Some(i) => (&rest[..i], &rest[i + 1..]),
            // A final line without newline was truncated or altered.
            None => return ChainStatus::BrokenAt { seq },
        };
        let Ok(text) = std::str::from_utf8(line) else {
            return ChainStatus::BrokenAt { seq };
        };
        match check_line(text, seq, &prev) {
            Some(h) => prev = h,
            None => return ChainStatus::BrokenAt { seq },
        }
        seq += 1;
        rest = tail;
    }
    ChainStatus::Ok { events: seq, head: prev }
}

pub fn verify_chain(path: &Path) -> Result<ChainStatus> {
    Ok(verify_bytes(&std::fs::read(path)?))
}

/// Parses `events.jsonl` without verification.
pub fn read_events(path: &Path) -> Result<Vec<AuditEvent>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        out.push(serde_json::from_str(&line?)?);
    }
    Ok(out)
}

/// Builds an object payload from key/value pairs.
pub fn payload<I, K>(pairs: I) -> Value
where
    I: IntoIterator<Item = (K, Value)>,
    K: Into<String>,
{
    Value::Object(pairs.into_iter().map(|(k, v)| (k.into(), v)).collect::<Map<_, _>>())
}
