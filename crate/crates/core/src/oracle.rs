//! Coordinatewise dyadic access to a training set.
//!
//! A query names an element by its 1-based lexicographic rank in the true
//! set, an axis, a 1-based coordinate and a precision `n`; the answer is a
//! point of `2^-n Z` within `2^-n` of the true coordinate. Trainers see
//! training data only through a [`Channel`], which records every exchange.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::exact_arith::{pow2_neg, rat, round_to_dyadic, Dyadic, Rational};
use crate::problems::TrainingSet;
use crate::stream::SeedStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QueryKey {
    /// 1-based lexicographic rank.
    pub k: usize,
    pub axis: Axis,
    /// 1-based coordinate.
    pub i: usize,
    pub n: u32,
}

impl QueryKey {
    pub fn new(k: usize, axis: Axis, i: usize, n: u32) -> Self {
        Self { k, axis, i, n }
    }

    pub fn x(k: usize, i: usize, n: u32) -> Self {
        Self::new(k, Axis::X, i, n)
    }

    pub fn y(k: usize, i: usize, n: u32) -> Self {
        Self::new(k, Axis::Y, i, n)
    }
}

impl fmt::Display for QueryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f^{}_{{{},{}}} @ n={}", self.k, self.axis, self.i, self.n)
    }
}

/// Cardinality and dimensions of the set behind an oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub ell: usize,
    pub x_dim: usize,
    pub y_dim: usize,
}

impl Shape {
    pub fn of(t: &TrainingSet) -> Self {
        Self {
            ell: t.len(),
            x_dim: t.x_dim(),
            y_dim: t.y_dim(),
        }
    }

    pub fn admits(&self, key: &QueryKey) -> bool {
        let dim = match key.axis {
            Axis::X => self.x_dim,
            Axis::Y => self.y_dim,
        };
        (1..=self.ell).contains(&key.k) && (1..=dim).contains(&key.i)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("query {0} out of range for the served set")]
    OutOfRange(QueryKey),
    #[error("query {0} was never recorded")]
    Unlogged(QueryKey),
    #[error("log is inconsistent at {0}: two different answers")]
    Inconsistent(QueryKey),
    #[error("query budget of {0} exhausted")]
    Budget(u64),
    #[error("malformed transcript line {line}: {reason}")]
    Transcript { line: usize, reason: String },
}

/// One recorded exchange. Serialises to the flat transcript line
/// `{"seq","k","axis","i","n","ans":{"k","n"}}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub k: usize,
    pub axis: Axis,
    pub i: usize,
    pub n: u32,
    pub ans: Dyadic,
}

impl LogEntry {
    pub fn key(&self) -> QueryKey {
        QueryKey::new(self.k, self.axis, self.i, self.n)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryLog {
    entries: Vec<LogEntry>,
}

impl QueryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: QueryKey, ans: Dyadic) {
        let seq = self.entries.len() as u64;
        self.entries.push(LogEntry {
            seq,
            k: key.k,
            axis: key.axis,
            i: key.i,
            n: key.n,
            ans,
        });
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_precision(&self) -> Option<u32> {
        self.entries.iter().map(|e| e.n).max()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, OracleError> {
        let mut entries = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let bad = |reason: String| OracleError::Transcript {
                line: idx + 1,
                reason,
            };
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let e: LogEntry = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            entries.push(e);
        }
        Ok(Self { entries })
    }

    pub fn from_jsonl(s: &str) -> Result<Self, OracleError> {
        Self::read_jsonl(s.as_bytes())
    }
}

/// An answer function over a fixed (possibly hidden) training set.
pub trait Oracle {
    fn shape(&self) -> Shape;

    /// Answer an in-range key. Callers go through [`Channel`], which checks
    /// the range first.
    fn answer(&mut self, key: &QueryKey) -> Result<Dyadic, OracleError>;
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn shape(&self) -> Shape {
        (**self).shape()
    }
    fn answer(&mut self, key: &QueryKey) -> Result<Dyadic, OracleError> {
        (**self).answer(key)
    }
}

impl<O: Oracle + ?Sized> Oracle for &mut O {
    fn shape(&self) -> Shape {
        (**self).shape()
    }
    fn answer(&mut self, key: &QueryKey) -> Result<Dyadic, OracleError> {
        (**self).answer(key)
    }
}

/// The true coordinate addressed by `key`.
pub fn true_coordinate(t: &TrainingSet, key: &QueryKey) -> Option<Rational> {
    let p = t.at_rank(key.k)?;
    let v = match key.axis {
        Axis::X => &p.x,
        Axis::Y => &p.y,
    };
    key.i.checked_sub(1).and_then(|i| v.0.get(i)).cloned()
}

/// Nearest-point rounding of the true coordinate.
#[derive(Clone, Debug)]
pub struct ExactOracle {
    set: TrainingSet,
}

impl ExactOracle {
    pub fn new(set: TrainingSet) -> Self {
        Self { set }
    }

    pub fn set(&self) -> &TrainingSet {
        &self.set
    }
}

impl Oracle for ExactOracle {
    fn shape(&self) -> Shape {
        Shape::of(&self.set)
    }

    fn answer(&mut self, key: &QueryKey) -> Result<Dyadic, OracleError> {
        let c = true_coordinate(&self.set, key).ok_or(OracleError::OutOfRange(*key))?;
        Ok(round_to_dyadic(&c, key.n))
    }
}

const JITTER_STEPS: i64 = 1 << 16;

/// True coordinate plus a perturbation of size at most `2^-(n+1)`, then
/// rounded to `2^-n Z`. The perturbation is a pure function of
/// `(seed, key)`, so a repeated query gets the same answer.
#[derive(Clone, Debug)]
pub struct JitterOracle {
    set: TrainingSet,
    seed: u64,
}

impl JitterOracle {
    pub fn new(set: TrainingSet, seed: u64) -> Self {
        Self { set, seed }
    }

    fn perturbation(&self, key: &QueryKey) -> Rational {
        let axis = match key.axis {
            Axis::X => 0,
            Axis::Y => 1,
        };
        let mut s = SeedStream::keyed(
            self.seed,
            &[key.k as u64, axis, key.i as u64, u64::from(key.n)],
        );
        let step = s.int_in(-JITTER_STEPS, JITTER_STEPS);
        rat(step, JITTER_STEPS) * pow2_neg(key.n + 1)
    }
}

impl Oracle for JitterOracle {
    fn shape(&self) -> Shape {
        Shape::of(&self.set)
    }

    fn answer(&mut self, key: &QueryKey) -> Result<Dyadic, OracleError> {
        let c = true_coordinate(&self.set, key).ok_or(OracleError::OutOfRange(*key))?;
        Ok(round_to_dyadic(&(c + self.perturbation(key)), key.n))
    }
}

/// Answers only what a recorded log contains.
#[derive(Clone, Debug)]
pub struct ReplayOracle {
    shape: Shape,
    answers: HashMap<QueryKey, Dyadic>,
}

impl Oracle for ReplayOracle {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn answer(&mut self, key: &QueryKey) -> Result<Dyadic, OracleError> {
        self.answers
            .get(key)
            .cloned()
            .ok_or(OracleError::Unlogged(*key))
    }
}

/// Build a read-only oracle answering exactly from `log`.
pub fn replay(log: &QueryLog, shape: Shape) -> Result<ReplayOracle, OracleError> {
    let mut answers = HashMap::new();
    for e in log.entries() {
        let key = e.key();
        if let Some(prev) = answers.insert(key, e.ans.clone()) {
            if prev != e.ans {
                return Err(OracleError::Inconsistent(key));
            }
        }
    }
    Ok(ReplayOracle { shape, answers })
}

/// Whether every logged answer lies on `2^-n Z` and within `2^-n` of the
/// coordinate of `true_set` it names.
pub fn verify_contract(log: &QueryLog, true_set: &TrainingSet) -> bool {
    log.entries().iter().all(|e| {
        let key = e.key();
        if e.ans.exponent != e.n {
            return false;
        }
        match true_coordinate(true_set, &key) {
            Some(c) => (e.ans.to_rational() - c).abs() <= pow2_neg(e.n),
            None => false,
        }
    })
}

/// The single door through which trainers read data: range-checks keys,
/// enforces a query budget and records the transcript.
pub struct Channel<'a> {
    oracle: Box<dyn Oracle + 'a>,
    shape: Shape,
    log: QueryLog,
    budget: Option<u64>,
}

impl<'a> Channel<'a> {
    pub fn new(oracle: impl Oracle + 'a) -> Self {
        let shape = oracle.shape();
        Self {
            oracle: Box::new(oracle),
            shape,
            log: QueryLog::new(),
            budget: None,
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn query(&mut self, key: QueryKey) -> Result<Dyadic, OracleError> {
        if !self.shape.admits(&key) {
            return Err(OracleError::OutOfRange(key));
        }
        if let Some(b) = self.budget {
            if self.log.len() as u64 >= b {
                return Err(OracleError::Budget(b));
            }
        }
        let ans = self.oracle.answer(&key)?;
        self.log.push(key, ans.clone());
        Ok(ans)
    }

    pub fn query_rational(&mut self, key: QueryKey) -> Result<Rational, OracleError> {
        self.query(key).map(|d| d.to_rational())
    }

    pub fn query_count(&self) -> u64 {
        self.log.len() as u64
    }

    pub fn max_precision(&self) -> u32 {
        self.log.max_precision().unwrap_or(0)
    }

    pub fn log(&self) -> &QueryLog {
        &self.log
    }

    pub fn into_log(self) -> QueryLog {
        self.log
    }
}

/// Smallest `c` with `c^2 >= dim`, i.e. `ceil(log2 sqrt(dim))` extra bits
/// turn a coordinatewise `2^-n` bound into a vector bound in `l2`.
pub fn vector_precision_bits(dim: usize) -> u32 {
    let mut c = 0u32;
    while (1usize << (2 * c)) < dim.max(1) {
        c += 1;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_arith::{int, QVector};
    use crate::problems::TrainingPair;
    use num_bigint::BigInt;
    use proptest::prelude::*;

    fn set() -> TrainingSet {
        TrainingSet::new(vec![
            TrainingPair::new(QVector(vec![rat(3, 4), rat(1, 3)]), QVector(vec![rat(1, 3)])),
            TrainingPair::new(QVector(vec![int(0), int(0)]), QVector(vec![int(0)])),
        ])
        .unwrap()
    }

    #[test]
    fn exact_answers() {
        let mut o = ExactOracle::new(set());
        // rank 2 is ((3/4,1/3),1/3)
        let a = o.answer(&QueryKey::x(2, 1, 2)).unwrap();
        assert_eq!(a.to_rational(), rat(3, 4));
        assert_eq!(a.exponent, 2);
        // 3/4 is not on 2^-1 Z; the tie goes down
        assert_eq!(o.answer(&QueryKey::x(2, 1, 1)).unwrap().to_rational(), rat(1, 2));
        assert_eq!(o.answer(&QueryKey::y(2, 1, 2)).unwrap().to_rational(), rat(1, 4));
    }

    #[test]
    fn jitter_is_consistent() {
        let mut o = JitterOracle::new(set(), 77);
        let key = QueryKey::y(2, 1, 9);
        assert_eq!(o.answer(&key).unwrap(), o.answer(&key).unwrap());
    }

    #[test]
    fn channel_range_and_budget() {
        let mut ch = Channel::new(ExactOracle::new(set())).with_budget(2);
        assert!(matches!(
            ch.query(QueryKey::x(3, 1, 0)),
            Err(OracleError::OutOfRange(_))
        ));
        assert!(matches!(
            ch.query(QueryKey::y(1, 2, 0)),
            Err(OracleError::OutOfRange(_))
        ));
        ch.query(QueryKey::x(1, 1, 3)).unwrap();
        ch.query(QueryKey::x(1, 2, 3)).unwrap();
        assert_eq!(ch.query(QueryKey::x(1, 1, 3)), Err(OracleError::Budget(2)));
        assert_eq!(ch.query_count(), 2);
    }

    #[test]
    fn contract_detects_corruption() {
        let t = set();
        let mut ch = Channel::new(ExactOracle::new(t.clone()));
        for n in 0..6 {
            ch.query(QueryKey::x(2, 2, n)).unwrap();
        }
        let log = ch.into_log();
        assert!(verify_contract(&log, &t));
        let mut bad = log.clone();
        let e = &mut bad.entries[3];
        e.ans.mantissa += 2; // shift by 2^-(n-1)
        assert!(!verify_contract(&bad, &t));
    }

    #[test]
    fn replay_round_trip() {
        let t = set();
        let mut ch = Channel::new(JitterOracle::new(t.clone(), 5));
        let keys: Vec<QueryKey> = (0..4).map(|n| QueryKey::y(2, 1, n)).collect();
        let first: Vec<Dyadic> = keys.iter().map(|k| ch.query(*k).unwrap()).collect();
        let log = ch.into_log();
        let text = log.to_jsonl();
        let back = QueryLog::from_jsonl(&text).unwrap();
        assert_eq!(back, log);
        let mut r = replay(&back, Shape::of(&t)).unwrap();
        let again: Vec<Dyadic> = keys.iter().map(|k| r.answer(k).unwrap()).collect();
        assert_eq!(first, again);
        assert_eq!(
            r.answer(&QueryKey::x(1, 1, 0)),
            Err(OracleError::Unlogged(QueryKey::x(1, 1, 0)))
        );
    }

    #[test]
    fn transcript_line_shape() {
        let mut log = QueryLog::new();
        log.push(QueryKey::y(3, 1, 4), Dyadic::new(BigInt::from(-5), 4));
        assert_eq!(
            log.to_jsonl(),
            "{\"seq\":0,\"k\":3,\"axis\":\"y\",\"i\":1,\"n\":4,\"ans\":{\"k\":\"-5\",\"n\":4}}\n"
        );
    }

    #[test]
    fn replay_errors() {
        let mut r = replay(&QueryLog::new(), Shape::of(&set())).unwrap();
        assert!(r.answer(&QueryKey::x(1, 1, 1)).is_err());
        let mut log = QueryLog::new();
        log.push(QueryKey::x(1, 1, 2), Dyadic::new(BigInt::from(1), 2));
        log.push(QueryKey::x(1, 1, 2), Dyadic::new(BigInt::from(2), 2));
        assert_eq!(
            replay(&log, Shape::of(&set())).unwrap_err(),
            OracleError::Inconsistent(QueryKey::x(1, 1, 2))
        );
    }

    #[test]
    fn vector_bits() {
        assert_eq!(vector_precision_bits(1), 0);
        assert_eq!(vector_precision_bits(2), 1);
        assert_eq!(vector_precision_bits(4), 1);
        assert_eq!(vector_precision_bits(5), 2);
    }

    proptest! {
        #[test]
        fn answers_converge(num in -1000i64..1000, den in 1i64..1000, seed in any::<u64>(), n in 0u32..40) {
            let t = TrainingSet::new(vec![TrainingPair::new(
                QVector(vec![rat(num, den)]), QVector(vec![rat(den - num, 2 * den)]))]).unwrap();
            let mut o = JitterOracle::new(t, seed);
            let a = o.answer(&QueryKey::x(1, 1, n)).unwrap().to_rational();
            let b = o.answer(&QueryKey::x(1, 1, n + 1)).unwrap().to_rational();
            prop_assert!((a - b).abs() <= pow2_neg(n) + pow2_neg(n + 1));
        }
    }
}
