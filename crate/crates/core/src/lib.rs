//! Exact-arithmetic laboratory for accuracy phase transitions when training
//! networks to solve finite linear inverse problems.
//!
//! Training sets are reachable only through a dyadic oracle ([`oracle`]).
//! [`problems`] builds the paired families of training sets that are
//! indistinguishable to any finite number of queries yet force optimal
//! reconstructions apart. [`trainers`] holds the certified positive
//! algorithms, [`optimality`] the exact verdicts, and [`adversary`] the
//! breakdown game and perturbation constructions.

pub mod adversary;
pub mod exact_arith;
pub mod networks;
pub mod optimality;
pub mod oracle;
pub mod problems;
pub mod stream;
pub mod trainers;
