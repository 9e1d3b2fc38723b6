//! Certified trainers.
//!
//! [`rbf_train`] reads the data at a working precision derived from a
//! certified lower bound `2^-k_R` on the singular values of the kernel
//! matrix and returns the interpolant of the noisy data. [`pinv_train`]
//! recovers `A` from the scaled basis pairs and returns
//! `y -> A_r^+ y + v/2`. Both go through a [`Channel`] only, and both
//! attach a ledger of the exact inequalities their precision choices rest on.

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::exact_arith::{
    int, ldlt_posdef_check, pow2_neg, rat, serde_rational, serde_rational_opt, solve_exact,
    ArithError, QMatrix, QVector, Rational,
};
use crate::networks::{build_rbf, kernel_matrix, AffineNet, Net};
use crate::oracle::{vector_precision_bits, Channel, OracleError, QueryKey, QueryLog};
use crate::problems::ProblemFamily;

/// Iterations of the `k_R` loop before the oracle is declared pathological.
pub const K_R_CAP: u32 = 200;
/// Precision escalations allowed while waiting for distinct centers or an
/// invertible Gram matrix.
pub const ESCALATION_CAP: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("{what} did not settle within {iterations} iterations")]
    Cap { what: &'static str, iterations: u32 },
    #[error("training set does not have the expected shape: {0}")]
    Shape(String),
}

/// `lhs <= rhs`, recorded with a name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub name: String,
    #[serde(with = "serde_rational")]
    pub lhs: Rational,
    #[serde(with = "serde_rational")]
    pub rhs: Rational,
}

impl LedgerEntry {
    pub fn new(name: impl Into<String>, lhs: Rational, rhs: Rational) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
        }
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecisionCertificate {
    pub trainer: String,
    pub j: u32,
    pub k_r: Option<u32>,
    pub r: u32,
    /// Measurement dimension `m`.
    pub m: usize,
    pub ell: usize,
    #[serde(with = "serde_rational_opt", default)]
    pub beta_min: Option<Rational>,
    #[serde(with = "serde_rational_opt", default)]
    pub beta_max: Option<Rational>,
    pub ledger: Vec<LedgerEntry>,
}

impl PrecisionCertificate {
    /// Every ledger inequality holds, and `r` satisfies the trainer's
    /// precision formula recomputed from the stored parameters.
    pub fn verify(&self) -> bool {
        if !self.ledger.iter().all(LedgerEntry::holds) {
            return false;
        }
        match self.trainer.as_str() {
            "rbf" => match self.k_r {
                Some(k) => pow2_neg(self.r) <= rbf_precision_bound(self.j, k, self.m, self.ell),
                None => false,
            },
            "pinv" => match (&self.beta_min, &self.beta_max) {
                (Some(lo), Some(hi)) => pow2_neg(self.r) <= pinv_precision_bound(self.j, lo, hi),
                _ => false,
            },
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingOutcome {
    pub net: Net,
    pub certificate: PrecisionCertificate,
    pub queries: u64,
    pub max_precision: u32,
    #[serde(skip)]
    pub log: QueryLog,
}

/// Smallest `r >= 0` with `2^-r <= bound`; `bound > 0`.
pub fn min_exponent(bound: &Rational) -> u32 {
    assert!(bound.is_positive(), "precision bound must be positive");
    let mut r = 0u32;
    let mut p = Rational::one();
    while p > *bound {
        p /= int(2);
        r += 1;
    }
    r
}

fn read_vectors(
    ch: &mut Channel<'_>,
    axis_y: bool,
    n: u32,
) -> Result<Vec<QVector>, OracleError> {
    let s = ch.shape();
    let dim = if axis_y { s.y_dim } else { s.x_dim };
    (1..=s.ell)
        .map(|k| {
            (1..=dim)
                .map(|i| {
                    let key = if axis_y {
                        QueryKey::y(k, i, n)
                    } else {
                        QueryKey::x(k, i, n)
                    };
                    ch.query_rational(key)
                })
                .collect::<Result<Vec<_>, _>>()
                .map(QVector)
        })
        .collect()
}

/// `l2` reads: every vector within `2^-r` of the truth.
fn read_ys(ch: &mut Channel<'_>, r: u32) -> Result<Vec<QVector>, OracleError> {
    let bits = vector_precision_bits(ch.shape().y_dim);
    read_vectors(ch, true, r + bits)
}

fn read_xs(ch: &mut Channel<'_>, r: u32) -> Result<Vec<QVector>, OracleError> {
    let bits = vector_precision_bits(ch.shape().x_dim);
    read_vectors(ch, false, r + bits)
}

/// `(1/2)(1/(2m))(1/ell) 2^-(j+1)`.
pub fn h_bound(j: u32, m: usize, ell: usize) -> Rational {
    rat(1, 4 * m as i64 * ell as i64) * pow2_neg(j + 1)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KrResult {
    pub k_r: u32,
    pub ledger: Vec<LedgerEntry>,
}

/// Certified `2^-k_R <= sigma_min(R)` for the kernel matrix of the served
/// y's: the first `j` for which `R_r - 2^-j I` is positive definite, with
/// `r` from the h-bound, gives `k_R = j + 1`.
pub fn sigma_min_lower_bound(ch: &mut Channel<'_>, cap: u32) -> Result<KrResult, TrainError> {
    let s = ch.shape();
    for j in 1..=cap {
        let bound = h_bound(j, s.y_dim, s.ell);
        let r = min_exponent(&bound);
        let ys = read_ys(ch, r)?;
        let rr = kernel_matrix(&ys);
        if ldlt_posdef_check(&rr.shift_diagonal(&pow2_neg(j))?)? {
            return Ok(KrResult {
                k_r: j + 1,
                ledger: vec![LedgerEntry::new(format!("h-bound (j = {j})"), pow2_neg(r), bound)],
            });
        }
    }
    Err(TrainError::Cap {
        what: "singular-value lower bound",
        iterations: cap,
    })
}

/// `min{(1/7)(1/4)(1/(2m))(1/ell^2) 2^-2k_R 2^-j, (1/7)(1/ell) 2^-k_R 2^-j}`.
pub fn rbf_precision_bound(j: u32, k_r: u32, m: usize, ell: usize) -> Rational {
    let (m, l) = (m as i64, ell as i64);
    let first = rat(1, 7 * 4 * 2 * m * l * l) * pow2_neg(2 * k_r) * pow2_neg(j);
    let second = rat(1, 7 * l) * pow2_neg(k_r) * pow2_neg(j);
    first.min(second)
}

/// Smallest `r` meeting [`rbf_precision_bound`].
pub fn rbf_working_precision(j: u32, k_r: u32, m: usize, ell: usize) -> u32 {
    min_exponent(&rbf_precision_bound(j, k_r, m, ell))
}

fn outcome(net: Net, certificate: PrecisionCertificate, ch: Channel<'_>) -> TrainingOutcome {
    let queries = ch.query_count();
    let max_precision = ch.max_precision();
    TrainingOutcome {
        net,
        certificate,
        queries,
        max_precision,
        log: ch.into_log(),
    }
}

/// Certified interpolation trainer. Needs pairwise-distinct y's in the
/// served set; otherwise the `k_R` loop runs into its cap.
pub fn rbf_train(mut ch: Channel<'_>, eps: &Rational) -> Result<TrainingOutcome, TrainError> {
    rbf_train_on(&mut ch, eps, K_R_CAP).map(|(net, cert)| outcome(net, cert, ch))
}

/// The same as [`rbf_train`] on a borrowed channel.
pub fn rbf_train_on(
    ch: &mut Channel<'_>,
    eps: &Rational,
    cap: u32,
) -> Result<(Net, PrecisionCertificate), TrainError> {
    if !eps.is_positive() {
        return Err(TrainError::Contract("eps must be positive".into()));
    }
    let s = ch.shape();
    let j = min_exponent(eps);
    let KrResult { k_r, mut ledger } = sigma_min_lower_bound(ch, cap)?;
    ledger.insert(0, LedgerEntry::new("target", pow2_neg(j), eps.clone()));
    let base_r = rbf_working_precision(j, k_r, s.y_dim, s.ell);
    let mut r = base_r;
    let ys = loop {
        let ys = read_ys(ch, r)?;
        let mut sorted = ys.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() == ys.len() {
            break ys;
        }
        if r - base_r >= ESCALATION_CAP {
            return Err(TrainError::Cap {
                what: "distinct centers",
                iterations: ESCALATION_CAP,
            });
        }
        r += 1;
    };
    let xs = read_xs(ch, r)?;
    let bound = rbf_precision_bound(j, k_r, s.y_dim, s.ell);
    ledger.push(LedgerEntry::new("working precision", pow2_neg(r), bound));
    let pts: Vec<(QVector, QVector)> = xs.into_iter().zip(ys).collect();
    let net = Net::Rbf(build_rbf(&pts)?);
    Ok((
        net,
        PrecisionCertificate {
            trainer: "rbf".into(),
            j,
            k_r: Some(k_r),
            r,
            m: s.y_dim,
            ell: s.ell,
            beta_min: None,
            beta_max: None,
            ledger,
        },
    ))
}

/// Radius of the basis-pair test: `min(1/4, eps1/2)`.
pub fn identification_radius(eps1: &Rational) -> Rational {
    (eps1 / int(2)).min(rat(1, 4))
}

/// For each `i`, the rank of the unique element whose x lies near
/// `eps1 e_i`.
pub fn identify_basis_pairs(
    ch: &mut Channel<'_>,
    n_dim: usize,
    eps1: &Rational,
) -> Result<Vec<usize>, TrainError> {
    let s = ch.shape();
    if s.x_dim != n_dim {
        return Err(TrainError::Shape(format!(
            "x has dimension {} but N = {}",
            s.x_dim, n_dim
        )));
    }
    let t = identification_radius(eps1);
    // coordinatewise error 2^-p gives vector error sqrt(N) 2^-p <= t/4
    let p = min_exponent(&(&t / int(4))) + vector_precision_bits(n_dim);
    let xs = read_vectors(ch, false, p)?;
    let accept = &t * &t / int(4);
    (0..n_dim)
        .map(|i| {
            let target = QVector::unit(n_dim, i).scale(eps1);
            let hits: Vec<usize> = xs
                .iter()
                .enumerate()
                .filter(|(_, x)| x.dist_sq(&target) <= accept)
                .map(|(k, _)| k + 1)
                .collect();
            match hits.as_slice() {
                [k] => Ok(*k),
                [] => Err(TrainError::Shape(format!("no element near eps1 e_{}", i + 1))),
                _ => Err(TrainError::Shape(format!(
                    "{} elements near eps1 e_{}",
                    hits.len(),
                    i + 1
                ))),
            }
        })
        .collect()
}

/// Construction data handed to the stable trainer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinvParams {
    #[serde(with = "serde_rational")]
    pub epsilon1: Rational,
    pub v: QVector,
    #[serde(with = "serde_rational")]
    pub beta_min: Rational,
    #[serde(with = "serde_rational")]
    pub beta_max: Rational,
}

impl PinvParams {
    pub fn from_family(f: &ProblemFamily) -> Result<Self, TrainError> {
        let (beta_min, beta_max) = f
            .spectral_bounds()
            .map_err(|e| TrainError::Shape(e.to_string()))?;
        Ok(Self {
            epsilon1: f.epsilon1.clone(),
            v: f.v.clone(),
            beta_min,
            beta_max,
        })
    }
}

/// `(1/8)(1 + beta_max)^-2 alpha^4 2^-j` with `alpha = min(1, beta_min)`.
pub fn pinv_precision_bound(j: u32, beta_min: &Rational, beta_max: &Rational) -> Rational {
    let alpha = beta_min.clone().min(Rational::one());
    let a2 = &alpha * &alpha;
    let b = Rational::one() + beta_max;
    rat(1, 8) * (&b * &b).recip() * &a2 * &a2 * pow2_neg(j)
}

/// `eps2 = (eps - 2 eps1) / 2`.
pub fn pinv_eps2(eps: &Rational, eps1: &Rational) -> Rational {
    (eps - eps1 * int(2)) / int(2)
}

pub fn pinv_train(
    mut ch: Channel<'_>,
    eps: &Rational,
    params: &PinvParams,
) -> Result<TrainingOutcome, TrainError> {
    let (net, cert) = pinv_train_on(&mut ch, eps, params)?;
    Ok(outcome(net, cert, ch))
}

pub fn pinv_train_on(
    ch: &mut Channel<'_>,
    eps: &Rational,
    params: &PinvParams,
) -> Result<(Net, PrecisionCertificate), TrainError> {
    let eps1 = &params.epsilon1;
    if eps <= &(eps1 * int(2)) {
        return Err(TrainError::Contract(format!(
            "eps must exceed 2 epsilon1 = {}",
            eps1 * int(2)
        )));
    }
    if !params.beta_min.is_positive() || params.beta_max < params.beta_min {
        return Err(TrainError::Contract("need 0 < beta_min <= beta_max".into()));
    }
    let s = ch.shape();
    let (m, n_dim) = (s.y_dim, s.x_dim);
    let eps2 = pinv_eps2(eps, eps1);
    let j = min_exponent(&eps2);
    let bound = pinv_precision_bound(j, &params.beta_min, &params.beta_max);
    let base_r = min_exponent(&bound);
    let ranks = identify_basis_pairs(ch, n_dim, eps1)?;

    let mut r = base_r;
    let (k_prime, pinv) = loop {
        let col_bound = eps1 / int(n_dim as i64) * pow2_neg(r);
        let k_prime = min_exponent(&col_bound);
        let bits = vector_precision_bits(m);
        let cols = ranks
            .iter()
            .map(|&k| {
                (1..=m)
                    .map(|i| ch.query_rational(QueryKey::y(k, i, k_prime + bits)))
                    .collect::<Result<Vec<_>, _>>()
                    .map(|c| QVector(c).scale(&eps1.recip()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let a_r = QMatrix::from_columns(&cols)?;
        let gram = a_r.mul(&a_r.transpose())?;
        match solve_exact(&gram, &a_r) {
            Ok(g_inv_a) => break (k_prime, g_inv_a.transpose()),
            Err(ArithError::Singular) if r - base_r < ESCALATION_CAP => r += 1,
            Err(ArithError::Singular) => {
                return Err(TrainError::Cap {
                    what: "invertible Gram matrix",
                    iterations: ESCALATION_CAP,
                })
            }
            Err(e) => return Err(e.into()),
        }
    };

    let op_bound = params.beta_min.recip() + &eps2;
    let op_bound_sq = &op_bound * &op_bound;
    let mut probe = Rational::zero();
    for k in 0..pinv.cols() {
        let q = pinv.probe_lower_bound_sq(&QVector::unit(pinv.cols(), k))?;
        if q > probe {
            probe = q;
        }
    }
    let ledger = vec![
        LedgerEntry::new("2 eps1 + eps2 <= eps", eps1 * int(2) + &eps2, eps.clone()),
        LedgerEntry::new("target", pow2_neg(j), eps2.clone()),
        LedgerEntry::new("working precision", pow2_neg(r), bound),
        LedgerEntry::new(
            "column precision",
            pow2_neg(k_prime),
            eps1 / int(n_dim as i64) * pow2_neg(r),
        ),
        LedgerEntry::new(
            "jacobian frobenius",
            pinv.frobenius_sq(),
            &op_bound_sq * int(m as i64),
        ),
        LedgerEntry::new("jacobian probe", probe, op_bound_sq),
    ];
    let net = Net::Affine(AffineNet {
        m: pinv,
        b: params.v.scale(&rat(1, 2)),
    });
    Ok((
        net,
        PrecisionCertificate {
            trainer: "pinv".into(),
            j,
            k_r: None,
            r,
            m,
            ell: s.ell,
            beta_min: Some(params.beta_min.clone()),
            beta_max: Some(params.beta_max.clone()),
            ledger,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlowupWitness {
    /// `|N(0) - N(y_n)|^2 / |y_n|^2` with `y_n = A(theta 4^-n e)`.
    #[serde(with = "serde_rational")]
    pub quotient_sq: Rational,
    /// `(2 delta 4^n)^2`.
    #[serde(with = "serde_rational")]
    pub threshold_sq: Rational,
    /// `(2 delta)^2 / |y_n|^2`, the same comparison without the step
    /// `|y_n| <= 4^-n`.
    #[serde(with = "serde_rational")]
    pub scaled_threshold_sq: Rational,
}

impl BlowupWitness {
    pub fn exceeds(&self) -> bool {
        self.quotient_sq > self.threshold_sq && self.quotient_sq > self.scaled_threshold_sq
    }
}

/// Difference quotient of `net` over the segment `[0, A(theta 4^-n e)]`.
/// By the mean value inequality `quotient_sq` is a lower bound for
/// `sup_c |DN(c)|_op^2` on the segment.
pub fn blowup_witness(
    net: &Net,
    family: &ProblemFamily,
    n: u32,
    delta: &Rational,
) -> Result<BlowupWitness, ArithError> {
    let y_n = family.a.mul_vec(&family.displacement(n))?;
    let y_sq = y_n.norm_sq();
    if y_sq.is_zero() {
        return Err(ArithError::InvalidOperator("A e = 0".into()));
    }
    let zero = QVector::zeros(family.y_dim());
    let diff = net.eval(&zero)?.dist_sq(&net.eval(&y_n)?);
    let two_delta = delta * int(2);
    let four_n = Rational::from_integer(num_bigint::BigInt::from(4u8).pow(n));
    let t = &two_delta * &four_n;
    Ok(BlowupWitness {
        quotient_sq: diff / &y_sq,
        threshold_sq: &t * &t,
        scaled_threshold_sq: &two_delta * &two_delta / y_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_arith::{pow4_neg, psd_check};
    use crate::optimality::{compute_certificate, is_eps_accurate, violation_distance_sq};
    use crate::oracle::{ExactOracle, JitterOracle};
    use crate::problems::{Branch, FamilyConfig, FamilyKind, TrainingPair, TrainingSet};

    fn one_d(points: &[(Rational, Rational)]) -> TrainingSet {
        TrainingSet::new(
            points
                .iter()
                .map(|(x, y)| TrainingPair::new(QVector(vec![x.clone()]), QVector(vec![y.clone()])))
                .collect(),
        )
        .unwrap()
    }

    fn thm4() -> ProblemFamily {
        ProblemFamily::build(&FamilyConfig {
            a: QMatrix::from_rows(vec![vec![int(1), int(0)]]).unwrap(),
            epsilon1: rat(3, 8),
            ell: 2,
            kind: FamilyKind::Thm4,
            seed: 1,
            n_max: 6,
        })
        .unwrap()
    }

    fn thm5() -> ProblemFamily {
        ProblemFamily::build(&FamilyConfig {
            a: QMatrix::from_rows(vec![vec![rat(3, 5), rat(4, 5)]]).unwrap(),
            epsilon1: rat(1, 8),
            ell: 4,
            kind: FamilyKind::Thm5,
            seed: 1,
            n_max: 6,
        })
        .unwrap()
    }

    #[test]
    fn exponents() {
        assert_eq!(min_exponent(&int(1)), 0);
        assert_eq!(min_exponent(&rat(1, 3)), 2);
        assert_eq!(min_exponent(&rat(1, 4)), 2);
        assert_eq!(min_exponent(&rat(1, 7168)), 13);
    }

    #[test]
    fn working_precision_example() {
        // independent evaluation of both branches
        let first = rat(1, 7) * rat(1, 4) * rat(1, 2) * rat(1, 4) * rat(1, 16) * rat(1, 2);
        let second = rat(1, 7) * rat(1, 2) * rat(1, 4) * rat(1, 2);
        assert_eq!(first, rat(1, 7168));
        assert_eq!(second, rat(1, 112));
        assert_eq!(rbf_precision_bound(1, 2, 1, 2), rat(1, 7168));
        assert_eq!(rbf_working_precision(1, 2, 1, 2), 13);
    }

    #[test]
    fn working_precision_monotone() {
        for j in 1..6 {
            for k in 1..6 {
                for l in 1..5 {
                    let r = rbf_working_precision(j, k, 1, l);
                    assert!(rbf_working_precision(j, k, 1, 2 * l) >= r + 2);
                    assert_eq!(rbf_working_precision(j + 1, k, 1, l), r + 1);
                }
            }
        }
    }

    #[test]
    fn k_r_single_point() {
        let t = one_d(&[(rat(1, 2), rat(1, 3))]);
        let mut ch = Channel::new(ExactOracle::new(t));
        assert_eq!(sigma_min_lower_bound(&mut ch, 10).unwrap().k_r, 2);
    }

    #[test]
    fn k_r_two_centers() {
        let t = one_d(&[(int(0), int(0)), (int(1), int(1))]);
        for seed in 0..20 {
            let mut ch = Channel::new(JitterOracle::new(t.clone(), seed));
            let k = sigma_min_lower_bound(&mut ch, 30).unwrap().k_r;
            // eigenvalues 3/2, 1/2
            assert!(pow2_neg(k) <= rat(1, 2));
        }
    }

    #[test]
    fn k_r_cap_on_duplicate_measurements() {
        let t = one_d(&[(int(0), int(0)), (rat(1, 2), int(0))]);
        let mut ch = Channel::new(ExactOracle::new(t));
        assert!(matches!(
            sigma_min_lower_bound(&mut ch, 12),
            Err(TrainError::Cap { .. })
        ));
    }

    #[test]
    fn rbf_on_thm4_iota() {
        let f = thm4();
        let t = f.iota(Branch::One, 1).unwrap();
        let out = rbf_train(Channel::new(ExactOracle::new(t.clone())), &rat(1, 8)).unwrap();
        assert!(out.certificate.verify());
        let cert = compute_certificate(&f.a, &t.xs()).unwrap();
        assert!(violation_distance_sq(&out.net, &cert).unwrap() <= rat(1, 64));
        assert!(out.queries > 0 && out.queries == out.log.len() as u64);
    }

    #[test]
    fn rbf_single_point() {
        let t = one_d(&[(rat(1, 3), rat(1, 5))]);
        let out = rbf_train(Channel::new(ExactOracle::new(t)), &int(1)).unwrap();
        let y = QVector(vec![rat(1, 5)]);
        assert!((out.net.eval(&y).unwrap()[0].clone() - rat(1, 3)).abs() <= int(1));
    }

    #[test]
    fn rbf_replay_is_bit_identical() {
        let f = thm4();
        let t = f.iota(Branch::One, 2).unwrap();
        let first = rbf_train(Channel::new(JitterOracle::new(t.clone(), 9)), &rat(1, 4)).unwrap();
        let replayed = crate::oracle::replay(&first.log, crate::oracle::Shape::of(&t)).unwrap();
        let second = rbf_train(Channel::new(replayed), &rat(1, 4)).unwrap();
        assert_eq!(first.net, second.net);
        assert_eq!(first.log, second.log);
    }

    #[test]
    fn identify_example() {
        let f = thm5();
        let t = f.iota(Branch::One, 3).unwrap();
        let mut ch = Channel::new(ExactOracle::new(t.clone()));
        let ranks = identify_basis_pairs(&mut ch, 2, &f.epsilon1).unwrap();
        let expected: Vec<usize> = f
            .basis_pairs
            .iter()
            .map(|p| t.rank_of(p).unwrap())
            .collect();
        assert_eq!(ranks, expected);
        let e1 = TrainingPair::new(QVector(vec![rat(1, 8), int(0)]), QVector(vec![rat(3, 40)]));
        assert_eq!(ranks[0], t.rank_of(&e1).unwrap());
    }

    #[test]
    fn identify_one_dimensional() {
        let t = one_d(&[(rat(1, 8), rat(1, 8)), (int(0), int(0)), (rat(-1, 2), rat(-1, 2))]);
        let mut ch = Channel::new(ExactOracle::new(t));
        assert_eq!(identify_basis_pairs(&mut ch, 1, &rat(1, 8)).unwrap(), vec![3]);
    }

    #[test]
    fn identify_rejects_ambiguous() {
        let t = one_d(&[(rat(1, 8), rat(1, 8)), (rat(9, 64), int(0))]);
        let mut ch = Channel::new(ExactOracle::new(t));
        assert!(matches!(
            identify_basis_pairs(&mut ch, 1, &rat(1, 8)),
            Err(TrainError::Shape(_))
        ));
    }

    #[test]
    fn pinv_example() {
        let f = thm5();
        let params = PinvParams::from_family(&f).unwrap();
        let eps = rat(1, 4) + rat(1, 100);
        for (branch, n) in [(Branch::One, 1), (Branch::One, 5), (Branch::Two, 1)] {
            let t = f.iota(branch, n).unwrap();
            let out = pinv_train(Channel::new(ExactOracle::new(t.clone())), &eps, &params).unwrap();
            assert!(out.certificate.verify(), "{:?}", out.certificate.ledger);
            assert!(is_eps_accurate(&out.net, &f, &t, &eps).unwrap().pass);
            let eps2 = pinv_eps2(&eps, &f.epsilon1);
            let bound = params.beta_min.recip() + &eps2;
            let jac = out.net.jacobian(&QVector::zeros(1)).unwrap();
            assert!(jac.frobenius_sq() <= &bound * &bound);
            let b = blowup_witness(&out.net, &f, n, &rat(1, 16)).unwrap();
            assert!(b.quotient_sq <= &bound * &bound);
        }
        let t = f.iota(Branch::One, 1).unwrap();
        assert!(matches!(
            pinv_train(Channel::new(ExactOracle::new(t)), &rat(1, 4), &params),
            Err(TrainError::Contract(_))
        ));
    }

    #[test]
    fn spectral_params_are_certified() {
        let f = thm5();
        let p = PinvParams::from_family(&f).unwrap();
        let gram = f.a.mul(&f.a.transpose()).unwrap();
        let lo = &p.beta_min * &p.beta_min;
        let hi = &p.beta_max * &p.beta_max;
        assert!(psd_check(&gram.shift_diagonal(&lo).unwrap()).unwrap());
        assert!(psd_check(&gram.scale(&int(-1)).shift_diagonal(&-hi).unwrap()).unwrap());
    }

    #[test]
    fn blowup_of_exact_interpolant() {
        let f = thm4();
        // theta = 1 and |Ae| = 1: quotient^2 = 16^n |v|^2 + 1
        for n in 0..=5u32 {
            let t = f.iota_unchecked(Branch::One, n).unwrap();
            let pts: Vec<_> = t.pairs().iter().map(|p| (p.x.clone(), p.y.clone())).collect();
            let net = Net::Rbf(build_rbf(&pts).unwrap());
            let w = blowup_witness(&net, &f, n, &rat(3, 16)).unwrap();
            let sixteen_n = pow4_neg(n).recip() * pow4_neg(n).recip();
            assert_eq!(w.quotient_sq, sixteen_n * f.v.norm_sq() + int(1));
            if n == 0 {
                assert_eq!(w.threshold_sq, rat(9, 64));
            }
        }
    }
}
