//! Breakdown machinery.
//!
//! The game serves `iota^2` rounded to the requested grid (error at most
//! `2^-(n+1)`), lets the algorithm finish, then picks `n_adv` so that every
//! served answer is also valid for `iota^1_{n_adv}`. Because the forced
//! values at `y = 0` are `v/2` and `0`, and `|v/2| = kappa_eff`, any output
//! misses one of them by at least `kappa_eff / 2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use num_traits::Zero;

use crate::exact_arith::{
    int, rat, round_to_dyadic, serde_rational, serde_rational_opt, ArithError, Dyadic, QMatrix,
    QVector, Rational,
};
use crate::networks::{AffineNet, Net};
use crate::optimality::{compute_certificate, verdict_against, Verdict};
use crate::oracle::{
    true_coordinate, verify_contract, Channel, ExactOracle, Oracle, OracleError, QueryKey,
    QueryLog, Shape,
};
use crate::problems::{Branch, FamilyKind, ProblemError, ProblemFamily, TrainingSet};
use crate::stream::SeedStream;
use crate::trainers::{rbf_train_on, TrainError, K_R_CAP};

/// Default query budget of a game.
pub const DEFAULT_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdversaryError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error("training set does not have the expected shape: {0}")]
    Shape(String),
    #[error("replacement distance^2 {dist_sq} exceeds 2/16^{j}")]
    Distance { dist_sq: String, j: u32 },
}

/// Anything that turns oracle access and a target accuracy into a network.
pub trait AlgorithmUnderTest: Send + Sync {
    fn name(&self) -> String;

    /// `seed` feeds randomised algorithms; deterministic ones ignore it.
    fn run(&self, ch: &mut Channel<'_>, eps: &Rational, seed: u64) -> Result<Net, TrainError>;
}

/// The certified interpolation trainer.
pub struct RbfAlgorithm;

impl AlgorithmUnderTest for RbfAlgorithm {
    fn name(&self) -> String {
        "rbf".into()
    }

    fn run(&self, ch: &mut Channel<'_>, eps: &Rational, _seed: u64) -> Result<Net, TrainError> {
        rbf_train_on(ch, eps, K_R_CAP).map(|(net, _)| net)
    }
}

/// Ignores the data and outputs a fixed constant.
pub struct ConstantAlgorithm {
    pub label: String,
    pub value: QVector,
}

impl AlgorithmUnderTest for ConstantAlgorithm {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn run(&self, ch: &mut Channel<'_>, _eps: &Rational, _seed: u64) -> Result<Net, TrainError> {
        Ok(Net::Affine(AffineNet::constant(
            self.value.clone(),
            ch.shape().y_dim,
        )))
    }
}

/// Ridge-regularised affine least squares `x ~ M y + b` fitted to data
/// read at a fixed precision.
pub struct LeastSquaresAlgorithm {
    pub precision: u32,
    pub ridge: Rational,
}

impl Default for LeastSquaresAlgorithm {
    fn default() -> Self {
        Self {
            precision: 16,
            ridge: crate::exact_arith::pow2_neg(10),
        }
    }
}

impl AlgorithmUnderTest for LeastSquaresAlgorithm {
    fn name(&self) -> String {
        "least-squares".into()
    }

    fn run(&self, ch: &mut Channel<'_>, _eps: &Rational, _seed: u64) -> Result<Net, TrainError> {
        let s = ch.shape();
        let mut z_cols = Vec::with_capacity(s.ell);
        let mut x_cols = Vec::with_capacity(s.ell);
        for k in 1..=s.ell {
            let mut z = Vec::with_capacity(s.y_dim + 1);
            for i in 1..=s.y_dim {
                z.push(ch.query_rational(QueryKey::y(k, i, self.precision))?);
            }
            z.push(Rational::from_integer(1.into()));
            z_cols.push(QVector(z));
            let x = (1..=s.x_dim)
                .map(|i| ch.query_rational(QueryKey::x(k, i, self.precision)))
                .collect::<Result<Vec<_>, _>>()?;
            x_cols.push(QVector(x));
        }
        let z = QMatrix::from_columns(&z_cols)?;
        let x = QMatrix::from_columns(&x_cols)?;
        // W = X Z^T (Z Z^T + lambda I)^-1, and Z Z^T + lambda I is symmetric
        let gram = z.mul(&z.transpose())?.shift_diagonal(&-self.ridge.clone())?;
        let wt = crate::exact_arith::solve_exact(&gram, &z.mul(&x.transpose())?)?;
        let w = wt.transpose();
        let m = QMatrix::from_rows(
            (0..w.rows())
                .map(|r| (0..s.y_dim).map(|c| w.get(r, c).clone()).collect())
                .collect(),
        )?;
        let b = w.column(s.y_dim);
        Ok(Net::Affine(AffineNet { m, b }))
    }
}

/// Outputs the constant `0` or the constant `v/2` on a seeded coin.
pub struct CoinFlipAlgorithm {
    pub v: QVector,
}

impl AlgorithmUnderTest for CoinFlipAlgorithm {
    fn name(&self) -> String {
        "coin-flip".into()
    }

    fn run(&self, ch: &mut Channel<'_>, _eps: &Rational, seed: u64) -> Result<Net, TrainError> {
        let value = if SeedStream::keyed(seed, &[0xC0FF]).coin() {
            self.v.scale(&rat(1, 2))
        } else {
            QVector::zeros(self.v.len())
        };
        Ok(Net::Affine(AffineNet::constant(value, ch.shape().y_dim)))
    }
}

/// The algorithms every game is run against.
pub fn registry(family: &ProblemFamily) -> Vec<Box<dyn AlgorithmUnderTest>> {
    let v = &family.v;
    vec![
        Box::new(RbfAlgorithm),
        Box::new(ConstantAlgorithm {
            label: "constant-zero".into(),
            value: QVector::zeros(v.len()),
        }),
        Box::new(ConstantAlgorithm {
            label: "constant-half-v".into(),
            value: v.scale(&rat(1, 2)),
        }),
        Box::new(ConstantAlgorithm {
            label: "constant-quarter-v".into(),
            value: v.scale(&rat(1, 4)),
        }),
        Box::new(LeastSquaresAlgorithm::default()),
    ]
}

/// The branch on which an output value `z` at `y = 0` errs by at least
/// `kappa_eff / 2`, and that squared error. Ties go to branch 1.
pub fn declare_branch(z: &QVector, v: &QVector, kappa_eff_sq: &Rational) -> (Branch, Rational) {
    let b = z.norm_sq();
    if b >= kappa_eff_sq / int(4) {
        return (Branch::One, b);
    }
    (Branch::Two, z.dist_sq(&v.scale(&rat(1, 2))))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameTranscript {
    pub algorithm: String,
    pub log: QueryLog,
    pub n_adv: u32,
    pub declared_branch: Branch,
    pub nonhalting: bool,
    pub reason: Option<String>,
    #[serde(with = "serde_rational_opt")]
    pub error_sq: Option<Rational>,
    #[serde(with = "serde_rational")]
    pub kappa_eff_sq: Rational,
    /// Whether the served answers are valid for `iota^2` and for
    /// `iota^1_{n_adv}`.
    pub consistent_with: (bool, bool),
    pub verdict: Option<Verdict>,
    pub net: Option<Net>,
}

impl GameTranscript {
    /// The algorithm failed: it did not halt, or it errs by at least
    /// `kappa_eff / 2` on the declared input.
    pub fn defeated(&self) -> bool {
        self.nonhalting
            || self
                .error_sq
                .as_ref()
                .is_some_and(|e| *e >= &self.kappa_eff_sq / int(4))
    }
}

/// The machine-readable game summary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameReport {
    pub declared_branch: Branch,
    pub n_adv: u32,
    #[serde(with = "serde_rational_opt")]
    pub error_sq: Option<Rational>,
    #[serde(with = "serde_rational")]
    pub kappa_eff_sq: Rational,
    pub nonhalting: bool,
    pub transcript: String,
}

impl GameTranscript {
    pub fn report(&self, transcript_path: impl Into<String>) -> GameReport {
        GameReport {
            declared_branch: self.declared_branch,
            n_adv: self.n_adv,
            error_sq: self.error_sq.clone(),
            kappa_eff_sq: self.kappa_eff_sq.clone(),
            nonhalting: self.nonhalting,
            transcript: transcript_path.into(),
        }
    }
}

/// The constrained domain of a member, or all x's for thm4.
fn domain(family: &ProblemFamily, t: &TrainingSet) -> Vec<QVector> {
    match family.kind {
        FamilyKind::Thm4 => t.xs(),
        FamilyKind::Thm5 => family.constrained_domain(t),
    }
}

pub fn run_breakdown_game(
    alg: &dyn AlgorithmUnderTest,
    family: &ProblemFamily,
    eps: &Rational,
    budget: u64,
    seed: u64,
) -> Result<GameTranscript, AdversaryError> {
    let iota2 = family.iota(Branch::Two, 1)?;
    let mut ch = Channel::new(ExactOracle::new(iota2.clone())).with_budget(budget);
    let result = alg.run(&mut ch, eps, seed);
    let log = ch.into_log();
    let n_adv = log.max_precision().unwrap_or(0) / 2 + 1;
    let iota1 = family.iota_unchecked(Branch::One, n_adv)?;
    let consistent_with = (verify_contract(&log, &iota2), verify_contract(&log, &iota1));
    let kappa_eff_sq = family.kappa_eff_sq.clone();
    let net = match result {
        Ok(net) => net,
        Err(e) => {
            return Ok(GameTranscript {
                algorithm: alg.name(),
                log,
                n_adv,
                declared_branch: Branch::Two,
                nonhalting: true,
                reason: Some(e.to_string()),
                error_sq: None,
                kappa_eff_sq,
                consistent_with,
                verdict: None,
                net: None,
            })
        }
    };
    let z = net.eval(&QVector::zeros(family.y_dim()))?;
    let (branch, error_sq) = declare_branch(&z, &family.v, &kappa_eff_sq);
    let declared = match branch {
        Branch::One => &iota1,
        Branch::Two => &iota2,
    };
    let cert = compute_certificate(&family.a, &domain(family, declared))?;
    let verdict = verdict_against(&net, &cert, eps)?;
    Ok(GameTranscript {
        algorithm: alg.name(),
        log,
        n_adv,
        declared_branch: branch,
        nonhalting: false,
        reason: None,
        error_sq: Some(error_sq),
        kappa_eff_sq,
        consistent_with,
        verdict: Some(verdict),
        net: Some(net),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFrequency {
    pub branch: Branch,
    pub n: u32,
    pub failures: u64,
    pub trials: u64,
}

impl InputFrequency {
    pub fn frequency(&self) -> Rational {
        if self.trials == 0 {
            return Rational::zero();
        }
        rat(self.failures as i64, self.trials as i64)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialReport {
    pub algorithm: String,
    pub per_input: Vec<InputFrequency>,
}

impl TrialReport {
    pub fn max_frequency(&self) -> Option<Rational> {
        self.per_input.iter().map(InputFrequency::frequency).max()
    }
}

/// Runs the seeded algorithm `trials` times against exact oracles for the
/// two adversary candidates `iota^2` and `iota^1_{n_adv}` and counts
/// failures at threshold `kappa_eff / 2` at `y = 0`.
pub fn run_randomized_trials(
    alg: &dyn AlgorithmUnderTest,
    family: &ProblemFamily,
    eps: &Rational,
    trials: u64,
) -> Result<TrialReport, AdversaryError> {
    if trials == 0 {
        return Ok(TrialReport {
            algorithm: alg.name(),
            per_input: Vec::new(),
        });
    }
    let game = run_breakdown_game(alg, family, eps, DEFAULT_BUDGET, 0)?;
    let threshold = &family.kappa_eff_sq / int(4);
    let half_v = family.v.scale(&rat(1, 2));
    let zero_y = QVector::zeros(family.y_dim());
    let candidates = [
        (Branch::Two, 1, family.iota(Branch::Two, 1)?, half_v),
        (
            Branch::One,
            game.n_adv,
            family.iota_unchecked(Branch::One, game.n_adv)?,
            QVector::zeros(family.x_dim()),
        ),
    ];
    let per_input = candidates
        .iter()
        .map(|(branch, n, set, forced)| {
            let failures = (0..trials)
                .into_par_iter()
                .map(|seed| {
                    let mut ch = Channel::new(ExactOracle::new(set.clone())).with_budget(DEFAULT_BUDGET);
                    match alg.run(&mut ch, eps, seed) {
                        Ok(net) => match net.eval(&zero_y) {
                            Ok(z) => u64::from(z.dist_sq(forced) >= threshold),
                            Err(_) => 1,
                        },
                        Err(_) => 1,
                    }
                })
                .sum();
            InputFrequency {
                branch: *branch,
                n: *n,
                failures,
                trials,
            }
        })
        .collect();
    Ok(TrialReport {
        algorithm: alg.name(),
        per_input,
    })
}

/// Replace the moving element of `t = iota^1_k` (`k >= j`) by `(v, 0)`.
/// Returns the new set and the exact squared distance moved, which is at
/// most `2/16^j`.
pub fn perturb_replace(
    t: &TrainingSet,
    family: &ProblemFamily,
    j: u32,
) -> Result<(TrainingSet, Rational), AdversaryError> {
    let k_v = family.moving_rank()?;
    let moving = t
        .at_rank(k_v)
        .ok_or_else(|| AdversaryError::Shape("set too small".into()))?;
    let limit = family.n_max.max(j) + 64;
    let k = (1..=limit)
        .find(|&k| family.moving_pair(k) == *moving)
        .ok_or_else(|| AdversaryError::Shape("no moving element at the expected rank".into()))?;
    if k < j {
        return Err(AdversaryError::Shape(format!(
            "set is iota^1_{k}, need index at least {j}"
        )));
    }
    if *t != family.iota_unchecked(Branch::One, k)? {
        return Err(AdversaryError::Shape("set is not a branch-1 member".into()));
    }
    let kernel = family.kernel_pair();
    let dist_sq = moving.x.dist_sq(&kernel.x) + moving.y.dist_sq(&kernel.y);
    let bound = rat(2, 1) * crate::exact_arith::pow4_neg(2 * j);
    if dist_sq > bound {
        return Err(AdversaryError::Distance {
            dist_sq: crate::exact_arith::fmt_rational(&dist_sq),
            j,
        });
    }
    let mut pairs: Vec<_> = t.pairs().iter().filter(|p| *p != moving).cloned().collect();
    pairs.push(kernel);
    Ok((TrainingSet::new(pairs)?, dist_sq))
}

/// `T'' = T + {(v, 0)}` for `T = alpha_n`.
pub fn perturb_add(t: &TrainingSet, family: &ProblemFamily) -> Result<TrainingSet, AdversaryError> {
    if *t != family.alpha(1)? {
        return Err(AdversaryError::Shape("set is not alpha_n".into()));
    }
    Ok(t.with(family.kernel_pair())?)
}

/// An oracle whose precision-`n` answers describe `iota^1_s` with
/// `s = max(1, min(n, n'))`, where `n'` is the first step at which
/// `halted(n')` holds (`s = max(1, n)` when it never does).
///
/// The stream is valid for `iota^2` when the program never halts and for
/// `iota^1_{n'}` when it halts at `n'`. An algorithm computing the optimal
/// map to accuracy below `kappa_eff / 2` on this stream would therefore
/// tell the two cases apart, i.e. decide halting.
///
/// ```
/// use ghalab::adversary::HaltingAdapter;
/// use ghalab::exact_arith::{int, rat, QMatrix};
/// use ghalab::oracle::{verify_contract, Channel, QueryKey};
/// use ghalab::problems::{Branch, FamilyConfig, FamilyKind, ProblemFamily};
///
/// let family = ProblemFamily::build(&FamilyConfig {
///     a: QMatrix::from_rows(vec![vec![int(1), int(0)]]).unwrap(),
///     epsilon1: rat(3, 8), ell: 2, kind: FamilyKind::Thm4, seed: 0, n_max: 8,
/// }).unwrap();
/// let mut ch = Channel::new(HaltingAdapter::new(&family, |step| step >= 3));
/// for n in 0..12 {
///     ch.query(QueryKey::x(2, 1, n)).unwrap();
/// }
/// let halted_at_3 = family.iota(Branch::One, 3).unwrap();
/// assert!(verify_contract(ch.log(), &halted_at_3));
/// ```
pub struct HaltingAdapter<'f, F: FnMut(u32) -> bool> {
    family: &'f ProblemFamily,
    halted: F,
    checked: u32,
    halt_step: Option<u32>,
}

impl<'f, F: FnMut(u32) -> bool> HaltingAdapter<'f, F> {
    pub fn new(family: &'f ProblemFamily, halted: F) -> Self {
        Self {
            family,
            halted,
            checked: 0,
            halt_step: None,
        }
    }

    fn index(&mut self, n: u32) -> u32 {
        while self.halt_step.is_none() && self.checked < n {
            self.checked += 1;
            if (self.halted)(self.checked) {
                self.halt_step = Some(self.checked);
            }
        }
        let s = match self.halt_step {
            Some(h) => h.min(n),
            None => n,
        };
        s.max(1)
    }
}

impl<F: FnMut(u32) -> bool> Oracle for HaltingAdapter<'_, F> {
    fn shape(&self) -> Shape {
        Shape {
            ell: self.family.ell,
            x_dim: self.family.x_dim(),
            y_dim: self.family.y_dim(),
        }
    }

    fn answer(&mut self, key: &QueryKey) -> Result<Dyadic, OracleError> {
        let s = self.index(key.n);
        let set = self
            .family
            .iota_unchecked(Branch::One, s)
            .map_err(|_| OracleError::OutOfRange(*key))?;
        let c = true_coordinate(&set, key).ok_or(OracleError::OutOfRange(*key))?;
        Ok(round_to_dyadic(&c, key.n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_arith::{pow2_neg, pow4_neg};
    use crate::problems::FamilyConfig;
    use crate::trainers::rbf_train;
    use proptest::prelude::*;

    fn thm4(seed: u64, ell: usize) -> ProblemFamily {
        ProblemFamily::build(&FamilyConfig {
            a: QMatrix::from_rows(vec![vec![int(1), int(0)]]).unwrap(),
            epsilon1: rat(3, 8),
            ell,
            kind: FamilyKind::Thm4,
            seed,
            n_max: 8,
        })
        .unwrap()
    }

    #[test]
    fn constant_half_v_fails_on_branch_one() {
        let f = thm4(1, 2);
        let alg = ConstantAlgorithm {
            label: "half".into(),
            value: f.v.scale(&rat(1, 2)),
        };
        let g = run_breakdown_game(&alg, &f, &rat(1, 8), DEFAULT_BUDGET, 0).unwrap();
        assert_eq!(g.declared_branch, Branch::One);
        assert_eq!(g.error_sq, Some(f.kappa_eff_sq.clone()));
        assert!(g.defeated());
    }

    #[test]
    fn constant_quarter_v_is_a_tie() {
        let f = thm4(1, 2);
        let alg = ConstantAlgorithm {
            label: "quarter".into(),
            value: f.v.scale(&rat(1, 4)),
        };
        let g = run_breakdown_game(&alg, &f, &rat(1, 8), DEFAULT_BUDGET, 0).unwrap();
        assert_eq!(g.declared_branch, Branch::One);
        assert_eq!(g.error_sq, Some(&f.kappa_eff_sq / int(4)));
        assert!(g.defeated());
    }

    #[test]
    fn rbf_cannot_halt_on_a_repeated_measurement() {
        let f = thm4(1, 3);
        let g = run_breakdown_game(&RbfAlgorithm, &f, &rat(1, 8), DEFAULT_BUDGET, 0).unwrap();
        assert!(g.nonhalting && g.defeated());
        assert_eq!(g.consistent_with, (true, true));
    }

    #[test]
    fn games_are_dual_consistent() {
        let f = thm4(4, 4);
        for alg in registry(&f) {
            let g = run_breakdown_game(alg.as_ref(), &f, &rat(1, 8), DEFAULT_BUDGET, 0).unwrap();
            assert_eq!(g.consistent_with, (true, true), "{}", g.algorithm);
            assert!(g.defeated(), "{}", g.algorithm);
        }
    }

    #[test]
    fn budget_exhaustion_is_nonhalting() {
        let f = thm4(2, 3);
        let g = run_breakdown_game(&LeastSquaresAlgorithm::default(), &f, &rat(1, 8), 3, 0).unwrap();
        assert!(g.nonhalting);
        assert_eq!(g.log.len(), 3);
    }

    #[test]
    fn replace_examples() {
        let f = thm4(1, 2);
        let t = f.iota(Branch::One, 2).unwrap();
        let (t2, d) = perturb_replace(&t, &f, 2).unwrap();
        assert_eq!(d, rat(2, 256));
        assert_eq!(t2, f.iota(Branch::Two, 2).unwrap());
        let (_, d1) = perturb_replace(&t, &f, 1).unwrap();
        assert!(d1 <= rat(2, 16));
        assert!(perturb_replace(&t, &f, 3).is_err());
    }

    #[test]
    fn add_examples() {
        let f = thm4(3, 4);
        let a = f.alpha(1).unwrap();
        let grown = perturb_add(&a, &f).unwrap();
        assert_eq!(grown.len(), f.ell + 1);
        assert_eq!(grown, f.extended().iota(Branch::Two, 1).unwrap());
        assert!(perturb_add(&grown, &f).is_err());
        assert!(a.with(a.pairs()[0].clone()).is_err());

        let out = rbf_train(Channel::new(ExactOracle::new(a)), &rat(1, 16)).unwrap();
        let cert = compute_certificate(&f.a, &grown.xs()).unwrap();
        let v = verdict_against(&out.net, &cert, &rat(1, 1000)).unwrap();
        assert!(!v.pass && v.violation_sq >= &f.kappa_eff_sq / int(4));
    }

    #[test]
    fn halting_adapter_streams() {
        let f = thm4(5, 3);
        let mut never = Channel::new(HaltingAdapter::new(&f, |_| false));
        let mut at3 = Channel::new(HaltingAdapter::new(&f, |s| s >= 3));
        for n in 0..20 {
            for k in 1..=f.ell {
                never.query(QueryKey::x(k, 2, n)).unwrap();
                never.query(QueryKey::y(k, 1, n)).unwrap();
                at3.query(QueryKey::x(k, 1, n)).unwrap();
                at3.query(QueryKey::y(k, 1, n)).unwrap();
            }
        }
        assert!(verify_contract(never.log(), &f.iota(Branch::Two, 1).unwrap()));
        assert!(verify_contract(at3.log(), &f.iota(Branch::One, 3).unwrap()));
        assert!(!verify_contract(at3.log(), &f.iota(Branch::Two, 1).unwrap()));
    }

    #[test]
    fn coin_flip_frequencies() {
        let f = thm4(1, 2);
        let rep = run_randomized_trials(&CoinFlipAlgorithm { v: f.v.clone() }, &f, &rat(1, 8), 400).unwrap();
        assert_eq!(rep.per_input.len(), 2);
        for inp in &rep.per_input {
            assert!(inp.failures > 120 && inp.failures < 280);
        }
        let det = run_randomized_trials(&ConstantAlgorithm { label: "z".into(), value: QVector::zeros(2) }, &f, &rat(1, 8), 10).unwrap();
        let freqs: Vec<Rational> = det.per_input.iter().map(InputFrequency::frequency).collect();
        assert_eq!(freqs, vec![int(1), int(0)]);
        assert!(run_randomized_trials(&RbfAlgorithm, &f, &rat(1, 8), 0).unwrap().per_input.is_empty());
    }

    proptest! {
        #[test]
        fn verdict_sound_for_any_output(
            z in prop::collection::vec((-64i64..=64, 1i64..=64), 2),
            vn in prop::collection::vec((-8i64..=8, 1i64..=8), 2),
        ) {
            let z = QVector(z.into_iter().map(|(a, b)| rat(a, b)).collect());
            let v = QVector(vn.into_iter().map(|(a, b)| rat(a, b)).collect());
            let k = v.norm_sq() / int(4);
            let (_, err) = declare_branch(&z, &v, &k);
            prop_assert!(err >= &k / int(4));
        }
    }

    #[test]
    fn n_adv_covers_finest_query() {
        for max in 0..10u32 {
            let n_adv = max / 2 + 1;
            assert!(pow4_neg(n_adv) <= pow2_neg(max + 1));
        }
    }
}
