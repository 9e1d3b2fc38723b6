//! Constructed domains of training sets and their inverse problems.
//!
//! A [`ProblemFamily`] fixes a linear map `A`, a kernel vector `v`, a unit
//! row-space direction `e`, a damping factor `theta` and a base set `T_b`.
//! From these it generates the two interleaved sequences
//!
//! ```text
//! iota1(n) = T_b + {(0,0), (v + theta 4^-n e, A(v + theta 4^-n e))} [+ basis pairs]
//! iota2    = T_b + {(0,0), (v, 0)}                                  [+ basis pairs]
//! ```
//!
//! which agree coordinatewise to within `4^-n` yet force optimal
//! reconstructions `kappa` apart at `y = 0`.

use std::cmp::Ordering;
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::exact_arith::{
    exact_sqrt, int, pow4_neg, psd_check, rank, rat, rowspace_and_kernel, serde_rational,
    sqrt_bounds, ArithError, QMatrix, QVector, Rational,
};
use crate::stream::SeedStream;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProblemError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invariant `{invariant}` violated: {detail}")]
    Validation {
        invariant: &'static str,
        detail: String,
    },
    #[error("index n = {n} outside family range 1..={n_max}")]
    OutOfRange { n: u32, n_max: u32 },
    #[error("wrong family kind: {0}")]
    WrongKind(String),
    #[error("duplicate training pair {0}")]
    Duplicate(String),
    #[error(transparent)]
    Arith(#[from] ArithError),
}

fn violated(invariant: &'static str, detail: impl Into<String>) -> ProblemError {
    ProblemError::Validation {
        invariant,
        detail: detail.into(),
    }
}

/// One `(x, y)` sample. Ordered lexicographically: `x` first, then `y`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrainingPair {
    pub x: QVector,
    pub y: QVector,
}

impl TrainingPair {
    pub fn new(x: QVector, y: QVector) -> Self {
        Self { x, y }
    }

    pub fn in_unit_ball(&self) -> bool {
        self.x.norm_sq() <= Rational::one() && self.y.norm_sq() <= Rational::one()
    }
}

impl fmt::Display for TrainingPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// A finite training set kept in strictly increasing lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<TrainingPair>", into = "Vec<TrainingPair>")]
pub struct TrainingSet {
    pairs: Vec<TrainingPair>,
}

impl TrainingSet {
    pub fn new(mut pairs: Vec<TrainingPair>) -> Result<Self, ProblemError> {
        if let Some(first) = pairs.first() {
            let (n, m) = (first.x.len(), first.y.len());
            if pairs.iter().any(|p| p.x.len() != n || p.y.len() != m) {
                return Err(ArithError::Dimension("pairs of mixed dimension".into()).into());
            }
        }
        pairs.sort();
        if let Some(w) = pairs.windows(2).find(|w| w[0] == w[1]) {
            return Err(ProblemError::Duplicate(w[0].to_string()));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[TrainingPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn x_dim(&self) -> usize {
        self.pairs.first().map_or(0, |p| p.x.len())
    }

    pub fn y_dim(&self) -> usize {
        self.pairs.first().map_or(0, |p| p.y.len())
    }

    /// 1-based lexicographic rank of `pair`.
    pub fn rank_of(&self, pair: &TrainingPair) -> Option<usize> {
        self.pairs.binary_search(pair).ok().map(|i| i + 1)
    }

    /// The element of 1-based rank `k`.
    pub fn at_rank(&self, k: usize) -> Option<&TrainingPair> {
        k.checked_sub(1).and_then(|i| self.pairs.get(i))
    }

    pub fn contains(&self, pair: &TrainingPair) -> bool {
        self.rank_of(pair).is_some()
    }

    pub fn with(&self, pair: TrainingPair) -> Result<Self, ProblemError> {
        let mut pairs = self.pairs.clone();
        pairs.push(pair);
        Self::new(pairs)
    }

    /// Membership in the bounded domain: every `|x|^2, |y|^2 <= 1`.
    pub fn in_unit_ball(&self) -> bool {
        self.pairs.iter().all(TrainingPair::in_unit_ball)
    }

    pub fn xs(&self) -> Vec<QVector> {
        self.pairs.iter().map(|p| p.x.clone()).collect()
    }

    pub fn ys(&self) -> Vec<QVector> {
        self.pairs.iter().map(|p| p.y.clone()).collect()
    }
}

impl TryFrom<Vec<TrainingPair>> for TrainingSet {
    type Error = ProblemError;
    fn try_from(v: Vec<TrainingPair>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<TrainingSet> for Vec<TrainingPair> {
    fn from(t: TrainingSet) -> Self {
        t.pairs
    }
}

/// `pi_1(T)`: the x-coordinates of a training set, in set order.
pub fn initial_domain(t: &TrainingSet) -> Vec<QVector> {
    t.xs()
}

/// `pi_2(T)`: the distinct y-coordinates of a training set.
pub fn measurement_domain(t: &TrainingSet) -> Vec<QVector> {
    let mut ys = t.ys();
    ys.sort();
    ys.dedup();
    ys
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    /// Two sequences only; `epsilon1` plays the role of `kappa`.
    Thm4,
    /// Adds the scaled standard-basis pairs `(eps1 e_i, A eps1 e_i)`; `kappa = 2 eps1`.
    Thm5,
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FamilyKind::Thm4 => "thm4",
            FamilyKind::Thm5 => "thm5",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Branch {
    One,
    Two,
}

impl From<Branch> for u8 {
    fn from(b: Branch) -> u8 {
        match b {
            Branch::One => 1,
            Branch::Two => 2,
        }
    }
}

impl TryFrom<u8> for Branch {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Branch::One),
            2 => Ok(Branch::Two),
            other => Err(format!("branch must be 1 or 2, got {other}")),
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

/// The on-disk family configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyConfig {
    #[serde(rename = "A")]
    pub a: QMatrix,
    #[serde(with = "serde_rational")]
    pub epsilon1: Rational,
    pub ell: usize,
    pub kind: FamilyKind,
    pub seed: u64,
    #[serde(default = "default_n_max")]
    pub n_max: u32,
}

fn default_n_max() -> u32 {
    12
}

const ENCLOSURE_BITS: u32 = 20;
const SAMPLE_ATTEMPTS: usize = 20_000;

/// A validated family of constructed training sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemFamily {
    #[serde(rename = "A")]
    pub a: QMatrix,
    #[serde(with = "serde_rational")]
    pub epsilon1: Rational,
    /// Separation constant: `epsilon1` for thm4, `2 epsilon1` for thm5.
    #[serde(with = "serde_rational")]
    pub kappa: Rational,
    pub v: QVector,
    pub e: QVector,
    #[serde(with = "serde_rational")]
    pub theta: Rational,
    /// `|v|^2 / 4`, the realised squared separation.
    #[serde(with = "serde_rational")]
    pub kappa_eff_sq: Rational,
    pub t_base: Vec<TrainingPair>,
    /// The extra element turning `T_b` into the `ell - 1` base `T_b'`.
    pub t_base_extra: TrainingPair,
    pub basis_pairs: Vec<TrainingPair>,
    pub kind: FamilyKind,
    pub ell: usize,
    pub seed: u64,
    pub n_max: u32,
}

/// Scale `w` by a rational `c > 0` so that `|c w|^2` lies in
/// `[target_sq (1 - 2^-20), target_sq]`, exactly `target_sq` when possible.
fn scale_to_norm(w: &QVector, target_sq: &Rational) -> QVector {
    let wn = w.norm_sq();
    if let Some(c) = exact_sqrt(&(target_sq / &wn)) {
        return w.scale(&c);
    }
    let (_, hi) = sqrt_bounds(&wn, 40);
    let (t_lo, _) = sqrt_bounds(target_sq, 40);
    w.scale(&(t_lo / hi))
}

fn enclosure_ok(norm_sq: &Rational, target_sq: &Rational) -> bool {
    let lo = target_sq * (Rational::one() - crate::exact_arith::pow2_neg(ENCLOSURE_BITS));
    norm_sq <= target_sq && *norm_sq >= lo
}

/// Prefer a direction of rational length among the basis vectors and their
/// pairwise sums and differences; fall back to the first basis vector.
fn pick_direction(basis: &[QVector]) -> QVector {
    let mut candidates: Vec<QVector> = basis.to_vec();
    for i in 0..basis.len() {
        for j in (i + 1)..basis.len() {
            candidates.push(basis[i].add(&basis[j]));
            candidates.push(basis[i].sub(&basis[j]));
        }
    }
    candidates
        .iter()
        .find(|c| !c.is_zero() && exact_sqrt(&c.norm_sq()).is_some())
        .cloned()
        .map(|c| crate::exact_arith::primitive_direction(&c))
        .unwrap_or_else(|| basis[0].clone())
}

/// Lexicographic interval `[v, v + e/4]`.
fn in_band(x: &QVector, v: &QVector, e: &QVector) -> bool {
    let top = v.add(&e.scale(&rat(1, 4)));
    x.cmp(v) != Ordering::Less && x.cmp(&top) != Ordering::Greater
}

impl ProblemFamily {
    pub fn build(config: &FamilyConfig) -> Result<Self, ProblemError> {
        let a = &config.a;
        let (m, n_dim) = (a.rows(), a.cols());
        let eps1 = &config.epsilon1;
        if !eps1.is_positive() {
            return Err(ProblemError::Config("epsilon1 must be positive".into()));
        }
        if config.n_max < 1 {
            return Err(ProblemError::Config("n_max must be at least 1".into()));
        }
        match config.kind {
            FamilyKind::Thm4 => {
                if *eps1 > rat(3, 8) {
                    return Err(ProblemError::Config("kappa must satisfy kappa <= 3/8".into()));
                }
                if config.ell < 2 {
                    return Err(ProblemError::Config("ell must be at least 2".into()));
                }
            }
            FamilyKind::Thm5 => {
                if *eps1 > rat(15, 64) {
                    return Err(ProblemError::Config(
                        "epsilon1 must satisfy epsilon1 <= 15/64 so that |v + theta 4^-n e| <= 1 \
                         (|v| = 4 epsilon1 must stay inside the unit ball)"
                            .into(),
                    ));
                }
                if config.ell < n_dim + 2 {
                    return Err(ProblemError::Config(format!(
                        "ell must be at least N + 2 = {}",
                        n_dim + 2
                    )));
                }
            }
        }
        let spaces = rowspace_and_kernel(a)?;
        if spaces.kernel.is_empty() {
            return Err(violated("non-trivial kernel", "A is injective"));
        }
        if config.kind == FamilyKind::Thm5 {
            for i in 0..n_dim {
                let ei = QVector::unit(n_dim, i);
                if a.mul_vec(&ei)?.is_zero() {
                    return Err(violated(
                        "no standard basis vector in ker(A)",
                        format!(
                            "e_{} lies in ker(A), so A(eps1 e_{}) = 0 collides with the (0,0) pair",
                            i + 1,
                            i + 1
                        ),
                    ));
                }
            }
            if rank(a) < m {
                return Err(violated("full row rank", "A A^T is singular"));
            }
        }

        let kappa = match config.kind {
            FamilyKind::Thm4 => eps1.clone(),
            FamilyKind::Thm5 => eps1 * int(2),
        };
        let rho_sq = &kappa * &kappa * int(4);
        let v = scale_to_norm(&pick_direction(&spaces.kernel), &rho_sq);
        let e = scale_to_norm(&pick_direction(&spaces.row_space), &Rational::one());
        let frob = a.frobenius_sq();
        let (_, f_hi) = sqrt_bounds(&frob, 16);
        let theta = if f_hi > Rational::one() {
            Rational::one() / f_hi
        } else {
            Rational::one()
        };
        let kappa_eff_sq = v.norm_sq() / int(4);

        let basis_pairs = match config.kind {
            FamilyKind::Thm4 => Vec::new(),
            FamilyKind::Thm5 => (0..n_dim)
                .map(|i| {
                    let x = QVector::unit(n_dim, i).scale(eps1);
                    let y = a.mul_vec(&x)?;
                    Ok(TrainingPair::new(x, y))
                })
                .collect::<Result<Vec<_>, ArithError>>()?,
        };

        let mut family = ProblemFamily {
            a: a.clone(),
            epsilon1: eps1.clone(),
            kappa,
            v,
            e,
            theta,
            kappa_eff_sq,
            t_base: Vec::new(),
            t_base_extra: TrainingPair::new(QVector::zeros(n_dim), QVector::zeros(m)),
            basis_pairs,
            kind: config.kind,
            ell: config.ell,
            seed: config.seed,
            n_max: config.n_max,
        };
        family.validate_skeleton()?;

        let base_len = match config.kind {
            FamilyKind::Thm4 => config.ell - 2,
            FamilyKind::Thm5 => config.ell - 2 - n_dim,
        };
        let mut sampled = family.sample_base(base_len + 1, &spaces.projector)?;
        family.t_base_extra = sampled.pop().expect("sampled ell - 1 elements");
        family.t_base = sampled;
        family.validate()?;
        Ok(family)
    }

    pub fn x_dim(&self) -> usize {
        self.a.cols()
    }

    pub fn y_dim(&self) -> usize {
        self.a.rows()
    }

    /// Radius of the ball test used to recognise basis pairs from noisy x's.
    pub fn identification_radius(&self) -> Rational {
        std::cmp::min(rat(1, 4), &self.epsilon1 / int(2))
    }

    fn check_n(&self, n: u32) -> Result<(), ProblemError> {
        if n < 1 || n > self.n_max {
            return Err(ProblemError::OutOfRange {
                n,
                n_max: self.n_max,
            });
        }
        Ok(())
    }

    /// `theta 4^-n e`, the displacement of the moving element.
    pub fn displacement(&self, n: u32) -> QVector {
        self.e.scale(&(&self.theta * pow4_neg(n)))
    }

    /// `(v + theta 4^-n e, A(v + theta 4^-n e))` for any `n >= 0`.
    pub fn moving_pair(&self, n: u32) -> TrainingPair {
        let x = self.v.add(&self.displacement(n));
        let y = self.a.mul_vec(&x).expect("dimensions fixed at construction");
        TrainingPair::new(x, y)
    }

    pub fn kernel_pair(&self) -> TrainingPair {
        TrainingPair::new(self.v.clone(), QVector::zeros(self.y_dim()))
    }

    pub fn origin_pair(&self) -> TrainingPair {
        TrainingPair::new(QVector::zeros(self.x_dim()), QVector::zeros(self.y_dim()))
    }

    fn assemble(&self, base: &[TrainingPair], special: TrainingPair) -> Result<TrainingSet, ProblemError> {
        let mut pairs = base.to_vec();
        pairs.push(self.origin_pair());
        pairs.push(special);
        pairs.extend(self.basis_pairs.iter().cloned());
        TrainingSet::new(pairs)
    }

    /// `iota_n^1` (moving element) or `iota_n^2` (kernel element, constant in `n`).
    pub fn iota(&self, branch: Branch, n: u32) -> Result<TrainingSet, ProblemError> {
        self.check_n(n)?;
        self.iota_unchecked(branch, n)
    }

    /// Same as [`iota`](Self::iota) without the range check; `n = 0` is allowed.
    pub fn iota_unchecked(&self, branch: Branch, n: u32) -> Result<TrainingSet, ProblemError> {
        match branch {
            Branch::One => self.assemble(&self.t_base, self.moving_pair(n)),
            Branch::Two => self.assemble(&self.t_base, self.kernel_pair()),
        }
    }

    /// The constant sequence `alpha_n = T_b' + {(0,0)}` of cardinality `ell`.
    pub fn alpha(&self, n: u32) -> Result<TrainingSet, ProblemError> {
        if self.kind != FamilyKind::Thm4 {
            return Err(ProblemError::WrongKind("alpha is defined for thm4 families".into()));
        }
        self.check_n(n)?;
        let mut pairs = self.t_base.clone();
        pairs.push(self.t_base_extra.clone());
        pairs.push(self.origin_pair());
        TrainingSet::new(pairs)
    }

    /// The `ell + 1` family whose base set is `T_b'`.
    pub fn extended(&self) -> ProblemFamily {
        let mut f = self.clone();
        f.t_base.push(self.t_base_extra.clone());
        f.ell += 1;
        f
    }

    /// Every member of the domain: `iota_n^1` for `n = 1..=n_max` and `iota^2`.
    pub fn members(&self) -> Result<Vec<(Branch, u32, TrainingSet)>, ProblemError> {
        let mut out = Vec::with_capacity(self.n_max as usize + 1);
        for n in 1..=self.n_max {
            out.push((Branch::One, n, self.iota(Branch::One, n)?));
        }
        out.push((Branch::Two, 1, self.iota(Branch::Two, 1)?));
        Ok(out)
    }

    /// The initial domain `M_1` of a member. For thm5 families the basis
    /// pairs are training data only and are excluded from `M_1`.
    pub fn constrained_domain(&self, t: &TrainingSet) -> Vec<QVector> {
        let basis_xs: Vec<&QVector> = self.basis_pairs.iter().map(|p| &p.x).collect();
        initial_domain(t)
            .into_iter()
            .filter(|x| !basis_xs.contains(&x))
            .collect()
    }

    /// Union over the enumerated family of `A(M_1)`.
    pub fn measurement_union(&self) -> Result<Vec<QVector>, ProblemError> {
        let mut ys = Vec::new();
        for (_, _, t) in self.members()? {
            for x in self.constrained_domain(&t) {
                ys.push(self.a.mul_vec(&x)?);
            }
        }
        ys.sort();
        ys.dedup();
        Ok(ys)
    }

    /// Lexicographic rank `k_v` of the moving element.
    pub fn moving_rank(&self) -> Result<usize, ProblemError> {
        let t = self.iota(Branch::Two, 1)?;
        Ok(t.rank_of(&self.kernel_pair()).expect("kernel pair is a member"))
    }

    /// Certified rational bounds `beta_min <= sigma_min(A)` and
    /// `sigma_max(A) <= beta_max`, checked by semidefiniteness of
    /// `A A^T - beta_min^2 I` and `beta_max^2 I - A A^T`.
    pub fn spectral_bounds(&self) -> Result<(Rational, Rational), ProblemError> {
        let gram = self.a.mul(&self.a.transpose())?;
        let frob = self.a.frobenius_sq();
        let lower_ok = |b2: &Rational| psd_check(&gram.shift_diagonal(b2).unwrap()).unwrap();
        let upper_ok = |b2: &Rational| {
            psd_check(&gram.scale(&int(-1)).shift_diagonal(&-b2).unwrap()).unwrap()
        };
        // bisection on squared bounds
        let (mut lo, mut hi) = (Rational::zero(), frob.clone());
        if lower_ok(&hi) {
            lo = hi.clone();
        } else {
            for _ in 0..24 {
                let mid = (&lo + &hi) / int(2);
                if lower_ok(&mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        let beta_min_sq = lo;
        let (mut lo, mut hi) = (Rational::zero(), frob);
        if upper_ok(&lo) {
            hi = lo.clone();
        } else {
            for _ in 0..24 {
                let mid = (&lo + &hi) / int(2);
                if upper_ok(&mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
        }
        let beta_max_sq = hi;
        if !beta_min_sq.is_positive() {
            return Err(violated("full row rank", "sigma_min(A) not bounded away from 0"));
        }
        let (bmin, _) = sqrt_bounds(&beta_min_sq, 24);
        let (_, bmax) = sqrt_bounds(&beta_max_sq, 24);
        Ok((bmin, bmax))
    }

    fn sample_base(
        &self,
        count: usize,
        projector: &QMatrix,
    ) -> Result<Vec<TrainingPair>, ProblemError> {
        let mut stream = SeedStream::new(self.seed);
        let mut chosen: Vec<TrainingPair> = Vec::with_capacity(count);
        let quarter = rat(1, 4);
        let mut attempts = 0;
        while chosen.len() < count {
            attempts += 1;
            if attempts > SAMPLE_ATTEMPTS {
                return Err(violated(
                    "base set sampling",
                    format!("could not place {count} admissible base elements"),
                ));
            }
            let raw = QVector(
                (0..self.x_dim())
                    .map(|_| rat(stream.int_in(-16, 16), 16))
                    .collect(),
            );
            let mut x = projector.mul_vec(&raw)?;
            if x.is_zero() {
                continue;
            }
            let half = rat(1, 2);
            while x.norm_sq() > quarter || self.a.mul_vec(&x)?.norm_sq() > quarter {
                x = x.scale(&half);
            }
            let y = self.a.mul_vec(&x)?;
            let candidate = TrainingPair::new(x, y);
            if self.base_candidate_ok(&candidate, &chosen)? {
                chosen.push(candidate);
            }
        }
        Ok(chosen)
    }

    fn base_candidate_ok(
        &self,
        c: &TrainingPair,
        chosen: &[TrainingPair],
    ) -> Result<bool, ProblemError> {
        if chosen.iter().any(|p| p.x == c.x || p.y == c.y) {
            return Ok(false);
        }
        if in_band(&c.x, &self.v, &self.e) {
            return Ok(false);
        }
        if c.y.is_zero() {
            return Ok(false);
        }
        for b in &self.basis_pairs {
            if b.y == c.y || c.x.dist_sq(&b.x) <= self.identification_radius().pow(2) {
                return Ok(false);
            }
        }
        for n in 0..=self.n_max {
            if self.moving_pair(n).y == c.y {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Checks that do not depend on the sampled base set.
    fn validate_skeleton(&self) -> Result<(), ProblemError> {
        let a = &self.a;
        if a.is_zero() {
            return Err(violated("A non-zero", "A is the zero map"));
        }
        if !a.mul_vec(&self.v)?.is_zero() {
            return Err(violated("Av = 0", format!("A v != 0 for v = {}", self.v)));
        }
        let rho_sq = &self.kappa * &self.kappa * int(4);
        if !enclosure_ok(&self.v.norm_sq(), &rho_sq) {
            return Err(violated("|v| = 2 kappa", format!("|v|^2 = {}", self.v.norm_sq())));
        }
        if !enclosure_ok(&self.e.norm_sq(), &Rational::one()) {
            return Err(violated("|e| = 1", format!("|e|^2 = {}", self.e.norm_sq())));
        }
        let spaces = rowspace_and_kernel(a)?;
        if spaces.projector.mul_vec(&self.e)? != self.e {
            return Err(violated("e in ker(A)^perp", format!("e = {}", self.e)));
        }
        if self.theta > Rational::one()
            || &self.theta * &self.theta * a.frobenius_sq() > Rational::one()
        {
            return Err(violated("theta |A| <= 1", format!("theta = {}", self.theta)));
        }
        if self.kind == FamilyKind::Thm5 {
            let r = self.identification_radius();
            let r_sq = &r * &r;
            for (i, b) in self.basis_pairs.iter().enumerate() {
                if in_band(&b.x, &self.v, &self.e) {
                    return Err(violated(
                        "basis pairs outside the band [v, v + e/4]",
                        format!("eps1 e_{} lies in the band", i + 1),
                    ));
                }
                let mut others: Vec<QVector> = vec![QVector::zeros(self.x_dim()), self.v.clone()];
                others.extend((0..=self.n_max).map(|n| self.moving_pair(n).x));
                others.extend(
                    self.basis_pairs
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, p)| p.x.clone()),
                );
                if others.iter().any(|o| o.dist_sq(&b.x) <= r_sq) {
                    return Err(violated(
                        "basis pair identification margin",
                        format!("another x lies within {} of eps1 e_{}", r, i + 1),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Full invariant check of a constructed (or deserialised) family.
    pub fn validate(&self) -> Result<(), ProblemError> {
        self.validate_skeleton()?;
        let spaces = rowspace_and_kernel(&self.a)?;
        let mut base = self.t_base.clone();
        base.push(self.t_base_extra.clone());
        for p in &base {
            if p.x.is_zero() {
                return Err(violated("non-zero base x", p.to_string()));
            }
            if spaces.projector.mul_vec(&p.x)? != p.x || self.a.mul_vec(&p.x)? != p.y {
                return Err(violated("T_b in ker(A)^perp x A(ker(A)^perp)", p.to_string()));
            }
            if in_band(&p.x, &self.v, &self.e) {
                return Err(violated("T_b outside the band [v, v + e/4]", p.to_string()));
            }
        }
        let expected_base = match self.kind {
            FamilyKind::Thm4 => self.ell - 2,
            FamilyKind::Thm5 => self.ell - 2 - self.x_dim(),
        };
        if self.t_base.len() != expected_base {
            return Err(violated(
                "cardinality",
                format!("|T_b| = {} but expected {}", self.t_base.len(), expected_base),
            ));
        }
        let k_v = self.moving_rank()?;
        for n in 1..=self.n_max {
            let t = self.iota(Branch::One, n)?;
            if t.len() != self.ell {
                return Err(violated("cardinality", format!("|iota_{n}^1| = {}", t.len())));
            }
            if !t.in_unit_ball() {
                return Err(violated("unit ball", format!("iota_{n}^1 leaves the unit ball")));
            }
            if t.rank_of(&self.moving_pair(n)) != Some(k_v) {
                return Err(violated("slot stability", format!("moving element moves at n = {n}")));
            }
            if measurement_domain(&t).len() != t.len() {
                return Err(violated("distinct y", format!("repeated y in iota_{n}^1")));
            }
        }
        let t2 = self.iota(Branch::Two, 1)?;
        if t2.len() != self.ell || !t2.in_unit_ball() {
            return Err(violated("cardinality / unit ball", "iota^2"));
        }
        if self.kind == FamilyKind::Thm4 {
            let alpha = self.alpha(1)?;
            if alpha.len() != self.ell || !alpha.in_unit_ball() {
                return Err(violated("cardinality / unit ball", "alpha_n"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(xs: &[Rational]) -> QMatrix {
        QMatrix::from_rows(vec![xs.to_vec()]).unwrap()
    }

    fn config(a: QMatrix, eps1: Rational, ell: usize, kind: FamilyKind) -> FamilyConfig {
        FamilyConfig {
            a,
            epsilon1: eps1,
            ell,
            kind,
            seed: 11,
            n_max: 8,
        }
    }

    fn thm5_example() -> ProblemFamily {
        let a = row(&[rat(3, 5), rat(4, 5)]);
        ProblemFamily::build(&config(a, rat(1, 8), 4, FamilyKind::Thm5)).unwrap()
    }

    fn thm4_example() -> ProblemFamily {
        let a = row(&[int(1), int(0)]);
        ProblemFamily::build(&config(a, rat(3, 8), 2, FamilyKind::Thm4)).unwrap()
    }

    #[test]
    fn thm5_three_four_five() {
        let f = thm5_example();
        assert_eq!(f.v, QVector(vec![rat(2, 5), rat(-3, 10)]));
        assert_eq!(f.v.norm_sq(), rat(1, 4));
        assert_eq!(f.e, QVector(vec![rat(3, 5), rat(4, 5)]));
        assert_eq!(f.theta, int(1));
        let ys: Vec<QVector> = f.basis_pairs.iter().map(|p| p.y.clone()).collect();
        assert_eq!(ys, vec![QVector(vec![rat(3, 40)]), QVector(vec![rat(1, 10)])]);
        assert_eq!(f.basis_pairs[0].x, QVector(vec![rat(1, 8), int(0)]));
        assert!(f.t_base.is_empty());
    }

    #[test]
    fn thm5_rejects_basis_vector_in_kernel() {
        let a = row(&[int(1), int(0)]);
        let err = ProblemFamily::build(&config(a, rat(1, 8), 4, FamilyKind::Thm5)).unwrap_err();
        match err {
            ProblemError::Validation { invariant, .. } => {
                assert_eq!(invariant, "no standard basis vector in ker(A)")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn thm5_rejects_large_eps1() {
        let a = row(&[rat(3, 5), rat(4, 5)]);
        let err = ProblemFamily::build(&config(a, rat(3, 8), 4, FamilyKind::Thm5)).unwrap_err();
        assert!(matches!(err, ProblemError::Config(ref s) if s.contains("unit ball")));
    }

    #[test]
    fn thm4_coordinate_projection() {
        let f = thm4_example();
        assert_eq!(f.v, QVector(vec![int(0), rat(3, 4)]));
        assert_eq!(f.kappa_eff_sq, rat(9, 64));
        for n in 1..=3u32 {
            let q = pow4_neg(n);
            let t1 = f.iota(Branch::One, n).unwrap();
            let expected = TrainingSet::new(vec![
                TrainingPair::new(QVector::zeros(2), QVector::zeros(1)),
                TrainingPair::new(QVector(vec![q.clone(), rat(3, 4)]), QVector(vec![q])),
            ])
            .unwrap();
            assert_eq!(t1, expected);
        }
        let t2 = f.iota(Branch::Two, 5).unwrap();
        assert_eq!(
            t2.xs(),
            vec![QVector::zeros(2), QVector(vec![int(0), rat(3, 4)])]
        );
        assert!(t1_contains(&f, 1, &[rat(1, 4), rat(3, 4)], &[rat(1, 4)]));
    }

    fn t1_contains(f: &ProblemFamily, n: u32, x: &[Rational], y: &[Rational]) -> bool {
        f.iota(Branch::One, n)
            .unwrap()
            .contains(&TrainingPair::new(QVector(x.to_vec()), QVector(y.to_vec())))
    }

    #[test]
    fn thm5_moving_element_at_n2() {
        let f = thm5_example();
        let x = [rat(2, 5) + rat(3, 80), rat(-3, 10) + rat(4, 80)];
        assert!(t1_contains(&f, 2, &x, &[rat(1, 16)]));
    }

    #[test]
    fn iota2_is_constant_and_range_checked() {
        let f = thm4_example();
        assert_eq!(f.iota(Branch::Two, 1).unwrap(), f.iota(Branch::Two, 7).unwrap());
        assert!(matches!(f.iota(Branch::One, 0), Err(ProblemError::OutOfRange { .. })));
        assert!(matches!(f.iota(Branch::One, 9), Err(ProblemError::OutOfRange { .. })));
    }

    fn seeded_thm4(ell: usize, seed: u64) -> ProblemFamily {
        let a = QMatrix::from_rows(vec![
            vec![int(1), int(0), int(0)],
            vec![int(0), rat(3, 5), rat(4, 5)],
        ])
        .unwrap();
        let mut c = config(a, rat(3, 8), ell, FamilyKind::Thm4);
        c.seed = seed;
        ProblemFamily::build(&c).unwrap()
    }

    #[test]
    fn alpha_sequence() {
        let f = seeded_thm4(5, 3);
        let a1 = f.alpha(1).unwrap();
        assert_eq!(a1, f.alpha(7).unwrap());
        assert_eq!(a1.len(), f.ell);
        let grown = a1.with(f.kernel_pair()).unwrap();
        assert_eq!(grown, f.extended().iota(Branch::Two, 1).unwrap());
        assert!(thm5_example().alpha(1).is_err());
    }

    #[test]
    fn projections() {
        let f = seeded_thm4(4, 5);
        let t2 = f.iota(Branch::Two, 1).unwrap();
        let xs = initial_domain(&t2);
        assert!(xs.contains(&QVector::zeros(3)) && xs.contains(&f.v));
        let ys = measurement_domain(&t2);
        assert_eq!(ys.len(), f.t_base.len() + 1);
        assert!(ys.contains(&QVector::zeros(2)));

        let empty_base = thm4_example();
        let t = empty_base.iota(Branch::One, 1).unwrap();
        assert_eq!(
            initial_domain(&t),
            vec![QVector::zeros(2), QVector(vec![rat(1, 4), rat(3, 4)])]
        );
    }

    #[test]
    fn closeness_and_slot_stability() {
        let f = seeded_thm4(6, 9);
        let k_v = f.moving_rank().unwrap();
        let t2 = f.iota(Branch::Two, 1).unwrap();
        for n in 1..=f.n_max {
            let t1 = f.iota(Branch::One, n).unwrap();
            assert_eq!(t1.rank_of(&f.moving_pair(n)), Some(k_v));
            let bound = pow4_neg(n);
            for (p, q) in t1.pairs().iter().zip(t2.pairs()) {
                for (a, b) in p.x.iter().chain(p.y.iter()).zip(q.x.iter().chain(q.y.iter())) {
                    assert!((a - b).abs() <= bound);
                }
            }
        }
    }

    #[test]
    fn thm5_fibers() {
        let a = QMatrix::from_rows(vec![vec![int(1), int(2), int(3)]]).unwrap();
        let f = ProblemFamily::build(&config(a, rat(1, 8), 7, FamilyKind::Thm5)).unwrap();
        for n in 1..=f.n_max {
            let t = f.iota(Branch::One, n).unwrap();
            let ys: Vec<QVector> = t.xs().iter().map(|x| f.a.mul_vec(x).unwrap()).collect();
            let mut dedup = ys.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), ys.len());
        }
        let t2 = f.iota(Branch::Two, 1).unwrap();
        let zero_fiber: Vec<QVector> = t2
            .xs()
            .into_iter()
            .filter(|x| f.a.mul_vec(x).unwrap().is_zero())
            .collect();
        assert_eq!(zero_fiber, vec![QVector::zeros(3), f.v.clone()]);
    }

    #[test]
    fn config_and_manifest_round_trip() {
        let json = r#"{"A": [[{"num":"3","den":"5"},{"num":"4","den":"5"}]],
                       "epsilon1": {"num":"1","den":"8"}, "ell": 5, "kind": "thm5",
                       "seed": 4, "n_max": 6}"#;
        let c: FamilyConfig = serde_json::from_str(json).unwrap();
        let f = ProblemFamily::build(&c).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let back: ProblemFamily = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        back.validate().unwrap();
    }

    #[test]
    fn spectral_bounds_are_certified() {
        let f = thm5_example();
        let (lo, hi) = f.spectral_bounds().unwrap();
        assert!(lo <= int(1) && hi >= int(1));
        assert!(lo > rat(99, 100) && hi < rat(101, 100));
    }
}
