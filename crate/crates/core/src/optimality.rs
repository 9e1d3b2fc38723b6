//! Optimality constants and exact accuracy verdicts on finite domains.
//!
//! For a finite initial domain `M1` the optimal worst-case error is the
//! largest Chebyshev radius over the fibers `{x in M1 : Ax = y}`. A network
//! value `z` at `y` is admissible when every fiber point lies within `c_opt`
//! of it; the verdicts below measure how far a network is from admissible.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::exact_arith::{
    chebyshev_ball, int, serde_rational, sqrt_bounds, ArithError, Ball, QMatrix, QVector,
    Rational,
};
use crate::networks::Net;
use crate::problems::{ProblemFamily, TrainingSet};

const REPORT_BITS: u32 = 64;

/// Fibers of `A` over a finite domain, keyed by measurement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiberMap {
    fibers: BTreeMap<QVector, Vec<QVector>>,
}

impl FiberMap {
    pub fn new(a: &QMatrix, m1: &[QVector]) -> Result<Self, ArithError> {
        let mut fibers: BTreeMap<QVector, Vec<QVector>> = BTreeMap::new();
        for x in m1 {
            let y = a.mul_vec(x)?;
            let f = fibers.entry(y).or_default();
            if !f.contains(x) {
                f.push(x.clone());
            }
        }
        for f in fibers.values_mut() {
            f.sort();
        }
        Ok(Self { fibers })
    }

    pub fn get(&self, y: &QVector) -> Option<&[QVector]> {
        self.fibers.get(y).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&QVector, &[QVector])> {
        self.fibers.iter().map(|(y, f)| (y, f.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.fibers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fibers.is_empty()
    }

    pub fn measurements(&self) -> Vec<QVector> {
        self.fibers.keys().cloned().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiberBall {
    pub y: QVector,
    pub points: Vec<QVector>,
    pub ball: Ball,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OptimalityCertificate {
    pub c_opt_sq: Rational,
    pub fibers: Vec<FiberBall>,
}

impl OptimalityCertificate {
    /// The forced value at `y`: the Chebyshev center of a fiber whose radius
    /// attains `c_opt`.
    pub fn forced(&self, y: &QVector) -> Option<&QVector> {
        self.fibers
            .iter()
            .find(|f| &f.y == y && f.ball.radius_sq == self.c_opt_sq)
            .map(|f| &f.ball.center)
    }

    pub fn forced_values(&self) -> Vec<(QVector, QVector)> {
        self.fibers
            .iter()
            .filter(|f| f.ball.radius_sq == self.c_opt_sq)
            .map(|f| (f.y.clone(), f.ball.center.clone()))
            .collect()
    }

    pub fn measurements(&self) -> Vec<QVector> {
        self.fibers.iter().map(|f| f.y.clone()).collect()
    }
}

pub fn compute_certificate(a: &QMatrix, m1: &[QVector]) -> Result<OptimalityCertificate, ArithError> {
    if m1.is_empty() {
        return Err(ArithError::Dimension("empty initial domain".into()));
    }
    let fm = FiberMap::new(a, m1)?;
    let fibers: Vec<FiberBall> = fm
        .iter()
        .map(|(y, pts)| FiberBall {
            y: y.clone(),
            points: pts.to_vec(),
            ball: chebyshev_ball(pts),
        })
        .collect();
    let c_opt_sq = fibers
        .iter()
        .map(|f| f.ball.radius_sq.clone())
        .max()
        .unwrap_or_else(Rational::zero);
    Ok(OptimalityCertificate { c_opt_sq, fibers })
}

/// A squared distance that may be irrational: `(sqrt(dist_sq) - sqrt(radius_sq))_+^2`
/// for the excess of a point over a ball.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Gap {
    Exact(Rational),
    BallExcess { dist_sq: Rational, radius_sq: Rational },
}

impl Gap {
    fn ball_excess(dist_sq: Rational, radius_sq: Rational) -> Self {
        if dist_sq <= radius_sq {
            Gap::Exact(Rational::zero())
        } else if radius_sq.is_zero() {
            Gap::Exact(dist_sq)
        } else {
            Gap::BallExcess { dist_sq, radius_sq }
        }
    }

    pub fn exact(&self) -> Option<&Rational> {
        match self {
            Gap::Exact(q) => Some(q),
            Gap::BallExcess { .. } => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Gap::Exact(q) if q.is_zero())
    }

    /// `gap <= b` (squared), decided exactly.
    pub fn le(&self, b: &Rational) -> bool {
        match self {
            Gap::Exact(q) => q <= b,
            Gap::BallExcess { dist_sq, radius_sq } => {
                if b.is_negative() {
                    return false;
                }
                // sqrt(D) <= sqrt(B) + sqrt(C)  <=>  D - B - C <= 2 sqrt(BC)
                let t = dist_sq - b - radius_sq;
                !t.is_positive() || &t * &t <= b * radius_sq * int(4)
            }
        }
    }

    /// Rational enclosure `lo <= gap <= hi`.
    pub fn bounds(&self, bits: u32) -> (Rational, Rational) {
        match self {
            Gap::Exact(q) => (q.clone(), q.clone()),
            Gap::BallExcess { dist_sq, radius_sq } => {
                let (dl, dh) = sqrt_bounds(dist_sq, bits);
                let (cl, ch) = sqrt_bounds(radius_sq, bits);
                let lo = (&dl - &ch).max(Rational::zero());
                let hi = &dh - &cl;
                (&lo * &lo, &hi * &hi)
            }
        }
    }

    /// The value when rational, otherwise an upper enclosure.
    pub fn reported(&self) -> Rational {
        self.bounds(REPORT_BITS).1
    }
}

/// Gap at one fiber for network value `z`, with `c_opt^2 = c_sq`.
/// Exact at forced fibers and singletons; a lower bound on fibers with
/// several points and slack radius.
pub fn fiber_gap(z: &QVector, fiber: &FiberBall, c_sq: &Rational) -> (Gap, bool) {
    if fiber.ball.radius_sq == *c_sq {
        return (Gap::Exact(z.dist_sq(&fiber.ball.center)), true);
    }
    if fiber.points.len() == 1 {
        return (Gap::ball_excess(z.dist_sq(&fiber.points[0]), c_sq.clone()), true);
    }
    let worst = fiber
        .points
        .iter()
        .map(|x| z.dist_sq(x))
        .max()
        .expect("fibers are non-empty");
    let lower = Gap::ball_excess(worst, c_sq.clone());
    let exact = lower.is_zero();
    (lower, exact)
}

/// Per-fiber gaps of `net` against `cert`.
pub fn fiber_gaps(
    net: &Net,
    cert: &OptimalityCertificate,
) -> Result<Vec<(QVector, Gap, bool)>, ArithError> {
    cert.fibers
        .iter()
        .map(|f| {
            let z = net.eval(&f.y)?;
            let (g, exact) = fiber_gap(&z, f, &cert.c_opt_sq);
            Ok((f.y.clone(), g, exact))
        })
        .collect()
}

/// Largest squared distance from the network's values on `A(M1)` to the
/// admissible sets; irrational maxima are reported by a tight upper
/// enclosure.
pub fn violation_distance_sq(
    net: &Net,
    cert: &OptimalityCertificate,
) -> Result<Rational, ArithError> {
    Ok(fiber_gaps(net, cert)?
        .iter()
        .map(|(_, g, _)| g.reported())
        .max()
        .unwrap_or_else(Rational::zero))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub witness_y: Option<QVector>,
    #[serde(with = "serde_rational")]
    pub violation_sq: Rational,
    #[serde(with = "serde_rational")]
    pub bound_sq: Rational,
    /// False when `violation_sq` is an enclosure or lower bound rather than
    /// the exact value. The pass flag is exact either way.
    #[serde(default = "yes")]
    pub exact: bool,
}

fn yes() -> bool {
    true
}

/// Verdict of `net` against a certificate at tolerance `eps` (squared
/// comparison, exact).
pub fn verdict_against(
    net: &Net,
    cert: &OptimalityCertificate,
    eps: &Rational,
) -> Result<Verdict, ArithError> {
    let bound_sq = eps * eps;
    let gaps = fiber_gaps(net, cert)?;
    let mut worst: Option<(Rational, QVector)> = None;
    let mut first_fail: Option<(Rational, QVector)> = None;
    let mut exact = true;
    for (y, g, ex) in &gaps {
        let r = g.reported();
        exact &= *ex && g.exact().is_some();
        if !g.le(&bound_sq) && first_fail.as_ref().is_none_or(|(v, _)| r > *v) {
            first_fail = Some((r.clone(), y.clone()));
        }
        if worst.as_ref().is_none_or(|(v, _)| r > *v) {
            worst = Some((r, y.clone()));
        }
    }
    let pass = first_fail.is_none();
    let (violation_sq, witness) = match (first_fail, worst) {
        (Some((v, y)), _) => (v, Some(y)),
        (None, Some((v, _))) => (v, None),
        (None, None) => (Rational::zero(), None),
    };
    Ok(Verdict {
        pass,
        witness_y: witness,
        violation_sq,
        bound_sq,
        exact,
    })
}

/// Accuracy of `net` on the family member `t` at tolerance `eps`. The
/// constraints are those of `t`'s initial domain; other points of the
/// family's measurement union carry no optimality constraint for `t`.
pub fn is_eps_accurate(
    net: &Net,
    family: &ProblemFamily,
    t: &TrainingSet,
    eps: &Rational,
) -> Result<Verdict, ArithError> {
    if !eps.is_positive() {
        return Err(ArithError::InvalidOperator("eps must be positive".into()));
    }
    let m1 = family.constrained_domain(t);
    let cert = compute_certificate(&family.a, &m1)?;
    verdict_against(net, &cert, eps)
}

/// Probe directions for a lower bound on `|J|_op^2`: coordinate axes and
/// the rows of `J` (as input-space directions).
fn probe_lower_bound(j: &QMatrix) -> Result<Rational, ArithError> {
    let mut best = Rational::zero();
    let mut probes: Vec<QVector> = (0..j.cols()).map(|k| QVector::unit(j.cols(), k)).collect();
    probes.extend(j.row_vectors().into_iter().filter(|r| !r.is_zero()));
    for z in probes {
        let q = j.probe_lower_bound_sq(&z)?;
        if q > best {
            best = q;
        }
    }
    Ok(best)
}

/// PASS iff `|J(y)|_F^2 <= d_sq` at every `y` in `m2`. On FAIL the reported
/// `violation_sq` is a probe lower bound on `|J(y)|_op^2` when one exceeds
/// `d_sq` (exact = true), else the Frobenius bound (exact = false).
pub fn jacobian_bound_verdict(
    net: &Net,
    m2: &[QVector],
    d_sq: &Rational,
) -> Result<Verdict, ArithError> {
    let mut max_frob = Rational::zero();
    for y in m2 {
        let j = net.jacobian(y)?;
        let f = j.frobenius_sq();
        if f > *d_sq {
            let probe = probe_lower_bound(&j)?;
            let certified = probe > *d_sq;
            return Ok(Verdict {
                pass: false,
                witness_y: Some(y.clone()),
                violation_sq: if certified { probe } else { f },
                bound_sq: d_sq.clone(),
                exact: certified,
            });
        }
        if f > max_frob {
            max_frob = f;
        }
    }
    Ok(Verdict {
        pass: true,
        witness_y: None,
        violation_sq: max_frob,
        bound_sq: d_sq.clone(),
        exact: true,
    })
}

/// `max_y |J(y)|_F^2` over a finite set.
pub fn max_jacobian_frobenius_sq(net: &Net, m2: &[QVector]) -> Result<Rational, ArithError> {
    let mut best = Rational::zero();
    for y in m2 {
        let f = net.jacobian(y)?.frobenius_sq();
        if f > best {
            best = f;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_arith::{pow4_neg, rat};
    use crate::networks::{build_rbf, AffineNet};
    use crate::problems::{Branch, FamilyConfig, FamilyKind};
    use proptest::prelude::*;

    fn thm4() -> ProblemFamily {
        let a = QMatrix::from_rows(vec![vec![int(1), int(0)]]).unwrap();
        ProblemFamily::build(&FamilyConfig {
            a,
            epsilon1: rat(3, 8),
            ell: 2,
            kind: FamilyKind::Thm4,
            seed: 1,
            n_max: 6,
        })
        .unwrap()
    }

    fn thm5() -> ProblemFamily {
        let a = QMatrix::from_rows(vec![vec![rat(3, 5), rat(4, 5)]]).unwrap();
        ProblemFamily::build(&FamilyConfig {
            a,
            epsilon1: rat(1, 8),
            ell: 4,
            kind: FamilyKind::Thm5,
            seed: 1,
            n_max: 6,
        })
        .unwrap()
    }

    fn interpolant(t: &TrainingSet) -> Net {
        let pts: Vec<_> = t.pairs().iter().map(|p| (p.x.clone(), p.y.clone())).collect();
        Net::Rbf(build_rbf(&pts).unwrap())
    }

    fn zero_net(f: &ProblemFamily) -> Net {
        Net::Affine(AffineNet::constant(QVector::zeros(f.x_dim()), f.y_dim()))
    }

    #[test]
    fn certificates() {
        let f = thm4();
        let t1 = f.iota(Branch::One, 2).unwrap();
        let c1 = compute_certificate(&f.a, &t1.xs()).unwrap();
        assert!(c1.c_opt_sq.is_zero());
        for p in t1.pairs() {
            assert_eq!(c1.forced(&p.y), Some(&p.x));
        }
        let t2 = f.iota(Branch::Two, 2).unwrap();
        let c2 = compute_certificate(&f.a, &t2.xs()).unwrap();
        assert_eq!(c2.c_opt_sq, f.v.norm_sq() / int(4));
        assert_eq!(c2.forced(&QVector::zeros(1)), Some(&f.v.scale(&rat(1, 2))));
        let single = compute_certificate(&f.a, &[QVector(vec![rat(1, 2), rat(1, 3)])]).unwrap();
        assert!(single.c_opt_sq.is_zero());
    }

    #[test]
    fn violation_examples() {
        let f = thm4();
        let t1 = f.iota(Branch::One, 3).unwrap();
        let c1 = compute_certificate(&f.a, &t1.xs()).unwrap();
        assert!(violation_distance_sq(&interpolant(&t1), &c1)
            .unwrap()
            .is_zero());

        let t2 = f.iota(Branch::Two, 1).unwrap();
        let c2 = compute_certificate(&f.a, &t2.xs()).unwrap();
        assert_eq!(
            violation_distance_sq(&zero_net(&f), &c2).unwrap(),
            f.v.norm_sq() / int(4)
        );
    }

    fn pinv_exact(f: &ProblemFamily) -> Net {
        // A = [3/5, 4/5] has A^+ = A^T
        Net::Affine(AffineNet {
            m: f.a.transpose(),
            b: f.v.scale(&rat(1, 2)),
        })
    }

    #[test]
    fn pinv_net_against_both_branches() {
        let f = thm5();
        let net = pinv_exact(&f);
        let t2 = f.iota(Branch::Two, 1).unwrap();
        let v2 = is_eps_accurate(&net, &f, &t2, &rat(1, 100)).unwrap();
        assert!(v2.pass && v2.violation_sq.is_zero());

        let t1 = f.iota(Branch::One, 2).unwrap();
        let pass = is_eps_accurate(&net, &f, &t1, &(rat(1, 4) + rat(1, 100))).unwrap();
        assert!(pass.pass);
        assert_eq!(pass.violation_sq, rat(1, 16));
        let fail = is_eps_accurate(&net, &f, &t1, &(rat(1, 4) - rat(1, 100))).unwrap();
        assert!(!fail.pass);
        assert_eq!(fail.witness_y, Some(QVector::zeros(1)));
        assert_eq!(fail.violation_sq, rat(1, 16));
    }

    #[test]
    fn interpolant_passes_own_constraints() {
        let f = thm5();
        let t1 = f.iota(Branch::One, 4).unwrap();
        let v = is_eps_accurate(&interpolant(&t1), &f, &t1, &rat(1, 1000)).unwrap();
        assert!(v.pass && v.violation_sq.is_zero() && v.exact);
        assert!(is_eps_accurate(&interpolant(&t1), &f, &t1, &int(0)).is_err());
    }

    #[test]
    fn jacobian_verdicts() {
        let f = thm5();
        let net = pinv_exact(&f);
        let ys = vec![QVector::zeros(1), QVector(vec![rat(1, 3)])];
        let v = jacobian_bound_verdict(&net, &ys, &int(4)).unwrap();
        assert!(v.pass);
        assert_eq!(v.violation_sq, int(1));
        assert!(jacobian_bound_verdict(&zero_net(&f), &ys, &int(0)).unwrap().pass);

        let g = thm4();
        let n = 5;
        let t1 = g.iota(Branch::One, n).unwrap();
        let near = vec![QVector(vec![pow4_neg(n + 1)])];
        let v = jacobian_bound_verdict(&interpolant(&t1), &near, &int(1)).unwrap();
        assert!(!v.pass && v.exact && v.violation_sq > int(1));
    }

    #[test]
    fn gap_comparisons() {
        // (sqrt(9) - sqrt(1))^2 = 4
        let g = Gap::ball_excess(int(9), int(1));
        assert!(g.le(&int(4)));
        assert!(!g.le(&rat(399, 100)));
        let (lo, hi) = g.bounds(30);
        assert!(lo <= int(4) && hi >= int(4));
        // (sqrt(2) - 1)^2 = 3 - 2 sqrt(2) ~ 0.1716
        let g = Gap::ball_excess(int(2), int(1));
        assert!(!g.le(&rat(1715, 10000)) && g.le(&rat(1716, 10000)));
        assert!(Gap::ball_excess(int(1), int(2)).is_zero());
    }

    #[test]
    fn verdict_json_shape() {
        let v = Verdict {
            pass: false,
            witness_y: Some(QVector(vec![rat(1, 2)])),
            violation_sq: rat(1, 16),
            bound_sq: rat(1, 25),
            exact: true,
        };
        let s = serde_json::to_string(&v).unwrap();
        for key in ["\"pass\"", "\"witness_y\"", "\"violation_sq\"", "\"bound_sq\""] {
            assert!(s.contains(key));
        }
        assert_eq!(serde_json::from_str::<Verdict>(&s).unwrap(), v);
    }

    fn small_rat() -> impl Strategy<Value = Rational> {
        (-8i64..=8, 1i64..=4).prop_map(|(n, d)| rat(n, d))
    }

    fn points(dim: usize, max: usize) -> impl Strategy<Value = Vec<QVector>> {
        prop::collection::vec(prop::collection::vec(small_rat(), dim).prop_map(QVector), 1..=max)
    }

    /// Brute force: every subset of size <= dim + 1 of a fiber, the smallest
    /// circumscribed ball that contains the whole fiber.
    fn brute_radius(pts: &[QVector]) -> Rational {
        let n = pts.len();
        let mut best: Option<Rational> = None;
        for mask in 1u32..(1 << n) {
            let sub: Vec<QVector> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| pts[i].clone()).collect();
            if sub.len() > pts[0].len() + 1 {
                continue;
            }
            if let Some(b) = crate::exact_arith::circumball(&sub) {
                if pts.iter().all(|p| b.contains(p)) && best.as_ref().is_none_or(|r| b.radius_sq < *r) {
                    best = Some(b.radius_sq);
                }
            }
        }
        best.unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn c_opt_matches_brute_force(m1 in points(2, 6)) {
            let a = QMatrix::from_rows(vec![vec![int(1), int(-1)]]).unwrap();
            let cert = compute_certificate(&a, &m1).unwrap();
            let fm = FiberMap::new(&a, &m1).unwrap();
            let brute = fm.iter().map(|(_, f)| brute_radius(f)).max().unwrap();
            prop_assert_eq!(cert.c_opt_sq, brute);
        }

        #[test]
        fn adding_singleton_fibers_never_decreases(
            m1 in points(2, 5), extra in points(2, 3), b in prop::collection::vec(small_rat(), 2)
        ) {
            let a = QMatrix::from_rows(vec![vec![int(1), int(-1)]]).unwrap();
            let net = Net::Affine(AffineNet { m: QMatrix::from_columns(&[QVector(b)]).unwrap(), b: QVector::zeros(2) });
            let base = compute_certificate(&a, &m1).unwrap();
            let before = violation_distance_sq(&net, &base).unwrap();
            let known: Vec<QVector> = m1.iter().map(|x| a.mul_vec(x).unwrap()).collect();
            let mut grown = m1.clone();
            for x in extra {
                if !known.contains(&a.mul_vec(&x).unwrap()) {
                    grown.push(x);
                }
            }
            let cert = compute_certificate(&a, &grown).unwrap();
            prop_assert_eq!(&cert.c_opt_sq, &base.c_opt_sq);
            prop_assert!(violation_distance_sq(&net, &cert).unwrap() >= before);
        }

        #[test]
        fn singleton_violation_is_sup_distance(m1 in points(2, 5), b in prop::collection::vec(small_rat(), 2)) {
            let a = QMatrix::from_rows(vec![vec![int(1), int(3)]]).unwrap();
            let mut xs: Vec<QVector> = Vec::new();
            let mut seen: Vec<QVector> = Vec::new();
            for x in m1 {
                let y = a.mul_vec(&x).unwrap();
                if !seen.contains(&y) { seen.push(y.clone()); xs.push(x); }
            }
            let pts: Vec<_> = xs.iter().map(|x| (x.clone(), a.mul_vec(x).unwrap())).collect();
            let interp = Net::Rbf(build_rbf(&pts).unwrap());
            let net = Net::Affine(AffineNet { m: QMatrix::from_columns(&[QVector(b)]).unwrap(), b: QVector::zeros(2) });
            let cert = compute_certificate(&a, &xs).unwrap();
            prop_assert_eq!(
                violation_distance_sq(&net, &cert).unwrap(),
                crate::networks::sup_distance_sq(&net, &interp, &seen).unwrap()
            );
        }
    }
}
