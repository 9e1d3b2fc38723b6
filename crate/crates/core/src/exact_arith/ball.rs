//! Smallest enclosing ball of a finite rational point set.

use num_traits::Zero;

use super::linalg::{rref, solve_exact};
use super::matrix::{QMatrix, QVector};
use super::scalar::{int, Rational};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ball {
    pub center: QVector,
    pub radius_sq: Rational,
}

impl Ball {
    pub fn contains(&self, p: &QVector) -> bool {
        p.dist_sq(&self.center) <= self.radius_sq
    }
}

/// Ball whose boundary passes through every point of `boundary`, centred in
/// their affine hull. `None` when no such ball exists.
pub fn circumball(boundary: &[QVector]) -> Option<Ball> {
    let (p0, rest) = boundary.split_first()?;
    if rest.is_empty() {
        return Some(Ball {
            center: p0.clone(),
            radius_sq: Rational::zero(),
        });
    }
    let diffs: Vec<QVector> = rest.iter().map(|p| p.sub(p0)).collect();
    // Keep an affinely independent subset; the others must then lie on the sphere.
    let stacked = QMatrix::from_rows(diffs.iter().map(|d| d.0.clone()).collect()).ok()?;
    let (_, pivots) = rref(&stacked.transpose());
    let basis: Vec<&QVector> = pivots.iter().map(|&i| &diffs[i]).collect();
    let k = basis.len();
    let mut gram = QMatrix::zeros(k, k);
    let mut rhs = QMatrix::zeros(k, 1);
    for i in 0..k {
        for j in 0..k {
            gram.set(i, j, int(2) * basis[i].dot(basis[j]));
        }
        rhs.set(i, 0, basis[i].norm_sq());
    }
    let lambda = solve_exact(&gram, &rhs).ok()?;
    let mut offset = QVector::zeros(p0.len());
    for (i, b) in basis.iter().enumerate() {
        offset = offset.add(&b.scale(lambda.get(i, 0)));
    }
    let center = p0.add(&offset);
    let radius_sq = offset.norm_sq();
    if boundary.iter().all(|p| p.dist_sq(&center) == radius_sq) {
        Some(Ball { center, radius_sq })
    } else {
        None
    }
}

fn welzl(points: &[QVector], boundary: &mut Vec<QVector>, dim: usize) -> Option<Ball> {
    if points.is_empty() || boundary.len() == dim + 1 {
        return circumball(boundary);
    }
    let (p, rest) = points.split_last().expect("non-empty");
    let ball = welzl(rest, boundary, dim);
    if let Some(b) = &ball {
        if b.contains(p) {
            return ball;
        }
    }
    boundary.push(p.clone());
    let out = welzl(rest, boundary, dim);
    boundary.pop();
    out
}

/// Smallest enclosing ball with exact rational centre and squared radius.
///
/// Panics on an empty input.
pub fn chebyshev_ball(points: &[QVector]) -> Ball {
    assert!(!points.is_empty(), "chebyshev_ball needs at least one point");
    let mut unique: Vec<QVector> = points.to_vec();
    unique.sort();
    unique.dedup();
    let dim = unique[0].len();
    welzl(&unique, &mut Vec::new(), dim).expect("exact Welzl recursion always yields a ball")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_arith::scalar::rat;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let p = QVector(vec![rat(1, 3), rat(-2, 7)]);
        let b = chebyshev_ball(std::slice::from_ref(&p));
        assert_eq!(b.center, p);
        assert!(b.radius_sq.is_zero());

        let v = QVector(vec![rat(2, 5), rat(-3, 10)]);
        let b = chebyshev_ball(&[QVector::zeros(2), v]);
        assert_eq!(b.center, QVector(vec![rat(1, 5), rat(-3, 20)]));
        assert_eq!(b.radius_sq, rat(1, 16));

        let line: Vec<QVector> = [0, 1, 2].iter().map(|&x| QVector::from_ints(&[x])).collect();
        let b = chebyshev_ball(&line);
        assert_eq!(b.center, QVector::from_ints(&[1]));
        assert_eq!(b.radius_sq, int(1));
    }

    #[test]
    fn acute_triangle_uses_circumcircle() {
        let pts = vec![
            QVector::from_ints(&[0, 0]),
            QVector::from_ints(&[4, 0]),
            QVector::from_ints(&[2, 3]),
        ];
        let b = chebyshev_ball(&pts);
        assert!(pts.iter().all(|p| p.dist_sq(&b.center) == b.radius_sq));
    }

    /// Every subset of size <= dim+1 is a candidate determining set.
    fn brute_force_radius_sq(points: &[QVector]) -> Rational {
        let n = points.len();
        let dim = points[0].len();
        let mut best: Option<Rational> = None;
        for mask in 1u32..(1 << n) {
            if mask.count_ones() as usize > dim + 1 {
                continue;
            }
            let subset: Vec<QVector> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| points[i].clone())
                .collect();
            if let Some(b) = circumball(&subset) {
                if points.iter().all(|p| b.contains(p))
                    && best.as_ref().is_none_or(|r| b.radius_sq < *r)
                {
                    best = Some(b.radius_sq);
                }
            }
        }
        best.expect("some candidate ball encloses everything")
    }

    fn small_point() -> impl Strategy<Value = QVector> {
        prop::collection::vec((-6i64..=6, 1i64..=4), 2)
            .prop_map(|c| QVector(c.into_iter().map(|(n, d)| rat(n, d)).collect()))
    }

    proptest! {
        #[test]
        fn welzl_matches_brute_force(pts in prop::collection::vec(small_point(), 1..=5)) {
            let b = chebyshev_ball(&pts);
            prop_assert!(pts.iter().all(|p| b.contains(p)));
            prop_assert_eq!(b.radius_sq, brute_force_radius_sq(&pts));
        }
    }
}
