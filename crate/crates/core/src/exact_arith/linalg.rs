//! Exact decision procedures over rational matrices.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use super::matrix::{QMatrix, QVector};
use super::scalar::Rational;
use super::ArithError;

fn require_symmetric(m: &QMatrix) -> Result<(), ArithError> {
    if !m.is_square() {
        return Err(ArithError::Dimension(format!(
            "expected square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_symmetric() {
        return Err(ArithError::Dimension("matrix is not symmetric".into()));
    }
    Ok(())
}

/// Square-root-free LDL^T factorisation. Returns the pivots `d_k` produced
/// before the first non-positive one (inclusive), together with whether the
/// factorisation ran to completion with every pivot positive.
fn ldlt_pivots(m: &QMatrix) -> (Vec<Rational>, bool) {
    let n = m.rows();
    let mut l = QMatrix::identity(n);
    let mut d: Vec<Rational> = Vec::with_capacity(n);
    for j in 0..n {
        let mut dj = m.get(j, j).clone();
        for k in 0..j {
            dj -= l.get(j, k) * l.get(j, k) * &d[k];
        }
        let positive = dj.is_positive();
        d.push(dj);
        if !positive {
            return (d, false);
        }
        for i in (j + 1)..n {
            let mut s = m.get(i, j).clone();
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k) * &d[k];
            }
            l.set(i, j, s / &d[j]);
        }
    }
    (d, true)
}

/// Exact positive-definiteness test: every LDL^T pivot is positive.
pub fn ldlt_posdef_check(m: &QMatrix) -> Result<bool, ArithError> {
    require_symmetric(m)?;
    Ok(ldlt_pivots(m).1)
}

/// Exact positive-semidefiniteness test by symmetric elimination: a zero
/// pivot is admissible only when the rest of its column vanishes.
pub fn psd_check(m: &QMatrix) -> Result<bool, ArithError> {
    require_symmetric(m)?;
    let n = m.rows();
    let mut a = m.clone();
    for j in 0..n {
        let p = a.get(j, j).clone();
        if p.is_negative() {
            return Ok(false);
        }
        if p.is_zero() {
            if ((j + 1)..n).any(|i| !a.get(i, j).is_zero()) {
                return Ok(false);
            }
            continue;
        }
        for i in (j + 1)..n {
            let f = a.get(i, j) / &p;
            if f.is_zero() {
                continue;
            }
            for k in j..n {
                let v = a.get(i, k) - &f * a.get(j, k);
                a.set(i, k, v);
            }
        }
    }
    Ok(true)
}

/// Returns `M^-1 B` exactly, or `ArithError::Singular`.
pub fn solve_exact(m: &QMatrix, b: &QMatrix) -> Result<QMatrix, ArithError> {
    if !m.is_square() {
        return Err(ArithError::Dimension("solve needs a square matrix".into()));
    }
    if m.rows() != b.rows() {
        return Err(ArithError::Dimension("right-hand side has wrong row count".into()));
    }
    let n = m.rows();
    let w = b.cols();
    let mut a = m.clone();
    let mut x = b.clone();
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| !a.get(r, col).is_zero())
            .ok_or(ArithError::Singular)?;
        if pivot != col {
            for k in 0..n {
                let t = a.get(col, k).clone();
                a.set(col, k, a.get(pivot, k).clone());
                a.set(pivot, k, t);
            }
            for k in 0..w {
                let t = x.get(col, k).clone();
                x.set(col, k, x.get(pivot, k).clone());
                x.set(pivot, k, t);
            }
        }
        let inv = Rational::one() / a.get(col, col);
        for k in 0..n {
            let v = a.get(col, k) * &inv;
            a.set(col, k, v);
        }
        for k in 0..w {
            let v = x.get(col, k) * &inv;
            x.set(col, k, v);
        }
        for r in 0..n {
            if r == col || a.get(r, col).is_zero() {
                continue;
            }
            let f = a.get(r, col).clone();
            for k in 0..n {
                let v = a.get(r, k) - &f * a.get(col, k);
                a.set(r, k, v);
            }
            for k in 0..w {
                let v = x.get(r, k) - &f * x.get(col, k);
                x.set(r, k, v);
            }
        }
    }
    Ok(x)
}

pub fn inverse(m: &QMatrix) -> Result<QMatrix, ArithError> {
    solve_exact(m, &QMatrix::identity(m.rows()))
}

/// Reduced row echelon form and its pivot columns.
pub fn rref(a: &QMatrix) -> (QMatrix, Vec<usize>) {
    let mut m = a.clone();
    let (rows, cols) = (m.rows(), m.cols());
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !m.get(i, c).is_zero()) else {
            continue;
        };
        if p != r {
            for k in 0..cols {
                let t = m.get(r, k).clone();
                m.set(r, k, m.get(p, k).clone());
                m.set(p, k, t);
            }
        }
        let inv = Rational::one() / m.get(r, c);
        for k in 0..cols {
            let v = m.get(r, k) * &inv;
            m.set(r, k, v);
        }
        for i in 0..rows {
            if i != r && !m.get(i, c).is_zero() {
                let f = m.get(i, c).clone();
                for k in 0..cols {
                    let v = m.get(i, k) - &f * m.get(r, k);
                    m.set(i, k, v);
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    (m, pivots)
}

/// Rescales to the primitive integer vector on the same ray, with the
/// leading non-zero coordinate made positive.
pub fn primitive_direction(v: &QVector) -> QVector {
    let lcm = v
        .iter()
        .fold(BigInt::one(), |acc, q| acc.lcm(q.denom()));
    let ints: Vec<BigInt> = v.iter().map(|q| (q * &lcm).to_integer()).collect();
    let g = ints.iter().fold(BigInt::zero(), |acc, k| acc.gcd(k));
    if g.is_zero() {
        return v.clone();
    }
    let sign = match ints.iter().find(|k| !k.is_zero()) {
        Some(k) if k.is_negative() => -BigInt::one(),
        _ => BigInt::one(),
    };
    QVector(
        ints.into_iter()
            .map(|k| Rational::from_integer(k / &g * &sign))
            .collect(),
    )
}

/// Kernel, row space and the orthogonal projector onto the row space.
#[derive(Clone, Debug)]
pub struct Subspaces {
    pub kernel: Vec<QVector>,
    pub row_space: Vec<QVector>,
    pub projector: QMatrix,
}

/// Exact bases of `ker(A)` and `ker(A)^perp` plus the projector `P` onto
/// `ker(A)^perp`. Basis vectors are primitive integer directions.
pub fn rowspace_and_kernel(a: &QMatrix) -> Result<Subspaces, ArithError> {
    if a.is_zero() {
        return Err(ArithError::InvalidOperator("A is the zero map".into()));
    }
    let (r, pivots) = rref(a);
    let n = a.cols();
    let row_space: Vec<QVector> = (0..pivots.len())
        .map(|i| primitive_direction(&r.row(i)))
        .collect();
    let kernel: Vec<QVector> = (0..n)
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut w = QVector::zeros(n);
            w.0[free] = Rational::one();
            for (i, &p) in pivots.iter().enumerate() {
                w.0[p] = -r.get(i, free).clone();
            }
            primitive_direction(&w)
        })
        .collect();
    // P = B^T (B B^T)^-1 B with B the (full row rank) row-space basis.
    let b = QMatrix::from_rows(row_space.iter().map(|v| v.0.clone()).collect())?;
    let gram = b.mul(&b.transpose())?;
    let projector = b.transpose().mul(&solve_exact(&gram, &b)?)?;
    Ok(Subspaces {
        kernel,
        row_space,
        projector,
    })
}

/// Rank of a matrix by exact elimination.
pub fn rank(a: &QMatrix) -> usize {
    rref(a).1.len()
}
