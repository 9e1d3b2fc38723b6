//! Networks over exact rationals.
//!
//! A layered [`NeuralNet`] computes
//!
//! ```text
//! x_0 = y,  x_j = rho_j(W_j x_{j-1} + b_j)  (j < L),  out = W_L x_{L-1} + R y + c_L
//! ```
//!
//! with activations drawn from a fixed catalog. [`RbfNet`] is the
//! interpolant `s(y) = C Phi(y)`, `Phi_i(y) = 1 / (|y - y_i|^2 + 1)`, and
//! [`AffineNet`] is `y -> M y + b`. All three evaluate and differentiate
//! exactly.

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::exact_arith::{int, solve_exact, ArithError, QMatrix, QVector, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `t -> t^2`
    Square,
    /// `t -> 1 / (t + 1)`
    ReciprocalShift,
    Identity,
}

impl Activation {
    pub fn apply(self, t: &Rational) -> Result<Rational, ArithError> {
        match self {
            Activation::Square => Ok(t * t),
            Activation::ReciprocalShift => {
                let d = t + Rational::one();
                if d.is_zero() {
                    return Err(ArithError::InvalidOperator(
                        "reciprocal-shift evaluated at -1".into(),
                    ));
                }
                Ok(d.recip())
            }
            Activation::Identity => Ok(t.clone()),
        }
    }

    pub fn derivative(self, t: &Rational) -> Result<Rational, ArithError> {
        match self {
            Activation::Square => Ok(t * int(2)),
            Activation::ReciprocalShift => {
                let d = t + Rational::one();
                if d.is_zero() {
                    return Err(ArithError::InvalidOperator(
                        "reciprocal-shift evaluated at -1".into(),
                    ));
                }
                Ok(-(&d * &d).recip())
            }
            Activation::Identity => Ok(Rational::one()),
        }
    }
}

/// A hidden layer; `activations[k]` acts on output coordinate `k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub w: QMatrix,
    pub b: QVector,
    pub activations: Vec<Activation>,
}

impl Layer {
    pub fn uniform(w: QMatrix, b: QVector, act: Activation) -> Self {
        let activations = vec![act; w.rows()];
        Self { w, b, activations }
    }

    fn pre_activation(&self, x: &QVector) -> Result<QVector, ArithError> {
        Ok(self.w.mul_vec(x)?.add(&self.b))
    }
}

/// The final affine map `V_L(x, y) = W_L x + R y + c_L`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputLayer {
    pub w: QMatrix,
    pub r: QMatrix,
    pub c: QVector,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuralNet {
    pub hidden: Vec<Layer>,
    pub output: OutputLayer,
}

impl NeuralNet {
    pub fn new(hidden: Vec<Layer>, output: OutputLayer) -> Result<Self, ArithError> {
        let net = Self { hidden, output };
        net.check_dims()?;
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.output.r.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.output.c.len()
    }

    fn check_dims(&self) -> Result<(), ArithError> {
        let mut width = self.input_dim();
        for (j, layer) in self.hidden.iter().enumerate() {
            if layer.w.cols() != width
                || layer.b.len() != layer.w.rows()
                || layer.activations.len() != layer.w.rows()
            {
                return Err(ArithError::Dimension(format!("layer {} does not chain", j + 1)));
            }
            width = layer.w.rows();
        }
        let o = &self.output;
        if o.w.cols() != width || o.w.rows() != o.c.len() || o.r.rows() != o.c.len() {
            return Err(ArithError::Dimension("output layer does not chain".into()));
        }
        Ok(())
    }

    pub fn eval(&self, y: &QVector) -> Result<QVector, ArithError> {
        if y.len() != self.input_dim() {
            return Err(ArithError::Dimension(format!(
                "input of length {} for width {}",
                y.len(),
                self.input_dim()
            )));
        }
        let mut x = y.clone();
        for layer in &self.hidden {
            let z = layer.pre_activation(&x)?;
            x = QVector(
                z.iter()
                    .zip(&layer.activations)
                    .map(|(t, a)| a.apply(t))
                    .collect::<Result<_, _>>()?,
            );
        }
        Ok(self
            .output
            .w
            .mul_vec(&x)?
            .add(&self.output.r.mul_vec(y)?)
            .add(&self.output.c))
    }

    /// `W_L D_{L-1} W_{L-1} ... D_1 W_1 + R`.
    pub fn jacobian(&self, y: &QVector) -> Result<QMatrix, ArithError> {
        if y.len() != self.input_dim() {
            return Err(ArithError::Dimension("jacobian input".into()));
        }
        let mut x = y.clone();
        let mut acc = QMatrix::identity(y.len());
        for layer in &self.hidden {
            let z = layer.pre_activation(&x)?;
            let mut step = layer.w.clone();
            for (k, (t, a)) in z.iter().zip(&layer.activations).enumerate() {
                let d = a.derivative(t)?;
                for col in 0..step.cols() {
                    let v = step.get(k, col) * &d;
                    step.set(k, col, v);
                }
            }
            acc = step.mul(&acc)?;
            x = QVector(
                z.iter()
                    .zip(&layer.activations)
                    .map(|(t, a)| a.apply(t))
                    .collect::<Result<_, _>>()?,
            );
        }
        self.output.w.mul(&acc)?.add(&self.output.r)
    }
}

/// `s(y) = C Phi(y)` with `Phi_i(y) = 1 / (|y - y_i|^2 + 1)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RbfNet {
    pub centers: Vec<QVector>,
    #[serde(rename = "C")]
    pub c: QMatrix,
}

/// `1 / (t + 1)` for a squared distance `t >= 0`.
pub fn phi_sq(t: &Rational) -> Rational {
    (t + Rational::one()).recip()
}

/// The kernel matrix `R_ij = 1 / (|y_i - y_j|^2 + 1)`.
pub fn kernel_matrix(centers: &[QVector]) -> QMatrix {
    let l = centers.len();
    let mut r = QMatrix::zeros(l, l);
    for i in 0..l {
        for j in 0..l {
            r.set(i, j, phi_sq(&centers[i].dist_sq(&centers[j])));
        }
    }
    r
}

/// Interpolant through `(x_i, y_i)` with centers `y_i`: `C = X R^-1`.
pub fn build_rbf(points: &[(QVector, QVector)]) -> Result<RbfNet, ArithError> {
    if points.is_empty() {
        return Err(ArithError::Dimension("no interpolation points".into()));
    }
    let centers: Vec<QVector> = points.iter().map(|p| p.1.clone()).collect();
    for i in 0..centers.len() {
        if centers[i + 1..].contains(&centers[i]) {
            return Err(ArithError::Singular);
        }
    }
    let r = kernel_matrix(&centers);
    let xt = QMatrix::from_rows(points.iter().map(|p| p.0 .0.clone()).collect())?;
    // R is symmetric, so C^T = R^-1 X^T
    let ct = solve_exact(&r, &xt)?;
    Ok(RbfNet {
        centers,
        c: ct.transpose(),
    })
}

impl RbfNet {
    pub fn input_dim(&self) -> usize {
        self.centers.first().map_or(0, QVector::len)
    }

    pub fn output_dim(&self) -> usize {
        self.c.rows()
    }

    pub fn features(&self, y: &QVector) -> Result<QVector, ArithError> {
        if y.len() != self.input_dim() {
            return Err(ArithError::Dimension("rbf input".into()));
        }
        Ok(QVector(
            self.centers.iter().map(|c| phi_sq(&y.dist_sq(c))).collect(),
        ))
    }

    pub fn eval(&self, y: &QVector) -> Result<QVector, ArithError> {
        self.c.mul_vec(&self.features(y)?)
    }

    /// `C dPhi`, with row `i` of `dPhi` equal to `-2 (y - y_i)^T / (|y - y_i|^2 + 1)^2`.
    pub fn jacobian(&self, y: &QVector) -> Result<QMatrix, ArithError> {
        if y.len() != self.input_dim() {
            return Err(ArithError::Dimension("rbf input".into()));
        }
        let rows = self
            .centers
            .iter()
            .map(|c| {
                let d = y.sub(c);
                let s = phi_sq(&d.norm_sq());
                d.scale(&(&s * &s * int(-2))).0
            })
            .collect();
        self.c.mul(&QMatrix::from_rows(rows)?)
    }

    /// The layered encoding: squares of `y - y_j` coordinates, summed per
    /// center and passed through `1/(t+1)`, then mixed by `C`.
    pub fn to_layered(&self) -> Result<NeuralNet, ArithError> {
        let (m, l) = (self.input_dim(), self.centers.len());
        let mut w1 = QMatrix::zeros(l * m, m);
        let mut b1 = Vec::with_capacity(l * m);
        for (j, c) in self.centers.iter().enumerate() {
            for k in 0..m {
                w1.set(j * m + k, k, Rational::one());
                b1.push(-c[k].clone());
            }
        }
        let mut w2 = QMatrix::zeros(l, l * m);
        for j in 0..l {
            for k in 0..m {
                w2.set(j, j * m + k, Rational::one());
            }
        }
        NeuralNet::new(
            vec![
                Layer::uniform(w1, QVector(b1), Activation::Square),
                Layer::uniform(w2, QVector::zeros(l), Activation::ReciprocalShift),
            ],
            OutputLayer {
                w: self.c.clone(),
                r: QMatrix::zeros(self.output_dim(), m),
                c: QVector::zeros(self.output_dim()),
            },
        )
    }

    /// `sum_ji |C_ji|`, the factor in the central-difference error bound.
    pub fn coefficient_mass(&self) -> Rational {
        let mut s = Rational::zero();
        for i in 0..self.c.rows() {
            for j in 0..self.c.cols() {
                s += self.c.get(i, j).abs();
            }
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffineNet {
    #[serde(rename = "M")]
    pub m: QMatrix,
    pub b: QVector,
}

impl AffineNet {
    pub fn constant(value: QVector, input_dim: usize) -> Self {
        Self {
            m: QMatrix::zeros(value.len(), input_dim),
            b: value,
        }
    }

    pub fn eval(&self, y: &QVector) -> Result<QVector, ArithError> {
        Ok(self.m.mul_vec(y)?.add(&self.b))
    }

    pub fn jacobian(&self) -> QMatrix {
        self.m.clone()
    }

    pub fn to_layered(&self) -> NeuralNet {
        NeuralNet {
            hidden: Vec::new(),
            output: OutputLayer {
                w: QMatrix::zeros(self.m.rows(), self.m.cols()),
                r: self.m.clone(),
                c: self.b.clone(),
            },
        }
    }
}

/// Any network produced or consumed by the crate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Net {
    Layered(NeuralNet),
    Rbf(RbfNet),
    Affine(AffineNet),
}

impl Net {
    pub fn eval(&self, y: &QVector) -> Result<QVector, ArithError> {
        match self {
            Net::Layered(n) => n.eval(y),
            Net::Rbf(n) => n.eval(y),
            Net::Affine(n) => n.eval(y),
        }
    }

    pub fn jacobian(&self, y: &QVector) -> Result<QMatrix, ArithError> {
        match self {
            Net::Layered(n) => n.jacobian(y),
            Net::Rbf(n) => n.jacobian(y),
            Net::Affine(n) => {
                if y.len() != n.m.cols() {
                    return Err(ArithError::Dimension("affine input".into()));
                }
                Ok(n.jacobian())
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Net::Layered(n) => n.input_dim(),
            Net::Rbf(n) => n.input_dim(),
            Net::Affine(n) => n.m.cols(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Net::Layered(n) => n.output_dim(),
            Net::Rbf(n) => n.output_dim(),
            Net::Affine(n) => n.b.len(),
        }
    }

    pub fn to_layered(&self) -> Result<NeuralNet, ArithError> {
        match self {
            Net::Layered(n) => Ok(n.clone()),
            Net::Rbf(n) => n.to_layered(),
            Net::Affine(n) => Ok(n.to_layered()),
        }
    }
}

impl From<RbfNet> for Net {
    fn from(n: RbfNet) -> Self {
        Net::Rbf(n)
    }
}

impl From<AffineNet> for Net {
    fn from(n: AffineNet) -> Self {
        Net::Affine(n)
    }
}

impl From<NeuralNet> for Net {
    fn from(n: NeuralNet) -> Self {
        Net::Layered(n)
    }
}

/// `max_z |N1(z) - N2(z)|^2` over a finite, non-empty set.
pub fn sup_distance_sq(n1: &Net, n2: &Net, m2: &[QVector]) -> Result<Rational, ArithError> {
    let mut best = Rational::zero();
    for z in m2 {
        let d = n1.eval(z)?.dist_sq(&n2.eval(z)?);
        if d > best {
            best = d;
        }
    }
    Ok(best)
}
