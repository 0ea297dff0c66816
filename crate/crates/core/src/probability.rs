//! Exact finite-dimensional probability kernel.
//!
//! Everything here is exact enumeration over small index sets: categorical
//! distributions, column-stochastic conditional tables, two-variable joints,
//! and the divergences and entropies built on them.
//!
//! Logs follow the convention `0 · ln 0 = 0`. Functional evaluation that may
//! meet hard zeros goes through [`LogClamp`], which floors arguments at
//! [`LOG_FLOOR`] and remembers that it had to.

use crate::error::{Error, Result};

/// Tolerance on the total mass of a distribution.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Probabilities below this are raised to it before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

/// A normalized probability vector over `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    /// Checks finiteness, non-negativity and unit mass.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_distribution(&probs)?;
        Ok(Self { probs })
    }

    /// No checks at all. Only for holding file contents until
    /// [`crate::model::validate_model`] has looked at them.
    pub fn new_unchecked(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if let Some(index) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFiniteInput { index });
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidDistribution("negative weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("zero total weight".into()));
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution needs a non-empty support");
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn delta(n: usize, k: usize) -> Self {
        assert!(k < n, "delta index {k} outside support of size {n}");
        let mut probs = vec![0.0; n];
        probs[k] = 1.0;
        Self { probs }
    }

    /// Mixes `self` with `other` at rate `eta`: `(1 - eta) * self + eta * other`.
    pub fn mix(&self, other: &Categorical, eta: f64) -> Result<Self> {
        check_len(self.len(), other.len())?;
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (1.0 - eta) * a + eta * b)
            .collect();
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the largest entry; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

impl std::ops::Index<usize> for Categorical {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.probs[i]
    }
}

fn check_distribution(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("empty support".into()));
    }
    if let Some(index) = probs.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFiniteInput { index });
    }
    if let Some(i) = probs.iter().position(|&p| p < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "negative entry {} at index {i}",
            probs[i]
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidDistribution(format!(
            "entries sum to {total}"
        )));
    }
    Ok(())
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Column-stochastic table: column `j` is the distribution of the row
/// variable given conditioning index `j`. Stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let m = Self::new_unchecked(rows, cols, data)?;
        for j in 0..cols {
            check_distribution(&m.column_vec(j)).map_err(|e| {
                Error::InvalidDistribution(format!("column {j}: {e}"))
            })?;
        }
        Ok(m)
    }

    /// Only the shape is checked. Used for loading tables that are then
    /// inspected by [`crate::model::validate_model`].
    pub fn new_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDistribution("empty matrix".into()));
        }
        check_len(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_columns(columns: &[Categorical]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns
            .first()
            .map(Categorical::len)
            .ok_or_else(|| Error::InvalidDistribution("no columns".into()))?;
        let mut data = vec![0.0; rows * cols];
        for (j, c) in columns.iter().enumerate() {
            check_len(rows, c.len())?;
            for (i, &p) in c.probs().iter().enumerate() {
                data[i * cols + j] = p;
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    fn column_vec(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, col)).collect()
    }

    /// Column `col` as a distribution over rows.
    pub fn column(&self, col: usize) -> Categorical {
        Categorical {
            probs: self.column_vec(col),
        }
    }

    /// Marginalizes the conditioning variable: `out_i = Σ_j m[i][j] p_j`.
    pub fn apply(&self, p: &Categorical) -> Result<Categorical> {
        check_len(self.cols, p.len())?;
        let probs = (0..self.rows)
            .map(|i| self.row(i).iter().zip(p.probs()).map(|(a, b)| a * b).sum())
            .collect();
        Ok(Categorical { probs })
    }
}

/// Joint table over (row variable, column variable); in this crate rows
/// index observations and columns index states.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Joint2 {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDistribution("empty joint".into()));
        }
        check_len(rows * cols, data.len())?;
        check_distribution(&data)?;
        Ok(Self { rows, cols, data })
    }

    /// `joint[i][j] = conditional[i | j] · marginal[j]`.
    pub fn from_conditional_and_col_marginal(
        conditional: &StochasticMatrix,
        marginal: &Categorical,
    ) -> Result<Self> {
        check_len(conditional.cols(), marginal.len())?;
        let (rows, cols) = (conditional.rows(), conditional.cols());
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(conditional.get(i, j) * marginal[j]);
            }
        }
        Ok(Self { rows, cols, data })
    }

    /// `joint[i][j] = marginal[i] · conditional[j | i]`, where `conditional`
    /// is `cols × rows` with column `i` the distribution over `j`.
    pub fn from_row_marginal_and_conditional(
        marginal: &Categorical,
        conditional: &StochasticMatrix,
    ) -> Result<Self> {
        check_len(conditional.cols(), marginal.len())?;
        let (rows, cols) = (conditional.cols(), conditional.rows());
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(marginal[i] * conditional.get(j, i));
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row_marginal(&self) -> Categorical {
        let probs = (0..self.rows)
            .map(|i| self.data[i * self.cols..(i + 1) * self.cols].iter().sum())
            .collect();
        Categorical { probs }
    }

    pub fn col_marginal(&self) -> Categorical {
        let probs = (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect();
        Categorical { probs }
    }
}

/// Both ways of conditioning a [`Joint2`].
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub row_marginal: Categorical,
    pub col_marginal: Categorical,
    /// `rows × cols`; column `j` is `P(row | col = j)`.
    pub row_given_col: StochasticMatrix,
    /// `cols × rows`; column `i` is `P(col | row = i)`.
    pub col_given_row: StochasticMatrix,
    /// Column indices with zero mass; their conditionals are uniform.
    pub empty_cols: Vec<usize>,
    /// Row indices with zero mass; their conditionals are uniform.
    pub empty_rows: Vec<usize>,
}

pub fn factorize(joint: &Joint2) -> Factorization {
    let (rows, cols) = (joint.rows(), joint.cols());
    let row_marginal = joint.row_marginal();
    let col_marginal = joint.col_marginal();

    let mut empty_cols = Vec::new();
    let mut rgc = vec![0.0; rows * cols];
    for j in 0..cols {
        let mass = col_marginal[j];
        if mass > 0.0 {
            for i in 0..rows {
                rgc[i * cols + j] = joint.get(i, j) / mass;
            }
        } else {
            empty_cols.push(j);
            for i in 0..rows {
                rgc[i * cols + j] = 1.0 / rows as f64;
            }
        }
    }

    let mut empty_rows = Vec::new();
    let mut cgr = vec![0.0; cols * rows];
    for i in 0..rows {
        let mass = row_marginal[i];
        if mass > 0.0 {
            for j in 0..cols {
                cgr[j * rows + i] = joint.get(i, j) / mass;
            }
        } else {
            empty_rows.push(i);
            for j in 0..cols {
                cgr[j * rows + i] = 1.0 / cols as f64;
            }
        }
    }

    Factorization {
        row_marginal,
        col_marginal,
        row_given_col: StochasticMatrix {
            rows,
            cols,
            data: rgc,
        },
        col_given_row: StochasticMatrix {
            rows: cols,
            cols: rows,
            data: cgr,
        },
        empty_cols,
        empty_rows,
    }
}

/// `KL[p || q] = Σ p_i ln(p_i / q_i)`.
pub fn kl_divergence(p: &Categorical, q: &Categorical) -> Result<f64> {
    check_len(p.len(), q.len())?;
    let mut total = 0.0;
    for (index, (&pi, &qi)) in p.probs().iter().zip(q.probs()).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::AbsoluteContinuityViolation { index, p: pi });
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total)
}

pub fn entropy(p: &Categorical) -> f64 {
    -p.probs()
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// `out_i ∝ exp(precision · values_i)`, computed with the max shifted out.
pub fn softmax(values: &[f64], precision: f64) -> Result<Categorical> {
    if values.is_empty() {
        return Err(Error::InvalidDistribution("empty score vector".into()));
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput { index });
    }
    if !(precision.is_finite() && precision > 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "precision must be positive and finite, got {precision}"
        )));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = values
        .iter()
        .map(|v| (precision * (v - max)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(Categorical {
        probs: weights.into_iter().map(|w| w / total).collect(),
    })
}

/// Natural log with a floor at [`LOG_FLOOR`]; records whether the floor
/// was ever hit.
#[derive(Debug, Default, Clone, Copy)]
pub struct LogClamp {
    clamped: bool,
}

impl LogClamp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ln(&mut self, p: f64) -> f64 {
        if p < LOG_FLOOR {
            self.clamped = true;
            LOG_FLOOR.ln()
        } else {
            p.ln()
        }
    }

    pub fn clamped(&self) -> bool {
        self.clamped
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat(v: &[f64]) -> Categorical {
        Categorical::new(v.to_vec()).unwrap()
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&cat(&[0.5, 0.5]), &cat(&[0.5, 0.5])).unwrap(), 0.0);
        let d = kl_divergence(&cat(&[1.0, 0.0]), &cat(&[0.5, 0.5])).unwrap();
        assert!((d - 2f64.ln()).abs() < 1e-15);
        // 0.5 ln(0.5/0.25) + 0.5 ln(0.5/0.75)
        let oracle = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        let d = kl_divergence(&cat(&[0.5, 0.5]), &cat(&[0.25, 0.75])).unwrap();
        assert!((d - oracle).abs() < 1e-15);
        assert!((d - 0.143841).abs() < 5e-7);
    }

    #[test]
    fn kl_errors() {
        assert_eq!(
            kl_divergence(&cat(&[0.5, 0.5]), &cat(&[1.0, 0.0])),
            Err(Error::AbsoluteContinuityViolation { index: 1, p: 0.5 })
        );
        assert!(matches!(
            kl_divergence(&cat(&[1.0]), &cat(&[0.5, 0.5])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&Categorical::uniform(4)) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&cat(&[1.0, 0.0, 0.0])), 0.0);
        let oracle = -(0.25f64 * 0.25f64.ln() + 0.75 * 0.75f64.ln());
        let h = entropy(&cat(&[0.25, 0.75]));
        assert!((h - oracle).abs() < 1e-15);
        assert!((h - 0.562335).abs() < 5e-7);
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&[3.0, 3.0, 3.0], 1.0).unwrap();
        for &p in u.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax(&[0.0, -(2f64.ln())], 1.0).unwrap();
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s[1] - 1.0 / 3.0).abs() < 1e-15);
        let near = softmax(&[5.0, 1.0], 1e-9).unwrap();
        assert!((near[0] - 0.5).abs() < 1e-8);
        assert_eq!(
            softmax(&[0.0, f64::NAN], 1.0),
            Err(Error::NonFiniteInput { index: 1 })
        );
        assert!(softmax(&[0.0], 0.0).is_err());
    }

    #[test]
    fn factorize_examples() {
        let j = Joint2::new(2, 2, vec![0.25; 4]).unwrap();
        let f = factorize(&j);
        assert_eq!(f.row_marginal, Categorical::uniform(2));
        assert_eq!(f.col_given_row.data(), &[0.5; 4]);

        let p = [0.3, 0.7];
        let q = [0.1, 0.6, 0.3];
        let data: Vec<f64> = p.iter().flat_map(|a| q.iter().map(move |b| a * b)).collect();
        let f = factorize(&Joint2::new(2, 3, data).unwrap());
        for j in 0..3 {
            for i in 0..2 {
                assert!((f.row_given_col.get(i, j) - p[i]).abs() < 1e-15);
            }
        }

        let f = factorize(&Joint2::new(2, 2, vec![0.4, 0.1, 0.1, 0.4]).unwrap());
        assert_eq!(f.row_marginal.probs(), &[0.5, 0.5]);
        assert!((f.row_given_col.get(0, 0) - 0.8).abs() < 1e-15);
        assert!((f.row_given_col.get(1, 0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_mass_conditionals_are_uniform() {
        let j = Joint2::new(2, 3, vec![0.5, 0.0, 0.0, 0.5, 0.0, 0.0]).unwrap();
        let f = factorize(&j);
        assert_eq!(f.empty_cols, vec![1, 2]);
        assert_eq!(f.row_given_col.column(2).probs(), &[0.5, 0.5]);
        assert!(f.empty_rows.is_empty());
    }

    #[test]
    fn categorical_rejects_bad_input() {
        assert!(Categorical::new(vec![]).is_err());
        assert!(Categorical::new(vec![0.6, 0.6]).is_err());
        assert!(Categorical::new(vec![1.1, -0.1]).is_err());
        assert!(StochasticMatrix::new(2, 1, vec![0.5, 0.4]).is_err());
    }

    #[test]
    fn log_clamp_flags() {
        let mut l = LogClamp::new();
        assert_eq!(l.ln(1.0), 0.0);
        assert!(!l.clamped());
        assert_eq!(l.ln(0.0), LOG_FLOOR.ln());
        assert!(l.clamped());
    }
}
