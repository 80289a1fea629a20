//! Ulam estimation of transition matrices, seasonal composition, the
//! Markovianity eigenvalue test and push-forward evolution.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::ingest::{Season, TransitionPair};
use crate::sparse::{MatrixError, SparseMatrix};
use crate::spectral::{dominant_eigs, EigenOptions, SpectralError};

/// Slack allowed on row sums above 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum UlamError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("pair references state {state} but the chain has {n} states")]
    InvalidState { state: usize, n: usize },
    #[error("row {row} sums to {sum}, above 1")]
    RowSum { row: usize, sum: f64 },
    #[error("row counts cover {got} rows, expected {expected}")]
    Counts { got: usize, expected: usize },
    #[error("lag mismatch: {0}")]
    Lag(String),
    #[error("unknown matrix label {0:?}")]
    Label(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatrixLabel {
    Season(Season),
    Annual,
    Pooled,
}

impl fmt::Display for MatrixLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixLabel::Season(s) => write!(f, "{s}"),
            MatrixLabel::Annual => f.write_str("annual"),
            MatrixLabel::Pooled => f.write_str("pooled"),
        }
    }
}

impl FromStr for MatrixLabel {
    type Err = UlamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "annual" => Ok(MatrixLabel::Annual),
            "pooled" => Ok(MatrixLabel::Pooled),
            other => other
                .parse::<Season>()
                .map(MatrixLabel::Season)
                .map_err(|_| UlamError::Label(other.to_string())),
        }
    }
}

/// Row-substochastic matrix over the N domain states. Mass missing from a
/// row is the probability of leaving the domain in one step.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    matrix: SparseMatrix,
    lag_days: f64,
    label: MatrixLabel,
    row_counts: Option<Vec<u64>>,
}

impl TransitionMatrix {
    pub fn new(
        matrix: SparseMatrix,
        lag_days: f64,
        label: MatrixLabel,
        row_counts: Option<Vec<u64>>,
    ) -> Result<Self, UlamError> {
        if !matrix.is_square() {
            return Err(MatrixError::Dimension(format!(
                "transition matrix is {}x{}",
                matrix.n_rows(),
                matrix.n_cols()
            ))
            .into());
        }
        if !(lag_days.is_finite() && lag_days > 0.0) {
            return Err(UlamError::Lag(format!("non-positive lag {lag_days}")));
        }
        for (row, sum) in matrix.row_sums().into_iter().enumerate() {
            if sum > 1.0 + ROW_SUM_TOLERANCE {
                return Err(UlamError::RowSum { row, sum });
            }
        }
        if let Some(c) = &row_counts {
            if c.len() != matrix.n_rows() {
                return Err(UlamError::Counts {
                    got: c.len(),
                    expected: matrix.n_rows(),
                });
            }
        }
        Ok(TransitionMatrix {
            matrix,
            lag_days,
            label,
            row_counts,
        })
    }

    pub fn identity(n: usize, lag_days: f64, label: MatrixLabel) -> Self {
        TransitionMatrix::new(SparseMatrix::identity(n), lag_days, label, None)
            .expect("identity is stochastic")
    }

    pub fn n_states(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn lag_days(&self) -> f64 {
        self.lag_days
    }

    pub fn label(&self) -> MatrixLabel {
        self.label
    }

    pub fn row_counts(&self) -> Option<&[u64]> {
        self.row_counts.as_deref()
    }

    /// Probability of leaving the domain from state `i` in one step.
    pub fn deficit(&self, i: usize) -> f64 {
        (1.0 - self.matrix.row_sum(i)).max(0.0)
    }

    /// Rows with no samples (or no entries, for derived matrices).
    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.n_states())
            .filter(|&i| match &self.row_counts {
                Some(c) => c[i] == 0,
                None => self.matrix.row_len(i) == 0,
            })
            .collect()
    }

    pub fn empty_row_fraction(&self) -> f64 {
        if self.n_states() == 0 {
            return 0.0;
        }
        self.empty_rows().len() as f64 / self.n_states() as f64
    }

    /// Smallest and largest row sums over non-empty rows.
    pub fn row_sum_range(&self) -> Option<(f64, f64)> {
        let empty = self.empty_rows();
        let sums: Vec<f64> = (0..self.n_states())
            .filter(|i| empty.binary_search(i).is_err())
            .map(|i| self.matrix.row_sum(i))
            .collect();
        let min = sums.iter().copied().reduce(f64::min)?;
        let max = sums.iter().copied().reduce(f64::max)?;
        Some((min, max))
    }
}

/// Counts `i → j` transitions: `P_ij = #(i → j) / #(i → ·)`, where the
/// denominator includes pairs that end outside the domain.
pub fn estimate(
    pairs: &[TransitionPair],
    n: usize,
    lag_days: f64,
    label: MatrixLabel,
) -> Result<TransitionMatrix, UlamError> {
    let mut row_counts = vec![0u64; n];
    let mut moves: Vec<(usize, usize)> = Vec::with_capacity(pairs.len());
    for p in pairs {
        if p.from >= n {
            return Err(UlamError::InvalidState { state: p.from, n });
        }
        row_counts[p.from] += 1;
        if let Some(to) = p.to {
            if to >= n {
                return Err(UlamError::InvalidState { state: to, n });
            }
            moves.push((p.from, to));
        }
    }
    moves.sort_unstable();

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut k = 0;
    while k < moves.len() {
        let (i, j) = moves[k];
        let run = moves[k..].iter().take_while(|&&m| m == (i, j)).count();
        rows[i].push((j, run as f64 / row_counts[i] as f64));
        k += run;
    }
    let matrix = SparseMatrix::from_sorted_rows(n, rows);
    let tm = TransitionMatrix::new(matrix, lag_days, label, Some(row_counts))?;
    let empty = tm.empty_row_fraction();
    if empty > 0.0 {
        log::info!("{label}: {:.1}% of rows have no samples", 100.0 * empty);
    }
    Ok(tm)
}

/// Season-aware annual matrix `W^e · SF^e · S^e · SF^e` with lag `4 e T`.
pub fn compose_annual(
    winter: &TransitionMatrix,
    summer: &TransitionMatrix,
    spring_fall: &TransitionMatrix,
    exponent: u32,
    prune: f64,
) -> Result<TransitionMatrix, UlamError> {
    let n = winter.n_states();
    if summer.n_states() != n || spring_fall.n_states() != n {
        return Err(MatrixError::Dimension(format!(
            "seasonal matrices have {}, {} and {} states",
            n,
            summer.n_states(),
            spring_fall.n_states()
        ))
        .into());
    }
    let lag = winter.lag_days();
    if summer.lag_days() != lag || spring_fall.lag_days() != lag {
        return Err(UlamError::Lag(format!(
            "seasonal lags {} / {} / {} differ",
            lag,
            summer.lag_days(),
            spring_fall.lag_days()
        )));
    }
    let w = winter.matrix().pow(exponent, prune)?;
    let s = summer.matrix().pow(exponent, prune)?;
    let sf = spring_fall.matrix().pow(exponent, prune)?;
    let annual = w.matmul(&sf, prune)?.matmul(&s, prune)?.matmul(&sf, prune)?;
    TransitionMatrix::new(
        annual,
        4.0 * exponent as f64 * lag,
        MatrixLabel::Annual,
        None,
    )
}

/// One row of the Markovianity test: eigenvalue moduli of `P(nT)` next to
/// the powers `λ(P(T))^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovTestRow {
    pub n: u32,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
    /// `|observed − predicted| / predicted` per eigenvalue.
    pub relative_deviation: Vec<f64>,
    pub converged: bool,
}

impl MarkovTestRow {
    pub fn max_deviation(&self) -> f64 {
        self.relative_deviation.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares leading eigenvalue moduli of lag-`nT` matrices against powers of
/// those of the lag-`T` matrix. `n` is taken from the lag ratio.
pub fn markov_test(
    base: &TransitionMatrix,
    lagged: &[TransitionMatrix],
    k_eigs: usize,
    opts: &EigenOptions,
) -> Result<Vec<MarkovTestRow>, UlamError> {
    let base_eigs = dominant_eigs(base.matrix(), k_eigs, opts)?;
    let base_moduli = base_eigs.moduli();
    let mut rows = Vec::with_capacity(lagged.len());
    for p in lagged {
        let ratio = p.lag_days() / base.lag_days();
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 {
            return Err(UlamError::Lag(format!(
                "lag {} is not a multiple of {}",
                p.lag_days(),
                base.lag_days()
            )));
        }
        let eigs = dominant_eigs(p.matrix(), k_eigs, opts)?;
        let observed = eigs.moduli();
        let predicted: Vec<f64> = base_moduli.iter().map(|l| l.powi(n as i32)).collect();
        let relative_deviation = observed
            .iter()
            .zip(&predicted)
            .map(|(o, q)| {
                if *q == 0.0 {
                    if *o == 0.0 { 0.0 } else { f64::INFINITY }
                } else {
                    (o - q).abs() / q
                }
            })
            .collect();
        rows.push(MarkovTestRow {
            n: n as u32,
            observed,
            predicted,
            relative_deviation,
            converged: eigs.converged() && base_eigs.converged(),
        });
    }
    Ok(rows)
}

/// `f P^k` by `k` successive sparse vector–matrix products.
pub fn push_forward(f: &[f64], p: &SparseMatrix, steps: usize) -> Result<Vec<f64>, MatrixError> {
    let mut v = f.to_vec();
    if v.len() != p.n_rows() {
        return Err(MatrixError::Dimension(format!(
            "distribution of length {} against {} states",
            v.len(),
            p.n_rows()
        )));
    }
    for _ in 0..steps {
        v = p.vec_mul(&v)?;
    }
    Ok(v)
}

/// Every intermediate distribution `f P^k` for `k = 0..=steps`.
pub fn push_forward_trace(
    f: &[f64],
    p: &SparseMatrix,
    steps: usize,
) -> Result<Vec<Vec<f64>>, MatrixError> {
    let mut out = vec![push_forward(f, p, 0)?];
    for _ in 0..steps {
        let next = p.vec_mul(out.last().expect("non-empty"))?;
        out.push(next);
    }
    Ok(out)
}
