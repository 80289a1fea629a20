//! Cemetery and beaching augmentation of a transition matrix.
//!
//! State layout of an augmented chain over N domain states and M targets:
//! `0..N` are the domain states, `N` is the cemetery and `N + m` is the
//! target cemetery of label `m ∈ 1..=M`.

use thiserror::Error;

use crate::grid::StateRoles;
use crate::sparse::{MatrixError, SparseMatrix};
use crate::ulam::{MatrixLabel, TransitionMatrix, ROW_SUM_TOLERANCE};

#[derive(Debug, Error)]
pub enum AbsorbError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("row {row} sums to {sum}; the leak deficit would be negative")]
    NegativeDeficit { row: usize, sum: f64 },
    #[error("augmented row {row} sums to {sum}, not 1")]
    RowSum { row: usize, sum: f64 },
    #[error("roles reference state {state} but the matrix has {n} states")]
    RolesOutOfRange { state: usize, n: usize },
    #[error("invalid state index {0}")]
    InvalidState(usize),
    #[error("absorption probabilities did not converge after {0} iterations")]
    NotConverged(usize),
}

/// `(N+1)`-state matrix with the cemetery appended.
#[derive(Debug, Clone, PartialEq)]
pub struct CemeteryMatrix {
    matrix: SparseMatrix,
    n: usize,
    lag_days: f64,
    label: MatrixLabel,
    undeclared_leaks: Vec<usize>,
}

impl CemeteryMatrix {
    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn n_domain(&self) -> usize {
        self.n
    }

    /// Rows with a positive deficit that the roles do not list as leaky.
    /// Their deficit is routed to the cemetery all the same.
    pub fn undeclared_leaks(&self) -> &[usize] {
        &self.undeclared_leaks
    }
}

fn check_roles(roles: &StateRoles, n: usize) -> Result<(), AbsorbError> {
    let needed = roles.min_states();
    if needed > n {
        return Err(AbsorbError::RolesOutOfRange { state: needed - 1, n });
    }
    Ok(())
}

/// Appends the absorbing cemetery: `P_{i,N} = 1 − Σ_j P_ij`. Empty rows send
/// all of their mass to the cemetery.
pub fn add_cemetery(p: &TransitionMatrix, roles: &StateRoles) -> Result<CemeteryMatrix, AbsorbError> {
    let n = p.n_states();
    check_roles(roles, n)?;
    let mut rows = Vec::with_capacity(n + 1);
    let mut undeclared = Vec::new();
    for i in 0..n {
        let mut row: Vec<(usize, f64)> = p.matrix().row(i).collect();
        let sum: f64 = row.iter().map(|e| e.1).sum();
        if sum > 1.0 + ROW_SUM_TOLERANCE {
            return Err(AbsorbError::NegativeDeficit { row: i, sum });
        }
        let deficit = 1.0 - sum;
        if deficit > ROW_SUM_TOLERANCE {
            if !roles.leaky().contains(&i) && !row.is_empty() {
                undeclared.push(i);
            }
            row.push((n, deficit));
        }
        rows.push(row);
    }
    rows.push(vec![(n, 1.0)]);
    if !undeclared.is_empty() {
        log::warn!(
            "{}: {} rows leak without being declared leaky",
            p.label(),
            undeclared.len()
        );
    }
    Ok(CemeteryMatrix {
        matrix: SparseMatrix::from_sorted_rows(n + 1, rows),
        n,
        lag_days: p.lag_days(),
        label: p.label(),
        undeclared_leaks: undeclared,
    })
}

/// Closed absorbing chain over `N + 1 + M` states.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedChain {
    matrix: SparseMatrix,
    n: usize,
    roles: StateRoles,
    lag_days: f64,
    label: MatrixLabel,
}

impl AugmentedChain {
    /// Wraps an already augmented matrix, checking the layout invariants.
    pub fn from_parts(
        matrix: SparseMatrix,
        n: usize,
        roles: StateRoles,
        lag_days: f64,
        label: MatrixLabel,
    ) -> Result<Self, AbsorbError> {
        let total = n + 1 + roles.n_targets();
        if matrix.n_rows() != total || matrix.n_cols() != total {
            return Err(MatrixError::Dimension(format!(
                "augmented matrix is {}x{}, expected {total}x{total}",
                matrix.n_rows(),
                matrix.n_cols()
            ))
            .into());
        }
        check_roles(&roles, n)?;
        for (row, sum) in matrix.row_sums().into_iter().enumerate() {
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(AbsorbError::RowSum { row, sum });
            }
        }
        for a in n..total {
            if matrix.get(a, a) != 1.0 {
                return Err(AbsorbError::RowSum {
                    row: a,
                    sum: matrix.row_sum(a),
                });
            }
        }
        Ok(AugmentedChain {
            matrix,
            n,
            roles,
            lag_days,
            label,
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Number of domain states N.
    pub fn n_domain(&self) -> usize {
        self.n
    }

    pub fn n_targets(&self) -> usize {
        self.roles.n_targets()
    }

    pub fn n_total(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn cemetery(&self) -> usize {
        self.n
    }

    /// State index of target label `m` (1-based).
    pub fn target(&self, m: usize) -> Option<usize> {
        (1..=self.n_targets()).contains(&m).then(|| self.n + m)
    }

    pub fn roles(&self) -> &StateRoles {
        &self.roles
    }

    pub fn lag_days(&self) -> f64 {
        self.lag_days
    }

    pub fn label(&self) -> MatrixLabel {
        self.label
    }
}

/// Beaching augmentation. Sticky rows are scaled by `1 − ℓ` (cemetery column
/// included); non-debris sticky rows add `ℓ` to the cemetery; debris rows
/// send `ℓ` to their target cemetery, split equally among co-located
/// targets; target cemeteries are absorbing.
pub fn add_beaching(pc: &CemeteryMatrix, roles: &StateRoles) -> Result<AugmentedChain, AbsorbError> {
    let n = pc.n;
    check_roles(roles, n)?;
    let m_total = roles.n_targets();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n + 1 + m_total);
    for i in 0..=n {
        let mut row: Vec<(usize, f64)> = pc.matrix.row(i).collect();
        if let Some(ell) = (i < n).then(|| roles.land_fraction(i)).flatten() {
            row.iter_mut().for_each(|e| e.1 *= 1.0 - ell);
            let targets = roles.targets_of(i);
            if targets.is_empty() {
                match row.iter_mut().find(|e| e.0 == n) {
                    Some(e) => e.1 += ell,
                    None => row.push((n, ell)),
                }
            } else {
                let share = ell / targets.len() as f64;
                row.extend(targets.into_iter().map(|m| (n + m, share)));
            }
        }
        rows.push(row);
    }
    for m in 1..=m_total {
        rows.push(vec![(n + m, 1.0)]);
    }
    for (row, entries) in rows.iter().enumerate() {
        let sum: f64 = entries.iter().map(|e| e.1).sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(AbsorbError::RowSum { row, sum });
        }
    }
    let rows = rows
        .into_iter()
        .map(|r| r.into_iter().filter(|e| e.1 > 0.0).collect())
        .collect();
    Ok(AugmentedChain {
        matrix: SparseMatrix::from_sorted_rows(n + 1 + m_total, rows),
        n,
        roles: roles.clone(),
        lag_days: pc.lag_days,
        label: pc.label,
    })
}

/// `add_cemetery` followed by `add_beaching`.
pub fn augment(p: &TransitionMatrix, roles: &StateRoles) -> Result<AugmentedChain, AbsorbError> {
    add_beaching(&add_cemetery(p, roles)?, roles)
}

/// Transient block `Q` (domain × domain) and absorption block `R`
/// (domain × {cemetery, targets}).
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionBlocks {
    pub q: SparseMatrix,
    pub r: SparseMatrix,
}

pub fn absorption_split(a: &AugmentedChain) -> AbsorptionBlocks {
    let n = a.n;
    let total = a.n_total();
    AbsorptionBlocks {
        q: a.matrix.block(0..n, 0..n),
        r: a.matrix.block(0..n, n..total),
    }
}

/// Eventual absorption probabilities `B = (I − Q)⁻¹ R` by the fixed-point
/// iteration `B ← R + Q B`. Row `i` of the result holds the probabilities
/// of ending in the cemetery and in each target from state `i`.
pub fn absorption_probabilities(
    blocks: &AbsorptionBlocks,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<Vec<f64>>, AbsorbError> {
    let n = blocks.q.n_rows();
    let k = blocks.r.n_cols();
    let mut cols: Vec<Vec<f64>> = (0..k)
        .map(|c| (0..n).map(|i| blocks.r.get(i, c)).collect())
        .collect();
    for col in cols.iter_mut() {
        let rhs = col.clone();
        let mut iter = 0;
        loop {
            iter += 1;
            let qx = blocks.q.mul_vec(col)?;
            let next: Vec<f64> = rhs.iter().zip(&qx).map(|(a, b)| a + b).collect();
            let change = next
                .iter()
                .zip(col.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            *col = next;
            if change <= tol {
                break;
            }
            if iter >= max_iter {
                return Err(AbsorbError::NotConverged(max_iter));
            }
        }
    }
    Ok((0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Season;

    fn tm(rows: &[&[f64]]) -> TransitionMatrix {
        let dense: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        TransitionMatrix::new(
            SparseMatrix::from_dense(&dense).unwrap(),
            5.0,
            MatrixLabel::Season(Season::Winter),
            None,
        )
        .unwrap()
    }

    #[test]
    fn cemetery_entries() {
        let p = tm(&[&[0.5, 0.3], &[0.4, 0.6]]);
        let roles = StateRoles::new(2, [0], [], [], []).unwrap();
        let c = add_cemetery(&p, &roles).unwrap();
        assert!((c.matrix().get(0, 2) - 0.2).abs() < 1e-15);
        assert_eq!(c.matrix().get(1, 2), 0.0);
        assert_eq!(c.matrix().get(2, 2), 1.0);
        assert!(c.undeclared_leaks().is_empty());
    }

    #[test]
    fn empty_row_routes_to_cemetery() {
        let p = tm(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let c = add_cemetery(&p, &StateRoles::default()).unwrap();
        assert_eq!(c.matrix().get(1, 2), 1.0);
        assert!(c.undeclared_leaks().is_empty());
    }

    #[test]
    fn undeclared_leak_is_reported() {
        let p = tm(&[&[0.9, 0.0], &[0.0, 1.0]]);
        let c = add_cemetery(&p, &StateRoles::default()).unwrap();
        assert_eq!(c.undeclared_leaks(), &[0]);
    }

    #[test]
    fn sticky_non_debris_row() {
        // prior row [0.6 -> 1, 0.4 -> cemetery] with ℓ = 0.5
        let p = tm(&[&[0.0, 0.6], &[0.0, 1.0]]);
        let roles = StateRoles::new(2, [0], [(0, 0.5)], [], []).unwrap();
        let a = augment(&p, &roles).unwrap();
        assert_eq!(a.matrix().get(0, 1), 0.3);
        assert_eq!(a.matrix().get(0, 2), 0.5 + 0.2);
    }

    #[test]
    fn debris_row() {
        let p = tm(&[&[0.0, 1.0], &[0.0, 1.0]]);
        let roles = StateRoles::new(2, [], [(0, 0.5)], [(0, 1)], []).unwrap();
        let a = augment(&p, &roles).unwrap();
        assert_eq!(a.n_total(), 4);
        assert_eq!(a.matrix().get(0, 1), 0.5);
        assert_eq!(a.matrix().get(0, 3), 0.5);
        assert_eq!(a.matrix().get(0, 2), 0.0);
        assert_eq!(a.matrix().get(3, 3), 1.0);
        assert_eq!(a.target(1), Some(3));
        assert_eq!(a.target(2), None);
    }

    #[test]
    fn co_located_targets_split_land_fraction() {
        let p = tm(&[&[1.0]]);
        let roles = StateRoles::new(1, [], [(0, 0.4)], [(0, 1), (0, 2)], []).unwrap();
        let a = augment(&p, &roles).unwrap();
        assert!((a.matrix().get(0, 2) - 0.2).abs() < 1e-15);
        assert!((a.matrix().get(0, 3) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn sticky_and_leaky_scales_leak() {
        let p = tm(&[&[0.8, 0.0], &[0.0, 1.0]]);
        let roles = StateRoles::new(2, [0], [(0, 0.25)], [(0, 1)], []).unwrap();
        let a = augment(&p, &roles).unwrap();
        assert!((a.matrix().get(0, 0) - 0.6).abs() < 1e-15);
        assert!((a.matrix().get(0, 2) - 0.15).abs() < 1e-15);
        assert_eq!(a.matrix().get(0, 3), 0.25);
    }

    #[test]
    fn rejects_overfull_row_and_bad_roles() {
        let over = TransitionMatrix::new(
            SparseMatrix::from_dense(&[vec![1.0 + 1e-13]]).unwrap(),
            5.0,
            MatrixLabel::Pooled,
            None,
        )
        .unwrap();
        // within the 1e-12 slack: accepted, deficit treated as zero
        assert!(add_cemetery(&over, &StateRoles::default()).is_ok());
        let p = tm(&[&[1.0]]);
        let roles = StateRoles::new(3, [2], [], [], []).unwrap();
        assert!(matches!(
            add_cemetery(&p, &roles),
            Err(AbsorbError::RolesOutOfRange { .. })
        ));
    }

    #[test]
    fn split_dimensions() {
        let p = tm(&[&[0.5, 0.5], &[0.0, 1.0]]);
        let a = augment(&p, &StateRoles::default()).unwrap();
        let b = absorption_split(&a);
        assert_eq!((b.q.n_rows(), b.q.n_cols()), (2, 2));
        assert_eq!((b.r.n_rows(), b.r.n_cols()), (2, 1));
        assert_eq!(b.r.nnz(), 0);
    }

    #[test]
    fn absorption_probabilities_small_chain() {
        // 0 -> 1 w.p. 0.5, -> target w.p. 0.5 (ℓ = 0.5); 1 -> leaks 0.5, stays 0.5
        let p = tm(&[&[0.0, 1.0], &[0.0, 0.5]]);
        let roles = StateRoles::new(2, [1], [(0, 0.5)], [(0, 1)], []).unwrap();
        let a = augment(&p, &roles).unwrap();
        let b = absorption_probabilities(&absorption_split(&a), 1e-14, 10_000).unwrap();
        assert!((b[0][0] - 0.5).abs() < 1e-12);
        assert!((b[0][1] - 0.5).abs() < 1e-12);
        assert!((b[1][0] - 1.0).abs() < 1e-12);
    }
}
