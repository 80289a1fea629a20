#![allow(dead_code)]

use rand::Rng;
use ulamchain::absorb::{augment, AugmentedChain};
use ulamchain::grid::StateRoles;
use ulamchain::sparse::SparseMatrix;
use ulamchain::ulam::{MatrixLabel, TransitionMatrix};

pub type Dense = Vec<Vec<f64>>;

pub fn dense_mul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for l in 0..k {
            let ail = a[i][l];
            for j in 0..m {
                out[i][j] += ail * b[l][j];
            }
        }
    }
    out
}

pub fn dense_identity(n: usize) -> Dense {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn dense_pow(a: &Dense, e: u32) -> Dense {
    (0..e).fold(dense_identity(a.len()), |acc, _| dense_mul(&acc, a))
}

pub fn row_vec_mul(x: &[f64], a: &Dense) -> Vec<f64> {
    let mut out = vec![0.0; a[0].len()];
    for (xi, row) in x.iter().zip(a) {
        for (o, aij) in out.iter_mut().zip(row) {
            *o += xi * aij;
        }
    }
    out
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Random row-substochastic matrix; each row keeps mass `1 − leak_i` with
/// `leak_i = 0` on rows not in `leaky`. Entries are zeroed with
/// probability `1 − density`.
pub fn random_substochastic<R: Rng>(rng: &mut R, n: usize, density: f64, leaky: &[usize]) -> Dense {
    (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n)
                .map(|_| if rng.random::<f64>() < density { rng.random::<f64>() } else { 0.0 })
                .collect();
            if row.iter().all(|&x| x == 0.0) {
                row[rng.random_range(0..n)] = 1.0;
            }
            let s: f64 = row.iter().sum();
            let keep = if leaky.contains(&i) { rng.random_range(0.2..0.95) } else { 1.0 };
            row.iter_mut().for_each(|x| *x *= keep / s);
            row
        })
        .collect()
}

pub fn transition(rows: &Dense, lag: f64, label: MatrixLabel) -> TransitionMatrix {
    TransitionMatrix::new(SparseMatrix::from_dense(rows).unwrap(), lag, label, None).unwrap()
}

/// Random roles over `n` states: some leaky, some sticky, up to
/// `max_targets` debris labels (possibly co-located) and all states as
/// candidate sources.
pub fn random_roles<R: Rng>(rng: &mut R, n: usize, max_targets: usize) -> StateRoles {
    let leaky: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.4)).collect();
    let mut sticky: Vec<(usize, f64)> = Vec::new();
    for s in 0..n {
        if rng.random_bool(0.5) {
            sticky.push((s, rng.random_range(0.05..0.95)));
        }
    }
    let mut debris = Vec::new();
    if !sticky.is_empty() {
        let m = rng.random_range(1..=max_targets);
        for label in 1..=m {
            debris.push((sticky[rng.random_range(0..sticky.len())].0, label));
        }
    }
    StateRoles::new(n, leaky, sticky, debris, 0..n).unwrap()
}

pub fn random_chain<R: Rng>(rng: &mut R, n: usize, roles: &StateRoles, label: MatrixLabel) -> AugmentedChain {
    let leaky: Vec<usize> = roles.leaky().iter().copied().collect();
    let rows = random_substochastic(rng, n, 0.6, &leaky);
    augment(&transition(&rows, 5.0, label), roles).unwrap()
}

/// Visits every sequence in `{0..n}^len`.
pub fn for_each_sequence(n: usize, len: usize, mut f: impl FnMut(&[usize])) {
    let mut seq = vec![0usize; len];
    loop {
        f(&seq);
        let mut k = len;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            seq[k] += 1;
            if seq[k] < n {
                break;
            }
            seq[k] = 0;
        }
    }
}
