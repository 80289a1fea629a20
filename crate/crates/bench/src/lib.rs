//! Seeded fixtures for the benchmarks: a square box lattice with local
//! random drift, a western coast of debris targets and leaky north and south
//! edges.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ulamchain::grid::StateRoles;
use ulamchain::ingest::{Season, TransitionPair};
use ulamchain::sparse::SparseMatrix;
use ulamchain::ulam::MatrixLabel;
use ulamchain::TransitionMatrix;

pub const LAG_DAYS: f64 = 5.0;

pub fn state(side: usize, i: usize, j: usize) -> usize {
    j * side + i
}

/// Local drift on a `side × side` lattice. Moves off the north or south
/// edge leave the domain; the western column keeps its westward mass.
pub fn lattice(side: usize, label: MatrixLabel, seed: u64) -> TransitionMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triplets = Vec::new();
    for j in 0..side {
        for i in 0..side {
            let s = state(side, i, j);
            let w: [f64; 5] = std::array::from_fn(|_| rng.random_range(0.1..1.0));
            let total: f64 = w.iter().sum();
            let west = if i > 0 { state(side, i - 1, j) } else { s };
            let east = if i + 1 < side { state(side, i + 1, j) } else { s };
            let moves = [
                Some(s),
                Some(west),
                Some(east),
                (j + 1 < side).then(|| state(side, i, j + 1)),
                (j > 0).then(|| state(side, i, j - 1)),
            ];
            for (to, p) in moves.into_iter().zip(w) {
                if let Some(t) = to {
                    triplets.push((s, t, p / total));
                }
            }
        }
    }
    let n = side * side;
    let m = SparseMatrix::from_triplets(n, n, triplets).expect("valid lattice");
    TransitionMatrix::new(m, LAG_DAYS, label, None).expect("substochastic lattice")
}

pub fn seasonal_lattices(side: usize, seed: u64) -> [TransitionMatrix; 3] {
    [Season::Winter, Season::Summer, Season::SpringFall]
        .map(|s| lattice(side, MatrixLabel::Season(s), seed ^ s as u64))
}

/// Western column sticky with targets `1..=side`, north and south rows
/// leaky, middle column as candidate sources.
pub fn coastal_roles(side: usize) -> StateRoles {
    let leaky = (0..side).flat_map(|i| [state(side, i, 0), state(side, i, side - 1)]);
    let sticky = (0..side).map(|j| (state(side, 0, j), 0.9));
    let debris = (0..side).map(|j| (state(side, 0, j), j + 1));
    let sources = (0..side).map(|j| state(side, side / 2, j));
    StateRoles::new(side * side, leaky, sticky, debris, sources).expect("valid roles")
}

/// `count` pairs drawn from uniform starts on a lattice chain.
pub fn sample_pairs(p: &TransitionMatrix, count: usize, seed: u64) -> Vec<TransitionPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.n_states();
    (0..count)
        .map(|k| {
            let from = rng.random_range(0..n);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let to = p.matrix().row(from).find(|&(_, v)| {
                acc += v;
                u < acc
            });
            TransitionPair {
                drifter: k,
                from,
                to: to.map(|(t, _)| t),
                start_day: 0.0,
                season: Season::Winter,
            }
        })
        .collect()
}
