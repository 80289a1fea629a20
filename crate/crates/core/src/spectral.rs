//! Dominant eigenpairs, basins of attraction, retention times and zonal
//! profiles.
//!
//! The dominant pair comes from plain power iteration on the left
//! (`p ← pP / ‖pP‖₁`) and on the right (`r ← Pr / max(Pr)`), both started
//! from constant vectors. Subdominant pairs come from block subspace
//! iteration on the Hotelling-deflated operators
//!
//! > `x ↦ Px − λ₁ r (p·x)/(p·r)` and `y ↦ yP − λ₁ p (y·r)/(p·r)`,
//!
//! whose spectra are that of `P` with `λ₁` replaced by zero. Ritz values
//! are taken from the projected block, so complex-conjugate pairs are
//! resolved; they are reported with their modulus and without vectors.

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::grid::GridCovering;
use crate::sparse::{MatrixError, SparseMatrix};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("restriction to the basin is identically zero")]
    ZeroRestriction,
    #[error("basin is closed (λ_B = {lambda_b}); retention time is infinite")]
    InfiniteRetention { lambda_b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Relative residual target `‖vP − λv‖₁ / (|λ| ‖v‖₁)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed for the random start block of the subdominant iteration.
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-10,
            max_iter: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: Complex<f64>,
    /// Left eigenvector; sums to 1 when non-negative, otherwise unit
    /// 1-norm with its largest entry positive. `None` for complex values.
    pub left: Option<Vec<f64>>,
    /// Right eigenvector scaled so its largest-magnitude entry is 1.
    pub right: Option<Vec<f64>>,
    pub left_residual: f64,
    pub right_residual: f64,
    pub converged: bool,
}

impl EigenPair {
    pub fn modulus(&self) -> f64 {
        self.value.norm()
    }

    pub fn is_complex(&self) -> bool {
        self.value.im != 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    /// Sorted by decreasing modulus; the first pair is the Perron pair.
    pub pairs: Vec<EigenPair>,
    pub iterations: usize,
}

impl EigenResult {
    pub fn dominant(&self) -> &EigenPair {
        &self.pairs[0]
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.pairs.iter().map(EigenPair::modulus).collect()
    }

    pub fn converged(&self) -> bool {
        self.pairs.iter().all(|p| p.converged)
    }
}

struct PowerOutcome {
    value: f64,
    vector: Vec<f64>,
    residual: f64,
    iterations: usize,
    converged: bool,
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn relative_residual(image: &[f64], value: f64, v: &[f64]) -> f64 {
    let diff: f64 = image.iter().zip(v).map(|(a, b)| (a - value * b).abs()).sum();
    let scale = value.abs() * l1(v);
    if scale > 0.0 {
        diff / scale
    } else {
        l1(image)
    }
}

fn power_left(p: &SparseMatrix, opts: &EigenOptions) -> Result<PowerOutcome, MatrixError> {
    let n = p.n_rows();
    let mut x = vec![1.0 / n as f64; n];
    let mut value = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let y = p.vec_mul(&x)?;
        let s: f64 = y.iter().sum();
        if s <= f64::MIN_POSITIVE {
            value = 0.0;
            converged = true;
            break;
        }
        let res = relative_residual(&y, s, &x);
        x = y.into_iter().map(|v| v / s).collect();
        value = s;
        if res <= opts.tol {
            converged = true;
            break;
        }
    }
    let image = p.vec_mul(&x)?;
    if value > 0.0 {
        value = image.iter().sum();
    }
    let residual = relative_residual(&image, value, &x);
    Ok(PowerOutcome {
        value,
        vector: x,
        residual,
        iterations,
        converged: converged && residual <= opts.tol.max(1e-14) * 10.0,
    })
}

fn power_right(p: &SparseMatrix, opts: &EigenOptions) -> Result<PowerOutcome, MatrixError> {
    let n = p.n_rows();
    let mut r = vec![1.0; n];
    let mut value = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let y = p.mul_vec(&r)?;
        let m = y.iter().copied().fold(0.0, f64::max);
        if m <= f64::MIN_POSITIVE {
            value = 0.0;
            converged = true;
            break;
        }
        let res = relative_residual(&y, m, &r);
        r = y.into_iter().map(|v| v / m).collect();
        value = m;
        if res <= opts.tol {
            converged = true;
            break;
        }
    }
    let image = p.mul_vec(&r)?;
    if value > 0.0 {
        value = image.iter().copied().fold(0.0, f64::max);
    }
    let residual = relative_residual(&image, value, &r);
    Ok(PowerOutcome {
        value,
        vector: r,
        residual,
        iterations,
        converged: converged && residual <= opts.tol.max(1e-14) * 10.0,
    })
}

struct RitzPair {
    value: Complex<f64>,
    vector: Option<Vec<f64>>,
    residual: f64,
}

struct SubspaceOutcome {
    pairs: Vec<RitzPair>,
    iterations: usize,
    converged: bool,
}

fn sort_by_modulus(vals: &mut [Complex<f64>]) {
    vals.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
}

fn apply_block(apply: &dyn Fn(&[f64]) -> Vec<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(v.nrows(), v.ncols());
    for c in 0..v.ncols() {
        let col: Vec<f64> = v.column(c).iter().copied().collect();
        let img = apply(&col);
        w.column_mut(c).copy_from_slice(&img);
    }
    w
}

/// Leading `want` eigenvalues of `apply` by orthogonal subspace iteration
/// with Rayleigh–Ritz extraction. `scale` sets the absolute size used for
/// convergence and realness checks.
fn subspace_iteration(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    n: usize,
    want: usize,
    scale: f64,
    opts: &EigenOptions,
) -> SubspaceOutcome {
    let block = n.min(want + 3);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start = DMatrix::from_fn(n, block, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let mut v = start.qr().q();
    let scale = scale.max(f64::MIN_POSITIVE);
    let mut previous: Option<Vec<Complex<f64>>> = None;
    let mut iterations = 0;
    let mut converged = false;
    let (h, basis) = loop {
        iterations += 1;
        let w = apply_block(apply, &v);
        let h = v.transpose() * &w;
        let mut vals: Vec<Complex<f64>> = h.complex_eigenvalues().iter().copied().collect();
        sort_by_modulus(&mut vals);
        if let Some(prev) = &previous {
            let settled = vals
                .iter()
                .zip(prev)
                .take(want)
                .all(|(a, b)| (a - b).norm() <= opts.tol * scale);
            if settled {
                converged = true;
                break (h, v);
            }
        }
        if iterations >= opts.max_iter {
            break (h, v);
        }
        previous = Some(vals);
        v = w.qr().q();
    };

    let mut vals: Vec<Complex<f64>> = h.complex_eigenvalues().iter().copied().collect();
    sort_by_modulus(&mut vals);
    let pairs = vals
        .into_iter()
        .take(want)
        .map(|value| {
            if value.im.abs() > 1e-9 * scale.max(value.norm()) {
                return RitzPair {
                    value,
                    vector: None,
                    residual: f64::NAN,
                };
            }
            let mu = value.re;
            let shifted = &h - DMatrix::identity(h.nrows(), h.ncols()) * mu;
            let svd = shifted.svd(false, true);
            let vt = svd.v_t.expect("requested right singular vectors");
            let k = svd
                .singular_values
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| k)
                .expect("non-empty block");
            let y = vt.row(k).transpose();
            let x: Vec<f64> = (&basis * y).iter().copied().collect();
            let image = apply(&x);
            let residual = if mu.abs() > 1e-12 * scale {
                relative_residual(&image, mu, &x)
            } else {
                l1(&image) / l1(&x).max(f64::MIN_POSITIVE)
            };
            RitzPair {
                value: Complex::new(mu, 0.0),
                vector: Some(x),
                residual,
            }
        })
        .collect();
    SubspaceOutcome {
        pairs,
        iterations,
        converged,
    }
}

fn normalize_left(mut v: Vec<f64>) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    if sum < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let norm = l1(&v);
    if norm == 0.0 {
        return v;
    }
    let nonneg = v.iter().all(|&x| x >= -1e-12 * norm);
    if nonneg {
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        let big = v
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        let scale = norm * big.signum();
        v.iter_mut().for_each(|x| *x /= scale);
    }
    v
}

fn normalize_right(mut v: Vec<f64>) -> Vec<f64> {
    let big = v
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    if big != 0.0 {
        v.iter_mut().for_each(|x| *x /= big);
    }
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Leading `k` eigenpairs (left and right) of a square non-negative matrix.
/// Non-convergence is reported through [`EigenPair::converged`].
pub fn dominant_eigs(
    p: &SparseMatrix,
    k: usize,
    opts: &EigenOptions,
) -> Result<EigenResult, SpectralError> {
    if k == 0 {
        return Err(SpectralError::InvalidArgument("k must be at least 1".into()));
    }
    if !p.is_square() || p.n_rows() == 0 {
        return Err(MatrixError::Dimension(format!(
            "eigenproblem on a {}x{} matrix",
            p.n_rows(),
            p.n_cols()
        ))
        .into());
    }
    let n = p.n_rows();
    let left = power_left(p, opts)?;
    let right = power_right(p, opts)?;
    let lambda = left.value;
    let mut iterations = left.iterations.max(right.iterations);
    let mut pairs = vec![EigenPair {
        value: Complex::new(lambda, 0.0),
        left: Some(left.vector.clone()),
        right: Some(right.vector.clone()),
        left_residual: left.residual,
        right_residual: right.residual,
        converged: left.converged && right.converged,
    }];

    let want = (k - 1).min(n - 1);
    let pr = dot(&left.vector, &right.vector);
    if want > 0 && lambda > 0.0 && pr > 0.0 {
        let (pv, rv) = (&left.vector, &right.vector);
        let apply_right = |x: &[f64]| -> Vec<f64> {
            let c = lambda * dot(pv, x) / pr;
            let mut y = p.mul_vec(x).expect("square");
            y.iter_mut().zip(rv).for_each(|(yi, ri)| *yi -= c * ri);
            y
        };
        let apply_left = |x: &[f64]| -> Vec<f64> {
            let c = lambda * dot(x, rv) / pr;
            let mut y = p.vec_mul(x).expect("square");
            y.iter_mut().zip(pv).for_each(|(yi, pi)| *yi -= c * pi);
            y
        };
        let r_out = subspace_iteration(&apply_right, n, want, lambda, opts);
        let l_out = subspace_iteration(&apply_left, n, want, lambda, opts);
        iterations = iterations.max(r_out.iterations).max(l_out.iterations);
        let mut used = vec![false; l_out.pairs.len()];
        for rp in r_out.pairs {
            let matched = if rp.vector.is_some() {
                l_out
                    .pairs
                    .iter()
                    .enumerate()
                    .filter(|(i, lp)| !used[*i] && lp.vector.is_some())
                    .min_by(|a, b| {
                        (a.1.value - rp.value)
                            .norm()
                            .total_cmp(&(b.1.value - rp.value).norm())
                    })
                    .filter(|(_, lp)| (lp.value - rp.value).norm() <= 1e-6 * lambda)
                    .map(|(i, _)| i)
            } else {
                None
            };
            let (left_vec, left_residual) = match matched {
                Some(i) => {
                    used[i] = true;
                    let lp = &l_out.pairs[i];
                    (lp.vector.clone().map(normalize_left), lp.residual)
                }
                None => (None, f64::NAN),
            };
            // Perron–Frobenius bounds every modulus by λ₁; clip round-off.
            let value = if rp.value.norm() > lambda && rp.value.norm() <= lambda * (1.0 + 1e-12) {
                rp.value * (lambda / rp.value.norm())
            } else {
                rp.value
            };
            pairs.push(EigenPair {
                value,
                left: left_vec,
                right: rp.vector.map(normalize_right),
                left_residual,
                right_residual: rp.residual,
                converged: r_out.converged && l_out.converged,
            });
        }
    } else if want > 0 {
        // λ₁ = 0: the matrix is nilpotent on every non-negative direction.
        for _ in 0..want {
            pairs.push(EigenPair {
                value: Complex::new(0.0, 0.0),
                left: None,
                right: None,
                left_residual: f64::NAN,
                right_residual: f64::NAN,
                converged: true,
            });
        }
    }
    Ok(EigenResult { pairs, iterations })
}

/// States where the right eigenvector exceeds `threshold`.
pub fn basin_of_attraction(right: &[f64], threshold: f64) -> Vec<usize> {
    right
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > threshold)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Retention {
    /// Dominant eigenvalue of the matrix restricted to the basin.
    pub lambda_b: f64,
    /// Expected residence time `T / (1 − λ_B)` in the units of `T`.
    pub time: f64,
}

/// Expected retention time in `basin` for a matrix with lag `lag`.
pub fn retention_time(
    p: &SparseMatrix,
    basin: &[usize],
    lag: f64,
    opts: &EigenOptions,
) -> Result<Retention, SpectralError> {
    if basin.is_empty() {
        return Err(SpectralError::InvalidArgument("empty basin".into()));
    }
    if let Some(&s) = basin.iter().find(|&&s| s >= p.n_rows()) {
        return Err(SpectralError::InvalidArgument(format!("basin state {s} out of range")));
    }
    let sub = p.principal_submatrix(basin);
    if sub.nnz() == 0 {
        return Err(SpectralError::ZeroRestriction);
    }
    let lambda_b = dominant_eigs(&sub, 1, opts)?.dominant().value.re;
    retention_from_eigenvalue(lambda_b, lag)
}

/// `T / (1 − λ_B)`, or [`SpectralError::InfiniteRetention`] when `λ_B ≥ 1`.
pub fn retention_from_eigenvalue(lambda_b: f64, lag: f64) -> Result<Retention, SpectralError> {
    if lambda_b >= 1.0 - 1e-12 {
        return Err(SpectralError::InfiniteRetention { lambda_b });
    }
    Ok(Retention {
        lambda_b,
        time: lag / (1.0 - lambda_b),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasinResult {
    pub members: Vec<usize>,
    pub threshold: f64,
    pub retention: Result<Retention, f64>,
}

/// Basin `{r > threshold}` and its retention time. A closed basin reports
/// its eigenvalue in `Err`.
pub fn basin_analysis(
    p: &SparseMatrix,
    right: &[f64],
    threshold: f64,
    lag: f64,
    opts: &EigenOptions,
) -> Result<BasinResult, SpectralError> {
    let members = basin_of_attraction(right, threshold);
    let retention = match retention_time(p, &members, lag, opts) {
        Ok(r) => Ok(r),
        Err(SpectralError::InfiniteRetention { lambda_b }) => Err(lambda_b),
        Err(e) => return Err(e),
    };
    Ok(BasinResult {
        members,
        threshold,
        retention,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZonalRow {
    pub lat: f64,
    pub mean: f64,
    /// Meridional derivative per degree.
    pub deriv: f64,
}

/// Mean of `v` over the active boxes of each latitude row, with centered
/// differences along latitude (one-sided at the ends).
pub fn zonal_profile(v: &[f64], grid: &GridCovering) -> Result<Vec<ZonalRow>, SpectralError> {
    if v.len() != grid.n_states() {
        return Err(MatrixError::Dimension(format!(
            "vector of length {} on {} states",
            v.len(),
            grid.n_states()
        ))
        .into());
    }
    let mut sums = vec![0.0; grid.n_lat()];
    let mut counts = vec![0usize; grid.n_lat()];
    for (s, id) in grid.active_boxes().iter().enumerate() {
        sums[id.lat as usize] += v[s];
        counts[id.lat as usize] += 1;
    }
    let rows: Vec<(f64, f64)> = (0..grid.n_lat())
        .filter(|&j| counts[j] > 0)
        .map(|j| (grid.row_latitude(j), sums[j] / counts[j] as f64))
        .collect();
    let m = rows.len();
    Ok((0..m)
        .map(|j| {
            let (lo, hi) = match (j, m) {
                (_, 1) => (j, j),
                (0, _) => (0, 1),
                (j, m) if j == m - 1 => (j - 1, j),
                (j, _) => (j - 1, j + 1),
            };
            let deriv = if lo == hi {
                0.0
            } else {
                (rows[hi].1 - rows[lo].1) / (rows[hi].0 - rows[lo].0)
            };
            ZonalRow {
                lat: rows[j].0,
                mean: rows[j].1,
                deriv,
            }
        })
        .collect())
}

/// GeoJSON `MultiPolygon` feature with one square per basin box.
pub fn basin_geojson(grid: &GridCovering, members: &[usize]) -> Value {
    let d = grid.cell_size();
    let polygons: Vec<Value> = members
        .iter()
        .map(|&s| {
            let (lon, lat) = grid.box_corner(grid.box_of_state(s));
            json!([[
                [lon, lat],
                [lon + d, lat],
                [lon + d, lat + d],
                [lon, lat + d],
                [lon, lat]
            ]])
        })
        .collect();
    json!({
        "type": "FeatureCollection",
        "features": [{
            "type": "Feature",
            "properties": { "kind": "basin", "boxes": members.len() },
            "geometry": { "type": "MultiPolygon", "coordinates": polygons }
        }]
    })
}
