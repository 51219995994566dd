//! NT-Xent: normalized-temperature cross-entropy over positive pairs.
//!
//! A batch holds `2N` unit-norm embeddings where rows `2k` and `2k + 1` are
//! positives and every other row is a negative. For an ordered pair `(i, j)`,
//!
//! ```text
//! l(i, j) = -log( exp(s_ij / tau) / sum_{k != i} exp(s_ik / tau) )
//! ```
//!
//! with `s_ij = z_i . z_j`, and the batch loss averages `l(2k, 2k+1)` and
//! `l(2k+1, 2k)` over all `2N` ordered positives.

use crate::error::{Error, Result};
use crate::numcore::{matmul, Array, Tape, Var};

/// Rows further than this from unit norm are rejected.
pub const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    z: Array,
    temperature: f64,
}

impl EmbeddingBatch {
    pub fn new(z: Array, temperature: f64) -> Result<Self> {
        check_shape(&z)?;
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
        }
        let d = z.shape()[1];
        for (i, row) in z.data().chunks_exact(d).enumerate() {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Shape(format!("row {i} has norm {n}, expected 1")));
            }
        }
        Ok(EmbeddingBatch { z, temperature })
    }

    /// Number of positive pairs `N`.
    pub fn pairs(&self) -> usize {
        self.z.shape()[0] / 2
    }

    pub fn rows(&self) -> usize {
        self.z.shape()[0]
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn z(&self) -> &Array {
        &self.z
    }
}

fn check_shape(z: &Array) -> Result<()> {
    if z.rank() != 2 || z.shape()[0] < 2 || z.shape()[0] % 2 != 0 {
        return Err(Error::Shape(format!(
            "embedding batch must be [2N, d] with N >= 1, got {:?}",
            z.shape()
        )));
    }
    Ok(())
}

/// Positive partner of row `i`.
#[inline]
pub fn partner(i: usize) -> usize {
    i ^ 1
}

fn gram(z: &Array) -> Array {
    let (r, d) = (z.shape()[0], z.shape()[1]);
    let zt = {
        let mut t = vec![0.0; r * d];
        for i in 0..r {
            for k in 0..d {
                t[k * r + i] = z.data()[i * d + k];
            }
        }
        Array::new(vec![d, r], t).expect("transpose shape")
    };
    matmul(z, &zt).expect("gram shapes agree")
}

/// `S[i][j] = z_i . z_j`.
pub fn pairwise_sim(batch: &EmbeddingBatch) -> Array {
    gram(&batch.z)
}

/// `log sum_{k != i} exp(s_ik / tau)` with max subtraction.
fn row_lse(sim_row: &[f64], i: usize, tau: f64) -> f64 {
    let max = sim_row
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != i)
        .map(|(_, s)| s / tau)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = sim_row
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != i)
        .map(|(_, s)| (s / tau - max).exp())
        .sum();
    max + sum.ln()
}

pub fn ntxent_pair_loss(batch: &EmbeddingBatch, i: usize, j: usize) -> Result<f64> {
    let n = batch.rows();
    if i == j || i >= n || j >= n {
        return Err(Error::InvalidPair { i, j });
    }
    let d = batch.z.shape()[1];
    let zi = batch.z.row(i);
    let sim_row: Vec<f64> = (0..n)
        .map(|k| zi.iter().zip(batch.z.row(k)).map(|(a, b)| a * b).sum())
        .collect();
    debug_assert_eq!(zi.len(), d);
    let tau = batch.temperature;
    Ok((row_lse(&sim_row, i, tau) - sim_row[j] / tau).max(0.0))
}

/// Batch loss and its gradient with respect to `z`.
///
/// With `P` the row-wise softmax of `S / tau` over `k != i` and `Y` the
/// partner indicator, `dL/dS = (P - Y) / (2N tau)` and `dL/dz = (G + G^T) z`.
pub fn ntxent_loss_and_grad(z: &Array, temperature: f64) -> Result<(f64, Array)> {
    check_shape(z)?;
    let (n, d) = (z.shape()[0], z.shape()[1]);
    let s = gram(z);
    let scale = 1.0 / (n as f64 * temperature);
    let mut loss = 0.0;
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        let row = s.row(i);
        let lse = row_lse(row, i, temperature);
        loss += lse - row[partner(i)] / temperature;
        for k in 0..n {
            if k != i {
                g[i * n + k] = (row[k] / temperature - lse).exp() * scale;
            }
        }
        g[i * n + partner(i)] -= scale;
    }
    let mut sym = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            sym[i * n + k] = g[i * n + k] + g[k * n + i];
        }
    }
    let grad = matmul(&Array::new(vec![n, n], sym)?, z)?;
    debug_assert_eq!(grad.shape(), &[n, d]);
    Ok((loss / n as f64, grad))
}

pub fn ntxent_batch_loss(batch: &EmbeddingBatch) -> f64 {
    ntxent_loss_and_grad(&batch.z, batch.temperature)
        .expect("validated batch")
        .0
}

/// Record the batch loss on a tape so it differentiates into `z`.
pub fn ntxent_on(tape: &mut Tape, z: Var, temperature: f64) -> Result<Var> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
    }
    let (loss, grad) = ntxent_loss_and_grad(tape.value(z), temperature)?;
    Ok(tape.custom(
        &[z],
        Array::scalar(loss),
        Box::new(move |g: &Array| vec![grad.map(|v| v * g.item())]),
    ))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng as _;

    use super::*;
    use crate::numcore::gradcheck::{max_relative_error, numeric_grad, STEP};
    use crate::rng;

    /// Straight transcription of the pair loss and its aggregation, with no
    /// shared helpers and no stabilization.
    fn oracle_batch_loss(z: &[Vec<f64>], tau: f64) -> f64 {
        let dot = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let l = |i: usize, j: usize| {
            let num = (dot(&z[i], &z[j]) / tau).exp();
            let mut den = 0.0;
            for k in 0..z.len() {
                if k != i {
                    den += (dot(&z[i], &z[k]) / tau).exp();
                }
            }
            -(num / den).ln()
        };
        let n = z.len() / 2;
        let mut total = 0.0;
        for k in 0..n {
            total += l(2 * k, 2 * k + 1) + l(2 * k + 1, 2 * k);
        }
        total / (2 * n) as f64
    }

    fn unit_rows(rows: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng::seeded(seed);
        (0..rows)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect()
    }

    fn batch(rows: &[Vec<f64>], tau: f64) -> EmbeddingBatch {
        EmbeddingBatch::new(Array::from_rows(rows).unwrap(), tau).unwrap()
    }

    fn basis(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    #[test]
    fn pairwise_sim_examples() {
        let b = batch(&[basis(4, 0), basis(4, 1), basis(4, 2), basis(4, 3)], 1.0);
        assert_eq!(pairwise_sim(&b), Array::eye(4));

        let rows = unit_rows(6, 5, 3);
        let mut dup = rows.clone();
        dup[3] = dup[1].clone();
        let s = pairwise_sim(&batch(&dup, 0.5));
        assert!((s.data()[1 * 6 + 3] - 1.0).abs() < 1e-15);

        let s = pairwise_sim(&batch(&rows, 0.5));
        for i in 0..6 {
            for j in 0..6 {
                let mut naive = 0.0;
                for k in 0..5 {
                    naive += rows[i][k] * rows[j][k];
                }
                assert!((s.data()[i * 6 + j] - naive).abs() < 1e-12);
                assert_eq!(s.data()[i * 6 + j], s.data()[j * 6 + i]);
            }
            assert!((s.data()[i * 6 + i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_pair_has_zero_loss() {
        for seed in 0..5 {
            let b = batch(&unit_rows(2, 3, seed), 0.1);
            assert_eq!(ntxent_pair_loss(&b, 0, 1).unwrap(), 0.0);
            assert_eq!(ntxent_pair_loss(&b, 1, 0).unwrap(), 0.0);
            assert!(ntxent_batch_loss(&b).abs() < 1e-15);
        }
    }

    #[test]
    fn orthogonal_rows_give_ln3() {
        let b = batch(&[basis(4, 0), basis(4, 1), basis(4, 2), basis(4, 3)], 1.0);
        for (i, j) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
            assert!((ntxent_pair_loss(&b, i, j).unwrap() - 3f64.ln()).abs() < 1e-15);
        }
        assert!((ntxent_batch_loss(&b) - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn duplicated_pairs_oracle() {
        // z0 = z1 = u, z2 = z3 = v, u.v = 0, tau = 0.5
        let (u, v) = (basis(2, 0), basis(2, 1));
        let b = batch(&[u.clone(), u, v.clone(), v], 0.5);
        let rows: Vec<Vec<f64>> = (0..4).map(|i| b.z().row(i).to_vec()).collect();
        let tau = 0.5;
        let e = |x: f64| (x / tau).exp();
        let direct = -(e(1.0) / (e(1.0) + e(0.0) + e(0.0))).ln();
        assert!((direct - (1.0 + 2.0 * (-2f64).exp()).ln()).abs() < 1e-15);
        assert!((direct - 0.2395).abs() < 5e-5);
        assert!((ntxent_pair_loss(&b, 0, 1).unwrap() - direct).abs() < 1e-15);
        assert!((ntxent_batch_loss(&b) - oracle_batch_loss(&rows, tau)).abs() < 1e-15);
    }

    #[test]
    fn invalid_pairs_are_rejected() {
        let b = batch(&unit_rows(4, 3, 1), 0.5);
        assert!(matches!(ntxent_pair_loss(&b, 2, 2), Err(Error::InvalidPair { .. })));
        assert!(ntxent_pair_loss(&b, 0, 4).is_err());
        assert!(EmbeddingBatch::new(Array::full(&[2, 2], 1.0), 0.5).is_err());
        assert!(EmbeddingBatch::new(Array::from_rows(&unit_rows(3, 2, 1)).unwrap(), 0.5).is_err());
        assert!(EmbeddingBatch::new(Array::from_rows(&unit_rows(2, 2, 1)).unwrap(), 0.0).is_err());
    }

    #[test]
    fn batch_loss_matches_formula_oracle() {
        for seed in 0..30 {
            let n = 1 + seed as usize % 8;
            let d = 2 + seed as usize % 15;
            let tau = [0.1, 0.5, 1.0][seed as usize % 3];
            let rows = unit_rows(2 * n, d, seed);
            let b = batch(&rows, tau);
            let got = ntxent_batch_loss(&b);
            let expect = oracle_batch_loss(&rows, tau);
            assert!((got - expect).abs() < 1e-10, "seed {seed}: {got} vs {expect}");
            let by_pairs: f64 = (0..n)
                .map(|k| ntxent_pair_loss(&b, 2 * k, 2 * k + 1).unwrap() + ntxent_pair_loss(&b, 2 * k + 1, 2 * k).unwrap())
                .sum::<f64>()
                / (2 * n) as f64;
            assert!((got - by_pairs).abs() < 1e-12);
        }
    }

    #[test]
    fn small_temperature_stays_finite() {
        let b = batch(&unit_rows(8, 4, 11), 1e-3);
        assert!(ntxent_batch_loss(&b).is_finite());
        let (_, g) = ntxent_loss_and_grad(b.z(), 1e-3).unwrap();
        assert!(g.all_finite());
    }

    #[test]
    fn loss_vanishes_for_perfect_separation() {
        // positives identical, the two pairs antipodal
        let (u, v) = (vec![1.0, 0.0], vec![-1.0, 0.0]);
        let l = ntxent_batch_loss(&batch(&[u.clone(), u, v.clone(), v], 0.05));
        assert!(l >= 0.0 && l < 1e-15);
    }

    #[test]
    fn sharper_temperature_helps_separated_batches() {
        // every positive similarity exceeds every negative one
        let rows = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.8, 0.6, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.6, 0.8],
        ];
        let taus = [2.0, 1.0, 0.5, 0.2, 0.1];
        let losses: Vec<f64> = taus.iter().map(|&t| ntxent_batch_loss(&batch(&rows, t))).collect();
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..10 {
            let n = 1 + seed as usize % 5;
            let rows = unit_rows(2 * n, 6, 50 + seed);
            let z = Array::from_rows(&rows).unwrap();
            let tau = [0.2, 0.5, 1.0][seed as usize % 3];
            let (_, g) = ntxent_loss_and_grad(&z, tau).unwrap();
            let numeric = numeric_grad(
                |v| ntxent_loss_and_grad(&Array::new(z.shape().to_vec(), v.to_vec()).unwrap(), tau).unwrap().0,
                z.data(),
                STEP,
            );
            assert!(max_relative_error(g.data(), &numeric) < 1e-4);
        }
    }

    #[test]
    fn tape_op_scales_upstream_gradient() {
        let z = Array::from_rows(&unit_rows(6, 4, 9)).unwrap();
        let mut t = Tape::new();
        let zi = t.input(z.clone());
        let l = ntxent_on(&mut t, zi, 0.5).unwrap();
        let l2 = t.scale(l, 3.0);
        let g = t.backward(l2).unwrap();
        let (_, direct) = ntxent_loss_and_grad(&z, 0.5).unwrap();
        assert!(g.get(zi).unwrap().max_abs_diff(&direct.map(|v| 3.0 * v)) < 1e-15);
    }

    proptest! {
        #[test]
        fn loss_is_nonnegative_and_pair_order_invariant(seed in 0u64..1_000_000, n in 1usize..7, d in 2usize..10, perm_seed in 0u64..1000) {
            let rows = unit_rows(2 * n, d, seed);
            let b = batch(&rows, 0.5);
            let base = ntxent_batch_loss(&b);
            prop_assert!(base >= 0.0);

            let mut order: Vec<usize> = (0..n).collect();
            let mut r = rng::seeded(perm_seed);
            for i in (1..n).rev() {
                order.swap(i, r.random_range(0..=i));
            }
            let permuted: Vec<Vec<f64>> = order
                .iter()
                .flat_map(|&k| [rows[2 * k].clone(), rows[2 * k + 1].clone()])
                .collect();
            let moved = ntxent_batch_loss(&batch(&permuted, 0.5));
            prop_assert!((base - moved).abs() < 1e-12);
        }
    }
}
