//! Kernel independence measures.
//!
//! For paired samples `(a_i, b_i)`, `i = 1..n`, with Gaussian RBF Gram
//! matrices `K_ij = k(a_i, a_j)`, `L_ij = l(b_i, b_j)` and the centering
//! matrix `H = I - 11ᵀ/n`, the biased HSIC estimator is
//!
//! ```text
//! HSIC = tr(K H L H) / (n - 1)²
//! ```
//!
//! It is zero when `a` and `b` are independent (in the population limit,
//! for characteristic kernels) and grows with dependence of any form, not only
//! linear correlation. The population quantity is the squared Hilbert-Schmidt
//! norm of the cross-covariance operator between the two kernel feature
//! spaces; only the empirical estimator is computed here.
//!
//! Three evaluation routes exist and agree to rounding:
//!
//! * [`hsic_biased`] groups identical samples and works on the contingency
//!   table of group pairs, so label-valued inputs with thousands of rows stay
//!   cheap. Permutation tests reuse this path.
//! * [`hsic_biased_centered`] materializes `HKH` and `HLH` and uses
//!   `tr((HKH)(HLH))`, which equals the above because `H` is idempotent.
//! * [`hsic_with_gradient`] materializes `K` and `HLH` and also returns the
//!   gradient with respect to every sample coordinate.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{Error, Result};

/// `n` samples of dimension `dim`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    n: usize,
    dim: usize,
    values: Vec<f64>,
}

impl Samples {
    pub fn from_flat(n: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || n * dim != values.len() {
            return Err(Error::Shape(format!(
                "{} values cannot form {n} samples of dimension {dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample values".into()));
        }
        Ok(Samples { n, dim, values })
    }

    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_flat(values.len(), 1, values.to_vec())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Shape(format!(
                "sample dimension mismatch: {} vs {dim}",
                bad.len()
            )));
        }
        Self::from_flat(rows.len(), dim, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn sq_dist(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    }
}

/// How a kernel bandwidth is chosen for one side of an HSIC evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    /// [`median_bandwidth`] of the samples it is applied to.
    Median,
    Fixed(f64),
}

impl Bandwidth {
    pub fn resolve(self, samples: &Samples) -> Result<f64> {
        match self {
            Bandwidth::Median => median_bandwidth(samples),
            Bandwidth::Fixed(s) => {
                check_sigma(s)?;
                Ok(s)
            }
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("kernel bandwidth must be positive, got {sigma}")))
    }
}

#[inline]
fn rbf(sq_dist: f64, sigma: f64) -> f64 {
    (-sq_dist / (2.0 * sigma * sigma)).exp()
}

/// Identical samples collapsed into groups.
struct Groups {
    /// Index of one representative sample per group.
    reps: Vec<usize>,
    counts: Vec<u64>,
    /// Group of each sample.
    assign: Vec<usize>,
}

impl Groups {
    fn of(s: &Samples) -> Self {
        let mut order: Vec<usize> = (0..s.n).collect();
        let cmp = |&i: &usize, &j: &usize| {
            s.row(i)
                .iter()
                .zip(s.row(j))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        };
        order.sort_by(cmp);
        let mut reps = Vec::new();
        let mut counts: Vec<u64> = Vec::new();
        let mut assign = vec![0; s.n];
        for (k, &i) in order.iter().enumerate() {
            if k == 0 || cmp(&order[k - 1], &i).is_ne() {
                reps.push(i);
                counts.push(0);
            }
            *counts.last_mut().expect("pushed above") += 1;
            assign[i] = reps.len() - 1;
        }
        Groups { reps, counts, assign }
    }

    fn len(&self) -> usize {
        self.reps.len()
    }

    /// Group-level Gram matrix, row-major `len × len`.
    fn gram(&self, s: &Samples, sigma: f64) -> Vec<f64> {
        let g = self.len();
        let mut k = vec![0.0; g * g];
        for u in 0..g {
            k[u * g + u] = 1.0;
            for v in u + 1..g {
                let val = rbf(s.sq_dist(self.reps[u], self.reps[v]), sigma);
                k[u * g + v] = val;
                k[v * g + u] = val;
            }
        }
        k
    }

    /// Row means of the full Gram matrix, indexed by group.
    fn row_means(&self, gram: &[f64], n: usize) -> Vec<f64> {
        let g = self.len();
        (0..g)
            .map(|u| {
                (0..g)
                    .map(|v| self.counts[v] as f64 * gram[u * g + v])
                    .sum::<f64>()
                    / n as f64
            })
            .collect()
    }
}

/// Median Euclidean distance over all unordered pairs of distinct indices,
/// or 1.0 when that median is zero. Even pair counts average the two middle
/// distances.
pub fn median_bandwidth(samples: &Samples) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("median bandwidth needs n >= 2, got {n}")));
    }
    let groups = Groups::of(samples);
    let mut weighted: Vec<(f64, u64)> = Vec::new();
    let within: u64 = groups.counts.iter().map(|&c| c * (c - 1) / 2).sum();
    if within > 0 {
        weighted.push((0.0, within));
    }
    for u in 0..groups.len() {
        for v in u + 1..groups.len() {
            let d = samples.sq_dist(groups.reps[u], groups.reps[v]).sqrt();
            weighted.push((d, groups.counts[u] * groups.counts[v]));
        }
    }
    weighted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let pairs = (n as u64) * (n as u64 - 1) / 2;
    let at_rank = |rank: u64| -> f64 {
        let mut seen = 0;
        for &(d, w) in &weighted {
            seen += w;
            if rank < seen {
                return d;
            }
        }
        unreachable!("rank {rank} beyond {pairs} pairs")
    };
    let median = if pairs % 2 == 1 {
        at_rank(pairs / 2)
    } else {
        0.5 * (at_rank(pairs / 2 - 1) + at_rank(pairs / 2))
    };
    Ok(if median > 0.0 { median } else { 1.0 })
}

/// Gaussian RBF Gram matrix with its bandwidth.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    n: usize,
    sigma: f64,
    values: Vec<f64>,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> f64 {
        self.sigma
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Row-major `n × n` entries.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `K_ij = exp(-‖a_i - a_j‖² / (2σ²))`.
pub fn rbf_gram(samples: &Samples, sigma: f64) -> Result<GramMatrix> {
    check_sigma(sigma)?;
    let n = samples.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in i + 1..n {
            let v = rbf(samples.sq_dist(i, j), sigma);
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(GramMatrix { n, sigma, values })
}

/// Biased HSIC estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HsicResult {
    /// Estimate clamped at zero.
    pub value: f64,
    /// Unclamped estimate; may be a rounding-level negative number.
    pub raw: f64,
    pub n: usize,
    pub sigma_a: f64,
    pub sigma_b: f64,
}

impl HsicResult {
    fn new(raw: f64, n: usize, sigma_a: f64, sigma_b: f64) -> Self {
        HsicResult {
            value: raw.max(0.0),
            raw,
            n,
            sigma_a,
            sigma_b,
        }
    }
}

fn check_pair(a: &Samples, b: &Samples) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "HSIC sample counts differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument(format!("HSIC needs n >= 2, got {}", a.len())));
    }
    Ok(a.len())
}

/// Precomputed group structure for repeated HSIC evaluations on the same
/// marginals (observed statistic plus permutations).
struct GroupedPair {
    n: usize,
    ga: Groups,
    gb: Groups,
    k: Vec<f64>,
    l: Vec<f64>,
    row_k: Vec<f64>,
    row_l: Vec<f64>,
    mean_k: f64,
    mean_l: f64,
}

impl GroupedPair {
    fn new(a: &Samples, b: &Samples, sigma_a: f64, sigma_b: f64) -> Self {
        let n = a.len();
        let ga = Groups::of(a);
        let gb = Groups::of(b);
        let k = ga.gram(a, sigma_a);
        let l = gb.gram(b, sigma_b);
        let row_k = ga.row_means(&k, n);
        let row_l = gb.row_means(&l, n);
        let mean = |g: &Groups, rows: &[f64]| {
            g.counts.iter().zip(rows).map(|(&c, &r)| c as f64 * r).sum::<f64>() / n as f64
        };
        let mean_k = mean(&ga, &row_k);
        let mean_l = mean(&gb, &row_l);
        GroupedPair {
            n,
            ga,
            gb,
            k,
            l,
            row_k,
            row_l,
            mean_k,
            mean_l,
        }
    }

    /// Raw estimate when sample `i` is paired with b-sample `b_index(i)`.
    fn raw(&self, b_index: impl Fn(usize) -> usize) -> f64 {
        let (na, nb) = (self.ga.len(), self.gb.len());
        if na == 1 || nb == 1 {
            // an all-ones Gram matrix is annihilated by centering
            return 0.0;
        }
        let mut keys: Vec<usize> = (0..self.n)
            .map(|i| self.ga.assign[i] * nb + self.gb.assign[b_index(i)])
            .collect();
        keys.sort_unstable();
        let mut cells: Vec<(usize, usize, f64)> = Vec::new();
        for key in keys {
            match cells.last_mut() {
                Some(last) if last.0 * nb + last.1 == key => last.2 += 1.0,
                _ => cells.push((key / nb, key % nb, 1.0)),
            }
        }
        let mut cross = 0.0;
        for &(u, v, c) in &cells {
            let mut inner = 0.0;
            for &(u2, v2, c2) in &cells {
                inner += c2 * self.k[u * na + u2] * self.l[v * nb + v2];
            }
            cross += c * inner;
        }
        let row_dot: f64 = cells
            .iter()
            .map(|&(u, v, c)| c * self.row_k[u] * self.row_l[v])
            .sum();
        let n = self.n as f64;
        let trace = cross - 2.0 * n * row_dot + n * n * self.mean_k * self.mean_l;
        trace / ((n - 1.0) * (n - 1.0))
    }
}

/// `tr(K H L H) / (n - 1)²`, evaluated over groups of identical samples.
pub fn hsic_biased(a: &Samples, b: &Samples, sigma_a: f64, sigma_b: f64) -> Result<HsicResult> {
    let n = check_pair(a, b)?;
    check_sigma(sigma_a)?;
    check_sigma(sigma_b)?;
    let raw = GroupedPair::new(a, b, sigma_a, sigma_b).raw(|i| i);
    Ok(HsicResult::new(raw, n, sigma_a, sigma_b))
}

/// HSIC with median-heuristic bandwidths on both sides.
pub fn hsic_median(a: &Samples, b: &Samples) -> Result<HsicResult> {
    check_pair(a, b)?;
    hsic_biased(a, b, median_bandwidth(a)?, median_bandwidth(b)?)
}

fn is_constant(s: &Samples) -> bool {
    (1..s.len()).all(|i| s.row(i) == s.row(0))
}

/// Centers a symmetric `n × n` matrix: `H M H`.
fn center(m: &[f64], n: usize) -> Vec<f64> {
    let rows: Vec<f64> = (0..n).map(|i| m[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let total = rows.iter().sum::<f64>() / n as f64;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = m[i * n + j] - rows[i] - rows[j] + total;
        }
    }
    out
}

/// Raw `tr((HKH)(HLH)) / (n - 1)²` from materialized centered Gram matrices.
pub fn hsic_biased_centered(a: &Samples, b: &Samples, sigma_a: f64, sigma_b: f64) -> Result<f64> {
    let n = check_pair(a, b)?;
    let kc = center(rbf_gram(a, sigma_a)?.values(), n);
    let lc = center(rbf_gram(b, sigma_b)?.values(), n);
    let trace: f64 = kc.iter().zip(&lc).map(|(x, y)| x * y).sum();
    Ok(trace / ((n - 1) as f64).powi(2))
}

/// Gradient of the raw HSIC estimate with respect to each sample coordinate,
/// laid out like the sample values.
#[derive(Clone, Debug, PartialEq)]
pub struct HsicGradient {
    pub wrt_a: Vec<f64>,
    pub wrt_b: Vec<f64>,
}

/// HSIC and its gradient, bandwidths held fixed.
///
/// With `c = (n-1)^-2`, `HSIC = c Σ_ij K_ij (HLH)_ij`, and
/// `∂K_ij/∂a_i = K_ij (a_j - a_i) / σ²`, so
/// `∂HSIC/∂a_i = (2c/σ_a²) Σ_j (HLH)_ij K_ij (a_j - a_i)`; symmetric for `b`.
pub fn hsic_with_gradient(
    a: &Samples,
    b: &Samples,
    sigma_a: f64,
    sigma_b: f64,
) -> Result<(HsicResult, HsicGradient)> {
    let n = check_pair(a, b)?;
    let k = rbf_gram(a, sigma_a)?;
    let l = rbf_gram(b, sigma_b)?;
    let kc = center(k.values(), n);
    let lc = center(l.values(), n);
    let c = 1.0 / ((n - 1) as f64).powi(2);
    let raw = if is_constant(a) || is_constant(b) {
        0.0
    } else {
        c * k.values().iter().zip(&lc).map(|(x, y)| x * y).sum::<f64>()
    };

    let side = |s: &Samples, gram: &GramMatrix, other_centered: &[f64], sigma: f64| -> Vec<f64> {
        let d = s.dim();
        let scale = 2.0 * c / (sigma * sigma);
        let mut g = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = scale * other_centered[i * n + j] * gram.get(i, j);
                for (q, (&xj, &xi)) in s.row(j).iter().zip(s.row(i)).enumerate() {
                    g[i * d + q] += w * (xj - xi);
                }
            }
        }
        g
    };
    let grad = HsicGradient {
        wrt_a: side(a, &k, &lc, sigma_a),
        wrt_b: side(b, &l, &kc, sigma_b),
    };
    Ok((HsicResult::new(raw, n, sigma_a, sigma_b), grad))
}

/// Permutation test summary.
#[derive(Clone, Debug, PartialEq)]
pub struct PermutationTest {
    pub observed: f64,
    pub p_value: f64,
    pub percentile_95: f64,
    pub percentile_99: f64,
    /// HSIC of each permutation replica, in replica order.
    pub null: Vec<f64>,
}

/// Permutation test of independence using median-heuristic bandwidths.
///
/// Replica `r` shuffles `b` with a ChaCha8 generator seeded by `seed + r`;
/// `p = (1 + #{null >= observed}) / (1 + permutations)`.
pub fn permutation_test(a: &Samples, b: &Samples, permutations: usize, seed: u64) -> Result<PermutationTest> {
    let n = check_pair(a, b)?;
    if permutations < 100 {
        return Err(Error::InvalidArgument(format!(
            "permutation test needs at least 100 permutations, got {permutations}"
        )));
    }
    let pair = GroupedPair::new(a, b, median_bandwidth(a)?, median_bandwidth(b)?);
    let observed = pair.raw(|i| i).max(0.0);
    let null: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            pair.raw(|i| perm[i]).max(0.0)
        })
        .collect();
    let exceed = null.iter().filter(|&&v| v >= observed).count();
    let mut sorted = null.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(PermutationTest {
        observed,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
        percentile_95: percentile(&sorted, 0.95),
        percentile_99: percentile(&sorted, 0.99),
        null,
    })
}

/// Linear-interpolation percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn scalars(v: &[f64]) -> Samples {
        Samples::from_scalars(v).unwrap()
    }

    /// Explicit `H`, triple products and trace; the reference every fast path
    /// is compared with.
    fn dense_oracle(a: &Samples, b: &Samples, sa: f64, sb: f64) -> f64 {
        let n = a.len();
        let k = rbf_gram(a, sa).unwrap();
        let l = rbf_gram(b, sb).unwrap();
        let h: Vec<f64> = (0..n * n)
            .map(|idx| if idx / n == idx % n { 1.0 } else { 0.0 } - 1.0 / n as f64)
            .collect();
        let mul = |x: &[f64], y: &[f64]| {
            let mut out = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    out[i * n + j] = (0..n).map(|q| x[i * n + q] * y[q * n + j]).sum();
                }
            }
            out
        };
        let khlh = mul(&mul(&mul(k.values(), &h), l.values()), &h);
        (0..n).map(|i| khlh[i * n + i]).sum::<f64>() / ((n - 1) as f64).powi(2)
    }

    fn random_scalars(rng: &mut ChaCha8Rng, n: usize) -> Samples {
        scalars(&(0..n).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>())
    }

    #[test]
    fn median_examples() {
        assert_eq!(median_bandwidth(&scalars(&[0.0, 1.0, 3.0])).unwrap(), 2.0);
        assert_eq!(median_bandwidth(&scalars(&[4.0, 4.0, 4.0])).unwrap(), 1.0);
        let base = [0.3, -1.2, 2.5, 0.9, 4.0];
        let scaled: Vec<f64> = base.iter().map(|v| v * 3.5).collect();
        let s1 = median_bandwidth(&scalars(&base)).unwrap();
        let s2 = median_bandwidth(&scalars(&scaled)).unwrap();
        assert!((s2 - 3.5 * s1).abs() < 1e-12);
        assert!(median_bandwidth(&scalars(&[1.0])).is_err());
    }

    #[test]
    fn median_matches_pair_enumeration_with_repeats() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(2..12);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0..3) as f64).collect();
            let mut d = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    d.push((v[i] - v[j]).abs());
                }
            }
            d.sort_by(f64::total_cmp);
            let m = d.len();
            let med = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
            let expected = if med > 0.0 { med } else { 1.0 };
            assert_eq!(median_bandwidth(&scalars(&v)).unwrap(), expected);
        }
    }

    #[test]
    fn gram_examples() {
        let g = rbf_gram(&scalars(&[2.0, 2.0, 2.0]), 0.7).unwrap();
        assert!(g.values().iter().all(|&v| v == 1.0));
        let g = rbf_gram(&scalars(&[0.0, 1.0]), 1.0).unwrap();
        assert!((g.get(0, 1) - 0.606531).abs() < 1e-6);
        let g = rbf_gram(&scalars(&[0.0, 1.0, -3.0]), 1e6).unwrap();
        assert!(g.values().iter().all(|&v| (v - 1.0).abs() < 1e-6));
        assert!(rbf_gram(&scalars(&[0.0, 1.0]), 0.0).is_err());
        assert!(Samples::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn constant_input_gives_exact_zero() {
        let a = scalars(&[0.5; 6]);
        let b = scalars(&[0.1, 0.9, -0.4, 2.0, 1.0, 0.0]);
        assert_eq!(hsic_biased(&a, &b, 1.0, 0.8).unwrap().value, 0.0);
        let (_, g) = hsic_with_gradient(&a, &b, 1.0, 0.8).unwrap();
        assert!(g.wrt_b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_sample_closed_form() {
        let r = hsic_biased(&scalars(&[0.0, 1.0]), &scalars(&[0.0, 1.0]), 1.0, 1.0).unwrap();
        let k = (-0.5f64).exp();
        assert!((r.value - (1.0 - k).powi(2)).abs() < 1e-12);
        assert!((r.value - 0.154818).abs() < 1e-6);
    }

    #[test]
    fn zero_covariance_dependent_pair() {
        let a = scalars(&[-2.0, -1.0, 0.0, 1.0, 2.0]);
        let b = scalars(&[4.0, 1.0, 0.0, 1.0, 4.0]);
        let cov: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * (y - 2.0)).sum();
        assert_eq!(cov, 0.0);
        let t = permutation_test(&a, &b, 1000, 7).unwrap();
        assert!(t.observed > 0.0);
        // Oracle value from an independent dense evaluation (σ_a = 2, σ_b = 3).
        assert!((t.observed - 0.019290216384821864).abs() < 1e-12);
    }

    #[test]
    fn routes_agree_with_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.random_range(2..=8);
            let a = random_scalars(&mut rng, n);
            let b = random_scalars(&mut rng, n);
            let (sa, sb) = (rng.random_range(0.2..2.0), rng.random_range(0.2..2.0));
            let oracle = dense_oracle(&a, &b, sa, sb);
            let grouped = hsic_biased(&a, &b, sa, sb).unwrap().raw;
            let centered = hsic_biased_centered(&a, &b, sa, sb).unwrap();
            let (with_grad, _) = hsic_with_gradient(&a, &b, sa, sb).unwrap();
            assert!((grouped - oracle).abs() < 1e-12);
            assert!((centered - oracle).abs() < 1e-12);
            assert!((with_grad.raw - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn grouped_path_handles_repeated_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(2..=8);
            let a = scalars(&(0..n).map(|_| rng.random_range(0..2) as f64).collect::<Vec<_>>());
            let b = scalars(&(0..n).map(|_| rng.random_range(0..3) as f64).collect::<Vec<_>>());
            let oracle = dense_oracle(&a, &b, 0.9, 1.3);
            assert!((hsic_biased(&a, &b, 0.9, 1.3).unwrap().raw - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn multivariate_samples() {
        let a = Samples::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.5], vec![2.0, -1.0], vec![0.5, 0.5]]).unwrap();
        let b = Samples::from_rows(&[vec![1.0], vec![0.0], vec![2.0], vec![1.5]]).unwrap();
        let oracle = dense_oracle(&a, &b, 1.1, 0.7);
        assert!((hsic_biased(&a, &b, 1.1, 0.7).unwrap().raw - oracle).abs() < 1e-12);
    }

    #[test]
    fn gradient_symmetry_for_identical_inputs() {
        let a = scalars(&[0.1, 0.7, -0.3, 1.2, 0.4]);
        let (_, g) = hsic_with_gradient(&a, &a, 0.6, 0.6).unwrap();
        for (x, y) in g.wrt_a.iter().zip(&g.wrt_b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 16;
        let av: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let bv: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let (sa, sb) = (0.4, 0.3);
        let (_, g) = hsic_with_gradient(&scalars(&av), &scalars(&bv), sa, sb).unwrap();
        let eps = 1e-4;
        let f = |a: &[f64], b: &[f64]| hsic_biased(&scalars(a), &scalars(b), sa, sb).unwrap().raw;
        for i in 0..n {
            let (mut p, mut m) = (av.clone(), av.clone());
            p[i] += eps;
            m[i] -= eps;
            let fd = (f(&p, &bv) - f(&m, &bv)) / (2.0 * eps);
            assert!((fd - g.wrt_a[i]).abs() / g.wrt_a[i].abs().max(1.0) < 1e-4);
            let (mut p, mut m) = (bv.clone(), bv.clone());
            p[i] += eps;
            m[i] -= eps;
            let fd = (f(&av, &p) - f(&av, &m)) / (2.0 * eps);
            assert!((fd - g.wrt_b[i]).abs() / g.wrt_b[i].abs().max(1.0) < 1e-4);
        }
    }

    #[test]
    fn errors() {
        let a = scalars(&[0.0, 1.0]);
        let b = scalars(&[0.0, 1.0, 2.0]);
        assert!(matches!(hsic_biased(&a, &b, 1.0, 1.0), Err(Error::Shape(_))));
        let one = scalars(&[0.0]);
        assert!(hsic_biased(&one, &one, 1.0, 1.0).is_err());
        assert!(permutation_test(&a, &a, 99, 0).is_err());
    }

    #[test]
    fn permutation_detects_identity_and_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let a: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
        let t = permutation_test(&scalars(&a), &scalars(&a), 200, 1).unwrap();
        assert!(t.p_value <= 0.01);
        let sym: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sq: Vec<f64> = sym.iter().map(|v| v * v).collect();
        let t = permutation_test(&scalars(&sym), &scalars(&sq), 200, 1).unwrap();
        assert!(t.p_value <= 0.01);
    }

    #[test]
    fn permutation_is_deterministic() {
        let a = scalars(&(0..20).map(|i| (i as f64).sin()).collect::<Vec<_>>());
        let b = scalars(&(0..20).map(|i| (i as f64 * 0.3).cos()).collect::<Vec<_>>());
        assert_eq!(permutation_test(&a, &b, 150, 4).unwrap(), permutation_test(&a, &b, 150, 4).unwrap());
    }

    fn vecs(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        n.prop_flat_map(|n| {
            (
                proptest::collection::vec(-3.0f64..3.0, n),
                proptest::collection::vec(-3.0f64..3.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn nonnegative_and_symmetric((a, b) in vecs(2..24)) {
            let (a, b) = (scalars(&a), scalars(&b));
            let ab = hsic_median(&a, &b).unwrap();
            let ba = hsic_median(&b, &a).unwrap();
            prop_assert!(ab.value >= 0.0 && ab.raw >= -1e-12);
            prop_assert!((ab.raw - ba.raw).abs() < 1e-12);
        }

        #[test]
        fn joint_permutation_invariance((a, b) in vecs(2..24), seed in 0u64..1000) {
            let mut perm: Vec<usize> = (0..a.len()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let pa: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
            let pb: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
            let x = hsic_biased(&scalars(&a), &scalars(&b), 0.8, 1.2).unwrap().raw;
            let y = hsic_biased(&scalars(&pa), &scalars(&pb), 0.8, 1.2).unwrap().raw;
            prop_assert!((x - y).abs() < 1e-12);
        }

        #[test]
        fn affine_invariance_under_median((a, b) in vecs(3..24), c in prop_oneof![-5.0f64..-0.2, 0.2f64..5.0], d in -4.0f64..4.0) {
            let t: Vec<f64> = a.iter().map(|v| c * v + d).collect();
            let x = hsic_median(&scalars(&a), &scalars(&b)).unwrap().raw;
            let y = hsic_median(&scalars(&t), &scalars(&b)).unwrap().raw;
            prop_assert!((x - y).abs() < 1e-10, "{} vs {}", x, y);
        }

        #[test]
        fn trace_identity((a, b) in vecs(2..16), sa in 0.1f64..3.0, sb in 0.1f64..3.0) {
            let (a, b) = (scalars(&a), scalars(&b));
            let fast = hsic_biased(&a, &b, sa, sb).unwrap().raw;
            let dual = hsic_biased_centered(&a, &b, sa, sb).unwrap();
            prop_assert!((fast - dual).abs() < 1e-10);
        }
    }
}
