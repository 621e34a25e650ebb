//! Gaussian moments by pairing enumeration, the greedy product bound, and
//! local-factorial experiments on cube lattices.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::poly::{rat_int, Poly, Rat};
use crate::rng;

/// Largest pairing enumeration (15!! ≈ 2·10⁶ terms).
pub const PAIRING_CAP: usize = 16;

#[derive(Debug, Error)]
pub enum WickError {
    #[error("covariance is not square")]
    NotSquare,
    #[error("covariance is not symmetric at ({0},{1})")]
    NotSymmetric(usize, usize),
    #[error("covariance is not positive semidefinite (eigenvalue {0})")]
    NotPsd(f64),
    #[error("index {0} out of range")]
    BadIndex(usize),
    #[error("{0} fields exceed the pairing cap {PAIRING_CAP}")]
    CapExceeded(usize),
    #[error("field count exceeds the per-cube cap at cube {cube}: {fields} > {cap}")]
    FieldCap { cube: usize, fields: usize, cap: usize },
    #[error("K must be positive, got {0}")]
    BadK(f64),
}

/// Optional `(cube, scale)` tag of a coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Label {
    pub cube: usize,
    pub scale: i32,
}

#[derive(Clone, Debug)]
pub struct GaussianVector {
    cov: DMatrix<f64>,
    pub labels: Option<Vec<Label>>,
    factor: DMatrix<f64>,
}

impl GaussianVector {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self, WickError> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(WickError::NotSquare);
        }
        let cov = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
        GaussianVector::from_matrix(cov)
    }

    pub fn from_matrix(cov: DMatrix<f64>) -> Result<Self, WickError> {
        if !cov.is_square() {
            return Err(WickError::NotSquare);
        }
        let m = cov.nrows();
        for i in 0..m {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * (1.0 + cov[(i, j)].abs()) {
                    return Err(WickError::NotSymmetric(i, j));
                }
            }
        }
        let eig = SymmetricEigen::new(cov.clone());
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if m > 0 && min < -1e-10 {
            return Err(WickError::NotPsd(min));
        }
        let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
        let factor = &eig.eigenvectors * sqrt;
        Ok(GaussianVector { cov, labels: None, factor })
    }

    /// Symmetric matrix with entries uniform in [−1, 1], negative eigenvalues clipped to 0.
    pub fn random_clipped(m: usize, rng: &mut rng::Rng) -> Self {
        let mut a = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = rng.gen_range(-1.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(a);
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0)));
        let p = &eig.eigenvectors * d * eig.eigenvectors.transpose();
        GaussianVector::from_matrix((&p + p.transpose()) * 0.5).expect("clipped spectrum is PSD")
    }

    pub fn standard(m: usize) -> Self {
        GaussianVector::from_matrix(DMatrix::identity(m, m)).expect("identity is PSD")
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.cov[(i, j)]
    }

    /// Scales every covariance entry by `t`.
    pub fn scaled(&self, t: f64) -> Self {
        GaussianVector::from_matrix(&self.cov * t).expect("scaling keeps PSD")
    }

    pub fn sample(&self, rng: &mut rng::Rng, out: &mut [f64]) {
        let m = self.dim();
        let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        for (i, o) in out.iter_mut().enumerate().take(m) {
            *o = (0..m).map(|k| self.factor[(i, k)] * z[k]).sum();
        }
    }

    fn check(&self, indices: &[usize]) -> Result<(), WickError> {
        match indices.iter().find(|&&i| i >= self.dim()) {
            Some(&i) => Err(WickError::BadIndex(i)),
            None => Ok(()),
        }
    }
}

/// A perfect matching of positions `0..2N`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Pairing(pub Vec<(usize, usize)>);

/// Pairings in mixed-radix order: the lowest free position is matched with its
/// `d_k`-th free successor, `d_k < 2N−2k−1`.
pub struct Pairings {
    size: usize,
    digits: Vec<usize>,
    done: bool,
    odd: bool,
}

impl Pairings {
    pub fn is_odd(&self) -> bool {
        self.odd
    }

    fn decode(&self) -> Pairing {
        let mut free: Vec<usize> = (0..self.size).collect();
        let mut pairs = Vec::with_capacity(self.size / 2);
        for &d in &self.digits {
            let a = free.remove(0);
            let b = free.remove(d);
            pairs.push((a, b));
        }
        Pairing(pairs)
    }
}

impl Iterator for Pairings {
    type Item = Pairing;

    fn next(&mut self) -> Option<Pairing> {
        if self.done {
            return None;
        }
        let p = self.decode();
        let n = self.digits.len();
        let mut k = n;
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            let radix = self.size - 2 * k - 1;
            if self.digits[k] + 1 < radix {
                self.digits[k] += 1;
                break;
            }
            self.digits[k] = 0;
        }
        Some(p)
    }
}

/// All pairings of `size` positions; empty with the odd flag when `size` is odd.
pub fn enumerate_pairings(size: usize) -> Result<Pairings, WickError> {
    if size > PAIRING_CAP {
        return Err(WickError::CapExceeded(size));
    }
    let odd = size % 2 == 1;
    Ok(Pairings { size, digits: vec![0; size / 2], done: odd, odd })
}

pub fn double_factorial(n: i64) -> u128 {
    let mut acc = 1u128;
    let mut k = n;
    while k > 1 {
        acc *= k as u128;
        k -= 2;
    }
    acc
}

/// `E[X_{i_1} … X_{i_{2N}}]` as the sum over pairings (0 for odd counts).
pub fn wick_moment(g: &GaussianVector, indices: &[usize]) -> Result<f64, WickError> {
    g.check(indices)?;
    let mut total = 0.0;
    for p in enumerate_pairings(indices.len())? {
        total += p.0.iter().map(|&(a, b)| g.cov(indices[a], indices[b])).product::<f64>();
    }
    Ok(total)
}

/// Coefficient rings for the multiplicity recursion.
pub trait Coefficient: Clone {
    fn add(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn times(&self, k: u32) -> Self;
}

impl Coefficient for f64 {
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn times(&self, k: u32) -> Self {
        self * k as f64
    }
}

impl Coefficient for Rat {
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn times(&self, k: u32) -> Self {
        self * rat_int(k as i64)
    }
}

impl Coefficient for Poly {
    fn add(&self, other: &Self) -> Self {
        Poly::add(self, other)
    }
    fn mul(&self, other: &Self) -> Self {
        Poly::mul(self, other)
    }
    fn times(&self, k: u32) -> Self {
        self.scale(&rat_int(k as i64))
    }
}

/// `E[∏ X_i^{m_i}]` by Gaussian integration by parts on the first occupied
/// coordinate:
/// `E[X_i^{m_i} R] = (m_i−1) c_ii E[X_i^{m_i−2} R] + Σ_{j≠i} m_j c_ij E[X_i^{m_i−1} X_j^{m_j−1} R']`.
pub fn gaussian_moment<T: Coefficient>(mult: &[u32], cov: &dyn Fn(usize, usize) -> T, one: &T) -> T {
    MomentTable::new(cov, one.clone()).moment(mult)
}

/// [`gaussian_moment`] with the recursion memo kept across calls.
pub struct MomentTable<'a, T: Coefficient> {
    cov: &'a dyn Fn(usize, usize) -> T,
    one: T,
    zero: T,
    memo: HashMap<Vec<u32>, T>,
}

impl<'a, T: Coefficient> MomentTable<'a, T> {
    pub fn new(cov: &'a dyn Fn(usize, usize) -> T, one: T) -> Self {
        let zero = one.times(0);
        MomentTable { cov, one, zero, memo: HashMap::new() }
    }

    pub fn moment(&mut self, mult: &[u32]) -> T {
        moment_rec(&mut mult.to_vec(), self.cov, &self.one, &self.zero, &mut self.memo)
    }
}

fn moment_rec<T: Coefficient>(m: &mut Vec<u32>, cov: &dyn Fn(usize, usize) -> T, one: &T, zero: &T, memo: &mut HashMap<Vec<u32>, T>) -> T {
    let total: u32 = m.iter().sum();
    if total == 0 {
        return one.clone();
    }
    if total % 2 == 1 {
        return zero.clone();
    }
    if let Some(v) = memo.get(m.as_slice()) {
        return v.clone();
    }
    let i = m.iter().position(|&x| x > 0).expect("nonzero total");
    let mut acc = zero.clone();
    if m[i] >= 2 {
        let k = m[i] - 1;
        m[i] -= 2;
        let sub = moment_rec(m, cov, one, zero, memo);
        m[i] += 2;
        acc = acc.add(&cov(i, i).mul(&sub).times(k));
    }
    for j in 0..m.len() {
        if j == i || m[j] == 0 {
            continue;
        }
        let k = m[j];
        m[i] -= 1;
        m[j] -= 1;
        let sub = moment_rec(m, cov, one, zero, memo);
        m[i] += 1;
        m[j] += 1;
        acc = acc.add(&cov(i, j).mul(&sub).times(k));
    }
    memo.insert(m.clone(), acc.clone());
    acc
}

/// Rational moment of a monomial under a rational covariance.
pub fn rational_moment(mult: &[u32], cov: &[Vec<Rat>]) -> Rat {
    gaussian_moment(mult, &|i, j| cov[i][j].clone(), &Rat::from_integer(1.into()))
}

/// `K^{−N} ∏_{i=1}^{2N−1} (1 + K Σ_{j>i} |⟨X_i X_j⟩|)` for `2N` fields.
pub fn wick_bound(g: &GaussianVector, indices: &[usize], k: f64) -> Result<f64, WickError> {
    g.check(indices)?;
    if k.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(WickError::BadK(k));
    }
    Ok(log_bound(&row_sums(g, indices), indices.len() / 2, k.ln()).exp())
}

fn row_sums(g: &GaussianVector, indices: &[usize]) -> Vec<f64> {
    let n = indices.len();
    (0..n.saturating_sub(1)).map(|i| (i + 1..n).map(|j| g.cov(indices[i], indices[j]).abs()).sum()).collect()
}

fn log_bound(a: &[f64], pairs: usize, log_k: f64) -> f64 {
    let k = log_k.exp();
    -(pairs as f64) * log_k + a.iter().map(|&x| (k * x).ln_1p()).sum::<f64>()
}

/// Bound minimized over K (the log is convex in log K); returns `(K, bound)`.
pub fn optimal_wick_bound(g: &GaussianVector, indices: &[usize]) -> Result<(f64, f64), WickError> {
    g.check(indices)?;
    let a = row_sums(g, indices);
    let pairs = indices.len() / 2;
    if pairs == 0 {
        return Ok((1.0, 1.0));
    }
    let slope = |u: f64| {
        let k = u.exp();
        a.iter().map(|&x| k * x / (1.0 + k * x)).sum::<f64>() - pairs as f64
    };
    let (mut lo, mut hi) = (-60.0f64, 60.0f64);
    if slope(hi) <= 0.0 {
        return Ok((hi.exp(), log_bound(&a, pairs, hi).exp()));
    }
    if slope(lo) >= 0.0 {
        return Ok((lo.exp(), log_bound(&a, pairs, lo).exp()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let u = 0.5 * (lo + hi);
    Ok((u.exp(), log_bound(&a, pairs, u).exp()))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Sample mean of `∏ X_{i_k}` with its standard error.
pub fn monte_carlo_moment(g: &GaussianVector, indices: &[usize], samples: usize, seed: u64) -> Result<McEstimate, WickError> {
    g.check(indices)?;
    let mut rng = rng::stream(seed, rng::stream_id(&[0x3c1c, indices.len() as u64]));
    let mut x = vec![0.0; g.dim()];
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        g.sample(&mut rng, &mut x);
        let v: f64 = indices.iter().map(|&i| x[i]).product();
        s1 += v;
        s2 += v * v;
    }
    let n = samples as f64;
    let mean = s1 / n;
    let var = ((s2 / n) - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    Ok(McEstimate { mean, stderr: (var / n).sqrt(), samples })
}

/// Cubes on a 1-D lattice with an adjacency list; `n(Δ) = 1 + deg(Δ)`.
#[derive(Clone, Debug)]
pub struct CubeGraph {
    pub positions: Vec<i64>,
    pub edges: Vec<(usize, usize)>,
}

impl CubeGraph {
    /// Consecutive cubes `0..n` linked to their neighbors.
    pub fn chain(n: usize) -> Self {
        CubeGraph { positions: (0..n as i64).collect(), edges: (1..n).map(|i| (i - 1, i)).collect() }
    }

    pub fn degree(&self, c: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == c || b == c).count()
    }
}

/// Normalized single-scale kernel `(1+d)^{−r}` at lattice distance `d`.
pub fn decayed_kernel(r: u32) -> impl Fn(i64) -> f64 {
    move |d| (1.0 + d.unsigned_abs() as f64).powi(-(r as i32))
}

#[derive(Clone, Debug, Serialize)]
pub enum SumMethod {
    Exact,
    MonteCarlo { samples: usize, stderr: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct AccumulationRow {
    pub fields: usize,
    pub unweighted_ratio: f64,
    pub weighted_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalFactorialReport {
    pub unweighted: f64,
    pub weighted: f64,
    pub rhs: f64,
    pub holds: bool,
    /// weighted / rhs
    pub slack: f64,
    pub method: SumMethod,
    /// fields piled into one cube with unit covariance: left/right with and without weights
    pub accumulation: Vec<AccumulationRow>,
}

/// `Σ_Π ∏_Δ (1+N(Δ))^{−1} |X_Π|` against `(1 + sup_Δ Σ_{Δ'} sup C)^{3N}`.
pub fn local_factorial_experiment(
    cubes: &CubeGraph,
    fields_per_cube: &[usize],
    cov: &dyn Fn(i64) -> f64,
    field_cap: usize,
    seed: u64,
) -> Result<LocalFactorialReport, WickError> {
    for (c, &nf) in fields_per_cube.iter().enumerate() {
        let cap = field_cap * (1 + cubes.degree(c));
        if nf > cap {
            return Err(WickError::FieldCap { cube: c, fields: nf, cap });
        }
    }
    let owner: Vec<usize> = fields_per_cube.iter().enumerate().flat_map(|(c, &nf)| std::iter::repeat_n(c, nf)).collect();
    let total = owner.len();
    let entry = |a: usize, b: usize| cov(cubes.positions[owner[a]] - cubes.positions[owner[b]]).abs();
    let weight: f64 = fields_per_cube.iter().map(|&nf| 1.0 / (1.0 + nf as f64)).product();
    let (unweighted, method) = if total % 2 == 1 {
        (0.0, SumMethod::Exact)
    } else if total <= PAIRING_CAP {
        let mut s = 0.0;
        for p in enumerate_pairings(total)? {
            s += p.0.iter().map(|&(a, b)| entry(a, b)).product::<f64>();
        }
        (s, SumMethod::Exact)
    } else {
        // uniform random pairings: Σ_Π |X_Π| = (2N−1)!! · E|X_Π|
        let samples = 200_000;
        let mut rng = rng::stream(seed, rng::stream_id(&[0x10ca1, total as u64]));
        let count = double_factorial(total as i64 - 1) as f64;
        let (mut s1, mut s2) = (0.0, 0.0);
        let mut perm: Vec<usize> = (0..total).collect();
        for _ in 0..samples {
            for i in (1..total).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            let v: f64 = perm.chunks(2).map(|c| entry(c[0], c[1])).product();
            s1 += v;
            s2 += v * v;
        }
        let n = samples as f64;
        let mean = s1 / n;
        let se = ((s2 / n - mean * mean).max(0.0) / n).sqrt();
        (count * mean, SumMethod::MonteCarlo { samples, stderr: count * se })
    };
    let sup_row = (0..cubes.positions.len())
        .map(|c| (0..cubes.positions.len()).map(|d| cov(cubes.positions[c] - cubes.positions[d]).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let pairs = total / 2;
    let rhs = (1.0 + sup_row).powi(3 * pairs as i32);
    let weighted = weight * unweighted;
    let accumulation = (1..=8)
        .map(|k| {
            let fields = 2 * k;
            let sum = double_factorial(fields as i64 - 1) as f64;
            let right = 2f64.powi(3 * k as i32);
            AccumulationRow { fields, unweighted_ratio: sum / right, weighted_ratio: sum / (1.0 + fields as f64) / right }
        })
        .collect();
    Ok(LocalFactorialReport {
        unweighted,
        weighted,
        rhs,
        holds: weighted <= rhs,
        slack: if rhs > 0.0 { weighted / rhs } else { 0.0 },
        method,
        accumulation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairing_counts() {
        assert_eq!(enumerate_pairings(2).unwrap().count(), 1);
        assert_eq!(enumerate_pairings(4).unwrap().count(), 3);
        assert_eq!(enumerate_pairings(6).unwrap().count(), 15);
        let odd = enumerate_pairings(5).unwrap();
        assert!(odd.is_odd());
        assert_eq!(odd.count(), 0);
        assert!(enumerate_pairings(18).is_err());
    }

    #[test]
    fn scalar_moments() {
        let g = GaussianVector::standard(1);
        assert_eq!(wick_moment(&g, &[0; 4]).unwrap(), 3.0);
        assert_eq!(wick_moment(&g, &[0; 6]).unwrap(), 15.0);
        assert_eq!(wick_moment(&g, &[0; 3]).unwrap(), 0.0);
        assert_eq!(gaussian_moment(&[8], &|_, _| 1.0, &1.0), 105.0);
    }

    #[test]
    fn correlated_pair() {
        let r = 0.4;
        let g = GaussianVector::new(&[vec![1.0, r], vec![r, 1.0]]).unwrap();
        let m = wick_moment(&g, &[0, 0, 1, 1]).unwrap();
        assert!((m - (1.0 + 2.0 * r * r)).abs() < 1e-14);
        let b = wick_bound(&g, &[0, 1], 1.0).unwrap();
        assert!((b - (1.0 + r)).abs() < 1e-14);
    }

    #[test]
    fn bound_for_fourth_moment() {
        let g = GaussianVector::standard(1);
        let b = wick_bound(&g, &[0; 4], 1.0).unwrap();
        assert!((b - 24.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_psd() {
        assert!(matches!(GaussianVector::new(&[vec![1.0, 2.0], vec![2.0, 1.0]]), Err(WickError::NotPsd(_))));
        assert!(matches!(GaussianVector::new(&[vec![1.0, 0.2], vec![0.1, 1.0]]), Err(WickError::NotSymmetric(..))));
    }

    #[test]
    fn single_cube_accumulation() {
        let r = local_factorial_experiment(&CubeGraph::chain(1), &[8], &|_| 1.0, 8, 0).unwrap();
        assert_eq!(r.unweighted, 105.0);
        assert!((r.weighted - 105.0 / 9.0).abs() < 1e-12);
        assert!(r.holds);
    }
}
