//! Cluster expansions on finite cube lattices: one Gaussian coordinate per cube,
//! interactions expanded as truncated power series in the coupling, every identity
//! checked in exact rational arithmetic.
//!
//! Polynomial variable layouts are documented at each entry point; the coupling is
//! always carried as an explicit variable so a whole series is one polynomial.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::forests::{bkar_expand, forest_integral, z_of_w, Forest, ForestError, ObjectSet, PolyFunctional, Variant};
use crate::poly::{factorial, rat_to_f64, Poly, Rat};
use crate::rng;
use crate::scales::SlicedCovariance;
use crate::series::Series;
use crate::wick::{GaussianVector, McEstimate, MomentTable, WickError};

/// Largest lattice for the horizontal expansion.
pub const MAX_CUBES: usize = 6;
/// Largest per-scale lattice of the two-scale demo.
pub const DEMO_CUBES: usize = 4;
/// Highest coupling order of any series.
pub const MAX_ORDER: u32 = 6;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("covariance is not square or has the wrong size")]
    Shape,
    #[error("covariance is not symmetric at ({0},{1})")]
    NotSymmetric(usize, usize),
    #[error("covariance is not positive semidefinite (eigenvalue {0})")]
    NotPsd(f64),
    #[error("{n} cubes exceed the cap {cap}")]
    TooManyCubes { n: usize, cap: usize },
    #[error("bad interaction: {0}")]
    Interaction(String),
    #[error("order {0} exceeds the cap {MAX_ORDER}")]
    Order(u32),
    #[error("coupling must be finite and nonnegative, got {0}")]
    Lambda(f64),
    #[error("Monte Carlo weights overflowed")]
    McOverflow,
    #[error("Taylor order must be at least 1")]
    TaylorOrder,
    #[error("weakening parameters must be symmetric and in [0,1]")]
    Weakening,
    #[error("bad configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Wick(#[from] WickError),
}

// ---------------------------------------------------------------------------
// lattice and interaction

fn check_covariance(cov: &[Vec<f64>]) -> Result<(), ClusterError> {
    let n = cov.len();
    if cov.iter().any(|r| r.len() != n) {
        return Err(ClusterError::Shape);
    }
    for i in 0..n {
        for j in 0..i {
            if (cov[i][j] - cov[j][i]).abs() > 1e-12 * (1.0 + cov[i][j].abs()) {
                return Err(ClusterError::NotSymmetric(i, j));
            }
        }
    }
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| cov[i][j]);
    let min = nalgebra::SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if n > 0 && min < -1e-12 {
        return Err(ClusterError::NotPsd(min));
    }
    Ok(())
}

fn to_f64_matrix(cov: &[Vec<Rat>]) -> Vec<Vec<f64>> {
    cov.iter().map(|r| r.iter().map(rat_to_f64).collect()).collect()
}

/// Cubes of one scale, one Gaussian coordinate each.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeLattice {
    pub scale: i32,
    pub cov: Vec<Vec<Rat>>,
}

impl CubeLattice {
    pub fn new(scale: i32, cov: Vec<Vec<Rat>>) -> Result<Self, ClusterError> {
        let n = cov.len();
        if cov.iter().any(|r| r.len() != n) {
            return Err(ClusterError::Shape);
        }
        for i in 0..n {
            for j in 0..i {
                if cov[i][j] != cov[j][i] {
                    return Err(ClusterError::NotSymmetric(i, j));
                }
            }
        }
        check_covariance(&to_f64_matrix(&cov))?;
        Ok(CubeLattice { scale, cov })
    }

    /// Unit-variance independent cubes.
    pub fn independent(n: usize) -> Self {
        let cov = (0..n).map(|i| (0..n).map(|j| if i == j { Rat::one() } else { Rat::zero() }).collect()).collect();
        CubeLattice { scale: 0, cov }
    }

    /// Unit variance and covariance `c` between neighbouring cubes.
    pub fn nearest_neighbor(n: usize, c: Rat, periodic: bool) -> Result<Self, ClusterError> {
        let mut cov = vec![vec![Rat::zero(); n]; n];
        for (i, row) in cov.iter_mut().enumerate() {
            row[i] = Rat::one();
        }
        for i in 0..n {
            let next = if i + 1 < n {
                Some(i + 1)
            } else if periodic && n > 2 {
                Some(0)
            } else {
                None
            };
            if let Some(k) = next {
                if k != i {
                    cov[i][k] = cov[i][k].clone() + &c;
                    cov[k][i] = cov[i][k].clone();
                }
            }
        }
        CubeLattice::new(0, cov)
    }

    /// Slice `j` of a sliced covariance, sampled at the centers of `n` consecutive cubes
    /// of side `M^{−j}` (lags rounded to the grid).
    pub fn from_slice(sliced: &SlicedCovariance, j: i32, n: usize) -> Result<Self, ClusterError> {
        let kernel = sliced.slice(j).map_err(|e| ClusterError::Config(e.to_string()))?;
        let grid = sliced.grid();
        let side = sliced.system().m.powi(-j) / grid.spacing;
        let mut cov = vec![vec![Rat::zero(); n]; n];
        for (a, row) in cov.iter_mut().enumerate() {
            for (b, c) in row.iter_mut().enumerate() {
                let lag = ((a.abs_diff(b) as f64) * side).round() as usize % grid.size;
                *c = Rat::from_float(kernel[lag]).ok_or(ClusterError::Shape)?;
            }
        }
        CubeLattice::new(j, cov)
    }

    pub fn len(&self) -> usize {
        self.cov.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cov.is_empty()
    }

    pub fn restrict(&self, cubes: &[usize]) -> CubeLattice {
        let cov = cubes.iter().map(|&a| cubes.iter().map(|&b| self.cov[a][b].clone()).collect()).collect();
        CubeLattice { scale: self.scale, cov }
    }

    pub fn gaussian(&self) -> Result<GaussianVector, ClusterError> {
        Ok(GaussianVector::new(&to_f64_matrix(&self.cov))?)
    }
}

/// Per-cube polynomial `P(ψ) = Σ_k coeffs[k] ψ^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeInteraction {
    pub coeffs: Vec<Rat>,
}

impl CubeInteraction {
    pub fn new(mut coeffs: Vec<Rat>) -> Result<Self, ClusterError> {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        let deg = coeffs.len().saturating_sub(1);
        if deg == 0 || deg % 2 == 1 {
            return Err(ClusterError::Interaction(format!("degree {deg} is not positive and even")));
        }
        if !coeffs[deg].is_positive() {
            return Err(ClusterError::Interaction("leading coefficient is not positive".into()));
        }
        Ok(CubeInteraction { coeffs })
    }

    pub fn phi4() -> Self {
        CubeInteraction::new(vec![Rat::zero(), Rat::zero(), Rat::zero(), Rat::zero(), Rat::one()]).expect("ψ⁴ is valid")
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + rat_to_f64(c))
    }

    /// `P(x)` for a polynomial argument.
    pub fn compose(&self, x: &Poly) -> Poly {
        let mut acc = Poly::zero(x.nvars());
        for c in self.coeffs.iter().rev() {
            acc = acc.mul(x).add(&Poly::constant(x.nvars(), c.clone()));
        }
        acc
    }

    /// The interaction with its constant term dropped.
    pub fn without_constant(&self) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] = Rat::zero();
        CubeInteraction { coeffs }
    }
}

fn check_order(order: u32) -> Result<(), ClusterError> {
    if order > MAX_ORDER {
        return Err(ClusterError::Order(order));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// exact machinery shared by every expansion

/// `Σ_{k≤order} (−λV)^k / k!`, with `λ` the variable `lambda_var`.
fn boltzmann(v: &Poly, lambda_var: usize, order: u32) -> Poly {
    let n = v.nvars();
    let step = v.mul(&Poly::var(n, lambda_var));
    let mut term = Poly::one(n);
    let mut acc = term.clone();
    for k in 1..=order {
        term = term.mul(&step).scale(&Rat::new((-1).into(), (k as i64).into()));
        acc.add_assign_ref(&term);
    }
    acc
}

fn truncate(p: &Poly, var: usize, max: u32) -> Poly {
    let mut out = Poly::zero(p.nvars());
    for (e, c) in p.terms() {
        if e[var] <= max {
            out.add_term(e.clone(), c.clone());
        }
    }
    out
}

fn truncated_mul(a: &Poly, b: &Poly, var: usize, max: u32) -> Poly {
    truncate(&a.mul(b), var, max)
}

/// Coefficients of `λ^0..λ^{len−1}` of a polynomial in which only `λ` appears.
fn lambda_series(p: &Poly, lambda_var: usize, len: usize) -> Series {
    let mut s = Series::zero(len);
    for (e, c) in p.terms() {
        let k = e[lambda_var] as usize;
        if k < len {
            s.0[k] += c;
        }
    }
    s
}

/// Series times a polynomial whose `λ` is the variable `lambda_var`, truncated.
fn series_times(s: &Series, p: &Poly, lambda_var: usize) -> Poly {
    let max = s.len() as u32 - 1;
    let mut out = Poly::zero(p.nvars());
    for (e, c) in p.terms() {
        for (k, sk) in s.0.iter().enumerate() {
            let deg = e[lambda_var] + k as u32;
            if deg > max || sk.is_zero() {
                continue;
            }
            let mut e2 = e.clone();
            e2[lambda_var] = deg;
            out.add_term(e2, c.clone() * sk);
        }
    }
    out
}

/// Gaussian expectation over the leading `fields` variables of `integrand`,
/// whose remaining variables go to `rest_map` in a space of `out_nvars` variables.
fn expectation(integrand: &Poly, fields: usize, rest_map: &[usize], out_nvars: usize, table: &mut MomentTable<Poly>) -> Poly {
    let mut out = Poly::zero(out_nvars);
    for (e, c) in integrand.terms() {
        let m = table.moment(&e[..fields]);
        if m.is_zero() {
            continue;
        }
        let mut exps = vec![0u32; out_nvars];
        for (r, &x) in e[fields..].iter().enumerate() {
            exps[rest_map[r]] += x;
        }
        out.add_assign_ref(&m.mul(&Poly::monomial(exps, c.clone())));
    }
    out
}

/// Exact `E[integrand]` under a fixed covariance; the result lives on the parameters.
fn plain_expectation(cov: &[Vec<Rat>], integrand: &Poly, params: usize) -> Poly {
    let n = cov.len();
    let rest: Vec<usize> = (0..params).collect();
    let c = |i: usize, j: usize| Poly::constant(params, cov[i][j].clone());
    let mut table = MomentTable::new(&c, Poly::one(params));
    expectation(integrand, n, &rest, params, &mut table)
}

/// `E_{C_s}[integrand]` as a polynomial in `[s (one per link) | params]`.
fn weakened_expectation(objects: &ObjectSet, cov: &[Vec<Rat>], integrand: &Poly, params: usize) -> Poly {
    let n = cov.len();
    let nl = objects.num_links();
    let out = nl + params;
    let rest: Vec<usize> = (nl..out).collect();
    let c = |i: usize, j: usize| {
        if i == j {
            Poly::constant(out, cov[i][i].clone())
        } else if cov[i][j].is_zero() {
            Poly::zero(out)
        } else {
            Poly::var(out, objects.link_index(i, j)).scale(&cov[i][j])
        }
    };
    let mut table = MomentTable::new(&c, Poly::one(out));
    expectation(integrand, n, &rest, out, &mut table)
}

/// Drops the (vanished) link variables of a polynomial on `[s | params]`.
fn onto_params(p: &Poly, links: usize, params: usize) -> Poly {
    let map: Vec<usize> = (0..links).map(|_| 0).chain(0..params).collect();
    p.embed(params, &map)
}

/// Per-forest terms from the `s`-derivatives of the weakened expectation.
fn forest_terms_by_derivative(
    objects: &ObjectSet,
    cov: &[Vec<Rat>],
    integrand: &Poly,
    params: usize,
) -> Result<Vec<(Forest, Poly)>, ClusterError> {
    let nl = objects.num_links();
    let e = weakened_expectation(objects, cov, integrand, params);
    let f = PolyFunctional::with_parameters(e, (0..nl).collect());
    let exp = bkar_expand(objects, &f, Variant::Bkar1)?;
    Ok(exp.terms.into_iter().map(|t| (t.forest, onto_params(&t.value, nl, params))).collect())
}

/// One forest term with each `∂/∂s_ℓ` replaced by `C_ℓ ∂_{ψ_a}∂_{ψ_b}` under the integral.
fn forest_term_by_insertion(objects: &ObjectSet, cov: &[Vec<Rat>], integrand: &Poly, params: usize, forest: &Forest) -> Poly {
    let mut d = integrand.clone();
    for &l in forest.edges() {
        let (a, b) = objects.link(l);
        if cov[a][b].is_zero() {
            return Poly::zero(params);
        }
        d = d.derivative(a).derivative(b).scale(&cov[a][b]);
    }
    let nl = objects.num_links();
    let e = weakened_expectation(objects, cov, &d, params);
    let f = PolyFunctional::with_parameters(e, (0..nl).collect());
    onto_params(&forest_integral(objects, forest, &f, Variant::Bkar1), nl, params)
}

/// A tree of a forest, relabeled onto its own cubes.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Tree {
    /// Cubes of the component, increasing.
    pub cubes: Vec<usize>,
    /// Edges as pairs of cubes (global labels).
    pub edges: Vec<(usize, usize)>,
}

impl Tree {
    fn local(&self) -> (ObjectSet, Forest) {
        let objects = ObjectSet::uniform(self.cubes.len()).expect("tree fits the cap");
        let pos = |c: usize| self.cubes.iter().position(|&x| x == c).expect("edge inside tree");
        let links: Vec<usize> = self.edges.iter().map(|&(a, b)| objects.link_index(pos(a), pos(b))).collect();
        let forest = Forest::from_links(&objects, &links).expect("edges form a tree");
        (objects, forest)
    }
}

/// The trees of a forest, one per connected component (singletons included).
pub fn forest_trees(objects: &ObjectSet, forest: &Forest) -> Vec<Tree> {
    forest
        .components()
        .into_iter()
        .map(|mut cubes| {
            cubes.sort_unstable();
            let edges = forest.edges().iter().map(|&l| objects.link(l)).filter(|(a, _)| cubes.contains(a)).collect();
            Tree { cubes, edges }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// partition function

#[derive(Clone, Debug)]
pub struct PartitionFunction {
    pub series: Series,
    pub lambda: f64,
    pub value: f64,
    /// Magnitude of the last retained term.
    pub truncation: f64,
    pub mc: McEstimate,
}

fn interaction_poly(interaction: &CubeInteraction, nvars: usize, fields: &[usize]) -> Poly {
    let mut v = Poly::zero(nvars);
    for &f in fields {
        v.add_assign_ref(&interaction.compose(&Poly::var(nvars, f)));
    }
    v
}

/// Integrand on `[ψ (n) | λ]`.
fn lattice_integrand(n: usize, interaction: &CubeInteraction, order: u32) -> Poly {
    let fields: Vec<usize> = (0..n).collect();
    boltzmann(&interaction_poly(interaction, n + 1, &fields), n, order)
}

/// `Σ_k λ^k (−1)^k/k! E[(Σ_Δ P(ψ_Δ))^k]`, exact to order `order`.
pub fn partition_series(lattice: &CubeLattice, interaction: &CubeInteraction, order: u32) -> Result<Series, ClusterError> {
    check_order(order)?;
    let n = lattice.len();
    let e = plain_expectation(&lattice.cov, &lattice_integrand(n, interaction, order), 1);
    Ok(lambda_series(&e, 0, order as usize + 1))
}

/// Monte Carlo estimate of `E[e^{−λΣP(ψ_Δ)}]`, one weight per sample so several
/// couplings share the noise.
pub fn partition_monte_carlo(
    lattice: &CubeLattice,
    interaction: &CubeInteraction,
    lambdas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<McEstimate>, ClusterError> {
    if let Some(&l) = lambdas.iter().find(|l| !l.is_finite() || **l < 0.0) {
        return Err(ClusterError::Lambda(l));
    }
    let g = lattice.gaussian()?;
    let n = lattice.len();
    let mut r = rng::stream(seed, rng::stream_id(&[0xc1a5, n as u64]));
    let mut psi = vec![0.0; n];
    let mut sum = vec![0.0; lambdas.len()];
    let mut sq = vec![0.0; lambdas.len()];
    for _ in 0..samples {
        g.sample(&mut r, &mut psi);
        let v: f64 = psi.iter().map(|&x| interaction.eval(x)).sum();
        for (k, &l) in lambdas.iter().enumerate() {
            let w = (-l * v).exp();
            sum[k] += w;
            sq[k] += w * w;
        }
    }
    let ns = samples as f64;
    let mut out = Vec::with_capacity(lambdas.len());
    for k in 0..lambdas.len() {
        let mean = sum[k] / ns;
        let var = (sq[k] / ns - mean * mean).max(0.0) * ns / (ns - 1.0).max(1.0);
        let stderr = (var / ns).sqrt();
        if !mean.is_finite() || !stderr.is_finite() {
            return Err(ClusterError::McOverflow);
        }
        out.push(McEstimate { mean, stderr, samples });
    }
    Ok(out)
}

pub fn partition_function(
    lattice: &CubeLattice,
    interaction: &CubeInteraction,
    lambda: f64,
    order: u32,
    samples: usize,
    seed: u64,
) -> Result<PartitionFunction, ClusterError> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(ClusterError::Lambda(lambda));
    }
    let series = partition_series(lattice, interaction, order)?;
    let value = series.eval_f64(lambda);
    let truncation = rat_to_f64(&series.0[order as usize]).abs() * lambda.powi(order as i32);
    let mc = partition_monte_carlo(lattice, interaction, &[lambda], samples, seed)?.remove(0);
    Ok(PartitionFunction { series, lambda, value, truncation, mc })
}

// ---------------------------------------------------------------------------
// weakened covariance

/// `C_s(x, x') = s_{Δ_x Δ_{x'}} C(x, x')`.
#[derive(Clone, Debug)]
pub struct WeakenedGaussian {
    pub base: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
}

impl WeakenedGaussian {
    pub fn new(base: Vec<Vec<f64>>, s: Vec<Vec<f64>>) -> Result<Self, ClusterError> {
        let n = base.len();
        if s.len() != n || s.iter().chain(base.iter()).any(|r| r.len() != n) {
            return Err(ClusterError::Shape);
        }
        for i in 0..n {
            for j in 0..n {
                if s[i][j] != s[j][i] || !(0.0..=1.0).contains(&s[i][j]) {
                    return Err(ClusterError::Weakening);
                }
            }
        }
        Ok(WeakenedGaussian { base, s })
    }

    /// Weakening at the point `w` of a forest integral: `s_ℓ = z_ℓ(w)`, diagonal 1.
    pub fn from_forest(base: Vec<Vec<f64>>, objects: &ObjectSet, forest: &Forest, w: &[f64]) -> Result<Self, ClusterError> {
        let n = base.len();
        let mut s = vec![vec![1.0; n]; n];
        for (l, (a, b)) in objects.links().enumerate() {
            let z = z_of_w(objects, forest, l, w, Variant::Bkar1);
            s[a][b] = z;
            s[b][a] = z;
        }
        WeakenedGaussian::new(base, s)
    }

    pub fn covariance(&self) -> Vec<Vec<f64>> {
        self.base.iter().zip(&self.s).map(|(b, s)| b.iter().zip(s).map(|(x, y)| x * y).collect()).collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let c = self.covariance();
        let n = c.len();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| c[i][j]);
        nalgebra::SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn check_psd(&self) -> Result<(), ClusterError> {
        check_covariance(&self.covariance())
    }
}

// ---------------------------------------------------------------------------
// horizontal expansion

#[derive(Clone, Debug)]
pub struct ForestContribution {
    pub forest: Forest,
    pub series: Series,
}

#[derive(Clone, Debug)]
pub struct HorizontalExpansion {
    pub objects: ObjectSet,
    pub order: u32,
    pub terms: Vec<ForestContribution>,
}

impl HorizontalExpansion {
    pub fn total(&self) -> Series {
        self.terms.iter().fold(Series::zero(self.order as usize + 1), |acc, t| acc.add(&t.series))
    }

    /// Terms whose series is not identically zero.
    pub fn nonzero(&self) -> impl Iterator<Item = &ForestContribution> {
        self.terms.iter().filter(|t| t.series.0.iter().any(|c| !c.is_zero()))
    }
}

fn check_horizontal(lattice: &CubeLattice, order: u32) -> Result<ObjectSet, ClusterError> {
    check_order(order)?;
    if lattice.len() > MAX_CUBES {
        return Err(ClusterError::TooManyCubes { n: lattice.len(), cap: MAX_CUBES });
    }
    Ok(ObjectSet::uniform(lattice.len())?)
}

/// BKAR over all cube pairs of `E_{C_s}[e^{−λΣP}]`, a polynomial in the `s_ℓ`.
pub fn horizontal_expand(lattice: &CubeLattice, interaction: &CubeInteraction, order: u32) -> Result<HorizontalExpansion, ClusterError> {
    let objects = check_horizontal(lattice, order)?;
    let integrand = lattice_integrand(lattice.len(), interaction, order);
    let terms = forest_terms_by_derivative(&objects, &lattice.cov, &integrand, 1)?
        .into_iter()
        .map(|(forest, p)| ForestContribution { forest, series: lambda_series(&p, 0, order as usize + 1) })
        .collect();
    Ok(HorizontalExpansion { objects, order, terms })
}

/// The same forest term, with propagators and field derivatives inserted directly.
pub fn forest_term_insertion(
    lattice: &CubeLattice,
    interaction: &CubeInteraction,
    forest: &Forest,
    order: u32,
) -> Result<Series, ClusterError> {
    let objects = check_horizontal(lattice, order)?;
    let integrand = lattice_integrand(lattice.len(), interaction, order);
    let p = forest_term_by_insertion(&objects, &lattice.cov, &integrand, 1, forest);
    Ok(lambda_series(&p, 0, order as usize + 1))
}

/// Single-tree evaluation on the sub-lattice spanned by the tree.
pub fn tree_term(lattice: &CubeLattice, interaction: &CubeInteraction, tree: &Tree, order: u32) -> Result<Series, ClusterError> {
    check_order(order)?;
    let sub = lattice.restrict(&tree.cubes);
    let (objects, forest) = tree.local();
    let integrand = lattice_integrand(sub.len(), interaction, order);
    let p = forest_term_by_insertion(&objects, &sub.cov, &integrand, 1, &forest);
    Ok(lambda_series(&p, 0, order as usize + 1))
}

// ---------------------------------------------------------------------------
// vertical expansion

/// What the vertical expansion keeps of one `t` variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum TaylorOrder {
    /// `(1/p!) ∂^p f` at `t = 0`.
    Order(u32),
    /// `∫₀¹ (1−t)^{N−1}/(N−1)! ∂^N f dt`.
    Remainder,
}

#[derive(Clone, Debug)]
pub struct VerticalTerm {
    /// One entry per expanded variable, in the order given.
    pub orders: Vec<TaylorOrder>,
    /// The term, with the expanded variables gone.
    pub value: Poly,
}

impl VerticalTerm {
    /// Total derivative count of the Taylor orders.
    pub fn derivatives(&self) -> u32 {
        self.orders.iter().map(|o| if let TaylorOrder::Order(p) = o { *p } else { 0 }).sum()
    }

    pub fn has_remainder(&self) -> bool {
        self.orders.contains(&TaylorOrder::Remainder)
    }
}

fn taylor_in(p: &Poly, var: usize, option: TaylorOrder, n: u32) -> Poly {
    match option {
        TaylorOrder::Order(k) => {
            let mut d = p.clone();
            for _ in 0..k {
                d = d.derivative(var);
            }
            d.substitute(&[(var, Rat::zero())]).scale(&Rat::new(1.into(), factorial(k)))
        }
        TaylorOrder::Remainder => {
            let mut d = p.clone();
            for _ in 0..n {
                d = d.derivative(var);
            }
            // ∫₀¹ (1−t)^{N−1}/(N−1)! t^m dt = m!/(N+m)!
            let mut out = Poly::zero(p.nvars());
            for (e, c) in d.terms() {
                let m = e[var];
                let mut e2 = e.clone();
                e2[var] = 0;
                out.add_term(e2, c.clone() * Rat::new(factorial(m), factorial(n + m)));
            }
            out
        }
    }
}

/// Taylor expansion to order `n_ext_max` with integral remainder in each of `vars`;
/// the values sum to `f` at `t = 1` in those variables.
pub fn vertical_expand(f: &Poly, vars: &[usize], n_ext_max: u32) -> Result<Vec<VerticalTerm>, ClusterError> {
    if n_ext_max == 0 {
        return Err(ClusterError::TaylorOrder);
    }
    let options: Vec<TaylorOrder> = (0..n_ext_max).map(TaylorOrder::Order).chain([TaylorOrder::Remainder]).collect();
    let mut terms = vec![VerticalTerm { orders: Vec::new(), value: f.clone() }];
    for &v in vars {
        let mut next = Vec::with_capacity(terms.len() * options.len());
        for t in &terms {
            for &o in &options {
                let mut orders = t.orders.clone();
                orders.push(o);
                next.push(VerticalTerm { orders, value: taylor_in(&t.value, v, o, n_ext_max) });
            }
        }
        terms = next;
    }
    Ok(terms)
}

pub fn vertical_total(terms: &[VerticalTerm], nvars: usize) -> Poly {
    terms.iter().fold(Poly::zero(nvars), |acc, t| acc.add(&t.value))
}

// ---------------------------------------------------------------------------
// polymers

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Node {
    pub scale: i32,
    pub cube: usize,
}

/// A connected set of (scale, cube) nodes with its evaluation.
///
/// The first `field_vars` variables of `value` are the external field at each cube
/// of scale `field_scale`; any further variables are parameters.
#[derive(Clone, Debug)]
pub struct Polymer {
    pub nodes: Vec<Node>,
    /// Same-scale links, as node positions.
    pub links: Vec<(usize, usize)>,
    /// (child, parent) node positions.
    pub inclusion: Vec<(usize, usize)>,
    pub external: u32,
    pub remainder: bool,
    pub field_scale: i32,
    pub field_vars: usize,
    pub value: Poly,
}

impl Polymer {
    pub fn is_connected(&self) -> bool {
        let n = self.nodes.len();
        if n == 0 {
            return false;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for &(a, b) in self.links.iter().chain(&self.inclusion) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
        let root = find(&mut parent, 0);
        (0..n).all(|i| find(&mut parent, i) == root)
    }

    /// Links join equal scales; inclusion links join a cube to the cube one scale
    /// down that contains it (`m` cubes per parent).
    pub fn links_valid(&self, m: usize) -> bool {
        let hor = self.links.iter().all(|&(a, b)| self.nodes[a].scale == self.nodes[b].scale && a != b);
        let inc = self.inclusion.iter().all(|&(c, p)| {
            let (c, p) = (self.nodes[c], self.nodes[p]);
            c.scale == p.scale + 1 && c.cube / m == p.cube
        });
        hor && inc
    }

    pub fn overlaps_at(&self, other: &Polymer, scale: i32) -> bool {
        self.nodes.iter().any(|a| a.scale == scale && other.nodes.contains(a))
    }

    /// Lowest scale, then leftmost cube.
    pub fn anchor(&self) -> Node {
        *self.nodes.iter().min().expect("polymer has nodes")
    }

    /// The field-scale cube containing the anchor.
    pub fn anchor_field_cube(&self, m: usize) -> usize {
        let a = self.anchor();
        let up = (a.scale - self.field_scale).max(0) as u32;
        a.cube / m.pow(up)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PolymerClass {
    Vacuum,
    Divergent,
    Convergent,
}

#[derive(Clone, Debug)]
pub struct ClassifiedPolymer {
    pub class: PolymerClass,
    /// For divergent polymers: the value with every external field moved to the anchor.
    pub local_part: Option<Poly>,
}

/// The value with every external field variable replaced by the one at `cube`.
pub fn collapse_fields(value: &Poly, field_vars: usize, cube: usize) -> Poly {
    let map: Vec<usize> = (0..value.nvars()).map(|v| if v < field_vars { cube } else { v }).collect();
    value.embed(value.nvars(), &map)
}

/// `m` is the number of cubes per parent cube.
pub fn classify_and_extract_local_parts(polymers: &[Polymer], n_ext_max: u32, m: usize) -> Vec<ClassifiedPolymer> {
    polymers
        .iter()
        .map(|p| {
            if p.remainder || p.external >= n_ext_max {
                ClassifiedPolymer { class: PolymerClass::Convergent, local_part: None }
            } else if p.external == 0 {
                ClassifiedPolymer { class: PolymerClass::Vacuum, local_part: None }
            } else {
                let local = collapse_fields(&p.value, p.field_vars, p.anchor_field_cube(m));
                ClassifiedPolymer { class: PolymerClass::Divergent, local_part: Some(local) }
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// dressed interaction

/// `I`-th power vertex dressed along the scales `j0..=ρ` at one point.
///
/// Variables: `ψ^j` at `j − j0`, then `t^j` at `n + j − j0` (`n` scales; `t^{j0}` unused).
#[derive(Clone, Debug)]
pub struct DressedLagrangian {
    pub degree: u32,
    pub j0: i32,
    pub rho: i32,
    /// Effective coupling of each scale `j0..=ρ`.
    pub couplings: Vec<Rat>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DressedChecks {
    /// At `t ≡ 1` with equal couplings: `λ(Σψ)^I`.
    pub undressed_at_one: bool,
    /// At `t ≡ 0`: `Σ_j λ^j (ψ^j)^I`.
    pub decoupled_at_zero: bool,
    /// Rewriting through the counterterms `λ^{k−1} − λ^k` gives the same polynomial.
    pub counterterm_form: bool,
}

impl DressedLagrangian {
    pub fn new(degree: u32, j0: i32, rho: i32, couplings: Vec<Rat>) -> Result<Self, ClusterError> {
        if degree == 0 || rho < j0 || couplings.len() != (rho - j0 + 1) as usize {
            return Err(ClusterError::Config("need I ≥ 1, ρ ≥ j0 and one coupling per scale".into()));
        }
        Ok(DressedLagrangian { degree, j0, rho, couplings })
    }

    pub fn scales(&self) -> usize {
        (self.rho - self.j0 + 1) as usize
    }

    pub fn nvars(&self) -> usize {
        2 * self.scales()
    }

    pub fn psi_var(&self, j: i32) -> usize {
        (j - self.j0) as usize
    }

    pub fn t_var(&self, j: i32) -> usize {
        self.scales() + (j - self.j0) as usize
    }

    fn coupling(&self, j: i32) -> Rat {
        if j > self.rho {
            Rat::zero()
        } else {
            self.couplings[(j - self.j0) as usize].clone()
        }
    }

    /// `(Tψ)^{→k}`: `ψ^k + t^k (Tψ)^{→k−1}`, equal to `ψ^{j0}` at the bottom and 0 below it.
    pub fn low_momentum(&self, k: i32) -> Poly {
        let n = self.nvars();
        let mut acc = Poly::zero(n);
        for j in self.j0..=k.min(self.rho) {
            acc = if j == self.j0 {
                Poly::var(n, self.psi_var(j))
            } else {
                Poly::var(n, self.psi_var(j)).add(&Poly::var(n, self.t_var(j)).mul(&acc))
            };
        }
        acc
    }

    /// `1 − (t^k)^I`, with `t^{ρ+1} = 0`.
    fn gap(&self, k: i32) -> Poly {
        let n = self.nvars();
        if k > self.rho {
            Poly::one(n)
        } else {
            Poly::one(n).sub(&Poly::var(n, self.t_var(k)).pow(self.degree))
        }
    }

    pub fn poly(&self) -> Poly {
        let i = self.degree;
        let mut acc = self.low_momentum(self.rho).pow(i).scale(&self.coupling(self.rho));
        for k in self.j0 + 1..=self.rho {
            acc.add_assign_ref(&self.gap(k).mul(&self.low_momentum(k - 1).pow(i)).scale(&self.coupling(k - 1)));
        }
        acc
    }

    /// `Σ_{k≤ρ+1} (λ^{k−1} − λ^k) Σ_{k'≤k} (1 − (t^{k'})^I) ((Tψ)^{→k'−1})^I`, `λ^{ρ+1} = 0`.
    pub fn counterterm_form(&self) -> Poly {
        let n = self.nvars();
        let i = self.degree;
        let mut acc = Poly::zero(n);
        let mut inner = Poly::zero(n);
        for k in self.j0 + 1..=self.rho + 1 {
            inner.add_assign_ref(&self.gap(k).mul(&self.low_momentum(k - 1).pow(i)));
            acc.add_assign_ref(&inner.scale(&(self.coupling(k - 1) - self.coupling(k))));
        }
        acc
    }

    pub fn at_t(&self, value: Rat) -> Poly {
        let subs: Vec<(usize, Rat)> = (self.j0 + 1..=self.rho).map(|j| (self.t_var(j), value.clone())).collect();
        self.poly().substitute(&subs)
    }

    pub fn checks(&self) -> DressedChecks {
        let n = self.nvars();
        let i = self.degree;
        let same = DressedLagrangian { couplings: vec![self.couplings[self.couplings.len() - 1].clone(); self.scales()], ..self.clone() };
        let sum = (self.j0..=self.rho).fold(Poly::zero(n), |acc, j| acc.add(&Poly::var(n, self.psi_var(j))));
        let undressed_at_one = same.at_t(Rat::one()) == sum.pow(i).scale(&same.coupling(self.rho));
        let decoupled =
            (self.j0..=self.rho).fold(Poly::zero(n), |acc, j| acc.add(&Poly::var(n, self.psi_var(j)).pow(i).scale(&self.coupling(j))));
        DressedChecks {
            undressed_at_one,
            decoupled_at_zero: self.at_t(Rat::zero()) == decoupled,
            counterterm_form: self.counterterm_form() == self.poly(),
        }
    }
}

// ---------------------------------------------------------------------------
// two-scale demo

#[derive(Clone, Debug)]
pub struct TwoScaleConfig {
    /// Covariance of the fine-scale coordinates.
    pub fine: Vec<Vec<Rat>>,
    /// Covariance of the coarse-scale coordinates.
    pub coarse: Vec<Vec<Rat>>,
    /// Fine cubes per coarse cube.
    pub ratio: usize,
    pub interaction: CubeInteraction,
    pub order: u32,
    pub n_ext_max: u32,
}

impl TwoScaleConfig {
    /// Two coarse cubes of two fine cubes each, ψ⁴, order 2, `N_ext,max = 5`.
    pub fn standard() -> Self {
        let q = Rat::new(1.into(), 4.into());
        let h = Rat::new(1.into(), 2.into());
        let fine = CubeLattice::nearest_neighbor(4, q, false).expect("diagonally dominant").cov;
        let coarse = vec![vec![Rat::one(), h.clone()], vec![h, Rat::one()]];
        TwoScaleConfig { fine, coarse, ratio: 2, interaction: CubeInteraction::phi4(), order: 2, n_ext_max: 5 }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ClassCounts {
    pub vacuum: usize,
    pub divergent: usize,
    pub convergent: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct TwoScaleChecks {
    /// Fine forest terms sum to the fine expectation, as polynomials in `t`, `ψ⁰`, `λ`.
    pub fine_horizontal: bool,
    /// Each fine forest term is the product of its tree terms.
    pub factorization: bool,
    /// Each tree's vertical terms sum to the tree term at `t = 1`.
    pub vertical: bool,
    /// The polymer gas rebuilds the fine expectation at `t = 1`.
    pub polymer_gas: bool,
    /// The vacuum polymers rebuild the fine partition function.
    pub vacuum: bool,
    /// Local-part subtraction vanishes when all external fields coincide.
    pub local_parts: bool,
    /// Coarse forest terms sum to the coarse expectation.
    pub coarse_horizontal: bool,
    /// The full chain reproduces the two-scale partition function.
    pub reconstruction: bool,
}

impl TwoScaleChecks {
    pub fn all(&self) -> bool {
        self.fine_horizontal
            && self.factorization
            && self.vertical
            && self.polymer_gas
            && self.vacuum
            && self.local_parts
            && self.coarse_horizontal
            && self.reconstruction
    }
}

#[derive(Clone, Debug)]
pub struct TwoScaleReport {
    pub checks: TwoScaleChecks,
    pub trees: usize,
    pub polymers: Vec<Polymer>,
    pub classes: Vec<ClassifiedPolymer>,
    pub counts: ClassCounts,
    /// Fine free energy per fine cube, `log E_{ψ¹} e^{−λΣP(ψ¹)} / n₁`.
    pub fine_free_energy: Series,
    /// Sum of the local parts, on `[ψ⁰ | λ]`.
    pub local_sum: Poly,
    pub direct: Series,
    pub reconstructed: Series,
    pub coarse_terms: Vec<(Forest, Series)>,
}

/// Hor on the fine scale, Vert, vacuum resummation, then Hor on the coarse scale.
///
/// The field on fine cube `a` is `ψ¹_a + ψ⁰_{a/m}`. The fine interaction is split as
/// `P(ψ⁰) + W`, `W = P(ψ¹ + tψ⁰) − P(tψ⁰)`, so each `t_a` power counts one external
/// coarse field.
pub fn two_scale_demo(cfg: &TwoScaleConfig) -> Result<TwoScaleReport, ClusterError> {
    check_order(cfg.order)?;
    let n1 = cfg.fine.len();
    let n0 = cfg.coarse.len();
    let m = cfg.ratio;
    if n1 > DEMO_CUBES || n0 > DEMO_CUBES {
        return Err(ClusterError::TooManyCubes { n: n1.max(n0), cap: DEMO_CUBES });
    }
    if m == 0 || n0 * m != n1 {
        return Err(ClusterError::Config(format!("{n1} fine cubes do not split into {n0} parents of {m}")));
    }
    if cfg.n_ext_max == 0 {
        return Err(ClusterError::TaylorOrder);
    }
    let fine = CubeLattice::new(1, cfg.fine.clone())?;
    let coarse = CubeLattice::new(0, cfg.coarse.clone())?;
    let order = cfg.order;
    let p = &cfg.interaction;

    // parameters of the fine stage: [t (n1) | ψ⁰ (n0) | λ]
    let np = n1 + n0 + 1;
    let lam = n1 + n0;
    let t_var = |a: usize| a;
    let coarse_var = |b: usize| n1 + b;
    // integrand on [ψ¹_c (|c|) | params] for a set of fine cubes
    let build = |cubes: &[usize], t_one: bool| -> Poly {
        let k = cubes.len();
        let nv = k + np;
        let mut w = Poly::zero(nv);
        for (i, &a) in cubes.iter().enumerate() {
            let low = Poly::var(nv, k + coarse_var(a / m));
            let low = if t_one { low } else { low.mul(&Poly::var(nv, k + t_var(a))) };
            w.add_assign_ref(&p.compose(&Poly::var(nv, i).add(&low)).sub(&p.compose(&low)));
        }
        boltzmann(&w, k + lam, order)
    };
    let all: Vec<usize> = (0..n1).collect();
    let objects = ObjectSet::uniform(n1)?;
    let full_t = build(&all, false);
    let g_t = plain_expectation(&fine.cov, &full_t, np);
    let forest_terms = forest_terms_by_derivative(&objects, &fine.cov, &full_t, np)?;
    let fine_horizontal = forest_terms.iter().fold(Poly::zero(np), |acc, (_, v)| acc.add(v)) == g_t;

    // tree terms, each on its own sub-lattice
    let mut trees: BTreeMap<Tree, Poly> = BTreeMap::new();
    let mut forest_trees_list = Vec::with_capacity(forest_terms.len());
    for (forest, _) in &forest_terms {
        let ts = forest_trees(&objects, forest);
        for t in &ts {
            if !trees.contains_key(t) {
                let sub = fine.restrict(&t.cubes);
                let (so, sf) = t.local();
                let v = forest_term_by_insertion(&so, &sub.cov, &build(&t.cubes, false), np, &sf);
                trees.insert(t.clone(), v);
            }
        }
        forest_trees_list.push(ts);
    }
    let product = |ts: &[Tree], value: &dyn Fn(&Tree) -> Poly, nv: usize, lam: usize| {
        ts.iter().fold(Poly::one(nv), |acc, t| truncated_mul(&acc, &value(t), lam, order))
    };
    let factorization = forest_terms.iter().zip(&forest_trees_list).all(|((_, v), ts)| *v == product(ts, &|t| trees[t].clone(), np, lam));

    // vertical expansion of each tree: polymers on [ψ⁰ (n0) | λ]
    let nf = n0 + 1;
    let to_fields: Vec<usize> = (0..n1).map(|_| 0).chain(0..n0).chain([n0]).collect();
    let t_at = |v: &Poly, x: Rat| -> Poly {
        let subs: Vec<(usize, Rat)> = (0..n1).map(|a| (t_var(a), x.clone())).collect();
        v.substitute(&subs).embed(nf, &to_fields)
    };
    let mut vertical = true;
    let mut vert_sum: BTreeMap<Tree, Poly> = BTreeMap::new();
    let mut polymers = Vec::new();
    for (t, v) in &trees {
        let vars: Vec<usize> = t.cubes.iter().map(|&a| t_var(a)).collect();
        let terms = vertical_expand(v, &vars, cfg.n_ext_max)?;
        let sum = vertical_total(&terms, np).embed(nf, &to_fields);
        vertical &= sum == t_at(v, Rat::one());
        vert_sum.insert(t.clone(), sum);
        let pos = |c: usize| t.cubes.iter().position(|&x| x == c).expect("edge in tree");
        for term in terms {
            if term.value.is_zero() {
                continue;
            }
            polymers.push(Polymer {
                nodes: t.cubes.iter().map(|&cube| Node { scale: 1, cube }).collect(),
                links: t.edges.iter().map(|&(a, b)| (pos(a), pos(b))).collect(),
                inclusion: Vec::new(),
                external: term.derivatives(),
                remainder: term.has_remainder(),
                field_scale: 0,
                field_vars: n0,
                value: term.value.embed(nf, &to_fields),
            });
        }
    }
    let gas = forest_trees_list.iter().fold(Poly::zero(nf), |acc, ts| acc.add(&product(ts, &|t| vert_sum[t].clone(), nf, n0)));
    let g1 = t_at(&g_t, Rat::one());
    let polymer_gas = gas == g1;

    // vacuum resummation
    let vacuum_gas =
        forest_trees_list.iter().fold(Poly::zero(nf), |acc, ts| acc.add(&product(ts, &|t| t_at(&trees[t], Rat::zero()), nf, n0)));
    let g0 = lambda_series(&t_at(&g_t, Rat::zero()), n0, order as usize + 1);
    let fine_direct = partition_series(&fine, &p.without_constant(), order)?;
    let vacuum = lambda_series(&vacuum_gas, n0, order as usize + 1) == g0 && g0 == fine_direct;
    let fine_free_energy = {
        let mut f = g0.log();
        let inv = Rat::new(1.into(), (n1 as i64).into());
        for c in &mut f.0 {
            *c = c.clone() * &inv;
        }
        f
    };

    let classes = classify_and_extract_local_parts(&polymers, cfg.n_ext_max, m);
    let mut counts = ClassCounts::default();
    let mut local_sum = Poly::zero(nf);
    let mut local_parts = true;
    for (poly, c) in polymers.iter().zip(&classes) {
        match c.class {
            PolymerClass::Vacuum => counts.vacuum += 1,
            PolymerClass::Convergent => counts.convergent += 1,
            PolymerClass::Divergent => {
                counts.divergent += 1;
                let local = c.local_part.as_ref().expect("divergent has a local part");
                local_sum.add_assign_ref(local);
                let rest = poly.value.sub(local);
                for b in 0..n0 {
                    local_parts &= collapse_fields(&rest, n0, b).is_zero();
                }
            }
        }
    }

    // coarse stage on [ψ⁰ (n0) | λ]: E[e^{−λΣ_a P(ψ⁰_{a/m})} G(1, ψ⁰)/G(0)]
    let coarse_fields: Vec<usize> = (0..n1).map(|a| a / m).collect();
    let bare = boltzmann(&interaction_poly(p, nf, &coarse_fields), n0, order);
    let inv_g0 = Series(g0.log().0.into_iter().map(|c| -c).collect()).exp();
    let integrand = series_times(&inv_g0, &truncated_mul(&bare, &g1, n0, order), n0);
    let coarse_objects = ObjectSet::uniform(n0)?;
    let coarse_raw = forest_terms_by_derivative(&coarse_objects, &coarse.cov, &integrand, 1)?;
    let coarse_terms: Vec<(Forest, Series)> = coarse_raw.into_iter().map(|(f, v)| (f, lambda_series(&v, 0, order as usize + 1))).collect();
    let coarse_sum = coarse_terms.iter().fold(Series::zero(order as usize + 1), |acc, (_, s)| acc.add(s));
    let coarse_direct = lambda_series(&plain_expectation(&coarse.cov, &integrand, 1), 0, order as usize + 1);
    let coarse_horizontal = coarse_sum == coarse_direct;
    let reconstructed = g0.mul(&coarse_sum);

    // direct: one lattice with covariance C¹ + C⁰ along the parents
    let combined: Vec<Vec<Rat>> = (0..n1).map(|a| (0..n1).map(|b| cfg.fine[a][b].clone() + &cfg.coarse[a / m][b / m]).collect()).collect();
    let direct = partition_series(&CubeLattice::new(1, combined)?, p, order)?;
    let reconstruction = reconstructed == direct;

    Ok(TwoScaleReport {
        checks: TwoScaleChecks {
            fine_horizontal,
            factorization,
            vertical,
            polymer_gas,
            vacuum,
            local_parts,
            coarse_horizontal,
            reconstruction,
        },
        trees: trees.len(),
        polymers,
        classes,
        counts,
        fine_free_energy,
        local_sum,
        direct,
        reconstructed,
        coarse_terms,
    })
}

// ---------------------------------------------------------------------------
// free energy

#[derive(Clone, Debug)]
pub struct FreeEnergyConfig {
    pub sizes: Vec<usize>,
    /// Nearest-neighbour covariance on the periodic chain.
    pub coupling_cov: Rat,
    pub lambdas: Vec<f64>,
    pub order: u32,
    pub samples: usize,
    pub seed: u64,
}

impl Default for FreeEnergyConfig {
    fn default() -> Self {
        FreeEnergyConfig {
            sizes: (4..=12).collect(),
            coupling_cov: Rat::new(3.into(), 10.into()),
            lambdas: vec![1e-2, 1e-3, 1e-4],
            order: 3,
            samples: 20_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FreeEnergyPoint {
    pub lambda: f64,
    /// Series value of `log Z / |V|`.
    pub series: f64,
    pub truncation: f64,
    pub mc: f64,
    pub mc_stderr: f64,
    /// The Monte Carlo error is too large to resolve the value.
    pub inconclusive: bool,
    /// Series and Monte Carlo agree within 5 standard errors plus truncation.
    pub consistent: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FreeEnergyRow {
    pub size: usize,
    /// `log Z / |V|` coefficients of `λ^0..λ^order`.
    pub coefficients: Vec<f64>,
    pub points: Vec<FreeEnergyPoint>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FreeEnergyReport {
    pub rows: Vec<FreeEnergyRow>,
    /// Smallest size from which every coefficient is constant in the volume.
    pub stable_from: Option<usize>,
    /// Largest `|f_{V'} − f_V|` between consecutive sizes at each coupling.
    pub last_difference: Vec<f64>,
    pub cauchy: bool,
    /// `sup_V |f_V / λ|` at each coupling.
    pub ratio_to_lambda: Vec<f64>,
    pub inconclusive: bool,
}

/// Exact per-cube coefficients of `log Z` on a periodic chain of `n` cubes.
pub fn free_energy_coefficients(n: usize, c: &Rat, interaction: &CubeInteraction, order: u32) -> Result<Series, ClusterError> {
    let lattice = CubeLattice::nearest_neighbor(n, c.clone(), true)?;
    let mut f = partition_series(&lattice, interaction, order)?.log();
    let inv = Rat::new(1.into(), (n as i64).into());
    for x in &mut f.0 {
        *x = x.clone() * &inv;
    }
    Ok(f)
}

pub fn free_energy_extensivity(cfg: &FreeEnergyConfig, interaction: &CubeInteraction) -> Result<FreeEnergyReport, ClusterError> {
    check_order(cfg.order)?;
    if cfg.sizes.windows(2).any(|w| w[1] <= w[0]) || cfg.sizes.is_empty() {
        return Err(ClusterError::Config("sizes must be increasing".into()));
    }
    let mut rows = Vec::new();
    let mut exact = Vec::new();
    for &n in &cfg.sizes {
        let f = free_energy_coefficients(n, &cfg.coupling_cov, interaction, cfg.order)?;
        let lattice = CubeLattice::nearest_neighbor(n, cfg.coupling_cov.clone(), true)?;
        let mc = partition_monte_carlo(&lattice, interaction, &cfg.lambdas, cfg.samples, rng::stream_id(&[cfg.seed, n as u64]))?;
        let last = rat_to_f64(&f.0[cfg.order as usize]).abs();
        let points = cfg
            .lambdas
            .iter()
            .zip(mc)
            .map(|(&l, z)| {
                let vol = n as f64;
                let series = f.eval_f64(l);
                let truncation = last * l.powi(cfg.order as i32);
                let mc = z.mean.ln() / vol;
                let mc_stderr = z.stderr / z.mean / vol;
                FreeEnergyPoint {
                    lambda: l,
                    series,
                    truncation,
                    mc,
                    mc_stderr,
                    inconclusive: mc_stderr > 0.1 * series.abs(),
                    consistent: (mc - series).abs() <= 5.0 * mc_stderr + truncation,
                }
            })
            .collect();
        rows.push(FreeEnergyRow { size: n, coefficients: f.0.iter().map(rat_to_f64).collect(), points });
        exact.push(f);
    }
    let stable_from = (0..exact.len()).find(|&i| exact[i..].windows(2).all(|w| w[0] == w[1])).map(|i| cfg.sizes[i]);
    let last_difference: Vec<f64> = (0..cfg.lambdas.len())
        .map(|k| rows.windows(2).last().map(|w| (w[1].points[k].series - w[0].points[k].series).abs()).unwrap_or(0.0))
        .collect();
    let cauchy = (0..cfg.lambdas.len()).all(|k| {
        let tol = rows.iter().map(|r| r.points[k].truncation).fold(0.0, f64::max);
        last_difference[k] <= tol
    });
    let ratio_to_lambda = cfg
        .lambdas
        .iter()
        .enumerate()
        .map(|(k, &l)| if l == 0.0 { 0.0 } else { rows.iter().map(|r| (r.points[k].series / l).abs()).fold(0.0, f64::max) })
        .collect();
    let inconclusive = rows.iter().any(|r| r.points.iter().any(|p| p.inconclusive || !p.consistent));
    Ok(FreeEnergyReport { rows, stable_from, last_difference, cauchy, ratio_to_lambda, inconclusive })
}

/// Decimal rendering of a rational that stays exact for integers.
pub fn rat_string(r: &Rat) -> String {
    if r.is_integer() {
        r.to_integer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{rat, rat_int};

    #[test]
    fn boltzmann_is_the_exponential_series() {
        let v = Poly::var(2, 0);
        let b = boltzmann(&v, 1, 3);
        assert_eq!(b.coeff(&[2, 2]), rat(1, 2));
        assert_eq!(b.coeff(&[3, 3]), rat(-1, 6));
    }

    #[test]
    fn single_cube_phi4() {
        let s = partition_series(&CubeLattice::independent(1), &CubeInteraction::phi4(), 2).unwrap();
        assert_eq!(s.0, vec![rat_int(1), rat_int(-3), rat(105, 2)]);
    }

    #[test]
    fn interaction_validation() {
        assert!(CubeInteraction::new(vec![rat_int(0), rat_int(0), rat_int(0), rat_int(1)]).is_err());
        assert!(CubeInteraction::new(vec![rat_int(0), rat_int(0), rat_int(-1)]).is_err());
        assert!(CubeInteraction::new(vec![rat_int(1)]).is_err());
    }

    #[test]
    fn dressed_two_scales_by_hand() {
        let d = DressedLagrangian::new(2, 0, 1, vec![rat_int(3), rat_int(2)]).unwrap();
        // λ¹(ψ¹ + t¹ψ⁰)² + λ⁰(1 − (t¹)²)(ψ⁰)²
        let n = d.nvars();
        let (p0, p1, t1) = (Poly::var(n, 0), Poly::var(n, 1), Poly::var(n, 3));
        let hand = p1.add(&t1.mul(&p0)).pow(2).scale(&rat_int(2)).add(&Poly::one(n).sub(&t1.pow(2)).mul(&p0.pow(2)).scale(&rat_int(3)));
        assert_eq!(d.poly(), hand);
    }
}
