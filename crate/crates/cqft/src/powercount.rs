//! Multi-scale power counting: superficial degrees, peeling by scale,
//! quasi-local components, spring-factor sums and the bubble integral.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad;

/// Largest external structure scanned by [`n_ext_max`].
pub const LEG_CAP: usize = 12;

#[derive(Debug, Error)]
pub enum PowerCountError {
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("field `{name}`: improved dimension {beta_tilde} is not beta + 0, 1 or 2 (beta = {beta})")]
    BadImprovement { name: String, beta: f64, beta_tilde: f64 },
    #[error("field `{name}`: improved dimension {beta_tilde} must exceed D/2 = {half}")]
    ImprovementTooSmall { name: String, beta_tilde: f64, half: f64 },
    #[error("vertex {index} has dimension {excess} ≠ 0: theory is not just renormalizable")]
    NotJustRenormalizable { index: usize, excess: f64 },
    #[error("external field `{name}` has dimension {beta} ≤ 0: divergent structures are unbounded")]
    UnboundedDivergence { name: String, beta: f64 },
    #[error("divergent external structures persist at the {LEG_CAP}-leg cap")]
    CapReached,
    #[error("line {line} has an endpoint outside the {vertices} vertices")]
    BadEndpoint { line: usize, vertices: usize },
    #[error("diagram is not connected")]
    Disconnected,
    #[error("diagram has no internal lines")]
    Degenerate,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FieldSpec {
    pub name: String,
    pub beta: f64,
    /// dimension after averaging subtraction; equal to `beta` when none is declared
    pub beta_tilde: f64,
    #[serde(default)]
    pub derived: bool,
}

impl FieldSpec {
    pub fn plain(name: &str, beta: f64) -> Self {
        FieldSpec { name: name.into(), beta, beta_tilde: beta, derived: false }
    }

    /// Plain averaging when `beta ≤ D/2`.
    pub fn averaged(name: &str, beta: f64, dim: u32) -> Self {
        let beta_tilde = if beta > dim as f64 / 2.0 { beta } else { beta + 1.0 };
        FieldSpec { name: name.into(), beta, beta_tilde, derived: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct VertexSpec {
    pub fields: Vec<String>,
    #[serde(default = "unit")]
    pub coupling: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TheorySpec {
    pub dim: u32,
    pub fields: Vec<FieldSpec>,
    pub vertices: Vec<VertexSpec>,
    /// Taylor subtraction order of the local part
    pub tau: u32,
    /// fields allowed on external structures (all fields when absent)
    #[serde(default)]
    pub external: Option<Vec<String>>,
    /// only even numbers of external legs
    #[serde(default)]
    pub even_legs: bool,
}

impl TheorySpec {
    pub fn validate(&self) -> Result<(), PowerCountError> {
        let half = self.dim as f64 / 2.0;
        for f in &self.fields {
            let gap = f.beta_tilde - f.beta;
            if ![0.0, 1.0, 2.0].iter().any(|k| (gap - k).abs() < 1e-12) {
                return Err(PowerCountError::BadImprovement { name: f.name.clone(), beta: f.beta, beta_tilde: f.beta_tilde });
            }
            if gap > 0.5 && f.beta_tilde <= half {
                return Err(PowerCountError::ImprovementTooSmall { name: f.name.clone(), beta_tilde: f.beta_tilde, half });
            }
        }
        for (index, v) in self.vertices.iter().enumerate() {
            let excess = self.dimension_sum(&v.fields)? - self.dim as f64;
            if excess.abs() > 1e-12 {
                return Err(PowerCountError::NotJustRenormalizable { index, excess });
            }
        }
        if let Some(ext) = &self.external {
            for name in ext {
                self.field(name)?;
            }
        }
        Ok(())
    }

    pub fn field(&self, name: &str) -> Result<&FieldSpec, PowerCountError> {
        self.fields.iter().find(|f| f.name == name).ok_or_else(|| PowerCountError::UnknownField(name.into()))
    }

    pub fn beta(&self, name: &str) -> Result<f64, PowerCountError> {
        Ok(self.field(name)?.beta)
    }

    fn dimension_sum<S: AsRef<str>>(&self, names: &[S]) -> Result<f64, PowerCountError> {
        names.iter().map(|n| self.beta(n.as_ref())).sum()
    }

    /// Massless φ⁴ in four dimensions.
    pub fn phi4() -> Self {
        TheorySpec {
            dim: 4,
            fields: vec![FieldSpec { name: "phi".into(), beta: 1.0, beta_tilde: 3.0, derived: false }],
            vertices: vec![VertexSpec { fields: vec!["phi".into(); 4], coupling: 1.0 }],
            tau: 2,
            external: Some(vec!["phi".into()]),
            even_legs: true,
        }
    }

    /// Fractional Brownian rough-path model with Hurst index `alpha`.
    pub fn rough_path(alpha: f64) -> Self {
        let d = 1;
        let derived = |name: &str| FieldSpec { derived: true, ..FieldSpec::averaged(name, 1.0 - alpha, d) };
        TheorySpec {
            dim: d,
            fields: vec![
                FieldSpec::averaged("phi1", -alpha, d),
                FieldSpec::averaged("phi2", -alpha, d),
                derived("dphi1"),
                derived("dphi2"),
                FieldSpec::averaged("sigma_plus", 2.0 * alpha, d),
                FieldSpec::averaged("sigma_minus", 2.0 * alpha, d),
            ],
            vertices: vec![
                VertexSpec { fields: vec!["dphi1".into(), "phi2".into(), "sigma_plus".into()], coupling: 1.0 },
                VertexSpec { fields: vec!["dphi1".into(), "phi2".into(), "sigma_minus".into()], coupling: 1.0 },
            ],
            tau: 0,
            external: Some(vec!["sigma_plus".into(), "sigma_minus".into()]),
            even_legs: true,
        }
    }
}

/// `ω = D − Σ β_ext`.
pub fn superficial_degree<S: AsRef<str>>(theory: &TheorySpec, external: &[S]) -> Result<f64, PowerCountError> {
    Ok(theory.dim as f64 - theory.dimension_sum(external)?)
}

/// `ω* = ω − τ − 1`.
pub fn renormalized_degree(omega: f64, tau: u32) -> f64 {
    omega - tau as f64 - 1.0
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Line {
    /// `(vertex, field)` at each end
    pub ends: [(usize, String); 2],
    pub scale: i32,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExternalLine {
    pub vertex: usize,
    pub field: String,
    pub scale: i32,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct MultiScaleDiagram {
    pub vertices: usize,
    pub internal: Vec<Line>,
    pub external: Vec<ExternalLine>,
}

impl MultiScaleDiagram {
    pub fn validate(&self) -> Result<(), PowerCountError> {
        for (line, l) in self.internal.iter().enumerate() {
            if l.ends.iter().any(|e| e.0 >= self.vertices) {
                return Err(PowerCountError::BadEndpoint { line, vertices: self.vertices });
            }
        }
        for (k, e) in self.external.iter().enumerate() {
            if e.vertex >= self.vertices {
                return Err(PowerCountError::BadEndpoint { line: self.internal.len() + k, vertices: self.vertices });
            }
        }
        Ok(())
    }

    /// Two vertices joined by one scale-`j` line per entry of `line_fields`,
    /// each vertex carrying the `external` fields at scale `e`.
    pub fn bubble(line_fields: &[&str], external: &[&str], j: i32, e: i32) -> Self {
        let internal = line_fields.iter().map(|f| Line { ends: [(0, f.to_string()), (1, f.to_string())], scale: j }).collect();
        let external =
            (0..2).flat_map(|v| external.iter().map(move |f| ExternalLine { vertex: v, field: f.to_string(), scale: e })).collect();
        MultiScaleDiagram { vertices: 2, internal, external }
    }

    fn is_connected(&self) -> bool {
        if self.vertices == 0 {
            return true;
        }
        let mut uf = UnionFind::new(self.vertices);
        for l in &self.internal {
            uf.union(l.ends[0].0, l.ends[1].0);
        }
        (1..self.vertices).all(|v| uf.find(v) == uf.find(0))
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum LegSource {
    /// lower-scale internal line of the whole diagram
    Line(usize),
    /// true external line
    External(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Leg {
    pub field: String,
    pub scale: i32,
    pub source: LegSource,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Component {
    pub vertices: Vec<usize>,
    pub lines: Vec<usize>,
    pub legs: Vec<Leg>,
}

impl Component {
    pub fn min_internal_scale(&self, d: &MultiScaleDiagram) -> i32 {
        self.lines.iter().map(|&l| d.internal[l].scale).min().expect("component has lines")
    }

    pub fn max_external_scale(&self) -> Option<i32> {
        self.legs.iter().map(|l| l.scale).max()
    }

    pub fn degree(&self, theory: &TheorySpec) -> Result<f64, PowerCountError> {
        let names: Vec<&str> = self.legs.iter().map(|l| l.field.as_str()).collect();
        superficial_degree(theory, &names)
    }
}

/// Connected components of the lines of scale `≥ j`, with their external legs.
pub fn peel(d: &MultiScaleDiagram, j: i32) -> Vec<Component> {
    let mut uf = UnionFind::new(d.vertices);
    let kept: Vec<usize> = (0..d.internal.len()).filter(|&l| d.internal[l].scale >= j).collect();
    for &l in &kept {
        uf.union(d.internal[l].ends[0].0, d.internal[l].ends[1].0);
    }
    let mut roots: Vec<usize> = kept.iter().map(|&l| uf.find(d.internal[l].ends[0].0)).collect();
    roots.sort_unstable();
    roots.dedup();
    roots
        .into_iter()
        .map(|r| {
            let vertices: Vec<usize> = (0..d.vertices).filter(|&v| uf.find(v) == r).collect();
            let lines: Vec<usize> = kept.iter().copied().filter(|&l| uf.find(d.internal[l].ends[0].0) == r).collect();
            let mut legs = Vec::new();
            for (l, line) in d.internal.iter().enumerate() {
                if line.scale >= j {
                    continue;
                }
                for (v, f) in &line.ends {
                    if uf.find(*v) == r {
                        legs.push(Leg { field: f.clone(), scale: line.scale, source: LegSource::Line(l) });
                    }
                }
            }
            for (k, e) in d.external.iter().enumerate() {
                if uf.find(e.vertex) == r {
                    legs.push(Leg { field: e.field.clone(), scale: e.scale, source: LegSource::External(k) });
                }
            }
            Component { vertices, lines, legs }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuasiLocalReport {
    pub is_quasi_local: bool,
    pub internal_min: i32,
    pub external_max: Option<i32>,
    pub height: Option<i32>,
    pub omega: f64,
    pub dangerous: bool,
}

/// Heights `ht = i − e`; quasi-local iff `ht ≥ 0`, dangerous iff also `ω ≥ 0`.
pub fn classify_quasi_local(theory: &TheorySpec, d: &MultiScaleDiagram) -> Result<QuasiLocalReport, PowerCountError> {
    d.validate()?;
    if d.internal.is_empty() {
        return Err(PowerCountError::Degenerate);
    }
    if !d.is_connected() {
        return Err(PowerCountError::Disconnected);
    }
    let internal_min = d.internal.iter().map(|l| l.scale).min().expect("non-empty");
    let external_max = d.external.iter().map(|e| e.scale).max();
    let names: Vec<&str> = d.external.iter().map(|e| e.field.as_str()).collect();
    let omega = superficial_degree(theory, &names)?;
    let height = external_max.map(|e| internal_min - e);
    let is_quasi_local = height.is_none_or(|h| h >= 0);
    Ok(QuasiLocalReport { is_quasi_local, internal_min, external_max, height, omega, dangerous: is_quasi_local && omega >= 0.0 })
}

/// Level exponent `Σ_i (j_i − j_{i−1}) Σ_C ω(C)` over the peeling sequence,
/// with `ω` replaced by `ω − τ − 1` on divergent quasi-local components when
/// `renormalized`. Levels are the distinct line scales above `base`.
pub fn amplitude_exponent(theory: &TheorySpec, d: &MultiScaleDiagram, renormalized: bool, base: i32) -> Result<f64, PowerCountError> {
    d.validate()?;
    let mut levels: BTreeSet<i32> = d.internal.iter().map(|l| l.scale).chain(d.external.iter().map(|e| e.scale)).collect();
    levels.insert(base);
    let levels: Vec<i32> = levels.into_iter().filter(|&j| j >= base).collect();
    let mut total = 0.0;
    for w in levels.windows(2) {
        let (lower, j) = (w[0], w[1]);
        let mut sum = 0.0;
        for c in peel(d, j) {
            let omega = c.degree(theory)?;
            let local = c.max_external_scale().is_none_or(|e| e < j);
            sum += if renormalized && local && omega >= 0.0 { renormalized_degree(omega, theory.tau) } else { omega };
        }
        total += (j - lower) as f64 * sum;
    }
    Ok(total)
}

#[derive(Clone, Debug, Serialize)]
pub struct DivergentStructure {
    pub fields: Vec<String>,
    pub omega: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExternalScan {
    pub n_ext_max: usize,
    pub divergent: Vec<DivergentStructure>,
}

/// `1 + ` the largest leg count of an allowed external structure with `ω ≥ 0`.
pub fn n_ext_max(theory: &TheorySpec) -> Result<ExternalScan, PowerCountError> {
    theory.validate()?;
    let allowed: Vec<String> = match &theory.external {
        Some(e) => e.clone(),
        None => theory.fields.iter().map(|f| f.name.clone()).collect(),
    };
    for name in &allowed {
        let beta = theory.beta(name)?;
        if beta <= 0.0 {
            return Err(PowerCountError::UnboundedDivergence { name: name.clone(), beta });
        }
    }
    let mut divergent = Vec::new();
    let mut max_legs = 0;
    for legs in 1..=LEG_CAP {
        if theory.even_legs && legs % 2 == 1 {
            continue;
        }
        for multiset in multisets(allowed.len(), legs) {
            let names: Vec<String> = multiset.iter().map(|&i| allowed[i].clone()).collect();
            let omega = superficial_degree(theory, &names)?;
            if omega >= 0.0 {
                if legs == LEG_CAP {
                    return Err(PowerCountError::CapReached);
                }
                max_legs = max_legs.max(legs);
                divergent.push(DivergentStructure { fields: names, omega });
            }
        }
    }
    Ok(ExternalScan { n_ext_max: max_legs + 1, divergent })
}

fn multisets(kinds: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(kinds: usize, size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for k in start..kinds {
            cur.push(k);
            rec(kinds, size, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(kinds, size, 0, &mut Vec::new(), &mut out);
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct HighMomentumReport {
    pub partial_sums: Vec<f64>,
    pub pass: bool,
}

/// Partial sums `β_I, β_I + β_{I−1}, …, β_I + … + β_2`, each strictly below `D`.
pub fn high_momentum_condition<S: AsRef<str>>(theory: &TheorySpec, vertex: &[S]) -> Result<HighMomentumReport, PowerCountError> {
    let betas: Vec<f64> = vertex.iter().map(|n| theory.beta(n.as_ref())).collect::<Result<_, _>>()?;
    let mut partial_sums = Vec::new();
    let mut acc = 0.0;
    for b in betas.iter().skip(1).rev() {
        acc += b;
        partial_sums.push(acc);
    }
    let pass = partial_sums.iter().all(|&s| s < theory.dim as f64);
    Ok(HighMomentumReport { partial_sums, pass })
}

#[derive(Clone, Debug, Serialize)]
pub struct SpringSum {
    pub converges: bool,
    pub partial_sums: Vec<f64>,
    /// last increment relative to the sum
    pub last_increment: f64,
}

/// Depth-`depth` partial sums of
/// `Σ_a M^{−β̃a} [M^{−β̃'a} + Σ_{b<a} M^{(D−β̃')b}]`; converges iff `β̃ + β̃' > D`.
pub fn spring_sum(beta_tilde: f64, beta_tilde_other: f64, dim: u32, m: f64, depth: usize) -> SpringSum {
    let d = dim as f64;
    let mut inner = 0.0;
    let mut total = 0.0;
    let mut partial_sums = Vec::with_capacity(depth + 1);
    for a in 0..=depth {
        let a_f = a as f64;
        total += m.powf(-beta_tilde * a_f) * (m.powf(-beta_tilde_other * a_f) + inner);
        inner += m.powf((d - beta_tilde_other) * a_f);
        partial_sums.push(total);
    }
    let n = partial_sums.len();
    let last_increment = if n >= 2 { (partial_sums[n - 1] - partial_sums[n - 2]) / partial_sums[n - 1] } else { 0.0 };
    SpringSum { converges: beta_tilde + beta_tilde_other > d, partial_sums, last_increment }
}

pub fn spring_sum_converges(beta_tilde: f64, beta_tilde_other: f64, dim: u32) -> bool {
    beta_tilde + beta_tilde_other > dim as f64
}

#[derive(Clone, Debug, Serialize)]
pub struct BubbleFit {
    pub alpha: f64,
    pub slope: f64,
    /// `(ρ, A(ρ))`
    pub values: Vec<(f64, f64)>,
    pub converged: bool,
}

/// `A(ρ) = ∫_{|ξ₁|<|ξ−ξ₁|, |ξ₁|≤M^ρ} |ξ₁|^{1−2α} |ξ−ξ₁|^{−1−2α} dξ₁` at external momentum `xi`.
pub fn bubble_integral(alpha: f64, m: f64, rho: f64, xi: f64) -> quad::QuadResult {
    let cutoff = m.powf(rho);
    let f = |x: f64| x.abs().powf(1.0 - 2.0 * alpha) * (xi - x).abs().powf(-1.0 - 2.0 * alpha);
    // log substitution on both sides of the origin; the region is ξ₁ < ξ/2
    let neg = |v: f64| {
        let x = v.exp();
        x * f(-x)
    };
    let pos = |v: f64| {
        let x = v.exp();
        x * f(x)
    };
    let lo = xi.ln() - 40.0;
    let mid = xi.ln();
    let mut breaks = vec![lo, mid];
    let top = cutoff.ln();
    let mut v = mid;
    while v + 2.0 < top {
        v += 2.0;
        breaks.push(v);
    }
    breaks.push(top);
    let a = quad::integrate_pieces(neg, &breaks, 1e-10, 0.0);
    let b = quad::integrate(pos, lo, (0.5 * xi).ln(), 1e-10, 0.0);
    quad::QuadResult { value: a.value + b.value, error: a.error + b.error, converged: a.converged && b.converged }
}

/// Least-squares slope of `log_M A(ρ)` against `ρ`.
pub fn numeric_bubble_scaling(alpha: f64, rhos: &[f64], m: f64, xi: f64) -> BubbleFit {
    let mut values = Vec::new();
    let mut converged = true;
    for &rho in rhos {
        let r = bubble_integral(alpha, m, rho, xi);
        converged &= r.converged;
        values.push((rho, r.value));
    }
    let ys: Vec<f64> = values.iter().map(|&(_, a)| a.ln() / m.ln()).collect();
    let slope = least_squares_slope(rhos, &ys);
    BubbleFit { alpha, slope, values, converged }
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        TheorySpec::phi4().validate().unwrap();
        for a in [0.1, 0.15, 0.2, 0.3, 0.4] {
            TheorySpec::rough_path(a).validate().unwrap();
        }
    }

    #[test]
    fn renormalized_degrees() {
        assert_eq!(renormalized_degree(2.0, 2), -1.0);
        assert_eq!(renormalized_degree(1.0, 0), 0.0);
    }

    #[test]
    fn peel_extremes() {
        let d = MultiScaleDiagram::bubble(&["phi", "phi"], &["phi"], 5, 2);
        assert_eq!(peel(&d, 1).len(), 1);
        assert!(peel(&d, 6).is_empty());
        let c = &peel(&d, 3)[0];
        assert_eq!(c.lines, vec![0, 1]);
        assert_eq!(c.legs.len(), 2);
    }

    #[test]
    fn high_momentum_examples() {
        assert!(high_momentum_condition(&TheorySpec::phi4(), &["phi"; 4]).unwrap().pass);
        let t =
            TheorySpec { dim: 1, fields: vec![FieldSpec::plain("psi", 0.6)], vertices: vec![], tau: 0, external: None, even_legs: false };
        let r = high_momentum_condition(&t, &["psi"; 2]).unwrap();
        assert_eq!(r.partial_sums, vec![0.6]);
        assert!(r.pass);
        let r = high_momentum_condition(&t, &["psi"; 3]).unwrap();
        assert!(!r.pass);
    }
}
