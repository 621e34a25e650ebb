//! Forests on finite object sets and exact evaluation of the BKAR forest formulas.
//!
//! A functional `Z` of the pair variables `z_ℓ` is recovered at `z = 1` as a sum
//! over forests `F` of `∫ dw (∏_{ℓ∈F} ∂_{z_ℓ}) Z (z(w))`, where `z_ℓ(w)` is the minimum
//! of `w` along the forest path joining the endpoints of `ℓ` (0 if there is none).
//! The restricted variant only admits forests whose trees carry at most one
//! type-2 object, and reads paths in the forest with all type-2 objects merged.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::poly::{Poly, Rat};

pub const DEFAULT_CAP: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("{n} objects exceeds the enumeration cap {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("object set must be non-empty")]
    Empty,
    #[error("functional has {got} variables, expected {expected} link variables")]
    ArityMismatch { got: usize, expected: usize },
    #[error("restricted expansion needs Z constant in the root-root link {0:?}")]
    RootLinkDependence((usize, usize)),
    #[error("functional depends on parameters; use bkar_expand")]
    NotConstant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ObjectType {
    One,
    Two,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Variant {
    Bkar1,
    Bkar2,
}

/// Objects `0..n` with a type tag each; links are the unordered pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectSet {
    types: Vec<ObjectType>,
}

impl ObjectSet {
    pub fn uniform(n: usize) -> Result<Self, ForestError> {
        ObjectSet::with_types(vec![ObjectType::One; n])
    }

    pub fn with_types(types: Vec<ObjectType>) -> Result<Self, ForestError> {
        if types.is_empty() {
            return Err(ForestError::Empty);
        }
        Ok(ObjectSet { types })
    }

    pub fn n(&self) -> usize {
        self.types.len()
    }

    pub fn types(&self) -> &[ObjectType] {
        &self.types
    }

    pub fn is_root(&self, o: usize) -> bool {
        self.types[o] == ObjectType::Two
    }

    pub fn num_links(&self) -> usize {
        let n = self.n();
        n * (n - 1) / 2
    }

    /// Index of the link `{a, b}` in lexicographic order.
    pub fn link_index(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        assert!(a != b && b < self.n(), "bad link ({a},{b})");
        let n = self.n();
        a * (2 * n - a - 1) / 2 + (b - a - 1)
    }

    pub fn link(&self, l: usize) -> (usize, usize) {
        let n = self.n();
        let mut l = l;
        for a in 0..n {
            let row = n - a - 1;
            if l < row {
                return (a, a + 1 + l);
            }
            l -= row;
        }
        panic!("link index out of range")
    }

    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_links()).map(|l| self.link(l))
    }

    fn check_cap(&self, cap: usize) -> Result<(), ForestError> {
        if self.n() > cap {
            return Err(ForestError::CapExceeded { n: self.n(), cap });
        }
        Ok(())
    }
}

/// An acyclic set of links, kept sorted, with the induced component labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Forest {
    edges: Vec<usize>,
    labels: Vec<u8>,
    #[serde(skip)]
    ends: Vec<(usize, usize)>,
}

impl Forest {
    pub fn empty(n: usize) -> Self {
        Forest { edges: Vec::new(), labels: (0..n as u8).collect(), ends: Vec::new() }
    }

    /// Builds a forest from link indices; `None` if they contain a cycle.
    pub fn from_links(objects: &ObjectSet, links: &[usize]) -> Option<Self> {
        let mut f = Forest::empty(objects.n());
        let mut sorted = links.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for l in sorted {
            let (a, b) = objects.link(l);
            if f.labels[a] == f.labels[b] {
                return None;
            }
            f.join(l, a, b);
        }
        Some(f)
    }

    fn join(&mut self, l: usize, a: usize, b: usize) {
        let (keep, drop) = {
            let (x, y) = (self.labels[a], self.labels[b]);
            (x.min(y), x.max(y))
        };
        for lab in self.labels.iter_mut() {
            if *lab == drop {
                *lab = keep;
            }
        }
        self.edges.push(l);
        self.ends.push((a, b));
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn same_component(&self, a: usize, b: usize) -> bool {
        self.labels[a] == self.labels[b]
    }

    /// Components as sorted object lists, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::new();
        let mut seen: Vec<u8> = Vec::new();
        for (o, &lab) in self.labels.iter().enumerate() {
            match seen.iter().position(|&s| s == lab) {
                Some(i) => out[i].push(o),
                None => {
                    seen.push(lab);
                    out.push(vec![o]);
                }
            }
        }
        out
    }

    /// Positions (into `edges()`) along the unique forest path from `a` to `b`.
    pub fn path(&self, a: usize, b: usize) -> Option<Vec<usize>> {
        if !self.same_component(a, b) {
            return None;
        }
        if a == b {
            return Some(Vec::new());
        }
        let n = self.labels.len();
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut visited = vec![false; n];
        visited[a] = true;
        let mut queue = std::collections::VecDeque::from([a]);
        while let Some(u) = queue.pop_front() {
            if u == b {
                break;
            }
            for (pos, &(x, y)) in self.ends.iter().enumerate() {
                let v = if x == u {
                    y
                } else if y == u {
                    x
                } else {
                    continue;
                };
                if !visited[v] {
                    visited[v] = true;
                    prev[v] = Some((u, pos));
                    queue.push_back(v);
                }
            }
        }
        let mut out = Vec::new();
        let mut cur = b;
        while cur != a {
            let (p, pos) = prev[cur].expect("connected");
            out.push(pos);
            cur = p;
        }
        out.reverse();
        Some(out)
    }

    /// Path in the forest with all type-2 objects fused into one vertex.
    pub fn merged_path(&self, objects: &ObjectSet, a: usize, b: usize) -> Option<Vec<usize>> {
        if self.same_component(a, b) {
            return self.path(a, b);
        }
        let ra = self.root_of(objects, a)?;
        let rb = self.root_of(objects, b)?;
        let mut p = self.path(a, ra)?;
        p.extend(self.path(rb, b)?);
        Some(p)
    }

    fn root_of(&self, objects: &ObjectSet, o: usize) -> Option<usize> {
        (0..self.labels.len()).find(|&r| objects.is_root(r) && self.same_component(o, r))
    }

    /// Every tree is all type-1 or has exactly one type-2 object.
    pub fn is_restricted(&self, objects: &ObjectSet) -> bool {
        self.components().iter().all(|c| c.iter().filter(|&&o| objects.is_root(o)).count() <= 1)
    }

    fn path_for(&self, objects: &ObjectSet, a: usize, b: usize, variant: Variant) -> Option<Vec<usize>> {
        match variant {
            Variant::Bkar1 => self.path(a, b),
            Variant::Bkar2 => self.merged_path(objects, a, b),
        }
    }
}

/// Depth-first enumeration of forests as increasing acceptable link sequences.
pub struct ForestIter {
    objects: ObjectSet,
    restricted: bool,
    stack: Vec<Forest>,
    started: bool,
}

impl ForestIter {
    fn acceptable(&self, f: &Forest, l: usize) -> bool {
        let (a, b) = self.objects.link(l);
        if f.labels[a] == f.labels[b] {
            return false;
        }
        if self.restricted {
            let roots = |lab: u8| f.labels.iter().enumerate().filter(|&(o, &x)| x == lab && self.objects.is_root(o)).count();
            if roots(f.labels[a]) > 0 && roots(f.labels[b]) > 0 {
                return false;
            }
        }
        true
    }

    fn first_from(&self, f: &Forest, start: usize) -> Option<usize> {
        (start..self.objects.num_links()).find(|&l| self.acceptable(f, l))
    }

    fn extended(&self, f: &Forest, l: usize) -> Forest {
        let mut g = f.clone();
        let (a, b) = self.objects.link(l);
        g.join(l, a, b);
        g
    }
}

impl Iterator for ForestIter {
    type Item = Forest;

    fn next(&mut self) -> Option<Forest> {
        if !self.started {
            self.started = true;
            let f = Forest::empty(self.objects.n());
            self.stack.push(f.clone());
            return Some(f);
        }
        let top = self.stack.last()?.clone();
        let start = top.edges.last().map_or(0, |&l| l + 1);
        if let Some(l) = self.first_from(&top, start) {
            let g = self.extended(&top, l);
            self.stack.push(g.clone());
            return Some(g);
        }
        // backtrack: replace the last link by the next acceptable one
        loop {
            let cur = self.stack.pop()?;
            let last = *cur.edges.last()?;
            let parent = self.stack.last()?.clone();
            if let Some(l) = self.first_from(&parent, last + 1) {
                let g = self.extended(&parent, l);
                self.stack.push(g.clone());
                return Some(g);
            }
        }
    }
}

pub fn enumerate_forests(objects: &ObjectSet) -> Result<ForestIter, ForestError> {
    enumerate_forests_capped(objects, DEFAULT_CAP)
}

pub fn enumerate_forests_capped(objects: &ObjectSet, cap: usize) -> Result<ForestIter, ForestError> {
    objects.check_cap(cap)?;
    Ok(ForestIter { objects: objects.clone(), restricted: false, stack: Vec::new(), started: false })
}

/// Forests whose trees hold at most one type-2 object.
pub fn enumerate_restricted_forests(objects: &ObjectSet) -> Result<ForestIter, ForestError> {
    objects.check_cap(DEFAULT_CAP)?;
    Ok(ForestIter { objects: objects.clone(), restricted: true, stack: Vec::new(), started: false })
}

/// `z_ℓ(w)`: minimum of `w` (indexed like `forest.edges()`) along the path of `link`.
pub fn z_of_w(objects: &ObjectSet, forest: &Forest, link: usize, w: &[f64], variant: Variant) -> f64 {
    let (a, b) = objects.link(link);
    match forest.path_for(objects, a, b, variant) {
        None => 0.0,
        Some(p) => p.iter().map(|&pos| w[pos]).fold(1.0, f64::min),
    }
}

/// A polynomial in the link variables, possibly with extra parameter variables.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyFunctional {
    pub poly: Poly,
    /// Variable index of each link.
    pub link_vars: Vec<usize>,
}

impl PolyFunctional {
    /// Polynomial whose variables are exactly the links, in link order.
    pub fn new(objects: &ObjectSet, poly: Poly) -> Result<Self, ForestError> {
        if poly.nvars() != objects.num_links() {
            return Err(ForestError::ArityMismatch { got: poly.nvars(), expected: objects.num_links() });
        }
        Ok(PolyFunctional { link_vars: (0..poly.nvars()).collect(), poly })
    }

    pub fn with_parameters(poly: Poly, link_vars: Vec<usize>) -> Self {
        PolyFunctional { poly, link_vars }
    }

    /// Evaluation with every link variable set to `value` (parameters untouched).
    pub fn at_links(&self, value: &Rat) -> Poly {
        let subs: Vec<(usize, Rat)> = self.link_vars.iter().map(|&v| (v, value.clone())).collect();
        self.poly.substitute(&subs)
    }
}

/// Per-forest contribution; the value is a polynomial in the parameters.
#[derive(Clone, Debug)]
pub struct ForestTerm {
    pub forest: Forest,
    pub value: Poly,
}

#[derive(Clone, Debug)]
pub struct BkarExpansion {
    pub terms: Vec<ForestTerm>,
}

impl BkarExpansion {
    pub fn total(&self, nvars: usize) -> Poly {
        let mut acc = Poly::zero(nvars);
        for t in &self.terms {
            acc.add_assign_ref(&t.value);
        }
        acc
    }

    pub fn forests_visited(&self) -> usize {
        self.terms.len()
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// `∫_{[0,1]^F} dw f(z(w))`, exact. The cube splits into the |F|! simplices
/// `w_{σ(1)} < … < w_{σ(k)}`; on each, `z_ℓ` is the `w` of smallest rank on its path
/// and a monomial `∏ u_i^{b_i}` integrates to `∏_i 1/(b_1+…+b_i + i)`.
pub fn forest_integral(objects: &ObjectSet, forest: &Forest, f: &PolyFunctional, variant: Variant) -> Poly {
    let k = forest.len();
    let nvars = f.poly.nvars();
    let paths: Vec<Option<Vec<usize>>> = objects.links().map(|(a, b)| forest.path_for(objects, a, b, variant)).collect();
    let mut out = Poly::zero(nvars);
    if k == 0 {
        // every z vanishes except along empty merged paths, where it is 1
        for (e, c) in f.poly.terms() {
            let alive = f.link_vars.iter().enumerate().all(|(l, &v)| e[v] == 0 || matches!(&paths[l], Some(p) if p.is_empty()));
            if alive {
                let mut e2 = e.clone();
                for &v in &f.link_vars {
                    e2[v] = 0;
                }
                out.add_term(e2, c.clone());
            }
        }
        return out;
    }
    // group the monomials by their link-exponent pattern
    let mut groups: std::collections::BTreeMap<Vec<u32>, Poly> = std::collections::BTreeMap::new();
    for (e, c) in f.poly.terms() {
        let pattern: Vec<u32> = f.link_vars.iter().map(|&v| e[v]).collect();
        if pattern.iter().enumerate().any(|(l, &x)| x > 0 && paths[l].is_none()) {
            continue;
        }
        let mut rest = e.clone();
        for &v in &f.link_vars {
            rest[v] = 0;
        }
        groups.entry(pattern).or_insert_with(|| Poly::zero(nvars)).add_term(rest, c.clone());
    }
    if groups.is_empty() {
        return out;
    }
    let mut order: Vec<usize> = (0..k).collect(); // order[r] = edge position with rank r
    let mut rank = vec![0usize; k];
    loop {
        for (r, &pos) in order.iter().enumerate() {
            rank[pos] = r;
        }
        for (pattern, rest) in &groups {
            let mut b = vec![0u32; k];
            for (l, &x) in pattern.iter().enumerate() {
                if x == 0 {
                    continue;
                }
                if let Some(p) = &paths[l] {
                    if let Some(r) = p.iter().map(|&pos| rank[pos]).min() {
                        b[r] += x;
                    }
                }
            }
            let mut denom = BigInt::one();
            let mut s = 0u64;
            for (i, &bi) in b.iter().enumerate() {
                s += bi as u64;
                denom *= BigInt::from(s + i as u64 + 1);
            }
            let w = Rat::new(BigInt::one(), denom);
            out.add_assign_ref(&rest.scale(&w));
        }
        if !next_permutation(&mut order) {
            break;
        }
    }
    out
}

fn check_root_links(objects: &ObjectSet, z: &PolyFunctional) -> Result<(), ForestError> {
    for (l, (a, b)) in objects.links().enumerate() {
        if objects.is_root(a) && objects.is_root(b) && z.poly.degree_in(z.link_vars[l]) > 0 {
            return Err(ForestError::RootLinkDependence((a, b)));
        }
    }
    Ok(())
}

/// All forest terms of the BKAR formula.
pub fn bkar_expand(objects: &ObjectSet, z: &PolyFunctional, variant: Variant) -> Result<BkarExpansion, ForestError> {
    if z.link_vars.len() != objects.num_links() {
        return Err(ForestError::ArityMismatch { got: z.link_vars.len(), expected: objects.num_links() });
    }
    let forests: Box<dyn Iterator<Item = Forest>> = match variant {
        Variant::Bkar1 => Box::new(enumerate_forests(objects)?),
        Variant::Bkar2 => {
            check_root_links(objects, z)?;
            Box::new(enumerate_restricted_forests(objects)?)
        }
    };
    let mut terms = Vec::new();
    for forest in forests {
        let vars: Vec<usize> = forest.edges().iter().map(|&l| z.link_vars[l]).collect();
        let d = PolyFunctional::with_parameters(z.poly.derivative_multi(&vars), z.link_vars.clone());
        let value = forest_integral(objects, &forest, &d, variant);
        terms.push(ForestTerm { forest, value });
    }
    Ok(BkarExpansion { terms })
}

/// Forest side of the BKAR identity for a functional of the links only.
pub fn bkar_evaluate(objects: &ObjectSet, z: &PolyFunctional, variant: Variant) -> Result<Rat, ForestError> {
    let total = bkar_expand(objects, z, variant)?.total(z.poly.nvars());
    if total.terms().any(|(e, _)| e.iter().any(|&x| x > 0)) {
        return Err(ForestError::NotConstant);
    }
    Ok(total.constant_term())
}

/// Forest expansion of the hard-core indicator `∏_{i<j} 𝟙[P_i, P_j disjoint]`.
#[derive(Clone, Debug)]
pub struct MayerExpansion {
    pub direct: Rat,
    pub forest_sum: Rat,
    pub terms: Vec<(Forest, Rat)>,
}

/// Each pair factor is `(1 − S) + S·𝟙 = 1 + S(𝟙 − 1)`, affine in its `S`.
pub fn mayer_expand_nonoverlap<T, F>(polymers: &[T], overlap: F) -> Result<MayerExpansion, ForestError>
where
    F: Fn(&T, &T) -> bool,
{
    let objects = ObjectSet::uniform(polymers.len())?;
    let nl = objects.num_links();
    let mut z = Poly::one(nl);
    let mut direct = Rat::one();
    for (l, (a, b)) in objects.links().enumerate() {
        if overlap(&polymers[a], &polymers[b]) {
            z = z.sub(&z.mul(&Poly::var(nl, l)));
            direct = Rat::zero();
        }
    }
    let f = PolyFunctional::new(&objects, z)?;
    let exp = bkar_expand(&objects, &f, Variant::Bkar1)?;
    let terms: Vec<(Forest, Rat)> =
        exp.terms.into_iter().filter(|t| !t.value.is_zero()).map(|t| (t.forest, t.value.constant_term())).collect();
    let forest_sum = terms.iter().fold(Rat::zero(), |acc, t| acc + &t.1);
    Ok(MayerExpansion { direct, forest_sum, terms })
}
