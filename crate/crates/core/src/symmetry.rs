//! Permutations and finite groups acting on alphabets; orbit partitions,
//! group-averaged channels, symmetry divergences and residuals, and
//! brute-force equivariance discovery for tiny alphabets.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{partition_from_channel_rows, Partition, UnionFind};
use crate::prob::{compose_channels, Channel, Distribution, MassVector};

/// Common interface of plain and product permutations.
pub trait PermutationLike: Clone + PartialEq + Eq + std::hash::Hash {
    /// Size of the acted-on alphabet.
    fn degree(&self) -> usize;
    /// Image of index i.
    fn apply(&self, i: usize) -> usize;
    /// (self ∘ other)(i) = self(other(i)).
    fn compose(&self, other: &Self) -> Self;
    fn inverse(&self) -> Self;
    fn is_identity(&self) -> bool {
        (0..self.degree()).all(|i| self.apply(i) == i)
    }
}

// ---------------------------------------------------------------------------
// Permutation

/// Bijection of {0..n-1}, stored as the image vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "PermutationData")]
pub struct Permutation {
    images: Vec<usize>,
}

#[derive(Deserialize)]
struct PermutationData {
    images: Vec<usize>,
}

impl TryFrom<PermutationData> for Permutation {
    type Error = Error;
    fn try_from(d: PermutationData) -> Result<Self> {
        Permutation::new(d.images)
    }
}

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &i in &images {
            if i >= n || seen[i] {
                return Err(Error::Invalid("images are not a bijection".into()));
            }
            seen[i] = true;
        }
        Ok(Permutation { images })
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            images: (0..n).collect(),
        }
    }

    pub fn transposition(n: usize, a: usize, b: usize) -> Result<Self> {
        if a >= n || b >= n {
            return Err(Error::Invalid("transposition index out of range".into()));
        }
        let mut images: Vec<usize> = (0..n).collect();
        images.swap(a, b);
        Ok(Permutation { images })
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }
}

impl PermutationLike for Permutation {
    fn degree(&self) -> usize {
        self.images.len()
    }
    fn apply(&self, i: usize) -> usize {
        self.images[i]
    }
    fn compose(&self, other: &Self) -> Self {
        let images = other.images.iter().map(|&i| self.images[i]).collect();
        Permutation { images }
    }
    fn inverse(&self) -> Self {
        let mut images = vec![0; self.images.len()];
        for (i, &j) in self.images.iter().enumerate() {
            images[j] = i;
        }
        Permutation { images }
    }
}

// ---------------------------------------------------------------------------
// ProductPermutation

/// Pair (σ,τ) acting on the flattened product alphabet X×Y (x-major).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ProductPermutationData")]
pub struct ProductPermutation {
    sigma: Permutation,
    tau: Permutation,
}

#[derive(Deserialize)]
struct ProductPermutationData {
    sigma: Permutation,
    tau: Permutation,
}

impl TryFrom<ProductPermutationData> for ProductPermutation {
    type Error = Error;
    fn try_from(d: ProductPermutationData) -> Result<Self> {
        Ok(ProductPermutation::new(d.sigma, d.tau))
    }
}

impl ProductPermutation {
    pub fn new(sigma: Permutation, tau: Permutation) -> Self {
        ProductPermutation { sigma, tau }
    }

    pub fn identity(nx: usize, ny: usize) -> Self {
        ProductPermutation {
            sigma: Permutation::identity(nx),
            tau: Permutation::identity(ny),
        }
    }

    pub fn sigma(&self) -> &Permutation {
        &self.sigma
    }

    pub fn tau(&self) -> &Permutation {
        &self.tau
    }

    /// The induced plain permutation of the flattened product alphabet.
    pub fn to_flat_permutation(&self) -> Permutation {
        let n = self.degree();
        let images = (0..n).map(|i| self.apply(i)).collect();
        Permutation { images }
    }
}

impl PermutationLike for ProductPermutation {
    fn degree(&self) -> usize {
        self.sigma.degree() * self.tau.degree()
    }
    fn apply(&self, i: usize) -> usize {
        let ny = self.tau.degree();
        let (x, y) = (i / ny, i % ny);
        self.sigma.apply(x) * ny + self.tau.apply(y)
    }
    fn compose(&self, other: &Self) -> Self {
        ProductPermutation {
            sigma: self.sigma.compose(&other.sigma),
            tau: self.tau.compose(&other.tau),
        }
    }
    fn inverse(&self) -> Self {
        ProductPermutation {
            sigma: self.sigma.inverse(),
            tau: self.tau.inverse(),
        }
    }
}

// ---------------------------------------------------------------------------
// Group

/// Finite set of permutations with a distinguished generating set.
///
/// `closure` constructors produce the full element list. `from_generators`
/// keeps only the generators (plus identity); orbit-based operations are
/// exact either way, which matters for level-set groups whose closure is
/// factorially large.
#[derive(Clone, Debug)]
pub struct Group<E: PermutationLike> {
    elements: Vec<E>,
    generators: Vec<E>,
}

impl<E: PermutationLike> Group<E> {
    pub fn elements(&self) -> &[E] {
        &self.elements
    }

    pub fn generators(&self) -> &[E] {
        &self.generators
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    /// Generator-backed group without materializing the closure.
    pub fn from_generators(identity: E, generators: Vec<E>) -> Self {
        let mut elements = vec![identity];
        for g in &generators {
            if !elements.contains(g) {
                elements.push(g.clone());
            }
        }
        Group {
            elements,
            generators,
        }
    }
}

/// Breadth-first closure of a generating set under composition.
pub fn group_closure<E: PermutationLike>(
    identity: E,
    generators: &[E],
    max_size: usize,
) -> Result<Group<E>> {
    for g in generators {
        if g.degree() != identity.degree() {
            return Err(Error::Invalid("generators act on different alphabets".into()));
        }
    }
    let mut seen: HashSet<E> = HashSet::new();
    let mut elements = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    seen.insert(identity.clone());
    elements.push(identity);
    for g in generators {
        if seen.insert(g.clone()) {
            elements.push(g.clone());
            queue.push_back(g.clone());
        }
        let inv = g.inverse();
        if seen.insert(inv.clone()) {
            elements.push(inv.clone());
            queue.push_back(inv);
        }
    }
    if elements.len() > max_size {
        return Err(Error::SizeExceeded(max_size));
    }
    while let Some(e) = queue.pop_front() {
        for g in generators {
            for candidate in [g.compose(&e), e.compose(g)] {
                if seen.insert(candidate.clone()) {
                    if elements.len() + 1 > max_size {
                        return Err(Error::SizeExceeded(max_size));
                    }
                    elements.push(candidate.clone());
                    queue.push_back(candidate);
                }
            }
        }
    }
    let generators = generators.to_vec();
    Ok(Group {
        elements,
        generators,
    })
}

/// Orbits of the group action on {0..n-1}, as a partition.
///
/// Computed from the generating set (same orbits as the full group).
pub fn orbits_partition<E: PermutationLike>(g: &Group<E>, labels: &[String]) -> Result<Partition> {
    let n = labels.len();
    let mut uf = UnionFind::new(n);
    for e in g.elements().iter().chain(g.generators()) {
        if e.degree() != n {
            return Err(Error::AlphabetMismatch(format!(
                "group acts on {} points, alphabet has {n}",
                e.degree()
            )));
        }
        for i in 0..n {
            uf.union(i, e.apply(i));
        }
    }
    Partition::new(labels.to_vec(), uf.cells())
}

// ---------------------------------------------------------------------------
// Membership tests

/// p(Y|σ·x) = p(Y|x) for all x, entrywise within tol.
pub fn is_channel_invariance(ch: &Channel, sigma: &Permutation, tol: f64) -> bool {
    if sigma.degree() != ch.n_inputs() {
        return false;
    }
    (0..ch.n_inputs()).all(|x| {
        let rx = ch.row(x);
        let rsx = ch.row(sigma.apply(x));
        rx.iter().zip(rsx).all(|(a, b)| (a - b).abs() <= tol)
    })
}

/// p(τ·y|σ·x) = p(y|x) for all (x,y), within tol.
pub fn is_channel_equivariance(ch: &Channel, st: &ProductPermutation, tol: f64) -> bool {
    if st.sigma().degree() != ch.n_inputs() || st.tau().degree() != ch.n_outputs() {
        return false;
    }
    (0..ch.n_inputs()).all(|x| {
        let sx = st.sigma().apply(x);
        (0..ch.n_outputs()).all(|y| {
            (ch.row(sx)[st.tau().apply(y)] - ch.row(x)[y]).abs() <= tol
        })
    })
}

/// p(φ·a) = p(a) for all a, within tol.
pub fn is_distribution_invariance(p: &Distribution, phi: &Permutation, tol: f64) -> bool {
    if phi.degree() != p.len() {
        return false;
    }
    (0..p.len()).all(|a| (p.probs()[phi.apply(a)] - p.probs()[a]).abs() <= tol)
}

// ---------------------------------------------------------------------------
// Group averaging and divergence from the symmetric set

fn check_support_invariant<E: PermutationLike>(
    p: &Distribution,
    g: &Group<E>,
) -> Result<Vec<Vec<usize>>> {
    let n = p.len();
    let mut uf = UnionFind::new(n);
    for e in g.elements().iter().chain(g.generators()) {
        if e.degree() != n {
            return Err(Error::AlphabetMismatch(
                "group degree != alphabet size".into(),
            ));
        }
        for a in 0..n {
            let b = e.apply(a);
            if (p.probs()[a] > 0.0) != (p.probs()[b] > 0.0) {
                return Err(Error::SupportNotInvariant(p.labels()[a].clone()));
            }
            uf.union(a, b);
        }
    }
    Ok(uf.cells())
}

/// Orbit-average of κ under G, weighted by p: κ_G(t|a) = Σ_{a'∈[a]} p(a')κ(t|a') / p([a]).
///
/// Rows outside supp(p) are copied from κ unchanged.
pub fn group_average_channel<E: PermutationLike>(
    kappa: &Channel,
    p: &Distribution,
    g: &Group<E>,
) -> Result<Channel> {
    if kappa.input_labels() != p.labels() {
        return Err(Error::LabelMismatch("κ inputs != alphabet of p".into()));
    }
    let orbits = check_support_invariant(p, g)?;
    let mut rows: Vec<Vec<f64>> = kappa.rows().to_vec();
    for orbit in &orbits {
        let mass: f64 = orbit.iter().map(|&a| p.probs()[a]).sum();
        if mass == 0.0 {
            continue; // orbit entirely outside supp(p); leave κ rows as-is
        }
        if !(mass > 0.0) {
            return Err(Error::OrbitMassZero(orbit[0]));
        }
        let mut avg = vec![0.0; kappa.n_outputs()];
        for &a in orbit {
            let w = p.probs()[a] / mass;
            if w != 0.0 {
                for (t, &v) in kappa.row(a).iter().enumerate() {
                    avg[t] += w * v;
                }
            }
        }
        let s: f64 = avg.iter().sum();
        if s > 0.0 && (s - 1.0).abs() <= crate::prob::MASS_TOL {
            for v in &mut avg {
                *v /= s;
            }
        }
        for &a in orbit {
            if p.probs()[a] > 0.0 {
                rows[a] = avg.clone();
            }
        }
    }
    Channel::new(
        kappa.input_labels().to_vec(),
        kappa.output_labels().to_vec(),
        rows,
    )
}

/// D^p(κ ‖ C_G) = Σ_{a∈supp(p)} p(a) · D(κ(·|a) ‖ κ_G(·|a)).
///
/// Zero iff κ is constant on every orbit inside supp(p).
pub fn divergence_from_symmetric<E: PermutationLike>(
    kappa: &Channel,
    p: &Distribution,
    g: &Group<E>,
) -> Result<f64> {
    let avg = group_average_channel(kappa, p, g)?;
    let mut d = 0.0;
    for a in 0..p.len() {
        let m = p.probs()[a];
        if m > 0.0 {
            d += m * crate::prob::kl_mass(kappa.row(a), avg.row(a))?;
        }
    }
    Ok(d)
}

/// Residual D^p(κ∘transform ‖ κ): p-weighted row KL between the transformed
/// and original channel. Zero iff κ absorbs the transform on supp(p).
pub fn soft_symmetry_residual(
    kappa: &Channel,
    transform: &Channel,
    p: &Distribution,
) -> Result<f64> {
    if transform.input_labels() != kappa.input_labels()
        || transform.output_labels() != kappa.input_labels()
    {
        return Err(Error::LabelMismatch(
            "transform must be an endo-channel on κ's input alphabet".into(),
        ));
    }
    if p.labels() != kappa.input_labels() {
        return Err(Error::LabelMismatch("p alphabet != κ inputs".into()));
    }
    let moved = compose_channels(kappa, transform)?;
    let mut d = 0.0;
    for a in 0..p.len() {
        let m = p.probs()[a];
        if m > 0.0 {
            d += m * crate::prob::kl_mass(moved.row(a), kappa.row(a))?;
        }
    }
    Ok(d)
}

// ---------------------------------------------------------------------------
// Discovery

/// Limits for brute-force equivariance discovery.
#[derive(Clone, Copy, Debug)]
pub struct DiscoveryLimits {
    /// Maximum number of (σ,τ) candidates after pruning.
    pub budget: f64,
    /// Entrywise tolerance for exact matches.
    pub tol: f64,
}

impl Default for DiscoveryLimits {
    fn default() -> Self {
        DiscoveryLimits {
            budget: 1e7,
            tol: 1e-9,
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn rows_match_as_multisets(a: &[f64], b: &[f64], tol: f64) -> bool {
    let mut sa: Vec<f64> = a.to_vec();
    let mut sb: Vec<f64> = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sa.iter().zip(&sb).all(|(x, y)| (x - y).abs() <= tol)
}

fn search_tau(
    ch: &Channel,
    sigma: &[usize],
    tol: f64,
    y: usize,
    used: &mut Vec<bool>,
    images: &mut Vec<usize>,
    found: &mut Vec<Permutation>,
) {
    let ny = ch.n_outputs();
    if y == ny {
        found.push(Permutation::new(images.clone()).expect("backtracking builds bijections"));
        return;
    }
    'cand: for yp in 0..ny {
        if used[yp] {
            continue;
        }
        for x in 0..ch.n_inputs() {
            if (ch.row(sigma[x])[yp] - ch.row(x)[y]).abs() > tol {
                continue 'cand;
            }
        }
        used[yp] = true;
        images.push(yp);
        search_tau(ch, sigma, tol, y + 1, used, images, found);
        images.pop();
        used[yp] = false;
    }
}

fn search_sigma(
    ch: &Channel,
    candidates: &[Vec<usize>],
    tol: f64,
    x: usize,
    used: &mut Vec<bool>,
    images: &mut Vec<usize>,
    out: &mut Vec<ProductPermutation>,
) {
    let nx = ch.n_inputs();
    if x == nx {
        let mut taus = Vec::new();
        search_tau(
            ch,
            images,
            tol,
            0,
            &mut vec![false; ch.n_outputs()],
            &mut Vec::new(),
            &mut taus,
        );
        let sigma = Permutation::new(images.clone()).expect("backtracking builds bijections");
        for tau in taus {
            out.push(ProductPermutation::new(sigma.clone(), tau));
        }
        return;
    }
    for &xp in &candidates[x] {
        if used[xp] {
            continue;
        }
        used[xp] = true;
        images.push(xp);
        search_sigma(ch, candidates, tol, x + 1, used, images, out);
        images.pop();
        used[xp] = false;
    }
}

/// All exact channel equivariances (σ,τ) of p(Y|X), found by brute force.
///
/// σ candidates are pruned by row-multiset preservation; τ is completed by
/// backtracking under the entrywise constraints. The result is the full
/// group G_ce of the channel (closed by construction, since equivariances
/// compose).
pub fn discover_equivariances(
    ch: &Channel,
    px: &Distribution,
    limits: DiscoveryLimits,
) -> Result<Group<ProductPermutation>> {
    if px.labels() != ch.input_labels() {
        return Err(Error::LabelMismatch("p(X) alphabet != channel inputs".into()));
    }
    // pruning classes: x can only map to x' whose row is a permutation of x's
    let classes = {
        let mut uf = UnionFind::new(ch.n_inputs());
        for a in 0..ch.n_inputs() {
            for b in (a + 1)..ch.n_inputs() {
                if rows_match_as_multisets(ch.row(a), ch.row(b), limits.tol) {
                    uf.union(a, b);
                }
            }
        }
        uf.cells()
    };
    let estimate: f64 = classes.iter().map(|c| factorial(c.len())).product::<f64>()
        * factorial(ch.n_outputs());
    if estimate > limits.budget {
        return Err(Error::BudgetExceeded {
            estimate,
            budget: limits.budget,
        });
    }
    let mut candidates = vec![Vec::new(); ch.n_inputs()];
    for cell in &classes {
        for &x in cell {
            candidates[x] = cell.clone();
        }
    }
    let mut found = Vec::new();
    search_sigma(
        ch,
        &candidates,
        limits.tol,
        0,
        &mut vec![false; ch.n_inputs()],
        &mut Vec::new(),
        &mut found,
    );
    // exact equivariances form a group; keep the full element list
    Ok(Group {
        generators: found.clone(),
        elements: found,
    })
}

/// The invariance group of p, generated by transpositions within level sets.
///
/// Returned as a generator-backed group: its closure (a product of symmetric
/// groups) can be factorially large, but orbits and averages only need the
/// generators.
pub fn distribution_invariance_group(p: &Distribution, tol: f64) -> Group<Permutation> {
    let n = p.len();
    let mut uf = UnionFind::new(n);
    for a in 0..n {
        for b in (a + 1)..n {
            if (p.probs()[a] - p.probs()[b]).abs() <= tol {
                uf.union(a, b);
            }
        }
    }
    let mut gens = Vec::new();
    for cell in uf.cells() {
        for w in cell.windows(2) {
            gens.push(Permutation::transposition(n, w[0], w[1]).expect("indices in range"));
        }
    }
    Group::from_generators(Permutation::identity(n), gens)
}

/// The channel-invariance group of p(Y|X), generated by transpositions
/// within equal-row classes.
pub fn channel_invariance_group(ch: &Channel, tol: f64) -> Group<Permutation> {
    let part = partition_from_channel_rows(ch, tol);
    let n = ch.n_inputs();
    let mut gens = Vec::new();
    for cell in part.cells() {
        for w in cell.windows(2) {
            gens.push(Permutation::transposition(n, w[0], w[1]).expect("indices in range"));
        }
    }
    Group::from_generators(Permutation::identity(n), gens)
}
