//! Alphabet partitions: ratio-equivalence cells, row-equivalence cells,
//! projection and quotient channels, and the congruence test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{Channel, Distribution, MassVector};

/// Plain union-find with path halving and union by size.
#[derive(Debug)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, x: usize, y: usize) {
        let (mut a, mut b) = (self.find(x), self.find(y));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }

    /// Cells sorted by smallest member, members ascending.
    pub(crate) fn cells(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n];
        for x in 0..n {
            let r = self.find(x);
            buckets[r].push(x);
        }
        let mut cells: Vec<Vec<usize>> = buckets.into_iter().filter(|c| !c.is_empty()).collect();
        cells.sort_by_key(|c| c[0]);
        cells
    }
}

/// Disjoint cover of a labeled alphabet by nonempty index cells.
///
/// Canonical form: indices ascending within each cell, cells ordered by
/// smallest contained index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PartitionData")]
pub struct Partition {
    labels: Vec<String>,
    cells: Vec<Vec<usize>>,
}

#[derive(Deserialize)]
struct PartitionData {
    labels: Vec<String>,
    cells: Vec<Vec<usize>>,
}

impl TryFrom<PartitionData> for Partition {
    type Error = Error;
    fn try_from(d: PartitionData) -> Result<Self> {
        Partition::new(d.labels, d.cells)
    }
}

impl Partition {
    pub fn new(labels: Vec<String>, mut cells: Vec<Vec<usize>>) -> Result<Self> {
        let n = labels.len();
        let mut seen = vec![false; n];
        for cell in &mut cells {
            if cell.is_empty() {
                return Err(Error::Invalid("empty cell".into()));
            }
            cell.sort_unstable();
            for &i in cell.iter() {
                if i >= n {
                    return Err(Error::Invalid(format!("index {i} out of range")));
                }
                if seen[i] {
                    return Err(Error::Invalid(format!("index {i} in two cells")));
                }
                seen[i] = true;
            }
        }
        if !seen.iter().all(|&b| b) {
            return Err(Error::Invalid("cells do not cover the alphabet".into()));
        }
        cells.sort_by_key(|c| c[0]);
        Ok(Partition { labels, cells })
    }

    pub fn singletons(labels: Vec<String>) -> Self {
        let cells = (0..labels.len()).map(|i| vec![i]).collect();
        Partition { labels, cells }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Cell index of alphabet element i.
    pub fn cell_of(&self, i: usize) -> usize {
        self.cells
            .iter()
            .position(|c| c.binary_search(&i).is_ok())
            .expect("every index belongs to a cell")
    }

    /// Entropy (nats) of the pushforward of p onto the cells.
    pub fn cell_entropy(&self, p: &Distribution) -> Result<f64> {
        if p.labels() != self.labels() {
            return Err(Error::AlphabetMismatch("entropy: labels differ".into()));
        }
        let mut h = 0.0;
        for cell in &self.cells {
            let m: f64 = cell.iter().map(|&i| p.probs()[i]).sum();
            if m > 0.0 {
                h -= m * m.ln();
            }
        }
        Ok(h)
    }
}

/// Partition by the relation p(a)·p̃(a') = p(a')·p̃(a) (equal ratios),
/// tested with relative tolerance and transitively closed.
pub fn partition_from_dib_relation(
    p: &Distribution,
    ptilde: &Distribution,
    rel_tol: f64,
) -> Result<Partition> {
    if p.labels() != ptilde.labels() {
        return Err(Error::LabelMismatch("dib relation: labels differ".into()));
    }
    if rel_tol < 0.0 {
        return Err(Error::Invalid("rel_tol must be >= 0".into()));
    }
    for i in 0..p.len() {
        if p.probs()[i] > 0.0 && ptilde.probs()[i] <= 0.0 {
            return Err(Error::SupportViolation(format!(
                "p̃({}) = 0 inside supp(p)",
                p.labels()[i]
            )));
        }
    }
    let n = p.len();
    let mut uf = UnionFind::new(n);
    for a in 0..n {
        for b in (a + 1)..n {
            let lhs = p.probs()[a] * ptilde.probs()[b];
            let rhs = p.probs()[b] * ptilde.probs()[a];
            if (lhs - rhs).abs() <= rel_tol * lhs.max(rhs) {
                uf.union(a, b);
            }
        }
    }
    Partition::new(p.labels().to_vec(), uf.cells())
}

/// Partition of channel inputs by (approximately) equal rows.
pub fn partition_from_channel_rows(ch: &Channel, rel_tol: f64) -> Partition {
    let n = ch.n_inputs();
    let mut uf = UnionFind::new(n);
    for a in 0..n {
        for b in (a + 1)..n {
            let ra = ch.row(a);
            let rb = ch.row(b);
            let scale = ra
                .iter()
                .chain(rb)
                .fold(0.0f64, |m, &v| m.max(v.abs()));
            let diff = ra
                .iter()
                .zip(rb)
                .fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs()));
            if diff <= rel_tol * scale {
                uf.union(a, b);
            }
        }
    }
    Partition::new(ch.input_labels().to_vec(), uf.cells()).expect("union-find yields a partition")
}

/// Label used for cell j of a partition-valued output alphabet.
pub fn cell_label(j: usize) -> String {
    format!("c{j}")
}

/// Deterministic channel sending each element to its cell.
pub fn projection_channel(part: &Partition) -> Channel {
    let out_labels: Vec<String> = (0..part.n_cells()).map(cell_label).collect();
    let map: Vec<usize> = (0..part.labels().len()).map(|i| part.cell_of(i)).collect();
    Channel::deterministic(part.labels().to_vec(), out_labels, &map)
        .expect("projection of valid partition")
}

/// Quotient channel: q̄(t|A_j) = Σ_{a∈A_j} p(a)·q(t|a) / p(A_j).
pub fn quotient_channel(q: &Channel, p: &Distribution, part: &Partition) -> Result<Channel> {
    if q.input_labels() != p.labels() || part.labels() != p.labels() {
        return Err(Error::LabelMismatch("quotient: labels differ".into()));
    }
    let rows = part
        .cells()
        .iter()
        .enumerate()
        .map(|(j, cell)| {
            let mass: f64 = cell.iter().map(|&a| p.probs()[a]).sum();
            if mass <= 0.0 {
                return Err(Error::ZeroCellMass(cell_label(j)));
            }
            let mut row = vec![0.0; q.n_outputs()];
            for &a in cell {
                let w = p.probs()[a] / mass;
                if w != 0.0 {
                    for (t, &v) in q.row(a).iter().enumerate() {
                        row[t] += w * v;
                    }
                }
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() <= crate::prob::MASS_TOL && s > 0.0 {
                for v in &mut row {
                    *v /= s;
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let out_labels = (0..part.n_cells()).map(cell_label).collect();
    Channel::new(out_labels, q.output_labels().to_vec(), rows)
}

/// Enforced factorization q_π = q̄ ∘ π: every row replaced by its cell average.
pub fn enforce_factorization(q: &Channel, p: &Distribution, part: &Partition) -> Result<Channel> {
    let qbar = quotient_channel(q, p, part)?;
    let rows = (0..q.n_inputs())
        .map(|a| qbar.row(part.cell_of(a)).to_vec())
        .collect();
    Channel::new(q.input_labels().to_vec(), q.output_labels().to_vec(), rows)
}

/// Congruence test: Some(decoder) iff the row supports are pairwise disjoint,
/// i.e. the channel output losslessly determines its input. Outputs covered
/// by no row decode to input 0.
pub fn is_congruent(g: &Channel) -> Option<Vec<usize>> {
    let mut owner: Vec<Option<usize>> = vec![None; g.n_outputs()];
    for (a, row) in g.rows().iter().enumerate() {
        for (t, &v) in row.iter().enumerate() {
            if v > 0.0 {
                match owner[t] {
                    Some(b) if b != a => return None,
                    _ => owner[t] = Some(a),
                }
            }
        }
    }
    Some(owner.into_iter().map(|o| o.unwrap_or(0)).collect())
}

/// Equality of partitions as sets of cells (cell order irrelevant).
pub fn partitions_equal_up_to_relabeling(p1: &Partition, p2: &Partition) -> Result<bool> {
    if p1.labels() != p2.labels() {
        return Err(Error::AlphabetMismatch(
            "partitions on different alphabets".into(),
        ));
    }
    // canonical form makes set equality a plain comparison
    Ok(p1.cells() == p2.cells())
}
