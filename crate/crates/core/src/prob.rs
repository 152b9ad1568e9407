//! Finite distributions, channels and joints, with the divergence /
//! mutual-information / pushforward algebra everything else is built on.
//!
//! All information quantities are in nats. Zero-mass terms are masked
//! (0·log(0/0) := 0), never epsilon-floored.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for "sums to one" checks on constructed objects.
pub const MASS_TOL: f64 = 1e-12;

/// Anything carrying a nonnegative mass vector over a labeled alphabet.
pub trait MassVector {
    fn labels(&self) -> &[String];
    fn mass(&self) -> &[f64];

    fn support(&self) -> Vec<usize> {
        self.mass()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

fn check_labels_distinct(labels: &[String]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(Error::Invalid(format!("duplicate label {l:?}")));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Distribution

/// Probability vector over a labeled finite alphabet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionData")]
pub struct Distribution {
    labels: Vec<String>,
    p: Vec<f64>,
}

#[derive(Deserialize)]
struct DistributionData {
    labels: Vec<String>,
    p: Vec<f64>,
}

impl TryFrom<DistributionData> for Distribution {
    type Error = Error;
    fn try_from(d: DistributionData) -> Result<Self> {
        Distribution::new(d.labels, d.p)
    }
}

impl Distribution {
    pub fn new(labels: Vec<String>, p: Vec<f64>) -> Result<Self> {
        if labels.len() != p.len() {
            return Err(Error::Invalid(format!(
                "{} labels vs {} masses",
                labels.len(),
                p.len()
            )));
        }
        check_labels_distinct(&labels)?;
        if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Invalid("negative or non-finite mass".into()));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > MASS_TOL {
            return Err(Error::Invalid(format!("mass sums to {s}, not 1")));
        }
        Ok(Distribution { labels, p })
    }

    pub fn uniform(labels: Vec<String>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Invalid("empty alphabet".into()));
        }
        Distribution::new(labels, vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// True iff every symbol has positive mass.
    pub fn is_full_support(&self) -> bool {
        self.p.iter().all(|&v| v > 0.0)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .p
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| v * v.ln())
            .sum::<f64>()
    }
}

impl MassVector for Distribution {
    fn labels(&self) -> &[String] {
        &self.labels
    }
    fn mass(&self) -> &[f64] {
        &self.p
    }
}

// ---------------------------------------------------------------------------
// UnnormalizedWeight

/// Nonnegative weight vector; used for restrictions of a distribution to a
/// sub-alphabet, which keep their raw (unrenormalized) values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightData")]
pub struct UnnormalizedWeight {
    labels: Vec<String>,
    w: Vec<f64>,
}

#[derive(Deserialize)]
struct WeightData {
    labels: Vec<String>,
    w: Vec<f64>,
}

impl TryFrom<WeightData> for UnnormalizedWeight {
    type Error = Error;
    fn try_from(d: WeightData) -> Result<Self> {
        UnnormalizedWeight::new(d.labels, d.w)
    }
}

impl UnnormalizedWeight {
    pub fn new(labels: Vec<String>, w: Vec<f64>) -> Result<Self> {
        if labels.len() != w.len() {
            return Err(Error::Invalid(format!(
                "{} labels vs {} weights",
                labels.len(),
                w.len()
            )));
        }
        check_labels_distinct(&labels)?;
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Invalid("negative or non-finite weight".into()));
        }
        Ok(UnnormalizedWeight { labels, w })
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }
}

impl MassVector for UnnormalizedWeight {
    fn labels(&self) -> &[String] {
        &self.labels
    }
    fn mass(&self) -> &[f64] {
        &self.w
    }
}

// ---------------------------------------------------------------------------
// Channel

/// Row-stochastic matrix between two labeled alphabets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelData")]
pub struct Channel {
    input_labels: Vec<String>,
    output_labels: Vec<String>,
    rows: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct ChannelData {
    input_labels: Vec<String>,
    output_labels: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<ChannelData> for Channel {
    type Error = Error;
    fn try_from(d: ChannelData) -> Result<Self> {
        Channel::new(d.input_labels, d.output_labels, d.rows)
    }
}

impl Channel {
    pub fn new(
        input_labels: Vec<String>,
        output_labels: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if rows.len() != input_labels.len() {
            return Err(Error::Invalid(format!(
                "{} rows vs {} input labels",
                rows.len(),
                input_labels.len()
            )));
        }
        check_labels_distinct(&input_labels)?;
        check_labels_distinct(&output_labels)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != output_labels.len() {
                return Err(Error::Invalid(format!(
                    "row {i} has {} entries, expected {}",
                    row.len(),
                    output_labels.len()
                )));
            }
            if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::Invalid(format!("row {i} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > MASS_TOL {
                return Err(Error::Invalid(format!("row {i} sums to {s}, not 1")));
            }
        }
        Ok(Channel {
            input_labels,
            output_labels,
            rows,
        })
    }

    pub fn identity(labels: Vec<String>) -> Result<Self> {
        let n = labels.len();
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![0.0; n];
                r[i] = 1.0;
                r
            })
            .collect();
        Channel::new(labels.clone(), labels, rows)
    }

    /// Deterministic channel: input i maps to output map[i] with certainty.
    pub fn deterministic(
        input_labels: Vec<String>,
        output_labels: Vec<String>,
        map: &[usize],
    ) -> Result<Self> {
        if map.len() != input_labels.len() {
            return Err(Error::Invalid("map length mismatch".into()));
        }
        let m = output_labels.len();
        let rows = map
            .iter()
            .map(|&j| {
                if j >= m {
                    return Err(Error::Invalid(format!("map target {j} out of range")));
                }
                let mut r = vec![0.0; m];
                r[j] = 1.0;
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        Channel::new(input_labels, output_labels, rows)
    }

    /// Channel whose every row equals the given distribution.
    pub fn constant(input_labels: Vec<String>, out: &Distribution) -> Result<Self> {
        let rows = vec![out.probs().to_vec(); input_labels.len()];
        Channel::new(input_labels, out.labels().to_vec(), rows)
    }

    pub fn input_labels(&self) -> &[String] {
        &self.input_labels
    }

    pub fn output_labels(&self) -> &[String] {
        &self.output_labels
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn n_inputs(&self) -> usize {
        self.input_labels.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.output_labels.len()
    }
}

// ---------------------------------------------------------------------------
// Joint

/// Joint mass over a product alphabet X×Y.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointData")]
pub struct Joint {
    x_labels: Vec<String>,
    y_labels: Vec<String>,
    p: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct JointData {
    x_labels: Vec<String>,
    y_labels: Vec<String>,
    p: Vec<Vec<f64>>,
}

impl TryFrom<JointData> for Joint {
    type Error = Error;
    fn try_from(d: JointData) -> Result<Self> {
        Joint::new(d.x_labels, d.y_labels, d.p)
    }
}

impl Joint {
    pub fn new(x_labels: Vec<String>, y_labels: Vec<String>, p: Vec<Vec<f64>>) -> Result<Self> {
        if p.len() != x_labels.len() {
            return Err(Error::Invalid("row count != |X|".into()));
        }
        check_labels_distinct(&x_labels)?;
        check_labels_distinct(&y_labels)?;
        let mut total = 0.0;
        for row in &p {
            if row.len() != y_labels.len() {
                return Err(Error::Invalid("row length != |Y|".into()));
            }
            if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::Invalid("negative or non-finite joint mass".into()));
            }
            total += row.iter().sum::<f64>();
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Invalid(format!("joint mass sums to {total}, not 1")));
        }
        Ok(Joint {
            x_labels,
            y_labels,
            p,
        })
    }

    /// Build the joint p(x)·k(y|x).
    pub fn from_marginal_and_channel(px: &Distribution, k: &Channel) -> Result<Self> {
        if px.labels() != k.input_labels() {
            return Err(Error::LabelMismatch(
                "marginal labels != channel input labels".into(),
            ));
        }
        let p = px
            .probs()
            .iter()
            .zip(k.rows())
            .map(|(&m, row)| row.iter().map(|&v| m * v).collect())
            .collect();
        Joint::new(k.input_labels().to_vec(), k.output_labels().to_vec(), p)
    }

    pub fn x_labels(&self) -> &[String] {
        &self.x_labels
    }

    pub fn y_labels(&self) -> &[String] {
        &self.y_labels
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.p
    }

    pub fn x_marginal(&self) -> Distribution {
        let p = self.p.iter().map(|row| row.iter().sum()).collect();
        Distribution::new(self.x_labels.clone(), p).expect("marginal of valid joint")
    }

    pub fn y_marginal(&self) -> Distribution {
        let mut p = vec![0.0; self.y_labels.len()];
        for row in &self.p {
            for (j, &v) in row.iter().enumerate() {
                p[j] += v;
            }
        }
        Distribution::new(self.y_labels.clone(), p).expect("marginal of valid joint")
    }

    /// Flatten to a distribution over the product alphabet, x-major.
    pub fn flatten(&self) -> Distribution {
        let labels = product_labels(&self.x_labels, &self.y_labels);
        let p = self.p.iter().flat_map(|row| row.iter().copied()).collect();
        Distribution::new(labels, p).expect("flattening preserves total mass")
    }
}

/// Labels of the product alphabet X×Y, x-major.
pub fn product_labels(xs: &[String], ys: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for x in xs {
        for y in ys {
            out.push(format!("{x}|{y}"));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Operations

pub(crate) fn kl_mass(p: &[f64], q: &[f64]) -> Result<f64> {
    debug_assert_eq!(p.len(), q.len());
    let mut d = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::SupportViolation(format!(
                    "p[{i}] = {pi} but q[{i}] = 0"
                )));
            }
            d += pi * (pi / qi).ln();
        }
    }
    Ok(d)
}

/// KL divergence D(p||q) in nats; requires supp(p) ⊆ supp(q).
pub fn kl_divergence<P: MassVector, Q: MassVector>(p: &P, q: &Q) -> Result<f64> {
    if p.labels() != q.labels() {
        return Err(Error::LabelMismatch("kl_divergence label sets differ".into()));
    }
    kl_mass(p.mass(), q.mass())
}

/// Mutual information I(X;Y) of a joint, in nats.
pub fn mutual_information(j: &Joint) -> f64 {
    let px = j.x_marginal();
    let py = j.y_marginal();
    let mut i = 0.0;
    for (x, row) in j.matrix().iter().enumerate() {
        for (y, &v) in row.iter().enumerate() {
            if v > 0.0 {
                i += v * (v / (px.probs()[x] * py.probs()[y])).ln();
            }
        }
    }
    i
}

pub(crate) fn push_mass(k: &Channel, p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; k.n_outputs()];
    for (a, row) in k.rows().iter().enumerate() {
        let m = p[a];
        if m != 0.0 {
            for (t, &v) in row.iter().enumerate() {
                out[t] += m * v;
            }
        }
    }
    out
}

/// Image of a distribution through a channel: (κ·p)(t) = Σ_a p(a) κ(t|a).
pub fn pushforward(k: &Channel, p: &Distribution) -> Result<Distribution> {
    if p.labels() != k.input_labels() {
        return Err(Error::LabelMismatch(
            "pushforward: distribution labels != channel input labels".into(),
        ));
    }
    let mut out = push_mass(k, p.probs());
    // Guard against last-ulp drift so the constructor's sum check passes.
    let s: f64 = out.iter().sum();
    if (s - 1.0).abs() > 0.0 && (s - 1.0).abs() <= MASS_TOL {
        for v in &mut out {
            *v /= s;
        }
    }
    Distribution::new(k.output_labels().to_vec(), out)
}

/// Pushforward of raw weights; preserves total mass, no normalization.
pub fn pushforward_weight(k: &Channel, w: &UnnormalizedWeight) -> Result<UnnormalizedWeight> {
    if w.labels() != k.input_labels() {
        return Err(Error::LabelMismatch(
            "pushforward: weight labels != channel input labels".into(),
        ));
    }
    UnnormalizedWeight::new(k.output_labels().to_vec(), push_mass(k, w.weights()))
}

/// Channel composition (k2 ∘ k1)(c|a) = Σ_b k2(c|b) k1(b|a).
pub fn compose_channels(k2: &Channel, k1: &Channel) -> Result<Channel> {
    if k1.output_labels() != k2.input_labels() {
        return Err(Error::LabelMismatch(
            "compose: inner output labels != outer input labels".into(),
        ));
    }
    let rows = k1
        .rows()
        .iter()
        .map(|r1| {
            let mut out = vec![0.0; k2.n_outputs()];
            for (b, &v1) in r1.iter().enumerate() {
                if v1 != 0.0 {
                    for (c, &v2) in k2.row(b).iter().enumerate() {
                        out[c] += v1 * v2;
                    }
                }
            }
            // renormalize away last-ulp drift
            let s: f64 = out.iter().sum();
            if s > 0.0 && (s - 1.0).abs() <= MASS_TOL {
                for v in &mut out {
                    *v /= s;
                }
            }
            out
        })
        .collect();
    Channel::new(
        k1.input_labels().to_vec(),
        k2.output_labels().to_vec(),
        rows,
    )
}

/// Tensor product of channels: (μ⊗η)(b,b'|a,a') = μ(b|a)·η(b'|a').
pub fn tensor_channels(ka: &Channel, kb: &Channel) -> Channel {
    let input_labels = product_labels(ka.input_labels(), kb.input_labels());
    let output_labels = product_labels(ka.output_labels(), kb.output_labels());
    let mut rows = Vec::with_capacity(input_labels.len());
    for ra in ka.rows() {
        for rb in kb.rows() {
            let mut row = Vec::with_capacity(output_labels.len());
            for &va in ra {
                for &vb in rb {
                    row.push(va * vb);
                }
            }
            rows.push(row);
        }
    }
    Channel::new(input_labels, output_labels, rows).expect("tensor of valid channels")
}

/// Tensor product of distributions, x-major.
pub fn tensor_dists(pa: &Distribution, pb: &Distribution) -> Distribution {
    let labels = product_labels(pa.labels(), pb.labels());
    let mut p = Vec::with_capacity(labels.len());
    for &va in pa.probs() {
        for &vb in pb.probs() {
            p.push(va * vb);
        }
    }
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        for v in &mut p {
            *v /= s;
        }
    }
    Distribution::new(labels, p).expect("tensor of valid distributions")
}

/// Split a joint into (p(X), p(Y), p(Y|X)); requires every p(x) > 0.
pub fn joint_decompose(j: &Joint) -> Result<(Distribution, Distribution, Channel)> {
    let px = j.x_marginal();
    let rows = j
        .matrix()
        .iter()
        .zip(px.probs())
        .enumerate()
        .map(|(x, (row, &m))| {
            if m <= 0.0 {
                return Err(Error::ZeroMarginal(j.x_labels()[x].clone()));
            }
            let mut r: Vec<f64> = row.iter().map(|&v| v / m).collect();
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() <= MASS_TOL {
                for v in &mut r {
                    *v /= s;
                }
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let cond = Channel::new(j.x_labels().to_vec(), j.y_labels().to_vec(), rows)?;
    Ok((px, j.y_marginal(), cond))
}
