//! Blahut-Arimoto fixed-point solver for divergence-preserving compression,
//! with support restriction/extension, reverse deterministic annealing,
//! λ-targeting by bisection over β, effective cardinality, bifurcation
//! detection, and a classic information-bottleneck solver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::prob::{
    joint_decompose, kl_divergence, mutual_information, Channel, Distribution, Joint, MassVector,
};
use crate::symmetry::{divergence_from_symmetric, Group, Permutation};

/// Posterior-clustering threshold for effective cardinality (paper default).
pub const EFF_CARD_THRESHOLD: f64 = 1e-3;

/// Residual level below which a tracked symmetry counts as recovered.
pub const RESIDUAL_THRESHOLD: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Problem and config

/// A compression problem: source p, reference p̃, bottleneck size.
#[derive(Clone, Debug)]
pub struct DibProblem {
    p: Distribution,
    ptilde: Distribution,
    t_size: usize,
}

impl DibProblem {
    /// `t_size = None` defaults to |supp(p)| + 1: room for the finest
    /// solution clustering plus a dummy symbol for zero-mass inputs.
    pub fn new(p: Distribution, ptilde: Distribution, t_size: Option<usize>) -> Result<Self> {
        if p.labels() != ptilde.labels() {
            return Err(Error::LabelMismatch("p and p̃ on different alphabets".into()));
        }
        for i in 0..p.len() {
            if p.probs()[i] > 0.0 && ptilde.probs()[i] <= 0.0 {
                return Err(Error::SupportViolation(format!(
                    "p̃({}) = 0 inside supp(p)",
                    p.labels()[i]
                )));
            }
        }
        let supp = p.support().len();
        if supp == 0 {
            return Err(Error::Invalid("p has empty support".into()));
        }
        let needs_dummy = supp < p.len();
        let t_size = t_size.unwrap_or(supp + 1);
        let min_t = 1 + needs_dummy as usize;
        if t_size < min_t {
            return Err(Error::Invalid(format!(
                "t_size {t_size} too small (need at least {min_t})"
            )));
        }
        Ok(DibProblem { p, ptilde, t_size })
    }

    pub fn p(&self) -> &Distribution {
        &self.p
    }

    pub fn ptilde(&self) -> &Distribution {
        &self.ptilde
    }

    pub fn t_size(&self) -> usize {
        self.t_size
    }

    /// Λ = D(p‖p̃), the maximum preservable divergence.
    pub fn lambda_max(&self) -> f64 {
        kl_divergence(&self.p, &self.ptilde).expect("support checked at construction")
    }

    fn restricted(&self) -> Restricted {
        let supp = self.p.support();
        let p = supp.iter().map(|&a| self.p.probs()[a]).collect();
        let pt = supp.iter().map(|&a| self.ptilde.probs()[a]).collect();
        let needs_dummy = supp.len() < self.p.len();
        Restricted {
            t_count: self.t_size - needs_dummy as usize,
            supp,
            p,
            pt,
            needs_dummy,
        }
    }
}

/// Solver knobs.
#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Convergence: max-abs change of encoder entries per sweep.
    pub conv_tol: f64,
    /// Floor applied to initial / warm-started encoders to keep them interior.
    pub interior_floor: f64,
    pub seed: u64,
    /// Record per-iteration descent / identity diagnostics (slower).
    pub track_diagnostics: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 100_000,
            conv_tol: 1e-10,
            interior_floor: 1e-6,
            seed: 0,
            track_diagnostics: false,
        }
    }
}

/// Worst-case values observed across all iterations of a solve.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Diagnostics {
    /// Largest per-iteration increase of the Lagrangian (descent says ≤ 0).
    pub max_lagrangian_increase: f64,
    /// Smallest exponent argument x − log x − 1 seen (theory says ≥ 0).
    pub min_exponent_arg: f64,
    /// Largest |F − L − β·Λ| over logged iterates.
    pub max_f_identity_gap: f64,
}

impl Diagnostics {
    pub fn merge(&mut self, other: &Diagnostics) {
        self.max_lagrangian_increase = self.max_lagrangian_increase.max(other.max_lagrangian_increase);
        self.min_exponent_arg = self.min_exponent_arg.min(other.min_exponent_arg);
        self.max_f_identity_gap = self.max_f_identity_gap.max(other.max_f_identity_gap);
    }
}

/// Converged (or best-effort) solution at one β.
#[derive(Clone, Debug, Serialize)]
pub struct SolverResult {
    pub encoder: Channel,
    pub i_nats: f64,
    pub d_nats: f64,
    pub lagrangian: f64,
    pub eff_card: usize,
    pub iters: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
}

/// One record of a reverse-annealing sweep.
#[derive(Clone, Debug)]
pub struct TracePoint {
    pub beta: f64,
    pub result: SolverResult,
    /// (group name, D^p(κ_β‖C_G)) pairs, in the order groups were supplied.
    pub residuals: Vec<(String, f64)>,
}

/// Ordered records from a reverse-annealing sweep (betas strictly decreasing).
#[derive(Clone, Debug, Default)]
pub struct AnnealingTrace {
    pub points: Vec<TracePoint>,
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

impl AnnealingTrace {
    /// CSV with header `beta,I_nats,D_nats,lagrangian,eff_card,converged[,div_<g>…]`,
    /// floats at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("beta,I_nats,D_nats,lagrangian,eff_card,converged");
        if let Some(first) = self.points.first() {
            for (name, _) in &first.residuals {
                out.push_str(&format!(",div_{name}"));
            }
        }
        out.push('\n');
        for pt in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{}",
                fmt17(pt.beta),
                fmt17(pt.result.i_nats),
                fmt17(pt.result.d_nats),
                fmt17(pt.result.lagrangian),
                pt.result.eff_card,
                pt.result.converged
            ));
            for (_, v) in &pt.residuals {
                out.push_str(&format!(",{}", fmt17(*v)));
            }
            out.push('\n');
        }
        out
    }
}

/// Strictly decreasing geometric β schedule from `max` down to `min`.
pub fn geometric_schedule(max: f64, min: f64, count: usize) -> Result<Vec<f64>> {
    if !(max > 0.0 && min > 0.0 && max > min) {
        return Err(Error::Invalid("need max > min > 0".into()));
    }
    if count < 1 {
        return Err(Error::Invalid("need at least one point".into()));
    }
    if count == 1 {
        return Ok(vec![max]);
    }
    let ratio = (min / max).powf(1.0 / (count - 1) as f64);
    Ok((0..count).map(|i| max * ratio.powi(i as i32)).collect())
}

// ---------------------------------------------------------------------------
// Restricted problem internals

struct Restricted {
    supp: Vec<usize>,
    /// p restricted to its support (already sums to 1).
    p: Vec<f64>,
    /// p̃ restricted to supp(p), raw (unrenormalized) values.
    pt: Vec<f64>,
    /// Working bottleneck columns (excludes the reserved dummy, if any).
    t_count: usize,
    needs_dummy: bool,
}

impl Restricted {
    fn s(&self) -> usize {
        self.supp.len()
    }

    /// Λ computed on the restriction with raw p̃ weights; equals D(p‖p̃).
    fn lambda(&self) -> f64 {
        self.p
            .iter()
            .zip(&self.pt)
            .map(|(&p, &pt)| p * (p / pt).ln())
            .sum()
    }
}

struct StepOutcome {
    min_exponent_arg: f64,
}

/// One Blahut-Arimoto sweep on the restricted encoder (s × t row-major).
fn raw_ba_step(
    q: &[f64],
    rp: &Restricted,
    beta: f64,
    out: &mut [f64],
    logits: &mut [f64],
) -> StepOutcome {
    let (s, t) = (rp.s(), rp.t_count);
    let mut r = vec![0.0; t];
    let mut qt = vec![0.0; t];
    for a in 0..s {
        let (pa, pta) = (rp.p[a], rp.pt[a]);
        for ti in 0..t {
            let v = q[a * t + ti];
            if v != 0.0 {
                r[ti] += pa * v;
                qt[ti] += pta * v;
            }
        }
    }
    let log_r: Vec<f64> = r.iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).collect();
    let m: Vec<f64> = r
        .iter()
        .zip(&qt)
        .map(|(&rv, &qv)| if rv > 0.0 { rv / qv } else { 0.0 })
        .collect();
    let mut min_arg = f64::INFINITY;
    for a in 0..s {
        let (pa, pta) = (rp.p[a], rp.pt[a]);
        let mut max_logit = f64::NEG_INFINITY;
        for ti in 0..t {
            if r[ti] > 0.0 {
                // x = m(t)·p̃(a)/p(a); exponent argument g = x − log x − 1 ≥ 0
                let d = f64::mul_add(m[ti], pta, -pa) / pa;
                let g = d - d.ln_1p();
                if g < min_arg {
                    min_arg = g;
                }
                let l = log_r[ti] - beta * g;
                logits[ti] = l;
                if l > max_logit {
                    max_logit = l;
                }
            } else {
                logits[ti] = f64::NEG_INFINITY;
            }
        }
        let mut z = 0.0;
        for ti in 0..t {
            // flush near-denormal weights so later rescaling cannot round a
            // positive entry to zero behind our back
            let v = if logits[ti].is_finite() {
                let e = (logits[ti] - max_logit).exp();
                if e < 1e-300 { 0.0 } else { e }
            } else {
                0.0
            };
            out[a * t + ti] = v;
            z += v;
        }
        for ti in 0..t {
            out[a * t + ti] /= z;
        }
    }
    StepOutcome {
        min_exponent_arg: if min_arg.is_finite() { min_arg } else { 0.0 },
    }
}

/// (I, D) of a restricted encoder.
fn restricted_info(q: &[f64], rp: &Restricted) -> (f64, f64) {
    let (s, t) = (rp.s(), rp.t_count);
    let mut r = vec![0.0; t];
    let mut qt = vec![0.0; t];
    for a in 0..s {
        for ti in 0..t {
            let v = q[a * t + ti];
            if v != 0.0 {
                r[ti] += rp.p[a] * v;
                qt[ti] += rp.pt[a] * v;
            }
        }
    }
    let mut i = 0.0;
    for a in 0..s {
        let pa = rp.p[a];
        for ti in 0..t {
            let v = q[a * t + ti];
            if v > 0.0 && r[ti] > 0.0 {
                i += pa * v * (v / r[ti]).ln();
            }
        }
    }
    let mut d = 0.0;
    for ti in 0..t {
        if r[ti] > 0.0 {
            d += r[ti] * (r[ti] / qt[ti]).ln();
        }
    }
    (i, d)
}

/// Descent function F(q, r, m) with r, m recomputed from q; satisfies
/// F = L + β·Λ at matched iterates.
fn restricted_f_value(q: &[f64], rp: &Restricted, beta: f64) -> f64 {
    let (s, t) = (rp.s(), rp.t_count);
    let mut r = vec![0.0; t];
    let mut qt = vec![0.0; t];
    for a in 0..s {
        for ti in 0..t {
            let v = q[a * t + ti];
            if v != 0.0 {
                r[ti] += rp.p[a] * v;
                qt[ti] += rp.pt[a] * v;
            }
        }
    }
    let mut f = 0.0;
    for a in 0..s {
        let (pa, pta) = (rp.p[a], rp.pt[a]);
        for ti in 0..t {
            let v = q[a * t + ti];
            if v > 0.0 && r[ti] > 0.0 {
                let x = (r[ti] / qt[ti]) * pta / pa;
                f += pa * v * ((v / r[ti]).ln() - beta * (x.ln() - x + 1.0));
            }
        }
    }
    f
}

#[derive(Clone, Copy)]
struct RunStats {
    iters: usize,
    converged: bool,
    diag: Option<Diagnostics>,
}

fn solve_restricted(
    q: &mut Vec<f64>,
    rp: &Restricted,
    beta: f64,
    cfg: &SolverConfig,
) -> RunStats {
    let (s, t) = (rp.s(), rp.t_count);
    let lambda = rp.lambda();
    let mut diag = cfg.track_diagnostics.then(Diagnostics::default);
    let mut next = vec![0.0; s * t];
    let mut logits = vec![0.0; t];
    let mut prev_l = f64::INFINITY;
    let mut converged = false;
    let mut iters = 0;
    for it in 0..cfg.max_iters {
        iters = it + 1;
        if let Some(d) = diag.as_mut() {
            let (i, dv) = restricted_info(q, rp);
            let l = i - beta * dv;
            if prev_l.is_finite() {
                d.max_lagrangian_increase = d.max_lagrangian_increase.max(l - prev_l);
            }
            prev_l = l;
            let f = restricted_f_value(q, rp, beta);
            d.max_f_identity_gap = d.max_f_identity_gap.max((f - l - beta * lambda).abs());
        }
        let step = raw_ba_step(q, rp, beta, &mut next, &mut logits);
        if let Some(d) = diag.as_mut() {
            d.min_exponent_arg = d.min_exponent_arg.min(step.min_exponent_arg);
        }
        let mut delta = 0.0f64;
        for (a, b) in q.iter().zip(&next) {
            delta = delta.max((a - b).abs());
        }
        std::mem::swap(q, &mut next);
        if delta < cfg.conv_tol {
            converged = true;
            break;
        }
    }
    if let Some(d) = diag.as_mut() {
        // final iterate
        let (i, dv) = restricted_info(q, rp);
        let l = i - beta * dv;
        if prev_l.is_finite() {
            d.max_lagrangian_increase = d.max_lagrangian_increase.max(l - prev_l);
        }
        let f = restricted_f_value(q, rp, beta);
        d.max_f_identity_gap = d.max_f_identity_gap.max((f - l - beta * lambda).abs());
    }
    RunStats {
        iters,
        converged,
        diag,
    }
}

/// Near-identity interior initialization with seeded multiplicative jitter.
fn initial_encoder(rp: &Restricted, cfg: &SolverConfig) -> Vec<f64> {
    let (s, t) = (rp.s(), rp.t_count);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let floor = cfg.interior_floor.min(0.5 / t as f64);
    let mut q = vec![0.0; s * t];
    for a in 0..s {
        let hot = a % t;
        for ti in 0..t {
            let base = if ti == hot { 1.0 - floor * t as f64 } else { 0.0 } + floor;
            let u: f64 = rng.gen_range(-1.0..1.0);
            q[a * t + ti] = base * (1.0 + 1e-3 * u);
        }
        let z: f64 = q[a * t..(a + 1) * t].iter().sum();
        for ti in 0..t {
            q[a * t + ti] /= z;
        }
    }
    q
}

/// Push a warm-started encoder back into the interior and renormalize.
fn refloor(q: &mut [f64], t: usize, floor: f64) {
    for row in q.chunks_mut(t) {
        let mut z = 0.0;
        for v in row.iter_mut() {
            if *v < floor {
                *v = floor;
            }
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
}

fn bottleneck_labels(t_size: usize) -> Vec<String> {
    (0..t_size).map(|t| format!("t{t}")).collect()
}

/// Extend a restricted encoder to the full alphabet: supported rows are
/// copied (with a zero column for the reserved dummy), zero-mass rows map
/// deterministically to the dummy symbol.
fn extend_encoder(q: &[f64], rp: &Restricted, prob: &DibProblem) -> Channel {
    let t_size = prob.t_size();
    let n = prob.p().len();
    let mut rows = vec![vec![0.0; t_size]; n];
    for (si, &a) in rp.supp.iter().enumerate() {
        rows[a][..rp.t_count].copy_from_slice(&q[si * rp.t_count..(si + 1) * rp.t_count]);
    }
    if rp.needs_dummy {
        let dummy = t_size - 1;
        let mut supported = vec![false; n];
        for &a in &rp.supp {
            supported[a] = true;
        }
        for (a, row) in rows.iter_mut().enumerate() {
            if !supported[a] {
                row[dummy] = 1.0;
            }
        }
    }
    Channel::new(
        prob.p().labels().to_vec(),
        bottleneck_labels(t_size),
        rows,
    )
    .expect("extension of a row-stochastic encoder")
}

fn finish_result(
    q: &[f64],
    rp: &Restricted,
    prob: &DibProblem,
    beta: f64,
    stats: RunStats,
) -> SolverResult {
    let (i, d) = restricted_info(q, rp);
    let encoder = extend_encoder(q, rp, prob);
    let eff_card = effective_cardinality(&encoder, prob.p(), prob.ptilde(), EFF_CARD_THRESHOLD);
    SolverResult {
        encoder,
        i_nats: i,
        d_nats: d,
        lagrangian: i - beta * d,
        eff_card,
        iters: stats.iters,
        converged: stats.converged,
        diagnostics: stats.diag,
    }
}

// ---------------------------------------------------------------------------
// Public operations

/// L_β = I_q(A;T) − β·D(q(T)‖q̃(T)), computed on supp(p) with raw p̃ weights.
pub fn lagrangian(q: &Channel, p: &Distribution, ptilde: &Distribution, beta: f64) -> Result<f64> {
    let (i, d) = info_pair(q, p, ptilde)?;
    Ok(i - beta * d)
}

/// (I, D) of an encoder for a (p, p̃) pair; rows off supp(p) are ignored.
pub fn info_pair(q: &Channel, p: &Distribution, ptilde: &Distribution) -> Result<(f64, f64)> {
    if q.input_labels() != p.labels() || p.labels() != ptilde.labels() {
        return Err(Error::LabelMismatch("encoder/alphabet labels differ".into()));
    }
    let t = q.n_outputs();
    let mut r = vec![0.0; t];
    let mut qt = vec![0.0; t];
    for a in 0..p.len() {
        let (pa, pta) = (p.probs()[a], ptilde.probs()[a]);
        if pa > 0.0 {
            for (ti, &v) in q.row(a).iter().enumerate() {
                r[ti] += pa * v;
                qt[ti] += pta * v;
            }
        }
    }
    let mut i = 0.0;
    for a in 0..p.len() {
        let pa = p.probs()[a];
        if pa > 0.0 {
            for (ti, &v) in q.row(a).iter().enumerate() {
                if v > 0.0 && r[ti] > 0.0 {
                    i += pa * v * (v / r[ti]).ln();
                }
            }
        }
    }
    let mut d = 0.0;
    for ti in 0..t {
        if r[ti] > 0.0 {
            if qt[ti] <= 0.0 {
                return Err(Error::SupportViolation(format!(
                    "q̃(t{ti}) = 0 but q(t{ti}) > 0"
                )));
            }
            d += r[ti] * (r[ti] / qt[ti]).ln();
        }
    }
    Ok((i, d))
}

/// One Blahut-Arimoto update of an interior encoder.
pub fn ba_step(q: &Channel, p: &Distribution, ptilde: &Distribution, beta: f64) -> Result<Channel> {
    if q.input_labels() != p.labels() || p.labels() != ptilde.labels() {
        return Err(Error::LabelMismatch("encoder/alphabet labels differ".into()));
    }
    if beta < 0.0 {
        return Err(Error::Invalid("beta must be ≥ 0".into()));
    }
    let supp = p.support();
    for &a in &supp {
        if p.probs()[a] > 0.0 && ptilde.probs()[a] <= 0.0 {
            return Err(Error::SupportViolation(format!(
                "p̃({}) = 0 inside supp(p)",
                p.labels()[a]
            )));
        }
        if q.row(a).iter().any(|&v| v <= 0.0) {
            return Err(Error::NonInteriorInput(format!(
                "row {} has a zero entry",
                p.labels()[a]
            )));
        }
    }
    let rp = Restricted {
        t_count: q.n_outputs(),
        p: supp.iter().map(|&a| p.probs()[a]).collect(),
        pt: supp.iter().map(|&a| ptilde.probs()[a]).collect(),
        supp,
        needs_dummy: false,
    };
    let t = rp.t_count;
    let flat: Vec<f64> = rp
        .supp
        .iter()
        .flat_map(|&a| q.row(a).iter().copied())
        .collect();
    let mut out = vec![0.0; flat.len()];
    let mut logits = vec![0.0; t];
    raw_ba_step(&flat, &rp, beta, &mut out, &mut logits);
    let mut rows = q.rows().to_vec();
    for (si, &a) in rp.supp.iter().enumerate() {
        rows[a] = out[si * t..(si + 1) * t].to_vec();
    }
    Channel::new(
        q.input_labels().to_vec(),
        q.output_labels().to_vec(),
        rows,
    )
}

/// Iterate `ba_step` at fixed β from the given interior initialization.
pub fn solve_fixed_beta(
    prob: &DibProblem,
    beta: f64,
    init: &Channel,
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    if init.input_labels() != prob.p().labels() {
        return Err(Error::LabelMismatch("init inputs != alphabet".into()));
    }
    if init.n_outputs() != prob.t_size() {
        return Err(Error::LabelMismatch(format!(
            "init has {} outputs, problem t_size is {}",
            init.n_outputs(),
            prob.t_size()
        )));
    }
    let rp = prob.restricted();
    let mut q = Vec::with_capacity(rp.s() * rp.t_count);
    for &a in &rp.supp {
        let row = init.row(a);
        for ti in 0..rp.t_count {
            let v = row[ti];
            if v <= 0.0 {
                return Err(Error::NonInteriorInput(format!(
                    "init row {} not interior on the working columns",
                    prob.p().labels()[a]
                )));
            }
            q.push(v);
        }
        // renormalize over the working columns (dummy column mass excluded)
        let z: f64 = q[q.len() - rp.t_count..].iter().sum();
        let start = q.len() - rp.t_count;
        for v in &mut q[start..] {
            *v /= z;
        }
    }
    let stats = solve_restricted(&mut q, &rp, beta, cfg);
    Ok(finish_result(&q, &rp, prob, beta, stats))
}

/// Default near-identity interior initialization for a problem.
pub fn default_init(prob: &DibProblem, cfg: &SolverConfig) -> Channel {
    let rp = prob.restricted();
    let q = initial_encoder(&rp, cfg);
    extend_encoder(&q, &rp, prob)
}

/// Extend an encoder defined on supp(p) to the full alphabet by routing
/// zero-mass inputs to a bottleneck symbol with zero output mass.
pub fn support_restrict_extend(q_on_s: &Channel, p: &Distribution) -> Result<Channel> {
    let supp = p.support();
    let supp_labels: Vec<String> = supp.iter().map(|&a| p.labels()[a].clone()).collect();
    if q_on_s.input_labels() != supp_labels.as_slice() {
        return Err(Error::LabelMismatch(
            "encoder inputs != supp(p) in alphabet order".into(),
        ));
    }
    if supp.len() == p.len() {
        return Ok(q_on_s.clone());
    }
    let t = q_on_s.n_outputs();
    let mut mass = vec![0.0; t];
    for (si, &a) in supp.iter().enumerate() {
        for (ti, &v) in q_on_s.row(si).iter().enumerate() {
            mass[ti] += p.probs()[a] * v;
        }
    }
    let dummy = mass
        .iter()
        .position(|&m| m <= 0.0)
        .ok_or(Error::NoFreeSymbol)?;
    let mut rows = Vec::with_capacity(p.len());
    let mut si = 0;
    for a in 0..p.len() {
        if p.probs()[a] > 0.0 {
            rows.push(q_on_s.row(si).to_vec());
            si += 1;
        } else {
            let mut row = vec![0.0; t];
            row[dummy] = 1.0;
            rows.push(row);
        }
    }
    Channel::new(
        p.labels().to_vec(),
        q_on_s.output_labels().to_vec(),
        rows,
    )
}

/// Minimum number of bottleneck symbols the encoder effectively uses:
/// clusters of supp(q(T)) with matching posteriors q(A|t), plus one for the
/// dummy symbol when p̃ puts mass outside supp(p) and the encoder actually
/// distinguishes anything.
pub fn effective_cardinality(
    encoder: &Channel,
    p: &Distribution,
    ptilde: &Distribution,
    threshold: f64,
) -> usize {
    let t = encoder.n_outputs();
    let mut q_t = vec![0.0; t];
    for a in 0..p.len() {
        let pa = p.probs()[a];
        if pa > 0.0 {
            for (ti, &v) in encoder.row(a).iter().enumerate() {
                q_t[ti] += pa * v;
            }
        }
    }
    let live: Vec<usize> = (0..t).filter(|&ti| q_t[ti] > 0.0).collect();
    let posteriors: Vec<Vec<f64>> = live
        .iter()
        .map(|&ti| {
            (0..p.len())
                .map(|a| p.probs()[a] * encoder.row(a)[ti] / q_t[ti])
                .collect()
        })
        .collect();
    let mut uf = crate::partition::UnionFind::new(live.len());
    for i in 0..live.len() {
        for j in (i + 1)..live.len() {
            let diff = posteriors[i]
                .iter()
                .zip(&posteriors[j])
                .fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs()));
            if diff <= threshold {
                uf.union(i, j);
            }
        }
    }
    let clusters = uf.cells().len();
    let ptilde_exceeds = (0..p.len()).any(|a| ptilde.probs()[a] > 0.0 && p.probs()[a] <= 0.0);
    clusters + (ptilde_exceeds && clusters > 1) as usize
}

/// Reverse deterministic annealing with warm starts and per-β symmetry
/// residual tracking. Non-converged points are flagged, not fatal.
pub fn anneal_reverse(
    prob: &DibProblem,
    betas: &[f64],
    cfg: &SolverConfig,
    groups: &[(String, Group<Permutation>)],
) -> Result<AnnealingTrace> {
    if betas.is_empty() {
        return Err(Error::Invalid("empty β schedule".into()));
    }
    if betas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Invalid("β schedule must be strictly decreasing".into()));
    }
    let rp = prob.restricted();
    let mut q = initial_encoder(&rp, cfg);
    let mut trace = AnnealingTrace::default();
    for (k, &beta) in betas.iter().enumerate() {
        if k > 0 {
            refloor(&mut q, rp.t_count, cfg.interior_floor);
        }
        let stats = solve_restricted(&mut q, &rp, beta, cfg);
        let result = finish_result(&q, &rp, prob, beta, stats);
        let mut residuals = Vec::with_capacity(groups.len());
        for (name, g) in groups {
            let v = divergence_from_symmetric(&result.encoder, prob.p(), g)?;
            residuals.push((name.clone(), v));
        }
        trace.points.push(TracePoint {
            beta,
            result,
            residuals,
        });
    }
    Ok(trace)
}

/// Solve for a target divergence level λ by bisection over β.
pub fn target_lambda(prob: &DibProblem, lambda: f64, cfg: &SolverConfig) -> Result<SolverResult> {
    let lambda_max = prob.lambda_max();
    // accept rounded-up reports of Λ itself, clamped back to the maximum
    if lambda > lambda_max + 1e-6 * lambda_max.max(1.0) {
        return Err(Error::InfeasibleLambda {
            lambda,
            lambda_max,
        });
    }
    if lambda < 0.0 {
        return Err(Error::Invalid("λ must be ≥ 0".into()));
    }
    let lambda = lambda.min(lambda_max);
    let tol = 1e-4 * lambda_max.max(1.0);
    let rp = prob.restricted();
    if lambda <= tol || lambda_max == 0.0 {
        // β = 0 collapses to the constant encoder
        let mut q = initial_encoder(&rp, cfg);
        let stats = solve_restricted(&mut q, &rp, 0.0, cfg);
        return Ok(finish_result(&q, &rp, prob, 0.0, stats));
    }
    // coarse reverse sweep to bracket, then bisect in log β with warm starts
    let schedule = geometric_schedule(1e8, 1e-3, 56).expect("valid schedule");
    let mut q = initial_encoder(&rp, cfg);
    let mut best: Option<(f64, Vec<f64>, RunStats)> = None;
    let mut bracket: Option<((f64, Vec<f64>), f64)> = None; // ((hi_beta, hi_q), lo_beta)
    let mut prev: (f64, Vec<f64>) = (schedule[0], Vec::new());
    for (k, &beta) in schedule.iter().enumerate() {
        if k > 0 {
            refloor(&mut q, rp.t_count, cfg.interior_floor);
        }
        let stats = solve_restricted(&mut q, &rp, beta, cfg);
        let (_, d) = restricted_info(&q, &rp);
        let better = match &best {
            Some((bd, _, _)) => (d - lambda).abs() < (bd - lambda).abs(),
            None => true,
        };
        if better {
            best = Some((d, q.clone(), stats));
        }
        if (d - lambda).abs() <= tol {
            let (_, bq, bstats) = best.unwrap();
            return Ok(finish_result(&bq, &rp, prob, beta, bstats));
        }
        if d < lambda {
            if k > 0 {
                bracket = Some(((prev.0, prev.1.clone()), beta));
            }
            break;
        }
        prev = (beta, q.clone());
    }
    let ((mut hi, hi_q), mut lo) = match bracket {
        Some(b) => b,
        None => {
            // never dipped below λ: report the closest point found
            let (_, bq, bstats) = best.expect("schedule nonempty");
            let beta = schedule[schedule.len() - 1];
            return Ok(finish_result(&bq, &rp, prob, beta, bstats));
        }
    };
    let mut best = best.expect("sweep visited at least one point");
    for _ in 0..80 {
        let mid = (hi.ln() + lo.ln()).mul_add(0.5, 0.0).exp();
        let mut q = hi_q.clone();
        refloor(&mut q, rp.t_count, cfg.interior_floor);
        let stats = solve_restricted(&mut q, &rp, mid, cfg);
        let (_, d) = restricted_info(&q, &rp);
        if (d - lambda).abs() < (best.0 - lambda).abs() {
            best = (d, q.clone(), stats);
        }
        if (d - lambda).abs() <= tol {
            return Ok(finish_result(&q, &rp, prob, mid, stats));
        }
        if d < lambda {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi / lo - 1.0).abs() < 1e-14 {
            break;
        }
    }
    let (_, bq, bstats) = best;
    Ok(finish_result(&bq, &rp, prob, (hi.ln() + lo.ln()).mul_add(0.5, 0.0).exp(), bstats))
}

// ---------------------------------------------------------------------------
// Bifurcation detection

/// Where a residual first drops below [`RESIDUAL_THRESHOLD`], scanning from
/// the largest β downward.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GroupThreshold {
    pub beta: f64,
    pub i_nats: f64,
}

#[derive(Clone, Debug, Default)]
pub struct BifurcationReport {
    /// (β of the later point, previous eff_card, new eff_card).
    pub card_changes: Vec<(f64, usize, usize)>,
    /// Per tracked group, in supply order.
    pub group_thresholds: Vec<(String, Option<GroupThreshold>)>,
}

pub fn detect_bifurcations(trace: &AnnealingTrace) -> BifurcationReport {
    let mut report = BifurcationReport::default();
    for w in trace.points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.result.eff_card != b.result.eff_card {
            report
                .card_changes
                .push((b.beta, a.result.eff_card, b.result.eff_card));
        }
    }
    if let Some(first) = trace.points.first() {
        for (gi, (name, _)) in first.residuals.iter().enumerate() {
            let hit = trace.points.iter().find(|pt| {
                pt.residuals
                    .get(gi)
                    .map(|(_, v)| *v < RESIDUAL_THRESHOLD)
                    .unwrap_or(false)
            });
            report.group_thresholds.push((
                name.clone(),
                hit.map(|pt| GroupThreshold {
                    beta: pt.beta,
                    i_nats: pt.result.i_nats,
                }),
            ));
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Classic information bottleneck

/// Result of the classic bottleneck solver (self-consistent equations on a
/// joint p(X,Y)).
#[derive(Clone, Debug, Serialize)]
pub struct ClassicIbResult {
    pub encoder: Channel,
    pub i_xt: f64,
    pub i_yt: f64,
    pub iters: usize,
    pub converged: bool,
}

/// Classic IB at fixed β: q(t|x) ∝ q(t)·exp(−β·D(p(Y|x)‖q(Y|t))).
pub fn solve_classic_ib(j: &Joint, beta: f64, cfg: &SolverConfig) -> Result<ClassicIbResult> {
    let (px, _py, pyx) = joint_decompose(j)?;
    let n = px.len();
    let ny = j.y_labels().len();
    let t = n;
    // near-identity interior init, seeded jitter
    let mut q = {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let floor = cfg.interior_floor.min(0.5 / t as f64);
        let mut q = vec![0.0; n * t];
        for x in 0..n {
            for ti in 0..t {
                let base = if ti == x { 1.0 - floor * t as f64 } else { 0.0 } + floor;
                let u: f64 = rng.gen_range(-1.0..1.0);
                q[x * t + ti] = base * (1.0 + 1e-3 * u);
            }
            let z: f64 = q[x * t..(x + 1) * t].iter().sum();
            for ti in 0..t {
                q[x * t + ti] /= z;
            }
        }
        q
    };
    let mut next = vec![0.0; n * t];
    let mut qt = vec![0.0; t];
    let mut qyt = vec![0.0; t * ny];
    let mut logits = vec![0.0; t];
    let mut converged = false;
    let mut iters = 0;
    for it in 0..cfg.max_iters {
        iters = it + 1;
        qt.iter_mut().for_each(|v| *v = 0.0);
        qyt.iter_mut().for_each(|v| *v = 0.0);
        for x in 0..n {
            let pxv = px.probs()[x];
            for ti in 0..t {
                let w = pxv * q[x * t + ti];
                if w != 0.0 {
                    qt[ti] += w;
                    for y in 0..ny {
                        qyt[ti * ny + y] += w * pyx.row(x)[y];
                    }
                }
            }
        }
        for ti in 0..t {
            if qt[ti] > 0.0 {
                for y in 0..ny {
                    qyt[ti * ny + y] /= qt[ti];
                }
            }
        }
        for x in 0..n {
            let row = pyx.row(x);
            let mut max_logit = f64::NEG_INFINITY;
            for ti in 0..t {
                if qt[ti] > 0.0 {
                    let mut dkl = 0.0;
                    for y in 0..ny {
                        let pv = row[y];
                        if pv > 0.0 {
                            let qv = qyt[ti * ny + y];
                            if qv <= 0.0 {
                                dkl = f64::INFINITY;
                                break;
                            }
                            dkl += pv * (pv / qv).ln();
                        }
                    }
                    let l = if dkl.is_finite() {
                        qt[ti].ln() - beta * dkl
                    } else {
                        f64::NEG_INFINITY
                    };
                    logits[ti] = l;
                    if l > max_logit {
                        max_logit = l;
                    }
                } else {
                    logits[ti] = f64::NEG_INFINITY;
                }
            }
            let mut z = 0.0;
            for ti in 0..t {
                let v = if logits[ti].is_finite() {
                    let e = (logits[ti] - max_logit).exp();
                    if e < 1e-300 { 0.0 } else { e }
                } else {
                    0.0
                };
                next[x * t + ti] = v;
                z += v;
            }
            for ti in 0..t {
                next[x * t + ti] /= z;
            }
        }
        let mut delta = 0.0f64;
        for (a, b) in q.iter().zip(&next) {
            delta = delta.max((a - b).abs());
        }
        std::mem::swap(&mut q, &mut next);
        if delta < cfg.conv_tol {
            converged = true;
            break;
        }
    }
    // assemble result
    let rows: Vec<Vec<f64>> = (0..n).map(|x| q[x * t..(x + 1) * t].to_vec()).collect();
    let encoder = Channel::new(px.labels().to_vec(), bottleneck_labels(t), rows)?;
    qt.iter_mut().for_each(|v| *v = 0.0);
    for x in 0..n {
        for ti in 0..t {
            qt[ti] += px.probs()[x] * q[x * t + ti];
        }
    }
    let mut i_xt = 0.0;
    for x in 0..n {
        for ti in 0..t {
            let v = q[x * t + ti];
            if v > 0.0 && qt[ti] > 0.0 {
                i_xt += px.probs()[x] * v * (v / qt[ti]).ln();
            }
        }
    }
    let mut tj = vec![vec![0.0; ny]; t];
    for x in 0..n {
        for y in 0..ny {
            let m = j.matrix()[x][y];
            if m != 0.0 {
                for ti in 0..t {
                    tj[ti][y] += m * q[x * t + ti];
                }
            }
        }
    }
    let total: f64 = tj.iter().flatten().sum();
    for row in &mut tj {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    let joint_ty = Joint::new(bottleneck_labels(t), j.y_labels().to_vec(), tj)?;
    let i_yt = mutual_information(&joint_ty);
    Ok(ClassicIbResult {
        encoder,
        i_xt,
        i_yt,
        iters,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{project_to_family, HierarchicalModel};
    use crate::prob::product_labels;
    use crate::symmetry::{soft_symmetry_residual, PermutationLike, ProductPermutation};

    fn labs(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn dist(names: &[&str], p: &[f64]) -> Distribution {
        Distribution::new(labs(names), p.to_vec()).unwrap()
    }

    fn di_example() -> DibProblem {
        let p = dist(&["a", "b", "c", "d"], &[0.4, 0.4, 0.1, 0.1]);
        let u = Distribution::uniform(labs(&["a", "b", "c", "d"])).unwrap();
        DibProblem::new(p, u, None).unwrap()
    }

    #[test]
    fn lagrangian_examples() {
        let prob = di_example();
        let id_like = default_init(&prob, &SolverConfig::default());
        // constant encoder: I = D = 0
        let flat = Channel::constant(
            labs(&["a", "b", "c", "d"]),
            &dist(&["t0", "t1"], &[0.5, 0.5]),
        )
        .unwrap();
        let l = lagrangian(&flat, prob.p(), prob.ptilde(), 3.7).unwrap();
        assert!(l.abs() < 1e-12);

        // identity encoder at β=1: H(p) − D(p‖U)
        let id = Channel::identity(labs(&["a", "b", "c", "d"])).unwrap();
        let l = lagrangian(&id, prob.p(), prob.ptilde(), 1.0).unwrap();
        assert!((l - 1.0008048).abs() < 1e-6, "got {l}");

        // β = 0 reduces to I
        let (i, _) = info_pair(&id_like, prob.p(), prob.ptilde()).unwrap();
        let l0 = lagrangian(&id_like, prob.p(), prob.ptilde(), 0.0).unwrap();
        assert!((l0 - i).abs() < 1e-12);
    }

    #[test]
    fn ba_step_degenerate_cases() {
        let p = dist(&["a", "b"], &[0.7, 0.3]);
        let q = Channel::new(
            labs(&["a", "b"]),
            labs(&["t0", "t1"]),
            vec![vec![0.6, 0.4], vec![0.2, 0.8]],
        )
        .unwrap();
        // p̃ = p forces collapse to the marginal in one step
        let out = ba_step(&q, &p, &p, 5.0).unwrap();
        let r0 = 0.7 * 0.6 + 0.3 * 0.2;
        assert!((out.row(0)[0] - r0).abs() < 1e-12);
        assert!((out.row(1)[0] - r0).abs() < 1e-12);

        // β = 0 does the same regardless of p̃
        let u = Distribution::uniform(labs(&["a", "b"])).unwrap();
        let out = ba_step(&q, &p, &u, 0.0).unwrap();
        assert!((out.row(0)[0] - r0).abs() < 1e-12);

        // non-interior input rejected
        let hard = Channel::identity(labs(&["a", "b"])).unwrap();
        assert!(matches!(
            ba_step(&hard, &p, &u, 1.0),
            Err(Error::NonInteriorInput(_))
        ));
    }

    #[test]
    fn ba_descent_is_monotone() {
        let prob = di_example();
        let cfg = SolverConfig {
            track_diagnostics: true,
            max_iters: 100,
            conv_tol: 0.0,
            ..Default::default()
        };
        let init = default_init(&prob, &cfg);
        let res = solve_fixed_beta(&prob, 1.0, &init, &cfg).unwrap();
        let d = res.diagnostics.unwrap();
        assert!(d.max_lagrangian_increase <= 1e-12, "{d:?}");
        assert!(d.min_exponent_arg >= -1e-15, "{d:?}");
        assert!(d.max_f_identity_gap <= 1e-10, "{d:?}");
    }

    #[test]
    fn fixed_beta_recovers_ratio_partition() {
        let prob = di_example();
        let cfg = SolverConfig::default();
        let init = default_init(&prob, &cfg);
        let res = solve_fixed_beta(&prob, 1000.0, &init, &cfg).unwrap();
        assert!(res.converged);
        assert!((res.d_nats - 0.1927448).abs() < 1e-6, "D = {}", res.d_nats);
        assert!((res.i_nats - 0.5004024).abs() < 1e-6, "I = {}", res.i_nats);
        assert_eq!(res.eff_card, 2);
        // rows cluster into the ratio cells
        let part = crate::partition::partition_from_channel_rows(&res.encoder, 1e-6);
        assert_eq!(part.cells(), &[vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn fixed_beta_zero_collapses() {
        let prob = di_example();
        let cfg = SolverConfig::default();
        let init = default_init(&prob, &cfg);
        let res = solve_fixed_beta(&prob, 0.0, &init, &cfg).unwrap();
        assert!(res.i_nats.abs() < 1e-9);
        assert!(res.d_nats.abs() < 1e-9);
        assert_eq!(res.eff_card, 1);
    }

    #[test]
    fn ptilde_equal_p_collapses_at_any_beta() {
        let p = dist(&["a", "b", "c"], &[0.5, 0.3, 0.2]);
        let prob = DibProblem::new(p.clone(), p, None).unwrap();
        let cfg = SolverConfig::default();
        let init = default_init(&prob, &cfg);
        let res = solve_fixed_beta(&prob, 500.0, &init, &cfg).unwrap();
        assert!(res.i_nats.abs() < 1e-9, "I = {}", res.i_nats);
    }

    #[test]
    fn support_extension() {
        let p = dist(&["a", "b", "c", "d"], &[0.5, 0.25, 0.25, 0.0]);
        let q_on_s = Channel::new(
            labs(&["a", "b", "c"]),
            labs(&["t0", "t1", "t2", "t3"]),
            vec![
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
            ],
        )
        .unwrap();
        let full = support_restrict_extend(&q_on_s, &p).unwrap();
        // first free symbol is t2
        assert_eq!(full.row(3), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(full.row(0), q_on_s.row(0));

        // full support: unchanged
        let pf = dist(&["a", "b", "c"], &[0.5, 0.25, 0.25]);
        let same = support_restrict_extend(&q_on_s, &pf).unwrap();
        assert_eq!(same.rows(), q_on_s.rows());

        // no free symbol
        let q_cov = Channel::new(
            labs(&["a", "b", "c"]),
            labs(&["t0", "t1"]),
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]],
        )
        .unwrap();
        assert!(matches!(
            support_restrict_extend(&q_cov, &p),
            Err(Error::NoFreeSymbol)
        ));
    }

    #[test]
    fn effective_cardinality_examples() {
        let p = dist(&["a", "b", "c", "d"], &[0.4, 0.4, 0.1, 0.1]);
        let u = Distribution::uniform(labs(&["a", "b", "c", "d"])).unwrap();
        let flat = Channel::constant(
            labs(&["a", "b", "c", "d"]),
            &dist(&["t0", "t1"], &[0.5, 0.5]),
        )
        .unwrap();
        assert_eq!(effective_cardinality(&flat, &p, &u, 1e-3), 1);
    }

    #[test]
    fn anneal_reaches_zero_and_detects_single_bifurcation() {
        let prob = di_example();
        let cfg = SolverConfig::default();
        let betas = geometric_schedule(1e3, 1e-2, 100).unwrap();
        let trace = anneal_reverse(&prob, &betas, &cfg, &[]).unwrap();
        assert_eq!(trace.points.len(), 100);
        let last = trace.points.last().unwrap();
        assert!(last.result.i_nats < 1e-3);
        assert!(last.result.d_nats < 1e-3);
        let report = detect_bifurcations(&trace);
        assert_eq!(report.card_changes.len(), 1, "{:?}", report.card_changes);
        let (_, old, new) = report.card_changes[0];
        assert_eq!((old, new), (2, 1)); // trace runs from large β downward
    }

    #[test]
    fn single_point_schedule_matches_fixed_beta() {
        let prob = di_example();
        let cfg = SolverConfig::default();
        let trace = anneal_reverse(&prob, &[1000.0], &cfg, &[]).unwrap();
        let init = default_init(&prob, &cfg);
        let fixed = solve_fixed_beta(&prob, 1000.0, &init, &cfg).unwrap();
        let a = &trace.points[0].result;
        assert!((a.i_nats - fixed.i_nats).abs() < 1e-9);
        assert!((a.d_nats - fixed.d_nats).abs() < 1e-9);
    }

    #[test]
    fn target_lambda_examples() {
        let prob = di_example();
        let cfg = SolverConfig::default();
        let lam = prob.lambda_max();

        let res = target_lambda(&prob, 0.0, &cfg).unwrap();
        assert!(res.i_nats.abs() < 1e-9);

        let res = target_lambda(&prob, lam, &cfg).unwrap();
        assert!((res.d_nats - lam).abs() <= 1e-4 * lam.max(1.0), "D = {}", res.d_nats);

        assert!(matches!(
            target_lambda(&prob, 2.0 * lam, &cfg),
            Err(Error::InfeasibleLambda { .. })
        ));
    }

    #[test]
    fn target_lambda_intermediate() {
        let prob = di_example();
        let cfg = SolverConfig::default();
        let lam = prob.lambda_max();
        let res = target_lambda(&prob, 0.5 * lam, &cfg).unwrap();
        assert!(
            (res.d_nats - 0.5 * lam).abs() <= 1e-4 * lam.max(1.0),
            "D = {}, want {}",
            res.d_nats,
            0.5 * lam
        );
    }

    #[test]
    fn classic_ib_clusters_duplicate_rows() {
        let px = dist(&["x0", "x1", "x2"], &[0.3, 0.3, 0.4]);
        let pyx = Channel::new(
            labs(&["x0", "x1", "x2"]),
            labs(&["y0", "y1"]),
            vec![vec![0.8, 0.2], vec![0.8, 0.2], vec![0.1, 0.9]],
        )
        .unwrap();
        let j = Joint::from_marginal_and_channel(&px, &pyx).unwrap();
        let cfg = SolverConfig::default();
        let res = solve_classic_ib(&j, 1000.0, &cfg).unwrap();
        assert!(res.converged);
        let dev: f64 = res
            .encoder
            .row(0)
            .iter()
            .zip(res.encoder.row(1))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(dev <= 1e-6, "row deviation {dev}");
        let ixy = mutual_information(&j);
        assert!((res.i_yt - ixy).abs() < 1e-6, "I(Y;T) = {}, I(X;Y) = {ixy}", res.i_yt);

        // β = 0 collapses to a constant encoder
        let res0 = solve_classic_ib(&j, 0.0, &cfg).unwrap();
        assert!(res0.i_xt.abs() < 1e-9);
    }

    #[test]
    fn full_divergence_solution_absorbs_exactly_the_problem_symmetries() {
        // 2×2 product alphabet, symmetric conditional: only the simultaneous
        // (swap X, swap Y) pair preserves the problem. The λ = Λ solution must
        // absorb exactly those pairs and visibly move under the other two.
        let xl = vec!["x0".to_string(), "x1".to_string()];
        let yl = vec!["y0".to_string(), "y1".to_string()];
        let labels = product_labels(&xl, &yl);
        let p = Distribution::new(labels.clone(), vec![0.4, 0.1, 0.1, 0.4]).unwrap();
        let model = HierarchicalModel::Ce {
            x_labels: xl,
            y_labels: yl,
        };
        let ptilde = project_to_family(&model, &p).unwrap();
        let prob = DibProblem::new(p.clone(), ptilde, None).unwrap();
        let kappa = target_lambda(&prob, prob.lambda_max(), &SolverConfig::default())
            .unwrap()
            .encoder;
        // smooth the hard optimum so broken symmetries give finite divergences;
        // rows stay equal within cells, so absorbed pairs still read as zero
        let t = kappa.n_outputs();
        let kappa = Channel::new(
            kappa.input_labels().to_vec(),
            kappa.output_labels().to_vec(),
            kappa
                .rows()
                .iter()
                .map(|r| r.iter().map(|v| 0.99 * v + 0.01 / t as f64).collect())
                .collect(),
        )
        .unwrap();
        let perm_channel = |images: [usize; 4]| {
            let rows = images
                .iter()
                .map(|&img| {
                    let mut row = vec![0.0; 4];
                    row[img] = 1.0;
                    row
                })
                .collect();
            Channel::new(labels.clone(), labels.clone(), rows).unwrap()
        };
        let id = Permutation::identity(2);
        let swap = Permutation::new(vec![1, 0]).unwrap();
        for (sigma, tau) in [(&id, &id), (&id, &swap), (&swap, &id), (&swap, &swap)] {
            let pair = ProductPermutation::new(sigma.clone(), tau.clone());
            let transform = perm_channel([
                pair.to_flat_permutation().apply(0),
                pair.to_flat_permutation().apply(1),
                pair.to_flat_permutation().apply(2),
                pair.to_flat_permutation().apply(3),
            ]);
            let residual = soft_symmetry_residual(&kappa, &transform, &p).unwrap();
            let in_group = sigma == tau;
            if in_group {
                assert!(residual <= 1e-10, "absorbed pair moved κ by {residual:e}");
            } else {
                assert!(residual >= 1e-3, "broken pair only moved κ by {residual:e}");
            }
        }
    }
}
