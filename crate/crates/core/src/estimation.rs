//! From counts to physics: normalized correlation matrices, exact
//! entangled-state fidelity from complete MUB sets, Schmidt-number
//! certification, RρR maximum-likelihood tomography, and Poisson bootstrap.

use crate::error::{Error, Result};
use crate::linalg::{trace_distance, CMat, CVec, C64};
use crate::modes::{mub_set, MubFamily};
use crate::quantum::CountTable;
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

/// Normalized coincidence probabilities for one basis measured on both sides
/// (idler side conjugated upstream).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub basis: usize,
    pub probs: DMatrix<f64>,
}

impl CorrelationMatrix {
    pub fn dim(&self) -> usize {
        self.probs.nrows()
    }
}

/// Normalizes the (m, m) setting of a count table to probabilities.
pub fn correlations_from_counts(counts: &CountTable, m: usize) -> Result<CorrelationMatrix> {
    if m >= counts.n_bases {
        return Err(Error::Parameter(format!(
            "basis {m} outside the {} recorded bases",
            counts.n_bases
        )));
    }
    let total = counts.setting_total(m, m);
    if total <= 0.0 {
        return Err(Error::EmptyData(format!("no counts in basis {m}")));
    }
    let d = counts.dim;
    let probs = DMatrix::from_fn(d, d, |a, b| counts.get(m, m, a, b) / total);
    Ok(CorrelationMatrix { basis: m, probs })
}

/// Fidelity estimate to |Φ⁺⟩ with Schmidt-number certification.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessResult {
    pub fidelity: f64,
    pub std_err: Option<f64>,
    pub certified_schmidt: usize,
}

/// Largest k with F > (k−1)/d; a state of Schmidt rank k−1 can reach exactly
/// (k−1)/d, so strict excess certifies rank ≥ k.
pub fn certified_schmidt_number(fidelity: f64, d: usize) -> usize {
    (1..=d)
        .filter(|&k| fidelity > (k - 1) as f64 / d as f64)
        .max()
        .unwrap_or(0)
}

/// Exact fidelity to |Φ⁺⟩ from correlations in all d+1 MUBs:
/// F̂ = (S − 1)/d with S = Σ_m Σ_a P(a,a|m).
pub fn fidelity_from_mubs(correlations: &[CorrelationMatrix], d: usize) -> Result<WitnessResult> {
    // Supported dims are the primes with MUB constructions in this crate.
    mub_set(d)?;
    let mut seen = vec![false; d + 1];
    let mut s = 0.0;
    for c in correlations {
        if c.dim() != d {
            return Err(Error::Shape(format!(
                "correlation matrix dim {} vs d = {d}",
                c.dim()
            )));
        }
        if c.basis > d || seen[c.basis] {
            return Err(Error::IncompleteData(format!(
                "unexpected or duplicate basis {}",
                c.basis
            )));
        }
        seen[c.basis] = true;
        for a in 0..d {
            s += c.probs[(a, a)];
        }
    }
    if !seen.iter().all(|&x| x) {
        return Err(Error::IncompleteData(format!(
            "need all {} MUBs, got {}",
            d + 1,
            seen.iter().filter(|&&x| x).count()
        )));
    }
    let fidelity = (s - 1.0) / d as f64;
    Ok(WitnessResult {
        fidelity,
        std_err: None,
        certified_schmidt: certified_schmidt_number(fidelity, d),
    })
}

/// Maximum-likelihood state estimate and its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TomographyResult {
    pub rho: CMat,
    pub iterations: usize,
    pub loglik_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            max_iters: 5000,
            tol: 1e-10,
        }
    }
}

const P_FLOOR: f64 = 1e-12;

struct ProjectorSet {
    // Rank-1 projector vectors v_ma ⊗ v_nb with their (setting, count) index.
    vectors: Vec<CVec>,
    setting_of: Vec<usize>,
    counts: Vec<f64>,
    setting_totals: Vec<f64>,
    dd: usize,
}

fn build_projectors(counts: &CountTable, mubs: &MubFamily) -> Result<ProjectorSet> {
    let d = counts.dim;
    if mubs.dim != d || counts.n_bases != mubs.n_bases() {
        return Err(Error::Shape(format!(
            "count table ({}, {} bases) vs MUB family ({}, {} bases)",
            d,
            counts.n_bases,
            mubs.dim,
            mubs.n_bases()
        )));
    }
    let nb = counts.n_bases;
    let mut setting_totals = vec![0.0; nb * nb];
    for m in 0..nb {
        for n in 0..nb {
            let t = counts.setting_total(m, n);
            if t <= 0.0 {
                return Err(Error::IncompleteData(format!(
                    "setting ({m}, {n}) has no counts; tomography needs every basis pair"
                )));
            }
            setting_totals[m * nb + n] = t;
        }
    }
    let mut vectors = Vec::with_capacity(nb * nb * d * d);
    let mut setting_of = Vec::with_capacity(vectors.capacity());
    let mut count_list = Vec::with_capacity(vectors.capacity());
    for m in 0..nb {
        for n in 0..nb {
            for a in 0..d {
                for b in 0..d {
                    let va = mubs.vector(m, a);
                    let vb = mubs.vector(n, b);
                    vectors.push(CVec::from_fn(d * d, |k, _| va[k / d] * vb[k % d]));
                    setting_of.push(m * nb + n);
                    count_list.push(counts.get(m, n, a, b));
                }
            }
        }
    }
    Ok(ProjectorSet {
        vectors,
        setting_of,
        counts: count_list,
        setting_totals,
        dd: d * d,
    })
}

fn weighted_loglik(ps: &ProjectorSet, rho: &CMat) -> f64 {
    let mut ll = 0.0;
    for (i, v) in ps.vectors.iter().enumerate() {
        if ps.counts[i] > 0.0 {
            let p = expectation_re(rho, v).max(P_FLOOR);
            ll += ps.counts[i] / ps.setting_totals[ps.setting_of[i]] * p.ln();
        }
    }
    ll
}

fn expectation_re(rho: &CMat, v: &CVec) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for r in 0..rho.nrows() {
        let mut row = C64::new(0.0, 0.0);
        for c in 0..rho.ncols() {
            row += rho[(r, c)] * v[c];
        }
        acc += v[r].conj() * row;
    }
    acc.re
}

/// RρR fixed-point iteration from the maximally mixed state:
/// R(ρ) = Σ_i (1/M_mn)·(n_i / Tr[Π_i ρ])·Π_i, ρ ← N[R ρ R].
/// Stops when the trace-distance step drops below `tol`.
pub fn mle_tomography(
    counts: &CountTable,
    mubs: &MubFamily,
    opts: &MleOptions,
) -> Result<TomographyResult> {
    if opts.max_iters == 0 || opts.tol <= 0.0 {
        return Err(Error::Parameter("max_iters ≥ 1 and tol > 0 required".into()));
    }
    let ps = build_projectors(counts, mubs)?;
    let dd = ps.dd;
    let mut rho = CMat::identity(dd, dd) / C64::new(dd as f64, 0.0);
    let mut loglik_trace = vec![weighted_loglik(&ps, &rho)];
    let mut iterations = 0;
    for _ in 0..opts.max_iters {
        iterations += 1;
        let mut r_op = CMat::zeros(dd, dd);
        for (i, v) in ps.vectors.iter().enumerate() {
            if ps.counts[i] > 0.0 {
                let p = expectation_re(&rho, v).max(P_FLOOR);
                let w = ps.counts[i] / (ps.setting_totals[ps.setting_of[i]] * p);
                // r_op += w · v v†
                for r in 0..dd {
                    let wr = C64::new(w, 0.0) * v[r];
                    for c in 0..dd {
                        r_op[(r, c)] += wr * v[c].conj();
                    }
                }
            }
        }
        let mut next = &r_op * &rho * &r_op;
        // Hermitize against rounding drift, then renormalize the trace.
        let herm = (&next + next.adjoint()) * C64::new(0.5, 0.0);
        next = herm;
        let tr: f64 = (0..dd).map(|i| next[(i, i)].re).sum();
        if tr <= 0.0 || !tr.is_finite() {
            return Err(Error::Numerical(format!("RρR trace collapsed to {tr}")));
        }
        next /= C64::new(tr, 0.0);
        let step = trace_distance(&next, &rho);
        rho = next;
        loglik_trace.push(weighted_loglik(&ps, &rho));
        if step < opts.tol {
            break;
        }
    }
    Ok(TomographyResult {
        rho,
        iterations,
        loglik_trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub mean: f64,
    pub std: f64,
    pub samples: Vec<f64>,
    pub low_replicas: bool,
}

fn summarize(samples: Vec<f64>) -> BootstrapResult {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    BootstrapResult {
        mean,
        std: var.sqrt(),
        low_replicas: samples.len() < 100,
        samples,
    }
}

fn resample(counts: &CountTable, rng: &mut ChaCha8Rng) -> Result<CountTable> {
    let mut out = counts.clone();
    for v in out.values.iter_mut() {
        if *v > 0.0 {
            let dist = Poisson::new(*v)
                .map_err(|e| Error::Numerical(format!("Poisson(λ={v}): {e}")))?;
            *v = dist.sample(rng);
        }
    }
    Ok(out)
}

fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    // Distinct deterministic stream per replica; replicas are independent, so
    // any runner may process them in any order.
    ChaCha8Rng::seed_from_u64(seed ^ replica.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Poisson bootstrap of the tomography pipeline: resample counts, re-run MLE,
/// record fidelity to `target` per replica; 1-std error as reported.
pub fn bootstrap_fidelity(
    counts: &CountTable,
    mubs: &MubFamily,
    target: &CVec,
    n_rep: usize,
    seed: u64,
    opts: &MleOptions,
) -> Result<BootstrapResult> {
    if n_rep < 2 {
        return Err(Error::Parameter("bootstrap needs at least 2 replicas".into()));
    }
    let mut samples = Vec::with_capacity(n_rep);
    for r in 0..n_rep {
        let mut rng = replica_rng(seed, r as u64);
        let resampled = resample(counts, &mut rng)?;
        let fit = mle_tomography(&resampled, mubs, opts)?;
        samples.push((target.adjoint() * &fit.rho * target)[(0, 0)].re);
    }
    Ok(summarize(samples))
}

/// Poisson bootstrap of the MUB witness (diagonal settings only).
pub fn bootstrap_witness(
    counts: &CountTable,
    d: usize,
    n_rep: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if n_rep < 2 {
        return Err(Error::Parameter("bootstrap needs at least 2 replicas".into()));
    }
    let mut samples = Vec::with_capacity(n_rep);
    for r in 0..n_rep {
        let mut rng = replica_rng(seed, r as u64);
        let resampled = resample(counts, &mut rng)?;
        let corrs: Result<Vec<_>> = (0..=d)
            .map(|m| correlations_from_counts(&resampled, m))
            .collect();
        samples.push(fidelity_from_mubs(&corrs?, d)?.fidelity);
    }
    Ok(summarize(samples))
}

/// Closed-form phase of the best-fit target (|01⟩ − e^{iθ}|10⟩)/√2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEstimate {
    /// None when the relevant coherence vanishes and the phase is undefined.
    pub theta: Option<f64>,
    pub magnitude: f64,
}

/// θ̂ = arg(−⟨10|ρ̂|01⟩), normalized to [0, 2π). Verified against a dense grid
/// search over ⟨Ψ_T(θ)|ρ̂|Ψ_T(θ)⟩ in the tests.
pub fn phase_fit(rho: &CMat) -> Result<PhaseEstimate> {
    if rho.nrows() != 4 || rho.ncols() != 4 {
        return Err(Error::Shape(format!(
            "phase fit needs a two-qubit state, got {:?}",
            rho.shape()
        )));
    }
    let c = rho[(2, 1)];
    if c.norm() < 1e-12 {
        return Ok(PhaseEstimate {
            theta: None,
            magnitude: c.norm(),
        });
    }
    let theta = (-c).arg().rem_euclid(std::f64::consts::TAU);
    Ok(PhaseEstimate {
        theta: Some(theta),
        magnitude: c.norm(),
    })
}
