//! Heralded biphoton states through a realized circuit: routing correlations,
//! two-photon interference with partial distinguishability, conditional
//! swapped states, and Poissonian count generation.

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64, I0};
use crate::modes::{ChannelMap, MubFamily, Port};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// Photon-pair source in its Schmidt decomposition: Σ_i λ_i |i⟩_idler |i⟩_signal,
/// with the signal entering one circuit input port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiphotonSource {
    pub schmidt: Vec<f64>,
    pub port: Port,
}

impl BiphotonSource {
    pub fn new(schmidt: Vec<f64>, port: Port) -> Result<Self> {
        if schmidt.is_empty() {
            return Err(Error::Parameter("empty Schmidt vector".into()));
        }
        if !port.is_input() {
            return Err(Error::Parameter("signal must enter an input port".into()));
        }
        if schmidt.iter().any(|&l| l < 0.0 || !l.is_finite()) {
            return Err(Error::Parameter("Schmidt coefficients must be non-negative".into()));
        }
        let norm: f64 = schmidt.iter().map(|l| l * l).sum();
        if (norm - 1.0).abs() >= 1e-12 {
            return Err(Error::Parameter(format!("Σλ² = {norm}, expected 1")));
        }
        Ok(BiphotonSource { schmidt, port })
    }

    pub fn maximally_entangled(d: usize, port: Port) -> Result<Self> {
        let amp = 1.0 / (d as f64).sqrt();
        BiphotonSource::new(vec![amp; d], port)
    }

    pub fn dim(&self) -> usize {
        self.schmidt.len()
    }
}

/// Signal-mode amplitudes prepared by projecting the idler; `weight` is the
/// heralding probability Σ|amplitude|².
#[derive(Debug, Clone, PartialEq)]
pub struct HeraldedState {
    pub amplitudes: CVec,
    pub weight: f64,
}

/// Projecting the idler onto `projector` leaves the signal in
/// amplitude_i = λ_i·conj(projector_i).
pub fn herald(source: &BiphotonSource, projector: &CVec) -> Result<HeraldedState> {
    if projector.len() != source.dim() {
        return Err(Error::Shape(format!(
            "projector dim {} vs source dim {}",
            projector.len(),
            source.dim()
        )));
    }
    if projector.iter().all(|z| z.norm() == 0.0) {
        return Err(Error::DegenerateProjector("idler projector is zero".into()));
    }
    let amplitudes = CVec::from_fn(source.dim(), |i, _| {
        C64::new(source.schmidt[i], 0.0) * projector[i].conj()
    });
    let weight = amplitudes.iter().map(|z| z.norm_sqr()).sum();
    Ok(HeraldedState { amplitudes, weight })
}

fn check_modes(t: &CMat, modes: &[usize], rows: bool) -> Result<()> {
    let limit = if rows { t.nrows() } else { t.ncols() };
    for &m in modes {
        if m >= limit {
            return Err(Error::Shape(format!("mode index {m} out of range {limit}")));
        }
    }
    Ok(())
}

/// Single-pair transfer probability: p = |⟨output_projector| T̃ |heralded⟩|²
/// with the heralded signal on columns `in_modes` and the projector on rows
/// `out_modes`. Valid whenever the two sources route to disjoint outputs.
pub fn routing_coincidence_prob(
    t: &CMat,
    heralded: &HeraldedState,
    in_modes: &[usize],
    output_projector: &CVec,
    out_modes: &[usize],
) -> Result<f64> {
    if in_modes.len() != heralded.amplitudes.len() || out_modes.len() != output_projector.len() {
        return Err(Error::Shape("mode lists must match vector dimensions".into()));
    }
    check_modes(t, in_modes, false)?;
    check_modes(t, out_modes, true)?;
    let mut amp = I0;
    for (r, &row) in out_modes.iter().enumerate() {
        for (c, &col) in in_modes.iter().enumerate() {
            amp += output_projector[r].conj() * t[(row, col)] * heralded.amplitudes[c];
        }
    }
    Ok(amp.norm_sqr())
}

/// Coincidence probability for one photon per source with pairwise
/// indistinguishability γ. With M_kl = ⟨det_k|T̃|heralded_l⟩:
/// p = |M11M22|² + |M12M21|² + 2γRe(M11M22·conj(M12M21)).
pub fn two_photon_event(
    t: &CMat,
    heralded1: &HeraldedState,
    heralded2: &HeraldedState,
    in1_modes: &[usize],
    in2_modes: &[usize],
    det: (usize, usize),
    gamma: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Parameter(format!("γ = {gamma} outside [0,1]")));
    }
    let split = t.nrows() / 2;
    if det.0 >= split || det.1 < split || det.1 >= t.nrows() {
        return Err(Error::InvalidPattern(format!(
            "detectors ({}, {}) must sit on Out1 then Out2 (split {split})",
            det.0, det.1
        )));
    }
    check_modes(t, in1_modes, false)?;
    check_modes(t, in2_modes, false)?;
    let m = |row: usize, modes: &[usize], h: &HeraldedState| -> C64 {
        modes
            .iter()
            .enumerate()
            .map(|(c, &col)| t[(row, col)] * h.amplitudes[c])
            .sum()
    };
    let m11 = m(det.0, in1_modes, heralded1);
    let m12 = m(det.0, in2_modes, heralded2);
    let m21 = m(det.1, in1_modes, heralded1);
    let m22 = m(det.1, in2_modes, heralded2);
    let direct = m11 * m22;
    let exchanged = m12 * m21;
    Ok(direct.norm_sqr() + exchanged.norm_sqr() + 2.0 * gamma * (direct * exchanged.conj()).re)
}

/// Idler⊗idler density matrix conditioned on a two-detector pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalState {
    pub rho: CMat,
    pub success_prob: f64,
}

/// Heralded swapped state for two sources feeding In1/In2 channel modes.
///
/// det = (Out1 row, Out2 row) of T̃. Amplitude conventions, with i over
/// source-1 and j over source-2 Schmidt modes:
///   A1(i,j) = λ_i μ_j T̃[det.0, in1_i]·T̃[det.1, in2_j]·e^{iφ·[det.1 ∈ Out1]}
///   A2(i,j) = λ_i μ_j T̃[det.0, in2_j]·T̃[det.1, in1_i]·e^{iφ·[det.0 ∈ Out1]}
/// The phase φ rides on source-2 amplitudes that cross into Out1, so only the
/// A1/A2-relative phase is observable, which is what tomography reports.
/// ρ ∝ A1A1† + A2A2† + γ(A1A2† + h.c.), PSD by construction for γ ≤ 1.
pub fn swapped_state(
    t: &CMat,
    source1: &BiphotonSource,
    source2: &BiphotonSource,
    in1_modes: &[usize],
    in2_modes: &[usize],
    det: (usize, usize),
    gamma: f64,
    phi: f64,
) -> Result<ConditionalState> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Parameter(format!("γ = {gamma} outside [0,1]")));
    }
    if in1_modes.len() != source1.dim() || in2_modes.len() != source2.dim() {
        return Err(Error::Shape("source dims must match channel mode lists".into()));
    }
    let split = t.nrows() / 2;
    if det.0 >= split || det.1 < split || det.1 >= t.nrows() {
        return Err(Error::InvalidPattern(format!(
            "pattern ({}, {}) must select one Out1 and one Out2 focus",
            det.0, det.1
        )));
    }
    check_modes(t, in1_modes, false)?;
    check_modes(t, in2_modes, false)?;
    let (da, dh) = (source1.dim(), source2.dim());
    let cross = C64::from_polar(1.0, phi);
    let mut a1 = CVec::zeros(da * dh);
    let mut a2 = CVec::zeros(da * dh);
    for i in 0..da {
        for j in 0..dh {
            let w = C64::new(source1.schmidt[i] * source2.schmidt[j], 0.0);
            // det.1 ∈ Out2 always, so A1 carries no crossing phase; in A2 the
            // source-2 photon lands on det.0 ∈ Out1 and picks up φ.
            a1[i * dh + j] = w * t[(det.0, in1_modes[i])] * t[(det.1, in2_modes[j])];
            a2[i * dh + j] = w * t[(det.0, in2_modes[j])] * cross * t[(det.1, in1_modes[i])];
        }
    }
    let gram11: f64 = a1.iter().map(|z| z.norm_sqr()).sum();
    let gram22: f64 = a2.iter().map(|z| z.norm_sqr()).sum();
    let gram12: C64 = a2.dotc(&a1);
    let success = gram11 + gram22 + 2.0 * gamma * gram12.re;
    if success < 1e-14 {
        return Err(Error::Unheraldable(format!(
            "pattern ({}, {}) has vanishing heralding probability",
            det.0, det.1
        )));
    }
    let mut rho = CMat::zeros(da * dh, da * dh);
    for r in 0..da * dh {
        for c in 0..da * dh {
            rho[(r, c)] = (a1[r] * a1[c].conj()
                + a2[r] * a2[c].conj()
                + C64::new(gamma, 0.0) * (a1[r] * a2[c].conj() + a2[r] * a1[c].conj()))
                / C64::new(success, 0.0);
        }
    }
    Ok(ConditionalState {
        rho,
        success_prob: success,
    })
}

/// All four (Out1 focus, Out2 focus) global-row patterns for a channel, in
/// (local a, local b) order; `default_detection_pattern` picks the one whose
/// heralded target is (|01⟩ − e^{iφ}|10⟩)/√2.
pub fn channel_patterns(channels: &ChannelMap, ch: usize, modes_per_port: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for &a in &channels.out1[ch] {
        for &b in &channels.out2[ch] {
            out.push((a, modes_per_port + b));
        }
    }
    out
}

pub fn default_detection_pattern(
    channels: &ChannelMap,
    ch: usize,
    modes_per_port: usize,
) -> (usize, usize) {
    (
        channels.out1[ch][0],
        modes_per_port + channels.out2[ch][1],
    )
}

/// Coincidence counts (or probabilities) indexed by basis pair (m, n) and
/// outcome pair (a, b). Counts are kept as f64; they enter estimation as
/// weights, not exact integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    pub dim: usize,
    pub n_bases: usize,
    pub values: Vec<f64>,
}

impl CountTable {
    pub fn zeros(dim: usize, n_bases: usize) -> Self {
        CountTable {
            dim,
            n_bases,
            values: vec![0.0; n_bases * n_bases * dim * dim],
        }
    }

    fn idx(&self, m: usize, n: usize, a: usize, b: usize) -> usize {
        ((m * self.n_bases + n) * self.dim + a) * self.dim + b
    }

    pub fn get(&self, m: usize, n: usize, a: usize, b: usize) -> f64 {
        self.values[self.idx(m, n, a, b)]
    }

    pub fn set(&mut self, m: usize, n: usize, a: usize, b: usize, v: f64) {
        let i = self.idx(m, n, a, b);
        self.values[i] = v;
    }

    pub fn setting_total(&self, m: usize, n: usize) -> f64 {
        let mut s = 0.0;
        for a in 0..self.dim {
            for b in 0..self.dim {
                s += self.get(m, n, a, b);
            }
        }
        s
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("basis_m,basis_n,outcome_a,outcome_b,counts\n");
        for m in 0..self.n_bases {
            for n in 0..self.n_bases {
                for a in 0..self.dim {
                    for b in 0..self.dim {
                        s.push_str(&format!("{m},{n},{a},{b},{}\n", self.get(m, n, a, b)));
                    }
                }
            }
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    column: 1,
                    offset: 0,
                });
            }
            let parse_u = |f: &str, col: usize| {
                f.trim().parse::<usize>().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    column: col,
                    offset: 0,
                })
            };
            let m = parse_u(fields[0], 1)?;
            let n = parse_u(fields[1], 2)?;
            let a = parse_u(fields[2], 3)?;
            let b = parse_u(fields[3], 4)?;
            let v = fields[4].trim().parse::<f64>().map_err(|_| Error::Parse {
                line: lineno + 1,
                column: 5,
                offset: 0,
            })?;
            rows.push((m, n, a, b, v));
        }
        if rows.is_empty() {
            return Err(Error::EmptyData("no count rows".into()));
        }
        let dim = rows.iter().map(|r| r.2.max(r.3)).max().unwrap() + 1;
        let n_bases = rows.iter().map(|r| r.0.max(r.1)).max().unwrap() + 1;
        let mut table = CountTable::zeros(dim, n_bases);
        for (m, n, a, b, v) in rows {
            table.set(m, n, a, b, v);
        }
        Ok(table)
    }
}

/// Poisson sampling of a probability table: n ~ Poisson(flux·duration·p).
pub fn sample_counts(probs: &CountTable, flux: f64, duration: f64, seed: u64) -> Result<CountTable> {
    if flux < 0.0 || duration < 0.0 || !flux.is_finite() || !duration.is_finite() {
        return Err(Error::Parameter("flux and duration must be non-negative".into()));
    }
    if probs.values.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::Parameter("probabilities must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = probs.clone();
    for v in out.values.iter_mut() {
        let lambda = flux * duration * *v;
        *v = if lambda > 0.0 {
            let dist = Poisson::new(lambda)
                .map_err(|e| Error::Numerical(format!("Poisson(λ={lambda}): {e}")))?;
            dist.sample(&mut rng)
        } else {
            0.0
        };
    }
    Ok(out)
}

/// Unnormalized coincidence probabilities for a routed pair measured in each
/// MUB on both sides (diagonal settings only). The idler is projected in the
/// conjugated basis; the signal, after the d×d channel block `t_block`, in the
/// plain basis. Perfect correlations in every basis for an identity block and
/// a maximally entangled source.
pub fn witness_prob_table(
    t_block: &CMat,
    schmidt: &[f64],
    mubs: &MubFamily,
) -> Result<CountTable> {
    let d = mubs.dim;
    if t_block.nrows() != d || t_block.ncols() != d || schmidt.len() != d {
        return Err(Error::Shape(format!(
            "block {:?} and Schmidt dim {} must match MUB dim {d}",
            t_block.shape(),
            schmidt.len()
        )));
    }
    let mut table = CountTable::zeros(d, mubs.n_bases());
    for m in 0..mubs.n_bases() {
        for a in 0..d {
            let va = mubs.vector(m, a);
            // Idler projected on conj(v_ma) heralds amplitudes λ_i·v_ma[i].
            let heralded = CVec::from_fn(d, |i, _| C64::new(schmidt[i], 0.0) * va[i]);
            let signal = t_block * heralded;
            for b in 0..d {
                let vb = mubs.vector(m, b);
                let amp: C64 = (0..d).map(|j| vb[j].conj() * signal[j]).sum();
                table.set(m, m, a, b, amp.norm_sqr());
            }
        }
    }
    Ok(table)
}

/// Exact product-basis measurement probabilities of a two-qudit state over
/// all MUB setting pairs: p(a,b|m,n) = ⟨v_ma ⊗ v_nb| ρ |v_ma ⊗ v_nb⟩.
pub fn tomography_prob_table(rho: &CMat, mubs: &MubFamily) -> Result<CountTable> {
    let d = mubs.dim;
    if rho.nrows() != d * d || rho.ncols() != d * d {
        return Err(Error::Shape(format!(
            "state {:?} is not two-qudit for d = {d}",
            rho.shape()
        )));
    }
    let mut table = CountTable::zeros(d, mubs.n_bases());
    for m in 0..mubs.n_bases() {
        for n in 0..mubs.n_bases() {
            for a in 0..d {
                for b in 0..d {
                    let va = mubs.vector(m, a);
                    let vb = mubs.vector(n, b);
                    let proj = CVec::from_fn(d * d, |k, _| va[k / d] * vb[k % d]);
                    let p = (proj.adjoint() * rho * &proj)[(0, 0)].re;
                    table.set(m, n, a, b, p.max(0.0));
                }
            }
        }
    }
    Ok(table)
}

/// Two-photon coincidence versus relative delay, with γ(τ) = exp(−τ²/(2σ_τ²)).
#[derive(Debug, Clone, PartialEq)]
pub struct HomScan {
    pub points: Vec<(f64, f64)>,
    pub visibility: f64,
}

pub fn hom_scan(
    t: &CMat,
    heralded1: &HeraldedState,
    heralded2: &HeraldedState,
    in1_modes: &[usize],
    in2_modes: &[usize],
    det: (usize, usize),
    delays: &[f64],
    sigma_tau: f64,
) -> Result<HomScan> {
    if sigma_tau <= 0.0 || !sigma_tau.is_finite() {
        return Err(Error::Parameter(format!("σ_τ = {sigma_tau} must be positive")));
    }
    let gamma_of = |tau: f64| (-tau * tau / (2.0 * sigma_tau * sigma_tau)).exp();
    let mut points = Vec::with_capacity(delays.len());
    for &tau in delays {
        let p = two_photon_event(t, heralded1, heralded2, in1_modes, in2_modes, det, gamma_of(tau))?;
        points.push((tau, p));
    }
    let p_classical = two_photon_event(t, heralded1, heralded2, in1_modes, in2_modes, det, 0.0)?;
    let p_quantum = two_photon_event(t, heralded1, heralded2, in1_modes, in2_modes, det, 1.0)?;
    let visibility = if p_classical > 0.0 {
        (p_classical - p_quantum) / p_classical
    } else {
        0.0
    };
    Ok(HomScan { points, visibility })
}
