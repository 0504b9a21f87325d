//! Test support: independently coded reference models and random-state
//! generators. Everything here is deliberately brute-force so it can serve as
//! an oracle for the production implementations.

use crate::linalg::{ginibre, haar_unitary, CMat, CVec, C64, I0};
use crate::modes::MubFamily;
use crate::quantum::CountTable;
use rand::prelude::*;

/// Non-negative Schmidt coefficients with Σλ² = 1, bounded away from zero.
pub fn random_schmidt(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut l: Vec<f64> = (0..d).map(|_| rng.gen_range(0.2..1.0)).collect();
    let norm: f64 = l.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in l.iter_mut() {
        *x /= norm;
    }
    l
}

pub fn random_pure_state(d: usize, rng: &mut impl Rng) -> CVec {
    let g = ginibre(d, 1, rng);
    let v = CVec::from_column_slice(g.as_slice());
    let n = v.norm();
    v / C64::new(n, 0.0)
}

/// Ginibre-induced random density matrix (full rank almost surely).
pub fn random_density(d: usize, rng: &mut impl Rng) -> CMat {
    let g = ginibre(d, d, rng);
    let m = &g * g.adjoint();
    let tr: f64 = (0..d).map(|i| m[(i, i)].re).sum();
    m / C64::new(tr, 0.0)
}

/// Bipartite pure state of Schmidt rank ≤ k on C^d ⊗ C^d (index a·d+b).
pub fn random_rank_k_state(d: usize, k: usize, rng: &mut impl Rng) -> CVec {
    let u = haar_unitary(d, rng);
    let v = haar_unitary(d, rng);
    let s = random_schmidt(k, rng);
    CVec::from_fn(d * d, |idx, _| {
        let (a, b) = (idx / d, idx % d);
        (0..k).map(|i| C64::new(s[i], 0.0) * u[(a, i)] * v[(b, i)]).sum()
    })
}

/// |Φ⁺⟩ = Σ|ii⟩/√d.
pub fn phi_plus(d: usize) -> CVec {
    let amp = C64::new(1.0 / (d as f64).sqrt(), 0.0);
    CVec::from_fn(d * d, |idx, _| if idx / d == idx % d { amp } else { I0 })
}

/// |Ψ_T(θ)⟩ = (|01⟩ − e^{iθ}|10⟩)/√2 on two qubits (index 2a+b).
pub fn bell_theta(theta: f64) -> CVec {
    let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut v = CVec::zeros(4);
    v[1] = s;
    v[2] = -s * C64::from_polar(1.0, theta);
    v
}

pub fn state_fidelity(rho: &CMat, psi: &CVec) -> f64 {
    (psi.adjoint() * rho * psi)[(0, 0)].re
}

pub fn phi_plus_fidelity(rho: &CMat, d: usize) -> f64 {
    state_fidelity(rho, &phi_plus(d))
}

/// Exact MUB correlation probabilities with the idler side conjugated:
/// P(a,b|m) = Tr[ρ (|v_ma*⟩⟨v_ma*| ⊗ |v_mb⟩⟨v_mb|)], diagonal settings only.
pub fn correlation_probs_exact(rho: &CMat, mubs: &MubFamily) -> CountTable {
    let d = mubs.dim;
    let mut table = CountTable::zeros(d, mubs.n_bases());
    for m in 0..mubs.n_bases() {
        for a in 0..d {
            for b in 0..d {
                let va = mubs.vector(m, a);
                let vb = mubs.vector(m, b);
                let proj = CVec::from_fn(d * d, |k, _| va[k / d].conj() * vb[k % d]);
                let p = (proj.adjoint() * rho * &proj)[(0, 0)].re;
                table.set(m, m, a, b, p.max(0.0));
            }
        }
    }
    table
}

/// Brute-force swapped state: each photon carries an explicit two-level
/// internal label with overlap √γ, and the labels are traced out after
/// detection. Returns None when the pattern cannot herald.
#[allow(clippy::too_many_arguments)]
pub fn swapped_state_labeled(
    t: &CMat,
    lambda: &[f64],
    mu: &[f64],
    in1_modes: &[usize],
    in2_modes: &[usize],
    det: (usize, usize),
    gamma: f64,
    phi: f64,
) -> Option<(CMat, f64)> {
    let (da, dh) = (lambda.len(), mu.len());
    let split = t.nrows() / 2;
    let chi1 = [C64::new(1.0, 0.0), I0];
    let chi2 = [
        C64::new(gamma.sqrt(), 0.0),
        C64::new((1.0 - gamma).sqrt(), 0.0),
    ];
    let cross = |row: usize| {
        if row < split {
            C64::from_polar(1.0, phi)
        } else {
            C64::new(1.0, 0.0)
        }
    };
    // ψ on A ⊗ H ⊗ L1 ⊗ L2, L = which-source label at each detector.
    let mut psi = vec![I0; da * dh * 4];
    for i in 0..da {
        for j in 0..dh {
            let w = C64::new(lambda[i] * mu[j], 0.0);
            let amp1 = w * t[(det.0, in1_modes[i])] * t[(det.1, in2_modes[j])] * cross(det.1);
            let amp2 = w * t[(det.0, in2_modes[j])] * cross(det.0) * t[(det.1, in1_modes[i])];
            for l1 in 0..2 {
                for l2 in 0..2 {
                    let idx = ((i * dh + j) * 2 + l1) * 2 + l2;
                    psi[idx] += amp1 * chi1[l1] * chi2[l2] + amp2 * chi2[l1] * chi1[l2];
                }
            }
        }
    }
    let p: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if p < 1e-14 {
        return None;
    }
    let mut rho = CMat::zeros(da * dh, da * dh);
    for r in 0..da * dh {
        for c in 0..da * dh {
            let mut acc = I0;
            for l in 0..4 {
                acc += psi[r * 4 + l] * psi[c * 4 + l].conj();
            }
            rho[(r, c)] = acc / C64::new(p, 0.0);
        }
    }
    Some((rho, p))
}

/// Maximizes ⟨Ψ_T(θ)|ρ|Ψ_T(θ)⟩ on a dense θ grid. Oracle for the closed-form
/// phase estimate.
pub fn grid_phase_fit(rho: &CMat, n_grid: usize) -> f64 {
    let mut best = (0.0, f64::NEG_INFINITY);
    for k in 0..n_grid {
        let theta = std::f64::consts::TAU * k as f64 / n_grid as f64;
        let f = state_fidelity(rho, &bell_theta(theta));
        if f > best.1 {
            best = (theta, f);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generators_are_well_formed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [2usize, 3, 4] {
            let l = random_schmidt(d, &mut rng);
            assert!((l.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
            let psi = random_pure_state(d, &mut rng);
            assert!((psi.norm() - 1.0).abs() < 1e-12);
            let rho = random_density(d, &mut rng);
            let tr: f64 = (0..d).map(|i| rho[(i, i)].re).sum();
            assert!((tr - 1.0).abs() < 1e-12);
            let eig = rho.clone().symmetric_eigen().eigenvalues;
            assert!(eig.iter().all(|&e| e > -1e-12));
        }
    }

    #[test]
    fn rank_k_states_have_bounded_schmidt_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in 1..=3usize {
            let psi = random_rank_k_state(3, k, &mut rng);
            assert!((psi.norm() - 1.0).abs() < 1e-12);
            let m = CMat::from_fn(3, 3, |a, b| psi[a * 3 + b]);
            let sv = m.svd(false, false).singular_values;
            let rank = sv.iter().filter(|&&s| s > 1e-10).count();
            assert!(rank <= k, "k={k}: singular values {sv:?}");
        }
    }

    #[test]
    fn bell_states_are_reference_points() {
        assert!((phi_plus_fidelity(&(phi_plus(3) * phi_plus(3).adjoint()), 3) - 1.0).abs() < 1e-12);
        let singlet = bell_theta(0.0);
        assert!((singlet.norm() - 1.0).abs() < 1e-12);
        assert!((state_fidelity(&(phi_plus(2) * phi_plus(2).adjoint()), &singlet) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn grid_phase_fit_recovers_injected_phase() {
        let theta = 1.535 * std::f64::consts::PI;
        let psi = bell_theta(theta);
        let rho = &psi * psi.adjoint();
        let got = grid_phase_fit(&rho, 200_000);
        assert!((got - theta).abs() < 1e-4, "{got} vs {theta}");
    }
}
