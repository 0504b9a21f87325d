//! Statistical model of the random mode mixer: a Haar-random fibre unitary
//! over two polarizations, fixed coupling optics on both sides, and a slow
//! drift channel for stability studies.

use crate::error::{Error, Result};
use crate::linalg::{
    dft_matrix, expi_hermitian, haar_unitary, random_hermitian_unit_norm, CMat,
};
use rand::distributions::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Frozen description of the medium and its surrounding optics.
///
/// Shapes: `u1` is 2N×2N over [port-1 modes | port-2 modes]; each `c_in` is
/// N×M (phase plane → fibre); each `e_out` is M×N (fibre → phase plane);
/// `f_in` and `g_out` are the fixed M×M lens transforms on either end.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumModel {
    pub n_fibre: usize,
    pub n_pixels: usize,
    pub u1: CMat,
    pub c_in: [CMat; 2],
    pub f_in: CMat,
    pub e_out: [CMat; 2],
    pub g_out: CMat,
    /// Relative phase between transits that exchange polarization and those
    /// that preserve it; unobservable classically, surfaces in swapped states.
    pub inter_pol_phase: f64,
    pub seed: u64,
}

impl MediumModel {
    /// Total fibre modes across both polarizations.
    pub fn fibre_dim(&self) -> usize {
        2 * self.n_fibre
    }
}

/// Draw a medium: Haar u1, independent truncated-Haar couplers per port,
/// DFT lens transforms, and a uniform inter-polarization phase.
pub fn sample_medium(n_fibre: usize, n_pixels: usize, seed: u64) -> Result<MediumModel> {
    if n_fibre == 0 || n_pixels == 0 {
        return Err(Error::Parameter("medium dimensions must be positive".into()));
    }
    if n_fibre > n_pixels {
        return Err(Error::Capacity(format!(
            "cannot couple {n_fibre} fibre modes through a {n_pixels}-pixel plane"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u1 = haar_unitary(2 * n_fibre, &mut rng);
    let c_in = [
        haar_unitary(n_pixels, &mut rng).rows(0, n_fibre).into_owned(),
        haar_unitary(n_pixels, &mut rng).rows(0, n_fibre).into_owned(),
    ];
    let e_out = [
        haar_unitary(n_pixels, &mut rng)
            .rows(0, n_fibre)
            .adjoint()
            .into_owned(),
        haar_unitary(n_pixels, &mut rng)
            .rows(0, n_fibre)
            .adjoint()
            .into_owned(),
    ];
    let inter_pol_phase = rng.sample(Uniform::new(0.0, std::f64::consts::TAU));
    Ok(MediumModel {
        n_fibre,
        n_pixels,
        u1,
        c_in,
        f_in: dft_matrix(n_pixels),
        e_out,
        g_out: dft_matrix(n_pixels),
        inter_pol_phase,
        seed,
    })
}

/// Drifted copy of a medium: u1 → exp(iεH)·u1 with H Hermitian, ‖H‖₂ = 1.
///
/// The coupling optics are fixed hardware and do not drift. ε = 0 returns the
/// medium unchanged, and ‖u1' − u1‖₂ ≤ ε always.
pub fn perturb_medium(model: &MediumModel, epsilon: f64, seed: u64) -> Result<MediumModel> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::Parameter(format!("drift strength {epsilon} invalid")));
    }
    let mut out = model.clone();
    if epsilon == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = random_hermitian_unit_norm(model.fibre_dim(), &mut rng);
    out.u1 = expi_hermitian(&h, epsilon) * &model.u1;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{isometry_defect, spectral_norm};

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_medium(8, 16, 42).unwrap();
        let b = sample_medium(8, 16, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_medium(8, 16, 43).unwrap();
        assert_ne!(a.u1, c.u1);
    }

    #[test]
    fn stages_are_isometries() {
        let m = sample_medium(8, 16, 1).unwrap();
        assert!(isometry_defect(&m.u1) < 1e-10);
        assert!(isometry_defect(&m.f_in) < 1e-12);
        assert!(isometry_defect(&m.g_out) < 1e-12);
        for c in &m.c_in {
            // Rows of a unitary: C C† = I.
            assert!(isometry_defect(&c.adjoint()) < 1e-10);
        }
        for e in &m.e_out {
            assert!(isometry_defect(e) < 1e-10);
        }
        assert!(m.inter_pol_phase >= 0.0 && m.inter_pol_phase < std::f64::consts::TAU);
    }

    #[test]
    fn haar_entry_moments_match() {
        // E|u_ij|² = 1/(2N); per-entry variance ≈ (2N-1)/((2N)²(2N+1)).
        let two_n = 32.0;
        let mut sum = 0.0;
        let mut count = 0usize;
        for seed in 0..20 {
            let m = sample_medium(16, 32, 1000 + seed).unwrap();
            sum += m.u1.iter().map(|z| z.norm_sqr()).sum::<f64>();
            count += m.u1.len();
        }
        let mean = sum / count as f64;
        let var = (two_n - 1.0) / (two_n * two_n * (two_n + 1.0));
        let sigma_mean = (var / count as f64).sqrt();
        assert!(
            (mean - 1.0 / two_n).abs() < 3.0 * sigma_mean,
            "mean {mean} vs {} ± {}",
            1.0 / two_n,
            3.0 * sigma_mean
        );
    }

    #[test]
    fn perturbation_bound_and_identity() {
        let m = sample_medium(8, 16, 7).unwrap();
        let same = perturb_medium(&m, 0.0, 99).unwrap();
        assert_eq!(m, same);
        for &eps in &[0.01, 0.1, 0.5] {
            let p = perturb_medium(&m, eps, 99).unwrap();
            assert!(isometry_defect(&p.u1) < 1e-9);
            let diff = &p.u1 - &m.u1;
            assert!(spectral_norm(&diff) <= eps + 1e-9);
            assert_eq!(p.c_in, m.c_in);
        }
    }

    #[test]
    fn perturbation_is_deterministic() {
        let m = sample_medium(6, 12, 3).unwrap();
        let a = perturb_medium(&m, 0.05, 11).unwrap();
        let b = perturb_medium(&m, 0.05, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn capacity_checked() {
        assert!(matches!(sample_medium(17, 16, 0), Err(Error::Capacity(_))));
    }
}
