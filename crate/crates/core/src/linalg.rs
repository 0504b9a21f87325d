//! Dense complex linear-algebra helpers used throughout the crate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I1: C64 = C64::new(1.0, 0.0);
pub const I0: C64 = C64::new(0.0, 0.0);

/// Unitary DFT matrix, F[j,k] = exp(-2πi jk/n)/√n.
pub fn dft_matrix(n: usize) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |j, k| {
        let phase = -2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
        C64::from_polar(scale, phase)
    })
}

/// Complex matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) / 2f64.sqrt()
    })
}

/// Haar-distributed unitary: QR of a Ginibre matrix with the R-diagonal phase
/// absorbed into Q so the distribution is exactly Haar.
pub fn haar_unitary(n: usize, rng: &mut impl Rng) -> CMat {
    let g = ginibre(n, n, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { I1 };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Random Hermitian matrix scaled to unit spectral norm.
pub fn random_hermitian_unit_norm(n: usize, rng: &mut impl Rng) -> CMat {
    let a = ginibre(n, n, rng);
    let h = (&a + a.adjoint()) * C64::new(0.5, 0.0);
    let norm = spectral_norm(&h);
    h / C64::new(norm, 0.0)
}

/// exp(i t H) for Hermitian H, via eigendecomposition.
pub fn expi_hermitian(h: &CMat, t: f64) -> CMat {
    let eig = SymmetricEigen::new(h.clone());
    let n = h.nrows();
    let mut out = CMat::zeros(n, n);
    for k in 0..n {
        let v = eig.eigenvectors.column(k);
        let phase = C64::from_polar(1.0, t * eig.eigenvalues[k]);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += phase * v[i] * v[j].conj();
            }
        }
    }
    out
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().cloned().fold(0.0, f64::max)
}

/// Frobenius inner product Tr(a† b).
pub fn frob_inner(a: &CMat, b: &CMat) -> C64 {
    assert_eq!(a.shape(), b.shape(), "frob_inner shape mismatch");
    let mut acc = I0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.conj() * y;
    }
    acc
}

pub fn frob_norm_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Nearest matrix with orthonormal columns (polar factor from the SVD).
pub fn nearest_isometry(m: &CMat) -> CMat {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    u * vt
}

/// Max |(M†M - I)| entry; 0 for an exact isometry.
pub fn isometry_defect(m: &CMat) -> f64 {
    let g = m.adjoint() * m;
    let n = g.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { I1 } else { I0 };
            worst = worst.max((g[(i, j)] - want).norm());
        }
    }
    worst
}

/// Trace distance ½‖a − b‖₁ for Hermitian a, b.
pub fn trace_distance(a: &CMat, b: &CMat) -> f64 {
    let eig = SymmetricEigen::new(a - b);
    0.5 * eig.eigenvalues.iter().map(|l| l.abs()).sum::<f64>()
}

/// ⟨v|m|v⟩ as a real number (valid for Hermitian m).
pub fn expectation(m: &CMat, v: &CVec) -> f64 {
    (v.adjoint() * m * v)[(0, 0)].re
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dft_is_unitary() {
        let f = dft_matrix(16);
        assert!(isometry_defect(&f) < 1e-12);
    }

    #[test]
    fn haar_unitary_is_unitary_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = haar_unitary(24, &mut rng);
        assert!(isometry_defect(&u) < 1e-10);
        let mut rng2 = ChaCha8Rng::seed_from_u64(5);
        let u2 = haar_unitary(24, &mut rng2);
        assert_eq!(u, u2);
    }

    #[test]
    fn expi_hermitian_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_hermitian_unit_norm(12, &mut rng);
        assert!((spectral_norm(&h) - 1.0).abs() < 1e-10);
        let id = expi_hermitian(&h, 0.0);
        assert!(isometry_defect(&id) < 1e-10);
        let eps = 0.02;
        let u = expi_hermitian(&h, eps);
        let diff = &u - CMat::identity(12, 12);
        assert!(spectral_norm(&diff) <= eps + 1e-9);
    }

    #[test]
    fn nearest_isometry_restores_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = haar_unitary(10, &mut rng);
        let w = u.columns(0, 4).into_owned();
        let noisy = &w + ginibre(10, 4, &mut rng) * C64::new(0.05, 0.0);
        let proj = nearest_isometry(&noisy);
        assert!(isometry_defect(&proj) < 1e-10);
        // Projection of an exact isometry is itself.
        let again = nearest_isometry(&w);
        assert!((again - &w).iter().all(|z| z.norm() < 1e-10));
    }

    #[test]
    fn trace_distance_extremes() {
        let mut a = CMat::zeros(2, 2);
        a[(0, 0)] = I1;
        let mut b = CMat::zeros(2, 2);
        b[(1, 1)] = I1;
        assert!((trace_distance(&a, &a) - 0.0).abs() < 1e-15);
        assert!((trace_distance(&a, &b) - 1.0).abs() < 1e-12);
    }
}
