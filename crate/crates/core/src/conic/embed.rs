//! Real symmetric embedding of complex Hermitian matrices.
//!
//! `A = B + iC` maps to `[[B, -C], [C, B]]`. For Hermitian `A` and `W`,
//! `<A, W> = Re tr(A^H W) = <emb(A), emb(W)> / 2`, and `W` is PSD exactly
//! when its embedding is.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub fn embed(a: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            out[(i, j)] = v.re;
            out[(i + n, j + n)] = v.re;
            out[(i, j + n)] = -v.im;
            out[(i + n, j)] = v.im;
        }
    }
    out
}

/// Inverse of [`embed`], averaging the two copies so that iterates which
/// drifted off the embedded subspace are projected back onto it.
pub fn unembed(x: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = x.nrows() / 2;
    let mut out = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        for j in 0..n {
            let re = 0.5 * (x[(i, j)] + x[(i + n, j + n)]);
            let im = 0.5 * (x[(i + n, j)] - x[(i, j + n)]);
            out[(i, j)] = Complex64::new(re, im);
        }
    }
    // Enforce exact Hermitian symmetry.
    let adj = out.adjoint();
    (out + adj) * Complex64::new(0.5, 0.0)
}

/// `<A, W> = Re tr(A^H W)`.
pub fn inner(a: &DMatrix<Complex64>, w: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(w.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use rand::Rng;

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> DMatrix<Complex64> {
        let g = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        &g + g.adjoint()
    }

    #[test]
    fn inner_product_halves() {
        let mut rng = stream_rng(1, Stream::Instance);
        for n in 1..6 {
            let a = random_hermitian(n, &mut rng);
            let w = random_hermitian(n, &mut rng);
            let lhs = inner(&a, &w);
            let rhs = 0.5 * embed(&a).dot(&embed(&w));
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn roundtrip() {
        let mut rng = stream_rng(2, Stream::Instance);
        let a = random_hermitian(4, &mut rng);
        let back = unembed(&embed(&a));
        assert!((back - a).norm() < 1e-14);
    }

    #[test]
    fn psd_preserved() {
        let mut rng = stream_rng(3, Stream::Instance);
        let g = DMatrix::from_fn(3, 2, |_, _| Complex64::new(rng.random::<f64>(), rng.random::<f64>()));
        let w = &g * g.adjoint();
        let e = nalgebra::SymmetricEigen::new(embed(&w)).eigenvalues;
        assert!(e.min() > -1e-12);
    }
}
