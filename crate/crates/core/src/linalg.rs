//! Eigendecomposition helpers for real nonsymmetric matrices.
//!
//! The switching linear model leans on full eigensystems with consistent
//! left/right normalization: right eigenvectors as columns of `R`, left
//! eigenvectors as rows of `L = R^-1`, so that `A = R diag(values) L` and
//! `L R = I`.

use crate::error::{CoreError, Result};
use ndarray::prelude::*;
use ndarray_linalg::{Eig, Inverse, Norm, Solve};
use num_complex::Complex64;

pub type C64 = Complex64;

/// Eigensystem of a real square matrix with `L R = I`.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Array1<C64>,
    /// Right eigenvectors, one per column.
    pub right: Array2<C64>,
    /// Left eigenvectors, one per row.
    pub left: Array2<C64>,
}

impl EigenSystem {
    /// Decompose `a`, checking the inversion and reconstruction residuals
    /// against `tol` (relative, Frobenius for the reconstruction).
    pub fn decompose(a: &Array2<f64>, tol: f64) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(CoreError::validation("matrix must be square"));
        }
        let (values, right) = a
            .eig()
            .map_err(|e| CoreError::Linalg(format!("eig failed: {e}")))?;
        let left = right
            .inv()
            .map_err(|e| CoreError::Defective(format!("eigenvector matrix not invertible: {e}")))?;

        let sys = EigenSystem {
            values,
            right,
            left,
        };
        let id_resid = sys.identity_residual();
        if id_resid > tol {
            return Err(CoreError::Defective(format!(
                "L R deviates from identity by {id_resid:.3e}"
            )));
        }
        let rec_resid = sys.reconstruction_residual(a);
        if rec_resid > tol {
            return Err(CoreError::Defective(format!(
                "reconstruction residual {rec_resid:.3e}"
            )));
        }
        Ok(sys)
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Max-abs entry of `L R - I`.
    pub fn identity_residual(&self) -> f64 {
        let mut prod = self.left.dot(&self.right);
        for i in 0..self.n() {
            prod[(i, i)] -= C64::new(1.0, 0.0);
        }
        prod.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Relative Frobenius residual of `R diag(values) L` against `a`.
    pub fn reconstruction_residual(&self, a: &Array2<f64>) -> f64 {
        let lam = Array2::from_diag(&self.values);
        let recon = self.right.dot(&lam).dot(&self.left);
        let a_c = complexify(a);
        let num = (&recon - &a_c).norm();
        let den = a_c.norm().max(f64::MIN_POSITIVE);
        num / den
    }

    /// `exp(A t) x` via the eigensystem, returned with its imaginary part.
    pub fn propagate(&self, x: &Array1<f64>, t: f64) -> Array1<C64> {
        let coeff = self.left.dot(&complexify_vec(x));
        let scaled: Array1<C64> = self
            .values
            .iter()
            .zip(coeff.iter())
            .map(|(l, c)| (l * t).exp() * c)
            .collect();
        self.right.dot(&scaled)
    }

    pub fn max_real(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, z| m.max(z.re))
    }
}

/// Greedy minimum-distance assignment of `targets` onto `spectrum`,
/// processed in target index order without reusing a spectrum entry.
/// Returns the matched spectrum indices.
pub fn match_eigenvalues(targets: &[C64], spectrum: &Array1<C64>) -> Vec<usize> {
    let mut used = vec![false; spectrum.len()];
    let mut matched = Vec::with_capacity(targets.len());
    for t in targets {
        let mut best = usize::MAX;
        let mut best_dist = f64::INFINITY;
        for (j, s) in spectrum.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d = (s - t).norm();
            if d < best_dist {
                best_dist = d;
                best = j;
            }
        }
        used[best] = true;
        matched.push(best);
    }
    matched
}

/// Largest distance from each target to its matched spectrum entry.
pub fn placement_error(targets: &[C64], spectrum: &Array1<C64>) -> f64 {
    let matched = match_eigenvalues(targets, spectrum);
    targets
        .iter()
        .zip(matched)
        .fold(0.0, |m, (t, j)| m.max((spectrum[j] - t).norm()))
}

/// Take the real part of a complex vector, failing if the imaginary
/// residual exceeds `tol` relative to the largest magnitude.
pub fn real_part_checked(v: &Array1<C64>, tol: f64, what: &str) -> Result<Array1<f64>> {
    let scale = v.iter().fold(1.0_f64, |m, z| m.max(z.norm()));
    let resid = v.iter().fold(0.0_f64, |m, z| m.max(z.im.abs()));
    if resid > tol * scale {
        return Err(CoreError::Linalg(format!(
            "{what}: imaginary residual {resid:.3e} exceeds {:.3e}",
            tol * scale
        )));
    }
    Ok(v.mapv(|z| z.re))
}

pub fn complexify(a: &Array2<f64>) -> Array2<C64> {
    a.mapv(|x| C64::new(x, 0.0))
}

pub fn complexify_vec(v: &Array1<f64>) -> Array1<C64> {
    v.mapv(|x| C64::new(x, 0.0))
}

/// Solve the complex system `M x = b` by LU with partial pivoting.
pub fn solve_complex(m: &Array2<C64>, b: &Array1<C64>) -> Result<Array1<C64>> {
    m.solve(b)
        .map_err(|e| CoreError::Linalg(format!("complex solve failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_matrix(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = crate::rng::stream(seed, "test-matrix", 0);
        Array2::from_shape_fn((n, n), |_| {
            rng.sample::<f64, _>(rand_distr::StandardNormal) / (n as f64).sqrt()
        })
    }

    #[test]
    fn decompose_satisfies_identities() {
        let a = random_matrix(20, 1);
        let sys = EigenSystem::decompose(&a, 1e-8).unwrap();
        assert!(sys.identity_residual() < 1e-10);
        assert!(sys.reconstruction_residual(&a) < 1e-10);
    }

    #[test]
    fn propagate_matches_scalar_exponential() {
        // Diagonal matrix: propagation is elementwise exp.
        let a = Array2::from_diag(&arr1(&[-1.0, -2.0]));
        let sys = EigenSystem::decompose(&a, 1e-8).unwrap();
        let x = arr1(&[1.0, 3.0]);
        let y = sys.propagate(&x, 0.5);
        assert_abs_diff_eq!(y[0].re, (-0.5_f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(y[1].re, 3.0 * (-1.0_f64).exp(), epsilon = 1e-12);
        assert!(y.iter().all(|z| z.im.abs() < 1e-12));
    }

    #[test]
    fn defective_matrix_is_rejected() {
        // A Jordan block is not diagonalizable.
        let a = arr2(&[[0.0, 1.0], [0.0, 0.0]]);
        assert!(matches!(
            EigenSystem::decompose(&a, 1e-8),
            Err(CoreError::Defective(_))
        ));
    }

    #[test]
    fn eigenvalue_matching_prefers_nearest() {
        let spectrum = arr1(&[
            C64::new(-1.0, 0.0),
            C64::new(-2.0, 1.0),
            C64::new(-2.0, -1.0),
        ]);
        let targets = [C64::new(-2.0, -1.0 + 1e-9), C64::new(-1.0, 1e-9)];
        let matched = match_eigenvalues(&targets, &spectrum);
        assert_eq!(matched, vec![2, 0]);
        assert!(placement_error(&targets, &spectrum) < 1e-8);
    }

    #[test]
    fn real_part_checked_flags_large_imaginary() {
        let v = arr1(&[C64::new(1.0, 1e-3)]);
        assert!(real_part_checked(&v, 1e-8, "v").is_err());
        let v = arr1(&[C64::new(1.0, 1e-12)]);
        assert!(real_part_checked(&v, 1e-8, "v").is_ok());
    }
}
