//! Seeded generators for symplectic, orthogonal and symmetric test matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{omega_gram, Mat};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian<R: Rng>(r: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = r.gen_range(f64::EPSILON..1.0);
    let u2: f64 = r.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn gaussian_matrix<R: Rng>(r: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| gaussian(r))
}

pub fn random_sym<R: Rng>(r: &mut R, m: usize) -> Mat {
    let g = gaussian_matrix(r, m, m);
    (&g + g.transpose()) * 0.5
}

pub fn random_orthogonal<R: Rng>(r: &mut R, m: usize) -> Mat {
    let g = gaussian_matrix(r, m, m);
    let qr = g.qr();
    let q = qr.q();
    let rr = qr.r();
    let mut q = q;
    for j in 0..m {
        if rr[(j, j)] < 0.0 {
            for i in 0..m {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

pub fn random_rotation<R: Rng>(r: &mut R, m: usize) -> Mat {
    let mut q = random_orthogonal(r, m);
    if m > 0 && q.determinant() < 0.0 {
        for i in 0..m {
            q[(i, 0)] = -q[(i, 0)];
        }
    }
    q
}

/// Element of Sp(m) ∩ O(2m), built from a random unitary X + iY as `[[X, -Y], [Y, X]]`.
pub fn random_orthosymplectic<R: Rng>(r: &mut R, m: usize) -> Mat {
    let g = DMatrix::<Complex64>::from_fn(m, m, |_, _| Complex64::new(gaussian(r), gaussian(r)));
    let q = g.qr().q();
    let mut p = Mat::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            let z = q[(i, j)];
            p[(i, j)] = z.re;
            p[(i, m + j)] = -z.im;
            p[(m + i, j)] = z.im;
            p[(m + i, m + j)] = z.re;
        }
    }
    p
}

/// exp of a random Hamiltonian matrix Ω⁻¹S scaled by `scale`.
pub fn random_sp_algebra<R: Rng>(r: &mut R, m: usize, scale: f64) -> Mat {
    let s = random_sym(r, 2 * m);
    let o = omega_gram(m);
    // X = Ω S with S symmetric satisfies XᵀΩ + ΩX = 0
    o * s * scale
}

pub fn random_symplectic<R: Rng>(r: &mut R, m: usize, scale: f64) -> Mat {
    let x = random_sp_algebra(r, m, scale);
    let k = random_orthosymplectic(r, m);
    k * x.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthogonality_defect, symplectic_defect};

    #[test]
    fn generators_land_in_their_groups() {
        let mut r = rng(7);
        for m in 1..5 {
            let k = random_orthosymplectic(&mut r, m);
            assert!(symplectic_defect(&k) < 1e-12);
            assert!(orthogonality_defect(&k) < 1e-12);
            let p = random_symplectic(&mut r, m, 0.5);
            assert!(symplectic_defect(&p) < 1e-10);
            let q = random_rotation(&mut r, m);
            assert!((q.determinant() - 1.0).abs() < 1e-12);
        }
    }
}
