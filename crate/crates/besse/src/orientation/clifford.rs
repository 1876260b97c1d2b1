//! Clifford algebra Cl(ℝ^m) with e_i² = +1, stored densely over the 2^m
//! blades, and the double cover Spin(m) → SO(m).

use crate::linalg::Mat;

pub(crate) const MAX_M: usize = 8;

/// Sign of e_a·e_b for blade bitmasks a, b.
fn blade_sign(a: usize, b: usize) -> f64 {
    let mut a = a >> 1;
    let mut s = 0;
    while a != 0 {
        s += (a & b).count_ones();
        a >>= 1;
    }
    if s & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Multivector {
    m: usize,
    c: Vec<f64>,
}

impl Multivector {
    pub fn scalar(m: usize, x: f64) -> Self {
        let mut c = vec![0.0; 1 << m];
        c[0] = x;
        Multivector { m, c }
    }

    #[cfg(test)]
    pub fn vector(m: usize, i: usize) -> Self {
        let mut c = vec![0.0; 1 << m];
        c[1 << i] = 1.0;
        Multivector { m, c }
    }

    /// ½ Σ_{i<j} L_ij e_i e_j.
    pub fn bivector_of(l: &Mat) -> Self {
        let m = l.nrows();
        let mut c = vec![0.0; 1 << m];
        for i in 0..m {
            for j in i + 1..m {
                c[(1 << i) | (1 << j)] = 0.5 * l[(i, j)];
            }
        }
        Multivector { m, c }
    }

    pub fn mul(&self, o: &Multivector) -> Multivector {
        let mut c = vec![0.0; self.c.len()];
        for (a, &x) in self.c.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (b, &y) in o.c.iter().enumerate() {
                if y != 0.0 {
                    c[a ^ b] += blade_sign(a, b) * x * y;
                }
            }
        }
        Multivector { m: self.m, c }
    }

    #[cfg(test)]
    pub fn reverse(&self) -> Multivector {
        let c = self
            .c
            .iter()
            .enumerate()
            .map(|(a, &x)| {
                let k = a.count_ones();
                if (k * k.saturating_sub(1) / 2) % 2 == 1 {
                    -x
                } else {
                    x
                }
            })
            .collect();
        Multivector { m: self.m, c }
    }

    fn scale(&self, s: f64) -> Multivector {
        Multivector {
            m: self.m,
            c: self.c.iter().map(|x| x * s).collect(),
        }
    }

    fn add(&self, o: &Multivector) -> Multivector {
        Multivector {
            m: self.m,
            c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect(),
        }
    }

    fn norm1(&self) -> f64 {
        self.c.iter().map(|x| x.abs()).sum()
    }

    pub fn exp(&self) -> Multivector {
        let mut s = 0;
        let mut x = self.clone();
        while x.norm1() > 0.5 {
            x = x.scale(0.5);
            s += 1;
        }
        let mut acc = Multivector::scalar(self.m, 1.0);
        let mut term = acc.clone();
        for k in 1..24 {
            term = term.mul(&x).scale(1.0 / k as f64);
            acc = acc.add(&term);
        }
        for _ in 0..s {
            acc = acc.mul(&acc);
        }
        acc
    }

    pub fn scalar_part(&self) -> f64 {
        self.c[0]
    }

    /// Largest coefficient outside the scalar blade.
    pub fn non_scalar(&self) -> f64 {
        self.c[1..].iter().fold(0.0, |a, x| a.max(x.abs()))
    }

    /// The rotation v ↦ R v R̃ as an m×m matrix.
    #[cfg(test)]
    pub fn rotation(&self) -> Mat {
        let rr = self.reverse();
        let mut out = Mat::zeros(self.m, self.m);
        for k in 0..self.m {
            let img = self.mul(&Multivector::vector(self.m, k)).mul(&rr);
            for i in 0..self.m {
                out[(i, k)] = img.c[1 << i];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{gaussian_matrix, rng};

    #[test]
    fn generators_square_to_one_and_anticommute() {
        let e0 = Multivector::vector(3, 0);
        let e1 = Multivector::vector(3, 1);
        assert_eq!(e0.mul(&e0), Multivector::scalar(3, 1.0));
        let a = e0.mul(&e1);
        let b = e1.mul(&e0);
        assert_eq!(a.c[3], 1.0);
        assert_eq!(b.c[3], -1.0);
    }

    #[test]
    fn rotor_covers_matrix_exponential() {
        let mut r = rng(41);
        for m in 2..=5 {
            let g = gaussian_matrix(&mut r, m, m);
            let l = (&g - g.transpose()) * 0.4;
            let rotor = Multivector::bivector_of(&l).exp();
            let want = l.clone().exp();
            let got = rotor.rotation();
            assert!((got - want).amax() < 1e-12, "m = {m}");
            // R R̃ = 1
            let n = rotor.mul(&rotor.reverse());
            assert!((n.scalar_part() - 1.0).abs() < 1e-13 && n.non_scalar() < 1e-13);
        }
    }

    #[test]
    fn full_turn_lifts_to_minus_one() {
        let mut l = Mat::zeros(3, 3);
        l[(1, 0)] = 2.0 * std::f64::consts::PI;
        l[(0, 1)] = -2.0 * std::f64::consts::PI;
        let rotor = Multivector::bivector_of(&l).exp();
        assert!((rotor.scalar_part() + 1.0).abs() < 1e-12);
    }
}
