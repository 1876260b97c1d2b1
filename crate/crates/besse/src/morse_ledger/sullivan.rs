//! Rational models of the free loop space of a CROSS, used as an independent
//! target for the Morse bookkeeping.
//!
//! ΛV ⊗ ΛV̄ ⊗ ℚ[u] with D v = dv + u v̄ and D v̄ = −s(dv); the pair
//! (ΛM, M) is modelled by the ideal of monomials containing a barred
//! generator. Dropping u gives the non-equivariant model.

use std::collections::{BTreeMap, HashMap};

use num_rational::BigRational;
use num_traits::Zero;

use super::{Cross, PoincareSeries};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Generator {
    degree: usize,
    weight: usize,
    bar: bool,
    u: bool,
}

impl Generator {
    fn odd(&self) -> bool {
        self.degree % 2 == 1
    }
}

pub type Monomial = Vec<u32>;
pub type Poly = BTreeMap<Monomial, BigRational>;

/// A free graded-commutative algebra with a derivation given on generators.
#[derive(Debug, Clone)]
pub struct Model {
    gens: Vec<Generator>,
    diff: Vec<Poly>,
}

fn int(v: i64) -> BigRational {
    BigRational::from_integer(v.into())
}

impl Model {
    /// Model of ΛM (`equivariant = false`) or of its Borel construction.
    pub fn loop_space(cross: Cross, equivariant: bool) -> Result<Model> {
        cross.validate()?;
        let (a, h) = (cross.generator_degree(), cross.height());
        let mut gens = vec![];
        let mut diff = vec![];
        let mono = |e: &[(usize, u32)], len: usize| {
            let mut m = vec![0u32; len];
            for &(i, p) in e {
                m[i] = p;
            }
            m
        };
        if a % 2 == 1 {
            // x, x̄, u
            let len = 2 + usize::from(equivariant);
            gens.push(Generator { degree: a, weight: 1, bar: false, u: false });
            gens.push(Generator { degree: a - 1, weight: 1, bar: true, u: false });
            let mut dx = Poly::new();
            if equivariant {
                gens.push(Generator { degree: 2, weight: 0, bar: false, u: true });
                dx.insert(mono(&[(1, 1), (2, 1)], len), int(1));
            }
            diff.push(dx);
            diff.push(Poly::new());
            if equivariant {
                diff.push(Poly::new());
            }
        } else {
            // x, y, x̄, ȳ, u
            let len = 4 + usize::from(equivariant);
            let top = a * (h + 1);
            let w = h + 1;
            gens.push(Generator { degree: a, weight: 1, bar: false, u: false });
            gens.push(Generator { degree: top - 1, weight: w, bar: false, u: false });
            gens.push(Generator { degree: a - 1, weight: 1, bar: true, u: false });
            gens.push(Generator { degree: top - 2, weight: w, bar: true, u: false });
            let mut dx = Poly::new();
            let mut dy = Poly::new();
            dy.insert(mono(&[(0, h as u32 + 1)], len), int(1));
            if equivariant {
                gens.push(Generator { degree: 2, weight: 0, bar: false, u: true });
                dx.insert(mono(&[(2, 1), (4, 1)], len), int(1));
                dy.insert(mono(&[(3, 1), (4, 1)], len), int(1));
            }
            let mut dyb = Poly::new();
            dyb.insert(mono(&[(0, h as u32), (2, 1)], len), int(-(h as i64 + 1)));
            diff.push(dx);
            diff.push(dy);
            diff.push(Poly::new());
            diff.push(dyb);
            if equivariant {
                diff.push(Poly::new());
            }
        }
        Ok(Model { gens, diff })
    }

    fn degree(&self, m: &Monomial) -> usize {
        m.iter().zip(&self.gens).map(|(&e, g)| e as usize * g.degree).sum()
    }

    /// (weight, #bars − #u), preserved by D.
    fn key(&self, m: &Monomial) -> (usize, i64) {
        let mut w = 0;
        let mut b = 0i64;
        for (&e, g) in m.iter().zip(&self.gens) {
            w += e as usize * g.weight;
            if g.bar {
                b += e as i64;
            }
            if g.u {
                b -= e as i64;
            }
        }
        (w, b)
    }

    fn in_ideal(&self, m: &Monomial) -> bool {
        m.iter().zip(&self.gens).any(|(&e, g)| g.bar && e > 0)
    }

    /// Product of two ordered monomials with the Koszul sign, or None if an
    /// odd generator repeats.
    fn mul(&self, p: &Monomial, q: &Monomial) -> Option<(Monomial, i64)> {
        let mut sign = 1i64;
        for (j, &eq) in q.iter().enumerate() {
            if eq == 0 || !self.gens[j].odd() {
                continue;
            }
            if p[j] > 0 {
                return None;
            }
            let passed = (j + 1..p.len())
                .filter(|&i| p[i] > 0 && self.gens[i].odd())
                .count();
            if passed % 2 == 1 {
                sign = -sign;
            }
        }
        let m = p.iter().zip(q).map(|(a, b)| a + b).collect();
        Some((m, sign))
    }

    pub fn apply(&self, m: &Monomial) -> Poly {
        let mut out = Poly::new();
        let len = m.len();
        let mut prefix_degree = 0usize;
        for i in 0..len {
            let e = m[i];
            if e == 0 {
                continue;
            }
            let g = &self.gens[i];
            let mut left = vec![0u32; len];
            left[..i].copy_from_slice(&m[..i]);
            left[i] = e - 1;
            let mut right = vec![0u32; len];
            right[i + 1..].copy_from_slice(&m[i + 1..]);
            let mut coeff = int(e as i64);
            if prefix_degree % 2 == 1 {
                coeff = -coeff;
            }
            for (dm, c) in &self.diff[i] {
                let Some((lm, s1)) = self.mul(&left, dm) else { continue };
                let Some((full, s2)) = self.mul(&lm, &right) else { continue };
                let v = c * &coeff * int(s1 * s2);
                let entry = out.entry(full).or_insert_with(BigRational::zero);
                *entry += v;
            }
            prefix_degree += e as usize * g.degree;
        }
        out.retain(|_, v| !v.is_zero());
        out
    }

    pub fn apply_poly(&self, p: &Poly) -> Poly {
        let mut out = Poly::new();
        for (m, c) in p {
            for (n, d) in self.apply(m) {
                *out.entry(n).or_insert_with(BigRational::zero) += c * d;
            }
        }
        out.retain(|_, v| !v.is_zero());
        out
    }

    /// D² on every generator.
    pub fn square_vanishes(&self) -> bool {
        self.diff.iter().all(|p| self.apply_poly(p).is_empty())
    }

    /// D raises degree by one and preserves the extra gradings.
    pub fn is_homogeneous(&self) -> bool {
        let len = self.gens.len();
        self.diff.iter().enumerate().all(|(i, p)| {
            let g = unit(len, i);
            p.keys()
                .all(|m| self.degree(m) == self.gens[i].degree + 1 && self.key(m) == self.key(&g))
        })
    }

    /// Monomials of total degree q.
    fn basis(&self, q: usize) -> Vec<Monomial> {
        let mut out = vec![];
        let mut cur = vec![0u32; self.gens.len()];
        self.fill(0, q, &mut cur, &mut out);
        out
    }

    fn fill(&self, i: usize, left: usize, cur: &mut Monomial, out: &mut Vec<Monomial>) {
        if i == self.gens.len() {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let g = &self.gens[i];
        let max = if g.odd() { 1 } else { (left / g.degree) as u32 };
        for e in 0..=max {
            let used = e as usize * g.degree;
            if used > left {
                break;
            }
            cur[i] = e;
            self.fill(i + 1, left - used, cur, out);
        }
        cur[i] = 0;
    }

    /// Rank of D from degree q to q + 1 on the barred ideal.
    fn ideal_rank(&self, q: usize) -> usize {
        let src: Vec<Monomial> = self.basis(q).into_iter().filter(|m| self.in_ideal(m)).collect();
        let mut blocks: HashMap<(usize, i64), Vec<Monomial>> = HashMap::new();
        for m in src {
            blocks.entry(self.key(&m)).or_default().push(m);
        }
        let mut total = 0;
        for (_, ms) in blocks {
            let images: Vec<Poly> = ms.iter().map(|m| self.apply(m)).collect();
            let mut index: BTreeMap<Monomial, usize> = BTreeMap::new();
            for p in &images {
                for k in p.keys() {
                    let n = index.len();
                    index.entry(k.clone()).or_insert(n);
                }
            }
            let mut rows: Vec<Vec<BigRational>> = images
                .iter()
                .map(|p| {
                    let mut r = vec![BigRational::zero(); index.len()];
                    for (k, v) in p {
                        r[index[k]] = v.clone();
                    }
                    r
                })
                .collect();
            total += rank(&mut rows);
        }
        total
    }

    fn ideal_dim(&self, q: usize) -> usize {
        self.basis(q).iter().filter(|m| self.in_ideal(m)).count()
    }

    /// Betti numbers of the barred ideal in degrees 0..=cap.
    pub fn ideal_cohomology(&self, cap: usize) -> Vec<usize> {
        let ranks: Vec<usize> = (0..=cap).map(|q| self.ideal_rank(q)).collect();
        (0..=cap)
            .map(|q| {
                let before = if q > 0 { ranks[q - 1] } else { 0 };
                self.ideal_dim(q) - ranks[q] - before
            })
            .collect()
    }
}

fn unit(len: usize, i: usize) -> Monomial {
    let mut m = vec![0; len];
    m[i] = 1;
    m
}

fn rank(rows: &mut [Vec<BigRational>]) -> usize {
    let ncols = rows.first().map_or(0, |r| r.len());
    let mut r = 0;
    for c in 0..ncols {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else { continue };
        rows.swap(r, p);
        let pivot = rows[r][c].clone();
        for i in 0..rows.len() {
            if i != r && !rows[i][c].is_zero() {
                let f = &rows[i][c] / &pivot;
                for j in c..ncols {
                    let v = &f * &rows[r][j];
                    rows[i][j] -= v;
                }
            }
        }
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    r
}

fn series(v: Vec<usize>) -> PoincareSeries {
    PoincareSeries::from_ints(&v)
}

/// H^*_{S¹}(ΛM, M;ℚ) to degree cap.
pub fn equivariant_pair_series(cross: Cross, cap: usize) -> Result<PoincareSeries> {
    let m = Model::loop_space(cross, true)?;
    if !m.square_vanishes() {
        return Err(Error::OracleFailed("D² ≠ 0 in the equivariant model".into()));
    }
    Ok(series(m.ideal_cohomology(cap)).detect_periodicity())
}

/// H^*(ΛM, M;ℚ) to degree cap.
pub fn pair_series(cross: Cross, cap: usize) -> Result<PoincareSeries> {
    let m = Model::loop_space(cross, false)?;
    if !m.square_vanishes() {
        return Err(Error::OracleFailed("d² ≠ 0 in the loop space model".into()));
    }
    Ok(series(m.ideal_cohomology(cap)))
}
