//! Integral cohomology of T¹M and of the quotient T¹M/S¹ from the two Gysin
//! sequences, with a rational audit of the circle-bundle sequence.

use serde::{Deserialize, Serialize};

use super::{product_ranks, Cross, Degree, GradedGroup};
use crate::error::{Error, Result};

fn base_rank(cross: Cross, q: usize) -> usize {
    let a = cross.generator_degree();
    usize::from(q % a == 0 && q <= cross.dim())
}

/// H^*(T¹M;ℤ) from the sphere-bundle Gysin sequence with Euler class χ·x^h:
/// coker(e on H^{q−n}) ⊕ ker(e on H^{q−n+1}).
pub fn unit_tangent_cohomology(cross: Cross) -> Result<GradedGroup> {
    cross.validate()?;
    let n = cross.dim();
    let chi = cross.euler_characteristic();
    let top = 2 * n - 1;
    let mut g = GradedGroup::zero(format!("H^*(T1 {}; Z)", cross.label()), top);
    for q in 0..=top {
        let mut d = Degree::default();
        if q == n {
            match chi.unsigned_abs() {
                0 => d.rank += 1,
                1 => {}
                c => d.torsion.push(c),
            }
        } else {
            d.rank += base_rank(cross, q);
        }
        if q + 1 >= n {
            let j = q + 1 - n;
            if j == 0 {
                if chi == 0 {
                    d.rank += 1;
                }
            } else {
                d.rank += base_rank(cross, j);
            }
        }
        g.degrees[q] = d;
    }
    Ok(g)
}

/// H^*(T¹M/S¹;ℤ). Below the middle dimension the circle Gysin sequence
/// splits into 0 → H^{q−2} → H^q → H^q(T¹M) → 0 for q even and forces
/// H^q = 0 for q odd; Poincaré duality gives the rest.
pub fn quotient_cohomology(cross: Cross) -> Result<GradedGroup> {
    let e = unit_tangent_cohomology(cross)?;
    let n = cross.dim();
    let d = 2 * n - 2;
    let mut g = GradedGroup::zero(format!("H^*(T1 {} / S1; Z)", cross.label()), d);
    for q in 0..n {
        let eq = e.get(q);
        if q % 2 == 1 {
            if !eq.is_zero() {
                return Err(Error::Precondition(format!(
                    "H^{q}(T1M) ≠ 0 in odd degree below the middle"
                )));
            }
            continue;
        }
        let below = if q >= 2 { g.degrees[q - 2].rank } else { 0 };
        g.degrees[q] = Degree {
            rank: below + eq.rank,
            torsion: eq.torsion.clone(),
        };
        if !eq.torsion.is_empty() && below > 0 {
            g.flagged.push(q);
        }
    }
    for q in n..=d {
        g.degrees[q] = Degree {
            rank: g.degrees[d - q].rank,
            torsion: g.degrees[d - q + 1].torsion.clone(),
        };
        if g.flagged.contains(&(d - q)) || g.flagged.contains(&(d - q + 1)) {
            g.flagged.push(q);
        }
    }
    Ok(g)
}

/// Rational consistency of the circle-bundle Gysin sequence
/// H^q(B) → H^q(E) → H^{q−1}(B) → H^{q+1}(B) → …
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GysinAudit {
    pub quotient_ranks: Vec<usize>,
    pub total_ranks: Vec<usize>,
    /// rank of ∪c : H^j(B) → H^{j+2}(B)
    pub cup_ranks: Vec<i64>,
    pub consistent: bool,
    pub model_ranks: Vec<usize>,
    pub matches_model: bool,
    pub euler_quotient: i64,
    pub sphere_windows: Vec<ExactWindow>,
    pub circle_windows: Vec<ExactWindow>,
}

/// A maximal run of nonzero terms of a long exact sequence (rational
/// ranks); bounded by zeros, so its alternating sum must vanish.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactWindow {
    pub start: usize,
    pub ranks: Vec<usize>,
    pub alternating_sum: i64,
}

fn windows(terms: &[usize]) -> Vec<ExactWindow> {
    let mut out = vec![];
    let mut i = 0;
    while i < terms.len() {
        if terms[i] == 0 {
            i += 1;
            continue;
        }
        let start = i;
        while i < terms.len() && terms[i] != 0 {
            i += 1;
        }
        let ranks = terms[start..i].to_vec();
        let alternating_sum = ranks
            .iter()
            .enumerate()
            .map(|(j, &r)| if j % 2 == 0 { r as i64 } else { -(r as i64) })
            .sum();
        out.push(ExactWindow { start, ranks, alternating_sum });
    }
    out
}

/// Terms H^q M, H^q(T¹M), H^{q−n+1} M, H^{q+1} M, … of the sphere-bundle
/// sequence and H^q B, H^q(T¹M), H^{q−1} B, H^{q+1} B, … of the circle
/// bundle, as rational ranks.
fn sequences(cross: Cross, e: &[usize], b: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let n = cross.dim() as i64;
    let at = |v: &[usize], j: i64| if j < 0 { 0 } else { v.get(j as usize).copied().unwrap_or(0) };
    let m: Vec<usize> = (0..=cross.dim()).map(|q| base_rank(cross, q)).collect();
    let mut sphere = vec![];
    let mut circle = vec![];
    for q in 0..=(e.len() as i64) {
        sphere.extend([at(&m, q), at(e, q), at(&m, q - n + 1)]);
        circle.extend([at(b, q), at(e, q), at(b, q - 1)]);
    }
    (sphere, circle)
}

impl GysinAudit {
    pub fn windows_exact(&self) -> bool {
        self.sphere_windows
            .iter()
            .chain(&self.circle_windows)
            .all(|w| w.alternating_sum == 0)
    }
}

pub fn gysin_audit(cross: Cross) -> Result<GysinAudit> {
    let b = quotient_cohomology(cross)?.ranks();
    let e = unit_tangent_cohomology(cross)?.ranks();
    let rb = |j: i64| if j < 0 { 0 } else { b.get(j as usize).copied().unwrap_or(0) as i64 };
    let re = |j: i64| e.get(j as usize).copied().unwrap_or(0) as i64;
    let top = e.len() as i64;
    let mut cup = vec![];
    let mut prev = 0i64;
    let mut consistent = true;
    for q in 0..=top {
        // γ_{q−1} = r B^q + r B^{q−1} − γ_{q−2} − r E^q
        let g = rb(q) + rb(q - 1) - prev - re(q);
        let j = q - 1;
        if g < 0 || g > rb(j).min(rb(j + 2)) {
            consistent = false;
        }
        if j >= 0 {
            cup.push(g);
        } else if g != 0 {
            consistent = false;
        }
        prev = g;
    }
    let d = b.len() - 1;
    let model_ranks = product_ranks(&cross.quotient_model(), d);
    let model_dim: usize = cross.quotient_model().iter().map(|f| f.dim()).sum();
    let euler_quotient = b
        .iter()
        .enumerate()
        .map(|(q, &r)| if q % 2 == 0 { r as i64 } else { -(r as i64) })
        .sum();
    let (sphere, circle) = sequences(cross, &e, &b);
    Ok(GysinAudit {
        sphere_windows: windows(&sphere),
        circle_windows: windows(&circle),
        matches_model: model_ranks == b && model_dim == d,
        quotient_ranks: b,
        total_ranks: e,
        cup_ranks: cup,
        consistent,
        model_ranks,
        euler_quotient,
    })
}
