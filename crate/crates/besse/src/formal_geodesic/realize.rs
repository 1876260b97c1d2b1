//! Realizing a symplectic matrix near P(R₀) as the Poincaré map of
//! R₀ + Σ aᵢRᵢ by damped Newton iteration.

use serde::{Deserialize, Serialize};

use super::{poincare_map, CurvatureProfile, FormalGeodesic};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, Mat, Vector};
use crate::symplectic_core::SymplecticMatrix;
use crate::tol::{REALIZE_DELTA, REALIZE_MAX_ITER, REALIZE_RESIDUAL};

// uneven cut points avoid the resonances of equal subdivisions
const CUTS: [f64; 6] = [0.0, 0.17, 0.36, 0.58, 0.79, 1.0];
const FD_STEP: f64 = 1e-6;

/// A base geodesic and h = m(2m+1) perturbation profiles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealizationFamily {
    pub base: FormalGeodesic,
    pub members: Vec<CurvatureProfile>,
    /// smallest singular value of the first-order map at the base
    pub conditioning: f64,
}

fn sym_unit(m: usize, i: usize, j: usize) -> Mat {
    let mut e = Mat::zeros(m, m);
    e[(i, j)] = 1.0;
    e[(j, i)] = 1.0;
    e
}

fn vec_of(p: &Mat) -> Vector {
    Vector::from_column_slice(p.as_slice())
}

fn with_profile(base: &FormalGeodesic, prof: CurvatureProfile) -> Result<FormalGeodesic> {
    FormalGeodesic::new(prof, base.twist().clone(), base.label())
}

impl RealizationFamily {
    /// R₀ = diag(1, 4, …, m²) on [0, 2π] (Poincaré map Id).
    pub fn standard(m: usize) -> Result<Self> {
        let r0 = Mat::from_diagonal(&Vector::from_fn(m, |i, _| ((i + 1) * (i + 1)) as f64));
        let base =
            FormalGeodesic::constant(&r0, &Mat::identity(m, m), 2.0 * std::f64::consts::PI, "R0")?;
        Self::around(&base)
    }

    /// Piecewise-constant symmetric bumps on five unequal pieces of the
    /// domain, keeping the h columns of the linearized map chosen by greedy
    /// pivoting.
    pub fn around(base: &FormalGeodesic) -> Result<Self> {
        let m = base.m();
        let h = m * (2 * m + 1);
        let len = base.length();
        let ts: Vec<f64> = CUTS.iter().map(|c| c * len).collect();
        let pieces = CUTS.len() - 1;
        let mut cands = Vec::new();
        let mut cols = Vec::new();
        for q in 0..pieces {
            for i in 0..m {
                for j in i..m {
                    let vals: Vec<Mat> = (0..pieces)
                        .map(|k| {
                            if k == q {
                                sym_unit(m, i, j)
                            } else {
                                Mat::zeros(m, m)
                            }
                        })
                        .collect();
                    let prof = CurvatureProfile::piecewise_constant(&ts, &vals)?;
                    let plus = with_profile(base, base.profile().add_scaled(&prof, FD_STEP)?)?;
                    let minus = with_profile(base, base.profile().add_scaled(&prof, -FD_STEP)?)?;
                    let dp = (poincare_map(&plus)?.matrix.into_matrix()
                        - poincare_map(&minus)?.matrix.into_matrix())
                        / (2.0 * FD_STEP);
                    cols.push(vec_of(&dp));
                    cands.push(prof);
                }
            }
        }
        // greedy column pivoting
        let mut chosen = Vec::new();
        let mut resid = cols.clone();
        let floor = 1e-4 * cols.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for _ in 0..h {
            let (best, norm) = resid
                .iter()
                .enumerate()
                .filter(|(k, _)| !chosen.contains(k))
                .map(|(k, v)| (k, v.norm()))
                .fold(
                    (usize::MAX, -1.0),
                    |acc, x| if x.1 > acc.1 { x } else { acc },
                );
            if best == usize::MAX || norm < floor {
                return Err(Error::RealizationFailed {
                    iterations: 0,
                    residual: norm.max(0.0),
                });
            }
            let u = &resid[best] / norm;
            for r in resid.iter_mut() {
                let c = r.dot(&u);
                *r -= &u * c;
            }
            chosen.push(best);
        }
        let jac = Mat::from_columns(&chosen.iter().map(|&k| cols[k].clone()).collect::<Vec<_>>());
        let sv = jac.singular_values();
        let conditioning = sv.iter().copied().fold(f64::INFINITY, f64::min);
        let members = chosen.into_iter().map(|k| cands[k].clone()).collect();
        Ok(RealizationFamily {
            base: base.clone(),
            members,
            conditioning,
        })
    }

    pub fn h(&self) -> usize {
        self.members.len()
    }

    pub fn profile_at(&self, coeffs: &[f64]) -> Result<CurvatureProfile> {
        let mut p = self.base.profile().clone();
        for (c, r) in coeffs.iter().zip(&self.members) {
            if *c != 0.0 {
                p = p.add_scaled(r, *c)?;
            }
        }
        Ok(p)
    }

    pub fn geodesic_at(&self, coeffs: &[f64]) -> Result<FormalGeodesic> {
        with_profile(&self.base, self.profile_at(coeffs)?)
    }

    fn map_at(&self, coeffs: &[f64]) -> Result<Mat> {
        Ok(poincare_map(&self.geodesic_at(coeffs)?)?
            .matrix
            .into_matrix())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Realized {
    pub profile: CurvatureProfile,
    pub coefficients: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Finds coefficients with ‖P(R₀ + Σ aᵢRᵢ) − target‖∞ ≤ 1e−7.
pub fn realize_poincare(target: &SymplecticMatrix, family: &RealizationFamily) -> Result<Realized> {
    let m = family.base.m();
    if target.m() != m {
        return Err(Error::InvalidInput(format!(
            "target is {}×{}, family has m={m}",
            2 * target.m(),
            2 * target.m()
        )));
    }
    let t = target.matrix();
    let mut a = vec![0.0; family.h()];
    let mut p = family.map_at(&a)?;
    let dist = max_abs(&(&p - t));
    if dist > REALIZE_DELTA {
        return Err(Error::Precondition(format!(
            "target at distance {dist:.3} from the base map (limit {REALIZE_DELTA})"
        )));
    }
    let mut res = dist;
    let mut it = 0;
    while res > REALIZE_RESIDUAL {
        if it >= REALIZE_MAX_ITER {
            return Err(Error::RealizationFailed {
                iterations: it,
                residual: res,
            });
        }
        it += 1;
        let f = vec_of(&(&p - t));
        let mut jac = Mat::zeros(f.len(), a.len());
        for k in 0..a.len() {
            let mut b = a.clone();
            b[k] += FD_STEP;
            let pk = family.map_at(&b)?;
            jac.set_column(k, &vec_of(&((pk - &p) / FD_STEP)));
        }
        let svd = jac.svd(true, true);
        let step = svd
            .solve(&(-&f), 1e-12)
            .ok()
            .filter(|s| s.iter().all(|x| x.is_finite()))
            .ok_or(Error::RealizationFailed {
                iterations: it,
                residual: res,
            })?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial: Vec<f64> = a
                .iter()
                .zip(step.iter())
                .map(|(x, d)| x + alpha * d)
                .collect();
            let pt = family.map_at(&trial)?;
            let rt = max_abs(&(&pt - t));
            if rt < res {
                a = trial;
                p = pt;
                res = rt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::RealizationFailed {
                iterations: it,
                residual: res,
            });
        }
    }
    Ok(Realized {
        profile: family.profile_at(&a)?,
        coefficients: a,
        residual: res,
        iterations: it,
    })
}
