//! Dense linear algebra helpers: symplectic Gram matrix, crisp ranks, null spaces.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::tol::{RANK_GAP_RATIO, TOL_RANK};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMat = DMatrix<Complex64>;

/// Gram matrix of ω on V⊕V, `[[0, I], [-I, 0]]`.
pub fn omega_gram(m: usize) -> Mat {
    let mut o = Mat::zeros(2 * m, 2 * m);
    for i in 0..m {
        o[(i, m + i)] = 1.0;
        o[(m + i, i)] = -1.0;
    }
    o
}

/// ⟨u₁,v₂⟩ − ⟨u₂,v₁⟩ for u = (u₁,v₁), v = (u₂,v₂).
pub fn omega_pair(u: &[f64], v: &[f64]) -> f64 {
    let m = u.len() / 2;
    let mut s = 0.0;
    for i in 0..m {
        s += u[i] * v[m + i] - v[i] * u[m + i];
    }
    s
}

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn symplectic_defect(p: &Mat) -> f64 {
    let m = p.nrows() / 2;
    let o = omega_gram(m);
    max_abs(&(p.transpose() * &o * p - o))
}

pub fn orthogonality_defect(a: &Mat) -> f64 {
    max_abs(&(a.transpose() * a - Mat::identity(a.ncols(), a.ncols())))
}

pub fn delta(a: &Mat) -> Mat {
    let m = a.nrows();
    let mut d = Mat::zeros(2 * m, 2 * m);
    d.view_mut((0, 0), (m, m)).copy_from(a);
    d.view_mut((m, m), (m, m)).copy_from(a);
    d
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn mat_pow(a: &Mat, k: usize) -> Mat {
    let mut r = Mat::identity(a.nrows(), a.ncols());
    for _ in 0..k {
        r = &r * a;
    }
    r
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RankInfo {
    pub rank: usize,
    pub degraded: bool,
    pub singular_values: Vec<f64>,
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

/// One-sided Jacobi singular values; slower but relatively accurate.
pub fn jacobi_singular_values(a: &Mat) -> Vec<f64> {
    let mut u = if a.nrows() >= a.ncols() {
        a.clone()
    } else {
        a.transpose()
    };
    let n = u.ncols();
    for _sweep in 0..60 {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dot(&u.column(q));
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt().max(f64::MIN_POSITIVE));
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..u.nrows() {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    sorted_desc((0..n).map(|j| u.column(j).norm()).collect())
}

fn classify_rank(sv: &[f64], thr: f64) -> (usize, bool) {
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return (0, false);
    }
    let r = sv.iter().filter(|&&s| s > thr).count();
    let mut borderline = false;
    if r > 0 && r < sv.len() {
        let above = sv[r - 1];
        let below = sv[r].max(f64::MIN_POSITIVE);
        if above / below < RANK_GAP_RATIO {
            borderline = true;
        }
    }
    // a singular value sitting within a factor of the gap ratio of the threshold is suspect too
    if sv
        .iter()
        .any(|&s| s > thr / RANK_GAP_RATIO && s < thr * RANK_GAP_RATIO)
    {
        borderline = true;
    }
    (r, borderline)
}

/// Rank with threshold `rel · σ_max`; borderline gaps are re-examined with
/// one-sided Jacobi before the degraded flag is raised.
pub fn rank_info_rel(a: &Mat, rel: f64) -> RankInfo {
    rank_with(a, |smax| rel * smax)
}

/// Rank with threshold `rel · scale`, for matrices like `P − λ` whose own
/// norm says nothing about the noise floor.
pub fn rank_info_scaled(a: &Mat, rel: f64, scale: f64) -> RankInfo {
    rank_with(a, |_| rel * scale)
}

fn rank_with(a: &Mat, thr: impl Fn(f64) -> f64) -> RankInfo {
    if a.nrows() == 0 || a.ncols() == 0 {
        return RankInfo {
            rank: 0,
            degraded: false,
            singular_values: vec![],
        };
    }
    let sv = sorted_desc(a.clone().singular_values().iter().copied().collect());
    let t = thr(sv[0]);
    let (r, borderline) = classify_rank(&sv, t);
    if !borderline {
        return RankInfo {
            rank: r,
            degraded: false,
            singular_values: sv,
        };
    }
    let sv2 = jacobi_singular_values(a);
    let (r2, borderline2) = classify_rank(&sv2, t);
    RankInfo {
        rank: r2,
        degraded: borderline2,
        singular_values: sv2,
    }
}

pub fn rank_info(a: &Mat) -> RankInfo {
    rank_info_rel(a, TOL_RANK)
}

pub fn rank(a: &Mat) -> usize {
    rank_info(a).rank
}

pub fn rank_complex(a: &CMat, rel: f64) -> RankInfo {
    if a.nrows() == 0 || a.ncols() == 0 {
        return RankInfo {
            rank: 0,
            degraded: false,
            singular_values: vec![],
        };
    }
    let sv = sorted_desc(a.clone().singular_values().iter().copied().collect());
    let (r, borderline) = classify_rank(&sv, rel * sv[0]);
    RankInfo {
        rank: r,
        degraded: borderline,
        singular_values: sv,
    }
}

fn pad_square(a: &Mat) -> Mat {
    let n = a.ncols();
    if a.nrows() >= n {
        return a.clone();
    }
    let mut p = Mat::zeros(n, n);
    p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    p
}

/// Orthonormal basis of the null space of `a`, using the `rel · σ_max` rule.
pub fn null_space_rel(a: &Mat, rel: f64) -> Mat {
    let n = a.ncols();
    if a.nrows() == 0 {
        return Mat::identity(n, n);
    }
    let sq = pad_square(a);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let sv = &svd.singular_values;
    let smax = sv.iter().copied().fold(0.0_f64, f64::max);
    let thr = rel * smax;
    let cols: Vec<Vector> = (0..sv.len())
        .filter(|&i| smax == 0.0 || sv[i] <= thr)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        Mat::zeros(n, 0)
    } else {
        Mat::from_columns(&cols)
    }
}

/// Null space with an absolute singular-value threshold.
pub fn null_space_abs(a: &Mat, thr: f64) -> Mat {
    let n = a.ncols();
    if a.nrows() == 0 {
        return Mat::identity(n, n);
    }
    let svd = pad_square(a).svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let cols: Vec<Vector> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= thr)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        Mat::zeros(n, 0)
    } else {
        Mat::from_columns(&cols)
    }
}

pub fn null_space(a: &Mat) -> Mat {
    null_space_rel(a, TOL_RANK)
}

pub fn null_space_complex(a: &CMat, rel: f64) -> CMat {
    let n = a.ncols();
    let sq = if a.nrows() >= n {
        a.clone()
    } else {
        let mut p = CMat::zeros(n, n);
        p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        p
    };
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let sv = &svd.singular_values;
    let smax = sv.iter().copied().fold(0.0_f64, f64::max);
    let thr = rel * smax;
    let cols: Vec<DVector<Complex64>> = (0..sv.len())
        .filter(|&i| smax == 0.0 || sv[i] <= thr)
        .map(|i| vt.row(i).adjoint())
        .collect();
    if cols.is_empty() {
        CMat::zeros(n, 0)
    } else {
        CMat::from_columns(&cols)
    }
}

/// Orthonormal basis of the column space.
pub fn col_space(a: &Mat) -> Mat {
    if a.ncols() == 0 {
        return Mat::zeros(a.nrows(), 0);
    }
    let r = rank(a);
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap()
    });
    let cols: Vec<Vector> = idx
        .iter()
        .take(r)
        .map(|&i| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        Mat::zeros(a.nrows(), 0)
    } else {
        Mat::from_columns(&cols)
    }
}

pub fn hcat(a: &Mat, b: &Mat) -> Mat {
    let mut c = Mat::zeros(a.nrows().max(b.nrows()), a.ncols() + b.ncols());
    c.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    c.view_mut((0, a.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
    c
}

/// Basis of span(a) ∩ span(b), with `a`, `b` given by columns.
pub fn intersection(a: &Mat, b: &Mat) -> Mat {
    let qa = col_space(a);
    let qb = col_space(b);
    if qa.ncols() == 0 || qb.ncols() == 0 {
        return Mat::zeros(a.nrows(), 0);
    }
    let k = hcat(&qa, &(-&qb));
    let ns = null_space(&k);
    let top = ns.rows(0, qa.ncols()).into_owned();
    col_space(&(&qa * top))
}

pub fn intersection_dim(a: &Mat, b: &Mat) -> usize {
    let ra = rank(a);
    let rb = rank(b);
    ra + rb - rank(&hcat(a, b))
}

/// ω-orthogonal complement of the column span of `k`.
pub fn omega_complement(k: &Mat) -> Mat {
    let m = k.nrows() / 2;
    let o = omega_gram(m);
    if k.ncols() == 0 {
        return Mat::identity(2 * m, 2 * m);
    }
    null_space(&(o * k).transpose())
}

pub fn to_rows(a: &Mat) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| a.row(i).iter().copied().collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Option<Mat> {
    let r = rows.len();
    let c = rows.first().map(|x| x.len()).unwrap_or(0);
    if rows.iter().any(|x| x.len() != c) {
        return None;
    }
    Some(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

/// Serde adapter writing a matrix as a list of rows.
pub mod serde_rows {
    use super::{from_rows, to_rows, Mat};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(a: &Mat, s: S) -> Result<S::Ok, S::Error> {
        to_rows(a).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).ok_or_else(|| serde::de::Error::custom("ragged matrix"))
    }
}

/// Same as [`serde_rows`] for a list of matrices.
pub mod serde_rows_vec {
    use super::{from_rows, to_rows, Mat};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(a: &[Mat], s: S) -> Result<S::Ok, S::Error> {
        a.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat>, D::Error> {
        let all = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
        all.iter()
            .map(|rows| from_rows(rows).ok_or_else(|| serde::de::Error::custom("ragged matrix")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_gram_has_unit_determinant() {
        for m in 1..5 {
            assert!((omega_gram(m).determinant().abs() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rank_of_rank_one_outer_product() {
        let u = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let a = &u * u.transpose();
        let info = rank_info(&a);
        assert_eq!(info.rank, 1);
        assert!(!info.degraded);
    }

    #[test]
    fn borderline_rank_is_flagged() {
        let a = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 2e-8]));
        assert!(rank_info(&a).degraded);
    }

    #[test]
    fn jacobi_matches_svd() {
        let a = Mat::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.5]);
        let s1 = jacobi_singular_values(&a);
        let s2 = sorted_desc(a.singular_values().iter().copied().collect());
        for (x, y) in s1.iter().zip(&s2) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let a = Mat::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let ns = null_space(&a);
        assert_eq!(ns.ncols(), 2);
        assert!(max_abs(&(a * ns)) < 1e-14);
    }

    #[test]
    fn intersection_of_coordinate_planes() {
        let a = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = Mat::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(intersection_dim(&a, &b), 1);
        assert_eq!(intersection(&a, &b).ncols(), 1);
    }
}
