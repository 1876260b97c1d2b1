//! The symplectic space (V⊕V, ω), spectra of symplectic matrices, genericity
//! strata, the χ submersion and the two subspace-dimension bounds.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{
    self, col_space, hcat, intersection_dim, max_abs, null_space, null_space_complex,
    omega_complement, omega_gram, orthogonality_defect, rank, rank_complex, Mat, Vector,
};
use crate::tol::{TOL_BLOCK, TOL_EIG, TOL_RANK, TOL_SP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymplecticSpace {
    pub m: usize,
}

impl SymplecticSpace {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("m must be positive".into()));
        }
        Ok(SymplecticSpace { m })
    }

    pub fn dim(&self) -> usize {
        2 * self.m
    }

    pub fn gram(&self) -> Mat {
        omega_gram(self.m)
    }

    pub fn e(&self, i: usize) -> Vector {
        let mut v = Vector::zeros(2 * self.m);
        v[i] = 1.0;
        v
    }

    pub fn f(&self, i: usize) -> Vector {
        let mut v = Vector::zeros(2 * self.m);
        v[self.m + i] = 1.0;
        v
    }

    pub fn omega(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        if u.len() != 2 * self.m || v.len() != 2 * self.m {
            return Err(Error::InvalidInput(format!(
                "expected vectors of length {}, got {} and {}",
                2 * self.m,
                u.len(),
                v.len()
            )));
        }
        Ok(linalg::omega_pair(u, v))
    }
}

/// A 2m×2m matrix certified to preserve ω up to `defect`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticMatrix {
    entries: Mat,
    defect: f64,
}

impl SymplecticMatrix {
    pub fn new(p: Mat) -> Result<Self> {
        Self::with_tol(p, TOL_SP)
    }

    pub fn with_tol(p: Mat, tol: f64) -> Result<Self> {
        if p.nrows() != p.ncols() || p.nrows() % 2 != 0 || p.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "symplectic matrix must be 2m×2m, got {}×{}",
                p.nrows(),
                p.ncols()
            )));
        }
        let defect = linalg::symplectic_defect(&p);
        if !(defect <= tol) {
            return Err(Error::Precondition(format!(
                "symplectic defect {defect:.3e} exceeds {tol:.1e}"
            )));
        }
        Ok(SymplecticMatrix { entries: p, defect })
    }

    pub fn identity(m: usize) -> Self {
        SymplecticMatrix {
            entries: Mat::identity(2 * m, 2 * m),
            defect: 0.0,
        }
    }

    pub fn m(&self) -> usize {
        self.entries.nrows() / 2
    }

    pub fn matrix(&self) -> &Mat {
        &self.entries
    }

    pub fn into_matrix(self) -> Mat {
        self.entries
    }

    pub fn defect(&self) -> f64 {
        self.defect
    }

    pub fn inverse(&self) -> Mat {
        // P⁻¹ = -Ω Pᵀ Ω
        let o = omega_gram(self.m());
        -(&o * self.entries.transpose() * &o)
    }

    pub fn is_orthogonal(&self, tol: f64) -> bool {
        orthogonality_defect(&self.entries) <= tol
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    entries: Vec<Vec<f64>>,
    symplectic_defect: f64,
}

impl Serialize for SymplecticMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            entries: linalg::to_rows(&self.entries),
            symplectic_defect: self.defect,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymplecticMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = MatrixRepr::deserialize(d)?;
        let m = linalg::from_rows(&r.entries)
            .ok_or_else(|| serde::de::Error::custom("ragged matrix"))?;
        SymplecticMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EigenEntry {
    /// [re, im]
    pub value: [f64; 2],
    pub algebraic: usize,
    pub geometric: usize,
    /// generalized eigenspace basis, each vector as [re, im] pairs
    pub basis: Vec<Vec<[f64; 2]>>,
}

impl EigenEntry {
    pub fn complex(&self) -> Complex64 {
        Complex64::new(self.value[0], self.value[1])
    }

    pub fn is_real(&self) -> bool {
        self.value[1] == 0.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EigenReport {
    pub entries: Vec<EigenEntry>,
    pub real_positive: Vec<f64>,
    pub degraded: bool,
}

impl EigenReport {
    pub fn find_real(&self, lambda: f64) -> Option<&EigenEntry> {
        self.entries
            .iter()
            .filter(|e| e.is_real())
            .find(|e| (e.value[0] - lambda).abs() <= TOL_EIG * lambda.abs().max(1.0))
    }

    pub fn total_algebraic(&self) -> usize {
        self.entries.iter().map(|e| e.algebraic).sum()
    }
}

struct Cluster {
    members: Vec<Complex64>,
    degraded: bool,
}

impl Cluster {
    fn mean(&self) -> Complex64 {
        self.members.iter().sum::<Complex64>() / self.members.len() as f64
    }

    fn spread(&self) -> f64 {
        let c = self.mean();
        self.members
            .iter()
            .map(|z| (z - c).norm())
            .fold(0.0, f64::max)
    }
}

fn cluster_eigenvalues(vals: &[Complex64], pnorm: f64) -> Vec<Cluster> {
    let mut clusters: Vec<Cluster> = vals
        .iter()
        .map(|&z| Cluster {
            members: vec![z],
            degraded: false,
        })
        .collect();
    // tier one: tol_eig single linkage
    loop {
        let mut merged = false;
        'outer: for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let close = clusters[i].members.iter().any(|a| {
                    clusters[j]
                        .members
                        .iter()
                        .any(|b| (a - b).norm() <= TOL_EIG * a.norm().max(1.0))
                });
                if close {
                    let c = clusters.remove(j);
                    clusters[i].members.extend(c.members);
                    clusters[i].degraded |= c.degraded;
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            break;
        }
    }
    // tier two: a defective eigenvalue of block size k splits like ε^{1/k}; grow a group
    // around each cluster while its spread fits that budget and it stays isolated
    loop {
        let mut merge: Option<Vec<usize>> = None;
        for i in 0..clusters.len() {
            let ci = clusters[i].mean();
            let mut order: Vec<usize> = (0..clusters.len()).filter(|&j| j != i).collect();
            order.sort_by(|&x, &y| {
                (clusters[x].mean() - ci)
                    .norm()
                    .partial_cmp(&(clusters[y].mean() - ci).norm())
                    .unwrap()
            });
            let mut members = clusters[i].members.clone();
            let mut group = vec![i];
            let mut best: Option<Vec<usize>> = None;
            for (pos, &j) in order.iter().enumerate() {
                members.extend(clusters[j].members.iter().copied());
                group.push(j);
                let trial = Cluster {
                    members: members.clone(),
                    degraded: true,
                };
                let k = members.len();
                let scale = trial.mean().norm().max(1.0);
                let budget = 10.0 * (1e-15 * pnorm.max(1.0)).powf(1.0 / k as f64) * scale;
                let spread = trial.spread();
                let gap = order
                    .get(pos + 1)
                    .map(|&x| (clusters[x].mean() - trial.mean()).norm())
                    .unwrap_or(f64::INFINITY);
                if spread <= budget && gap >= 10.0 * spread {
                    best = Some(group.clone());
                }
            }
            if let Some(g) = best {
                merge = Some(g);
                break;
            }
        }
        match merge {
            None => break,
            Some(mut g) => {
                g.sort_unstable_by(|a, b| b.cmp(a));
                let mut members = Vec::new();
                for j in g {
                    members.extend(clusters.remove(j).members);
                }
                clusters.push(Cluster {
                    members,
                    degraded: true,
                });
            }
        }
    }
    clusters
}

fn complex_shifted(p: &Mat, mu: Complex64) -> DMatrix<Complex64> {
    let n = p.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let z = Complex64::new(p[(i, j)], 0.0);
        if i == j {
            z - mu
        } else {
            z
        }
    })
}

fn cpow(a: &DMatrix<Complex64>, k: usize) -> DMatrix<Complex64> {
    let mut r = DMatrix::<Complex64>::identity(a.nrows(), a.ncols());
    for _ in 0..k {
        r = &r * a;
    }
    r
}

/// Spectrum with multiplicities; λ ↔ 1/λ pairs are symmetrized in log-magnitude and angle.
pub fn eigen_structure(p: &SymplecticMatrix) -> EigenReport {
    let pm = p.matrix();
    let n = pm.nrows();
    let pnorm = max_abs(pm);
    let vals: Vec<Complex64> = pm.clone().complex_eigenvalues().iter().copied().collect();
    let clusters = cluster_eigenvalues(&vals, pnorm);
    let mut degraded = clusters.iter().any(|c| c.degraded);
    let mut means: Vec<Complex64> = clusters.iter().map(|c| c.mean()).collect();
    let algs: Vec<usize> = clusters.iter().map(|c| c.members.len()).collect();

    // snap nearly real clusters onto the real axis
    for z in means.iter_mut() {
        if z.im.abs() <= TOL_EIG * z.norm().max(1.0) {
            z.im = 0.0;
        }
    }
    // symmetrize λ ↔ 1/λ
    let orig = means.clone();
    for i in 0..orig.len() {
        let target = 1.0 / orig[i];
        let (j, d) = orig
            .iter()
            .enumerate()
            .map(|(j, z)| (j, (z - target).norm() / target.norm().max(1.0)))
            .fold((usize::MAX, f64::INFINITY), |acc, x| {
                if x.1 < acc.1 {
                    x
                } else {
                    acc
                }
            });
        if j == usize::MAX || d > 1e-4 || algs[j] != algs[i] {
            degraded = true;
            continue;
        }
        let (ri, ti) = orig[i].to_polar();
        let (rj, tj) = orig[j].to_polar();
        let lr = 0.5 * (ri.ln() - rj.ln());
        let th = if orig[i].im == 0.0 && orig[j].im == 0.0 {
            ti
        } else {
            0.5 * (ti - tj)
        };
        let z = Complex64::from_polar(lr.exp(), th);
        means[i] = if orig[i].im == 0.0 {
            Complex64::new(z.re, 0.0)
        } else {
            z
        };
    }

    let mut entries = Vec::with_capacity(means.len());
    for (idx, &mu) in means.iter().enumerate() {
        let alg = algs[idx];
        let shifted = complex_shifted(pm, mu);
        let rk = rank_complex(&shifted, TOL_RANK);
        degraded |= rk.degraded;
        let mut geom = n - rk.rank;
        if geom > alg {
            degraded = true;
            geom = alg;
        }
        if geom == 0 {
            degraded = true;
            geom = 1;
        }
        let gen = null_space_complex(&cpow(&shifted, alg), 1e-6);
        let basis = (0..gen.ncols())
            .map(|j| gen.column(j).iter().map(|z| [z.re, z.im]).collect())
            .collect();
        if gen.ncols() != alg {
            degraded = true;
        }
        entries.push(EigenEntry {
            value: [mu.re, mu.im],
            algebraic: alg,
            geometric: geom,
            basis,
        });
    }
    entries.sort_by(|a, b| {
        a.value[0]
            .partial_cmp(&b.value[0])
            .unwrap()
            .then(a.value[1].partial_cmp(&b.value[1]).unwrap())
    });
    let real_positive = entries
        .iter()
        .filter(|e| e.is_real() && e.value[0] > 0.0)
        .map(|e| e.value[0])
        .collect();
    EigenReport {
        entries,
        real_positive,
        degraded,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    GInterior,
    G1,
    G0,
    NotInSp1,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Classification {
    pub stratum: Stratum,
    pub kernel_dim: usize,
    pub degraded: bool,
}

pub fn kernel_dim(p: &Mat, lambda: f64) -> (usize, bool) {
    let n = p.nrows();
    let scale = p.norm().max(lambda).max(1.0);
    let info = linalg::rank_info_scaled(&(p - Mat::identity(n, n) * lambda), TOL_RANK, scale);
    (n - info.rank, info.degraded)
}

pub fn genericity_classify(p: &SymplecticMatrix, lambda: f64) -> Result<Classification> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!(
            "λ must be positive, got {lambda}"
        )));
    }
    let rep = eigen_structure(p);
    let (kdim, kdeg) = kernel_dim(p.matrix(), lambda);
    let degraded = kdeg || rep.degraded;
    let bad = rep
        .entries
        .iter()
        .any(|e| e.is_real() && e.value[0] > 0.0 && e.geometric >= 2);
    let stratum = if bad {
        Stratum::NotInSp1
    } else {
        match kdim {
            0 => Stratum::GInterior,
            1 if (lambda - 1.0).abs() <= TOL_EIG => Stratum::G0,
            1 => Stratum::G1,
            _ => Stratum::NotInSp1,
        }
    };
    Ok(Classification {
        stratum,
        kernel_dim: kdim,
        degraded,
    })
}

pub fn chi(p: &SymplecticMatrix, lambda: f64) -> f64 {
    let n = p.matrix().nrows();
    (p.matrix() - Mat::identity(n, n) * lambda).determinant()
}

/// Refined block form at a positive real eigenvalue λ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockForm {
    pub lambda: f64,
    pub algebraic: usize,
    pub geometric: usize,
    /// symplectic C with C⁻¹PC ≈ `blocks`
    pub conjugator: Vec<Vec<f64>>,
    pub blocks: Vec<Vec<f64>>,
    /// λ≠1: U with P|E_λ = λUᵀ; λ=1: the unipotent block on E₁
    pub u: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    /// for λ = 1 with geometric multiplicity 1, the entry (UT)_{k,k}
    pub c: Option<f64>,
    pub residual: f64,
}

impl BlockForm {
    pub fn conjugator_matrix(&self) -> Mat {
        linalg::from_rows(&self.conjugator).expect("rectangular")
    }

    pub fn blocks_matrix(&self) -> Mat {
        linalg::from_rows(&self.blocks).expect("rectangular")
    }

    pub fn r_matrix(&self) -> Mat {
        if self.r.is_empty() {
            Mat::zeros(0, 0)
        } else {
            linalg::from_rows(&self.r).expect("rectangular")
        }
    }
}

const NIL_TOL: f64 = 1e-6;

fn sign_normalize(v: &mut Vector) {
    let mut best = 0.0_f64;
    for x in v.iter() {
        if x.abs() > best.abs() + 1e-12 {
            best = *x;
        }
    }
    if best < 0.0 {
        *v *= -1.0;
    }
}

/// Jordan chain w₁..w_a of a nilpotent N with one Jordan block: N w₁ = 0, N w_{j+1} = w_j.
fn jordan_chain(nil: &Mat) -> Option<Mat> {
    let a = nil.nrows();
    let k = linalg::null_space_abs(nil, NIL_TOL);
    if k.ncols() != 1 {
        return None;
    }
    // start from the top of the chain: a vector outside ker N^{a-1}
    let top_space = linalg::null_space_abs(&linalg::mat_pow(nil, a.saturating_sub(1)), NIL_TOL);
    let mut top = if top_space.ncols() == a {
        // a = 1
        k.column(0).into_owned()
    } else {
        let comp = null_space(&top_space.transpose());
        comp.column(0).into_owned()
    };
    let mut chain = vec![Vector::zeros(a); a];
    for j in (0..a).rev() {
        chain[j] = top.clone();
        top = nil * &top;
    }
    let mut w1 = chain[0].clone();
    let nrm = w1.norm();
    if nrm == 0.0 {
        return None;
    }
    let scale = {
        sign_normalize(&mut w1);
        if w1.dot(&chain[0]) < 0.0 {
            -1.0 / nrm
        } else {
            1.0 / nrm
        }
    };
    Some(Mat::from_columns(
        &chain.iter().map(|c| c * scale).collect::<Vec<_>>(),
    ))
}

/// Basis adapted to the kernel flag of a nilpotent N, so N is strictly upper triangular.
fn flag_basis(nil: &Mat) -> Mat {
    let a = nil.nrows();
    let mut basis: Vec<Vector> = Vec::new();
    for k in 1..=a {
        let ker = linalg::null_space_abs(&linalg::mat_pow(nil, k), NIL_TOL);
        for j in 0..ker.ncols() {
            if basis.len() >= a {
                break;
            }
            let mut v = ker.column(j).into_owned();
            for b in &basis {
                let c = b.dot(&v);
                v -= b * c;
            }
            let nv = v.norm();
            if nv > 1e-6 {
                basis.push(v / nv);
            }
        }
        if basis.len() == a {
            break;
        }
    }
    Mat::from_columns(&basis)
}

/// Shift the dual basis e ↦ e + fS (S symmetric) so that the block
/// `[[U⁻¹, 0], [UᵀT, Uᵀ]]` has T ≡ t·E_kk.
fn normalize_unipotent(pm: &Mat, e: Mat, f: &Mat) -> Result<Mat> {
    let k = f.ncols();
    let fail = || Error::BlockFormFailed {
        residual: f64::INFINITY,
    };
    let b = hcat(&e, f);
    let s1 = (b.transpose() * &b).try_inverse().ok_or_else(fail)? * b.transpose() * pm * &b;
    let ut = s1.view((k, k), (k, k)).into_owned();
    let y = s1.view((k, 0), (k, k)).into_owned();
    let uti = ut.clone().try_inverse().ok_or_else(fail)?;
    let t = linalg::symmetrize(&(&uti * y));
    let uinv_t = uti.clone(); // U⁻ᵀ = (Uᵀ)⁻¹
    let uinv = uti.transpose();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
    let np = pairs.len();
    let sym_unit = |i: usize, j: usize| {
        let mut s = Mat::zeros(k, k);
        s[(i, j)] = 1.0;
        s[(j, i)] = 1.0;
        s
    };
    // unknowns: S over the symmetric basis, then t; equations: entries (i ≤ j) of S − U⁻ᵀSU⁻¹ − tE_kk = −T
    let mut sys = Mat::zeros(np, np + 1);
    for (col, &(a, bb)) in pairs.iter().enumerate() {
        let sm = sym_unit(a, bb);
        let l = &sm - &uinv_t * &sm * &uinv;
        for (row, &(i, j)) in pairs.iter().enumerate() {
            sys[(row, col)] = l[(i, j)];
        }
    }
    let (kk_row, _) = pairs
        .iter()
        .enumerate()
        .find(|(_, &(i, j))| i == k - 1 && j == k - 1)
        .unwrap();
    sys[(kk_row, np)] = -1.0;
    let rhs = Vector::from_iterator(np, pairs.iter().map(|&(i, j)| -t[(i, j)]));
    let sol = sys.svd(true, true).solve(&rhs, 1e-12).map_err(|_| fail())?;
    let mut smat = Mat::zeros(k, k);
    for (col, &(a, bb)) in pairs.iter().enumerate() {
        smat += sym_unit(a, bb) * sol[col];
    }
    Ok(e + f * smat)
}

/// Symplectic Gram–Schmidt on a symplectic subspace, returning (p, q) columns with ω(p_i,q_j)=δ.
pub fn symplectic_basis(w: &Mat) -> Result<(Mat, Mat)> {
    let n = w.nrows();
    let m = n / 2;
    let o = omega_gram(m);
    let mut rest: Vec<Vector> = (0..w.ncols()).map(|j| w.column(j).into_owned()).collect();
    let mut ps = Vec::new();
    let mut qs = Vec::new();
    while !rest.is_empty() {
        let mut best = (0, 1, 0.0_f64);
        for i in 0..rest.len() {
            for j in (i + 1)..rest.len() {
                let w_ij = rest[i].dot(&(&o * &rest[j]));
                if w_ij.abs() > best.2.abs() {
                    best = (i, j, w_ij);
                }
            }
        }
        if rest.len() < 2 || best.2.abs() < 1e-10 {
            return Err(Error::BlockFormFailed {
                residual: f64::INFINITY,
            });
        }
        let (i, j, w_ij) = best;
        let e = rest[i].clone();
        let f = &rest[j] / w_ij;
        let (hi, lo) = if i > j { (i, j) } else { (j, i) };
        rest.remove(hi);
        rest.remove(lo);
        for z in rest.iter_mut() {
            let zf = z.dot(&(&o * &f));
            let ze = z.dot(&(&o * &e));
            *z = &*z - &e * zf + &f * ze;
        }
        // keep the remaining vectors well scaled
        rest.retain(|z| z.norm() > 1e-12);
        ps.push(e);
        qs.push(f);
    }
    if ps.is_empty() {
        return Ok((Mat::zeros(n, 0), Mat::zeros(n, 0)));
    }
    Ok((Mat::from_columns(&ps), Mat::from_columns(&qs)))
}

fn assemble_conjugator(m: usize, e: &Mat, f: &Mat, p: &Mat, q: &Mat) -> Mat {
    let mut c = Mat::zeros(2 * m, 2 * m);
    let a = e.ncols();
    let r = p.ncols();
    for j in 0..a {
        c.set_column(j, &e.column(j));
        c.set_column(m + j, &f.column(j));
    }
    for j in 0..r {
        c.set_column(a + j, &p.column(j));
        c.set_column(m + a + j, &q.column(j));
    }
    c
}

fn rest_indices(m: usize, a: usize) -> Vec<usize> {
    (a..m).chain(m + a..2 * m).collect()
}

fn block_indices(m: usize, a: usize) -> Vec<usize> {
    (0..a).chain(m..m + a).collect()
}

fn submatrix(s: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(idx.len(), idx.len(), |i, j| s[(idx[i], idx[j])])
}

fn embed(m: usize, s1: &Mat, a: usize, r: &Mat) -> Mat {
    let mut out = Mat::zeros(2 * m, 2 * m);
    let bi = block_indices(m, a);
    let ri = rest_indices(m, a);
    for (i, &ii) in bi.iter().enumerate() {
        for (j, &jj) in bi.iter().enumerate() {
            out[(ii, jj)] = s1[(i, j)];
        }
    }
    for (i, &ii) in ri.iter().enumerate() {
        for (j, &jj) in ri.iter().enumerate() {
            out[(ii, jj)] = r[(i, j)];
        }
    }
    out
}

fn real_gen_eigenspace(p: &Mat, lambda: f64, a: usize) -> Mat {
    let n = p.nrows();
    let shifted = p - Mat::identity(n, n) * lambda;
    let scale = shifted.norm().max(1.0).powi(a as i32);
    let pw = linalg::mat_pow(&shifted, a);
    // the dimension is known; take the a weakest right singular directions and check the gap
    let svd = pw.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        svd.singular_values[i]
            .partial_cmp(&svd.singular_values[j])
            .unwrap()
    });
    let small = svd.singular_values[idx[a - 1]];
    let next = if a < n {
        svd.singular_values[idx[a]]
    } else {
        f64::INFINITY
    };
    if small > 1e-6 * scale || next < 1e-6 * scale {
        return Mat::zeros(n, 0);
    }
    Mat::from_columns(
        &idx[..a]
            .iter()
            .map(|&i| vt.row(i).transpose())
            .collect::<Vec<_>>(),
    )
}

pub fn refined_block_form(p: &SymplecticMatrix, lambda: f64) -> Result<BlockForm> {
    let rep = eigen_structure(p);
    let entry = rep
        .find_real(lambda)
        .ok_or_else(|| {
            Error::Precondition(format!("{lambda} is not an eigenvalue within tol_eig"))
        })?
        .clone();
    let lam = entry.value[0];
    let a = entry.algebraic;
    let pm = p.matrix();
    let m = p.m();
    let is_one = (lam - 1.0).abs() <= TOL_EIG;
    let lam = if is_one { 1.0 } else { lam };
    let e_space = real_gen_eigenspace(pm, lam, a);
    if e_space.ncols() != a {
        return Err(Error::BlockFormFailed {
            residual: f64::INFINITY,
        });
    }
    let o = omega_gram(m);
    let restricted = e_space.transpose() * pm * &e_space;
    let nil = &restricted - Mat::identity(a, a) * lam;

    let (conj, c_entry) = if !is_one {
        if 2 * a > 2 * m {
            return Err(Error::BlockFormFailed {
                residual: f64::INFINITY,
            });
        }
        let w = if entry.geometric == 1 {
            jordan_chain(&nil).ok_or(Error::BlockFormFailed {
                residual: f64::INFINITY,
            })?
        } else {
            flag_basis(&nil)
        };
        let e = &e_space * w;
        let g = real_gen_eigenspace(pm, 1.0 / lam, a);
        if g.ncols() != a {
            return Err(Error::BlockFormFailed {
                residual: f64::INFINITY,
            });
        }
        let gamma = e.transpose() * &o * &g;
        let gi = gamma.try_inverse().ok_or(Error::BlockFormFailed {
            residual: f64::INFINITY,
        })?;
        let f = &g * gi;
        let comp = omega_complement(&hcat(&e, &f));
        let (pp, qq) = symplectic_basis(&comp)?;
        (assemble_conjugator(m, &e, &f, &pp, &qq), None)
    } else {
        if a % 2 != 0 {
            return Err(Error::BlockFormFailed {
                residual: f64::INFINITY,
            });
        }
        let k = a / 2;
        let (e, f, c) = if entry.geometric == 1 {
            let chain = jordan_chain(&nil).ok_or(Error::BlockFormFailed {
                residual: f64::INFINITY,
            })?;
            // Z: strictly upper all-ones k×k; its own chain conjugates the shift into Z
            let z = Mat::from_fn(k, k, |i, j| if j > i { 1.0 } else { 0.0 });
            let zc = if k == 1 {
                Mat::identity(1, 1)
            } else {
                jordan_chain(&z).ok_or(Error::BlockFormFailed {
                    residual: f64::INFINITY,
                })?
            };
            let zci = zc.try_inverse().ok_or(Error::BlockFormFailed {
                residual: f64::INFINITY,
            })?;
            let f = &e_space * chain.columns(0, k) * zci;
            let g = &e_space * chain.columns(k, k);
            let gamma = g.transpose() * &o * &f;
            let y = gamma
                .transpose()
                .try_inverse()
                .ok_or(Error::BlockFormFailed {
                    residual: f64::INFINITY,
                })?;
            let mut e = g * y;
            let amat = e.transpose() * &o * &e;
            e += &f * (amat.transpose() * 0.5);
            let e = normalize_unipotent(pm, e, &f)?;
            (e, f, true)
        } else {
            let (pp, qq) = symplectic_basis(&e_space)?;
            (pp, qq, false)
        };
        let comp = omega_complement(&hcat(&e, &f));
        let (pp, qq) = symplectic_basis(&comp)?;
        let conj = assemble_conjugator(m, &e, &f, &pp, &qq);
        let cval = if c {
            let ci = conj.clone().try_inverse().ok_or(Error::BlockFormFailed {
                residual: f64::INFINITY,
            })?;
            let s = &ci * pm * &conj;
            let s1 = submatrix(&s, &block_indices(m, k));
            let ut = s1.view((k, k), (k, k)).into_owned();
            let y = s1.view((k, 0), (k, k)).into_owned();
            let uti = ut.clone().try_inverse().ok_or(Error::BlockFormFailed {
                residual: f64::INFINITY,
            })?;
            let t = &uti * y;
            let ut_t = ut.transpose() * t;
            Some(ut_t[(k - 1, k - 1)])
        } else {
            None
        };
        (conj, cval)
    };

    let blk = if is_one { a / 2 } else { a };
    let ci = conj.clone().try_inverse().ok_or(Error::BlockFormFailed {
        residual: f64::INFINITY,
    })?;
    let s = &ci * pm * &conj;
    let s1 = submatrix(&s, &block_indices(m, blk));
    let r = submatrix(&s, &rest_indices(m, blk));
    let (s1_exact, u) = if !is_one {
        let top = s1.view((0, 0), (blk, blk)).into_owned();
        // λUᵀ is upper triangular with λ on the diagonal
        let mut top_exact = Mat::from_fn(blk, blk, |i, j| if j > i { top[(i, j)] } else { 0.0 });
        for i in 0..blk {
            top_exact[(i, i)] = lam;
        }
        let bottom = top_exact
            .transpose()
            .try_inverse()
            .ok_or(Error::BlockFormFailed {
                residual: f64::INFINITY,
            })?;
        let mut full = Mat::zeros(2 * blk, 2 * blk);
        full.view_mut((0, 0), (blk, blk)).copy_from(&top_exact);
        full.view_mut((blk, blk), (blk, blk)).copy_from(&bottom);
        let u = top_exact.transpose() / lam;
        (full, u)
    } else {
        (s1.clone(), s1.clone())
    };
    let blocks = embed(m, &s1_exact, blk, &r);
    let residual = max_abs(&(&s - &blocks)).max(max_abs(&(&conj * &blocks * &ci - pm)));
    let cdef = linalg::symplectic_defect(&conj);
    if residual > TOL_BLOCK || cdef > TOL_BLOCK {
        return Err(Error::BlockFormFailed {
            residual: residual.max(cdef),
        });
    }
    Ok(BlockForm {
        lambda: lam,
        algebraic: a,
        geometric: entry.geometric,
        conjugator: linalg::to_rows(&conj),
        blocks: linalg::to_rows(&blocks),
        u: linalg::to_rows(&u),
        r: linalg::to_rows(&r),
        c: c_entry,
        residual,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Direction {
    pub lambda: f64,
    pub algebraic: usize,
    /// tangent vector at P, i.e. P·(C v' C⁻¹)
    pub tangent: Vec<Vec<f64>>,
    /// the Lie-algebra element C v' C⁻¹
    pub algebra: Vec<Vec<f64>>,
    /// predicted dχ(v) at (P, λ)
    pub derivative: f64,
}

impl Direction {
    pub fn tangent_matrix(&self) -> Mat {
        linalg::from_rows(&self.tangent).expect("rectangular")
    }
}

/// Vector v at P with dχ_(P,λ)(v) > 0, left-translated from the block construction.
pub fn chi_positive_direction(p: &SymplecticMatrix, lambda: f64) -> Result<Direction> {
    let (kdim, _) = kernel_dim(p.matrix(), lambda);
    if kdim != 1 {
        return Err(Error::NoDirection(format!(
            "dim ker(P-λ) = {kdim}, expected 1"
        )));
    }
    let bf = refined_block_form(p, lambda).map_err(|e| Error::NoDirection(e.to_string()))?;
    let m = p.m();
    let a = bf.algebraic;
    let lam = bf.lambda;
    let r = bf.r_matrix();
    let mut v = Mat::zeros(2 * m, 2 * m);
    let derivative;
    if (lam - 1.0).abs() > TOL_EIG {
        let rest = if r.nrows() == 0 {
            1.0
        } else {
            (r - Mat::identity(2 * (m - a), 2 * (m - a)) * lam).determinant()
        };
        let mut sign = if lam > 1.0 {
            1.0
        } else if a % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        sign *= rest.signum();
        v[(a - 1, 0)] = -sign;
        v[(m, m + a - 1)] = sign;
        derivative = lam * (lam - 1.0 / lam).abs().powi(a as i32) * rest.abs();
    } else {
        let k = a / 2;
        let c =
            bf.c.ok_or_else(|| Error::NoDirection("no unipotent normal form".into()))?;
        let rest = if r.nrows() == 0 {
            1.0
        } else {
            (r - Mat::identity(2 * (m - k), 2 * (m - k))).determinant()
        };
        let raw = if k % 2 == 0 { c } else { -c } * rest;
        if raw == 0.0 {
            return Err(Error::NoDirection("degenerate unipotent block".into()));
        }
        v[(0, m)] = raw.signum();
        derivative = raw.abs();
    }
    let conj = bf.conjugator_matrix();
    let ci = conj
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NoDirection("singular conjugator".into()))?;
    let alg = &conj * v * ci;
    let tangent = p.matrix() * &alg;
    Ok(Direction {
        lambda: lam,
        algebraic: a,
        tangent: linalg::to_rows(&tangent),
        algebra: linalg::to_rows(&alg),
        derivative,
    })
}

/// Central finite-difference derivative of det(P + εv − λ) at ε = 0, taking the
/// most self-consistent estimate over steps 1e-3..1e-6.
pub fn chi_directional_fd(p: &Mat, lambda: f64, v: &Mat) -> f64 {
    let n = p.nrows();
    let f = |eps: f64| (p + v * eps - Mat::identity(n, n) * lambda).determinant();
    let steps = [1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 3e-6, 1e-6];
    let est: Vec<f64> = steps.iter().map(|&h| (f(h) - f(-h)) / (2.0 * h)).collect();
    let mut best = (est[0], f64::INFINITY);
    for w in est.windows(2) {
        let d = (w[0] - w[1]).abs();
        if d < best.1 {
            best = (w[1], d);
        }
    }
    best.0
}

/// v_S = Σ v_(S,λ) over the real eigenvalues λ ∈ (0,1].
pub fn summed_direction(p: &SymplecticMatrix) -> Result<Mat> {
    let rep = eigen_structure(p);
    let n = p.matrix().nrows();
    let mut total = Mat::zeros(n, n);
    for &lam in rep.real_positive.iter().filter(|&&l| l <= 1.0 + TOL_EIG) {
        let d = chi_positive_direction(p, lam)?;
        total += d.tangent_matrix();
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceKind {
    Generic,
    Lagrangian,
    Symplectic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    pub basis: Mat,
    pub kind: SubspaceKind,
}

impl Subspace {
    pub fn new(basis: Mat, kind: SubspaceKind) -> Result<Self> {
        if basis.nrows() % 2 != 0 {
            return Err(Error::InvalidInput("ambient dimension must be even".into()));
        }
        let m = basis.nrows() / 2;
        let q = col_space(&basis);
        let d = q.ncols();
        let w = q.transpose() * omega_gram(m) * &q;
        match kind {
            SubspaceKind::Generic => {}
            SubspaceKind::Lagrangian => {
                if d != m || max_abs(&w) > 1e-8 {
                    return Err(Error::InvalidInput("subspace is not Lagrangian".into()));
                }
            }
            SubspaceKind::Symplectic => {
                if rank(&w) != d {
                    return Err(Error::InvalidInput("subspace is not symplectic".into()));
                }
            }
        }
        Ok(Subspace { basis: q, kind })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn m(&self) -> usize {
        self.basis.nrows() / 2
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LagrangianIdentity {
    pub dim_l_cap_kperp: usize,
    pub dim_l_cap_k: usize,
    pub dim_k: usize,
    pub m: usize,
    pub identity_holds: bool,
}

pub fn lagrangian_symplectic_identity(l: &Subspace, k: &Subspace) -> Result<LagrangianIdentity> {
    if l.kind != SubspaceKind::Lagrangian || k.kind != SubspaceKind::Symplectic {
        return Err(Error::InvalidInput(
            "expected (lagrangian, symplectic) pair".into(),
        ));
    }
    if l.m() != k.m() {
        return Err(Error::InvalidInput("ambient dimension mismatch".into()));
    }
    let m = l.m();
    let kperp = omega_complement(&k.basis);
    let a = intersection_dim(&l.basis, &kperp);
    let b = intersection_dim(&l.basis, &k.basis);
    let dk = k.dim();
    Ok(LagrangianIdentity {
        dim_l_cap_kperp: a,
        dim_l_cap_k: b,
        dim_k: dk,
        m,
        identity_holds: a as i64 - b as i64 + dk as i64 == m as i64,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PreimageReport {
    pub dim: usize,
    pub dim_k: usize,
    pub dim_l_cap_kperp: usize,
    pub holds: bool,
}

/// dim (P − Id)⁻¹(L) for P in Sp ∩ O, compared with dim K + dim(L ∩ K⊥), K = ker(P − Id).
pub fn preimage_dim(p: &SymplecticMatrix, l: &Subspace) -> Result<PreimageReport> {
    if !p.is_orthogonal(1e-9) {
        return Err(Error::Precondition(
            "P is not in the maximal compact subgroup".into(),
        ));
    }
    let n = p.matrix().nrows();
    if l.basis.nrows() != n {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    let shifted = p.matrix() - Mat::identity(n, n);
    let proj_perp = Mat::identity(n, n) - &l.basis * l.basis.transpose();
    // ‖P‖ = 1, so the noise floor is absolute
    let dim = n - linalg::rank_info_scaled(&(proj_perp * &shifted), TOL_RANK, 1.0).rank;
    let kmat = linalg::null_space_abs(&shifted, TOL_RANK);
    let dim_k = kmat.ncols();
    let kperp = omega_complement(&kmat);
    let lk = intersection_dim(&l.basis, &kperp);
    Ok(PreimageReport {
        dim,
        dim_k,
        dim_l_cap_kperp: lk,
        holds: dim == dim_k + lk,
    })
}
