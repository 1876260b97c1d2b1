//! The index form H(X, X) = ∫|X′|² − ⟨RX, X⟩ on continuous piecewise-linear
//! fields with X(T) = A·X(0). Negative counts come from block LDLᵀ inertia.

use nalgebra::{Cholesky, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{eps_neg, eps_null_band, poincare_map, FormalGeodesic};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, rank_info_rel, symplectic_defect, Mat, Vector};
use crate::symplectic_core::kernel_dim;
use crate::tol::HESSIAN_NMAX;

const GAUSS: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshLevel {
    pub n: usize,
    pub negative: usize,
    pub null_band: usize,
}

/// Block-cyclic assembly: `diag[i]` is block (i, i), `off[i]` block (i, i+1 mod n).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscretizedIndexForm {
    pub n: usize,
    pub m: usize,
    pub h: f64,
    pub history: Vec<MeshLevel>,
    pub symmetry_defect: f64,
    #[serde(skip)]
    diag: Vec<Mat>,
    #[serde(skip)]
    off: Vec<Mat>,
    #[serde(skip)]
    mdiag: Vec<Mat>,
    #[serde(skip)]
    moff: Vec<Mat>,
}

impl DiscretizedIndexForm {
    pub fn assemble(fg: &FormalGeodesic, n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidInput("need at least 4 nodes".into()));
        }
        let m = fg.m();
        let len = fg.length();
        let h = len / n as f64;
        let a = fg.twist();
        let id = Mat::identity(m, m);
        let prof = fg.profile();
        let bps = prof.breakpoints();
        let mut diag = vec![Mat::zeros(m, m); n];
        let mut off = vec![Mat::zeros(m, m); n];
        let mdiag = vec![&id * (2.0 * h / 3.0); n];
        let mut moff = vec![&id * (h / 6.0); n];
        moff[n - 1] = a * (h / 6.0);
        for i in 0..n {
            let (ta, tb) = (
                i as f64 * h,
                if i + 1 == n { len } else { (i + 1) as f64 * h },
            );
            let mut cuts = vec![ta];
            let lo = bps.partition_point(|&b| b <= ta);
            let hi = bps.partition_point(|&b| b < tb);
            cuts.extend(
                bps[lo..hi]
                    .iter()
                    .copied()
                    .filter(|&b| b - ta > 1e-14 && tb - b > 1e-14),
            );
            cuts.push(tb);
            let (mut eaa, mut eab, mut ebb) =
                (Mat::zeros(m, m), Mat::zeros(m, m), Mat::zeros(m, m));
            for w in cuts.windows(2) {
                let (u, v) = (w[0], w[1]);
                let seg = prof.segment_of(0.5 * (u + v));
                for &(x, wt) in &GAUSS {
                    let t = 0.5 * (u + v) + 0.5 * (v - u) * x;
                    let r = prof.eval_in(seg, t);
                    let (pa, pb) = ((tb - t) / (tb - ta), (t - ta) / (tb - ta));
                    let q = 0.5 * (v - u) * wt;
                    eaa += &r * (q * pa * pa);
                    eab += &r * (q * pa * pb);
                    ebb += &r * (q * pb * pb);
                }
            }
            let he = tb - ta;
            let kaa = &id / he - eaa;
            let kab = -&id / he - eab;
            let kbb = &id / he - ebb;
            diag[i] += kaa;
            if i + 1 < n {
                diag[i + 1] += kbb;
                off[i] = kab;
            } else {
                diag[0] += a.transpose() * kbb * a;
                off[i] = kab * a;
            }
        }
        let symmetry_defect = diag
            .iter()
            .map(|d| max_abs(&(d - d.transpose())))
            .fold(0.0, f64::max);
        Ok(DiscretizedIndexForm {
            n,
            m,
            h,
            history: Vec::new(),
            symmetry_defect,
            diag,
            off,
            mdiag,
            moff,
        })
    }

    fn d(&self, i: usize, s: f64) -> Mat {
        &self.diag[i] - &self.mdiag[i] * s
    }

    fn o(&self, i: usize, s: f64) -> Mat {
        &self.off[i] - &self.moff[i] * s
    }

    /// Number of generalized eigenvalues of (H, M) below `sigma`.
    pub fn count_below(&self, sigma: f64) -> usize {
        let mut s = sigma;
        for attempt in 0..8 {
            if let Some(c) = self.inertia(s) {
                return c;
            }
            s = sigma + 1e-12 * (1.0 + sigma.abs()) * (attempt + 1) as f64;
        }
        self.inertia_dense(sigma)
    }

    fn inertia(&self, s: f64) -> Option<usize> {
        let n = self.n;
        let m = self.m;
        let mut count = 0;
        let mut z = self.d(0, s);
        let mut piv = self.d(1, s);
        let mut b = self.o(0, s).transpose();
        for k in 1..n {
            let eig = SymmetricEigen::new(piv.clone());
            let scale = eig
                .eigenvalues
                .iter()
                .fold(0.0_f64, |a, x| a.max(x.abs()))
                .max(1e-300);
            if eig.eigenvalues.iter().any(|x| x.abs() <= 1e-13 * scale) {
                return None;
            }
            count += eig.eigenvalues.iter().filter(|&&x| x < 0.0).count();
            let inv_diag = Mat::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / x));
            let inv = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
            z -= b.transpose() * &inv * &b;
            if k + 1 < n {
                let l = self.o(k, s).transpose();
                let next = self.d(k + 1, s) - &l * &inv * l.transpose();
                let border = if k + 1 == n - 1 {
                    self.o(n - 1, s)
                } else {
                    Mat::zeros(m, m)
                };
                b = border - &l * &inv * &b;
                piv = next;
            }
        }
        let z = crate::linalg::symmetrize(&z);
        let ez = SymmetricEigen::new(z).eigenvalues;
        let scale = ez.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(1e-300);
        if ez.iter().any(|x| x.abs() <= 1e-13 * scale) {
            return None;
        }
        Some(count + ez.iter().filter(|&&x| x < 0.0).count())
    }

    fn inertia_dense(&self, s: f64) -> usize {
        let (k, mm) = self.dense();
        let e = SymmetricEigen::new(k - mm * s).eigenvalues;
        e.iter().filter(|&&x| x < 0.0).count()
    }

    /// Dense (H, M) pair, size nm × nm.
    pub fn dense(&self) -> (Mat, Mat) {
        let (n, m) = (self.n, self.m);
        let mut k = Mat::zeros(n * m, n * m);
        let mut mm = Mat::zeros(n * m, n * m);
        for i in 0..n {
            let j = (i + 1) % n;
            k.view_mut((i * m, i * m), (m, m)).copy_from(&self.diag[i]);
            mm.view_mut((i * m, i * m), (m, m))
                .copy_from(&self.mdiag[i]);
            let (o, mo) = (&self.off[i], &self.moff[i]);
            k.view_mut((i * m, j * m), (m, m)).copy_from(o);
            k.view_mut((j * m, i * m), (m, m)).copy_from(&o.transpose());
            mm.view_mut((i * m, j * m), (m, m)).copy_from(mo);
            mm.view_mut((j * m, i * m), (m, m))
                .copy_from(&mo.transpose());
        }
        (k, mm)
    }

    /// The `k` smallest generalized eigenvalues by bisection on inertia.
    pub fn smallest(&self, k: usize, lower: f64) -> Vec<f64> {
        let mut hi = 1.0;
        while self.count_below(hi) < k && hi < 1e12 {
            hi *= 2.0;
        }
        (0..k)
            .map(|j| {
                let (mut a, mut b) = (lower, hi);
                for _ in 0..60 {
                    let mid = 0.5 * (a + b);
                    if self.count_below(mid) > j {
                        b = mid;
                    } else {
                        a = mid;
                    }
                    if b - a <= 1e-12 * (1.0 + b.abs()) {
                        break;
                    }
                }
                0.5 * (a + b)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HessianIndex {
    pub negative_count: usize,
    /// eigenvalues in (−ε_neg, ε_null)
    pub null_band: usize,
    pub eps_neg: f64,
    pub eps_null: f64,
    pub smallest: Vec<f64>,
    pub form: DiscretizedIndexForm,
}

/// Doubles the node count from `n0` until the negative count is unchanged
/// across two successive doublings.
pub fn discretized_hessian_index(fg: &FormalGeodesic, n0: usize) -> Result<HessianIndex> {
    let en = eps_neg(fg.profile());
    let ez = eps_null_band(fg.profile());
    let mut n = n0.max(16);
    let mut history: Vec<MeshLevel> = Vec::new();
    loop {
        if n > HESSIAN_NMAX {
            return Err(Error::OracleFailed(format!(
                "negative count not stable below {HESSIAN_NMAX} nodes: {:?}",
                history.iter().map(|l| l.negative).collect::<Vec<_>>()
            )));
        }
        let form = DiscretizedIndexForm::assemble(fg, n)?;
        if form.symmetry_defect > 1e-12 * (1.0 + 1.0 / form.h) {
            return Err(Error::ContractViolation(format!(
                "assembled form asymmetric: {:.2e}",
                form.symmetry_defect
            )));
        }
        let negative = form.count_below(-en);
        let null_band = form.count_below(ez) - negative;
        history.push(MeshLevel {
            n,
            negative,
            null_band,
        });
        let k = history.len();
        if k >= 3
            && history[k - 3..]
                .iter()
                .all(|l| l.negative == negative && l.null_band == null_band)
        {
            let lower = -(fg.profile().norm_bound() + 1.0);
            let smallest = form.smallest((negative + null_band + 2).min(16), lower);
            let form = DiscretizedIndexForm { history, ..form };
            return Ok(HessianIndex {
                negative_count: negative,
                null_band,
                eps_neg: en,
                eps_null: ez,
                smallest,
                form,
            });
        }
        n *= 2;
    }
}

/// Lowest eigenpairs of the discretized form, as nodal fields (column i = X(t_i)).
#[derive(Debug, Clone)]
pub struct DiscreteModes {
    pub values: Vec<f64>,
    pub fields: Vec<Mat>,
    pub h: f64,
}

impl DiscreteModes {
    /// (X(0), X′(0)) of mode j, with a one-sided second-order derivative.
    pub fn initial_data(&self, j: usize) -> Vector {
        let f = &self.fields[j];
        let m = f.nrows();
        let mut v = Vector::zeros(2 * m);
        for i in 0..m {
            v[i] = f[(i, 0)];
            v[m + i] = (-3.0 * f[(i, 0)] + 4.0 * f[(i, 1)] - f[(i, 2)]) / (2.0 * self.h);
        }
        v
    }

    /// M-orthonormal coefficient vector of mode j, flattened node-major.
    pub fn coefficients(&self, j: usize) -> Vector {
        Vector::from_column_slice(self.fields[j].as_slice())
    }
}

pub fn lowest_modes(fg: &FormalGeodesic, n: usize, k: usize) -> Result<DiscreteModes> {
    let form = DiscretizedIndexForm::assemble(fg, n)?;
    modes_of(&form, k)
}

pub(crate) fn modes_of(form: &DiscretizedIndexForm, k: usize) -> Result<DiscreteModes> {
    let (kk, mm) = form.dense();
    let chol =
        Cholesky::new(mm).ok_or_else(|| Error::OracleFailed("mass matrix not positive".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .solve_lower_triangular(&Mat::identity(l.nrows(), l.nrows()))
        .ok_or_else(|| Error::OracleFailed("singular mass factor".into()))?;
    let c = crate::linalg::symmetrize(&(&linv * kk * linv.transpose()));
    let eig = SymmetricEigen::new(c);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let lt = linv.transpose();
    let mut values = Vec::new();
    let mut fields = Vec::new();
    for &j in idx.iter().take(k) {
        values.push(eig.eigenvalues[j]);
        let x = &lt * eig.eigenvectors.column(j);
        fields.push(Mat::from_column_slice(form.m, form.n, x.as_slice()));
    }
    Ok(DiscreteModes {
        values,
        fields,
        h: form.h,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelImageCheck {
    pub dim_e1: usize,
    pub null_band: usize,
    /// rank of X ↦ (X(0), X′(0)) on the discrete kernel basis
    pub image_rank: usize,
    /// largest distance of an image vector from ker(P − Id), relative
    pub fixed_residual: f64,
    pub holds: bool,
}

/// dim E₁(P) against the discrete null band, with X ↦ (X(0), X′(0)) injective.
pub fn kernel_image_check(fg: &FormalGeodesic, n: usize) -> Result<KernelImageCheck> {
    let p = poincare_map(fg)?;
    let pm = p.matrix.matrix();
    let (dim_e1, _) = kernel_dim(pm, 1.0);
    let form = DiscretizedIndexForm::assemble(fg, n)?;
    let en = eps_neg(fg.profile());
    let ez = eps_null_band(fg.profile());
    let below = form.count_below(-en);
    let null_band = form.count_below(ez) - below;
    let modes = modes_of(&form, below + null_band)?;
    let m = fg.m();
    let mut img = Mat::zeros(2 * m, null_band);
    let mut fixed_residual = 0.0_f64;
    let id = Mat::identity(2 * m, 2 * m);
    for j in 0..null_band {
        let v = modes.initial_data(below + j);
        let r = (pm - &id) * &v;
        fixed_residual = fixed_residual.max(r.norm() / v.norm().max(1e-300));
        img.set_column(j, &v);
    }
    let image_rank = if null_band == 0 {
        0
    } else {
        rank_info_rel(&img, 1e-3).rank
    };
    debug_assert!(symplectic_defect(pm) < 1e-8);
    Ok(KernelImageCheck {
        dim_e1,
        null_band,
        image_rank,
        fixed_residual,
        holds: dim_e1 == null_band && image_rank == null_band,
    })
}
