//! Broken-Jacobi reduction: the index form restricted to fields that are
//! Jacobi on each of K short pieces, parametrized by the vertex values
//! x₀, …, x_{K−1} ∈ ℝ^m with x_K = A x₀. Index and nullity agree with the
//! full form, kernel vectors are exactly the periodic Jacobi fields, and the
//! ambient ℝ^{Km} does not depend on the data.

use std::f64::consts::FRAC_PI_2;

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::formal_geodesic::{flow, CurvatureProfile, FormalGeodesic, Rule};
use crate::linalg::{delta, Mat, Vector};
use crate::ode::OdeOptions;
use crate::tol::REAL_EIG_IM;

fn generator(r: &Mat, h: f64) -> Mat {
    let m = r.nrows();
    let mut g = Mat::zeros(2 * m, 2 * m);
    for i in 0..m {
        g[(i, m + i)] = h;
        for j in 0..m {
            g[(m + i, j)] = -h * r[(i, j)];
        }
    }
    g
}

/// Φ(b)Φ(a)⁻¹; constant pieces use the matrix exponential.
pub(crate) fn segment_flow(profile: &CurvatureProfile, a: f64, b: f64) -> Result<Mat> {
    let m = profile.m();
    let mut phi = Mat::identity(2 * m, 2 * m);
    for seg in profile.segments() {
        let (c, d) = (seg.t0.max(a), seg.t1.min(b));
        if d <= c {
            continue;
        }
        let step = match &seg.rule {
            Rule::Constant { value } => generator(value, d - c).exp(),
            _ => {
                flow(
                    profile,
                    &Mat::identity(2 * m, 2 * m),
                    c,
                    d,
                    &OdeOptions::default(),
                    false,
                )?
                .0
            }
        };
        phi = step * phi;
    }
    Ok(phi)
}

/// Pieces needed so that each has length · sup‖R‖^{1/2} < π/2.
pub fn min_segments(fg: &FormalGeodesic) -> usize {
    let w = fg.profile().norm_bound().sqrt();
    let k = (fg.length() * w / FRAC_PI_2).floor() as usize + 1;
    k.max(8)
}

#[derive(Debug, Clone)]
pub(crate) struct Reduced {
    pub m: usize,
    pub k: usize,
    /// P = ΔA⁻¹ Φ(T) from the same piece flows.
    pub p: Mat,
    pub evals: Vec<f64>,
    pub evecs: Mat,
    u1: Mat,
    u2inv: Mat,
    a: Mat,
    flows: Vec<Mat>,
}

impl Reduced {
    pub fn new(fg: &FormalGeodesic, k: usize) -> Result<Self> {
        let m = fg.m();
        let len = fg.length();
        let h = len / k as f64;
        let w = fg.profile().norm_bound().sqrt();
        if h * w >= FRAC_PI_2 {
            return Err(Error::Precondition(format!(
                "{k} pieces too coarse: h·sup‖R‖^½ = {:.3}",
                h * w
            )));
        }
        let a = fg.twist();
        let n = k * m;
        let mut q = Mat::zeros(n, n);
        let mut total = Mat::identity(2 * m, 2 * m);
        let mut first = None;
        let mut flows = Vec::with_capacity(k);
        for i in 0..k {
            let t0 = i as f64 * h;
            let t1 = if i + 1 == k { len } else { (i + 1) as f64 * h };
            let phi = segment_flow(fg.profile(), t0, t1)?;
            total = &phi * total;
            let u1 = phi.view((0, 0), (m, m)).into_owned();
            let u2 = phi.view((0, m), (m, m)).into_owned();
            let u3 = phi.view((m, 0), (m, m)).into_owned();
            let u4 = phi.view((m, m), (m, m)).into_owned();
            let u2inv = u2.clone().try_inverse().ok_or_else(|| {
                Error::Precondition(format!("conjugate point inside piece {i}"))
            })?;
            let blk = {
                let mut b = Mat::zeros(2 * m, 2 * m);
                b.view_mut((0, 0), (m, m)).copy_from(&(&u2inv * &u1));
                b.view_mut((0, m), (m, m)).copy_from(&(-&u2inv));
                b.view_mut((m, 0), (m, m))
                    .copy_from(&(&u3 - &u4 * &u2inv * &u1));
                b.view_mut((m, m), (m, m)).copy_from(&(&u4 * &u2inv));
                (&b + b.transpose()) * 0.5
            };
            // x_i = E_i, x_{i+1} = E_{i+1} or A E_0
            let mut emb = Mat::zeros(2 * m, n);
            emb.view_mut((0, i * m), (m, m))
                .copy_from(&Mat::identity(m, m));
            if i + 1 == k {
                emb.view_mut((m, 0), (m, m)).copy_from(a);
            } else {
                emb.view_mut((m, (i + 1) * m), (m, m))
                    .copy_from(&Mat::identity(m, m));
            }
            q += emb.transpose() * blk * &emb;
            if i == 0 {
                first = Some((u1, u2inv));
            }
            flows.push(phi);
        }
        let q = (&q + q.transpose()) * 0.5;
        let p = delta(&a.transpose()) * total;
        let eig = SymmetricEigen::new(q.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[x].partial_cmp(&eig.eigenvalues[y]).unwrap());
        let evals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let cols: Vec<Vector> = order
            .iter()
            .map(|&i| normalize_sign(eig.eigenvectors.column(i).into_owned()))
            .collect();
        let evecs = Mat::from_columns(&cols);
        let (u1, u2inv) = first.expect("k ≥ 1");
        Ok(Reduced {
            m,
            k,
            p,
            evals,
            evecs,
            u1,
            u2inv,
            a: a.clone(),
            flows,
        })
    }

    /// x_i ↦ vertex i (vertex K is A x₀) as an m×Km matrix.
    fn select(&self, i: usize) -> Mat {
        let (m, k) = (self.m, self.k);
        let mut s = Mat::zeros(m, k * m);
        if i == k {
            s.view_mut((0, 0), (m, m)).copy_from(&self.a);
        } else {
            s.view_mut((0, i * m), (m, m)).copy_from(&Mat::identity(m, m));
        }
        s
    }

    /// Vertex values on the 2K grid of the broken Jacobi field through the
    /// K-grid vertices x; `fine` is the same data cut into 2K pieces.
    pub fn refine_map(&self, fine: &Reduced) -> Result<Mat> {
        let (m, k) = (self.m, self.k);
        if fine.k != 2 * k || fine.m != m {
            return Err(Error::InvalidInput("refine_map needs the same data on 2K pieces".into()));
        }
        let mut e = Mat::zeros(2 * k * m, k * m);
        for i in 0..k {
            let u = &self.flows[i];
            let u1 = u.view((0, 0), (m, m)).into_owned();
            let u2inv = u
                .view((0, m), (m, m))
                .into_owned()
                .try_inverse()
                .ok_or_else(|| Error::Precondition(format!("conjugate point inside piece {i}")))?;
            let f = &fine.flows[2 * i];
            let f1 = f.view((0, 0), (m, m)).into_owned();
            let f2 = f.view((0, m), (m, m)).into_owned();
            let (si, sn) = (self.select(i), self.select(i + 1));
            let v = &u2inv * (&sn - &u1 * &si);
            e.view_mut((2 * i * m, 0), (m, k * m)).copy_from(&si);
            e.view_mut(((2 * i + 1) * m, 0), (m, k * m))
                .copy_from(&(&f1 * &si + &f2 * v));
        }
        Ok(e)
    }

    pub fn scale(&self) -> f64 {
        self.evals
            .iter()
            .fold(0.0_f64, |a, x| a.max(x.abs()))
            .max(1e-300)
    }

    pub fn neg_count(&self) -> usize {
        self.evals.iter().filter(|&&x| x < 0.0).count()
    }

    pub fn negative(&self) -> Mat {
        let d = self.neg_count();
        self.evecs.columns(0, d).into_owned()
    }

    /// Distance of the negative spectrum from 0, relative to ‖Q‖.
    pub fn gap(&self) -> f64 {
        match self.neg_count() {
            0 => 1.0,
            d => -self.evals[d - 1] / self.scale(),
        }
    }

    /// Eigenpair of Q closest to 0.
    pub fn nearest_zero(&self) -> (f64, Vector) {
        let i = (0..self.evals.len())
            .min_by(|&a, &b| self.evals[a].abs().partial_cmp(&self.evals[b].abs()).unwrap())
            .expect("nonempty");
        (self.evals[i], self.evecs.column(i).into_owned())
    }

    /// (J(0), J′(0)) of the broken Jacobi field through the vertices x.
    pub fn initial_data(&self, x: &Vector) -> Vector {
        let m = self.m;
        let x0 = x.rows(0, m).into_owned();
        let x1 = x.rows(m, m).into_owned();
        let v0 = &self.u2inv * (x1 - &self.u1 * &x0);
        let mut out = Vector::zeros(2 * m);
        out.rows_mut(0, m).copy_from(&x0);
        out.rows_mut(m, m).copy_from(&v0);
        out
    }

    pub fn lines(&self) -> Vec<(f64, Vector)> {
        real_lines(&self.p)
    }
}

/// Real eigenvalues of P in (0, 1), ascending, with unit eigenvectors.
pub(crate) fn real_lines(p: &Mat) -> Vec<(f64, Vector)> {
    let n = p.nrows();
    let mut vals: Vec<f64> = p
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= REAL_EIG_IM && z.re > 0.0 && z.re < 1.0)
        .map(|z| z.re)
        .collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals.into_iter()
        .map(|l| {
            let svd = (p - Mat::identity(n, n) * l).svd(false, true);
            let vt = svd.v_t.expect("v_t requested");
            let i = (0..n)
                .min_by(|&a, &b| {
                    svd.singular_values[a]
                        .partial_cmp(&svd.singular_values[b])
                        .unwrap()
                })
                .expect("nonempty");
            (l, normalize_sign(vt.row(i).transpose()))
        })
        .collect()
}

/// Unit vector whose largest entry is positive.
pub(crate) fn normalize_sign(v: Vector) -> Vector {
    let v = &v / v.norm();
    let i = v.iamax();
    if v[i] < 0.0 {
        -v
    } else {
        v
    }
}

/// Right singular vector of P − Id for the smallest singular value.
pub(crate) fn fixed_direction(p: &Mat) -> (f64, Vector) {
    let n = p.nrows();
    let svd = (p - Mat::identity(n, n)).svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let i = (0..n)
        .min_by(|&a, &b| {
            svd.singular_values[a]
                .partial_cmp(&svd.singular_values[b])
                .unwrap()
        })
        .expect("nonempty");
    (svd.singular_values[i], vt.row(i).transpose())
}

/// Orthogonal polar factor U Vᵀ of a square matrix.
pub(crate) fn polar(m: &Mat) -> Mat {
    if m.nrows() == 0 {
        return m.clone();
    }
    let svd = m.clone().svd(true, true);
    svd.u.expect("u") * svd.v_t.expect("v_t")
}

pub(crate) fn min_singular(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    m.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

pub(crate) fn det_sign(m: &Mat) -> i8 {
    if m.nrows() == 0 || m.determinant() > 0.0 {
        1
    } else {
        -1
    }
}
