//! Orientability of negative bundles over loops of formal geodesics.
//!
//! The holonomy class is read off the Clifford lift of the twist loop. The
//! negative bundle itself is transported through the broken-Jacobi reduction
//! of the index form, plainly along loops of constant index, or through the
//! modified bundle N ⊕ 𝓔 along paths of a two-parameter deformation.

use std::f64::consts::PI;

use nalgebra::SymmetricEigen;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formal_geodesic::{exemplar_q, CurvatureProfile, FormalGeodesic};
use crate::linalg::{orthogonality_defect, Mat, Vector};
use crate::random::{gaussian, random_rotation, random_sym, rng};
use crate::tol::{LIFT_MAX_ANGLE, TOL_RANK, TRANSPORT_MIN_SV};

mod clifford;
pub mod deformation;
mod reduction;

pub use deformation::{
    build_variation, make_generic, modified_transport, orientation_pipeline, BoundaryCertificate,
    Bump, Deformation, GenericPerturbation, Nullhomotopy, PipelineReport,
};
pub use reduction::min_segments;

use clifford::{Multivector, MAX_M};
use reduction::{det_sign, min_singular, polar, Reduced};

/// Class of a loop in SO(m): the stabilized ℤ₂ sign, plus the integer
/// winding when m = 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinClass {
    pub m: usize,
    pub sign: i8,
    pub winding: Option<i64>,
    /// distance of the terminal lift from ±1
    pub lift_defect: f64,
    pub max_step_angle: f64,
}

impl SpinClass {
    pub fn is_trivial(&self) -> bool {
        self.sign == 1
    }

    /// Class of the loop s ↦ A_s^q.
    pub fn iterate(&self, q: u32) -> SpinClass {
        let sign = if self.sign == -1 && q % 2 == 1 { -1 } else { 1 };
        SpinClass {
            sign,
            winding: self.winding.map(|w| w * q as i64),
            ..self.clone()
        }
    }
}

/// Largest rotation angle of an orthogonal matrix.
pub fn rotation_angle(g: &Mat) -> f64 {
    let c = (g + g.transpose()) * 0.5;
    let lo = SymmetricEigen::new(c)
        .eigenvalues
        .iter()
        .copied()
        .fold(1.0_f64, f64::min);
    lo.clamp(-1.0, 1.0).acos()
}

/// Principal logarithm of a rotation with all angles below π.
pub fn rotation_log(g: &Mat) -> Result<Mat> {
    if orthogonality_defect(g) > 1e-9 || g.determinant() < 0.0 {
        return Err(Error::InvalidInput("not a rotation".into()));
    }
    let s = (g - g.transpose()) * 0.5;
    let eig = SymmetricEigen::new((g + g.transpose()) * 0.5);
    let gv = eig.eigenvalues.map(|c| {
        let c = c.clamp(-1.0, 1.0);
        if 1.0 - c < 1e-8 {
            1.0 + (1.0 - c) / 3.0
        } else {
            c.acos() / (1.0 - c * c).sqrt()
        }
    });
    if eig.eigenvalues.iter().any(|&c| c <= -1.0 + 1e-9) {
        return Err(Error::NotApplicable("rotation by π has no principal log".into()));
    }
    let gc = &eig.eigenvectors * Mat::from_diagonal(&gv) * eig.eigenvectors.transpose();
    let l = s * gc;
    Ok((&l - l.transpose()) * 0.5)
}

/// Lifts the closed sampled loop A₀, …, A_{S−1} (A_S = A₀) to Spin(m).
pub fn spin_lift_sign(loop_: &[Mat]) -> Result<SpinClass> {
    let s = loop_.len();
    if s == 0 {
        return Err(Error::InvalidInput("empty loop".into()));
    }
    let m = loop_[0].nrows();
    for a in loop_ {
        if a.nrows() != m || a.ncols() != m {
            return Err(Error::InvalidInput("loop samples differ in size".into()));
        }
        if orthogonality_defect(a) > 1e-9 || (m > 0 && a.determinant() < 0.0) {
            return Err(Error::InvalidInput("loop leaves SO(m)".into()));
        }
    }
    if m > MAX_M {
        return Err(Error::InvalidInput(format!("spin lift capped at m ≤ {MAX_M}")));
    }
    let mut max_step = 0.0_f64;
    let mut rotor = Multivector::scalar(m, 1.0);
    let mut turn = 0.0;
    for j in 0..s {
        let g = loop_[j].transpose() * &loop_[(j + 1) % s];
        let ang = if m >= 2 { rotation_angle(&g) } else { 0.0 };
        max_step = max_step.max(ang);
        if ang >= LIFT_MAX_ANGLE {
            return Err(Error::RefineSampling(format!(
                "step {j} rotates by {ang:.3} ≥ π/2"
            )));
        }
        if m < 2 {
            continue;
        }
        let l = rotation_log(&g)?;
        if m == 2 {
            turn += l[(1, 0)];
        }
        rotor = rotor.mul(&Multivector::bivector_of(&l).exp());
    }
    if m < 2 {
        return Ok(SpinClass {
            m,
            sign: 1,
            winding: None,
            lift_defect: 0.0,
            max_step_angle: 0.0,
        });
    }
    let sc = rotor.scalar_part();
    let lift_defect = rotor.non_scalar().max((sc.abs() - 1.0).abs());
    if lift_defect > 1e-6 {
        return Err(Error::ContractViolation(format!(
            "terminal lift is not ±1 (defect {lift_defect:.2e})"
        )));
    }
    let winding = if m == 2 {
        let w = turn / (2.0 * PI);
        if (w - w.round()).abs() > 1e-6 {
            return Err(Error::ContractViolation(format!("winding {w} not integral")));
        }
        Some(w.round() as i64)
    } else {
        None
    };
    Ok(SpinClass {
        m,
        sign: if sc > 0.0 { 1 } else { -1 },
        winding,
        lift_defect,
        max_step_angle: max_step,
    })
}

/// Closed loop of data sampled at s = j/S, j = 0, …, S−1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "LoopRepr")]
pub struct DataLoop {
    pub label: String,
    slices: Vec<FormalGeodesic>,
}

#[derive(Deserialize)]
struct LoopRepr {
    label: String,
    slices: Vec<FormalGeodesic>,
}

impl TryFrom<LoopRepr> for DataLoop {
    type Error = Error;
    fn try_from(r: LoopRepr) -> Result<Self> {
        DataLoop::new(r.slices, r.label)
    }
}

impl DataLoop {
    pub fn new(slices: Vec<FormalGeodesic>, label: impl Into<String>) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidInput("a loop needs samples".into()))?;
        let (m, len) = (first.m(), first.length());
        for g in &slices {
            if g.m() != m {
                return Err(Error::InvalidInput("samples differ in m".into()));
            }
            if (g.length() - len).abs() > 1e-12 * len {
                return Err(Error::InvalidInput("samples differ in T".into()));
            }
        }
        Ok(DataLoop {
            label: label.into(),
            slices,
        })
    }

    pub fn samples(&self) -> usize {
        self.slices.len()
    }

    pub fn m(&self) -> usize {
        self.slices[0].m()
    }

    pub fn length(&self) -> f64 {
        self.slices[0].length()
    }

    pub fn slices(&self) -> &[FormalGeodesic] {
        &self.slices
    }

    pub fn twists(&self) -> Vec<Mat> {
        self.slices.iter().map(|g| g.twist().clone()).collect()
    }

    /// Inserts midpoints: R linearly, A along the rotation geodesic.
    pub fn refine(&self) -> Result<DataLoop> {
        let s = self.samples();
        let mut out = Vec::with_capacity(2 * s);
        for j in 0..s {
            let (a, b) = (&self.slices[j], &self.slices[(j + 1) % s]);
            out.push(a.clone());
            let prof = a.profile().affine(0.5, 0.0).add_scaled(b.profile(), 0.5)?;
            let l = rotation_log(&(a.twist().transpose() * b.twist()))?;
            let twist = a.twist() * (l * 0.5).exp();
            out.push(FormalGeodesic::new(prof, twist, a.label())?);
        }
        DataLoop::new(out, self.label.clone())
    }

    pub fn spin_class(&self) -> Result<SpinClass> {
        spin_lift_sign(&self.twists())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PlainLoop,
    ModifiedBundle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    /// N and 𝓔 each gain a line
    Gain,
    /// N and 𝓔 each lose a line
    Loss,
    /// a line of 𝓔 becomes a line of N
    IntoNegative,
    /// a line of N becomes a line of 𝓔
    IntoReal,
    /// two real eigenvalues in (0,1) meet and leave the real axis, or the reverse
    Collision,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub tau: f64,
    pub kind: TransitionKind,
    /// change of dim N
    pub h_crossing: i8,
    /// change of dim 𝓔
    pub e_change: i8,
    /// width of the localizing bracket
    pub bracket: f64,
    /// |τ_N − τ_𝓔| between the two localized changes
    pub location_gap: f64,
    /// σ_min(P − Id) at the event
    pub fixed_residual: Option<f64>,
    /// angle between (X(0), X′(0)) of the H-kernel vector and the P-fixed vector
    pub pairing_angle: Option<f64>,
    pub fixed_vector: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DimRecord {
    pub tau: f64,
    pub n: usize,
    pub e: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TransitionLedger {
    pub s: f64,
    pub events: Vec<TransitionEvent>,
    pub dims: Vec<DimRecord>,
}

impl TransitionLedger {
    pub fn parity_constant(&self) -> bool {
        self.dims
            .windows(2)
            .all(|w| (w[0].n + w[0].e) % 2 == (w[1].n + w[1].e) % 2)
    }

    /// dim N + dim 𝓔 moves by 0 or ±2 at each event.
    pub fn steps_valid(&self) -> bool {
        self.dims.windows(2).all(|w| {
            let d = (w[1].n + w[1].e) as i64 - (w[0].n + w[0].e) as i64;
            d == 0 || d.abs() == 2
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshInfo {
    pub samples: usize,
    pub segments: usize,
    /// the sign was recomputed with samples and segments doubled
    pub doubled: bool,
    pub min_overlap: f64,
    pub min_gap: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrientationTransportResult {
    pub sign: i8,
    pub method: Method,
    pub index: usize,
    pub ledger: TransitionLedger,
    pub mesh: MeshInfo,
}

pub(crate) struct PlainRun {
    pub sign: i8,
    pub index: usize,
    pub min_overlap: f64,
    pub min_gap: f64,
}

/// Projection transport of an orthonormal basis from one subspace to the
/// next; returns the new basis and the smallest singular value of the
/// overlap.
pub(crate) fn project_onto(target: &Mat, basis: &Mat) -> (Mat, f64) {
    let m = target.transpose() * basis;
    let sv = min_singular(&m);
    (target * polar(&m), sv)
}

pub(crate) fn plain_loop(lp: &DataLoop, k: usize) -> Result<PlainRun> {
    let reds: Vec<Reduced> = lp
        .slices
        .par_iter()
        .map(|g| Reduced::new(g, k))
        .collect::<Result<_>>()?;
    let s = reds.len();
    let index = reds[0].neg_count();
    let mut min_gap = f64::INFINITY;
    for (j, r) in reds.iter().enumerate() {
        if r.neg_count() != index {
            return Err(Error::IndexNotConstant(format!(
                "index {} at s = 0 but {} at s = {}; use the modified transport",
                index,
                r.neg_count(),
                j as f64 / s as f64
            )));
        }
        let g = r.gap();
        min_gap = min_gap.min(g);
        if g < TOL_RANK {
            return Err(Error::IndexNotConstant(format!(
                "negative eigenvalue at {:.2e}·‖Q‖ from 0 at s = {}",
                g,
                j as f64 / s as f64
            )));
        }
    }
    let bases: Vec<Mat> = reds.iter().map(|r| r.negative()).collect();
    let mut e = bases[0].clone();
    let mut min_overlap = 1.0_f64;
    for j in 1..=s {
        let (next, sv) = project_onto(&bases[j % s], &e);
        min_overlap = min_overlap.min(sv);
        if sv < TRANSPORT_MIN_SV {
            return Err(Error::RefineSampling(format!(
                "projection overlap {sv:.3} between s = {} and s = {}",
                (j - 1) as f64 / s as f64,
                (j % s) as f64 / s as f64
            )));
        }
        e = next;
    }
    let sign = det_sign(&(bases[0].transpose() * &e));
    Ok(PlainRun {
        sign,
        index,
        min_overlap,
        min_gap,
    })
}

fn loop_segments(lp: &DataLoop) -> usize {
    lp.slices.iter().map(min_segments).max().unwrap_or(8)
}

/// Orientation of the negative bundle along a loop of constant index.
/// The sign is recomputed with the samples and the pieces doubled.
pub fn transport_negative_orientation(lp: &DataLoop) -> Result<OrientationTransportResult> {
    let k = loop_segments(lp);
    let coarse = plain_loop(lp, k)?;
    let fine = plain_loop(&lp.refine()?, 2 * k)?;
    if coarse.sign != fine.sign || coarse.index != fine.index {
        return Err(Error::RefineSampling(format!(
            "sign {} at S = {}, K = {k} but {} after doubling",
            coarse.sign,
            lp.samples(),
            fine.sign
        )));
    }
    Ok(OrientationTransportResult {
        sign: coarse.sign,
        method: Method::PlainLoop,
        index: coarse.index,
        ledger: TransitionLedger {
            s: 0.0,
            events: vec![],
            dims: vec![],
        },
        mesh: MeshInfo {
            samples: lp.samples(),
            segments: k,
            doubled: true,
            min_overlap: coarse.min_overlap.min(fine.min_overlap),
            min_gap: coarse.min_gap.min(fine.min_gap),
            steps: lp.samples(),
        },
    })
}

/// Predicted class of the q-fold iterate loop, whose holonomy is A^q.
pub fn iterate_orientability_class(lp: &DataLoop, q: u32) -> Result<SpinClass> {
    Ok(lp.spin_class()?.iterate(q))
}

pub fn rot2(t: f64) -> Mat {
    let (s, c) = t.sin_cos();
    Mat::from_row_slice(2, 2, &[c, -s, s, c])
}

/// The loop (Q, Rot_{−2πs}) whose Poincaré maps diag(Rot, Rot)·B have
/// constant spectrum {±i}.
pub fn exemplar_nonorientable(samples: usize) -> Result<DataLoop> {
    if samples < 5 {
        return Err(Error::InvalidInput("at least 5 samples needed".into()));
    }
    let q = exemplar_q();
    let slices = (0..samples)
        .map(|j| {
            let s = 2.0 * PI * j as f64 / samples as f64;
            FormalGeodesic::new(q.profile().clone(), rot2(-s), format!("Q_{j}"))
        })
        .collect::<Result<_>>()?;
    DataLoop::new(slices, "exemplar (Q, Rot_-s)")
}

/// Closed-form initial data of the W_s line: J(0) = (sin(−s/2), cos(−s/2)),
/// J′(0) = (cos(−s/2), sin(−s/2)), s ∈ [0, 2π].
pub fn exemplar_w_line(s: f64) -> (Vector, Vector) {
    let h = -s / 2.0;
    (
        Vector::from_vec(vec![h.sin(), h.cos()]),
        Vector::from_vec(vec![h.cos(), h.sin()]),
    )
}

/// The negative direction of J ↦ ⟨Rot_s J′(2π) − J′(0), J(0)⟩ on the
/// Q-Jacobi fields with J(0) = Rot_s J(2π), as (J(0), J′(0)).
pub fn exemplar_w_exact(s: f64) -> Result<(Vector, Vector)> {
    let q = exemplar_q();
    let phi = reduction::segment_flow(q.profile(), 0.0, q.length())?;
    let f = |i: usize, j: usize| phi.view((2 * i, 2 * j), (2, 2)).into_owned();
    let (p11, p12, p21, p22) = (f(0, 0), f(0, 1), f(1, 0), f(1, 1));
    let p12inv = p12
        .try_inverse()
        .ok_or_else(|| Error::NotApplicable("Φ₁₂ singular".into()))?;
    let y = &p12inv * (rot2(-s) - &p11);
    let form = rot2(s) * (&p21 + &p22 * &y) - &y;
    let form = (&form + form.transpose()) * 0.5;
    let eig = SymmetricEigen::new(form);
    let (i, lo) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |a, (i, &v)| if v < a.1 { (i, v) } else { a });
    if lo >= 0.0 {
        return Err(Error::ContractViolation("W form has no negative direction".into()));
    }
    let x = eig.eigenvectors.column(i).into_owned();
    let v = &y * &x;
    Ok((x, v))
}

/// Scalar profile r(t)·Id on [0, 2π] in four random constant pieces with
/// Floquet angle β, |cos β| ≤ 0.8.
fn elliptic_scalar(r: &mut impl rand::Rng, m: usize) -> CurvatureProfile {
    let ts = [0.0, 0.4 * PI, PI, 1.5 * PI, 2.0 * PI];
    loop {
        let vals: Vec<f64> = (0..4).map(|_| r.gen_range(0.2..2.5)).collect();
        let mut phi = Mat::identity(2, 2);
        for (i, &v) in vals.iter().enumerate() {
            let h = ts[i + 1] - ts[i];
            let w = v.sqrt();
            let step = Mat::from_row_slice(
                2,
                2,
                &[(w * h).cos(), (w * h).sin() / w, -w * (w * h).sin(), (w * h).cos()],
            );
            phi = step * phi;
        }
        if (phi.trace() / 2.0).abs() <= 0.8 {
            let mats: Vec<Mat> = vals
                .iter()
                .map(|&v| Mat::identity(m, m) * v)
                .collect();
            return CurvatureProfile::piecewise_constant(&ts, &mats).expect("valid profile");
        }
    }
}

fn rot_plane(m: usize, i: usize, j: usize, t: f64) -> Mat {
    let mut g = Mat::identity(m, m);
    let (s, c) = t.sin_cos();
    g[(i, i)] = c;
    g[(j, j)] = c;
    g[(i, j)] = -s;
    g[(j, i)] = s;
    g
}

/// Random loop with scalar elliptic curvature and holonomy
/// C·Rot_{01}(2π·turns·s)·Rot_{12}(π)·Cᵀ (m ≥ 3). Every twist is a
/// half-turn, so the Poincaré spectrum and the index are constant, while
/// the holonomy class is turns mod 2.
pub fn twisted_scalar_loop(seed: u64, m: usize, turns: i64, samples: usize) -> Result<DataLoop> {
    if m < 3 {
        return Err(Error::InvalidInput("needs m ≥ 3".into()));
    }
    if samples as f64 <= 4.0 * turns.unsigned_abs() as f64 {
        return Err(Error::InvalidInput("too few samples for the winding".into()));
    }
    let mut r = rng(seed);
    let prof = elliptic_scalar(&mut r, m);
    let c = random_rotation(&mut r, m);
    let flip = rot_plane(m, 1, 2, PI);
    let slices = (0..samples)
        .map(|j| {
            let s = j as f64 / samples as f64;
            let a = &c * rot_plane(m, 0, 1, 2.0 * PI * turns as f64 * s) * &flip * c.transpose();
            FormalGeodesic::new(prof.clone(), a, format!("slice {j}"))
        })
        .collect::<Result<_>>()?;
    DataLoop::new(slices, format!("twisted scalar loop seed={seed} m={m} turns={turns}"))
}

/// Random loop (C_s R C_sᵀ + small s-dependent term, C_s A C_sᵀ) with
/// C_s = exp(2πs·G) a closed one-parameter subgroup. The holonomy loop is
/// nullhomotopic and the twist angles stay below 1.
pub fn conjugation_loop(seed: u64, m: usize, samples: usize) -> Result<DataLoop> {
    if m < 2 {
        return Err(Error::InvalidInput("needs m ≥ 2".into()));
    }
    let mut r = rng(seed);
    let ts = [0.0, 0.7 * PI, 1.3 * PI, 2.0 * PI];
    for _attempt in 0..200 {
        let base: Vec<Mat> = (0..3)
            .map(|_| {
                let d = Mat::from_diagonal(&Vector::from_fn(m, |i, _| {
                    let w = 0.6 + 0.45 * i as f64 + 0.1 * gaussian(&mut r);
                    w * w
                }));
                d + random_sym(&mut r, m) * 0.05
            })
            .collect();
        let wig: Vec<Mat> = (0..2).map(|_| random_sym(&mut r, m) * 0.03).collect();
        let g = {
            let x = crate::random::gaussian_matrix(&mut r, m, m);
            let l = (&x - x.transpose()) * 0.5;
            let l = &l / l.norm();
            l * r.gen_range(0.4..0.9)
        };
        let a0 = g.exp();
        let cc = random_rotation(&mut r, m);
        let gen = {
            let mut e = Mat::zeros(m, m);
            e[(1, 0)] = 2.0 * PI;
            e[(0, 1)] = -2.0 * PI;
            &cc * e * cc.transpose()
        };
        let mut slices = Vec::with_capacity(samples);
        let mut ok = true;
        for j in 0..samples {
            let s = j as f64 / samples as f64;
            let cs = (&gen * s).exp();
            let (sn, cs_) = (2.0 * PI * s).sin_cos();
            let vals: Vec<Mat> = base
                .iter()
                .map(|b| {
                    let v = b + &wig[0] * cs_ + &wig[1] * sn;
                    &cs * v * cs.transpose()
                })
                .collect();
            let prof = CurvatureProfile::piecewise_constant(&ts, &vals)?;
            let a = &cs * &a0 * cs.transpose();
            let fg = FormalGeodesic::new(prof, a, format!("slice {j}"))?;
            let red = Reduced::new(&fg, min_segments(&fg))?;
            let far = red
                .p
                .complex_eigenvalues()
                .iter()
                .map(|z| z.im.abs())
                .fold(f64::INFINITY, f64::min);
            let unit = red
                .p
                .complex_eigenvalues()
                .iter()
                .all(|z| (z.norm() - 1.0).abs() < 1e-6);
            if far < 0.05 || !unit {
                ok = false;
                break;
            }
            slices.push(fg);
        }
        if ok {
            return DataLoop::new(slices, format!("conjugation loop seed={seed} m={m}"));
        }
    }
    Err(Error::NotApplicable("no elliptic conjugation loop found".into()))
}
