//! The deformation of a loop with nullhomotopic holonomy to s-independent
//! data, its generic perturbation, and transport of N ⊕ 𝓔 along τ-paths.
//!
//! Orientations of N ⊕ 𝓔 are kept as σ·[n, e] with n an orthonormal basis of
//! N ⊂ ℝ^{Km} and e the unit eigenvectors of the real eigenvalues of P in
//! (0, 1), listed in ascending order of eigenvalue.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::reduction::{det_sign, fixed_direction, min_singular, segment_flow, Reduced};
use super::{
    min_segments, plain_loop, project_onto, rotation_angle, rotation_log, DataLoop, DimRecord,
    MeshInfo, Method, OrientationTransportResult, SpinClass, TransitionEvent, TransitionKind,
    TransitionLedger,
};
use crate::error::{Error, Result};
use crate::formal_geodesic::{CurvatureProfile, FormalGeodesic, RealizationFamily};
use crate::linalg::{delta, max_abs, serde_rows_vec, Mat, Vector};
use crate::random::{gaussian, rng};
use crate::symplectic_core::{genericity_classify, Stratum, SymplecticMatrix};
use crate::tol::{
    BOUNDARY_REAL_DIST, BOUNDARY_TAU, GENERIC_MAX_PERTURB, GENERIC_MAX_ROUNDS, PAIRING_ANGLE,
    PAIRING_EIG, TRANSITION_LOC, TRANSITION_SAME_PLACE, TRANSPORT_MIN_SV,
};

const PATH_CELLS: usize = 100;
const SCAN_CELLS: usize = 100;
const MAX_DEPTH: usize = 60;
const LINE_MIN_OVERLAP: f64 = 0.5;
const TRIG_S: usize = 3;
const TRIG_T: usize = 3;

fn flat(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

fn smoothstep(x: f64, lo: f64, hi: f64) -> f64 {
    let u = (x - lo) / (hi - lo);
    let (a, b) = (flat(u), flat(1.0 - u));
    a / (a + b)
}

/// C^∞ step: 0 on [0, lo], 1 on [hi, 1], nondecreasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Bump {
    fn default() -> Self {
        Bump { lo: 0.1, hi: 0.9 }
    }
}

impl Bump {
    pub fn eval(&self, tau: f64) -> f64 {
        smoothstep(tau, self.lo, self.hi)
    }
}

/// H(u, s) = exp((1 − u)·log A_s), defined when every twist rotates by
/// less than π.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nullhomotopy {
    Logarithmic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryCertificate {
    pub tau_lo: f64,
    pub tau_hi: f64,
    /// min |Im λ| over the Poincaré spectra at τ_lo and τ_hi
    pub real_distance_lo: f64,
    pub real_distance_hi: f64,
    /// P̂ at τ_lo against ΔA⁻¹ Φ_block ΔA P_s
    pub closed_form_defect: f64,
    /// P̂ at τ = 0 against P_s
    pub base_defect: f64,
}

/// Coefficient fields a_i(s, τ) on the members of a realization family
/// around the pad block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenericPerturbation {
    pub family: RealizationFamily,
    pub epsilon: f64,
    pub coefficients: Vec<Vec<f64>>,
    /// max ‖P_perturbed − P‖∞ over the scan grid
    pub poincare_perturbation: f64,
    pub rounds: usize,
    pub seed: u64,
}

impl GenericPerturbation {
    fn window(tau: f64) -> f64 {
        smoothstep(tau, 0.02, 0.1) * (1.0 - smoothstep(tau, 0.9, 0.98))
    }

    pub fn coeffs_at(&self, s: f64, tau: f64) -> Vec<f64> {
        let w = self.epsilon * Self::window(tau);
        self.coefficients
            .iter()
            .map(|c| {
                if w == 0.0 {
                    return 0.0;
                }
                let mut acc = 0.0;
                for p in 0..TRIG_S {
                    let (sn, cs) = (2.0 * PI * p as f64 * s).sin_cos();
                    for q in 0..TRIG_T {
                        let t = ((q + 1) as f64 * PI * tau).sin();
                        let base = 2 * (p * TRIG_T + q);
                        acc += (c[base] * cs + c[base + 1] * sn) * t;
                    }
                }
                w * acc
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Deformation {
    pub base: DataLoop,
    pub bump: Bump,
    pub homotopy: Nullhomotopy,
    #[serde(with = "serde_rows_vec")]
    logs: Vec<Mat>,
    pad: FormalGeodesic,
    pub segments: usize,
    pub boundary: BoundaryCertificate,
    pub generic: Option<GenericPerturbation>,
}

fn pad_block(m: usize) -> Result<FormalGeodesic> {
    let r = Mat::from_diagonal(&Vector::from_fn(m, |i, _| ((i + 1) * (i + 1)) as f64));
    FormalGeodesic::constant(&r, &Mat::identity(m, m), 2.0 * PI, "pad")
}

fn poincare_only(fg: &FormalGeodesic) -> Result<Mat> {
    Ok(delta(&fg.twist().transpose()) * segment_flow(fg.profile(), 0.0, fg.length())?)
}

fn min_imag(p: &Mat) -> f64 {
    p.complex_eigenvalues()
        .iter()
        .map(|z| z.im.abs())
        .fold(f64::INFINITY, f64::min)
}

impl Deformation {
    pub fn samples(&self) -> usize {
        self.base.samples()
    }

    pub fn s_of(&self, j: usize) -> f64 {
        j as f64 / self.samples() as f64
    }

    pub fn tau_range(&self) -> (f64, f64) {
        (self.boundary.tau_lo, self.boundary.tau_hi)
    }

    /// (((1−φ)R_s + φId) ⋆ (4−3τ)Id ⋆ pad, H(φ(τ), s)) at s = j/S.
    pub fn data_at(&self, j: usize, tau: f64) -> Result<FormalGeodesic> {
        let m = self.base.m();
        let phi = self.bump.eval(tau);
        let base = &self.base.slices()[j];
        let first = base.profile().affine(1.0 - phi, phi);
        let block = CurvatureProfile::constant(&(Mat::identity(m, m) * (4.0 - 3.0 * tau)), 2.0 * PI)?;
        let pad = match &self.generic {
            Some(g) if g.epsilon > 0.0 => g.family.profile_at(&g.coeffs_at(self.s_of(j), tau))?,
            _ => self.pad.profile().clone(),
        };
        let prof = CurvatureProfile::star(&[&first, &block, &pad])?;
        let twist = if phi == 0.0 {
            base.twist().clone()
        } else if phi == 1.0 {
            Mat::identity(m, m)
        } else {
            (&self.logs[j] * (1.0 - phi)).exp()
        };
        FormalGeodesic::new(prof, twist, format!("s={:.4} τ={tau:.6}", self.s_of(j)))
    }
}

/// Builds the deformation and certifies the boundary behaviour.
pub fn build_variation(lp: &DataLoop, homotopy: Nullhomotopy, bump: Bump) -> Result<Deformation> {
    if !(0.0 < bump.lo && bump.lo < bump.hi && bump.hi < 1.0) {
        return Err(Error::InvalidInput("bump needs 0 < lo < hi < 1".into()));
    }
    let spin: SpinClass = lp.spin_class()?;
    if !spin.is_trivial() {
        return Err(Error::NotApplicable(
            "holonomy loop is not nullhomotopic; the negative bundle is predicted non-orientable"
                .into(),
        ));
    }
    let Nullhomotopy::Logarithmic = homotopy;
    let mut logs = Vec::with_capacity(lp.samples());
    for (j, a) in lp.twists().iter().enumerate() {
        let ang = rotation_angle(a);
        if ang >= PI - 1e-6 {
            return Err(Error::NotApplicable(format!(
                "twist at sample {j} rotates by {ang:.4}; the logarithmic nullhomotopy needs angles below π"
            )));
        }
        logs.push(rotation_log(a)?);
    }
    let m = lp.m();
    let mut def = Deformation {
        base: lp.clone(),
        bump,
        homotopy,
        logs,
        pad: pad_block(m)?,
        segments: 0,
        boundary: BoundaryCertificate {
            tau_lo: BOUNDARY_TAU,
            tau_hi: 1.0 - BOUNDARY_TAU,
            real_distance_lo: 0.0,
            real_distance_hi: 0.0,
            closed_form_defect: 0.0,
            base_defect: 0.0,
        },
        generic: None,
    };
    let mut k = 0;
    for j in 0..lp.samples() {
        for tau in [0.0, 0.5, 1.0] {
            k = k.max(min_segments(&def.data_at(j, tau)?));
        }
    }
    def.segments = (k as f64 * 1.1).ceil() as usize;

    let (lo, hi) = def.tau_range();
    let theta = 2.0 * PI * (4.0 - 3.0 * lo).sqrt();
    let w = (4.0 - 3.0 * lo).sqrt();
    let rows: Vec<(f64, f64, f64, f64)> = (0..lp.samples())
        .into_par_iter()
        .map(|j| -> Result<(f64, f64, f64, f64)> {
            let base = &lp.slices()[j];
            let ps = poincare_only(base)?;
            let p0 = poincare_only(&def.data_at(j, 0.0)?)?;
            let plo = poincare_only(&def.data_at(j, lo)?)?;
            let phi = poincare_only(&def.data_at(j, hi)?)?;
            let dd = Mat::from_diagonal(&Vector::from_fn(2 * m, |i, _| if i < m { w } else { 1.0 }));
            let ddinv = dd.clone().try_inverse().expect("diagonal");
            let mut rot = Mat::identity(2 * m, 2 * m) * theta.cos();
            for i in 0..m {
                rot[(i, m + i)] = theta.sin();
                rot[(m + i, i)] = -theta.sin();
            }
            let da = delta(base.twist());
            let closed = delta(&base.twist().transpose()) * ddinv * rot * dd * da * &ps;
            Ok((
                max_abs(&(&plo - closed)),
                max_abs(&(&p0 - &ps)),
                min_imag(&plo),
                min_imag(&phi),
            ))
        })
        .collect::<Result<_>>()?;
    let b = &mut def.boundary;
    b.closed_form_defect = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    b.base_defect = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    b.real_distance_lo = rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    b.real_distance_hi = rows.iter().map(|r| r.3).fold(f64::INFINITY, f64::min);
    if b.closed_form_defect > 1e-8 || b.base_defect > 1e-8 {
        return Err(Error::ContractViolation(format!(
            "boundary Poincaré maps off their closed forms ({:.2e}, {:.2e})",
            b.closed_form_defect, b.base_defect
        )));
    }
    if b.real_distance_lo <= BOUNDARY_REAL_DIST || b.real_distance_hi <= BOUNDARY_REAL_DIST {
        return Err(Error::NotApplicable(format!(
            "Poincaré eigenvalue within {:.1e} of the reals near the boundary",
            b.real_distance_lo.min(b.real_distance_hi)
        )));
    }
    Ok(def)
}

#[derive(Clone)]
pub(crate) struct Slice {
    pub tau: f64,
    pub red: Reduced,
    pub lines: Vec<(f64, Vector)>,
}

impl Slice {
    fn new(fg: &FormalGeodesic, k: usize, tau: f64) -> Result<Self> {
        let red = Reduced::new(fg, k)?;
        let lines = red.lines();
        Ok(Slice { tau, red, lines })
    }

    pub fn counts(&self) -> (usize, usize) {
        (self.red.neg_count(), self.lines.len())
    }
}

#[derive(Debug, Clone)]
pub(crate) struct State {
    pub n: Mat,
    pub e: Vec<Vector>,
    pub sigma: i8,
}

impl State {
    fn reference(sl: &Slice) -> State {
        State {
            n: sl.red.negative(),
            e: sl.lines.iter().map(|l| l.1.clone()).collect(),
            sigma: 1,
        }
    }

    /// Sign of this orientation against the reference at `sl`.
    fn relative_to(&self, sl: &Slice) -> i8 {
        let mut s = self.sigma * det_sign(&(sl.red.negative().transpose() * &self.n));
        for (a, b) in self.e.iter().zip(&sl.lines) {
            if a.dot(&b.1) < 0.0 {
                s = -s;
            }
        }
        s
    }
}

type Family<'a> = dyn Fn(f64) -> Result<FormalGeodesic> + Sync + 'a;

pub(crate) struct PathTransport<'a> {
    family: &'a Family<'a>,
    k: usize,
    dir: f64,
    pub ledger: TransitionLedger,
    pub min_overlap: f64,
    pub evals: usize,
    first: Option<Slice>,
}

fn unit(v: &Vector) -> Vector {
    v / v.norm()
}

fn sgn(x: f64) -> i8 {
    if x < 0.0 {
        -1
    } else {
        1
    }
}

fn parity(k: usize) -> i8 {
    if k % 2 == 1 {
        -1
    } else {
        1
    }
}

impl<'a> PathTransport<'a> {
    pub fn new(family: &'a Family<'a>, k: usize, s: f64) -> Self {
        PathTransport {
            family,
            k,
            dir: 1.0,
            ledger: TransitionLedger {
                s,
                events: vec![],
                dims: vec![],
            },
            min_overlap: 1.0,
            evals: 0,
            first: None,
        }
    }

    fn slice(&mut self, tau: f64) -> Result<Slice> {
        self.evals += 1;
        Slice::new(&(self.family)(tau)?, self.k, tau)
    }

    fn past(&self, x: f64, y: f64) -> bool {
        (x - y) * self.dir > 0.0
    }

    /// Lines of `st` continued onto `lines` by rank, skipping the indices in
    /// `skip_old` and `skip_new`.
    fn continue_lines(
        &mut self,
        old: &[Vector],
        lines: &[(f64, Vector)],
        skip_old: &[usize],
        skip_new: &[usize],
    ) -> Option<Vec<(usize, Vector)>> {
        let olds: Vec<&Vector> = old
            .iter()
            .enumerate()
            .filter(|(i, _)| !skip_old.contains(i))
            .map(|x| x.1)
            .collect();
        let news: Vec<usize> = (0..lines.len()).filter(|i| !skip_new.contains(i)).collect();
        if olds.len() != news.len() {
            return None;
        }
        let mut out = Vec::with_capacity(news.len());
        for (o, &ni) in olds.iter().zip(&news) {
            let v = &lines[ni].1;
            let d = o.dot(v);
            if d.abs() < LINE_MIN_OVERLAP {
                return None;
            }
            self.min_overlap = self.min_overlap.min(d.abs());
            out.push((ni, if d < 0.0 { -v } else { v.clone() }));
        }
        Some(out)
    }

    fn continue_state(&mut self, st: &State, sb: &Slice) -> Option<State> {
        let nb = sb.red.negative();
        let (n, sv) = project_onto(&nb, &st.n);
        if sv < TRANSPORT_MIN_SV {
            return None;
        }
        self.min_overlap = self.min_overlap.min(sv);
        let e = self.continue_lines(&st.e, &sb.lines, &[], &[])?;
        Some(State {
            n,
            e: e.into_iter().map(|x| x.1).collect(),
            sigma: st.sigma,
        })
    }

    /// Transports from `sa` to `sb`; returns the state and the slice where it
    /// sits, which lies beyond `sb` when an event bracket had to be widened.
    fn go(&mut self, st: State, sa: &Slice, sb: &Slice, depth: usize) -> Result<(State, Slice)> {
        if sa.counts() == sb.counts() {
            if let Some(next) = self.continue_state(&st, sb) {
                return Ok((next, sb.clone()));
            }
        } else if (sb.tau - sa.tau).abs() <= TRANSITION_LOC {
            return self.event(st, sa, sb);
        }
        if depth > MAX_DEPTH {
            return Err(Error::RefineSampling(format!(
                "transport stalls near τ = {:.12}",
                sa.tau
            )));
        }
        let mid = self.slice(0.5 * (sa.tau + sb.tau))?;
        let (s1, at) = self.go(st, sa, &mid, depth + 1)?;
        if !self.past(sb.tau, at.tau) {
            return Ok((s1, at));
        }
        self.go(s1, &at, sb, depth + 1)
    }

    /// Finds the first count change in (from, to] by bisection.
    fn locate(&mut self, from: &Slice, to: &Slice) -> Result<Option<(Slice, Slice)>> {
        if from.counts() == to.counts() {
            return Ok(None);
        }
        let (mut a, mut b) = (from.clone(), to.clone());
        while (b.tau - a.tau).abs() > TRANSITION_LOC {
            let mid = self.slice(0.5 * (a.tau + b.tau))?;
            if mid.counts() == a.counts() {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(Some((a, b)))
    }

    fn event(&mut self, st: State, before: &Slice, after: &Slice) -> Result<(State, Slice)> {
        let (n0, e0) = before.counts();
        let (n1, e1) = after.counts();
        let (dn, de) = (n1 as i64 - n0 as i64, e1 as i64 - e0 as i64);
        let paired = (dn.abs() == 1 && de.abs() == 1) || (dn == 0 && de.abs() == 2);
        if paired {
            return self.apply(st, before, after, 0.0);
        }
        if dn.abs() + de.abs() == 1 {
            // the partner change may sit just beyond the bracket
            let probe_tau = after.tau + self.dir * TRANSITION_SAME_PLACE;
            let probe = self.slice(probe_tau)?;
            if let Some((_, b2)) = self.locate(after, &probe)? {
                let (n2, e2) = b2.counts();
                let (dn2, de2) = (n2 as i64 - n0 as i64, e2 as i64 - e0 as i64);
                if dn2.abs() == 1 && de2.abs() == 1 {
                    let gap = (b2.tau - after.tau).abs();
                    return self.apply(st, before, &b2, gap);
                }
            }
            return Err(Error::ModelViolation(format!(
                "unpaired transition at τ = {:.12}: ΔN = {dn}, Δ𝓔 = {de}",
                before.tau
            )));
        }
        Err(Error::Precondition(format!(
            "non-simple transition at τ = {:.12}: ΔN = {dn}, Δ𝓔 = {de}; apply make_generic",
            before.tau
        )))
    }

    fn pairing(&self, sl: &Slice) -> Result<(Vector, Vector, f64, f64)> {
        let (_, u) = sl.red.nearest_zero();
        let (res, f) = fixed_direction(&sl.red.p);
        if res > PAIRING_EIG {
            return Err(Error::ModelViolation(format!(
                "H crosses 0 at τ = {:.12} but σ_min(P − Id) = {res:.2e}",
                sl.tau
            )));
        }
        let phi = unit(&sl.red.initial_data(&u));
        let ang = phi.dot(&f).abs().min(1.0).acos();
        if ang > PAIRING_ANGLE {
            return Err(Error::ModelViolation(format!(
                "kernel vector and fixed vector differ by {ang:.2e} rad at τ = {:.12}",
                sl.tau
            )));
        }
        Ok((u, phi, res, ang))
    }

    fn apply(&mut self, st: State, before: &Slice, after: &Slice, gap: f64) -> Result<(State, Slice)> {
        let (n0, b) = before.counts();
        let (n1, e1) = after.counts();
        let (dn, de) = (n1 as i64 - n0 as i64, e1 as i64 - b as i64);
        let fail = || Error::RefineSampling(format!("lines lost across the event at τ = {:.12}", before.tau));
        let mut ev = TransitionEvent {
            tau: 0.5 * (before.tau + after.tau),
            kind: TransitionKind::Collision,
            h_crossing: dn as i8,
            e_change: de as i8,
            bracket: (after.tau - before.tau).abs(),
            location_gap: gap,
            fixed_residual: None,
            pairing_angle: None,
            fixed_vector: vec![],
        };
        let nb = after.red.negative();
        let next = match (dn, de) {
            (1, 1) => {
                ev.kind = TransitionKind::Gain;
                let (u, phi, res, ang) = self.pairing(after)?;
                ev.fixed_residual = Some(res);
                ev.pairing_angle = Some(ang);
                ev.fixed_vector = phi.iter().copied().collect();
                let cand = st.n.clone().insert_column(st.n.ncols(), 0.0);
                let mut cand = cand;
                cand.set_column(st.n.ncols(), &u);
                let (n, sv) = project_onto(&nb, &cand);
                if sv < TRANSPORT_MIN_SV {
                    return Err(fail());
                }
                let mut e: Vec<Vector> = self
                    .continue_lines(&st.e, &after.lines, &[], &[b])
                    .ok_or_else(fail)?
                    .into_iter()
                    .map(|x| x.1)
                    .collect();
                let v = &after.lines[b].1;
                e.push(if v.dot(&phi) < 0.0 { -v } else { v.clone() });
                State {
                    n,
                    e,
                    sigma: st.sigma * parity(b),
                }
            }
            (-1, -1) | (-1, 1) => {
                let (u, phi, res, ang) = self.pairing(before)?;
                ev.fixed_residual = Some(res);
                ev.pairing_angle = Some(ang);
                ev.fixed_vector = phi.iter().copied().collect();
                let mut m = Mat::zeros(n0, n0);
                m.columns_mut(0, n1).copy_from(&(st.n.transpose() * &nb));
                m.set_column(n1, &(st.n.transpose() * &u));
                if min_singular(&m) < TRANSPORT_MIN_SV {
                    return Err(fail());
                }
                let d_n = det_sign(&m);
                if de == -1 {
                    ev.kind = TransitionKind::Loss;
                    let s_e = sgn(st.e[b - 1].dot(&phi));
                    let e = self
                        .continue_lines(&st.e, &after.lines, &[b - 1], &[])
                        .ok_or_else(fail)?
                        .into_iter()
                        .map(|x| x.1)
                        .collect();
                    State {
                        n: nb,
                        e,
                        sigma: st.sigma * d_n * s_e * parity(b - 1),
                    }
                } else {
                    ev.kind = TransitionKind::IntoReal;
                    let mut e: Vec<Vector> = self
                        .continue_lines(&st.e, &after.lines, &[], &[b])
                        .ok_or_else(fail)?
                        .into_iter()
                        .map(|x| x.1)
                        .collect();
                    let v = &after.lines[b].1;
                    e.push(if v.dot(&phi) < 0.0 { -v } else { v.clone() });
                    State {
                        n: nb,
                        e,
                        sigma: st.sigma * d_n * parity(b),
                    }
                }
            }
            (1, -1) => {
                ev.kind = TransitionKind::IntoNegative;
                let (u, phi, res, ang) = self.pairing(after)?;
                ev.fixed_residual = Some(res);
                ev.pairing_angle = Some(ang);
                ev.fixed_vector = phi.iter().copied().collect();
                let x = if phi.dot(&st.e[b - 1]) < 0.0 { -u } else { u };
                let mut cand = st.n.clone().insert_column(st.n.ncols(), 0.0);
                cand.set_column(st.n.ncols(), &x);
                let (n, sv) = project_onto(&nb, &cand);
                if sv < TRANSPORT_MIN_SV {
                    return Err(fail());
                }
                let e = self
                    .continue_lines(&st.e, &after.lines, &[b - 1], &[])
                    .ok_or_else(fail)?
                    .into_iter()
                    .map(|x| x.1)
                    .collect();
                State {
                    n,
                    e,
                    sigma: st.sigma * parity(b - 1),
                }
            }
            (0, -2) | (0, 2) => {
                ev.kind = TransitionKind::Collision;
                let (res, _) = fixed_direction(&before.red.p);
                ev.fixed_residual = Some(res);
                let (n, sv) = project_onto(&nb, &st.n);
                if sv < TRANSPORT_MIN_SV {
                    return Err(fail());
                }
                let closest = |ls: &[(f64, Vector)]| {
                    (0..ls.len() - 1)
                        .min_by(|&i, &j| {
                            (ls[i + 1].0 - ls[i].0)
                                .partial_cmp(&(ls[j + 1].0 - ls[j].0))
                                .unwrap()
                        })
                        .expect("two lines")
                };
                if de == -2 {
                    let i = closest(&before.lines);
                    let s_pair = sgn(st.e[i].dot(&st.e[i + 1]));
                    let e = self
                        .continue_lines(&st.e, &after.lines, &[i, i + 1], &[])
                        .ok_or_else(fail)?
                        .into_iter()
                        .map(|x| x.1)
                        .collect();
                    State {
                        n,
                        e,
                        sigma: st.sigma * s_pair,
                    }
                } else {
                    let i = closest(&after.lines);
                    let kept = self
                        .continue_lines(&st.e, &after.lines, &[], &[i, i + 1])
                        .ok_or_else(fail)?;
                    let v0 = after.lines[i].1.clone();
                    let v1 = &after.lines[i + 1].1;
                    let v1 = if v1.dot(&v0) < 0.0 { -v1 } else { v1.clone() };
                    let mut e: Vec<(usize, Vector)> = kept;
                    e.push((i, v0));
                    e.push((i + 1, v1));
                    e.sort_by_key(|x| x.0);
                    State {
                        n,
                        e: e.into_iter().map(|x| x.1).collect(),
                        sigma: st.sigma,
                    }
                }
            }
            _ => unreachable!("filtered by event()"),
        };
        self.ledger.events.push(ev);
        let (n, e) = after.counts();
        self.ledger.dims.push(DimRecord { tau: after.tau, n, e });
        if !self.ledger.parity_constant() {
            return Err(Error::ModelViolation(format!(
                "parity of dim N + dim 𝓔 broke at τ = {:.12}",
                after.tau
            )));
        }
        Ok((next, after.clone()))
    }

    /// Transports `start` (or the reference orientation) from τ_a to τ_b.
    pub fn run(&mut self, ta: f64, tb: f64, start: Option<State>) -> Result<(State, Slice)> {
        self.dir = if tb >= ta { 1.0 } else { -1.0 };
        let first = self.slice(ta)?;
        self.first = Some(first.clone());
        let st = match start {
            Some(s) => self.continue_state(&s, &first).ok_or_else(|| {
                Error::RefineSampling("start basis does not match the first slice".into())
            })?,
            None => State::reference(&first),
        };
        let (n, e) = first.counts();
        self.ledger.dims.push(DimRecord { tau: ta, n, e });
        let mut cur = (st, first);
        for i in 1..=PATH_CELLS {
            let t = ta + (tb - ta) * i as f64 / PATH_CELLS as f64;
            if !self.past(t, cur.1.tau) {
                continue;
            }
            let nxt = self.slice(t)?;
            cur = self.go(cur.0, &cur.1.clone(), &nxt, 0)?;
        }
        Ok(cur)
    }
}

pub(crate) struct PathRun {
    pub result: OrientationTransportResult,
    pub state: State,
    pub first: Slice,
    pub last: Slice,
}

/// Orientation of N ⊕ 𝓔 carried along τ ↦ family(τ) from τ_a to τ_b,
/// relative to the reference bases at both ends.
pub(crate) fn transport_path(
    family: &Family<'_>,
    k: usize,
    s: f64,
    ta: f64,
    tb: f64,
    start: Option<State>,
) -> Result<PathRun> {
    let mut pt = PathTransport::new(family, k, s);
    let (state, last) = pt.run(ta, tb, start)?;
    let sign = state.relative_to(&last);
    let index = last.red.neg_count();
    if !pt.ledger.steps_valid() {
        return Err(Error::ModelViolation("dim N + dim 𝓔 jumped by an odd amount".into()));
    }
    let first = pt.first.take().expect("run sets the first slice");
    Ok(PathRun {
        result: OrientationTransportResult {
            sign,
            method: Method::ModifiedBundle,
            index,
            mesh: MeshInfo {
                samples: 1,
                segments: k,
                doubled: false,
                min_overlap: pt.min_overlap,
                min_gap: 0.0,
                steps: pt.evals,
            },
            ledger: pt.ledger,
        },
        state,
        first,
        last,
    })
}

pub(crate) fn transport_family(
    family: &Family<'_>,
    k: usize,
    s: f64,
    ta: f64,
    tb: f64,
    start: Option<State>,
) -> Result<(OrientationTransportResult, State)> {
    let r = transport_path(family, k, s, ta, tb, start)?;
    Ok((r.result, r.state))
}

/// Sign of the K-piece reference orientation carried to 2K pieces against
/// the 2K-piece reference.
fn reference_shift(coarse: &Slice, fine: &Slice) -> Result<i8> {
    let e = coarse.red.refine_map(&fine.red)?;
    let m = fine.red.negative().transpose() * e * coarse.red.negative();
    if m.nrows() != m.ncols() {
        return Err(Error::RefineSampling("index changes when the pieces are doubled".into()));
    }
    if m.nrows() > 0 {
        let sv = m.singular_values();
        let (lo, hi) = (sv.min(), sv.max());
        if lo < 1e-3 * hi {
            return Err(Error::RefineSampling(format!(
                "negative spaces on K and 2K pieces nearly transverse ({:.2e})",
                lo / hi
            )));
        }
    }
    let mut s = det_sign(&m);
    if coarse.lines.len() != fine.lines.len() {
        return Err(Error::RefineSampling("real spectrum changes when the pieces are doubled".into()));
    }
    for (a, b) in coarse.lines.iter().zip(&fine.lines) {
        if a.1.dot(&b.1) < 0.0 {
            s = -s;
        }
    }
    Ok(s)
}

/// Transport on K and 2K pieces; the 2K sign is compared after carrying
/// the K references across.
pub(crate) fn doubled_transport(
    family: &Family<'_>,
    k: usize,
    s: f64,
    ta: f64,
    tb: f64,
) -> Result<OrientationTransportResult> {
    let a = transport_path(family, k, s, ta, tb, None)?;
    let b = transport_path(family, 2 * k, s, ta, tb, None)?;
    let shift = reference_shift(&a.first, &b.first)? * reference_shift(&a.last, &b.last)?;
    let kinds = |r: &PathRun| r.result.ledger.events.iter().map(|e| e.kind).collect::<Vec<_>>();
    if kinds(&a) != kinds(&b) || a.result.sign != b.result.sign * shift {
        return Err(Error::RefineSampling(format!(
            "modified transport differs after doubling the pieces ({} vs {})",
            a.result.sign,
            b.result.sign * shift
        )));
    }
    let mut r = a.result;
    r.mesh.doubled = true;
    r.mesh.min_overlap = r.mesh.min_overlap.min(b.result.mesh.min_overlap);
    r.mesh.steps += b.result.mesh.steps;
    Ok(r)
}

/// Modified transport along {s_j} × [τ_a, τ_b]; the sign is recomputed
/// with the pieces doubled.
pub fn modified_transport(def: &Deformation, j: usize, ta: f64, tb: f64) -> Result<OrientationTransportResult> {
    if j >= def.samples() {
        return Err(Error::InvalidInput(format!("sample {j} out of range")));
    }
    let (lo, hi) = def.tau_range();
    if ta.min(tb) < lo || ta.max(tb) > hi {
        return Err(Error::InvalidInput(format!("path must stay in [{lo}, {hi}]")));
    }
    let fam = |t: f64| def.data_at(j, t);
    doubled_transport(&fam, def.segments, def.s_of(j), ta, tb)
}

struct Scan {
    generic: bool,
    perturbation: f64,
}

/// Counts along each probe line s = s_j; fails on points outside Sp₁ and on
/// transitions that are not simple.
fn scan(def: &Deformation, reference: Option<&Deformation>) -> Result<Scan> {
    let (lo, hi) = def.tau_range();
    let rows: Vec<(bool, f64)> = (0..def.samples())
        .into_par_iter()
        .map(|j| -> Result<(bool, f64)> {
            let fam = |t: f64| def.data_at(j, t);
            let mut pt = PathTransport::new(&fam, def.segments, def.s_of(j));
            let mut pert = 0.0_f64;
            let mut prev: Option<Slice> = None;
            for i in 0..=SCAN_CELLS {
                let t = lo + (hi - lo) * i as f64 / SCAN_CELLS as f64;
                let sl = pt.slice(t)?;
                if let Some(r) = reference {
                    let p0 = poincare_only(&r.data_at(j, t)?)?;
                    pert = pert.max(max_abs(&(&sl.red.p - p0)));
                }
                let sp = SymplecticMatrix::with_tol(sl.red.p.clone(), 1e-8)?;
                if genericity_classify(&sp, 1.0)?.stratum == Stratum::NotInSp1 {
                    return Ok((false, pert));
                }
                if let Some(p) = prev.take() {
                    let mut from = p;
                    while let Some((a, b)) = pt.locate(&from, &sl)? {
                        let (n0, e0) = a.counts();
                        let mut end = b.clone();
                        // merge a partner change within the same-place window
                        let probe_t = b.tau + TRANSITION_SAME_PLACE;
                        if probe_t < sl.tau {
                            let probe = pt.slice(probe_t)?;
                            if let Some((_, b2)) = pt.locate(&b, &probe)? {
                                end = b2;
                            }
                        }
                        let (n1, e1) = end.counts();
                        let (dn, de) = (n1 as i64 - n0 as i64, e1 as i64 - e0 as i64);
                        let ok = (dn.abs() == 1 && de.abs() == 1) || (dn == 0 && de.abs() == 2);
                        if !ok {
                            return Ok((false, pert));
                        }
                        from = end;
                    }
                }
                prev = Some(sl);
            }
            Ok((true, pert))
        })
        .collect::<Result<_>>()?;
    Ok(Scan {
        generic: rows.iter().all(|r| r.0),
        perturbation: rows.iter().map(|r| r.1).fold(0.0, f64::max),
    })
}

/// Perturbs the pad block by random smooth coefficient fields, vanishing
/// near the boundary, until the family passes the genericity scan with a
/// Poincaré perturbation of at most 1e−4. The zero perturbation is tried
/// first.
pub fn make_generic(def: Deformation, seed: u64) -> Result<Deformation> {
    let family = RealizationFamily::around(&def.pad)?;
    let zero = scan(&def, None)?;
    if zero.generic {
        let mut out = def;
        out.generic = Some(GenericPerturbation {
            family,
            epsilon: 0.0,
            coefficients: vec![],
            poincare_perturbation: 0.0,
            rounds: 0,
            seed,
        });
        return Ok(out);
    }
    let mut r = rng(seed);
    let per = 2 * TRIG_S * TRIG_T;
    for round in 1..=GENERIC_MAX_ROUNDS {
        let coefficients: Vec<Vec<f64>> = (0..family.h())
            .map(|_| (0..per).map(|_| gaussian(&mut r)).collect())
            .collect();
        let mut eps = 1e-3 * r.gen_range(0.5..1.0);
        for _ in 0..20 {
            let mut cand = def.clone();
            cand.generic = Some(GenericPerturbation {
                family: family.clone(),
                epsilon: eps,
                coefficients: coefficients.clone(),
                poincare_perturbation: 0.0,
                rounds: round,
                seed,
            });
            let sc = scan(&cand, Some(&def))?;
            if sc.perturbation > GENERIC_MAX_PERTURB {
                eps *= 0.5;
                continue;
            }
            if sc.generic {
                if let Some(g) = cand.generic.as_mut() {
                    g.poincare_perturbation = sc.perturbation;
                }
                return Ok(cand);
            }
            break;
        }
    }
    Err(Error::GenericityFailed(GENERIC_MAX_ROUNDS))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub label: String,
    pub spin: SpinClass,
    /// plain transport of the loop itself
    pub base_sign: i8,
    /// plain transport of the padded loop at τ_lo
    pub bottom_sign: i8,
    /// per cell [s_j, s_{j+1}] × [τ_lo, τ_hi], pieces K and 2K
    pub cells: Vec<i8>,
    pub cells_doubled: Vec<i8>,
    pub ledgers: Vec<TransitionLedger>,
    pub events: usize,
    pub perturbation: f64,
    pub segments: usize,
    pub consistent: bool,
}

fn cell_signs(def: &Deformation, k: usize) -> Result<(Vec<i8>, Vec<TransitionLedger>)> {
    let (lo, hi) = def.tau_range();
    let s = def.samples();
    let top = Slice::new(&def.data_at(0, hi)?, k, hi)?;
    let reference = State::reference(&top);
    let paths: Vec<(State, TransitionLedger)> = (0..s)
        .into_par_iter()
        .map(|j| -> Result<(State, TransitionLedger)> {
            let fam = |t: f64| def.data_at(j, t);
            let (res, st) = transport_family(&fam, k, def.s_of(j), hi, lo, Some(reference.clone()))?;
            if !st.e.is_empty() {
                return Err(Error::ModelViolation(format!(
                    "real eigenvalues in (0,1) remain at τ = {lo}"
                )));
            }
            Ok((st, res.ledger))
        })
        .collect::<Result<_>>()?;
    let mut cells = Vec::with_capacity(s);
    for j in 0..s {
        let (a, b) = (&paths[j].0, &paths[(j + 1) % s].0);
        let m = b.n.transpose() * &a.n;
        if min_singular(&m) < TRANSPORT_MIN_SV {
            return Err(Error::RefineSampling(format!("cell {j}: adjacent paths too far apart")));
        }
        cells.push(a.sigma * b.sigma * det_sign(&m));
    }
    Ok((cells, paths.into_iter().map(|p| p.1).collect()))
}

/// Deforms the loop, makes the family generic, carries the common top
/// orientation down every path and compares neighbours at τ_lo.
pub fn orientation_pipeline(lp: &DataLoop, seed: u64) -> Result<PipelineReport> {
    let spin = lp.spin_class()?;
    let base = super::transport_negative_orientation(lp)?;
    let def = build_variation(lp, Nullhomotopy::Logarithmic, Bump::default())?;
    let def = make_generic(def, seed)?;
    let k = def.segments;
    let (cells, ledgers) = cell_signs(&def, k)?;
    let (cells_doubled, _) = cell_signs(&def, 2 * k)?;
    if cells != cells_doubled {
        return Err(Error::RefineSampling("cell signs change when the pieces are doubled".into()));
    }
    let (lo, _) = def.tau_range();
    let bottom = DataLoop::new(
        (0..def.samples())
            .map(|j| def.data_at(j, lo))
            .collect::<Result<_>>()?,
        "bottom",
    )?;
    let bottom_sign = plain_loop(&bottom, k)?.sign;
    let events = ledgers.iter().map(|l| l.events.len()).sum();
    let consistent = cells.iter().all(|&c| c == 1) && bottom_sign == 1;
    Ok(PipelineReport {
        label: lp.label.clone(),
        spin,
        base_sign: base.sign,
        bottom_sign,
        cells,
        cells_doubled,
        ledgers,
        events,
        perturbation: def.generic.as_ref().map(|g| g.poincare_perturbation).unwrap_or(0.0),
        segments: k,
        consistent,
    })
}
