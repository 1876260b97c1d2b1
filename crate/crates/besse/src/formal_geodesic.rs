//! Formal geodesics (R, A): Jacobi propagation, Poincaré maps, conjugate
//! points, the index decomposition ind = ind_Ω + ind_P and the iteration
//! identities.

use std::f64::consts::PI;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, delta, mat_pow, max_abs, null_space_abs, omega_gram, orthogonality_defect, serde_rows,
    serde_rows_vec, symmetrize, Mat, Vector,
};
use crate::ode::{dopri5, OdeOptions, Stats};
use crate::symplectic_core::{kernel_dim, SymplecticMatrix};
use crate::tol::{CONCAVITY_ASYM, CONJ_DIP, CONJ_LOC, EPS_NULL, TOL_SP};

pub mod hessian;
pub mod realize;

pub use hessian::{
    discretized_hessian_index, lowest_modes, kernel_image_check, DiscreteModes, DiscretizedIndexForm,
    HessianIndex, KernelImageCheck,
};
pub use realize::{realize_poincare, RealizationFamily, Realized};

/// How R is given on one segment. Times are absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    Constant {
        #[serde(with = "serde_rows")]
        value: Mat,
    },
    /// Σ C_k (t − origin)^k
    Polynomial {
        origin: f64,
        #[serde(with = "serde_rows_vec")]
        coeffs: Vec<Mat>,
    },
    /// Cubic Hermite interpolation through samples; slopes are estimated
    /// from three points when not supplied.
    Sampled {
        ts: Vec<f64>,
        #[serde(with = "serde_rows_vec")]
        values: Vec<Mat>,
        #[serde(default, with = "serde_rows_vec", skip_serializing_if = "Vec::is_empty")]
        slopes: Vec<Mat>,
    },
    Sum {
        terms: Vec<(f64, Rule)>,
    },
}

impl Rule {
    pub fn eval(&self, t: f64) -> Mat {
        match self {
            Rule::Constant { value } => value.clone(),
            Rule::Polynomial { origin, coeffs } => {
                let u = t - origin;
                let mut acc = coeffs.last().cloned().unwrap_or_else(|| Mat::zeros(0, 0));
                for c in coeffs.iter().rev().skip(1) {
                    acc = acc * u + c;
                }
                acc
            }
            Rule::Sampled { ts, values, slopes } => hermite(ts, values, slopes, t),
            Rule::Sum { terms } => {
                let mut it = terms.iter();
                let (c0, r0) = it.next().expect("empty sum");
                let mut acc = r0.eval(t) * *c0;
                for (c, r) in it {
                    acc += r.eval(t) * *c;
                }
                acc
            }
        }
    }

    fn map(&self, f: &dyn Fn(&Mat) -> Mat) -> Rule {
        match self {
            Rule::Constant { value } => Rule::Constant { value: f(value) },
            Rule::Polynomial { origin, coeffs } => Rule::Polynomial {
                origin: *origin,
                coeffs: coeffs.iter().map(f).collect(),
            },
            Rule::Sampled { ts, values, slopes } => Rule::Sampled {
                ts: ts.clone(),
                values: values.iter().map(f).collect(),
                slopes: slopes.iter().map(f).collect(),
            },
            Rule::Sum { terms } => Rule::Sum {
                terms: terms.iter().map(|(c, r)| (*c, r.map(f))).collect(),
            },
        }
    }

    fn shift(&self, dt: f64) -> Rule {
        match self {
            Rule::Constant { .. } => self.clone(),
            Rule::Polynomial { origin, coeffs } => Rule::Polynomial {
                origin: origin + dt,
                coeffs: coeffs.clone(),
            },
            Rule::Sampled { ts, values, slopes } => Rule::Sampled {
                ts: ts.iter().map(|t| t + dt).collect(),
                values: values.clone(),
                slopes: slopes.clone(),
            },
            Rule::Sum { terms } => Rule::Sum {
                terms: terms.iter().map(|(c, r)| (*c, r.shift(dt))).collect(),
            },
        }
    }

    fn dims(&self) -> Option<usize> {
        let square = |a: &Mat| (a.nrows() == a.ncols()).then_some(a.nrows());
        match self {
            Rule::Constant { value } => square(value),
            Rule::Polynomial { coeffs, .. } => {
                let d = square(coeffs.first()?)?;
                coeffs.iter().all(|c| square(c) == Some(d)).then_some(d)
            }
            Rule::Sampled { ts, values, slopes } => {
                if ts.len() != values.len()
                    || ts.len() < 2
                    || ts.windows(2).any(|w| !(w[1] > w[0]))
                    || !(slopes.is_empty() || slopes.len() == ts.len())
                {
                    return None;
                }
                let d = square(&values[0])?;
                values.iter().all(|c| square(c) == Some(d)).then_some(d)
            }
            Rule::Sum { terms } => {
                let d = terms.first()?.1.dims()?;
                terms.iter().all(|(_, r)| r.dims() == Some(d)).then_some(d)
            }
        }
    }

    fn sup_norm_hint(&self) -> f64 {
        match self {
            Rule::Constant { value } => value.norm(),
            Rule::Polynomial { .. } => f64::NAN,
            Rule::Sampled { values, .. } => values.iter().map(|v| v.norm()).fold(0.0, f64::max),
            Rule::Sum { terms } => terms.iter().map(|(c, r)| c.abs() * r.sup_norm_hint()).sum(),
        }
    }
}

fn hermite(ts: &[f64], ys: &[Mat], given: &[Mat], t: f64) -> Mat {
    let n = ts.len();
    if n == 2 && given.is_empty() {
        let w = ((t - ts[0]) / (ts[1] - ts[0])).clamp(0.0, 1.0);
        return &ys[0] * (1.0 - w) + &ys[1] * w;
    }
    let k = match ts.partition_point(|&x| x <= t) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    };
    let h = |i: usize| ts[i + 1] - ts[i];
    let d = |i: usize| (&ys[i + 1] - &ys[i]) / h(i);
    let slope = |i: usize| -> Mat {
        if !given.is_empty() {
            given[i].clone()
        } else if i == 0 {
            let (h0, h1) = (h(0), h(1));
            (d(0) * (2.0 * h0 + h1) - d(1) * h0) / (h0 + h1)
        } else if i == n - 1 {
            let (a, b) = (h(n - 2), h(n - 3));
            (d(n - 2) * (2.0 * a + b) - d(n - 3) * a) / (a + b)
        } else {
            let (a, b) = (h(i - 1), h(i));
            (d(i) * a + d(i - 1) * b) / (a + b)
        }
    };
    let hk = h(k);
    let s = ((t - ts[k]) / hk).clamp(0.0, 1.0);
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    &ys[k] * h00 + slope(k) * (h10 * hk) + &ys[k + 1] * h01 + slope(k + 1) * (h11 * hk)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    #[serde(flatten)]
    pub rule: Rule,
}

/// Piecewise curvature on (0, T]; jumps allowed at segment boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileRepr", into = "ProfileRepr")]
pub struct CurvatureProfile {
    m: usize,
    segments: Vec<Segment>,
}

#[derive(Serialize, Deserialize)]
struct ProfileRepr {
    m: usize,
    #[serde(rename = "T")]
    t: f64,
    segments: Vec<Segment>,
}

impl TryFrom<ProfileRepr> for CurvatureProfile {
    type Error = Error;
    fn try_from(r: ProfileRepr) -> Result<Self> {
        let p = CurvatureProfile::new(r.m, r.segments)?;
        if (p.length() - r.t).abs() > 1e-12 * (1.0 + r.t.abs()) {
            return Err(Error::InvalidInput(format!(
                "T = {} but segments end at {}",
                r.t,
                p.length()
            )));
        }
        Ok(p)
    }
}

impl From<CurvatureProfile> for ProfileRepr {
    fn from(p: CurvatureProfile) -> Self {
        ProfileRepr {
            m: p.m,
            t: p.length(),
            segments: p.segments,
        }
    }
}

impl CurvatureProfile {
    pub fn new(m: usize, segments: Vec<Segment>) -> Result<Self> {
        if m == 0 || segments.is_empty() {
            return Err(Error::InvalidInput(
                "profile needs m ≥ 1 and at least one segment".into(),
            ));
        }
        if segments[0].t0 != 0.0 {
            return Err(Error::InvalidInput("first segment must start at 0".into()));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.t1 > s.t0) {
                return Err(Error::InvalidInput(format!(
                    "segment {i} is empty or reversed"
                )));
            }
            if i > 0 && s.t0 != segments[i - 1].t1 {
                return Err(Error::InvalidInput(format!(
                    "segment {i} does not continue segment {}",
                    i - 1
                )));
            }
            if s.rule.dims() != Some(m) {
                return Err(Error::InvalidInput(format!(
                    "segment {i} does not hold valid {m}×{m} data"
                )));
            }
        }
        let segments = segments
            .into_iter()
            .map(|s| Segment {
                rule: s.rule.map(&symmetrize),
                ..s
            })
            .collect();
        Ok(CurvatureProfile { m, segments })
    }

    pub fn constant(r: &Mat, length: f64) -> Result<Self> {
        Self::new(
            r.nrows(),
            vec![Segment {
                t0: 0.0,
                t1: length,
                rule: Rule::Constant { value: r.clone() },
            }],
        )
    }

    /// Piecewise constant with breakpoints `ts[0]=0 < … < ts[k]`.
    pub fn piecewise_constant(ts: &[f64], values: &[Mat]) -> Result<Self> {
        if ts.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::InvalidInput(
                "need one more breakpoint than values".into(),
            ));
        }
        let segs = values
            .iter()
            .enumerate()
            .map(|(i, v)| Segment {
                t0: ts[i],
                t1: ts[i + 1],
                rule: Rule::Constant { value: v.clone() },
            })
            .collect();
        Self::new(values[0].nrows(), segs)
    }

    pub fn sampled(ts: Vec<f64>, values: Vec<Mat>) -> Result<Self> {
        Self::sampled_with_slopes(ts, values, Vec::new())
    }

    /// Sampled profile with known derivatives at the nodes.
    pub fn sampled_with_slopes(ts: Vec<f64>, values: Vec<Mat>, slopes: Vec<Mat>) -> Result<Self> {
        if ts.len() < 2 || values.is_empty() {
            return Err(Error::InvalidInput("sampled profile needs two samples".into()));
        }
        let (t0, t1) = (ts[0], *ts.last().unwrap());
        let m = values[0].nrows();
        Self::new(
            m,
            vec![Segment {
                t0,
                t1,
                rule: Rule::Sampled { ts, values, slopes },
            }],
        )
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn length(&self) -> f64 {
        self.segments.last().unwrap().t1
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.segments.iter().map(|s| s.t1))
            .collect()
    }

    /// Index of the segment holding t, with t ∈ (t0, t1] (t = 0 goes to the first).
    pub fn segment_of(&self, t: f64) -> usize {
        let i = self.segments.partition_point(|s| s.t1 < t);
        i.min(self.segments.len() - 1)
    }

    pub fn eval(&self, t: f64) -> Mat {
        self.segments[self.segment_of(t)].rule.eval(t)
    }

    pub fn eval_in(&self, seg: usize, t: f64) -> Mat {
        self.segments[seg].rule.eval(t)
    }

    /// Rough bound on sup‖R‖ used to scale tolerances.
    pub fn norm_bound(&self) -> f64 {
        let mut b = 0.0_f64;
        for s in &self.segments {
            let hint = s.rule.sup_norm_hint();
            if hint.is_finite() {
                b = b.max(hint);
            } else {
                for k in 0..=16 {
                    let t = s.t0 + (s.t1 - s.t0) * k as f64 / 16.0;
                    b = b.max(s.rule.eval(t).norm());
                }
            }
        }
        b
    }

    pub fn conjugated(&self, a: &Mat) -> Self {
        let at = a.transpose();
        self.map(&|r| a * r * &at)
    }

    fn map(&self, f: &dyn Fn(&Mat) -> Mat) -> Self {
        CurvatureProfile {
            m: self.m,
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    rule: s.rule.map(f),
                    ..s.clone()
                })
                .collect(),
        }
    }

    fn shifted(&self, dt: f64) -> Vec<Segment> {
        self.segments
            .iter()
            .map(|s| Segment {
                t0: s.t0 + dt,
                t1: s.t1 + dt,
                rule: s.rule.shift(dt),
            })
            .collect()
    }

    /// a·R + b·Id.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        let id = Mat::identity(self.m, self.m);
        CurvatureProfile {
            m: self.m,
            segments: self
                .segments
                .iter()
                .map(|s| {
                    let rule = match &s.rule {
                        Rule::Constant { value } => Rule::Constant {
                            value: value * a + &id * b,
                        },
                        r => Rule::Sum {
                            terms: vec![(a, r.clone()), (b, Rule::Constant { value: id.clone() })],
                        },
                    };
                    Segment { rule, ..s.clone() }
                })
                .collect(),
        }
    }

    /// R + c·other on the common refinement of both partitions.
    pub fn add_scaled(&self, other: &CurvatureProfile, c: f64) -> Result<Self> {
        if other.m != self.m || (other.length() - self.length()).abs() > 1e-12 * self.length() {
            return Err(Error::InvalidInput(
                "profiles must share m and length".into(),
            ));
        }
        let mut cuts: Vec<f64> = self
            .breakpoints()
            .into_iter()
            .chain(other.breakpoints())
            .collect();
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * (1.0 + b.abs()));
        let mut segs = Vec::new();
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let ra = &self.segments[self.segment_of(mid)].rule;
            let rb = &other.segments[other.segment_of(mid)].rule;
            let rule = match (ra, rb) {
                (Rule::Constant { value: x }, Rule::Constant { value: y }) => {
                    Rule::Constant { value: x + y * c }
                }
                _ => Rule::Sum {
                    terms: vec![(1.0, ra.clone()), (c, rb.clone())],
                },
            };
            segs.push(Segment {
                t0: w[0],
                t1: w[1],
                rule,
            });
        }
        if let Some(l) = segs.last_mut() {
            l.t1 = self.length();
        }
        CurvatureProfile::new(self.m, segs)
    }

    /// R₁ ⋆ R₂ ⋆ … on consecutive intervals.
    pub fn star(parts: &[&CurvatureProfile]) -> Result<Self> {
        let m = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("empty concatenation".into()))?
            .m;
        let mut segs = Vec::new();
        let mut off = 0.0;
        for p in parts {
            if p.m != m {
                return Err(Error::InvalidInput(format!(
                    "dimension mismatch: {} vs {m}",
                    p.m
                )));
            }
            let mut s = p.shifted(off);
            if let Some(first) = s.first_mut() {
                if let Some(prev) = segs.last() {
                    let prev: &Segment = prev;
                    first.t0 = prev.t1;
                }
            }
            off += p.length();
            segs.extend(s);
        }
        CurvatureProfile::new(m, segs)
    }
}

/// The pair (R, A) on [0, T].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeodesicRepr", into = "GeodesicRepr")]
pub struct FormalGeodesic {
    profile: CurvatureProfile,
    a: Mat,
    label: String,
}

#[derive(Serialize, Deserialize)]
struct GeodesicRepr {
    m: usize,
    #[serde(rename = "T")]
    t: f64,
    segments: Vec<Segment>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(default)]
    label: String,
}

impl TryFrom<GeodesicRepr> for FormalGeodesic {
    type Error = Error;
    fn try_from(r: GeodesicRepr) -> Result<Self> {
        let profile = CurvatureProfile::try_from(ProfileRepr {
            m: r.m,
            t: r.t,
            segments: r.segments,
        })?;
        let a = linalg::from_rows(&r.a).ok_or_else(|| Error::InvalidInput("ragged A".into()))?;
        FormalGeodesic::new(profile, a, r.label)
    }
}

impl From<FormalGeodesic> for GeodesicRepr {
    fn from(g: FormalGeodesic) -> Self {
        let p = ProfileRepr::from(g.profile);
        GeodesicRepr {
            m: p.m,
            t: p.t,
            segments: p.segments,
            a: linalg::to_rows(&g.a),
            label: g.label,
        }
    }
}

impl FormalGeodesic {
    pub fn new(profile: CurvatureProfile, a: Mat, label: impl Into<String>) -> Result<Self> {
        let m = profile.m();
        if a.nrows() != m || a.ncols() != m {
            return Err(Error::InvalidInput(format!("A must be {m}×{m}")));
        }
        let d = orthogonality_defect(&a);
        if d > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "A is not orthogonal (defect {d:.2e})"
            )));
        }
        Ok(FormalGeodesic {
            profile,
            a,
            label: label.into(),
        })
    }

    pub fn constant(r: &Mat, a: &Mat, length: f64, label: impl Into<String>) -> Result<Self> {
        Self::new(CurvatureProfile::constant(r, length)?, a.clone(), label)
    }

    /// R ≡ Id, A = Id on [0, 2π]: the normal data of a great circle.
    pub fn round_sphere_block(m: usize) -> Self {
        let id = Mat::identity(m, m);
        Self::constant(&id, &id, 2.0 * PI, format!("round-sphere block m={m}")).expect("valid data")
    }

    pub fn m(&self) -> usize {
        self.profile.m()
    }

    pub fn length(&self) -> f64 {
        self.profile.length()
    }

    pub fn profile(&self) -> &CurvatureProfile {
        &self.profile
    }

    pub fn twist(&self) -> &Mat {
        &self.a
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn is_special(&self) -> bool {
        self.a.determinant() > 0.0
    }
}

/// Concatenation R₁ ⋆ … ⋆ R_k with twist `a_total`.
pub fn concat(fgs: &[FormalGeodesic], a_total: &Mat) -> Result<FormalGeodesic> {
    let parts: Vec<&CurvatureProfile> = fgs.iter().map(|g| &g.profile).collect();
    let label = fgs
        .iter()
        .map(|g| g.label.as_str())
        .collect::<Vec<_>>()
        .join(" ⋆ ");
    FormalGeodesic::new(CurvatureProfile::star(&parts)?, a_total.clone(), label)
}

/// Concatenation plus the composition check: ΔA·P of the result equals the
/// time-ordered product of the pieces' ΔAᵢ·Pᵢ. Returns the defect.
pub fn concat_verified(fgs: &[FormalGeodesic], a_total: &Mat) -> Result<(FormalGeodesic, f64)> {
    let joined = concat(fgs, a_total)?;
    let m = joined.m();
    let mut prod = Mat::identity(2 * m, 2 * m);
    for g in fgs {
        let p = poincare_map(g)?;
        prod = delta(&g.a) * p.matrix.matrix() * prod;
    }
    let pj = poincare_map(&joined)?;
    let lhs = delta(a_total) * pj.matrix.matrix();
    let defect = max_abs(&(lhs - &prod));
    if defect > 1e-8 * (1.0 + max_abs(&prod)) {
        return Err(Error::ContractViolation(format!(
            "concatenation composition defect {defect:.2e}"
        )));
    }
    Ok((joined, defect))
}

/// The q-th iterate on [0, qT]: lap j carries A^j R A^{−j}, total twist A^q.
pub fn iterate(fg: &FormalGeodesic, q: usize) -> Result<FormalGeodesic> {
    if q == 0 {
        return Err(Error::InvalidInput("iterate needs q ≥ 1".into()));
    }
    if q == 1 {
        return Ok(fg.clone());
    }
    let mut laps = Vec::with_capacity(q);
    let mut aj = Mat::identity(fg.m(), fg.m());
    for _ in 0..q {
        laps.push(fg.profile.conjugated(&aj));
        aj = &fg.a * aj;
    }
    let refs: Vec<&CurvatureProfile> = laps.iter().collect();
    FormalGeodesic::new(
        CurvatureProfile::star(&refs)?,
        aj,
        format!("{}^{q}", fg.label),
    )
}

fn jacobi_rhs(r: &Mat, m: usize, cols: usize, y: &[f64], dy: &mut [f64]) {
    let n = 2 * m;
    for c in 0..cols {
        let col = &y[c * n..(c + 1) * n];
        let out = &mut dy[c * n..(c + 1) * n];
        for i in 0..m {
            out[i] = col[m + i];
            let mut acc = 0.0;
            for j in 0..m {
                acc += r[(i, j)] * col[j];
            }
            out[m + i] = -acc;
        }
    }
}

/// Flows the 2m×k state `y0` from `t0` to `t1`, splitting at breakpoints.
pub(crate) fn flow(
    profile: &CurvatureProfile,
    y0: &Mat,
    t0: f64,
    t1: f64,
    opts: &OdeOptions,
    record: bool,
) -> Result<(Mat, Vec<(f64, Mat)>, Stats)> {
    let m = profile.m();
    let cols = y0.ncols();
    let mut stops: Vec<f64> = profile
        .breakpoints()
        .into_iter()
        .filter(|&b| b > t0.min(t1) && b < t0.max(t1))
        .collect();
    if t1 < t0 {
        stops.reverse();
    }
    stops.push(t1);
    let mut y: Vec<f64> = y0.as_slice().to_vec();
    let mut path = Vec::new();
    if record {
        path.push((t0, y0.clone()));
    }
    let mut stats = Stats::default();
    let mut a = t0;
    for &b in &stops {
        let seg = profile.segment_of(0.5 * (a + b));
        let rhs = |t: f64, s: &[f64], d: &mut [f64]| {
            let r = profile.eval_in(seg, t);
            jacobi_rhs(&r, m, cols, s, d);
        };
        let sol = dopri5(rhs, a, b, &y, opts, record)?;
        stats.add(&sol.stats);
        if record {
            for (t, s) in sol.steps.into_iter().skip(1) {
                path.push((t, Mat::from_vec(2 * m, cols, s)));
            }
        }
        y = sol.y;
        a = b;
    }
    Ok((Mat::from_vec(2 * m, cols, y), path, stats))
}

/// Solves (J, J′)′ = ((0, Id), (−R, 0))(J, J′) from `init` at t₀ to t₁.
pub fn propagate(fg: &FormalGeodesic, init: &[f64], t0: f64, t1: f64) -> Result<Vector> {
    let m = fg.m();
    let len = fg.length();
    if init.len() != 2 * m {
        return Err(Error::InvalidInput(format!(
            "initial state must have length {}",
            2 * m
        )));
    }
    for t in [t0, t1] {
        if !(0.0..=len).contains(&t) {
            return Err(Error::InvalidInput(format!("time {t} outside [0, {len}]")));
        }
    }
    let y0 = Mat::from_column_slice(2 * m, 1, init);
    let (y, _, _) = flow(&fg.profile, &y0, t0, t1, &OdeOptions::default(), false)?;
    Ok(y.column(0).into_owned())
}

/// Fundamental solution Φ(t) at every accepted step.
#[derive(Debug, Clone)]
pub struct FlowPath {
    pub ts: Vec<f64>,
    pub states: Vec<Mat>,
    pub stats: Stats,
    /// max over stored t of ‖ΦᵀΩΦ − Ω‖∞
    pub max_defect: f64,
}

impl FlowPath {
    pub fn last(&self) -> &Mat {
        self.states.last().unwrap()
    }
}

pub fn fundamental_solution(fg: &FormalGeodesic) -> Result<FlowPath> {
    fundamental_solution_with(fg, &OdeOptions::default())
}

pub fn fundamental_solution_with(fg: &FormalGeodesic, opts: &OdeOptions) -> Result<FlowPath> {
    let m = fg.m();
    let (_, path, stats) = flow(
        &fg.profile,
        &Mat::identity(2 * m, 2 * m),
        0.0,
        fg.length(),
        opts,
        true,
    )?;
    let max_defect = path
        .iter()
        .map(|(_, s)| linalg::symplectic_defect(s))
        .fold(0.0, f64::max);
    let (ts, states) = path.into_iter().unzip();
    Ok(FlowPath {
        ts,
        states,
        stats,
        max_defect,
    })
}

fn end_state(fg: &FormalGeodesic, opts: &OdeOptions) -> Result<(Mat, Stats)> {
    let m = fg.m();
    let (y, _, stats) = flow(
        &fg.profile,
        &Mat::identity(2 * m, 2 * m),
        0.0,
        fg.length(),
        opts,
        false,
    )?;
    Ok((y, stats))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoincareMap {
    pub matrix: SymplecticMatrix,
    pub label: String,
    pub stats: Stats,
}

impl PoincareMap {
    pub fn m(&self) -> usize {
        self.matrix.m()
    }
}

/// P = ΔA⁻¹·Φ(T).
pub fn poincare_map(fg: &FormalGeodesic) -> Result<PoincareMap> {
    poincare_map_with(fg, &OdeOptions::default())
}

pub fn poincare_map_with(fg: &FormalGeodesic, opts: &OdeOptions) -> Result<PoincareMap> {
    let (phi, stats) = end_state(fg, opts)?;
    let p = delta(&fg.a.transpose()) * phi;
    let matrix = SymplecticMatrix::with_tol(p, TOL_SP).map_err(|e| Error::IntegrationFailed {
        t: fg.length(),
        reason: format!("flow lost symplecticity: {e}"),
    })?;
    Ok(PoincareMap {
        matrix,
        label: fg.label.clone(),
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjugatePoint {
    pub t: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugateReport {
    pub points: Vec<ConjugatePoint>,
    pub ind_omega: usize,
}

// cosines of the principal angles between span(J) and the vertical 0⊕V
fn vertical_cosines(state: &Mat, m: usize) -> (Vec<f64>, f64) {
    let frame = state.view((0, m), (2 * m, m)).into_owned();
    let q = frame.qr().q();
    let top = q.rows(0, m).into_owned();
    let mut sv: Vec<f64> = top.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let det = state.view((0, m), (m, m)).determinant();
    (sv, det)
}

/// Interior zeros of det J for J(0) = 0, J′(0) = Id, with multiplicities.
pub fn conjugate_points(fg: &FormalGeodesic) -> Result<ConjugateReport> {
    let m = fg.m();
    let len = fg.length();
    let h_max = (len / 512.0).min(0.02);
    let opts = OdeOptions::default().with_h_max(h_max);
    let (_, path, _) = flow(
        &fg.profile,
        &Mat::identity(2 * m, 2 * m),
        0.0,
        len,
        &opts,
        true,
    )?;
    let samples: Vec<(f64, Vec<f64>, f64)> = path
        .iter()
        .map(|(t, s)| {
            let (sv, det) = vertical_cosines(s, m);
            (*t, sv, det)
        })
        .collect();
    let g = |i: usize| samples[i].1[0];
    let state_at = |t: f64, from: usize| -> Result<Mat> {
        let (t0, s0) = &path[from];
        Ok(flow(&fg.profile, s0, *t0, t, &OdeOptions::default(), false)?.0)
    };
    let edge = 1e-7 * (1.0 + len);
    let mut points: Vec<ConjugatePoint> = Vec::new();
    let n = samples.len();
    for i in 1..n.saturating_sub(1) {
        if !(g(i) <= g(i - 1) && g(i) <= g(i + 1)) || g(i) > 0.25 {
            continue;
        }
        // golden-section search for the minimum of σ_min on [t_{i−1}, t_{i+1}]
        let (mut a, mut b) = (samples[i - 1].0, samples[i + 1].0);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let eval = |t: f64| -> Result<f64> { Ok(vertical_cosines(&state_at(t, i - 1)?, m).0[0]) };
        let mut x1 = b - phi * (b - a);
        let mut x2 = a + phi * (b - a);
        let (mut f1, mut f2) = (eval(x1)?, eval(x2)?);
        while b - a > CONJ_LOC {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = eval(x1)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = eval(x2)?;
            }
        }
        let tstar = 0.5 * (a + b);
        if tstar <= edge || tstar >= len - edge {
            continue;
        }
        let (sv, _) = vertical_cosines(&state_at(tstar, i - 1)?, m);
        if sv[0] > CONJ_DIP {
            continue;
        }
        let mult = sv.iter().filter(|&&s| s <= 1e-6).count();
        if mult == 0 || (mult < m && sv[mult] < 1e-4) {
            return Err(Error::UnresolvedConjugatePoint { t: tstar });
        }
        if points.last().is_some_and(|p| (p.t - tstar).abs() < 1e-8) {
            continue;
        }
        points.push(ConjugatePoint {
            t: tstar,
            multiplicity: mult,
        });
    }
    // every sign change of det J must be explained by a located point
    for i in 1..n.saturating_sub(1) {
        let (d0, d1) = (samples[i].2, samples[i + 1].2);
        if d0 * d1 < 0.0 {
            let lo = samples[i - 1].0 - 1e-9;
            let hi = samples[(i + 2).min(n - 1)].0 + 1e-9;
            let seen = points.iter().any(|p| p.t >= lo && p.t <= hi);
            let at_end = samples[i + 1].0 >= len - edge;
            if !seen && !at_end {
                return Err(Error::UnresolvedConjugatePoint { t: samples[i].0 });
            }
        }
    }
    let ind_omega = points.iter().map(|p| p.multiplicity).sum();
    Ok(ConjugateReport { points, ind_omega })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcavityData {
    pub domain_dim: usize,
    pub index: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub label: String,
    pub ind_omega: usize,
    pub conjugate_points: Vec<ConjugatePoint>,
    pub ind_p: i64,
    pub ind: i64,
    pub nullity: usize,
    pub ind0: i64,
    pub concavity: ConcavityData,
    pub degraded: bool,
}

/// Index, signature data and kernel of the concavity form
/// H̃(X, Y) = −ω((P − Id)X, Y) on (P − Id)⁻¹(0⊕V).
pub fn concavity_form(p: &Mat) -> Result<(ConcavityData, Mat)> {
    let n = p.nrows();
    let m = n / 2;
    let pm = p - Mat::identity(n, n);
    let scale = p.norm().max(1.0);
    let top = pm.rows(0, m).into_owned();
    let d = null_space_abs(&top, 1e-8 * scale);
    let domain_dim = d.ncols();
    if domain_dim == 0 {
        return Ok((
            ConcavityData {
                domain_dim: 0,
                index: 0,
                kernel: 0,
            },
            Mat::zeros(0, 0),
        ));
    }
    let h = -(d.transpose() * pm.transpose() * omega_gram(m) * &d);
    let asym = max_abs(&(&h - h.transpose()));
    if asym > CONCAVITY_ASYM * scale {
        return Err(Error::ContractViolation(format!(
            "concavity form asymmetric by {asym:.2e}"
        )));
    }
    let hs = symmetrize(&h);
    let ev = SymmetricEigen::new(hs.clone()).eigenvalues;
    let thr = EPS_NULL * scale;
    let index = ev.iter().filter(|&&x| x < -thr).count();
    let kernel = ev.iter().filter(|&&x| x.abs() <= thr).count();
    Ok((
        ConcavityData {
            domain_dim,
            index,
            kernel,
        },
        hs,
    ))
}

/// ind_P = (ind + dim ker)H̃ − dim ker(P − Id), with the kernel dimension.
pub fn ind_p(p: &Mat) -> Result<(i64, usize, ConcavityData, bool)> {
    let (cd, _) = concavity_form(p)?;
    let (k, degraded) = kernel_dim(p, 1.0);
    Ok(((cd.index + cd.kernel) as i64 - k as i64, k, cd, degraded))
}

pub fn index_report(fg: &FormalGeodesic) -> Result<IndexReport> {
    let conj = conjugate_points(fg)?;
    let p = poincare_map(fg)?;
    let (ip, nullity, concavity, degraded) = ind_p(p.matrix.matrix())?;
    let ind = conj.ind_omega as i64 + ip;
    Ok(IndexReport {
        label: fg.label.clone(),
        ind_omega: conj.ind_omega,
        conjugate_points: conj.points,
        ind_p: ip,
        ind,
        nullity,
        ind0: ind + nullity as i64,
        concavity,
        degraded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: i64,
    pub rhs: i64,
    pub holds: bool,
}

impl IdentityCheck {
    fn new(lhs: i64, rhs: i64) -> Self {
        IdentityCheck {
            lhs,
            rhs,
            holds: lhs == rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottCheck {
    pub q: usize,
    pub l: usize,
    /// ind(c^{q+l}) = ind(c^q) + ind(c^l) + m
    pub sum_rule: IdentityCheck,
    /// ind₀(c^q) = ind₀(c^{q−l}) + ind(c^l) + m
    pub difference_rule: IdentityCheck,
}

fn require_regular(fg: &FormalGeodesic, q: usize) -> Result<()> {
    let pq = poincare_map(&iterate(fg, q)?)?;
    let m = fg.m();
    let dev = max_abs(&(pq.matrix.matrix() - Mat::identity(2 * m, 2 * m)));
    if dev > 1e-7 {
        return Err(Error::NotApplicable(format!(
            "c^{q} is not regular: ‖P^q − Id‖ = {dev:.2e}"
        )));
    }
    Ok(())
}

/// Index reports of c^1 … c^k (computed independently per iterate).
pub fn iterate_reports(fg: &FormalGeodesic, k: usize) -> Result<Vec<IndexReport>> {
    (1..=k).map(|j| index_report(&iterate(fg, j)?)).collect()
}

pub fn bott_check(fg: &FormalGeodesic, q: usize, l: usize) -> Result<BottCheck> {
    if !(0 < l && l < q) {
        return Err(Error::InvalidInput(format!(
            "need 0 < l < q, got l={l}, q={q}"
        )));
    }
    require_regular(fg, q)?;
    let rep = |k: usize| index_report(&iterate(fg, k)?);
    let (rq, rl, rql, rqml) = (rep(q)?, rep(l)?, rep(q + l)?, rep(q - l)?);
    let m = fg.m() as i64;
    Ok(BottCheck {
        q,
        l,
        sum_rule: IdentityCheck::new(rql.ind, rq.ind + rl.ind + m),
        difference_rule: IdentityCheck::new(rq.ind0, rqml.ind0 + rl.ind + m),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapBound {
    pub q: usize,
    pub k: usize,
    pub i_min: i64,
    /// ind(c^k) for k > q, ind₀(c^k) for k < q
    pub lhs: i64,
    pub rhs: i64,
    pub holds: bool,
    pub strict: bool,
    /// k = q ± 1 and ind(c) = i(M), the only case where equality may occur
    pub equality_allowed: bool,
    pub consistent: bool,
}

/// ind(c^k) ≥ ind(c^q) + m + i for k > q, ind₀(c^k) ≤ ind(c^q) + m − i for k < q.
pub fn index_gap_bounds(fg: &FormalGeodesic, q: usize, k: usize, i_min: i64) -> Result<GapBound> {
    if k == q || q == 0 || k == 0 {
        return Err(Error::InvalidInput("need k ≠ q, both positive".into()));
    }
    require_regular(fg, q)?;
    let m = fg.m() as i64;
    let rq = index_report(&iterate(fg, q)?)?;
    let rk = index_report(&iterate(fg, k)?)?;
    let r1 = index_report(fg)?;
    let (lhs, rhs, holds, adjacent) = if k > q {
        let rhs = rq.ind + m + i_min;
        (rk.ind, rhs, rk.ind >= rhs, k == q + 1)
    } else {
        let rhs = rq.ind + m - i_min;
        (rk.ind0, rhs, rk.ind0 <= rhs, k + 1 == q)
    };
    let strict = lhs != rhs;
    let equality_allowed = adjacent && r1.ind == i_min;
    Ok(GapBound {
        q,
        k,
        i_min,
        lhs,
        rhs,
        holds,
        strict,
        equality_allowed,
        consistent: holds && (strict || equality_allowed),
    })
}

/// ‖P(c^q) − P(c)^q‖∞.
pub fn iteration_law_defect(fg: &FormalGeodesic, q: usize) -> Result<f64> {
    let p = poincare_map(fg)?;
    let pq = poincare_map(&iterate(fg, q)?)?;
    Ok(max_abs(
        &(pq.matrix.matrix() - mat_pow(p.matrix.matrix(), q)),
    ))
}

/// The 2-dimensional block with Poincaré map
/// B = ((0,0,−1,0),(0,0,0,1),(1,0,0,0),(0,−1,0,0)) and A = Id.
pub fn exemplar_q() -> FormalGeodesic {
    let d = |a: f64, b: f64| Mat::from_diagonal(&Vector::from_vec(vec![a, b]));
    let ts = [0.0, 0.5 * PI, 1.5 * PI, 2.0 * PI];
    let vals = [d(1.0, 1.0), d(1.0, 16.0 / 9.0), d(16.0, 16.0 / 9.0)];
    let prof = CurvatureProfile::piecewise_constant(&ts, &vals).expect("valid profile");
    FormalGeodesic::new(prof, Mat::identity(2, 2), "Q").expect("valid data")
}

pub fn exemplar_b() -> Mat {
    Mat::from_row_slice(
        4,
        4,
        &[
            0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0,
        ],
    )
}

/// Negative-count tolerance for the discretized form, scaled by sup‖R‖.
pub(crate) fn eps_neg(profile: &CurvatureProfile) -> f64 {
    1e-8 * (1.0 + profile.norm_bound())
}

/// Upper edge of the discrete null band.
pub(crate) fn eps_null_band(profile: &CurvatureProfile) -> f64 {
    1e-2 * (1.0 + profile.norm_bound())
}

#[cfg(test)]
mod tests;
