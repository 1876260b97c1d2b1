//! Closed geodesics of concrete Riemannian metrics: integration, closure
//! detection, parallel frames, and extraction of the normal data (R, A).
//!
//! Every manifold is handled as the unit sphere Sⁿ ⊂ ℝⁿ⁺¹ carrying some
//! metric; points and tangent vectors are stored in ambient coordinates.

mod sphere;
mod surface;
#[cfg(test)]
mod tests;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formal_geodesic::{CurvatureProfile, FormalGeodesic};
use crate::linalg::{orthogonality_defect, serde_rows, symmetrize, Mat, Vector};
use crate::random::gaussian;
use crate::tol::{TOL_CLOSE, TOL_FRAME};

pub use surface::Poly;

const SAMPLE_DT: f64 = 0.02;
const CLOSE_ARM: f64 = 0.1;
const CLOSE_SCREEN: f64 = 0.2;
const CLOSE_LOC: f64 = 1e-10;
const PROBE_STEP: f64 = 1e-4;
const PROBE_ZERO: f64 = 1e-4;
const PROBE_CLEAR: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MetricSpec {
    RoundSphere {
        n: usize,
    },
    /// (1 + h(cos θ))² dθ² + sin²θ dφ² on S², h odd with h(1) = 0.
    Zoll { h: Vec<f64> },
    /// B(cos θ) dθ² + sin²θ dφ² on S² for a polynomial B.
    Revolution {
        b: Vec<f64>,
        #[serde(default)]
        name: String,
    },
}

impl MetricSpec {
    pub fn round(n: usize) -> Self {
        MetricSpec::RoundSphere { n }
    }

    /// h(x) = 0.3 x (1 − x²)
    pub fn zoll_example() -> Self {
        MetricSpec::Zoll {
            h: vec![0.0, 0.3, 0.0, -0.3],
        }
    }

    /// Prolate spheroid with axis ratio κ, pulled back to S².
    pub fn spheroid(kappa: f64) -> Self {
        let k2 = kappa * kappa;
        MetricSpec::Revolution {
            b: vec![k2, 0.0, 1.0 - k2],
            name: format!("spheroid {kappa}:1"),
        }
    }

    /// Non-Besse control: the 2:1 prolate spheroid.
    pub fn control() -> Self {
        Self::spheroid(2.0)
    }

    pub fn dim(&self) -> usize {
        match self {
            MetricSpec::RoundSphere { n } => *n,
            _ => 2,
        }
    }

    /// Whether the family is known to have all geodesics closed.
    pub fn is_besse(&self) -> bool {
        !matches!(self, MetricSpec::Revolution { .. })
    }

    pub fn label(&self) -> String {
        match self {
            MetricSpec::RoundSphere { n } => format!("round S^{n}"),
            MetricSpec::Zoll { h } => format!("zoll h={h:?}"),
            MetricSpec::Revolution { b, name } if name.is_empty() => format!("revolution B={b:?}"),
            MetricSpec::Revolution { name, .. } => name.clone(),
        }
    }

    fn b_poly(&self) -> Option<Poly> {
        match self {
            MetricSpec::RoundSphere { .. } => None,
            MetricSpec::Zoll { h } => {
                let one_h = Poly(h.clone()).add(&Poly(vec![1.0]));
                Some(one_h.mul(&one_h))
            }
            MetricSpec::Revolution { b, .. } => Some(Poly(b.clone())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MetricSpec::RoundSphere { n } if *n < 2 => {
                Err(Error::InvalidInput(format!("sphere dimension {n} < 2")))
            }
            MetricSpec::RoundSphere { .. } => Ok(()),
            MetricSpec::Zoll { h } => {
                if h.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidInput("non-finite coefficient in h".into()));
                }
                if h.iter().step_by(2).any(|c| c.abs() > 1e-14) {
                    return Err(Error::InvalidInput("h must be odd".into()));
                }
                let hp = Poly(h.clone());
                if hp.value(1.0).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "h(1) = {} must vanish",
                        hp.value(1.0)
                    )));
                }
                let (lo, hi) = hp.bounds_on_unit();
                if lo <= -1.0 || hi >= 1.0 {
                    return Err(Error::InvalidInput(format!(
                        "sup |h| must stay below 1 (bounds {lo:.3}, {hi:.3})"
                    )));
                }
                Ok(())
            }
            MetricSpec::Revolution { b, .. } => {
                if b.is_empty() || b.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidInput("bad coefficients for B".into()));
                }
                surface::Revolution::new(Poly(b.clone())).map(|_| ())
            }
        }
    }

    pub(crate) fn geometry(&self) -> Result<Box<dyn Geometry>> {
        self.validate()?;
        match self {
            MetricSpec::RoundSphere { n } => Ok(Box::new(sphere::RoundSphere { n: *n })),
            _ => Ok(Box::new(surface::Revolution::new(
                self.b_poly().expect("surface family"),
            )?)),
        }
    }

    /// Gauss curvature at height z for the surface families.
    pub fn gauss_curvature(&self, z: f64) -> Option<f64> {
        let b = self.b_poly()?;
        surface::Revolution::new(b).ok().map(|r| r.gauss_curvature(z))
    }
}

/// Position, velocity and a transported frame, all in ambient coordinates.
#[derive(Debug, Clone)]
pub(crate) struct State {
    pub x: Vector,
    pub v: Vector,
    pub frame: Vec<Vector>,
}

pub(crate) trait Geometry: Send + Sync {
    fn n(&self) -> usize;
    fn inner(&self, x: &Vector, a: &Vector, b: &Vector) -> f64;
    /// longest single integration call
    fn chunk(&self) -> f64;
    fn step(&self, s: &State, dt: f64) -> Result<State>;
    /// ⟨R(Eᵢ, ċ)ċ, Eⱼ⟩ and its derivative along the flow
    fn curvature(&self, s: &State) -> (Mat, Mat);
    fn clairaut(&self, s: &State) -> Option<f64>;
}

fn advance(geo: &dyn Geometry, s: &State, dt: f64) -> Result<State> {
    let pieces = (dt.abs() / geo.chunk()).ceil().max(1.0) as usize;
    let h = dt / pieces as f64;
    let mut cur = s.clone();
    for _ in 0..pieces {
        cur = geo.step(&cur, h)?;
    }
    Ok(cur)
}

fn g_norm(geo: &dyn Geometry, x: &Vector, a: &Vector) -> f64 {
    geo.inner(x, a, a).sqrt()
}

fn check_initial(geo: &dyn Geometry, x: &Vector, v: &Vector) -> Result<()> {
    let d = geo.n() + 1;
    if x.len() != d || v.len() != d {
        return Err(Error::InvalidInput(format!(
            "initial data must live in R^{d}"
        )));
    }
    if (x.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "|x0| = {} is not on the unit sphere",
            x.norm()
        )));
    }
    if x.dot(v).abs() > 1e-12 {
        return Err(Error::InvalidInput("v0 is not tangent at x0".into()));
    }
    let speed = geo.inner(x, v, v);
    if (speed - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "initial speed² = {speed} is not 1"
        )));
    }
    Ok(())
}

/// Projects (x, v) to a unit-speed initial condition.
pub fn unit_initial(metric: &MetricSpec, x: &[f64], v: &[f64]) -> Result<(Vector, Vector)> {
    let geo = metric.geometry()?;
    let d = geo.n() + 1;
    if x.len() != d || v.len() != d {
        return Err(Error::InvalidInput(format!("expected vectors in R^{d}")));
    }
    let x = Vector::from_column_slice(x);
    let xn = x.norm();
    if xn < 1e-12 {
        return Err(Error::InvalidInput("x0 = 0".into()));
    }
    let x = x / xn;
    let v = Vector::from_column_slice(v);
    let v = &v - &x * v.dot(&x);
    let s = g_norm(geo.as_ref(), &x, &v);
    if s < 1e-12 {
        return Err(Error::InvalidInput("v0 has no tangential part".into()));
    }
    Ok((x, v / s))
}

pub fn random_unit_initial<R: Rng>(metric: &MetricSpec, rng: &mut R) -> Result<(Vector, Vector)> {
    let d = metric.dim() + 1;
    let x: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
    let v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
    unit_initial(metric, &x, &v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicPath {
    pub samples: Vec<PathSample>,
    pub speed_drift: f64,
    pub clairaut_drift: Option<f64>,
}

fn sample_of(t: f64, s: &State) -> PathSample {
    PathSample {
        t,
        x: s.x.iter().copied().collect(),
        v: s.v.iter().copied().collect(),
    }
}

fn state_of(p: &PathSample) -> State {
    State {
        x: Vector::from_column_slice(&p.x),
        v: Vector::from_column_slice(&p.v),
        frame: Vec::new(),
    }
}

/// Unit-speed geodesic on [0, length], sampled every 0.02.
pub fn integrate_geodesic(
    metric: &MetricSpec,
    x0: &[f64],
    v0: &[f64],
    length: f64,
) -> Result<GeodesicPath> {
    let geo = metric.geometry()?;
    let geo = geo.as_ref();
    let x = Vector::from_column_slice(x0);
    let v = Vector::from_column_slice(v0);
    check_initial(geo, &x, &v)?;
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::InvalidInput(format!("length {length}")));
    }
    let mut s = State {
        x,
        v,
        frame: Vec::new(),
    };
    let c0 = geo.clairaut(&s);
    let mut speed_drift: f64 = 0.0;
    let mut cl_drift: f64 = 0.0;
    let n = (length / SAMPLE_DT).ceil() as usize;
    let h = length / n as f64;
    let mut samples = vec![sample_of(0.0, &s)];
    for k in 1..=n {
        s = advance(geo, &s, h)?;
        speed_drift = speed_drift.max((geo.inner(&s.x, &s.v, &s.v) - 1.0).abs());
        if let (Some(a), Some(b)) = (c0, geo.clairaut(&s)) {
            cl_drift = cl_drift.max((a - b).abs());
        }
        samples.push(sample_of(k as f64 * h, &s));
    }
    Ok(GeodesicPath {
        samples,
        speed_drift,
        clairaut_drift: c0.map(|_| cl_drift),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Closure {
    pub period: f64,
    pub residual: f64,
}

fn phase_distance(a: &State, b: &State) -> f64 {
    (&a.x - &b.x).norm() + (&a.v - &b.v).norm()
}

/// First return of (x, v) to its initial value within 1e-6.
pub fn detect_closure(metric: &MetricSpec, path: &GeodesicPath) -> Result<Closure> {
    let geo = metric.geometry()?;
    let geo = geo.as_ref();
    let pts = &path.samples;
    let horizon = pts.last().map(|p| p.t).unwrap_or(0.0);
    if pts.len() < 3 {
        return Err(Error::NotClosed { horizon });
    }
    let s0 = state_of(&pts[0]);
    let d: Vec<f64> = pts
        .iter()
        .map(|p| phase_distance(&state_of(p), &s0))
        .collect();
    let mut armed = false;
    for k in 1..pts.len() - 1 {
        armed |= d[k] > CLOSE_ARM;
        if !armed || d[k] > CLOSE_SCREEN || d[k] > d[k - 1] || d[k] > d[k + 1] {
            continue;
        }
        let base = state_of(&pts[k - 1]);
        let tb = pts[k - 1].t;
        let f = |t: f64| -> Result<f64> {
            Ok(phase_distance(&advance(geo, &base, t - tb)?, &s0))
        };
        let (t, r) = golden_min(f, tb, pts[k + 1].t)?;
        if r <= TOL_CLOSE {
            return Ok(Closure {
                period: t,
                residual: r,
            });
        }
    }
    Err(Error::NotClosed { horizon })
}

fn golden_min<F: Fn(f64) -> Result<f64>>(f: F, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > CLOSE_LOC {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    let t = 0.5 * (a + b);
    Ok((t, f(t)?))
}

/// A closed unit-speed geodesic with its period and conservation checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicRecord {
    pub metric: MetricSpec,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub period: f64,
    pub closure_residual: f64,
    pub speed_drift: f64,
    pub clairaut_drift: Option<f64>,
    /// E = ℓ²
    pub energy: f64,
    /// ℓ²/2, the other common normalization
    pub half_energy: f64,
    pub samples: Vec<PathSample>,
}

pub fn trace_closed_geodesic(
    metric: &MetricSpec,
    x0: &[f64],
    v0: &[f64],
    horizon: f64,
) -> Result<GeodesicRecord> {
    let path = integrate_geodesic(metric, x0, v0, horizon)?;
    let cl = detect_closure(metric, &path)?;
    let samples = path
        .samples
        .into_iter()
        .filter(|p| p.t <= cl.period)
        .collect();
    Ok(GeodesicRecord {
        metric: metric.clone(),
        x0: x0.to_vec(),
        v0: v0.to_vec(),
        period: cl.period,
        closure_residual: cl.residual,
        speed_drift: path.speed_drift,
        clairaut_drift: path.clairaut_drift,
        energy: cl.period * cl.period,
        half_energy: 0.5 * cl.period * cl.period,
        samples,
    })
}

/// g-orthonormal frame of ċ⊥ from the projected coordinate axes.
fn initial_frame(geo: &dyn Geometry, x: &Vector, v: &Vector) -> Result<Vec<Vector>> {
    let d = geo.n() + 1;
    let m = geo.n() - 1;
    let mut frame: Vec<Vector> = Vec::new();
    for k in 0..d {
        let mut a = -x * x[k];
        a[k] += 1.0;
        for _ in 0..2 {
            let c = geo.inner(x, &a, v);
            a -= v * c;
            for u in &frame {
                let c = geo.inner(x, &a, u);
                a -= u * c;
            }
        }
        let nrm = g_norm(geo, x, &a);
        if nrm > 0.2 {
            frame.push(a / nrm);
        }
        if frame.len() == m {
            return Ok(frame);
        }
    }
    Err(Error::ContractViolation(
        "could not complete a normal frame".into(),
    ))
}

fn polar(h: &Mat) -> Mat {
    let svd = h.clone().svd(true, true);
    svd.u.expect("u") * svd.v_t.expect("v_t")
}

/// Parallel transport over one lap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTransport {
    /// Hᵢⱼ = g(Eᵢ(0), Eⱼ(ℓ)), so E(ℓ) = E(0)·H
    #[serde(with = "serde_rows")]
    pub holonomy: Mat,
    pub orthogonality_defect: f64,
    /// ambient mismatch between E(ℓ) and E(0)·H
    pub closure_defect: f64,
}

fn frame_holonomy(geo: &dyn Geometry, s0: &State, s1: &State) -> Result<FrameTransport> {
    let m = s0.frame.len();
    let h = Mat::from_fn(m, m, |i, j| geo.inner(&s0.x, &s0.frame[i], &s1.frame[j]));
    let mut closure_defect: f64 = (&s1.x - &s0.x).norm();
    for j in 0..m {
        let mut e = s1.frame[j].clone();
        for i in 0..m {
            e -= &s0.frame[i] * h[(i, j)];
        }
        closure_defect = closure_defect.max(e.norm());
    }
    let od = orthogonality_defect(&h);
    if od > TOL_FRAME {
        return Err(Error::ContractViolation(format!(
            "transported frame lost orthonormality ({od:.2e})"
        )));
    }
    Ok(FrameTransport {
        holonomy: h,
        orthogonality_defect: od,
        closure_defect,
    })
}

pub fn transport_frame(metric: &MetricSpec, rec: &GeodesicRecord) -> Result<FrameTransport> {
    let geo = metric.geometry()?;
    let geo = geo.as_ref();
    let x = Vector::from_column_slice(&rec.x0);
    let v = Vector::from_column_slice(&rec.v0);
    check_initial(geo, &x, &v)?;
    let s0 = State {
        frame: initial_frame(geo, &x, &v)?,
        x,
        v,
    };
    let s1 = advance(geo, &s0, rec.period)?;
    frame_holonomy(geo, &s0, &s1)
}

/// Normal data of the k-fold cover of a closed geodesic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub formal: FormalGeodesic,
    pub laps: usize,
    /// one-lap transport
    pub transport: FrameTransport,
}

/// Samples R and R′ on a uniform grid of `per_lap` cells per lap over k
/// laps; the twist closes x(kℓ) = A x(0) for parallel coordinates x.
pub fn extract_formal(
    metric: &MetricSpec,
    rec: &GeodesicRecord,
    laps: usize,
    per_lap: usize,
) -> Result<Extraction> {
    extract_formal_with_frame(metric, rec, laps, per_lap, None)
}

/// As [`extract_formal`], starting from a caller-supplied frame (g-orthonormal,
/// normal to ċ(0)).
pub fn extract_formal_with_frame(
    metric: &MetricSpec,
    rec: &GeodesicRecord,
    laps: usize,
    per_lap: usize,
    frame: Option<&[Vec<f64>]>,
) -> Result<Extraction> {
    if laps == 0 || per_lap < 8 {
        return Err(Error::InvalidInput("need laps ≥ 1 and per_lap ≥ 8".into()));
    }
    let geo = metric.geometry()?;
    let geo = geo.as_ref();
    let x = Vector::from_column_slice(&rec.x0);
    let v = Vector::from_column_slice(&rec.v0);
    check_initial(geo, &x, &v)?;
    let frame = match frame {
        None => initial_frame(geo, &x, &v)?,
        Some(f) => {
            let f: Vec<Vector> = f.iter().map(|e| Vector::from_column_slice(e)).collect();
            let m = geo.n() - 1;
            let mut worst: f64 = 0.0;
            for i in 0..f.len() {
                worst = worst.max(geo.inner(&x, &f[i], &v).abs());
                for j in 0..f.len() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((geo.inner(&x, &f[i], &f[j]) - want).abs());
                }
            }
            if f.len() != m || worst > 1e-10 {
                return Err(Error::InvalidInput(
                    "frame must be g-orthonormal and normal to v0".into(),
                ));
            }
            f
        }
    };
    let s0 = State { x, v, frame };
    let h = rec.period / per_lap as f64;
    let total = laps * per_lap;
    let mut ts = Vec::with_capacity(total + 1);
    let mut values = Vec::with_capacity(total + 1);
    let mut slopes = Vec::with_capacity(total + 1);
    let mut s = s0.clone();
    let mut one_lap = None;
    for j in 0..=total {
        let (r, dr) = geo.curvature(&s);
        ts.push(j as f64 * h);
        values.push(symmetrize(&r));
        slopes.push(symmetrize(&dr));
        if j == per_lap {
            one_lap = Some(frame_holonomy(geo, &s0, &s)?);
        }
        if j < total {
            s = advance(geo, &s, h)?;
        }
    }
    let all = frame_holonomy(geo, &s0, &s)?;
    let profile = CurvatureProfile::sampled_with_slopes(ts, values, slopes)?;
    let a = polar(&all.holonomy).transpose();
    let formal = FormalGeodesic::new(
        profile,
        a,
        format!("{} x{laps}", metric.label()),
    )?;
    Ok(Extraction {
        formal,
        laps,
        transport: one_lap.expect("per_lap ≤ total"),
    })
}

/// Linearization of the return map on the unit tangent bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// 2n − 1 − rank
    pub dimension: usize,
    /// a singular value fell between the zero and clear thresholds
    pub degraded: bool,
}

/// Estimates the dimension of the critical manifold through a closed
/// geodesic from central differences of Φ_ℓ − Id on T¹M.
pub fn probe_critical_manifold(metric: &MetricSpec, rec: &GeodesicRecord) -> Result<ProbeReport> {
    let geo = metric.geometry()?;
    let geo = geo.as_ref();
    let n = geo.n();
    let d = n + 1;
    let x = Vector::from_column_slice(&rec.x0);
    let v = Vector::from_column_slice(&rec.v0);
    check_initial(geo, &x, &v)?;
    let ret = |x: &Vector, v: &Vector| -> Result<Vector> {
        let s = State {
            x: x.clone(),
            v: v.clone(),
            frame: Vec::new(),
        };
        let e = advance(geo, &s, rec.period)?;
        let mut out = Vector::zeros(2 * d);
        for i in 0..d {
            out[i] = e.x[i] - x[i];
            out[d + i] = e.v[i] - v[i];
        }
        Ok(out)
    };
    let unit = |x: &Vector, v: &Vector| -> (Vector, Vector) {
        let x = x / x.norm();
        let v = v - &x * v.dot(&x);
        let s = g_norm(geo, &x, &v);
        (x, v / s)
    };
    // n directions moving the base point, n − 1 turning the velocity
    let mut dirs: Vec<(Vector, Vector)> = Vec::new();
    let tangent = crate::linalg::null_space(&Mat::from_row_slice(1, d, x.as_slice()));
    for k in 0..tangent.ncols() {
        dirs.push((tangent.column(k).into_owned(), Vector::zeros(d)));
    }
    for e in initial_frame(geo, &x, &v)? {
        dirs.push((Vector::zeros(d), e));
    }
    let mut jac = Mat::zeros(2 * d, dirs.len());
    for (k, (dx, dv)) in dirs.iter().enumerate() {
        let (xp, vp) = unit(&(&x + dx * PROBE_STEP), &(&v + dv * PROBE_STEP));
        let (xm, vm) = unit(&(&x - dx * PROBE_STEP), &(&v - dv * PROBE_STEP));
        let col = (ret(&xp, &vp)? - ret(&xm, &vm)?) / (2.0 * PROBE_STEP);
        jac.set_column(k, &col);
    }
    let mut sv: Vec<f64> = jac.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let rank = sv.iter().filter(|&&s| s > PROBE_ZERO).count();
    let degraded = sv.iter().any(|&s| s > PROBE_ZERO && s < PROBE_CLEAR);
    Ok(ProbeReport {
        singular_values: sv,
        rank,
        dimension: 2 * n - 1 - rank,
        degraded,
    })
}

/// ind ≡ n + 1 (mod 2) for closed geodesics of a Besse n-manifold.
pub fn parity_consistent(n: usize, ind: i64) -> bool {
    (ind - n as i64 - 1).rem_euclid(2) == 0
}
