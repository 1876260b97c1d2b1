//! Surfaces of revolution B(cos θ) dθ² + sin²θ dφ² on S², integrated in
//! three charts: an equatorial band in (θ, φ) and the two polar caps in
//! the horizontal coordinates u = (X₀, X₁).

use num_dual::{Dual64, DualNum};

use super::{Geometry, State};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::ode::{dopri5, OdeOptions};

// polar caps are used for θ < POLE_CAP and θ > π − POLE_CAP
const POLE_CAP: f64 = 0.1;

/// Polynomial with ascending coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn eval<D: DualNum<f64> + Copy>(&self, x: D) -> D {
        let mut acc = D::from(0.0);
        for c in self.0.iter().rev() {
            acc = acc * x + D::from(*c);
        }
        acc
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x)
    }

    pub fn deriv(&self) -> Poly {
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        if self.0.is_empty() || o.0.is_empty() {
            return Poly(Vec::new());
        }
        let mut c = vec![0.0; self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly(c)
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let n = self.0.len().max(o.0.len());
        Poly(
            (0..n)
                .map(|k| self.0.get(k).copied().unwrap_or(0.0) + o.0.get(k).copied().unwrap_or(0.0))
                .collect(),
        )
    }

    /// p(−x)
    pub fn reflect(&self) -> Poly {
        Poly(
            self.0
                .iter()
                .enumerate()
                .map(|(k, c)| if k % 2 == 1 { -c } else { *c })
                .collect(),
        )
    }

    /// (q, r) with p(x) = (x − 1) q(x) + r.
    pub fn div_x_minus_1(&self) -> (Poly, f64) {
        let a = &self.0;
        if a.is_empty() {
            return (Poly(Vec::new()), 0.0);
        }
        let mut q = vec![0.0; a.len() - 1];
        let mut carry = 0.0;
        for k in (1..a.len()).rev() {
            carry += a[k];
            q[k - 1] = carry;
        }
        (Poly(q), a[0] + carry)
    }

    /// Lower and upper bounds of p on [−1, 1] from dense sampling plus the
    /// Lipschitz slack.
    pub fn bounds_on_unit(&self) -> (f64, f64) {
        let n = 4000;
        let lip: f64 = self
            .0
            .iter()
            .enumerate()
            .map(|(k, c)| k as f64 * c.abs())
            .sum();
        let slack = lip / n as f64;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..=n {
            let x = -1.0 + 2.0 * i as f64 / n as f64;
            let v = self.value(x);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo - slack, hi + slack)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Chart {
    Band,
    North,
    South,
}

fn chart_for(x: &Vector) -> Chart {
    let c = POLE_CAP.cos();
    if x[2] > c {
        Chart::North
    } else if x[2] < -c {
        Chart::South
    } else {
        Chart::Band
    }
}

pub(crate) struct Revolution {
    b: Poly,
    // B(x) − x² = (x − 1) qn(x), and the same for B(−x)
    qn: Poly,
    qs: Poly,
    chunk: f64,
}

impl Revolution {
    pub fn new(b: Poly) -> Result<Self> {
        let (lo, _) = b.bounds_on_unit();
        if lo <= 0.0 {
            return Err(Error::InvalidInput(
                "B must be positive on [-1, 1]".into(),
            ));
        }
        for end in [1.0, -1.0] {
            if (b.value(end) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "B({end}) = {} but smoothness at the poles needs 1",
                    b.value(end)
                )));
            }
        }
        let minus_sq = Poly(vec![0.0, 0.0, -1.0]);
        let (qn, _) = b.add(&minus_sq).div_x_minus_1();
        let (qs, _) = b.reflect().add(&minus_sq).div_x_minus_1();
        Ok(Revolution {
            chunk: 0.02 * lo.sqrt().min(1.0),
            b,
            qn,
            qs,
        })
    }

    fn metric<D: DualNum<f64> + Copy>(&self, chart: Chart, q: [D; 2]) -> [[D; 2]; 2] {
        match chart {
            Chart::Band => {
                let z = q[0].cos();
                let s = q[0].sin();
                let zero = D::from(0.0);
                [[self.b.eval(z), zero], [zero, s * s]]
            }
            Chart::North | Chart::South => {
                let qq = if chart == Chart::North {
                    &self.qn
                } else {
                    &self.qs
                };
                let one = D::from(1.0);
                let s = q[0] * q[0] + q[1] * q[1];
                let c = (one - s).sqrt();
                let psi = -qq.eval(c) / ((one + c) * c * c);
                [
                    [one + psi * q[0] * q[0], psi * q[0] * q[1]],
                    [psi * q[0] * q[1], one + psi * q[1] * q[1]],
                ]
            }
        }
    }

    /// Γ[k][i][j]
    fn christoffel(&self, chart: Chart, q: [f64; 2]) -> [[[f64; 2]; 2]; 2] {
        let mut g = [[0.0; 2]; 2];
        let mut dg = [[[0.0; 2]; 2]; 2];
        for (l, dgl) in dg.iter_mut().enumerate() {
            let qd = [
                Dual64::new(q[0], if l == 0 { 1.0 } else { 0.0 }),
                Dual64::new(q[1], if l == 1 { 1.0 } else { 0.0 }),
            ];
            let gd = self.metric(chart, qd);
            for i in 0..2 {
                for j in 0..2 {
                    g[i][j] = gd[i][j].re;
                    dgl[i][j] = gd[i][j].eps;
                }
            }
        }
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let gi = [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]];
        let mut gam = [[[0.0; 2]; 2]; 2];
        for (k, gk) in gam.iter_mut().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    let mut acc = 0.0;
                    for l in 0..2 {
                        acc += gi[k][l] * (dg[i][l][j] + dg[j][l][i] - dg[l][i][j]);
                    }
                    gk[i][j] = 0.5 * acc;
                }
            }
        }
        gam
    }

    fn coords(chart: Chart, x: &Vector) -> [f64; 2] {
        match chart {
            Chart::Band => [
                (x[0] * x[0] + x[1] * x[1]).sqrt().atan2(x[2]),
                x[1].atan2(x[0]),
            ],
            _ => [x[0], x[1]],
        }
    }

    fn embed(chart: Chart, q: [f64; 2]) -> Vector {
        match chart {
            Chart::Band => {
                let (st, ct) = q[0].sin_cos();
                let (sp, cp) = q[1].sin_cos();
                Vector::from_vec(vec![st * cp, st * sp, ct])
            }
            Chart::North | Chart::South => {
                let z = (1.0 - q[0] * q[0] - q[1] * q[1]).max(0.0).sqrt();
                let z = if chart == Chart::North { z } else { -z };
                Vector::from_vec(vec![q[0], q[1], z])
            }
        }
    }

    fn push(chart: Chart, q: [f64; 2], w: [f64; 2]) -> Vector {
        match chart {
            Chart::Band => {
                let (st, ct) = q[0].sin_cos();
                let (sp, cp) = q[1].sin_cos();
                Vector::from_vec(vec![
                    w[0] * ct * cp - w[1] * st * sp,
                    w[0] * ct * sp + w[1] * st * cp,
                    -w[0] * st,
                ])
            }
            Chart::North | Chart::South => {
                let x = Self::embed(chart, q);
                Vector::from_vec(vec![w[0], w[1], -(q[0] * w[0] + q[1] * w[1]) / x[2]])
            }
        }
    }

    fn pull(chart: Chart, q: [f64; 2], a: &Vector) -> [f64; 2] {
        match chart {
            Chart::Band => {
                let (st, ct) = q[0].sin_cos();
                let (sp, cp) = q[1].sin_cos();
                let at = a[0] * ct * cp + a[1] * ct * sp - a[2] * st;
                let ap = -a[0] * sp + a[1] * cp;
                [at, ap / st]
            }
            _ => [a[0], a[1]],
        }
    }

    fn gauss(&self, z: Dual64) -> Dual64 {
        let b = self.b.eval(z);
        let db = self.b.deriv().eval(z);
        b.recip() - z * db / (b * b * 2.0)
    }

    pub fn gauss_curvature(&self, z: f64) -> f64 {
        self.gauss(Dual64::new(z, 0.0)).re
    }
}

impl Geometry for Revolution {
    fn n(&self) -> usize {
        2
    }

    fn inner(&self, x: &Vector, a: &Vector, b: &Vector) -> f64 {
        let chart = chart_for(x);
        let q = Self::coords(chart, x);
        let g = self.metric(chart, q);
        let (wa, wb) = (Self::pull(chart, q, a), Self::pull(chart, q, b));
        let mut acc = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                acc += wa[i] * g[i][j] * wb[j];
            }
        }
        acc
    }

    fn chunk(&self) -> f64 {
        self.chunk
    }

    fn step(&self, s: &State, dt: f64) -> Result<State> {
        let chart = chart_for(&s.x);
        let q = Self::coords(chart, &s.x);
        let nf = s.frame.len();
        let mut y = Vec::with_capacity(4 + 2 * nf);
        y.extend_from_slice(&q);
        y.extend_from_slice(&Self::pull(chart, q, &s.v));
        for e in &s.frame {
            y.extend_from_slice(&Self::pull(chart, q, e));
        }
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            let gam = self.christoffel(chart, [y[0], y[1]]);
            let w = [y[2], y[3]];
            dy[0] = w[0];
            dy[1] = w[1];
            for k in 0..2 {
                let mut acc = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        acc += gam[k][i][j] * w[i] * w[j];
                    }
                }
                dy[2 + k] = -acc;
            }
            for f in 0..nf {
                let e = [y[4 + 2 * f], y[5 + 2 * f]];
                for k in 0..2 {
                    let mut acc = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            acc += gam[k][i][j] * w[i] * e[j];
                        }
                    }
                    dy[4 + 2 * f + k] = -acc;
                }
            }
        };
        let sol = dopri5(rhs, 0.0, dt, &y, &OdeOptions::default(), false)?;
        let y = sol.y;
        let q1 = [y[0], y[1]];
        if chart != Chart::Band && q1[0] * q1[0] + q1[1] * q1[1] >= 1.0 {
            return Err(Error::ChartFailure(format!(
                "left the polar cap at u = ({}, {})",
                q1[0], q1[1]
            )));
        }
        Ok(State {
            x: Self::embed(chart, q1),
            v: Self::push(chart, q1, [y[2], y[3]]),
            frame: (0..nf)
                .map(|f| Self::push(chart, q1, [y[4 + 2 * f], y[5 + 2 * f]]))
                .collect(),
        })
    }

    fn curvature(&self, s: &State) -> (Mat, Mat) {
        let m = s.frame.len();
        let k = self.gauss(Dual64::new(s.x[2], 1.0));
        let vv = self.inner(&s.x, &s.v, &s.v);
        let mut r = Mat::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let (ei, ej) = (&s.frame[i], &s.frame[j]);
                r[(i, j)] = vv * self.inner(&s.x, ei, ej)
                    - self.inner(&s.x, ei, &s.v) * self.inner(&s.x, ej, &s.v);
            }
        }
        // parallel fields keep the bracket constant, only K(z(t)) moves
        let dr = &r * (k.eps * s.v[2]);
        (r * k.re, dr)
    }

    fn clairaut(&self, s: &State) -> Option<f64> {
        let axial = Vector::from_vec(vec![-s.x[1], s.x[0], 0.0]);
        Some(self.inner(&s.x, &s.v, &axial))
    }
}
