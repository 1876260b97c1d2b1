//! Round unit sphere Sⁿ ⊂ ℝⁿ⁺¹ in ambient coordinates.

use super::{Geometry, State};
use crate::error::Result;
use crate::linalg::{Mat, Vector};
use crate::ode::{dopri5, OdeOptions};

pub(crate) struct RoundSphere {
    pub n: usize,
}

impl Geometry for RoundSphere {
    fn n(&self) -> usize {
        self.n
    }

    fn inner(&self, _x: &Vector, a: &Vector, b: &Vector) -> f64 {
        a.dot(b)
    }

    fn chunk(&self) -> f64 {
        0.25
    }

    fn step(&self, s: &State, dt: f64) -> Result<State> {
        let d = self.n + 1;
        let nf = s.frame.len();
        let mut y = Vec::with_capacity(d * (2 + nf));
        y.extend(s.x.iter());
        y.extend(s.v.iter());
        for e in &s.frame {
            y.extend(e.iter());
        }
        // x' = v, v' = −|v|² x, E' = −(E·v) x
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            let (x, rest) = y.split_at(d);
            let (v, es) = rest.split_at(d);
            let vv: f64 = v.iter().map(|a| a * a).sum();
            for i in 0..d {
                dy[i] = v[i];
                dy[d + i] = -vv * x[i];
            }
            for f in 0..nf {
                let e = &es[f * d..(f + 1) * d];
                let ev: f64 = e.iter().zip(v).map(|(a, b)| a * b).sum();
                for i in 0..d {
                    dy[(2 + f) * d + i] = -ev * x[i];
                }
            }
        };
        let y = dopri5(rhs, 0.0, dt, &y, &OdeOptions::default(), false)?.y;
        let mut x = Vector::from_column_slice(&y[..d]);
        x /= x.norm();
        let tangent = |a: &[f64]| {
            let a = Vector::from_column_slice(a);
            let c = a.dot(&x);
            a - &x * c
        };
        let v = tangent(&y[d..2 * d]);
        let frame = (0..nf)
            .map(|f| tangent(&y[(2 + f) * d..(3 + f) * d]))
            .collect();
        Ok(State { x, v, frame })
    }

    fn curvature(&self, s: &State) -> (Mat, Mat) {
        let m = s.frame.len();
        let vv = s.v.dot(&s.v);
        let r = Mat::from_fn(m, m, |i, j| {
            vv * s.frame[i].dot(&s.frame[j]) - s.frame[i].dot(&s.v) * s.frame[j].dot(&s.v)
        });
        (r, Mat::zeros(m, m))
    }

    fn clairaut(&self, _s: &State) -> Option<f64> {
        None
    }
}
