//! Dormand–Prince 5(4) with step-size control and optional step recording.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol::{ODE_ATOL, ODE_RTOL};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on |h|; `f64::INFINITY` for none.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: ODE_RTOL,
            atol: ODE_ATOL,
            h_max: f64::INFINITY,
            max_steps: 2_000_000,
        }
    }
}

impl OdeOptions {
    pub fn with_h_max(self, h_max: f64) -> Self {
        OdeOptions { h_max, ..self }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl Stats {
    pub fn add(&mut self, o: &Stats) {
        self.accepted += o.accepted;
        self.rejected += o.rejected;
        self.evaluations += o.evaluations;
    }
}

/// Final state plus, when requested, every accepted step `(t, y)`
/// including both endpoints.
#[derive(Debug, Clone)]
pub struct Solution {
    pub y: Vec<f64>,
    pub steps: Vec<(f64, Vec<f64>)>,
    pub stats: Stats,
}

fn err_norm(y: &[f64], y1: &[f64], e: &[f64], o: &OdeOptions) -> f64 {
    let mut acc = 0.0;
    for i in 0..y.len() {
        let sc = o.atol + o.rtol * y[i].abs().max(y1[i].abs());
        acc += (e[i] / sc).powi(2);
    }
    (acc / y.len().max(1) as f64).sqrt()
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction).
pub fn dopri5<F>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: &[f64],
    o: &OdeOptions,
    record: bool,
) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut steps = Vec::new();
    if record {
        steps.push((t0, y.clone()));
    }
    let mut stats = Stats::default();
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(Solution { y, steps, stats });
    }
    let dir = span.signum();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut errv = vec![0.0; n];

    f(t0, &y, &mut k[0]);
    stats.evaluations += 1;
    let mut h = (span.abs() * 1e-3)
        .max(span.abs().min(1e-6))
        .min(0.05)
        .min(o.h_max);
    let mut t = t0;
    let mut done = false;
    while !done {
        if stats.accepted + stats.rejected >= o.max_steps {
            return Err(Error::IntegrationFailed {
                t,
                reason: "step budget exhausted".into(),
            });
        }
        let remaining = (t1 - t).abs();
        let mut last = false;
        if h >= remaining || remaining <= 1e-12 * (1.0 + t.abs()) {
            h = remaining;
            last = true;
        }
        if !last && h < 1e-14 * (1.0 + t.abs()) {
            return Err(Error::IntegrationFailed {
                t,
                reason: format!("step size underflow ({h:.2e})"),
            });
        }
        let hs = dir * h;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * k[j][i];
                }
                tmp[i] = y[i] + hs * acc;
            }
            f(t + C[s] * hs, &tmp, &mut k[s]);
            if s == 6 {
                y1.copy_from_slice(&tmp);
            }
        }
        stats.evaluations += 6;
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..7 {
                acc += E[j] * k[j][i];
            }
            errv[i] = hs * acc;
        }
        let err = err_norm(&y, &y1, &errv, o);
        if !err.is_finite() {
            return Err(Error::IntegrationFailed {
                t,
                reason: "non-finite state".into(),
            });
        }
        if err <= 1.0 {
            stats.accepted += 1;
            t = if last { t1 } else { t + hs };
            std::mem::swap(&mut y, &mut y1);
            let k6 = std::mem::take(&mut k[6]);
            k[6] = std::mem::replace(&mut k[0], k6);
            if record {
                steps.push((t, y.clone()));
            }
            done = last;
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (h * fac).min(o.h_max);
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
    Ok(Solution { y, steps, stats })
}
