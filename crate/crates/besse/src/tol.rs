//! Numerical tolerances shared across modules.

use serde::{Deserialize, Serialize};

pub const TOL_SP: f64 = 1e-9;
pub const TOL_EIG: f64 = 1e-7;
pub const TOL_BLOCK: f64 = 1e-6;
pub const TOL_RANK: f64 = 1e-8;
pub const RANK_GAP_RATIO: f64 = 10.0;
pub const TOL_ORTHO: f64 = 1e-10;
pub const TOL_SYM: f64 = 1e-12;

pub const ODE_RTOL: f64 = 1e-11;
pub const ODE_ATOL: f64 = 1e-13;

pub const CONJ_DIP: f64 = 1e-7;
pub const CONJ_LOC: f64 = 1e-10;
pub const CONCAVITY_ASYM: f64 = 1e-8;
pub const EPS_NULL: f64 = 1e-7;
pub const ITERATION_LAW: f64 = 1e-8;

pub const HESSIAN_NMAX: usize = 1 << 14;

pub const REALIZE_RESIDUAL: f64 = 1e-7;
pub const REALIZE_MAX_ITER: usize = 50;
pub const REALIZE_DELTA: f64 = 0.25;

pub const TOL_CLOSE: f64 = 1e-6;
pub const TOL_ENERGY: f64 = 1e-9;
pub const TOL_FRAME: f64 = 1e-8;

pub const LIFT_MAX_ANGLE: f64 = std::f64::consts::FRAC_PI_2;
pub const TRANSITION_LOC: f64 = 1e-10;
pub const PAIRING_EIG: f64 = 1e-6;
pub const PAIRING_ANGLE: f64 = 1e-4;
pub const GENERIC_MAX_PERTURB: f64 = 1e-4;
pub const GENERIC_MAX_ROUNDS: usize = 100;
pub const TRANSITION_SAME_PLACE: f64 = 1e-8;
pub const TRANSPORT_MIN_SV: f64 = 0.5;
pub const REAL_EIG_IM: f64 = 1e-9;
pub const BOUNDARY_TAU: f64 = 1e-3;
pub const BOUNDARY_REAL_DIST: f64 = 1e-3;

pub const LEDGER_CAP: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TolProfile {
    #[default]
    Default,
    Strict,
}

/// Scaled tolerance bundle; `strict` tightens the ODE and rank budgets.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    pub sp: f64,
    pub eig: f64,
    pub block: f64,
    pub rank: f64,
    pub ode_rtol: f64,
    pub ode_atol: f64,
    pub close: f64,
}

impl Tolerances {
    pub fn for_profile(p: TolProfile) -> Self {
        let base = Tolerances {
            sp: TOL_SP,
            eig: TOL_EIG,
            block: TOL_BLOCK,
            rank: TOL_RANK,
            ode_rtol: ODE_RTOL,
            ode_atol: ODE_ATOL,
            close: TOL_CLOSE,
        };
        match p {
            TolProfile::Default => base,
            TolProfile::Strict => Tolerances {
                ode_rtol: 1e-12,
                ode_atol: 1e-14,
                close: 1e-7,
                ..base
            },
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::for_profile(TolProfile::Default)
    }
}
