//! Exact replay of the contradiction cascade for a Besse sphere whose
//! geodesic flow is assumed not to act freely.
//!
//! A scenario fixes n, the multiplicity m of the short geodesics and the
//! dimension of the critical set C of lowest index. Every step stores its
//! inputs and its conclusion; `replay` recomputes each conclusion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morse_ledger::{loopspace_integral, loopspace_series, minimal_index, quotient_cohomology, Cross};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BergerScenario {
    pub n: usize,
    pub m: usize,
    pub dim_c: usize,
}

impl BergerScenario {
    pub fn new(n: usize, m: usize, dim_c: usize) -> Result<Self> {
        let sc = BergerScenario { n, m, dim_c };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        let BergerScenario { n, m, dim_c } = *self;
        if n < 4 {
            return Err(Error::InvalidScenario(format!("n = {n} < 4")));
        }
        if m == 0 {
            return Err(Error::InvalidScenario("m ≥ 1".into()));
        }
        if dim_c % 2 == 0 {
            return Err(Error::InvalidScenario(format!("dim C = {dim_c} is even")));
        }
        if m == 1 && dim_c != 2 * n - 1 {
            return Err(Error::InvalidScenario(format!(
                "m = 1 is the regular configuration, dim C = {}",
                2 * n - 1
            )));
        }
        if m >= 2 && dim_c > 2 * n - 3 {
            return Err(Error::InvalidScenario(format!(
                "dim C = {dim_c} > 2n − 3 for m = {m}"
            )));
        }
        Ok(())
    }

    pub fn even(&self) -> bool {
        self.n % 2 == 0
    }

    /// Series needed by every step, to this degree.
    fn cap(&self) -> usize {
        4 * self.n + 4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContradictionKind {
    Smith,
    SeriesCap,
    DimensionCount,
}

/// One rule application with all of its inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    /// lowest nonzero degree of H_{S¹}(ΛS^n, S^n;ℚ) and its coefficient
    MinimalIndex { n: usize, lowest_degree: usize, coefficient: i64 },
    /// short geodesics of length L/m; minimality of ind(C) forbids
    /// exceptional orbits in C
    FreeAction { m: usize },
    /// symplectic quotient C/S¹ of dimension dim C − 1
    SymplecticLower { quotient_dim: usize },
    /// H^{q+n−1}_{S¹}(ΛS^n, S^n;ℚ) for q ≤ range
    PerfectnessCap { shift: usize, range: usize, target: Vec<i64> },
    /// lower and upper bounds on H^q_{S¹}(C;ℚ) for q ≤ min(dim C/S¹, range)
    Squeeze { lower: Vec<i64>, upper: Vec<i64> },
    /// known degrees of H^*(C/S¹;ℚ) completed by Poincaré duality
    DualityCompletion { quotient_dim: usize, known: Vec<i64> },
    /// C′ analysis: target and C contributions at 2(n−1) and 2n
    SecondSetCases {
        n: usize,
        index: usize,
        target_at_index: i64,
        own_at_index: i64,
        target_above: i64,
        own_above: i64,
    },
    /// first degree not exhausted by C in the Morse sum
    IndexGap { shift: usize, own: Vec<i64>, target: Vec<i64>, gap_bound: usize },
    /// H^q(C;ℤ) = H^{q+n−1}(ΛS^n, S^n;ℤ) below the gap, as (rank, #torsion)
    IntegralTransfer { dim_c: usize, window: usize, table: Vec<(usize, usize)> },
    /// vanishing range 1..=m0 of H^*(C;ℤ) and the duality criterion
    SphereCriterion { dim_c: usize, m0: usize, bound_m0: usize, bound_slack: usize },
    /// ℤ₂ × ℤ₂ ⊂ O(2) acting freely on an integral cohomology sphere
    Smith { sphere: bool, klein_acts_freely: bool },
    /// m = 1: C = T¹S^n and its Morse contribution below the target
    Regular { shift: usize, own: Vec<i64>, target: Vec<i64> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Index { index: usize, components: i64 },
    Free { klein_acts_freely: bool },
    Lower { bounds: Vec<i64> },
    Upper { bounds: Vec<i64> },
    Filled { ranks: Vec<Option<i64>> },
    Quotient { ranks: Vec<i64>, half_covered: bool },
    Gap { min_other_index: usize, bound_holds: bool },
    Integral { ranks: Vec<(usize, usize)>, m0: usize },
    Sphere { sphere: bool, half_dim_bound: bool },
    Consistent,
    Contradiction { kind: ContradictionKind, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub rule: Rule,
    pub outcome: Outcome,
    pub anchor: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Contradiction,
    Consistent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContradictionTrace {
    pub scenario: BergerScenario,
    pub steps: Vec<TraceStep>,
    pub status: Status,
    pub terminal: Option<ContradictionKind>,
}

fn contradiction(kind: ContradictionKind, detail: String) -> Outcome {
    Outcome::Contradiction { kind, detail }
}

/// Conclusion of a rule from its inputs alone.
pub fn evaluate(rule: &Rule) -> Outcome {
    use ContradictionKind::*;
    match rule {
        Rule::MinimalIndex { n, lowest_degree, coefficient } => {
            if *lowest_degree != n - 1 {
                return contradiction(
                    DimensionCount,
                    format!("lowest degree {lowest_degree} ≠ n − 1"),
                );
            }
            Outcome::Index { index: *lowest_degree, components: *coefficient }
        }
        Rule::FreeAction { m } => Outcome::Free { klein_acts_freely: *m >= 2 },
        Rule::SymplecticLower { quotient_dim } => Outcome::Lower {
            bounds: (0..=*quotient_dim).map(|q| i64::from(q % 2 == 0)).collect(),
        },
        Rule::PerfectnessCap { target, .. } => Outcome::Upper { bounds: target.clone() },
        Rule::Squeeze { lower, upper } => {
            let mut ranks = vec![];
            for q in 0..lower.len().min(upper.len()) {
                if lower[q] > upper[q] {
                    return contradiction(
                        SeriesCap,
                        format!("degree {q}: lower bound {} > cap {}", lower[q], upper[q]),
                    );
                }
                ranks.push(if lower[q] == upper[q] { Some(lower[q]) } else { None });
            }
            Outcome::Filled { ranks }
        }
        Rule::DualityCompletion { quotient_dim, known } => {
            let d = *quotient_dim;
            let top = known.len().saturating_sub(1);
            let half_covered = 2 * top >= d;
            let ranks = (0..=d)
                .map(|q| {
                    if q <= top {
                        known[q]
                    } else if d - q <= top {
                        known[d - q]
                    } else {
                        -1
                    }
                })
                .collect();
            Outcome::Quotient { ranks, half_covered }
        }
        Rule::SecondSetCases {
            index,
            target_at_index,
            own_at_index,
            target_above,
            own_above,
            ..
        } => {
            // dim C′ = 1: γ(t) and γ(−t) give H⁰_{S¹}(C′) of dimension ≥ 2
            let one_dim = own_at_index + 2 > *target_at_index;
            // dim C′/S¹ ≥ 1: H²(C′/S¹;ℚ) ≠ 0 in degree index + 2
            let symplectic = own_above + 1 > *target_above;
            if one_dim && symplectic {
                contradiction(
                    SeriesCap,
                    format!(
                        "C′ of index {index}: {own_at_index} + 2 > {target_at_index} and {own_above} + 1 > {target_above}"
                    ),
                )
            } else {
                Outcome::Consistent
            }
        }
        Rule::IndexGap { shift, own, target, gap_bound } => {
            let mut gap = target.len();
            for (q, &t) in target.iter().enumerate() {
                let o = if q >= *shift { own.get(q - shift).copied().unwrap_or(0) } else { 0 };
                if o > t {
                    return contradiction(SeriesCap, format!("C alone exceeds the target in degree {q}"));
                }
                if o < t {
                    gap = q;
                    break;
                }
            }
            Outcome::Gap { min_other_index: gap, bound_holds: gap >= *gap_bound }
        }
        Rule::IntegralTransfer { dim_c, window, table } => {
            if table.first() != Some(&(1, 0)) {
                return contradiction(DimensionCount, "H⁰(C;ℤ) ≠ ℤ".into());
            }
            let ranks: Vec<(usize, usize)> = table.iter().take(window + 1).copied().collect();
            let m0 = (1..=*window)
                .find(|&q| ranks[q] != (0, 0))
                .map_or(*window, |q| q - 1)
                .min(dim_c.saturating_sub(1));
            Outcome::Integral { ranks, m0 }
        }
        Rule::SphereCriterion { dim_c, m0, bound_m0, bound_slack } => {
            // H^q = 0 on 1..=m0 and, by duality, on dim C − m0 + 1..dim C − 1
            let sphere = *m0 + 1 >= *dim_c || 2 * m0 >= *dim_c;
            Outcome::Sphere {
                sphere,
                half_dim_bound: 2 * bound_m0 >= dim_c + bound_slack,
            }
        }
        Rule::Smith { sphere, klein_acts_freely } => {
            if *sphere && *klein_acts_freely {
                contradiction(
                    Smith,
                    "ℤ₂ × ℤ₂ acts freely on an integral cohomology sphere; it must be cyclic".into(),
                )
            } else {
                Outcome::Consistent
            }
        }
        Rule::Regular { shift, own, target } => {
            for (q, &o) in own.iter().enumerate() {
                if q + shift < target.len() && o > target[q + shift] {
                    return contradiction(SeriesCap, format!("T¹S^n/S¹ exceeds the target in degree {}", q + shift));
                }
            }
            Outcome::Consistent
        }
    }
}

struct Builder {
    steps: Vec<TraceStep>,
}

impl Builder {
    fn push(&mut self, rule: Rule, anchor: &str) -> Outcome {
        let outcome = evaluate(&rule);
        self.steps.push(TraceStep { rule, outcome: outcome.clone(), anchor: anchor.into() });
        outcome
    }

    fn finish(self, scenario: BergerScenario) -> ContradictionTrace {
        let terminal = match self.steps.last().map(|s| &s.outcome) {
            Some(Outcome::Contradiction { kind, .. }) => Some(*kind),
            _ => None,
        };
        ContradictionTrace {
            scenario,
            steps: self.steps,
            status: if terminal.is_some() { Status::Contradiction } else { Status::Consistent },
            terminal,
        }
    }
}

fn coeffs(series: &crate::morse_ledger::PoincareSeries) -> Vec<i64> {
    series.integers()
}

/// Runs the cascade for one scenario.
pub fn berger_scenario_check(sc: BergerScenario) -> Result<ContradictionTrace> {
    sc.validate()?;
    let (n, c) = (sc.n, sc.dim_c);
    let sphere = Cross::Sphere(n);
    let cap = sc.cap();
    let target = coeffs(&loopspace_series(sphere, cap)?);
    let integral = loopspace_integral(sphere, cap)?;
    let mut b = Builder { steps: vec![] };
    let lowest = target.iter().position(|&x| x != 0).unwrap_or(cap);
    debug_assert_eq!(lowest, minimal_index(sphere));
    let out = b.push(
        Rule::MinimalIndex { n, lowest_degree: lowest, coefficient: target[lowest] },
        "ind(C) = n−1",
    );
    if matches!(out, Outcome::Contradiction { .. }) {
        return Ok(b.finish(sc));
    }
    let shift = n - 1;

    if sc.m == 1 {
        let own = quotient_cohomology(sphere)?.ranks().iter().map(|&r| r as i64).collect();
        b.push(Rule::Regular { shift, own, target }, "regular configuration");
        return Ok(b.finish(sc));
    }

    let Outcome::Free { klein_acts_freely } =
        b.push(Rule::FreeAction { m: sc.m }, "O(2)/ℤ_m acts freely on C")
    else {
        unreachable!()
    };
    let qd = c - 1;
    let Outcome::Lower { bounds: lower } =
        b.push(Rule::SymplecticLower { quotient_dim: qd }, "is a symplectic orbifold")
    else {
        unreachable!()
    };
    let range = if sc.even() { 2 * n - 3 } else { n - 2 };
    let upper: Vec<i64> = (0..=range).map(|q| target[q + shift]).collect();
    b.push(
        Rule::PerfectnessCap { shift, range, target: upper.clone() },
        "≤ dim H^{q+(n−1)}_{S¹}(ΛS^n,S^n;ℚ)",
    );
    let fill = qd.min(range);
    let out = b.push(
        Rule::Squeeze { lower: lower[..=fill].to_vec(), upper: upper[..=fill].to_vec() },
        "perfectness squeeze",
    );
    let filled = match out {
        Outcome::Filled { ranks } => ranks,
        _ => return Ok(b.finish(sc)),
    };
    let known: Vec<i64> = filled.iter().map(|r| r.unwrap_or(-1)).collect();
    let Outcome::Quotient { ranks: own, .. } = b.push(
        Rule::DualityCompletion { quotient_dim: qd, known },
        "by Poincaré duality",
    ) else {
        unreachable!()
    };

    if !sc.even() && qd > n - 1 {
        let index = 2 * (n - 1);
        let out = b.push(
            Rule::SecondSetCases {
                n,
                index,
                target_at_index: target[index],
                own_at_index: own.get(index - shift).copied().unwrap_or(0),
                target_above: target[index + 2],
                own_above: own.get(index + 2 - shift).copied().unwrap_or(0),
            },
            "would have index 2(n−1)",
        );
        if matches!(out, Outcome::Contradiction { .. }) {
            return Ok(b.finish(sc));
        }
    }

    let gap_bound = if sc.even() { shift + c } else { shift + c - 1 };
    let out = b.push(
        Rule::IndexGap { shift, own: own.clone(), target: target.clone(), gap_bound },
        "index of every critical set different from C",
    );
    let gap = match out {
        Outcome::Gap { min_other_index, .. } => min_other_index,
        _ => return Ok(b.finish(sc)),
    };
    let window = (c - 1).min(gap.saturating_sub(n));
    let table: Vec<(usize, usize)> = (0..=window)
        .map(|q| {
            let d = integral.get(q + shift);
            (d.rank, d.torsion.len())
        })
        .collect();
    let out = b.push(
        Rule::IntegralTransfer { dim_c: c, window, table },
        "switch to regular integral cohomology",
    );
    let m0 = match out {
        Outcome::Integral { m0, .. } => m0,
        _ => return Ok(b.finish(sc)),
    };
    let (bound_m0, bound_slack) = if sc.even() { ((c - 1).min(n - 1), 2) } else { (c - 1, 1) };
    let Outcome::Sphere { sphere: is_sphere, .. } = b.push(
        Rule::SphereCriterion { dim_c: c, m0, bound_m0, bound_slack },
        "C is an integral cohomology sphere",
    ) else {
        unreachable!()
    };
    b.push(
        Rule::Smith { sphere: is_sphere, klein_acts_freely },
        "must be cyclic",
    );
    Ok(b.finish(sc))
}

/// Recomputes every step and checks the terminal status.
pub fn replay(trace: &ContradictionTrace) -> Result<()> {
    trace.scenario.validate()?;
    for (i, s) in trace.steps.iter().enumerate() {
        let again = evaluate(&s.rule);
        if again != s.outcome {
            return Err(Error::ContractViolation(format!("step {i} does not replay")));
        }
        let last = i + 1 == trace.steps.len();
        if matches!(s.outcome, Outcome::Contradiction { .. }) && !last {
            return Err(Error::ContractViolation(format!("step {i} continues past a contradiction")));
        }
    }
    let terminal = match trace.steps.last().map(|s| &s.outcome) {
        Some(Outcome::Contradiction { kind, .. }) => Some(*kind),
        _ => None,
    };
    let status = if terminal.is_some() { Status::Contradiction } else { Status::Consistent };
    if terminal != trace.terminal || status != trace.status {
        return Err(Error::ContractViolation("terminal status does not match the steps".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub m: usize,
    pub dim_c: usize,
    pub status: Status,
    pub terminal: Option<ContradictionKind>,
    pub replayed: bool,
    /// m₀ ≥ ½dim C + 1 (or its n odd analogue)
    pub half_dim_bound: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub all_expected: bool,
}

/// Every valid scenario with n ∈ ns and m ∈ ms.
pub fn berger_sweep(ns: std::ops::RangeInclusive<usize>, ms: std::ops::RangeInclusive<usize>) -> Result<SweepReport> {
    let mut rows = vec![];
    for n in ns {
        for m in ms.clone() {
            let dims: Vec<usize> = if m == 1 { vec![2 * n - 1] } else { (1..=2 * n - 3).step_by(2).collect() };
            for dim_c in dims {
                let trace = berger_scenario_check(BergerScenario::new(n, m, dim_c)?)?;
                let half_dim_bound = trace.steps.iter().all(|s| match s.outcome {
                    Outcome::Sphere { half_dim_bound, .. } => half_dim_bound,
                    _ => true,
                });
                rows.push(SweepRow {
                    n,
                    m,
                    dim_c,
                    status: trace.status,
                    terminal: trace.terminal,
                    replayed: replay(&trace).is_ok(),
                    half_dim_bound,
                });
            }
        }
    }
    let all_expected = rows.iter().all(|r| {
        r.replayed
            && if r.m == 1 {
                r.status == Status::Consistent
            } else {
                r.status == Status::Contradiction
            }
    });
    Ok(SweepReport { rows, all_expected })
}

impl ContradictionTrace {
    pub fn to_text(&self) -> String {
        let sc = self.scenario;
        let mut s = format!("n = {}, m = {}, dim C = {}\n", sc.n, sc.m, sc.dim_c);
        for (i, st) in self.steps.iter().enumerate() {
            let rule = serde_json::to_value(&st.rule)
                .ok()
                .and_then(|v| v.get("rule").and_then(|r| r.as_str().map(String::from)))
                .unwrap_or_default();
            let outcome = match &st.outcome {
                Outcome::Contradiction { kind, detail } => format!("CONTRADICTION ({kind:?}): {detail}"),
                o => serde_json::to_string(o).unwrap_or_default(),
            };
            s += &format!("  {:>2}. {rule:<20} [{}]  {outcome}\n", i + 1, st.anchor);
        }
        s += &format!("  => {:?}\n", self.status);
        s
    }
}
