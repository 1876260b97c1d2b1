//! Graded bookkeeping for the energy functional of the round CROSS metrics:
//! Gysin computations for T¹M and T¹M/S¹, Poincaré series of the critical
//! manifolds, Thom shifts, perfectness and lacunarity.
//!
//! All coefficients are exact (integers or `Rational64`).

use std::fmt::Write as _;

use num_rational::Rational64;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod gysin;
pub mod sullivan;

pub use gysin::{gysin_audit, quotient_cohomology, unit_tangent_cohomology, ExactWindow, GysinAudit};

pub const DEFAULT_CAP: usize = crate::tol::LEDGER_CAP;

/// Compact rank-one symmetric spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", content = "parameter", rename_all = "snake_case")]
pub enum Cross {
    Sphere(usize),
    ComplexProjective(usize),
    QuaternionicProjective(usize),
    CayleyPlane,
}

/// Factors of the model space N with H*(T¹M/S¹) ≅ H*(N).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Factor {
    Sphere(usize),
    ComplexProjective(usize),
    QuaternionicProjective(usize),
}

impl Cross {
    /// Parses a family tag (`S_even`, `S_odd`, `CP`, `HP`, `CaP2`, or `S`)
    /// with its parameter: the dimension for spheres, m otherwise.
    pub fn parse(tag: &str, parameter: usize) -> Result<Cross> {
        let c = match tag {
            "S" | "S_even" | "S_odd" | "sphere" => Cross::Sphere(parameter),
            "CP" => Cross::ComplexProjective(parameter),
            "HP" => Cross::QuaternionicProjective(parameter),
            "CaP2" | "CaP" => Cross::CayleyPlane,
            _ => return Err(Error::InvalidInput(format!("unknown CROSS tag {tag:?}"))),
        };
        c.validate()?;
        if (tag == "S_even" && parameter % 2 == 1) || (tag == "S_odd" && parameter % 2 == 0) {
            return Err(Error::InvalidInput(format!("{tag} with n = {parameter}")));
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Cross::Sphere(n) if n < 2 => Err(Error::InvalidInput("spheres need n ≥ 2".into())),
            Cross::ComplexProjective(m) | Cross::QuaternionicProjective(m) if m < 1 => {
                Err(Error::InvalidInput("projective spaces need m ≥ 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn tag(&self) -> &'static str {
        match *self {
            Cross::Sphere(n) if n % 2 == 0 => "S_even",
            Cross::Sphere(_) => "S_odd",
            Cross::ComplexProjective(_) => "CP",
            Cross::QuaternionicProjective(_) => "HP",
            Cross::CayleyPlane => "CaP2",
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Cross::Sphere(n) => format!("S^{n}"),
            Cross::ComplexProjective(m) => format!("CP^{m}"),
            Cross::QuaternionicProjective(m) => format!("HP^{m}"),
            Cross::CayleyPlane => "CaP^2".into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.generator_degree() * self.height()
    }

    /// Degree a of the generator x of H*(M;ℤ) = ℤ[x]/(x^{h+1}).
    pub fn generator_degree(&self) -> usize {
        match *self {
            Cross::Sphere(n) => n,
            Cross::ComplexProjective(_) => 2,
            Cross::QuaternionicProjective(_) => 4,
            Cross::CayleyPlane => 8,
        }
    }

    pub fn height(&self) -> usize {
        match *self {
            Cross::Sphere(_) => 1,
            Cross::ComplexProjective(m) | Cross::QuaternionicProjective(m) => m,
            Cross::CayleyPlane => 2,
        }
    }

    pub fn euler_characteristic(&self) -> i64 {
        match *self {
            Cross::Sphere(n) if n % 2 == 1 => 0,
            _ => self.height() as i64 + 1,
        }
    }

    /// N with H*(T¹M/S¹;ℤ) ≅ H*(N;ℤ).
    pub fn quotient_model(&self) -> Vec<Factor> {
        match *self {
            Cross::Sphere(n) if n % 2 == 0 => vec![Factor::ComplexProjective(n - 1)],
            Cross::Sphere(n) => vec![Factor::Sphere(n - 1), Factor::ComplexProjective((n - 1) / 2)],
            Cross::ComplexProjective(m) => {
                vec![Factor::ComplexProjective(m - 1), Factor::ComplexProjective(m)]
            }
            Cross::QuaternionicProjective(m) => {
                vec![Factor::QuaternionicProjective(m - 1), Factor::ComplexProjective(2 * m + 1)]
            }
            Cross::CayleyPlane => vec![Factor::Sphere(8), Factor::ComplexProjective(11)],
        }
    }

    /// Index of the k-th critical manifold of the round metric: conjugate
    /// points of multiplicity a−1 at every half period and n−a at every
    /// period.
    pub fn critical_index(&self, k: usize) -> usize {
        let (n, a) = (self.dim(), self.generator_degree());
        (2 * k - 1) * (a - 1) + (k - 1) * (n - a)
    }

    /// Small instances of all five families.
    pub fn catalogue() -> Vec<Cross> {
        let mut v: Vec<Cross> = (2..=6).map(Cross::Sphere).collect();
        v.extend((1..=3).map(Cross::ComplexProjective));
        v.extend((1..=2).map(Cross::QuaternionicProjective));
        v.push(Cross::CayleyPlane);
        v
    }
}

impl Factor {
    fn ranks(&self, cap: usize) -> Vec<usize> {
        let mut r = vec![0; cap + 1];
        let (step, top) = match *self {
            Factor::Sphere(k) => {
                r[0] = 1;
                if k <= cap {
                    r[k] += 1;
                }
                return r;
            }
            Factor::ComplexProjective(j) => (2, 2 * j),
            Factor::QuaternionicProjective(j) => (4, 4 * j),
        };
        for q in (0..=top.min(cap)).step_by(step) {
            r[q] = 1;
        }
        r
    }

    pub fn dim(&self) -> usize {
        match *self {
            Factor::Sphere(k) => k,
            Factor::ComplexProjective(j) => 2 * j,
            Factor::QuaternionicProjective(j) => 4 * j,
        }
    }
}

/// Free ranks of H*(N₁ × … × N_r) (all factors torsion-free), Künneth.
pub fn product_ranks(factors: &[Factor], cap: usize) -> Vec<usize> {
    let mut acc = vec![0; cap + 1];
    acc[0] = 1;
    for f in factors {
        let r = f.ranks(cap);
        let mut next = vec![0; cap + 1];
        for (i, &a) in acc.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in r.iter().enumerate() {
                if i + j <= cap {
                    next[i + j] += a * b;
                }
            }
        }
        acc = next;
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Periodicity {
    pub period: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degree {
    pub rank: usize,
    /// orders of the cyclic torsion summands
    pub torsion: Vec<u64>,
}

impl Degree {
    pub fn free(rank: usize) -> Self {
        Degree { rank, torsion: vec![] }
    }

    pub fn is_zero(&self) -> bool {
        self.rank == 0 && self.torsion.is_empty()
    }

    pub fn describe(&self) -> String {
        let mut parts = vec![];
        match self.rank {
            0 => {}
            1 => parts.push("Z".to_string()),
            r => parts.push(format!("Z^{r}")),
        }
        for t in &self.torsion {
            parts.push(format!("Z_{t}"));
        }
        if parts.is_empty() {
            "0".into()
        } else {
            parts.join("+")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradedGroup {
    pub label: String,
    pub cap: usize,
    pub degrees: Vec<Degree>,
    /// degrees where only the rank is certified
    pub flagged: Vec<usize>,
    pub periodicity: Option<Periodicity>,
}

impl GradedGroup {
    pub fn zero(label: impl Into<String>, cap: usize) -> Self {
        GradedGroup {
            label: label.into(),
            cap,
            degrees: vec![Degree::default(); cap + 1],
            flagged: vec![],
            periodicity: None,
        }
    }

    pub fn from_ranks(label: impl Into<String>, ranks: &[usize]) -> Self {
        GradedGroup {
            label: label.into(),
            cap: ranks.len().saturating_sub(1),
            degrees: ranks.iter().map(|&r| Degree::free(r)).collect(),
            flagged: vec![],
            periodicity: None,
        }
    }

    pub fn get(&self, q: usize) -> Degree {
        self.degrees.get(q).cloned().unwrap_or_default()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.degrees.iter().map(|d| d.rank).collect()
    }

    pub fn is_torsion_free(&self) -> bool {
        self.degrees.iter().all(|d| d.torsion.is_empty())
    }

    /// Rational Poincaré series.
    pub fn rational_series(&self) -> PoincareSeries {
        PoincareSeries::from_ints(&self.ranks())
    }

    /// Nonzero degrees as aligned text.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} (degrees ≤ {})\n", self.label, self.cap);
        for (q, d) in self.degrees.iter().enumerate() {
            if !d.is_zero() {
                let flag = if self.flagged.contains(&q) { "  (rank only)" } else { "" };
                let _ = writeln!(s, "  q = {q:>3}  {}{flag}", d.describe());
            }
        }
        s
    }
}

mod ratio_vec {
    use num_rational::Rational64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rational64], s: S) -> Result<S::Ok, S::Error> {
        let strs: Vec<String> = v.iter().map(|r| r.to_string()).collect();
        strs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational64>, D::Error> {
        let strs = Vec::<String>::deserialize(d)?;
        strs.iter()
            .map(|s| s.parse::<Rational64>().map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Truncated series Σ a_q t^q, q ≤ cap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoincareSeries {
    #[serde(with = "ratio_vec")]
    pub coeffs: Vec<Rational64>,
    pub periodicity: Option<Periodicity>,
}

impl PoincareSeries {
    pub fn zero(cap: usize) -> Self {
        PoincareSeries {
            coeffs: vec![Rational64::zero(); cap + 1],
            periodicity: None,
        }
    }

    pub fn from_ints(v: &[usize]) -> Self {
        PoincareSeries {
            coeffs: v.iter().map(|&x| Rational64::from_integer(x as i64)).collect(),
            periodicity: None,
        }
    }

    pub fn cap(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, q: usize) -> Rational64 {
        self.coeffs.get(q).copied().unwrap_or_else(Rational64::zero)
    }

    pub fn truncate(&self, cap: usize) -> Self {
        let mut c = self.coeffs.clone();
        c.resize(cap + 1, Rational64::zero());
        PoincareSeries {
            coeffs: c,
            periodicity: None,
        }
    }

    pub fn add(&self, o: &PoincareSeries) -> PoincareSeries {
        let cap = self.cap().max(o.cap());
        PoincareSeries {
            coeffs: (0..=cap).map(|q| self.coeff(q) + o.coeff(q)).collect(),
            periodicity: None,
        }
    }

    /// t^k · self, truncated at the same cap.
    pub fn shift(&self, k: usize) -> PoincareSeries {
        let cap = self.cap();
        PoincareSeries {
            coeffs: (0..=cap)
                .map(|q| if q >= k { self.coeff(q - k) } else { Rational64::zero() })
                .collect(),
            periodicity: None,
        }
    }

    pub fn mul(&self, o: &PoincareSeries) -> PoincareSeries {
        let cap = self.cap().min(o.cap());
        let mut c = vec![Rational64::zero(); cap + 1];
        for (i, a) in self.coeffs.iter().enumerate().take(cap + 1) {
            if a.is_zero() {
                continue;
            }
            for j in 0..=cap - i {
                c[i + j] += *a * o.coeff(j);
            }
        }
        PoincareSeries {
            coeffs: c,
            periodicity: None,
        }
    }

    pub fn is_nonnegative_integral(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_integer() && *c >= Rational64::zero())
    }

    pub fn lowest_degree(&self) -> Option<usize> {
        self.coeffs.iter().position(|c| !c.is_zero())
    }

    /// Integer coefficients (panics on non-integral entries).
    pub fn integers(&self) -> Vec<i64> {
        self.coeffs
            .iter()
            .map(|c| {
                assert!(c.is_integer(), "non-integral coefficient {c}");
                c.to_integer()
            })
            .collect()
    }

    /// Smallest (period, offset) with a_{q+p} = a_q for offset ≤ q ≤ cap − p,
    /// accepted when at least two periods are visible.
    pub fn detect_periodicity(mut self) -> Self {
        let cap = self.cap();
        'outer: for p in 1..=cap / 3 {
            for o in 0..=cap.saturating_sub(2 * p) {
                if (o..=cap - p).all(|q| self.coeffs[q] == self.coeffs[q + p]) {
                    if (o..=cap).any(|q| !self.coeffs[q].is_zero()) {
                        self.periodicity = Some(Periodicity { period: p, offset: o });
                    }
                    break 'outer;
                }
            }
        }
        self
    }

    pub fn to_text(&self, label: &str) -> String {
        let mut s = format!("{label} (degrees ≤ {})\n", self.cap());
        for (q, c) in self.coeffs.iter().enumerate() {
            if !c.is_zero() {
                let _ = writeln!(s, "  q = {q:>3}  {c}");
            }
        }
        if let Some(p) = self.periodicity {
            let _ = writeln!(s, "  periodic with period {} from degree {}", p.period, p.offset);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalEntry {
    pub k: usize,
    pub index: usize,
    pub orientable: bool,
    pub series: PoincareSeries,
    pub anti_invariant: Option<PoincareSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalModel {
    pub cross: Cross,
    pub n: usize,
    pub entries: Vec<CriticalEntry>,
}

impl CriticalModel {
    /// Indices strictly increasing and all ≡ n + 1 (mod 2).
    pub fn validate(&self) -> Result<()> {
        for w in self.entries.windows(2) {
            if w[1].index <= w[0].index {
                return Err(Error::ContractViolation(format!(
                    "indices not increasing at k = {}",
                    w[1].k
                )));
            }
        }
        for e in &self.entries {
            if e.index % 2 != (self.n + 1) % 2 {
                return Err(Error::ContractViolation(format!(
                    "index {} of C^{} has the wrong parity for n = {}",
                    e.index, e.k, self.n
                )));
            }
            if !e.orientable && e.anti_invariant.is_none() {
                return Err(Error::InvalidInput(format!(
                    "C^{} is non-orientable but has no anti-invariant series",
                    e.k
                )));
            }
        }
        Ok(())
    }
}

/// H*_{S¹}(C^k;ℚ) = H*(T¹M/S¹ × Bℤ_k;ℚ) = H*(T¹M/S¹;ℚ).
pub fn equivariant_series(cross: Cross, k: usize, cap: usize) -> Result<PoincareSeries> {
    if k == 0 {
        return Err(Error::InvalidInput("critical manifolds of positive energy have k ≥ 1".into()));
    }
    Ok(quotient_cohomology(cross)?.rational_series().truncate(cap))
}

/// t^index · series, or t^index · anti_invariant when the negative bundle
/// is non-orientable (rational coefficients).
pub fn thom_shift(
    series: &PoincareSeries,
    index: usize,
    orientable: bool,
    anti_invariant: Option<&PoincareSeries>,
) -> Result<PoincareSeries> {
    if orientable {
        return Ok(series.shift(index));
    }
    let a = anti_invariant.ok_or_else(|| {
        Error::InvalidInput("non-orientable negative bundle needs the anti-invariant series".into())
    })?;
    Ok(a.truncate(series.cap()).shift(index))
}

/// The round metric: C^k for every k with i_k ≤ cap, all orientable.
pub fn critical_model(cross: Cross, cap: usize) -> Result<CriticalModel> {
    cross.validate()?;
    let series = quotient_cohomology(cross)?.rational_series().truncate(cap);
    let mut entries = vec![];
    let mut k = 1;
    while cross.critical_index(k) <= cap {
        entries.push(CriticalEntry {
            k,
            index: cross.critical_index(k),
            orientable: true,
            series: series.clone(),
            anti_invariant: None,
        });
        k += 1;
    }
    let model = CriticalModel {
        cross,
        n: cross.dim(),
        entries,
    };
    model.validate()?;
    Ok(model)
}

/// Σ_k thom_shift(series_k, i_k).
pub fn assemble(model: &CriticalModel, cap: usize) -> Result<PoincareSeries> {
    let mut acc = PoincareSeries::zero(cap);
    for e in &model.entries {
        let s = thom_shift(&e.series.truncate(cap), e.index, e.orientable, e.anti_invariant.as_ref())?;
        acc = acc.add(&s);
    }
    Ok(acc)
}

/// First degree violating the parity vanishing: odd degrees for n odd,
/// even degrees for n even.
pub fn lacunarity_violation(series: &PoincareSeries, n: usize) -> Option<usize> {
    (0..=series.cap()).find(|&q| q % 2 == n % 2 && !series.coeff(q).is_zero())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub degree: usize,
    #[serde(with = "ratio_pair")]
    pub assembled: Rational64,
    #[serde(with = "ratio_pair")]
    pub target: Rational64,
}

mod ratio_pair {
    use num_rational::Rational64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Rational64, s: S) -> Result<S::Ok, S::Error> {
        v.to_string().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational64, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfectnessReport {
    pub cross: Cross,
    pub cap: usize,
    pub perfect: bool,
    pub first_failure: Option<Mismatch>,
    pub lacunary: bool,
    pub lacunarity_failure: Option<usize>,
    pub assembled: PoincareSeries,
}

/// Compares the assembled Morse series with `target` up to `cap` and runs
/// the lacunarity check on the target.
pub fn perfectness_check(model: &CriticalModel, target: &PoincareSeries, cap: usize) -> Result<PerfectnessReport> {
    if target.cap() < cap {
        return Err(Error::InvalidInput(format!(
            "target series only known to degree {}",
            target.cap()
        )));
    }
    let next = model.entries.last().map(|e| e.k + 1).unwrap_or(1);
    if model.cross.critical_index(next) <= cap {
        return Err(Error::Precondition(format!(
            "model stops before the index exceeds {cap}"
        )));
    }
    model.validate()?;
    let assembled = assemble(model, cap)?;
    let first_failure = (0..=cap)
        .find(|&q| assembled.coeff(q) != target.coeff(q))
        .map(|q| Mismatch {
            degree: q,
            assembled: assembled.coeff(q),
            target: target.coeff(q),
        });
    let lac = lacunarity_violation(&target.truncate(cap), model.n);
    Ok(PerfectnessReport {
        cross: model.cross,
        cap,
        perfect: first_failure.is_none(),
        first_failure,
        lacunary: lac.is_none(),
        lacunarity_failure: lac,
        assembled,
    })
}

/// Rational H^q_{S¹}(ΛM, M;ℚ): closed forms for spheres, assembled from
/// the critical model otherwise.
pub fn loopspace_series(cross: Cross, cap: usize) -> Result<PoincareSeries> {
    cross.validate()?;
    let s = match cross {
        Cross::Sphere(n) => {
            let p = n - 1;
            let mut s = PoincareSeries::zero(cap);
            for q in p..=cap {
                let one = Rational64::one();
                if n % 2 == 0 && q % 2 == 1 {
                    let double = q % p == 0 && (q / p) % 2 == 1 && q / p >= 3;
                    s.coeffs[q] = if double { one + one } else { one };
                } else if n % 2 == 1 && q % 2 == 0 {
                    let double = q % p == 0 && q / p >= 2;
                    s.coeffs[q] = if double { one + one } else { one };
                }
            }
            s
        }
        _ => assemble(&critical_model(cross, cap)?, cap)?,
    };
    Ok(s.detect_periodicity())
}

/// H^q(ΛS^n, S^n;ℤ) from the closed-form tables.
pub fn loopspace_integral(cross: Cross, cap: usize) -> Result<GradedGroup> {
    let n = match cross {
        Cross::Sphere(n) if n >= 2 => n,
        _ => {
            return Err(Error::NotApplicable(
                "integral loop space tables are shipped for spheres only".into(),
            ))
        }
    };
    let p = n - 1;
    let mut g = GradedGroup::zero(format!("H^*(ΛS^{n}, S^{n}; Z)"), cap);
    let mut put = |q: usize, free: bool, tors: u64| {
        if q <= cap {
            if free {
                g.degrees[q].rank += 1;
            } else {
                g.degrees[q].torsion.push(tors);
            }
        }
    };
    for k in 1..=cap / p + 1 {
        if n % 2 == 0 {
            put((2 * k - 1) * p, true, 0);
            put((2 * k + 1) * p + 1, true, 0);
            put(2 * k * p + 1, false, 2);
        } else {
            put(k * p, true, 0);
            put((k + 1) * p + 1, true, 0);
        }
    }
    Ok(g)
}

/// i(M): the lowest index of a nonconstant critical set.
pub fn minimal_index(cross: Cross) -> usize {
    match cross {
        Cross::Sphere(n) => n - 1,
        Cross::ComplexProjective(_) => 1,
        Cross::QuaternionicProjective(_) => 3,
        Cross::CayleyPlane => 7,
    }
}

/// Everything the `ledger` subcommand prints for one family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerReport {
    pub cross: Cross,
    pub label: String,
    pub cap: usize,
    pub unit_tangent: GradedGroup,
    pub quotient: GradedGroup,
    pub audit: GysinAudit,
    pub model: CriticalModel,
    pub loopspace: PoincareSeries,
    /// independent target from the Sullivan model
    pub oracle: PoincareSeries,
    pub perfectness: PerfectnessReport,
    pub minimal_index: usize,
    pub integral: Option<GradedGroup>,
}

pub fn ledger_report(cross: Cross, cap: usize) -> Result<LedgerReport> {
    cross.validate()?;
    let unit_tangent = unit_tangent_cohomology(cross)?;
    let quotient = quotient_cohomology(cross)?;
    let audit = gysin_audit(cross)?;
    let model = critical_model(cross, cap)?;
    let loopspace = loopspace_series(cross, cap)?;
    let oracle = sullivan::equivariant_pair_series(cross, cap)?;
    let perfectness = perfectness_check(&model, &oracle, cap)?;
    let integral = match cross {
        Cross::Sphere(_) => Some(loopspace_integral(cross, cap)?),
        _ => None,
    };
    Ok(LedgerReport {
        cross,
        label: cross.label(),
        cap,
        unit_tangent,
        quotient,
        audit,
        model,
        loopspace,
        oracle,
        perfectness,
        minimal_index: minimal_index(cross),
        integral,
    })
}

impl LedgerReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("== {} (n = {}) ==\n", self.label, self.cross.dim());
        s += &self.unit_tangent.to_text();
        s += &self.quotient.to_text();
        let _ = writeln!(
            s,
            "critical indices: {:?}",
            self.model.entries.iter().map(|e| e.index).collect::<Vec<_>>()
        );
        s += &self.loopspace.to_text("H^*_{S1}(ΛM, M; Q)");
        let _ = writeln!(
            s,
            "perfectness to degree {}: {}   lacunarity: {}   minimal index: {}",
            self.cap,
            if self.perfectness.perfect { "exact" } else { "FAILED" },
            if self.perfectness.lacunary { "holds" } else { "FAILED" },
            self.minimal_index
        );
        if let Some(g) = &self.integral {
            s += &g.to_text();
        }
        s
    }
}

#[cfg(test)]
mod tests;
