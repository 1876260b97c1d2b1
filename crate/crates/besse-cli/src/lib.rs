//! Pipeline, reports and CSV output behind the `besse` binary.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use besse::berger::{berger_scenario_check, berger_sweep, replay, BergerScenario, ContradictionTrace, SweepRow};
use besse::formal_geodesic::{discretized_hessian_index, index_report, poincare_map};
use besse::geodesic_engine::{extract_formal, parity_consistent, random_unit_initial, trace_closed_geodesic, MetricSpec};
use besse::morse_ledger::{ledger_report, Cross, Mismatch};
use besse::orientation::{
    conjugation_loop, exemplar_nonorientable, iterate_orientability_class, transport_negative_orientation,
    twisted_scalar_loop, DataLoop,
};
use besse::random::rng;
use besse::tol::{TolProfile, Tolerances};
use serde::{Deserialize, Serialize};

pub use config::Config;
use config::{Check, IndexJob, LoopSpec, OrientJob};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Besse(#[from] besse::error::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for input errors, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Besse(e) if !e.is_numerical() => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub cap: Option<usize>,
    pub tol_profile: Option<TolProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateEntry {
    pub k: usize,
    pub index: i64,
    pub nullity: usize,
    pub ind_omega: usize,
    pub ind_p: i64,
    pub oracle: Option<usize>,
    pub parity_ok: bool,
    pub conjugate_points: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicEntry {
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub period: f64,
    pub closure_residual: f64,
    pub iterates: Vec<IterateEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSection {
    pub metric: String,
    pub dim: usize,
    pub geodesics: Vec<GeodesicEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientSection {
    pub label: String,
    pub samples: usize,
    pub sign: i8,
    pub spin_sign: i8,
    pub method: String,
    pub index: usize,
    /// max distance of the per-slice Poincaré spectrum from {±i}
    pub spectrum_defect: Option<f64>,
    pub iterates: Vec<(u32, i8)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSection {
    pub label: String,
    pub tag: String,
    pub cap: usize,
    pub perfect: bool,
    pub lacunary: bool,
    pub first_failure: Option<Mismatch>,
    pub gysin_consistent: bool,
    pub matches_model: bool,
    pub minimal_index: usize,
    pub series: Vec<i64>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BergerSection {
    pub sweep: Vec<SweepRow>,
    pub all_expected: bool,
    pub traces: Vec<ContradictionTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub cap: usize,
    pub tol_profile: TolProfile,
    pub index: Option<IndexSection>,
    pub orientability: Option<OrientSection>,
    pub ledger: Vec<LedgerSection>,
    pub berger: Option<BergerSection>,
    pub suites: Vec<Suite>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary(&self) -> String {
        let mut s = format!("besse report (seed {}, cap {}, tolerances {:?})\n", self.seed, self.cap, self.tol_profile);
        if let Some(ix) = &self.index {
            s += &format!("\nindex: {} (n = {})\n", ix.metric, ix.dim);
            for (g, e) in ix.geodesics.iter().enumerate() {
                s += &format!("  geodesic {g}: period {:.9}, closure residual {:.1e}\n", e.period, e.closure_residual);
                for it in &e.iterates {
                    let oracle = it.oracle.map_or("-".to_string(), |o| o.to_string());
                    s += &format!(
                        "    k = {:>2}  ind = {:>3}  nullity = {}  oracle = {oracle}  parity {}\n",
                        it.k,
                        it.index,
                        it.nullity,
                        if it.parity_ok { "ok" } else { "WRONG" }
                    );
                }
            }
        }
        if let Some(o) = &self.orientability {
            s += &format!(
                "\norientability: {} ({} samples)\n  transport sign {:+}, spin sign {:+}, method {}, index {}\n",
                o.label, o.samples, o.sign, o.spin_sign, o.method, o.index
            );
            if let Some(d) = o.spectrum_defect {
                s += &format!("  spectrum distance from ±i: {d:.1e}\n");
            }
            for (q, sg) in &o.iterates {
                s += &format!("  iterate {q}: sign {sg:+}\n");
            }
        }
        for l in &self.ledger {
            s += "\n";
            s += &l.text;
        }
        if let Some(b) = &self.berger {
            s += "\nberger:\n";
            if !b.sweep.is_empty() {
                let contra = b.sweep.iter().filter(|r| r.status == besse::berger::Status::Contradiction).count();
                s += &format!(
                    "  sweep: {} scenarios, {} contradictions, {} consistent, all as expected: {}\n",
                    b.sweep.len(),
                    contra,
                    b.sweep.len() - contra,
                    b.all_expected
                );
            }
            for t in &b.traces {
                s += &t.to_text();
            }
        }
        s += "\nsuites:\n";
        for su in &self.suites {
            s += &format!("  [{}] {}: {}\n", if su.passed { "pass" } else { "FAIL" }, su.name, su.detail);
        }
        s
    }
}

fn known_index(metric: &MetricSpec, k: usize) -> Option<i64> {
    match metric {
        MetricSpec::RoundSphere { n } => Some(((2 * k - 1) * (n - 1)) as i64),
        MetricSpec::Zoll { .. } => Some((2 * k - 1) as i64),
        MetricSpec::Revolution { .. } => None,
    }
}

fn run_index(job: &IndexJob, seed: u64, tol: &Tolerances, suites: &mut Vec<Suite>) -> Result<IndexSection, CliError> {
    let mut r = rng(seed);
    let n = job.metric.dim();
    let mut geodesics = vec![];
    let mut worst_close: f64 = 0.0;
    let mut mismatches = vec![];
    for _ in 0..job.geodesics {
        let (x, v) = random_unit_initial(&job.metric, &mut r)?;
        let rec = trace_closed_geodesic(&job.metric, x.as_slice(), v.as_slice(), job.horizon)?;
        worst_close = worst_close.max(rec.closure_residual);
        let mut iterates = vec![];
        for k in job.iterates[0]..=job.iterates[1] {
            let ex = extract_formal(&job.metric, &rec, k, job.per_lap)?;
            let rep = index_report(&ex.formal)?;
            let oracle = if job.oracle {
                Some(discretized_hessian_index(&ex.formal, 32)?.negative_count)
            } else {
                None
            };
            let parity_ok = !job.metric.is_besse() || parity_consistent(n, rep.ind);
            if let Some(o) = oracle {
                if o as i64 != rep.ind {
                    mismatches.push(format!("k = {k}: oracle {o} vs {}", rep.ind));
                }
            }
            if let Some(want) = known_index(&job.metric, k) {
                if want != rep.ind {
                    mismatches.push(format!("k = {k}: expected {want}, got {}", rep.ind));
                }
            }
            if !parity_ok {
                mismatches.push(format!("k = {k}: parity of {}", rep.ind));
            }
            iterates.push(IterateEntry {
                k,
                index: rep.ind,
                nullity: rep.nullity,
                ind_omega: rep.ind_omega,
                ind_p: rep.ind_p,
                oracle,
                parity_ok,
                conjugate_points: rep.conjugate_points.iter().map(|c| (c.t, c.multiplicity)).collect(),
            });
        }
        geodesics.push(GeodesicEntry {
            x0: rec.x0.clone(),
            v0: rec.v0.clone(),
            period: rec.period,
            closure_residual: rec.closure_residual,
            iterates,
        });
    }
    suites.push(Suite {
        name: "index".into(),
        passed: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            "indices, oracle and parity agree".into()
        } else {
            mismatches.join("; ")
        },
    });
    suites.push(Suite {
        name: "closure".into(),
        passed: worst_close <= tol.close,
        detail: format!("worst residual {worst_close:.2e} (tolerance {:.0e})", tol.close),
    });
    Ok(IndexSection {
        metric: job.metric.label(),
        dim: n,
        geodesics,
    })
}

fn build_loop(spec: &LoopSpec, samples: usize, seed: u64) -> Result<DataLoop, CliError> {
    Ok(match spec {
        LoopSpec::Exemplar => exemplar_nonorientable(samples)?,
        LoopSpec::Twisted { m, turns } => twisted_scalar_loop(seed, *m, *turns, samples)?,
        LoopSpec::Conjugation { m } => conjugation_loop(seed, *m, samples)?,
    })
}

fn spectrum_defect(lp: &DataLoop) -> Result<f64, CliError> {
    let mut worst: f64 = 0.0;
    for fg in lp.slices() {
        let p = poincare_map(fg)?.matrix.into_matrix();
        for z in p.complex_eigenvalues().iter() {
            let d = (z.re.powi(2) + (z.im.abs() - 1.0).powi(2)).sqrt();
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

fn run_orient(job: &OrientJob, seed: u64, suites: &mut Vec<Suite>) -> Result<OrientSection, CliError> {
    let lp = build_loop(&job.loop_spec, job.samples, seed)?;
    let t = transport_negative_orientation(&lp)?;
    let spin = lp.spin_class()?;
    let spectrum_defect = match job.loop_spec {
        LoopSpec::Exemplar => Some(spectrum_defect(&lp)?),
        _ => None,
    };
    let iterates = job
        .iterates
        .iter()
        .map(|&q| Ok((q, iterate_orientability_class(&lp, q)?.sign)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut ok = t.sign == spin.sign;
    let mut detail = format!("transport {:+} vs spin {:+}", t.sign, spin.sign);
    if let Some(d) = spectrum_defect {
        ok &= t.sign == -1 && d <= 1e-6;
        detail += &format!(", exemplar spectrum defect {d:.1e}");
    }
    suites.push(Suite {
        name: "orientability".into(),
        passed: ok,
        detail,
    });
    Ok(OrientSection {
        label: lp.label.clone(),
        samples: lp.samples(),
        sign: t.sign,
        spin_sign: spin.sign,
        method: format!("{:?}", t.method),
        index: t.index,
        spectrum_defect,
        iterates,
    })
}

fn run_ledger(job: &config::LedgerJob, cap: usize, suites: &mut Vec<Suite>) -> Result<Vec<LedgerSection>, CliError> {
    let checks: Vec<Check> = if job.checks.is_empty() {
        vec![Check::Perfectness, Check::Lacunarity]
    } else {
        job.checks.clone()
    };
    let mut out = vec![];
    let mut failures = vec![];
    for f in &job.families {
        let cross = Cross::parse(&f.tag, f.parameter)?;
        let rep = ledger_report(cross, cap)?;
        let p = &rep.perfectness;
        if checks.contains(&Check::Perfectness) && !p.perfect {
            failures.push(format!("{}: perfectness fails at {:?}", rep.label, p.first_failure.as_ref().map(|m| m.degree)));
        }
        if checks.contains(&Check::Lacunarity) && !p.lacunary {
            failures.push(format!("{}: lacunarity fails at {:?}", rep.label, p.lacunarity_failure));
        }
        if !rep.audit.consistent || !rep.audit.matches_model || !rep.audit.windows_exact() {
            failures.push(format!("{}: Gysin audit", rep.label));
        }
        out.push(LedgerSection {
            label: rep.label.clone(),
            tag: cross.tag().into(),
            cap,
            perfect: p.perfect,
            lacunary: p.lacunary,
            first_failure: p.first_failure.clone(),
            gysin_consistent: rep.audit.consistent && rep.audit.windows_exact(),
            matches_model: rep.audit.matches_model,
            minimal_index: rep.minimal_index,
            series: rep.loopspace.integers(),
            text: rep.to_text(),
        });
    }
    suites.push(Suite {
        name: "ledger".into(),
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{} families exact to degree {cap}", out.len())
        } else {
            failures.join("; ")
        },
    });
    Ok(out)
}

fn run_berger(job: &config::BergerJob, suites: &mut Vec<Suite>) -> Result<BergerSection, CliError> {
    let (sweep, all_expected) = match (job.n, job.m) {
        (Some(n), Some(m)) => {
            let rep = berger_sweep(n[0]..=n[1], m[0]..=m[1])?;
            (rep.rows, rep.all_expected)
        }
        _ => (vec![], true),
    };
    let mut traces = vec![];
    let mut replay_ok = true;
    for s in &job.scenarios {
        let t = berger_scenario_check(BergerScenario::new(s.n, s.m, s.dim_c)?)?;
        replay_ok &= replay(&t).is_ok();
        traces.push(t);
    }
    suites.push(Suite {
        name: "berger".into(),
        passed: all_expected && replay_ok,
        detail: format!(
            "{} swept scenarios as expected: {all_expected}; {} traces replay: {replay_ok}",
            sweep.len(),
            traces.len()
        ),
    });
    Ok(BergerSection {
        sweep,
        all_expected,
        traces,
    })
}

/// Runs every requested analysis. Identical config and options give
/// identical reports.
pub fn run_pipeline(cfg: &Config, opts: RunOptions) -> Result<Report, CliError> {
    cfg.validate()?;
    let seed = opts.seed.or(cfg.seed).unwrap_or(0);
    let cap = opts.cap.or(cfg.cap).unwrap_or(besse::tol::LEDGER_CAP);
    let tol_profile = opts.tol_profile.or(cfg.tol_profile).unwrap_or_default();
    let tol = Tolerances::for_profile(tol_profile);
    let mut suites = vec![];
    let index = cfg.index.as_ref().map(|j| run_index(j, seed, &tol, &mut suites)).transpose()?;
    let orientability = cfg.orientability.as_ref().map(|j| run_orient(j, seed, &mut suites)).transpose()?;
    let ledger = match &cfg.ledger {
        Some(j) => run_ledger(j, cap, &mut suites)?,
        None => vec![],
    };
    let berger = cfg.berger.as_ref().map(|j| run_berger(j, &mut suites)).transpose()?;
    Ok(Report {
        seed,
        cap,
        tol_profile,
        index,
        orientability,
        ledger,
        berger,
        suites,
    })
}

fn writer(dir: &Path, name: &str, header: &[&str], files: &mut Vec<PathBuf>) -> Result<csv::Writer<fs::File>, CliError> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(header)?;
    files.push(path);
    Ok(w)
}

/// One CSV per analysis with a header row, plus `manifest.txt`.
pub fn emit_plot_data(report: &Report, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let mut files = vec![];
    if let Some(ix) = &report.index {
        let mut w = writer(dir, "index_vs_iterate.csv", &["iterate", "index", "nullity", "oracle", "geodesic"], &mut files)?;
        let mut c = writer(dir, "conjugate_points.csv", &["geodesic", "iterate", "t", "multiplicity"], &mut files)?;
        for (g, e) in ix.geodesics.iter().enumerate() {
            for it in &e.iterates {
                w.write_record([
                    it.k.to_string(),
                    it.index.to_string(),
                    it.nullity.to_string(),
                    it.oracle.map_or(String::new(), |o| o.to_string()),
                    g.to_string(),
                ])?;
                for (t, mult) in &it.conjugate_points {
                    c.write_record([g.to_string(), it.k.to_string(), format!("{t:.12}"), mult.to_string()])?;
                }
            }
        }
        w.flush()?;
        c.flush()?;
    }
    if let Some(o) = &report.orientability {
        let mut w = writer(dir, "orientability.csv", &["iterate", "sign"], &mut files)?;
        w.write_record(["1".to_string(), o.sign.to_string()])?;
        for (q, s) in &o.iterates {
            w.write_record([q.to_string(), s.to_string()])?;
        }
        w.flush()?;
    }
    for l in &report.ledger {
        let name = format!("series_{}.csv", l.label.replace(['^', ' '], "").to_lowercase());
        let mut w = writer(dir, &name, &["degree", "coefficient"], &mut files)?;
        for (q, c) in l.series.iter().enumerate() {
            if *c != 0 {
                w.write_record([q.to_string(), c.to_string()])?;
            }
        }
        w.flush()?;
    }
    if let Some(b) = &report.berger {
        if !b.sweep.is_empty() {
            let mut w = writer(
                dir,
                "berger_sweep.csv",
                &["n", "m", "dim_c", "status", "terminal", "replayed", "half_dim_bound"],
                &mut files,
            )?;
            for r in &b.sweep {
                w.write_record([
                    r.n.to_string(),
                    r.m.to_string(),
                    r.dim_c.to_string(),
                    format!("{:?}", r.status).to_uppercase(),
                    r.terminal.map_or(String::new(), |k| format!("{k:?}").to_lowercase()),
                    r.replayed.to_string(),
                    r.half_dim_bound.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    let manifest = dir.join("manifest.txt");
    let mut text = String::from("# file: columns\n");
    for f in &files {
        let head = fs::read_to_string(f)?.lines().next().unwrap_or_default().to_string();
        text += &format!("{}: {head}\n", f.file_name().unwrap_or_default().to_string_lossy());
    }
    fs::write(&manifest, text)?;
    files.push(manifest);
    Ok(files)
}

/// report.json, summary.txt and the CSV files.
pub fn write_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let json = dir.join("report.json");
    fs::write(&json, report.to_json())?;
    let summary = dir.join("summary.txt");
    fs::write(&summary, report.summary())?;
    let mut files = vec![json, summary];
    files.extend(emit_plot_data(report, dir)?);
    Ok(files)
}

/// Small configuration touching every analysis.
pub fn selftest_config() -> Config {
    Config {
        seed: Some(1),
        cap: Some(30),
        tol_profile: None,
        index: Some(IndexJob {
            metric: MetricSpec::round(3),
            iterates: [1, 2],
            geodesics: 1,
            per_lap: 256,
            oracle: true,
            horizon: 3.0 * std::f64::consts::PI,
        }),
        orientability: Some(OrientJob {
            loop_spec: LoopSpec::Exemplar,
            samples: 16,
            iterates: vec![2, 3],
        }),
        ledger: Some(config::LedgerJob {
            families: vec![
                config::FamilySpec { tag: "S_odd".into(), parameter: 3 },
                config::FamilySpec { tag: "CP".into(), parameter: 2 },
            ],
            checks: vec![],
        }),
        berger: Some(config::BergerJob {
            n: Some([4, 6]),
            m: Some([1, 3]),
            scenarios: vec![config::ScenarioSpec { n: 4, m: 2, dim_c: 5 }],
        }),
    }
}
