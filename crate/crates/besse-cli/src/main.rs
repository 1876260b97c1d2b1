use std::path::PathBuf;
use std::process::ExitCode;

use besse::geodesic_engine::MetricSpec;
use besse::tol::TolProfile;
use besse_cli::config::{BergerJob, Check, FamilySpec, IndexJob, LedgerJob, LoopSpec, OrientJob, ScenarioSpec};
use besse_cli::{run_pipeline, selftest_config, write_report, CliError, Config, Report, RunOptions};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "besse", version, about = "Index, orientability and Morse ledger laboratory for Besse manifolds")]
struct Cli {
    /// JSON configuration (used by `analyze`)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// directory for report.json, summary.txt and CSV files
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// top degree for the ledger
    #[arg(long, global = true)]
    cap: Option<usize>,
    #[arg(long, global = true, value_enum)]
    tol_profile: Option<Profile>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Default,
    Strict,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum CheckArg {
    Perfectness,
    Lacunarity,
}

#[derive(Subcommand)]
enum Command {
    /// Run everything listed in --config
    Analyze {
        /// print the JSON report instead of the summary
        #[arg(long)]
        json: bool,
    },
    /// Index of iterates of closed geodesics
    Index {
        /// round:N, zoll or spheroid:K
        #[arg(long, default_value = "round:2")]
        metric: String,
        /// inclusive range a..b
        #[arg(long, default_value = "1..4")]
        iterates: String,
        #[arg(long, default_value_t = 1)]
        geodesics: usize,
        #[arg(long, default_value_t = 512)]
        per_lap: usize,
        #[arg(long)]
        no_oracle: bool,
        #[arg(long)]
        json: bool,
    },
    /// Orientability of the negative bundle over a loop of formal geodesics
    Orientability {
        /// exemplar, twisted:M:TURNS or conjugation:M
        #[arg(long = "loop", default_value = "exemplar")]
        loop_spec: String,
        #[arg(long, default_value_t = 24)]
        samples: usize,
        /// iterates q to classify
        #[arg(long = "iterate")]
        iterates: Vec<u32>,
        #[arg(long)]
        json: bool,
    },
    /// Cohomology ledger of a compact rank-one symmetric space
    Ledger {
        /// S, CP, HP or CaP2
        #[arg(long)]
        cross: String,
        #[arg(long, default_value_t = 0)]
        param: usize,
        #[arg(long, value_enum)]
        check: Vec<CheckArg>,
        #[arg(long)]
        json: bool,
    },
    /// Exact contradiction traces for non-regular configurations
    Berger {
        #[arg(long, required_unless_present = "sweep")]
        n: Option<usize>,
        #[arg(long, required_unless_present = "sweep")]
        m: Option<usize>,
        #[arg(long, required_unless_present = "sweep")]
        dim_c: Option<usize>,
        /// sweep n = 4..=N_MAX, m = 1..=M_MAX
        #[arg(long, conflicts_with_all = ["n", "m", "dim_c"])]
        sweep: bool,
        #[arg(long, default_value_t = 10)]
        n_max: usize,
        #[arg(long, default_value_t = 6)]
        m_max: usize,
        #[arg(long)]
        json: bool,
    },
    /// Small end-to-end run over every analysis
    Selftest,
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn parse_metric(s: &str) -> Result<MetricSpec, CliError> {
    let (name, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b)));
    let m = match (name, arg) {
        ("round", Some(n)) => MetricSpec::round(n.parse().map_err(|_| input(format!("bad dimension in {s}")))?),
        ("zoll", None) => MetricSpec::zoll_example(),
        ("spheroid", Some(k)) => MetricSpec::spheroid(k.parse().map_err(|_| input(format!("bad parameter in {s}")))?),
        _ => return Err(input(format!("unknown metric {s}; expected round:N, zoll or spheroid:K"))),
    };
    m.validate()?;
    Ok(m)
}

fn parse_range(s: &str) -> Result<[usize; 2], CliError> {
    let bad = || input(format!("bad range {s}; expected a..b"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let b = b.strip_prefix('=').unwrap_or(b);
    Ok([a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?])
}

fn parse_loop(s: &str) -> Result<LoopSpec, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| p.parse::<i64>().map_err(|_| input(format!("bad loop {s}")));
    match parts.as_slice() {
        ["exemplar"] => Ok(LoopSpec::Exemplar),
        ["twisted", m, t] => Ok(LoopSpec::Twisted { m: num(m)? as usize, turns: num(t)? }),
        ["conjugation", m] => Ok(LoopSpec::Conjugation { m: num(m)? as usize }),
        _ => Err(input(format!("unknown loop {s}; expected exemplar, twisted:M:TURNS or conjugation:M"))),
    }
}

fn build(cli: &Cli) -> Result<(Config, bool), CliError> {
    let mut cfg = Config::default();
    let json = match &cli.command {
        Command::Analyze { json } => {
            let path = cli.config.as_ref().ok_or_else(|| input("analyze needs --config"))?;
            let text = std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
            cfg = Config::from_json(&text)?;
            if cfg.is_empty() {
                eprintln!("note: configuration requests no analysis");
            }
            *json
        }
        Command::Index { metric, iterates, geodesics, per_lap, no_oracle, json } => {
            cfg.index = Some(IndexJob {
                metric: parse_metric(metric)?,
                iterates: parse_range(iterates)?,
                geodesics: *geodesics,
                per_lap: *per_lap,
                oracle: !no_oracle,
                horizon: 3.0 * std::f64::consts::PI,
            });
            *json
        }
        Command::Orientability { loop_spec, samples, iterates, json } => {
            cfg.orientability = Some(OrientJob {
                loop_spec: parse_loop(loop_spec)?,
                samples: *samples,
                iterates: iterates.clone(),
            });
            *json
        }
        Command::Ledger { cross, param, check, json } => {
            let checks = check
                .iter()
                .map(|c| match c {
                    CheckArg::Perfectness => Check::Perfectness,
                    CheckArg::Lacunarity => Check::Lacunarity,
                })
                .collect();
            cfg.ledger = Some(LedgerJob {
                families: vec![FamilySpec { tag: cross.clone(), parameter: *param }],
                checks,
            });
            *json
        }
        Command::Berger { n, m, dim_c, sweep, n_max, m_max, json } => {
            cfg.berger = Some(if *sweep {
                BergerJob { n: Some([4, *n_max]), m: Some([1, *m_max]), scenarios: vec![] }
            } else {
                let sc = ScenarioSpec {
                    n: n.unwrap_or_default(),
                    m: m.unwrap_or_default(),
                    dim_c: dim_c.unwrap_or_default(),
                };
                BergerJob { n: None, m: None, scenarios: vec![sc] }
            });
            *json
        }
        Command::Selftest => {
            cfg = selftest_config();
            false
        }
    };
    Ok((cfg, json))
}

fn run(cli: &Cli) -> Result<Report, CliError> {
    let (cfg, json) = build(cli)?;
    let opts = RunOptions {
        seed: cli.seed,
        cap: cli.cap,
        tol_profile: cli.tol_profile.map(|p| match p {
            Profile::Default => TolProfile::Default,
            Profile::Strict => TolProfile::Strict,
        }),
    };
    let report = run_pipeline(&cfg, opts)?;
    if json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.summary());
    }
    if let Some(dir) = &cli.out {
        write_report(&report, dir)?;
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(r) => ExitCode::from(r.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
