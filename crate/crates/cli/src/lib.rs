//! `bethe-perm` command-line front end.
//!
//! Exit status: 0 on success, 1 on domain errors (JSON diagnostic on
//! stderr), 2 on usage errors.

use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::PathBuf;

use bethe_core::cycle_index::{
    cycle_index, log_psi, psi, z_all_one, z_bounds, CycleIndexWeights, PsiParams,
    PSI_LINEAR_MAX_N,
};
use bethe_core::experiments::{
    format_f64, run_scatter, summarize, write_csv, write_json_lines, Distribution, EnsembleSpec,
};
use bethe_core::matrix::{log_permanent, permanent_naive, permanent_ryser};
use bethe_core::verify::{verify_suite, Evaluators, Suite, SCHEMA_VERSION};
use bethe_core::{bethe_permanent, Bethe2Method, BetheOptions, Error, LogValue, NonNegMatrix};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bethe-perm", version, about = "Permanents and Bethe permanents of non-negative matrices")]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "BETHE_THREADS")]
    pub threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    /// One JSON object per line (experiment records only).
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PermMethod {
    Ryser,
    Naive,
    Log,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact permanent of a matrix read from CSV or JSON.
    Perm {
        /// Matrix file; standard input when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PermMethod::Ryser)]
        method: PermMethod,
    },
    /// Degree-2 Bethe permanent.
    Bethe2 {
        #[arg(long)]
        input: Option<PathBuf>,
        /// pairsum | grouped | covers | nfg
        #[arg(long, default_value = "grouped", value_parser = parse_via::<Bethe2Method>)]
        method: Bethe2Method,
    },
    /// Bethe permanent by free-energy minimization.
    Bethe {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, env = "BETHE_TOL", default_value_t = 1e-8, value_parser = positive_f64)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
    },
    /// Cycle index of S_n.
    Zindex {
        #[arg(long)]
        n: usize,
        /// half (z_1 = 1, z_l = 1/2) | all-one | uniform:Z1,ZREST
        #[arg(long, default_value = "half", value_parser = parse_weights)]
        weights: WeightsArg,
    },
    /// Psi_n(theta1, theta2, theta3).
    Psi {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        theta1: f64,
        #[arg(long)]
        theta2: f64,
        #[arg(long, default_value_t = 1.0)]
        theta3: f64,
    },
    /// Random-ensemble scatter data and moment summary.
    Experiment {
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// uniform:A,B | exponential:RATE | constant:C | two-point:P,V0,V1
        #[arg(long, default_value = "uniform:0,1", value_parser = parse_via::<Distribution>)]
        distribution: Distribution,
        /// Also evaluate the Bethe permanent for each sample.
        #[arg(long)]
        include_bethe: bool,
        /// Write records here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Cross-oracle identity battery.
    Verify {
        #[arg(long, default_value = "all", value_parser = parse_via::<Suite>)]
        suite: Suite,
        #[arg(long, default_value_t = 4)]
        max_n: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightsArg {
    Half,
    AllOne,
    Uniform { z1: f64, rest: f64 },
}

impl WeightsArg {
    fn label(&self) -> String {
        match self {
            WeightsArg::Half => "half".into(),
            WeightsArg::AllOne => "all-one".into(),
            WeightsArg::Uniform { z1, rest } => format!("uniform:{z1},{rest}"),
        }
    }
}

fn parse_via<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("{v} is not a positive finite number")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_weights(s: &str) -> Result<WeightsArg, String> {
    match s {
        "half" => return Ok(WeightsArg::Half),
        "all-one" => return Ok(WeightsArg::AllOne),
        _ => {}
    }
    let args = s
        .strip_prefix("uniform:")
        .ok_or_else(|| format!("unknown weights {s:?}"))?;
    let nums: Vec<f64> = args
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match nums.as_slice() {
        &[z1, rest] if z1.is_finite() && rest.is_finite() => Ok(WeightsArg::Uniform { z1, rest }),
        _ => Err(format!("expected uniform:Z1,ZREST, got {s:?}")),
    }
}

enum Failure {
    Domain(Error),
    /// Report already written; exit nonzero without a diagnostic.
    Reported,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Domain(Error::Io(e))
    }
}

type Outcome = Result<(), Failure>;

fn read_matrix(input: &Option<PathBuf>) -> bethe_core::Result<NonNegMatrix> {
    match input {
        Some(p) => NonNegMatrix::from_path(p),
        None => {
            let mut text = String::new();
            std::io::stdin().read_to_string(&mut text)?;
            if text.trim_start().starts_with('[') {
                NonNegMatrix::from_json_str(&text)
            } else {
                NonNegMatrix::from_csv_str(&text)
            }
        }
    }
}

fn header(command: &str, threads: Option<usize>) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    m.insert("command".into(), json!(command));
    m.insert("threads".into(), json!(threads.unwrap_or_else(rayon::current_num_threads)));
    m
}

fn log_fields(m: &mut Map<String, Value>, value: f64, v: LogValue) {
    m.insert("value".into(), json!(value));
    m.insert("log_value".into(), json!(v.ln()));
}

fn emit(out: &mut dyn Write, format: Format, report: Map<String, Value>) -> std::io::Result<()> {
    match format {
        Format::Json | Format::Jsonl => {
            serde_json::to_writer_pretty(&mut *out, &Value::Object(report))?;
            writeln!(out)
        }
        Format::Csv => {
            let scalars: Vec<(&String, String)> = report
                .iter()
                .filter_map(|(k, v)| match v {
                    Value::Number(x) if x.is_f64() => Some((k, format_f64(x.as_f64().unwrap_or(f64::NAN)))),
                    Value::Number(x) => Some((k, x.to_string())),
                    Value::String(s) => Some((k, s.clone())),
                    Value::Bool(b) => Some((k, b.to_string())),
                    Value::Null => Some((k, String::new())),
                    _ => None,
                })
                .collect();
            let keys: Vec<&str> = scalars.iter().map(|(k, _)| k.as_str()).collect();
            let vals: Vec<&str> = scalars.iter().map(|(_, v)| v.as_str()).collect();
            writeln!(out, "{}", keys.join(","))?;
            writeln!(out, "{}", vals.join(","))
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Outcome {
    let threads = cli.threads;
    match &cli.command {
        Command::Perm { input, method } => {
            let a = read_matrix(input)?;
            let (value, v) = match method {
                PermMethod::Ryser => {
                    let x = permanent_ryser(&a)?;
                    (x, LogValue::from_value(x))
                }
                PermMethod::Naive => {
                    let x = permanent_naive(&a)?;
                    (x, LogValue::from_value(x))
                }
                PermMethod::Log => {
                    let l = log_permanent(&a)?;
                    (l.value(), l)
                }
            };
            let mut r = header("perm", threads);
            r.insert("method".into(), json!(format!("{method:?}").to_lowercase()));
            r.insert("input".into(), json!(input));
            r.insert("n".into(), json!(a.n()));
            log_fields(&mut r, value, v);
            emit(out, cli.format, r)?;
        }
        Command::Bethe2 { input, method } => {
            let a = read_matrix(input)?;
            let value = method.evaluate(&a)?;
            let v = LogValue::from_value(value);
            let mut r = header("bethe2", threads);
            r.insert("method".into(), json!(method.name()));
            r.insert("input".into(), json!(input));
            r.insert("n".into(), json!(a.n()));
            log_fields(&mut r, value, v);
            emit(out, cli.format, r)?;
        }
        Command::Bethe { input, tol, max_iter } => {
            let a = read_matrix(input)?;
            let opts = BetheOptions {
                tol: *tol,
                max_iter: *max_iter,
            };
            let (res, err) = match bethe_permanent(&a, &opts) {
                Ok(res) => (res, None),
                Err(Error::NotConverged(best)) => {
                    let best = *best;
                    (best.clone(), Some(Error::NotConverged(Box::new(best))))
                }
                Err(e) => return Err(e.into()),
            };
            let mut r = header("bethe", threads);
            r.insert("input".into(), json!(input));
            r.insert("n".into(), json!(a.n()));
            r.insert("tol".into(), json!(tol));
            r.insert("max_iter".into(), json!(max_iter));
            r.insert("converged".into(), json!(err.is_none()));
            log_fields(&mut r, res.value, res.log());
            r.insert("residual".into(), json!(res.residual));
            r.insert("iterations".into(), json!(res.iterations));
            let gamma: Vec<&[f64]> = res.gamma.as_slice().chunks(a.n()).collect();
            r.insert("gamma".into(), json!(gamma));
            emit(out, cli.format, r)?;
            if let Some(e) = err {
                return Err(e.into());
            }
        }
        Command::Zindex { n, weights } => {
            let value = match weights {
                WeightsArg::Half => z_all_one(*n)?,
                WeightsArg::AllOne => cycle_index(*n, &CycleIndexWeights::AllOne)?,
                WeightsArg::Uniform { z1, rest } => cycle_index(
                    *n,
                    &CycleIndexWeights::FixedPointsAndRest {
                        fixed: *z1,
                        rest: *rest,
                    },
                )?,
            };
            let mut r = header("zindex", threads);
            r.insert("n".into(), json!(n));
            r.insert("weights".into(), json!(weights.label()));
            r.insert("value".into(), json!(value));
            r.insert("log_value".into(), json!(value.ln()));
            if *weights == WeightsArg::Half && *n >= 1 {
                let (lo, hi) = z_bounds(*n)?;
                r.insert("lower_bound".into(), json!(lo));
                r.insert("upper_bound".into(), json!(hi));
            }
            emit(out, cli.format, r)?;
        }
        Command::Psi {
            n,
            theta1,
            theta2,
            theta3,
        } => {
            let p = PsiParams::new(*theta1, *theta2, *theta3)?;
            let log = log_psi(*n, &p);
            let value = if *n <= PSI_LINEAR_MAX_N { psi(*n, &p) } else { log.value() };
            let mut r = header("psi", threads);
            r.insert("n".into(), json!(n));
            r.insert("theta1".into(), json!(theta1));
            r.insert("theta2".into(), json!(theta2));
            r.insert("theta3".into(), json!(theta3));
            r.insert("value".into(), json!(value));
            r.insert("log_value".into(), json!(log.ln()));
            emit(out, cli.format, r)?;
        }
        Command::Experiment {
            n,
            count,
            seed,
            distribution,
            include_bethe,
            output,
        } => {
            let spec = EnsembleSpec::new(*n, *count, *seed, *distribution)?;
            let records = run_scatter(&spec, *include_bethe);
            let mut file;
            let sink: &mut dyn Write = match output {
                Some(p) => {
                    file = std::io::BufWriter::new(std::fs::File::create(p)?);
                    &mut file
                }
                None => &mut *out,
            };
            match cli.format {
                Format::Csv => write_csv(&records, &mut *sink)?,
                Format::Jsonl => write_json_lines(&records, &mut *sink)?,
                Format::Json => {
                    let mut r = header("experiment", threads);
                    r.insert("include_bethe".into(), json!(include_bethe));
                    r.insert("summary".into(), serde_json::to_value(summarize(&spec, &records)?).map_err(std::io::Error::from)?);
                    r.insert("records".into(), serde_json::to_value(&records).map_err(std::io::Error::from)?);
                    serde_json::to_writer_pretty(&mut *sink, &Value::Object(r)).map_err(std::io::Error::from)?;
                    writeln!(sink)?;
                }
            }
            sink.flush()?;
        }
        Command::Verify { suite, max_n } => {
            let report = verify_suite(*max_n, *suite, &Evaluators::default())?;
            let mut r = header("verify", threads);
            let body = serde_json::to_value(&report).map_err(std::io::Error::from)?;
            if let Value::Object(fields) = body {
                r.extend(fields);
            }
            if cli.format == Format::Csv {
                writeln!(out, "name,n,lhs,rhs,rel_err,tol,pass")?;
                for c in &report.checks {
                    writeln!(
                        out,
                        "\"{}\",{},{},{},{},{},{}",
                        c.name,
                        c.n,
                        format_f64(c.lhs),
                        format_f64(c.rhs),
                        format_f64(c.rel_err),
                        format_f64(c.tol),
                        c.pass
                    )?;
                }
            } else {
                emit(out, cli.format, r)?;
            }
            if !report.all_passed() {
                return Err(Failure::Reported);
            }
        }
    }
    Ok(())
}

pub fn diagnostic(e: &Error) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "error": { "code": e.code(), "message": e.to_string() },
    })
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if cli.threads == Some(0) {
        let _ = writeln!(err, "error: --threads must be at least 1");
        return EXIT_USAGE;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        builder = builder.num_threads(t);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_DOMAIN;
        }
    };
    let mut buf = Vec::new();
    let outcome = pool.install(|| dispatch(&cli, &mut buf));
    if let Err(e) = out.write_all(&buf).and_then(|()| out.flush()) {
        let _ = writeln!(err, "{}", diagnostic(&Error::Io(e)));
        return EXIT_DOMAIN;
    }
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Reported) => EXIT_DOMAIN,
        Err(Failure::Domain(e)) => {
            let _ = writeln!(err, "{}", diagnostic(&e));
            EXIT_DOMAIN
        }
    }
}
