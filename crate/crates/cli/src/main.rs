use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use framekit::certificate::{issue, verify, Envelope, InputDocument, Operation, SearchParams, WeightSpec};
use framekit::exemplars::{
    continuous_fourier_frame, finite_fourier_frame, finite_gabor_frame, geometric_scale_grid, haar_wavelet,
    quadrature_wavelet_frame,
};
use framekit::json::to_string_pretty;
use framekit::{ComplexVector, ErrorClass, FrameError};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "framekit", version, about = "Frame bounds, Weaver partitions, Lyapunov selection and sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// Input JSON file; `-` or omitted reads stdin.
    input: Option<PathBuf>,
    /// Write the JSON result here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write a two-column CSV summary of the scalar result fields.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct Search {
    /// exhaustive, randomized or auto
    #[arg(long, default_value = "auto")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Randomized trials.
    #[arg(long, env = "FRAMEKIT_SEARCH_TRIALS", default_value_t = framekit::partition::DEFAULT_TRIALS)]
    trials: u64,
}

impl Search {
    fn params(&self) -> SearchParams {
        SearchParams { mode: self.mode.clone(), seed: self.seed, trials: self.trials }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Frame bounds of a frame system or continuous model.
    Analyze {
        #[command(flatten)]
        io: Io,
    },
    /// Weaver partition search with a certificate.
    Partition {
        #[command(flatten)]
        io: Io,
        /// Number of blocks; equal proportions unless `--proportions` is given.
        #[arg(long)]
        r: Option<usize>,
        /// Comma-separated block proportions.
        #[arg(long, value_delimiter = ',')]
        proportions: Option<Vec<f64>>,
        /// Use the two-value target when it applies.
        #[arg(long)]
        two_value: bool,
        #[command(flatten)]
        search: Search,
    },
    /// Subset whose partial frame operator matches a weighted one.
    Lyapunov {
        #[command(flatten)]
        io: Io,
        /// `uniform:t` or a JSON file with a list of weights.
        #[arg(long)]
        weights: String,
        /// Norm-square cap of the vectors; defaults to the largest one.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Number of weight buckets.
        #[arg(long)]
        buckets: Option<usize>,
        #[arg(long, default_value_t = framekit::lyapunov::DEFAULT_C)]
        c: f64,
        #[arg(long, default_value_t = framekit::lyapunov::DEFAULT_C0)]
        c0: f64,
        #[command(flatten)]
        search: Search,
    },
    /// Sample a scalable frame (weights are the squared scalars).
    Sample {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        epsilon: f64,
        #[command(flatten)]
        search: Search,
    },
    /// Sample points of a bounded continuous frame.
    Discretize {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        epsilon: f64,
        #[command(flatten)]
        search: Search,
    },
    /// Emit an example model.
    Demo {
        #[command(subcommand)]
        family: Demo,
        #[arg(long, short, global = true)]
        output: Option<PathBuf>,
    },
    /// Re-check a result document from its raw input.
    Verify {
        #[command(flatten)]
        io: Io,
    },
}

#[derive(Subcommand)]
enum Demo {
    /// Characters of Z_M restricted to a support set.
    Fourier {
        #[arg(long = "M", default_value_t = 8)]
        m: u64,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        support: Vec<i64>,
        /// Divisible unit intervals instead of atoms.
        #[arg(long)]
        continuous: bool,
    },
    /// Time-frequency shifts of a window in C^d.
    Gabor {
        /// Comma-separated real window entries.
        #[arg(long, value_delimiter = ',', default_value = "1,0,0,0")]
        window: Vec<f64>,
    },
    /// Quadrature model of the Haar wavelet transform.
    Wavelet {
        /// Frequencies -K..-1, 1..K.
        #[arg(long = "K", default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 1e-3)]
        a_min: f64,
        #[arg(long, default_value_t = 1e3)]
        a_max: f64,
        #[arg(long, default_value_t = 4)]
        per_octave: usize,
        #[arg(long, default_value_t = 5)]
        shifts: usize,
        #[arg(long)]
        divisible: bool,
    },
}

/// An error with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<FrameError> for Failure {
    fn from(e: FrameError) -> Self {
        let code = match e.class() {
            ErrorClass::Input => 2,
            ErrorClass::Hypothesis => 3,
            ErrorClass::Budget => 4,
        };
        Failure { code, message: e.to_string() }
    }
}

fn io_failure(what: &str, e: io::Error) -> Failure {
    Failure { code: 2, message: format!("{what}: {e}") }
}

fn read_input(path: &Option<PathBuf>) -> Result<String, Failure> {
    match path {
        Some(p) if p.as_os_str() != "-" => fs::read_to_string(p).map_err(|e| io_failure(&p.display().to_string(), e)),
        _ => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).map_err(|e| io_failure("stdin", e))?;
            Ok(s)
        }
    }
}

fn parse_json(text: &str) -> Result<Value, Failure> {
    serde_json::from_str(text).map_err(|e| FrameError::Malformed(e.to_string()).into())
}

fn write_output(path: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, format!("{text}\n")).map_err(|e| io_failure(&p.display().to_string(), e)),
        None => {
            let mut out = io::stdout().lock();
            writeln!(out, "{text}").map_err(|e| io_failure("stdout", e))
        }
    }
}

fn csv_cell(v: &Value) -> Option<String> {
    match v {
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::String(s) => Some(s.replace(',', ";")),
        Value::Array(items) if items.iter().all(|x| x.is_number()) => {
            Some(items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"))
        }
        _ => None,
    }
}

fn write_csv(path: &PathBuf, env: &Envelope) -> Result<(), Failure> {
    let mut text = String::from("field,value\n");
    text.push_str(&format!("kind,{}\nsatisfied,{}\n", env.kind, env.satisfied));
    if let Value::Object(map) = &env.result {
        for (k, v) in map {
            if let Some(cell) = csv_cell(v) {
                text.push_str(&format!("{k},{cell}\n"));
            }
        }
    }
    fs::write(path, text).map_err(|e| io_failure(&path.display().to_string(), e))
}

fn run_operation(io: &Io, op: Operation) -> Result<u8, Failure> {
    let input = parse_json(&read_input(&io.input)?)?;
    let (env, _) = issue(op, input)?;
    write_output(&io.output, &to_string_pretty(&env)?)?;
    if let Some(p) = &io.csv {
        write_csv(p, &env)?;
    }
    Ok(if env.satisfied { 0 } else { 1 })
}

fn parse_weights(spec: &str) -> Result<WeightSpec, Failure> {
    if let Some(t) = spec.strip_prefix("uniform:") {
        let t: f64 = t.parse().map_err(|_| Failure { code: 2, message: format!("bad uniform weight `{t}`") })?;
        return Ok(WeightSpec::Uniform(t));
    }
    let text = fs::read_to_string(spec).map_err(|e| io_failure(spec, e))?;
    let w: Vec<f64> =
        serde_json::from_str(&text).map_err(|e| Failure::from(FrameError::Malformed(format!("{spec}: {e}"))))?;
    Ok(WeightSpec::List(w))
}

fn demo(family: &Demo) -> Result<String, Failure> {
    Ok(match family {
        Demo::Fourier { m, support, continuous } => {
            let model =
                if *continuous { continuous_fourier_frame(*m, support)? } else { finite_fourier_frame(*m, support)? };
            to_string_pretty(&model)?
        }
        Demo::Gabor { window } => to_string_pretty(&finite_gabor_frame(&ComplexVector::from_real(window)?)?)?,
        Demo::Wavelet { k, a_min, a_max, per_octave, shifts, divisible } => {
            let scales = geometric_scale_grid(*a_min, *a_max, *per_octave)?;
            let (model, _) = quadrature_wavelet_frame(&haar_wavelet(), &scales, *shifts, *k, *divisible)?;
            to_string_pretty(&model)?
        }
    })
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Analyze { io } => run_operation(&io, Operation::Analyze),
        Command::Partition { io, r, proportions, two_value, search } => {
            let proportions = match (r, proportions) {
                (Some(r), Some(p)) if p.len() != r => {
                    return Err(Failure { code: 2, message: format!("--r {r} but {} proportions", p.len()) })
                }
                (_, Some(p)) => p,
                (Some(0), None) => return Err(Failure { code: 2, message: "--r must be positive".into() }),
                (r, None) => {
                    let r = r.unwrap_or(2);
                    vec![1.0 / r as f64; r]
                }
            };
            run_operation(&io, Operation::Partition { proportions, two_value, search: search.params() })
        }
        Command::Lyapunov { io, weights, epsilon, buckets, c, c0, search } => {
            let weights = parse_weights(&weights)?;
            let text = read_input(&io.input)?;
            let epsilon = match epsilon {
                Some(e) => e,
                None => {
                    let (_, doc) = InputDocument::parse(&text)?;
                    match doc {
                        InputDocument::Frame(f) => f.delta(),
                        InputDocument::Model(m) => m.max_norm_sqr(),
                    }
                }
            };
            let op = Operation::Lyapunov { weights, epsilon, buckets, c, c0, search: search.params() };
            let input = parse_json(&text)?;
            let (env, _) = issue(op, input)?;
            write_output(&io.output, &to_string_pretty(&env)?)?;
            if let Some(p) = &io.csv {
                write_csv(p, &env)?;
            }
            Ok(if env.satisfied { 0 } else { 1 })
        }
        Command::Sample { io, epsilon, search } => {
            run_operation(&io, Operation::Sample { epsilon, search: search.params() })
        }
        Command::Discretize { io, epsilon, search } => {
            run_operation(&io, Operation::Discretize { epsilon, search: search.params() })
        }
        Command::Demo { family, output } => {
            write_output(&output, &demo(&family)?)?;
            Ok(0)
        }
        Command::Verify { io } => {
            let value = parse_json(&read_input(&io.input)?)?;
            let env: Envelope =
                serde_json::from_value(value).map_err(|e| Failure::from(FrameError::Malformed(e.to_string())))?;
            let report = verify(&env)?;
            write_output(&io.output, &to_string_pretty(&report)?)?;
            Ok(if report.ok { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
