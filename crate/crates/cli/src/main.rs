//! `mapfluct`: analytic transforms, path simulation and verification suites
//! for Markov additive processes described in a JSON model file.

mod output;
mod parse;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mapfluct::fluctuation::{FactorKind, InitialLaw, WienerHopf};
use mapfluct::simulate::{run_blocks, write_paths_csv, McConfig, Simulator, Streams};
use mapfluct::spectral::fundamental;
use mapfluct::verify::{run_suite, CheckReport, Suite};
use mapfluct::{MapModel, C64};
use thiserror::Error;

use output::{render_blocks, render_reports, Block, Format};

const GRAMMAR: &str = "\
Value grammar:
  complex  re, imi or re+imi (e.g. 0.5, 2i, -0.2+0.5i, 1e-3-i)
  vector   comma-separated reals, one per phase (e.g. 0.3,0.7)
  phase    a phase name from the model file (default names are 1, 2, ...)

Exit status: 0 on success, 1 on a numerical failure, 2 on invalid input,
3 when a verification suite fails.";

/// Stream tag of the simulate verb.
const SIMULATE_TAG: &str = "simulate";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] mapfluct::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        use mapfluct::Error as E;
        match self {
            CliError::Core(E::Validation(_) | E::Parse(_) | E::Domain(_) | E::Class { .. }) => 2,
            CliError::Core(_) => 1,
            CliError::Usage(_) | CliError::Io(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mapfluct", version, about = "Fluctuation analysis of Markov additive processes", after_help = GRAMMAR)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write the result here instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads for simulation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write the parsed model in normalized JSON form.
    #[arg(long, global = true, value_name = "PATH")]
    emit_normalized: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArg {
    /// Model description in JSON.
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
}

#[derive(Debug, Args)]
struct BetaArg {
    /// Extra killing rates per phase (default all zero).
    #[arg(long, value_parser = parse::reals, allow_hyphen_values = true)]
    beta: Option<parse::Reals>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Matrix exponent Ψ^β(α).
    Psi {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_parser = parse::complex, allow_hyphen_values = true)]
        alpha: C64,
        #[command(flatten)]
        beta: BetaArg,
    },
    /// Fundamental matrices G, R, H and the stationary law.
    Fundamental {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        beta: BetaArg,
    },
    /// A Wiener-Hopf factor at one point.
    Wh {
        #[command(flatten)]
        model: ModelArg,
        /// killing, sup, inf, cond-up or cond-down.
        #[arg(long)]
        kind: String,
        #[arg(long, value_parser = parse::complex, allow_hyphen_values = true)]
        alpha: C64,
        #[command(flatten)]
        beta: BetaArg,
    },
    /// Transform E[exp(-<β,σ>); J_σ] of the last exit from (-∞, 0].
    LastExit {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        beta: BetaArg,
    },
    /// Starting law of the process conditioned to stay non-positive.
    InitLaw {
        #[command(flatten)]
        model: ModelArg,
        /// An UP phase.
        #[arg(long)]
        phase: String,
        /// Negative levels at which the density factor is evaluated.
        #[arg(long, value_parser = parse::reals, allow_hyphen_values = true)]
        x: Option<parse::Reals>,
    },
    /// Exact path simulation with summary statistics.
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Start phase (default: the first).
        #[arg(long)]
        start: Option<String>,
        /// Write every path as CSV.
        #[arg(long, value_name = "PATH")]
        dump: Option<PathBuf>,
    },
    /// Verification suites.
    Verify {
        #[command(flatten)]
        model: ModelArg,
        /// A suite name, a comma-separated list, or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        seed: u64,
        /// Paths per Monte Carlo estimate.
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
    },
}

struct Outcome {
    text: String,
    pass: bool,
}

fn load_model(arg: &ModelArg, emit: Option<&Path>) -> Result<MapModel, CliError> {
    let text = fs::read_to_string(&arg.model)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", arg.model.display())))?;
    let model = MapModel::from_json_str(&text)?;
    if let Some(path) = emit {
        let mut json = serde_json::to_string_pretty(&model.to_json()).expect("model serializes");
        json.push('\n');
        write_file(path, &json)?;
    }
    Ok(model)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

fn beta_or_zero(beta: &BetaArg, n: usize) -> Vec<f64> {
    beta.beta.clone().map_or_else(|| vec![0.0; n], |b| b.0)
}

fn phase_index(model: &MapModel, name: &str) -> Result<usize, CliError> {
    model.names().iter().position(|p| p == name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown phase {name:?}; the model has phases {}",
            model.names().join(", ")
        ))
    })
}

fn names(model: &MapModel) -> Vec<String> {
    model.names().to_vec()
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let emit = cli.emit_normalized.as_deref();
    let done = |blocks: Vec<Block>| -> Result<Outcome, CliError> {
        Ok(Outcome {
            text: render_blocks(&blocks, cli.format)?,
            pass: true,
        })
    };
    match &cli.command {
        Command::Psi { model, alpha, beta } => {
            let m = load_model(model, emit)?;
            let psi = m.psi(*alpha, &beta_or_zero(beta, m.n()))?;
            done(vec![Block::complex("psi", names(&m), names(&m), &psi)])
        }
        Command::Fundamental { model, beta } => {
            let m = load_model(model, emit)?;
            let f = fundamental(&m, &beta_or_zero(beta, m.n()))?;
            let pi = nalgebra::DMatrix::from_row_slice(1, m.n(), f.pi.as_slice());
            let roots = &f.root_data.roots;
            let lambda = mapfluct::CMatrix::from_iterator(roots.len(), 1, roots.iter().copied());
            let blocks = vec![
                Block::real("G", names(&m), names(&m), &f.g),
                Block::real("R", names(&m), names(&m), &f.r),
                Block::real("H", names(&m), names(&m), &f.h),
                Block::real("pi", vec!["pi".into()], names(&m), &pi),
                Block::complex(
                    "roots",
                    (1..=roots.len()).map(|k| k.to_string()).collect(),
                    vec!["lambda".into()],
                    &lambda,
                ),
            ];
            done(blocks)
        }
        Command::Wh {
            model,
            kind,
            alpha,
            beta,
        } => {
            let m = load_model(model, emit)?;
            let kind = FactorKind::parse(kind)?;
            let wh = WienerHopf::new(&m, &beta_or_zero(beta, m.n()))?;
            let f = wh.factor(kind, *alpha)?;
            done(vec![Block::complex(kind.name(), names(&m), names(&m), &f)])
        }
        Command::LastExit { model, beta } => {
            let m = load_model(model, emit)?;
            let wh = WienerHopf::new(&m, &beta_or_zero(beta, m.n()))?;
            done(vec![Block::real(
                "last-exit",
                names(&m),
                names(&m),
                &wh.last_exit()?,
            )])
        }
        Command::InitLaw { model, phase, x } => {
            let m = load_model(model, emit)?;
            let i = phase_index(&m, phase)?;
            let f = fundamental(&m, &vec![0.0; m.n()])?;
            let law = InitialLaw::new(&m, &f, i)?;
            let constants = [("c".to_string(), law.c), ("atom".to_string(), law.atom)];
            let mut blocks = vec![Block::column("constants", "value", &constants)];
            let xs = x
                .clone()
                .map_or_else(|| vec![-0.25, -0.5, -1.0, -2.0, -4.0], |x| x.0);
            if let Some(bad) = xs.iter().find(|&&v| v.is_nan() || v >= 0.0) {
                return Err(CliError::Usage(format!(
                    "--x levels must be negative, got {bad}"
                )));
            }
            let grid =
                nalgebra::DMatrix::from_fn(xs.len(), m.n(), |r, j| law.density_factor(j, xs[r]));
            blocks.push(Block::real(
                "density-factor",
                xs.iter().map(|v| v.to_string()).collect(),
                names(&m),
                &grid,
            ));
            done(blocks)
        }
        Command::Simulate {
            model,
            n,
            seed,
            start,
            dump,
        } => {
            let m = load_model(model, emit)?;
            let j0 = match start {
                Some(s) => phase_index(&m, s)?,
                None => 0,
            };
            simulate(&m, *n, *seed, j0, dump.as_deref(), cli)
        }
        Command::Verify {
            model,
            suite,
            seed,
            n,
        } => {
            let m = load_model(model, emit)?;
            let cfg = McConfig::new(*n, *seed).with_threads(cli.threads);
            let suites: Vec<Suite> = if suite == "all" {
                Suite::ALL.to_vec()
            } else {
                suite
                    .split(',')
                    .map(|s| Suite::parse(s.trim()))
                    .collect::<Result<_, _>>()?
            };
            let explicit = suite != "all";
            let mut reports = Vec::new();
            for s in suites {
                match run_suite(s, &m, &cfg) {
                    Ok(r) => reports.push(r),
                    // under `all`, suites that do not apply to the model are listed as skipped
                    Err(e @ (mapfluct::Error::Unsupported(_) | mapfluct::Error::Class { .. }))
                        if !explicit =>
                    {
                        let mut r = CheckReport::new(s.name());
                        r.note(format!("skipped: {e}"));
                        reports.push(r.finish());
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            Ok(Outcome {
                pass: reports.iter().all(|r| r.pass),
                text: render_reports(&reports, cli.format)?,
            })
        }
    }
}

fn simulate(
    m: &MapModel,
    n: usize,
    seed: u64,
    j0: usize,
    dump: Option<&Path>,
    cli: &Cli,
) -> Result<Outcome, CliError> {
    let sim = Simulator::new(m)?;
    let phases = m.n();
    if let Some(path) = dump {
        let streams = Streams::new(seed, SIMULATE_TAG);
        let paths = (0..n as u64)
            .map(|k| sim.sample(&mut streams.path(k), 0.0, j0))
            .collect::<Result<Vec<_>, _>>()?;
        let file = fs::File::create(path)
            .map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))?;
        write_paths_csv(std::io::BufWriter::new(file), m.names(), &paths)?;
    }
    // [zeta, X_end, sup, inf, events, 1{J_end = j}...]
    let cfg = McConfig::new(n, seed).with_threads(cli.threads);
    let bm = run_blocks(&cfg, SIMULATE_TAG, 5 + phases, |_, rng, out| {
        let path = sim.sample(rng, 0.0, j0)?;
        let s = path.summary(0.0, 0.0);
        out[0] = s.zeta;
        out[1] = s.x_end;
        out[2] = s.sup.value;
        out[3] = s.inf.value;
        out[4] = path.segments.len() as f64;
        out[5 + s.j_end] = 1.0;
        Ok(())
    })?;
    let mut rows = vec![
        "zeta".to_string(),
        "X_end".into(),
        "sup".into(),
        "inf".into(),
        "events".into(),
    ];
    rows.extend(m.names().iter().map(|p| format!("P(J_end={p})")));
    let stats = nalgebra::DMatrix::from_fn(rows.len(), 2, |k, c| {
        let (mean, se) = bm.mean_se(k);
        if c == 0 {
            mean
        } else {
            se
        }
    });
    Ok(Outcome {
        text: render_blocks(
            &[Block::real(
                "summary",
                rows,
                vec!["mean".into(), "se".into()],
                &stats,
            )],
            cli.format,
        )?,
        pass: true,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            let written = match &cli.out {
                Some(path) => write_file(path, &outcome.text),
                None => std::io::stdout()
                    .write_all(outcome.text.as_bytes())
                    .map_err(|e| CliError::Io(format!("writing output: {e}"))),
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(e.code());
            }
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
