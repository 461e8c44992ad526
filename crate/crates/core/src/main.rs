use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hypersplit::bounds::{tail_report, TailBoundQuery};
use hypersplit::harness::{reproduce_trial, write_sweep_csv, ModelSpec};
use hypersplit::typicality::default_epsilon;
use hypersplit::{
    check_typicality, run_experiment, sweep, verify_against_comp, DesignConstants, Error, ExperimentConfig,
    Hypergraph, Result, Sparsity, Storage, TestDesign,
};

#[derive(Parser)]
#[command(name = "hypersplit", version, about = "Non-adaptive learning of random hypergraphs with edge-detecting queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a hypergraph and write it as text
    Generate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a design and export its parameters as JSON
    Design {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        design: DesignArgs,
        /// Where to write the design JSON (stdout when absent)
        #[arg(long, alias = "out")]
        export_design: Option<PathBuf>,
    },
    /// Run seeded trials and report per-trial and aggregate metrics
    Run {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Also write the outcome table of trial 0 in binary form
        #[arg(long)]
        export_outcomes: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid of configurations and write one row per trial
    Sweep {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the typicality conditions on one sampled hypergraph
    Typicality {
        #[command(flatten)]
        model: ModelArgs,
        /// Read the hypergraph from a file instead of sampling it
        #[arg(long)]
        input: Option<PathBuf>,
        /// Edge-count tolerance; defaults to min(1/2, sqrt(6 ln n / m_bar))
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check E within the estimate within COMP on small instances
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a Chernoff tail bound with a Monte Carlo estimate
    Bounds {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
#[command(group(ArgGroup::new("sparsity").required(true).args(["theta", "q", "m_bar"])))]
struct ModelArgs {
    /// Number of vertices
    #[arg(long)]
    n: u32,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    m_bar: Option<f64>,
    /// Scales q on the theta path
    #[arg(long, default_value_t = 1.0)]
    q_multiplier: f64,
    /// Edge uniformity
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn sparsity(&self) -> Sparsity {
        match (self.theta, self.q, self.m_bar) {
            (Some(t), _, _) => Sparsity::Theta(t),
            (_, Some(q), _) => Sparsity::Q(q),
            (_, _, Some(m)) => Sparsity::MBar(m),
            _ => unreachable!("clap requires one sparsity flag"),
        }
    }

    fn spec(&self) -> ModelSpec {
        ModelSpec {
            n_raw: self.n,
            k: self.k,
            sparsity: self.sparsity(),
            q_multiplier: self.q_multiplier,
        }
    }
}

#[derive(Args, Clone)]
#[command(group(ArgGroup::new("grid_sparsity").required(true).args(["theta", "q", "m_bar"])))]
struct GridArgs {
    /// Vertex counts, comma separated or repeated
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    theta: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    q: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    m_bar: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    q_multiplier: f64,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl GridArgs {
    fn specs(&self) -> Vec<ModelSpec> {
        let sparsities: Vec<Sparsity> = self
            .theta
            .iter()
            .map(|&t| Sparsity::Theta(t))
            .chain(self.q.iter().map(|&q| Sparsity::Q(q)))
            .chain(self.m_bar.iter().map(|&m| Sparsity::MBar(m)))
            .collect();
        self.n
            .iter()
            .flat_map(|&n| {
                sparsities.iter().map(move |&sparsity| ModelSpec {
                    n_raw: n,
                    k: self.k,
                    sparsity,
                    q_multiplier: self.q_multiplier,
                })
            })
            .collect()
    }
}

#[derive(Args, Clone)]
struct DesignArgs {
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    c_prime: Option<f64>,
    /// Require C1 >= 155, C2 = C1^3, C' > 4 (defaults switch to 155, 155^3, 5)
    #[arg(long)]
    paper_faithful: bool,
    /// Size the design for this m_bar instead of the model's
    #[arg(long)]
    design_m_bar: Option<f64>,
    /// Recompute assignments on demand instead of storing them
    #[arg(long)]
    regenerate: bool,
    /// Cap on stored assignment bytes
    #[arg(long)]
    memory_cap: Option<u64>,
}

impl DesignArgs {
    fn constants(&self) -> DesignConstants {
        let base = if self.paper_faithful {
            DesignConstants {
                c1: 155.0,
                c2: 155f64.powi(3),
                c_prime: 5.0,
                paper_faithful: true,
            }
        } else {
            DesignConstants::default()
        };
        let c1 = self.c1.unwrap_or(base.c1);
        DesignConstants {
            c1,
            c2: self.c2.unwrap_or(if self.paper_faithful { c1.powi(3) } else { base.c2 }),
            c_prime: self.c_prime.unwrap_or(base.c_prime),
            paper_faithful: self.paper_faithful,
        }
    }

    fn storage(&self) -> Storage {
        if self.regenerate {
            Storage::Regenerate
        } else {
            Storage::Stored
        }
    }
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 10)]
    trials: u32,
    /// Worker threads for trials
    #[arg(long)]
    workers: Option<usize>,
    /// Also check the typicality conditions on every trial
    #[arg(long)]
    typicality: bool,
    /// Parallel probing inside each decode
    #[arg(long)]
    parallel_decode: bool,
    /// Largest PD set the decoder may build
    #[arg(long)]
    pd_cap: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn config(spec: ModelSpec, seed: u64, design: &DesignArgs, exp: &ExperimentArgs) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(spec, exp.trials, seed);
    cfg.design = design.constants();
    cfg.design_m_bar = design.design_m_bar;
    cfg.storage = design.storage();
    cfg.check_typicality = exp.typicality;
    cfg.workers = exp.workers;
    cfg.parallel_decode = exp.parallel_decode;
    if let Some(cap) = design.memory_cap {
        cfg.caps.memory_bytes = cap;
    }
    if let Some(cap) = exp.pd_cap {
        cfg.caps.pd_tuples = cap;
    }
    cfg
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { model, out } => {
            let params = model.spec().params(model.seed)?;
            let h = Hypergraph::sample_er(&params)?;
            let mut w = output(out.as_deref())?;
            h.write_text(&mut w)?;
            w.flush()?;
        }
        Command::Design { model, design, export_design } => {
            let exp = ExperimentArgs {
                trials: 1,
                workers: None,
                typicality: false,
                parallel_decode: false,
                pd_cap: None,
            };
            let cfg = config(model.spec(), model.seed, &design, &exp);
            let params = cfg.validate()?;
            let dp = cfg.design_params(&params, model.seed)?;
            let d = TestDesign::build_with(&dp, cfg.storage, cfg.caps.memory_bytes)?;
            write_json(&d.export(), export_design.as_deref())?;
        }
        Command::Run { model, design, exp, export_outcomes, format, out } => {
            let cfg = config(model.spec(), model.seed, &design, &exp);
            if let Some(path) = export_outcomes {
                let trial = reproduce_trial(&cfg, 0)?;
                let mut w = BufWriter::new(File::create(path)?);
                trial.outcomes.write_binary(&mut w)?;
                w.flush()?;
            }
            match format {
                Format::Json => write_json(&run_experiment(&cfg)?, out.as_deref())?,
                Format::Csv => write_sweep_csv(&sweep(&[cfg])?, output(out.as_deref())?)?,
            }
        }
        Command::Sweep { grid, design, exp, format, out } => {
            let cfgs: Vec<ExperimentConfig> =
                grid.specs().into_iter().map(|s| config(s, grid.seed, &design, &exp)).collect();
            let rows = sweep(&cfgs)?;
            match format {
                Format::Csv => write_sweep_csv(&rows, output(out.as_deref())?)?,
                Format::Json => write_json(&rows, out.as_deref())?,
            }
        }
        Command::Typicality { model, input, epsilon, out } => {
            let params = model.spec().params(model.seed)?;
            let h = match input {
                Some(p) => Hypergraph::read_text(BufReader::new(File::open(p)?))?,
                None => Hypergraph::sample_er(&params)?,
            };
            if h.n() != params.n {
                return Err(Error::Config(format!("file has n={} but the model pads to {}", h.n(), params.n)));
            }
            let eps = epsilon.unwrap_or_else(|| default_epsilon(params.n, params.m_bar));
            write_json(&check_typicality(&h, &params, eps)?, out.as_deref())?;
        }
        Command::Verify { model, design, exp, out } => {
            let cfg = config(model.spec(), model.seed, &design, &exp);
            let report = verify_against_comp(&cfg)?;
            write_json(&report, out.as_deref())?;
            if let Some(bad) = report.trials.iter().find(|t| !t.check.holds()) {
                return Err(Error::Invariant(format!(
                    "{} of {} trials violate containment; first is trial {} (seed {})",
                    report.violations,
                    report.trials.len(),
                    bad.trial,
                    bad.seed
                )));
            }
        }
        Command::Bounds { n, p, delta, trials, seed, out } => {
            let q = TailBoundQuery::new(n, p, delta, trials, seed)?;
            write_json(&tail_report(&q)?, out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
