use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oed_precond::experiments::{
    parse_alphas, parse_sizes, run_exp1, run_exp2, run_exp3, run_model_sweep, sweep_table,
    write_records, write_sweep, ExperimentConfig, ExperimentId, PreconditionMode,
};
use oed_precond::Error;

#[derive(Parser)]
#[command(
    version,
    about = "Numerical experiments for preconditioned A-optimal design"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prior-information sweep over alpha.
    Exp1(Common),
    /// Problem-size sweep over 50n x 7 matrices.
    Exp2(Common),
    /// FitzHugh-Nagumo design with controls.
    Exp3(Common),
    /// Condition numbers of the two-weight model problem.
    ModelSweep(Common),
}

#[derive(Args)]
struct Common {
    /// Matrices per grid point (exp1, exp2) or repeats (exp3).
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma list or log:lo:hi:count.
    #[arg(long)]
    alphas: Option<String>,
    /// Comma list of size multipliers n.
    #[arg(long)]
    sizes: Option<String>,
    /// on, off or both.
    #[arg(long)]
    precondition: Option<String>,
    /// CSV output path (default: <experiment>.csv).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the sizes of the original study.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    qp_max_iter: Option<usize>,
    #[arg(long)]
    sqp_max_iter: Option<usize>,
    #[arg(long)]
    tol_d: Option<f64>,
}

impl Common {
    fn into_config(self, id: ExperimentId) -> Result<(ExperimentConfig, PathBuf), Error> {
        let mut cfg = if self.paper_scale {
            ExperimentConfig::paper_scale(id)
        } else {
            ExperimentConfig::new(id)
        };
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(a) = &self.alphas {
            cfg.alphas = parse_alphas(a)?;
        }
        if let Some(s) = &self.sizes {
            cfg.sizes = parse_sizes(s)?;
        }
        if let Some(p) = &self.precondition {
            cfg.precondition = p.parse::<PreconditionMode>()?;
        }
        if let Some(q) = self.qp_max_iter {
            cfg.sqp.qp_max_iterations = Some(q);
        }
        if let Some(k) = self.sqp_max_iter {
            cfg.sqp.max_iterations = k;
        }
        if let Some(t) = self.tol_d {
            cfg.sqp.tol_d = t;
        }
        cfg.validate()?;
        let out = self
            .out
            .unwrap_or_else(|| PathBuf::from(format!("{id}.csv")));
        Ok((cfg, out))
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("exp3");
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Error> {
    let (id, common) = match cli.command {
        Command::Exp1(c) => (ExperimentId::Exp1, c),
        Command::Exp2(c) => (ExperimentId::Exp2, c),
        Command::Exp3(c) => (ExperimentId::Exp3, c),
        Command::ModelSweep(c) => (ExperimentId::ModelSweep, c),
    };
    let (cfg, out) = common.into_config(id)?;
    match id {
        ExperimentId::Exp1 => {
            let res = run_exp1(&cfg)?;
            write_records(create(&out)?, &res.records)?;
            print!("{}", res.table());
        }
        ExperimentId::Exp2 => {
            let res = run_exp2(&cfg)?;
            write_records(create(&out)?, &res.records)?;
            print!("{}", res.table());
        }
        ExperimentId::Exp3 => {
            let res = run_exp3(&cfg)?;
            write_records(create(&out)?, &res.records)?;
            if let Some(design) = &res.design {
                let design_path = sibling(&out, "design");
                let trajectory_path = sibling(&out, "trajectory");
                design.write_design_csv(create(&design_path)?)?;
                design.write_trajectory_csv(create(&trajectory_path)?)?;
                println!("design: {}", design_path.display());
                println!("trajectory: {}", trajectory_path.display());
            }
            print!("{}", res.table());
        }
        ExperimentId::ModelSweep => {
            let rows = run_model_sweep(&cfg)?;
            write_sweep(create(&out)?, &rows)?;
            print!("{}", sweep_table(&rows));
        }
    }
    println!("records: {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
