//! `gkflab`: closed-form predictions, field dumps and Monte Carlo validation
//! for Gaussian kinematic formulas.
//!
//! Settings resolve as flags > `--config` file > defaults. Exit status is 0 on
//! success or PASS, 1 on an experiment FAIL and 2 on usage or config errors.

mod commands;
mod params;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use commands::Which;
use params::Params;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] gkflab::GkfError),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

#[derive(Parser)]
#[command(name = "gkflab", version, about = "Gaussian kinematic formula toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form expected curvatures E{L_i} as a CSV table.
    Expect {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        domain: DomainArgs,
        /// Curvature orders, comma-separated.
        #[arg(long)]
        i: Option<String>,
    },
    /// Simulate a smooth Gaussian field on a rectangle and dump it.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        field: FieldArgs,
        /// Number of independent components.
        #[arg(long)]
        k: Option<usize>,
        /// Write little-endian f64 values after the header.
        #[arg(long)]
        binary: bool,
    },
    /// Gaussian Minkowski functionals M_0..M_jmax of a domain.
    Gmf {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long)]
        jmax: Option<usize>,
        /// Estimate by Monte Carlo tube measures even when a closed form exists.
        #[arg(long)]
        force_numeric: bool,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Run a Monte Carlo experiment against its prediction.
    Validate {
        #[arg(value_enum)]
        experiment: Which,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        domain: DomainArgs,
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        z_gate: Option<f64>,
        /// Cap angular radii in degrees.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Projection dimensions for the Poincaré experiment.
        #[arg(long)]
        n: Option<String>,
        /// Target tail probability for the sup experiment.
        #[arg(long)]
        tail: Option<f64>,
        /// Tube radii.
        #[arg(long)]
        rho: Option<String>,
        #[arg(long)]
        jmax: Option<usize>,
        /// Skip the numeric GMF cross-check in the tube experiment.
        #[arg(long)]
        no_numeric: bool,
        /// Also check the Euclidean tube of a rectangle, e.g. rect:3,4.
        #[arg(long)]
        euclid: Option<String>,
        #[arg(long)]
        euclid_rho: Option<f64>,
        /// Report format on stdout when --out is not given.
        #[arg(long)]
        format: Option<String>,
    },
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (validate: base path for .json and .csv reports).
    #[arg(long)]
    out: Option<String>,
    /// Master seed; falls back to GKFLAB_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SpaceArgs {
    /// rect:<a>,<b>,..., sphere[:r], cap:<degrees> or point.
    #[arg(long)]
    space: Option<String>,
    /// Second spectral moment, scaling the metric.
    #[arg(long, allow_hyphen_values = true)]
    lambda2: Option<f64>,
}

#[derive(Args)]
struct DomainArgs {
    /// halfline, fullspace, ballcomp or interval.
    #[arg(long)]
    domain: Option<String>,
    /// Threshold(s), comma-separated; the radius for ballcomp.
    #[arg(long, allow_hyphen_values = true)]
    u: Option<String>,
    /// Number of field components.
    #[arg(long)]
    k: Option<usize>,
    /// Upper end of an interval domain.
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
}

#[derive(Args)]
struct FieldArgs {
    #[arg(long)]
    ell: Option<f64>,
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long)]
    mesh_level: Option<u32>,
}

fn load(common: &Common) -> Result<Params, CliError> {
    let mut p = Params::load(common.config.as_deref())?;
    p.flag("out.path", common.out.as_deref());
    p.flag("mc.seed", common.seed);
    p.flag("mc.workers", common.workers);
    Ok(p)
}

fn apply_space(p: &mut Params, s: &SpaceArgs) {
    commands::space_flag(p, s.space.as_deref());
    p.flag("space.lambda2", s.lambda2);
}

fn apply_domain(p: &mut Params, d: &DomainArgs) {
    p.flag("domain.kind", d.domain.as_deref());
    p.flag("domain.u", d.u.as_deref());
    p.flag("domain.k", d.k);
    p.flag("domain.b", d.b);
}

fn apply_field(p: &mut Params, f: &FieldArgs) {
    p.flag("field.ell", f.ell);
    p.flag("field.spacing", f.spacing);
    p.flag("field.mesh_level", f.mesh_level);
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Expect {
            common,
            space,
            domain,
            i,
        } => {
            let mut p = load(&common)?;
            apply_space(&mut p, &space);
            apply_domain(&mut p, &domain);
            p.flag("expect.i", i);
            commands::cmd_expect(&mut p)
        }
        Command::Simulate {
            common,
            space,
            field,
            k,
            binary,
        } => {
            let mut p = load(&common)?;
            apply_space(&mut p, &space);
            apply_field(&mut p, &field);
            p.flag("field.k", k);
            p.flag("field.binary", binary.then_some(true));
            commands::cmd_simulate(&mut p)
        }
        Command::Gmf {
            common,
            domain,
            jmax,
            force_numeric,
            samples,
        } => {
            let mut p = load(&common)?;
            apply_domain(&mut p, &domain);
            p.flag("gmf.jmax", jmax);
            p.flag("gmf.numeric", force_numeric.then_some(true));
            p.flag("gmf.samples", samples);
            commands::cmd_gmf(&mut p)
        }
        Command::Validate {
            experiment,
            common,
            space,
            domain,
            field,
            replicates,
            z_gate,
            alpha,
            beta,
            n,
            tail,
            rho,
            jmax,
            no_numeric,
            euclid,
            euclid_rho,
            format,
        } => {
            let mut p = load(&common)?;
            apply_space(&mut p, &space);
            apply_domain(&mut p, &domain);
            apply_field(&mut p, &field);
            p.flag("mc.replicates", replicates);
            p.flag("mc.z_gate", z_gate);
            p.flag("kff.alpha", alpha);
            p.flag("kff.beta", beta);
            p.flag("poincare.n", n);
            p.flag("sup.tail", tail);
            p.flag("tube.rho", rho);
            p.flag("tube.jmax", jmax);
            p.flag("tube.numeric", no_numeric.then_some(false));
            p.flag("tube.euclid", euclid);
            p.flag("tube.euclid_rho", euclid_rho);
            p.flag("out.format", format);
            commands::cmd_validate(experiment, &mut p)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
