use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lattice_energy::energy::Potential;

#[derive(Debug, Parser)]
#[command(name = "latenergy", version, about = "Energies, designs and local optimality of periodic point sets")]
pub struct Cli {
    /// Absolute truncation target for lattice sums (default: 1e-12 relative).
    #[arg(long, global = true, value_name = "EPS")]
    pub target_tail: Option<f64>,

    /// Squared-norm bound up to which shells are checked against design hypotheses.
    #[arg(long, global = true, value_name = "X")]
    pub cutoff_norm_sq: Option<f64>,

    #[command(subcommand)]
    pub command: Command,
}

/// Where the periodic form comes from.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Form file (JSON with dim, gram, optional gram_denominator and translations).
    #[arg(long, value_name = "FILE")]
    pub form: Option<PathBuf>,

    /// Catalog id: a2, d4, e8, leech, d9plus or zd:<d>.
    #[arg(long, value_name = "ID")]
    pub lattice: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Critical,
    Ps,
    Fc,
    Universal,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Shells (squared norm, count) of the form's lattice.
    Shells {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_name = "X")]
        max_norm_sq: f64,
        /// Include the vectors of each shell, in lattice coordinates.
        #[arg(long)]
        vectors: bool,
        /// JSON output (the default).
        #[arg(long, conflicts_with = "csv")]
        json: bool,
        /// CSV rows `alpha,count` instead of JSON.
        #[arg(long)]
        csv: bool,
    },
    /// Spherical t-design check of every shell up to a norm bound.
    Design {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 4)]
        t: u32,
        /// Defaults to --cutoff-norm-sq, then to 8.
        #[arg(long, value_name = "X")]
        max_norm_sq: Option<f64>,
    },
    /// Energy of the periodic set.
    Energy {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_name = "exp:c=C|pow:s=S")]
        potential: Potential,
        /// Also report the finite-window estimate over the ball of this radius.
        #[arg(long, value_name = "R")]
        windowed: Option<f64>,
    },
    /// Gradient in orthonormal tangent coordinates.
    Grad {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        potential: Potential,
    },
    /// Gradient and Hessian with block structure and eigenvalues.
    Hess {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        potential: Potential,
    },
    /// F(y), G(y) and the Hessian coefficients of a lattice whose shells are 4-designs.
    Split {
        #[arg(long, value_name = "ID")]
        lattice: String,
        #[arg(long)]
        y: f64,
        #[arg(long, default_value_t = 1)]
        m: usize,
    },
    /// Criticality or local-optimality certificate for a lattice.
    Certify {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        s: Option<f64>,
        /// Potential for --mode critical.
        #[arg(long)]
        potential: Option<Potential>,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        y_min: f64,
        #[arg(long, default_value_t = 10.0)]
        y_max: f64,
        #[arg(long, default_value_t = 100)]
        y_steps: usize,
    },
    /// Gradient descent at fixed determinant.
    Optimize {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        potential: Potential,
        #[arg(long, default_value_t = 1e-9)]
        grad_tol: f64,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
        #[arg(long, default_value_t = 1.0)]
        initial_step: f64,
        /// CSV of the iterates instead of the JSON trace.
        #[arg(long)]
        csv: bool,
    },
    /// Energy changes under random perturbations of a lattice.
    Sweep {
        #[arg(long, value_name = "ID")]
        lattice: String,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long)]
        potential: Potential,
        #[arg(long, default_value_t = 1e-2)]
        magnitude: f64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Built-in lattices and periodic sets.
    Catalog,
}
