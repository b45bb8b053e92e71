use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use instrument_compat::adversary::ThetaFormula;
use instrument_compat::compat::Case;

/// Thresholds, certificates and adversary devices for noisy qubit instruments.
#[derive(Debug, Parser)]
#[command(name = "instrument-compat", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Output format.
    #[arg(long, value_enum, global = true, default_value_t = Format::Csv)]
    pub format: Format,

    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Check tolerance; falls back to INSTRUMENT_COMPAT_TOL, then 1e-9.
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CaseArg {
    Aligned,
    Complementary,
    Both,
}

impl CaseArg {
    pub fn cases(self) -> Vec<Case> {
        match self {
            CaseArg::Aligned => vec![Case::Aligned],
            CaseArg::Complementary => vec![Case::Complementary],
            CaseArg::Both => Case::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Route {
    ClosedForm,
    Canonical,
}

impl Route {
    pub fn name(self) -> &'static str {
        match self {
            Route::ClosedForm => "closed-form",
            Route::Canonical => "canonical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormulaArg {
    OneMinusLambda,
    OnePlusLambda,
}

impl From<FormulaArg> for ThetaFormula {
    fn from(f: FormulaArg) -> Self {
        match f {
            FormulaArg::OneMinusLambda => ThetaFormula::OneMinusLambda,
            FormulaArg::OnePlusLambda => ThetaFormula::OnePlusLambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    FlipPiZ,
}

/// Equispaced `min,max,steps` with `0 ≤ min ≤ max ≤ 1` and `steps ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl GridSpec {
    pub const UNIT_11: GridSpec = GridSpec { min: 0.0, max: 1.0, steps: 11 };

    pub fn points(&self) -> Vec<f64> {
        let n = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                let i = i as f64;
                (self.min * (n - i) + self.max * i) / n
            })
            .collect()
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.min, self.max, self.steps)
    }
}

impl FromStr for GridSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [min, max, steps] = parts[..] else {
            return Err(format!("grid {s:?} is not min,max,steps"));
        };
        let num = |v: &str| v.parse::<f64>().map_err(|e| format!("grid bound {v:?}: {e}"));
        let (min, max) = (num(min)?, num(max)?);
        let steps: usize = steps.parse().map_err(|e| format!("grid steps {steps:?}: {e}"))?;
        if steps < 2 {
            return Err(format!("grid needs at least 2 steps, got {steps}"));
        }
        if !(0.0..=1.0).contains(&min) || !(0.0..=1.0).contains(&max) || min > max {
            return Err(format!("grid range [{min}, {max}] must satisfy 0 <= min <= max <= 1"));
        }
        Ok(Self { min, max, steps })
    }
}

/// A single parameter in `[0, 1]`.
pub fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{s:?}: {e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

/// Either one `(λ, t)` point or a grid.
#[derive(Debug, Args)]
pub struct PointOrGrid {
    #[arg(long, value_parser = unit_interval, requires = "t")]
    pub lambda: Option<f64>,
    #[arg(long, value_parser = unit_interval, requires = "lambda")]
    pub t: Option<f64>,
    /// λ grid as min,max,steps (ignored with --lambda).
    #[arg(long, default_value_t = GridSpec::UNIT_11)]
    pub lambda_grid: GridSpec,
    /// t grid as min,max,steps (ignored with --t).
    #[arg(long, default_value_t = GridSpec::UNIT_11)]
    pub t_grid: GridSpec,
}

impl PointOrGrid {
    /// λ-major list of points.
    pub fn points(&self) -> Vec<(f64, f64)> {
        if let (Some(l), Some(t)) = (self.lambda, self.t) {
            return vec![(l, t)];
        }
        let ts = self.t_grid.points();
        self.lambda_grid.points().into_iter().flat_map(|l| ts.iter().map(move |&t| (l, t))).collect()
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximal adversary sharpness at one (λ, t).
    Threshold {
        #[arg(long, value_parser = unit_interval)]
        lambda: f64,
        #[arg(long, value_parser = unit_interval)]
        t: f64,
        /// With a single case only the value is printed.
        #[arg(long, value_enum, default_value_t = CaseArg::Both)]
        case: CaseArg,
    },
    /// Both thresholds on a (λ, t) grid.
    Region {
        #[arg(long, default_value_t = GridSpec::UNIT_11)]
        lambda_grid: GridSpec,
        #[arg(long, default_value_t = GridSpec::UNIT_11)]
        t_grid: GridSpec,
    },
    /// Threshold curves in t for a list of λ values.
    Curves {
        #[arg(long, value_delimiter = ',', value_parser = unit_interval,
              default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
        lambdas: Vec<f64>,
        #[arg(long, default_value = "0,1,101")]
        t_grid: GridSpec,
    },
    /// Verify primal and dual certificates on one or both image routes.
    Certify {
        #[command(flatten)]
        at: PointOrGrid,
        #[arg(long, value_enum, default_value_t = CaseArg::Both)]
        case: CaseArg,
        /// Image route; repeat for both (default: both).
        #[arg(long, value_enum)]
        route: Vec<Route>,
        /// Random primal search iterations per point (0 disables).
        #[arg(long, default_value_t = 0)]
        search_iters: usize,
    },
    /// Build and verify the adversary device at one (λ, t).
    Decompose {
        #[arg(long, value_parser = unit_interval)]
        lambda: f64,
        #[arg(long, value_parser = unit_interval)]
        t: f64,
        #[arg(long, value_enum, default_value_t = FormulaArg::OneMinusLambda)]
        theta_formula: FormulaArg,
    },
    /// Run the invariant suite and print a pass/fail table.
    Selftest {
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}
