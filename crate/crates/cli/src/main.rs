mod args;
mod commands;
mod output;

use std::fs;
use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, Route};
use commands::{CertifyRequest, Failure, Outcome};

const TOL_ENV: &str = "INSTRUMENT_COMPAT_TOL";
const DEFAULT_TOL: f64 = 1e-9;

/// `--tol`, else `INSTRUMENT_COMPAT_TOL`, else the default.
fn resolve_tol(flag: Option<f64>) -> Result<f64, Failure> {
    let (tol, source) = match flag {
        Some(t) => (t, "--tol".to_string()),
        None => match std::env::var(TOL_ENV) {
            Ok(s) => (
                s.trim().parse().map_err(|e| Failure::BadArgs(format!("{TOL_ENV}={s:?}: {e}")))?,
                TOL_ENV.to_string(),
            ),
            Err(_) => return Ok(DEFAULT_TOL),
        },
    };
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Failure::BadArgs(format!("{source} must be a positive number, got {tol}")));
    }
    Ok(tol)
}

fn run(cli: &Cli) -> Result<Outcome, Failure> {
    let g = &cli.global;
    let format = g.format;
    match &cli.command {
        Command::Threshold { lambda, t, case } => commands::threshold(*lambda, *t, *case, format),
        Command::Region { lambda_grid, t_grid } => commands::region(*lambda_grid, *t_grid, format),
        Command::Curves { lambdas, t_grid } => commands::curves(lambdas, *t_grid, format),
        Command::Certify { at, case, route, search_iters } => {
            let mut routes = if route.is_empty() { vec![Route::ClosedForm, Route::Canonical] } else { route.clone() };
            routes.sort();
            routes.dedup();
            let req = CertifyRequest {
                at,
                case: *case,
                routes: &routes,
                search_iters: *search_iters,
                seed: g.seed,
                tol: resolve_tol(g.tol)?,
            };
            commands::certify(&req, format)
        }
        Command::Decompose { lambda, t, theta_formula } => {
            commands::decompose(*lambda, *t, (*theta_formula).into(), resolve_tol(g.tol)?, format)
        }
        Command::Selftest { inject_fault } => commands::selftest(*inject_fault, resolve_tol(g.tol)?, g.seed, format),
    }
}

fn emit(cli: &Cli, outcome: &Outcome) -> Result<(), Failure> {
    match &cli.global.out {
        Some(path) => fs::write(path, &outcome.body)
            .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(outcome.body.as_bytes())
            .map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // Usage errors exit 2, help and version exit 0.
        Err(e) => e.exit(),
    };
    let result = run(&cli).and_then(|outcome| {
        emit(&cli, &outcome)?;
        for note in &outcome.notes {
            eprintln!("{note}");
        }
        outcome.failure.map_or(Ok(()), Err)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
