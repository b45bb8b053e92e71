use instrument_compat::adversary::{build_post_ops, verify_params, adversary_params, AdversaryError, GateSet, ThetaFormula};
use instrument_compat::compat::{
    dual_certificate, primal_certificate, random_primal_search, s_max_aligned, s_max_complementary,
    verify_certificates, Case, CertReport, CompatQuery, Frame,
};
use instrument_compat::dilation::{closed_form_pauli_images, cross_check_images};
use instrument_compat::selftest::{run_selftest, Fault, SelftestConfig};
use serde::Serialize;
use serde_json::json;

use crate::args::{CaseArg, FaultArg, Format, GridSpec, PointOrGrid, Route};
use crate::output::{fixed9, sci, CsvTable};

/// Agreement required between the two image routes.
pub const ROUTE_TOL: f64 = 1e-8;
/// Slack on weak duality for the random primal search.
const WEAK_DUALITY_SLACK: f64 = 1e-9;

/// Non-zero exit causes; the discriminant is the exit code.
#[derive(Debug)]
pub enum Failure {
    Check(String),
    BadArgs(String),
    Io(String),
    Region(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::BadArgs(_) => 2,
            Failure::Io(_) => 3,
            Failure::Region(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Check(m) | Failure::BadArgs(m) | Failure::Io(m) | Failure::Region(m) => m,
        }
    }
}

/// Rendered result; `failure` is reported after `body` has been written.
pub struct Outcome {
    pub body: String,
    pub notes: Vec<String>,
    pub failure: Option<Failure>,
}

impl Outcome {
    fn ok(body: String) -> Self {
        Self { body, notes: Vec::new(), failure: None }
    }
}

fn json_body(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

fn bad(e: impl std::fmt::Display) -> Failure {
    Failure::BadArgs(e.to_string())
}

#[derive(Serialize)]
struct ThresholdRow {
    lambda: f64,
    t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    s_max_aligned: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    s_max_complementary: Option<f64>,
}

fn threshold_row(lambda: f64, t: f64, cases: &[Case]) -> Result<ThresholdRow, Failure> {
    let get = |case: Case| -> Result<Option<f64>, Failure> {
        if !cases.contains(&case) {
            return Ok(None);
        }
        match case {
            Case::Aligned => s_max_aligned(lambda, t),
            Case::Complementary => s_max_complementary(lambda, t),
        }
        .map(Some)
        .map_err(bad)
    };
    Ok(ThresholdRow { lambda, t, s_max_aligned: get(Case::Aligned)?, s_max_complementary: get(Case::Complementary)? })
}

const REGION_HEADER: [&str; 4] = ["lambda", "t", "s_max_aligned", "s_max_complementary"];

fn region_body(rows: &[ThresholdRow], format: Format) -> String {
    match format {
        Format::Json => json_body(&rows),
        Format::Csv => {
            let mut table = CsvTable::new(&REGION_HEADER);
            for r in rows {
                table.row([
                    fixed9(r.lambda),
                    fixed9(r.t),
                    r.s_max_aligned.map(fixed9).unwrap_or_default(),
                    r.s_max_complementary.map(fixed9).unwrap_or_default(),
                ]);
            }
            table.finish()
        }
    }
}

pub fn threshold(lambda: f64, t: f64, case: CaseArg, format: Format) -> Result<Outcome, Failure> {
    let row = threshold_row(lambda, t, &case.cases())?;
    let body = match (format, case) {
        (Format::Csv, CaseArg::Both) => region_body(&[row], format),
        (Format::Csv, _) => {
            let v = row.s_max_aligned.or(row.s_max_complementary).expect("one case requested");
            format!("{}\n", fixed9(v))
        }
        (Format::Json, _) => json_body(&row),
    };
    Ok(Outcome::ok(body))
}

/// λ-major rows over `lambdas × ts`.
fn sweep(lambdas: &[f64], ts: &[f64]) -> Result<Vec<ThresholdRow>, Failure> {
    lambdas
        .iter()
        .flat_map(|&l| ts.iter().map(move |&t| threshold_row(l, t, &Case::ALL)))
        .collect()
}

pub fn region(lambda_grid: GridSpec, t_grid: GridSpec, format: Format) -> Result<Outcome, Failure> {
    let rows = sweep(&lambda_grid.points(), &t_grid.points())?;
    Ok(Outcome::ok(region_body(&rows, format)))
}

pub fn curves(lambdas: &[f64], t_grid: GridSpec, format: Format) -> Result<Outcome, Failure> {
    if lambdas.is_empty() {
        return Err(Failure::BadArgs("no lambda values given".into()));
    }
    let rows = sweep(lambdas, &t_grid.points())?;
    Ok(Outcome::ok(region_body(&rows, format)))
}

#[derive(Serialize)]
struct CertRow {
    lambda: f64,
    t: f64,
    case: Case,
    route: &'static str,
    report: CertReport<f64>,
    /// Canonical rows only: `max(|Δprimal|, |Δdual|)` against the closed-form route.
    route_difference: Option<f64>,
    search_best: Option<f64>,
    passed: bool,
}

#[derive(Serialize)]
struct CertSummary {
    checks: usize,
    failed: usize,
    max_gap: f64,
    max_violation: f64,
    max_route_difference: f64,
    tol: f64,
}

pub struct CertifyRequest<'a> {
    pub at: &'a PointOrGrid,
    pub case: CaseArg,
    pub routes: &'a [Route],
    pub search_iters: usize,
    pub seed: u64,
    pub tol: f64,
}

fn certify_point(
    lambda: f64,
    t: f64,
    case: Case,
    req: &CertifyRequest,
    seed: u64,
) -> Result<Vec<CertRow>, Failure> {
    let q = CompatQuery::new(lambda, t, case).map_err(bad)?;
    let check = |e: &dyn std::fmt::Display| Failure::Check(format!("{case} at lambda {lambda}, t {t}: {e}"));
    let images = closed_form_pauli_images(lambda, t).map_err(|e| check(&e))?;
    let search_best = (req.search_iters > 0)
        .then(|| random_primal_search(&images, &Frame::for_case(case), req.search_iters, seed));
    let search_ok = |dual: f64| search_best.is_none_or(|b| b <= dual + WEAK_DUALITY_SLACK);

    let mut rows = Vec::new();
    if req.routes.contains(&Route::ClosedForm) {
        let pc = primal_certificate(&q).map_err(|e| check(&e))?;
        let dc = dual_certificate(&q, &images).map_err(|e| check(&e))?;
        let report = verify_certificates(&images, &pc, &dc, req.tol);
        let passed = report.passed && search_ok(report.dual_value);
        rows.push(CertRow { lambda, t, case, route: Route::ClosedForm.name(), report, route_difference: None, search_best, passed });
    }
    if req.routes.contains(&Route::Canonical) {
        let cc = cross_check_images(lambda, t, case, req.tol).map_err(|e| check(&e))?;
        let report = cc.canonical;
        let passed = report.passed && cc.difference <= ROUTE_TOL && search_ok(report.dual_value);
        rows.push(CertRow {
            lambda,
            t,
            case,
            route: Route::Canonical.name(),
            report,
            route_difference: Some(cc.difference),
            search_best,
            passed,
        });
    }
    Ok(rows)
}

pub fn certify(req: &CertifyRequest, format: Format) -> Result<Outcome, Failure> {
    let mut rows = Vec::new();
    for (k, (l, t)) in req.at.points().into_iter().enumerate() {
        for case in req.case.cases() {
            // One seed per task so results do not depend on evaluation order.
            let seed = req.seed.wrapping_add(2 * k as u64 + (case == Case::Complementary) as u64);
            rows.extend(certify_point(l, t, case, req, seed)?);
        }
    }
    let failed: Vec<&CertRow> = rows.iter().filter(|r| !r.passed).collect();
    let summary = CertSummary {
        checks: rows.len(),
        failed: failed.len(),
        max_gap: rows.iter().map(|r| r.report.gap.abs()).fold(0.0, f64::max),
        max_violation: rows.iter().map(|r| r.report.max_violation).fold(0.0, f64::max),
        max_route_difference: rows.iter().filter_map(|r| r.route_difference).fold(0.0, f64::max),
        tol: req.tol,
    };

    let body = match format {
        Format::Json => json_body(&json!({ "summary": summary, "rows": rows })),
        Format::Csv => {
            let mut table = CsvTable::new(&[
                "lambda", "t", "case", "route", "primal_value", "dual_value", "gap", "max_violation",
                "route_difference", "search_best", "passed",
            ]);
            for r in &rows {
                table.row([
                    fixed9(r.lambda),
                    fixed9(r.t),
                    r.case.name().to_string(),
                    r.route.to_string(),
                    fixed9(r.report.primal_value),
                    fixed9(r.report.dual_value),
                    sci(r.report.gap),
                    sci(r.report.max_violation),
                    r.route_difference.map(sci).unwrap_or_default(),
                    r.search_best.map(fixed9).unwrap_or_default(),
                    r.passed.to_string(),
                ]);
            }
            table.finish()
        }
    };

    let mut notes = vec![format!(
        "certified {}/{} checks; max |gap| {:e}, max violation {:e}, max route difference {:e} (tol {:e})",
        summary.checks - summary.failed,
        summary.checks,
        summary.max_gap,
        summary.max_violation,
        summary.max_route_difference,
        req.tol
    )];
    let failure = (!failed.is_empty()).then(|| {
        for r in &failed {
            notes.push(format!(
                "FAIL {} {} lambda {} t {}: gap {:e}, max violation {:e}{}{}",
                r.case,
                r.route,
                r.lambda,
                r.t,
                r.report.gap,
                r.report.max_violation,
                r.route_difference.map(|d| format!(", route difference {d:e}")).unwrap_or_default(),
                r.search_best.map(|b| format!(", search best {b}")).unwrap_or_default(),
            ));
        }
        Failure::Check(format!("{} of {} certificate checks failed", failed.len(), rows.len()))
    });
    Ok(Outcome { body, notes, failure })
}

pub fn decompose(lambda: f64, t: f64, formula: ThetaFormula, tol: f64, format: Format) -> Result<Outcome, Failure> {
    let params = adversary_params(lambda, t, formula).map_err(|e| match e {
        AdversaryError::ParameterRegion { .. } => Failure::Region(e.to_string()),
        other => bad(other),
    })?;
    let report = verify_params(&params, tol).map_err(|e| Failure::Check(e.to_string()))?;
    let ops = build_post_ops(&params).map_err(|e| Failure::Check(e.to_string()))?;
    let labels = ["+", "-"];

    let body = match format {
        Format::Json => {
            let post_ops: Vec<_> = (0..2)
                .flat_map(|y| (0..2).map(move |x| (y, x)))
                .map(|(y, x)| {
                    let op = ops.get(y, x);
                    json!({ "y": labels[y], "x": labels[x], "kraus": op.kraus(), "choi": op.choi() })
                })
                .collect();
            let gates = GateSet::new(params.theta);
            json_body(&json!({
                "params": params,
                "report": report,
                "post_ops": post_ops,
                "gates": {
                    "cry": gates.cry,
                    "cx10": gates.cx10,
                    "u_plus": gates.unitary(0),
                    "u_minus": gates.unitary(1),
                },
            }))
        }
        Format::Csv => {
            let mut table = CsvTable::new(&[
                "lambda", "t", "theta", "mu_tilde", "t_tilde", "s_max", "choi_distance_plus", "choi_distance_minus",
                "gamma_plus", "gamma_minus", "passed",
            ]);
            let gamma = |y: usize| report.damping[y].gamma().map(fixed9).unwrap_or_else(|| "mismatch".into());
            table.row([
                fixed9(lambda),
                fixed9(t),
                fixed9(params.theta),
                fixed9(params.mu_tilde),
                fixed9(params.t_tilde),
                fixed9(params.s_max),
                sci(report.choi_distance[0]),
                sci(report.choi_distance[1]),
                gamma(0),
                gamma(1),
                report.passed.to_string(),
            ]);
            table.finish()
        }
    };
    let failure = (!report.passed).then(|| {
        Failure::Check(format!(
            "decomposition not verified at lambda {lambda}, t {t}: max violation {:e} (tol {tol:e}), fixed points ok: {}",
            report.max_violation, report.fixed_points_ok
        ))
    });
    Ok(Outcome { body, notes: Vec::new(), failure })
}

pub fn selftest(fault: Option<FaultArg>, tol: f64, seed: u64, format: Format) -> Result<Outcome, Failure> {
    let fault = match fault {
        None => Fault::None,
        Some(FaultArg::FlipPiZ) => Fault::FlipPiZ,
    };
    let results = run_selftest(&SelftestConfig { tol, seed, fault });
    let body = match format {
        Format::Json => json_body(&results),
        Format::Csv => {
            let mut table = CsvTable::new(&["invariant", "status", "worst", "limit", "detail"]);
            for r in &results {
                table.row([
                    r.name.to_string(),
                    if r.passed { "PASS" } else { "FAIL" }.to_string(),
                    sci(r.worst),
                    sci(r.limit),
                    r.detail.clone(),
                ]);
            }
            table.finish()
        }
    };
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    let notes = vec![format!("{}/{} invariants passed", results.len() - failed.len(), results.len())];
    let failure = (!failed.is_empty()).then(|| Failure::Check(format!("failed invariants: {}", failed.join("; "))));
    Ok(Outcome { body, notes, failure })
}
