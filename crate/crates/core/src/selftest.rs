//! Runtime invariant suite behind `instrument-compat selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adversary::{
    adversary_params, identify_amplitude_damping, verify_params, DampingFit, GateSet, ThetaFormula,
};
use crate::compat::{
    complementary_sylvester_margin, dual_certificate, meters_compatible, primal_certificate,
    random_primal_search, s_max_aligned, s_max_complementary, verify_certificates, Case, CompatQuery, Frame,
};
use crate::dilation::{canonical_pauli_images, closed_form_pauli_images, cross_check_images, dilate, verify_dilation, PauliImages};
use crate::linalg::{kron, partial_trace, psd_sqrt, DenseMatrix, Keep, Tolerance};
use crate::objects::{bloch_state, depolarizing, luders, mixed_instrument, noisy_meter, BlochVector, Operation};
use crate::scalar::C;

type M = DenseMatrix<f64>;

/// Deliberate corruption used to check that the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Negate `Π_z^±` in every closed-form image set.
    FlipPiZ,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelftestConfig {
    /// Bound on certificate gaps and decomposition distances.
    pub tol: f64,
    pub seed: u64,
    pub fault: Fault,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        Self { tol: 1e-9, seed: 42, fault: Fault::None }
    }
}

/// One row of the pass/fail table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Largest deviation seen; infinite when a construction failed.
    pub worst: f64,
    pub limit: f64,
    pub detail: String,
}

struct Check {
    worst: f64,
    limit: f64,
    detail: String,
}

impl Check {
    fn bound(worst: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self { worst, limit, detail: detail.into() }
    }

    /// Zero on success, one on failure.
    fn flag(ok: bool, detail: impl Into<String>) -> Self {
        Self { worst: if ok { 0.0 } else { 1.0 }, limit: 0.0, detail: detail.into() }
    }
}

type CheckResult = Result<Check, String>;

/// Running maximum with the point where it was attained.
#[derive(Default)]
struct Worst {
    value: f64,
    at: String,
}

impl Worst {
    fn see(&mut self, v: f64, at: impl FnOnce() -> String) {
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v > self.value || self.at.is_empty() {
            self.value = self.value.max(v);
            self.at = at();
        }
    }

    fn check(self, limit: f64) -> Check {
        let detail = format!("worst at {}", self.at);
        Check::bound(self.value, limit, detail)
    }
}

fn grid(n: usize) -> Vec<(f64, f64)> {
    let v = move |i: usize| i as f64 / (n - 1) as f64;
    (0..n).flat_map(|i| (0..n).map(move |j| (v(i), v(j)))).collect()
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

struct Ctx {
    cfg: SelftestConfig,
}

impl Ctx {
    fn images(&self, l: f64, t: f64) -> Result<PauliImages<f64>, String> {
        let im = closed_form_pauli_images(l, t).map_err(err)?;
        Ok(match self.cfg.fault {
            Fault::None => im,
            Fault::FlipPiZ => im.with_flipped_z(),
        })
    }

    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cfg.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> M {
    DenseMatrix::from_fn(n, n, |_, _| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).hermitian_part()
}

fn random_direction(rng: &mut ChaCha8Rng) -> BlochVector<f64> {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if (1e-3..=1.0).contains(&n) {
            return BlochVector::raw(v[0] / n, v[1] / n, v[2] / n);
        }
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> M {
    let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1.0);
    bloch_state(&BlochVector::raw(v[0] / n, v[1] / n, v[2] / n))
}

fn partial_trace_identity(c: &Ctx) -> CheckResult {
    let mut rng = c.rng(1);
    let mut w = Worst::default();
    for k in 0..100 {
        let (a, b) = (random_hermitian(&mut rng, 2), random_hermitian(&mut rng, 3));
        let reduced = partial_trace(&kron(&a, &b), (2, 3), Keep::First).map_err(err)?;
        w.see(reduced.distance(&a.scale(b.trace())), || format!("sample {k}"));
    }
    Ok(w.check(1e-12))
}

fn psd_sqrt_squares_back(c: &Ctx) -> CheckResult {
    let mut rng = c.rng(2);
    let mut w = Worst::default();
    let tol = Tolerance::default();
    for k in 0..50 {
        let g = random_hermitian(&mut rng, 4);
        let m = g.matmul(&g);
        let r = psd_sqrt(&m, &tol).map_err(err)?;
        w.see(r.matmul(&r).distance(&m), || format!("sample {k}"));
    }
    Ok(w.check(1e-9))
}

fn luders_induces_meter(c: &Ctx) -> CheckResult {
    let mut rng = c.rng(3);
    let mut w = Worst::default();
    for k in 0..50 {
        let n = random_direction(&mut rng);
        let m = noisy_meter(rng.random_range(0.0..=1.0), &n).map_err(err)?;
        let induced = luders(&m).induced_meter().map_err(err)?;
        w.see(induced.distance(&m), || format!("sample {k}"));
    }
    Ok(w.check(1e-12))
}

fn mixed_instrument_meter(c: &Ctx) -> CheckResult {
    let mut rng = c.rng(4);
    let mut w = Worst::default();
    for k in 0..50 {
        let (l, t) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0));
        let inst = mixed_instrument(l, t, &BlochVector::z_axis()).map_err(err)?;
        let m = noisy_meter(t, &BlochVector::z_axis()).map_err(err)?;
        w.see(inst.induced_meter().map_err(err)?.distance(&m), || format!("sample {k} (lambda {l:.3}, t {t:.3})"));
    }
    Ok(w.check(1e-10))
}

fn heisenberg_duality(c: &Ctx) -> CheckResult {
    let mut rng = c.rng(5);
    let mut w = Worst::default();
    for k in 0..100 {
        let (l, t) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0));
        let inst = mixed_instrument(l, t, &BlochVector::x_axis()).map_err(err)?;
        let op = inst.operation(k % 2);
        let (e, rho) = (random_hermitian(&mut rng, 2), random_state(&mut rng));
        let lhs = e.trace_product(&op.apply(&rho).map_err(err)?);
        let rhs = op.heisenberg(&e).map_err(err)?.trace_product(&rho);
        w.see((lhs - rhs).norm(), || format!("sample {k}"));
    }
    Ok(w.check(1e-10))
}

fn special_cases(_: &Ctx) -> CheckResult {
    let mut w = Worst::default();
    for k in 0..=10 {
        let t = k as f64 / 10.0;
        let exact = (s_max_aligned(1.0, t).map_err(err)? - t).abs() + s_max_complementary(1.0, t).map_err(err)?.abs();
        w.see(if exact == 0.0 { 0.0 } else { f64::INFINITY }, || format!("lambda 1, t {t}"));
        let a0 = (s_max_aligned(0.0, t).map_err(err)? - 1.0).abs();
        let c0 = (s_max_complementary(0.0, t).map_err(err)? - (1.0 - t * t).sqrt()).abs();
        w.see(a0.max(c0), || format!("lambda 0, t {t}"));
    }
    Ok(w.check(1e-12))
}

fn t_zero_coincidence(_: &Ctx) -> CheckResult {
    let mut w = Worst::default();
    for k in 0..=10 {
        let l = k as f64 / 10.0;
        let closed = 0.5 * (1.0 - l + ((1.0 - l) * (1.0 + 3.0 * l)).sqrt());
        let (a, b) = (s_max_aligned(l, 0.0).map_err(err)?, s_max_complementary(l, 0.0).map_err(err)?);
        w.see((a - b).abs().max((a - closed).abs()), || format!("lambda {l}"));
    }
    Ok(w.check(1e-12))
}

fn monotonicity(_: &Ctx) -> CheckResult {
    let n = 11;
    let v = |i: usize| i as f64 / (n - 1) as f64;
    let mut w = Worst::default();
    for i in 0..n {
        for j in 0..n - 1 {
            // Along t at λ = v(i), then along λ at t = v(i).
            let along_t = s_max_aligned(v(i), v(j)).map_err(err)? - s_max_aligned(v(i), v(j + 1)).map_err(err)?;
            let c_along_t = s_max_complementary(v(i), v(j + 1)).map_err(err)? - s_max_complementary(v(i), v(j)).map_err(err)?;
            let along_l = s_max_aligned(v(j + 1), v(i)).map_err(err)? - s_max_aligned(v(j), v(i)).map_err(err)?;
            let c_along_l = s_max_complementary(v(j + 1), v(i)).map_err(err)? - s_max_complementary(v(j), v(i)).map_err(err)?;
            w.see(along_t.max(c_along_t).max(along_l).max(c_along_l).max(0.0), || format!("row {i}, step {j}"));
        }
    }
    Ok(w.check(1e-15))
}

fn busch_boundary(_: &Ctx) -> CheckResult {
    for k in 0..=10 {
        let t = k as f64 / 10.0;
        let s = s_max_complementary(0.0, t).map_err(err)?;
        let (x, z) = (BlochVector::x_axis(), BlochVector::z_axis());
        let beyond = s + 1e-3 <= 1.0 && meters_compatible(s + 1e-3, &x, t, &z).map_err(err)?;
        if !meters_compatible(s, &x, t, &z).map_err(err)? || beyond {
            return Ok(Check::flag(false, format!("t {t}")));
        }
    }
    Ok(Check::flag(true, "s^2 + t^2 = 1 is the joint-measurability boundary"))
}

fn dilation_reconstruction(_: &Ctx) -> CheckResult {
    let mut w = Worst::default();
    for (l, t) in grid(5) {
        let inst = mixed_instrument(l, t, &BlochVector::z_axis()).map_err(err)?;
        let d = dilate(&inst).map_err(err)?;
        let r = verify_dilation(&d, &inst, 1e-10);
        w.see(r.max_deviation.max(r.isometry_defect), || format!("lambda {l}, t {t}"));
    }
    Ok(w.check(1e-10))
}

fn canonical_image_traces(_: &Ctx) -> CheckResult {
    let mut w = Worst::default();
    for (l, t) in grid(5) {
        let im = canonical_pauli_images(l, t).map_err(err)?;
        w.see(im.trace_defect(t), || format!("lambda {l}, t {t}"));
    }
    Ok(w.check(1e-10))
}

fn closed_form_image_traces(c: &Ctx) -> CheckResult {
    let mut w = Worst::default();
    for (l, t) in grid(11) {
        w.see(c.images(l, t)?.trace_defect(t), || format!("lambda {l}, t {t}"));
    }
    Ok(w.check(1e-12))
}

fn zero_duality_gap(c: &Ctx) -> CheckResult {
    let mut w = Worst::default();
    for (l, t) in grid(11) {
        let images = c.images(l, t)?;
        for case in Case::ALL {
            let q = CompatQuery::new(l, t, case).map_err(err)?;
            let at = || format!("{case}, lambda {l}, t {t}");
            let pc = primal_certificate(&q).map_err(err)?;
            let dc = match dual_certificate(&q, &images) {
                Ok(dc) => dc,
                Err(e) => return Ok(Check::bound(f64::INFINITY, c.cfg.tol, format!("{}: {e}", at()))),
            };
            let r = verify_certificates(&images, &pc, &dc, c.cfg.tol);
            let off = (r.primal_value - q.s_max()).abs().max((r.dual_value - q.s_max()).abs());
            w.see(r.max_violation.max(off), at);
        }
    }
    Ok(w.check(c.cfg.tol))
}

fn sylvester_margin(_: &Ctx) -> CheckResult {
    let mut w = Worst::default();
    for (l, t) in grid(11) {
        let (_, _, margin) = complementary_sylvester_margin(l, t);
        w.see((-margin).max(0.0), || format!("lambda {l}, t {t}"));
    }
    Ok(w.check(1e-12))
}

fn dilation_independence(_: &Ctx) -> CheckResult {
    let mut w = Worst::default();
    for (l, t) in grid(5) {
        for case in Case::ALL {
            let r = cross_check_images(l, t, case, 1e-8).map_err(err)?;
            let worst = r.difference.max(r.closed_form.max_violation).max(r.canonical.max_violation);
            w.see(worst, || format!("{case}, lambda {l}, t {t}"));
        }
    }
    Ok(w.check(1e-8))
}

fn certificate_tampering(c: &Ctx) -> CheckResult {
    // Every tampered certificate must report a violation above 1e-4.
    let mut w = Worst::default();
    for (l, t) in grid(5) {
        let images = closed_form_pauli_images(l, t).map_err(err)?;
        for case in Case::ALL {
            let q = CompatQuery::new(l, t, case).map_err(err)?;
            let pc = primal_certificate(&q).map_err(err)?;
            let dc = dual_certificate(&q, &images).map_err(err)?;
            let blurred = pc.blurred(1e-2).map_err(err)?;
            let tampered = [
                verify_certificates(&images, &pc, &dc.shifted(-1e-2), c.cfg.tol).max_violation,
                verify_certificates(&images, &pc, &dc.shifted(1e-2), c.cfg.tol).max_violation,
                verify_certificates(&images, &blurred, &dc, c.cfg.tol).max_violation,
            ];
            let least = tampered.into_iter().fold(f64::INFINITY, f64::min);
            w.see((1e-4 - least).max(0.0), || format!("{case}, lambda {l}, t {t} (least violation {least:e})"));
        }
    }
    Ok(w.check(0.0))
}

fn weak_duality(c: &Ctx) -> CheckResult {
    let mut w = Worst::default();
    for (k, &(l, t)) in [(1.0, 0.7), (0.5, 0.5), (0.0, 0.6), (0.3, 0.9)].iter().enumerate() {
        let images = c.images(l, t)?;
        for case in Case::ALL {
            let dual = CompatQuery::new(l, t, case).map_err(err)?.s_max();
            let best = random_primal_search(&images, &Frame::for_case(case), 10_000, c.cfg.seed + k as u64);
            w.see((best - dual).max(0.0), || format!("{case}, lambda {l}, t {t}"));
        }
    }
    Ok(w.check(1e-9))
}

fn adversary_decomposition(c: &Ctx) -> CheckResult {
    let mut w = Worst::default();
    let mut skipped = Vec::new();
    for (l, t) in grid(11) {
        let p = match adversary_params(l, t, ThetaFormula::default()) {
            Ok(p) => p,
            Err(_) => {
                skipped.push(format!("({l}, {t})"));
                continue;
            }
        };
        let r = verify_params(&p, c.cfg.tol).map_err(err)?;
        let v = if r.fixed_points_ok { r.max_violation } else { f64::INFINITY };
        w.see(v, || format!("lambda {l}, t {t}"));
    }
    let mut check = w.check(c.cfg.tol);
    check.detail = format!("{}; outside region: {}", check.detail, skipped.join(" "));
    Ok(check)
}

/// At `θ = 0` (the `λ = 1` row) the device depends on `θ` only through
/// `sin²(θ/2)`, so a shift of `1e-2` moves it by `O(1e-5)`; those points are
/// listed, not checked.
fn theta_tampering(_: &Ctx) -> CheckResult {
    let mut w = Worst::default();
    let mut quadratic = Vec::new();
    for (l, t) in grid(5) {
        let Ok(p) = adversary_params(l, t, ThetaFormula::default()) else { continue };
        if p.theta < 0.1 {
            quadratic.push(format!("({l}, {t})"));
            continue;
        }
        let r = verify_params(&p.with_theta(p.theta + 1e-2), 1e-9).map_err(err)?;
        let d = r.choi_distance[0].max(r.choi_distance[1]);
        w.see((1e-4 - d).max(0.0), || format!("lambda {l}, t {t} (distance {d:e})"));
    }
    let mut check = w.check(0.0);
    check.detail = format!("{}; quadratic at theta = 0: {}", check.detail, quadratic.join(" "));
    Ok(check)
}

fn damping_identification(_: &Ctx) -> CheckResult {
    let id = identify_amplitude_damping(&Operation::identity(2)).map_err(err)?;
    let dep = identify_amplitude_damping(&depolarizing(0.5).map_err(err)?).map_err(err)?;
    let ok = id.gamma() == Some(0.0) && matches!(dep, DampingFit::Mismatch { .. });
    Ok(Check::flag(ok, "identity gives gamma 0; depolarizing(0.5) is rejected"))
}

fn gate_unitarity(_: &Ctx) -> CheckResult {
    let mut w = Worst::default();
    for k in 0..=16 {
        let theta = k as f64 * std::f64::consts::PI / 8.0;
        w.see(GateSet::new(theta).unitarity_defect(), || format!("theta {theta:.4}"));
    }
    Ok(w.check(1e-12))
}

type CheckFn = fn(&Ctx) -> CheckResult;

const CHECKS: [(&str, CheckFn); 21] = [
    ("partial trace of a product", partial_trace_identity),
    ("psd square root", psd_sqrt_squares_back),
    ("Lueders instrument induces its meter", luders_induces_meter),
    ("mixed instrument induces the noisy meter", mixed_instrument_meter),
    ("Heisenberg/Schroedinger duality", heisenberg_duality),
    ("special-case thresholds", special_cases),
    ("t = 0 coincidence", t_zero_coincidence),
    ("threshold monotonicity", monotonicity),
    ("Busch boundary at lambda = 0", busch_boundary),
    ("dilation reconstruction", dilation_reconstruction),
    ("canonical image traces", canonical_image_traces),
    ("closed-form image traces", closed_form_image_traces),
    ("zero duality gap", zero_duality_gap),
    ("Sylvester margin", sylvester_margin),
    ("dilation independence", dilation_independence),
    ("certificate tamper detection", certificate_tampering),
    ("weak duality of random search", weak_duality),
    ("adversary decomposition", adversary_decomposition),
    ("theta tamper detection", theta_tampering),
    ("amplitude-damping identification", damping_identification),
    ("gate unitarity", gate_unitarity),
];

/// Names of the invariants, in table order.
pub fn invariant_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

pub fn run_selftest(cfg: &SelftestConfig) -> Vec<InvariantOutcome> {
    let ctx = Ctx { cfg: *cfg };
    CHECKS
        .iter()
        .map(|(name, f)| {
            let check = f(&ctx).unwrap_or_else(|e| Check::bound(f64::INFINITY, 0.0, e));
            InvariantOutcome {
                name,
                passed: check.worst <= check.limit,
                worst: check.worst,
                limit: check.limit,
                detail: check.detail,
            }
        })
        .collect()
}
