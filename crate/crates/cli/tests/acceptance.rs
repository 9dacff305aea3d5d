//! Acceptance criteria, one line per criterion. Runs without the libtest
//! harness so every line is printed; exits non-zero if any criterion fails.
//! Positional arguments filter criteria by name (`criterion_3`, …).

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command as Process;
use std::time::{Duration, Instant};

use nalgebra::DVector;

use common::*;
use ucp_cli::run::{
    corner_b_matrix, run_carleman, run_check, run_certify, CarlemanStage, CertifyStage, CheckStage, RaysStage,
};
use ucp_cli::{run, Command, RunConfig, Setup, StageOutput};
use ucp_core::bump::bump_corpus;
use ucp_core::corner::{detect_layer, u_corpus, verify_lemma21, verify_lemma23, Lemma21Report, TEST_SEED};
use ucp_core::models::{by_name, certify_in_chart, designated_failure, ik_model};
use ucp_core::mollifier::{commutator_report, constant_case, kink_corpus, DEFAULT_EPS};
use ucp_core::{BMatrixField, CornerField, Expr, Grid, Side};

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn config(command: Command, model: &str, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::for_model(command, model);
    cfg.out = out.to_path_buf();
    cfg
}

/// Runs a command through the driver; returns the output and wall time.
fn drive(cfg: &RunConfig) -> Result<(StageOutput, bool, Duration), String> {
    let t = Instant::now();
    let o = run(cfg).map_err(|e| e.to_string())?;
    let dt = t.elapsed();
    let body = o.report.body;
    match body.result {
        Some(r) => Ok((r, o.passed, dt)),
        None => Err(body.error.unwrap_or_default()),
    }
}

fn check_stage(r: StageOutput) -> CheckStage {
    match r {
        StageOutput::Check(c) => c,
        _ => unreachable!("check command yields a check stage"),
    }
}

fn certify_stage(r: StageOutput) -> CertifyStage {
    match r {
        StageOutput::Certify(c) => c,
        _ => unreachable!("certify command yields a certify stage"),
    }
}

fn rays_stage(r: StageOutput) -> RaysStage {
    match r {
        StageOutput::Rays(c) => c,
        _ => unreachable!("rays command yields a rays stage"),
    }
}

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("temporary directory")
}

// 1. sign condition on the model
fn criterion_1() -> Outcome {
    let dir = tempdir();
    let (r, passed, dt) = drive(&config(Command::Check, "ik2", dir.path()))?;
    let c = check_stage(r);
    ensure(passed, "check ik2 did not pass")?;
    ensure(!c.sign_values.is_empty(), "no intersection samples")?;
    let worst = c.sign_values.iter().map(|v| (v - SIGN).abs()).fold(0.0, f64::max);
    ensure(worst <= 1e-8, format!("max |sign - 2| = {worst:e}"))?;
    // oracle: differenced gradients of the closed-form φ± at every sample
    let oracle = c
        .intersection
        .iter()
        .map(|x| {
            let x = x.as_slice();
            let q = |_: &[f64]| flat(3);
            (pairing(q, x, &grad(&phi_plus, x, 1e-6), &grad(&phi_minus, x, 1e-6)) - SIGN).abs()
        })
        .fold(0.0, f64::max);
    ensure(oracle <= 1e-6, format!("oracle sign deviates by {oracle:e}"))?;
    ensure(dt < Duration::from_secs(5), format!("runtime {dt:?}"))?;
    Ok(format!("{} samples, max |sign - 2| = {worst:.1e}, {:.2}s", c.sign_values.len(), dt.as_secs_f64()))
}

// 2. model constants, against closed forms and the sphere-scan oracle
fn criterion_2() -> Outcome {
    let mut notes = Vec::new();
    for (model, n) in [("ik2", 3), ("ik3", 4)] {
        let scan = sphere_scan(&base_point(n), 1_000_000, 2e-2, 2.0, 7);
        ensure(scan.hits >= 4, format!("{model}: scan found {} constraint points", scan.hits))?;
        ensure(within(scan.m0, M0, 0.05 * M0), format!("{model}: scan m0 = {}", scan.m0))?;
        ensure(within(scan.lambda0, LAMBDA0, 0.1), format!("{model}: scan lambda0 = {}", scan.lambda0))?;
        ensure(
            within(scan.margin, MARGIN_LAMBDA2, 0.05 * 6.0),
            format!("{model}: scan margin = {}", scan.margin),
        )?;

        let dir = tempdir();
        let mut cfg = config(Command::Certify, model, dir.path());
        cfg.lambda = Some(2.0);
        let (r, passed, dt) = drive(&cfg)?;
        let c = certify_stage(r).certificate;
        ensure(passed && c.is_certified(), format!("{model}: not certified"))?;
        let (m0, l0, w) = (c.m0.unwrap(), c.lambda0.unwrap(), c.worst_margin.unwrap());
        ensure(within(m0, M0, 1e-6), format!("{model}: m0 = {m0}"))?;
        ensure(within(l0, LAMBDA0, 1e-3), format!("{model}: lambda0 = {l0}"))?;
        ensure(within(w, MARGIN_LAMBDA2, 1e-3), format!("{model}: worst margin = {w}"))?;
        ensure(dt < Duration::from_secs(30), format!("{model}: runtime {dt:?}"))?;
        notes.push(format!(
            "{model}: m0 {m0:.9} lambda0 {l0:.6} margin {w:.6} ({:.2}s; scan {} hits, m0 {:.4}, margin {:.3})",
            dt.as_secs_f64(),
            scan.hits,
            scan.m0,
            scan.margin
        ));
    }
    Ok(notes.join("; "))
}

// 3. key identity against direct evaluation
fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut oracle_worst: f64 = 0.0;
    let mut count = 0;
    for model in ["ik2", "ik3", "ik2-conformal"] {
        let setup = Setup::new(&RunConfig::for_model(Command::Certify, model)).map_err(|e| e.to_string())?;
        for lambda in [1.5, 2.0, 5.0] {
            let c = run_certify(&setup, setup.x0.as_ref().unwrap(), Some(lambda), 200)
                .map_err(|e| format!("{model}: {e}"))?
                .certificate;
            ensure(!c.samples.is_empty(), format!("{model}: no constraint samples"))?;
            for s in &c.samples {
                let rel = (s.margin_key - s.margin_direct).abs() / s.margin_key.abs().max(s.margin_direct.abs());
                worst = worst.max(rel);
                count += 1;
                if model == "ik2-conformal" {
                    // oracle: H_p² of ψ₁ − λψ₀² by differencing along the Hamiltonian field
                    let x = c.x0.as_slice();
                    let direct = hp2(conformal, psi1, x, &s.xi)
                        - 2.0 * lambda * hp(conformal, psi0, x, &s.xi).powi(2);
                    oracle_worst = oracle_worst.max((direct - s.margin_key).abs() / s.margin_key.abs());
                }
            }
        }
    }
    ensure(worst <= 1e-6, format!("max relative key-vs-direct gap {worst:e}"))?;
    ensure(oracle_worst <= 1e-4, format!("finite-difference oracle deviates by {oracle_worst:e}"))?;
    Ok(format!("{count} samples, max relative gap {worst:.1e}, oracle gap {oracle_worst:.1e}"))
}

fn ucp() -> Process {
    Process::new(env!("CARGO_BIN_EXE_ucp"))
}

// 4. negative controls and exit codes
fn criterion_4() -> Outcome {
    let mut problems = Vec::new();
    let mut notes = Vec::new();
    for model in ["ctrl-a", "ctrl-b", "ctrl-c"] {
        let dir = tempdir();
        let status = ucp()
            .args(["check", "--model", model, "--out"])
            .arg(dir.path())
            .output()
            .map_err(|e| e.to_string())?
            .status;
        let setup = Setup::new(&RunConfig::for_model(Command::Check, model)).map_err(|e| e.to_string())?;
        let c = run_check(&setup).map_err(|e| e.to_string())?;
        let want = designated_failure(model).expect("controls have a designated failure");
        notes.push(format!("{model} exit {:?} failed {:?}", status.code(), c.failed));
        if status.code() != Some(1) {
            problems.push(format!("{model}: exit {:?}", status.code()));
        }
        if c.failed != [want] {
            problems.push(format!("{model}: failed {:?}, designated [{want}]", c.failed));
        }
    }
    let dir = tempdir();
    let ok = ucp()
        .args(["check", "--model", "ik2", "--out"])
        .arg(dir.path())
        .output()
        .map_err(|e| e.to_string())?
        .status;
    notes.push(format!("ik2 exit {:?}", ok.code()));
    if ok.code() != Some(0) {
        problems.push(format!("ik2: exit {:?}", ok.code()));
    }
    if problems.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(problems.join("; "))
    }
}

// 5. ray contact
fn criterion_5() -> Outcome {
    let dir = tempdir();
    let mut cfg = config(Command::Rays, "ik2", dir.path());
    cfg.lambda = Some(2.0);
    let (r, _, dt) = drive(&cfg)?;
    let rays = rays_stage(r);
    ensure(!rays.rows.is_empty(), "no rays")?;
    for r in &rays.rows {
        let tag = format!("xi = {:?}", r.xi);
        ensure(r.psi.tangency && r.psi.side == Side::Below, format!("{tag}: {:?}", r.psi.side))?;
        ensure(
            within(r.psi.fitted_c2, C2_PSI, 0.05 * C2_PSI.abs()),
            format!("{tag}: fitted c2 = {}", r.psi.fitted_c2),
        )?;
        ensure(r.control.side == Side::Above, format!("{tag}: control {:?}", r.control.side))?;
        ensure(
            within(r.control.fitted_c2, C2_CONTROL, 0.05 * C2_CONTROL),
            format!("{tag}: control c2 = {}", r.control.fitted_c2),
        )?;
    }
    // oracle: ½H_p²ψ at the launch covectors
    for r in &rays.rows {
        let x = base_point(3);
        let h1 = hess(&psi1, &x, 1e-4);
        let g0 = hp(|_| flat(3), psi0, &x, &r.xi);
        // ψ₀ vanishes at the launch point, so H_p²(ψ₀²) = 2(H_pψ₀)²
        let c2 = 0.5 * (hp2_constant(&flat(3), &h1, &r.xi) - 2.0 * 2.0 * g0 * g0);
        ensure(within(c2, C2_PSI, 1e-4), format!("oracle c2 = {c2} at {:?}", r.xi))?;
    }
    ensure(dt < Duration::from_secs(10), format!("runtime {dt:?}"))?;
    let c2 = rays.rows.iter().map(|r| r.psi.fitted_c2).fold(f64::NEG_INFINITY, f64::max);
    let cc = rays.rows.iter().map(|r| r.control.fitted_c2).fold(f64::INFINITY, f64::min);
    Ok(format!("{} rays below (worst c2 {c2:.5}), control above (c2 >= {cc:.5}), {:.2}s", rays.rows.len(), dt.as_secs_f64()))
}

/// `(max residual at h, max residual at h/2)` per (U, family).
fn refinement(coarse: &[Lemma21Report], fine: &[Lemma21Report]) -> Vec<(String, f64, f64, bool)> {
    coarse
        .iter()
        .zip(fine)
        .flat_map(|(c, f)| {
            c.families.iter().map(move |fc| {
                let ff = f.family(&fc.family).expect("same families");
                (format!("{}/{}", c.u, fc.family), fc.max_residual, ff.max_residual, fc.pass && ff.pass)
            })
        })
        .collect()
}

fn lemma21_on(n: usize, intervals: usize) -> Result<Vec<Lemma21Report>, String> {
    let grid = Grid::cube(n, intervals);
    let tests = bump_corpus(n, 20, TEST_SEED);
    u_corpus(n)
        .into_iter()
        .map(|(name, u)| {
            let f = CornerField::new(name, u, &grid);
            ensure(f.hypotheses_hold(), format!("{name} does not vanish on both faces"))?;
            verify_lemma21(&f, &tests, &grid, false).map_err(|e| e.to_string())
        })
        .collect()
}

// 6. corner identities, refinement and the layer probe
fn criterion_6() -> Outcome {
    let mut min_ratio = f64::INFINITY;
    let mut count = 0;
    for (n, coarse, fine) in [(2, 512, 1024), (3, 64, 128)] {
        let c = lemma21_on(n, coarse)?;
        let f = lemma21_on(n, fine)?;
        ensure(n != 2 || c.len() >= 5, format!("only {} U's in the 2D corpus", c.len()))?;
        for (name, rc, rf, pass) in refinement(&c, &f) {
            ensure(pass, format!("{name} (n = {n}): residual above K h^2 ({rc:e}, {rf:e})"))?;
            let ratio = rc / rf;
            ensure(ratio >= 3.5, format!("{name} (n = {n}): refinement ratio {ratio:.2}"))?;
            min_ratio = min_ratio.min(ratio);
            count += 1;
        }
    }
    let grid = Grid::cube(2, 512);
    let y1y2 = CornerField::new("y1y2", Expr::parse("x0*x1").unwrap(), &grid);
    let layer = detect_layer(&y1y2, None, &bump_corpus(2, 20, TEST_SEED), &grid, false).map_err(|e| e.to_string())?;
    ensure(layer.layer_magnitude > 0.0, "no layer detected for y1*y2")?;
    ensure(layer.rel_mismatch <= 0.01, format!("layer mismatch {:.4}", layer.rel_mismatch))?;
    Ok(format!(
        "{count} (U, family) pairs within K h^2, min refinement ratio {min_ratio:.2}, layer mismatch {:.2e}",
        layer.rel_mismatch
    ))
}

// 7. transfer inequality with the measured constant
fn criterion_7() -> Outcome {
    let grid = Grid::cube(2, 512);
    let m = ik_model(2);
    let b = corner_b_matrix(&m.geometry, &m.x0);
    let variable = BMatrixField::new(vec![
        vec![Expr::constant(0.0), Expr::parse("1 + 0.3*x0*x1").unwrap()],
        vec![Expr::parse("1 + 0.3*x0*x1").unwrap(), Expr::constant(0.0)],
    ]);
    let mut total = 0;
    for bf in [BMatrixField::constant(&[&b[0], &b[1]]), variable] {
        for (name, u) in u_corpus(2) {
            let f = CornerField::new(name, u, &grid);
            let r = verify_lemma23(&f, &bf, None, 10_000, TEST_SEED, &grid).map_err(|e| e.to_string())?;
            ensure(r.n_points == 10_000, format!("{name}: {} points", r.n_points))?;
            ensure(r.holds(), format!("{name}: {} violations (C = {:e})", r.n_violations, r.c_used))?;
            total += r.n_points;
        }
    }
    Ok(format!("{total} off-face points across 2 B fields x 6 U's, zero violations"))
}

// 8. mollifier commutator
fn criterion_8() -> Outcome {
    let grid = Grid::cube(2, 512);
    ensure(DEFAULT_EPS.len() == 5 && DEFAULT_EPS.iter().all(|&e| e >= 4.0 * grid.h(0)), "eps ladder")?;
    let mut worst_decay: f64 = 0.0;
    for case in kink_corpus(&grid) {
        let r = commutator_report(&case, &DEFAULT_EPS).map_err(|e| e.to_string())?;
        ensure(r.monotone, format!("{}: not monotone {:?}", r.name, r.norms))?;
        ensure(r.decay <= 0.25, format!("{}: decay {:.3}", r.name, r.decay))?;
        worst_decay = worst_decay.max(r.decay);
    }
    let c = commutator_report(&constant_case(&grid), &DEFAULT_EPS).map_err(|e| e.to_string())?;
    let cmax = c.norms.iter().cloned().fold(0.0, f64::max);
    ensure(cmax <= 1e-12, format!("constant coefficient: {cmax:e}"))?;
    Ok(format!("kink corpus monotone, worst decay {worst_decay:.3}; constant case {cmax:.1e}"))
}

// 9. Carleman sweep
fn carleman_at(n: usize) -> Result<(CarlemanStage, Duration), String> {
    let setup = Setup::new(&RunConfig::for_model(Command::Carleman, "ik2")).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let s = run_carleman(&setup, setup.x0.as_ref().unwrap(), 2.0, 1.0, n, TEST_SEED).map_err(|e| e.to_string())?;
    Ok((s, t.elapsed()))
}

fn criterion_9() -> Outcome {
    let (a, dt) = carleman_at(256)?;
    let (b, _) = carleman_at(512)?;
    for s in [&a, &b] {
        ensure(s.sweep.n_tests == 50, "corpus size")?;
        ensure(s.r_star > 0.0, format!("r* = {} at {}", s.r_star, s.grid))?;
        ensure(within(s.sweep.slope_rhs1, 0.5, 0.05), format!("slope rhs1 {}", s.sweep.slope_rhs1))?;
        ensure(within(s.sweep.slope_rhs2, 1.5, 0.05), format!("slope rhs2 {}", s.sweep.slope_rhs2))?;
    }
    let drift = (a.r_star / b.r_star - 1.0).abs();
    ensure(drift <= 0.05, format!("r* {} at 256 vs {} at 512", a.r_star, b.r_star))?;
    ensure(dt < Duration::from_secs(300), format!("runtime {dt:?}"))?;
    Ok(format!(
        "r* = {:.4} (256) / {:.4} (512), drift {:.2}%, slopes {:.3} / {:.3}, {:.1}s at 256",
        a.r_star,
        b.r_star,
        100.0 * drift,
        a.sweep.slope_rhs1,
        a.sweep.slope_rhs2,
        dt.as_secs_f64()
    ))
}

// 10. chart invariance
fn criterion_10() -> Outcome {
    let m = by_name("ik2").map_err(|e| e.to_string())?;
    let direct = ucp_core::certifier::certify(&m.geometry, &m.x0, Some(2.0), 200, ucp_core::certifier::EPS_C)
        .map_err(|e| e.to_string())?;
    let chart = certify_in_chart(&m, Some(2.0), 200).map_err(|e| e.to_string())?;
    ensure(chart.certificate.status == direct.status, "certificate status differs in the chart")?;
    let (w, t) = (direct.worst_margin.unwrap(), chart.worst_margin_transported.unwrap());
    ensure((t - w).abs() <= 0.01 * w.abs(), format!("margin {w} vs transported {t}"))?;
    ensure(chart.diagonal_max <= 1e-8, format!("b11, b22 reach {:e}", chart.diagonal_max))?;
    // oracle: with φ± as the first chart coordinates, b11 and b22 are ⟨Qdφ±, dφ±⟩
    let x = DVector::from_vec(vec![0.1, 0.9, 0.2]);
    let q = |_: &[f64]| flat(3);
    let gp = grad(&phi_plus, x.as_slice(), 1e-6);
    let gm = grad(&phi_minus, x.as_slice(), 1e-6);
    let diag = pairing(q, x.as_slice(), &gp, &gp).abs().max(pairing(q, x.as_slice(), &gm, &gm).abs());
    ensure(diag <= 1e-8, format!("oracle diagonal {diag:e}"))?;
    Ok(format!("{:?} in both, margin {w:.6} vs transported {t:.6}, diagonal {:.1e}", direct.status, chart.diagonal_max))
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 10] = [
        ("criterion_1", "model sign condition", criterion_1),
        ("criterion_2", "model certification constants", criterion_2),
        ("criterion_3", "key-identity consistency", criterion_3),
        ("criterion_4", "negative controls", criterion_4),
        ("criterion_5", "ray contact", criterion_5),
        ("criterion_6", "corner identities", criterion_6),
        ("criterion_7", "transfer inequality", criterion_7),
        ("criterion_8", "mollifier commutator", criterion_8),
        ("criterion_9", "Carleman sweep", criterion_9),
        ("criterion_10", "chart invariance", criterion_10),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (key, title, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|p| key.contains(p.as_str())) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{key:<13} PASS  {title}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("{key:<13} FAIL  {title}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
