//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

use finsler_pohozaev::field::{
    stress_sobolev_diagnostic, Bubble, ConstantSource, ManufacturedSource, PowerSource, RadialBump,
};
use finsler_pohozaev::pohozaev::{
    classical_plap_form, critical_exponent, dirichlet_boundary_reduction, identity_sides,
    nonexistence_scan, wholespace_check,
};
use finsler_pohozaev::profile::{default_bounds_grid, log_grid};
use finsler_pohozaev::solver::{solve_dirichlet, torsion_oracle};
use finsler_pohozaev::*;
use nalgebra::Vector2;
use std::f64::consts::{PI, SQRT_2};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(ok: bool, msg: String) -> Verdict {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn disk(n: usize) -> Arc<StarDomain> {
    Arc::new(StarDomain::with_resolution(RadiusFn::disk(1.0), n).expect("disk"))
}

fn euclid() -> Anisotropy {
    Anisotropy::euclidean(2).expect("euclidean")
}

fn diag21() -> Anisotropy {
    Anisotropy::ellipsoidal_row_major(2, &[2.0, 0.0, 0.0, 1.0]).expect("diag(2,1)")
}

fn torsion(p: f64, n: usize) -> GridField {
    GridField::sample(disk(n), &torsion_oracle(p, 2, 1.0).expect("oracle"))
}

const BUBBLE: [f64; 6] = [1.0, 0.3, -0.2, 0.5, 0.1, -0.4];

/// Identity reports over a refinement ladder, plus the smallest observed order.
fn ladder(
    sample: impl Fn(usize) -> GridField,
    src: &dyn SourceModel,
    pr: &Profile,
    a: &Anisotropy,
    levels: &[usize],
) -> (Vec<IdentityReport>, f64) {
    let reports: Vec<IdentityReport> = levels
        .iter()
        .map(|&n| identity_sides(&sample(n), src, pr, a).expect("identity"))
        .collect();
    let order = ConvergenceTable::from_reports(&reports)
        .expect("table")
        .min_order();
    (reports, order)
}

fn torsion_criterion(
    p: f64,
    exact: f64,
    levels: &[usize],
    tol: f64,
    order_min: f64,
    budget: f64,
) -> Verdict {
    let start = Instant::now();
    let pr = Profile::power(p).expect("profile");
    let (reports, order) = ladder(
        |n| torsion(p, n),
        &ConstantSource::new(1.0),
        &pr,
        &euclid(),
        levels,
    );
    let secs = start.elapsed().as_secs_f64();
    let top = reports.last().expect("levels");
    let value_err = (top.lhs - exact).abs().max((top.rhs - exact).abs()) / exact;
    ensure(
        top.residual_rel <= tol && order >= order_min && secs < budget && value_err <= 1e-4,
        format!(
            "lhs {:.9} rhs {:.9} exact {:.9}, residual_rel {:.3e} (<= {tol:e}), order {:.4} (>= {order_min}), {:.2} s (< {budget} s)",
            top.lhs, top.rhs, exact, top.residual_rel, order, secs
        ),
    )
}

fn c1() -> Verdict {
    torsion_criterion(2.0, PI / 4.0, &[64, 128, 256, 512], 1e-6, 1.9, 30.0)
}

fn c2() -> Verdict {
    torsion_criterion(3.0, PI * SQRT_2 / 3.0, &[64, 128, 256], 1e-3, 1.5, 60.0)
}

fn c3() -> Verdict {
    let pr = Profile::power(2.0).expect("profile");
    let a = diag21();
    let b = Bubble::new(1.0, BUBBLE);
    let src = ManufacturedSource::new(Arc::new(b), pr, a.clone());
    let (reports, order) = ladder(
        |n| GridField::sample(disk(n), &b),
        &src,
        &pr,
        &a,
        &[64, 128, 256],
    );
    let top = reports.last().expect("levels");
    ensure(
        top.residual_rel <= 1e-3 && order >= 1.5,
        format!(
            "residual_rel {:.3e} (<= 1e-3), order {:.4} (>= 1.5)",
            top.residual_rel, order
        ),
    )
}

fn c4() -> Verdict {
    let mut worst: f64 = 0.0;
    for (p, n) in [(2.0, 512), (3.0, 256)] {
        let pr = Profile::power(p).expect("profile");
        let c = classical_plap_form(&torsion(p, n), &ConstantSource::new(1.0), &pr, &euclid())
            .map_err(|e| e.to_string())?;
        worst = worst.max(c.termwise_gap);
    }
    ensure(
        worst <= 1e-12,
        format!("max termwise gap {worst:.3e} (<= 1e-12)"),
    )
}

fn c5() -> Verdict {
    let mut worst: f64 = 0.0;
    let e = euclid();
    for (p, n) in [(2.0, 256), (3.0, 256)] {
        let pr = Profile::power(p).expect("profile");
        let r = dirichlet_boundary_reduction(&torsion(p, n), &ConstantSource::new(1.0), &pr, &e)
            .map_err(|e| e.to_string())?;
        worst = worst.max(r.power_gap.ok_or("power form missing")?);
    }
    let a = diag21();
    for p in [2.0, 3.0] {
        let pr = Profile::power(p).expect("profile");
        let b = Bubble::new(1.0, BUBBLE);
        let src = ManufacturedSource::new(Arc::new(b), pr, a.clone());
        let r = dirichlet_boundary_reduction(&GridField::sample(disk(128), &b), &src, &pr, &a)
            .map_err(|e| e.to_string())?;
        worst = worst.max(r.power_gap.ok_or("power form missing")?);
    }
    ensure(
        worst <= 1e-10,
        format!("max relative gap {worst:.3e} (<= 1e-10)"),
    )
}

fn c6() -> Verdict {
    let e = euclid().report(10_000, 2024).map_err(|e| e.to_string())?;
    let d = diag21().report(10_000, 2024).map_err(|e| e.to_string())?;
    let identities = [
        e.max_homogeneity_error,
        e.max_euler_error,
        d.max_homogeneity_error,
        d.max_euler_error,
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    let lambda_ok = (e.lambda_hat - 1.0).abs() <= 1e-8;
    let c_ok = (d.c1_hat - 1.0).abs() <= 1e-8 && (d.c2_hat - SQRT_2).abs() <= 1e-8;
    let grid = default_bounds_grid();
    let mut bounds_ok = true;
    for p in [1.5, 2.0, 3.0, 4.0] {
        let b = Profile::power(p)
            .expect("profile")
            .check_structural_bounds(&grid);
        bounds_ok &= b.pass
            && (b.gamma_hat - 1.0).abs() <= 1e-12
            && (b.upper_gamma_hat - 1.0).abs() <= 1e-12;
    }
    ensure(
        identities <= 1e-10 && lambda_ok && c_ok && bounds_ok,
        format!(
            "identity error {identities:.3e} (<= 1e-10), lambda_hat {:.12}, (c1, c2) = ({:.12}, {:.12}), bounds pass with gamma = 1: {bounds_ok}",
            e.lambda_hat, d.c1_hat, d.c2_hat
        ),
    )
}

fn c7() -> Verdict {
    let table = [((2.0, 3), 5.0), ((2.0, 4), 3.0), ((3.0, 4), 11.0)];
    let got: Vec<f64> = table
        .iter()
        .map(|&((p, n), _)| critical_exponent(p, n).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let ok = table.iter().zip(&got).all(|((_, want), have)| want == have);
    ensure(
        ok,
        format!(
            "(2,3) -> {}, (2,4) -> {}, (3,4) -> {}",
            got[0], got[1], got[2]
        ),
    )
}

fn c8() -> Verdict {
    let d = StarDomain::with_resolution(RadiusFn::Ellipse { a: 2.0, b: 1.0 }, 64).expect("ellipse");
    let ts = log_grid(1e-3, 10.0, 64);
    let mut worst: f64 = 0.0;
    let mut all_hold = true;
    let mut min_pred = f64::INFINITY;
    for p in [1.5, 2.0, 3.0] {
        for a in [euclid(), diag21()] {
            let pr = Profile::power(p).expect("profile");
            let r = nonexistence_scan(&PowerSource::new(1.0, 2.0), &pr, &a, &d, &ts, 64)
                .map_err(|e| e.to_string())?;
            let pred = r
                .power_prediction
                .ok_or("no prediction for a power profile")?;
            worst = worst.max((r.min_value - pred).abs() / pred.abs().max(f64::MIN_POSITIVE));
            min_pred = min_pred.min(pred);
            all_hold &= r.condition_holds;
        }
    }
    ensure(
        worst <= 1e-12 && min_pred >= 0.0 && all_hold,
        format!("max |min - prediction| / prediction {worst:.3e}, smallest prediction {min_pred:.3e}, condition holds: {all_hold}"),
    )
}

fn c9() -> Verdict {
    let mut parts = Vec::new();
    let mut ok = true;
    for (p, tol) in [(2.0, 1e-3), (3.0, 5e-3)] {
        let pr = Profile::power(p).expect("profile");
        let src = ConstantSource::new(1.0);
        let d = disk(256);
        let r = solve_dirichlet(&src, &pr, &euclid(), d.clone(), &SolverConfig::default())
            .map_err(|e| e.to_string())?;
        let exact = torsion(p, 256);
        let err = r.u.max_diff(&exact).map_err(|e| e.to_string())?;
        let solved = identity_sides(&r.u, &src, &pr, &euclid()).map_err(|e| e.to_string())?;
        let manufactured =
            identity_sides(&exact, &src, &pr, &euclid()).map_err(|e| e.to_string())?;
        let ratio = solved.residual_rel / manufactured.residual_rel;
        ok &= err <= tol && r.energy_monotone() && ratio <= 5.0;
        parts.push(format!(
            "p={p}: L_inf {err:.3e} (<= {tol:e}), monotone {}, residual ratio {ratio:.3} (<= 5)",
            r.energy_monotone()
        ));
    }
    ensure(ok, parts.join("; "))
}

fn c10() -> Verdict {
    let radii = [1.0, 1.5, 2.0];
    let planar = wholespace_check(
        Arc::new(RadialBump::new(1.0, 0.6)),
        &Profile::power(2.0).expect("profile"),
        &euclid(),
        &radii,
        256,
    )
    .map_err(|e| e.to_string())?;
    let beyond_zero = planar
        .decay
        .iter()
        .filter(|d| d.radius > planar.support_radius)
        .all(|d| d.value == 0.0);
    let off_centre = RadialBump::new(1.0, 0.6).centered_at(Vector2::new(0.2, -0.1));
    let cubic = wholespace_check(
        Arc::new(off_centre),
        &Profile::power(3.0).expect("profile"),
        &euclid(),
        &radii,
        256,
    )
    .map_err(|e| e.to_string())?;
    ensure(
        planar.rhs == 0.0
            && planar.residual_rel <= 1e-3
            && beyond_zero
            && cubic.residual_rel <= 1e-3
            && cubic.flipped_residual_rel > 1e-3,
        format!(
            "p=N=2: rhs {:e}, |lhs|/scale {:.3e}, decay beyond support all zero {beyond_zero}; p=3: residual_rel {:.3e}, opposite sign {:.3e}",
            planar.rhs, planar.residual_rel, cubic.residual_rel, cubic.flipped_residual_rel
        ),
    )
}

fn c11() -> Verdict {
    let pr = Profile::power(3.0).expect("profile");
    let oracle = torsion_oracle(3.0, 2, 1.0).expect("oracle");
    let d = stress_sobolev_diagnostic(
        &oracle,
        &pr,
        &euclid(),
        &RadiusFn::disk(1.0),
        &[64, 128, 256],
        0.8,
    )
    .map_err(|e| e.to_string())?;
    let last = *d.ratios.last().ok_or("no ratios")?;
    ensure(
        (last - 1.0).abs() <= 0.1,
        format!(
            "stress seminorms {:?}, last ratio {last:.5} (within 10%)",
            d.stress_seminorm
        ),
    )
}

const DETERMINISM_CONFIG: &str = r#"
version = 1
experiment = "convergence-study"
resolutions = [32, 64, 128]
seed = 11

[anisotropy]
kind = "ellipsoidal"
matrix = [[2.0, 0.3], [0.3, 1.0]]

[profile]
kind = "power"
p = 3.0

[domain]
kind = "disk"

[field]
kind = "bubble"
coeffs = [1.0, 0.2, 0.1, -0.3, 0.05, 0.2]

[source]
kind = "manufactured"
"#;

fn c12() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("run.toml");
    std::fs::write(&config, DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
    let run = |out: &Path| -> Result<Vec<u8>, String> {
        let status = Command::new(env!("CARGO_BIN_EXE_pohozaev"))
            .args([
                "--config",
                config.to_str().unwrap(),
                "--deterministic",
                "--seed",
                "11",
                "--out",
            ])
            .arg(out)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("run exited with {status}"));
        }
        std::fs::read(out.join("report.json")).map_err(|e| e.to_string())
    };
    let first = run(&dir.path().join("a"))?;
    let second = run(&dir.path().join("b"))?;
    ensure(
        first == second,
        format!(
            "two deterministic runs, {} and {} bytes, identical: {}",
            first.len(),
            second.len(),
            first == second
        ),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("isotropic p=2 torsion identity", c1),
        ("isotropic p=3 torsion identity", c2),
        ("anisotropic manufactured identity", c3),
        ("specialization equality", c4),
        ("Dirichlet boundary reduction", c5),
        ("hypothesis suite", c6),
        ("critical exponent table", c7),
        ("nonexistence scan", c8),
        ("solver validation", c9),
        ("whole-space check", c10),
        ("stress Sobolev diagnostic", c11),
        ("determinism", c12),
    ];
    let mut failures = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match verdict {
            Ok(detail) => println!("[PASS] {:>2}. {name}: {detail}", k + 1),
            Err(detail) => {
                failures += 1;
                println!("[FAIL] {:>2}. {name}: {detail}", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
