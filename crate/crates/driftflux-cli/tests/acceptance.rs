//! End-to-end acceptance gates for the solver and analysis toolkit. Each
//! test is one numbered gate with a hard tolerance; together they cover the
//! pressure-identity oracles, the linear closed-form oracle, conservation,
//! transport decoupling, the dyadic-analysis suite, the energy bracket,
//! truncation fidelity, small-data boundedness, and vacuum fault handling.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use driftflux::diagnostics::{check_transport_estimate, e_norm, energy_alpha_all, energy_bracket_constants};
use driftflux::field::ScalarField;
use driftflux::grid::Grid;
use driftflux::lp::{
    block_l2_norms, block_l2_norms_vector, block_range, friedrichs_project, BesovSpec, TimeLp,
};
use driftflux::model::{derive_constants, pressure, Chart, DerivedConstants, PhysParams};
use driftflux::scenario::{
    make_initial_data, seeded_band_scalar, seeded_band_velocity, BandRecipe, InitialData,
};
use driftflux::solver::{run_simulation, FriedrichsRadius, RunOutput, SolverConfig};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_driftflux")
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Run a shipped scenario into a fresh directory, returning the process
/// output, the artifact directory, and the elapsed wall time.
fn run_shipped(name: &str) -> (Output, tempfile::TempDir, PathBuf, Duration) {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let started = Instant::now();
    let out = Command::new(binary())
        .arg("run")
        .arg(scenarios_dir().join(name))
        .arg("--output-dir")
        .arg(&out_dir)
        .output()
        .expect("failed to spawn the scenario runner");
    let elapsed = started.elapsed();
    (out, dir, out_dir, elapsed)
}

/// Parse a purely numeric CSV written by the runner.
fn read_numeric_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {path:?}: {e}"));
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .expect("csv has a header")
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|c| c.parse::<f64>().unwrap_or_else(|_| panic!("bad cell {c:?}")))
                .collect()
        })
        .collect();
    (header, rows)
}

/// Least-squares slope of ln(y) against ln(x).
fn fitted_order(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let sx: f64 = lx.iter().sum();
    let sy: f64 = ly.iter().sum();
    let sxx: f64 = lx.iter().map(|v| v * v).sum();
    let sxy: f64 = lx.iter().zip(ly.iter()).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn shipped_params() -> PhysParams {
    PhysParams {
        mu_tilde: 1.0,
        lambda_tilde: 0.5,
        a_l: 1.0,
        a_g: 1.0,
        p_l0: 1.0,
        rho_l0: 2.0,
        m_bar: 2.0,
        n_bar: 0.5,
        dim: 2,
    }
}

fn assert_within(elapsed: Duration, budget_s: u64, what: &str) {
    assert!(
        elapsed <= Duration::from_secs(budget_s),
        "{what} took {elapsed:?}, budget {budget_s} s"
    );
}

fn worst_column(path: &Path, column: &str) -> f64 {
    let (header, rows) = read_numeric_csv(path);
    let idx = header
        .iter()
        .position(|h| h == column)
        .unwrap_or_else(|| panic!("column {column} missing from {header:?}"));
    rows.iter().fold(0.0f64, |w, r| w.max(r[idx].abs()))
}

#[test]
fn acceptance_01_pressure_gradient_decomposition_identity() {
    let (out, _dir, art, elapsed) = run_shipped("identity-check.toml");
    assert_eq!(out.status.code(), Some(0), "identity run failed: {}", String::from_utf8_lossy(&out.stderr));
    let worst = worst_column(&art.join("identities.csv"), "h_residual");
    println!("decomposition identity: worst relative residual {worst:.3e} over 20 seeds");
    assert!(worst <= 1e-8, "worst residual {worst:.3e} > 1e-8");
    assert_within(elapsed, 10, "identity scenario");
}

#[test]
fn acceptance_02_local_pressure_term_identity() {
    let (out, _dir, art, elapsed) = run_shipped("identity-check.toml");
    assert_eq!(out.status.code(), Some(0), "identity run failed: {}", String::from_utf8_lossy(&out.stderr));
    let worst = worst_column(&art.join("identities.csv"), "q_residual");
    println!("local pressure term identity: worst relative residual {worst:.3e} over 20 seeds");
    assert!(worst <= 1e-8, "worst residual {worst:.3e} > 1e-8");
    assert_within(elapsed, 10, "identity scenario");
}

#[test]
fn acceptance_03_pressure_pure_phase_limits() {
    let sets: [(f64, f64, f64, f64, f64, f64); 10] = [
        (1.0, 1.0, 1.0, 2.0, 2.0, 0.5),
        (std::f64::consts::SQRT_2, std::f64::consts::SQRT_2, 0.0, 1.0, 2.0, 0.0),
        (std::f64::consts::SQRT_2, std::f64::consts::SQRT_2, 0.0, 1.0, 2.0, 0.7),
        (1.0, 2.0, 0.3, 1.3, 2.0, 0.0),
        (1.0, 2.0, 0.3, 1.3, 1.5, 0.4),
        (3.0, 1.5, 0.3, 1.1, 3.0, 1.2),
        (2.0, 1.0, 0.5, 1.2, 2.5, 0.3),
        (1.5, 1.5, 0.2, 1.1, 1.8, 0.6),
        (2.5, 0.8, 0.0, 0.9, 2.2, 0.1),
        (1.2, 2.2, 0.4, 1.5, 2.8, 0.9),
    ];
    let grid = Grid::standard(2, 8).unwrap();
    let mut worst = 0.0f64;
    for (i, &(a_l, a_g, p_l0, rho_l0, m_bar, n_bar)) in sets.iter().enumerate() {
        let p = PhysParams {
            mu_tilde: 1.0,
            lambda_tilde: 0.5,
            a_l,
            a_g,
            p_l0,
            rho_l0,
            m_bar,
            n_bar,
            dim: 2,
        };
        p.validate().unwrap_or_else(|e| panic!("parameter set {i} inadmissible: {e}"));
        let c = derive_constants(&p).unwrap();

        // Liquid-only branch: above the reference offset the pressure is
        // exactly affine in the liquid mass.
        for m_t in [c.k0 * 1.25, c.k0 + 0.8, c.k0 * 2.0] {
            let m_field = ScalarField::constant(grid, m_t);
            let n_field = ScalarField::zeros(grid);
            let got = pressure(&m_field, &n_field, &c).unwrap().mean();
            let expected = p_l0 + a_l * a_l * (m_t - rho_l0);
            worst = worst.max((got - expected).abs() / expected.abs());
        }
        // Gas-only limit: as the liquid mass vanishes the pressure becomes
        // linear in the gas mass with the gas sonic slope.
        for n_t in [0.4, 1.0, 2.3] {
            let m_field = ScalarField::zeros(grid);
            let n_field = ScalarField::constant(grid, n_t);
            let got = pressure(&m_field, &n_field, &c).unwrap().mean();
            let expected = a_g * a_g * n_t;
            worst = worst.max((got - expected).abs() / expected.abs());
        }
    }
    println!("pure-phase pressure limits: worst relative error {worst:.3e} over 10 parameter sets");
    assert!(worst <= 1e-12, "worst relative error {worst:.3e} > 1e-12");
}

#[test]
fn acceptance_04_linear_oracle_convergence() {
    let (out, _dir, art, elapsed) = run_shipped("linear-oracle.toml");
    assert_eq!(out.status.code(), Some(0), "oracle run failed: {}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_numeric_csv(&art.join("ladder.csv"));
    assert_eq!(header, ["dt", "rel_l2_error", "max_mode_error"]);
    assert_eq!(rows.len(), 4, "expected a 4-rung ladder");
    let dts: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let order = fitted_order(&dts, &errs);
    let finest = rows
        .iter()
        .min_by(|a, b| a[0].partial_cmp(&b[0]).unwrap())
        .unwrap();
    println!(
        "linear oracle: fitted order {order:.3}, finest per-mode error {:.3e}",
        finest[2]
    );
    assert!(
        (3.8..=4.2).contains(&order),
        "fitted order {order:.3} outside [3.8, 4.2]"
    );
    assert!(finest[2] <= 1e-9, "finest per-mode error {:.3e} > 1e-9", finest[2]);
    assert_within(elapsed, 30, "linear oracle ladder");
}

#[test]
fn acceptance_05_conserved_integrals() {
    let (out, _dir, art, elapsed) = run_shipped("conservation.toml");
    assert_eq!(out.status.code(), Some(0), "conservation run failed: {}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_numeric_csv(&art.join("conservation.csv"));
    let mut worst = 0.0f64;
    for (j, name) in header.iter().enumerate() {
        if j == 0 {
            continue;
        }
        let w = rows.iter().fold(0.0f64, |m, r| m.max(r[j].abs()));
        println!("conservation: {name} worst relative drift {w:.3e}");
        worst = worst.max(w);
    }
    assert!(worst <= 1e-8, "worst relative drift {worst:.3e} > 1e-8");
    assert_within(elapsed, 120, "conservation run");
}

#[test]
fn acceptance_06_transport_decoupling() {
    let grid = Grid::standard(2, 64).unwrap();
    let c = derive_constants(&shipped_params()).unwrap();
    let recipe = |velocity_norm: f64| {
        InitialData::RandomBands(BandRecipe {
            band_lo: 1.0,
            band_hi: 8.0,
            scalar1_norm: 0.004,
            scalar2_norm: 0.002,
            velocity_norm,
        })
    };

    // Velocity frozen at zero: the transported scalar receives exactly zero
    // increments, so every hybrid norm of it stays constant.
    let initial = make_initial_data(&recipe(0.0), &grid, Chart::GlobalModified, &c, 13).unwrap();
    let mut cfg = SolverConfig::new(Chart::GlobalModified, 1e-3, 1.0);
    cfg.freeze_velocity = true;
    cfg.snapshot_stride = 10;
    let frozen = run_simulation(&initial, &cfg, &c).unwrap();
    assert!(frozen.fault.is_none(), "frozen run faulted: {:?}", frozen.fault);
    let series = frozen.history.scalar2();
    let mut worst_drift = 0.0f64;
    for spec in [
        BesovSpec::uniform(0.0),
        BesovSpec::uniform(1.0),
        BesovSpec::uniform(2.0),
        BesovSpec::hybrid(0.0, 1.0),
        BesovSpec::hybrid(-0.5, 1.5),
        BesovSpec::hybrid(1.0, 2.0),
    ] {
        let first = series.besov_at(0, spec);
        for i in 1..series.len() {
            worst_drift = worst_drift.max((series.besov_at(i, spec) - first).abs());
        }
    }
    println!("transport decoupling, frozen velocity: worst norm drift {worst_drift:.3e}");
    assert!(worst_drift <= 1e-12, "norm drift {worst_drift:.3e} > 1e-12");

    // Active velocity: pure transport cannot create new extrema, so the
    // range of the scalar is preserved over the unit time window.
    let initial = make_initial_data(&recipe(0.004), &grid, Chart::GlobalModified, &c, 13).unwrap();
    let mut cfg = SolverConfig::new(Chart::GlobalModified, 1e-3, 1.0);
    cfg.snapshot_stride = 100;
    let active = run_simulation(&initial, &cfg, &c).unwrap();
    assert!(active.fault.is_none(), "active run faulted: {:?}", active.fault);
    let range = |s: &ScalarField| {
        let p = s.to_physical();
        let lo = p.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (lo0, hi0) = range(initial.scalar2());
    let (lo1, hi1) = range(active.final_state.scalar2());
    let moved = (lo1 - lo0).abs().max((hi1 - hi0).abs());
    println!("transport decoupling, active velocity: range endpoints moved {moved:.3e}");
    assert!(moved <= 1e-6, "range endpoints moved {moved:.3e} > 1e-6");
}

#[test]
fn acceptance_07_dyadic_analysis_suite() {
    let (out, _dir, art, elapsed) = run_shipped("besov-suite.toml");
    assert_eq!(out.status.code(), Some(0), "suite run failed: {}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(art.join("besov_suite.csv")).unwrap();
    let mut checks = 0;
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 4, "malformed row {line:?}");
        println!("dyadic suite: {} worst {} vs tolerance {}", cells[0], cells[1], cells[2]);
        assert_eq!(cells[3], "1", "check {} failed", cells[0]);
        checks += 1;
    }
    assert!(checks >= 7, "expected the full suite, saw {checks} checks");
    assert_within(elapsed, 10, "dyadic analysis suite");
}

#[test]
fn acceptance_08_block_energy_equivalence() {
    let parameter_sets = [
        shipped_params(),
        PhysParams {
            a_l: std::f64::consts::SQRT_2,
            a_g: std::f64::consts::SQRT_2,
            p_l0: 0.0,
            rho_l0: 1.0,
            n_bar: 0.0,
            ..shipped_params()
        },
        PhysParams {
            mu_tilde: 0.8,
            lambda_tilde: -0.3,
            a_l: std::f64::consts::SQRT_2,
            a_g: std::f64::consts::SQRT_2,
            p_l0: 0.0,
            rho_l0: 1.0,
            n_bar: 0.7,
            ..shipped_params()
        },
    ];
    let grid = Grid::standard(2, 32).unwrap();
    let (k_min, k_max) = block_range(&grid);
    let band = (1.0, grid.dealias_limit() as f64);
    let mut checked = 0usize;
    for (si, p) in parameter_sets.iter().enumerate() {
        let c = derive_constants(p).unwrap();
        let (c1, c2) = energy_bracket_constants(&c).unwrap();
        assert!(c1 > 0.0 && c2 > c1, "degenerate bracket [{c1}, {c2}]");
        for pair in 0..100u64 {
            let seed = 1000 * (si as u64 + 1) + pair;
            let m = seeded_band_scalar(&grid, seed, band, BesovSpec::uniform(0.0), 1.0).unwrap();
            let u =
                seeded_band_velocity(&grid, seed + 77_000, band, BesovSpec::uniform(0.0), 1.0).unwrap();
            let alphas = energy_alpha_all(&m, &u, &c).unwrap();
            let nm = block_l2_norms(&m);
            let nu = block_l2_norms_vector(&u);
            let gx = block_l2_norms(&m.derivative(0));
            let gy = block_l2_norms(&m.derivative(1));
            for (off, k) in (k_min..=k_max).enumerate() {
                let alpha2 = alphas[off] * alphas[off];
                let mid = nm.get(k).powi(2) + nu.get(k).powi(2) + gx.get(k).powi(2) + gy.get(k).powi(2);
                if alpha2 == 0.0 && mid == 0.0 {
                    continue;
                }
                assert!(
                    c1 * alpha2 <= mid * (1.0 + 1e-12),
                    "lower bracket violated: set {si}, pair {pair}, block {k}: {:.6e} > {mid:.6e}",
                    c1 * alpha2
                );
                assert!(
                    mid <= c2 * alpha2 * (1.0 + 1e-12),
                    "upper bracket violated: set {si}, pair {pair}, block {k}: {mid:.6e} > {:.6e}",
                    c2 * alpha2
                );
                checked += 1;
            }
        }
    }
    println!("block energy bracket: {checked} block evaluations, zero violations");
    assert!(checked >= 3 * 100 * ((k_max - k_min) as usize));
}

#[test]
fn acceptance_09_truncation_fidelity() {
    // Sharp truncation is a projector: applying it twice changes nothing,
    // down to the last bit.
    let grid = Grid::standard(2, 64).unwrap();
    for ell in [2u32, 5, 16] {
        for keep_mean in [false, true] {
            let f = seeded_band_scalar(&grid, 31 + ell as u64, (0.0, 20.0), BesovSpec::uniform(0.0), 1.0)
                .unwrap();
            let once = friedrichs_project(&f, ell, keep_mean);
            let twice = friedrichs_project(&once, ell, keep_mean);
            assert_eq!(once.hat(), twice.hat(), "projection not idempotent at ell = {ell}");
        }
    }

    // The reduced right-hand side evaluated on truncated data must agree
    // with the explicitly projected right-hand side at every step.
    let c = derive_constants(&shipped_params()).unwrap();
    let recipe = InitialData::RandomBands(BandRecipe {
        band_lo: 1.0,
        band_hi: 8.0,
        scalar1_norm: 0.004,
        scalar2_norm: 0.002,
        velocity_norm: 0.004,
    });
    let initial = make_initial_data(&recipe, &grid, Chart::GlobalModified, &c, 13).unwrap();
    let dt = 1e-3;
    let mut cfg = SolverConfig::new(Chart::GlobalModified, dt, 10.0 * dt);
    cfg.ell = FriedrichsRadius::Radius(8);
    cfg.outer_projection_debug = true;
    let out = run_simulation(&initial, &cfg, &c).unwrap();
    assert!(out.fault.is_none(), "debug run faulted: {:?}", out.fault);
    assert_eq!(out.steps, 10);
    println!(
        "truncation fidelity: projector idempotent bitwise, 10-step defect {:.3e}",
        out.max_projection_defect
    );
    assert!(
        out.max_projection_defect <= 1e-12,
        "projection defect {:.3e} > 1e-12",
        out.max_projection_defect
    );
}

/// One boundedness probe: returns the measured solution-stack norm and the
/// two fitted growth constants at the given step size, with the diagnostic
/// sampling times held fixed across step sizes.
fn boundedness_probe(
    grid: &Grid,
    c: &DerivedConstants,
    e0: f64,
    dt: f64,
) -> (f64, f64, f64, RunOutput) {
    let recipe = InitialData::RandomBands(BandRecipe {
        band_lo: 1.0,
        band_hi: 8.0,
        scalar1_norm: 0.4 * e0,
        scalar2_norm: 0.2 * e0,
        velocity_norm: 0.4 * e0,
    });
    let initial = make_initial_data(&recipe, grid, Chart::GlobalModified, c, 13).unwrap();
    let mut cfg = SolverConfig::new(Chart::GlobalModified, dt, 1.0);
    cfg.snapshot_stride = (0.01 / dt).round() as usize;
    let out = run_simulation(&initial, &cfg, c).unwrap();
    assert!(out.fault.is_none(), "probe at E0 = {e0} faulted: {:?}", out.fault);

    let dim = grid.dim();
    let s = dim as f64 / 2.0;
    let measured = e_norm(&out.history, s).unwrap();

    let transport = check_transport_estimate(
        out.history.scalar2(),
        out.history.velocity(),
        BesovSpec::uniform(s),
        dim,
    )
    .unwrap();

    // Fitted prefactor of the parabolic-stack bound: the time-integrated
    // norms of (m, u) against their data norms, with the advection budget
    // discounted at unit rate in the exponent.
    let m = out.history.scalar1();
    let u = out.history.velocity();
    let lhs = m.chemin_lerner(TimeLp::Inf, BesovSpec::hybrid(s - 1.0, s)).unwrap()
        + u.chemin_lerner(TimeLp::Inf, BesovSpec::uniform(s - 1.0)).unwrap()
        + m.chemin_lerner(TimeLp::One, BesovSpec::hybrid(s + 1.0, s)).unwrap()
        + u.chemin_lerner(TimeLp::One, BesovSpec::uniform(s + 1.0)).unwrap();
    let v_total = u
        .time_lp_of_besov(TimeLp::One, BesovSpec::uniform(s + 1.0))
        .unwrap();
    let data = m.besov_at(0, BesovSpec::hybrid(s - 1.0, s)) + u.besov_at(0, BesovSpec::uniform(s - 1.0));
    let stack_constant = lhs / (v_total.exp() * data);

    (measured, transport.implied_constant, stack_constant, out)
}

#[test]
fn acceptance_10_small_data_boundedness() {
    let grid = Grid::standard(2, 64).unwrap();
    let c = derive_constants(&shipped_params()).unwrap();
    for e0 in [0.003, 0.01, 0.03] {
        let (norm_a, c_transport_a, c_stack_a, _) = boundedness_probe(&grid, &c, e0, 1e-3);
        println!(
            "boundedness probe E0 = {e0}: measured stack norm {norm_a:.4e} (budget {:.4e}), \
             growth constants {c_transport_a:.4e} / {c_stack_a:.4e}",
            10.0 * e0
        );
        assert!(
            norm_a <= 10.0 * e0,
            "stack norm {norm_a:.4e} exceeds 10 E0 = {:.4e}",
            10.0 * e0
        );

        let (_, c_transport_b, c_stack_b, _) = boundedness_probe(&grid, &c, e0, 5e-4);
        let d_transport = (c_transport_a - c_transport_b).abs() / c_transport_a.abs().max(1e-30);
        let d_stack = (c_stack_a - c_stack_b).abs() / c_stack_a.abs();
        println!(
            "boundedness probe E0 = {e0}: constants moved {d_transport:.2e} / {d_stack:.2e} under step halving"
        );
        assert!(d_transport < 0.10, "transport constant moved {d_transport:.2e} >= 10%");
        assert!(d_stack < 0.10, "stack constant moved {d_stack:.2e} >= 10%");
    }
}

#[test]
fn acceptance_11_vacuum_fault_handling() {
    let (out, _dir, art, _elapsed) = run_shipped("vacuum-probe.toml");
    assert_eq!(
        out.status.code(),
        Some(4),
        "expected the solver-fault exit code, stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let stdout = String::from_utf8_lossy(&out.stdout);
    let monitor_line = stdout
        .lines()
        .find(|l| l.contains("CRITERION_VIOLATED"))
        .expect("continuation monitor line missing from stdout");
    let monitor_t: f64 = monitor_line
        .split("at t = ")
        .nth(1)
        .and_then(|s| s.split(':').next())
        .expect("malformed monitor line")
        .trim()
        .parse()
        .expect("monitor time");

    let manifest = fs::read_to_string(art.join("manifest.toml")).unwrap();
    assert!(manifest.contains("status = \"fault\""));
    let fault_t: f64 = manifest
        .lines()
        .find(|l| l.contains("vacuum fault at t = "))
        .expect("vacuum fault missing from manifest")
        .split("at t = ")
        .nth(1)
        .and_then(|s| s.split(':').next())
        .expect("malformed fault entry")
        .parse()
        .expect("fault time");

    // The monitor must flag the collapse strictly before the solver gives
    // up, and nothing nonfinite may ever reach the record stream.
    println!("vacuum handling: monitor fired at t = {monitor_t}, fault at t = {fault_t}");
    assert!(
        monitor_t < fault_t,
        "monitor fired at {monitor_t}, not strictly before the fault at {fault_t}"
    );
    let diagnostics = fs::read_to_string(art.join("diagnostics.csv")).unwrap();
    let mut rows = 0;
    for line in diagnostics.lines().skip(1) {
        for cell in line.split(',') {
            let v: f64 = cell.parse().expect("numeric cell");
            assert!(v.is_finite(), "nonfinite value {cell} in the record stream");
        }
        rows += 1;
    }
    assert!(rows > 0, "fault left no records behind");
}
