//! The seven scenario runners: build data, run the requested check or
//! simulation, write artifacts, and translate outcomes into exit codes.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use driftflux::diagnostics::{
    check_theta_transport_bound, check_transport_estimate, continuation_monitor, e_norm, f_norm,
    smallness_report, write_csv, DiagnosticsConfig, MonitorStatus,
};
use driftflux::error::Error;
use driftflux::field::{gradient, ScalarField, VectorField};
use driftflux::grid::Grid;
use driftflux::lp::{
    block_l2_norms, block_range, friedrichs_project, hybrid_besov_norm, lp_block, phi_cutoff,
    BesovSpec, BlockSeries, TimeLp,
};
use driftflux::model::{
    from_local, from_modified, local_q, nonlinear_h, pressure, Chart, DerivedConstants, State,
};
use driftflux::scenario::{
    make_initial_data, seeded_band_scalar, seeded_band_velocity, InitialData, Scenario,
    ScenarioName,
};
use driftflux::snapshot;
use driftflux::solver::{
    linear_exact_evolve, run_simulation, run_theta_transport, state_hat_max_diff, SolverConfig,
};
use driftflux::Result;

use crate::artifacts::{num, write_csv_rows, write_estimates, write_smallness, Manifest};
use crate::{EXIT_FAULT, EXIT_OK, EXIT_THRESHOLD};

/// Assumed multiplicative constants entering the smallness thresholds,
/// echoed in the manifest so reported margins are reproducible.
const ASSUMED_C: f64 = 1.0;
const ASSUMED_A: f64 = 3.0;
/// Relative drift budget for the conserved integrals.
const CONSERVATION_TOL: f64 = 1e-8;
/// Residual budget for the pressure-decomposition identities.
const IDENTITY_TOL: f64 = 1e-8;
/// Accepted window for the fitted convergence order of the time stepper.
const ORDER_WINDOW: (f64, f64) = (3.8, 4.2);
/// Number of random draws per identity in the identity-check scenario.
const IDENTITY_SEEDS: u64 = 20;

pub fn execute(
    path: &Path,
    output_override: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<u8> {
    let mut scenario = Scenario::load(path)?;
    if let Some(s) = seed_override {
        scenario.seed = s;
    }
    let out_dir = scenario.resolve_output_dir(output_override);
    fs::create_dir_all(&out_dir)?;
    let raw = fs::read(path)?;
    fs::write(out_dir.join("scenario.toml"), raw)?;

    let c = scenario.constants()?;
    let mut manifest = Manifest::new(&scenario);
    let code = match scenario.name {
        ScenarioName::IdentityCheck => {
            run_identity_check(&scenario, &c, &out_dir, &mut manifest)?
        }
        ScenarioName::LinearOracle => run_linear_oracle(&scenario, &c, &out_dir, &mut manifest)?,
        ScenarioName::SmallDataGlobal | ScenarioName::LargeDataLocal => {
            run_evolution(&scenario, &c, &out_dir, &mut manifest)?
        }
        ScenarioName::ThetaTransport => run_theta(&scenario, &c, &out_dir, &mut manifest)?,
        ScenarioName::Conservation => run_conservation(&scenario, &c, &out_dir, &mut manifest)?,
        ScenarioName::BesovSuite => run_besov_suite(&scenario, &out_dir, &mut manifest)?,
    };
    manifest.write(&out_dir.join("manifest.toml"), code)?;
    Ok(code)
}

fn solver_section(scenario: &Scenario) -> Result<SolverConfig> {
    scenario.solver.clone().ok_or_else(|| {
        Error::InvalidConfig(format!(
            "scenario {} needs a [solver] section",
            scenario.name.as_str()
        ))
    })
}

fn div_pointwise(a: &ScalarField, b: &ScalarField) -> Result<ScalarField> {
    let ap = a.to_physical();
    let bp = b.to_physical();
    let q: Vec<f64> = ap.iter().zip(bp.iter()).map(|(&x, &y)| x / y).collect();
    ScalarField::from_physical(*a.grid(), &q)
}

fn mul_pointwise(a: &ScalarField, b: &ScalarField) -> Result<ScalarField> {
    let ap = a.to_physical();
    let bp = b.to_physical();
    let q: Vec<f64> = ap.iter().zip(bp.iter()).map(|(&x, &y)| x * y).collect();
    ScalarField::from_physical(*a.grid(), &q)
}

fn rel_diff_vec(reference: &VectorField, other: &VectorField) -> f64 {
    let diff = reference.sub(other).l2_norm();
    let scale = reference.l2_norm();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn state_l2(s: &State) -> f64 {
    (s.scalar1().l2_norm().powi(2)
        + s.scalar2().l2_norm().powi(2)
        + s.velocity().l2_norm().powi(2))
    .sqrt()
}

fn state_diff_l2(a: &State, b: &State) -> f64 {
    let mut total = a.scalar1().sub(b.scalar1()).l2_norm().powi(2)
        + a.scalar2().sub(b.scalar2()).l2_norm().powi(2);
    for i in 0..a.velocity().dim() {
        total += a
            .velocity()
            .component(i)
            .sub(b.velocity().component(i))
            .l2_norm()
            .powi(2);
    }
    total.sqrt()
}

/// Least-squares slope of ln(error) against ln(dt).
fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points
        .iter()
        .map(|p| p.1.max(f64::MIN_POSITIVE).ln())
        .collect();
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    sxy / sxx
}

/// Both decomposition residuals for one seeded draw: the pressure-gradient
/// identity in the small-data chart and the Q identity in the large-data
/// chart, each against the unexpanded pressure evaluation.
fn identity_residuals(
    recipe: &InitialData,
    grid: &Grid,
    c: &DerivedConstants,
    seed: u64,
) -> Result<(f64, f64)> {
    let dim = grid.dim();

    let gstate = make_initial_data(recipe, grid, Chart::GlobalModified, c, seed)?;
    let physical = from_modified(&gstate, c)?;
    let p = pressure(physical.scalar1(), physical.scalar2(), c)?;
    let grad_p = gradient(&p);
    let mut parts = Vec::with_capacity(dim);
    for ax in 0..dim {
        parts.push(div_pointwise(grad_p.component(ax), physical.scalar1())?.scaled(1.0 / c.c0));
    }
    let lhs = VectorField::from_components(parts)?;
    let mut rhs = gradient(gstate.scalar1());
    rhs.axpy(1.0, &nonlinear_h(gstate.scalar1(), gstate.scalar2(), c)?);
    let h_res = rel_diff_vec(&lhs, &rhs);

    let lstate = make_initial_data(
        recipe,
        grid,
        Chart::LocalModified,
        c,
        seed ^ 0x9e37_79b9_7f4a_7c15,
    )?;
    let physical = from_local(&lstate, c)?;
    let p = pressure(physical.scalar1(), physical.scalar2(), c)?;
    let grad_p = gradient(&p);
    let one_plus_rho = lstate.scalar1().add_constant(1.0);
    let mut parts = Vec::with_capacity(dim);
    for ax in 0..dim {
        parts.push(mul_pointwise(grad_p.component(ax), &one_plus_rho)?.scaled(1.0 / c.m_bar));
    }
    let lhs = VectorField::from_components(parts)?;
    let rhs = local_q(lstate.scalar1(), lstate.scalar2(), c)?;
    let q_res = rel_diff_vec(&lhs, &rhs);

    Ok((h_res, q_res))
}

fn run_identity_check(
    scenario: &Scenario,
    c: &DerivedConstants,
    out: &Path,
    manifest: &mut Manifest,
) -> Result<u8> {
    let grid = scenario.grid;
    let mut rows = Vec::new();
    let mut worst_h = 0.0f64;
    let mut worst_q = 0.0f64;
    for k in 0..IDENTITY_SEEDS {
        let seed = scenario.seed.wrapping_add(k);
        let (h_res, q_res) = identity_residuals(&scenario.initial, &grid, c, seed)?;
        worst_h = worst_h.max(h_res);
        worst_q = worst_q.max(q_res);
        rows.push(vec![seed.to_string(), num(h_res), num(q_res)]);
    }
    write_csv_rows(&out.join("identities.csv"), "seed,h_residual,q_residual", &rows)?;
    manifest.add_int("seeds", IDENTITY_SEEDS as i64);
    manifest.add_num("worst_h_residual", worst_h);
    manifest.add_num("worst_q_residual", worst_q);
    manifest.add_num("tolerance", IDENTITY_TOL);
    println!(
        "identity-check: {IDENTITY_SEEDS} draws, worst residuals {worst_h:.3e} (pressure gradient) and {worst_q:.3e} (Q), tolerance {IDENTITY_TOL:.1e}"
    );
    Ok(if worst_h <= IDENTITY_TOL && worst_q <= IDENTITY_TOL {
        EXIT_OK
    } else {
        EXIT_THRESHOLD
    })
}

fn run_linear_oracle(
    scenario: &Scenario,
    c: &DerivedConstants,
    out: &Path,
    manifest: &mut Manifest,
) -> Result<u8> {
    let base = solver_section(scenario)?;
    if base.chart != Chart::GlobalModified {
        return Err(Error::InvalidConfig(
            "linear-oracle runs in the global-modified chart".into(),
        ));
    }
    if base.ell != driftflux::solver::FriedrichsRadius::Full {
        return Err(Error::InvalidConfig(
            "linear-oracle compares against the untruncated closed form; set ell = \"full\"".into(),
        ));
    }
    let initial = make_initial_data(
        &scenario.initial,
        &scenario.grid,
        Chart::GlobalModified,
        c,
        scenario.seed,
    )?;
    let exact = linear_exact_evolve(&initial, base.t_end, c)?;
    let exact_scale = state_l2(&exact).max(f64::MIN_POSITIVE);

    let mut rows = Vec::new();
    let mut points = Vec::new();
    for k in 0..4 {
        let mut cfg = base.clone();
        cfg.dt = base.dt / f64::powi(2.0, k);
        cfg.linear_only = true;
        cfg.freeze_velocity = false;
        cfg.snapshot_stride = usize::MAX;
        let run = run_simulation(&initial, &cfg, c)?;
        if let Some(f) = &run.fault {
            println!("linear-oracle: fault at dt = {:.4e}: {f}", cfg.dt);
            manifest.fault(f);
            return Ok(EXIT_FAULT);
        }
        let err_l2 = state_diff_l2(&run.final_state, &exact) / exact_scale;
        let err_mode = state_hat_max_diff(&run.final_state, &exact);
        println!(
            "  dt = {:.6e}: relative l2 error {err_l2:.6e}, max mode error {err_mode:.6e}",
            cfg.dt
        );
        rows.push(vec![num(cfg.dt), num(err_l2), num(err_mode)]);
        points.push((cfg.dt, err_l2));
    }
    let slope = fit_slope(&points);
    write_csv_rows(&out.join("ladder.csv"), "dt,rel_l2_error,max_mode_error", &rows)?;
    manifest.add_num("fitted_order", slope);
    manifest.add_num("order_window_low", ORDER_WINDOW.0);
    manifest.add_num("order_window_high", ORDER_WINDOW.1);
    println!(
        "linear-oracle: fitted order {slope:.3} over a {}-rung dt ladder",
        rows.len()
    );
    Ok(if (ORDER_WINDOW.0..=ORDER_WINDOW.1).contains(&slope) {
        EXIT_OK
    } else {
        EXIT_THRESHOLD
    })
}

fn run_evolution(
    scenario: &Scenario,
    c: &DerivedConstants,
    out: &Path,
    manifest: &mut Manifest,
) -> Result<u8> {
    let cfg = solver_section(scenario)?;
    let chart = cfg.chart;
    let grid = scenario.grid;
    let initial = make_initial_data(&scenario.initial, &grid, chart, c, scenario.seed)?;
    snapshot::write_state(&out.join("initial.dfsf"), &initial)?;

    let sm = smallness_report(&initial, c, ASSUMED_C, ASSUMED_A)?;
    write_smallness(&out.join("smallness.csv"), &sm)?;
    manifest.add_num("data_size", sm.data_size);
    manifest.add_num("assumed_c", ASSUMED_C);
    manifest.add_num("assumed_a", ASSUMED_A);
    manifest.add_bool(
        "smallness_satisfied",
        sm.conditions.iter().all(|cond| cond.satisfied),
    );
    for cond in &sm.conditions {
        println!(
            "  condition {}: lhs {:.4e} vs rhs {:.4e} ({})",
            cond.name,
            cond.lhs,
            cond.rhs,
            if cond.satisfied { "holds" } else { "violated" }
        );
    }

    let run = run_simulation(&initial, &cfg, c)?;
    let diag = DiagnosticsConfig::standard(chart, grid.dim());
    write_csv(&out.join("diagnostics.csv"), &run.records, &diag, chart, &grid)?;
    snapshot::write_state(&out.join("final.dfsf"), &run.final_state)?;
    manifest.add_int("steps", run.steps as i64);
    if let Some(t) = run.times.last() {
        manifest.add_num("t_last_record", *t);
    }
    if cfg.outer_projection_debug {
        manifest.add_num("max_projection_defect", run.max_projection_defect);
    }

    let monitor = continuation_monitor(&run.records, &scenario.monitor);
    let monitor_line = match &monitor {
        MonitorStatus::Ok => "ok".to_string(),
        MonitorStatus::CriterionViolated {
            quantity,
            t,
            value,
            budget,
        } => {
            let line = format!(
                "CRITERION_VIOLATED {quantity} at t = {t:.6e}: value {value:.6e} vs budget {budget:.6e}"
            );
            println!("{line}");
            line
        }
    };
    manifest.add_str("monitor", &monitor_line);

    if run.times.len() >= 2 {
        match chart {
            Chart::GlobalModified => {
                let h = grid.dim() as f64 / 2.0;
                let e = e_norm(&run.history, h)?;
                manifest.add_num("e_norm", e);
                println!("  time-integrated solution norm: {e:.6e}");
                let tr = check_transport_estimate(
                    run.history.scalar2(),
                    run.history.velocity(),
                    BesovSpec::uniform(h),
                    grid.dim(),
                )?;
                println!(
                    "  {}: lhs {:.6e}, implied constant {:.6e}",
                    tr.name, tr.lhs, tr.implied_constant
                );
                manifest.add_num("transport_implied_constant", tr.implied_constant);
                write_estimates(&out.join("estimates.csv"), &[tr])?;
            }
            Chart::LocalModified | Chart::Physical => {
                let fv = f_norm(&run.history, diag.alpha)?;
                manifest.add_num("f_norm", fv);
                println!("  time-integrated solution norm: {fv:.6e}");
            }
        }
    }

    if let Some(f) = &run.fault {
        println!("solver fault: {f}");
        manifest.fault(f);
        return Ok(EXIT_FAULT);
    }
    println!(
        "{}: completed {} steps to t = {:?}",
        scenario.name.as_str(),
        run.steps,
        run.times.last().copied().unwrap_or(0.0)
    );
    Ok(EXIT_OK)
}

fn run_theta(
    scenario: &Scenario,
    _c: &DerivedConstants,
    out: &Path,
    manifest: &mut Manifest,
) -> Result<u8> {
    let (theta, beta) = scenario.transport.ok_or_else(|| {
        Error::InvalidConfig("theta-transport needs a [transport] section".into())
    })?;
    if !(beta >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "transport beta must be >= 0, got {beta}"
        )));
    }
    let cfg = solver_section(scenario)?;
    let recipe = match &scenario.initial {
        InitialData::RandomBands(r) => r.clone(),
        _ => {
            return Err(Error::InvalidConfig(
                "theta-transport needs random-bands initial data".into(),
            ))
        }
    };
    let grid = scenario.grid;
    let h = grid.dim() as f64 / 2.0;
    let h0 = seeded_band_scalar(
        &grid,
        scenario.seed,
        (recipe.band_lo, recipe.band_hi),
        BesovSpec::uniform(h),
        recipe.scalar1_norm,
    )?;
    let v = seeded_band_velocity(
        &grid,
        scenario.seed.wrapping_add(1),
        (recipe.band_lo, recipe.band_hi),
        BesovSpec::uniform(h + 1.0),
        recipe.velocity_norm,
    )?;
    let run = run_theta_transport(&h0, &v, theta, beta, &cfg)?;

    let spec = BesovSpec::uniform(h);
    let rows: Vec<Vec<String>> = run
        .times
        .iter()
        .enumerate()
        .map(|(i, &t)| vec![num(t), num(run.h_history.besov_at(i, spec))])
        .collect();
    write_csv_rows(&out.join("transport_norms.csv"), "t,h_norm", &rows)?;
    snapshot::write_scalar(&out.join("final_h.dfsf"), &run.final_h)?;
    manifest.add_int("steps", run.steps as i64);
    manifest.add_num("theta", theta);
    manifest.add_num("beta", beta);

    if run.times.len() >= 2 && run.fault.is_none() {
        let reports =
            check_theta_transport_bound(&run.h_history, &run.v_history, theta, beta, grid.dim(), Some(h + 0.5))?;
        for r in &reports {
            println!(
                "  {}: lhs {:.6e}, implied constant {:.6e}",
                r.name, r.lhs, r.implied_constant
            );
            manifest.add_num(&format!("implied_constant_{}", r.name), r.implied_constant);
        }
        write_estimates(&out.join("estimates.csv"), &reports)?;
    }

    if let Some(f) = &run.fault {
        println!("solver fault: {f}");
        manifest.fault(f);
        return Ok(EXIT_FAULT);
    }
    println!(
        "theta-transport: completed {} steps, final norm {:.6e}",
        run.steps,
        run.h_history
            .besov_at(run.times.len().saturating_sub(1), spec)
    );
    Ok(EXIT_OK)
}

fn run_conservation(
    scenario: &Scenario,
    c: &DerivedConstants,
    out: &Path,
    manifest: &mut Manifest,
) -> Result<u8> {
    let cfg = solver_section(scenario)?;
    if cfg.chart != Chart::GlobalModified {
        return Err(Error::InvalidConfig(
            "the conservation scenario tracks the global-chart invariants; set chart = \"global_modified\"".into(),
        ));
    }
    let grid = scenario.grid;
    let initial = make_initial_data(&scenario.initial, &grid, cfg.chart, c, scenario.seed)?;
    let run = run_simulation(&initial, &cfg, c)?;
    let diag = DiagnosticsConfig::standard(cfg.chart, grid.dim());
    write_csv(&out.join("diagnostics.csv"), &run.records, &diag, cfg.chart, &grid)?;
    manifest.add_int("steps", run.steps as i64);

    if run.records.is_empty() {
        if let Some(f) = &run.fault {
            println!("solver fault: {f}");
            manifest.fault(f);
            return Ok(EXIT_FAULT);
        }
        return Err(Error::InvalidConfig(
            "conservation run produced no records".into(),
        ));
    }

    let dim = grid.dim();
    let r0 = &run.records[0];
    let nonzero = |v: f64| if v == 0.0 { 1.0 } else { v };
    let mass_l_scale = nonzero(r0.mass_liquid.abs());
    let mass_g_scale = nonzero(r0.mass_gas.abs());
    let rms_u0 = initial.velocity().l2_norm() / grid.volume().sqrt();
    let mom_scale: Vec<f64> = (0..dim)
        .map(|i| nonzero(r0.momentum[i].abs().max(r0.mass_liquid.abs() * rms_u0)))
        .collect();

    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for r in &run.records {
        let dl = (r.mass_liquid - r0.mass_liquid) / mass_l_scale;
        let dg = (r.mass_gas - r0.mass_gas) / mass_g_scale;
        let mut row = vec![num(r.t), num(dl), num(dg)];
        worst = worst.max(dl.abs()).max(dg.abs());
        for i in 0..dim {
            let dm = (r.momentum[i] - r0.momentum[i]) / mom_scale[i];
            worst = worst.max(dm.abs());
            row.push(num(dm));
        }
        rows.push(row);
    }
    let mut header = "t,mass_liquid_drift,mass_gas_drift".to_string();
    for i in 0..dim {
        header.push_str(&format!(",momentum_drift_{i}"));
    }
    write_csv_rows(&out.join("conservation.csv"), &header, &rows)?;
    manifest.add_num("max_relative_drift", worst);
    manifest.add_num("tolerance", CONSERVATION_TOL);

    if let Some(f) = &run.fault {
        println!("solver fault: {f}");
        manifest.fault(f);
        return Ok(EXIT_FAULT);
    }
    println!(
        "conservation: max relative drift {worst:.3e} over {} records (tolerance {CONSERVATION_TOL:.1e})",
        run.records.len()
    );
    Ok(if worst <= CONSERVATION_TOL {
        EXIT_OK
    } else {
        EXIT_THRESHOLD
    })
}

/// An exactly constructed pair of conjugate spectral lines: cos(q . x).
fn single_mode(grid: &Grid, freq: &[i64]) -> ScalarField {
    let n = grid.n_modes() as i64;
    let mut coords = [0usize; 3];
    for (i, &f) in freq.iter().enumerate() {
        coords[i] = f.rem_euclid(n) as usize;
    }
    let idx = grid.encode(&coords);
    let mut hat = vec![Complex64::new(0.0, 0.0); grid.len()];
    hat[idx] = Complex64::new(0.5, 0.0);
    let conj = grid.conjugate_index(idx);
    hat[conj] += Complex64::new(0.5, 0.0);
    ScalarField::from_spectral(*grid, hat).expect("conjugate-symmetric by construction")
}

fn push_check(rows: &mut Vec<Vec<String>>, name: &str, worst: f64, tol: f64) -> bool {
    let ok = worst <= tol;
    println!(
        "  {name}: worst {worst:.3e} vs tolerance {tol:.1e} {}",
        if ok { "ok" } else { "FAILED" }
    );
    rows.push(vec![
        name.to_string(),
        num(worst),
        num(tol),
        (if ok { "1" } else { "0" }).to_string(),
    ]);
    ok
}

fn run_besov_suite(scenario: &Scenario, out: &Path, manifest: &mut Manifest) -> Result<u8> {
    let grid = scenario.grid;
    let (k_min, k_max) = block_range(&grid);
    let band_hi = grid.dealias_limit() as f64;
    let fields: Vec<ScalarField> = (0..8)
        .map(|i| {
            seeded_band_scalar(
                &grid,
                scenario.seed.wrapping_add(i),
                (1.0, band_hi),
                BesovSpec::uniform(0.0),
                1.0,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut all_ok = true;

    // Blocks plus the mean reconstruct the field.
    let mut worst = 0.0f64;
    for f in &fields {
        let mut sum = ScalarField::constant(grid, f.mean());
        for k in k_min..=k_max {
            sum.axpy(1.0, &lp_block(f, k));
        }
        worst = worst.max(sum.sub(f).l2_norm() / f.l2_norm());
    }
    all_ok &= push_check(&mut rows, "block-partition-residual", worst, 1e-12);

    // A single spectral line lands only in the dyadic blocks whose annulus
    // contains it, with the exact cutoff weight.
    let mut worst_formula = 0.0f64;
    let mut worst_locality = 0.0f64;
    let spec = BesovSpec::hybrid(-0.5, 1.5);
    for freq in [[1i64, 0, 0], [3, 0, 0], [0, 7, 0], [3, 4, 0]] {
        let f = single_mode(&grid, &freq[..grid.dim()]);
        let mag = ((freq.iter().map(|&q| q * q).sum::<i64>()) as f64).sqrt() * grid.freq_unit();
        let l2 = f.l2_norm();
        let norms = block_l2_norms(&f);
        let mut expected = 0.0;
        for (k, v) in norms.iter() {
            let cutoff = phi_cutoff((-k as f64).exp2() * mag);
            expected += spec.weight(k) * cutoff * l2;
            if cutoff == 0.0 {
                worst_locality = worst_locality.max(v / l2);
            } else {
                worst_formula = worst_formula.max((v - cutoff * l2).abs() / l2);
            }
        }
        let measured = hybrid_besov_norm(&f, spec);
        worst_formula = worst_formula.max((measured - expected).abs() / expected);
    }
    all_ok &= push_check(&mut rows, "single-mode-weighted-norm", worst_formula, 1e-12);
    all_ok &= push_check(&mut rows, "single-mode-block-locality", worst_locality, 1e-13);

    // Raising either exponent never increases the norm of the weaker space.
    let pairs = [
        (BesovSpec::hybrid(-1.0, 1.5), BesovSpec::hybrid(-0.5, 1.0)),
        (BesovSpec::hybrid(0.0, 1.0), BesovSpec::uniform(0.0)),
        (BesovSpec::uniform(1.0), BesovSpec::hybrid(1.0, 0.0)),
    ];
    let mut worst_embed = 0.0f64;
    for (strong, weak) in pairs {
        for k in k_min..=k_max {
            debug_assert!(strong.weight(k) >= weak.weight(k));
        }
        for f in &fields {
            let s = hybrid_besov_norm(f, strong);
            let w = hybrid_besov_norm(f, weak);
            worst_embed = worst_embed.max(w - s);
        }
    }
    all_ok &= push_check(&mut rows, "embedding-monotonicity", worst_embed.max(0.0), 0.0);

    // Sharp annulus truncation is a projection and self-adjoint.
    let mut worst_idem = 0.0f64;
    let mut worst_adj = 0.0f64;
    for (i, f) in fields.iter().enumerate() {
        let g = &fields[(i + 1) % fields.len()];
        for ell in [2u32, 5, 16] {
            let pf = friedrichs_project(f, ell, true);
            let ppf = friedrichs_project(&pf, ell, true);
            let mut d = 0.0f64;
            for (a, b) in pf.hat().iter().zip(ppf.hat()) {
                d = d.max((a - b).norm());
            }
            worst_idem = worst_idem.max(d / f.l2_norm());
            let pg = friedrichs_project(g, ell, true);
            worst_adj = worst_adj
                .max((pf.inner(g) - f.inner(&pg)).abs() / (f.l2_norm() * g.l2_norm()));
        }
    }
    all_ok &= push_check(&mut rows, "truncation-idempotence", worst_idem, 1e-15);
    all_ok &= push_check(&mut rows, "truncation-self-adjointness", worst_adj, 1e-13);

    // Squared time-L2 norm at the mean exponent interpolates the sup and
    // integral norms at the end exponents. Blocks decay at different rates
    // so the inequality is strict.
    let mut worst_interp = 0.0f64;
    for (i, f) in fields.iter().take(4).enumerate() {
        let g = &fields[(i + 3) % fields.len()];
        let mut series = BlockSeries::new(&grid);
        for j in 0..=32 {
            let t = j as f64 / 16.0;
            let h = f.scaled((-t).exp()).add(&g.scaled((-3.0 * t).exp()));
            series.push(t, &block_l2_norms(&h))?;
        }
        let (s1, s2) = (0.0, 1.0);
        let lhs = series.chemin_lerner(TimeLp::Two, BesovSpec::uniform(0.5 * (s1 + s2)))?;
        let rhs = (series.chemin_lerner(TimeLp::Inf, BesovSpec::uniform(s1))?
            * series.chemin_lerner(TimeLp::One, BesovSpec::uniform(s2))?)
        .sqrt();
        worst_interp = worst_interp.max((lhs - rhs) / rhs);
    }
    all_ok &= push_check(&mut rows, "time-interpolation", worst_interp.max(0.0), 1e-6);

    write_csv_rows(&out.join("besov_suite.csv"), "check,worst,tolerance,pass", &rows)?;
    manifest.add_bool("all_checks_passed", all_ok);
    println!(
        "besov-suite: {}",
        if all_ok {
            "all checks passed"
        } else {
            "CHECK FAILURES"
        }
    );
    Ok(if all_ok { EXIT_OK } else { EXIT_THRESHOLD })
}
