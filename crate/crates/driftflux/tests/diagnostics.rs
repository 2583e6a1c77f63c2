mod common;

use common::{params_gas, params_reference};
use driftflux::diagnostics::{
    check_theta_transport_bound, check_transport_estimate, e_norm, f_norm, NormHistory,
};
use driftflux::field::ScalarField;
use driftflux::grid::Grid;
use driftflux::lp::{BesovSpec, TimeLp};
use driftflux::model::{derive_constants, from_modified, Chart, DerivedConstants, State};
use driftflux::scenario::{make_initial_data, seeded_band_scalar, BandRecipe, InitialData};
use driftflux::solver::{run_simulation, run_theta_transport, SolverConfig};

fn constants() -> DerivedConstants {
    derive_constants(&params_reference()).unwrap()
}

fn band_recipe(chart: Chart) -> InitialData {
    let norms = match chart {
        Chart::LocalModified => (0.1, 0.05, 0.1),
        _ => (0.01, 0.005, 0.01),
    };
    InitialData::RandomBands(BandRecipe {
        band_lo: 1.0,
        band_hi: 6.0,
        scalar1_norm: norms.0,
        scalar2_norm: norms.1,
        velocity_norm: norms.2,
    })
}

fn chart_constants(chart: Chart) -> DerivedConstants {
    match chart {
        Chart::LocalModified => derive_constants(&params_gas()).unwrap(),
        _ => constants(),
    }
}

/// Five admissible states at increasing times, deterministic in the seed.
fn sample_states(grid: &Grid, chart: Chart, seed: u64) -> Vec<(f64, State)> {
    let c = chart_constants(chart);
    let recipe = band_recipe(chart);
    (0..5)
        .map(|i| {
            let s = make_initial_data(&recipe, grid, chart, &c, seed + i).unwrap();
            (0.05 * i as f64, s)
        })
        .collect()
}

fn history_of(grid: &Grid, chart: Chart, states: &[(f64, State)]) -> NormHistory {
    let mut h = NormHistory::new(chart, grid);
    for (t, s) in states {
        h.push(*t, s).unwrap();
    }
    h
}

#[test]
fn time_integrated_norms_are_homogeneous_in_the_data() {
    let grid = Grid::standard(2, 32).unwrap();
    let lambda = 3.0;

    let states = sample_states(&grid, Chart::GlobalModified, 300);
    let scaled: Vec<(f64, State)> = states
        .iter()
        .map(|(t, s)| {
            let mut sc = s.clone();
            sc.scale(lambda);
            (*t, sc)
        })
        .collect();
    let base = e_norm(&history_of(&grid, Chart::GlobalModified, &states), 1.0).unwrap();
    let big = e_norm(&history_of(&grid, Chart::GlobalModified, &scaled), 1.0).unwrap();
    assert!(base > 0.0);
    let rel = (big - lambda * base).abs() / (lambda * base);
    assert!(rel <= 1e-12, "e-norm homogeneity defect {rel:.3e}");

    let states = sample_states(&grid, Chart::LocalModified, 400);
    let scaled: Vec<(f64, State)> = states
        .iter()
        .map(|(t, s)| {
            let mut sc = s.clone();
            sc.scale(lambda);
            (*t, sc)
        })
        .collect();
    let base = f_norm(&history_of(&grid, Chart::LocalModified, &states), 0.5).unwrap();
    let big = f_norm(&history_of(&grid, Chart::LocalModified, &scaled), 0.5).unwrap();
    assert!(base > 0.0);
    let rel = (big - lambda * base).abs() / (lambda * base);
    assert!(rel <= 1e-12, "f-norm homogeneity defect {rel:.3e}");
}

#[test]
fn time_integrated_norms_satisfy_the_triangle_inequality() {
    let grid = Grid::standard(2, 32).unwrap();
    let a = sample_states(&grid, Chart::GlobalModified, 500);
    let b = sample_states(&grid, Chart::GlobalModified, 600);
    let sums: Vec<(f64, State)> = a
        .iter()
        .zip(b.iter())
        .map(|((t, sa), (_, sb))| {
            let mut s = sa.clone();
            s.axpy(1.0, sb);
            (*t, s)
        })
        .collect();
    for s in [0.5, 1.0, 1.5] {
        let na = e_norm(&history_of(&grid, Chart::GlobalModified, &a), s).unwrap();
        let nb = e_norm(&history_of(&grid, Chart::GlobalModified, &b), s).unwrap();
        let nab = e_norm(&history_of(&grid, Chart::GlobalModified, &sums), s).unwrap();
        assert!(
            nab <= na + nb + 1e-10,
            "triangle inequality failed at s = {s}: {nab:.6e} > {na:.6e} + {nb:.6e}"
        );
    }
}

#[test]
fn rigid_translation_reports_zero_transport_growth() {
    let grid = Grid::standard(2, 32).unwrap();
    let h0 = seeded_band_scalar(&grid, 9, (1.0, 6.0), BesovSpec::uniform(1.0), 0.5).unwrap();
    let mut v = driftflux::field::VectorField::zeros(grid);
    for (i, speed) in [0.7, -0.4].iter().enumerate() {
        *v.component_mut(i) = ScalarField::constant(grid, *speed);
    }
    let mut cfg = SolverConfig::new(Chart::GlobalModified, 1e-3, 0.5);
    cfg.snapshot_stride = 10;
    let out = run_theta_transport(&h0, &v, 0.0, 0.0, &cfg).unwrap();
    assert!(out.fault.is_none());

    // A constant advecting field translates the scalar rigidly; every
    // spectral norm is invariant, so the fitted growth constant vanishes
    // even though the velocity budget does not.
    let report = check_transport_estimate(
        &out.h_history,
        &out.v_history,
        BesovSpec::uniform(1.0),
        grid.dim(),
    )
    .unwrap();
    assert!(
        report.implied_constant <= 1e-8,
        "rigid translation fitted growth constant {:.3e}",
        report.implied_constant
    );
}

#[test]
fn theta_transport_bound_produces_finite_constants_on_generic_data() {
    let grid = Grid::standard(2, 32).unwrap();
    let h0 = seeded_band_scalar(&grid, 21, (1.0, 6.0), BesovSpec::uniform(1.0), 0.5).unwrap();
    let v =
        driftflux::scenario::seeded_band_velocity(&grid, 22, (1.0, 6.0), BesovSpec::uniform(2.0), 0.5)
            .unwrap();
    let mut cfg = SolverConfig::new(Chart::GlobalModified, 1e-3, 0.5);
    cfg.snapshot_stride = 10;
    let out = run_theta_transport(&h0, &v, 1.0, 1.0, &cfg).unwrap();
    assert!(out.fault.is_none());
    let reports =
        check_theta_transport_bound(&out.h_history, &out.v_history, 1.0, 1.0, grid.dim(), Some(1.5))
            .unwrap();
    assert_eq!(reports.len(), 2);
    for r in &reports {
        assert!(r.implied_constant.is_finite() && r.implied_constant >= 0.0);
        assert!(r.lhs.is_finite() && r.lhs > 0.0);
    }
}

#[test]
fn interpolation_between_time_norms_holds_on_a_real_trajectory() {
    let grid = Grid::standard(2, 32).unwrap();
    let c = constants();
    let initial =
        make_initial_data(&band_recipe(Chart::GlobalModified), &grid, Chart::GlobalModified, &c, 77)
            .unwrap();
    let mut cfg = SolverConfig::new(Chart::GlobalModified, 1e-3, 0.1);
    cfg.snapshot_stride = 2;
    let out = run_simulation(&initial, &cfg, &c).unwrap();
    assert!(out.fault.is_none());

    // Per block the squared time-L2 norm is bounded by the sup times the
    // time-L1 norm with the same quadrature weights, and the block sum at
    // the mean exponent follows by Cauchy-Schwarz, so the inequality holds
    // to rounding on any sampled history.
    for series in [out.history.scalar1(), out.history.velocity()] {
        for (lo, hi) in [(0.0, 2.0), (1.0, 2.0), (-0.5, 1.5)] {
            let mid = BesovSpec::uniform(0.5 * (lo + hi));
            let lhs = series.chemin_lerner(TimeLp::Two, mid).unwrap();
            let sup = series.chemin_lerner(TimeLp::Inf, BesovSpec::uniform(lo)).unwrap();
            let int = series.chemin_lerner(TimeLp::One, BesovSpec::uniform(hi)).unwrap();
            let rhs = (sup * int).sqrt();
            assert!(
                lhs <= rhs * (1.0 + 1e-12),
                "interpolation failed between exponents {lo} and {hi}: {lhs:.6e} > {rhs:.6e}"
            );
        }
    }
}

#[test]
fn recorded_conservation_integrals_match_direct_quadrature() {
    let grid = Grid::standard(2, 32).unwrap();
    let c = constants();
    let initial =
        make_initial_data(&band_recipe(Chart::GlobalModified), &grid, Chart::GlobalModified, &c, 88)
            .unwrap();
    let mut cfg = SolverConfig::new(Chart::GlobalModified, 1e-3, 0.05);
    cfg.snapshot_stride = 10;
    let out = run_simulation(&initial, &cfg, &c).unwrap();
    assert!(out.fault.is_none());

    // The first record is the initial state; recompute its integrals from
    // the physical-chart fields directly.
    let phys = from_modified(&initial, &c).unwrap();
    let m_tilde = phys.scalar1();
    let n_tilde = phys.scalar2();
    let r0 = &out.records[0];
    assert!((r0.mass_liquid - m_tilde.integral()).abs() <= 1e-12 * m_tilde.integral().abs());
    assert!((r0.mass_gas - n_tilde.integral()).abs() <= 1e-12 * n_tilde.integral().abs().max(1.0));
    for i in 0..grid.dim() {
        let mu = m_tilde.mul_dealiased(phys.velocity().component(i));
        assert!((r0.momentum[i] - mu.integral()).abs() <= 1e-12);
    }
}
