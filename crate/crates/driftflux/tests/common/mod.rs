#![allow(dead_code)]

use driftflux::field::{ScalarField, VectorField};
use driftflux::grid::Grid;
use driftflux::model::PhysParams;

/// Parameters with C0 = k0 = a0 = 1, n_bar = 0, m_bar = 2 k0, giving the
/// hand-checked chart coefficients a = 1, b = 4.
pub fn params_reference() -> PhysParams {
    PhysParams {
        mu_tilde: 1.0,
        lambda_tilde: 0.5,
        a_l: 2.0f64.sqrt(),
        a_g: 2.0f64.sqrt(),
        p_l0: 0.0,
        rho_l0: 1.0,
        m_bar: 2.0,
        n_bar: 0.0,
        dim: 2,
    }
}

/// Same base constants with a nonzero equilibrium gas mass.
pub fn params_gas() -> PhysParams {
    PhysParams {
        n_bar: 0.7,
        ..params_reference()
    }
}

/// A sweep of admissible parameter sets exercising unequal sonic speeds,
/// nonzero reference pressure, and both signs of lambda_tilde.
pub fn params_sweep() -> Vec<PhysParams> {
    let mut out = Vec::new();
    let sonic = [(2.0f64.sqrt(), 2.0f64.sqrt()), (1.0, 2.0), (3.0, 1.5)];
    let visc = [(1.0, 0.5), (0.8, -0.3)];
    let equilibria = [(2.0, 0.0), (1.5, 0.4), (3.0, 1.2)];
    for &(a_l, a_g) in &sonic {
        for &(mu_tilde, lambda_tilde) in &visc {
            for &(m_bar, n_bar) in &equilibria {
                let p = PhysParams {
                    mu_tilde,
                    lambda_tilde,
                    a_l,
                    a_g,
                    p_l0: 0.3,
                    rho_l0: 1.0 + 0.3 / (a_l * a_l),
                    m_bar,
                    n_bar,
                    dim: 2,
                };
                if p.validate().is_ok() && p.validate_global_chart().is_ok() {
                    out.push(p);
                }
            }
        }
    }
    out
}

/// Smooth band-limited scalar field with O(1) sup norm, deterministic in
/// the `variant` tag.
pub fn smooth_scalar(grid: Grid, variant: u32) -> ScalarField {
    let v = variant as f64;
    ScalarField::from_fn(grid, move |x| {
        let (p, q) = (x[0], x[1]);
        let r = if x.len() > 2 { x[2] } else { 0.0 };
        0.55 * (p + 0.3 * v).sin() * (2.0 * q).cos()
            + 0.35 * (2.0 * p - q + 0.7 * v).cos()
            + 0.25 * (q + r + 0.11 * v).sin()
    })
}

/// Smooth band-limited velocity field with O(1) sup speed.
pub fn smooth_velocity(grid: Grid, variant: u32) -> VectorField {
    let comps = (0..grid.dim())
        .map(|axis| smooth_scalar(grid, variant + 17 * (axis as u32 + 1)))
        .collect();
    VectorField::from_components(comps).unwrap()
}

/// Pointwise quotient a/b with dealiased return, for oracle pipelines.
pub fn div_pointwise(a: &ScalarField, b: &ScalarField) -> ScalarField {
    let ap = a.to_physical();
    let bp = b.to_physical();
    let q: Vec<f64> = ap.iter().zip(bp.iter()).map(|(&x, &y)| x / y).collect();
    let mut f = ScalarField::from_physical(*a.grid(), &q).unwrap();
    f.dealias();
    f
}

/// Pointwise product with dealiased return.
pub fn mul_pointwise(a: &ScalarField, b: &ScalarField) -> ScalarField {
    a.mul_dealiased(b)
}

/// Relative L2 distance of two vector fields, measured against the first.
pub fn rel_l2_vec(reference: &VectorField, other: &VectorField) -> f64 {
    reference.sub(other).l2_norm() / reference.l2_norm()
}
