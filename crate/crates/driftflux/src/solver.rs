//! Time integration for the projected systems.
//!
//! Three layers live here. `linear_mode_solution` and friends evaluate the
//! exact solution operator of the linearized global system one lattice
//! frequency at a time, giving an oracle independent of the time stepper.
//! `rhs_global`, `rhs_local` and `rhs_theta_transport` assemble the spectral
//! right-hand sides of the projected nonlinear systems. `run_simulation`
//! drives a classical fourth-order Runge-Kutta step with fault guards and
//! per-snapshot diagnostics.

use num_complex::Complex64;

use crate::diagnostics::{DiagnosticsConfig, DiagnosticsRecord, NormHistory, RecordBuilder};
use crate::error::{Error, Fault};
use crate::field::{
    advect_scalar, advect_scalar_opt, advect_vector_opt, grad_div, gradient, ScalarField,
    VectorField,
};
use crate::lp::{
    block_l2_norms, block_l2_norms_vector, friedrichs_project, friedrichs_project_vector,
    BlockSeries,
};
use crate::model::{self, Chart, DerivedConstants, State, VACUUM_GUARD};
use crate::Result;

/// Spectral support of the approximate system being integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FriedrichsRadius {
    /// No truncation beyond the grid itself.
    Full,
    /// Restrict to the annulus 1/ell <= |xi| <= ell.
    Radius(u32),
}

/// Configuration of one simulation run.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Chart of the system to integrate.
    pub chart: Chart,
    /// Nominal time step; the final step shrinks to land on `t_end`.
    pub dt: f64,
    /// Final time.
    pub t_end: f64,
    /// Spectral truncation radius of the approximate system.
    pub ell: FriedrichsRadius,
    /// Whether the truncation keeps the zero mode. Dropping it breaks the
    /// mass bookkeeping, so this stays on unless an experiment demands
    /// the strict annulus.
    pub keep_mean: bool,
    /// Safety factor for the advective step-size bound.
    pub cfl_advective: f64,
    /// Safety factor for the viscous step-size bound.
    pub cfl_viscous: f64,
    /// Dealias quadratic products assembled by the solver. Off is only
    /// useful for aliasing experiments.
    pub dealias: bool,
    /// Record diagnostics every this many accepted steps.
    pub snapshot_stride: usize,
    /// Hold the velocity fixed and integrate the scalar equations only.
    pub freeze_velocity: bool,
    /// Drop every nonlinear term, leaving exactly the system solved by the
    /// per-mode oracle. Valid only in the global chart.
    pub linear_only: bool,
    /// On each step, also evaluate the right-hand side with explicit outer
    /// projection and track the largest coefficient difference against the
    /// reduced form.
    pub outer_projection_debug: bool,
}

impl SolverConfig {
    /// A configuration with conventional safety factors and no truncation.
    pub fn new(chart: Chart, dt: f64, t_end: f64) -> SolverConfig {
        SolverConfig {
            chart,
            dt,
            t_end,
            ell: FriedrichsRadius::Full,
            keep_mean: true,
            cfl_advective: 0.5,
            cfl_viscous: 0.4,
            dealias: true,
            snapshot_stride: 1,
            freeze_velocity: false,
            linear_only: false,
            outer_projection_debug: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig("dt must be positive and finite".into()));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidConfig(
                "t_end must be positive and finite".into(),
            ));
        }
        if self.chart == Chart::Physical {
            return Err(Error::InvalidConfig(
                "time integration runs in a modified chart; convert physical data first".into(),
            ));
        }
        if let FriedrichsRadius::Radius(l) = self.ell {
            if l == 0 {
                return Err(Error::InvalidConfig(
                    "truncation radius must be at least 1".into(),
                ));
            }
        }
        if !(self.cfl_advective > 0.0 && self.cfl_advective <= 1.0) {
            return Err(Error::InvalidConfig(
                "advective safety factor must lie in (0, 1]".into(),
            ));
        }
        if !(self.cfl_viscous > 0.0 && self.cfl_viscous <= 1.0) {
            return Err(Error::InvalidConfig(
                "viscous safety factor must lie in (0, 1]".into(),
            ));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidConfig(
                "snapshot stride must be at least 1".into(),
            ));
        }
        if self.linear_only && self.chart != Chart::GlobalModified {
            return Err(Error::InvalidConfig(
                "the linear test switch exists only in the global chart".into(),
            ));
        }
        Ok(())
    }

    fn project_scalar(&self, f: ScalarField) -> ScalarField {
        match self.ell {
            FriedrichsRadius::Full => f,
            FriedrichsRadius::Radius(l) => friedrichs_project(&f, l, self.keep_mean),
        }
    }

    fn project_vector(&self, u: VectorField) -> VectorField {
        match self.ell {
            FriedrichsRadius::Full => u,
            FriedrichsRadius::Radius(l) => friedrichs_project_vector(&u, l, self.keep_mean),
        }
    }

    fn project_state(&self, state: &mut State) {
        if let FriedrichsRadius::Radius(l) = self.ell {
            let s1 = friedrichs_project(state.scalar1(), l, self.keep_mean);
            *state.scalar1_mut() = s1;
            let s2 = friedrichs_project(state.scalar2(), l, self.keep_mean);
            *state.scalar2_mut() = s2;
            let u = friedrichs_project_vector(state.velocity(), l, self.keep_mean);
            *state.velocity_mut() = u;
        }
    }
}

/// Entries of the exact linear solution operator at one lattice frequency.
#[derive(Debug, Clone, Copy)]
pub struct LinearModeSolution {
    /// Row-major 2 by 2 matrix acting on (m_hat, longitudinal u_hat).
    pub longitudinal: [Complex64; 4],
    /// Decay factor multiplying every transverse velocity component.
    pub transverse: f64,
}

/// cosh(sqrt(z)) continued through z = 0 as cos(sqrt(-z)).
fn cosh_like(z: f64) -> f64 {
    if z >= 0.0 {
        z.sqrt().cosh()
    } else {
        (-z).sqrt().cos()
    }
}

/// sinh(sqrt(z))/sqrt(z) continued through z = 0 as sin(sqrt(-z))/sqrt(-z),
/// with a series branch near zero to avoid cancellation.
fn sinhc_like(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 + z / 6.0 + z * z / 120.0
    } else if z > 0.0 {
        let r = z.sqrt();
        r.sinh() / r
    } else {
        let r = (-z).sqrt();
        r.sin() / r
    }
}

/// The exact solution operator of the linearized global system at one
/// frequency, valid for every sign of the discriminant including the
/// degenerate double-eigenvalue case.
pub fn linear_mode_solution(xi: &[f64], t: f64, c: &DerivedConstants) -> LinearModeSolution {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let xi2: f64 = xi.iter().map(|x| x * x).sum();
    if xi2 == 0.0 {
        return LinearModeSolution {
            longitudinal: [one, zero, zero, one],
            transverse: 1.0,
        };
    }
    let xim = xi2.sqrt();
    let am = c.a * c.m_bar;
    let nu = 2.0 * c.mu + c.lambda;
    // The longitudinal generator splits as -h I plus a traceless part whose
    // square is the discriminant times the identity, so its exponential is
    // a decay factor times cosh/sinh of the discriminant's square root.
    let h = 0.5 * nu * xi2;
    let disc = h * h - am * c.c0 * xi2;
    let z = disc * t * t;
    let decay = (-h * t).exp();
    let ch = cosh_like(z);
    let sc = t * sinhc_like(z);
    let n12 = Complex64::new(0.0, -am * xim);
    let n21 = Complex64::new(0.0, -c.c0 * xim);
    LinearModeSolution {
        longitudinal: [
            Complex64::new(decay * (ch + sc * h), 0.0),
            n12 * (decay * sc),
            n21 * (decay * sc),
            Complex64::new(decay * (ch - sc * h), 0.0),
        ],
        transverse: (-c.mu * xi2 * t).exp(),
    }
}

/// Apply the exact linear solution operator to one frequency's coefficients.
/// Returns the evolved (m_hat, u_hat) pair.
pub fn solve_linear_exact(
    m_hat: Complex64,
    u_hat: &[Complex64],
    xi: &[f64],
    t: f64,
    c: &DerivedConstants,
) -> (Complex64, Vec<Complex64>) {
    let xi2: f64 = xi.iter().map(|x| x * x).sum();
    if xi2 == 0.0 {
        return (m_hat, u_hat.to_vec());
    }
    let sol = linear_mode_solution(xi, t, c);
    let xim = xi2.sqrt();
    let u_long: Complex64 =
        u_hat.iter().zip(xi).map(|(u, x)| u * *x).sum::<Complex64>() / xim;
    let m_t = sol.longitudinal[0] * m_hat + sol.longitudinal[1] * u_long;
    let ul_t = sol.longitudinal[2] * m_hat + sol.longitudinal[3] * u_long;
    let u_t = u_hat
        .iter()
        .zip(xi)
        .map(|(u, x)| {
            let e = *x / xim;
            (*u - u_long * e) * sol.transverse + ul_t * e
        })
        .collect();
    (m_t, u_t)
}

/// Evolve a global-chart state by the exact linear flow: n is frozen, m and
/// u follow the per-mode solution operator. Frequencies use the derivative
/// convention, so Nyquist-truncated components match the stepped system.
pub fn linear_exact_evolve(initial: &State, t: f64, c: &DerivedConstants) -> Result<State> {
    initial.expect_chart(Chart::GlobalModified)?;
    let grid = *initial.grid();
    let dim = grid.dim();
    let mut out = initial.clone();
    let mut u0 = vec![Complex64::new(0.0, 0.0); dim];
    for idx in 0..grid.len() {
        let xi3 = grid.xi_deriv(idx);
        let xi = &xi3[..dim];
        for (i, slot) in u0.iter_mut().enumerate() {
            *slot = initial.velocity().component(i).hat()[idx];
        }
        let (m_t, u_t) = solve_linear_exact(initial.scalar1().hat()[idx], &u0, xi, t, c);
        out.scalar1_mut().hat_mut()[idx] = m_t;
        for (i, v) in u_t.into_iter().enumerate() {
            out.velocity_mut().component_mut(i).hat_mut()[idx] = v;
        }
    }
    Ok(out)
}

fn mul_opt(a: &ScalarField, b: &ScalarField, dealias: bool) -> ScalarField {
    if dealias {
        a.mul_dealiased(b)
    } else {
        a.mul_physical(b)
    }
}

/// Right-hand side of the projected global system in its reduced form: the
/// linear terms act directly on the truncated state while every product is
/// dealiased and projected back onto the annulus.
pub fn rhs_global(state: &State, cfg: &SolverConfig, c: &DerivedConstants) -> Result<State> {
    state.expect_chart(Chart::GlobalModified)?;
    let grid = *state.grid();
    let m = state.scalar1();
    let n = state.scalar2();
    let u = state.velocity();
    let am = c.a * c.m_bar;

    if !cfg.linear_only {
        let radius = c.admissible_radius();
        for (f, name) in [(m, "m"), (n, "n")] {
            let sup = f.sup_norm();
            if sup > radius {
                return Err(Error::Solver(Fault::Admissibility {
                    t: f64::NAN,
                    field: name,
                    norm: sup,
                    bound: radius,
                }));
            }
        }
    }

    let div_u = u.divergence();
    let mut dn = ScalarField::zeros(grid);
    let mut dm = div_u.scaled(-am);

    if !cfg.linear_only {
        dn.axpy(
            -1.0,
            &cfg.project_scalar(advect_scalar_opt(u, n, cfg.dealias)),
        );
        dm.axpy(
            -1.0,
            &cfg.project_scalar(advect_scalar_opt(u, m, cfg.dealias)),
        );
        dm.axpy(1.0, &cfg.project_scalar(model::rhs_f(m, n, u, c)));
    }

    let du = if cfg.freeze_velocity {
        VectorField::zeros(grid)
    } else {
        let mut du = u.laplacian().scaled(c.mu);
        du.axpy(c.mu + c.lambda, &grad_div(u));
        du.axpy(-c.c0, &gradient(m));
        if !cfg.linear_only {
            du.axpy(
                -1.0,
                &cfg.project_vector(advect_vector_opt(u, u, cfg.dealias)),
            );
            du.axpy(1.0, &cfg.project_vector(model::rhs_g(m, n, u, c)?));
        }
        du
    };
    State::new(Chart::GlobalModified, dm, dn, du)
}

/// Right-hand side of the projected local system. The degenerate viscosity
/// coefficient (1 + rho) multiplies the constant-coefficient viscous
/// operator pointwise, and the pressure-type gradient enters through the
/// local kernel.
pub fn rhs_local(state: &State, cfg: &SolverConfig, c: &DerivedConstants) -> Result<State> {
    state.expect_chart(Chart::LocalModified)?;
    let grid = *state.grid();
    let rho = state.scalar1();
    let g = state.scalar2();
    let u = state.velocity();

    let (rho_min, idx) = rho.min_with_index();
    let denom = 1.0 + rho_min;
    if denom < VACUUM_GUARD {
        return Err(Error::Solver(Fault::Vacuum {
            t: f64::NAN,
            value: denom,
            location: grid.point(idx),
        }));
    }

    let div_u = u.divergence();
    let one_plus_rho = rho.add_constant(1.0);

    let mut drho = cfg.project_scalar(mul_opt(&one_plus_rho, &div_u, cfg.dealias));
    drho.axpy(
        -1.0,
        &cfg.project_scalar(advect_scalar_opt(u, rho, cfg.dealias)),
    );

    let mut dg = cfg.project_scalar(mul_opt(&g.add_constant(c.n_bar), &div_u, cfg.dealias))
        .scaled(-1.0);
    dg.axpy(
        -1.0,
        &cfg.project_scalar(advect_scalar_opt(u, g, cfg.dealias)),
    );

    let du = if cfg.freeze_velocity {
        VectorField::zeros(grid)
    } else {
        let mut visc = u.laplacian().scaled(c.mu);
        visc.axpy(c.mu + c.lambda, &grad_div(u));
        let weighted = VectorField::from_components(
            visc.components()
                .iter()
                .map(|comp| mul_opt(&one_plus_rho, comp, cfg.dealias))
                .collect(),
        )?;
        let mut du = cfg.project_vector(weighted);
        du.axpy(
            -1.0,
            &cfg.project_vector(advect_vector_opt(u, u, cfg.dealias)),
        );
        du.axpy(-1.0, &cfg.project_vector(model::local_q(rho, g, c)?));
        du
    };
    State::new(Chart::LocalModified, drho, dg, du)
}

/// Right-hand side of the model transport equation
/// `h_t + v.grad h = theta (h + beta) div v` for a frozen velocity `v`.
/// Both products are dealiased.
pub fn rhs_theta_transport(
    h: &ScalarField,
    v: &VectorField,
    theta: f64,
    beta: f64,
) -> ScalarField {
    let div_v = v.divergence();
    let mut out = h.add_constant(beta).mul_dealiased(&div_v);
    out.scale(theta);
    out.axpy(-1.0, &advect_scalar(v, h));
    out
}

/// Dispatch to the right-hand side matching the state's chart.
pub fn rhs(state: &State, cfg: &SolverConfig, c: &DerivedConstants) -> Result<State> {
    match state.chart() {
        Chart::GlobalModified => rhs_global(state, cfg, c),
        Chart::LocalModified => rhs_local(state, cfg, c),
        Chart::Physical => Err(Error::InvalidConfig(
            "time integration runs in a modified chart; convert physical data first".into(),
        )),
    }
}

trait RkVec: Clone {
    fn rk_axpy(&mut self, a: f64, other: &Self);
}

impl RkVec for State {
    fn rk_axpy(&mut self, a: f64, other: &Self) {
        self.axpy(a, other);
    }
}

impl RkVec for ScalarField {
    fn rk_axpy(&mut self, a: f64, other: &Self) {
        self.axpy(a, other);
    }
}

fn rk4<T: RkVec>(y: &T, dt: f64, mut f: impl FnMut(&T) -> Result<T>) -> Result<T> {
    let k1 = f(y)?;
    let mut y2 = y.clone();
    y2.rk_axpy(0.5 * dt, &k1);
    let k2 = f(&y2)?;
    let mut y3 = y.clone();
    y3.rk_axpy(0.5 * dt, &k2);
    let k3 = f(&y3)?;
    let mut y4 = y.clone();
    y4.rk_axpy(dt, &k3);
    let k4 = f(&y4)?;
    let mut out = y.clone();
    out.rk_axpy(dt / 6.0, &k1);
    out.rk_axpy(dt / 3.0, &k2);
    out.rk_axpy(dt / 3.0, &k3);
    out.rk_axpy(dt / 6.0, &k4);
    Ok(out)
}

fn nonfinite_field(state: &State) -> Option<&'static str> {
    let (s1, s2) = state.chart().scalar_names();
    if !state.scalar1().is_finite() {
        return Some(s1);
    }
    if !state.scalar2().is_finite() {
        return Some(s2);
    }
    if !state.velocity().is_finite() {
        return Some("u");
    }
    None
}

/// One classical fourth-order Runge-Kutta step. A nonfinite coefficient in
/// the result is reported as a blow-up fault; the caller stamps the time.
pub fn step_rk4(
    state: &State,
    dt: f64,
    rhs: impl FnMut(&State) -> Result<State>,
) -> Result<State> {
    let next = rk4(state, dt, rhs)?;
    if let Some(field) = nonfinite_field(&next) {
        return Err(Error::Solver(Fault::NonFinite {
            t: f64::NAN,
            field,
        }));
    }
    Ok(next)
}

/// Largest stable step size for the current state: the advective bound
/// scales with the grid spacing over the top speed, the viscous bound with
/// the spacing squared over the effective viscosity. In the local chart the
/// viscosity is weighted by the largest value of 1 + rho. A frozen velocity
/// removes the viscous operator from the stepped system, so only the
/// advective bound remains.
pub fn cfl_bound(state: &State, cfg: &SolverConfig, c: &DerivedConstants) -> f64 {
    let dx = state.grid().spacing();
    let speed = state.velocity().sup_speed();
    let advective = if speed > 0.0 {
        cfg.cfl_advective * dx / speed
    } else {
        f64::INFINITY
    };
    if cfg.freeze_velocity {
        return advective;
    }
    let mut nu_eff = c.nu_upper;
    if state.chart() == Chart::LocalModified {
        nu_eff *= (1.0 + state.scalar1().max_value()).max(0.0);
    }
    let viscous = if nu_eff > 0.0 {
        cfg.cfl_viscous * dx * dx / nu_eff
    } else {
        f64::INFINITY
    };
    advective.min(viscous)
}

fn guard_state(
    state: &State,
    t: f64,
    cfg: &SolverConfig,
    c: &DerivedConstants,
) -> Option<Fault> {
    if let Some(field) = nonfinite_field(state) {
        return Some(Fault::NonFinite { t, field });
    }
    match state.chart() {
        Chart::LocalModified => {
            let (rho_min, idx) = state.scalar1().min_with_index();
            let denom = 1.0 + rho_min;
            if denom < VACUUM_GUARD {
                return Some(Fault::Vacuum {
                    t,
                    value: denom,
                    location: state.grid().point(idx),
                });
            }
        }
        Chart::GlobalModified => {
            if !cfg.linear_only {
                let radius = c.admissible_radius();
                let names = ["m", "n"];
                for (f, name) in [state.scalar1(), state.scalar2()].iter().zip(names) {
                    let sup = f.sup_norm();
                    if sup > radius {
                        return Some(Fault::Admissibility {
                            t,
                            field: name,
                            norm: sup,
                            bound: radius,
                        });
                    }
                }
            }
        }
        Chart::Physical => {}
    }
    None
}

/// Largest coefficient-wise modulus difference between two states on the
/// same grid and chart.
pub fn state_hat_max_diff(a: &State, b: &State) -> f64 {
    let mut worst = 0.0f64;
    let pairs = [
        (a.scalar1(), b.scalar1()),
        (a.scalar2(), b.scalar2()),
    ];
    for (x, y) in pairs {
        for (p, q) in x.hat().iter().zip(y.hat()) {
            worst = worst.max((p - q).norm());
        }
    }
    for i in 0..a.velocity().dim() {
        let x = a.velocity().component(i);
        let y = b.velocity().component(i);
        for (p, q) in x.hat().iter().zip(y.hat()) {
            worst = worst.max((p - q).norm());
        }
    }
    worst
}

/// Compare the reduced right-hand side against the literal form that
/// projects the inputs and then the whole derivative. For states supported
/// on the annulus the two agree to the last bit.
fn projection_defect(state: &State, cfg: &SolverConfig, c: &DerivedConstants) -> Result<f64> {
    let reduced = rhs(state, cfg, c)?;
    let mut projected_in = state.clone();
    cfg.project_state(&mut projected_in);
    let mut explicit = rhs(&projected_in, cfg, c)?;
    cfg.project_state(&mut explicit);
    Ok(state_hat_max_diff(&reduced, &explicit))
}

/// Everything a finished (or faulted) run hands back.
#[derive(Debug)]
pub struct RunOutput {
    /// Times at which diagnostics were recorded.
    pub times: Vec<f64>,
    /// One record per entry of `times`.
    pub records: Vec<DiagnosticsRecord>,
    /// Per-block norm history sampled at the record times, for the
    /// time-integrated norms.
    pub history: NormHistory,
    /// Last state reached. On a fault this is the last finite state.
    pub final_state: State,
    /// The fault that stopped the run, if any.
    pub fault: Option<Fault>,
    /// Number of accepted steps.
    pub steps: usize,
    /// Largest coefficient difference between the reduced and explicitly
    /// projected right-hand sides, when the debug comparison is enabled.
    pub max_projection_defect: f64,
}

/// Integrate the configured system with the standard diagnostic columns.
pub fn run_simulation(
    initial: &State,
    cfg: &SolverConfig,
    c: &DerivedConstants,
) -> Result<RunOutput> {
    run_simulation_with(
        initial,
        cfg,
        c,
        DiagnosticsConfig::standard(cfg.chart, initial.grid().dim()),
    )
}

/// Integrate the configured system, recording the given diagnostics every
/// `snapshot_stride` accepted steps and at both endpoints. A fault stops
/// the run, stamps the current time, and flushes the partial history; it is
/// returned in the output rather than as an error.
pub fn run_simulation_with(
    initial: &State,
    cfg: &SolverConfig,
    c: &DerivedConstants,
    diag: DiagnosticsConfig,
) -> Result<RunOutput> {
    cfg.validate()?;
    initial.expect_chart(cfg.chart)?;
    let grid = *initial.grid();

    let mut state = initial.clone();
    if cfg.dealias {
        state.scalar1_mut().dealias();
        state.scalar2_mut().dealias();
        state.velocity_mut().dealias();
    }
    cfg.project_state(&mut state);

    let mut builder = RecordBuilder::new(diag, c, cfg.chart, &grid)?;
    let mut times: Vec<f64> = Vec::new();
    let mut records: Vec<DiagnosticsRecord> = Vec::new();

    let t_eps = 1e-12 * cfg.t_end.max(1.0);
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut max_defect = 0.0f64;
    let mut fault: Option<Fault> = guard_state(&state, 0.0, cfg, c);

    if fault.is_none() {
        records.push(builder.push(0.0, &state)?);
        times.push(0.0);
    }

    while fault.is_none() {
        let remaining = cfg.t_end - t;
        if remaining <= t_eps {
            break;
        }
        if let Some(f) = guard_state(&state, t, cfg, c) {
            fault = Some(f);
            break;
        }
        let dt_step = if remaining < cfg.dt { remaining } else { cfg.dt };
        let bound = cfl_bound(&state, cfg, c);
        if dt_step > bound {
            fault = Some(Fault::CflViolation {
                t,
                dt: dt_step,
                bound,
            });
            break;
        }
        if cfg.outer_projection_debug {
            let defect = projection_defect(&state, cfg, c)?;
            if defect > max_defect {
                max_defect = defect;
            }
        }
        match step_rk4(&state, dt_step, |s| rhs(s, cfg, c)) {
            Ok(next) => state = next,
            Err(Error::Solver(f)) => {
                fault = Some(f.with_time(t));
                break;
            }
            Err(e) => return Err(e),
        }
        t += dt_step;
        steps += 1;
        let at_end = cfg.t_end - t <= t_eps;
        if steps % cfg.snapshot_stride == 0 || at_end {
            match builder.push(t, &state) {
                Ok(record) => {
                    records.push(record);
                    times.push(t);
                }
                Err(Error::Solver(f)) => {
                    fault = Some(f.with_time(t));
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }

    if fault.is_some() && state.is_finite() {
        // Flush the last admissible state so the history ends at the fault.
        if times.last().map_or(true, |&last| t > last) {
            if let Ok(record) = builder.push(t, &state) {
                records.push(record);
                times.push(t);
            }
        }
    }

    Ok(RunOutput {
        times,
        records,
        history: builder.into_history(),
        final_state: state,
        fault,
        steps,
        max_projection_defect: max_defect,
    })
}

/// Output of a frozen-velocity model transport run.
#[derive(Debug)]
pub struct ThetaRunOutput {
    /// Times at which block norms were recorded.
    pub times: Vec<f64>,
    /// Block norm history of the transported scalar.
    pub h_history: BlockSeries,
    /// Block norm history of the (constant in time) velocity.
    pub v_history: BlockSeries,
    /// Final transported scalar. On a fault, the last finite one.
    pub final_h: ScalarField,
    pub fault: Option<Fault>,
    pub steps: usize,
}

/// Integrate the model transport equation for a scalar `h` against a frozen
/// velocity, recording block norms for the transport estimates. The
/// projection and dealias switches of the configuration apply; its chart is
/// ignored.
pub fn run_theta_transport(
    h0: &ScalarField,
    v: &VectorField,
    theta: f64,
    beta: f64,
    cfg: &SolverConfig,
) -> Result<ThetaRunOutput> {
    if !(self_finite(theta) && self_finite(beta)) {
        return Err(Error::InvalidConfig(
            "transport coefficients must be finite".into(),
        ));
    }
    if !(cfg.dt > 0.0) || !(cfg.t_end > 0.0) || cfg.snapshot_stride == 0 {
        return Err(Error::InvalidConfig(
            "transport run needs positive dt, positive t_end and a nonzero stride".into(),
        ));
    }
    if h0.grid() != v.grid() {
        return Err(Error::GridMismatch(
            "scalar and velocity live on different grids".into(),
        ));
    }
    let grid = *h0.grid();

    let mut h = h0.clone();
    let mut v_frozen = v.clone();
    if cfg.dealias {
        h.dealias();
        v_frozen.dealias();
    }
    h = cfg.project_scalar(h);
    v_frozen = cfg.project_vector(v_frozen);

    let v_norms = block_l2_norms_vector(&v_frozen);
    let mut h_history = BlockSeries::new(&grid);
    let mut v_history = BlockSeries::new(&grid);
    let mut times: Vec<f64> = Vec::new();
    let record =
        |t: f64, h: &ScalarField, times: &mut Vec<f64>, hh: &mut BlockSeries, vh: &mut BlockSeries| -> Result<()> {
            hh.push(t, &block_l2_norms(h))?;
            vh.push(t, &v_norms)?;
            times.push(t);
            Ok(())
        };
    record(0.0, &h, &mut times, &mut h_history, &mut v_history)?;

    let dx = grid.spacing();
    let speed = v_frozen.sup_speed();
    let bound = if speed > 0.0 {
        cfg.cfl_advective * dx / speed
    } else {
        f64::INFINITY
    };

    let t_eps = 1e-12 * cfg.t_end.max(1.0);
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut fault: Option<Fault> = None;

    loop {
        let remaining = cfg.t_end - t;
        if remaining <= t_eps {
            break;
        }
        if !h.is_finite() {
            fault = Some(Fault::NonFinite { t, field: "h" });
            break;
        }
        let dt_step = if remaining < cfg.dt { remaining } else { cfg.dt };
        if dt_step > bound {
            fault = Some(Fault::CflViolation {
                t,
                dt: dt_step,
                bound,
            });
            break;
        }
        let next = rk4(&h, dt_step, |s| {
            Ok(cfg.project_scalar(rhs_theta_transport(s, &v_frozen, theta, beta)))
        })?;
        if !next.is_finite() {
            fault = Some(Fault::NonFinite { t, field: "h" });
            break;
        }
        h = next;
        t += dt_step;
        steps += 1;
        let at_end = cfg.t_end - t <= t_eps;
        if steps % cfg.snapshot_stride == 0 || at_end {
            record(t, &h, &mut times, &mut h_history, &mut v_history)?;
        }
    }

    if fault.is_some() && h.is_finite() && times.last().map_or(true, |&last| t > last) {
        let _ = record(t, &h, &mut times, &mut h_history, &mut v_history);
    }

    Ok(ThetaRunOutput {
        times,
        h_history,
        v_history,
        final_h: h,
        fault,
        steps,
    })
}

fn self_finite(x: f64) -> bool {
    x.is_finite()
}
