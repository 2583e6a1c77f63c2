use crate::error::{Error, Fault, Result};
use crate::field::{gradient, ScalarField, VectorField};
use crate::grid::Grid;
use serde::{Deserialize, Serialize};

/// Guard threshold for mass-like denominators. A denominator below this
/// raises a vacuum fault; values are never clamped.
pub const VACUUM_GUARD: f64 = 1e-8;

/// Physical parameters of the two-phase model. `dim` is carried here because
/// the viscosity constraint couples to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    /// Dynamic viscosity, must be positive.
    pub mu_tilde: f64,
    /// Second viscosity coefficient; constrained by 2*mu_tilde + dim*lambda_tilde >= 0.
    pub lambda_tilde: f64,
    /// Liquid sonic speed.
    pub a_l: f64,
    /// Gas sonic speed.
    pub a_g: f64,
    /// Reference liquid pressure.
    #[serde(rename = "P_l0")]
    pub p_l0: f64,
    /// Reference liquid density.
    pub rho_l0: f64,
    /// Equilibrium liquid mass.
    pub m_bar: f64,
    /// Equilibrium gas mass, nonnegative.
    pub n_bar: f64,
    /// Spatial dimension, 2 or 3.
    pub dim: usize,
}

impl PhysParams {
    pub fn k0(&self) -> f64 {
        self.rho_l0 - self.p_l0 / (self.a_l * self.a_l)
    }

    /// Check the unconditional parameter constraints.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mu_tilde", self.mu_tilde),
            ("lambda_tilde", self.lambda_tilde),
            ("a_l", self.a_l),
            ("a_g", self.a_g),
            ("P_l0", self.p_l0),
            ("rho_l0", self.rho_l0),
            ("m_bar", self.m_bar),
            ("n_bar", self.n_bar),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be finite")));
            }
        }
        if !(self.dim == 2 || self.dim == 3) {
            return Err(Error::InvalidParams(format!(
                "dim must be 2 or 3, got {}",
                self.dim
            )));
        }
        if self.mu_tilde <= 0.0 {
            return Err(Error::InvalidParams("mu_tilde must be positive".into()));
        }
        if 2.0 * self.mu_tilde + self.dim as f64 * self.lambda_tilde < 0.0 {
            return Err(Error::InvalidParams(
                "viscosities must satisfy 2*mu_tilde + dim*lambda_tilde >= 0".into(),
            ));
        }
        if self.a_l <= 0.0 || self.a_g <= 0.0 {
            return Err(Error::InvalidParams("sonic speeds must be positive".into()));
        }
        if self.k0() <= 0.0 {
            return Err(Error::InvalidParams(
                "rho_l0 - P_l0/a_l^2 must be positive".into(),
            ));
        }
        if self.m_bar <= 0.0 {
            return Err(Error::InvalidParams("m_bar must be positive".into()));
        }
        if self.n_bar < 0.0 {
            return Err(Error::InvalidParams("n_bar must be nonnegative".into()));
        }
        Ok(())
    }

    /// Extra constraints required by the global-theory chart: the
    /// equilibrium must sit in the pure-liquid-compatible regime when
    /// n_bar = 0, and planar flows need mu_tilde + lambda_tilde > 0.
    pub fn validate_global_chart(&self) -> Result<()> {
        self.validate()?;
        if self.n_bar == 0.0 && self.m_bar <= self.k0() {
            return Err(Error::InvalidParams(
                "global chart with n_bar = 0 requires m_bar > k0".into(),
            ));
        }
        if self.dim == 2 && self.mu_tilde + self.lambda_tilde <= 0.0 {
            return Err(Error::InvalidParams(
                "global chart in dim 2 requires mu_tilde + lambda_tilde > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Constants computed once from the physical parameters and shared by the
/// pressure law, the chart changes, and the nonlinear right-hand sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    /// Pressure scale, a_l^2 / 2.
    pub c0: f64,
    /// Reference mass offset, rho_l0 - P_l0/a_l^2.
    pub k0: f64,
    /// Sonic speed ratio squared, a_g^2 / a_l^2.
    pub a0: f64,
    /// Linear chart coefficient on (m_tilde - m_bar). Together with `b` it
    /// is fixed by requiring the pressure gradient, rewritten in the
    /// modified variables, to carry unit coefficient on grad m and none on
    /// grad n at the equilibrium.
    pub a: f64,
    /// Linear chart coefficient on n.
    pub b: f64,
    /// Kinematic viscosity mu_tilde / m_bar.
    pub mu: f64,
    /// Kinematic second viscosity lambda_tilde / m_bar.
    pub lambda: f64,
    /// Cross-term weight (mu + lambda) / (2 a m_bar) of the block energy
    /// functional.
    pub big_a: f64,
    /// min(mu, lambda + 2 mu), the smaller effective dissipation rate.
    pub nu_lower: f64,
    /// mu + |mu + lambda|, the larger effective dissipation rate.
    pub nu_upper: f64,
    /// Pressure kernel at equilibrium, 1/sqrt((m_bar+a0*n_bar-k0)^2 + 4 k0 a0 n_bar).
    pub k00: f64,
    /// Equilibrium liquid mass (copied from the parameters).
    pub m_bar: f64,
    /// Equilibrium gas mass (copied from the parameters).
    pub n_bar: f64,
    /// Spatial dimension (copied from the parameters).
    pub dim: usize,
}

impl DerivedConstants {
    /// Equilibrium gas fraction a0*n_bar/m_bar appearing throughout the
    /// modified-variable algebra.
    pub fn sigma(&self) -> f64 {
        self.a0 * self.n_bar / self.m_bar
    }

    /// Sup-norm radius on (m, n) inside which the recovered liquid mass
    /// stays in [m_bar/2, 3 m_bar/2].
    pub fn admissible_radius(&self) -> f64 {
        self.a * self.m_bar / (2.0 * (1.0 + self.b))
    }
}

/// Evaluate every derived constant, rejecting invalid parameters.
pub fn derive_constants(p: &PhysParams) -> Result<DerivedConstants> {
    p.validate()?;
    let c0 = 0.5 * p.a_l * p.a_l;
    let k0 = p.k0();
    let a0 = (p.a_g * p.a_g) / (p.a_l * p.a_l);
    let x = p.m_bar + a0 * p.n_bar;
    let r = ((x - k0) * (x - k0) + 4.0 * k0 * a0 * p.n_bar).sqrt();
    let a = (x + (x * (x - k0) + 2.0 * k0 * a0 * p.n_bar) / r) / (p.m_bar * p.m_bar);
    let b = 1.0 + (x + k0) / r;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidParams(format!(
            "derived chart coefficients must be positive, got a = {a}, b = {b}"
        )));
    }
    let mu = p.mu_tilde / p.m_bar;
    let lambda = p.lambda_tilde / p.m_bar;
    Ok(DerivedConstants {
        c0,
        k0,
        a0,
        a,
        b,
        mu,
        lambda,
        big_a: (mu + lambda) / (2.0 * a * p.m_bar),
        nu_lower: mu.min(lambda + 2.0 * mu),
        nu_upper: mu + (mu + lambda).abs(),
        k00: 1.0 / r,
        m_bar: p.m_bar,
        n_bar: p.n_bar,
        dim: p.dim,
    })
}

/// Coordinate chart a state lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chart {
    /// (m_tilde, n_tilde, u): liquid mass, gas mass, mixed velocity.
    Physical,
    /// (m, n, u): decoupled variables for the small-data theory.
    GlobalModified,
    /// (rho, g, u): reciprocal-mass perturbation variables for the
    /// large-data local theory.
    LocalModified,
}

impl Chart {
    pub fn name(self) -> &'static str {
        match self {
            Chart::Physical => "physical",
            Chart::GlobalModified => "global_modified",
            Chart::LocalModified => "local_modified",
        }
    }

    /// Names of the two scalar unknowns in this chart.
    pub fn scalar_names(self) -> (&'static str, &'static str) {
        match self {
            Chart::Physical => ("m_tilde", "n_tilde"),
            Chart::GlobalModified => ("m", "n"),
            Chart::LocalModified => ("rho", "g"),
        }
    }
}

/// Unknowns of the system in one chart: two scalar fields and a velocity.
#[derive(Debug, Clone)]
pub struct State {
    chart: Chart,
    s1: ScalarField,
    s2: ScalarField,
    u: VectorField,
}

impl State {
    pub fn new(chart: Chart, s1: ScalarField, s2: ScalarField, u: VectorField) -> Result<State> {
        let grid = *s1.grid();
        if *s2.grid() != grid || *u.grid() != grid {
            return Err(Error::GridMismatch(
                "state components live on different grids".into(),
            ));
        }
        Ok(State { chart, s1, s2, u })
    }

    pub fn physical(m_tilde: ScalarField, n_tilde: ScalarField, u: VectorField) -> Result<State> {
        State::new(Chart::Physical, m_tilde, n_tilde, u)
    }

    pub fn global_modified(m: ScalarField, n: ScalarField, u: VectorField) -> Result<State> {
        State::new(Chart::GlobalModified, m, n, u)
    }

    pub fn local_modified(rho: ScalarField, g: ScalarField, u: VectorField) -> Result<State> {
        State::new(Chart::LocalModified, rho, g, u)
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn grid(&self) -> &Grid {
        self.s1.grid()
    }

    pub fn scalar1(&self) -> &ScalarField {
        &self.s1
    }

    pub fn scalar2(&self) -> &ScalarField {
        &self.s2
    }

    pub fn velocity(&self) -> &VectorField {
        &self.u
    }

    pub fn scalar1_mut(&mut self) -> &mut ScalarField {
        &mut self.s1
    }

    pub fn scalar2_mut(&mut self) -> &mut ScalarField {
        &mut self.s2
    }

    pub fn velocity_mut(&mut self) -> &mut VectorField {
        &mut self.u
    }

    pub fn expect_chart(&self, chart: Chart) -> Result<()> {
        if self.chart == chart {
            Ok(())
        } else {
            Err(Error::ChartMismatch {
                expected: chart.name(),
                found: self.chart.name(),
            })
        }
    }

    pub fn is_finite(&self) -> bool {
        self.s1.is_finite() && self.s2.is_finite() && self.u.is_finite()
    }

    pub fn zeros_like(&self) -> State {
        let grid = *self.grid();
        State {
            chart: self.chart,
            s1: ScalarField::zeros(grid),
            s2: ScalarField::zeros(grid),
            u: VectorField::zeros(grid),
        }
    }

    /// `self += a * other`, componentwise on all unknowns.
    pub fn axpy(&mut self, a: f64, other: &State) {
        debug_assert_eq!(self.chart, other.chart);
        self.s1.axpy(a, &other.s1);
        self.s2.axpy(a, &other.s2);
        self.u.axpy(a, &other.u);
    }

    pub fn scale(&mut self, a: f64) {
        self.s1.scale(a);
        self.s2.scale(a);
        self.u.scale(a);
    }
}

fn min_sample(samples: &[f64]) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0usize);
    for (i, &v) in samples.iter().enumerate() {
        if v < best.0 {
            best = (v, i);
        }
    }
    best
}

/// Vacuum fault for a denominator array that dipped below the guard.
/// The time stamp is filled in by the integrator; standalone evaluations
/// report NaN time.
fn vacuum_error(grid: &Grid, samples: &[f64]) -> Error {
    let (value, idx) = min_sample(samples);
    Error::Solver(Fault::Vacuum {
        t: f64::NAN,
        value,
        location: grid.point(idx),
    })
}

fn check_denominator(grid: &Grid, samples: &[f64]) -> Result<()> {
    if samples.iter().any(|&v| v < VACUUM_GUARD) {
        Err(vacuum_error(grid, samples))
    } else {
        Ok(())
    }
}

/// Common pressure of the two phases: the nonnegative root of the shared
/// equation-of-state constraint,
/// P = C0 (-(k0 - m_tilde - a0 n_tilde) + sqrt((k0 - m_tilde - a0 n_tilde)^2 + 4 k0 a0 n_tilde)).
pub fn pressure(
    m_tilde: &ScalarField,
    n_tilde: &ScalarField,
    c: &DerivedConstants,
) -> Result<ScalarField> {
    let grid = *m_tilde.grid();
    let mp = m_tilde.to_physical();
    let np = n_tilde.to_physical();
    let mut out = Vec::with_capacity(grid.len());
    for (&m, &n) in mp.iter().zip(np.iter()) {
        let bb = c.k0 - m - c.a0 * n;
        let rad = bb * bb + 4.0 * c.k0 * c.a0 * n;
        if rad < 0.0 {
            return Err(Error::Solver(Fault::NegativeRadicand {
                t: f64::NAN,
                value: rad,
            }));
        }
        out.push(c.c0 * (-bb + rad.sqrt()));
    }
    let mut f = ScalarField::from_physical(grid, &out)?;
    f.dealias();
    Ok(f)
}

/// Physical chart to the decoupling chart: n = a0 (n_tilde/m_tilde - n_bar/m_bar),
/// m = a (m_tilde - m_bar) + b n. Exact pointwise inverse of [`from_modified`].
pub fn to_modified(state: &State, c: &DerivedConstants) -> Result<State> {
    state.expect_chart(Chart::Physical)?;
    let grid = *state.grid();
    let mp = state.scalar1().to_physical();
    let np = state.scalar2().to_physical();
    check_denominator(&grid, &mp)?;
    let ratio = c.n_bar / c.m_bar;
    let mut n_out = Vec::with_capacity(grid.len());
    let mut m_out = Vec::with_capacity(grid.len());
    for (&mt, &nt) in mp.iter().zip(np.iter()) {
        let n = c.a0 * (nt / mt - ratio);
        n_out.push(n);
        m_out.push(c.a * (mt - c.m_bar) + c.b * n);
    }
    State::new(
        Chart::GlobalModified,
        ScalarField::from_physical(grid, &m_out)?,
        ScalarField::from_physical(grid, &n_out)?,
        state.velocity().clone(),
    )
}

/// Decoupling chart back to the physical chart: m_tilde = m_bar + (m - b n)/a,
/// n_tilde = m_tilde (n/a0 + n_bar/m_bar).
pub fn from_modified(state: &State, c: &DerivedConstants) -> Result<State> {
    state.expect_chart(Chart::GlobalModified)?;
    let grid = *state.grid();
    let mp = state.scalar1().to_physical();
    let np = state.scalar2().to_physical();
    let ratio = c.n_bar / c.m_bar;
    let mut mt_out = Vec::with_capacity(grid.len());
    let mut nt_out = Vec::with_capacity(grid.len());
    for (&m, &n) in mp.iter().zip(np.iter()) {
        let mt = c.m_bar + (m - c.b * n) / c.a;
        mt_out.push(mt);
        nt_out.push(mt * (n / c.a0 + ratio));
    }
    check_denominator(&grid, &mt_out)?;
    State::new(
        Chart::Physical,
        ScalarField::from_physical(grid, &mt_out)?,
        ScalarField::from_physical(grid, &nt_out)?,
        state.velocity().clone(),
    )
}

/// Physical chart to the large-data chart: rho = m_bar (1/m_tilde - 1/m_bar),
/// g = n_tilde - n_bar.
pub fn to_local(state: &State, c: &DerivedConstants) -> Result<State> {
    state.expect_chart(Chart::Physical)?;
    let grid = *state.grid();
    let mp = state.scalar1().to_physical();
    check_denominator(&grid, &mp)?;
    let rho: Vec<f64> = mp.iter().map(|&mt| c.m_bar / mt - 1.0).collect();
    let g = state.scalar2().add_constant(-c.n_bar);
    State::new(
        Chart::LocalModified,
        ScalarField::from_physical(grid, &rho)?,
        g,
        state.velocity().clone(),
    )
}

/// Large-data chart back to the physical chart: m_tilde = m_bar/(1 + rho),
/// n_tilde = g + n_bar.
pub fn from_local(state: &State, c: &DerivedConstants) -> Result<State> {
    state.expect_chart(Chart::LocalModified)?;
    let grid = *state.grid();
    let rp = state.scalar1().to_physical();
    let denom: Vec<f64> = rp.iter().map(|&r| 1.0 + r).collect();
    check_denominator(&grid, &denom)?;
    let mt: Vec<f64> = denom.iter().map(|&d| c.m_bar / d).collect();
    State::new(
        Chart::Physical,
        ScalarField::from_physical(grid, &mt)?,
        state.scalar2().add_constant(c.n_bar),
        state.velocity().clone(),
    )
}

/// Pointwise ingredients shared by the pressure-kernel evaluations in the
/// decoupling chart.
struct KernelPoint {
    m_tilde: f64,
    w: f64,
    kernel: f64,
}

fn kernel_at(m: f64, n: f64, c: &DerivedConstants) -> Result<KernelPoint> {
    let sigma = c.sigma();
    let m_tilde = c.m_bar + (m - c.b * n) / c.a;
    let w = n + sigma + 1.0;
    let base = m_tilde * w - c.k0;
    let rad = base * base + 4.0 * c.k0 * (n + sigma) * m_tilde;
    if rad <= VACUUM_GUARD * VACUUM_GUARD {
        return Err(Error::Solver(Fault::NegativeRadicand {
            t: f64::NAN,
            value: rad,
        }));
    }
    Ok(KernelPoint {
        m_tilde,
        w,
        kernel: 1.0 / rad.sqrt(),
    })
}

/// Nonlinear remainder of the pressure-gradient decomposition in the
/// decoupling chart: grad P / (C0 m_tilde) = grad m + H(m, n). Implemented
/// from the expanded closed form; every term carries a factor of m, n,
/// their gradients, or the kernel increment, so H(0,0) = 0.
pub fn nonlinear_h(m: &ScalarField, n: &ScalarField, c: &DerivedConstants) -> Result<VectorField> {
    let grid = *m.grid();
    let dim = grid.dim();
    let mp = m.to_physical();
    let np = n.to_physical();
    let gm: Vec<Vec<f64>> = (0..dim).map(|ax| m.derivative(ax).to_physical()).collect();
    let gn: Vec<Vec<f64>> = (0..dim).map(|ax| n.derivative(ax).to_physical()).collect();

    let sigma = c.sigma();
    let an_m = c.a0 * c.n_bar + c.m_bar;
    let group1_n_coeff = c.a * c.m_bar * c.m_bar + c.b * an_m;
    let a2m2 = c.a * c.a * c.m_bar * c.m_bar;

    let mt_samples: Vec<f64> = mp
        .iter()
        .zip(np.iter())
        .map(|(&mv, &nv)| c.m_bar + (mv - c.b * nv) / c.a)
        .collect();
    check_denominator(&grid, &mt_samples)?;

    let mut out: Vec<Vec<f64>> = (0..dim).map(|_| vec![0.0f64; grid.len()]).collect();
    for i in 0..grid.len() {
        let mv = mp[i];
        let nv = np[i];
        let kp = kernel_at(mv, nv, c)?;
        let mt = kp.m_tilde;
        let w = kp.w;
        let dk = kp.kernel - c.k00;
        let mbn = mv - c.b * nv;
        let c1 = (-an_m * mv + group1_n_coeff * nv) / (a2m2 * mt);
        for ax in 0..dim {
            let gmv = gm[ax][i];
            let gnv = gn[ax][i];
            let dv = gmv - c.b * gnv;
            let grad_mt = dv / c.a;
            let t1 = c1 * dv;
            let t2 = dk
                * (w * mt * gnv
                    + w * w * grad_mt
                    + c.k0 * (nv + sigma - 1.0) * dv / (c.a * mt)
                    + c.k0 * gnv);
            let t3 = c.k00
                * (w * gnv * mbn / c.a
                    + c.m_bar * nv * gnv
                    + (nv * nv + 2.0 * nv * (sigma + 1.0)) * dv / c.a
                    + c.k0 / (c.a * mt) * nv * dv
                    - c.k0 * (sigma - 1.0) * mbn * dv / (c.a * c.a * c.m_bar * mt));
            out[ax][i] = t1 + t2 + t3;
        }
    }

    let comps: Result<Vec<ScalarField>> = out
        .into_iter()
        .map(|v| ScalarField::from_physical(grid, &v).map(|f| f.dealiased()))
        .collect();
    VectorField::from_components(comps?)
}

/// Source term of the modified liquid-mass equation, -(m - b n) div u.
pub fn rhs_f(m: &ScalarField, n: &ScalarField, u: &VectorField, c: &DerivedConstants) -> ScalarField {
    let mut mbn = m.clone();
    mbn.axpy(-c.b, n);
    let mut f = mbn.mul_dealiased(&u.divergence());
    f.scale(-1.0);
    f
}

/// Source term of the modified momentum equation,
/// -C0 H(m,n) - ((m - b n)/(a m_tilde)) (mu Lap u + (mu+lambda) grad div u).
pub fn rhs_g(
    m: &ScalarField,
    n: &ScalarField,
    u: &VectorField,
    c: &DerivedConstants,
) -> Result<VectorField> {
    let grid = *m.grid();
    let h = nonlinear_h(m, n, c)?;

    let mp = m.to_physical();
    let np = n.to_physical();
    let mut prefactor = Vec::with_capacity(grid.len());
    let mut mt_samples = Vec::with_capacity(grid.len());
    for (&mv, &nv) in mp.iter().zip(np.iter()) {
        let mbn = mv - c.b * nv;
        let mt = c.m_bar + mbn / c.a;
        mt_samples.push(mt);
        prefactor.push(mbn / (c.a * mt));
    }
    check_denominator(&grid, &mt_samples)?;

    let lap = u.laplacian();
    let gdiv = gradient(&u.divergence());
    let mut comps = Vec::with_capacity(grid.dim());
    for ax in 0..grid.dim() {
        let mut visc = lap.component(ax).scaled(c.mu);
        visc.axpy(c.mu + c.lambda, gdiv.component(ax));
        let vp = visc.to_physical();
        let prod: Vec<f64> = vp
            .iter()
            .zip(prefactor.iter())
            .map(|(&v, &p)| -p * v)
            .collect();
        let mut comp = ScalarField::from_physical(grid, &prod)?;
        comp.dealias();
        comp.axpy(-c.c0, h.component(ax));
        comps.push(comp);
    }
    VectorField::from_components(comps)
}

/// Pressure kernel of the large-data chart,
/// B = [(m_bar/(rho+1) + a0 (g+n_bar) - k0)^2 + 4 k0 a0 (g+n_bar)]^{-1/2}.
pub fn local_b(rho: &ScalarField, g: &ScalarField, c: &DerivedConstants) -> Result<ScalarField> {
    let grid = *rho.grid();
    let rp = rho.to_physical();
    let gp = g.to_physical();
    let mut out = Vec::with_capacity(grid.len());
    for (i, (&rv, &gv)) in rp.iter().zip(gp.iter()).enumerate() {
        let denom = 1.0 + rv;
        if denom < VACUUM_GUARD {
            return Err(Error::Solver(Fault::Vacuum {
                t: f64::NAN,
                value: denom,
                location: grid.point(i),
            }));
        }
        let base = c.m_bar / denom + c.a0 * (gv + c.n_bar) - c.k0;
        let rad = base * base + 4.0 * c.k0 * c.a0 * (gv + c.n_bar);
        if rad <= VACUUM_GUARD * VACUUM_GUARD {
            return Err(Error::Solver(Fault::NegativeRadicand {
                t: f64::NAN,
                value: rad,
            }));
        }
        out.push(1.0 / rad.sqrt());
    }
    let mut f = ScalarField::from_physical(grid, &out)?;
    f.dealias();
    Ok(f)
}

/// Pressure-gradient term of the large-data momentum equation,
/// Q(rho, g) = m_bar^{-1} (1+rho) grad P(m_bar/(1+rho), g+n_bar),
/// evaluated from its expanded closed form.
pub fn local_q(rho: &ScalarField, g: &ScalarField, c: &DerivedConstants) -> Result<VectorField> {
    let grid = *rho.grid();
    let dim = grid.dim();
    let rp = rho.to_physical();
    let gp = g.to_physical();
    let grho: Vec<Vec<f64>> = (0..dim).map(|ax| rho.derivative(ax).to_physical()).collect();
    let gg: Vec<Vec<f64>> = (0..dim).map(|ax| g.derivative(ax).to_physical()).collect();

    let a0 = c.a0;
    let mb = c.m_bar;
    let grad_g_const = a0 * (c.k0 + mb + a0 * c.n_bar) / mb;
    let grad_g_rho = (a0 * c.k0 + a0 * a0 * c.n_bar) / mb;

    let mut out: Vec<Vec<f64>> = (0..dim).map(|_| vec![0.0f64; grid.len()]).collect();
    for i in 0..grid.len() {
        let rv = rp[i];
        let gv = gp[i];
        let denom = 1.0 + rv;
        if denom < VACUUM_GUARD {
            return Err(Error::Solver(Fault::Vacuum {
                t: f64::NAN,
                value: denom,
                location: grid.point(i),
            }));
        }
        let base = mb / denom + a0 * (gv + c.n_bar) - c.k0;
        let rad = base * base + 4.0 * c.k0 * a0 * (gv + c.n_bar);
        if rad <= VACUUM_GUARD * VACUUM_GUARD {
            return Err(Error::Solver(Fault::NegativeRadicand {
                t: f64::NAN,
                value: rad,
            }));
        }
        let bv = 1.0 / rad.sqrt();
        // Coefficients multiplying grad rho and grad g at this point.
        let coeff_rho = rv / denom - 1.0
            + bv * (-mb / (denom * denom) + (c.k0 - a0 * c.n_bar) / denom - a0 * gv / denom);
        let coeff_g = (a0 / mb) * denom
            + bv * ((a0 * a0 / mb) * gv * denom + grad_g_const + grad_g_rho * rv);
        for ax in 0..dim {
            out[ax][i] = c.c0 * (coeff_rho * grho[ax][i] + coeff_g * gg[ax][i]);
        }
    }

    let comps: Result<Vec<ScalarField>> = out
        .into_iter()
        .map(|v| ScalarField::from_physical(grid, &v).map(|f| f.dealiased()))
        .collect();
    VectorField::from_components(comps?)
}

/// Recovered liquid mass m_bar + (m - b n)/a as a field, with the vacuum
/// guard applied.
pub fn recover_m_tilde(m: &ScalarField, n: &ScalarField, c: &DerivedConstants) -> Result<ScalarField> {
    let grid = *m.grid();
    let mp = m.to_physical();
    let np = n.to_physical();
    let mt: Vec<f64> = mp
        .iter()
        .zip(np.iter())
        .map(|(&mv, &nv)| c.m_bar + (mv - c.b * nv) / c.a)
        .collect();
    check_denominator(&grid, &mt)?;
    ScalarField::from_physical(grid, &mt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    /// Parameters with C0 = k0 = a0 = 1, n_bar = 0, m_bar = 2 k0; the
    /// derived chart coefficients are a = 1/k0 = 1 and b = 4.
    fn reference_params() -> PhysParams {
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

    fn gas_params() -> PhysParams {
        PhysParams {
            n_bar: 0.7,
            ..reference_params()
        }
    }

    #[test]
    fn worked_constants() {
        let c = derive_constants(&reference_params()).unwrap();
        assert!((c.c0 - 1.0).abs() < 1e-15);
        assert!((c.k0 - 1.0).abs() < 1e-15);
        assert!((c.a0 - 1.0).abs() < 1e-15);
        assert!((c.a - 1.0).abs() < 1e-14, "a = {}", c.a);
        assert!((c.b - 4.0).abs() < 1e-14, "b = {}", c.b);
        assert!((c.k00 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn positivity_of_chart_coefficients() {
        for n_bar in [0.0, 0.3, 1.0, 5.0] {
            for m_bar in [1.5, 2.0, 7.0] {
                let p = PhysParams {
                    m_bar,
                    n_bar,
                    ..reference_params()
                };
                let c = derive_constants(&p).unwrap();
                assert!(c.a > 0.0 && c.b > 0.0, "a = {}, b = {}", c.a, c.b);
            }
        }
    }

    #[test]
    fn viscosity_constraint_boundary() {
        let p = PhysParams {
            mu_tilde: 1.0,
            lambda_tilde: -1.0,
            ..reference_params()
        };
        assert!(p.validate().is_ok(), "2 mu + d lambda = 0 is admissible");
        assert!(
            p.validate_global_chart().is_err(),
            "mu_tilde + lambda_tilde = 0 is rejected for the planar global chart"
        );
        let worse = PhysParams {
            lambda_tilde: -1.1,
            ..p
        };
        assert!(worse.validate().is_err());
    }

    #[test]
    fn pressure_worked_value() {
        let g = Grid::standard(2, 8).unwrap();
        let c = derive_constants(&reference_params()).unwrap();
        let m = ScalarField::constant(g, 1.0);
        let n = ScalarField::constant(g, 1.0);
        let p = pressure(&m, &n, &c).unwrap();
        let expected = 1.0 + 5.0f64.sqrt();
        assert!((p.mean() - expected).abs() < 1e-13);
    }

    #[test]
    fn pressure_pure_phase_limits() {
        let g = Grid::standard(2, 8).unwrap();
        let params = reference_params();
        let c = derive_constants(&params).unwrap();
        // pure liquid: P = P_l0 + a_l^2 (m_tilde - rho_l0)
        let m = ScalarField::constant(g, 3.0);
        let n = ScalarField::constant(g, 0.0);
        let p = pressure(&m, &n, &c).unwrap();
        let expected = params.p_l0 + params.a_l * params.a_l * (3.0 - params.rho_l0);
        assert!((p.mean() - expected).abs() < 1e-12 * expected.abs());
        // pure gas: P -> a_g^2 n_tilde as m_tilde -> 0
        let m = ScalarField::constant(g, 1e-13);
        let n = ScalarField::constant(g, 2.0);
        let p = pressure(&m, &n, &c).unwrap();
        let expected = params.a_g * params.a_g * 2.0;
        assert!((p.mean() - expected).abs() < 1e-11 * expected);
    }

    #[test]
    fn chart_worked_example() {
        let g = Grid::standard(2, 8).unwrap();
        let c = derive_constants(&reference_params()).unwrap();
        let state = State::physical(
            ScalarField::constant(g, 3.0),
            ScalarField::constant(g, 3.0),
            VectorField::zeros(g),
        )
        .unwrap();
        let modified = to_modified(&state, &c).unwrap();
        assert!((modified.scalar2().mean() - 1.0).abs() < 1e-13, "n");
        assert!((modified.scalar1().mean() - 5.0).abs() < 1e-13, "m");
    }

    #[test]
    fn equilibrium_maps_to_origin_in_both_charts() {
        let g = Grid::standard(2, 8).unwrap();
        for params in [reference_params(), gas_params()] {
            let c = derive_constants(&params).unwrap();
            let state = State::physical(
                ScalarField::constant(g, params.m_bar),
                ScalarField::constant(g, params.n_bar),
                VectorField::zeros(g),
            )
            .unwrap();
            let gm = to_modified(&state, &c).unwrap();
            assert!(gm.scalar1().l2_norm() < 1e-13);
            assert!(gm.scalar2().l2_norm() < 1e-13);
            let lm = to_local(&state, &c).unwrap();
            assert!(lm.scalar1().l2_norm() < 1e-13);
            assert!(lm.scalar2().l2_norm() < 1e-13);
        }
    }

    #[test]
    fn chart_round_trips() {
        let g = Grid::standard(2, 16).unwrap();
        for params in [reference_params(), gas_params()] {
            let c = derive_constants(&params).unwrap();
            let m_tilde = ScalarField::from_fn(g, |x| {
                params.m_bar * (1.0 + 0.2 * x[0].sin() * x[1].cos())
            });
            let n_tilde = ScalarField::from_fn(g, |x| {
                (params.n_bar + 0.5) * (1.0 + 0.3 * (x[0] + x[1]).cos())
            });
            let u = VectorField::from_components(vec![
                ScalarField::from_fn(g, |x| 0.1 * x[1].sin()),
                ScalarField::from_fn(g, |x| 0.1 * x[0].cos()),
            ])
            .unwrap();
            let state = State::physical(m_tilde.clone(), n_tilde.clone(), u).unwrap();

            let back = from_modified(&to_modified(&state, &c).unwrap(), &c).unwrap();
            let scale = m_tilde.l2_norm();
            assert!(back.scalar1().sub(&m_tilde).l2_norm() < 1e-12 * scale);
            assert!(back.scalar2().sub(&n_tilde).l2_norm() < 1e-12 * scale);

            let back = from_local(&to_local(&state, &c).unwrap(), &c).unwrap();
            assert!(back.scalar1().sub(&m_tilde).l2_norm() < 1e-12 * scale);
            assert!(back.scalar2().sub(&n_tilde).l2_norm() < 1e-12 * scale);
        }
    }

    #[test]
    fn h_vanishes_at_origin() {
        let g = Grid::standard(2, 8).unwrap();
        let c = derive_constants(&gas_params()).unwrap();
        let h = nonlinear_h(&ScalarField::zeros(g), &ScalarField::zeros(g), &c).unwrap();
        assert_eq!(h.l2_norm(), 0.0);
    }

    #[test]
    fn kernel_at_origin_matches_constant() {
        for params in [reference_params(), gas_params()] {
            let c = derive_constants(&params).unwrap();
            let kp = kernel_at(0.0, 0.0, &c).unwrap();
            assert!((kp.kernel - c.k00).abs() < 1e-15 * c.k00);
            assert!((kp.m_tilde - c.m_bar).abs() < 1e-14);
        }
    }

    #[test]
    fn f_hand_example() {
        let g = Grid::standard(2, 16).unwrap();
        let c = derive_constants(&reference_params()).unwrap();
        let m = ScalarField::constant(g, 1.0);
        let n = ScalarField::zeros(g);
        let u = VectorField::from_components(vec![
            ScalarField::from_fn(g, |x| x[0].sin()),
            ScalarField::zeros(g),
        ])
        .unwrap();
        let f = rhs_f(&m, &n, &u, &c);
        let expected = ScalarField::from_fn(g, |x| -x[0].cos());
        assert!(f.sub(&expected).l2_norm() < 1e-12);
    }

    #[test]
    fn f_vanishes_on_chart_diagonal() {
        let g = Grid::standard(2, 16).unwrap();
        let c = derive_constants(&gas_params()).unwrap();
        let n = ScalarField::from_fn(g, |x| 0.1 * x[0].sin());
        let m = n.scaled(c.b);
        let u = VectorField::from_components(vec![
            ScalarField::from_fn(g, |x| x[1].sin()),
            ScalarField::from_fn(g, |x| x[0].sin()),
        ])
        .unwrap();
        assert!(rhs_f(&m, &n, &u, &c).l2_norm() < 1e-13);
    }

    #[test]
    fn g_reduces_to_h_when_velocity_vanishes() {
        let g = Grid::standard(2, 16).unwrap();
        let c = derive_constants(&gas_params()).unwrap();
        let m = ScalarField::from_fn(g, |x| 0.05 * x[0].sin());
        let n = ScalarField::from_fn(g, |x| 0.04 * (x[0] + x[1]).cos());
        let u = VectorField::zeros(g);
        let rhs = rhs_g(&m, &n, &u, &c).unwrap();
        let h = nonlinear_h(&m, &n, &c).unwrap();
        let diff = rhs.sub(&h.scaled(-c.c0)).l2_norm();
        assert!(diff < 1e-14, "diff {diff}");
    }

    #[test]
    fn local_b_at_equilibrium_is_k00() {
        let g = Grid::standard(2, 8).unwrap();
        for params in [reference_params(), gas_params()] {
            let c = derive_constants(&params).unwrap();
            let b = local_b(&ScalarField::zeros(g), &ScalarField::zeros(g), &c).unwrap();
            assert!((b.mean() - c.k00).abs() < 1e-14);
        }
    }

    #[test]
    fn local_q_of_constants_vanishes() {
        let g = Grid::standard(2, 8).unwrap();
        let c = derive_constants(&gas_params()).unwrap();
        let q = local_q(
            &ScalarField::constant(g, 0.2),
            &ScalarField::constant(g, 0.1),
            &c,
        )
        .unwrap();
        assert_eq!(q.l2_norm(), 0.0);
    }

    #[test]
    fn vacuum_guard_fires() {
        let g = Grid::standard(2, 8).unwrap();
        let c = derive_constants(&reference_params()).unwrap();
        let state = State::physical(
            ScalarField::constant(g, 1e-9),
            ScalarField::constant(g, 0.1),
            VectorField::zeros(g),
        )
        .unwrap();
        match to_modified(&state, &c) {
            Err(Error::Solver(Fault::Vacuum { value, .. })) => {
                assert!(value < VACUUM_GUARD);
            }
            other => panic!("expected vacuum fault, got {other:?}"),
        }
    }
}
