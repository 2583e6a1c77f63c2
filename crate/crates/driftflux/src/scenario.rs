//! Scenario files: the structured-text configuration that names a verification
//! scenario, fixes the physics and solver settings, and describes the initial
//! data. Everything random is a pure function of (recipe, seed).

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::diagnostics::MonitorBudgets;
use crate::error::Error;
use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;
use crate::lp::{hybrid_besov_norm, hybrid_besov_norm_vector, BesovSpec};
use crate::model::{
    derive_constants, Chart, DerivedConstants, PhysParams, State, VACUUM_GUARD,
};
use crate::snapshot;
use crate::solver::{FriedrichsRadius, SolverConfig};
use crate::Result;

/// Environment variable that prefixes relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "DRIFTFLUX_OUTPUT_ROOT";

/// The closed set of runnable scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioName {
    IdentityCheck,
    LinearOracle,
    SmallDataGlobal,
    LargeDataLocal,
    ThetaTransport,
    Conservation,
    BesovSuite,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 7] = [
        ScenarioName::IdentityCheck,
        ScenarioName::LinearOracle,
        ScenarioName::SmallDataGlobal,
        ScenarioName::LargeDataLocal,
        ScenarioName::ThetaTransport,
        ScenarioName::Conservation,
        ScenarioName::BesovSuite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::IdentityCheck => "identity-check",
            ScenarioName::LinearOracle => "linear-oracle",
            ScenarioName::SmallDataGlobal => "small-data-global",
            ScenarioName::LargeDataLocal => "large-data-local",
            ScenarioName::ThetaTransport => "theta-transport",
            ScenarioName::Conservation => "conservation",
            ScenarioName::BesovSuite => "besov-suite",
        }
    }

    pub fn parse(s: &str) -> Result<ScenarioName> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = ScenarioName::ALL.iter().map(|n| n.as_str()).collect();
                Error::InvalidConfig(format!(
                    "unknown scenario name {s:?} (known: {})",
                    known.join(", ")
                ))
            })
    }

    fn default_chart(self) -> Chart {
        match self {
            ScenarioName::LargeDataLocal => Chart::LocalModified,
            _ => Chart::GlobalModified,
        }
    }
}

/// How the initial state is built.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// The constant equilibrium, zero in every modified variable.
    Equilibrium,
    /// Seeded Gaussian spectral draws on a frequency band, rescaled exactly
    /// to per-field target norms.
    RandomBands(BandRecipe),
    /// Load the state from a snapshot file.
    Snapshot(PathBuf),
    /// The designed compression profile that drives 1 + rho toward the
    /// vacuum guard under a frozen velocity: u = (A (sin x - sin(2x)/2), 0)
    /// has a single attracting stagnation line with div u = -2A on it.
    VacuumProbe { amplitude: f64 },
}

/// Band limits and per-field target norms for random initial data.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRecipe {
    /// Smallest frequency magnitude that may carry energy.
    pub band_lo: f64,
    /// Largest frequency magnitude that may carry energy.
    pub band_hi: f64,
    /// Target hybrid norm of the first scalar (m or rho).
    pub scalar1_norm: f64,
    /// Target hybrid norm of the second scalar (n or g).
    pub scalar2_norm: f64,
    /// Target hybrid norm of the velocity.
    pub velocity_norm: f64,
}

/// A parsed and structurally validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: ScenarioName,
    pub seed: u64,
    pub params: PhysParams,
    pub grid: Grid,
    /// Present for every scenario that integrates in time.
    pub solver: Option<SolverConfig>,
    pub initial: InitialData,
    /// (theta, beta) for the theta-transport scenario.
    pub transport: Option<(f64, f64)>,
    /// Continuation-criterion budgets to scan the record stream against.
    pub monitor: MonitorBudgets,
    /// Output directory as written in the file, before any override.
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    seed: Option<u64>,
    params: ParamsSection,
    grid: Option<GridSection>,
    solver: Option<SolverSection>,
    initial: Option<InitialSection>,
    transport: Option<TransportSection>,
    monitor: Option<MonitorSection>,
    output: Option<OutputSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsSection {
    mu_tilde: f64,
    lambda_tilde: f64,
    a_l: f64,
    a_g: f64,
    p_l0: f64,
    rho_l0: f64,
    m_bar: f64,
    n_bar: f64,
    dim: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    n_modes: Option<usize>,
    box_length: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum EllValue {
    Int(u32),
    Str(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    chart: Option<String>,
    dt: f64,
    t_end: f64,
    ell: Option<EllValue>,
    keep_mean: Option<bool>,
    cfl_advective: Option<f64>,
    cfl_viscous: Option<f64>,
    dealias: Option<bool>,
    snapshot_stride: Option<usize>,
    freeze_velocity: Option<bool>,
    linear_only: Option<bool>,
    outer_projection_debug: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    kind: Option<String>,
    band_lo: Option<f64>,
    band_hi: Option<f64>,
    scalar1_norm: Option<f64>,
    scalar2_norm: Option<f64>,
    velocity_norm: Option<f64>,
    path: Option<PathBuf>,
    amplitude: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransportSection {
    theta: f64,
    beta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MonitorSection {
    int_grad_u_inf: Option<f64>,
    inf_one_plus_rho: Option<f64>,
    sup_mtilde: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
}

fn parse_chart(s: &str) -> Result<Chart> {
    match s {
        "global_modified" => Ok(Chart::GlobalModified),
        "local_modified" => Ok(Chart::LocalModified),
        other => Err(Error::InvalidConfig(format!(
            "solver.chart {other:?} is not integrable; use \"global_modified\" or \"local_modified\""
        ))),
    }
}

impl Scenario {
    /// Parse a scenario from file contents. Relative snapshot paths resolve
    /// against `base_dir`, normally the scenario file's directory.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Scenario> {
        let file: ScenarioFile = toml::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("scenario file: {e}")))?;
        let name = ScenarioName::parse(&file.name)?;

        let p = file.params;
        let params = PhysParams {
            mu_tilde: p.mu_tilde,
            lambda_tilde: p.lambda_tilde,
            a_l: p.a_l,
            a_g: p.a_g,
            p_l0: p.p_l0,
            rho_l0: p.rho_l0,
            m_bar: p.m_bar,
            n_bar: p.n_bar,
            dim: p.dim,
        };
        // Surface bad physics now rather than at run time.
        derive_constants(&params)?;

        let grid_section = file.grid.unwrap_or(GridSection {
            n_modes: None,
            box_length: None,
        });
        let n_modes = grid_section.n_modes.unwrap_or(match params.dim {
            3 => 32,
            _ => 64,
        });
        let box_length = grid_section
            .box_length
            .unwrap_or(2.0 * std::f64::consts::PI);
        let grid = Grid::new(params.dim, n_modes, box_length)?;

        let solver = match file.solver {
            None => None,
            Some(s) => {
                let chart = match &s.chart {
                    Some(text) => parse_chart(text)?,
                    None => name.default_chart(),
                };
                let mut cfg = SolverConfig::new(chart, s.dt, s.t_end);
                cfg.ell = match s.ell {
                    None => FriedrichsRadius::Full,
                    Some(EllValue::Int(l)) => FriedrichsRadius::Radius(l),
                    Some(EllValue::Str(text)) if text == "full" => FriedrichsRadius::Full,
                    Some(EllValue::Str(text)) => {
                        return Err(Error::InvalidConfig(format!(
                            "solver.ell must be a positive integer or \"full\", got {text:?}"
                        )))
                    }
                };
                if let Some(v) = s.keep_mean {
                    cfg.keep_mean = v;
                }
                if let Some(v) = s.cfl_advective {
                    cfg.cfl_advective = v;
                }
                if let Some(v) = s.cfl_viscous {
                    cfg.cfl_viscous = v;
                }
                if let Some(v) = s.dealias {
                    cfg.dealias = v;
                }
                if let Some(v) = s.snapshot_stride {
                    cfg.snapshot_stride = v;
                }
                if let Some(v) = s.freeze_velocity {
                    cfg.freeze_velocity = v;
                }
                if let Some(v) = s.linear_only {
                    cfg.linear_only = v;
                }
                if let Some(v) = s.outer_projection_debug {
                    cfg.outer_projection_debug = v;
                }
                cfg.validate()?;
                Some(cfg)
            }
        };

        let initial = match file.initial {
            None => InitialData::Equilibrium,
            Some(section) => {
                let kind = section.kind.as_deref().unwrap_or("equilibrium");
                match kind {
                    "equilibrium" => InitialData::Equilibrium,
                    "random-bands" => InitialData::RandomBands(BandRecipe {
                        band_lo: section.band_lo.unwrap_or(1.0),
                        band_hi: section
                            .band_hi
                            .unwrap_or(grid.dealias_limit() as f64),
                        scalar1_norm: section.scalar1_norm.unwrap_or(0.0),
                        scalar2_norm: section.scalar2_norm.unwrap_or(0.0),
                        velocity_norm: section.velocity_norm.unwrap_or(0.0),
                    }),
                    "snapshot" => {
                        let path = section.path.ok_or_else(|| {
                            Error::InvalidConfig(
                                "initial.kind = \"snapshot\" needs initial.path".into(),
                            )
                        })?;
                        let resolved = if path.is_absolute() {
                            path
                        } else {
                            base_dir.join(path)
                        };
                        InitialData::Snapshot(resolved)
                    }
                    "vacuum-probe" => InitialData::VacuumProbe {
                        amplitude: section.amplitude.unwrap_or(2.0),
                    },
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "initial.kind {other:?} is not one of equilibrium, random-bands, snapshot, vacuum-probe"
                        )))
                    }
                }
            }
        };

        let transport = file.transport.map(|t| (t.theta, t.beta));
        if name == ScenarioName::ThetaTransport && transport.is_none() {
            return Err(Error::InvalidConfig(
                "theta-transport needs a [transport] section with theta and beta".into(),
            ));
        }

        let mut monitor = MonitorBudgets::unbounded();
        if let Some(m) = file.monitor {
            if let Some(v) = m.int_grad_u_inf {
                monitor.int_grad_u_inf = v;
            }
            if let Some(v) = m.inf_one_plus_rho {
                monitor.inf_one_plus_rho = v;
            }
            if let Some(v) = m.sup_mtilde {
                monitor.sup_mtilde = v;
            }
        }

        Ok(Scenario {
            name,
            seed: file.seed.unwrap_or(0),
            params,
            grid,
            solver,
            initial,
            transport,
            monitor,
            output_dir: file.output.and_then(|o| o.dir),
        })
    }

    /// Load and parse a scenario file.
    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read scenario file {}: {e}", path.display()))
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Scenario::from_toml_str(&text, base)
    }

    /// The derived constants for this scenario's physics.
    pub fn constants(&self) -> Result<DerivedConstants> {
        derive_constants(&self.params)
    }

    /// Output directory after applying the command-line override and the
    /// output-root environment variable, in that precedence order.
    pub fn resolve_output_dir(&self, cli_override: Option<&Path>) -> PathBuf {
        if let Some(p) = cli_override {
            return p.to_path_buf();
        }
        let base = self
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(self.name.as_str()));
        if base.is_absolute() {
            return base;
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) => PathBuf::from(root).join(base),
            None => base,
        }
    }

    /// The chart the initial data lives in.
    pub fn chart(&self) -> Chart {
        self.solver
            .as_ref()
            .map(|s| s.chart)
            .unwrap_or_else(|| self.name.default_chart())
    }
}

/// Measuring norm of a scalar unknown in the given chart: the regularity of
/// the low-frequency/high-frequency pair the well-posedness data sit in.
pub fn scalar_data_spec(chart: Chart, dim: usize) -> BesovSpec {
    let h = dim as f64 / 2.0;
    match chart {
        Chart::LocalModified => BesovSpec::hybrid(h, h + 1.0),
        _ => BesovSpec::hybrid(h - 1.0, h),
    }
}

/// Measuring norm of the velocity in the given chart.
pub fn velocity_data_spec(chart: Chart, dim: usize) -> BesovSpec {
    let h = dim as f64 / 2.0;
    match chart {
        Chart::LocalModified => BesovSpec::hybrid(h - 1.0, h),
        _ => BesovSpec::uniform(h - 1.0),
    }
}

fn random_band_scalar(grid: &Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ScalarField {
    let mut f = ScalarField::zeros(*grid);
    for idx in 0..grid.len() {
        let conj = grid.conjugate_index(idx);
        if conj < idx {
            continue;
        }
        let mag = grid.xi_mag(idx);
        if mag < lo || mag > hi || mag == 0.0 {
            continue;
        }
        // Stay inside the dealias band so later conditioning cannot move
        // the rescaled norm.
        if !grid.dealias_keep(idx) {
            continue;
        }
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = if conj == idx {
            0.0
        } else {
            rng.sample(StandardNormal)
        };
        f.hat_mut()[idx] = Complex64::new(re, im);
        if conj != idx {
            f.hat_mut()[conj] = Complex64::new(re, -im);
        }
    }
    f
}

fn rescale_to_norm(
    f: &mut ScalarField,
    spec: BesovSpec,
    target: f64,
    what: &str,
) -> Result<()> {
    if target == 0.0 {
        *f = ScalarField::zeros(*f.grid());
        return Ok(());
    }
    let measured = hybrid_besov_norm(f, spec);
    if measured == 0.0 {
        return Err(Error::Recipe(format!(
            "{what}: frequency band carries no modes, cannot reach a nonzero target norm"
        )));
    }
    f.scale(target / measured);
    Ok(())
}

fn rescale_vector_to_norm(
    u: &mut VectorField,
    spec: BesovSpec,
    target: f64,
    what: &str,
) -> Result<()> {
    if target == 0.0 {
        *u = VectorField::zeros(*u.grid());
        return Ok(());
    }
    let measured = hybrid_besov_norm_vector(u, spec);
    if measured == 0.0 {
        return Err(Error::Recipe(format!(
            "{what}: frequency band carries no modes, cannot reach a nonzero target norm"
        )));
    }
    u.scale(target / measured);
    Ok(())
}

/// A seeded Gaussian band-limited scalar rescaled exactly to a target norm.
pub fn seeded_band_scalar(
    grid: &Grid,
    seed: u64,
    band: (f64, f64),
    spec: BesovSpec,
    target: f64,
) -> Result<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = random_band_scalar(grid, &mut rng, band.0, band.1);
    rescale_to_norm(&mut f, spec, target, "scalar")?;
    Ok(f)
}

/// A seeded Gaussian band-limited velocity rescaled exactly to a target norm.
pub fn seeded_band_velocity(
    grid: &Grid,
    seed: u64,
    band: (f64, f64),
    spec: BesovSpec,
    target: f64,
) -> Result<VectorField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = VectorField::from_components(
        (0..grid.dim())
            .map(|_| random_band_scalar(grid, &mut rng, band.0, band.1))
            .collect(),
    )?;
    rescale_vector_to_norm(&mut u, spec, target, "velocity")?;
    Ok(u)
}

/// Reject states whose pointwise values leave the window on which the
/// chart's equations are meaningful.
fn check_recipe_admissibility(state: &State, c: &DerivedConstants) -> Result<()> {
    match state.chart() {
        Chart::GlobalModified => {
            let radius = c.admissible_radius();
            let (name1, name2) = state.chart().scalar_names();
            for (f, name) in [(state.scalar1(), name1), (state.scalar2(), name2)] {
                let sup = f.sup_norm();
                if sup > radius {
                    return Err(Error::Recipe(format!(
                        "amplitude of {name} breaches the pointwise chart window: sup = {sup:.6e} > {radius:.6e}; lower the target norm"
                    )));
                }
            }
        }
        Chart::LocalModified => {
            let (rho_min, _) = state.scalar1().min_with_index();
            if 1.0 + rho_min <= VACUUM_GUARD {
                return Err(Error::Recipe(format!(
                    "initial 1 + rho reaches {:.6e}, at or below the vacuum guard; lower the target norm",
                    1.0 + rho_min
                )));
            }
            let (g_min, _) = state.scalar2().min_with_index();
            if g_min + c.n_bar < 0.0 {
                return Err(Error::Recipe(format!(
                    "initial g + n_bar reaches {:.6e} < 0 (gas mass would be negative); lower the target norm or raise n_bar",
                    g_min + c.n_bar
                )));
            }
        }
        Chart::Physical => {
            let (m_min, _) = state.scalar1().min_with_index();
            if m_min <= VACUUM_GUARD {
                return Err(Error::Recipe(format!(
                    "initial liquid mass reaches {m_min:.6e}, at or below the vacuum guard"
                )));
            }
        }
    }
    Ok(())
}

/// Build the initial state for a scenario: deterministic in (recipe, seed),
/// target norms hit exactly by linear rescaling, inadmissible amplitudes
/// rejected.
pub fn make_initial_data(
    recipe: &InitialData,
    grid: &Grid,
    chart: Chart,
    c: &DerivedConstants,
    seed: u64,
) -> Result<State> {
    let dim = grid.dim();
    let state = match recipe {
        InitialData::Equilibrium => State::new(
            chart,
            ScalarField::zeros(*grid),
            ScalarField::zeros(*grid),
            VectorField::zeros(*grid),
        )?,
        InitialData::RandomBands(band) => {
            if !(band.band_lo >= 0.0) || !(band.band_hi >= band.band_lo) {
                return Err(Error::Recipe(
                    "band limits must satisfy 0 <= band_lo <= band_hi".into(),
                ));
            }
            if band.band_hi > grid.dealias_limit() as f64 {
                return Err(Error::Recipe(format!(
                    "band_hi = {} exceeds the dealiased resolution {} of the grid",
                    band.band_hi,
                    grid.dealias_limit()
                )));
            }
            for (target, what) in [
                (band.scalar1_norm, "scalar1_norm"),
                (band.scalar2_norm, "scalar2_norm"),
                (band.velocity_norm, "velocity_norm"),
            ] {
                if !(target >= 0.0) || !target.is_finite() {
                    return Err(Error::Recipe(format!(
                        "{what} must be finite and nonnegative"
                    )));
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s_spec = scalar_data_spec(chart, dim);
            let u_spec = velocity_data_spec(chart, dim);

            let mut s1 = random_band_scalar(grid, &mut rng, band.band_lo, band.band_hi);
            rescale_to_norm(&mut s1, s_spec, band.scalar1_norm, "scalar1")?;
            let mut s2 = random_band_scalar(grid, &mut rng, band.band_lo, band.band_hi);
            rescale_to_norm(&mut s2, s_spec, band.scalar2_norm, "scalar2")?;
            let mut u = VectorField::from_components(
                (0..dim)
                    .map(|_| random_band_scalar(grid, &mut rng, band.band_lo, band.band_hi))
                    .collect(),
            )?;
            rescale_vector_to_norm(&mut u, u_spec, band.velocity_norm, "velocity")?;
            State::new(chart, s1, s2, u)?
        }
        InitialData::Snapshot(path) => {
            let state = snapshot::read_state(path, chart)
                .map_err(|e| Error::Recipe(format!("initial snapshot {}: {e}", path.display())))?;
            if state.grid() != grid {
                return Err(Error::Recipe(format!(
                    "initial snapshot {} was sampled on a different grid",
                    path.display()
                )));
            }
            state
        }
        InitialData::VacuumProbe { amplitude } => {
            if chart != Chart::LocalModified {
                return Err(Error::Recipe(
                    "the vacuum probe is a local-chart construction".into(),
                ));
            }
            if !(amplitude.is_finite() && *amplitude > 0.0) {
                return Err(Error::Recipe("probe amplitude must be positive".into()));
            }
            let a = *amplitude;
            let mut components = vec![ScalarField::from_fn(*grid, |x| {
                a * (x[0].sin() - 0.5 * (2.0 * x[0]).sin())
            })];
            for _ in 1..dim {
                components.push(ScalarField::zeros(*grid));
            }
            State::local_modified(
                ScalarField::zeros(*grid),
                ScalarField::zeros(*grid),
                VectorField::from_components(components)?,
            )?
        }
    };
    check_recipe_admissibility(&state, c)?;
    Ok(state)
}
