//! Deterministic artifact writers: CSV tables and the run manifest.
//! Nothing here depends on wall-clock time or environment, so reruns of
//! the same scenario produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use driftflux::diagnostics::{EstimateReport, SmallnessReport};
use driftflux::error::Fault;
use driftflux::scenario::Scenario;
use driftflux::solver::FriedrichsRadius;
use driftflux::Result;

/// A single CSV cell in the fixed 17-significant-digit float format.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a CSV table from preformatted cells.
pub fn write_csv_rows(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::with_capacity(header.len() + 2 + rows.len() * 32);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Quote a free-text CSV cell.
pub fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

pub fn write_estimates(path: &Path, reports: &[EstimateReport]) -> Result<()> {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                num(r.lhs),
                num(r.implied_constant),
                quote(&r.rhs_shape),
            ]
        })
        .collect();
    write_csv_rows(path, "name,lhs,implied_constant,rhs_shape", &rows)
}

pub fn write_smallness(path: &Path, report: &SmallnessReport) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .conditions
        .iter()
        .map(|c| {
            vec![
                c.name.to_string(),
                num(c.lhs),
                num(c.rhs),
                (if c.satisfied { "1" } else { "0" }).to_string(),
                num(c.critical),
            ]
        })
        .collect();
    write_csv_rows(path, "name,lhs,rhs,satisfied,critical", &rows)
}

/// Bare-key-safe TOML float: shortest representation that round-trips.
fn toml_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn toml_key(k: &str) -> String {
    k.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Accumulates the run manifest: configuration echo, tool versions, and a
/// result section filled in by the scenario runner.
pub struct Manifest {
    body: String,
    result: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(scenario: &Scenario) -> Manifest {
        let mut body = String::new();
        let _ = write!(
            body,
            "[run]\nscenario = \"{}\"\nseed = {}\nbinary = \"driftflux-cli {}\"\nlibrary = \"driftflux {}\"\n\n",
            scenario.name.as_str(),
            scenario.seed,
            env!("CARGO_PKG_VERSION"),
            driftflux::VERSION,
        );
        let g = &scenario.grid;
        let _ = write!(
            body,
            "[grid]\ndim = {}\nn_modes = {}\nbox_length = {}\n\n",
            g.dim(),
            g.n_modes(),
            toml_f64(g.box_length()),
        );
        let p = &scenario.params;
        let _ = write!(
            body,
            "[params]\nmu_tilde = {}\nlambda_tilde = {}\na_l = {}\na_g = {}\nP_l0 = {}\nrho_l0 = {}\nm_bar = {}\nn_bar = {}\n\n",
            toml_f64(p.mu_tilde),
            toml_f64(p.lambda_tilde),
            toml_f64(p.a_l),
            toml_f64(p.a_g),
            toml_f64(p.p_l0),
            toml_f64(p.rho_l0),
            toml_f64(p.m_bar),
            toml_f64(p.n_bar),
        );
        if let Some(cfg) = &scenario.solver {
            let ell = match cfg.ell {
                FriedrichsRadius::Full => "\"full\"".to_string(),
                FriedrichsRadius::Radius(r) => r.to_string(),
            };
            let _ = write!(
                body,
                "[solver]\nchart = \"{}\"\ndt = {}\nt_end = {}\nell = {}\nkeep_mean = {}\ncfl_advective = {}\ncfl_viscous = {}\ndealias = {}\nsnapshot_stride = {}\nfreeze_velocity = {}\nlinear_only = {}\nouter_projection_debug = {}\n\n",
                cfg.chart.name(),
                toml_f64(cfg.dt),
                toml_f64(cfg.t_end),
                ell,
                cfg.keep_mean,
                toml_f64(cfg.cfl_advective),
                toml_f64(cfg.cfl_viscous),
                cfg.dealias,
                cfg.snapshot_stride,
                cfg.freeze_velocity,
                cfg.linear_only,
                cfg.outer_projection_debug,
            );
        }
        if let Some((theta, beta)) = scenario.transport {
            let _ = write!(
                body,
                "[transport]\ntheta = {}\nbeta = {}\n\n",
                toml_f64(theta),
                toml_f64(beta),
            );
        }
        Manifest {
            body,
            result: Vec::new(),
        }
    }

    pub fn add_str(&mut self, key: &str, value: &str) {
        self.result
            .push((toml_key(key), format!("\"{}\"", value.replace('"', "'"))));
    }

    pub fn add_num(&mut self, key: &str, value: f64) {
        self.result.push((toml_key(key), toml_f64(value)));
    }

    pub fn add_int(&mut self, key: &str, value: i64) {
        self.result.push((toml_key(key), value.to_string()));
    }

    pub fn add_bool(&mut self, key: &str, value: bool) {
        self.result.push((toml_key(key), value.to_string()));
    }

    pub fn fault(&mut self, fault: &Fault) {
        self.add_str("fault", &fault.to_string());
    }

    pub fn write(&self, path: &Path, exit_code: u8) -> Result<()> {
        let mut out = self.body.clone();
        out.push_str("[result]\n");
        let status = match exit_code {
            0 => "ok",
            4 => "fault",
            5 => "threshold-failed",
            _ => "error",
        };
        let _ = writeln!(out, "status = \"{status}\"");
        let _ = writeln!(out, "exit_code = {exit_code}");
        for (k, v) in &self.result {
            let _ = writeln!(out, "{k} = {v}");
        }
        fs::write(path, out)?;
        Ok(())
    }
}
