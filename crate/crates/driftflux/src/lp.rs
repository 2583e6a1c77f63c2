use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;
use serde::{Deserialize, Serialize};

fn bump(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth transition g(t) = h(t)/(h(t)+h(1-t)) with h(t) = exp(-1/t) for
/// t > 0. Equals 0 at t <= 0 and 1 at t >= 1, C-infinity in between.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = bump(t);
        a / (a + bump(1.0 - t))
    }
}

/// Radial low-pass cutoff: 1 on [0, 3/4], 0 on [4/3, inf), smooth monotone
/// decreasing in between.
pub fn psi_cutoff(r: f64) -> f64 {
    const LO: f64 = 0.75;
    const HI: f64 = 4.0 / 3.0;
    if r <= LO {
        1.0
    } else if r >= HI {
        0.0
    } else {
        smooth_step((HI - r) / (HI - LO))
    }
}

/// Annulus cutoff phi(r) = psi(r/2) - psi(r), supported in (3/4, 8/3) and
/// telescoping to 1 over dyadic rescalings of any positive radius.
pub fn phi_cutoff(r: f64) -> f64 {
    psi_cutoff(0.5 * r) - psi_cutoff(r)
}

/// Exponent pair selecting a hybrid Besov norm: the `low` exponent weighs
/// dyadic blocks k <= 0, the `high` exponent blocks k > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovSpec {
    pub low: f64,
    pub high: f64,
}

impl BesovSpec {
    pub fn hybrid(low: f64, high: f64) -> BesovSpec {
        BesovSpec { low, high }
    }

    /// The non-hybrid space with a single exponent.
    pub fn uniform(s: f64) -> BesovSpec {
        BesovSpec { low: s, high: s }
    }

    /// Dyadic weight 2^{k s(k)} applied to block k.
    pub fn weight(&self, k: i32) -> f64 {
        let e = if k <= 0 { self.low } else { self.high };
        (k as f64 * e).exp2()
    }
}

/// Inclusive range of dyadic indices k whose annulus supp phi(2^{-k} .)
/// meets the grid's nonzero frequency magnitudes. Outside this range every
/// block vanishes identically.
pub fn block_range(grid: &Grid) -> (i32, i32) {
    let xi_lo = grid.freq_unit();
    let xi_hi = grid.max_frequency();
    // phi(2^{-k} |xi|) != 0 requires 3/4 < 2^{-k}|xi| < 8/3, i.e.
    // log2(3|xi|/8) < k < log2(4|xi|/3).
    let k_min = (3.0 * xi_lo / 8.0).log2().floor() as i32 + 1;
    let k_max = (4.0 * xi_hi / 3.0).log2().ceil() as i32 - 1;
    (k_min, k_max)
}

/// Frequency-localized piece of `f` supported in the dyadic annulus
/// 2^k [3/4, 8/3]. The zero mode is annihilated for every k.
pub fn lp_block(f: &ScalarField, k: i32) -> ScalarField {
    let grid = *f.grid();
    let scale = (-k as f64).exp2();
    let mut out = f.clone();
    for (idx, c) in out.hat_mut().iter_mut().enumerate() {
        *c *= phi_cutoff(scale * grid.xi_mag(idx));
    }
    out
}

/// All block L2 norms of a field, indexed from `k_min`, computed in one
/// pass over the spectrum by Parseval.
#[derive(Debug, Clone)]
pub struct BlockNorms {
    k_min: i32,
    values: Vec<f64>,
}

impl BlockNorms {
    pub fn k_min(&self) -> i32 {
        self.k_min
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Norm of block k, zero outside the stored range.
    pub fn get(&self, k: i32) -> f64 {
        let off = k - self.k_min;
        if off < 0 || off as usize >= self.values.len() {
            0.0
        } else {
            self.values[off as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.k_min + i as i32, v))
    }

    /// Hybrid-weighted block sum.
    pub fn weighted_sum(&self, spec: BesovSpec) -> f64 {
        self.iter().map(|(k, v)| spec.weight(k) * v).sum()
    }

    fn from_squares(k_min: i32, squares: Vec<f64>, volume: f64) -> BlockNorms {
        BlockNorms {
            k_min,
            values: squares.into_iter().map(|s| (s * volume).sqrt()).collect(),
        }
    }
}

fn accumulate_block_squares(f: &ScalarField, k_min: i32, squares: &mut [f64]) {
    let grid = f.grid();
    for (idx, c) in f.hat().iter().enumerate() {
        let mag = grid.xi_mag(idx);
        if mag == 0.0 {
            continue;
        }
        let power = c.norm_sqr();
        for (off, sq) in squares.iter_mut().enumerate() {
            let k = k_min + off as i32;
            let w = phi_cutoff((-k as f64).exp2() * mag);
            if w != 0.0 {
                *sq += w * w * power;
            }
        }
    }
}

pub fn block_l2_norms(f: &ScalarField) -> BlockNorms {
    let grid = f.grid();
    let (k_min, k_max) = block_range(grid);
    let mut squares = vec![0.0f64; (k_max - k_min + 1) as usize];
    accumulate_block_squares(f, k_min, &mut squares);
    BlockNorms::from_squares(k_min, squares, grid.volume())
}

/// Block norms of a vector field, Euclidean across components:
/// ||Delta_k u||_2 = sqrt(sum_i ||Delta_k u_i||_2^2).
pub fn block_l2_norms_vector(u: &VectorField) -> BlockNorms {
    let grid = u.grid();
    let (k_min, k_max) = block_range(grid);
    let mut squares = vec![0.0f64; (k_max - k_min + 1) as usize];
    for c in u.components() {
        accumulate_block_squares(c, k_min, &mut squares);
    }
    BlockNorms::from_squares(k_min, squares, grid.volume())
}

/// Hybrid Besov norm: sum over k <= 0 of 2^{k s} ||Delta_k f||_2 plus sum
/// over k > 0 of 2^{k t} ||Delta_k f||_2.
pub fn hybrid_besov_norm(f: &ScalarField, spec: BesovSpec) -> f64 {
    block_l2_norms(f).weighted_sum(spec)
}

pub fn hybrid_besov_norm_vector(u: &VectorField, spec: BesovSpec) -> f64 {
    block_l2_norms_vector(u).weighted_sum(spec)
}

/// Sharp spectral truncation to the annulus 1/ell <= |xi| <= ell. The zero
/// mode is kept iff `keep_mean` is set.
pub fn friedrichs_project(f: &ScalarField, ell: u32, keep_mean: bool) -> ScalarField {
    assert!(ell >= 1, "projection radius must be >= 1");
    let grid = *f.grid();
    let hi = ell as f64;
    let lo = 1.0 / ell as f64;
    let mut out = f.clone();
    for (idx, c) in out.hat_mut().iter_mut().enumerate() {
        let mag = grid.xi_mag(idx);
        let keep = if mag == 0.0 {
            keep_mean
        } else {
            mag >= lo && mag <= hi
        };
        if !keep {
            *c = num_complex::Complex64::default();
        }
    }
    out
}

pub fn friedrichs_project_vector(u: &VectorField, ell: u32, keep_mean: bool) -> VectorField {
    VectorField::from_components(
        u.components()
            .iter()
            .map(|c| friedrichs_project(c, ell, keep_mean))
            .collect(),
    )
    .expect("component count unchanged")
}

/// Time integrability index for Chemin-Lerner norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeLp {
    One,
    Two,
    Inf,
}

/// Trapezoidal weights for samples at the given times.
fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0f64; n];
    for i in 0..n.saturating_sub(1) {
        let h = 0.5 * (times[i + 1] - times[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

fn time_lp(values: &[f64], weights: &[f64], p: TimeLp) -> f64 {
    match p {
        TimeLp::One => values.iter().zip(weights).map(|(v, w)| v * w).sum(),
        TimeLp::Two => values
            .iter()
            .zip(weights)
            .map(|(v, w)| v * v * w)
            .sum::<f64>()
            .sqrt(),
        TimeLp::Inf => values.iter().fold(0.0, |m, &v| m.max(v)),
    }
}

/// Time series of block norms of one field, sampled on an increasing time
/// grid. Backs both Chemin-Lerner norms (time norm inside the block sum)
/// and ordinary time norms of Besov norms (block sum inside).
#[derive(Debug, Clone)]
pub struct BlockSeries {
    k_min: i32,
    n_blocks: usize,
    times: Vec<f64>,
    samples: Vec<Vec<f64>>,
}

impl BlockSeries {
    pub fn new(grid: &Grid) -> BlockSeries {
        let (k_min, k_max) = block_range(grid);
        BlockSeries {
            k_min,
            n_blocks: (k_max - k_min + 1) as usize,
            times: Vec::new(),
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, norms: &BlockNorms) -> Result<()> {
        if norms.k_min != self.k_min || norms.values.len() != self.n_blocks {
            return Err(Error::GridMismatch(
                "block norms come from a different grid".into(),
            ));
        }
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(Error::InvalidConfig(format!(
                    "sample times must increase, got {t} after {last}"
                )));
            }
        }
        self.times.push(t);
        self.samples.push(norms.values.clone());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn k_min(&self) -> i32 {
        self.k_min
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    /// Hybrid-weighted block sum of one stored sample.
    pub fn besov_at(&self, i: usize, spec: BesovSpec) -> f64 {
        self.samples[i]
            .iter()
            .enumerate()
            .map(|(off, v)| spec.weight(self.k_min + off as i32) * v)
            .sum()
    }

    /// The instantaneous hybrid Besov norm at every stored sample time.
    pub fn besov_series(&self, spec: BesovSpec) -> Vec<f64> {
        (0..self.times.len())
            .map(|i| self.besov_at(i, spec))
            .collect()
    }

    fn require_samples(&self) -> Result<()> {
        if self.times.len() < 2 {
            return Err(Error::Estimate(format!(
                "time norms need at least 2 samples, got {}",
                self.times.len()
            )));
        }
        Ok(())
    }

    /// Chemin-Lerner norm: per block the discrete time-L^p norm of
    /// t -> ||Delta_k f(t)||_2, then the hybrid-weighted block sum.
    pub fn chemin_lerner(&self, p: TimeLp, spec: BesovSpec) -> Result<f64> {
        self.require_samples()?;
        let w = trapezoid_weights(&self.times);
        let mut total = 0.0;
        let mut block = Vec::with_capacity(self.times.len());
        for off in 0..self.n_blocks {
            block.clear();
            block.extend(self.samples.iter().map(|s| s[off]));
            total += spec.weight(self.k_min + off as i32) * time_lp(&block, &w, p);
        }
        Ok(total)
    }

    /// Plain time-L^p norm of t -> hybrid Besov norm. Dominated by the
    /// Chemin-Lerner norm with the same indices.
    pub fn time_lp_of_besov(&self, p: TimeLp, spec: BesovSpec) -> Result<f64> {
        self.require_samples()?;
        let w = trapezoid_weights(&self.times);
        let besov: Vec<f64> = self
            .samples
            .iter()
            .map(|s| {
                s.iter()
                    .enumerate()
                    .map(|(off, v)| spec.weight(self.k_min + off as i32) * v)
                    .sum()
            })
            .collect();
        Ok(time_lp(&besov, &w, p))
    }
}

fn series_from_samples(
    times: &[f64],
    norms: impl Iterator<Item = BlockNorms>,
    grid: &Grid,
) -> Result<BlockSeries> {
    let mut series = BlockSeries::new(grid);
    for (t, n) in times.iter().zip(norms) {
        series.push(*t, &n)?;
    }
    Ok(series)
}

/// Chemin-Lerner norm of a uniformly sampled scalar history starting at
/// t = 0 with the given spacing.
pub fn chemin_lerner_norm(
    history: &[ScalarField],
    spacing: f64,
    p: TimeLp,
    spec: BesovSpec,
) -> Result<f64> {
    if history.len() < 2 {
        return Err(Error::Estimate(format!(
            "time norms need at least 2 samples, got {}",
            history.len()
        )));
    }
    if !(spacing > 0.0) {
        return Err(Error::InvalidConfig("sample spacing must be positive".into()));
    }
    let grid = *history[0].grid();
    let times: Vec<f64> = (0..history.len()).map(|i| i as f64 * spacing).collect();
    let series = series_from_samples(&times, history.iter().map(block_l2_norms), &grid)?;
    series.chemin_lerner(p, spec)
}

pub fn chemin_lerner_norm_vector(
    history: &[VectorField],
    spacing: f64,
    p: TimeLp,
    spec: BesovSpec,
) -> Result<f64> {
    if history.len() < 2 {
        return Err(Error::Estimate(format!(
            "time norms need at least 2 samples, got {}",
            history.len()
        )));
    }
    if !(spacing > 0.0) {
        return Err(Error::InvalidConfig("sample spacing must be positive".into()));
    }
    let grid = *history[0].grid();
    let times: Vec<f64> = (0..history.len()).map(|i| i as f64 * spacing).collect();
    let series = series_from_samples(&times, history.iter().map(block_l2_norms_vector), &grid)?;
    series.chemin_lerner(p, spec)
}
