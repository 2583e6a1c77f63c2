use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform collocation grid on the periodic box `[0, box_length)^dim`.
///
/// Fields are represented by `n_modes` equispaced samples per axis. The
/// resolvable integer wavenumbers per axis run from `-n_modes/2 + 1` to
/// `n_modes/2 - 1`; the Nyquist index `n_modes/2` is carried but treated as
/// unresolvable by the derivative operators (its odd-derivative weight is
/// zero so that real fields stay real and the divergence of a gradient
/// equals the Laplacian as an operator identity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n_modes: usize,
    box_length: f64,
}

impl Grid {
    pub fn new(dim: usize, n_modes: usize, box_length: f64) -> Result<Grid> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidConfig(format!(
                "grid dimension must be 2 or 3, got {dim}"
            )));
        }
        if n_modes < 8 || !n_modes.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "n_modes must be a power of two >= 8, got {n_modes}"
            )));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "box_length must be positive and finite, got {box_length}"
            )));
        }
        Ok(Grid {
            dim,
            n_modes,
            box_length,
        })
    }

    /// Grid over `[0, 2*pi)^dim`, the natural box for integer frequencies.
    pub fn standard(dim: usize, n_modes: usize) -> Result<Grid> {
        Grid::new(dim, n_modes, std::f64::consts::TAU)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    /// Total number of samples, `n_modes^dim`.
    pub fn len(&self) -> usize {
        self.n_modes.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Mesh spacing `box_length / n_modes`.
    pub fn spacing(&self) -> f64 {
        self.box_length / self.n_modes as f64
    }

    /// Volume of one cell, `spacing^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Volume of the whole box.
    pub fn volume(&self) -> f64 {
        self.box_length.powi(self.dim as i32)
    }

    /// Smallest positive frequency, `2*pi / box_length`.
    pub fn freq_unit(&self) -> f64 {
        std::f64::consts::TAU / self.box_length
    }

    /// Signed integer wavenumber for sample index `i` along one axis.
    /// The Nyquist index maps to `+n_modes/2`.
    #[inline]
    pub fn int_freq(&self, i: usize) -> i64 {
        let n = self.n_modes as i64;
        let i = i as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Integer wavenumber used by derivative multipliers: as `int_freq`, but
    /// the Nyquist component is zeroed so odd derivatives of real fields
    /// remain real.
    #[inline]
    pub fn int_freq_deriv(&self, i: usize) -> i64 {
        let k = self.int_freq(i);
        if 2 * k == self.n_modes as i64 {
            0
        } else {
            k
        }
    }

    /// Decode a flat row-major index into per-axis sample indices.
    #[inline]
    pub fn decode(&self, mut idx: usize) -> [usize; 3] {
        let n = self.n_modes;
        let mut c = [0usize; 3];
        for a in (0..self.dim).rev() {
            c[a] = idx % n;
            idx /= n;
        }
        c
    }

    /// Flat row-major index of per-axis sample indices.
    #[inline]
    pub fn encode(&self, c: &[usize; 3]) -> usize {
        let n = self.n_modes;
        let mut idx = 0usize;
        for a in 0..self.dim {
            idx = idx * n + c[a];
        }
        idx
    }

    /// Flat index of the mode with all frequencies negated (the conjugate
    /// partner of `idx` for real fields).
    #[inline]
    pub fn conjugate_index(&self, idx: usize) -> usize {
        let n = self.n_modes;
        let c = self.decode(idx);
        let mut r = [0usize; 3];
        for a in 0..self.dim {
            r[a] = (n - c[a]) % n;
        }
        self.encode(&r)
    }

    /// Physical frequency vector of a spectral index (derivative convention).
    #[inline]
    pub fn xi_deriv(&self, idx: usize) -> [f64; 3] {
        let c = self.decode(idx);
        let u = self.freq_unit();
        let mut xi = [0.0f64; 3];
        for a in 0..self.dim {
            xi[a] = u * self.int_freq_deriv(c[a]) as f64;
        }
        xi
    }

    /// Euclidean magnitude of the frequency vector of a spectral index,
    /// counting the Nyquist component at `n_modes/2`.
    #[inline]
    pub fn xi_mag(&self, idx: usize) -> f64 {
        let c = self.decode(idx);
        let mut s = 0i64;
        for a in 0..self.dim {
            let k = self.int_freq(c[a]);
            s += k * k;
        }
        self.freq_unit() * (s as f64).sqrt()
    }

    /// Largest frequency magnitude on the lattice (the corner mode with
    /// every axis at Nyquist), `freq_unit * sqrt(dim) * n_modes/2`.
    pub fn max_frequency(&self) -> f64 {
        self.freq_unit() * (self.dim as f64).sqrt() * (self.n_modes as f64 / 2.0)
    }

    /// Physical coordinates of a flat sample index.
    #[inline]
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let c = self.decode(idx);
        let h = self.spacing();
        (0..self.dim).map(|a| h * c[a] as f64).collect()
    }

    /// Largest per-axis integer wavenumber kept by the 2/3 dealiasing rule.
    pub fn dealias_limit(&self) -> i64 {
        (self.n_modes / 3) as i64
    }

    /// True when every axis frequency of the mode survives the 2/3 rule.
    #[inline]
    pub fn dealias_keep(&self, idx: usize) -> bool {
        let c = self.decode(idx);
        let limit = self.dealias_limit();
        (0..self.dim).all(|a| self.int_freq(c[a]).abs() <= limit)
    }
}
