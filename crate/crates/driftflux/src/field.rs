use crate::error::{Error, Result};
use crate::fft;
use crate::grid::Grid;
use num_complex::Complex64;

/// Real scalar field on a periodic grid, stored as its full complex Fourier
/// coefficient array. Coefficients satisfy the conjugate symmetry
/// `hat(-xi) = conj(hat(xi))` so that physical samples are real.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    hat: Vec<Complex64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> ScalarField {
        ScalarField {
            grid,
            hat: vec![Complex64::default(); grid.len()],
        }
    }

    /// Constant field with the given mean value.
    pub fn constant(grid: Grid, value: f64) -> ScalarField {
        let mut f = ScalarField::zeros(grid);
        f.hat[0] = Complex64::new(value, 0.0);
        f
    }

    pub fn from_physical(grid: Grid, samples: &[f64]) -> Result<ScalarField> {
        if samples.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} samples, got {}",
                grid.len(),
                samples.len()
            )));
        }
        let mut hat: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft::forward(&grid, &mut hat);
        Ok(ScalarField { grid, hat })
    }

    pub fn from_spectral(grid: Grid, hat: Vec<Complex64>) -> Result<ScalarField> {
        if hat.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                hat.len()
            )));
        }
        Ok(ScalarField { grid, hat })
    }

    /// Sample a function of physical coordinates onto the grid.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        let samples: Vec<f64> = (0..grid.len()).map(|idx| f(&grid.point(idx))).collect();
        ScalarField::from_physical(grid, &samples).expect("sample count matches grid")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn hat(&self) -> &[Complex64] {
        &self.hat
    }

    pub fn hat_mut(&mut self) -> &mut [Complex64] {
        &mut self.hat
    }

    pub fn to_physical(&self) -> Vec<f64> {
        let mut buf = self.hat.clone();
        fft::inverse(&self.grid, &mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Mean value over the box (the zero-frequency coefficient).
    pub fn mean(&self) -> f64 {
        self.hat[0].re
    }

    /// Integral over the box.
    pub fn integral(&self) -> f64 {
        self.mean() * self.grid.volume()
    }

    /// `L^2` norm over the box, `sqrt(integral of f^2)`.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.hat.iter().map(|c| c.norm_sqr()).sum();
        (s * self.grid.volume()).sqrt()
    }

    /// `L^2` inner product over the box.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let s: f64 = self
            .hat
            .iter()
            .zip(other.hat.iter())
            .map(|(a, b)| (a * b.conj()).re)
            .sum();
        s * self.grid.volume()
    }

    /// Pointwise maximum of |f| over the grid.
    pub fn sup_norm(&self) -> f64 {
        self.to_physical().iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Pointwise minimum over the grid, with the flat index of a minimizer.
    pub fn min_with_index(&self) -> (f64, usize) {
        let phys = self.to_physical();
        let mut best = (f64::INFINITY, 0usize);
        for (i, &v) in phys.iter().enumerate() {
            if v < best.0 {
                best = (v, i);
            }
        }
        best
    }

    /// Pointwise maximum over the grid.
    pub fn max_value(&self) -> f64 {
        self.to_physical()
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn is_finite(&self) -> bool {
        self.hat.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scale(&mut self, a: f64) {
        for c in self.hat.iter_mut() {
            *c *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> ScalarField {
        let mut f = self.clone();
        f.scale(a);
        f
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        debug_assert_eq!(self.grid, other.grid);
        for (c, o) in self.hat.iter_mut().zip(other.hat.iter()) {
            *c += a * o;
        }
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        let mut f = self.clone();
        f.axpy(1.0, other);
        f
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        let mut f = self.clone();
        f.axpy(-1.0, other);
        f
    }

    /// Add a constant (shifts only the mean mode).
    pub fn add_constant(&self, v: f64) -> ScalarField {
        let mut f = self.clone();
        f.hat[0] += Complex64::new(v, 0.0);
        f
    }

    /// Partial derivative along `axis` via the spectral multiplier `i*xi_axis`.
    /// The Nyquist component is dropped so the result stays real.
    pub fn derivative(&self, axis: usize) -> ScalarField {
        assert!(axis < self.grid.dim(), "axis {axis} out of range");
        let g = self.grid;
        let unit = g.freq_unit();
        let mut hat = self.hat.clone();
        for (idx, c) in hat.iter_mut().enumerate() {
            let coords = g.decode(idx);
            let xi = unit * g.int_freq_deriv(coords[axis]) as f64;
            *c *= Complex64::new(0.0, xi);
        }
        ScalarField { grid: g, hat }
    }

    /// Laplacian via the multiplier `-|xi|^2`, using the same Nyquist-free
    /// frequencies as `derivative` so that div(grad f) == laplacian(f)
    /// exactly for every representable field.
    pub fn laplacian(&self) -> ScalarField {
        let g = self.grid;
        let mut hat = self.hat.clone();
        for (idx, c) in hat.iter_mut().enumerate() {
            let xi = g.xi_deriv(idx);
            let m2: f64 = xi.iter().map(|v| v * v).sum();
            *c *= -m2;
        }
        ScalarField { grid: g, hat }
    }

    /// Zero every coefficient outside the 2/3 dealiasing box.
    pub fn dealias(&mut self) {
        let g = self.grid;
        for (idx, c) in self.hat.iter_mut().enumerate() {
            if !g.dealias_keep(idx) {
                *c = Complex64::default();
            }
        }
    }

    pub fn dealiased(&self) -> ScalarField {
        let mut f = self.clone();
        f.dealias();
        f
    }

    /// Pointwise product computed on the physical grid, returned to spectral
    /// space without truncation.
    pub fn mul_physical(&self, other: &ScalarField) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        let a = self.to_physical();
        let b = other.to_physical();
        let prod: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x * y).collect();
        ScalarField::from_physical(self.grid, &prod).expect("same grid")
    }

    /// Pointwise product computed on the physical grid, returned to spectral
    /// space through the 2/3 truncation rule.
    pub fn mul_dealiased(&self, other: &ScalarField) -> ScalarField {
        let mut f = self.mul_physical(other);
        f.dealias();
        f
    }

    /// Map physical samples pointwise, returning to spectral space through
    /// the 2/3 truncation rule.
    pub fn map_dealiased(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        let mapped: Vec<f64> = self.to_physical().into_iter().map(f).collect();
        let mut out = ScalarField::from_physical(self.grid, &mapped).expect("same grid");
        out.dealias();
        out
    }

    /// Largest deviation from conjugate symmetry, `max |hat(-xi) - conj(hat(xi))|`.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let g = self.grid;
        let mut worst: f64 = 0.0;
        for idx in 0..g.len() {
            let j = g.conjugate_index(idx);
            let d = (self.hat[j] - self.hat[idx].conj()).norm();
            worst = worst.max(d);
        }
        worst
    }
}

/// Velocity-like field with `dim` scalar components.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> VectorField {
        VectorField {
            components: (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    pub fn from_components(components: Vec<ScalarField>) -> Result<VectorField> {
        if components.is_empty() {
            return Err(Error::ArityMismatch("vector field needs components".into()));
        }
        let grid = *components[0].grid();
        if components.len() != grid.dim() {
            return Err(Error::ArityMismatch(format!(
                "vector field on a {}-d grid needs {} components, got {}",
                grid.dim(),
                grid.dim(),
                components.len()
            )));
        }
        if components.iter().any(|c| *c.grid() != grid) {
            return Err(Error::GridMismatch(
                "vector components live on different grids".into(),
            ));
        }
        Ok(VectorField { components })
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut ScalarField {
        &mut self.components[i]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }

    pub fn scale(&mut self, a: f64) {
        for c in self.components.iter_mut() {
            c.scale(a);
        }
    }

    pub fn scaled(&self, a: f64) -> VectorField {
        let mut v = self.clone();
        v.scale(a);
        v
    }

    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        for (c, o) in self.components.iter_mut().zip(other.components.iter()) {
            c.axpy(a, o);
        }
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        let mut v = self.clone();
        v.axpy(1.0, other);
        v
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        let mut v = self.clone();
        v.axpy(-1.0, other);
        v
    }

    /// `sqrt(sum_i ||u_i||_2^2)`, the L^2 norm of |u|.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.components.iter().map(|c| c.l2_norm().powi(2)).sum();
        s.sqrt()
    }

    /// Pointwise maximum of the Euclidean speed |u(x)|.
    pub fn sup_speed(&self) -> f64 {
        let phys: Vec<Vec<f64>> = self.components.iter().map(|c| c.to_physical()).collect();
        let mut worst: f64 = 0.0;
        for i in 0..self.grid().len() {
            let s: f64 = phys.iter().map(|p| p[i] * p[i]).sum();
            worst = worst.max(s);
        }
        worst.sqrt()
    }

    pub fn divergence(&self) -> ScalarField {
        let mut out = self.components[0].derivative(0);
        for a in 1..self.dim() {
            out.axpy(1.0, &self.components[a].derivative(a));
        }
        out
    }

    pub fn laplacian(&self) -> VectorField {
        VectorField {
            components: self.components.iter().map(|c| c.laplacian()).collect(),
        }
    }

    pub fn dealias(&mut self) {
        for c in self.components.iter_mut() {
            c.dealias();
        }
    }

    /// Pointwise maximum over the grid of the Frobenius norm of the velocity
    /// gradient, `max_x sqrt(sum_{a,i} (d_a u_i)^2)`.
    pub fn grad_sup_norm(&self) -> f64 {
        let d = self.dim();
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(d * d);
        for i in 0..d {
            for a in 0..d {
                grads.push(self.components[i].derivative(a).to_physical());
            }
        }
        let mut worst: f64 = 0.0;
        for idx in 0..self.grid().len() {
            let s: f64 = grads.iter().map(|g| g[idx] * g[idx]).sum();
            worst = worst.max(s);
        }
        worst.sqrt()
    }
}

pub fn gradient(f: &ScalarField) -> VectorField {
    VectorField {
        components: (0..f.grid().dim()).map(|a| f.derivative(a)).collect(),
    }
}

pub fn grad_div(u: &VectorField) -> VectorField {
    gradient(&u.divergence())
}

/// Advective derivative `u . grad f`, formed on the physical grid with a
/// single spectral return through the 2/3 truncation rule.
pub fn advect_scalar(u: &VectorField, f: &ScalarField) -> ScalarField {
    advect_scalar_opt(u, f, true)
}

/// As [`advect_scalar`], with the truncation made optional.
pub fn advect_scalar_opt(u: &VectorField, f: &ScalarField, dealias: bool) -> ScalarField {
    let grid = *f.grid();
    let mut acc = vec![0.0f64; grid.len()];
    for a in 0..grid.dim() {
        let ua = u.component(a).to_physical();
        let dfa = f.derivative(a).to_physical();
        for (acc_v, (x, y)) in acc.iter_mut().zip(ua.iter().zip(dfa.iter())) {
            *acc_v += x * y;
        }
    }
    let mut out = ScalarField::from_physical(grid, &acc).expect("same grid");
    if dealias {
        out.dealias();
    }
    out
}

/// Advective derivative `u . grad v` applied to each component of `v`.
pub fn advect_vector(u: &VectorField, v: &VectorField) -> VectorField {
    advect_vector_opt(u, v, true)
}

/// As [`advect_vector`], with the truncation made optional.
pub fn advect_vector_opt(u: &VectorField, v: &VectorField, dealias: bool) -> VectorField {
    VectorField {
        components: (0..v.dim())
            .map(|i| advect_scalar_opt(u, v.component(i), dealias))
            .collect(),
    }
}

/// Operations accepted by [`spectral_derivative`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivOp {
    Gradient,
    Divergence,
    Laplacian,
}

/// Scalar-or-vector wrapper for the derivative entry point.
#[derive(Debug, Clone)]
pub enum Field {
    Scalar(ScalarField),
    Vector(VectorField),
}

/// Apply a spectral differential operator with arity checking: gradients act
/// on scalars, divergences on vectors, Laplacians on either.
pub fn spectral_derivative(f: &Field, op: DerivOp) -> Result<Field> {
    match (f, op) {
        (Field::Scalar(s), DerivOp::Gradient) => Ok(Field::Vector(gradient(s))),
        (Field::Vector(v), DerivOp::Divergence) => Ok(Field::Scalar(v.divergence())),
        (Field::Scalar(s), DerivOp::Laplacian) => Ok(Field::Scalar(s.laplacian())),
        (Field::Vector(v), DerivOp::Laplacian) => Ok(Field::Vector(v.laplacian())),
        (Field::Scalar(_), DerivOp::Divergence) => Err(Error::ArityMismatch(
            "divergence of a scalar field".into(),
        )),
        (Field::Vector(_), DerivOp::Gradient) => Err(Error::ArityMismatch(
            "gradient of a vector field (componentwise gradients are taken explicitly)".into(),
        )),
    }
}
