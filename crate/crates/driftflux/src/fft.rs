use crate::grid::Grid;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        cell.borrow_mut()
            .entry((n, forward))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if forward {
                    planner.plan_fft_forward(n)
                } else {
                    planner.plan_fft_inverse(n)
                }
            })
            .clone()
    })
}

/// Apply a one-dimensional transform along every axis of the row-major
/// array `data` of shape `[n_modes; dim]`.
fn transform_axes(grid: &Grid, data: &mut [Complex64], forward: bool) {
    let n = grid.n_modes();
    let total = grid.len();
    debug_assert_eq!(data.len(), total);
    let fft = plan(n, forward);
    let mut line = vec![Complex64::default(); n];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];

    for axis in 0..grid.dim() {
        // Row-major layout: stride between consecutive samples along `axis`.
        let stride = n.pow((grid.dim() - 1 - axis) as u32);
        let block = n * stride;
        let mut base_block = 0;
        while base_block < total {
            for offset in 0..stride {
                let base = base_block + offset;
                if stride == 1 {
                    let slice = &mut data[base..base + n];
                    fft.process_with_scratch(slice, &mut scratch);
                } else {
                    for j in 0..n {
                        line[j] = data[base + j * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for j in 0..n {
                        data[base + j * stride] = line[j];
                    }
                }
            }
            base_block += block;
        }
    }
}

/// Physical samples to spectral coefficients, normalized so the coefficient
/// of a plane wave `exp(i xi . x)` equals its amplitude.
pub(crate) fn forward(grid: &Grid, data: &mut [Complex64]) {
    transform_axes(grid, data, true);
    let scale = 1.0 / grid.len() as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Spectral coefficients to physical samples.
pub(crate) fn inverse(grid: &Grid, data: &mut [Complex64]) {
    transform_axes(grid, data, false);
}
