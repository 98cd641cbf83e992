//! Two-dimensional FFT on the grid, plus the ball-sum scan used by the
//! local energy diagnostics.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::Result;
use crate::grid::{check_radius, GridSpec, ScalarField};

pub(crate) struct Fft2 {
    nx: usize,
    ny: usize,
    fx: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
    iy: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx: grid.nx,
            ny: grid.ny,
            fx: planner.plan_fft_forward(grid.nx),
            fy: planner.plan_fft_forward(grid.ny),
            ix: planner.plan_fft_inverse(grid.nx),
            iy: planner.plan_fft_inverse(grid.ny),
        }
    }

    fn apply(&self, data: &mut [Complex64], fx: &Arc<dyn Fft<f64>>, fy: &Arc<dyn Fft<f64>>) {
        fx.process(data);
        let mut col = vec![Complex64::new(0.0, 0.0); self.ny];
        for i in 0..self.nx {
            for j in 0..self.ny {
                col[j] = data[j * self.nx + i];
            }
            fy.process(&mut col);
            for j in 0..self.ny {
                data[j * self.nx + i] = col[j];
            }
        }
    }

    /// Unnormalized forward transform of row-major `data` (`j*nx + i`).
    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, &self.fx, &self.fy);
    }

    /// Inverse transform including the `1/(nx ny)` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, &self.ix, &self.iy);
        let s = 1.0 / (self.nx * self.ny) as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }
}

/// Signed integer frequency of FFT bin `k` of `n`; the Nyquist bin is negative.
#[inline]
pub(crate) fn signed_index(k: usize, n: usize) -> f64 {
    if k < n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// For every grid point `p`, `Σ_{q ∈ B_R(p)} density(q) · cellarea`.
/// Agrees with `ball_mask` centered at `p` integrated against `density`.
pub fn ball_sums(density: &ScalarField, radius: f64) -> Result<ScalarField> {
    let g = density.grid;
    check_radius(&g, radius)?;
    let fft = Fft2::new(&g);
    let mut mask: Vec<Complex64> = (0..g.len())
        .map(|p| if g.lattice_distance(p, 0) <= radius { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
        .collect();
    let mut d: Vec<Complex64> = density.data.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    fft.forward(&mut mask);
    fft.forward(&mut d);
    for (a, b) in d.iter_mut().zip(&mask) {
        *a *= b;
    }
    fft.inverse(&mut d);
    let area = g.cell_area();
    let mut out = ScalarField::zeros(g, 1, false);
    for (o, v) in out.data.iter_mut().zip(&d) {
        *o = v.re * area;
    }
    Ok(out)
}
