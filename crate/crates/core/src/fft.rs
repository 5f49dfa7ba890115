//! Thin wrapper around rustfft for in-place transforms on row-major 1D/2D
//! complex fields. Inverse transforms are normalised by 1/N so that a
//! forward-inverse round trip is the identity up to rounding.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct FieldFft {
    shape: [usize; 2],
    dims: usize,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    scratch: Vec<Complex64>,
    transpose: Vec<Complex64>,
}

impl FieldFft {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let dims = shape.len();
        let mut full = [1usize; 2];
        full[..dims].copy_from_slice(shape);
        let forward: Vec<_> = (0..dims)
            .map(|a| planner.plan_fft_forward(full[a]))
            .collect();
        let inverse: Vec<_> = (0..dims)
            .map(|a| planner.plan_fft_inverse(full[a]))
            .collect();
        let scratch_len = forward
            .iter()
            .chain(&inverse)
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        let total = full[0] * full[1];
        FieldFft {
            shape: full,
            dims,
            forward,
            inverse,
            scratch: vec![Complex64::default(); scratch_len],
            transpose: if dims == 2 {
                vec![Complex64::default(); total]
            } else {
                Vec::new()
            },
        }
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    /// Inverse transform including the 1/N normalisation.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.transform(data, true);
        let scale = 1.0 / data.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&mut self, data: &mut [Complex64], inv: bool) {
        let plans = if inv { &self.inverse } else { &self.forward };
        if self.dims == 1 {
            plans[0].process_with_scratch(data, &mut self.scratch);
            return;
        }
        let (nx, ny) = (self.shape[0], self.shape[1]);
        // rows (axis 1) are contiguous
        for row in data.chunks_exact_mut(ny) {
            plans[1].process_with_scratch(row, &mut self.scratch);
        }
        // columns (axis 0) via transpose
        for i in 0..nx {
            for j in 0..ny {
                self.transpose[j * nx + i] = data[i * ny + j];
            }
        }
        for col in self.transpose.chunks_exact_mut(nx) {
            plans[0].process_with_scratch(col, &mut self.scratch);
        }
        for i in 0..nx {
            for j in 0..ny {
                data[i * ny + j] = self.transpose[j * nx + i];
            }
        }
    }
}
