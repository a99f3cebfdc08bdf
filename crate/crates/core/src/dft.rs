use std::f64::consts::TAU;

use ndarray::Array2;
use num_complex::Complex64;

use crate::geometry::split_index;

/// Unnormalized 2D DFT over an `n_x × n_y` grid in x-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetOperator {
    f: Array2<Complex64>,
    n_x: usize,
    n_y: usize,
}

impl TargetOperator {
    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.f
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn n(&self) -> usize {
        self.n_x * self.n_y
    }
}

/// `F = F_y ⊗ F_x`.
pub fn dft_matrix(n_x: usize, n_y: usize) -> TargetOperator {
    assert!(n_x >= 1 && n_y >= 1, "DFT grid must be non-empty");
    let n = n_x * n_y;
    let f = Array2::from_shape_fn((n, n), |(row, col)| {
        let (rx, ry) = split_index(row, n_x);
        let (cx, cy) = split_index(col, n_x);
        twiddle(ry * cy, n_y) * twiddle(rx * cx, n_x)
    });
    TargetOperator { f, n_x, n_y }
}

/// `exp(-2πj k / n)`, with `k` reduced first so the argument stays small.
fn twiddle(k: usize, n: usize) -> Complex64 {
    Complex64::from_polar(1.0, -TAU * ((k % n) as f64 / n as f64))
}
