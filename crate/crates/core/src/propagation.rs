//! Inter-layer coupling matrices from the Rayleigh-Sommerfeld point-source
//! model.

use std::f64::consts::TAU;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{split_index, SimGeometry};

/// Complex transmission between two meta-atoms `distance` meters apart on
/// adjacent planes.
pub fn diffraction_coefficient(geom: &SimGeometry, distance: f64) -> Result<Complex64> {
    if distance.is_nan() || distance <= 0.0 {
        return Err(Error::NonPositiveDistance(distance));
    }
    Ok(coefficient(
        geom.atom_area(),
        geom.layer_spacing(),
        geom.wavenumber(),
        distance,
    ))
}

#[inline]
fn coefficient(area: f64, spacing: f64, k: f64, d: f64) -> Complex64 {
    let amp = area * spacing / (TAU * d * d * d);
    Complex64::new(amp, -amp * k * d) * Complex64::from_polar(1.0, k * d)
}

/// Coupling matrices of one device: `W_0` (input → layer 1), the shared
/// `W_l` between trainable layers, and `W_L = W_0ᵀ` (layer L → receiver).
#[derive(Debug, Clone, PartialEq)]
pub struct DiffractionStack {
    w_in: Array2<Complex64>,
    w_mid: Option<Array2<Complex64>>,
    w_out: Array2<Complex64>,
    num_layers: usize,
}

impl DiffractionStack {
    /// `M × N`.
    pub fn w_in(&self) -> &Array2<Complex64> {
        &self.w_in
    }

    /// Matrix from layer `l` to `l + 1` for `l` in `1..L`. Evenly spaced
    /// isomorphic layers share one matrix.
    pub fn w_mid(&self, l: usize) -> Result<&Array2<Complex64>> {
        match &self.w_mid {
            Some(w) if (1..self.num_layers).contains(&l) => Ok(w),
            _ => Err(Error::IndexOutOfRange {
                index: l,
                len: self.num_layers,
            }),
        }
    }

    /// `N × M`.
    pub fn w_out(&self) -> &Array2<Complex64> {
        &self.w_out
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn n(&self) -> usize {
        self.w_in.ncols()
    }

    pub fn m(&self) -> usize {
        self.w_in.nrows()
    }
}

pub fn build_stack(geom: &SimGeometry) -> DiffractionStack {
    let (area, spacing, k) = (geom.atom_area(), geom.layer_spacing(), geom.wavenumber());
    let (m, n) = (geom.m(), geom.n());

    // input and first layer do not share a pitch, so use absolute coordinates
    let w_in = Array2::from_shape_fn((m, n), |(i, j)| {
        let a = geom.atom_position(1, i).expect("layer 1 index in range");
        let b = geom.atom_position(0, j).expect("input index in range");
        let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + spacing * spacing).sqrt();
        coefficient(area, spacing, k, d)
    });

    let w_mid = (geom.num_layers() > 1).then(|| {
        let (mx, sx, sy) = (geom.m_x(), geom.params().s_x, geom.params().s_y);
        Array2::from_shape_fn((m, m), |(i, j)| {
            let (ix, iy) = split_index(i, mx);
            let (jx, jy) = split_index(j, mx);
            let dx = (ix as f64 - jx as f64) * sx;
            let dy = (iy as f64 - jy as f64) * sy;
            let d = (dx * dx + dy * dy + spacing * spacing).sqrt();
            coefficient(area, spacing, k, d)
        })
    });

    let w_out = w_in.t().to_owned();
    DiffractionStack {
        w_in,
        w_mid,
        w_out,
        num_layers: geom.num_layers(),
    }
}
