//! Physical layout of the input layer, the trainable metasurface layers and the
//! receiving array, plus the array response to a plane wave.
//!
//! Every planar grid uses x-major ordering: linear index `n` maps to
//! `(n % n_x, n / n_x)`, so the x coordinate varies fastest. All indices in
//! this crate are 0-based.

use std::f64::consts::{PI, TAU};

use ndarray::Array1;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Raw layout parameters as they appear in config and model files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryParams {
    pub wavelength: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub d_x: f64,
    pub d_y: f64,
    pub m_x: usize,
    pub m_y: usize,
    pub s_x: f64,
    pub s_y: f64,
    pub num_layers: usize,
    pub layer_spacing: f64,
    /// Defaults to the intermediate-layer tile area `s_x * s_y`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atom_area: Option<f64>,
}

impl Default for GeometryParams {
    /// 60 GHz, 4x4 input/receiver arrays at half-wavelength pitch, nine
    /// 12x12 layers at half-wavelength pitch spaced one wavelength apart.
    fn default() -> Self {
        let wavelength = SPEED_OF_LIGHT / 60e9;
        GeometryParams {
            wavelength,
            n_x: 4,
            n_y: 4,
            d_x: wavelength / 2.0,
            d_y: wavelength / 2.0,
            m_x: 12,
            m_y: 12,
            s_x: wavelength / 2.0,
            s_y: wavelength / 2.0,
            num_layers: 9,
            layer_spacing: wavelength,
            atom_area: None,
        }
    }
}

/// Validated SIM layout. Layer 0 is the input layer, layers `1..=L` are the
/// trainable metasurfaces and layer `L + 1` is the receiving array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimGeometry {
    params: GeometryParams,
    atom_area: f64,
}

impl SimGeometry {
    pub fn new(params: GeometryParams) -> Result<Self> {
        let counts = [
            ("n_x", params.n_x),
            ("n_y", params.n_y),
            ("m_x", params.m_x),
            ("m_y", params.m_y),
            ("num_layers", params.num_layers),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidGeometry(format!("{name} must be at least 1")));
            }
        }
        let atom_area = params.atom_area.unwrap_or(params.s_x * params.s_y);
        let lengths = [
            ("wavelength", params.wavelength),
            ("d_x", params.d_x),
            ("d_y", params.d_y),
            ("s_x", params.s_x),
            ("s_y", params.s_y),
            ("layer_spacing", params.layer_spacing),
            ("atom_area", atom_area),
        ];
        for (name, v) in lengths {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidGeometry(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(SimGeometry {
            params: GeometryParams {
                atom_area: Some(atom_area),
                ..params
            },
            atom_area,
        })
    }

    /// The 60 GHz setup used throughout the experiments.
    pub fn reference() -> Self {
        Self::new(GeometryParams::default()).expect("reference geometry is valid")
    }

    pub fn params(&self) -> &GeometryParams {
        &self.params
    }

    /// Same layout with a different number of trainable layers.
    pub fn with_layers(&self, num_layers: usize) -> Result<Self> {
        Self::new(GeometryParams {
            num_layers,
            ..self.params
        })
    }

    /// Same layout with a different intermediate grid.
    pub fn with_atoms(&self, m_x: usize, m_y: usize) -> Result<Self> {
        Self::new(GeometryParams {
            m_x,
            m_y,
            ..self.params
        })
    }

    pub fn wavelength(&self) -> f64 {
        self.params.wavelength
    }

    pub fn wavenumber(&self) -> f64 {
        TAU / self.params.wavelength
    }

    pub fn n_x(&self) -> usize {
        self.params.n_x
    }

    pub fn n_y(&self) -> usize {
        self.params.n_y
    }

    /// Number of input-layer (and receiver) elements.
    pub fn n(&self) -> usize {
        self.params.n_x * self.params.n_y
    }

    pub fn d_x(&self) -> f64 {
        self.params.d_x
    }

    pub fn d_y(&self) -> f64 {
        self.params.d_y
    }

    pub fn m_x(&self) -> usize {
        self.params.m_x
    }

    pub fn m_y(&self) -> usize {
        self.params.m_y
    }

    /// Meta-atoms per trainable layer.
    pub fn m(&self) -> usize {
        self.params.m_x * self.params.m_y
    }

    pub fn num_layers(&self) -> usize {
        self.params.num_layers
    }

    pub fn layer_spacing(&self) -> f64 {
        self.params.layer_spacing
    }

    pub fn atom_area(&self) -> f64 {
        self.atom_area
    }

    /// Grid shape `(count_x, count_y, pitch_x, pitch_y)` of plane `layer`,
    /// where 0 is the input layer and `L + 1` the receiver.
    fn plane(&self, layer: usize) -> Result<(usize, usize, f64, f64)> {
        let p = &self.params;
        let last = p.num_layers + 1;
        if layer == 0 || layer == last {
            Ok((p.n_x, p.n_y, p.d_x, p.d_y))
        } else if layer < last {
            Ok((p.m_x, p.m_y, p.s_x, p.s_y))
        } else {
            Err(Error::IndexOutOfRange {
                index: layer,
                len: last + 1,
            })
        }
    }

    /// Centered 3D coordinates (meters) of element `atom` on plane `layer`.
    pub fn atom_position(&self, layer: usize, atom: usize) -> Result<[f64; 3]> {
        let (cx, cy, px, py) = self.plane(layer)?;
        if atom >= cx * cy {
            return Err(Error::IndexOutOfRange {
                index: atom,
                len: cx * cy,
            });
        }
        let (ix, iy) = split_index(atom, cx);
        let x = (ix as f64 - (cx as f64 - 1.0) / 2.0) * px;
        let y = (iy as f64 - (cy as f64 - 1.0) / 2.0) * py;
        let z = -(layer as f64) * self.params.layer_spacing;
        Ok([x, y, z])
    }

    /// Stable digest of the layout; model files carry it so that phases are
    /// never loaded against a different device.
    pub fn digest(&self) -> String {
        let p = &self.params;
        let mut h = Sha256::new();
        h.update(b"simdoa-geometry-v1");
        for v in [p.n_x, p.n_y, p.m_x, p.m_y, p.num_layers] {
            h.update((v as u64).to_le_bytes());
        }
        for v in [
            p.wavelength,
            p.d_x,
            p.d_y,
            p.s_x,
            p.s_y,
            p.layer_spacing,
            self.atom_area,
        ] {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Splits an x-major linear index into `(ix, iy)`.
#[inline]
pub fn split_index(index: usize, count_x: usize) -> (usize, usize) {
    (index % count_x, index / count_x)
}

/// Wraps an angle in radians to `[-π, π)`.
pub fn wrap_pi(angle: f64) -> f64 {
    let w = (angle + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// Wraps a phase in radians to `[0, 2π)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let w = phase.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Per-axis electrical angles, stored in radians on `[-π, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectricalAngles {
    psi_x: f64,
    psi_y: f64,
}

impl ElectricalAngles {
    pub fn new(psi_x: f64, psi_y: f64) -> Self {
        ElectricalAngles {
            psi_x: wrap_pi(psi_x),
            psi_y: wrap_pi(psi_y),
        }
    }

    /// Builds from values expressed in units of π (the `[-1, 1)` convention).
    pub fn from_pi_units(x: f64, y: f64) -> Self {
        Self::new(x * PI, y * PI)
    }

    pub fn psi_x(&self) -> f64 {
        self.psi_x
    }

    pub fn psi_y(&self) -> f64 {
        self.psi_y
    }

    pub fn to_pi_units(&self) -> (f64, f64) {
        (self.psi_x / PI, self.psi_y / PI)
    }
}

/// Direction of arrival: azimuth in `[0, 2π)`, elevation in `[0, π/2]`
/// measured from the array normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalAngles {
    azimuth: f64,
    elevation: f64,
}

impl PhysicalAngles {
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self> {
        if !(0.0..TAU).contains(&azimuth) {
            return Err(Error::InvalidConfig(format!(
                "azimuth {azimuth} outside [0, 2π)"
            )));
        }
        if !(0.0..=PI / 2.0).contains(&elevation) {
            return Err(Error::InvalidConfig(format!(
                "elevation {elevation} outside [0, π/2]"
            )));
        }
        Ok(PhysicalAngles { azimuth, elevation })
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }
}

pub fn electrical_from_physical(geom: &SimGeometry, angles: &PhysicalAngles) -> ElectricalAngles {
    let k = geom.wavenumber();
    let (s, phi) = (angles.elevation.sin(), angles.azimuth);
    ElectricalAngles::new(
        k * geom.d_x() * s * phi.cos(),
        k * geom.d_y() * s * phi.sin(),
    )
}

/// `a_y(ψ_y) ⊗ a_x(ψ_x)` over the input-layer grid.
pub fn steering_vector(geom: &SimGeometry, psi: &ElectricalAngles) -> Array1<Complex64> {
    let nx = geom.n_x();
    Array1::from_shape_fn(geom.n(), |n| {
        let (ix, iy) = split_index(n, nx);
        Complex64::from_polar(1.0, psi.psi_x * ix as f64 + psi.psi_y * iy as f64)
    })
}
