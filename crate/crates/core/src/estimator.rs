//! Energy-peak DOA recovery from a snapshot grid.

use std::f64::consts::{PI, TAU};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{split_index, ElectricalAngles, PhysicalAngles, SimGeometry};
use crate::protocol::{ProtocolConfig, SnapshotGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoaEstimate {
    pub n_hat: usize,
    pub t_hat: usize,
    pub psi_hat: ElectricalAngles,
    pub physical_hat: Option<PhysicalAngles>,
}

/// Strongest cell of the grid; the scan runs snapshot by snapshot, so ties
/// go to the earliest snapshot and then the lowest element index.
pub fn peak_search(grid: &SnapshotGrid) -> (usize, usize) {
    let mut best = (0, 0);
    let mut best_energy = f64::NEG_INFINITY;
    for (t, col) in grid.r.columns().into_iter().enumerate() {
        for (n, z) in col.iter().enumerate() {
            let e = z.norm_sqr();
            if e > best_energy {
                best_energy = e;
                best = (n, t);
            }
        }
    }
    best
}

/// Electrical angles of combined grid point `(n_hat, t_hat)`.
pub fn electrical_from_peak(
    geom: &SimGeometry,
    cfg: &ProtocolConfig,
    n_hat: usize,
    t_hat: usize,
) -> ElectricalAngles {
    let (nx, ny) = split_index(n_hat, geom.n_x());
    let (tx, ty) = split_index(t_hat, cfg.t_x);
    let x = combined_bin(nx * cfg.t_x + tx, geom.n_x() * cfg.t_x);
    let y = combined_bin(ny * cfg.t_y + ty, geom.n_y() * cfg.t_y);
    ElectricalAngles::from_pi_units(x, y)
}

/// Bin `k` of `bins` evenly spaced points on the `[-1, 1)` circle.
fn combined_bin(k: usize, bins: usize) -> f64 {
    let v = (2.0 * k as f64 / bins as f64 + 1.0).rem_euclid(2.0) - 1.0;
    if v >= 1.0 {
        v - 2.0
    } else {
        v
    }
}

/// Inverts the electrical-angle map on the visible region.
pub fn physical_from_electrical(
    geom: &SimGeometry,
    psi: &ElectricalAngles,
) -> Result<PhysicalAngles> {
    let k = geom.wavenumber();
    let u = psi.psi_x() / (k * geom.d_x());
    let v = psi.psi_y() / (k * geom.d_y());
    let radius = u.hypot(v);
    if radius > 1.0 + 1e-12 {
        return Err(Error::NonPhysicalDirection(radius));
    }
    let elevation = radius.min(1.0).asin();
    let azimuth = if radius == 0.0 {
        0.0
    } else {
        let a = v.atan2(u).rem_euclid(TAU);
        if a >= TAU {
            0.0
        } else {
            a
        }
    };
    PhysicalAngles::new(azimuth, elevation)
}

/// Torus distance in units of π between two angles.
fn wrapped_gap(a: f64, b: f64) -> f64 {
    let d = (a - b) / PI;
    (d + 1.0).rem_euclid(2.0) - 1.0
}

/// Mean of the squared per-axis wrap-around errors, in units of π.
pub fn mse(truth: &ElectricalAngles, est: &ElectricalAngles) -> f64 {
    let dx = wrapped_gap(truth.psi_x(), est.psi_x());
    let dy = wrapped_gap(truth.psi_y(), est.psi_y());
    (dx * dx + dy * dy) / 2.0
}

/// Peak search, angle reconstruction and, where possible, physical angles.
pub fn estimate(geom: &SimGeometry, grid: &SnapshotGrid) -> DoaEstimate {
    let (n_hat, t_hat) = peak_search(grid);
    let psi_hat = electrical_from_peak(geom, &grid.config, n_hat, t_hat);
    DoaEstimate {
        n_hat,
        t_hat,
        psi_hat,
        physical_hat: physical_from_electrical(geom, &psi_hat).ok(),
    }
}

/// Combined grid point `(n, t)` closest (on the torus) to `psi`.
pub fn nearest_grid_point(
    geom: &SimGeometry,
    cfg: &ProtocolConfig,
    psi: &ElectricalAngles,
) -> (usize, usize) {
    let nearest = |value: f64, count: usize, per_bin: usize| {
        let bins = count * per_bin;
        // combined index k sits at 2k/bins (mod 2)
        let k = ((value / PI).rem_euclid(2.0) * bins as f64 / 2.0).round() as usize % bins;
        (k / per_bin, k % per_bin)
    };
    let (nx, tx) = nearest(psi.psi_x(), geom.n_x(), cfg.t_x);
    let (ny, ty) = nearest(psi.psi_y(), geom.n_y(), cfg.t_y);
    (ny * geom.n_x() + nx, ty * cfg.t_x + tx)
}
