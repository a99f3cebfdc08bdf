#![allow(dead_code)]

pub mod dd;

use std::f64::consts::TAU;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use simdoa::geometry::{GeometryParams, SimGeometry};
use simdoa::model::SimState;
use simdoa::propagation::build_stack;

/// N = 4, M = 16, L = 2 on a unit wavelength.
pub fn tiny() -> SimGeometry {
    SimGeometry::new(GeometryParams {
        wavelength: 1.0,
        n_x: 2,
        n_y: 2,
        d_x: 0.5,
        d_y: 0.5,
        m_x: 4,
        m_y: 4,
        s_x: 0.5,
        s_y: 0.5,
        num_layers: 2,
        layer_spacing: 1.0,
        atom_area: None,
    })
    .unwrap()
}

/// Rectangular, uneven pitches, explicit atom area.
pub fn lopsided() -> SimGeometry {
    SimGeometry::new(GeometryParams {
        wavelength: 0.8,
        n_x: 3,
        n_y: 2,
        d_x: 0.4,
        d_y: 0.35,
        m_x: 5,
        m_y: 3,
        s_x: 0.3,
        s_y: 0.45,
        num_layers: 4,
        layer_spacing: 1.3,
        atom_area: Some(0.2),
    })
    .unwrap()
}

pub fn state(geom: &SimGeometry, seed: u64) -> SimState {
    SimState::random(geom, Arc::new(build_stack(geom)), seed)
}

/// Coupling between two points, written out from the point-source formula.
fn rs(geom: &SimGeometry, a: [f64; 3], b: [f64; 3]) -> Complex64 {
    let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    let k = TAU / geom.wavelength();
    let lead = geom.atom_area() * geom.layer_spacing() / (TAU * d.powi(3));
    lead * Complex64::new(1.0, -k * d) * Complex64::new(0.0, k * d).exp()
}

/// Plane-to-plane matrix from absolute element positions.
pub fn naive_coupling(geom: &SimGeometry, from: usize, to: usize) -> Array2<Complex64> {
    let count = |layer: usize| {
        if layer == 0 || layer == geom.num_layers() + 1 {
            geom.n()
        } else {
            geom.m()
        }
    };
    Array2::from_shape_fn((count(to), count(from)), |(i, j)| {
        rs(
            geom,
            geom.atom_position(to, i).unwrap(),
            geom.atom_position(from, j).unwrap(),
        )
    })
}

/// `G` multiplied out left to right from element positions and phases.
pub fn naive_transfer(geom: &SimGeometry, phases: &Array2<f64>) -> Array2<Complex64> {
    let layers = geom.num_layers();
    let mut acc = naive_coupling(geom, layers, layers + 1);
    for l in (1..=layers).rev() {
        for (col, &p) in phases.row(l - 1).iter().enumerate() {
            let u = Complex64::new(0.0, p).exp();
            acc.column_mut(col).mapv_inplace(|z| z * u);
        }
        acc = acc.dot(&naive_coupling(geom, l - 1, l));
    }
    acc
}

pub fn frobenius(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn rel_frobenius(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    frobenius(&(a - b)) / frobenius(b)
}

/// Central differences of `‖βG − F‖²` evaluated in double-double.
///
/// `G` is affine in every single transmission coefficient:
/// `G = S_l diag(υ_l) P_l` with `P_l = W_{l-1} Υ_{l-1} ⋯ W_0` and
/// `S_l = W_L Υ_L ⋯ W_l`, both multiplied out naively from the coupling
/// matrices. Moving one phase changes `G` by a rank-one term, so each
/// perturbed loss costs `O(N²)` and carries no f64 cancellation.
pub fn finite_difference_dd(
    geom: &SimGeometry,
    phases: &Array2<f64>,
    f: &Array2<Complex64>,
    beta: Complex64,
    h: f64,
) -> Array2<f64> {
    use dd::{lift, matmul, Cdd, Dd};
    let layers = geom.num_layers();
    let ups = |l: usize| -> Vec<Cdd> {
        phases
            .row(l - 1)
            .iter()
            .map(|&p| Cdd::from_c64(Complex64::new(0.0, p).exp()))
            .collect()
    };
    let scale_rows =
        |m: &Array2<Cdd>, v: &[Cdd]| Array2::from_shape_fn(m.dim(), |(i, j)| v[i] * m[[i, j]]);
    let scale_cols =
        |m: &Array2<Cdd>, v: &[Cdd]| Array2::from_shape_fn(m.dim(), |(i, j)| m[[i, j]] * v[j]);

    // prefix[l - 1] = P_l (M × N), suffix[l - 1] = S_l (N × M)
    let mut prefix = vec![lift(&naive_coupling(geom, 0, 1))];
    for l in 1..layers {
        let w = lift(&naive_coupling(geom, l, l + 1));
        let next = matmul(&w, &scale_rows(&prefix[l - 1], &ups(l)));
        prefix.push(next);
    }
    let mut suffix = vec![lift(&naive_coupling(geom, layers, layers + 1))];
    for l in (1..layers).rev() {
        let w = lift(&naive_coupling(geom, l, l + 1));
        let prev = matmul(&scale_cols(&suffix[0], &ups(l + 1)), &w);
        suffix.insert(0, prev);
    }

    let beta = Cdd::from_c64(beta);
    let g = matmul(&scale_cols(&suffix[0], &ups(1)), &prefix[0]);
    let residual = Array2::from_shape_fn(g.dim(), |(i, j)| {
        beta * g[[i, j]] - Cdd::from_c64(f[[i, j]])
    });

    Array2::from_shape_fn(phases.dim(), |(l, m)| {
        let (s, p) = (&suffix[l], &prefix[l]);
        let here = Complex64::new(0.0, phases[[l, m]]).exp();
        let loss_at = |delta: f64| {
            let shift = Complex64::new(0.0, phases[[l, m]] + delta).exp() - here;
            let c = beta * Cdd::from_c64(shift);
            residual
                .indexed_iter()
                .fold(Dd::default(), |acc, ((i, j), r)| {
                    acc + (*r + c * s[[i, m]] * p[[m, j]]).norm_sqr()
                })
        };
        let diff = loss_at(h) - loss_at(-h);
        diff.to_f64() / (2.0 * h)
    })
}

/// Largest entry-wise relative error `|a − n| / max(|a|, |n|)`.
pub fn gradient_rel_error(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let d = (a - n).abs();
            if d == 0.0 {
                0.0
            } else {
                d / a.abs().max(n.abs())
            }
        })
        .fold(0.0, f64::max)
}
