//! Trainable phase state of the metasurface stack and its end-to-end
//! response.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::geometry::{wrap_phase, SimGeometry};
use crate::propagation::{build_stack, DiffractionStack};

/// Phases of the input layer, one per element, in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputLayerPhases {
    xi0: Array1<f64>,
}

impl InputLayerPhases {
    pub fn new(xi0: Array1<f64>) -> Self {
        InputLayerPhases {
            xi0: xi0.mapv(wrap_phase),
        }
    }

    pub fn phases(&self) -> &Array1<f64> {
        &self.xi0
    }

    pub fn transmission(&self) -> Array1<Complex64> {
        self.xi0.mapv(|p| Complex64::from_polar(1.0, p))
    }
}

/// Phases of the `L` trainable layers (row `l - 1` holds layer `l`) together
/// with the coupling matrices they sit between.
#[derive(Debug, Clone)]
pub struct SimState {
    geom: SimGeometry,
    stack: Arc<DiffractionStack>,
    phases: Array2<f64>,
}

impl SimState {
    pub fn zeros(geom: &SimGeometry) -> Self {
        Self::with_stack(geom, Arc::new(build_stack(geom)))
    }

    pub fn with_stack(geom: &SimGeometry, stack: Arc<DiffractionStack>) -> Self {
        assert_eq!((stack.m(), stack.n()), (geom.m(), geom.n()));
        SimState {
            geom: *geom,
            phases: Array2::zeros((geom.num_layers(), geom.m())),
            stack,
        }
    }

    /// Phases i.i.d. uniform on `[0, 2π)`.
    pub fn random(geom: &SimGeometry, stack: Arc<DiffractionStack>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Self::with_stack(geom, stack);
        s.phases.mapv_inplace(|_| rng.random_range(0.0..TAU));
        s
    }

    pub fn from_phases(
        geom: &SimGeometry,
        stack: Arc<DiffractionStack>,
        phases: Array2<f64>,
    ) -> Result<Self> {
        let expected = (geom.num_layers(), geom.m());
        if phases.dim() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                got: phases.dim(),
            });
        }
        let mut s = Self::with_stack(geom, stack);
        s.set_phases(phases);
        Ok(s)
    }

    pub fn geometry(&self) -> &SimGeometry {
        &self.geom
    }

    pub fn stack(&self) -> &Arc<DiffractionStack> {
        &self.stack
    }

    pub fn num_layers(&self) -> usize {
        self.phases.nrows()
    }

    pub fn phases(&self) -> &Array2<f64> {
        &self.phases
    }

    /// Replaces all phases, reducing them into `[0, 2π)`.
    pub fn set_phases(&mut self, phases: Array2<f64>) {
        assert_eq!(phases.dim(), self.phases.dim());
        self.phases = phases.mapv(wrap_phase);
    }

    /// `ξ ← ξ - step · direction`, wrapped.
    pub fn descend(&mut self, direction: &Array2<f64>, step: f64) {
        assert_eq!(direction.dim(), self.phases.dim());
        self.phases
            .zip_mut_with(direction, |p, &g| *p = wrap_phase(*p - step * g));
    }

    /// `υ_l` for layer `l` in `1..=L`.
    pub fn transmission(&self, l: usize) -> Array1<Complex64> {
        self.phases
            .row(l - 1)
            .mapv(|p| Complex64::from_polar(1.0, p))
    }

    /// Matrix carrying the field leaving layer `l` to the next plane.
    fn after(&self, l: usize) -> &Array2<Complex64> {
        if l == self.num_layers() {
            self.stack.w_out()
        } else {
            self.stack.w_mid(l).expect("intermediate layer")
        }
    }

    /// `G = W_L Υ_L ⋯ W_1 Υ_1 W_0`, evaluated right to left.
    pub fn transfer_matrix(&self) -> Array2<Complex64> {
        let mut field = self.stack.w_in().clone();
        for l in 1..=self.num_layers() {
            scale_rows(&mut field, self.transmission(l).view());
            field = self.after(l).dot(&field);
        }
        field
    }

    /// All forward and backward partial products in one pass each.
    pub fn cascade(&self) -> Cascade {
        let layers = self.num_layers();
        let upsilon: Vec<_> = (1..=layers).map(|l| self.transmission(l)).collect();

        let mut forward = Vec::with_capacity(layers);
        forward.push(self.stack.w_in().clone());
        for l in 1..layers {
            let mut f = forward[l - 1].clone();
            scale_rows(&mut f, upsilon[l - 1].view());
            forward.push(self.after(l).dot(&f));
        }

        let mut backward = vec![Array2::zeros((0, 0)); layers];
        backward[layers - 1] = self.stack.w_out().clone();
        for l in (1..layers).rev() {
            let mut b = backward[l].clone();
            scale_cols(&mut b, upsilon[l].view());
            backward[l - 1] = b.dot(self.after(l));
        }

        let mut last = forward[layers - 1].clone();
        scale_rows(&mut last, upsilon[layers - 1].view());
        let transfer = self.stack.w_out().dot(&last);

        Cascade {
            forward,
            backward,
            upsilon,
            transfer,
        }
    }

    /// Per-input-atom view of the cascade: `q_{l,n}` and `P_{l,n}` for every
    /// layer, with `P_{l,n} υ_l = g_n`.
    pub fn partial_cascades(&self, n: usize) -> Result<PartialCascades> {
        let len = self.stack.n();
        if n >= len {
            return Err(Error::IndexOutOfRange { index: n, len });
        }
        let c = self.cascade();
        let q: Vec<_> = c.forward.iter().map(|f| f.column(n).to_owned()).collect();
        let p = c
            .backward
            .iter()
            .zip(&q)
            .map(|(b, q)| {
                let mut p = b.clone();
                scale_cols(&mut p, q.view());
                p
            })
            .collect();
        Ok((q, p))
    }
}

/// `(q_{l,n}, P_{l,n})` per layer, index `l - 1`.
pub type PartialCascades = (Vec<Array1<Complex64>>, Vec<Array2<Complex64>>);

/// Cached partial products of one state. Index `l - 1` refers to layer `l`.
#[derive(Debug, Clone)]
pub struct Cascade {
    /// Field illuminating layer `l` before its phase shift, `M × N`; column
    /// `n` is `q_{l,n}`.
    pub forward: Vec<Array2<Complex64>>,
    /// `W_L Υ_L ⋯ Υ_{l+1} W_l`, `N × M`.
    pub backward: Vec<Array2<Complex64>>,
    pub upsilon: Vec<Array1<Complex64>>,
    pub transfer: Array2<Complex64>,
}

fn scale_rows(m: &mut Array2<Complex64>, v: ArrayView1<Complex64>) {
    *m *= &v.insert_axis(Axis(1));
}

fn scale_cols(m: &mut Array2<Complex64>, v: ArrayView1<Complex64>) {
    *m *= &v.insert_axis(Axis(0));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryParams;

    fn small(layers: usize) -> SimGeometry {
        SimGeometry::new(GeometryParams {
            wavelength: 1.0,
            n_x: 2,
            n_y: 1,
            d_x: 0.5,
            d_y: 0.5,
            m_x: 2,
            m_y: 2,
            s_x: 0.5,
            s_y: 0.5,
            num_layers: layers,
            layer_spacing: 1.0,
            atom_area: None,
        })
        .unwrap()
    }

    fn frob(a: &Array2<Complex64>) -> f64 {
        a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn single_layer_zero_phase_is_gram_like() {
        let g = small(1);
        let s = SimState::zeros(&g);
        let w0 = s.stack().w_in();
        let expected = w0.t().dot(w0);
        assert!(frob(&(&s.transfer_matrix() - &expected)) < 1e-15 * frob(&expected));
    }

    #[test]
    fn constant_layer_offset_is_global_phase() {
        let g = small(3);
        let stack = Arc::new(build_stack(&g));
        let s = SimState::random(&g, stack, 7);
        let c = 0.83;
        let mut shifted = s.clone();
        let mut p = s.phases().clone();
        p.row_mut(1).mapv_inplace(|x| x + c);
        shifted.set_phases(p);
        let expected = s.transfer_matrix() * Complex64::from_polar(1.0, c);
        let got = shifted.transfer_matrix();
        assert!(frob(&(&got - &expected)) < 1e-13 * frob(&expected));
    }

    #[test]
    fn phases_are_wrapped() {
        let g = small(2);
        let stack = Arc::new(build_stack(&g));
        let mut s = SimState::zeros(&g);
        s.set_phases(Array2::from_elem((2, 4), -1.0));
        assert!(s.phases().iter().all(|&p| (0.0..TAU).contains(&p)));
        let r =
            SimState::from_phases(&g, stack.clone(), Array2::from_elem((2, 4), 1.0 + TAU)).unwrap();
        assert!(r.phases().iter().all(|&p| (p - 1.0).abs() < 1e-12));
        assert!(SimState::from_phases(&g, stack, Array2::zeros((3, 4))).is_err());
    }

    #[test]
    fn first_forward_partial_is_input_matrix() {
        let g = small(3);
        let s = SimState::random(&g, Arc::new(build_stack(&g)), 1);
        let (q, p) = s.partial_cascades(1).unwrap();
        assert_eq!(q.len(), 3);
        assert_eq!(q[0], s.stack().w_in().column(1));
        assert_eq!(p[2].dim(), (2, 4));
        assert!(s.partial_cascades(2).is_err());
    }

    #[test]
    fn single_layer_partial_is_output_times_diag() {
        let g = small(1);
        let s = SimState::random(&g, Arc::new(build_stack(&g)), 3);
        let (_, p) = s.partial_cascades(0).unwrap();
        let w0 = s.stack().w_in();
        let expected =
            Array2::from_shape_fn((2, 4), |(i, j)| s.stack().w_out()[[i, j]] * w0[[j, 0]]);
        assert_eq!(p[0], expected);
    }

    #[test]
    fn input_phases_wrap() {
        let p = InputLayerPhases::new(Array1::from(vec![-0.5, 7.0]));
        assert!(p.phases().iter().all(|&x| (0.0..TAU).contains(&x)));
        assert!((p.transmission()[0] - Complex64::from_polar(1.0, -0.5)).norm() < 1e-15);
    }
}
