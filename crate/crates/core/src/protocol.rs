//! Observation protocol: input-layer phase sweep over `T = T_x·T_y`
//! snapshots and the resulting noisy receiver samples.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::io::Write;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dft::TargetOperator;
use crate::error::{Error, Result};
use crate::geometry::{split_index, steering_vector, ElectricalAngles, SimGeometry};
use crate::model::{InputLayerPhases, SimState};

/// How the source symbol behaves across the snapshots of one observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceModel {
    /// One CN(0, 1) symbol for the whole observation.
    #[default]
    PerObservation,
    /// A fresh CN(0, 1) symbol in every snapshot.
    PerSnapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// Snapshots per block.
    pub t_x: usize,
    /// Number of blocks.
    pub t_y: usize,
    /// Per-element SNR in dB; `-inf` disables the signal.
    pub snr_db: f64,
    /// Drop the receiver noise entirely.
    pub noiseless: bool,
    pub source: SourceModel,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            t_x: 100,
            t_y: 100,
            snr_db: 10.0,
            noiseless: false,
            source: SourceModel::default(),
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_x == 0 || self.t_y == 0 {
            return Err(Error::InvalidConfig(
                "t_x and t_y must be at least 1".into(),
            ));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::INFINITY {
            return Err(Error::InvalidConfig(format!(
                "snr_db must be finite or -inf, got {}",
                self.snr_db
            )));
        }
        Ok(())
    }

    pub fn snapshots(&self) -> usize {
        self.t_x * self.t_y
    }

    /// Linear SNR ϱ.
    pub fn snr(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }
}

/// Received samples `r_{n,t}`, receiver elements by snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotGrid {
    pub r: Array2<Complex64>,
    pub config: ProtocolConfig,
}

impl SnapshotGrid {
    pub fn energy(&self) -> Array2<f64> {
        self.r.mapv(|z| z.norm_sqr())
    }

    /// `n,t,re,im`, one line per sample.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,t,re,im")?;
        for t in 0..self.r.ncols() {
            for n in 0..self.r.nrows() {
                let z = self.r[[n, t]];
                writeln!(out, "{n},{t},{},{}", z.re, z.im)?;
            }
        }
        Ok(())
    }
}

/// Input-layer phases for snapshot `t` (0-based, block-major: the first
/// `T_x` snapshots form block 0).
pub fn input_phase_schedule(
    geom: &SimGeometry,
    cfg: &ProtocolConfig,
    t: usize,
) -> Result<InputLayerPhases> {
    if t >= cfg.snapshots() {
        return Err(Error::IndexOutOfRange {
            index: t,
            len: cfg.snapshots(),
        });
    }
    Ok(InputLayerPhases::new(schedule_column(geom, cfg, t)))
}

fn schedule_column(geom: &SimGeometry, cfg: &ProtocolConfig, t: usize) -> Array1<f64> {
    let (tx, ty) = split_index(t, cfg.t_x);
    let fx = (geom.n_x() * cfg.t_x) as f64;
    let fy = (geom.n_y() * cfg.t_y) as f64;
    Array1::from_shape_fn(geom.n(), |n| {
        let (nx, ny) = split_index(n, geom.n_x());
        -TAU * ((nx * tx) as f64 / fx) - TAU * ((ny * ty) as f64 / fy)
    })
}

/// `op · Υ_{0,t} · a(ψ)` for every snapshot, as columns.
pub fn noiseless_response(
    geom: &SimGeometry,
    op: &Array2<Complex64>,
    psi: &ElectricalAngles,
    cfg: &ProtocolConfig,
) -> Array2<Complex64> {
    let a = steering_vector(geom, psi);
    let t_total = cfg.snapshots();
    let mut x = Array2::zeros((geom.n(), t_total));
    for t in 0..t_total {
        let col = schedule_column(geom, cfg, t);
        for (n, phase) in col.iter().enumerate() {
            x[[n, t]] = a[n] * Complex64::from_polar(1.0, *phase);
        }
    }
    op.dot(&x)
}

/// Random draws of one observation: source symbols and receiver noise.
/// Identical seeds give identical draws regardless of the operator or SNR.
#[derive(Debug, Clone)]
pub struct Draws {
    pub symbols: Array1<Complex64>,
    pub noise: Array2<Complex64>,
}

impl Draws {
    pub fn new(n: usize, cfg: &ProtocolConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self::from_rng(n, cfg, &mut rng)
    }

    pub fn from_rng<R: Rng>(n: usize, cfg: &ProtocolConfig, rng: &mut R) -> Self {
        let t_total = cfg.snapshots();
        let symbols = match cfg.source {
            SourceModel::PerObservation => Array1::from_elem(t_total, cscg(rng)),
            SourceModel::PerSnapshot => Array1::from_shape_fn(t_total, |_| cscg(rng)),
        };
        // column-major fill so a column depends only on earlier draws
        let mut noise = Array2::zeros((n, t_total));
        for t in 0..t_total {
            for k in 0..n {
                noise[[k, t]] = cscg(rng);
            }
        }
        Draws { symbols, noise }
    }

    /// `√ϱ · signal_t · s_t + u_t`, column by column.
    pub fn observe(&self, signal: &Array2<Complex64>, cfg: &ProtocolConfig) -> SnapshotGrid {
        let amp = cfg.snr().sqrt();
        let mut r = signal.clone();
        for (mut col, s) in r.columns_mut().into_iter().zip(&self.symbols) {
            let gain = s * amp;
            col.mapv_inplace(|z| z * gain);
        }
        if !cfg.noiseless {
            r += &self.noise;
        }
        SnapshotGrid { r, config: *cfg }
    }
}

/// Unit-variance circularly symmetric complex Gaussian sample.
pub fn cscg<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

/// Simulates the receiver behind an arbitrary `N × N` operator.
pub fn simulate_with_operator(
    geom: &SimGeometry,
    op: &Array2<Complex64>,
    psi: &ElectricalAngles,
    cfg: &ProtocolConfig,
) -> Result<SnapshotGrid> {
    cfg.validate()?;
    let n = geom.n();
    if op.dim() != (n, n) {
        return Err(Error::ShapeMismatch {
            expected: (n, n),
            got: op.dim(),
        });
    }
    let signal = noiseless_response(geom, op, psi, cfg);
    Ok(Draws::new(n, cfg).observe(&signal, cfg))
}

/// Receiver samples behind the raw SIM response `G` of `state`.
pub fn simulate_snapshots(
    state: &SimState,
    psi: &ElectricalAngles,
    cfg: &ProtocolConfig,
) -> Result<SnapshotGrid> {
    simulate_with_operator(state.geometry(), &state.transfer_matrix(), psi, cfg)
}

/// Same draws as [`simulate_snapshots`] with the SIM replaced by the exact
/// digital DFT.
pub fn digital_baseline_grid(
    geom: &SimGeometry,
    target: &TargetOperator,
    psi: &ElectricalAngles,
    cfg: &ProtocolConfig,
) -> Result<SnapshotGrid> {
    simulate_with_operator(geom, target.matrix(), psi, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dft::dft_matrix;
    use crate::geometry::GeometryParams;
    use std::f64::consts::PI;

    fn grid4() -> SimGeometry {
        SimGeometry::new(GeometryParams {
            wavelength: 1.0,
            n_x: 4,
            n_y: 4,
            d_x: 0.5,
            d_y: 0.5,
            m_x: 4,
            m_y: 4,
            s_x: 0.5,
            s_y: 0.5,
            num_layers: 1,
            layer_spacing: 1.0,
            atom_area: None,
        })
        .unwrap()
    }

    fn cfg(t_x: usize, t_y: usize) -> ProtocolConfig {
        ProtocolConfig {
            t_x,
            t_y,
            ..Default::default()
        }
    }

    #[test]
    fn first_snapshot_and_first_element_are_unshifted() {
        let g = grid4();
        let c = cfg(25, 25);
        assert!(input_phase_schedule(&g, &c, 0)
            .unwrap()
            .phases()
            .iter()
            .all(|&p| p == 0.0));
        for t in [0, 1, 30, 624] {
            assert_eq!(input_phase_schedule(&g, &c, t).unwrap().phases()[0], 0.0);
        }
        assert!(input_phase_schedule(&g, &c, 625).is_err());
    }

    #[test]
    fn schedule_value() {
        let p = input_phase_schedule(&grid4(), &cfg(25, 25), 1).unwrap();
        assert!((p.phases()[1] - (TAU - PI / 50.0)).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(cfg(0, 3).validate().is_err());
        assert!(ProtocolConfig {
            snr_db: f64::NAN,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ProtocolConfig {
            snr_db: f64::NEG_INFINITY,
            ..Default::default()
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn zero_snr_is_pure_noise() {
        let g = grid4();
        let f = dft_matrix(4, 4);
        let c = ProtocolConfig {
            snr_db: f64::NEG_INFINITY,
            seed: 3,
            ..cfg(4, 4)
        };
        let grid = digital_baseline_grid(&g, &f, &ElectricalAngles::new(0.3, 1.1), &c).unwrap();
        let draws = Draws::new(16, &c);
        assert_eq!(grid.r, draws.noise);
    }

    #[test]
    fn seeded_runs_repeat() {
        let g = grid4();
        let f = dft_matrix(4, 4);
        let c = ProtocolConfig {
            seed: 9,
            ..cfg(3, 2)
        };
        let psi = ElectricalAngles::new(0.7, -2.0);
        assert_eq!(
            digital_baseline_grid(&g, &f, &psi, &c).unwrap(),
            digital_baseline_grid(&g, &f, &psi, &c).unwrap()
        );
    }

    #[test]
    fn source_models() {
        let c = ProtocolConfig {
            seed: 1,
            ..cfg(3, 3)
        };
        let d = Draws::new(4, &c);
        assert!(d.symbols.iter().all(|&s| s == d.symbols[0]));
        let d = Draws::new(
            4,
            &ProtocolConfig {
                source: SourceModel::PerSnapshot,
                ..c
            },
        );
        assert_ne!(d.symbols[0], d.symbols[1]);
    }

    #[test]
    fn rejects_wrong_operator_shape() {
        let g = grid4();
        let op = Array2::zeros((16, 15));
        assert!(
            simulate_with_operator(&g, &op, &ElectricalAngles::new(0.0, 0.0), &cfg(2, 2)).is_err()
        );
    }

    #[test]
    fn csv_export() {
        let g = grid4();
        let f = dft_matrix(4, 4);
        let grid =
            digital_baseline_grid(&g, &f, &ElectricalAngles::new(0.0, 0.0), &cfg(2, 1)).unwrap();
        let mut out = Vec::new();
        grid.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1 + 16 * 2);
        assert!(text.starts_with("n,t,re,im\n0,0,"));
    }
}
