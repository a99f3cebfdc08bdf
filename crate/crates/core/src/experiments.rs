//! End-to-end experiments: training convergence, depth/size sweep, MSE
//! versus SNR against a digital DFT, and noiseless spatial spectra.

use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dft::{dft_matrix, TargetOperator};
use crate::error::{Error, Result};
use crate::estimator::{electrical_from_peak, mse, nearest_grid_point, peak_search};
use crate::geometry::{ElectricalAngles, SimGeometry};
use crate::model::SimState;
use crate::model_file::TrainedModel;
use crate::propagation::build_stack;
use crate::protocol::{noiseless_response, Draws, ProtocolConfig, SnapshotGrid};
use crate::trainer::{train, train_from, TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Convergence,
    LayerSweep,
    MseVsSnr,
    Spectrum,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Convergence,
        ExperimentKind::LayerSweep,
        ExperimentKind::MseVsSnr,
        ExperimentKind::Spectrum,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::LayerSweep => "layer_sweep",
            ExperimentKind::MseVsSnr => "mse_vs_snr",
            ExperimentKind::Spectrum => "spectrum",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown experiment kind `{s}`")))
    }
}

/// Sweep lists and Monte Carlo sizes shared by all experiment kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentParams {
    pub decays: Vec<f64>,
    pub layers: Vec<usize>,
    /// Atoms per layer; each must be a perfect square.
    pub atoms: Vec<usize>,
    pub snr_db: Vec<f64>,
    /// Snapshots per axis (`T_x = T_y`) for the MSE sweep.
    pub snapshots: Vec<usize>,
    pub trials: usize,
    /// Electrical angles in units of π.
    pub spectrum_cases: Vec<[f64; 2]>,
    pub spectrum_snapshots: usize,
}

impl ExperimentParams {
    /// Checks that do not depend on the experiment kind.
    pub fn validate(&self) -> Result<()> {
        for &d in &self.decays {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::InvalidConfig(format!("decay {d} outside (0, 1)")));
            }
        }
        for &m in &self.atoms {
            square_side(m)?;
        }
        if self.layers.contains(&0) {
            return Err(Error::InvalidConfig(
                "layer counts must be at least 1".into(),
            ));
        }
        if self.snapshots.contains(&0) || self.spectrum_snapshots == 0 {
            return Err(Error::InvalidConfig(
                "snapshot counts must be at least 1".into(),
            ));
        }
        if self
            .snr_db
            .iter()
            .any(|s| s.is_nan() || *s == f64::INFINITY)
        {
            return Err(Error::InvalidConfig(
                "snr_db values must be finite or -inf".into(),
            ));
        }
        Ok(())
    }
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            decays: vec![0.9, 0.95, 0.99],
            layers: (1..=10).collect(),
            atoms: vec![64, 100, 144, 196],
            snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            snapshots: vec![25, 100],
            trials: 100,
            spectrum_cases: vec![[-0.67, -0.48], [0.53, -0.34], [-0.52, 0.41], [0.44, 0.33]],
            spectrum_snapshots: 32,
        }
    }
}

/// Everything one experiment needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub geometry: SimGeometry,
    pub train: TrainConfig,
    pub protocol: ProtocolConfig,
    pub params: ExperimentParams,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let empty = |name: &str| Err(Error::InvalidConfig(format!("`{name}` must not be empty")));
        match self.kind {
            ExperimentKind::Convergence if p.decays.is_empty() => return empty("decays"),
            ExperimentKind::LayerSweep if p.layers.is_empty() => return empty("layers"),
            ExperimentKind::LayerSweep if p.atoms.is_empty() => return empty("atoms"),
            ExperimentKind::MseVsSnr if p.snr_db.is_empty() => return empty("snr_db"),
            ExperimentKind::MseVsSnr if p.snapshots.is_empty() => return empty("snapshots"),
            ExperimentKind::Spectrum if p.spectrum_cases.is_empty() => {
                return empty("spectrum_cases")
            }
            _ => {}
        }
        if self.kind == ExperimentKind::MseVsSnr && p.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        p.validate()?;
        self.train.validate()?;
        self.protocol.validate()
    }
}

fn square_side(m: usize) -> Result<usize> {
    let side = (m as f64).sqrt().round() as usize;
    if side == 0 || side * side != m {
        return Err(Error::InvalidConfig(format!(
            "atom count {m} is not a square grid"
        )));
    }
    Ok(side)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceCurve {
    pub decay: f64,
    pub report: TrainReport,
}

/// One training run per decay value, all from the same initial phases.
pub fn run_convergence(spec: &ExperimentSpec) -> Result<Vec<ConvergenceCurve>> {
    spec.validate()?;
    let target = dft_matrix(spec.geometry.n_x(), spec.geometry.n_y());
    let stack = Arc::new(build_stack(&spec.geometry));
    let init = SimState::random(&spec.geometry, stack, spec.train.seed);
    spec.params
        .decays
        .par_iter()
        .map(|&decay| {
            let cfg = TrainConfig {
                decay,
                ..spec.train
            };
            let (_, report) = train_from(init.clone(), &target, &cfg)?;
            Ok(ConvergenceCurve { decay, report })
        })
        .collect()
}

pub fn write_convergence_csv<W: Write>(
    curves: &[ConvergenceCurve],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "decay,iteration,loss,normalized_loss")?;
    for c in curves {
        for (k, (l, n)) in c
            .report
            .loss_history
            .iter()
            .zip(&c.report.normalized_loss_history)
            .enumerate()
        {
            writeln!(out, "{},{k},{l},{n}", c.decay)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub atoms: usize,
    pub layers: usize,
    pub normalized_loss: f64,
    pub iterations: usize,
}

/// Final normalized loss for every `(atoms, layers)` pair.
pub fn run_layer_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    let target = dft_matrix(spec.geometry.n_x(), spec.geometry.n_y());
    let mut jobs = Vec::new();
    for &atoms in &spec.params.atoms {
        let side = square_side(atoms)?;
        for &layers in &spec.params.layers {
            jobs.push((
                atoms,
                layers,
                spec.geometry.with_atoms(side, side)?.with_layers(layers)?,
            ));
        }
    }
    jobs.par_iter()
        .map(|(atoms, layers, geom)| {
            let (_, report) = train(geom, &target, &spec.train)?;
            Ok(SweepPoint {
                atoms: *atoms,
                layers: *layers,
                normalized_loss: report.final_normalized_loss(),
                iterations: report.iterations_run,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "atoms,layers,normalized_loss,iterations")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{}",
            p.atoms, p.layers, p.normalized_loss, p.iterations
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MsePoint {
    pub snapshots: usize,
    pub snr_db: f64,
    pub mse_sim: f64,
    pub mse_digital: f64,
}

/// Random stream of trial `trial`; the same stream feeds every snapshot
/// count, SNR point and both receivers.
fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Monte Carlo MSE of the trained SIM (`βG`) and of the exact DFT, with
/// common random numbers across receivers and SNR points.
pub fn run_mse_vs_snr(spec: &ExperimentSpec, model: &TrainedModel) -> Result<Vec<MsePoint>> {
    spec.validate()?;
    let geom = model.state.geometry();
    let sim_op = model.effective_operator();
    let target = dft_matrix(geom.n_x(), geom.n_y());
    let snrs = &spec.params.snr_db;

    let mut points = Vec::new();
    for &t_axis in &spec.params.snapshots {
        let base = ProtocolConfig {
            t_x: t_axis,
            t_y: t_axis,
            noiseless: false,
            ..spec.protocol
        };
        let per_trial: Vec<Vec<(f64, f64)>> = (0..spec.params.trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = trial_rng(spec.seed, trial);
                let truth = ElectricalAngles::from_pi_units(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                let draws = Draws::from_rng(geom.n(), &base, &mut rng);
                let sim_signal = noiseless_response(geom, &sim_op, &truth, &base);
                let dig_signal = noiseless_response(geom, target.matrix(), &truth, &base);
                snrs.iter()
                    .map(|&snr_db| {
                        let cfg = ProtocolConfig { snr_db, ..base };
                        let err = |signal: &Array2<_>| {
                            let grid = draws.observe(signal, &cfg);
                            let (n, t) = peak_search(&grid);
                            mse(&truth, &electrical_from_peak(geom, &cfg, n, t))
                        };
                        (err(&sim_signal), err(&dig_signal))
                    })
                    .collect()
            })
            .collect();

        let trials = spec.params.trials as f64;
        for (i, &snr_db) in snrs.iter().enumerate() {
            let (sim, dig) = per_trial
                .iter()
                .fold((0.0, 0.0), |(a, b), row| (a + row[i].0, b + row[i].1));
            points.push(MsePoint {
                snapshots: t_axis,
                snr_db,
                mse_sim: sim / trials,
                mse_digital: dig / trials,
            });
        }
    }
    Ok(points)
}

pub fn write_mse_csv<W: Write>(points: &[MsePoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "snapshots_per_axis,snr_db,mse_sim,mse_digital")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{}",
            p.snapshots, p.snr_db, p.mse_sim, p.mse_digital
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumCase {
    /// True angles in units of π.
    pub psi: [f64; 2],
    pub peak: (usize, usize),
    pub expected: (usize, usize),
    /// Estimated angles in units of π.
    pub psi_hat: [f64; 2],
    pub matches: bool,
    /// Received energy, receiver elements by snapshots.
    #[serde(skip)]
    pub energy: Array2<f64>,
}

impl SpectrumCase {
    /// Energy laid out on the combined `(N_x T_x) × (N_y T_y)` frequency
    /// grid, indexed `[kx, ky]`.
    pub fn laminated(&self, geom: &SimGeometry, cfg: &ProtocolConfig) -> Array2<f64> {
        let (bx, by) = (geom.n_x() * cfg.t_x, geom.n_y() * cfg.t_y);
        let mut map = Array2::zeros((bx, by));
        for ((n, t), e) in self.energy.indexed_iter() {
            let (nx, ny) = (n % geom.n_x(), n / geom.n_x());
            let (tx, ty) = (t % cfg.t_x, t / cfg.t_x);
            map[[nx * cfg.t_x + tx, ny * cfg.t_y + ty]] = *e;
        }
        map
    }
}

/// Noiseless observation of each case through an arbitrary operator.
pub fn spectrum_with_operator(
    spec: &ExperimentSpec,
    geom: &SimGeometry,
    op: &Array2<num_complex::Complex64>,
) -> Result<Vec<SpectrumCase>> {
    spec.validate()?;
    let cfg = spectrum_config(spec);
    spec.params
        .spectrum_cases
        .iter()
        .map(|&[x, y]| {
            let truth = ElectricalAngles::from_pi_units(x, y);
            let draws = Draws::new(geom.n(), &cfg);
            let grid: SnapshotGrid =
                draws.observe(&noiseless_response(geom, op, &truth, &cfg), &cfg);
            let peak = peak_search(&grid);
            let expected = nearest_grid_point(geom, &cfg, &truth);
            let (hx, hy) = electrical_from_peak(geom, &cfg, peak.0, peak.1).to_pi_units();
            Ok(SpectrumCase {
                psi: [x, y],
                peak,
                expected,
                psi_hat: [hx, hy],
                matches: peak == expected,
                energy: grid.energy(),
            })
        })
        .collect()
}

pub fn spectrum_config(spec: &ExperimentSpec) -> ProtocolConfig {
    ProtocolConfig {
        t_x: spec.params.spectrum_snapshots,
        t_y: spec.params.spectrum_snapshots,
        noiseless: true,
        ..spec.protocol
    }
}

pub fn run_spectrum(spec: &ExperimentSpec, model: &TrainedModel) -> Result<Vec<SpectrumCase>> {
    spectrum_with_operator(spec, model.state.geometry(), &model.effective_operator())
}

/// Long-format laminated maps: `case,kx,ky,psi_x,psi_y,energy`, energy
/// normalized to the per-case peak.
pub fn write_spectrum_csv<W: Write>(
    cases: &[SpectrumCase],
    geom: &SimGeometry,
    cfg: &ProtocolConfig,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "case,kx,ky,psi_x,psi_y,energy")?;
    let (bx, by) = (geom.n_x() * cfg.t_x, geom.n_y() * cfg.t_y);
    for (i, case) in cases.iter().enumerate() {
        let map = case.laminated(geom, cfg);
        let peak = map.iter().cloned().fold(0.0, f64::max);
        for ((kx, ky), e) in map.indexed_iter() {
            let px = (2.0 * kx as f64 / bx as f64 + 1.0).rem_euclid(2.0) - 1.0;
            let py = (2.0 * ky as f64 / by as f64 + 1.0).rem_euclid(2.0) - 1.0;
            let norm = if peak > 0.0 { e / peak } else { 0.0 };
            writeln!(out, "{i},{kx},{ky},{px},{py},{norm}")?;
        }
    }
    Ok(())
}

/// Trains the device described by `spec` with its training config.
pub fn train_model(spec: &ExperimentSpec) -> Result<(TrainedModel, TrainReport)> {
    let target: TargetOperator = dft_matrix(spec.geometry.n_x(), spec.geometry.n_y());
    let (state, report) = train(&spec.geometry, &target, &spec.train)?;
    Ok((TrainedModel::new(state, report.final_beta), report))
}
