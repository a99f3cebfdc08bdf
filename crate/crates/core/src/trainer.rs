//! Phase-only gradient descent that fits `βG` to the DFT target.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dft::TargetOperator;
use crate::error::{Error, Result};
use crate::geometry::SimGeometry;
use crate::model::SimState;
use crate::propagation::build_stack;

/// Number of iterations the relative-change convergence test looks back.
pub const CONVERGENCE_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub max_iters: usize,
    /// Step-size decay ζ in `(0, 1)`.
    pub decay: f64,
    pub seed: u64,
    pub convergence_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iters: 200,
            decay: 0.95,
            seed: 0,
            convergence_tol: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "decay must lie in (0, 1), got {}",
                self.decay
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol < 0.0 {
            return Err(Error::InvalidConfig(
                "convergence_tol must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Loss at the start of every iteration, followed by the loss of the
    /// returned state; `iterations_run + 1` entries.
    pub loss_history: Vec<f64>,
    pub normalized_loss_history: Vec<f64>,
    /// Step size applied at each iteration.
    pub eta_history: Vec<f64>,
    pub beta_history: Vec<Complex64>,
    pub final_beta: Complex64,
    pub iterations_run: usize,
    pub converged: bool,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().expect("history is never empty")
    }

    pub fn final_normalized_loss(&self) -> f64 {
        *self
            .normalized_loss_history
            .last()
            .expect("history is never empty")
    }

    /// `iteration,loss,normalized_loss,eta,beta_re,beta_im`; the final row
    /// describes the returned state and has no step size.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,loss,normalized_loss,eta,beta_re,beta_im")?;
        for (k, (&loss, &norm)) in self
            .loss_history
            .iter()
            .zip(&self.normalized_loss_history)
            .enumerate()
        {
            let eta = self
                .eta_history
                .get(k)
                .map(|e| e.to_string())
                .unwrap_or_default();
            let beta = self.beta_history[k];
            writeln!(out, "{k},{loss},{norm},{eta},{},{}", beta.re, beta.im)?;
        }
        Ok(())
    }
}

fn check_shape(g: &Array2<Complex64>, f: &TargetOperator) -> Result<()> {
    let expected = f.matrix().dim();
    if g.dim() != expected {
        return Err(Error::ShapeMismatch {
            expected,
            got: g.dim(),
        });
    }
    Ok(())
}

/// `‖βG − F‖_F²`.
pub fn loss(g: &Array2<Complex64>, f: &TargetOperator, beta: Complex64) -> Result<f64> {
    check_shape(g, f)?;
    Ok(Zip::from(g)
        .and(f.matrix())
        .fold(0.0, |acc, &gi, &fi| acc + (beta * gi - fi).norm_sqr()))
}

/// Least-squares scale `(gᴴg)⁻¹ gᴴf` over the vectorized matrices.
pub fn ls_beta(g: &Array2<Complex64>, f: &TargetOperator) -> Result<Complex64> {
    check_shape(g, f)?;
    let (num, den) = Zip::from(g)
        .and(f.matrix())
        .fold((Complex64::new(0.0, 0.0), 0.0), |(num, den), &gi, &fi| {
            (num + gi.conj() * fi, den + gi.norm_sqr())
        });
    if den == 0.0 || !den.is_finite() {
        return Err(Error::ZeroResponse);
    }
    Ok(num / den)
}

/// `∂L/∂ξ_{l,m}` with β held fixed; row `l - 1` holds layer `l`.
pub fn gradient(state: &SimState, f: &TargetOperator, beta: Complex64) -> Result<Array2<f64>> {
    let cascade = state.cascade();
    gradient_from(&cascade, f, beta)
}

fn gradient_from(
    cascade: &crate::model::Cascade,
    f: &TargetOperator,
    beta: Complex64,
) -> Result<Array2<f64>> {
    check_shape(&cascade.transfer, f)?;
    let residual = &cascade.transfer * beta - f.matrix();
    let layers = cascade.forward.len();
    let m = cascade.forward[0].nrows();

    let rows: Vec<Vec<f64>> = (0..layers)
        .into_par_iter()
        .map(|l| {
            // [P_{l,n}ᴴ r_n]_m = conj(q_{l,n,m}) [B_lᴴ r_n]_m
            let back = cascade.backward[l].t().mapv(|z| z.conj()).dot(&residual);
            let summed = (&back * &cascade.forward[l].mapv(|z| z.conj())).sum_axis(Axis(1));
            summed
                .iter()
                .zip(&cascade.upsilon[l])
                .map(|(s, u)| 2.0 * (beta.conj() * u.conj() * s).im)
                .collect()
        })
        .collect();

    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((layers, m), flat).expect("layers × atoms"))
}

/// Trains from phases drawn uniformly with `cfg.seed`.
pub fn train(
    geom: &SimGeometry,
    f: &TargetOperator,
    cfg: &TrainConfig,
) -> Result<(SimState, TrainReport)> {
    cfg.validate()?;
    let state = SimState::random(geom, Arc::new(build_stack(geom)), cfg.seed);
    train_from(state, f, cfg)
}

/// Runs the descent loop from an existing state. At iteration `k` the
/// largest phase change is exactly `π ζᵏ`.
pub fn train_from(
    mut state: SimState,
    f: &TargetOperator,
    cfg: &TrainConfig,
) -> Result<(SimState, TrainReport)> {
    cfg.validate()?;
    let norm = f.matrix().len() as f64;
    let mut losses = Vec::with_capacity(cfg.max_iters + 1);
    let mut betas = Vec::with_capacity(cfg.max_iters + 1);
    let mut etas = Vec::with_capacity(cfg.max_iters);
    let mut converged = false;
    let mut decay = 1.0;

    for _ in 0..cfg.max_iters {
        let cascade = state.cascade();
        let beta = ls_beta(&cascade.transfer, f)?;
        let current = loss(&cascade.transfer, f, beta)?;
        losses.push(current);
        betas.push(beta);

        if current == 0.0 || has_converged(&losses, cfg.convergence_tol) {
            converged = true;
            break;
        }

        let grad = gradient_from(&cascade, f, beta)?;
        let peak = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if peak == 0.0 || !peak.is_finite() {
            converged = peak == 0.0;
            break;
        }
        let eta = PI * decay / peak;
        state.descend(&grad, eta);
        etas.push(eta);
        decay *= cfg.decay;
    }

    // the loop either broke before stepping (state already measured) or
    // stepped (state needs a fresh evaluation)
    if etas.len() == losses.len() {
        let g = state.transfer_matrix();
        let beta = ls_beta(&g, f)?;
        losses.push(loss(&g, f, beta)?);
        betas.push(beta);
    }

    let report = TrainReport {
        normalized_loss_history: losses.iter().map(|l| l / norm).collect(),
        final_beta: *betas.last().expect("at least one evaluation"),
        iterations_run: etas.len(),
        loss_history: losses,
        eta_history: etas,
        beta_history: betas,
        converged,
    };
    Ok((state, report))
}

fn has_converged(losses: &[f64], tol: f64) -> bool {
    let k = losses.len();
    if k <= CONVERGENCE_WINDOW {
        return false;
    }
    let then = losses[k - 1 - CONVERGENCE_WINDOW];
    then > 0.0 && ((losses[k - 1] - then) / then).abs() < tol
}
