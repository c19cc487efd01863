//! Central-difference check of the analytic gradient.
//!
//! The analytic pass treats ARU local parameters as constants (fully, or only
//! the variances under [`AruGradient::ThroughSolve`]). The numeric side holds
//! the same quantities at their unperturbed values, so both differentiate the
//! same function.

use serde::Serialize;

use super::grad::window_loss_and_grad;
use super::loss::nll_parts;
use crate::aru::AruState;
use crate::error::{Error, Result};
use crate::model::{trace_window, AruGradient, FrozenLocal, Mode, Model, ModelParams, WindowSample};

/// Denominator floor of the relative error, so coordinates whose gradient is
/// essentially zero are judged on absolute error.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub window: WindowSample,
    /// ARU state at the window origin; `None` starts from zero.
    pub state: Option<AruState>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.max_rel_error <= self.tolerance)
    }

    pub fn failing_blocks(&self) -> Vec<&str> {
        self.blocks
            .iter()
            .filter(|b| b.max_rel_error > self.tolerance)
            .map(|b| b.name.as_str())
            .collect()
    }

    pub fn worst(&self) -> Option<&BlockReport> {
        self.blocks
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Analytic mean loss gradient over the cases.
pub fn analytic_gradient(model: &Model, cases: &[GradCheckCase], policy: AruGradient) -> Result<ModelParams> {
    if cases.is_empty() {
        return Err(Error::Empty("no grad-check cases".into()));
    }
    let weight = 1.0 / cases.len() as f64;
    let mut grad = model.params.zeros_like();
    for c in cases {
        window_loss_and_grad(model, &c.window, c.state.as_ref(), policy, weight, &mut grad)?;
    }
    Ok(grad)
}

fn frozen_loss(model: &Model, cases: &[GradCheckCase], frozen: &[FrozenLocal]) -> Result<f64> {
    let mut total = 0.0;
    for (c, f) in cases.iter().zip(frozen) {
        let trace = trace_window(model, &c.window, c.state.as_ref(), Mode::Train, Some(f))?;
        let y = c.window.y_decoder.as_deref().ok_or(Error::MissingTargets)?;
        total += nll_parts(&trace.forecast.mu, &trace.forecast.sigma, y)?;
    }
    Ok(total / cases.len() as f64)
}

/// Compare `analytic` against central differences with step `step`,
/// coordinate by coordinate.
pub fn compare_gradient(
    model: &Model,
    cases: &[GradCheckCase],
    policy: AruGradient,
    analytic: &ModelParams,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let variance_only = policy == AruGradient::ThroughSolve;
    let frozen = cases
        .iter()
        .map(|c| {
            let t = trace_window(model, &c.window, c.state.as_ref(), Mode::Train, None)?;
            Ok(FrozenLocal::record(&t, variance_only))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut probe = model.clone();
    let names: Vec<String> = analytic.blocks().into_iter().map(|(n, _)| n).collect();
    let mut blocks = Vec::with_capacity(names.len());
    for (b, name) in names.into_iter().enumerate() {
        let analytic_block = analytic.blocks()[b].1.to_vec();
        let mut report = BlockReport {
            name,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..analytic_block.len() {
            let original = probe.params.blocks()[b].1[i];
            probe.params.blocks_mut()[b].1[i] = original + step;
            let plus = frozen_loss(&probe, cases, &frozen)?;
            probe.params.blocks_mut()[b].1[i] = original - step;
            let minus = frozen_loss(&probe, cases, &frozen)?;
            probe.params.blocks_mut()[b].1[i] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic_block[i], numeric);
            if err > report.max_rel_error || i == 0 {
                report.max_rel_error = err;
                report.worst_index = i;
                report.analytic = analytic_block[i];
                report.numeric = numeric;
            }
        }
        blocks.push(report);
    }
    Ok(GradCheckReport { tolerance, blocks })
}

/// Check the analytic gradient of the mean loss over `cases`.
pub fn grad_check(
    model: &Model,
    cases: &[GradCheckCase],
    policy: AruGradient,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let analytic = analytic_gradient(model, cases, policy)?;
    compare_gradient(model, cases, policy, &analytic, step, tolerance)
}
