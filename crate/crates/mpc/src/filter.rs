//! Kalman filtering of the nominal-model error with a per-component
//! hysteresis hold on the output.

#[cfg(test)]
use awoisv_predict::N_X;
use awoisv_predict::{StateMat, StateVec};

use crate::MpcConfig;

/// Filter state. The Kalman recursion runs on the unheld estimate; the
/// hysteresis hold gates only the output the feedback sees. Feeding held
/// values back into the prediction would re-amplify stale components through
/// the couplings of the error transition and can destabilize the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorFilterState {
    /// Current output: filtered and hysteresis-held error estimate.
    pub e_hat: StateVec,
    /// Internal filtered estimate (no hold), which drives the prediction.
    pub filtered: StateVec,
    /// Prediction before the measurement update of the last step.
    pub prior: StateVec,
    /// Error covariance.
    pub p: StateMat,
    /// Componentwise output bound from the tube construction, carried for
    /// diagnostics.
    pub bound: StateVec,
    initialized: bool,
}

impl ErrorFilterState {
    pub fn new(cfg: &MpcConfig) -> Self {
        Self {
            e_hat: StateVec::zeros(),
            filtered: StateVec::zeros(),
            prior: StateVec::zeros(),
            p: StateMat::from_fn(|i, j| if i == j { cfg.kalman_q[i] } else { 0.0 }),
            bound: StateVec::zeros(),
            initialized: false,
        }
    }

    pub fn reset(&mut self, cfg: &MpcConfig) {
        *self = Self::new(cfg);
    }
}

/// One predict/update/hold cycle.
///
/// Predict with the closed-loop error transition `a_e`, correct with the
/// measured error (identity observation), then hold each output component at
/// its previous output unless the filtered value moved by at least the
/// component's hysteresis threshold. The covariance update uses the Joseph
/// form, which keeps it symmetric PSD under roundoff. The first call accepts
/// the filtered value without a hold.
pub fn kalman_hysteresis_update(
    filter: &mut ErrorFilterState,
    measured: &StateVec,
    a_e: &StateMat,
    cfg: &MpcConfig,
) -> StateVec {
    let q = StateMat::from_fn(|i, j| if i == j { cfg.kalman_q[i] } else { 0.0 });
    let r = StateMat::from_fn(|i, j| if i == j { cfg.kalman_r[i] } else { 0.0 });

    let prior = a_e * filter.filtered;
    let p_prior = a_e * filter.p * a_e.transpose() + q;
    // Gain with identity observation: K = P (P + R)^-1.
    let innovation_cov = p_prior + r;
    let gain = match innovation_cov.try_inverse() {
        Some(inv) => p_prior * inv,
        // Fall back to a pass-through gain if the update is degenerate.
        None => StateMat::identity(),
    };
    let filtered = prior + gain * (measured - prior);
    let i_kc = StateMat::identity() - gain;
    let p_post = i_kc * p_prior * i_kc.transpose() + gain * r * gain.transpose();

    let output = if filter.initialized {
        StateVec::from_fn(|i, _| {
            if (filtered[i] - filter.e_hat[i]).abs() < cfg.hysteresis[i] {
                filter.e_hat[i]
            } else {
                filtered[i]
            }
        })
    } else {
        filtered
    };

    filter.prior = prior;
    filter.p = 0.5 * (p_post + p_post.transpose());
    filter.filtered = filtered;
    filter.e_hat = output;
    filter.initialized = true;
    output
}
