//! Safe OTDR launch power against in-band interference at the ONT.

use serde::{Deserialize, Serialize};

use crate::error::{PonError, Result};
use crate::otdr::OtdrSpec;
use crate::topology::PonTopology;

/// Comparisons against the penalty-free threshold tolerate this much
/// floating-point slack.
pub const LAUNCH_TOLERANCE_DB: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferenceSpec {
    /// Highest post-splitter OTDR power with no measurable power penalty.
    pub penalty_free_post_splitter_dbm: f64,
    /// ONT filter isolation in the monitoring band.
    pub isolation_db: f64,
    pub path_loss_headend_to_post_splitter_db: f64,
}

impl Default for InterferenceSpec {
    fn default() -> Self {
        Self {
            penalty_free_post_splitter_dbm: -7.8,
            isolation_db: 40.0,
            path_loss_headend_to_post_splitter_db: 16.8,
        }
    }
}

impl InterferenceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.isolation_db >= 0.0) {
            return Err(PonError::invalid("isolation must be non-negative"));
        }
        if !(self.path_loss_headend_to_post_splitter_db >= 0.0) {
            return Err(PonError::invalid("headend to post-splitter loss must be non-negative"));
        }
        Ok(())
    }
}

pub fn max_headend_power(spec: &InterferenceSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.penalty_free_post_splitter_dbm + spec.path_loss_headend_to_post_splitter_db)
}

/// Power reaching the ONT photodetector after the band filter.
pub fn receiver_interference(post_splitter_dbm: f64, isolation_db: f64) -> Result<f64> {
    if !(isolation_db >= 0.0) {
        return Err(PonError::invalid("isolation must be non-negative"));
    }
    Ok(post_splitter_dbm - isolation_db)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaunchCheck {
    pub launch_dbm: f64,
    pub post_splitter_dbm: f64,
    pub threshold_dbm: f64,
    pub pass: bool,
    pub margin_db: f64,
    pub receiver_interference_dbm: f64,
}

/// Checks a launch power against the threshold, using the topology's loss
/// from the headend through the first splitter.
pub fn check_launch(
    topology: &PonTopology,
    otdr: &OtdrSpec,
    launch_dbm: f64,
    spec: &InterferenceSpec,
) -> Result<LaunchCheck> {
    spec.validate()?;
    let splitter = topology
        .first_splitter_index()
        .ok_or_else(|| PonError::Structural("topology has no splitter".into()))?;
    let loss = topology.prefix_loss(splitter + 1, otdr.wavelength_nm)?;
    Ok(check_with_loss(launch_dbm, loss, spec))
}

/// Same check with the headend→post-splitter loss given directly.
pub fn check_with_loss(launch_dbm: f64, loss_db: f64, spec: &InterferenceSpec) -> LaunchCheck {
    let post = launch_dbm - loss_db;
    let margin = spec.penalty_free_post_splitter_dbm - post;
    LaunchCheck {
        launch_dbm,
        post_splitter_dbm: post,
        threshold_dbm: spec.penalty_free_post_splitter_dbm,
        pass: margin >= -LAUNCH_TOLERANCE_DB,
        margin_db: margin,
        receiver_interference_dbm: post - spec.isolation_db,
    }
}
