use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::linalg::CMat;

/// `‖Ĥ - H‖² / ‖H‖²`, linear scale.
pub fn nmse(h_hat: &CMat, h: &CMat) -> Result<f64> {
    if h_hat.shape() != h.shape() {
        return Err(Error::InvalidArgument(format!(
            "estimate is {:?}, truth is {:?}",
            h_hat.shape(),
            h.shape()
        )));
    }
    let power = h.norm_squared();
    if power == 0.0 {
        return Err(Error::InvalidArgument("NMSE of an all-zero channel is undefined".into()));
    }
    Ok((h_hat - h).norm_squared() / power)
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// `sqrt(mean ‖p̂ - p‖²)` in meters.
pub fn rmse(estimates: &[Point3], truth: &[Point3]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} estimates for {} true locations",
            estimates.len(),
            truth.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("RMSE of an empty list".into()));
    }
    let sum: f64 = estimates.iter().zip(truth).map(|(a, b)| (a - b).norm_squared()).sum();
    Ok((sum / estimates.len() as f64).sqrt())
}

/// Noise variance giving `p ‖H‖² / (M N σ²)` equal to `snr_db`.
pub fn noise_var_for_snr(tx_power: f64, h: &CMat, snr_db: f64) -> Result<f64> {
    if !snr_db.is_finite() || !(tx_power > 0.0) {
        return Err(Error::InvalidArgument("SNR must be finite and tx power positive".into()));
    }
    let entries = (h.nrows() * h.ncols()) as f64;
    let power = h.norm_squared();
    if power == 0.0 || entries == 0.0 {
        return Err(Error::InvalidArgument("SNR of an all-zero channel is undefined".into()));
    }
    Ok(tx_power * power / (entries * 10f64.powf(snr_db / 10.0)))
}
