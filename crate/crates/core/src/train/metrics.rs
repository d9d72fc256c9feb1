//! Scale-invariant signal-to-distortion ratio.

use crate::error::{check_len, Error, Result};

/// Added to the residual energy so a perfect estimate stays finite.
pub const SI_SDR_EPS: f64 = 1e-8;

struct Projection {
    dot: f64,
    target_energy: f64,
    residual_energy: f64,
    alpha: f64,
}

fn project(estimate: &[f64], reference: &[f64]) -> Result<Projection> {
    check_len("si-sdr lengths", reference.len(), estimate.len())?;
    let ref_energy: f64 = reference.iter().map(|r| r * r).sum();
    if ref_energy == 0.0 {
        return Err(Error::invalid("si-sdr reference is all zeros"));
    }
    let dot: f64 = estimate.iter().zip(reference).map(|(e, r)| e * r).sum();
    let alpha = dot / ref_energy;
    let residual_energy = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| (e - alpha * r).powi(2))
        .sum();
    Ok(Projection {
        dot,
        target_energy: alpha * alpha * ref_energy,
        residual_energy,
        alpha,
    })
}

/// `10·log10(‖α·ref‖² / (‖est − α·ref‖² + ε))` with `α = ⟨est, ref⟩/‖ref‖²`.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    let p = project(estimate, reference)?;
    Ok(10.0 * (p.target_energy / (p.residual_energy + SI_SDR_EPS)).log10())
}

/// SI-SDR and its gradient with respect to the estimate.
///
/// With `p = ⟨est, ref⟩`, `e = est − α·ref`, `E = ‖e‖²`:
/// `∂/∂est = 10/ln10 · (2·ref/p − 2·e/(E + ε))`.
pub fn si_sdr_grad(estimate: &[f64], reference: &[f64]) -> Result<(f64, Vec<f64>)> {
    let p = project(estimate, reference)?;
    let value = 10.0 * (p.target_energy / (p.residual_energy + SI_SDR_EPS)).log10();
    let k = 10.0 / std::f64::consts::LN_10;
    let den = p.residual_energy + SI_SDR_EPS;
    let grad = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| {
            let resid = e - p.alpha * r;
            k * (2.0 * r / p.dot - 2.0 * resid / den)
        })
        .collect();
    Ok((value, grad))
}
