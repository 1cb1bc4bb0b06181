//! Log-log least-squares rate fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    /// exp(intercept): error ≈ constant · ε^slope.
    pub constant: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
    pub points: usize,
    /// ε values dropped because their error was not positive.
    pub excluded: Vec<f64>,
}

/// Fits log(error) = intercept + slope·log(ε); needs three positive pairs.
pub fn fit_rate(epsilons: &[f64], errors: &[f64]) -> Result<RateFit> {
    if epsilons.len() != errors.len() {
        return Err(Error::Dimension(format!("{} epsilons but {} errors", epsilons.len(), errors.len())));
    }
    let mut excluded = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&e, &err) in epsilons.iter().zip(errors) {
        if !(e > 0.0) {
            return Err(Error::InvalidInput(format!("ε must be positive, got {e}")));
        }
        if err > 0.0 && err.is_finite() {
            xs.push(e.ln());
            ys.push(err.ln());
        } else {
            excluded.push(e);
        }
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("a rate fit needs at least 3 positive errors, got {n}")));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("a rate fit needs distinct ε values".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(RateFit {
        slope,
        constant: intercept.exp(),
        residual: (ss / n as f64).sqrt(),
        points: n,
        excluded,
    })
}
