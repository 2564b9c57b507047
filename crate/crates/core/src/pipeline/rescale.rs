use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Rescaled {
    pub values: Vec<f64>,
    /// Common multiplier applied to every regional value.
    pub factor: f64,
}

/// Scales regional level estimates so their proxy-weighted mean equals
/// `country_value`. An empty region list is a no-op.
pub fn rescale_regions(estimates: &[f64], proxies: &[f64], country_value: f64) -> Result<Rescaled> {
    if estimates.len() != proxies.len() {
        return Err(Error::validation("rescaling: one proxy per regional estimate required"));
    }
    if estimates.is_empty() {
        return Ok(Rescaled {
            values: Vec::new(),
            factor: 1.0,
        });
    }
    if !(country_value > 0.0 && country_value.is_finite()) {
        return Err(Error::validation(format!("rescaling: country value {country_value} not positive")));
    }
    if proxies.iter().any(|w| !(*w >= 0.0)) || estimates.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::validation("rescaling: proxies must be non-negative and estimates positive"));
    }
    let total: f64 = proxies.iter().sum();
    if total <= 0.0 {
        return Err(Error::validation("rescaling: population proxies sum to zero"));
    }
    let mean = weighted_mean(estimates, proxies);
    let factor = country_value / mean;
    Ok(Rescaled {
        values: estimates.iter().map(|e| e * factor).collect(),
        factor,
    })
}

pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total
}
