use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RSquared {
    pub value: f64,
    /// Output dimensions dropped because their targets were constant.
    pub excluded: Vec<usize>,
}

/// Coefficient of determination `1 − SS_res / SS_tot`, per output dimension, averaged.
/// Dimensions with constant targets are excluded and reported.
pub fn r_squared(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<RSquared> {
    if predictions.len() != targets.len() || targets.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "R² needs equal non-empty inputs, got {} predictions and {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let d = targets[0].len();
    let n = targets.len() as f64;
    let mut total = 0.0;
    let mut used = 0usize;
    let mut excluded = Vec::new();
    for j in 0..d {
        let mean = targets.iter().map(|t| t[j]).sum::<f64>() / n;
        let ss_tot: f64 = targets.iter().map(|t| (t[j] - mean).powi(2)).sum();
        if ss_tot == 0.0 {
            excluded.push(j);
            continue;
        }
        let ss_res: f64 = predictions.iter().zip(targets).map(|(p, t)| (t[j] - p[j]).powi(2)).sum();
        total += 1.0 - ss_res / ss_tot;
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidArgument("R² undefined: every target dimension is constant".into()));
    }
    Ok(RSquared {
        value: total / used as f64,
        excluded,
    })
}
