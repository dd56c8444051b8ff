use super::{DspError, SignalTrial};

fn check_mu(mu: f64) -> Result<(), DspError> {
    if mu.is_finite() && mu > 0.0 {
        Ok(())
    } else {
        Err(DspError::Mu(mu))
    }
}

/// μ-law companding `sign(x)·ln(1 + μ|x|)/ln(1 + μ)` on `[-1, 1]`.
pub fn mu_law(x: f64, mu: f64) -> Result<f64, DspError> {
    check_mu(mu)?;
    if !(-1.0..=1.0).contains(&x) {
        return Err(DspError::Domain(x));
    }
    Ok(x.signum() * (mu * x.abs()).ln_1p() / mu.ln_1p())
}

/// Inverse companding `sign(y)·((1 + μ)^|y| − 1)/μ`.
pub fn mu_law_inverse(y: f64, mu: f64) -> Result<f64, DspError> {
    check_mu(mu)?;
    if !(-1.0..=1.0).contains(&y) {
        return Err(DspError::Domain(y));
    }
    Ok(y.signum() * (y.abs() * mu.ln_1p()).exp_m1() / mu)
}

/// Elementwise μ-law over a trial already scaled into `[-1, 1]`.
pub fn mu_law_trial(trial: &SignalTrial, mu: f64) -> Result<SignalTrial, DspError> {
    let out = trial
        .samples()
        .iter()
        .map(|&x| mu_law(x, mu))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(trial.with_samples(out))
}
