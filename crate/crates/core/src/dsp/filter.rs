use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{DspError, SignalTrial};

/// Normalized second-order section
/// `y[n] = b0·x[n] + b1·x[n−1] + b2·x[n−2] − a1·y[n−1] − a2·y[n−2]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

struct Prototype {
    cos_w0: f64,
    alpha: f64,
}

impl Prototype {
    fn new(sample_rate_hz: f64, f0_hz: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * f0_hz / sample_rate_hz;
        Self {
            cos_w0: w0.cos(),
            alpha: w0.sin() / (2.0 * q),
        }
    }
}

impl Biquad {
    fn normalized(b: [f64; 3], a: [f64; 3]) -> Self {
        Self {
            b0: b[0] / a[0],
            b1: b[1] / a[0],
            b2: b[2] / a[0],
            a1: a[1] / a[0],
            a2: a[2] / a[0],
        }
    }

    /// Band-reject section with unit gain away from `f0_hz`.
    pub fn notch(sample_rate_hz: f64, f0_hz: f64, q: f64) -> Self {
        let p = Prototype::new(sample_rate_hz, f0_hz, q);
        Self::normalized(
            [1.0, -2.0 * p.cos_w0, 1.0],
            [1.0 + p.alpha, -2.0 * p.cos_w0, 1.0 - p.alpha],
        )
    }

    /// Band-pass section with unit gain at `f0_hz`.
    pub fn bandpass(sample_rate_hz: f64, f0_hz: f64, q: f64) -> Self {
        let p = Prototype::new(sample_rate_hz, f0_hz, q);
        Self::normalized(
            [p.alpha, 0.0, -p.alpha],
            [1.0 + p.alpha, -2.0 * p.cos_w0, 1.0 - p.alpha],
        )
    }

    pub fn lowpass(sample_rate_hz: f64, cutoff_hz: f64, q: f64) -> Self {
        let p = Prototype::new(sample_rate_hz, cutoff_hz, q);
        let k = 1.0 - p.cos_w0;
        Self::normalized(
            [k / 2.0, k, k / 2.0],
            [1.0 + p.alpha, -2.0 * p.cos_w0, 1.0 - p.alpha],
        )
    }

    pub fn highpass(sample_rate_hz: f64, cutoff_hz: f64, q: f64) -> Self {
        let p = Prototype::new(sample_rate_hz, cutoff_hz, q);
        let k = 1.0 + p.cos_w0;
        Self::normalized(
            [k / 2.0, -k, k / 2.0],
            [1.0 + p.alpha, -2.0 * p.cos_w0, 1.0 - p.alpha],
        )
    }

    /// Gain for a constant input.
    pub fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }

    /// `|H(e^{jω})|` at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate_hz;
        let (c1, s1) = (w.cos(), w.sin());
        let (c2, s2) = ((2.0 * w).cos(), (2.0 * w).sin());
        let num_re = self.b0 + self.b1 * c1 + self.b2 * c2;
        let num_im = -(self.b1 * s1 + self.b2 * s2);
        let den_re = 1.0 + self.a1 * c1 + self.a2 * c2;
        let den_im = -(self.a1 * s1 + self.a2 * s2);
        (num_re.hypot(num_im)) / (den_re.hypot(den_im))
    }
}

/// Cascade of second-order sections.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondOrderSections(pub Vec<Biquad>);

impl SecondOrderSections {
    pub fn magnitude(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        self.0
            .iter()
            .map(|s| s.magnitude(freq_hz, sample_rate_hz))
            .product()
    }

    pub fn order(&self) -> usize {
        2 * self.0.len()
    }

    /// Causal filtering. Section states start at the steady state for a
    /// constant input equal to `x[0]`, so a DC signal passes without a
    /// start-up transient.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let Some(&first) = x.first() else {
            return y;
        };
        let mut level = first;
        for s in &self.0 {
            let g = s.dc_gain();
            // transposed direct form II steady state for input `level`
            let mut z1 = (g - s.b0) * level;
            let mut z2 = (s.b2 - s.a2 * g) * level;
            for v in y.iter_mut() {
                let input = *v;
                let out = s.b0 * input + z1;
                z1 = s.b1 * input - s.a1 * out + z2;
                z2 = s.b2 * input - s.a2 * out;
                *v = out;
            }
            level *= g;
        }
        y
    }

    /// Forward-backward filtering over a mirror-extended signal. The
    /// magnitude response is squared and the phase response cancels.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let pad = (3 * (2 * self.0.len() + 1)).min(n.saturating_sub(1));
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend(x[1..=pad].iter().rev());
        ext.extend_from_slice(x);
        ext.extend(x[n - 1 - pad..n - 1].iter().rev());
        let mut y = self.filter(&ext);
        y.reverse();
        let mut y = self.filter(&y);
        y.reverse();
        y.drain(..pad);
        y.truncate(n);
        y
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum FilterKind {
    /// Single second-order band-reject section.
    Notch { f0_hz: f64, q: f64 },
    /// `order / 2` cascaded band-reject sections at the same centre.
    Bandstop { f0_hz: f64, q: f64, order: usize },
    /// Second-order band-pass with unit peak gain.
    Bandpass { f0_hz: f64, q: f64 },
    /// Butterworth low-pass, `order` even.
    Lowpass { cutoff_hz: f64, order: usize },
    /// Butterworth high-pass, `order` even.
    Highpass { cutoff_hz: f64, order: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub kind: FilterKind,
    #[serde(default = "default_zero_phase")]
    pub zero_phase: bool,
}

fn default_zero_phase() -> bool {
    true
}

pub const DEFAULT_NOTCH_Q: f64 = 35.0;
pub const DEFAULT_BUTTERWORTH_ORDER: usize = 4;

impl FilterSpec {
    pub fn notch(f0_hz: f64) -> Self {
        Self::new(FilterKind::Notch {
            f0_hz,
            q: DEFAULT_NOTCH_Q,
        })
    }

    pub fn bandstop(f0_hz: f64) -> Self {
        Self::new(FilterKind::Bandstop {
            f0_hz,
            q: DEFAULT_NOTCH_Q,
            order: 2,
        })
    }

    pub fn bandpass(f0_hz: f64) -> Self {
        Self::new(FilterKind::Bandpass {
            f0_hz,
            q: DEFAULT_NOTCH_Q,
        })
    }

    pub fn lowpass(cutoff_hz: f64) -> Self {
        Self::new(FilterKind::Lowpass {
            cutoff_hz,
            order: DEFAULT_BUTTERWORTH_ORDER,
        })
    }

    pub fn highpass(cutoff_hz: f64) -> Self {
        Self::new(FilterKind::Highpass {
            cutoff_hz,
            order: DEFAULT_BUTTERWORTH_ORDER,
        })
    }

    fn new(kind: FilterKind) -> Self {
        Self {
            kind,
            zero_phase: true,
        }
    }

    pub fn causal(mut self) -> Self {
        self.zero_phase = false;
        self
    }

    /// Realizes the filter for a sample rate.
    pub fn design(&self, sample_rate_hz: f64) -> Result<SecondOrderSections, DspError> {
        let nyquist_hz = sample_rate_hz / 2.0;
        let check_freq = |what, freq_hz: f64| {
            if freq_hz.is_finite() && freq_hz > 0.0 && freq_hz < nyquist_hz {
                Ok(())
            } else {
                Err(DspError::Frequency {
                    what,
                    freq_hz,
                    nyquist_hz,
                })
            }
        };
        let check_q = |q: f64| {
            if q.is_finite() && q > 0.0 {
                Ok(())
            } else {
                Err(DspError::Config(format!("quality factor {q} must be positive")))
            }
        };
        let check_order = |order: usize| {
            if order >= 2 && order.is_multiple_of(2) {
                Ok(())
            } else {
                Err(DspError::Config(format!("order {order} must be a positive even integer")))
            }
        };
        let sections = match self.kind {
            FilterKind::Notch { f0_hz, q } => {
                check_freq("notch centre", f0_hz)?;
                check_q(q)?;
                vec![Biquad::notch(sample_rate_hz, f0_hz, q)]
            }
            FilterKind::Bandstop { f0_hz, q, order } => {
                check_freq("band-stop centre", f0_hz)?;
                check_q(q)?;
                check_order(order)?;
                vec![Biquad::notch(sample_rate_hz, f0_hz, q); order / 2]
            }
            FilterKind::Bandpass { f0_hz, q } => {
                check_freq("band-pass centre", f0_hz)?;
                check_q(q)?;
                vec![Biquad::bandpass(sample_rate_hz, f0_hz, q)]
            }
            FilterKind::Lowpass { cutoff_hz, order } => {
                check_freq("low-pass cutoff", cutoff_hz)?;
                check_order(order)?;
                butterworth_qs(order)
                    .map(|q| Biquad::lowpass(sample_rate_hz, cutoff_hz, q))
                    .collect()
            }
            FilterKind::Highpass { cutoff_hz, order } => {
                check_freq("high-pass cutoff", cutoff_hz)?;
                check_order(order)?;
                butterworth_qs(order)
                    .map(|q| Biquad::highpass(sample_rate_hz, cutoff_hz, q))
                    .collect()
            }
        };
        Ok(SecondOrderSections(sections))
    }
}

/// Section quality factors of an even-order Butterworth prototype.
fn butterworth_qs(order: usize) -> impl Iterator<Item = f64> {
    (0..order / 2).map(move |k| 1.0 / (2.0 * ((2 * k + 1) as f64 * PI / (2 * order) as f64).sin()))
}

/// Filters every channel of `trial` independently.
pub fn apply_filter(trial: &SignalTrial, spec: &FilterSpec) -> Result<SignalTrial, DspError> {
    trial.check_finite()?;
    let sos = spec.design(trial.sample_rate_hz)?;
    if trial.len() <= 3 * sos.order() {
        return Err(DspError::TooShort {
            samples: trial.len(),
            needed: format!("a filter of order {} (more than {})", sos.order(), 3 * sos.order()),
        });
    }
    trial.map_channels(|ch| {
        Ok(if spec.zero_phase {
            sos.filtfilt(ch)
        } else {
            sos.filter(ch)
        })
    })
}
