use serde::{Deserialize, Serialize};

use super::{DspError, SignalTrial};

/// Orthogonal wavelet families available for denoising.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wavelet {
    Haar,
    /// Daubechies, 8 taps, 4 vanishing moments.
    Db4,
}

const HAAR_REC_LO: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];

const DB4_REC_LO: [f64; 8] = [
    0.230_377_813_308_896_5,
    0.714_846_570_552_915_7,
    0.630_880_767_929_858_9,
    -0.027_983_769_416_859_854,
    -0.187_034_811_719_093_1,
    0.030_841_381_835_560_764,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_032,
];

struct FilterBank {
    dec_lo: Vec<f64>,
    dec_hi: Vec<f64>,
    rec_lo: Vec<f64>,
    rec_hi: Vec<f64>,
}

impl Wavelet {
    fn rec_lo(self) -> &'static [f64] {
        match self {
            Wavelet::Haar => &HAAR_REC_LO,
            Wavelet::Db4 => &DB4_REC_LO,
        }
    }

    pub fn filter_len(self) -> usize {
        self.rec_lo().len()
    }

    fn bank(self) -> FilterBank {
        let rec_lo = self.rec_lo().to_vec();
        let f = rec_lo.len();
        // quadrature mirror: rec_hi[k] = (−1)^k · rec_lo[F−1−k]
        let rec_hi: Vec<f64> = (0..f)
            .map(|k| if k % 2 == 0 { rec_lo[f - 1 - k] } else { -rec_lo[f - 1 - k] })
            .collect();
        let dec_lo = rec_lo.iter().rev().copied().collect();
        let dec_hi = rec_hi.iter().rev().copied().collect();
        FilterBank {
            dec_lo,
            dec_hi,
            rec_lo,
            rec_hi,
        }
    }
}

/// Half-sample symmetric extension: `x[−1] = x[0]`, `x[N] = x[N−1]`.
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Single-level decomposition into (approximation, detail), each of length
/// `⌊(N + F − 1)/2⌋` for filter length `F`.
pub fn dwt(x: &[f64], wavelet: Wavelet) -> (Vec<f64>, Vec<f64>) {
    let bank = wavelet.bank();
    let n = x.len();
    let f = bank.dec_lo.len();
    let out_len = (n + f - 1) / 2;
    let mut approx = Vec::with_capacity(out_len);
    let mut detail = Vec::with_capacity(out_len);
    for o in 0..out_len {
        let centre = 2 * o as isize + 1;
        let (mut a, mut d) = (0.0, 0.0);
        for j in 0..f {
            let v = x[reflect(centre - j as isize, n)];
            a += bank.dec_lo[j] * v;
            d += bank.dec_hi[j] * v;
        }
        approx.push(a);
        detail.push(d);
    }
    (approx, detail)
}

/// Single-level reconstruction; output length is `2n − F + 2`.
pub fn idwt(approx: &[f64], detail: &[f64], wavelet: Wavelet) -> Vec<f64> {
    assert_eq!(approx.len(), detail.len(), "coefficient lengths differ");
    let bank = wavelet.bank();
    let n = approx.len();
    let f = bank.rec_lo.len();
    let out_len = (2 * n + 2).saturating_sub(f);
    (0..out_len)
        .map(|i| {
            // taps m = i + F − 2 − 2k must fall in [0, F)
            let hi = (i + f - 2) / 2;
            let lo = i.saturating_sub(1).div_ceil(2);
            let mut acc = 0.0;
            for k in lo..=hi.min(n - 1) {
                let m = i + f - 2 - 2 * k;
                acc += bank.rec_lo[m] * approx[k] + bank.rec_hi[m] * detail[k];
            }
            acc
        })
        .collect()
}

/// Multi-level decomposition, ordered `[cA_L, cD_L, …, cD_1]`.
pub fn wavedec(x: &[f64], wavelet: Wavelet, levels: usize) -> Vec<Vec<f64>> {
    let mut details = Vec::with_capacity(levels);
    let mut approx = x.to_vec();
    for _ in 0..levels {
        let (a, d) = dwt(&approx, wavelet);
        details.push(d);
        approx = a;
    }
    let mut out = vec![approx];
    out.extend(details.into_iter().rev());
    out
}

/// Inverse of [`wavedec`]; the result may carry one extra trailing sample
/// for odd-length inputs, which callers trim.
pub fn waverec(coeffs: &[Vec<f64>], wavelet: Wavelet) -> Vec<f64> {
    let mut approx = coeffs[0].clone();
    for detail in &coeffs[1..] {
        if approx.len() == detail.len() + 1 {
            approx.pop();
        }
        approx = idwt(&approx, detail, wavelet);
    }
    approx
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdRule {
    /// Soft threshold at `σ·√(2 ln n)`, `σ = median(|finest detail|)/0.6745`.
    UniversalSoft,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiseSpec {
    pub wavelet: Wavelet,
    pub levels: usize,
    #[serde(default = "default_rule")]
    pub threshold_rule: ThresholdRule,
}

fn default_rule() -> ThresholdRule {
    ThresholdRule::UniversalSoft
}

impl Default for DenoiseSpec {
    fn default() -> Self {
        Self {
            wavelet: Wavelet::Db4,
            levels: 4,
            threshold_rule: ThresholdRule::UniversalSoft,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn soft(x: f64, threshold: f64) -> f64 {
    x.signum() * (x.abs() - threshold).max(0.0)
}

fn denoise_channel(x: &[f64], spec: &DenoiseSpec) -> Vec<f64> {
    let mut coeffs = wavedec(x, spec.wavelet, spec.levels);
    let ThresholdRule::UniversalSoft = spec.threshold_rule;
    let mut finest: Vec<f64> = coeffs.last().unwrap().iter().map(|v| v.abs()).collect();
    let sigma = median(&mut finest) / 0.6745;
    let threshold = sigma * (2.0 * (x.len() as f64).ln()).sqrt();
    for detail in coeffs.iter_mut().skip(1) {
        detail.iter_mut().for_each(|v| *v = soft(*v, threshold));
    }
    let mut y = waverec(&coeffs, spec.wavelet);
    y.truncate(x.len());
    y
}

/// Wavelet-shrinkage denoising, channel by channel.
pub fn wavelet_denoise(trial: &SignalTrial, spec: &DenoiseSpec) -> Result<SignalTrial, DspError> {
    trial.check_finite()?;
    let t = trial.len();
    if spec.levels == 0 || spec.levels >= usize::BITS as usize || t < (1usize << spec.levels) {
        return Err(DspError::LevelsTooDeep {
            levels: spec.levels.min(usize::BITS as usize - 1),
            samples: t,
        });
    }
    trial.map_channels(|ch| Ok(denoise_channel(ch, spec)))
}
