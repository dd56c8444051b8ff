use std::f64::consts::PI;

use emgttl::dsp::{
    apply_filter, apply_stages, mu_law, mu_law_inverse, preprocess_chain, rescale_unit, wavedec, waverec,
    wavelet_denoise, DenoiseSpec, FilterSpec, PreprocessChain, SignalTrial, Wavelet, DEFAULT_MU,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn sine_trial(freq: f64, fs: f64, seconds: f64) -> SignalTrial {
    let n = (fs * seconds) as usize;
    let x = (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect();
    SignalTrial::new(x, 1, fs, "s", 1, 0).unwrap()
}

fn middle_rms(x: &[f64]) -> f64 {
    let n = x.len();
    let mid = &x[n / 4..3 * n / 4];
    (mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt()
}

fn db(ratio: f64) -> f64 {
    20.0 * ratio.log10()
}

/// Independent |H| for an RBJ notch: evaluated straight from the analog
/// prototype coefficients with complex arithmetic.
fn notch_reference_gain(freq: f64, fs: f64, f0: f64, q: f64) -> f64 {
    let w0 = 2.0 * PI * f0 / fs;
    let alpha = w0.sin() / (2.0 * q);
    let b = [1.0, -2.0 * w0.cos(), 1.0];
    let a = [1.0 + alpha, -2.0 * w0.cos(), 1.0 - alpha];
    let w = 2.0 * PI * freq / fs;
    let eval = |c: [f64; 3]| {
        let re: f64 = (0..3).map(|k| c[k] * (k as f64 * w).cos()).sum();
        let im: f64 = (0..3).map(|k| -c[k] * (k as f64 * w).sin()).sum();
        re.hypot(im)
    };
    eval(b) / eval(a)
}

#[test]
fn notch_passes_dc() {
    let t = SignalTrial::new(vec![0.37; 8000], 1, 4000.0, "s", 1, 0).unwrap();
    let y = apply_filter(&t, &FilterSpec::notch(50.0)).unwrap();
    for v in &y.samples()[2000..6000] {
        assert!((v - 0.37).abs() / 0.37 < 1e-6);
    }
}

#[test]
fn notch_attenuates_mains_and_passes_low_band() {
    let fs = 4000.0;
    let spec = FilterSpec::notch(50.0);
    let y50 = apply_filter(&sine_trial(50.0, fs, 10.0), &spec).unwrap();
    let y10 = apply_filter(&sine_trial(10.0, fs, 10.0), &spec).unwrap();
    let in_rms = 1.0 / 2f64.sqrt();
    let att50 = db(middle_rms(y50.samples()) / in_rms);
    let gain10 = db(middle_rms(y10.samples()) / in_rms);
    // zero-phase doubles the dB response of the single pass
    let ref10 = 2.0 * db(notch_reference_gain(10.0, fs, 50.0, 35.0));
    assert!(att50 <= -30.0, "50 Hz gain {att50} dB");
    assert!(gain10.abs() <= 1.0, "10 Hz gain {gain10} dB");
    assert!((gain10 - ref10).abs() < 0.05, "measured {gain10} vs reference {ref10}");
}

#[test]
fn butterworth_corners_single_pass() {
    let fs = 4000.0;
    for (spec, cutoff) in [
        (FilterSpec::lowpass(500.0).causal(), 500.0),
        (FilterSpec::highpass(20.0).causal(), 20.0),
    ] {
        let y = apply_filter(&sine_trial(cutoff, fs, 10.0), &spec).unwrap();
        let g = db(middle_rms(y.samples()) * 2f64.sqrt());
        assert!((g + 3.01).abs() < 0.1, "{spec:?}: {g} dB at cutoff");
    }
}

#[test]
fn zero_phase_has_no_lag() {
    let fs = 1000.0;
    let x = sine_trial(40.0, fs, 4.0);
    let y = apply_filter(&x, &FilterSpec::lowpass(100.0)).unwrap();
    let (xs, ys) = (x.samples(), y.samples());
    let n = xs.len();
    let xcorr = |lag: isize| -> f64 {
        (n / 4..3 * n / 4)
            .map(|i| xs[i] * ys[(i as isize + lag) as usize])
            .sum()
    };
    let best = (-10..=10).max_by(|&a, &b| xcorr(a).total_cmp(&xcorr(b))).unwrap();
    assert_eq!(best, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn filters_are_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 600;
        let x: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let mk = |v: Vec<f64>| SignalTrial::new(v, 1, 1000.0, "s", 1, 0).unwrap();
        for spec in [FilterSpec::notch(50.0), FilterSpec::lowpass(120.0), FilterSpec::highpass(20.0).causal()] {
            let fx = apply_filter(&mk(x.clone()), &spec).unwrap();
            let fy = apply_filter(&mk(y.clone()), &spec).unwrap();
            let fc = apply_filter(&mk(combo.clone()), &spec).unwrap();
            let scale = fc.samples().iter().fold(1e-12f64, |m, v| m.max(v.abs()));
            for i in 0..n {
                let lhs = fc.samples()[i];
                let rhs = a * fx.samples()[i] + b * fy.samples()[i];
                prop_assert!((lhs - rhs).abs() <= 1e-6 * scale);
            }
        }
    }

    #[test]
    fn multilevel_wavelet_round_trip(n in 16usize..300, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let coeffs = wavedec(&x, Wavelet::Db4, 3);
        let mut y = waverec(&coeffs, Wavelet::Db4);
        y.truncate(n);
        for (p, q) in x.iter().zip(&y) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn rescale_is_idempotent_and_bounded(values in proptest::collection::vec(-1e3f64..1e3, 3..40)) {
        let n = values.len() / 3 * 3;
        let t = SignalTrial::new(values[..n].to_vec(), 3, 100.0, "s", 1, 0).unwrap();
        let once = rescale_unit(&t);
        prop_assert!(once.samples().iter().all(|v| (-1.0..=1.0).contains(v)));
        prop_assert_eq!(rescale_unit(&once), once);
    }
}

fn polynomial(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            2.0 + 3.0 * t - 4.0 * t * t + 1.5 * t * t * t
        })
        .collect()
}

fn rms(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

#[test]
fn denoise_preserves_clean_polynomial() {
    let clean = polynomial(1024);
    let t = SignalTrial::new(clean.clone(), 1, 1000.0, "s", 1, 0).unwrap();
    let out = wavelet_denoise(&t, &DenoiseSpec::default()).unwrap();
    let signal_rms = (clean.iter().map(|v| v * v).sum::<f64>() / 1024.0).sqrt();
    assert!(rms(out.samples(), &clean) < 0.01 * signal_rms);
}

#[test]
fn denoise_reduces_error_on_noisy_polynomial() {
    let clean = polynomial(1024);
    let normal = Normal::new(0.0, 0.2).unwrap();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy: Vec<f64> = clean.iter().map(|v| v + normal.sample(&mut rng)).collect();
        let t = SignalTrial::new(noisy.clone(), 1, 1000.0, "s", 1, 0).unwrap();
        let out = wavelet_denoise(&t, &DenoiseSpec::default()).unwrap();
        let before = rms(&noisy, &clean);
        let after = rms(out.samples(), &clean);
        assert!(after < before, "seed {seed}: {after} !< {before}");
        let e_in: f64 = noisy.iter().map(|v| v * v).sum();
        let e_out: f64 = out.samples().iter().map(|v| v * v).sum();
        assert!(e_out <= e_in * 1.01);
    }
}

#[test]
fn denoise_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..500).map(|_| normal.sample(&mut rng)).collect();
    let t = SignalTrial::new(x, 1, 1000.0, "s", 1, 0).unwrap();
    let spec = DenoiseSpec::default();
    assert_eq!(wavelet_denoise(&t, &spec).unwrap(), wavelet_denoise(&t, &spec).unwrap());
}

/// Averaged periodogram power in the bin nearest `freq`, Hann-windowed.
fn welch_power(x: &[f64], fs: f64, seg: usize, freq: f64) -> f64 {
    let k = (freq * seg as f64 / fs).round() as usize;
    let window: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos())
        .collect();
    let mut total = 0.0;
    let mut count = 0;
    let mut start = 0;
    while start + seg <= x.len() {
        let (mut re, mut im) = (0.0, 0.0);
        for i in 0..seg {
            let ang = 2.0 * PI * (k * i) as f64 / seg as f64;
            let v = x[start + i] * window[i];
            re += v * ang.cos();
            im -= v * ang.sin();
        }
        total += re * re + im * im;
        count += 1;
        start += seg / 2;
    }
    total / count as f64
}

fn mains_suppression_db(x: &[f64], fs: f64) -> f64 {
    // 0.25 Hz bins: the Q = 35 notch is only ~1.4 Hz wide
    let seg = (4.0 * fs) as usize;
    let p50 = welch_power(x, fs, seg, 50.0);
    let band: f64 = (90..=110).map(|f| welch_power(x, fs, seg, f as f64)).sum::<f64>() / 21.0;
    10.0 * (band / p50).log10()
}

#[test]
fn db1_chain_suppresses_mains_in_white_noise() {
    let fs = 4000.0;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..80_000).map(|_| normal.sample(&mut rng)).collect();
    let t = SignalTrial::new(x, 1, fs, "s", 1, 0).unwrap();

    let conditioned = apply_stages(&t, &PreprocessChain::Db1Style).unwrap();
    let linear = mains_suppression_db(conditioned.samples(), fs);
    assert!(linear >= 20.0, "filter stages suppress 50 Hz by only {linear} dB");

    // companding is nonlinear; its intermodulation products refill the notch
    let full = preprocess_chain(&t, &PreprocessChain::Db1Style, DEFAULT_MU).unwrap();
    let companded = mains_suppression_db(full.samples(), fs);
    assert!(companded >= 10.0, "full chain suppresses 50 Hz by only {companded} dB");
}

#[test]
fn chains_map_zero_to_zero_and_are_deterministic() {
    let zero = SignalTrial::new(vec![0.0; 5 * 4000], 5, 4000.0, "s", 1, 0).unwrap();
    for chain in [PreprocessChain::Db1Style, PreprocessChain::Db4Style, PreprocessChain::Db4StyleBandpass] {
        let y = preprocess_chain(&zero, &chain, DEFAULT_MU).unwrap();
        assert!(y.samples().iter().all(|&v| v == 0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let normal = Normal::new(0.0, 50.0).unwrap();
    let x: Vec<f64> = (0..5 * 4000).map(|_| normal.sample(&mut rng)).collect();
    let t = SignalTrial::new(x, 5, 4000.0, "s", 1, 0).unwrap();
    let a = preprocess_chain(&t, &PreprocessChain::Db4Style, DEFAULT_MU).unwrap();
    let b = preprocess_chain(&t, &PreprocessChain::Db4Style, DEFAULT_MU).unwrap();
    assert_eq!(a, b);
    assert!(a.samples().iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn mu_law_grid_properties() {
    let n = 100_000;
    let mut prev = f64::NEG_INFINITY;
    for i in 0..=n {
        let x = -1.0 + 2.0 * i as f64 / n as f64;
        let y = mu_law(x, DEFAULT_MU).unwrap();
        assert!(y > prev);
        assert!(y.abs() <= 1.0);
        assert_eq!(mu_law(-x, DEFAULT_MU).unwrap(), -y);
        assert!((mu_law_inverse(y, DEFAULT_MU).unwrap() - x).abs() < 1e-9);
        prev = y;
    }
}
