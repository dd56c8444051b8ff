//! Runs the preprocessing chains on one synthetic trial and reports how
//! much 50 Hz mains survives each one, then shows μ-law companding.

use std::f64::consts::PI;

use emgttl::dataset::{synth_generate, SynthSpec};
use emgttl::dsp::{apply_stages, mu_law, mu_law_inverse, preprocess_chain, PreprocessChain, DEFAULT_MU};

/// Power of `x` at `freq` from a single DFT bin.
fn tone_power(x: &[f64], fs: f64, freq: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let phase = 2.0 * PI * freq * i as f64 / fs;
        re += v * phase.cos();
        im -= v * phase.sin();
    }
    (re * re + im * im) / (x.len() as f64).powi(2)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec {
        num_classes: 2,
        subjects: 1,
        trials_per_class: 1,
        duration_s: 4.0,
        sample_rate_hz: 4000.0,
        channels: 5,
    };
    let (_, trials) = synth_generate(&spec, 7)?;
    let trial = &trials[0];
    let fs = trial.sample_rate_hz;
    let before = tone_power(trial.channel(0), fs, 50.0);
    println!("raw channel 0: 50 Hz power {before:.3e}");
    for chain in [
        PreprocessChain::Db1Style,
        PreprocessChain::Db4Style,
        PreprocessChain::Db4StyleBandpass,
    ] {
        let filtered = apply_stages(trial, &chain)?;
        let after = tone_power(filtered.channel(0), fs, 50.0);
        let full = preprocess_chain(trial, &chain, DEFAULT_MU)?;
        let peak = full.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        println!(
            "{chain:?}: 50 Hz change {:+.1} dB, output peak |x| = {peak:.3}",
            10.0 * (after / before).log10()
        );
    }
    for x in [-1.0, -0.1, 0.0, 0.01, 0.5, 1.0] {
        let y = mu_law(x, DEFAULT_MU)?;
        println!("mu-law({x:+.2}) = {y:+.4}, inverse {:+.4}", mu_law_inverse(y, DEFAULT_MU)?);
    }
    Ok(())
}
