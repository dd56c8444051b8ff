//! Generates a seeded synthetic dataset, writes it to disk and reads it back.
//!
//! cargo run --release --example synth_dataset -- [OUT_DIR]

use std::path::PathBuf;

use emgttl::dataset::{load_dataset, synth_generate, write_dataset, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("emgttl-synth"));
    let spec = SynthSpec {
        num_classes: 4,
        subjects: 2,
        trials_per_class: 5,
        duration_s: 2.0,
        sample_rate_hz: 2000.0,
        channels: 5,
    };
    let (manifest, trials) = synth_generate(&spec, 42)?;
    let path = out.join("manifest.json");
    write_dataset(&path, &manifest, &trials)?;

    let (loaded, back) = load_dataset(&path)?;
    assert_eq!(back, trials);
    println!("{} at {}", loaded.name, path.display());
    println!(
        "{} trials, {} classes, {} channels at {} Hz",
        back.len(),
        loaded.classes.len(),
        loaded.channels,
        loaded.sample_rate_hz
    );
    for t in back.iter().step_by(10) {
        let ch0 = t.channel(0);
        let rms = (ch0.iter().map(|v| v * v).sum::<f64>() / ch0.len() as f64).sqrt();
        println!(
            "  {} class {} trial {}: {} samples, channel 0 rms {rms:.1}",
            t.subject_id,
            t.label,
            t.trial_id,
            t.len()
        );
    }
    Ok(())
}
