//! Window geometry, per-trial segment counts, trial-level splits and the
//! segment archive format.

use emgttl::dataset::{
    build_split, read_segments, segment_count, synth_generate, write_segments, SegmentationConfig,
    SplitSpec, SynthSpec,
};
use emgttl::dsp::{preprocess_all, PreprocessChain, DEFAULT_MU};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fs = 4000.0;
    for cfg in [SegmentationConfig::standard(), SegmentationConfig::short()] {
        let g = cfg.geometry(fs, 5)?;
        println!(
            "{} ms / {} ms at {fs} Hz: W = {}, S = {}, {} windows in 10 s",
            cfg.window_ms,
            cfg.step_ms,
            g.window,
            g.step,
            segment_count(40_000, g.window, g.step)
        );
    }
    if let Err(e) = SegmentationConfig::new(333.0, 100.0).geometry(fs, 5) {
        println!("rejected: {e}");
    }

    let spec = SynthSpec {
        num_classes: 3,
        subjects: 2,
        trials_per_class: 5,
        duration_s: 2.0,
        sample_rate_hz: 2000.0,
        channels: 5,
    };
    let (_, raw) = synth_generate(&spec, 3)?;
    let trials = preprocess_all(&raw, &PreprocessChain::Db4Style, DEFAULT_MU, 1)?;
    let g = SegmentationConfig::standard().geometry(spec.sample_rate_hz, spec.channels)?;
    let split = build_split(&trials, &SplitSpec::preset("db4-paper")?, g)?;
    println!(
        "db4-paper split: {} train and {} test segments of {} × {}",
        split.train.len(),
        split.test.len(),
        g.channels,
        g.window
    );

    let path = std::env::temp_dir().join("emgttl-test-segments.bin");
    write_segments(&path, &split.test)?;
    let back = read_segments(&path)?;
    assert_eq!(back, split.test);
    let bytes = std::fs::metadata(&path)?.len();
    println!("archive round trip: {bytes} bytes for {} segments", back.len());
    Ok(())
}
