//! Variant study at desk scale: each published architecture at two window
//! geometries over three seeds, written as CSV to stdout.

use emgttl::dataset::{synth_generate, SegmentationConfig, SplitSpec, SynthSpec};
use emgttl::dsp::{preprocess_all, FilterSpec, PreprocessChain, Stage, DEFAULT_MU};
use emgttl::trainer::{thread_cap, variant_study, write_report_csv, StudyTask, StudyVariant, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec {
        num_classes: 4,
        subjects: 1,
        trials_per_class: 3,
        duration_s: 3.0,
        sample_rate_hz: 200.0,
        channels: 5,
    };
    let (_, raw) = synth_generate(&spec, 5)?;
    let chain = PreprocessChain::Custom(vec![Stage::Filter(FilterSpec::notch(50.0))]);
    let trials = preprocess_all(&raw, &chain, DEFAULT_MU, 1)?;
    let variants = (1..=4).map(StudyVariant::published).collect::<Result<Vec<_>, _>>()?;
    let task = StudyTask {
        trials: &trials,
        num_classes: spec.num_classes,
        split: SplitSpec::new([1, 2], [3]),
        geometries: vec![SegmentationConfig::standard(), SegmentationConfig::short()],
        train: TrainConfig {
            batch_size: 32,
            ..TrainConfig::new(1e-3, 3)
        },
        dropout_p: 0.1,
    };
    let rows = variant_study(&variants, &[0, 1, 2], &task, thread_cap())?;
    for r in &rows {
        eprintln!(
            "variant {} at {} ms: {:.3} ± {:.3} ({} parameters)",
            r.variant_id, r.window_ms, r.mean_accuracy, r.std_accuracy, r.param_count
        );
    }
    write_report_csv(std::io::stdout(), &rows)?;
    Ok(())
}
