//! Pretrains on a 6-class task, moves the encoder to a 4-class task with a
//! fresh head, and compares fine-tuning against training from scratch.

use emgttl::dataset::{
    build_split, synth_generate, SegmentationConfig, SplitSegments, SplitSpec, SynthSpec,
};
use emgttl::dsp::{preprocess_all, FilterSpec, PreprocessChain, Stage, DEFAULT_MU};
use emgttl::model::{init_weights, ModelConfig, ModelWeights};
use emgttl::trainer::{evaluate, train, transfer, TrainConfig, TransferMode, HEAD_PREFIX};

fn task(classes: usize, trials: usize, seed: u64) -> Result<SplitSegments, Box<dyn std::error::Error>> {
    let spec = SynthSpec {
        num_classes: classes,
        subjects: 1,
        trials_per_class: trials,
        duration_s: 5.0,
        sample_rate_hz: 200.0,
        channels: 5,
    };
    let (_, raw) = synth_generate(&spec, seed)?;
    let chain = PreprocessChain::Custom(vec![Stage::Filter(FilterSpec::notch(50.0))]);
    let pre = preprocess_all(&raw, &chain, DEFAULT_MU, 1)?;
    let g = SegmentationConfig::standard().geometry(200.0, 5)?;
    let ids: Vec<u32> = (1..=trials as u32).collect();
    let (train_ids, test_ids) = ids.split_at(trials - 1);
    Ok(build_split(&pre, &SplitSpec::new(train_ids.to_vec(), test_ids.to_vec()), g)?)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = task(6, 5, 10)?;
    let b = task(4, 3, 20)?;
    let source_config = ModelConfig::variant(1, 5, 100, 6)?;
    let cfg = TrainConfig {
        batch_size: 32,
        ..TrainConfig::new(1e-3, 8)
    };
    let pretrained = train(init_weights::<f32>(&source_config, 0)?, &a.train, &[], &cfg)?.weights;
    println!(
        "source task accuracy {:.3}",
        evaluate(&pretrained, &a.test, 256)?.accuracy
    );

    let target = ModelConfig {
        num_classes: 4,
        ..source_config
    };
    let moved: ModelWeights<f32> = transfer(&pretrained, &target, TransferMode::HeadOnlyReinit, 1)?;
    let copied = moved.params.iter().filter(|p| !p.name.starts_with(HEAD_PREFIX)).count();
    println!("copied {copied} encoder tensors, new head for 4 classes");

    let budget = TrainConfig { epochs: 5, ..cfg };
    let tuned = train(
        moved,
        &b.train,
        &[],
        &TrainConfig {
            learning_rate: budget.learning_rate / 3.0,
            ..budget.clone()
        },
    )?;
    let scratch = train(init_weights::<f32>(&target, 1)?, &b.train, &[], &budget)?;
    println!(
        "target task after {} epochs: fine-tuned {:.3}, from scratch {:.3}",
        budget.epochs,
        evaluate(&tuned.weights, &b.test, 256)?.accuracy,
        evaluate(&scratch.weights, &b.test, 256)?.accuracy
    );

    let wrong_window = ModelConfig { window: 50, ..target };
    if let Err(e) = transfer(&pretrained, &wrong_window, TransferMode::HeadOnlyReinit, 1) {
        println!("rejected: {e}");
    }
    Ok(())
}
