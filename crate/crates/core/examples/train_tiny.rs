//! Trains a small patch transformer on a synthetic 4-class task and prints
//! the learning curve and held-out metrics.

use emgttl::dataset::{build_split, synth_generate, SegmentationConfig, SplitSpec, SynthSpec};
use emgttl::dsp::{preprocess_all, FilterSpec, PreprocessChain, Stage, DEFAULT_MU};
use emgttl::model::{init_weights, ModelConfig, ModelWeights};
use emgttl::trainer::{evaluate, train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec {
        num_classes: 4,
        subjects: 1,
        trials_per_class: 5,
        duration_s: 5.0,
        sample_rate_hz: 200.0,
        channels: 5,
    };
    let (_, raw) = synth_generate(&spec, 1)?;
    let chain = PreprocessChain::Custom(vec![Stage::Filter(FilterSpec::notch(50.0))]);
    let trials = preprocess_all(&raw, &chain, DEFAULT_MU, 1)?;
    let g = SegmentationConfig::standard().geometry(spec.sample_rate_hz, spec.channels)?;
    let split = build_split(&trials, &SplitSpec::new([1, 2, 3], [4, 5]), g)?;

    let config = ModelConfig {
        embed_dim: 32,
        num_layers: 2,
        num_heads: 4,
        encoder_hidden: 64,
        ..ModelConfig::variant(1, g.channels, g.window, spec.num_classes)?
    };
    println!("{} parameters, {} patches per window", config.param_count(), config.num_patches());
    let weights: ModelWeights<f32> = init_weights(&config, 0)?;
    let cfg = TrainConfig {
        batch_size: 32,
        ..TrainConfig::new(1e-3, 30)
    };
    let out = train(weights, &split.train, &split.test, &cfg)?;
    for r in out.history.iter().step_by(5) {
        println!(
            "epoch {:>2}: train loss {:.4}, test accuracy {:.3}",
            r.epoch,
            r.train_loss,
            r.eval_accuracy.unwrap_or(f64::NAN)
        );
    }
    let m = evaluate(&out.weights, &split.test, 256)?;
    println!("final test accuracy {:.3} over {} segments", m.accuracy, m.total);
    println!("confusion (rows true, columns predicted): {:?}", m.confusion);
    Ok(())
}
