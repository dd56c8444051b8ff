//! Saves a checkpoint with optimizer state, reloads it, and shows that
//! corruption is reported with a byte offset.

use emgttl::model::{init_weights, ModelConfig, ModelWeights};
use emgttl::trainer::{
    load_checkpoint, save_checkpoint, weights_hash, AdamState, Checkpoint, Provenance,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ModelConfig::variant(1, 5, 100, 4)?;
    let weights: ModelWeights<f32> = init_weights(&config, 3)?;
    let ckpt = Checkpoint {
        optimizer: Some(AdamState::new(&weights)),
        weights,
        provenance: Provenance {
            dataset: "example".into(),
            ..Provenance::default()
        },
    };
    let dir = std::env::temp_dir().join("emgttl-checkpoint");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.emgt");
    save_checkpoint(&ckpt, &path)?;
    let loaded = load_checkpoint(&path)?;
    assert_eq!(loaded, ckpt);
    println!(
        "{} bytes, {} parameters, sha256 {}",
        std::fs::metadata(&path)?.len(),
        loaded.weights.param_count(),
        weights_hash(&loaded.weights)
    );

    let mut bytes = std::fs::read(&path)?;
    let n = bytes.len();
    bytes[n - 100] ^= 0x01;
    let broken = dir.join("broken.emgt");
    std::fs::write(&broken, &bytes)?;
    match load_checkpoint(&broken) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
