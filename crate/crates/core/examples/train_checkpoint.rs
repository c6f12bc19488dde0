//! Short episodic training run with a checkpoint round trip and a bit-exact
//! resume.
//!
//! cargo run --example train_checkpoint

use beam_protonet::data::{holdout, synth_dataset, SyntheticDomainConfig};
use beam_protonet::encoder::{load_checkpoint, save_checkpoint, EncoderConfig};
use beam_protonet::protonet::{TrainConfig, Trainer};

fn main() -> beam_protonet::Result<()> {
    let data = synth_dataset(&[SyntheticDomainConfig::default()], 16, 10.0, 0)?
        .remove("tx0")
        .unwrap();
    let (train, val) = holdout(&data, 0.25, 1)?;
    let encoder = EncoderConfig::small();
    let cfg = TrainConfig {
        n_way: 5,
        n_shot: 2,
        n_query: 3,
        max_episodes: 60,
        eval_every: 20,
        val_episodes: 4,
        ..Default::default()
    };

    let mut trainer = Trainer::new(&encoder, &cfg, &train)?;
    trainer.set_max_episodes(30);
    trainer.run(&train, &val)?;
    let dir = tempfile::tempdir().expect("temporary directory");
    let path = dir.path().join("checkpoint.safetensors");
    save_checkpoint(&path, &trainer.to_checkpoint())?;
    let saved_at = trainer.episode();
    println!("saved after {saved_at} episodes to {}", path.display());

    let mut resumed = Trainer::from_checkpoint(&load_checkpoint(&path)?, Some(&cfg))?;
    resumed.set_max_episodes(cfg.max_episodes);
    resumed.run(&train, &val)?;
    let full = beam_protonet::protonet::train(&train, &cfg, &encoder, &val)?;

    for r in resumed.log().records.iter().step_by(10) {
        println!("episode {:>3}  loss {:.4}  lr {:.2e}", r.episode, r.loss, r.lr);
    }
    for v in &resumed.log().validation {
        println!("validation at episode {:>3}: {:.3}", v.episode, v.accuracy);
    }
    // A resumed log holds only the episodes run after loading.
    println!(
        "resume matches an uninterrupted run: {}",
        resumed.log().losses() == full.1.losses()[saved_at..]
    );
    Ok(())
}
