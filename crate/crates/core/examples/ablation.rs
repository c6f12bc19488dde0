//! Preprocessing ablation: trains the four configurations (raw, +data
//! normalization, +augmentation, +prototype normalization) and tabulates
//! same-domain and cross-domain accuracy.
//!
//! cargo run --example ablation

use beam_protonet::ablation::{run_ablation, AblationPlan};
use beam_protonet::data::{default_domains, synth_dataset};
use beam_protonet::encoder::EncoderConfig;
use beam_protonet::protonet::TrainConfig;

fn main() -> beam_protonet::Result<()> {
    let sets = synth_dataset(&default_domains()[..2], 24, 5.0, 0)?;
    let tests: Vec<_> = sets.clone().into_iter().collect();
    let plan = AblationPlan {
        encoder: EncoderConfig::small(),
        base: TrainConfig {
            n_way: 5,
            n_shot: 2,
            n_query: 3,
            max_episodes: 40,
            eval_every: 20,
            val_episodes: 4,
            ..Default::default()
        },
        ks: vec![2, 8],
        ..Default::default()
    };
    let table = run_ablation(&plan, &sets["tx0"], &tests, 0)?;
    println!("{}", table.header().join(","));
    for rec in table.records() {
        println!("{}", rec.join(","));
    }
    Ok(())
}
