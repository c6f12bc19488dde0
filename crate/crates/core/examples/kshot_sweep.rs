//! Accuracy against the number of support shots on an unseen transmitter,
//! averaged over repeated support draws.
//!
//! cargo run --example kshot_sweep

use beam_protonet::data::{default_domains, synth_dataset, Protocol};
use beam_protonet::encoder::EncoderConfig;
use beam_protonet::eval::{domain_seed, kshot_sweep, run_protocol, ProtocolConfig};
use beam_protonet::protonet::TrainConfig;

fn main() -> beam_protonet::Result<()> {
    let sets = synth_dataset(&default_domains()[..2], 30, 5.0, 0)?;
    let tests = vec![("tx1".to_string(), sets["tx1"].clone())];
    let cfg = ProtocolConfig {
        encoder: EncoderConfig::small(),
        train: TrainConfig {
            n_way: 5,
            n_shot: 2,
            n_query: 3,
            max_episodes: 40,
            eval_every: 20,
            val_episodes: 4,
            ..Default::default()
        },
        ..Default::default()
    };
    let run = run_protocol(Protocol::Tota, &sets["tx0"], &tests, &cfg, 1, 1)?;
    let split = &run.splits.domains["tx1"];
    let rows = kshot_sweep(
        &run.weights,
        &split.support,
        &split.query,
        &[1, 2, 4, 8, 16],
        5,
        domain_seed(0, "tx1"),
        1,
        cfg.train.prototype_normalization,
    )?;
    println!("   k  exact (std)       within one beam (std)");
    for r in rows {
        println!(
            "{:>4}  {:.3} ({:.3})     {:.3} ({:.3})",
            r.k, r.mean_exact, r.std_exact, r.mean_tolerance, r.std_tolerance
        );
    }
    Ok(())
}
