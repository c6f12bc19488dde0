//! Trains on one transmitter and evaluates with k-shot prototypes on every
//! domain: the training transmitter (same antenna) and the three others.
//!
//! cargo run --example cross_domain_eval

use beam_protonet::data::{default_domains, synth_dataset, Protocol};
use beam_protonet::encoder::EncoderConfig;
use beam_protonet::eval::{confusion_neighbor_mass, run_protocol, ProtocolConfig};
use beam_protonet::protonet::TrainConfig;

fn main() -> beam_protonet::Result<()> {
    let sets = synth_dataset(&default_domains(), 24, 5.0, 0)?;
    let tests: Vec<_> = sets.clone().into_iter().collect();
    let cfg = ProtocolConfig {
        encoder: EncoderConfig::small(),
        train: TrainConfig {
            n_way: 5,
            n_shot: 2,
            n_query: 3,
            max_episodes: 60,
            eval_every: 20,
            val_episodes: 4,
            ..Default::default()
        },
        ..Default::default()
    };
    let run = run_protocol(Protocol::Tota, &sets["tx0"], &tests, &cfg, 4, 1)?;
    for r in run.reports.values() {
        println!(
            "{:<4} {}  exact {:.3}  within one beam {:.3}  neighbor share of errors {:.2}",
            r.domain,
            r.protocol,
            r.exact_accuracy,
            r.tolerance_accuracy,
            confusion_neighbor_mass(r)
        );
    }
    println!(
        "mean TTSA {:.3}, mean TOTA {:.3}",
        run.mean_accuracy(Protocol::Ttsa).unwrap(),
        run.mean_accuracy(Protocol::Tota).unwrap()
    );
    Ok(())
}
