//! Generates the four synthetic transmitter domains, writes them as HDF5
//! and reads them back.
//!
//! cargo run --example synth_data

use beam_protonet::data::{
    default_domains, load_deepbeam_hdf5, synth_dataset, write_deepbeam_hdf5, GainSelection, Hdf5Layout,
};

fn main() -> beam_protonet::Result<()> {
    let domains = default_domains();
    let sets = synth_dataset(&domains, 20, 5.0, 0)?;
    let dir = tempfile::tempdir().expect("temporary directory");
    let layout = Hdf5Layout::default();
    for cfg in &domains {
        let ds = &sets[&cfg.name];
        let path = dir.path().join(format!("{}.h5", cfg.name));
        write_deepbeam_hdf5(&path, ds, &layout)?;
        let back = load_deepbeam_hdf5(&path, &cfg.name, &GainSelection::All, usize::MAX, &layout)?;
        let power: f64 = ds.iter().map(|b| b.block.mean_power()).sum::<f64>() / ds.len() as f64;
        println!(
            "{:<4} {} blocks over {} beams, mean power {power:.3}, cfo {:.0e}, reloaded {} blocks (identical: {})",
            cfg.name,
            ds.len(),
            ds.beams().len(),
            cfg.cfo_normalized,
            back.len(),
            back.iter().zip(ds.iter()).all(|(a, b)| a.block == b.block),
        );
    }
    Ok(())
}
