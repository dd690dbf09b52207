//! Write a synthetic dataset to disk, then rank its candidates through the
//! same config the binary would read.
//!
//!     cargo run --example synth_dataset -- /tmp/cf

use std::path::PathBuf;

use craniofit::pipeline::{cmd_rank, write_dataset, PipelineConfig, SynthOptions};
use craniofit::superimpose::format_ranking;

fn main() -> craniofit::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synth-out".into()));
    let opts = SynthOptions {
        candidates: 12,
        inject_truth: true,
        ..SynthOptions::default()
    };
    let manifest = write_dataset(0, &opts, &out)?;
    println!("wrote {} files; known face scores {:.2}", manifest.files.len(), manifest.truth_score);

    let cfg = PipelineConfig::read(&out.join("craniofit.cfg"))?;
    let ranked = cmd_rank(&cfg, &out.join("rank"))?;
    print!("{}", format_ranking(&ranked[..5]));
    Ok(())
}
