//! Writes a synthetic trial/target pair and its schema for trying the CLI.
//!
//! cargo run --example synthetic_cohorts -- <outdir> [seed]

use std::fs;
use std::path::PathBuf;

use trialgen::simulation::desk_study;

fn main() -> trialgen::Result<()> {
    let mut args = std::env::args().skip(1);
    let outdir = PathBuf::from(args.next().unwrap_or_else(|| "demo-data".into()));
    let seed = args.next().map_or(Ok(2024), |s| s.parse()).expect("seed must be an integer");
    let (trial, target) = desk_study(600, 2400, seed)?;
    fs::create_dir_all(&outdir)?;
    fs::write(outdir.join("schema.txt"), trial.schema().to_text())?;
    trial.write_csv(fs::File::create(outdir.join("rct.csv"))?)?;
    target.write_csv(fs::File::create(outdir.join("rwd.csv"))?)?;
    println!("wrote {}", outdir.display());
    Ok(())
}
