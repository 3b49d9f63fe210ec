#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trialgen::dataset::StudyDataset;
use trialgen::simulation::desk_study;

/// Seven-covariate trial/target pair with outcomes `week4` and `week8`.
pub fn study(n: usize, m: usize, seed: u64) -> (StudyDataset, StudyDataset) {
    desk_study(n, m, seed).expect("desk study")
}

/// Writes rct.csv, rwd.csv and schema.txt into `dir`.
pub fn write_inputs(dir: &Path, trial: &StudyDataset, target: &StudyDataset) -> (PathBuf, PathBuf, PathBuf) {
    fs::create_dir_all(dir).unwrap();
    let rct = dir.join("rct.csv");
    let rwd = dir.join("rwd.csv");
    let schema = dir.join("schema.txt");
    trial.write_csv(fs::File::create(&rct).unwrap()).unwrap();
    target.write_csv(fs::File::create(&rwd).unwrap()).unwrap();
    fs::write(&schema, trial.schema().to_text()).unwrap();
    (rct, rwd, schema)
}

pub fn trialgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trialgen"))
        .args(args)
        .env_remove("TRIALGEN_OUTDIR")
        .output()
        .expect("run trialgen")
}
