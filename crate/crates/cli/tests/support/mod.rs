#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SMILES: [&str; 10] = [
    "Clc1ccc(Nc2nnc(Cc3ccncc3)c3ccccc23)cc1",
    "CC(=O)Nc1ccc(O)cc1",
    "c1ccc2[nH]ccc2c1",
    "CN1CCN(CC1)c1ccccc1",
    "OC(=O)c1ccccc1O",
    "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "Cn1cnc2c1c(=O)n(C)c(=O)n2C",
    "NC(=O)c1cccnc1",
    "O=C(NC1CCNCC1)c1[nH]ncc1NC(=O)c1c(Cl)cccc1Cl",
    "COc1cc2ncnc(Nc3ccc(F)c(Cl)c3)c2cc1OCCCN1CCOCC1",
];

pub const SEQS: [&str; 3] = [
    "MKVLAAGIVGLLLAQWERTYKPLMN",
    "MSTNPKPQRKTKRNTNRRPQDVKFPGGGQIVGG",
    "MGSSHHHHHHSSGLVPRGSHMAS",
];

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_pgdta")
}

pub fn pgdta(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("PGDTA_SEED")
        .output()
        .expect("failed to launch pgdta")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Reads `key=value` from a one-line summary.
pub fn field(line: &str, key: &str) -> Option<f64> {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
        .and_then(|v| v.parse().ok())
}

/// Ten drug-protein pairs over three proteins, plus every sidecar a variant
/// could ask for: contact probabilities per protein and a distance matrix per
/// pair.
pub fn write_toy_dataset(dir: &Path) {
    let mut csv = String::from("drug_id,smiles,protein_id,affinity\n");
    for (i, smiles) in SMILES.iter().enumerate() {
        let target = 5.0 + 4.0 * ((i * 37 % 10) as f64 / 9.0);
        writeln!(csv, "d{i},{smiles},p{},{target}", i % 3).unwrap();
    }
    std::fs::write(dir.join("interactions.csv"), csv).unwrap();
    let mut fasta = String::new();
    for (k, s) in SEQS.iter().enumerate() {
        writeln!(fasta, ">p{k}\n{s}").unwrap();
    }
    std::fs::write(dir.join("sequences.fasta"), fasta).unwrap();
    for (k, s) in SEQS.iter().enumerate() {
        let n = s.len();
        let probs = matrix(n, |a, b| {
            let gap = a.abs_diff(b);
            if gap <= 2 || (a + b + k) % 7 == 0 {
                0.9
            } else {
                0.1
            }
        });
        std::fs::write(dir.join(format!("p{k}.cmap")), probs).unwrap();
    }
    for i in 0..SMILES.len() {
        let n = SEQS[i % 3].len();
        let dist = matrix(n, |a, b| if a == b { 0.0 } else { 3.0 + ((a * b + a + b + i) % 13) as f64 });
        std::fs::write(dir.join(format!("d{i}__p{}.dist", i % 3)), dist).unwrap();
    }
}

fn matrix(n: usize, f: impl Fn(usize, usize) -> f64) -> String {
    let mut out = format!("{n}\n");
    for a in 0..n {
        let row: Vec<String> = (0..n).map(|b| format!("{}", f(a.min(b), a.max(b)))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Compact model and the overfit optimizer settings.
pub fn toy_config(variant: &str, epochs: usize, seed: u64) -> String {
    format!(
        "# toy run\n\
         [model]\n\
         variant = {variant}\n\
         drug_layers = 2x4,1x8\n\
         drug_out = 8\n\
         cnn_embed = 6\n\
         cnn_filters = 4,6\n\
         cnn_kernel = 3\n\
         max_len = 40\n\
         plm_dim = 12\n\
         protein_dim = 8\n\
         contact_grid = 4\n\
         contact_dim = 6\n\
         hidden = 64,32\n\
         dropout = 0\n\
         \n\
         [data]\n\
         interactions = interactions.csv\n\
         sequences = sequences.fasta\n\
         kind = generic\n\
         pseudo_embeddings = true\n\
         \n\
         [train]\n\
         epochs = {epochs}\n\
         batch_size = 10\n\
         learning_rate = 0.003\n\
         seed = {seed}\n\
         \n\
         [output]\n\
         checkpoint = out/model.ckpt\n\
         history = out/history.csv\n"
    )
}

pub struct ToyRun {
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
}

impl ToyRun {
    pub fn new(variant: &str, epochs: usize, seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_toy_dataset(dir.path());
        std::fs::create_dir(dir.path().join("out")).unwrap();
        let config = dir.path().join("run.conf");
        std::fs::write(&config, toy_config(variant, epochs, seed)).unwrap();
        ToyRun { dir, config }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn train(&self, extra: &[&str]) -> Output {
        let mut args = vec!["train", self.config.to_str().unwrap()];
        args.extend_from_slice(extra);
        pgdta(&args)
    }
}
