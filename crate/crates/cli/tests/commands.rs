mod support;

use support::{field, pgdta, stderr, stdout, ToyRun};

#[test]
fn parse_smiles_reports_counts() {
    let out = pgdta(&["parse-smiles", "C"]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("atoms=1 bonds=0"));

    let out = pgdta(&["parse-smiles", "c1ccccc1"]);
    assert_eq!(stdout(&out).trim(), "atoms=6 bonds=6 aromatic_atoms=6 aromatic_bonds=6 features=6x78");
}

#[test]
fn parse_smiles_error_names_kind_and_offset() {
    let out = pgdta(&["parse-smiles", "C("]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("UnbalancedParentheses"), "{err}");
    assert!(err.contains("offset"), "{err}");
}

#[test]
fn parse_smiles_reads_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("list.smi");
    std::fs::write(&path, "C ethane\n\nc1ccccc1\tbenzene\n").unwrap();
    let out = pgdta(&["parse-smiles", "--file", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 2);
}

#[test]
fn contact_map_modes_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();

    std::fs::write(p("probs.txt"), "4\n0 0 0 0\n0 0 0.6 0\n0 0 0 0\n0 0 0 0\n").unwrap();
    let out = pgdta(&["contact-map", &p("probs.txt"), "--mode", "probs", "-o", &p("probs.map")]);
    assert!(out.status.success(), "{}", stderr(&out));
    let line = stdout(&out);
    assert_eq!(field(&line, "L"), Some(4.0));
    assert!((field(&line, "density").unwrap() - 6.0 / 16.0).abs() < 1e-6);
    assert_eq!(std::fs::read_to_string(p("probs.map")).unwrap(), "4\n1 0 0 0\n0 1 1 0\n0 1 1 0\n0 0 0 1\n");

    std::fs::write(
        p("two.pdb"),
        "ATOM      1  CA  GLY A   1       0.000   0.000   0.000  1.00  0.00           C\n\
         ATOM      2  CA  ALA A   2       3.800   0.000   0.000  1.00  0.00           C\n\
         ATOM      3  CB  ALA A   2       4.500   1.200   0.000  1.00  0.00           C\n",
    )
    .unwrap();
    let out = pgdta(&["contact-map", &p("two.pdb"), "--mode", "coords", "-o", &p("two.map")]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(p("two.map")).unwrap(), "2\n1 1\n1 1\n");

    std::fs::write(p("dist.txt"), "3\n0 9.99 10\n9.99 0 12\n10 12 0\n").unwrap();
    let out = pgdta(&["contact-map", &p("dist.txt"), "--mode", "distances", "-o", &p("dist.map")]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(p("dist.map")).unwrap(), "3\n1 1 0\n1 1 0\n0 0 1\n");

    std::fs::write(p("asym.txt"), "2\n0 5\n6 0\n").unwrap();
    let out = pgdta(&["contact-map", &p("asym.txt"), "--mode", "distances", "-o", &p("x.map")]);
    assert_eq!(out.status.code(), Some(3));

    std::fs::write(p("junk.txt"), "2\n0 a\n").unwrap();
    let out = pgdta(&["contact-map", &p("junk.txt"), "--mode", "probs", "-o", &p("x.map")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("x.map").exists());
}

#[test]
fn train_eval_predict_roundtrip() {
    let run = ToyRun::new("pgraphdta", 40, 7);
    let out = run.train(&[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = stdout(&out);
    assert!(field(&summary, "train_mse").unwrap().is_finite());
    assert_eq!(field(&summary, "epochs"), Some(40.0));

    let history = std::fs::read_to_string(run.path("out/history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("epoch,train_mse,val_mse,seconds"));
    assert_eq!(history.lines().count(), 41);

    let ckpt = run.path("out/model.ckpt");
    let config = run.config.to_str().unwrap();
    let first = pgdta(&["eval", ckpt.to_str().unwrap(), config]);
    let second = pgdta(&["eval", ckpt.to_str().unwrap(), config]);
    assert!(first.status.success(), "{}", stderr(&first));
    assert_eq!(first.stdout, second.stdout);
    let mse = stdout(&first);
    assert!(mse.starts_with("mse="));
    assert_eq!(mse.trim().split('.').nth(1).map(str::len), Some(6));

    let seqs = run.path("sequences.fasta");
    let out = pgdta(&[
        "predict",
        ckpt.to_str().unwrap(),
        "--smiles",
        support::SMILES[1],
        "--protein-id",
        "p1",
        "--sequences",
        seqs.to_str().unwrap(),
        "--pseudo-embeddings",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let value: f64 = stdout(&out).trim().parse().unwrap();
    assert!(value.is_finite());

    let out = pgdta(&[
        "predict",
        ckpt.to_str().unwrap(),
        "--smiles",
        "C",
        "--protein-id",
        "nope",
        "--sequences",
        seqs.to_str().unwrap(),
        "--pseudo-embeddings",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("MissingProtein"));
}

#[test]
fn prediction_matches_single_sample_eval() {
    let run = ToyRun::new("pgraphdta", 15, 2);
    assert!(run.train(&[]).status.success());
    let single = run.path("single.csv");
    std::fs::write(
        &single,
        format!("drug_id,smiles,protein_id,affinity\nd1,{},p1,0\n", support::SMILES[1]),
    )
    .unwrap();
    let ckpt = run.path("out/model.ckpt");
    let out = pgdta(&[
        "predict",
        ckpt.to_str().unwrap(),
        "--smiles",
        support::SMILES[1],
        "--protein-id",
        "p1",
        "--drug-id",
        "d1",
        "--sequences",
        run.path("sequences.fasta").to_str().unwrap(),
        "--pseudo-embeddings",
    ]);
    let pred: f64 = stdout(&out).trim().parse().unwrap();
    let out = pgdta(&[
        "eval",
        ckpt.to_str().unwrap(),
        run.config.to_str().unwrap(),
        "--data.interactions",
        single.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mse = field(&stdout(&out), "mse").unwrap();
    assert!((mse - pred * pred).abs() <= 1e-6 * (1.0 + mse), "{mse} vs {}", pred * pred);
}

#[test]
fn config_errors_exit_one() {
    let run = ToyRun::new("pgraphdta", 1, 1);
    let out = run.train(&["--train.bogus", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("bogus"));

    let out = run.train(&["--train.epochs", "many"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run.train(&["--data.interactions", "missing.csv"]);
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(&run.config, "[model]\nvariant = pgraphdta\n").unwrap();
    let out = run.train(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!run.path("out/history.csv").exists());
}

#[test]
fn missing_embedding_names_the_protein() {
    let run = ToyRun::new("pgraphdta", 5, 1);
    let out = run.train(&["--data.pseudo_embeddings", "false"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("'p0'"), "{}", stderr(&out));
    assert!(!run.path("out/model.ckpt").exists());
}

#[test]
fn empty_dataset_and_wrong_variant_exit_two() {
    let run = ToyRun::new("baseline_cnn", 3, 1);
    assert!(run.train(&[]).status.success());
    let ckpt = run.path("out/model.ckpt");
    let empty = run.path("empty.csv");
    std::fs::write(&empty, "drug_id,smiles,protein_id,affinity\n").unwrap();
    let out = pgdta(&[
        "eval",
        ckpt.to_str().unwrap(),
        run.config.to_str().unwrap(),
        "--data.interactions",
        empty.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("EmptyDataset"), "{}", stderr(&out));

    let out = pgdta(&[
        "eval",
        ckpt.to_str().unwrap(),
        run.config.to_str().unwrap(),
        "--model.variant",
        "pgraphdta",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn env_seed_is_overridden_by_flag() {
    let run = ToyRun::new("baseline_cnn", 1, 1);
    let epoch1 = |envseed: Option<&str>, extra: &[&str]| {
        let mut cmd = std::process::Command::new(support::bin());
        cmd.arg("train").arg(&run.config).args(extra).env_remove("PGDTA_SEED");
        if let Some(s) = envseed {
            cmd.env("PGDTA_SEED", s);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read_to_string(run.path("out/history.csv")).unwrap()
    };
    let base = epoch1(None, &[]);
    let env = epoch1(Some("99"), &[]);
    let flag = epoch1(Some("99"), &["--train.seed", "1"]);
    assert_ne!(base, env);
    assert_eq!(base, flag);
}

#[test]
fn embedding_tools() {
    let dir = tempfile::tempdir().unwrap();
    let fasta = dir.path().join("s.fasta");
    std::fs::write(&fasta, ">A\nMKVL\n>B\nMSTNPKP\n").unwrap();
    let out = pgdta(&[
        "pseudo-embed",
        "--sequences",
        fasta.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--dim",
        "32",
        "--per-residue",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let plm = dir.path().join("B.plm");
    let out = pgdta(&["inspect-embeddings", plm.to_str().unwrap()]);
    let line = stdout(&out);
    assert_eq!(field(&line, "records"), Some(1.0));
    assert_eq!(field(&line, "dim"), Some(32.0));
    assert_eq!(field(&line, "rows_max"), Some(7.0));

    let bytes = std::fs::read(&plm).unwrap();
    std::fs::write(&plm, &bytes[..bytes.len() - 3]).unwrap();
    let out = pgdta(&["inspect-embeddings", plm.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
