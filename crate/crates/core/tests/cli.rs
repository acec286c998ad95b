//! The `srlmad` binary and its file formats.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn srlmad(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srlmad"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn srlmad")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

#[test]
fn full_command_line_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("synth.cfg"),
        "# small dataset\nnum_bonafide = 10\nnum_attacks = 4\nimage_size = 64\nseed = 3\n",
    )
    .unwrap();
    fs::write(dir.join("train.cfg"), "epochs = 2\nbatch_size = 4\nnum_rings = 8\nseed = 3\n").unwrap();

    let stdout = ok(srlmad(&["synth", "--config", "synth.cfg", "--out", "data"], dir));
    assert!(stdout.contains("14 entries"));
    let sidecar = fs::read_to_string(dir.join("data/attacks.tsv")).unwrap();
    assert!(sidecar.starts_with("attack_path\tsource_a\tsource_b\talpha\n"));
    assert_eq!(sidecar.lines().count(), 5);

    ok(srlmad(
        &["train", "--manifest", "data/manifest.tsv", "--config", "train.cfg", "--out", "model.srlc", "--log", "log.csv"],
        dir,
    ));
    let ck = fs::read(dir.join("model.srlc")).unwrap();
    assert_eq!(&ck[..4], b"SRLC");
    assert_eq!(u32_at(&ck, 4), 1);
    assert_eq!(u32_at(&ck, 8), 8);
    let log = fs::read_to_string(dir.join("log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,train_loss,val_loss"));
    assert_eq!(log.lines().count(), 3);

    ok(srlmad(
        &["score", "--checkpoint", "model.srlc", "--manifest", "data/manifest.tsv", "--out", "scores.csv"],
        dir,
    ));
    let scores = fs::read_to_string(dir.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().next(), Some("path,label,latent,score"));
    assert_eq!(scores.lines().count(), 1 + 3 + 4);
    assert!(scores.contains("attack/atk_0000.png,attack,"));

    let summary = ok(srlmad(&["eval", "--scores", "scores.csv", "--det", "det.csv"], dir));
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("EER,BPCER@APCER=5%,BPCER@APCER=10%"));
    let values: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(values.len(), 3);
    for v in values {
        let (_, decimals) = v.split_once('.').unwrap();
        assert_eq!(decimals.len(), 2, "{v}");
    }
    let report = fs::read_to_string(dir.join("report.txt")).unwrap();
    for key in ["eer=", "eer_threshold=", "bpcer_at_apcer5=", "bpcer_at_apcer10=", "num_bonafide=3", "num_attack=4"] {
        assert!(report.contains(key), "{key} missing from report");
    }
    assert!(fs::read_to_string(dir.join("det.csv")).unwrap().starts_with("threshold,apcer,bpcer\n"));

    ok(srlmad(
        &["extract", "data/bonafide/bf_0000.png", "--out", "res.srlm", "--rings", "x.srlr", "--num-rings", "8"],
        dir,
    ));
    let res = fs::read(dir.join("res.srlm")).unwrap();
    assert_eq!(&res[..4], b"SRLM");
    assert_eq!((u32_at(&res, 8), u32_at(&res, 12)), (500, 500));
    assert_eq!(res.len(), 16 + 500 * 500 * 4 + 8);
    assert_eq!((u32_at(&res, res.len() - 8), u32_at(&res, res.len() - 4)), (250, 250));
    let rings = fs::read(dir.join("x.srlr")).unwrap();
    assert_eq!(&rings[..4], b"SRLR");
    let (r, k) = (u32_at(&rings, 8) as usize, u32_at(&rings, 12) as usize);
    assert_eq!(r, 8);
    assert_eq!(rings.len(), 16 + r * k * 5);
    let mask_ones = rings[16 + r * k * 4..].iter().filter(|&&m| m == 1).count();
    assert_eq!(mask_ones, 500 * 500 - 1);
}

#[test]
fn run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("s.cfg"), "num_bonafide = 8\nnum_attacks = 3\nimage_size = 32\n").unwrap();
    fs::write(dir.join("t.cfg"), "epochs = 1\nbatch_size = 8\nnum_rings = 6\n").unwrap();
    let stdout = ok(srlmad(&["run", "--synth-config", "s.cfg", "--train-config", "t.cfg", "--out", "exp"], dir));
    assert!(stdout.starts_with("EER,BPCER@APCER=5%,BPCER@APCER=10%\n"));
    for f in ["model.srlc", "train_log.csv", "scores.csv", "report.txt", "data/manifest.tsv", "data/attacks.tsv"] {
        assert!(dir.join("exp").join(f).is_file(), "{f}");
    }
}

#[test]
fn protocol_violations_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("bad.tsv"), "a.png\tattack\ttrain\n").unwrap();
    let out = srlmad(&["train", "--manifest", "bad.tsv", "--out", "m.srlc"], dir);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    fs::write(dir.join("typo.tsv"), "a.png\tbonafied\ttrain\n").unwrap();
    let out = srlmad(&["train", "--manifest", "typo.tsv", "--out", "m.srlc"], dir);
    assert!(!out.status.success());

    fs::write(dir.join("t.cfg"), "learning_rat = 0.1\n").unwrap();
    fs::write(dir.join("ok.tsv"), "a.png\tbonafide\ttrain\n").unwrap();
    let out = srlmad(&["train", "--manifest", "ok.tsv", "--config", "t.cfg", "--out", "m.srlc"], dir);
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));
}
