mod common;

use common::{facefit, pipeline, s, snapshot, write_config};

#[test]
fn pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline(&cfg, &a, &[]);
    pipeline(&cfg, &b, &[]);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    let names: Vec<&str> = sa.iter().map(|(n, _)| n.as_str()).collect();
    for f in ["checkpoint_stage1.ckpt", "checkpoint_stage2.ckpt", "report.csv", "loss_stage1.csv", "stage2_eval.csv"] {
        assert!(names.contains(&f), "missing {f} in {names:?}");
    }
    assert_eq!(sa, sb);
}

#[test]
fn gen_model_seed_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let model = |sub: &str, seed: &str| {
        let out = dir.path().join(sub);
        assert_eq!(facefit(&["gen-model", "--seed", seed, "--out", s(&out)]), 0);
        std::fs::read(out.join("model.mm3d")).unwrap()
    };
    let a = model("a", "7");
    assert_eq!(a, model("b", "7"));
    assert_ne!(a, model("c", "8"));
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(facefit(&["train", "--no-such-flag"]), 2);
    assert_eq!(facefit(&["frobnicate"]), 2);
    assert_eq!(facefit(&["train", "--variant", "nope"]), 2);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"training": {"batch_size": -1}}"#).unwrap();
    assert_eq!(facefit(&["gen-model", "--config", s(&bad), "--out", s(dir.path())]), 2);
    std::fs::write(&bad, r#"{"trainin": {}}"#).unwrap();
    assert_eq!(facefit(&["gen-model", "--config", s(&bad), "--out", s(dir.path())]), 2);
    assert!(!dir.path().join("model.mm3d").exists());
}

#[test]
fn explain_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    assert_eq!(facefit(&["train", "--config", s(&cfg), "--out", s(&out), "--explain-config", "--seed", "3"]), 0);
    assert!(!out.exists());
}

#[test]
fn corrupt_inputs_exit_3_and_inputs_are_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let inputs = dir.path().join("inputs");
    let c = s(&cfg);
    assert_eq!(facefit(&["gen-model", "--config", c, "--out", s(&inputs)]), 0);
    assert_eq!(facefit(&["gen-data", "--config", c, "--out", s(&inputs)]), 0);
    let before = snapshot(&inputs);
    let out = dir.path().join("out");
    let (m, d) = (inputs.join("model.mm3d"), inputs.join("data.f3ds"));
    let train = ["train", "--config", c, "--out", s(&out), "--model", s(&m), "--data", s(&d), "--max-steps", "3"];
    assert_eq!(facefit(&train), 0);
    assert_eq!(snapshot(&inputs), before);
    assert!(out.join("checkpoint_stage2.ckpt").exists());

    let mut bytes = std::fs::read(&d).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&d, &bytes).unwrap();
    assert_eq!(facefit(&train), 3);
    assert_eq!(facefit(&["eval", "--config", c, "--out", s(&out), "--model", s(&m), "--data", s(&d)]), 3);
}

#[test]
fn diverging_training_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    let c = s(&cfg);
    assert_eq!(facefit(&["gen-model", "--config", c, "--out", s(&out)]), 0);
    assert_eq!(facefit(&["gen-data", "--config", c, "--out", s(&out)]), 0);
    let text = common::SMALL_CONFIG.replace(r#""batch_size": 8,"#, r#""batch_size": 8, "regressor_lr": 1e200,"#);
    let hot = dir.path().join("hot.json");
    std::fs::write(&hot, text).unwrap();
    assert_eq!(facefit(&["train", "--config", s(&hot), "--out", s(&out), "--variant", "base"]), 4);
}

#[test]
fn split_stages_match_a_combined_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let c = s(&cfg);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(facefit(&["gen-model", "--config", c, "--out", s(out)]), 0);
        assert_eq!(facefit(&["gen-data", "--config", c, "--out", s(out)]), 0);
    }
    assert_eq!(facefit(&["train", "--config", c, "--out", s(&a), "--stage", "both"]), 0);
    assert_eq!(facefit(&["train", "--config", c, "--out", s(&b), "--stage", "1"]), 0);
    assert!(!b.join("checkpoint_stage2.ckpt").exists());
    assert_eq!(facefit(&["train", "--config", c, "--out", s(&b), "--stage", "2"]), 0);
    assert_eq!(snapshot(&a), snapshot(&b));
}

#[test]
fn variant_flags_shape_the_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    pipeline(&cfg, &out, &["--variant", "cyc", "--mask", "off"]);
    // no critic log without the self-critic
    assert!(!out.join("critic_stage1.csv").exists());
    let loss = std::fs::read_to_string(out.join("loss_stage2.csv")).unwrap();
    assert!(loss.lines().next().unwrap().ends_with(",vdc"));
}

#[test]
fn edc_export_matches_the_eval_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    pipeline(&cfg, &out, &["--max-steps", "4"]);
    let from_eval = std::fs::read(out.join("edc_nme_3d_dense.csv")).unwrap();
    std::fs::remove_file(out.join("edc_nme_3d_dense.csv")).unwrap();
    let c = s(&cfg);
    assert_eq!(facefit(&["edc-export", "--config", c, "--out", s(&out), "--metric", "nme_3d_dense"]), 0);
    assert_eq!(std::fs::read(out.join("edc_nme_3d_dense.csv")).unwrap(), from_eval);
    let text = String::from_utf8(from_eval).unwrap();
    // 24 eval samples minus the 4 worst
    assert_eq!(text.lines().count(), 1 + 20);
}

#[test]
fn grad_check_passes_on_a_small_stack() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    assert_eq!(facefit(&["grad-check", "--config", s(&cfg), "--out", s(dir.path()), "--trials", "20"]), 0);
}

#[test]
fn ablate_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    let c = s(&cfg);
    assert_eq!(facefit(&["gen-model", "--config", c, "--out", s(&out)]), 0);
    assert_eq!(facefit(&["gen-data", "--config", c, "--out", s(&out)]), 0);
    assert_eq!(facefit(&["ablate", "--config", c, "--out", s(&out)]), 0);
    let table = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    for row in ["base,", "cyc+sc,", "cyc+sc w/o mask,", "wild 50%,", "wild 100%,"] {
        assert!(table.lines().any(|l| l.starts_with(row)), "{row} missing from\n{table}");
    }
    let runs = std::fs::read_to_string(out.join("ablation_runs.csv")).unwrap();
    assert!(runs.lines().count() > 2);
}
