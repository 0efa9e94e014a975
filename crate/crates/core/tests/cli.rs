use std::path::Path;
use std::process::{Command, Output};

fn scgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scgan")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(out: &Path, n_train: &str, n_test: &str) -> Output {
    scgan(&["synth-data", "--out", s(out), "--task", "channel-swap", "--n-train", n_train, "--n-test", n_test, "--size", "64", "--seed", "1"])
}

fn count_pngs(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count()
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["trainA", "trainB", "testA", "testB"] {
        for e in std::fs::read_dir(dir.join(sub)).unwrap() {
            let p = e.unwrap().path();
            out.push((p.display().to_string(), std::fs::read(&p).unwrap()));
        }
    }
    out.push(("manifest".into(), std::fs::read(dir.join("manifest.json")).unwrap()));
    out.sort();
    out
}

#[test]
fn synth_data_writes_tree_and_refuses_to_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let o = synth(&d, "20", "5");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(count_pngs(&d.join("trainA")), 20);
    assert_eq!(count_pngs(&d.join("trainB")), 20);
    assert_eq!(count_pngs(&d.join("testA")), 5);
    assert_eq!(count_pngs(&d.join("testB")), 5);
    assert!(d.join("manifest.json").is_file());
    let before = snapshot(&d);
    let again = synth(&d, "3", "1");
    assert_eq!(code(&again), 1);
    assert_eq!(snapshot(&d), before);
}

#[test]
fn usage_errors_exit_two() {
    let o = scgan(&["synth-data", "--n-train", "3"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = scgan(&["translate", "--checkpoint", "c", "--input-dir", "i", "--output-dir", "o", "--direction", "up"]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&scgan(&["bogus"])), 2);
    assert_eq!(code(&scgan(&["--help"])), 0);
}

fn write_config(path: &Path, data: &Path, ckpt: &Path, ssl: &str, extra: &str) {
    let text = format!(
        "# tiny run\ndata_root = {}\ncheckpoint_dir = {}\nssl = {ssl}\nepochs = 1\ngen_filters = 8\nres_blocks = 2\ndisc_filters = 8\n{extra}",
        data.display(),
        ckpt.display()
    );
    std::fs::write(path, text).unwrap();
}

fn header(ckpt: &Path) -> serde_json::Value {
    let log = std::fs::read_to_string(ckpt.join("train_log.jsonl")).unwrap();
    serde_json::from_str(log.lines().next().unwrap()).unwrap()
}

fn without_timestamps(ckpt: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(ckpt.join("train_log.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            if let Some(o) = v.as_object_mut() {
                o.remove("timestamp");
                if let Some(cfg) = o.get_mut("config").and_then(|c| c.as_object_mut()) {
                    cfg.remove("checkpoint_dir");
                }
            }
            v
        })
        .collect()
}

#[test]
fn train_translate_evaluate_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(code(&synth(&data, "8", "3")), 0);

    let mut ckpts = Vec::new();
    for (name, ssl) in [("base1", "off"), ("base2", "off"), ("ssl", "on")] {
        let ckpt = tmp.path().join(name);
        let cfg = tmp.path().join(format!("{name}.cfg"));
        write_config(&cfg, &data, &ckpt, ssl, "diffaug = off\n");
        let o = scgan(&["train", "--config", s(&cfg)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        ckpts.push(ckpt);
    }
    assert_eq!(header(&ckpts[0])["model"], "cyclegan-baseline");
    assert_eq!(header(&ckpts[2])["model"], "scgan");
    assert_eq!(without_timestamps(&ckpts[0]), without_timestamps(&ckpts[1]));

    let bad = tmp.path().join("bad.cfg");
    write_config(&bad, &data, &tmp.path().join("bad"), "on", "learning_rate = 1\n");
    assert_eq!(code(&scgan(&["train", "--config", s(&bad)])), 2);

    let out1 = tmp.path().join("out1");
    let out2 = tmp.path().join("out2");
    for out in [&out1, &out2] {
        let o = scgan(&[
            "translate",
            "--checkpoint",
            s(&ckpts[2]),
            "--input-dir",
            s(&data.join("testA")),
            "--output-dir",
            s(out),
            "--direction",
            "AtoB",
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(count_pngs(out), 3);
    }
    for e in std::fs::read_dir(&out1).unwrap() {
        let p = e.unwrap().path();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(out2.join(p.file_name().unwrap())).unwrap());
    }

    let report = tmp.path().join("report.json");
    let eval = |real: &Path, fake: &Path, out: Option<&Path>| {
        let mut args = vec!["evaluate", "--real-dir", s(real), "--fake-dir", s(fake), "--subset-size", "3"];
        if let Some(o) = out {
            args.extend(["--output", s(o)]);
        }
        scgan(&args)
    };
    let a = eval(&data.join("testB"), &out1, Some(&report));
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let b = eval(&data.join("testB"), &out1, None);
    let mut ja: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let mut jb: serde_json::Value = serde_json::from_slice(&b.stdout).unwrap();
    let saved: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(saved, ja);
    for field in [
        "fid",
        "kid_mean",
        "kid_std",
        "kid_mean_x100",
        "n_real",
        "n_fake",
        "feature_dim",
        "extractor",
        "extractor_seed",
        "kid_seed",
        "subset_size",
        "n_subsets",
        "timestamp",
    ] {
        assert!(ja.get(field).is_some(), "missing {field}");
    }
    ja.as_object_mut().unwrap().remove("timestamp");
    jb.as_object_mut().unwrap().remove("timestamp");
    assert_eq!(serde_json::to_string(&ja).unwrap(), serde_json::to_string(&jb).unwrap());

    let same = eval(&data.join("testB"), &data.join("testB"), None);
    let js: serde_json::Value = serde_json::from_slice(&same.stdout).unwrap();
    assert!(js["fid"].as_f64().unwrap() < 1e-6);

    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(code(&eval(&empty, &empty, None)), 1);
}
