use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sketchscene"))
}

#[test]
fn build_data_twice_gives_identical_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = bin()
            .args(["build-data", "--source", "toy", "--seed", "1", "--scenes", "6", "--sketches-per-category", "5", "--out"])
            .arg(out)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert_eq!(stdout.lines().count(), 1, "{stdout}");
    }
    let read = |p: &std::path::Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a.join("manifest.json")), read(&b.join("manifest.json")));
    let record: serde_json::Value = serde_json::from_slice(&read(&a.join("run.json"))).unwrap();
    assert_eq!(record["seed"], 1);
    assert!(record["code_version"].as_str().unwrap().starts_with("sketchscene"));
    assert_eq!(record["config"]["scenes"], 6);
}

#[test]
fn evaluate_without_checkpoints_names_the_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    let o = bin()
        .args(["build-data", "--scenes", "4", "--sketches-per-category", "5", "--out"])
        .arg(&data)
        .output()
        .unwrap();
    assert!(o.status.success());
    let missing = dir.path().join("nope/object.safetensors");
    let o = bin()
        .arg("evaluate")
        .arg("--data")
        .arg(&data)
        .arg("--object")
        .arg(&missing)
        .arg("--out")
        .arg(dir.path().join("eval"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains(&missing.display().to_string()));
}

#[test]
fn usage_errors_exit_with_two() {
    let o = bin().args(["train-object", "--frobnicate"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().arg("paint").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn ablate_labels_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    assert!(bin()
        .args(["build-data", "--scenes", "10", "--sketches-per-category", "5", "--out"])
        .arg(&data)
        .status()
        .unwrap()
        .success());
    let out = dir.path().join("abl");
    let o = bin()
        .args(["ablate", "--drop", "DJ", "--no-eval", "--epochs", "1", "--noise-dim", "4", "--width", "4", "--batch-size", "4", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("W/O D_J"));
    assert_eq!(std::fs::read_to_string(out.join("label.txt")).unwrap().trim(), "W/O D_J");
    let record: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(record["config"]["ablation"]["use_dj"], false);
    assert_eq!(record["config"]["ablation"]["use_de"], true);
    assert!(out.join("object.safetensors").is_file());
}

#[test]
fn generate_object_from_a_trained_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    assert!(bin()
        .args(["build-data", "--scenes", "10", "--sketches-per-category", "5", "--out"])
        .arg(&data)
        .status()
        .unwrap()
        .success());
    let train = dir.path().join("t");
    let o = bin()
        .args(["train-object", "--epochs", "1", "--noise-dim", "4", "--width", "4", "--batch-size", "4", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(&train)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = train.join("object.safetensors");
    let sketch = std::fs::read_dir(data.join("objects/test/circle"))
        .or_else(|_| std::fs::read_dir(data.join("objects/train/circle")))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().ends_with("_sketch.png"));
    let sketch = match sketch {
        Some(p) => p,
        None => {
            let p = dir.path().join("s.png");
            sketchscene::imaging::EdgeImage::blank(64).save_png(&p).unwrap();
            p
        }
    };
    let out = dir.path().join("g");
    let o = bin()
        .args(["generate-object", "--category", "circle", "--checkpoint"])
        .arg(&ckpt)
        .arg("--sketch")
        .arg(&sketch)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("object.png").is_file());
    let o = bin()
        .args(["generate-object", "--category", "dragon", "--checkpoint"])
        .arg(&ckpt)
        .arg("--sketch")
        .arg(&sketch)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("triangle"));
}
