use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vtm::bvh::load_bvh;
use vtm::kinematics::forward_kinematics;
use vtm_cli::commands::prepare;
use vtm_cli::synth::{generate, synth_camera, write_synth, SynthConfig};

fn vtm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtm"))
        .args(args)
        .env_remove("VTM_SEED")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_is_deterministic_per_seed() {
    let cfg = SynthConfig {
        sequences: 3,
        frames: 40,
        seed: 5,
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pa = write_synth(a.path(), &cfg).unwrap();
    let pb = write_synth(b.path(), &cfg).unwrap();
    for (x, y) in pa.iter().zip(&pb) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
    let other = generate(&SynthConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(other[0].poses[0].root, generate(&cfg).unwrap()[0].poses[0].root);
}

#[test]
fn synth_motion_is_plausible() {
    let cam = synth_camera();
    for seq in generate(&SynthConfig {
        sequences: 6,
        frames: 64,
        seed: 1,
    })
    .unwrap()
    {
        let frames: Vec<_> = seq
            .poses
            .iter()
            .map(|p| forward_kinematics(&seq.skeleton, p))
            .collect();
        for pair in frames.windows(2) {
            for (a, b) in pair[0].iter().zip(&pair[1]) {
                assert!((a - b).norm() < 0.2, "{} moves too fast", seq.id);
            }
        }
        for f in &frames {
            for q in f {
                assert!(cam.point_to_camera(q).z > 1.0);
            }
        }
    }
}

#[test]
fn prepare_lists_every_file_and_is_repeatable() {
    let src = tempfile::tempdir().unwrap();
    write_synth(
        src.path(),
        &SynthConfig {
            sequences: 3,
            frames: 36,
            seed: 2,
        },
    )
    .unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cam = p(&src.path().join("camera.txt")).to_string();
    for out in [a.path(), b.path()] {
        let o = vtm(&[
            "prepare",
            "--bvh-dir",
            p(src.path()),
            "--camera",
            &cam,
            "--out",
            p(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("sequences: 3"));
    }
    let manifest = fs::read_to_string(a.path().join("manifest.txt")).unwrap();
    let ids: Vec<&str> = manifest
        .lines()
        .filter(|l| l.starts_with("synth_"))
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(ids, ["synth_000", "synth_001", "synth_002"]);
    for rel in [
        "manifest.txt",
        "virtual_skeleton.txt",
        "camera.txt",
        "sequences/synth_001.vtmd",
    ] {
        assert_eq!(
            fs::read(a.path().join(rel)).unwrap(),
            fs::read(b.path().join(rel)).unwrap(),
            "{rel}"
        );
    }
}

#[test]
fn prepare_skips_broken_files_and_fails_on_none() {
    let src = tempfile::tempdir().unwrap();
    write_synth(
        src.path(),
        &SynthConfig {
            sequences: 2,
            frames: 32,
            seed: 3,
        },
    )
    .unwrap();
    fs::write(src.path().join("broken.bvh"), "HIERARCHY\nROOT\n").unwrap();
    let out = tempfile::tempdir().unwrap();
    let prepared = prepare(src.path(), &synth_camera(), out.path(), 0.01, None).unwrap();
    assert_eq!(prepared.dataset.sequences.len(), 2);
    assert_eq!(prepared.failures.len(), 1);
    assert!(prepared.failures[0].0.ends_with("broken.bvh"));

    let empty = tempfile::tempdir().unwrap();
    let cam = src.path().join("camera.txt");
    let o = vtm(&[
        "prepare",
        "--bvh-dir",
        p(empty.path()),
        "--camera",
        p(&cam),
        "--out",
        p(out.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E_DEGENERATE_INPUT: "));
}

#[test]
fn help_lists_config_defaults() {
    for (cmd, batch) in [
        ("train-tpmae", "batch_size = 100"),
        ("train-vtm", "batch_size = 64"),
    ] {
        let o = vtm(&[cmd, "--help"]);
        assert!(o.status.success());
        let text = String::from_utf8_lossy(&o.stdout);
        for line in [
            batch,
            "lr = 1e-4",
            "epochs = 500",
            "weight_decay = 0.01",
            "VTM_SEED",
        ] {
            assert!(text.contains(line), "{cmd} help lacks {line}");
        }
    }
}

#[test]
fn errors_are_one_prefixed_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.bvh");
    let o = vtm(&["evaluate", "--pred", p(&missing), "--gt", p(&missing)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("E_IO: ") && err.contains("missing.bvh"), "{err}");

    let o = vtm(&["no-such-command"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("E_USAGE: "));

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "epochs = many\n").unwrap();
    let o = vtm(&[
        "train-tpmae",
        "--dataset",
        p(dir.path()),
        "--out",
        p(&dir.path().join("m.ckpt")),
        "--config",
        p(&cfg),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("E_CONFIG: "), "{}", stderr(&o));
}

#[test]
fn end_to_end_run_writes_log_checkpoint_and_outputs() {
    let root = tempfile::tempdir().unwrap();
    let (src, data) = (root.path().join("bvh"), root.path().join("data"));
    let o = vtm(&[
        "synth",
        "--out",
        p(&src),
        "--sequences",
        "2",
        "--frames",
        "34",
        "--seed",
        "4",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cam = src.join("camera.txt");
    assert!(vtm(&[
        "prepare",
        "--bvh-dir",
        p(&src),
        "--camera",
        p(&cam),
        "--out",
        p(&data)
    ])
    .status
    .success());

    let cfg = root.path().join("train.cfg");
    fs::write(&cfg, "epochs = 2\nbatch_size = 2\nlr = 1e-3\nfeature_dim = 4\n").unwrap();
    let (tp, vt) = (root.path().join("tpmae.ckpt"), root.path().join("vtm.ckpt"));
    let log = root.path().join("tpmae.csv");
    let o = vtm(&[
        "train-tpmae",
        "--dataset",
        p(&data),
        "--out",
        p(&tp),
        "--config",
        p(&cfg),
        "--log",
        p(&log),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,lr,L_rec,L_s");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,1e-3,"));

    let o = vtm(&[
        "--threads",
        "2",
        "train-vtm",
        "--dataset",
        p(&data),
        "--tpmae",
        p(&tp),
        "--out",
        p(&vt),
        "--config",
        p(&cfg),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("epoch,lr,L_rec,L_s,L_ma,L_b,L_pred,L_s_v\n"));

    let o = vtm(&[
        "train-vtm",
        "--dataset",
        p(&data),
        "--tpmae",
        p(&vt),
        "--out",
        p(&vt),
    ]);
    assert!(stderr(&o).starts_with("E_CHECKPOINT: "));

    let out = root.path().join("rec.bvh");
    let o = vtm(&[
        "reconstruct",
        "--checkpoint",
        p(&vt),
        "--dataset",
        p(&data),
        "--sequence",
        "synth_001",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = load_bvh(&out, 0.01).unwrap();
    assert_eq!(doc.num_frames(), 34);
    let track = fs::read_to_string(root.path().join("rec.root.csv")).unwrap();
    assert_eq!(track.lines().count(), 35);

    let o = vtm(&[
        "evaluate",
        "--pred",
        p(&out),
        "--gt",
        p(&src.join("synth_001.bvh")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = String::from_utf8_lossy(&o.stdout);
    let keys: Vec<&str> = report.lines().map(|l| l.split(':').next().unwrap()).collect();
    assert_eq!(keys, ["mpjpe_mm", "pa_mpjpe_mm", "mrpe_mm", "mble_mm"]);
}
