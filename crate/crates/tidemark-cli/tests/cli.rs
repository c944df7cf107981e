//! End-to-end exercise of the binary: codec -> key -> calibrate -> corpus ->
//! embed -> detect -> attack -> bench, with the detect exit code contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tidemark"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn");
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str]) -> i32 {
    let out = bin().args(args).output().expect("spawn");
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

struct Rig {
    #[allow(dead_code)]
    dir: tempfile::TempDir,
    codec: PathBuf,
    key_raw: PathBuf,
    key: PathBuf,
    other: PathBuf,
    marked: PathBuf,
}

/// Build the whole fixture once: a small codec, a calibrated key, two clean
/// clips, and a watermarked copy of the first.
fn rig() -> Rig {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let spec = root.join("codec_spec.toml");
    std::fs::write(
        &spec,
        "family_id = \"cli-test\"\nrate = 8000\nframe = 32\nlatent_dim = 16\n\
         codebook_size = 8\nnum_stages = 2\nseed = 5\n",
    )
    .unwrap();
    let codec = root.join("codec.bin");
    let out = run_ok(&["make-codec", "--spec", &p(&spec), "--out", &p(&codec)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("cli-test"));

    let key_raw = root.join("key.toml");
    run_ok(&[
        "keygen", "--codec", &p(&codec), "--method", "cluster", "--out", &p(&key_raw),
    ]);

    let key = root.join("key_cal.toml");
    let out = run_ok(&[
        "calibrate",
        "--codec",
        &p(&codec),
        "--key",
        &p(&key_raw),
        "--null-count",
        "8",
        "--null-seconds",
        "0.5",
        "--null-seed",
        "900",
        "--out",
        &p(&key),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("tau"));

    let clips = root.join("clips");
    run_ok(&[
        "corpus",
        "--rate",
        "8000",
        "--seconds",
        "0.5",
        "--count",
        "2",
        "--seed",
        "4242",
        "--domain",
        "music-like",
        "--out-dir",
        &p(&clips),
    ]);
    let clean = clips.join("clip_000.wav");
    let other = clips.join("clip_001.wav");
    assert!(clean.exists() && other.exists());

    // A deliberately loose distortion target so the projection shift is far
    // above any calibrated threshold; the CLI contract is what is on trial
    // here, not the operating point.
    let embed_cfg = root.join("embed.toml");
    std::fs::write(&embed_cfg, "sdr_db = 5.0\nn_steps = 40\n").unwrap();
    let marked = root.join("marked.wav");
    let trace = root.join("trace.tsv");
    run_ok(&[
        "embed",
        "--input",
        &p(&clean),
        "--codec",
        &p(&codec),
        "--key",
        &p(&key),
        "--config",
        &p(&embed_cfg),
        "--output",
        &p(&marked),
        "--trace",
        &p(&trace),
    ]);
    let trace_text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = trace_text.lines();
    assert_eq!(lines.next().unwrap(), "step\tloss\tdelta_sup\tp1");
    assert!(lines.next().unwrap().starts_with("0\t"));

    Rig {
        dir,
        codec,
        key_raw,
        key,
        other,
        marked,
    }
}

#[test]
fn pipeline_and_exit_codes() {
    let rig = rig();
    let root = rig.dir.path();
    let codec = p(&rig.codec);
    let key = p(&rig.key);

    // Watermarked clip: detected, exit 0, report written.
    let report = root.join("report.txt");
    let out = bin()
        .args([
            "detect",
            "--input",
            &p(&rig.marked),
            "--codec",
            &codec,
            "--key",
            &key,
            "--report",
            &p(&report),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("detected: true"), "{text}");
    assert!(text.contains("ensemble_score:"));
    assert!(text.contains("margin:"));

    // An untouched clip from the same domain: not detected, exit 1.
    assert_eq!(
        exit_code(&["detect", "--input", &p(&rig.other), "--codec", &codec, "--key", &key]),
        1
    );

    // Errors exit 2: uncalibrated key, missing file, mismatched pair count.
    assert_eq!(
        exit_code(&[
            "detect", "--input", &p(&rig.marked), "--codec", &codec, "--key", &p(&rig.key_raw),
        ]),
        2
    );
    assert_eq!(
        exit_code(&["detect", "--input", "no_such.wav", "--codec", &codec, "--key", &key]),
        2
    );
    assert_eq!(
        exit_code(&[
            "detect", "--input", &p(&rig.marked), "--codec", &codec, "--codec", &codec, "--key",
            &key,
        ]),
        2
    );

    // Attack: the marked clip degrades but the file comes out playable.
    let attack_spec = rig.dir.path().join("attack.toml");
    std::fs::write(&attack_spec, "kind = \"gaussian\"\nsnr_db = 60.0\nseed = 9\n").unwrap();
    let attacked = rig.dir.path().join("attacked.wav");
    let out = run_ok(&[
        "attack",
        "--input",
        &p(&rig.marked),
        "--spec",
        &p(&attack_spec),
        "--output",
        &p(&attacked),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("GAU60"));
    assert!(attacked.exists());

    // A 60 dB noise bath cannot strip a saturated mark: still exit 0.
    assert_eq!(
        exit_code(&["detect", "--input", &p(&attacked), "--codec", &codec, "--key", &key]),
        0
    );
}

#[test]
fn bench_writes_the_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = root.join("bench.toml");
    std::fs::write(
        &config,
        r#"
workers = 2

[[datasets]]
name = "mini"
domain = "music_like"
rate = 8000
seconds = 0.5
count = 4
seed = 100
null_count = 4
null_seed = 900

[[codecs]]
family_id = "cli-bench"
rate = 8000
frame = 32
latent_dim = 16
codebook_size = 8
num_stages = 2
seed = 5

[[methods]]
kind = "latent"
axis = "cluster"

[[methods]]
kind = "baseline"
sdr_db = 15.0
seed = 77

[[attacks]]
kind = "amplitude"
factor = 0.5

[embed]
n_steps = 6
"#,
    )
    .unwrap();
    let out_dir = root.join("results");
    let out = run_ok(&["bench", "--config", &p(&config), "--out-dir", &p(&out_dir)]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("dataset\tmethod\tattack\ttpr\tfpr\tacc\tsur\tdsisnr\tdscore"));
    assert!(stdout.contains("AMP0.5"));

    let tsv = std::fs::read_to_string(out_dir.join("report.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 1 + 2, "one row per method x attack");
    assert!(tsv.contains("mini\tcluster\tAMP0.5"));
    assert!(tsv.contains("mini\tbaseline\tAMP0.5"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);
    assert_eq!(json["config"]["workers"], 2);

    // A config that fails validation is a clean error, not a crash.
    let bad = root.join("bad.toml");
    std::fs::write(&bad, "workers = 2\n").unwrap();
    let out = bin()
        .args(["bench", "--config", &p(&bad), "--out-dir", &p(&out_dir)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
