use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use audiovad::audio::{synth_clip, ClipKind};
use tempfile::TempDir;

fn audiovad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_audiovad"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn wav(dir: &Path, name: &str, kind: ClipKind, secs: f64, seed: u64) -> PathBuf {
    let path = dir.join(name);
    synth_clip::<f32>(kind, secs, 16000, seed).unwrap().write_wav(&path).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_defaults() {
    let o = audiovad(&["bench", "--help"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for needle in ["--seed", "[default: 7]", "--n-mels", "[default: 64]", "--coreset-fraction", "--no-faithfulness"] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
}

#[test]
fn bad_flags_exit_one() {
    assert_eq!(code(&audiovad(&["bench", "--no-such-flag"])), 1);
    assert_eq!(code(&audiovad(&["fit", "--detector", "isolation-forest", "x.wav"])), 1);
    assert_eq!(code(&audiovad(&["frobnicate"])), 1);
}

#[test]
fn config_echo_comes_first() {
    let d = TempDir::new().unwrap();
    let bg = wav(d.path(), "bg.wav", ClipKind::TonalBackground, 1.0, 1);
    let out = d.path().join("spec");
    let o = audiovad(&["spectrogram", "--out", s(&out), s(&bg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.trim_start().starts_with('{'));
    let echo: serde_json::Value = serde_json::Deserializer::from_str(&text)
        .into_iter::<serde_json::Value>()
        .next()
        .unwrap()
        .unwrap();
    assert_eq!(echo["command"], "spectrogram");
    assert_eq!(echo["config"]["seed"], 7);
    assert_eq!(echo["config"]["n_mels"], 64);
    assert!(out.join("bg.aep").is_file());
    assert!(fs::read(out.join("bg.pgm")).unwrap().starts_with(b"P5"));
}

#[test]
fn mix_writes_outputs() {
    let d = TempDir::new().unwrap();
    let bg = wav(d.path(), "bg.wav", ClipKind::NoiseBackground, 2.0, 2);
    let an = wav(d.path(), "an.wav", ClipKind::ChirpAnomaly, 0.5, 3);
    let out = d.path().join("mix");
    let o = audiovad(&[
        "mix", "--out", s(&out), "--background", s(&bg), "--anomaly", s(&an), "--snr", "-6", "--start-sample", "4000",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["mixed.wav", "isolated.wav", "injection.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let rec: serde_json::Value = serde_json::from_slice(&fs::read(out.join("injection.json")).unwrap()).unwrap();
    assert_eq!(rec["t_start_sample"], 4000);
    assert_eq!(rec["snr_db"], -6.0);

    // anomaly past the end of the background
    let o = audiovad(&[
        "mix", "--out", s(&out), "--background", s(&bg), "--anomaly", s(&an), "--start-sample", "30000",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn fit_with_one_clip_reports_statistics() {
    let d = TempDir::new().unwrap();
    let a = wav(d.path(), "a.wav", ClipKind::TonalBackground, 1.0, 4);
    let o = audiovad(&["fit", "--out", s(&d.path().join("m")), "--detector", "padim", s(&a)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("statistics"), "{}", stderr(&o));
}

#[test]
fn embeddings_fit_score_and_mismatch() {
    let d = TempDir::new().unwrap();
    let clips: Vec<PathBuf> = (0..3)
        .map(|i| wav(d.path(), &format!("n{i}.wav"), ClipKind::TonalBackground, 1.0, 10 + i))
        .collect();
    let emb = d.path().join("emb");
    let mut args = vec!["extract", "--out", s(&emb)];
    args.extend(clips.iter().map(|p| s(p)));
    let o = audiovad(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let model = d.path().join("model");
    let aeps: Vec<PathBuf> = (0..3).map(|i| emb.join(format!("n{i}.aep"))).collect();
    let mut args = vec!["fit", "--out", s(&model), "--detector", "padim"];
    args.extend(aeps.iter().map(|p| s(p)));
    let o = audiovad(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let avdm = model.join("model.avdm");
    assert!(avdm.is_file());

    let scored = d.path().join("scored");
    let o = audiovad(&["score", "--out", s(&scored), "--model", s(&avdm), s(&aeps[0])]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(scored.join("maps").join("n0.aep").is_file());
    assert!(scored.join("scores.json").is_file());

    // embeddings from a narrower extractor no longer match the model
    let narrow = d.path().join("narrow");
    let o = audiovad(&["extract", "--out", s(&narrow), "--channels", "8,8,8", s(&clips[0])]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = audiovad(&["score", "--out", s(&scored), "--model", s(&avdm), s(&narrow.join("n0.aep"))]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("mismatch"), "{}", stderr(&o));

    // truncated embedding file: path and byte offset in the message
    let bad = d.path().join("bad.aep");
    let bytes = fs::read(&aeps[0]).unwrap();
    fs::write(&bad, &bytes[..bytes.len() / 2]).unwrap();
    let o = audiovad(&["score", "--out", s(&scored), "--model", s(&avdm), s(&bad)]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("bad.aep") && err.contains("byte"), "{err}");

    // corrupt model
    let mut m = fs::read(&avdm).unwrap();
    let mid = m.len() / 2;
    m[mid] ^= 0xff;
    let broken = d.path().join("broken.avdm");
    fs::write(&broken, m).unwrap();
    let o = audiovad(&["score", "--out", s(&scored), "--model", s(&broken), s(&aeps[0])]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("broken.avdm") && err.contains("byte"), "{err}");
}

fn small_bench(out: &Path) -> Output {
    audiovad(&[
        "bench",
        "--out",
        s(out),
        "--detector",
        "padim,patchcore",
        "--snr",
        "6,-6",
        "--n-train",
        "4",
        "--n-test-normal",
        "3",
        "--n-test-anomalous",
        "3",
        "--clip-seconds",
        "1.5",
        "--no-faithfulness",
    ])
}

#[test]
fn bench_is_deterministic_and_feeds_eval_and_report() {
    let d = TempDir::new().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    let oa = small_bench(&a);
    assert_eq!(code(&oa), 0, "{}", stderr(&oa));
    let ob = small_bench(&b);
    assert_eq!(code(&ob), 0, "{}", stderr(&ob));
    let csv = fs::read(a.join("report.csv")).unwrap();
    assert_eq!(csv, fs::read(b.join("report.csv")).unwrap());
    assert_eq!(fs::read(a.join("models.json")).unwrap(), fs::read(b.join("models.json")).unwrap());
    let header = String::from_utf8(csv).unwrap().lines().next().unwrap().to_string();
    assert!(header.starts_with("method,snr_db,sample_roc"), "{header}");
    assert!(a.join("config.json").is_file());

    let manifest = a.join("corpus").join("manifest.json");
    let ev = d.path().join("eval");
    let o = audiovad(&[
        "eval",
        "--out",
        s(&ev),
        "--manifest",
        s(&manifest),
        "--maps",
        s(&a.join("maps").join("patchcore")),
        "--method",
        "patchcore",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let eval_csv = fs::read_to_string(ev.join("report.csv")).unwrap();
    let bench_csv = fs::read_to_string(a.join("report.csv")).unwrap();
    for line in eval_csv.lines().skip(1) {
        assert!(bench_csv.contains(line), "eval row {line} not in bench report");
    }

    let rep = d.path().join("report");
    let o = audiovad(&[
        "report",
        "--out",
        s(&rep),
        "--input",
        s(&a.join("report.csv")),
        "--manifest",
        s(&manifest),
        "--maps",
        s(&a.join("maps").join("padim")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("rendered 6 heatmaps"), "{}", stdout(&o));
    assert!(rep.join("report.json").is_file());
    assert_eq!(fs::read(rep.join("report.csv")).unwrap(), fs::read(a.join("report.csv")).unwrap());
}

#[test]
fn report_requires_both_manifest_and_maps() {
    assert_eq!(code(&audiovad(&["report", "--input", "r.csv", "--manifest", "m.json"])), 1);
}
