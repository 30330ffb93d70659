use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use audiovad::audio::{log_mel_spectrogram, mix_at_snr, Spectrogram, Waveform};
use audiovad::benchkit::{
    build_corpus, emit_heatmaps, emit_report, evaluate_maps, load_corpus, load_maps, report_notes, run_experiment,
    save_matrix, CorpusSizes, DatasetManifest, ExperimentConfig, MapScorer, MetricConfig, ModelScorer,
};
use audiovad::detectors::{
    load_model, postprocess, reduce_map, save_model, DetectorConfig, DetectorKind, Embedder, FittedModel, SampleReduction,
    StfpmConfig,
};
use audiovad::features::{export_embeddings, import_embeddings, ExtractorKind, ExtractorSpec, ReferenceExtractor};
use audiovad::metrics::{matrix_image, MetricsReport};
use audiovad::Error;

use crate::args::*;

type S = f32;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mix(a) => mix(a),
        Command::Spectrogram(a) => spectrogram(a),
        Command::Extract(a) => extract(a),
        Command::Fit(a) => fit(a),
        Command::Score(a) => score(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::Report(a) => report(a),
    }
}

/// Prints the resolved configuration, configures the worker pool and creates `--out`.
fn start(name: &str, common: &Common, config: Value) -> Result<()> {
    let echo = json!({ "command": name, "config": config });
    println!("{}", serde_json::to_string_pretty(&echo)?);
    if common.jobs > 0 {
        // Fails only if a pool already exists, which cannot happen in this process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(common.jobs).build_global();
    }
    fs::create_dir_all(&common.out).map_err(|e| io_err(&common.out, e))?;
    Ok(())
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v)? + "\n";
    fs::write(path, text).map_err(|e| io_err(path, e))?;
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into())
}

/// Output names must not collide when two inputs share a file stem.
fn unique_stems(inputs: &[PathBuf]) -> Result<Vec<String>> {
    let stems: Vec<String> = inputs.iter().map(|p| stem(p)).collect();
    let mut seen = std::collections::BTreeSet::new();
    for s in &stems {
        if !seen.insert(s) {
            return Err(Error::Parameter(format!("two inputs share the file name '{s}'; outputs would collide")).into());
        }
    }
    Ok(stems)
}

fn is_aep(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("aep"))
}

fn load_spectrogram(path: &Path, audio: &AudioArgs) -> Result<Spectrogram<S>> {
    let w = Waveform::<S>::read_wav(path)?;
    if w.sample_rate != audio.sample_rate {
        return Err(Error::Parameter(format!(
            "{}: sample rate {} Hz differs from --sample-rate {}",
            path.display(),
            w.sample_rate,
            audio.sample_rate
        ))
        .into());
    }
    Ok(log_mel_spectrogram(&w, &audio.params())
        .with_context(|| format!("spectrogram of {}", path.display()))?)
}

fn extractor_spec(e: &ExtractorArgs, kind: ExtractorKind) -> Result<ExtractorSpec> {
    let spec = ExtractorSpec {
        kind,
        seed: e.extractor_seed,
        channels_per_block: e.channels.clone(),
        selected_levels: e.levels.clone(),
    };
    spec.validate()?;
    Ok(spec)
}

fn mix(a: MixArgs) -> Result<()> {
    start("mix", &a.common, to_value(&a))?;
    let bg = Waveform::<S>::read_wav(&a.background)?;
    let an = Waveform::<S>::read_wav(&a.anomaly)?;
    let out = mix_at_snr(&bg, &an, &stem(&a.anomaly), a.snr, a.start_sample)?;
    out.mixed.write_wav(a.common.out.join("mixed.wav"))?;
    out.isolated.write_wav(a.common.out.join("isolated.wav"))?;
    write_json(&a.common.out.join("injection.json"), &out.record)?;
    println!(
        "mixed at {} dB: alpha {:.6}, {} clipped samples",
        out.record.snr_db, out.record.scale_alpha, out.record.clip_count
    );
    Ok(())
}

fn spectrogram(a: SpectrogramArgs) -> Result<()> {
    let mut cfg = to_value(&a);
    cfg["resolved"] = a.audio.json();
    start("spectrogram", &a.common, cfg)?;
    a.audio.params().validate(a.audio.sample_rate)?;
    for (path, name) in a.inputs.iter().zip(unique_stems(&a.inputs)?) {
        let s = load_spectrogram(path, &a.audio)?;
        save_matrix(&s.values, a.common.out.join(format!("{name}.aep")))?;
        matrix_image(&s.values).write(a.common.out.join(format!("{name}.pgm")))?;
        println!("{}: {} frames x {} bands", path.display(), s.frames(), s.bands());
    }
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let spec = extractor_spec(&a.extractor, ExtractorKind::Reference)?;
    let mut cfg = to_value(&a);
    cfg["resolved"] = json!({ "audio": a.audio.json(), "extractor": spec });
    start("extract", &a.common, cfg)?;
    a.audio.params().validate(a.audio.sample_rate)?;
    let ex = ReferenceExtractor::<S>::new(&spec)?;
    for (path, name) in a.inputs.iter().zip(unique_stems(&a.inputs)?) {
        let s = load_spectrogram(path, &a.audio)?;
        let p = ex.extract(&s)?;
        export_embeddings(&p, a.common.out.join(format!("{name}.aep")))?;
        let shapes: Vec<String> = p
            .levels
            .iter()
            .zip(&p.level_names)
            .map(|(l, n)| format!("{n} {}x{}x{}", l.height(), l.width(), l.channels()))
            .collect();
        println!("{}: {}", path.display(), shapes.join(", "));
    }
    Ok(())
}

fn detector_config(d: &DetectorArgs, extractor: ExtractorSpec, seed: u64) -> DetectorConfig {
    DetectorConfig {
        kind: d.detector.into(),
        extractor,
        epsilon: d.epsilon,
        coreset_fraction: d.coreset_fraction,
        stfpm: StfpmConfig {
            steps: d.steps,
            lr: d.lr,
            seed,
            ..StfpmConfig::default()
        },
    }
}

fn fit(a: FitArgs) -> Result<()> {
    let aep = a.inputs.iter().filter(|p| is_aep(p)).count();
    if aep != 0 && aep != a.inputs.len() {
        return Err(Error::Parameter("inputs must be all WAV files or all AEP1 embeddings".into()).into());
    }
    let imported = aep > 0;
    let kind = if imported { ExtractorKind::Imported } else { ExtractorKind::Reference };
    let dc = detector_config(&a.detector, extractor_spec(&a.extractor, kind)?, a.common.seed);
    let mut cfg = to_value(&a);
    cfg["resolved"] = json!({ "audio": a.audio.json(), "detector": dc, "imported_embeddings": imported });
    start("fit", &a.common, cfg)?;

    let model: FittedModel<S> = if imported {
        let embedder = Embedder::<S>::new(&dc.extractor)?;
        let grids = a
            .inputs
            .iter()
            .map(|p| Ok(embedder.grid_from_pyramid(&import_embeddings(p)?)?))
            .collect::<Result<Vec<_>>>()?;
        dc.fit_grids(&grids)?
    } else {
        a.audio.params().validate(a.audio.sample_rate)?;
        let specs = a
            .inputs
            .iter()
            .map(|p| load_spectrogram(p, &a.audio))
            .collect::<Result<Vec<_>>>()?;
        dc.fit(&specs)?
    };
    let path = a.common.out.join("model.avdm");
    let crc = save_model(&model, &path)?;
    write_json(
        &a.common.out.join("fit.json"),
        &json!({
            "detector": model.kind(),
            "train_clips": a.inputs.len(),
            "model": "model.avdm",
            "crc32": format!("{crc:08x}"),
        }),
    )?;
    println!("fitted {} on {} clips -> {} (crc32 {crc:08x})", model.kind(), a.inputs.len(), path.display());
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let mut cfg = to_value(&a);
    cfg["resolved"] = json!({ "audio": a.audio.json() });
    start("score", &a.common, cfg)?;
    let model = load_model::<S>(&a.model)?;
    let maps_dir = a.common.out.join("maps");
    fs::create_dir_all(&maps_dir).map_err(|e| io_err(&maps_dir, e))?;
    let mut scores = Vec::new();
    for (path, name) in a.inputs.iter().zip(unique_stems(&a.inputs)?) {
        let map = if is_aep(path) {
            let embedder = match &model {
                FittedModel::Padim { embedder, .. } | FittedModel::Patchcore { embedder, .. } => embedder,
                FittedModel::Stfpm(_) => {
                    return Err(Error::Config("stfpm models score WAV input, not embeddings".into()).into())
                }
            };
            let grid = embedder.grid_from_pyramid(&import_embeddings(path)?)?;
            let raw = model
                .grid_map(&grid)
                .with_context(|| format!("scoring {}", path.display()))?;
            postprocess(&raw, &grid.coord_map, a.sigma, false)?
        } else {
            let s = load_spectrogram(path, &a.audio)?;
            model
                .anomaly_map(&s, a.sigma, false)
                .with_context(|| format!("scoring {}", path.display()))?
        };
        let value = reduce_map(&map, SampleReduction::Max)?;
        save_matrix(&map.values, maps_dir.join(format!("{name}.aep")))?;
        matrix_image(&map.normalized().values).write(maps_dir.join(format!("{name}.pgm")))?;
        println!("{}\t{value}", path.display());
        scores.push(json!({ "input": path, "map": format!("maps/{name}.aep"), "score": value }));
    }
    write_json(
        &a.common.out.join("scores.json"),
        &json!({ "detector": model.kind(), "sample_reduction": SampleReduction::Max, "scores": scores }),
    )?;
    Ok(())
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn eval(a: EvalArgs) -> Result<()> {
    let metrics = MetricConfig {
        smoothing_sigma: a.sigma,
        faithfulness: a.model.is_some(),
        ..MetricConfig::default()
    };
    let manifest = DatasetManifest::read(&a.manifest)?;
    let snr = if a.snr.is_empty() { manifest.snr_levels() } else { a.snr.clone() };
    let mut cfg = to_value(&a);
    cfg["resolved"] = json!({ "snr_levels": snr, "metrics": metrics });
    start("eval", &a.common, cfg)?;

    let corpus = load_corpus::<S>(&manifest, &manifest_dir(&a.manifest))?;
    let ids: Vec<&str> = corpus.test_clips().into_iter().map(|(id, _)| id).collect();
    let maps = load_maps::<S>(&a.maps, &ids)?;
    let model = a.model.as_ref().map(load_model::<S>).transpose()?;
    let scorer = model.as_ref().map(|m| ModelScorer {
        model: m,
        sigma: a.sigma,
    });
    let rescore = scorer.as_ref().map(|s| s as &dyn MapScorer<S>);
    let (rows, diagnostics) = evaluate_maps(&a.method, &maps, &corpus, &snr, &metrics, rescore)?;
    let report = MetricsReport {
        rows,
        notes: report_notes(&metrics),
        diagnostics,
    };
    emit_report(&report, &a.common.out)?;
    print!("{}", report.to_csv()?);
    Ok(())
}

fn bench_config(a: &BenchArgs) -> Result<ExperimentConfig> {
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        return Ok(cfg);
    }
    let detectors: Vec<DetectorKind> = a.detector.iter().map(|&d| d.into()).collect();
    let mut dedup = Vec::new();
    for d in detectors {
        if !dedup.contains(&d) {
            dedup.push(d);
        }
    }
    Ok(ExperimentConfig {
        detectors: dedup,
        extractor: extractor_spec(&a.extractor, ExtractorKind::Reference)?,
        snr_levels: a.snr.clone(),
        sizes: CorpusSizes {
            train: a.n_train,
            test_normal: a.n_test_normal,
            test_anomalous: a.n_test_anomalous,
            clip_seconds: a.clip_seconds,
            ..CorpusSizes::default()
        },
        seed: a.common.seed,
        sample_rate: a.audio.sample_rate,
        spectrogram: a.audio.params(),
        epsilon: a.epsilon,
        coreset_fraction: a.coreset_fraction,
        stfpm: StfpmConfig {
            steps: a.steps,
            lr: a.lr,
            ..StfpmConfig::default()
        },
        metrics: MetricConfig {
            smoothing_sigma: a.sigma,
            faithfulness: !a.no_faithfulness,
            ..MetricConfig::default()
        },
    })
}

fn bench(a: BenchArgs) -> Result<()> {
    let cfg = bench_config(&a)?;
    let mut echo = to_value(&a);
    echo["resolved"] = to_value(&cfg);
    start("bench", &a.common, echo)?;
    cfg.validate()?;
    let out = &a.common.out;
    write_json(&out.join("config.json"), &cfg)?;

    let corpus_dir = out.join("corpus");
    let manifest = build_corpus::<S>(&cfg, cfg.seed, &corpus_dir)?;
    let result = run_experiment::<S>(&manifest, &corpus_dir, &cfg, out)?;
    let crcs: BTreeMap<String, String> = result
        .model_crcs
        .iter()
        .map(|(k, c)| (k.name().to_string(), format!("{c:08x}")))
        .collect();
    write_json(&out.join("models.json"), &crcs)?;
    print!("{}", result.report.to_csv()?);
    for d in &result.report.diagnostics {
        eprintln!("note: {d}");
    }
    let ran: Vec<&str> = result.model_crcs.iter().map(|(k, _)| k.name()).collect();
    if ran.is_empty() {
        return Err(Error::Data("every detector aborted; see report.json diagnostics".into()).into());
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    start("report", &a.common, to_value(&a))?;
    let csv_input = a.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let rep = if csv_input {
        MetricsReport::read_csv(&a.input)?
    } else {
        MetricsReport::read_json(&a.input)?
    };
    emit_report(&rep, &a.common.out)?;
    if let (Some(mpath), Some(maps_dir)) = (&a.manifest, &a.maps) {
        let manifest = DatasetManifest::read(mpath)?;
        let corpus = load_corpus::<S>(&manifest, &manifest_dir(mpath))?;
        let ids: Vec<&str> = corpus
            .anomalous
            .iter()
            .map(|c| c.clip_id.as_str())
            .filter(|id| maps_dir.join(format!("{id}.aep")).is_file())
            .collect();
        let maps = load_maps::<S>(maps_dir, &ids)?;
        emit_heatmaps(&maps, &corpus, &a.common.out.join("heatmaps"))?;
        println!("rendered {} heatmaps", maps.len());
    }
    print!("{}", rep.to_csv()?);
    Ok(())
}
