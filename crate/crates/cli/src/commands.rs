use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use carbontag_core::artifact::fnv1a_128;
use carbontag_core::dataset::{load_csv, parse_measurement_csv};
use carbontag_core::regression::{TrainingProvenance, ValidationSummary};
use carbontag_core::{
    aggregate_samples, assign_label, export_artifact, fit_ols, global_impact, import_artifact, select_features, split,
    validate as validate_model, Dataset, FeatureSpec, LabelBins, LinearModel, NormalizedAdEnergy, Param,
    SelectionConfig, SyntheticConfig,
};
use carbontag_service::{scan_stats, Engine, LogConfig, LogWriter, SyncPolicy};
use serde::Serialize;

use crate::args::*;
use crate::manifest::{sibling, RunManifest};

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text.as_bytes())
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = read(path)?;
    load_csv(bytes.as_slice()).with_context(|| format!("loading dataset {}", path.display()))
}

fn dataset_csv(ds: &Dataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn ingest(a: IngestArgs) -> Result<()> {
    let rows = parse_measurement_csv(read(&a.input)?.as_slice())
        .with_context(|| format!("parsing {}", a.input.display()))?;
    let ds = aggregate_samples(&rows)?;
    write(&a.out, &dataset_csv(&ds)?)?;
    let mut m = RunManifest::new("ingest");
    m.config_paths.push(a.input.clone());
    m.outputs.push(a.out.clone());
    m.write_next_to(&a.out)?;
    println!("{} raw rows -> {} samples written to {}", rows.len(), ds.len(), a.out.display());
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let text = String::from_utf8(read(&a.config)?)?;
    let mut cfg = SyntheticConfig::from_json(&text).with_context(|| format!("parsing {}", a.config.display()))?;
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(s) = a.noise_sigma {
        cfg.noise_sigma = s;
    }
    let ds = carbontag_core::generate_synthetic(&cfg, a.seed)?;
    write(&a.out, &dataset_csv(&ds)?)?;
    let mut m = RunManifest::new("synth");
    m.config_paths.push(a.config.clone());
    m.seed = Some(a.seed);
    m.outputs.push(a.out.clone());
    m.set("n", cfg.n).set("noise_sigma", cfg.noise_sigma);
    m.write_next_to(&a.out)?;
    println!("{} samples written to {}", ds.len(), a.out.display());
    Ok(())
}

fn selection_config(a: &TrainArgs) -> Result<SelectionConfig> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_slice(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => SelectionConfig::default(),
    };
    if let Some(c) = &a.candidates {
        cfg.candidate_fields = c.iter().map(|s| Param::parse(s.trim())).collect::<Result<_, _>>()?;
    }
    if let Some(v) = a.corr_threshold {
        cfg.corr_threshold = v;
    }
    if let Some(v) = a.vif_threshold {
        cfg.vif_threshold = v;
    }
    if let Some(v) = a.variance_threshold {
        cfg.variance_threshold = v;
    }
    if let Some(v) = a.max_interaction_order {
        cfg.max_interaction_order = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct TrainValidation {
    in_sample: ValidationSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    holdout: Option<ValidationSummary>,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let raw = read(&a.dataset)?;
    let full = load_csv(raw.as_slice()).with_context(|| format!("loading dataset {}", a.dataset.display()))?;
    let cfg = selection_config(&a)?;
    let (train_set, holdout) = match a.holdout {
        Some(f) => {
            let (tr, ho) = split(&full, 1.0 - f, a.seed)?;
            (tr, Some(ho))
        }
        None => (full, None),
    };

    let features: Vec<FeatureSpec> = match &a.features {
        Some(names) => names.iter().map(|n| FeatureSpec::parse(n.trim())).collect::<Result<_, _>>()?,
        None => {
            let report = select_features(&train_set, &cfg)?;
            write_json(&sibling(&a.out, "selection"), &report)?;
            report.selected
        }
    };

    let mut model = fit_ols(&train_set, &features)?;
    model.version = a.model_version.clone();
    model.trained_on = Some(TrainingProvenance {
        dataset_id: format!("{:032x}", fnv1a_128(&raw)),
        sample_count: train_set.len(),
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    });
    let artifact = export_artifact(&model, &LabelBins::default())?;
    write(&a.out, &artifact)?;
    write_json(&sibling(&a.out, "model"), &model)?;

    let validation = TrainValidation {
        in_sample: validate_model(&model, &train_set)?,
        holdout: holdout.as_ref().map(|h| validate_model(&model, h)).transpose()?,
    };
    write_json(&sibling(&a.out, "validation"), &validation)?;

    let mut m = RunManifest::new("train");
    m.config_paths.push(a.dataset.clone());
    m.config_paths.extend(a.config.clone());
    m.seed = a.holdout.map(|_| a.seed);
    m.outputs.push(a.out.clone());
    m.outputs.push(sibling(&a.out, "model"));
    m.outputs.push(sibling(&a.out, "validation"));
    if a.features.is_none() {
        m.outputs.push(sibling(&a.out, "selection"));
    }
    m.set("model_version", &a.model_version);
    if a.features.is_none() {
        m.set("selection", serde_json::to_string(&cfg)?);
    } else {
        m.set("features", features.iter().map(|f| f.name()).collect::<Vec<_>>().join(","));
    }
    if let Some(h) = a.holdout {
        m.set("holdout", h);
    }
    m.write_next_to(&a.out)?;

    println!(
        "{} features, in-sample R2 {}, artifact {} bytes at {}",
        model.terms().len(),
        fmt_opt(validation.in_sample.overall.r2, 4),
        artifact.len(),
        a.out.display()
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map(|x| format!("{x:.prec$}")).unwrap_or_else(|| "n/a".into())
}

pub fn validate(a: ValidateArgs) -> Result<()> {
    let (model, _) = import_artifact(&read(&a.model)?).with_context(|| format!("loading {}", a.model.display()))?;
    let ds = load_dataset(&a.dataset)?;
    let summary = validate_model(&model, &ds)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
        return Ok(());
    }
    let mut out = io::stdout().lock();
    writeln!(out, "{:<24} {:>8} {:>8} {:>10}", "device", "n", "R2", "RMSE")?;
    for r in summary.per_device.iter().chain(std::iter::once(&summary.overall)) {
        let name = r.device_id.as_deref().unwrap_or("overall");
        writeln!(out, "{:<24} {:>8} {:>8} {:>10.2}", name, r.n, fmt_opt(r.r2, 2), r.rmse)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct LabelLine {
    value: f64,
    grade: String,
}

pub fn label(a: LabelArgs) -> Result<()> {
    let values: Vec<f64> = match (&a.batch, a.value) {
        (Some(path), _) => {
            let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
            let mut vals = Vec::new();
            for (i, line) in io::BufReader::new(file).lines().enumerate() {
                let line = line?;
                let t = line.trim();
                if t.is_empty() {
                    continue;
                }
                let v: f64 = t.parse().map_err(|_| {
                    carbontag_core::Error::Row { line: i as u64 + 1, message: format!("cannot parse `{t}`") }
                })?;
                vals.push(v);
            }
            vals
        }
        (None, Some(v)) => vec![v],
        (None, None) => bail!("a value or --batch is required"),
    };
    let lines = values
        .iter()
        .map(|&v| Ok(LabelLine { value: v, grade: assign_label(NormalizedAdEnergy(v))?.grade.to_string() }))
        .collect::<Result<Vec<_>, carbontag_core::Error>>()?;
    if a.json {
        println!("{}", serde_json::to_string(&lines)?);
    } else {
        for l in lines {
            println!("{}", l.grade);
        }
    }
    Ok(())
}

pub fn export(a: ExportArgs) -> Result<()> {
    let mut model: LinearModel = serde_json::from_slice(&read(&a.model)?)
        .with_context(|| format!("parsing {}", a.model.display()))?;
    model = model.validated()?;
    if let Some(v) = &a.model_version {
        model.version = v.clone();
    }
    let artifact = export_artifact(&model, &LabelBins::default())?;
    write(&a.out, &artifact)?;
    let mut m = RunManifest::new("export");
    m.config_paths.push(a.model.clone());
    m.outputs.push(a.out.clone());
    m.set("model_version", &model.version);
    m.write_next_to(&a.out)?;
    println!("artifact {} ({} bytes, version {})", a.out.display(), artifact.len(), model.version);
    Ok(())
}

pub fn serve(a: ServeArgs) -> Result<()> {
    let mut builder = tokio::runtime::Builder::new_multi_thread();
    builder.enable_all();
    if let Some(w) = a.workers {
        builder.worker_threads(w.max(1));
    }
    let rt = builder.build()?;
    rt.block_on(async move {
        let log = LogWriter::open(LogConfig {
            dir: a.log_dir.clone(),
            max_segment_bytes: a.max_segment_bytes,
            sync: if a.fsync { SyncPolicy::Fsync } else { SyncPolicy::Flush },
        })
        .with_context(|| format!("opening log directory {}", a.log_dir.display()))?;
        let engine = Arc::new(Engine::new(log));
        if let Some(path) = &a.model {
            let m = engine.load_model(&read(path)?).with_context(|| format!("loading {}", path.display()))?;
            log::info!("loaded model {} from {}", m.model.version, path.display());
        }
        let listener = tokio::net::TcpListener::bind(a.listen)
            .await
            .with_context(|| format!("binding {}", a.listen))?;
        println!("listening on {}", listener.local_addr()?);
        io::stdout().flush()?;
        tokio::select! {
            r = carbontag_service::serve(listener, engine) => r?,
            _ = tokio::signal::ctrl_c() => log::info!("shutting down"),
        }
        Ok(())
    })
}

pub fn impact(a: ImpactArgs) -> Result<()> {
    let est = global_impact(a.per_ad, a.ads_per_day, a.users)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&est)?);
    } else {
        println!("per user per day: {:e} kWh", est.per_user_daily);
        println!("global per day:   {:e} kWh", est.global_daily);
        println!("global per year:  {:e} kWh", est.global_yearly);
    }
    Ok(())
}

pub fn stats(a: StatsArgs) -> Result<()> {
    let s = scan_stats(&a.log_dir).with_context(|| format!("scanning {}", a.log_dir.display()))?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&s)?);
        return Ok(());
    }
    for (g, c) in &s.by_grade {
        println!("{g}: {c}");
    }
    println!("total: {}", s.total);
    for (v, hist) in &s.by_model_version {
        let n: u64 = hist.values().sum();
        println!("model {v}: {n}");
    }
    if s.corrupt_lines > 0 {
        eprintln!("warning: {} corrupt line(s) skipped", s.corrupt_lines);
    }
    Ok(())
}
