use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde_json::json;
use specmon_core::classifier::{
    build_model, count_parameters, load_checkpoint, predict_many, predict_set, save_checkpoint,
    train_with_observer, CnnModel, ExampleSet, TaskKind, TrainConfig,
};
use specmon_core::datasets::{
    build_split, decode_iq, import_directory_layout, load_corpus, DatasetManifest, ImportDefaults,
    LabeledWindow, SplitSpec,
};
use specmon_core::eval::{
    classification_report, confusion_matrix, export_embeddings, export_history,
};
use specmon_core::features::{iq_to_channels, IqWindow, NormalizePolicy, WINDOW_LEN};
use specmon_core::seed::derive_seed;
use specmon_core::synthgen::{generate_corpus, Scenario, CORPUS_MANIFEST};
use specmon_core::{Error, Result};

use crate::args::{
    ClassifyArgs, Command, EvaluateArgs, GenerateArgs, IngestArgs, InspectArgs, TrainArgs,
};
use crate::manifest::{io, write_atomic, RunManifest};

pub const CHECKPOINT_FILE: &str = "model.spmc";
pub const HISTORY_FILE: &str = "history.csv";
pub const DATASET_MANIFEST_FILE: &str = "dataset_manifest.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "report.txt";
pub const CONFUSION_CSV: &str = "confusion.csv";
pub const EMBEDDINGS_CSV: &str = "embeddings.csv";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const INVENTORY_JSON: &str = "inventory.json";

pub fn run(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Generate(a) => generate(a),
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Classify(a) => classify(a),
        Command::ExportEmbeddings(a) => embeddings(a),
        Command::Inspect(a) => inspect(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let mut scenario = match &a.scenario {
        Some(p) => Scenario::from_json(&fs::read_to_string(p).map_err(|e| io(p, e))?)?,
        None => Scenario::default(),
    };
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    if let Some(snr) = a.snr_db {
        scenario.snr_db = if snr == f64::INFINITY {
            None
        } else {
            Some(snr)
        };
    }
    let mut run = RunManifest::new(
        "generate",
        Some(scenario.seed),
        serde_json::to_value(&scenario).expect("json"),
    );
    if let Some(p) = &a.scenario {
        run.input(p)?;
    }
    let manifest = generate_corpus(&scenario, &a.out)?;
    for entry in &manifest.recordings {
        run.output(&a.out.join(&entry.data_file))?;
        run.output(&a.out.join(&entry.meta_file))?;
    }
    run.output(&a.out.join(CORPUS_MANIFEST))?;
    run.write(&a.out)?;
    eprintln!(
        "wrote {} recordings to {}",
        manifest.recordings.len(),
        a.out.display()
    );
    Ok(())
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let sidecars = import_directory_layout(&a.data, &ImportDefaults::default())?;
    if !sidecars.is_empty() {
        eprintln!("wrote {} missing sidecars", sidecars.len());
    }
    let recordings = load_corpus(&a.data)?;
    create_dir(&a.out)?;
    let mut run = RunManifest::new("ingest", None, json!({ "data": a.data }));
    run.input_corpus(&a.data)?;
    let listing: Vec<_> = recordings
        .iter()
        .map(|r| {
            json!({
                "capture_id": r.meta.capture_id,
                "protocol": r.meta.protocol,
                "transmitter": r.meta.transmitter,
                "day": r.meta.day,
                "samples": r.len(),
                "sample_rate_hz": r.meta.sample_rate_hz,
            })
        })
        .collect();
    let path = a.out.join(INVENTORY_JSON);
    write_atomic(
        &path,
        serde_json::to_string_pretty(&listing)
            .expect("json")
            .as_bytes(),
    )?;
    run.output(&path)?;
    run.write(&a.out)?;
    eprintln!(
        "{} recordings, {} samples",
        recordings.len(),
        recordings.iter().map(|r| r.len()).sum::<usize>()
    );
    Ok(())
}

fn example_set(
    windows: &[LabeledWindow],
    task: TaskKind,
    normalization: NormalizePolicy,
) -> Result<ExampleSet> {
    ExampleSet::from_windows(
        windows.iter().map(|w| (&w.channels, w.label(task))),
        normalization,
    )
}

fn train(a: &TrainArgs) -> Result<()> {
    let spec = a.split.spec();
    let seed = spec.seed;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        seed,
        shuffle: true,
        evals_per_epoch: a.evals_per_epoch,
        batchnorm_recalibration: a.bn_recalibration,
    };
    cfg.validate()?;
    let recordings = load_corpus(&a.data)?;
    let split = build_split(&recordings, &spec, a.task)?;
    let train_set = example_set(&split.train, a.task, a.normalize)?;
    let val_set = example_set(&split.val, a.task, a.normalize)?;
    eprintln!(
        "{} task: {} train / {} validation windows from {} recordings",
        a.task,
        train_set.len(),
        val_set.len(),
        recordings.len()
    );

    let mut model = build_model::<f32>(a.task, derive_seed(seed, "model"));
    model.set_normalization(a.normalize);
    model.set_split_spec(Some(spec.clone()));
    let (model, history) = train_with_observer(model, &train_set, &val_set, &cfg, |r| {
        eprintln!(
            "epoch {:.2}  loss {:.4}  val accuracy {:.4}  {:.1}s",
            r.epoch, r.loss, r.val_accuracy, r.seconds
        )
    })?;

    create_dir(&a.out)?;
    let mut run = RunManifest::new(
        "train",
        Some(seed),
        json!({ "task": a.task, "train": cfg, "split": spec, "normalize": a.normalize }),
    );
    run.input_corpus(&a.data)?;
    let checkpoint = a.out.join(CHECKPOINT_FILE);
    save_checkpoint(&model, &checkpoint)?;
    run.output(&checkpoint)?;
    let history_path = a.out.join(HISTORY_FILE);
    export_history(&history, &history_path)?;
    run.output(&history_path)?;
    let dataset = a.out.join(DATASET_MANIFEST_FILE);
    DatasetManifest::from_split(&split, a.task).save(&dataset)?;
    run.output(&dataset)?;
    run.write(&a.out)?;
    if let Some(best) = history.best_accuracy() {
        eprintln!("best validation accuracy {best:.4}");
    }
    Ok(())
}

/// The checkpoint's split, with any flags given on the command line replacing its fields.
fn evaluation_split(a: &EvaluateArgs, model: &CnnModel<f32>) -> Result<SplitSpec> {
    if let Some(task) = a.task {
        if task != model.task() {
            return Err(Error::Config(format!(
                "checkpoint was trained for the {} task, but --task {task} was requested",
                model.task()
            )));
        }
    }
    let stored = model.split_spec().cloned();
    if stored.is_none() && a.split.is_none() {
        return Err(Error::Config(
            "checkpoint records no split; pass --split".into(),
        ));
    }
    let base = stored.unwrap_or_default();
    Ok(SplitSpec {
        sizes: a.split.unwrap_or(base.sizes),
        policy: a.split_policy.unwrap_or(base.policy),
        seed: a.seed.unwrap_or(base.seed),
    })
}

fn held_out(a: &EvaluateArgs, command: &str) -> Result<(CnnModel<f32>, ExampleSet, RunManifest)> {
    let model: CnnModel<f32> = load_checkpoint(&a.checkpoint)?;
    let spec = evaluation_split(a, &model)?;
    let recordings = load_corpus(&a.data)?;
    let split = build_split(&recordings, &spec, model.task())?;
    if split.test.is_empty() {
        return Err(Error::Config("the split has no test windows".into()));
    }
    let set = example_set(&split.test, model.task(), model.normalization())?;
    let mut run = RunManifest::new(
        command,
        Some(spec.seed),
        json!({ "task": model.task(), "split": spec }),
    );
    run.input(&a.checkpoint)?;
    run.input_corpus(&a.data)?;
    Ok((model, set, run))
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let (model, set, mut run) = held_out(a, "evaluate")?;
    let predictions = predict_set(&model, &set)?;
    let cm = confusion_matrix(&predictions, set.labels(), model.class_map())?;
    let report = classification_report(&cm)?;
    create_dir(&a.out)?;
    for (name, text) in [
        (REPORT_JSON, report.to_json()),
        (REPORT_TABLE, report.render_table()),
        (CONFUSION_CSV, cm.to_csv()),
    ] {
        let path = a.out.join(name);
        write_atomic(&path, text.as_bytes())?;
        run.output(&path)?;
    }
    run.write(&a.out)?;
    eprint!("{}", report.render_table());
    Ok(())
}

fn embeddings(a: &EvaluateArgs) -> Result<()> {
    let (model, set, mut run) = held_out(a, "export-embeddings")?;
    create_dir(&a.out)?;
    let path = a.out.join(EMBEDDINGS_CSV);
    let rows = export_embeddings(&model, &set, &path)?;
    run.output(&path)?;
    run.write(&a.out)?;
    eprintln!("wrote {rows} embeddings to {}", path.display());
    Ok(())
}

fn classify(a: &ClassifyArgs) -> Result<()> {
    let model: CnnModel<f32> = load_checkpoint(&a.checkpoint)?;
    let bytes = match a.data.as_deref().filter(|d| *d != Path::new("-")) {
        Some(p) => fs::read(p).map_err(|e| io(p, e))?,
        None => {
            let mut buf = Vec::new();
            io::stdin()
                .read_to_end(&mut buf)
                .map_err(|e| io(Path::new("<stdin>"), e))?;
            buf
        }
    };
    let samples = decode_iq(&bytes)?;
    let count = samples.len() / WINDOW_LEN;
    if count == 0 {
        return Err(Error::Input(format!(
            "{} samples do not fill one {WINDOW_LEN}-sample window",
            samples.len()
        )));
    }
    if samples.len() % WINDOW_LEN != 0 {
        eprintln!("ignoring {} trailing samples", samples.len() % WINDOW_LEN);
    }
    let windows = samples
        .chunks_exact(WINDOW_LEN)
        .map(|c| Ok(iq_to_channels(&IqWindow::new(c.to_vec())?)))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = windows.iter().collect();
    let predictions = predict_many(&model, &refs)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["window".to_string(), "offset".into(), "class".into()];
    header.extend(model.class_map().iter().map(|c| format!("p_{c}")));
    let csv_err = |e: csv::Error| Error::Format(format!("predictions: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for (i, p) in predictions.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            (i * WINDOW_LEN).to_string(),
            p.class_name.clone(),
        ];
        row.extend(p.probabilities.iter().map(|v| format!("{v:.6}")));
        w.write_record(&row).map_err(csv_err)?;
    }
    let text = w.into_inner().expect("in-memory writer");
    match &a.out {
        Some(dir) => {
            create_dir(dir)?;
            let path = dir.join(PREDICTIONS_CSV);
            write_atomic(&path, &text)?;
            let mut run = RunManifest::new("classify", None, json!({ "task": model.task() }));
            run.input(&a.checkpoint)?;
            if let Some(p) = a.data.as_deref().filter(|d| *d != Path::new("-")) {
                run.input(p)?;
            }
            run.output(&path)?;
            run.write(dir)?;
        }
        None => io::stdout()
            .write_all(&text)
            .map_err(|e| io(Path::new("<stdout>"), e))?,
    }
    Ok(())
}

/// The lines printed by `inspect`.
pub fn describe(model: &CnnModel<f32>) -> String {
    let config = match model.train_config() {
        Some(c) => serde_json::to_string(c).expect("json"),
        None => "untrained".into(),
    };
    let split = match model.split_spec() {
        Some(s) => serde_json::to_string(s).expect("json"),
        None => "none".into(),
    };
    format!(
        "task: {}\nclasses: {}\nclass_map: {}\nparameters: {}\nnormalize: {}\nseed: {}\nconfig: {config}\nsplit: {split}\n",
        model.task(),
        model.class_count(),
        model.class_map().join(", "),
        count_parameters(model),
        serde_json::to_value(model.normalization()).expect("json").as_str().unwrap_or_default(),
        model.seed(),
    )
}

fn inspect(a: &InspectArgs) -> Result<()> {
    let model: CnnModel<f32> = load_checkpoint(&a.checkpoint)?;
    io::stdout()
        .write_all(describe(&model).as_bytes())
        .map_err(|e| io(Path::new("<stdout>"), e))
}
