use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sassl::augment::{apply_transform, AugmentContext};
use sassl::contrast::SslModel;
use sassl::dataio::{
    dataset_hash, extract_window, generate_synthetic, load_dataset_with_window, mode_center_normalize, rereference_channel_average,
    write_dataset, zscore_normalize, DatasetStats, Montage, Recording, Segment, SplitSpec, SyntheticParams,
};
use sassl::eval::{
    append_rr_features, confusion, metrics_from_confusion, pool_groups, rhythm_groups, subject_id_probe, ConfusionMatrix,
    MetricReport, SubjectProbeResult,
};
use sassl::nn::{Checkpoint, Encoder, Linear};
use sassl::rng::stream;
use sassl::train::{
    accuracy, argmax_rows, embed, finetune, fit_probe, pretrain_ssl, pretraining_spans, segment_labels, Classifier, PretrainConfig,
    SslTrainer, StepMetrics, WindowSampler,
};
use sassl::{Scalar, Tensor};
use serde::Serialize;
use serde_json::json;

use crate::config::{DatasetConfig, ExperimentConfig, Precision};
use crate::error::{CliError, CliResult};

pub const RUN_FILE: &str = "run.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_PRE_FILE: &str = "report_pre.json";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const CONFUSION_PRE_FILE: &str = "confusion_pre.csv";

// rng stream ids under the run seed
const RNG_INIT: u64 = 1;
const RNG_PRETRAIN: u64 = 2;
const RNG_PROBE: u64 = 3;
const RNG_FINETUNE: u64 = 4;
const RNG_SUBJECT: u64 = 5;
const RNG_PREVIEW: u64 = 6;

const EVAL_BATCH: usize = 256;

/// Writes the dataset and returns the manifest path and its hash.
pub fn gen_synthetic(params: &SyntheticParams, out: &Path) -> CliResult<(PathBuf, String)> {
    params.validate().map_err(|e| CliError::in_section("dataset", e))?;
    let recs = generate_synthetic::<f32>(params)?;
    let manifest = write_dataset(out, &recs)?;
    let hash = dataset_hash(&manifest)?;
    write_json(&out.join(RUN_FILE), &json!({ "command": "gen-synthetic", "params": params, "manifest": manifest, "dataset_hash": hash }))?;
    Ok((manifest, hash))
}

fn write_json(path: &Path, v: &impl Serialize) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

/// Loaded, preprocessed data plus the resolved split.
struct Data<T> {
    recordings: Vec<Recording<T>>,
    montage: Option<Montage>,
    split: SplitSpec,
    std_ref: Vec<f64>,
    fs: f64,
    manifest: PathBuf,
    hash: String,
}

impl<T: Scalar> Data<T> {
    fn context(&self) -> AugmentContext<'_, T> {
        let mut ctx = AugmentContext::new(&self.recordings, self.fs);
        ctx.montage = self.montage.as_ref();
        ctx.std_ref = Some(&self.std_ref);
        ctx
    }
}

fn load_data<T: Scalar>(cfg: &mut ExperimentConfig, out: &Path) -> CliResult<Data<T>> {
    let (manifest, montage_src) = match &cfg.dataset {
        DatasetConfig::Synthetic(p) => {
            p.validate().map_err(|e| CliError::in_section("dataset", e))?;
            let manifest = write_dataset(out.join("dataset"), &generate_synthetic::<f32>(p)?)?;
            (manifest, Some(Err(p.montage())))
        }
        DatasetConfig::Manifest { path, montage } => (path.clone(), montage.clone().map(Ok)),
    };
    let hash = dataset_hash(&manifest)?;
    let mut recordings: Vec<Recording<T>> = load_dataset_with_window(&manifest, Some(cfg.model.window))?;
    let first = recordings.first().ok_or_else(|| CliError::config("dataset", "no recordings"))?;
    let (channels, fs) = (first.channels(), first.sample_rate_hz);
    if let Some(r) = recordings.iter().find(|r| r.channels() != channels || r.sample_rate_hz != fs) {
        return Err(CliError::config("dataset", format!("subject {} differs in channel count or sample rate", r.subject_id)));
    }
    if channels != cfg.model.in_channels {
        return Err(CliError::config("model.in_channels", format!("{} but the dataset has {channels} channels", cfg.model.in_channels)));
    }
    let montage = match montage_src {
        Some(Err(m)) => Some(m),
        Some(Ok(path)) => Some(Montage::load(&path, &recordings[0].channel_names)?),
        None => None,
    };
    let split = match &cfg.split {
        Some(s) => s.clone(),
        None => {
            let mut ids: Vec<u32> = recordings.iter().map(|r| r.subject_id).collect();
            ids.sort_unstable();
            ids.dedup();
            SplitSpec::intrasubject(ids)
        }
    };
    cfg.split = Some(split.clone());
    if cfg.preprocess.rereference {
        recordings = recordings.iter().map(rereference_channel_average).collect::<Result<_, _>>()?;
    }
    let train_recs: Vec<Recording<T>> =
        recordings.iter().filter(|r| split.train_subject_ids.contains(&r.subject_id)).cloned().collect();
    if train_recs.is_empty() {
        return Err(CliError::config("split.train_subject_ids", "no recordings belong to the training subjects"));
    }
    let mut stats = DatasetStats::compute(&train_recs)?;
    if cfg.preprocess.zscore {
        recordings = recordings.iter().map(|r| zscore_normalize(r, &stats)).collect::<Result<_, _>>()?;
        stats = DatasetStats::identity(channels);
    }
    Ok(Data { recordings, montage, split, std_ref: stats.std, fs, manifest, hash })
}

fn labeled_segments<T: Scalar>(cfg: &ExperimentConfig, data: &Data<T>) -> CliResult<(Vec<Segment<T>>, Vec<Segment<T>>)> {
    let (mut train, mut test) = sassl::dataio::make_splits(&data.recordings, &data.split, &cfg.windows)?;
    if cfg.preprocess.mode_center {
        train = train.iter().map(mode_center_normalize).collect::<Result<_, _>>()?;
        test = test.iter().map(mode_center_normalize).collect::<Result<_, _>>()?;
    }
    if train.is_empty() || test.is_empty() {
        return Err(CliError::config("windows", format!("{} train and {} test windows; both must be non-empty", train.len(), test.len())));
    }
    Ok((train, test))
}

/// Resolves `eval.n_classes` and `eval.class_names` from the labels.
fn resolve_classes<T: Scalar>(cfg: &mut ExperimentConfig, segs: &[&[Segment<T>]]) -> CliResult<(usize, Vec<String>)> {
    let mut max = 0;
    for s in segs.iter().flat_map(|s| s.iter()) {
        let l = s.label.ok_or_else(|| CliError::config("windows.label", "windows carry no labels"))?;
        max = max.max(l + 1);
    }
    let n = cfg.eval.n_classes.unwrap_or(max);
    if max > n {
        return Err(CliError::config("eval.n_classes", format!("{n} but labels reach {}", max - 1)));
    }
    let names = cfg.eval.class_names.clone().unwrap_or_else(|| (0..n).map(|i| i.to_string()).collect());
    if names.len() != n {
        return Err(CliError::config("eval.class_names", format!("{} names for {n} classes", names.len())));
    }
    if let Some(&e) = cfg.eval.excluded_classes.iter().find(|&&e| e >= n) {
        return Err(CliError::config("eval.excluded_classes", format!("class {e} outside {n} classes")));
    }
    cfg.eval.n_classes = Some(n);
    cfg.eval.class_names = Some(names.clone());
    Ok((n, names))
}

#[derive(Serialize)]
struct RunEcho<'a> {
    command: &'a str,
    seed: u64,
    precision: Precision,
    manifest: &'a Path,
    dataset_hash: &'a str,
    checkpoint_in: Option<&'a Path>,
    checkpoint_out: Option<PathBuf>,
    config: &'a ExperimentConfig,
}

fn echo_run<T: Scalar>(cmd: &str, cfg: &ExperimentConfig, data: &Data<T>, out: &Path, ck_in: Option<&Path>, writes_ck: bool) -> CliResult<()> {
    let echo = RunEcho {
        command: cmd,
        seed: cfg.seed,
        precision: cfg.precision,
        manifest: &data.manifest,
        dataset_hash: &data.hash,
        checkpoint_in: ck_in,
        checkpoint_out: writes_ck.then(|| out.join(CHECKPOINT_FILE)),
        config: cfg,
    };
    write_json(&out.join(RUN_FILE), &echo)
}

/// Encoder from `checkpoint` (entries under `G.`) or, without one, the same
/// random initialization pretraining starts from.
fn load_encoder<T: Scalar>(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> CliResult<Encoder<T>> {
    let mut g = Encoder::new(&cfg.model, &mut stream(cfg.seed, RNG_INIT))?;
    if let Some(path) = checkpoint {
        read_checkpoint(path)?.load_module("G", &mut g)?;
    }
    Ok(g)
}

fn read_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    Checkpoint::read(path).map_err(|e| match e {
        sassl::Error::Io(io) => CliError::Usage(format!("checkpoint {}: {io}", path.display())),
        other => other.into(),
    })
}

/// Summary of one pretraining run.
#[derive(Debug, Clone, Serialize)]
pub struct PretrainSummary {
    pub steps: usize,
    pub final_metrics: Option<StepMetrics>,
    pub checkpoint: PathBuf,
}

pub fn pretrain<T: Scalar>(mut cfg: ExperimentConfig, out: &Path) -> CliResult<PretrainSummary> {
    let data = load_data::<T>(&mut cfg, out)?;
    echo_run("pretrain", &cfg, &data, out, None, true)?;
    let ids = data.split.train_subject_ids.clone();
    let model = SslModel::<T>::new(&cfg.model, &cfg.loss, &ids, &mut stream(cfg.seed, RNG_INIT))?;
    let pcfg = PretrainConfig { mode_center: cfg.preprocess.mode_center, ..cfg.train.pretrain.clone() };
    let mut trainer = SslTrainer::new(model, cfg.loss.clone(), pcfg)?;
    let spans = pretraining_spans(&data.recordings, &data.split);
    let sampler = WindowSampler::new(&spans, cfg.model.window, cfg.augment.max_delay())?;
    let ctx = data.context();
    let mut lines = BufWriter::new(File::create(out.join(METRICS_FILE))?);
    let mut last = None;
    let run = pretrain_ssl(&mut trainer, &sampler, &cfg.augment, &ctx, &mut stream(cfg.seed, RNG_PRETRAIN), |m| {
        serde_json::to_writer(&mut lines, m)?;
        lines.write_all(b"\n")?;
        last = Some(m.clone());
        Ok(())
    });
    lines.flush()?;
    run?;
    let path = out.join(CHECKPOINT_FILE);
    trainer.checkpoint().write(&path)?;
    Ok(PretrainSummary { steps: trainer.steps_done(), final_metrics: last, checkpoint: path })
}

/// Evaluation output shared by probe, finetune and eval.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    /// `"random"` or the checkpoint the encoder came from.
    pub encoder: String,
    pub n_classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Percent correct on the training windows.
    pub train_accuracy: f64,
    pub metrics: MetricReport,
    pub confusion: Vec<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject_probe: Option<SubjectProbeResult>,
}

/// Features for the head: embeddings, optionally rhythm-pooled or widened
/// with RR intervals, and the labels of the rows kept.
fn features<T: Scalar>(
    cfg: &ExperimentConfig,
    encoder: &mut Encoder<T>,
    segments: &[Segment<T>],
    recordings: &[Recording<T>],
) -> CliResult<(Tensor<T>, Vec<usize>)> {
    let h = embed(encoder, segments, EVAL_BATCH)?;
    let labels = segment_labels(segments)?;
    if cfg.eval.rhythm_pool {
        let groups = rhythm_groups(segments);
        let pooled = pool_groups(&h, &groups)?;
        return Ok((pooled, groups.iter().map(|g| labels[g[0]]).collect()));
    }
    if cfg.eval.rr_features {
        let (x, kept) = append_rr_features(&h, segments, recordings)?;
        return Ok((x, kept.iter().map(|&i| labels[i]).collect()));
    }
    Ok((h, labels))
}

fn score(pred: &[usize], truth: &[usize], n: usize, names: &[String], excluded: &[usize]) -> CliResult<(MetricReport, ConfusionMatrix)> {
    let m = confusion(truth, pred, n)?;
    let m = ConfusionMatrix::with_names(names.to_vec(), m.counts)?;
    Ok((metrics_from_confusion(&m, excluded)?, m))
}

fn write_report(out: &Path, report_name: &str, confusion_name: &str, r: &Report, m: &ConfusionMatrix) -> CliResult<()> {
    write_json(&out.join(report_name), r)?;
    m.write_csv(File::create(out.join(confusion_name))?)?;
    Ok(())
}

fn subject_probe<T: Scalar>(cfg: &ExperimentConfig, data: &Data<T>, encoder: &mut Encoder<T>) -> CliResult<Option<SubjectProbeResult>> {
    let Some(protocol) = cfg.eval.subject_probe else { return Ok(None) };
    let r = subject_id_probe(
        encoder,
        &data.recordings,
        &data.split.train_subject_ids,
        protocol,
        &cfg.train.probe,
        &mut stream(cfg.seed, RNG_SUBJECT),
    )?;
    Ok(Some(r))
}

fn encoder_name(checkpoint: Option<&Path>) -> String {
    checkpoint.map_or_else(|| "random".to_string(), |p| p.display().to_string())
}

fn save_classifier<T: Scalar>(path: &Path, encoder: &Encoder<T>, head: &Linear<T>) -> CliResult<()> {
    let mut ck = Checkpoint::new();
    ck.insert_module("G", encoder);
    ck.insert_module("head", head);
    ck.write(path)?;
    Ok(())
}

/// Linear probe on frozen embeddings. Writes the encoder with the probe
/// folded into a linear head, so `eval` can reuse it.
pub fn probe<T: Scalar>(mut cfg: ExperimentConfig, out: &Path, checkpoint: Option<&Path>) -> CliResult<Report> {
    let data = load_data::<T>(&mut cfg, out)?;
    let (train, test) = labeled_segments(&cfg, &data)?;
    let (n, names) = resolve_classes(&mut cfg, &[&train, &test])?;
    echo_run("probe", &cfg, &data, out, checkpoint, true)?;
    let mut g = load_encoder::<T>(&cfg, checkpoint)?;
    let (xtr, ytr) = features(&cfg, &mut g, &train, &data.recordings)?;
    let (xte, yte) = features(&cfg, &mut g, &test, &data.recordings)?;
    let p = fit_probe(&xtr, &ytr, n, &cfg.train.probe, &mut stream(cfg.seed, RNG_PROBE))?;
    let (metrics, m) = score(&p.predict(&xte)?, &yte, n, &names, &cfg.eval.excluded_classes)?;
    let report = Report {
        command: "probe".into(),
        encoder: encoder_name(checkpoint),
        n_classes: n,
        n_train: ytr.len(),
        n_test: yte.len(),
        train_accuracy: accuracy(&p.predict(&xtr)?, &ytr),
        metrics,
        confusion: m.counts.clone(),
        subject_probe: subject_probe(&cfg, &data, &mut g)?,
    };
    write_report(out, REPORT_FILE, CONFUSION_FILE, &report, &m)?;
    save_classifier(&out.join(CHECKPOINT_FILE), &g, &p.folded())?;
    Ok(report)
}

/// Pre- and post-fine-tuning reports.
#[derive(Debug, Clone, Serialize)]
pub struct FinetuneReports {
    pub before: Report,
    pub after: Report,
}

fn classifier_report<T: Scalar>(
    cmd: &str,
    encoder: String,
    clf: &mut Classifier<T>,
    train: &[Segment<T>],
    test: &[Segment<T>],
    n: usize,
    names: &[String],
    excluded: &[usize],
) -> CliResult<(Report, ConfusionMatrix)> {
    let (ytr, yte) = (segment_labels(train)?, segment_labels(test)?);
    let train_accuracy = accuracy(&clf.predict(train, EVAL_BATCH)?, &ytr);
    let (metrics, m) = score(&clf.predict(test, EVAL_BATCH)?, &yte, n, names, excluded)?;
    let r = Report {
        command: cmd.into(),
        encoder,
        n_classes: n,
        n_train: ytr.len(),
        n_test: yte.len(),
        train_accuracy,
        metrics,
        confusion: m.counts.clone(),
        subject_probe: None,
    };
    Ok((r, m))
}

/// Starts from a linear probe on the frozen encoder (reported as
/// `report_pre.json`), then trains encoder and head end to end.
pub fn finetune_cmd<T: Scalar>(mut cfg: ExperimentConfig, out: &Path, checkpoint: Option<&Path>) -> CliResult<FinetuneReports> {
    if cfg.eval.rhythm_pool || cfg.eval.rr_features {
        return Err(CliError::config("eval", "fine-tuning works on plain window embeddings; disable rhythm_pool and rr_features"));
    }
    let data = load_data::<T>(&mut cfg, out)?;
    let (train, test) = labeled_segments(&cfg, &data)?;
    let (n, names) = resolve_classes(&mut cfg, &[&train, &test])?;
    echo_run("finetune", &cfg, &data, out, checkpoint, true)?;
    let mut g = load_encoder::<T>(&cfg, checkpoint)?;
    let (xtr, ytr) = features(&cfg, &mut g, &train, &data.recordings)?;
    let p = fit_probe(&xtr, &ytr, n, &cfg.train.probe, &mut stream(cfg.seed, RNG_PROBE))?;
    let mut clf = Classifier::new(g, p.folded())?;
    let excluded = cfg.eval.excluded_classes.clone();
    let (before, m) = classifier_report("finetune", encoder_name(checkpoint), &mut clf, &train, &test, n, &names, &excluded)?;
    write_report(out, REPORT_PRE_FILE, CONFUSION_PRE_FILE, &before, &m)?;
    let ctx = data.context();
    let augment = cfg.train.finetune.augment.then_some((&cfg.augment, &ctx));
    finetune(&mut clf, &train, &cfg.train.finetune, augment, &mut stream(cfg.seed, RNG_FINETUNE))?;
    let (after, m) = classifier_report("finetune", encoder_name(checkpoint), &mut clf, &train, &test, n, &names, &excluded)?;
    write_report(out, REPORT_FILE, CONFUSION_FILE, &after, &m)?;
    save_classifier(&out.join(CHECKPOINT_FILE), &clf.encoder, &clf.head)?;
    Ok(FinetuneReports { before, after })
}

/// Scores a checkpoint written by `probe` or `finetune` on the test split.
pub fn eval<T: Scalar>(mut cfg: ExperimentConfig, out: &Path, checkpoint: &Path) -> CliResult<Report> {
    let data = load_data::<T>(&mut cfg, out)?;
    let (train, test) = labeled_segments(&cfg, &data)?;
    let (n, names) = resolve_classes(&mut cfg, &[&train, &test])?;
    echo_run("eval", &cfg, &data, out, Some(checkpoint), false)?;
    let ck = read_checkpoint(checkpoint)?;
    let mut g = Encoder::<T>::new(&cfg.model, &mut stream(cfg.seed, RNG_INIT))?;
    ck.load_module("G", &mut g)?;
    let w: Tensor<T> = ck.get("head.weight")?;
    if w.ndim() != 2 || w.dim(0) != n {
        return Err(sassl::Error::Checkpoint(format!("head.weight has shape {:?}, expected [{n}, features]", w.shape())).into());
    }
    let mut head = Linear::<T>::zeros(w.dim(1), n);
    ck.load_module("head", &mut head)?;
    let (xtr, ytr) = features(&cfg, &mut g, &train, &data.recordings)?;
    let (xte, yte) = features(&cfg, &mut g, &test, &data.recordings)?;
    let predict = |x: &Tensor<T>| -> CliResult<Vec<usize>> { Ok(argmax_rows(&head.apply(x)?)) };
    let (metrics, m) = score(&predict(&xte)?, &yte, n, &names, &cfg.eval.excluded_classes)?;
    let report = Report {
        command: "eval".into(),
        encoder: checkpoint.display().to_string(),
        n_classes: n,
        n_train: ytr.len(),
        n_test: yte.len(),
        train_accuracy: accuracy(&predict(&xtr)?, &ytr),
        metrics,
        confusion: m.counts.clone(),
        subject_probe: subject_probe(&cfg, &data, &mut g)?,
    };
    write_report(out, REPORT_FILE, CONFUSION_FILE, &report, &m)?;
    Ok(report)
}

/// Which stretch of which recording to preview.
#[derive(Debug, Clone, Copy)]
pub struct PreviewSpec {
    pub recording: usize,
    pub start: usize,
    pub length: Option<usize>,
}

/// Writes `original.csv` and one `NN_<transform>.csv` per pipeline step,
/// each step applied unconditionally to the original. Returns the files.
pub fn augment_preview<T: Scalar>(mut cfg: ExperimentConfig, out: &Path, spec: PreviewSpec) -> CliResult<Vec<PathBuf>> {
    let data = load_data::<T>(&mut cfg, out)?;
    echo_run("augment-preview", &cfg, &data, out, None, false)?;
    let rec = data
        .recordings
        .get(spec.recording)
        .ok_or_else(|| CliError::Usage(format!("recording {} not in a dataset of {}", spec.recording, data.recordings.len())))?;
    let length = spec.length.unwrap_or(cfg.model.window);
    let original = extract_window(rec, spec.recording, spec.start, length, None)?;
    let ctx = data.context();
    let mut files = vec![out.join("original.csv")];
    write_segment_csv(&files[0], &original, &rec.channel_names, data.fs)?;
    for (i, step) in cfg.augment.steps.iter().enumerate() {
        let seg = apply_transform(&original, &step.transform, &ctx, &mut stream(cfg.seed, RNG_PREVIEW + 1000 * i as u64))?;
        let path = out.join(format!("{i:02}_{}.csv", step.transform.name()));
        write_segment_csv(&path, &seg, &rec.channel_names, data.fs)?;
        files.push(path);
    }
    Ok(files)
}

fn write_segment_csv<T: Scalar>(path: &Path, s: &Segment<T>, names: &[String], fs: f64) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let header: Vec<&str> = std::iter::once("time").chain(names.iter().map(String::as_str)).collect();
    w.write_record(&header).map_err(csv_err)?;
    for t in 0..s.len() {
        let mut row = vec![format!("{}", (s.origin.start + t) as f64 / fs)];
        row.extend((0..s.channels()).map(|c| format!("{}", s.channel(c)[t].to_f64_lossy())));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}
