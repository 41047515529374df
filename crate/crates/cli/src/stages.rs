//! One function per subcommand. Each returns a JSON summary for stdout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use robkit_core::annotate::{apply_split, run_annotation, stratified_split, Instance};
use robkit_core::baselines::{BaselineBundle, LossKind};
use robkit_core::corpus::{ingest_dir, Article};
use robkit_core::dataset::{read_instances, read_jsonl, write_jsonl};
use robkit_core::eval::{build_report, Prediction};
use robkit_core::index::{build_index, TfidfIndex};
use robkit_core::reviews::{parse_review_table, DomainRules, Reject, SupportRecord};
use robkit_core::text::TokenizerConfig;
use robkit_core::tinymodel::data::DECISION_THRESHOLD;
use robkit_core::tinymodel::{
    build_vocab, cls_examples, ext_examples, gen_examples, mean_loss, positive_weight, predict_generative,
    read_checkpoint, train, ClassifierModel, ExtPipeline, ExtractiveModel, GenerativeModel,
};
use robkit_llm::{LlmRunConfig, UreqTransport};
use serde_json::{json, Value};

use crate::config::{RunConfig, TinyTask};
use crate::error::CliError;
use crate::layout::{self, read_meta, record_stage, require, write_json, write_meta, write_text, Layout, Meta};

pub const EXT_CLS_NAME: &str = "tiny-ext-cls";

pub struct Ctx {
    pub cfg: RunConfig,
    pub hash: String,
    pub layout: Layout,
}

impl Ctx {
    pub fn new(cfg: RunConfig) -> Self {
        let hash = cfg.hash();
        let layout = Layout::new(&cfg.paths.run_dir);
        Ctx { cfg, hash, layout }
    }

    fn meta(&self, stage: &str) -> Meta {
        Meta {
            stage: stage.to_string(),
            config_hash: self.hash.clone(),
            model_config_hash: None,
        }
    }

    fn write_jsonl<T: serde::Serialize>(&self, stage: &str, path: &Path, items: &[T]) -> Result<(), CliError> {
        write_jsonl(path, items)?;
        write_meta(path, &self.meta(stage))
    }

    fn finish(&self, stage: &str, outputs: &[PathBuf]) -> Result<(), CliError> {
        write_json(&self.layout.root.join("config.json"), &self.cfg)?;
        record_stage(&self.layout, &self.hash, stage, outputs)
    }
}

fn pick(path: Option<&Path>, default: PathBuf) -> PathBuf {
    path.map(Path::to_path_buf).unwrap_or(default)
}

/// Articles from an ingest output (`.jsonl`) or straight from a directory.
pub fn load_articles(path: &Path) -> Result<Vec<Article>, CliError> {
    require(path, "articles")?;
    let articles = if path.is_dir() {
        ingest_dir(path)?.0
    } else {
        read_jsonl(path)?
    };
    if articles.is_empty() {
        return Err(CliError::Validation(format!("{}: no articles", path.display())));
    }
    Ok(articles)
}

/// Parse every `.json` review file in a directory (sorted by name), or a
/// single file.
pub fn parse_review_files(path: &Path) -> Result<(Vec<SupportRecord>, Vec<Reject>, usize), CliError> {
    require(path, "reviews")?;
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| CliError::from_io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("json")))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(CliError::Validation(format!("{}: no review files", path.display())));
    }
    let rules = DomainRules::default();
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for f in &files {
        let doc = fs::read_to_string(f).map_err(|e| CliError::from_io(f, e))?;
        let parsed = parse_review_table(&doc, &rules).map_err(|e| CliError::Validation(format!("{}: {e}", f.display())))?;
        records.extend(parsed.records);
        rejects.extend(parsed.rejects);
    }
    Ok((records, rejects, files.len()))
}

/// Records from a `parse-reviews` output, with the sibling rejects file, or
/// parsed from raw review JSON.
fn load_records(path: &Path) -> Result<(Vec<SupportRecord>, Vec<Reject>), CliError> {
    require(path, "review records")?;
    if path.is_file() && path.extension().is_some_and(|x| x == "jsonl") {
        let records = read_jsonl(path)?;
        let sibling = path.with_file_name("review_rejects.jsonl");
        let rejects = if sibling.exists() { read_jsonl(&sibling)? } else { Vec::new() };
        Ok((records, rejects))
    } else {
        let (records, rejects, _) = parse_review_files(path)?;
        Ok((records, rejects))
    }
}

fn load_instances(path: &Path, what: &str) -> Result<Vec<Instance>, CliError> {
    require(path, what)?;
    let instances = read_instances(path)?;
    if instances.is_empty() {
        return Err(CliError::Validation(format!("{}: no instances", path.display())));
    }
    Ok(instances)
}

pub fn ingest(ctx: &Ctx, articles: Option<&Path>, out: Option<&Path>) -> Result<Value, CliError> {
    let dir = pick(articles, ctx.cfg.paths.articles.clone());
    require(&dir, "articles directory")?;
    let (articles, stats) = ingest_dir(&dir)?;
    if articles.is_empty() {
        return Err(CliError::Validation(format!("{}: no article files", dir.display())));
    }
    let out = pick(out, ctx.layout.articles());
    ctx.write_jsonl("ingest", &out, &articles)?;
    let stats_path = ctx.layout.ingest_stats();
    write_json(&stats_path, &stats)?;
    ctx.finish("ingest", &[out.clone(), stats_path])?;
    Ok(json!({"stage": "ingest", "out": out, "stats": stats}))
}

pub fn parse_reviews(ctx: &Ctx, reviews: Option<&Path>, out: Option<&Path>) -> Result<Value, CliError> {
    let src = pick(reviews, ctx.cfg.paths.reviews.clone());
    let (records, rejects, files) = parse_review_files(&src)?;
    let out = pick(out, ctx.layout.records());
    let rejects_path = out.with_file_name("review_rejects.jsonl");
    ctx.write_jsonl("parse-reviews", &out, &records)?;
    ctx.write_jsonl("parse-reviews", &rejects_path, &rejects)?;
    ctx.finish("parse-reviews", &[out.clone(), rejects_path])?;
    Ok(json!({"stage": "parse-reviews", "files": files, "records": records.len(), "rejects": rejects.len(), "out": out}))
}

pub fn index_build(ctx: &Ctx, articles: Option<&Path>, out: Option<&Path>) -> Result<Value, CliError> {
    let articles = load_articles(&pick(articles, ctx.layout.articles()))?;
    let index = build_index(&articles, TokenizerConfig::default())?;
    let out = pick(out, ctx.layout.index());
    layout::ensure_parent(&out)?;
    index.save(&out, Some(&ctx.hash))?;
    ctx.finish("index", &[out.clone(), TfidfIndex::sidecar_path(&out)])?;
    Ok(json!({"stage": "index", "out": out, "stats": index.stats()}))
}

pub fn index_stats(ctx: &Ctx, index: Option<&Path>) -> Result<Value, CliError> {
    let path = pick(index, ctx.layout.index());
    require(&path, "index")?;
    let index = TfidfIndex::load(&path)?;
    let s = index.stats();
    Ok(json!({"n": s.sentences, "vocabulary": s.vocabulary, "nonzeros": s.nonzeros, "density": s.density}))
}

pub fn annotate(
    ctx: &Ctx,
    records: Option<&Path>,
    articles: Option<&Path>,
    index: Option<&Path>,
    out: Option<&Path>,
) -> Result<Value, CliError> {
    let (records, upstream) = load_records(&pick(records, ctx.layout.records()))?;
    let articles = load_articles(&pick(articles, ctx.layout.articles()))?;
    let index_path = pick(index, ctx.layout.index());
    require(&index_path, "index")?;
    let index = TfidfIndex::load(&index_path)?;
    let output = run_annotation(&records, &upstream, &articles, &index, &ctx.cfg.annotate)?;
    if let Some(bad) = output.instances.iter().find(|i| !i.slice_ok()) {
        return Err(CliError::Internal(format!("instance {} fails the answer slice check", bad.id)));
    }

    let dir = pick(out, ctx.layout.dataset());
    let instances_path = dir.join("instances.jsonl");
    let rejects_path = dir.join("rejects.jsonl");
    let stats_path = dir.join("annotation_stats.json");
    ctx.write_jsonl("annotate", &instances_path, &output.instances)?;
    ctx.write_jsonl("annotate", &rejects_path, &output.rejects)?;
    write_json(&stats_path, &output.stats)?;
    ctx.finish("annotate", &[instances_path.clone(), rejects_path, stats_path])?;
    Ok(json!({"stage": "annotate", "out": instances_path, "stats": output.stats}))
}

pub fn split(ctx: &Ctx, dataset: Option<&Path>, out: Option<&Path>) -> Result<Value, CliError> {
    let instances = load_instances(&pick(dataset, ctx.layout.instances()), "dataset")?;
    let manifest = stratified_split(&instances, ctx.cfg.split.test_fraction, ctx.cfg.seed)?;
    let (train, test) = apply_split(&instances, &manifest);
    let dir = pick(out, ctx.layout.dataset());
    let (split_path, train_path, test_path) = (dir.join("split.json"), dir.join("train.jsonl"), dir.join("test.jsonl"));
    write_json(&split_path, &manifest)?;
    write_meta(&split_path, &ctx.meta("split"))?;
    ctx.write_jsonl("split", &train_path, &train)?;
    ctx.write_jsonl("split", &test_path, &test)?;
    ctx.finish("split", &[split_path, train_path.clone(), test_path.clone()])?;
    Ok(json!({"stage": "split", "train": train.len(), "test": test.len(), "per_bias_type": manifest.per_bias_type, "warnings": manifest.warnings}))
}

fn run_file(model: &str, run: usize) -> String {
    format!("{model}.run{run}")
}

pub fn train_baseline(
    ctx: &Ctx,
    kind: LossKind,
    train_path: Option<&Path>,
    per_bias_type: bool,
    out: Option<&Path>,
) -> Result<Value, CliError> {
    let instances = load_instances(&pick(train_path, ctx.layout.train()), "training split")?;
    let dir = pick(out, ctx.layout.models());
    let mut outputs = Vec::new();
    let mut section = ctx.cfg.baseline.clone();
    section.per_bias_type |= per_bias_type;
    for run in 0..section.runs {
        let config = section.config(kind, ctx.cfg.seed + run as u64);
        let bundle = BaselineBundle::train(&instances, &config)?;
        let path = dir.join(format!("{}.bin", run_file(&bundle.model_name(), run)));
        layout::ensure_parent(&path)?;
        bundle.save(&path, Some(&ctx.hash))?;
        outputs.push(path);
    }
    ctx.finish(&format!("train-baseline-{}", kind.short_name()), &outputs)?;
    Ok(json!({"stage": "train-baseline", "kind": kind.short_name(), "instances": instances.len(), "models": outputs}))
}

pub fn train_tiny(
    ctx: &Ctx,
    task: TinyTask,
    train_path: Option<&Path>,
    dev_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<Value, CliError> {
    let instances = load_instances(&pick(train_path, ctx.layout.train()), "training split")?;
    let dev = dev_path.map(|p| load_instances(p, "dev split")).transpose()?;
    let section = &ctx.cfg.tiny;
    let vocab = build_vocab(&instances, section.vocab_cap)?;
    let dir = pick(out, ctx.layout.models());
    fs::create_dir_all(&dir).map_err(|e| CliError::from_io(&dir, e))?;
    let mut outputs = Vec::new();
    let mut runs = Vec::new();
    for run in 0..section.runs {
        let seed = ctx.cfg.seed + run as u64;
        let mut model_cfg = section.model.clone();
        model_cfg.seed = seed;
        let mut train_cfg = section.train.clone();
        train_cfg.seed = seed;
        let log_epoch = |name: &'static str| move |epoch: usize, loss: f64| log::info!("{name} run {run} epoch {epoch}: loss {loss:.5}");
        match task {
            TinyTask::Ext => {
                let (exs, skipped) = ext_examples(&instances, &vocab, model_cfg.max_len)?;
                let mut ext = ExtractiveModel::new(model_cfg.clone(), vocab.clone());
                let ext_report = train(&mut ext, &exs, &train_cfg, log_epoch("ext"))?;
                let cls_exs = cls_examples(&instances, &vocab, model_cfg.max_len)?;
                let mut cls = ClassifierModel::new(model_cfg.clone(), vocab.clone());
                let cls_report = train(&mut cls, &cls_exs, &train_cfg, log_epoch("cls"))?;
                let dev_loss = match &dev {
                    Some(d) => Some(mean_loss(&ext, &ext_examples(d, &vocab, model_cfg.max_len)?.0)?),
                    None => None,
                };
                let ext_path = dir.join(format!("{}.bin", run_file(robkit_core::tinymodel::data::EXT_MODEL_NAME, run)));
                let cls_path = dir.join(format!("{}.bin", run_file(EXT_CLS_NAME, run)));
                ext.save(&ext_path, Some(&train_cfg), Some(&ctx.hash))?;
                cls.save(&cls_path, Some(&train_cfg), Some(&ctx.hash))?;
                outputs.extend([ext_path, cls_path]);
                runs.push(json!({
                    "run": run, "skipped": skipped,
                    "span_loss": ext_report.epoch_losses.last(), "cls_loss": cls_report.epoch_losses.last(),
                    "dev_span_loss": dev_loss,
                }));
            }
            TinyTask::Gen => {
                let exs = gen_examples(&instances, &vocab, &model_cfg)?;
                let mut gen = GenerativeModel::new(model_cfg.clone(), vocab.clone(), positive_weight(&instances));
                let report = train(&mut gen, &exs, &train_cfg, log_epoch("gen"))?;
                let dev_loss = match &dev {
                    Some(d) => Some(mean_loss(&gen, &gen_examples(d, &vocab, &model_cfg)?)?),
                    None => None,
                };
                let path = dir.join(format!("{}.bin", run_file(robkit_core::tinymodel::data::GEN_MODEL_NAME, run)));
                gen.save(&path, Some(&train_cfg), Some(&ctx.hash))?;
                outputs.push(path);
                runs.push(json!({"run": run, "loss": report.epoch_losses.last(), "dev_loss": dev_loss}));
            }
        }
    }
    let task_name = match task {
        TinyTask::Ext => "ext",
        TinyTask::Gen => "gen",
    };
    ctx.finish(&format!("train-tiny-{task_name}"), &outputs)?;
    Ok(json!({"stage": "train-tiny", "task": task_name, "vocab": vocab.len(), "runs": runs, "models": outputs}))
}

/// A model file in the models directory, named `<model>.run<k>.bin`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ModelFile {
    pub model: String,
    pub run: u64,
    pub path: PathBuf,
}

pub fn parse_model_file(path: &Path) -> Option<ModelFile> {
    let name = path.file_name()?.to_str()?.strip_suffix(".bin")?;
    let (model, run) = name.rsplit_once(".run")?;
    Some(ModelFile {
        model: model.to_string(),
        run: run.parse().ok()?,
        path: path.to_path_buf(),
    })
}

fn list_model_files(dir: &Path) -> Result<Vec<ModelFile>, CliError> {
    require(dir, "models directory")?;
    let mut files: Vec<ModelFile> = fs::read_dir(dir)
        .map_err(|e| CliError::from_io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| parse_model_file(&p))
        .collect();
    files.sort();
    Ok(files)
}

fn checkpoint_hash(path: &Path) -> Result<Option<String>, CliError> {
    Ok(read_checkpoint(path)?.0.config_hash)
}

pub fn eval(ctx: &Ctx, dataset: Option<&Path>, models: Option<&Path>, out: Option<&Path>) -> Result<Value, CliError> {
    let instances = load_instances(&pick(dataset, ctx.layout.test()), "evaluation dataset")?;
    let files = list_model_files(&pick(models, ctx.layout.models()))?;
    let out_dir = pick(out, ctx.layout.predictions());
    let mut outputs = Vec::new();
    let mut written = Vec::new();
    for f in &files {
        let (preds, model_hash) = if f.model.starts_with("tfidf-") {
            let bundle = BaselineBundle::load(&f.path)?;
            (bundle.predict(&instances, DECISION_THRESHOLD, f.run)?, BaselineBundle::read_config_hash(&f.path)?)
        } else if f.model == robkit_core::tinymodel::data::EXT_MODEL_NAME {
            let cls_path = f.path.with_file_name(format!("{}.bin", run_file(EXT_CLS_NAME, f.run as usize)));
            require(&cls_path, "answer classifier for the extractive model")?;
            let pipeline = ExtPipeline {
                extractor: ExtractiveModel::load(&f.path)?,
                classifier: ClassifierModel::load(&cls_path)?,
            };
            (pipeline.predict(&instances, f.run)?, checkpoint_hash(&f.path)?)
        } else if f.model == robkit_core::tinymodel::data::GEN_MODEL_NAME {
            let model = GenerativeModel::load(&f.path)?;
            (predict_generative(&model, &instances, f.run)?, checkpoint_hash(&f.path)?)
        } else {
            if f.model != EXT_CLS_NAME {
                log::warn!("skipping unrecognized model file {}", f.path.display());
            }
            continue;
        };
        if model_hash.as_deref().is_some_and(|h| h != ctx.hash) {
            log::warn!("{} was trained under a different configuration", f.path.display());
        }
        let Some(first) = preds.first() else { continue };
        let path = out_dir.join(format!("{}.jsonl", run_file(&first.model, f.run as usize)));
        write_jsonl(&path, &preds)?;
        write_meta(
            &path,
            &Meta {
                model_config_hash: model_hash,
                ..ctx.meta("eval")
            },
        )?;
        written.push(json!({"model": first.model, "run": f.run, "predictions": preds.len()}));
        outputs.push(path);
    }
    if outputs.is_empty() {
        return Err(CliError::Validation("no trained models found to evaluate".into()));
    }
    ctx.finish("eval", &outputs)?;
    Ok(json!({"stage": "eval", "instances": instances.len(), "models": written}))
}

pub fn llm_eval(
    ctx: &Ctx,
    dataset: Option<&Path>,
    train_path: Option<&Path>,
    shots: Option<usize>,
    replay: Option<&Path>,
    out: Option<&Path>,
) -> Result<Value, CliError> {
    let out_dir = pick(out, ctx.layout.predictions());
    let (output, config_hash, log_path) = match replay {
        Some(log) => {
            require(log, "LLM log")?;
            let output = robkit_llm::read_log(log)?;
            let hash = output.header.config_hash.clone().unwrap_or_else(|| ctx.hash.clone());
            (output, hash, log.to_path_buf())
        }
        None => {
            let section = ctx.cfg.llm.as_ref().ok_or_else(|| {
                CliError::Validation("no [llm] endpoint section in the configuration".into())
            })?;
            let test = load_instances(&pick(dataset, ctx.layout.test()), "evaluation dataset")?;
            let train_set = load_instances(&pick(train_path, ctx.layout.train()), "training split")?;
            let run_cfg = LlmRunConfig {
                endpoint: section.endpoint.clone(),
                shots: shots.unwrap_or(section.shots),
                seed: ctx.cfg.seed,
            };
            let transport = UreqTransport::new(run_cfg.endpoint.timeout());
            let mut output = robkit_llm::run(&test, &train_set, &run_cfg, &transport)?;
            output.header.config_hash = Some(ctx.hash.clone());
            let log = ctx.layout.llm_log();
            layout::ensure_parent(&log)?;
            robkit_llm::write_log(&log, &output)?;
            (output, ctx.hash.clone(), log)
        }
    };
    let model = format!("llm-{}shot", output.header.shots);
    let verdicts = robkit_llm::replay(&output);
    let preds: Vec<Prediction> = robkit_llm::predictions(&verdicts, &model, 0);
    let path = out_dir.join(format!("{}.jsonl", run_file(&model, 0)));
    write_jsonl(&path, &preds)?;
    write_meta(
        &path,
        &Meta {
            stage: "llm-eval".into(),
            config_hash,
            model_config_hash: None,
        },
    )?;
    ctx.finish("llm-eval", &[log_path.clone(), path.clone()])?;
    Ok(json!({
        "stage": "llm-eval", "model": model, "instances": preds.len(),
        "failed": output.failures(),
        "unparsed": verdicts.iter().filter(|(_, v)| !v.parse_ok).count(),
        "log": log_path,
    }))
}

/// Distinct config hashes across the artifacts feeding a report, with the
/// files that carry each.
fn collect_hashes(test_path: &Path, pred_files: &[PathBuf]) -> Result<BTreeMap<String, Vec<String>>, CliError> {
    let mut hashes: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut add = |h: &str, p: &Path| hashes.entry(h.to_string()).or_default().push(p.display().to_string());
    if let Some(m) = read_meta(test_path)? {
        add(&m.config_hash, test_path);
    }
    for p in pred_files {
        if let Some(m) = read_meta(p)? {
            add(&m.config_hash, p);
            if let Some(h) = &m.model_config_hash {
                add(h, p);
            }
        }
    }
    Ok(hashes)
}

pub fn report(
    ctx: &Ctx,
    dataset: Option<&Path>,
    predictions: Option<&Path>,
    out: Option<&Path>,
    force: bool,
) -> Result<Value, CliError> {
    let test_path = pick(dataset, ctx.layout.test());
    let instances = load_instances(&test_path, "evaluation dataset")?;
    let pred_dir = pick(predictions, ctx.layout.predictions());
    require(&pred_dir, "predictions directory")?;
    let mut pred_files: Vec<PathBuf> = fs::read_dir(&pred_dir)
        .map_err(|e| CliError::from_io(&pred_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    pred_files.sort();
    if pred_files.is_empty() {
        return Err(CliError::Validation(format!("{}: no prediction files", pred_dir.display())));
    }

    let hashes = collect_hashes(&test_path, &pred_files)?;
    if hashes.len() > 1 {
        let detail = hashes
            .iter()
            .map(|(h, files)| format!("{}: {}", &h[..h.len().min(12)], files.join(", ")))
            .collect::<Vec<_>>()
            .join("; ");
        if !force {
            return Err(CliError::Validation(format!(
                "artifacts come from different configurations ({detail}); rerun or pass --force"
            )));
        }
        log::warn!("mixing configurations: {detail}");
    }

    let mut preds: Vec<Prediction> = Vec::new();
    for p in &pred_files {
        preds.extend(read_jsonl::<Prediction>(p)?);
    }
    let report = build_report(&preds, &instances)?;

    let dir = pick(out, ctx.layout.reports());
    let files = [
        (dir.join("report.csv"), report.to_csv()),
        (dir.join("roc_points.csv"), report.roc_csv()),
        (dir.join("significance.csv"), report.significance_csv()),
        (dir.join("report.md"), report.to_markdown()),
    ];
    let mut outputs = Vec::new();
    for (path, text) in &files {
        write_text(path, text)?;
        outputs.push(path.clone());
    }
    let json_path = dir.join("report.json");
    write_json(&json_path, &report)?;
    outputs.push(json_path.clone());
    let hash = if hashes.len() == 1 { hashes.keys().next().cloned() } else { None };
    for p in &outputs {
        write_meta(
            p,
            &Meta {
                stage: "report".into(),
                config_hash: hash.clone().unwrap_or_else(|| "mixed".into()),
                model_config_hash: None,
            },
        )?;
    }
    ctx.finish("report", &outputs)?;
    let overall: Vec<Value> = report
        .models
        .iter()
        .map(|m| {
            let c = &m.overall().classification;
            json!({"model": m.model, "n": m.overall().n, "macro_f1": c.macro_f1, "roc_auc": c.roc_auc})
        })
        .collect();
    Ok(json!({"stage": "report", "out": json_path, "models": overall, "mixed_configs": hashes.len() > 1}))
}

/// Every stage in order on the configured inputs.
pub fn pipeline(ctx: &Ctx) -> Result<Value, CliError> {
    let mut stages = vec![
        ingest(ctx, None, None)?,
        parse_reviews(ctx, None, None)?,
        index_build(ctx, None, None)?,
        annotate(ctx, None, None, None, None)?,
        split(ctx, None, None)?,
    ];
    for kind in &ctx.cfg.baseline.kinds {
        stages.push(train_baseline(ctx, *kind, None, false, None)?);
    }
    for task in &ctx.cfg.tiny.tasks {
        stages.push(train_tiny(ctx, *task, None, None, None)?);
    }
    stages.push(eval(ctx, None, None, None)?);
    if ctx.cfg.llm.is_some() {
        stages.push(llm_eval(ctx, None, None, None, None, None)?);
    }
    stages.push(report(ctx, None, None, None, false)?);
    Ok(json!({"stage": "pipeline", "run_dir": ctx.layout.root, "config_hash": ctx.hash, "stages": stages}))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_file_names() {
        let f = parse_model_file(Path::new("m/tfidf-lr.run2.bin")).unwrap();
        assert_eq!((f.model.as_str(), f.run), ("tfidf-lr", 2));
        assert_eq!(parse_model_file(Path::new("m/tiny-ext-cls.run0.bin")).unwrap().model, "tiny-ext-cls");
        assert!(parse_model_file(Path::new("m/index.bin")).is_none());
        assert!(parse_model_file(Path::new("m/x.runa.bin")).is_none());
    }
}
