//! Acceptance gate. Each criterion prints one PASS, FAIL or SKIPPED line;
//! any FAIL makes the process exit nonzero.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robkit_core::annotate::{
    apply_split, run_annotation, stratified_split, AnnotationConfig, AnnotationOutput, Instance, Label, Provenance,
};
use robkit_core::baselines::{train_logreg, train_svm, BaselineBundle, BaselineConfig, FeatureMatrix, LinearModel, LossKind, SgdConfig};
use robkit_core::corpus::Article;
use robkit_core::dataset::{load_published, published_dir_from_env, read_instances, read_jsonl, write_jsonl};
use robkit_core::eval::{build_report, macro_prf, roc_auc, span_f1_em, welch_t_test, EvalReport, Prediction};
use robkit_core::index::build_index;
use robkit_core::reviews::{BiasType, Judgement, SupportRecord};
use robkit_core::text::TokenizerConfig;
use robkit_core::tinymodel::gradcheck::{gradient_suite, GradTarget};
use robkit_core::tinymodel::losses::{loss_bce, loss_ce, loss_mrc};
use robkit_core::tinymodel::synthetic::{generation_task, span_task};
use robkit_core::tinymodel::*;
use robkit_cli::stages::{load_articles, parse_review_files};

enum Outcome {
    Pass(String),
    Fail(String),
    Skipped(String),
}

type Check = fn() -> Outcome;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn toy_dir() -> PathBuf {
    workspace().join("data/toy")
}

// ---------------------------------------------------------------- 1

fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi && !yj {
                pairs += 1.0;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

/// Labels and predictions realizing a confusion table `(tp, fp, fn, tn)`.
fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> (Vec<bool>, Vec<bool>) {
    let mut y = Vec::new();
    let mut p = Vec::new();
    for (n, yi, pi) in [(tp, true, true), (fp, false, true), (fn_, true, false), (tn, false, false)] {
        y.extend(std::iter::repeat_n(yi, n));
        p.extend(std::iter::repeat_n(pi, n));
    }
    (y, p)
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut problems = 0;
    while problems < 1000 {
        let n = rng.random_range(2..=50);
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
            continue;
        }
        // half the problems use a coarse grid so ties are common
        let coarse = problems % 2 == 0;
        let scores: Vec<f64> = (0..n)
            .map(|_| if coarse { f64::from(rng.random_range(0..5u8)) / 4.0 } else { rng.random_range(-3.0..3.0) })
            .collect();
        worst = worst.max((roc_auc(&scores, &labels).unwrap() - pairwise_auc(&scores, &labels)).abs());
        problems += 1;
    }
    if worst > 1e-12 {
        return Outcome::Fail(format!("AUC differs from pairwise count by {worst:e}"));
    }

    // (tp, fp, fn, tn) -> macro precision, recall, F1, worked by hand
    let prf_table: [((usize, usize, usize, usize), (f64, f64, f64)); 11] = [
        ((1, 0, 0, 1), (1.0, 1.0, 1.0)),
        ((0, 1, 1, 0), (0.0, 0.0, 0.0)),
        ((2, 1, 1, 2), (2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0)),
        ((3, 1, 0, 0), (3.0 / 8.0, 0.5, 3.0 / 7.0)),
        ((1, 0, 3, 4), (11.0 / 14.0, 5.0 / 8.0, 31.0 / 55.0)),
        ((0, 0, 0, 5), (0.5, 0.5, 0.5)),
        ((5, 5, 5, 5), (0.5, 0.5, 0.5)),
        ((4, 2, 1, 3), (17.0 / 24.0, 7.0 / 10.0, 23.0 / 33.0)),
        ((0, 3, 0, 1), (0.5, 1.0 / 8.0, 0.2)),
        ((2, 0, 0, 0), (0.5, 0.5, 0.5)),
        ((6, 1, 2, 1), (25.0 / 42.0, 5.0 / 8.0, 3.0 / 5.0)),
    ];
    for ((tp, fp, fn_, tn), (p, r, f)) in prf_table {
        let (y, pred) = from_counts(tp, fp, fn_, tn);
        let m = macro_prf(&y, &pred).unwrap();
        if (m.precision - p).abs() > 1e-12 || (m.recall - r).abs() > 1e-12 || (m.macro_f1 - f).abs() > 1e-12 {
            return Outcome::Fail(format!("macro_prf {:?}: got ({}, {}, {}), want ({p}, {r}, {f})", (tp, fp, fn_, tn), m.precision, m.recall, m.macro_f1));
        }
    }

    let span_table: [(&str, &str, f64, f64); 12] = [
        ("sealed envelopes", "Sealed envelopes.", 1.0, 1.0),
        ("the sealed envelopes", "sealed envelopes", 1.0, 1.0),
        ("sealed opaque envelopes", "sealed envelopes", 0.8, 0.0),
        ("envelopes", "sealed envelopes", 2.0 / 3.0, 0.0),
        ("computer generated", "sealed envelopes", 0.0, 0.0),
        ("", "", 1.0, 1.0),
        ("", "sealed", 0.0, 0.0),
        ("a", "the", 1.0, 1.0),
        ("blind blind blind", "blind", 0.5, 0.0),
        ("open-label trial", "open label trial", 1.0, 1.0),
        ("Patients, were randomised!", "patients were randomized", 2.0 / 3.0, 0.0),
        ("an intention to treat analysis", "intention-to-treat analysis was used", 0.8, 0.0),
    ];
    for (pred, gold, f1, em) in span_table {
        let s = span_f1_em(pred, gold);
        if (s.f1 - f1).abs() > 1e-12 || s.em != em {
            return Outcome::Fail(format!("span_f1_em({pred:?}, {gold:?}) = ({}, {}), want ({f1}, {em})", s.f1, s.em));
        }
    }
    Outcome::Pass(format!(
        "1000 AUC problems (max diff {worst:.1e}), {} macro-PRF cases, {} span cases",
        prf_table.len(),
        span_table.len()
    ))
}

// ---------------------------------------------------------------- 2

fn gradient_checks() -> Outcome {
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for (k, target) in GradTarget::ALL.into_iter().enumerate() {
        let errors = match gradient_suite(target, 20, 1000 + k as u64) {
            Ok(e) => e,
            Err(e) => return Outcome::Fail(format!("{target:?}: {e}")),
        };
        let max = errors.iter().copied().fold(0.0, f64::max);
        worst = worst.max(max);
        lines.push(format!("{target:?} {max:.1e}"));
    }
    ensure(worst < 1e-4, format!("20 configs each, max rel err: {}", lines.join(", ")))
}

// ---------------------------------------------------------------- 3

fn closed_form_anchors() -> Outcome {
    let mut worst = 0.0f64;
    for len in [2usize, 7, 50, 384] {
        let z = vec![0.3; len];
        let l = loss_mrc(&[(z.clone(), z, (0, len - 1))]).unwrap();
        worst = worst.max((l - (len as f64).ln()).abs());
    }
    let ce = loss_ce(&[(vec![1.7, 1.7], 0), (vec![-4.0, -4.0], 1)]).unwrap();
    worst = worst.max((ce - 2f64.ln()).abs());
    let bce = loss_bce(&[(0.0, 0), (0.0, 1)], 1.0).unwrap();
    worst = worst.max((bce - 2f64.ln()).abs());
    ensure(worst < 1e-9, format!("max deviation {worst:.1e}"))
}

// ---------------------------------------------------------------- 4

fn overfit_sanity() -> Outcome {
    let config = TinyConfig { max_len: 64, max_span: 8, max_answer_len: 8, ..Default::default() };
    let train_cfg = TrainConfig { epochs: 200, lr: 5e-3, batch_size: 10, ..Default::default() };

    let data = span_task(50, 17);
    let vocab = build_vocab(&data, 8000).unwrap();
    let (examples, _) = ext_examples(&data, &vocab, config.max_len).unwrap();
    let mut ext = ExtractiveModel::new(config.clone(), vocab);
    train(&mut ext, &examples, &train_cfg, |_, _| {}).unwrap();
    let em = data
        .iter()
        .zip(&examples)
        .map(|(inst, ex)| {
            let pred = ext.predict(&ex.seq).unwrap();
            span_f1_em(&extract_span(&pred, &ex.seq, &inst.context).unwrap_or_default(), &inst.answer_text).em
        })
        .sum::<f64>()
        / data.len() as f64;

    let data = generation_task(50, 23);
    let vocab = build_vocab(&data, 8000).unwrap();
    let examples = gen_examples(&data, &vocab, &config).unwrap();
    let mut gen = GenerativeModel::new(config, vocab, positive_weight(&data));
    train(&mut gen, &examples, &train_cfg, |_, _| {}).unwrap();
    let preds = predict_generative(&gen, &data, 0).unwrap();
    let acc = preds.iter().zip(&data).filter(|(p, i)| p.label == i.label).count() as f64 / data.len() as f64;

    ensure(em >= 0.95 && acc >= 0.95, format!("span EM {em:.2}, generation accuracy {acc:.2} after 200 epochs"))
}

// ---------------------------------------------------------------- 5

fn fuzz_records(rng: &mut ChaCha8Rng, articles: &[Article], n: usize) -> Vec<SupportRecord> {
    let vocab: Vec<String> = articles
        .iter()
        .flat_map(|a| a.text.split_whitespace().map(str::to_string))
        .take(2000)
        .collect();
    (0..n)
        .map(|row| {
            let a = articles.choose(rng).unwrap();
            let s = &a.sentences.choose(rng).unwrap().text;
            let support = match rng.random_range(0..5) {
                0 => s.clone(),
                1 => s.split(' ').filter(|_| rng.random_bool(0.6)).collect::<Vec<_>>().join(" "),
                2 => format!("Quote: \"{s}\" {}", vocab.choose(rng).unwrap()),
                3 => (0..rng.random_range(1..10)).map(|_| vocab.choose(rng).unwrap().as_str()).collect::<Vec<_>>().join(" "),
                _ => [" ", "", "\n"].choose(rng).unwrap().to_string(),
            };
            let pubmed_id = match rng.random_range(0..10) {
                0 => None,
                1 => Some("0".to_string()),
                _ => Some(a.pubmed_id.clone()),
            };
            SupportRecord {
                review_id: "CDFUZZ".into(),
                study_id: format!("S{}", row / 7),
                pubmed_id,
                row,
                bias_type: *BiasType::ALL.choose(rng).unwrap(),
                judgement: *[Judgement::Low, Judgement::High, Judgement::Unclear].choose(rng).unwrap(),
                support_text: support,
                raw_domain_label: "Fuzzed".into(),
            }
        })
        .collect()
}

fn annotation_problems(out: &AnnotationOutput, rows_in: usize, threshold: f64) -> Vec<String> {
    let mut problems = Vec::new();
    let bad_slices = out.instances.iter().filter(|i| !i.slice_ok()).count();
    if bad_slices > 0 {
        problems.push(format!("{bad_slices} slice violations"));
    }
    let low_sim = out.instances.iter().filter(|i| i.provenance.similarity <= threshold).count();
    if low_sim > 0 {
        problems.push(format!("{low_sim} instances at or below threshold"));
    }
    if out.stats.rows_in != rows_in || rows_in != out.instances.len() + out.rejects.len() {
        problems.push(format!("{} rows in, {} instances + {} rejects", rows_in, out.instances.len(), out.rejects.len()));
    }
    problems
}

fn annotation_invariants() -> Outcome {
    let toy = toy_dir();
    let articles = load_articles(&toy.join("articles")).unwrap();
    let (records, upstream, _) = parse_review_files(&toy.join("reviews")).unwrap();
    let index = build_index(&articles, TokenizerConfig::default()).unwrap();
    let config = AnnotationConfig::default();
    let tmp = tempfile::tempdir().unwrap();

    let mut problems = Vec::new();
    let mut summary = Vec::new();
    let mut fuzz_rng = ChaCha8Rng::seed_from_u64(5);
    let fuzzed = fuzz_records(&mut fuzz_rng, &articles, 1000);
    for (name, recs, ups) in [("toy", &records, &upstream), ("fuzz", &fuzzed, &Vec::new())] {
        let rows_in = recs.len() + ups.len();
        let mut bytes = Vec::new();
        for attempt in 0..2 {
            let out = run_annotation(recs, ups, &articles, &index, &config).unwrap();
            problems.extend(annotation_problems(&out, rows_in, config.threshold).into_iter().map(|p| format!("{name}: {p}")));
            let inst_path = tmp.path().join(format!("{name}{attempt}.jsonl"));
            let rej_path = tmp.path().join(format!("{name}{attempt}.rejects.jsonl"));
            write_jsonl(&inst_path, &out.instances).unwrap();
            write_jsonl(&rej_path, &out.rejects).unwrap();
            bytes.push((fs::read(&inst_path).unwrap(), fs::read(&rej_path).unwrap()));
            if attempt == 0 {
                summary.push(format!("{name}: {rows_in} rows, {} instances", out.instances.len()));
            }
        }
        if bytes[0] != bytes[1] {
            problems.push(format!("{name}: rerun output differs"));
        }
    }
    if problems.is_empty() {
        Outcome::Pass(summary.join("; "))
    } else {
        Outcome::Fail(problems.join("; "))
    }
}

// ---------------------------------------------------------------- 6

fn stub_instance(id: String, bias_type: BiasType, label: Label) -> Instance {
    Instance {
        id: id.clone(),
        bias_type,
        question: String::new(),
        context: "x".into(),
        answer_text: "x".into(),
        answer_start: 0,
        label,
        provenance: Provenance {
            review_id: "r".into(),
            study_id: id,
            pubmed_id: "1".into(),
            sentence_index: 0,
            similarity: 1.0,
        },
    }
}

fn split_balance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for d in 0..100 {
        let fraction = rng.random_range(0.05..0.5);
        let instances: Vec<Instance> = BiasType::ALL
            .iter()
            .flat_map(|&b| {
                let n = rng.random_range(2..80);
                (0..n).map(move |i| stub_instance(format!("{b}-{i}"), b, Label::Low)).collect::<Vec<_>>()
            })
            .collect();
        let seed = rng.random();
        let m = stratified_split(&instances, fraction, seed).unwrap();
        for b in BiasType::ALL {
            let c = m.per_bias_type[&b];
            worst = worst.max((c.test as f64 - (c.train + c.test) as f64 * fraction).abs());
        }
        let (train_part, test_part) = apply_split(&instances, &m);
        if train_part.len() + test_part.len() != instances.len() {
            return Outcome::Fail(format!("dataset {d}: split loses instances"));
        }
        let mut shuffled = instances.clone();
        shuffled.reverse();
        if stratified_split(&shuffled, fraction, seed).unwrap() != m {
            return Outcome::Fail(format!("dataset {d}: same seed gave a different split"));
        }
    }
    ensure(worst <= 1.0, format!("100 datasets, max per-type deviation {worst:.2} instances"))
}

// ---------------------------------------------------------------- 7

const FILLER: &[&str] = &["patients", "were", "enrolled", "trial", "study", "groups", "outcome", "reported", "data", "follow"];

fn separable_corpus(rng: &mut ChaCha8Rng, n: usize) -> Vec<Instance> {
    (0..n)
        .map(|i| {
            let low = i % 2 == 0;
            let mut words: Vec<&str> = (0..rng.random_range(4..10)).map(|_| *FILLER.choose(rng).unwrap()).collect();
            let cue = if low {
                ["computerised", "concealed", "envelopes"].choose(rng).unwrap()
            } else {
                ["alternation", "unclear", "open"].choose(rng).unwrap()
            };
            let at = rng.random_range(0..=words.len());
            words.insert(at, cue);
            let mut inst = stub_instance(format!("sep-{i:03}"), *BiasType::ALL.choose(rng).unwrap(), Label::from_positive(low));
            inst.answer_text = words.join(" ");
            inst.context = inst.answer_text.clone();
            inst
        })
        .collect()
}

fn train_macro_f1(kind: LossKind, train_set: &[Instance], eval_set: &[Instance]) -> f64 {
    let config = BaselineConfig { kind, ..Default::default() };
    let bundle = BaselineBundle::train(train_set, &config).unwrap();
    let preds = bundle.predict(eval_set, 0.5, 0).unwrap();
    let y: Vec<bool> = eval_set.iter().map(|i| i.label.is_positive()).collect();
    let p: Vec<bool> = preds.iter().map(|p| p.label.is_positive()).collect();
    macro_prf(&y, &p).unwrap().macro_f1
}

fn hinge(m: &LinearModel, x: &FeatureMatrix, y: &[u8]) -> f64 {
    x.rows
        .iter()
        .zip(y)
        .map(|(r, &yi)| (1.0 - if yi == 1 { 1.0 } else { -1.0 } * m.decision(r)).max(0.0))
        .sum::<f64>()
        / y.len() as f64
}

fn baseline_learnability() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let corpus = separable_corpus(&mut rng, 200);
    let held_out = separable_corpus(&mut rng, 100);
    let lr = train_macro_f1(LossKind::Logistic, &corpus, &corpus);
    let svm = train_macro_f1(LossKind::Hinge, &corpus, &corpus);
    let lr_held = train_macro_f1(LossKind::Logistic, &corpus, &held_out);
    let svm_held = train_macro_f1(LossKind::Hinge, &corpus, &held_out);

    // a noisy dense problem so the penalty actually binds
    let rows: Vec<Vec<f64>> = (0..60).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<u8> = (0..60).map(|_| rng.random_range(0..2u8)).collect();
    let x = FeatureMatrix::from_dense(&rows);
    let lr_cfg = SgdConfig { epochs: 20000, lr: 0.2, batch_size: 0, decay: false, ..Default::default() };
    // full-batch steps stay stable while lr * l2 < 2
    let norms: Vec<f64> = [0.01, 0.1, 1.0, 5.0]
        .iter()
        .map(|&l2| train_logreg(&x, &y, l2, &lr_cfg).unwrap().0.weights.iter().map(|w| w * w).sum::<f64>().sqrt())
        .collect();
    let svm_cfg = SgdConfig { epochs: 4000, lr: 0.5, batch_size: 0, decay: true, class_weight_pos: Some(1.0), ..Default::default() };
    let losses: Vec<f64> = [0.01, 0.1, 1.0, 10.0]
        .iter()
        .map(|&c| hinge(&train_svm(&x, &y, c, &svm_cfg).unwrap().0, &x, &y))
        .collect();
    let norms_ok = norms.windows(2).all(|w| w[1] <= w[0] + 1e-6);
    let losses_ok = losses.windows(2).all(|w| w[1] <= w[0] + 1e-3);

    ensure(
        lr >= 0.99 && svm >= 0.99 && norms_ok && losses_ok,
        format!(
            "macro-F1 LR {lr:.3} SVM {svm:.3} (held out {lr_held:.3}/{svm_held:.3}); weight norm falls with L2: {norms_ok}; hinge loss falls with C: {losses_ok}"
        ),
    )
}

// ---------------------------------------------------------------- 8

const PUBLISHED: [(LossKind, f64, f64); 2] = [(LossKind::Logistic, 69.11, 0.78), (LossKind::Hinge, 71.29, 0.80)];

fn published_dataset() -> Outcome {
    let Some(dir) = published_dir_from_env() else {
        return Outcome::Skipped("set ROBKIT_PUBLISHED_DIR to a directory with train/test files".into());
    };
    let start = Instant::now();
    let splits = match load_published(&dir) {
        Ok(s) => s,
        Err(e) => return Outcome::Skipped(format!("dataset unreadable: {e}")),
    };
    let mut ok = true;
    let mut lines = Vec::new();
    for (kind, f1_target, auc_target) in PUBLISHED {
        let config = BaselineConfig { kind, ..Default::default() };
        let bundle = BaselineBundle::train(&splits.train, &config).unwrap();
        let preds = bundle.predict(&splits.test, 0.5, 0).unwrap();
        let y: Vec<bool> = splits.test.iter().map(|i| i.label.is_positive()).collect();
        let p: Vec<bool> = preds.iter().map(|p| p.label.is_positive()).collect();
        let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
        let f1 = 100.0 * macro_prf(&y, &p).unwrap().macro_f1;
        let auc = roc_auc(&scores, &y).unwrap_or(f64::NAN);
        ok &= (f1 - f1_target).abs() <= 5.0 && (auc - auc_target).abs() <= 0.05;
        lines.push(format!("{} macro-F1 {f1:.2} (target {f1_target}), AUC {auc:.3} (target {auc_target})", kind.short_name()));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(600);
    ensure(ok, format!("{} train / {} test; {}", splits.train.len(), splits.test.len(), lines.join("; ")))
}

// ---------------------------------------------------------------- 9

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, fa: f64, fm: f64, fb: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (flm, frm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, left, fa, flm, fm, eps / 2.0, depth - 1) + simpson(f, m, b, right, fm, frm, fb, eps / 2.0, depth - 1)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const PIECES: usize = 256;
    let w = (b - a) / PIECES as f64;
    (0..PIECES)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * w, a + (k + 1) as f64 * w);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            simpson(f, lo, hi, (hi - lo) / 6.0 * (fa + 4.0 * fm + fb), fa, fm, fb, 1e-16, 60)
        })
        .sum()
}

/// Two-sided Student-t tail probability by quadrature of the density after
/// the substitution x = tan(θ).
fn t_tail(t: f64, df: f64) -> f64 {
    let h = |th: f64| {
        let (s, c) = th.sin_cos();
        c.max(0.0).powf(df - 1.0) / (df * c * c + s * s).powf((df + 1.0) / 2.0)
    };
    let half = std::f64::consts::FRAC_PI_2;
    integrate(&h, t.abs().atan(), half) / integrate(&h, 0.0, half)
}

fn welch_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (na, nb) = (rng.random_range(2..30), rng.random_range(2..30));
        let (sa, sb) = (rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
        let shift = rng.random_range(-2.0..2.0);
        let a: Vec<f64> = (0..na).map(|_| rng.random_range(-1.0..1.0) * sa).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.random_range(-1.0..1.0) * sb + shift).collect();
        let r = welch_t_test(&a, &b).unwrap();
        worst = worst.max((r.p - t_tail(r.t, r.df)).abs());
    }
    let same = welch_t_test(&[0.61, 0.64, 0.7], &[0.61, 0.64, 0.7]).unwrap();
    ensure(worst < 1e-6 && same.p == 1.0, format!("100 pairs, max |p - oracle| {worst:.1e}; identical samples p = {}", same.p))
}

// ---------------------------------------------------------------- 10

fn end_to_end_fixture() -> Outcome {
    let run = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_robkit"))
        .current_dir(workspace())
        .args(["--config", "data/toy/robkit.toml", "--run-dir"])
        .arg(run.path())
        .arg("pipeline")
        .env("RUST_LOG", "error")
        .output()
        .unwrap();
    if !out.status.success() {
        return Outcome::Fail(format!("pipeline failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    let test = read_instances(&run.path().join("dataset/test.jsonl")).unwrap();
    let report: EvalReport = serde_json::from_str(&fs::read_to_string(run.path().join("reports/report.json")).unwrap()).unwrap();
    let mut preds: Vec<Prediction> = Vec::new();
    for entry in fs::read_dir(run.path().join("predictions")).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|x| x == "jsonl") {
            preds.extend(read_jsonl::<Prediction>(&p).unwrap());
        }
    }

    let mut problems = Vec::new();
    let mut differs = Vec::new();
    for m in &report.models {
        for b in &m.blocks {
            if b.classification.confusion.total() != b.n * m.runs.len() {
                problems.push(format!("{} {}: confusion sums to {}, N = {}", m.model, b.scope, b.classification.confusion.total(), b.n));
            }
        }
        let joint: f64 = m
            .runs
            .iter()
            .map(|&r| {
                let y: Vec<bool> = test.iter().map(|i| i.label.is_positive()).collect();
                let p: Vec<bool> = test
                    .iter()
                    .map(|i| preds.iter().find(|p| p.model == m.model && p.run == r && p.id == i.id).unwrap().label.is_positive())
                    .collect();
                macro_prf(&y, &p).unwrap().macro_f1
            })
            .sum::<f64>()
            / m.runs.len() as f64;
        let overall = m.overall().classification.macro_f1;
        if (joint - overall).abs() > 1e-12 {
            problems.push(format!("{}: overall {overall} but joint recomputation {joint}", m.model));
        }
        let types = &m.blocks[..m.blocks.len() - 1];
        let mean = types.iter().map(|b| b.classification.macro_f1).sum::<f64>() / types.len() as f64;
        if (mean - overall).abs() > 1e-9 {
            differs.push(m.model.clone());
        }
    }

    // constructed case where pooling and averaging must disagree
    let cx = vec![
        stub_instance("a".into(), BiasType::Selection, Label::Low),
        stub_instance("b".into(), BiasType::Selection, Label::HighUnclear),
        stub_instance("c".into(), BiasType::Detection, Label::HighUnclear),
        stub_instance("d".into(), BiasType::Detection, Label::HighUnclear),
    ];
    let cp: Vec<Prediction> = [("a", true), ("b", false), ("c", true), ("d", false)]
        .iter()
        .map(|&(id, pos)| Prediction {
            id: id.into(),
            model: "m".into(),
            run: 0,
            score: f64::from(u8::from(pos)),
            label: Label::from_positive(pos),
            answer: None,
        })
        .collect();
    let cr = build_report(&cp, &cx).unwrap();
    let blocks = &cr.models[0].blocks;
    let type_mean = (blocks[0].classification.macro_f1 + blocks[1].classification.macro_f1) / 2.0;
    // selection 1.0, detection (2/3 + 0) / 2 = 1/3; pooled (4/5 + 2/3) / 2 = 11/15
    if (cr.models[0].overall().classification.macro_f1 - 11.0 / 15.0).abs() > 1e-12 || (type_mean - 2.0 / 3.0).abs() > 1e-12 {
        problems.push("constructed counterexample does not separate pooled and averaged scores".into());
    }
    if differs.is_empty() {
        problems.push("no toy model shows overall differing from the mean of types".into());
    }

    if problems.is_empty() {
        Outcome::Pass(format!(
            "{} models on {} test instances; overall differs from type mean for {}",
            report.models.len(),
            test.len(),
            differs.join(", ")
        ))
    } else {
        Outcome::Fail(problems.join("; "))
    }
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [(&str, Check, Option<Duration>); 10] = [
        ("metric oracles", metric_oracles, Some(Duration::from_secs(5))),
        ("gradient suite", gradient_checks, Some(Duration::from_secs(30))),
        ("closed-form loss anchors", closed_form_anchors, None),
        ("overfit sanity", overfit_sanity, Some(Duration::from_secs(120))),
        ("annotation invariants", annotation_invariants, None),
        ("stratified split", split_balance, None),
        ("baseline learnability", baseline_learnability, None),
        ("published dataset", published_dataset, None),
        ("Welch t-test oracle", welch_oracle, None),
        ("end-to-end fixture", end_to_end_fixture, None),
    ];
    let mut failed = 0;
    for (k, (name, check, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, budget) {
            (Outcome::Pass(d), Some(limit)) if elapsed > limit => {
                Outcome::Fail(format!("{d}; took {:.1} s, limit {} s", elapsed.as_secs_f64(), limit.as_secs()))
            }
            (o, _) => o,
        };
        let (status, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skipped(d) => ("SKIPPED", d),
        };
        println!("criterion {:>2} {status:<7} {name} [{:.2} s]: {detail}", k + 1, elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
