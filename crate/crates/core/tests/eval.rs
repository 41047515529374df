use proptest::prelude::*;
use robkit_core::annotate::{Instance, Label, Provenance};
use robkit_core::eval::{build_report, macro_prf, roc_auc, roc_points, span_f1_em, welch_t_test, Prediction};
use robkit_core::reviews::BiasType;

fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi && !yj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64, depth: u32) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
            return left + right + (left + right - whole) / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
    }
    // coarse partition first so narrow peaks are not missed
    const PIECES: usize = 256;
    let w = (b - a) / PIECES as f64;
    (0..PIECES)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * w, a + (k + 1) as f64 * w);
            let (fa, fb, fm) = (f(lo), f(hi), f(0.5 * (lo + hi)));
            step(f, lo, hi, fa, fm, fb, (hi - lo) / 6.0 * (fa + 4.0 * fm + fb), eps / PIECES as f64, depth)
        })
        .sum()
}

/// Two-sided Student-t tail by quadrature of the density under x = tan(θ),
/// normalized by the same quadrature over the half line.
fn t_tail_oracle(t: f64, df: f64) -> f64 {
    let h = |th: f64| {
        let (s, c) = th.sin_cos();
        c.max(0.0).powf(df - 1.0) / (df * c * c + s * s).powf((df + 1.0) / 2.0)
    };
    let half = std::f64::consts::FRAC_PI_2;
    let total = adaptive_simpson(&h, 0.0, half, 1e-14, 60);
    let tail = adaptive_simpson(&h, t.abs().atan(), half, 1e-14, 60);
    tail / total
}

proptest! {
    #[test]
    fn auc_equals_pairwise_counting(
        data in prop::collection::vec((0u8..6, any::<bool>()), 2..50),
    ) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 5.0).collect();
        let labels: Vec<bool> = data.iter().map(|(_, y)| *y).collect();
        let pos = labels.iter().filter(|&&y| y).count();
        prop_assume!(pos > 0 && pos < labels.len());
        let auc = roc_auc(&scores, &labels).unwrap();
        prop_assert!((auc - pairwise_auc(&scores, &labels)).abs() < 1e-12);
        let pts = roc_points(&scores, &labels).unwrap();
        prop_assert_eq!(pts[0], (0.0, 0.0));
        prop_assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
        prop_assert!(pts.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    }

    #[test]
    fn macro_prf_is_bounded_and_class_symmetric(
        pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60),
    ) {
        let labels: Vec<bool> = pairs.iter().map(|p| p.0).collect();
        let preds: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let m = macro_prf(&labels, &preds).unwrap();
        prop_assert_eq!(m.confusion.total(), pairs.len());
        prop_assert!((0.0..=1.0).contains(&m.macro_f1));
        let flip = |v: &[bool]| v.iter().map(|b| !b).collect::<Vec<_>>();
        let swapped = macro_prf(&flip(&labels), &flip(&preds)).unwrap();
        prop_assert!((swapped.macro_f1 - m.macro_f1).abs() < 1e-12);
        prop_assert_eq!(swapped.confusion, m.confusion.swapped());
    }

    #[test]
    fn span_scores_are_bounded_and_symmetric(
        a in prop::collection::vec(prop::sample::select(&["The", "a", "sealed", "envelope", "x,", "blind"][..]), 0..6),
        b in prop::collection::vec(prop::sample::select(&["the", "sealed", "Envelope", "y", "blind."][..]), 0..6),
    ) {
        let (a, b) = (a.join(" "), b.join(" "));
        let ab = span_f1_em(&a, &b);
        let ba = span_f1_em(&b, &a);
        prop_assert!((ab.f1 - ba.f1).abs() < 1e-12);
        prop_assert_eq!(ab.em, ba.em);
        prop_assert!(ab.f1 >= ab.em && ab.f1 <= 1.0);
        prop_assert_eq!(span_f1_em(&a, &a).f1, 1.0);
    }

    #[test]
    fn welch_matches_quadrature_oracle(
        a in prop::collection::vec(-5.0f64..5.0, 2..15),
        b in prop::collection::vec(-3.0f64..8.0, 2..15),
    ) {
        let r = welch_t_test(&a, &b).unwrap();
        prop_assert!(r.df >= 1.0 - 1e-12);
        let oracle = t_tail_oracle(r.t, r.df);
        prop_assert!((r.p - oracle).abs() < 1e-6, "t={} df={} p={} oracle={}", r.t, r.df, r.p, oracle);
    }
}

#[test]
fn quadrature_oracle_matches_known_quantiles() {
    // two-sided 5% critical values of Student's t
    for (df, t) in [(1.0, 12.706204736), (2.0, 4.302652730), (5.0, 2.570581836), (30.0, 2.042272456)] {
        assert!((t_tail_oracle(t, df) - 0.05).abs() < 1e-8);
    }
    // Cauchy: P(|T| > 1) = 1/2
    assert!((t_tail_oracle(1.0, 1.0) - 0.5).abs() < 1e-12);
}

fn inst(id: &str, bias: BiasType, label: Label) -> Instance {
    Instance {
        id: id.into(),
        bias_type: bias,
        question: "q".into(),
        context: "evidence here".into(),
        answer_text: "evidence here".into(),
        answer_start: 0,
        label,
        provenance: Provenance {
            review_id: "r".into(),
            study_id: id.into(),
            pubmed_id: "1".into(),
            sentence_index: 0,
            similarity: 1.0,
        },
    }
}

fn pred(id: &str, positive: bool, score: f64) -> Prediction {
    Prediction {
        id: id.into(),
        model: "m".into(),
        run: 0,
        score,
        label: Label::from_positive(positive),
        answer: None,
    }
}

#[test]
fn overall_block_is_joint_not_mean_of_types() {
    // selection: all correct; detection: 1 of 3 correct, all gold negative
    let instances = vec![
        inst("a", BiasType::Selection, Label::Low),
        inst("b", BiasType::Selection, Label::HighUnclear),
        inst("c", BiasType::Detection, Label::HighUnclear),
        inst("d", BiasType::Detection, Label::HighUnclear),
        inst("e", BiasType::Detection, Label::HighUnclear),
    ];
    let preds = vec![
        pred("a", true, 0.9),
        pred("b", false, 0.1),
        pred("c", true, 0.8),
        pred("d", true, 0.7),
        pred("e", false, 0.2),
    ];
    let report = build_report(&preds, &instances).unwrap();
    let m = &report.models[0];
    let sel = m.block("selection").unwrap().classification.macro_f1;
    let det = m.block("detection").unwrap().classification.macro_f1;
    let overall = m.overall().classification.macro_f1;
    assert_eq!(sel, 1.0);
    // negative class: tp 1, fp 0, fn 2 -> f1 0.5; positive class absent -> 0
    assert!((det - 0.25).abs() < 1e-12);
    // joint: neg tp 2 fn 2 fp 0 -> 2/3; pos tp 1 fp 2 -> 0.5
    assert!((overall - (2.0 / 3.0 + 0.5) / 2.0).abs() < 1e-12);
    assert!((overall - (sel + det) / 2.0).abs() > 0.04);
    for b in &m.blocks {
        assert_eq!(b.classification.confusion.total(), b.n);
    }
    assert_eq!(m.overall().n, 5);
    assert_eq!(m.overall().classification.roc_auc, Some(1.0));
}
