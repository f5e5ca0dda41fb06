use gaia_core::eval::{
    build_contingency, category_kappa, classification_metrics, confusion_matrix, fleiss_kappa,
    interpret_kappa, majority_vote, overall_kappa, Averaging, ConfusionMatrix, Contingency,
    KappaBand, LabelSpace, PredictionColumn, PredictionTable,
};
use proptest::prelude::*;

const TOL: f64 = 1e-12;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

/// Metrics straight from (golden, predicted) pairs, no matrix involved.
struct Brute {
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
}

fn brute_metrics(pairs: &[(usize, usize)], k: usize, weighted: bool) -> Brute {
    let n = pairs.len() as f64;
    let accuracy = pairs.iter().filter(|(g, p)| g == p).count() as f64 / n;
    let (mut sp, mut sr, mut sf, mut sw) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..k {
        let tp = pairs.iter().filter(|&&(g, p)| g == c && p == c).count() as f64;
        let fp = pairs.iter().filter(|&&(g, p)| g != c && p == c).count() as f64;
        let fn_ = pairs.iter().filter(|&&(g, p)| g == c && p != c).count() as f64;
        let support = tp + fn_;
        let predicted = tp + fp;
        let weight = if weighted {
            support
        } else if support + predicted > 0.0 {
            1.0
        } else {
            0.0
        };
        let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let r = if support > 0.0 { tp / support } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        sp += weight * p;
        sr += weight * r;
        sf += weight * f;
        sw += weight;
    }
    Brute {
        accuracy,
        precision: sp / sw,
        recall: sr / sw,
        f1: sf / sw,
    }
}

fn brute_majority(labels: &[String]) -> String {
    let mut best = 0;
    for i in 0..labels.len() {
        let count = |j: usize| labels.iter().filter(|l| **l == labels[j]).count();
        if count(i) > count(best) {
            best = i;
        }
    }
    labels[best].clone()
}

/// Kappa from raw ratings by enumerating ordered rater pairs per subject.
fn brute_kappa(ratings: &[Vec<usize>], k: usize) -> (Vec<f64>, f64) {
    let n = ratings[0].len();
    let subjects = ratings.len();
    let total = (subjects * n) as f64;
    let pairs = (subjects * n * (n - 1)) as f64;
    let p: Vec<f64> = (0..k)
        .map(|j| ratings.iter().flatten().filter(|&&x| x == j).count() as f64 / total)
        .collect();
    let mut agree = 0usize;
    let mut split = vec![0usize; k];
    for row in ratings {
        for r in 0..n {
            for s in 0..n {
                if r == s {
                    continue;
                }
                if row[r] == row[s] {
                    agree += 1;
                } else {
                    split[row[r]] += 1;
                }
            }
        }
    }
    let per: Vec<f64> = (0..k)
        .map(|j| {
            let e = p[j] * (1.0 - p[j]);
            if e == 0.0 || ratings.iter().flatten().all(|&x| x == j) {
                0.0
            } else {
                1.0 - (split[j] as f64 / pairs) / e
            }
        })
        .collect();
    let pe: f64 = p.iter().map(|x| x * x).sum();
    let single = p.contains(&1.0);
    let overall = if single {
        0.0
    } else {
        (agree as f64 / pairs - pe) / (1.0 - pe)
    };
    (per, overall)
}

fn contingency_of(ratings: &[Vec<usize>], k: usize) -> Contingency {
    let counts = ratings
        .iter()
        .map(|row| (0..k).map(|j| row.iter().filter(|&&x| x == j).count()).collect())
        .collect();
    Contingency::new(ratings[0].len(), k, counts).unwrap()
}

fn table_strategy() -> impl Strategy<Value = (usize, Vec<(usize, Vec<usize>)>)> {
    (1usize..8, 1usize..40).prop_flat_map(|(iters, walls)| {
        (
            Just(iters),
            prop::collection::vec((0usize..6, prop::collection::vec(0usize..6, iters)), walls),
        )
    })
}

fn to_table(iters: usize, rows: &[(usize, Vec<usize>)], space: &LabelSpace) -> PredictionTable {
    let label = |i: usize| space.labels()[i].clone();
    PredictionTable::from_predictions(
        iters,
        rows.iter().enumerate().map(|(i, (g, preds))| {
            (format!("W{i:03}"), label(*g), preds.iter().map(|&p| label(p)).collect())
        }),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1200))]

    #[test]
    fn metrics_match_brute_force((iters, rows) in table_strategy(), col in any::<prop::sample::Index>()) {
        let space = LabelSpace::default();
        let table = to_table(iters, &rows, &space);
        let k = col.index(iters + 1);
        let column = if k == 0 { PredictionColumn::Majority } else { PredictionColumn::Iteration(k) };
        let pairs: Vec<(usize, usize)> = table
            .rows()
            .iter()
            .map(|r| {
                let p = match column {
                    PredictionColumn::Majority => &r.majority,
                    PredictionColumn::Iteration(i) => &r.predictions[i - 1],
                };
                (space.index_of(&r.golden).unwrap(), space.index_of(p).unwrap())
            })
            .collect();
        let cm = confusion_matrix(&table, column, &space).unwrap();
        prop_assert_eq!(cm.total(), rows.len() as u64);
        for (weighted, averaging) in [(false, Averaging::Macro), (true, Averaging::Weighted)] {
            let got = classification_metrics(&cm, averaging).unwrap();
            let want = brute_metrics(&pairs, space.len(), weighted);
            prop_assert!(close(got.accuracy, want.accuracy));
            prop_assert!(close(got.precision, want.precision), "{} vs {}", got.precision, want.precision);
            prop_assert!(close(got.recall, want.recall));
            prop_assert!(close(got.f1, want.f1));
            for m in [got.accuracy, got.precision, got.recall, got.f1] {
                prop_assert!((0.0..=1.0).contains(&m));
            }
        }
    }

    #[test]
    fn majority_matches_brute_force(labels in prop::collection::vec("[abc]", 1..9)) {
        prop_assert_eq!(majority_vote(&labels).unwrap(), brute_majority(&labels));
    }

    #[test]
    fn csv_round_trips((iters, rows) in table_strategy()) {
        let space = LabelSpace::new(
            ["plain", "with, comma", "with \"quote\"", "multi\nline", "ünï", "x"]
                .iter().map(|s| s.to_string()).collect(),
        ).unwrap();
        let table = to_table(iters, &rows, &space);
        let text = table.to_csv_string();
        prop_assert_eq!(PredictionTable::from_csv_str(&text).unwrap(), table);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1500))]

    #[test]
    fn kappa_matches_pairwise_oracle(
        ratings in (1usize..=6, 2usize..=5, 1usize..=4).prop_flat_map(|(subjects, raters, k)| {
            (Just(k), prop::collection::vec(prop::collection::vec(0..k, raters), subjects))
        })
    ) {
        let (k, ratings) = ratings;
        let c = contingency_of(&ratings, k);
        let (per, overall) = brute_kappa(&ratings, k);
        for j in 0..k {
            let got = category_kappa(&c, j);
            prop_assert!((got - per[j]).abs() <= TOL, "category {}: {} vs {}", j, got, per[j]);
            prop_assert!(got <= 1.0 + 1e-12);
        }
        let got = overall_kappa(&c);
        prop_assert!((got - overall).abs() <= TOL, "overall {} vs {}", got, overall);

        // overall kappa is the p(1-p)-weighted mean of the per-category values
        let total = (ratings.len() * ratings[0].len()) as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..k {
            let p = c.category_total(j) as f64 / total;
            num += p * (1.0 - p) * category_kappa(&c, j);
            den += p * (1.0 - p);
        }
        if den > 0.0 {
            prop_assert!((got - num / den).abs() <= TOL);
        }
    }

    /// Reordering iterations cannot change a strict (untied) mode.
    #[test]
    fn unique_modes_survive_permutation(
        labels in prop::collection::vec("[abc]", 5),
        perm in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let mut counts = std::collections::HashMap::new();
        for l in &labels {
            *counts.entry(l.clone()).or_insert(0) += 1;
        }
        let top = *counts.values().max().unwrap();
        prop_assume!(counts.values().filter(|&&c| c == top).count() == 1);
        let shuffled: Vec<String> = perm.iter().map(|&i| labels[i].clone()).collect();
        prop_assert_eq!(majority_vote(&labels), majority_vote(&shuffled));
    }

    #[test]
    fn band_is_monotone(a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(interpret_kappa(lo) <= interpret_kappa(hi));
    }
}

#[test]
fn toy_confusion_matrix() {
    let cm = ConfusionMatrix::new(vec!["0".into(), "1".into()], vec![vec![3, 1], vec![2, 4]]).unwrap();
    let m = classification_metrics(&cm, Averaging::Macro).unwrap();
    assert!(close(m.accuracy, 0.7));
    assert!(close(m.per_class[0].precision, 0.6));
    assert!(close(m.per_class[0].recall, 0.75));
}

#[test]
fn three_by_two_kappa_example() {
    let space = LabelSpace::new(vec!["A".into(), "B".into()]).unwrap();
    let table = PredictionTable::from_predictions(
        2,
        vec![
            ("1".into(), "A".into(), vec!["A".into(), "A".into()]),
            ("2".into(), "A".into(), vec!["A".into(), "B".into()]),
            ("3".into(), "B".into(), vec!["B".into(), "B".into()]),
        ],
    )
    .unwrap();
    let c = build_contingency(&table, &space).unwrap();
    assert_eq!(c.counts, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
    let report = fleiss_kappa(&c, &space).unwrap();
    for cat in &report.categories {
        assert!(close(cat.kappa, 1.0 / 3.0));
        assert_eq!(cat.band, KappaBand::Minimal);
    }
    assert!(close(report.overall, 1.0 / 3.0));
}

#[test]
fn contingency_counts_and_empty_table() {
    let space = LabelSpace::new(vec!["A".into(), "B".into(), "C".into()]).unwrap();
    let row = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let table = PredictionTable::from_predictions(
        5,
        vec![("W1".into(), "A".into(), row(&["A", "A", "B", "B", "C"]))],
    )
    .unwrap();
    assert_eq!(build_contingency(&table, &space).unwrap().counts, vec![vec![2, 2, 1]]);
    let empty = PredictionTable::from_predictions(5, Vec::new()).unwrap();
    assert!(build_contingency(&empty, &space).unwrap().counts.is_empty());
}

#[test]
fn band_boundaries() {
    use KappaBand::*;
    for (v, b) in [
        (-0.5, NoAgreement),
        (0.20, NoAgreement),
        (0.21, Minimal),
        (0.39, Minimal),
        (0.40, Weak),
        (0.59, Weak),
        (0.60, Moderate),
        (0.79, Moderate),
        (0.80, Strong),
        (0.90, Strong),
        (0.91, AlmostPerfect),
        (1.00, AlmostPerfect),
    ] {
        assert_eq!(interpret_kappa(v), b, "{v}");
    }
}
