#[path = "common/lcs_oracle.rs"]
mod lcs_oracle;

use lcs_oracle::{brute_removed_set, set_f1};
use priorscrub::diff::{removed_set, score};
use proptest::prelude::*;

fn seq() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..5, 0..=10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1500))]

    #[test]
    fn removed_set_matches_brute_force(o in seq(), m in seq(), g in seq()) {
        let bm = brute_removed_set(&o, &m);
        let bg = brute_removed_set(&o, &g);
        prop_assert_eq!(removed_set(&o, &m), bm.clone());
        prop_assert_eq!(removed_set(&o, &g), bg.clone());
        let s = score(&o, &m, &g);
        prop_assert!((s.f1 - set_f1(&bm, &bg)).abs() < 1e-12);
    }

    #[test]
    fn perfect_when_modified_matches_truth(o in seq(), g in seq()) {
        prop_assert_eq!(score(&o, &g, &g).f1, 1.0);
    }

    #[test]
    fn scores_in_unit_interval(o in seq(), m in seq(), g in seq()) {
        let s = score(&o, &m, &g);
        for x in [s.precision, s.recall, s.f1] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }
}

#[test]
fn disjoint_removals_score_zero() {
    let o = [0u8, 1, 2, 3];
    let s = score(&o, &[0, 2, 3], &[0, 1, 2]);
    assert_eq!((s.tp, s.fp, s.fn_), (0, 1, 1));
    assert_eq!(s.f1, 0.0);
}

#[test]
fn micro_equals_summed_counts() {
    use priorscrub::corpus::ReportRecord;
    use priorscrub::diff::{score_corpus, score_texts, DiffScore};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let words = ["heart", "stable", "since", "prior", "lungs", "clear"];
    let mut text = |n: usize| -> String {
        (0..n).map(|_| words[rng.random_range(0..words.len())]).collect::<Vec<_>>().join(" ")
    };
    let (mut o, mut m, mut g) = (vec![], vec![], vec![]);
    for i in 0..40 {
        let id = i.to_string();
        o.push(ReportRecord::new(&id, &text(8)));
        m.push(ReportRecord::new(&id, &text(5)));
        g.push(ReportRecord::new(&id, &text(5)));
    }
    let corpus = score_corpus(&o, &m, &g).unwrap();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut f1s = 0.0;
    for i in 0..40 {
        let s = score_texts(&o[i].text, &m[i].text, &g[i].text);
        tp += s.tp;
        fp += s.fp;
        fn_ += s.fn_;
        f1s += s.f1;
    }
    assert_eq!(corpus.micro, DiffScore::from_counts(tp, fp, fn_));
    assert!((corpus.macro_f1 - f1s / 40.0).abs() < 1e-12);
}
