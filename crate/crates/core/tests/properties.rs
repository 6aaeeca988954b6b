use std::collections::BTreeSet;

use proptest::prelude::*;
use refscore::aggregate::{funding_weight, summarize_institutions, ArticleOutcome};
use refscore::corpus::{filter_eligible, ingest_jsonl, ArticleRecord, Corpus, EligibilityFilter, GroupedScore};
use refscore::evaluation::{pearson, stratified_split, SplitMode, SplitPlan};
use refscore::models::{ordinal_probabilities, ClassProbabilities};
use refscore::strategies::confidence_curve;
use refscore::text::CleaningRules;

fn gs(i: usize) -> GroupedScore {
    GroupedScore::from_index(i)
}

prop_compose! {
    fn article(i: usize)(
        title in "[A-Z][a-z]{2,8}( [a-z]{2,8}){0,4}",
        words in prop::collection::vec("[a-z]{1,9}", 0..140),
        year in 2010i32..2022,
        fields in prop::collection::btree_set("F[0-9]", 1..3),
        journal in "J[0-9]{1,2}",
        authors in prop::collection::vec("A[0-9]{1,3}", 1..4),
        inst in 1u32..5,
        countries in 1u32..3,
        pages in prop::option::of(1u32..40),
        citations in 0u64..500,
        group in "G[1-3]",
        institution in "I[0-9]",
        score in prop::option::of(0u8..=4),
        doi in prop::option::of("10\\.[0-9]{4}/[a-z]{3}"),
    ) -> ArticleRecord {
        ArticleRecord {
            article_id: format!("a{i}"),
            doi,
            title,
            abstract_text: words.join(" ") + ".",
            pub_year: year,
            narrow_fields: fields.into_iter().collect(),
            journal_id: journal,
            author_ids: authors,
            institution_count: inst,
            country_count: countries,
            page_count: pages,
            citation_count: citations,
            group_id: group,
            institution_id: institution,
            raw_score: score,
        }
    }
}

fn articles(max: usize) -> impl Strategy<Value = Vec<ArticleRecord>> {
    (1..max).prop_flat_map(|n| (0..n).map(article).collect::<Vec<_>>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jsonl_export_round_trips(records in articles(30)) {
        let corpus = Corpus::new(records, None).unwrap();
        let mut buf = Vec::new();
        corpus.write_jsonl(&mut buf).unwrap();
        let back = ingest_jsonl(buf.as_slice()).unwrap();
        prop_assert!(back.diagnostics.is_empty());
        prop_assert_eq!(back.corpus.articles(), corpus.articles());
    }

    #[test]
    fn eligibility_filter_is_idempotent(records in articles(40), min_chars in 0usize..400) {
        let corpus = Corpus::new(records, None).unwrap();
        let filter = EligibilityFilter { min_abstract_chars: min_chars, ..Default::default() };
        let rules = CleaningRules::default();
        let (once, report) = filter_eligible(&corpus, &filter, &rules).unwrap();
        let (twice, again) = filter_eligible(&once, &filter, &rules).unwrap();
        prop_assert_eq!(once.articles(), twice.articles());
        prop_assert_eq!(again.removed(), 0);
        prop_assert_eq!(report.retained + report.removed(), corpus.len());
    }

    #[test]
    fn splits_partition_and_follow_class_shares(
        labels in prop::collection::vec(0usize..3, 2..200),
        fraction in 0.05f64..0.95,
        seed in any::<u64>(),
        uniform in any::<bool>(),
    ) {
        let ids: Vec<String> = (0..labels.len()).map(|i| format!("id{i}")).collect();
        let labels: Vec<GroupedScore> = labels.into_iter().map(gs).collect();
        let mut plan = SplitPlan::new(fraction, 1, seed);
        if uniform {
            plan.mode = SplitMode::Uniform;
        }
        let s = stratified_split(&ids, &labels, &plan, 0).unwrap();
        let n = ids.len();
        let all: BTreeSet<usize> = s.train.iter().chain(&s.test).copied().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(s.train.len() + s.test.len(), n);
        let expected = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
        prop_assert_eq!(s.train.len(), expected);
        if !uniform {
            // Largest-remainder quotas never miss a class share by a whole article.
            for c in 0..3 {
                let members = labels.iter().filter(|l| l.index() == c).count();
                let taken = s.train.iter().filter(|&&i| labels[i].index() == c).count();
                let share = members as f64 * expected as f64 / n as f64;
                prop_assert!((taken as f64 - share).abs() < 1.0);
            }
        }
    }

    #[test]
    fn pearson_matches_direct_formula(pairs in prop::collection::vec((0usize..3, 0usize..3), 2..60)) {
        let p: Vec<GroupedScore> = pairs.iter().map(|x| gs(x.0)).collect();
        let a: Vec<GroupedScore> = pairs.iter().map(|x| gs(x.1)).collect();
        let xs: Vec<f64> = pairs.iter().map(|x| x.0 as f64).collect();
        let ys: Vec<f64> = pairs.iter().map(|x| x.1 as f64).collect();
        let n = xs.len() as f64;
        let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let syy: f64 = ys.iter().map(|y| y * y).sum();
        let den = ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
        match pearson(&p, &a) {
            None => prop_assert!(den == 0.0),
            Some(r) => prop_assert!((r - (n * sxy - sx * sy) / den).abs() < 1e-9),
        }
    }

    #[test]
    fn confidence_curve_cutoffs_fall_as_prefix_grows(
        rows in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0usize..3), 1..80),
    ) {
        let ids: Vec<String> = (0..rows.len()).map(|i| format!("r{i:03}")).collect();
        let probs: Vec<ClassProbabilities> =
            rows.iter().map(|r| ClassProbabilities::normalized([r.0 + 1e-9, r.1, r.2])).collect();
        let actual: Vec<GroupedScore> = rows.iter().map(|r| gs(r.3)).collect();
        let curve = confidence_curve(&ids, &probs, &actual, &[]);
        prop_assert_eq!(curve.points.len(), rows.len());
        for w in curve.points.windows(2) {
            prop_assert_eq!(w[1].n_predicted, w[0].n_predicted + 1);
            prop_assert!(w[1].probability_cutoff <= w[0].probability_cutoff);
        }
        let last = curve.points.last().unwrap();
        let hits = probs.iter().zip(&actual).filter(|(p, a)| p.predicted() == **a).count();
        prop_assert!((last.empirical_accuracy - hits as f64 / rows.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn ordinal_clipping_stays_on_simplex(a in -0.5f64..1.5, b in -0.5f64..1.5) {
        let p = ordinal_probabilities(a, b);
        prop_assert!((p.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.0.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn funding_totals_are_conserved(
        rows in prop::collection::vec((0usize..6, 0usize..3, prop::option::of(0usize..3)), 1..120),
    ) {
        let outcomes: Vec<ArticleOutcome> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| ArticleOutcome {
                article_id: format!("a{i}"),
                institution_id: format!("I{}", r.0),
                group_id: "G1".into(),
                actual: gs(r.1),
                predicted: r.2.map(gs),
            })
            .collect();
        let s = summarize_institutions(&outcomes);
        let actual: f64 = outcomes.iter().map(|o| funding_weight(o.actual)).sum();
        let predicted: f64 = outcomes.iter().map(|o| funding_weight(o.effective())).sum();
        prop_assert_eq!(s.iter().map(|x| x.funding_actual).sum::<f64>(), actual);
        prop_assert_eq!(s.iter().map(|x| x.funding_predicted).sum::<f64>(), predicted);
        prop_assert_eq!(s.iter().map(|x| x.n_articles).sum::<usize>(), outcomes.len());
    }
}
