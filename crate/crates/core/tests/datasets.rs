use std::path::PathBuf;

use ponte::backend::{BackendConfig, Embedder};
use ponte::harness::{
    cluster_eval, csts_eval, filter_split, label_set, load_cluster_corpus, load_csts, ClusterSettings, DataFormat,
    HarnessError, Session, Split,
};
use ponte::metrics::SCALED_RANGE;
use ponte::prompting::{find, registry};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn small_csv_in_file_order() {
    let r = load_csts(fixture("csts_small.csv"), DataFormat::Csv).unwrap();
    assert_eq!(r.len(), 3);
    assert_eq!(r[0].condition, "the animal");
    assert_eq!(r[1].text1, "A chef slices onions, quickly.");
    assert_eq!(r[2].gold, 1.0);
    assert_eq!(r[2].split, Some(Split::Test));
}

#[test]
fn non_numeric_score_names_its_row() {
    let err = load_csts(fixture("csts_bad_score.csv"), DataFormat::Csv).unwrap_err();
    match &err {
        HarnessError::Parse { row, message, .. } => {
            assert_eq!(*row, 3);
            assert!(message.contains("abc"));
        }
        other => panic!("{other:?}"),
    }
    assert!(err.to_string().contains("row 3"));
}

#[test]
fn contrast_pairs_load_from_jsonl() {
    let r = load_csts(fixture("contrast_pairs.jsonl"), DataFormat::Jsonl).unwrap();
    assert_eq!(r.len(), 4);
    assert_eq!(r[0].condition, "the physical actions");
    assert_eq!(r[0].gold, 1.0);
    assert_eq!(r[1].gold, 5.0);
    assert!(r.iter().all(|x| x.split == Some(Split::Validation)));
}

#[test]
fn two_label_corpus() {
    let r = load_cluster_corpus(fixture("emotions_small.csv"), DataFormat::Csv).unwrap();
    assert_eq!(r.len(), 4);
    assert_eq!(label_set(&r).into_iter().collect::<Vec<_>>(), vec!["anger", "joy"]);
}

#[test]
fn missing_label_column() {
    match load_cluster_corpus(fixture("cluster_missing_label.csv"), DataFormat::Csv) {
        Err(HarnessError::MissingColumn { column, .. }) => assert_eq!(column, "label"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn tweet_emotion_shape_has_four_labels() {
    let r = load_cluster_corpus(fixture("tweet_emotion.jsonl"), DataFormat::Jsonl).unwrap();
    assert_eq!(label_set(&r).len(), 4);
    let val = filter_split(&r, Some(Split::Validation), |x| x.split);
    assert_eq!(val.len(), 8);
}

#[test]
fn contrast_pairs_evaluate_to_scaled_range() {
    let records = load_csts(fixture("contrast_pairs.jsonl"), DataFormat::Jsonl).unwrap();
    let mut config = BackendConfig::mock(32, 0);
    config.generate_words = true;
    let e = Embedder::new(config).unwrap();
    let t9 = find(&registry(), "T9").unwrap().clone();
    let report = csts_eval(&Session::new(&e, None, "contrast_pairs"), &records, &t9).unwrap();
    assert_eq!(report.items.0.len(), 4);
    for (item, scaled) in report.items.0.iter().zip(&report.summary.scaled_predictions) {
        assert!(item.word1.is_some() && item.word2.is_some());
        assert!((SCALED_RANGE.0..=SCALED_RANGE.1).contains(scaled));
    }
    assert!(report.is_consistent().unwrap());
}

#[test]
fn constant_gold_is_refused_with_guidance() {
    let records = load_csts(fixture("csts_constant_gold.csv"), DataFormat::Csv).unwrap();
    let e = Embedder::new(BackendConfig::mock(8, 0)).unwrap();
    match csts_eval(&Session::new(&e, None, "flat"), &records, &registry()[8]) {
        Err(HarnessError::ZeroVariance(msg)) => assert!(msg.contains("gold")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn prompt_eol_ignores_conditions() {
    let records = load_csts(fixture("csts_small.csv"), DataFormat::Csv).unwrap();
    let e = Embedder::new(BackendConfig::mock(8, 0)).unwrap();
    let eol = find(&registry(), "PromptEOL").unwrap().clone();
    let report = csts_eval(&Session::new(&e, None, "small"), &records, &eol).unwrap();
    assert_eq!(report.template, "PromptEOL");
    assert_eq!(report.items.0[0].condition, "the animal");
}

#[test]
fn cluster_report_records_its_condition() {
    let records = load_cluster_corpus(fixture("tweet_emotion.jsonl"), DataFormat::Jsonl).unwrap();
    let e = Embedder::new(BackendConfig::mock(16, 0)).unwrap();
    let session = Session::new(&e, None, "tweet_emotion");
    let report = cluster_eval(&session, &records, &registry()[8], "the emotion", &ClusterSettings::default()).unwrap();
    assert_eq!(report.condition.as_deref(), Some("the emotion"));
    assert_eq!(report.summary.k, 4);
    assert_eq!(report.config.seeds, vec![0, 1, 2, 3, 4]);
    assert_eq!(report.summary.per_seed.len(), 5);
    assert!(report.is_consistent().unwrap());
}

#[test]
fn single_cluster_scores_zero() {
    let records = load_cluster_corpus(fixture("tweet_emotion.jsonl"), DataFormat::Jsonl).unwrap();
    let e = Embedder::new(BackendConfig::mock(16, 0)).unwrap();
    let settings = ClusterSettings {
        k: Some(1),
        ..ClusterSettings::default()
    };
    let report = cluster_eval(&Session::new(&e, None, "t"), &records, &registry()[8], "the emotion", &settings).unwrap();
    assert_eq!(report.summary.mean.homogeneity, 0.0);
    assert_eq!(report.summary.mean.v_measure, 0.0);
}

#[test]
fn too_many_clusters() {
    let records = load_cluster_corpus(fixture("emotions_small.csv"), DataFormat::Csv).unwrap();
    let e = Embedder::new(BackendConfig::mock(8, 0)).unwrap();
    let settings = ClusterSettings {
        k: Some(9),
        ..ClusterSettings::default()
    };
    let err = cluster_eval(&Session::new(&e, None, "t"), &records, &registry()[8], "the emotion", &settings).unwrap_err();
    assert!(matches!(
        err,
        HarnessError::Clustering(ponte::clustering::ClusteringError::KTooLarge { k: 9, n: 4 })
    ));
}
