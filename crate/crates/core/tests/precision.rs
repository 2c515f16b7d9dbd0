//! The numeric pipeline runs unchanged at single and double precision.

use emocat::classifier::{init_model, predict, train, Example, TrainConfig};
use emocat::corpus::{split, synth_corpus, SplitSpec, SynthSpec, TweetRecord};
use emocat::emoji::LabelMap;
use emocat::features::{tokenize, TfidfModel};
use emocat::metrics::EvalReport;
use emocat::normalize::{clean_text, CleaningConfig};
use emocat::Scalar;

fn corpus() -> (Vec<TweetRecord>, Vec<TweetRecord>) {
    let cfg = CleaningConfig::default();
    let records: Vec<TweetRecord> = synth_corpus(&SynthSpec::separable(30), LabelMap::builtin(), 9)
        .unwrap()
        .into_iter()
        .map(|mut r| {
            r.clean_text = Some(clean_text(&r.raw_text, &cfg));
            r
        })
        .collect();
    split(&records, &SplitSpec::new(336)).unwrap()
}

fn run<T: Scalar>() -> (Vec<usize>, EvalReport<T>) {
    let (train_recs, test_recs) = corpus();
    let docs: Vec<Vec<&str>> = train_recs.iter().map(|r| tokenize(r.text())).collect();
    let tfidf = TfidfModel::<T>::fit(&docs).unwrap();
    let examples = |recs: &[TweetRecord]| -> Vec<Example<T>> {
        recs.iter()
            .map(|r| Example::new(tfidf.transform(&tokenize(r.text())), r.label.unwrap()))
            .collect()
    };
    let (train_ex, test_ex) = (examples(&train_recs), examples(&test_recs));
    let cfg = TrainConfig {
        initial_lr: 2.0,
        batch_size: 8,
        epochs: 8,
        ..TrainConfig::default()
    };
    let model = init_model::<T>(tfidf.vocab_size(), 14).unwrap();
    let (model, _) = train(model, &train_ex, &test_ex, &cfg).unwrap();
    let predicted: Vec<usize> = test_ex
        .iter()
        .map(|e| predict(&model, &e.x).unwrap())
        .collect();
    let truth: Vec<usize> = test_ex.iter().map(|e| e.y).collect();
    let report = EvalReport::from_labels(&truth, &predicted, LabelMap::builtin()).unwrap();
    (predicted, report)
}

#[test]
fn single_and_double_precision_agree() {
    let (p32, r32) = run::<f32>();
    let (p64, r64) = run::<f64>();
    assert_eq!(p32, p64);
    assert_eq!(r32.confusion, r64.confusion);
    assert!(r64.accuracy > 0.9);
    assert!((r32.macro_avg.f1 as f64 - r64.macro_avg.f1).abs() < 1e-6);
}
