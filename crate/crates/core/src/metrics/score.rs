//! Exact-match span scoring.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::corpus::{Corpus, Label, Sentence};

/// CSV column order for [`ScoreReport`].
pub const SCORE_CSV_HEADER: &str = "tp,fp,fn,precision,recall,f1,missed_rate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `fn / (tp + fn)`: share of gold entities the prediction missed.
    pub missed_rate: f64,
    /// Set when there were no predicted spans, so precision was defined as 0.
    pub precision_undefined: bool,
    /// Set when there were no gold spans, so recall was defined as 0.
    pub recall_undefined: bool,
}

impl ScoreReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ScoreReport {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
            missed_rate: ratio(fn_, tp + fn_),
            precision_undefined: tp + fp == 0,
            recall_undefined: tp + fn_ == 0,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.tp, self.fp, self.fn_, self.precision, self.recall, self.f1, self.missed_rate
        )
    }
}

type SpanKey<'a> = (usize, usize, usize, &'a str);

fn span_keys(corpus: &Corpus) -> HashSet<SpanKey<'_>> {
    corpus
        .spans()
        .map(|s| (s.sentence_id, s.start, s.end, s.category.as_str()))
        .collect()
}

/// Scores `predicted` against `gold`. A predicted span counts as a true
/// positive only when sentence, boundaries and category all match.
pub fn score_spans(gold: &Corpus, predicted: &Corpus) -> Result<ScoreReport, MetricsError> {
    if gold.len() != predicted.len() {
        return Err(MetricsError::ShapeMismatch {
            sentence: gold.len().min(predicted.len()),
            message: format!("gold has {} sentences, prediction has {}", gold.len(), predicted.len()),
        });
    }
    for (g, p) in gold.sentences().iter().zip(predicted.sentences()) {
        if g.len() != p.len() {
            return Err(MetricsError::ShapeMismatch {
                sentence: g.id(),
                message: format!("gold has {} tokens, prediction has {}", g.len(), p.len()),
            });
        }
    }
    let gold_keys = span_keys(gold);
    let pred_keys = span_keys(predicted);
    let tp = gold_keys.intersection(&pred_keys).count();
    Ok(ScoreReport::from_counts(tp, pred_keys.len() - tp, gold_keys.len() - tp))
}

/// Share of tokens labelled `O`.
pub fn o_label_proportion(sentences: &[Sentence]) -> f64 {
    let total: usize = sentences.iter().map(Sentence::len).sum();
    if total == 0 {
        return 0.0;
    }
    let outside = sentences
        .iter()
        .flat_map(|s| s.tokens())
        .filter(|t| t.label == Label::Outside)
        .count();
    outside as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::sentence_from_pairs;

    fn corpus(rows: &[Vec<(&str, &str)>]) -> Corpus {
        Corpus::from_sentences(rows.iter().enumerate().map(|(i, r)| sentence_from_pairs(i, r)), "")
    }

    fn gold() -> Corpus {
        corpus(&[
            vec![("New", "B-loc"), ("York", "I-loc"), ("rocks", "O")],
            vec![("Bob", "B-per"), ("met", "O"), ("Alice", "B-per")],
            vec![("at", "O"), ("Google", "B-org")],
        ])
    }

    #[test]
    fn identical_prediction_is_perfect() {
        let r = score_spans(&gold(), &gold()).unwrap();
        assert_eq!((r.precision, r.recall, r.f1, r.missed_rate), (1.0, 1.0, 1.0, 0.0));
    }

    #[test]
    fn all_outside_prediction() {
        let pred = corpus(&[
            vec![("New", "O"), ("York", "O"), ("rocks", "O")],
            vec![("Bob", "O"), ("met", "O"), ("Alice", "O")],
            vec![("at", "O"), ("Google", "O")],
        ]);
        let r = score_spans(&gold(), &pred).unwrap();
        assert_eq!((r.precision, r.recall, r.f1, r.missed_rate), (0.0, 0.0, 0.0, 1.0));
        assert!(r.precision_undefined);
        assert!(!r.recall_undefined);
    }

    #[test]
    fn two_one_two_fixture() {
        // Gold spans: loc[0,2) s0, per[0,1) s1, per[2,3) s1, org[1,2) s2.
        // Prediction: loc s0 (TP), per[0,1) s1 (TP), loc[2,3) s1 (wrong category, FP).
        let pred = corpus(&[
            vec![("New", "B-loc"), ("York", "I-loc"), ("rocks", "O")],
            vec![("Bob", "B-per"), ("met", "O"), ("Alice", "B-loc")],
            vec![("at", "O"), ("Google", "O")],
        ]);
        let r = score_spans(&gold(), &pred).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (2, 1, 2));
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.recall - 0.5).abs() < 1e-12);
        assert!((r.f1 - 4.0 / 7.0).abs() < 1e-12);
        assert!((r.missed_rate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn swapping_swaps_precision_and_recall() {
        let pred = corpus(&[
            vec![("New", "B-loc"), ("York", "O"), ("rocks", "B-misc")],
            vec![("Bob", "B-per"), ("met", "O"), ("Alice", "B-per")],
            vec![("at", "O"), ("Google", "O")],
        ]);
        let a = score_spans(&gold(), &pred).unwrap();
        let b = score_spans(&pred, &gold()).unwrap();
        assert_eq!((a.fp, a.fn_), (b.fn_, b.fp));
        assert_eq!((a.precision, a.recall), (b.recall, b.precision));
    }

    #[test]
    fn shape_mismatch_names_sentence() {
        let pred = corpus(&[
            vec![("New", "O"), ("York", "O"), ("rocks", "O")],
            vec![("Bob", "O"), ("met", "O")],
            vec![("at", "O"), ("Google", "O")],
        ]);
        match score_spans(&gold(), &pred) {
            Err(MetricsError::ShapeMismatch { sentence, .. }) => assert_eq!(sentence, 1),
            other => panic!("unexpected {other:?}"),
        }
        let short = corpus(&[vec![("x", "O")]]);
        assert!(matches!(score_spans(&gold(), &short), Err(MetricsError::ShapeMismatch { sentence: 1, .. })));
    }

    #[test]
    fn o_proportion() {
        let c = corpus(&[vec![("Paris", "B-loc"), ("is", "O"), ("nice", "O")]]);
        assert!((o_label_proportion(c.sentences()) - 2.0 / 3.0).abs() < 1e-12);
        let all_o = corpus(&[vec![("a", "O")], vec![("b", "O")]]);
        assert_eq!(o_label_proportion(all_o.sentences()), 1.0);
    }
}
