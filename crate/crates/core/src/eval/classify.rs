use crate::error::{Error, Result};
use crate::eval::Scorer;
use crate::kg::Triple;

/// A global decision threshold and its accuracy (percent) on the tuning set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub value: f64,
    pub accuracy: f64,
}

/// Threshold maximizing accuracy of `score >= threshold ⇒ positive`.
///
/// Candidates are `-∞`, the midpoints between consecutive distinct scores,
/// and `+∞`; the lowest best candidate wins.
pub fn tune_threshold_scores(labeled: &[(f64, bool)]) -> Result<Threshold> {
    let positives = labeled.iter().filter(|x| x.1).count();
    if positives == 0 || positives == labeled.len() {
        return Err(Error::SingleClass);
    }
    let mut sorted = labeled.to_vec();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = sorted.len();

    // Below every score everything is predicted positive.
    let mut correct = positives;
    let mut best = Threshold {
        value: f64::NEG_INFINITY,
        accuracy: correct as f64,
    };
    let mut i = 0;
    while i < n {
        // Moving the threshold past a block of equal scores flips those
        // predictions to negative.
        let s = sorted[i].0;
        while i < n && sorted[i].0 == s {
            if sorted[i].1 {
                correct -= 1;
            } else {
                correct += 1;
            }
            i += 1;
        }
        let value = if i < n {
            s + (sorted[i].0 - s) / 2.0
        } else {
            f64::INFINITY
        };
        if correct as f64 > best.accuracy {
            best = Threshold {
                value,
                accuracy: correct as f64,
            };
        }
    }
    best.accuracy = 100.0 * best.accuracy / n as f64;
    Ok(best)
}

fn labeled_scores<S: Scorer + ?Sized>(
    scorer: &S,
    positives: &[Triple],
    negatives: &[Triple],
) -> Vec<(f64, bool)> {
    positives
        .iter()
        .map(|&t| (scorer.score(t), true))
        .chain(negatives.iter().map(|&t| (scorer.score(t), false)))
        .collect()
}

fn check_range<S: Scorer + ?Sized>(scorer: &S, triples: &[Triple]) -> Result<()> {
    for t in triples {
        crate::error::check_id("entity", t.subject, scorer.num_entities())?;
        crate::error::check_id("entity", t.object, scorer.num_entities())?;
        crate::error::check_id("relation", t.relation, scorer.num_relation_vectors())?;
    }
    Ok(())
}

/// Tune a global threshold on labeled validation triples.
pub fn tune_threshold<S: Scorer + ?Sized>(
    scorer: &S,
    positives: &[Triple],
    negatives: &[Triple],
) -> Result<Threshold> {
    check_range(scorer, positives)?;
    check_range(scorer, negatives)?;
    tune_threshold_scores(&labeled_scores(scorer, positives, negatives))
}

/// Accuracy (percent) of `score >= threshold ⇒ positive`.
pub fn classify<S: Scorer + ?Sized>(
    scorer: &S,
    positives: &[Triple],
    negatives: &[Triple],
    threshold: f64,
) -> Result<f64> {
    if positives.is_empty() && negatives.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    check_range(scorer, positives)?;
    check_range(scorer, negatives)?;
    let labeled = labeled_scores(scorer, positives, negatives);
    let correct = labeled
        .iter()
        .filter(|(s, positive)| (*s >= threshold) == *positive)
        .count();
    Ok(100.0 * correct as f64 / labeled.len() as f64)
}
