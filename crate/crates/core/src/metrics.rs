//! Evaluation bookkeeping for sequential training: per-set accuracy kept in
//! a lower-triangular matrix, averages over everything seen so far,
//! forgetting relative to each set's historical best, and rank-based AUROC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of predictions equal to their label.
pub fn accuracy(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::empty("accuracy over zero predictions"));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Scores paired with binary labels, for threshold-free evaluation.
#[derive(Debug, Clone)]
pub struct ScoredPredictions {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredPredictions {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} scores vs {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.is_empty() {
            return Err(Error::empty("scored predictions"));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite {
                index: i,
                context: "prediction score".into(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::contract(format!(
                "labels must be 0 or 1, found {bad}"
            )));
        }
        Ok(ScoredPredictions { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

/// Area under the ROC curve via the rank-sum identity: positives' mean rank
/// (midranks for tied scores) determines the probability that a random
/// positive outscores a random negative, counting ties as half.
///
/// Errs with [`Error::AurocUndefined`] when only one class is present — the
/// curve is undefined there, and callers are expected to skip the value
/// rather than substitute a default.
pub fn auroc(scored: &ScoredPredictions) -> Result<f64> {
    let n = scored.len();
    let n_pos = scored.labels.iter().filter(|&&y| y == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AurocUndefined);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scored.scores[a].total_cmp(&scored.scores[b]));

    // midranks: every member of a tie group gets the group's average rank
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scored.scores[order[j + 1]] == scored.scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 average to (i + j + 2) / 2
        let midrank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if scored.labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Lower-triangular record of evaluations: cell `(t, t')` with `t' <= t`
/// holds the accuracy on test set `t'` measured after training through
/// experience `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    n_experiences: usize,
    cells: Vec<Vec<Option<f64>>>,
}

impl AccuracyMatrix {
    pub fn new(n_experiences: usize) -> Result<Self> {
        if n_experiences == 0 {
            return Err(Error::contract("accuracy matrix needs at least one experience"));
        }
        Ok(AccuracyMatrix {
            n_experiences,
            cells: (0..n_experiences).map(|t| vec![None; t + 1]).collect(),
        })
    }

    pub fn n_experiences(&self) -> usize {
        self.n_experiences
    }

    pub fn record(&mut self, after_experience: usize, evaluated_on: usize, value: f64) -> Result<()> {
        self.check_cell(after_experience, evaluated_on)?;
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::contract(format!(
                "accuracy {value} out of [0, 1]"
            )));
        }
        self.cells[after_experience][evaluated_on] = Some(value);
        Ok(())
    }

    pub fn get(&self, after_experience: usize, evaluated_on: usize) -> Result<f64> {
        self.check_cell(after_experience, evaluated_on)?;
        self.cells[after_experience][evaluated_on].ok_or(Error::MissingCell {
            experience: after_experience,
            evaluated_on,
        })
    }

    pub fn cell(&self, after_experience: usize, evaluated_on: usize) -> Option<f64> {
        self.cells
            .get(after_experience)
            .and_then(|row| row.get(evaluated_on))
            .copied()
            .flatten()
    }

    fn check_cell(&self, after_experience: usize, evaluated_on: usize) -> Result<()> {
        if after_experience >= self.n_experiences || evaluated_on > after_experience {
            return Err(Error::contract(format!(
                "cell ({after_experience}, {evaluated_on}) outside the lower triangle of a {}-experience matrix",
                self.n_experiences
            )));
        }
        Ok(())
    }

    /// Mean accuracy over all test sets seen through experience `t`:
    /// the mean of row `t`.
    pub fn average_accuracy(&self, after_experience: usize) -> Result<f64> {
        self.check_cell(after_experience, 0)?;
        let mut sum = 0.0;
        for t_prime in 0..=after_experience {
            sum += self.get(after_experience, t_prime)?;
        }
        Ok(sum / (after_experience + 1) as f64)
    }

    /// How much accuracy on test set `t'` has dropped from its best value
    /// at any earlier row: `max_{s in t'..t} a[s][t'] - a[t][t']`, using
    /// only populated cells. Needs at least one earlier populated cell.
    pub fn forgetting(&self, after_experience: usize, evaluated_on: usize) -> Result<f64> {
        self.check_cell(after_experience, evaluated_on)?;
        if evaluated_on >= after_experience {
            return Err(Error::contract(format!(
                "forgetting on set {evaluated_on} needs an earlier evaluation than row {after_experience}"
            )));
        }
        let current = self.get(after_experience, evaluated_on)?;
        let mut best: Option<f64> = None;
        for s in evaluated_on..after_experience {
            if let Some(v) = self.cells[s][evaluated_on] {
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        match best {
            Some(b) => Ok(b - current),
            None => Err(Error::MissingCell {
                experience: evaluated_on,
                evaluated_on,
            }),
        }
    }

    /// Mean forgetting over all sets with history at row `t`; `None` at the
    /// first row, where no set has an earlier evaluation.
    pub fn average_forgetting(&self, after_experience: usize) -> Result<Option<f64>> {
        self.check_cell(after_experience, 0)?;
        if after_experience == 0 {
            return Ok(None);
        }
        let mut sum = 0.0;
        for t_prime in 0..after_experience {
            sum += self.forgetting(after_experience, t_prime)?;
        }
        Ok(Some(sum / after_experience as f64))
    }

    /// Rows as optional values for serialization (row `t` has `t + 1` cells).
    pub fn rows(&self) -> &[Vec<Option<f64>>] {
        &self.cells
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_counts_exact_matches() {
        let acc = accuracy(&[1, 0, 1, 1], &[1, 0, 0, 1]).unwrap();
        assert_eq!(acc, 0.75);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn auroc_perfect_and_inverted_separation() {
        let perfect =
            ScoredPredictions::new(vec![0.1, 0.2, 0.8, 0.9], vec![0, 0, 1, 1]).unwrap();
        assert_eq!(auroc(&perfect).unwrap(), 1.0);
        let inverted =
            ScoredPredictions::new(vec![0.9, 0.8, 0.2, 0.1], vec![0, 0, 1, 1]).unwrap();
        assert_eq!(auroc(&inverted).unwrap(), 0.0);
    }

    #[test]
    fn auroc_hand_example_with_an_interleaved_pair() {
        // scores: pos {0.8, 0.3}, neg {0.5, 0.1}
        // pairs: (0.8 > 0.5), (0.8 > 0.1), (0.3 < 0.5) miss, (0.3 > 0.1)
        // 3 of 4 pairs correct -> 0.75
        let s = ScoredPredictions::new(vec![0.8, 0.3, 0.5, 0.1], vec![1, 1, 0, 0]).unwrap();
        assert_eq!(auroc(&s).unwrap(), 0.75);
    }

    #[test]
    fn auroc_ties_count_half() {
        // one positive and one negative share a score: 0.5 credit for the pair
        let s = ScoredPredictions::new(vec![0.5, 0.5], vec![1, 0]).unwrap();
        assert_eq!(auroc(&s).unwrap(), 0.5);
        // pos {0.7, 0.4}, neg {0.4, 0.2}: pairs = 1, 1, 0.5 (tie), 1 -> 3.5/4
        let s = ScoredPredictions::new(vec![0.7, 0.4, 0.4, 0.2], vec![1, 1, 0, 0]).unwrap();
        assert_eq!(auroc(&s).unwrap(), 0.875);
    }

    #[test]
    fn auroc_single_class_is_an_error_not_a_default() {
        let s = ScoredPredictions::new(vec![0.2, 0.9], vec![1, 1]).unwrap();
        assert!(matches!(auroc(&s), Err(Error::AurocUndefined)));
        let s = ScoredPredictions::new(vec![0.2, 0.9], vec![0, 0]).unwrap();
        assert!(matches!(auroc(&s), Err(Error::AurocUndefined)));
    }

    #[test]
    fn scored_predictions_validate_inputs() {
        assert!(ScoredPredictions::new(vec![0.1], vec![0, 1]).is_err());
        assert!(ScoredPredictions::new(vec![], vec![]).is_err());
        assert!(ScoredPredictions::new(vec![f64::NAN], vec![0]).is_err());
        assert!(ScoredPredictions::new(vec![0.5], vec![2]).is_err());
    }

    fn filled_matrix() -> AccuracyMatrix {
        // rows: [0.9], [0.7, 0.8], [0.6, 0.75, 0.95]
        let mut m = AccuracyMatrix::new(3).unwrap();
        m.record(0, 0, 0.9).unwrap();
        m.record(1, 0, 0.7).unwrap();
        m.record(1, 1, 0.8).unwrap();
        m.record(2, 0, 0.6).unwrap();
        m.record(2, 1, 0.75).unwrap();
        m.record(2, 2, 0.95).unwrap();
        m
    }

    #[test]
    fn average_accuracy_is_the_row_mean() {
        let m = filled_matrix();
        assert!((m.average_accuracy(0).unwrap() - 0.9).abs() < 1e-15);
        assert!((m.average_accuracy(1).unwrap() - 0.75).abs() < 1e-15);
        assert!((m.average_accuracy(2).unwrap() - (0.6 + 0.75 + 0.95) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn forgetting_measures_drop_from_the_historical_best() {
        let m = filled_matrix();
        // set 0: best over rows 0..2 is 0.9; row 2 has 0.6
        assert!((m.forgetting(2, 0).unwrap() - 0.3).abs() < 1e-15);
        // set 1: best over row 1 is 0.8; row 2 has 0.75
        assert!((m.forgetting(2, 1).unwrap() - 0.05).abs() < 1e-15);
        // negative forgetting when the model improved
        let mut m2 = AccuracyMatrix::new(2).unwrap();
        m2.record(0, 0, 0.5).unwrap();
        m2.record(1, 0, 0.9).unwrap();
        m2.record(1, 1, 0.6).unwrap();
        assert!((m2.forgetting(1, 0).unwrap() + 0.4).abs() < 1e-15);
    }

    #[test]
    fn average_forgetting_is_none_only_at_the_first_row() {
        let m = filled_matrix();
        assert_eq!(m.average_forgetting(0).unwrap(), None);
        let g1 = m.average_forgetting(1).unwrap().unwrap();
        assert!((g1 - 0.2).abs() < 1e-15); // only set 0: 0.9 - 0.7
        let g2 = m.average_forgetting(2).unwrap().unwrap();
        assert!((g2 - (0.3 + 0.05) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn missing_and_out_of_triangle_cells_are_named() {
        let mut m = AccuracyMatrix::new(3).unwrap();
        m.record(1, 1, 0.5).unwrap();
        let err = m.get(1, 0).unwrap_err().to_string();
        assert!(
            err.contains("experience 1") && err.contains("evaluated on 0"),
            "{err}"
        );
        assert!(m.record(0, 1, 0.5).is_err()); // upper triangle
        assert!(m.record(3, 0, 0.5).is_err()); // past the last experience
        assert!(m.record(0, 0, 1.5).is_err()); // out of range value
        assert!(m.forgetting(0, 0).is_err()); // no history at the first row
    }

    #[test]
    fn forgetting_skips_unpopulated_history_rows() {
        // row 1 never evaluated set 0; best for set 0 at row 2 comes from row 0
        let mut m = AccuracyMatrix::new(3).unwrap();
        m.record(0, 0, 0.8).unwrap();
        m.record(2, 0, 0.5).unwrap();
        assert!((m.forgetting(2, 0).unwrap() - 0.3).abs() < 1e-15);
    }
}
