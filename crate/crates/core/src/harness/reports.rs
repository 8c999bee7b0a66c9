//! Coherence and merging summaries of score matrices.

use super::rolling::ScoreMatrix;
use crate::error::{GvpError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceFlag {
    pub eval_rule: String,
    /// The matching update rule is strictly best in the column.
    pub diagonal_best: bool,
    /// Diagonal entry minus the best competitor (0 on ties, negative when
    /// another row wins).
    pub margin: f64,
    /// Update rule with the highest column entry.
    pub best_row: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub columns: Vec<CoherenceFlag>,
}

impl CoherenceReport {
    pub fn diagonal_best_count(&self) -> usize {
        self.columns.iter().filter(|c| c.diagonal_best).count()
    }
}

/// For every evaluation rule that is also an update rule, whether updating
/// with that rule yields the largest average score in its column.
/// Columns whose diagonal cell failed are reported as not best.
pub fn coherence_report(matrix: &ScoreMatrix) -> CoherenceReport {
    let mut columns = Vec::new();
    for (j, eval) in matrix.eval_labels.iter().enumerate() {
        let Some(i) = matrix.update_labels.iter().position(|u| u == eval) else {
            continue;
        };
        let best_row = matrix.column_best(j).map(|b| matrix.update_labels[b].clone());
        let competitor = matrix
            .entries
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .filter_map(|(_, row)| row[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let (diagonal_best, margin) = match matrix.entries[i][j] {
            Some(_) if competitor == f64::NEG_INFINITY => (true, 0.0),
            Some(d) => (d > competitor, d - competitor),
            None => (false, f64::NAN),
        };
        columns.push(CoherenceFlag {
            eval_rule: eval.clone(),
            diagonal_best,
            margin,
            best_row,
        });
    }
    CoherenceReport { columns }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergingReport {
    pub update_labels: Vec<String>,
    pub eval_labels: Vec<String>,
    /// `|S_Q - S_Pi|` per cell; `None` where either cell failed.
    pub abs_diff: Vec<Vec<Option<f64>>>,
    pub max_abs_diff: Option<f64>,
}

/// Cellwise absolute differences between a variational and an exact
/// posterior matrix computed on the same design.
pub fn merging_report(vb: &ScoreMatrix, mcmc: &ScoreMatrix) -> Result<MergingReport> {
    if vb.update_labels != mcmc.update_labels || vb.eval_labels != mcmc.eval_labels {
        return Err(GvpError::Input(
            "merging report needs matrices with identical rows and columns".into(),
        ));
    }
    let abs_diff: Vec<Vec<Option<f64>>> = vb
        .entries
        .iter()
        .zip(&mcmc.entries)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(x, y)| Some((x.as_ref()? - y.as_ref()?).abs()))
                .collect()
        })
        .collect();
    let max_abs_diff = abs_diff
        .iter()
        .flatten()
        .flatten()
        .copied()
        .reduce(f64::max);
    Ok(MergingReport {
        update_labels: vb.update_labels.clone(),
        eval_labels: vb.eval_labels.clone(),
        abs_diff,
        max_abs_diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::rolling::EngineKind;

    pub(crate) fn matrix(labels: &[&str], entries: Vec<Vec<f64>>) -> ScoreMatrix {
        let labels: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        let k = labels.len();
        ScoreMatrix {
            engine: EngineKind::Vb,
            update_labels: labels.clone(),
            eval_labels: labels,
            entries: entries
                .into_iter()
                .map(|r| r.into_iter().map(Some).collect())
                .collect(),
            evaluations: 1,
            degenerate: vec![vec![0; k]; k],
            failures: vec![None; k],
            master_seed: 0,
            refit_every: 1,
        }
    }

    #[test]
    fn identical_rows_are_not_diagonal_best() {
        let m = matrix(&["LS", "CRPS"], vec![vec![-1.0, -0.5], vec![-1.0, -0.5]]);
        let rep = coherence_report(&m);
        assert!(rep.columns.iter().all(|c| !c.diagonal_best && c.margin == 0.0));
    }

    #[test]
    fn identical_matrices_merge_exactly() {
        let m = matrix(&["LS", "CRPS"], vec![vec![-1.0, -0.5], vec![-1.1, -0.4]]);
        let rep = merging_report(&m, &m).unwrap();
        assert_eq!(rep.max_abs_diff, Some(0.0));
    }

    #[test]
    fn shape_mismatch() {
        let a = matrix(&["LS", "CRPS"], vec![vec![0.0; 2]; 2]);
        let b = matrix(&["LS"], vec![vec![0.0]]);
        assert!(merging_report(&a, &b).is_err());
    }
}
