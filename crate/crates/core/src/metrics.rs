//! ROC curves, AUC and score histograms.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{HifError, Result};

/// A score with its ground truth; `anomaly` is the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub score: f64,
    pub anomaly: bool,
}

impl LabeledScore {
    pub fn new(score: f64, anomaly: bool) -> Self {
        LabeledScore { score, anomaly }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from `(0,0)` to `(1,1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    /// One `fpr<TAB>tpr` line per point, with a header.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "fpr\ttpr")?;
        for (fpr, tpr) in &self.points {
            writeln!(out, "{fpr}\t{tpr}")?;
        }
        Ok(())
    }
}

fn class_counts(samples: &[LabeledScore]) -> (usize, usize) {
    let pos = samples.iter().filter(|s| s.anomaly).count();
    (pos, samples.len() - pos)
}

fn require_both_classes(samples: &[LabeledScore]) -> Result<(usize, usize)> {
    let (positives, negatives) = class_counts(samples);
    if positives == 0 || negatives == 0 {
        return Err(HifError::SingleClass {
            positives,
            negatives,
        });
    }
    if let Some(i) = samples.iter().position(|s| !s.score.is_finite()) {
        return Err(HifError::NonFinite { row: i, col: 0 });
    }
    Ok((positives, negatives))
}

fn sorted_by_score(samples: &[LabeledScore]) -> Vec<LabeledScore> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    sorted
}

/// Mann-Whitney AUC with mid-ranks for tied scores.
pub fn auc(samples: &[LabeledScore]) -> Result<f64> {
    let (pos, neg) = require_both_classes(samples)?;
    Ok(auc_sorted(&sorted_by_score(samples), pos, neg))
}

fn auc_sorted(sorted: &[LabeledScore], pos: usize, neg: usize) -> f64 {
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        let tied_pos = sorted[i..j].iter().filter(|s| s.anomaly).count();
        rank_sum += mid_rank * tied_pos as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    (rank_sum - p * (p + 1.0) / 2.0) / (p * n)
}

/// ROC curve from a threshold sweep over distinct scores, highest first.
pub fn roc_auc(samples: &[LabeledScore]) -> Result<RocCurve> {
    let (pos, neg) = require_both_classes(samples)?;
    let sorted = sorted_by_score(samples);

    let mut points = Vec::with_capacity(sorted.len() + 1);
    points.push((0.0, 0.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut j = sorted.len();
    while j > 0 {
        let score = sorted[j - 1].score;
        while j > 0 && sorted[j - 1].score == score {
            if sorted[j - 1].anomaly {
                tp += 1;
            } else {
                fp += 1;
            }
            j -= 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }

    let auc = auc_sorted(&sorted, pos, neg);
    debug_assert!((auc - trapezoid_area(&points)).abs() < 1e-9);
    Ok(RocCurve { points, auc })
}

/// Trapezoidal area under a piecewise-linear curve.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Equal-width histogram over the pooled score range, split by class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    /// `bins + 1` bin edges.
    pub edges: Vec<f64>,
    pub normal: Vec<usize>,
    pub anomaly: Vec<usize>,
}

impl ScoreHistogram {
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "bin_lo\tbin_hi\tnormal\tanomaly")?;
        for i in 0..self.normal.len() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                self.edges[i],
                self.edges[i + 1],
                self.normal[i],
                self.anomaly[i]
            )?;
        }
        Ok(())
    }
}

pub fn score_histogram(samples: &[LabeledScore], bins: usize) -> Result<ScoreHistogram> {
    if bins == 0 {
        return Err(HifError::InvalidParameter("need at least one bin".into()));
    }
    let (lo, hi) = samples
        .iter()
        .map(|s| s.score)
        .filter(|s| s.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    let (lo, hi) = if lo > hi { (0.0, 1.0) } else { (lo, hi) };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();

    let mut normal = vec![0; bins];
    let mut anomaly = vec![0; bins];
    for s in samples {
        let bin = if width > 0.0 {
            (((s.score - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        if s.anomaly {
            anomaly[bin] += 1;
        } else {
            normal[bin] += 1;
        }
    }
    Ok(ScoreHistogram {
        edges,
        normal,
        anomaly,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labeled(pairs: &[(f64, bool)]) -> Vec<LabeledScore> {
        pairs
            .iter()
            .map(|&(s, a)| LabeledScore::new(s, a))
            .collect()
    }

    #[test]
    fn perfect_separation() {
        let s = labeled(&[(1.0, true), (1.0, true), (0.0, false), (0.0, false)]);
        let roc = roc_auc(&s).unwrap();
        assert_eq!(roc.auc, 1.0);
        assert_eq!(roc.points, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn all_tied_is_half() {
        let s = labeled(&[
            (0.3, true),
            (0.3, false),
            (0.3, false),
            (0.3, true),
            (0.3, true),
        ]);
        let roc = roc_auc(&s).unwrap();
        assert_eq!(roc.auc, 0.5);
        assert_eq!(roc.points, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn single_class_rejected() {
        let s = labeled(&[(0.1, true), (0.2, true)]);
        assert!(matches!(roc_auc(&s), Err(HifError::SingleClass { .. })));
        assert!(matches!(auc(&[]), Err(HifError::SingleClass { .. })));
    }

    #[test]
    fn one_bin_holds_everything() {
        let s: Vec<_> = (0..10)
            .map(|i| LabeledScore::new(i as f64, i % 3 == 0))
            .collect();
        let h = score_histogram(&s, 1).unwrap();
        assert_eq!(h.normal[0] + h.anomaly[0], 10);
        assert_eq!(h.edges, vec![0.0, 9.0]);
    }

    #[test]
    fn empty_positive_class_histogram() {
        let s = labeled(&[(0.1, false), (0.5, false), (0.9, false)]);
        let h = score_histogram(&s, 4).unwrap();
        assert!(h.anomaly.iter().all(|&c| c == 0));
        assert_eq!(h.normal.iter().sum::<usize>(), 3);
        assert!(score_histogram(&s, 0).is_err());
    }

    fn arb_samples() -> impl Strategy<Value = Vec<LabeledScore>> {
        prop::collection::vec((0u8..20, any::<bool>()), 2..120).prop_map(|v| {
            let mut s: Vec<_> = v
                .into_iter()
                .map(|(q, a)| LabeledScore::new(q as f64 / 4.0, a))
                .collect();
            s[0].anomaly = true;
            s[1].anomaly = false;
            s
        })
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(s in arb_samples()) {
            let t: Vec<_> = s.iter().map(|x| LabeledScore::new((x.score * 3.0).exp() - 7.0, x.anomaly)).collect();
            prop_assert!((auc(&s).unwrap() - auc(&t).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn label_swap_complements(s in arb_samples()) {
            let flipped: Vec<_> = s.iter().map(|x| LabeledScore::new(x.score, !x.anomaly)).collect();
            prop_assert!((auc(&s).unwrap() + auc(&flipped).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn curve_is_monotone_and_matches_trapezoid(s in arb_samples()) {
            let roc = roc_auc(&s).unwrap();
            prop_assert_eq!(roc.points.first().copied(), Some((0.0, 0.0)));
            prop_assert_eq!(roc.points.last().copied(), Some((1.0, 1.0)));
            for w in roc.points.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
            prop_assert!((roc.auc - trapezoid_area(&roc.points)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&roc.auc));
        }

        #[test]
        fn histogram_conserves_counts(s in arb_samples(), bins in 1usize..30) {
            let h = score_histogram(&s, bins).unwrap();
            let (pos, neg) = class_counts(&s);
            prop_assert_eq!(h.anomaly.iter().sum::<usize>(), pos);
            prop_assert_eq!(h.normal.iter().sum::<usize>(), neg);
        }
    }
}
