//! Identification and verification metrics: rank-k cumulative match score,
//! ROC (false accept / false reject), and equal error rate, all computed
//! from a probes-by-classes score matrix where higher means more similar.

use std::io;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum EvalError {
    #[error("empty score matrix")]
    EmptyMatrix,
    #[error("probe {probe} has {got} scores, expected {want}")]
    RaggedRow { probe: usize, want: usize, got: usize },
    #[error("truth index {index} out of range for {classes} classes")]
    BadTruth { index: usize, classes: usize },
    #[error("score at probe {probe}, class {class} is not finite")]
    NonFiniteScore { probe: usize, class: usize },
    #[error("no impostor scores: verification needs at least two classes")]
    NoImpostors,
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Scores of every probe against every enrolled class, with the true class
/// index per probe. Validated on construction: rectangular, finite, truth
/// in range.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    scores: Vec<Vec<f64>>,
    truth: Vec<usize>,
}

impl ScoreMatrix {
    pub fn new(scores: Vec<Vec<f64>>, truth: Vec<usize>) -> Result<Self, EvalError> {
        if scores.is_empty() || scores[0].is_empty() || truth.len() != scores.len() {
            return Err(EvalError::EmptyMatrix);
        }
        let classes = scores[0].len();
        for (p, row) in scores.iter().enumerate() {
            if row.len() != classes {
                return Err(EvalError::RaggedRow {
                    probe: p,
                    want: classes,
                    got: row.len(),
                });
            }
            for (c, &s) in row.iter().enumerate() {
                if !s.is_finite() {
                    return Err(EvalError::NonFiniteScore { probe: p, class: c });
                }
            }
            if truth[p] >= classes {
                return Err(EvalError::BadTruth {
                    index: truth[p],
                    classes,
                });
            }
        }
        Ok(ScoreMatrix { scores, truth })
    }

    pub fn probes(&self) -> usize {
        self.scores.len()
    }

    pub fn classes(&self) -> usize {
        self.scores[0].len()
    }

    pub fn scores(&self) -> &[Vec<f64>] {
        &self.scores
    }

    pub fn truth(&self) -> &[usize] {
        &self.truth
    }
}

/// Cumulative match scores: cms[r] is the fraction of probes whose true
/// class ranks within the top r+1 by descending score. Ties are handled
/// pessimistically, placing the true class after every equal-scored rival,
/// so the curve lower-bounds any other tie policy.
pub fn cms(matrix: &ScoreMatrix) -> Vec<f64> {
    let c = matrix.classes();
    let mut rank_counts = vec![0usize; c];
    for (row, &t) in matrix.scores().iter().zip(matrix.truth()) {
        let s_t = row[t];
        let rivals_not_behind = row
            .iter()
            .enumerate()
            .filter(|&(j, &s)| j != t && s >= s_t)
            .count();
        rank_counts[rivals_not_behind] += 1;
    }
    let n = matrix.probes() as f64;
    let mut curve = Vec::with_capacity(c);
    let mut acc = 0usize;
    for count in rank_counts {
        acc += count;
        curve.push(acc as f64 / n);
    }
    curve
}

/// One operating point of the verification trade-off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// Sweeps a threshold over every distinct observed score plus both
/// infinities: FAR(t) is the fraction of impostor scores (off-truth
/// entries) at or above t, FRR(t) the fraction of genuine scores (truth
/// entries) below t. The EER is read off where FAR meets FRR, linearly
/// interpolated between the two bracketing sweep points; since only counts
/// enter the interpolation, the EER is invariant under any strictly
/// increasing rescoring.
pub fn roc_eer(matrix: &ScoreMatrix) -> Result<(Vec<RocPoint>, f64), EvalError> {
    let mut genuine = Vec::with_capacity(matrix.probes());
    let mut impostor = Vec::new();
    for (row, &t) in matrix.scores().iter().zip(matrix.truth()) {
        for (j, &s) in row.iter().enumerate() {
            if j == t {
                genuine.push(s);
            } else {
                impostor.push(s);
            }
        }
    }
    if impostor.is_empty() {
        return Err(EvalError::NoImpostors);
    }
    genuine.sort_by(f64::total_cmp);
    impostor.sort_by(f64::total_cmp);

    let mut thresholds: Vec<f64> = genuine.iter().chain(&impostor).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let n_gen = genuine.len() as f64;
    let n_imp = impostor.len() as f64;
    let point = |t: f64| {
        // counts via binary search over the sorted pools
        let below_gen = genuine.partition_point(|&s| s < t);
        let below_imp = impostor.partition_point(|&s| s < t);
        RocPoint {
            threshold: t,
            far: (impostor.len() - below_imp) as f64 / n_imp,
            frr: below_gen as f64 / n_gen,
        }
    };

    let mut roc = Vec::with_capacity(thresholds.len() + 2);
    roc.push(point(f64::NEG_INFINITY));
    roc.extend(thresholds.into_iter().map(point));
    roc.push(point(f64::INFINITY));

    // far - frr starts at 1, ends at -1, and never increases; the EER sits
    // where it crosses zero.
    let mut eer = 0.5;
    for i in 1..roc.len() {
        let d_prev = roc[i - 1].far - roc[i - 1].frr;
        let d_here = roc[i].far - roc[i].frr;
        if d_here <= 0.0 {
            if d_here == 0.0 {
                eer = roc[i].far;
            } else {
                let alpha = d_prev / (d_prev - d_here);
                eer = roc[i - 1].far + alpha * (roc[i].far - roc[i - 1].far);
            }
            break;
        }
    }
    Ok((roc, eer))
}

/// The full metric set of one evaluation run. `eer` is absent when the
/// matrix has a single class (no impostor scores exist).
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub cms: Vec<f64>,
    pub roc: Vec<RocPoint>,
    pub eer: Option<f64>,
    pub rank1: f64,
}

impl EvalReport {
    pub fn from_matrix(matrix: &ScoreMatrix) -> Result<EvalReport, EvalError> {
        let curve = cms(matrix);
        let rank1 = curve[0];
        let (roc, eer) = match roc_eer(matrix) {
            Ok((roc, eer)) => (roc, Some(eer)),
            Err(EvalError::NoImpostors) => {
                log::warn!("single enrolled class: ROC and EER are undefined");
                (Vec::new(), None)
            }
            Err(other) => return Err(other),
        };
        Ok(EvalReport {
            cms: curve,
            roc,
            eer,
            rank1,
        })
    }
}

/// Writes a file atomically: the content lands in a sibling temp file that
/// is renamed over the target, so readers never observe a partial write.
pub fn write_text_atomic(path: &Path, content: &str) -> Result<(), EvalError> {
    let io_err = |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| io_err(io::Error::other("path has no file name")))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp_path = path.with_file_name(tmp_name);
    {
        let mut file = std::fs::File::create(&tmp_path).map_err(io_err)?;
        file.write_all(content.as_bytes()).map_err(io_err)?;
        file.sync_all().map_err(io_err)?;
    }
    std::fs::rename(&tmp_path, path).map_err(io_err)
}

/// cms.csv: `rank,score` header, one line per rank starting at 1.
pub fn write_cms_csv(path: &Path, curve: &[f64]) -> Result<(), EvalError> {
    let mut out = String::from("rank,score\n");
    for (i, v) in curve.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, v));
    }
    write_text_atomic(path, &out)
}

/// roc.csv: `threshold,far,frr` header, one line per sweep point.
pub fn write_roc_csv(path: &Path, roc: &[RocPoint]) -> Result<(), EvalError> {
    let mut out = String::from("threshold,far,frr\n");
    for p in roc {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.far, p.frr));
    }
    write_text_atomic(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn matrix(scores: Vec<Vec<f64>>, truth: Vec<usize>) -> ScoreMatrix {
        ScoreMatrix::new(scores, truth).unwrap()
    }

    #[test]
    fn construction_validates_shape_and_content() {
        assert!(matches!(
            ScoreMatrix::new(vec![], vec![]),
            Err(EvalError::EmptyMatrix)
        ));
        assert!(matches!(
            ScoreMatrix::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0, 0]),
            Err(EvalError::RaggedRow { .. })
        ));
        assert!(matches!(
            ScoreMatrix::new(vec![vec![1.0, 2.0]], vec![5]),
            Err(EvalError::BadTruth { .. })
        ));
        assert!(matches!(
            ScoreMatrix::new(vec![vec![f64::NAN, 2.0]], vec![0]),
            Err(EvalError::NonFiniteScore { .. })
        ));
    }

    #[test]
    fn perfect_identification_saturates_cms() {
        let m = matrix(
            vec![vec![5.0, 1.0, 0.0], vec![0.0, 7.0, 1.0], vec![1.0, 0.0, 3.0]],
            vec![0, 1, 2],
        );
        assert_eq!(cms(&m), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn half_right_half_second_by_hand() {
        let m = matrix(vec![vec![2.0, 1.0], vec![3.0, 1.0]], vec![0, 1]);
        assert_eq!(cms(&m), vec![0.5, 1.0]);
    }

    #[test]
    fn ties_count_against_the_true_class() {
        let m = matrix(vec![vec![1.0, 1.0]], vec![0]);
        assert_eq!(cms(&m), vec![0.0, 1.0]);
    }

    #[test]
    fn cms_matches_rank_enumeration_oracle() {
        let mut rng = StdRng::seed_from_u64(61);
        for _ in 0..20 {
            let scores: Vec<Vec<f64>> = (0..10)
                .map(|_| (0..5).map(|_| rng.random_range(-3.0..3.0)).collect())
                .collect();
            let truth: Vec<usize> = (0..10).map(|_| rng.random_range(0..5)).collect();
            let m = matrix(scores.clone(), truth.clone());
            let curve = cms(&m);

            // oracle: order candidates by descending score with the true
            // class sorted after equal-scored rivals, then read its position
            let mut oracle_counts = [0usize; 5];
            for (row, &t) in scores.iter().zip(&truth) {
                let mut order: Vec<usize> = (0..5).collect();
                order.sort_by(|&a, &b| {
                    row[b]
                        .total_cmp(&row[a])
                        .then_with(|| (a == t).cmp(&(b == t)))
                });
                let rank = order.iter().position(|&j| j == t).unwrap();
                oracle_counts[rank] += 1;
            }
            let mut acc = 0;
            for (r, &count) in oracle_counts.iter().enumerate() {
                acc += count;
                assert_eq!(curve[r], acc as f64 / 10.0, "rank {r}");
            }
        }
    }

    proptest! {
        #[test]
        fn cms_is_monotone_and_saturates(seed in 0u64..500) {
            let mut rng = StdRng::seed_from_u64(seed);
            let probes = rng.random_range(1..12);
            let classes = rng.random_range(1..8);
            let scores: Vec<Vec<f64>> = (0..probes)
                .map(|_| (0..classes).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect();
            let truth: Vec<usize> = (0..probes).map(|_| rng.random_range(0..classes)).collect();
            let m = matrix(scores, truth);
            let curve = cms(&m);
            prop_assert_eq!(curve.len(), classes);
            for pair in curve.windows(2) {
                prop_assert!(pair[0] <= pair[1]);
            }
            prop_assert_eq!(*curve.last().unwrap(), 1.0);
        }

        #[test]
        fn pessimistic_cms_lower_bounds_optimistic(seed in 0u64..500) {
            let mut rng = StdRng::seed_from_u64(seed);
            let probes = rng.random_range(1..10);
            let classes = rng.random_range(2..6);
            // coarse scores force plenty of ties
            let scores: Vec<Vec<f64>> = (0..probes)
                .map(|_| (0..classes).map(|_| rng.random_range(0..3) as f64).collect())
                .collect();
            let truth: Vec<usize> = (0..probes).map(|_| rng.random_range(0..classes)).collect();
            let m = matrix(scores.clone(), truth.clone());
            let pessimistic = cms(&m);

            let mut optimistic_counts = vec![0usize; classes];
            for (row, &t) in scores.iter().zip(&truth) {
                let strictly_ahead = row
                    .iter()
                    .enumerate()
                    .filter(|&(j, &s)| j != t && s > row[t])
                    .count();
                optimistic_counts[strictly_ahead] += 1;
            }
            let mut acc = 0;
            for r in 0..classes {
                acc += optimistic_counts[r];
                let optimistic = acc as f64 / probes as f64;
                prop_assert!(pessimistic[r] <= optimistic + 1e-12);
            }
        }
    }

    #[test]
    fn roc_endpoints_are_pinned() {
        let m = matrix(vec![vec![0.9, 0.1], vec![0.2, 0.8]], vec![0, 1]);
        let (roc, _) = roc_eer(&m).unwrap();
        let first = roc.first().unwrap();
        assert_eq!(first.threshold, f64::NEG_INFINITY);
        assert_eq!(first.far, 1.0);
        assert_eq!(first.frr, 0.0);
        let last = roc.last().unwrap();
        assert_eq!(last.threshold, f64::INFINITY);
        assert_eq!(last.far, 0.0);
        assert_eq!(last.frr, 1.0);
        for pair in roc.windows(2) {
            assert!(pair[0].far >= pair[1].far);
            assert!(pair[0].frr <= pair[1].frr);
        }
    }

    #[test]
    fn perfect_separation_has_zero_eer() {
        let m = matrix(
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![0, 1, 2],
        );
        let (_, eer) = roc_eer(&m).unwrap();
        assert_eq!(eer, 0.0);
    }

    #[test]
    fn indistinguishable_scores_give_half_eer() {
        let m = matrix(vec![vec![0.7, 0.7], vec![0.7, 0.7]], vec![0, 1]);
        let (_, eer) = roc_eer(&m).unwrap();
        assert!((eer - 0.5).abs() < 1e-12, "eer = {eer}");
    }

    #[test]
    fn matched_score_distributions_center_on_half() {
        // genuine and impostor pools hold the same multiset of values
        let mut rng = StdRng::seed_from_u64(71);
        let values: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut scores = Vec::new();
        let mut truth = Vec::new();
        for (i, &v) in values.iter().enumerate() {
            // one genuine and one impostor entry per value
            scores.push(vec![v, values[(i + 7) % 40]]);
            truth.push(0);
        }
        let (_, eer) = roc_eer(&matrix(scores, truth)).unwrap();
        assert!((eer - 0.5).abs() < 0.06, "eer = {eer}");
    }

    #[test]
    fn eer_matches_fine_grid_oracle_on_overlapping_gaussians() {
        let mut rng = StdRng::seed_from_u64(83);
        let gen_dist = Normal::new(1.0, 0.6).unwrap();
        let imp_dist = Normal::new(0.0, 0.6).unwrap();
        let mut scores = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..300 {
            scores.push(vec![gen_dist.sample(&mut rng), imp_dist.sample(&mut rng)]);
            truth.push(0);
        }
        let m = matrix(scores.clone(), truth);
        let (_, eer) = roc_eer(&m).unwrap();

        let genuine: Vec<f64> = scores.iter().map(|r| r[0]).collect();
        let impostor: Vec<f64> = scores.iter().map(|r| r[1]).collect();
        let lo = genuine
            .iter()
            .chain(&impostor)
            .fold(f64::INFINITY, |a, &b| a.min(b))
            - 1.0;
        let hi = genuine
            .iter()
            .chain(&impostor)
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            + 1.0;
        let mut best = (f64::INFINITY, 0.5);
        let steps = 400_000;
        for i in 0..=steps {
            let t = lo + (hi - lo) * i as f64 / steps as f64;
            let far = impostor.iter().filter(|&&s| s >= t).count() as f64 / 300.0;
            let frr = genuine.iter().filter(|&&s| s < t).count() as f64 / 300.0;
            let gap = (far - frr).abs();
            if gap < best.0 {
                best = (gap, (far + frr) / 2.0);
            }
        }
        assert!(
            (eer - best.1).abs() <= 1e-3,
            "eer {eer} vs grid oracle {}",
            best.1
        );
    }

    #[test]
    fn eer_is_invariant_under_increasing_rescoring() {
        let mut rng = StdRng::seed_from_u64(97);
        let scores: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let truth: Vec<usize> = (0..30).map(|_| rng.random_range(0..4)).collect();
        let (_, eer) = roc_eer(&matrix(scores.clone(), truth.clone())).unwrap();
        let transformed: Vec<Vec<f64>> = scores
            .iter()
            .map(|row| row.iter().map(|&s| (s * 0.7).exp() + s).collect())
            .collect();
        let (_, eer_t) = roc_eer(&matrix(transformed, truth)).unwrap();
        assert!((eer - eer_t).abs() < 1e-12);
    }

    #[test]
    fn single_class_matrix_has_no_impostors() {
        let m = matrix(vec![vec![1.0], vec![2.0]], vec![0, 0]);
        assert!(matches!(roc_eer(&m), Err(EvalError::NoImpostors)));
        let report = EvalReport::from_matrix(&m).unwrap();
        assert_eq!(report.cms, vec![1.0]);
        assert_eq!(report.eer, None);
        assert!(report.roc.is_empty());
        assert_eq!(report.rank1, 1.0);
    }

    #[test]
    fn report_bundles_the_metrics() {
        let m = matrix(vec![vec![2.0, 1.0], vec![0.5, 1.5]], vec![0, 1]);
        let report = EvalReport::from_matrix(&m).unwrap();
        assert_eq!(report.rank1, report.cms[0]);
        assert_eq!(report.rank1, 1.0);
        assert_eq!(report.eer, Some(0.0));
    }

    #[test]
    fn csv_files_have_headers_and_final_newline() {
        let dir = tempfile::TempDir::new().unwrap();
        let cms_path = dir.path().join("cms.csv");
        write_cms_csv(&cms_path, &[0.5, 1.0]).unwrap();
        let content = std::fs::read_to_string(&cms_path).unwrap();
        assert_eq!(content, "rank,score\n1,0.5\n2,1\n");

        let roc_path = dir.path().join("roc.csv");
        write_roc_csv(
            &roc_path,
            &[RocPoint {
                threshold: f64::NEG_INFINITY,
                far: 1.0,
                frr: 0.0,
            }],
        )
        .unwrap();
        let content = std::fs::read_to_string(&roc_path).unwrap();
        assert_eq!(content, "threshold,far,frr\n-inf,1,0\n");
    }
}
