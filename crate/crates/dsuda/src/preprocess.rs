//! Source-to-target alignment: sliding-window segmentation, windowed-mean
//! down-sampling, and per-trial min-max normalization.
//!
//! Source trials are cut into overlapping windows whose time span matches a
//! target trial, each window is compressed to the target point count by
//! averaging contiguous runs of points, and every resulting trial (source
//! segments and target trials alike) is min-max normalized on its own.

use serde::{Deserialize, Serialize};

use crate::data::{Domain, ProcessedTrial, RawTrial};
use crate::error::{Error, Result};

/// Geometry of the alignment.
///
/// The derived quantities: window length in points `n_w = round(d_t·n_s/d_s)`,
/// compression step `l = floor(n_w/n_t)`, and residual `r = n_w − l·n_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Source trial duration in milliseconds.
    pub source_duration_ms: f64,
    /// Target trial duration in milliseconds.
    pub target_duration_ms: f64,
    /// Points per source trial.
    pub source_points: usize,
    /// Points per target trial (the aligned length).
    pub target_points: usize,
    /// Sliding-window step in points.
    pub slide_step: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        // Aligned geometry so a generated dataset flows through unchanged;
        // the mismatched-geometry path is configured explicitly.
        PreprocessConfig {
            source_duration_ms: 8.0,
            target_duration_ms: 8.0,
            source_points: 131,
            target_points: 131,
            slide_step: 20,
        }
    }
}

impl PreprocessConfig {
    /// The paper-scale mismatched geometry: 500 points over 10 ms aligned to
    /// 131 points over 8 ms with step 20.
    pub fn mismatched_example() -> Self {
        PreprocessConfig {
            source_duration_ms: 10.0,
            target_duration_ms: 8.0,
            source_points: 500,
            target_points: 131,
            slide_step: 20,
        }
    }

    /// Window length in points: `round(d_t·n_s/d_s)`.
    pub fn window_points(&self) -> usize {
        (self.target_duration_ms * self.source_points as f64 / self.source_duration_ms).round()
            as usize
    }

    /// Compression step `l = floor(n_w/n_t)`.
    pub fn compression_step(&self) -> usize {
        self.window_points() / self.target_points
    }

    /// Residual `r = n_w − l·n_t`; the last `r` pooling windows are one wider.
    pub fn residual(&self) -> usize {
        self.window_points() - self.compression_step() * self.target_points
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.source_duration_ms > 0.0) || !(self.target_duration_ms > 0.0) {
            return Err(Error::Config("durations must be positive".into()));
        }
        if self.source_duration_ms < self.target_duration_ms {
            return Err(Error::Config(format!(
                "source duration {} ms shorter than target duration {} ms",
                self.source_duration_ms, self.target_duration_ms
            )));
        }
        if self.source_points < 2 || self.target_points < 2 {
            return Err(Error::Config("point counts must be at least 2".into()));
        }
        if self.slide_step == 0 {
            return Err(Error::Config("slide_step must be at least 1".into()));
        }
        let n_w = self.window_points();
        if n_w < self.target_points {
            return Err(Error::Config(format!(
                "window of {n_w} points cannot be compressed up to {} points",
                self.target_points
            )));
        }
        if n_w > self.source_points {
            return Err(Error::Config(format!(
                "window of {n_w} points exceeds the {}-point source trial",
                self.source_points
            )));
        }
        Ok(())
    }
}

/// Cut a source trial into sliding windows of `cfg.window_points()` points,
/// starting every `cfg.slide_step` points.
pub fn slide_window(trial: &RawTrial, cfg: &PreprocessConfig) -> Result<Vec<Vec<f64>>> {
    if trial.domain != Domain::Source {
        return Err(Error::Data(format!(
            "sliding window applies to source trials; {} is target-domain",
            trial.subject_id
        )));
    }
    let w = cfg.window_points();
    let n = trial.samples.len();
    if w > n {
        return Err(Error::Data(format!(
            "trial {}: window of {w} points exceeds the {n}-point trial",
            trial.subject_id
        )));
    }
    let mut segments = Vec::new();
    let mut start = 0;
    while start + w <= n {
        segments.push(trial.samples[start..start + w].to_vec());
        start += cfg.slide_step;
    }
    Ok(segments)
}

/// Compress `segment` to `n_t` points by averaging a contiguous partition:
/// the first `n_t − r` windows have width `l`, the last `r` windows width
/// `l+1`, so every input point is used exactly once.
pub fn downsample(segment: &[f64], n_t: usize) -> Result<Vec<f64>> {
    let n_w = segment.len();
    if n_t == 0 {
        return Err(Error::Shape("cannot down-sample to zero points".into()));
    }
    if n_w < n_t {
        return Err(Error::Shape(format!(
            "cannot down-sample {n_w} points up to {n_t} points"
        )));
    }
    let l = n_w / n_t;
    let r = n_w - l * n_t;
    let mut out = Vec::with_capacity(n_t);
    let mut pos = 0;
    for p in 0..n_t {
        let width = if p < n_t - r { l } else { l + 1 };
        let window = &segment[pos..pos + width];
        out.push(window.iter().sum::<f64>() / width as f64);
        pos += width;
    }
    debug_assert_eq!(pos, n_w);
    Ok(out)
}

/// Per-trial min-max normalization into [0,1]. A constant input maps to all
/// zeros with the degenerate flag set.
pub fn min_max_norm(samples: &[f64]) -> Result<(Vec<f64>, bool)> {
    if samples.is_empty() {
        return Err(Error::Shape("cannot normalize an empty vector".into()));
    }
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok((vec![0.0; samples.len()], true));
    }
    let range = max - min;
    let out = samples.iter().map(|&v| ((v - min) / range).clamp(0.0, 1.0)).collect();
    Ok((out, false))
}

fn check_uniform_shape(trials: &[RawTrial], domain: Domain, points: usize, duration: f64) -> Result<()> {
    for (i, t) in trials.iter().enumerate() {
        if t.domain != domain {
            return Err(Error::Data(format!(
                "trial {} (row {i}) tagged {} in the {} set",
                t.subject_id,
                t.domain.name(),
                domain.name()
            )));
        }
        if t.samples.len() != points || t.duration_ms != duration {
            return Err(Error::Data(format!(
                "trial {} (row {i}): {} points over {} ms, expected {points} points over {duration} ms",
                t.subject_id,
                t.samples.len(),
                t.duration_ms
            )));
        }
    }
    Ok(())
}

/// Align a source set to the target format and normalize both domains.
///
/// Source trials are segmented and down-sampled before normalization; target
/// trials are only normalized. Metadata is copied through, and each source
/// segment inherits the label of its origin trial.
pub fn align_dataset(
    source: &[RawTrial],
    target: &[RawTrial],
    cfg: &PreprocessConfig,
) -> Result<(Vec<ProcessedTrial>, Vec<ProcessedTrial>)> {
    cfg.validate()?;
    check_uniform_shape(source, Domain::Source, cfg.source_points, cfg.source_duration_ms)?;
    check_uniform_shape(target, Domain::Target, cfg.target_points, cfg.target_duration_ms)?;

    let mut processed_source = Vec::new();
    for (origin, trial) in source.iter().enumerate() {
        trial.validate()?;
        for (segment_index, segment) in slide_window(trial, cfg)?.into_iter().enumerate() {
            let compressed = downsample(&segment, cfg.target_points)?;
            let (samples, degenerate) = min_max_norm(&compressed)?;
            processed_source.push(ProcessedTrial {
                subject_id: trial.subject_id.clone(),
                domain: trial.domain,
                side: trial.side,
                label: trial.label,
                duration_ms: cfg.target_duration_ms,
                segment_index,
                origin,
                degenerate,
                samples,
            });
        }
    }

    let mut processed_target = Vec::new();
    for (origin, trial) in target.iter().enumerate() {
        trial.validate()?;
        let (samples, degenerate) = min_max_norm(&trial.samples)?;
        processed_target.push(ProcessedTrial {
            subject_id: trial.subject_id.clone(),
            domain: trial.domain,
            side: trial.side,
            label: trial.label,
            duration_ms: trial.duration_ms,
            segment_index: 0,
            origin,
            degenerate,
            samples,
        });
    }

    Ok((processed_source, processed_target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClassLabel, Side};

    fn source_trial(samples: Vec<f64>, duration_ms: f64) -> RawTrial {
        RawTrial {
            subject_id: "s".into(),
            domain: Domain::Source,
            side: Side::Left,
            label: Some(ClassLabel::Control),
            duration_ms,
            samples,
        }
    }

    #[test]
    fn paper_geometry_yields_six_segments() {
        let cfg = PreprocessConfig::mismatched_example();
        assert_eq!(cfg.window_points(), 400);
        let trial = source_trial((0..500).map(|i| i as f64).collect(), 10.0);
        let segments = slide_window(&trial, &cfg).unwrap();
        assert_eq!(segments.len(), 6);
        assert!(segments.iter().all(|s| s.len() == 400));
        // Starts at 0, 20, ..., 100.
        assert_eq!(segments[1][0], 20.0);
        assert_eq!(segments[5][0], 100.0);
    }

    #[test]
    fn full_width_window_yields_one_segment() {
        let cfg = PreprocessConfig {
            source_duration_ms: 8.0,
            target_duration_ms: 8.0,
            source_points: 10,
            target_points: 10,
            slide_step: 3,
        };
        let trial = source_trial((0..10).map(|i| i as f64).collect(), 8.0);
        let segments = slide_window(&trial, &cfg).unwrap();
        assert_eq!(segments.len(), 1);
        assert_eq!(segments[0], trial.samples);
    }

    #[test]
    fn segment_starts_enumerate_correctly() {
        // n_s = 10, w = 4, step = 2: starts at points 1,3,5,7 (1-based).
        let cfg = PreprocessConfig {
            source_duration_ms: 10.0,
            target_duration_ms: 4.0,
            source_points: 10,
            target_points: 4,
            slide_step: 2,
        };
        assert_eq!(cfg.window_points(), 4);
        let trial = source_trial((1..=10).map(|i| i as f64).collect(), 10.0);
        let segments = slide_window(&trial, &cfg).unwrap();
        assert_eq!(segments.len(), 4);
        assert_eq!(segments[0][0], 1.0);
        assert_eq!(segments[3][0], 7.0);
    }

    #[test]
    fn oversized_window_is_rejected() {
        let cfg = PreprocessConfig {
            source_duration_ms: 10.0,
            target_duration_ms: 9.0,
            source_points: 10,
            target_points: 9,
            slide_step: 1,
        };
        let trial = source_trial(vec![0.0; 5], 10.0); // shorter than declared
        assert!(slide_window(&trial, &cfg).is_err());
    }

    #[test]
    fn downsample_paper_partition() {
        // 400 -> 131: l = 3, r = 7; 124 windows of 3 then 7 windows of 4.
        let segment: Vec<f64> = (0..400).map(|i| i as f64).collect();
        let out = downsample(&segment, 131).unwrap();
        assert_eq!(out.len(), 131);
        // First window = mean(0,1,2).
        assert_eq!(out[0], 1.0);
        // Window 124 is the first wide one: points 372..376.
        assert_eq!(out[124], (372.0 + 373.0 + 374.0 + 375.0) / 4.0);
        // Last window covers 396..400.
        assert_eq!(out[130], (396.0 + 397.0 + 398.0 + 399.0) / 4.0);
    }

    #[test]
    fn downsample_identity_when_lengths_match() {
        let segment = vec![4.0, -1.0, 0.5];
        assert_eq!(downsample(&segment, 3).unwrap(), segment);
    }

    #[test]
    fn downsample_hand_case() {
        let out = downsample(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3).unwrap();
        assert_eq!(out, vec![1.5, 3.5, 5.5]);
    }

    #[test]
    fn downsample_rejects_upsampling() {
        assert!(downsample(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn min_max_norm_cases() {
        let (out, flag) = min_max_norm(&[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.5, 1.0]);
        assert!(!flag);

        let (out, flag) = min_max_norm(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 0.0]);
        assert!(flag);

        let (out, flag) = min_max_norm(&[-1.0, 0.0, 3.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.25, 1.0]);
        assert!(!flag);
    }

    #[test]
    fn min_max_norm_is_idempotent() {
        let (once, _) = min_max_norm(&[3.0, -2.0, 7.5, 0.1]).unwrap();
        let (twice, _) = min_max_norm(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    fn paper_source_set(n: usize) -> Vec<RawTrial> {
        (0..n)
            .map(|k| {
                let mut t = source_trial(
                    (0..500).map(|i| ((i + k) as f64 * 0.37).sin()).collect(),
                    10.0,
                );
                t.subject_id = format!("s{k:03}");
                t
            })
            .collect()
    }

    fn paper_target_set(n: usize) -> Vec<RawTrial> {
        (0..n)
            .map(|k| RawTrial {
                subject_id: format!("t{k:03}"),
                domain: Domain::Target,
                side: if k % 2 == 0 { Side::Left } else { Side::Right },
                label: None,
                duration_ms: 8.0,
                samples: (0..131).map(|i| ((i * (k + 1)) as f64 * 0.11).cos()).collect(),
            })
            .collect()
    }

    #[test]
    fn align_multiplies_source_by_segment_count() {
        let cfg = PreprocessConfig::mismatched_example();
        let source = paper_source_set(408);
        let target = paper_target_set(80);
        let (ps, pt) = align_dataset(&source, &target, &cfg).unwrap();
        assert_eq!(ps.len(), 2448); // 408 trials x 6 segments
        assert_eq!(pt.len(), 80);
        assert!(ps.iter().all(|t| t.samples.len() == 131));
        assert!(pt.iter().all(|t| t.samples.len() == 131));
        assert!(ps
            .iter()
            .all(|t| t.samples.iter().all(|&v| (0.0..=1.0).contains(&v))));
        // Labels inherited from the origin trial.
        assert!(ps.iter().all(|t| t.label == Some(ClassLabel::Control)));
    }

    #[test]
    fn align_empty_source_still_normalizes_target() {
        let cfg = PreprocessConfig::mismatched_example();
        let (ps, pt) = align_dataset(&[], &paper_target_set(3), &cfg).unwrap();
        assert!(ps.is_empty());
        assert_eq!(pt.len(), 3);
    }

    #[test]
    fn align_rejects_inconsistent_shape_naming_the_trial() {
        let cfg = PreprocessConfig::mismatched_example();
        let mut source = paper_source_set(3);
        source[1].samples.truncate(499);
        source[1].subject_id = "bad-one".into();
        let err = align_dataset(&source, &paper_target_set(2), &cfg).unwrap_err();
        assert!(err.to_string().contains("bad-one"), "{err}");
    }

    #[test]
    fn partition_widths_always_sum_to_input_length() {
        for n_w in 1..=120usize {
            for n_t in 1..=n_w {
                let l = n_w / n_t;
                let r = n_w - l * n_t;
                assert_eq!((n_t - r) * l + r * (l + 1), n_w);
                // And the implementation consumes every point exactly once.
                let segment: Vec<f64> = (0..n_w).map(|i| i as f64).collect();
                let out = downsample(&segment, n_t).unwrap();
                assert_eq!(out.len(), n_t);
            }
        }
    }

    #[test]
    fn downsampling_preserves_weighted_mean() {
        let segment: Vec<f64> = (0..400).map(|i| ((i as f64) * 0.7).sin() * 3.0 + 1.0).collect();
        let n_t = 131;
        let out = downsample(&segment, n_t).unwrap();
        let l = segment.len() / n_t;
        let r = segment.len() - l * n_t;
        let weighted: f64 = out
            .iter()
            .enumerate()
            .map(|(p, &v)| v * if p < n_t - r { l as f64 } else { (l + 1) as f64 })
            .sum();
        let total: f64 = segment.iter().sum();
        assert!(
            (weighted - total).abs() / total.abs().max(1.0) < 1e-12,
            "weighted mean drifted: {weighted} vs {total}"
        );
    }

    #[test]
    fn segment_count_formula_holds_by_enumeration() {
        for n_s in 1..=50usize {
            for w in 1..=n_s {
                for step in 1..=n_s {
                    let mut count = 0;
                    let mut start = 0;
                    while start + w <= n_s {
                        count += 1;
                        start += step;
                    }
                    let formula = (n_s - w) / step + 1;
                    assert_eq!(count, formula, "n_s={n_s} w={w} step={step}");
                }
            }
        }
    }

    #[test]
    fn downsampling_preserves_monotonicity() {
        let segment: Vec<f64> = (0..97).map(|i| (i as f64).sqrt()).collect();
        let out = downsample(&segment, 31).unwrap();
        for pair in out.windows(2) {
            assert!(pair[0] <= pair[1]);
        }
    }
}
