//! Confusion-matrix metrics with per-side breakdowns and ROC/AUC curves.
//!
//! Class 1 (tinnitus) is the positive class. A metric whose denominator is
//! zero is reported as undefined (`None`) and rendered as `n/a`, never as 0.

use crate::data::Side;
use crate::error::{Error, Result};

/// Binary confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Evaluation slice, mirroring the both/left/right table layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slice {
    Both,
    Left,
    Right,
}

impl Slice {
    pub fn name(self) -> &'static str {
        match self {
            Slice::Both => "both",
            Slice::Left => "left",
            Slice::Right => "right",
        }
    }
}

/// The seven reported criteria for one slice. `None` marks an undefined
/// ratio (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub slice: Slice,
    pub npv: Option<f64>,
    pub tnr: Option<f64>,
    pub n_f1: Option<f64>,
    pub ppv: Option<f64>,
    pub tpr: Option<f64>,
    pub p_f1: Option<f64>,
    pub acc: Option<f64>,
}

impl MetricsReport {
    pub fn undefined(slice: Slice) -> Self {
        MetricsReport {
            slice,
            npv: None,
            tnr: None,
            n_f1: None,
            ppv: None,
            tpr: None,
            p_f1: None,
            acc: None,
        }
    }

    pub fn values(&self) -> [Option<f64>; 7] {
        [self.npv, self.tnr, self.n_f1, self.ppv, self.tpr, self.p_f1, self.acc]
    }
}

/// Names matching [`MetricsReport::values`] order, as used in CSV headers.
pub const METRIC_NAMES: [&str; 7] = ["npv", "tnr", "n_f1", "ppv", "tpr", "p_f1", "acc"];

fn check_binary(values: &[u8], what: &str) -> Result<()> {
    if let Some(v) = values.iter().find(|&&v| v > 1) {
        return Err(Error::Data(format!("{what} contains non-binary value {v}")));
    }
    Ok(())
}

/// Count the confusion matrix of binary predictions against truths.
pub fn confusion(predictions: &[u8], truths: &[u8]) -> Result<ConfusionCounts> {
    if predictions.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Data("cannot build a confusion matrix from zero items".into()));
    }
    check_binary(predictions, "predictions")?;
    check_binary(truths, "truths")?;
    let mut counts = ConfusionCounts::default();
    for (&p, &t) in predictions.iter().zip(truths) {
        match (p, t) {
            (1, 1) => counts.tp += 1,
            (1, 0) => counts.fp += 1,
            (0, 0) => counts.tn += 1,
            (0, 1) => counts.fn_ += 1,
            _ => unreachable!(),
        }
    }
    Ok(counts)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

fn harmonic(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) if a + b > 0.0 => Some(2.0 * a * b / (a + b)),
        (Some(a), Some(b)) if a == 0.0 && b == 0.0 => Some(0.0),
        _ => None,
    }
}

/// Derive the seven metrics from confusion counts.
pub fn report(counts: &ConfusionCounts, slice: Slice) -> MetricsReport {
    if counts.total() == 0 {
        return MetricsReport::undefined(slice);
    }
    let npv = ratio(counts.tn, counts.tn + counts.fn_);
    let tnr = ratio(counts.tn, counts.tn + counts.fp);
    let ppv = ratio(counts.tp, counts.tp + counts.fp);
    let tpr = ratio(counts.tp, counts.tp + counts.fn_);
    MetricsReport {
        slice,
        npv,
        tnr,
        n_f1: harmonic(npv, tnr),
        ppv,
        tpr,
        p_f1: harmonic(ppv, tpr),
        acc: Some((counts.tp + counts.tn) as f64 / counts.total() as f64),
    }
}

/// Both/left/right reports. An empty side slice yields a fully undefined
/// report rather than an error.
pub fn side_reports(
    predictions: &[u8],
    truths: &[u8],
    sides: &[Side],
) -> Result<[MetricsReport; 3]> {
    if predictions.len() != truths.len() || predictions.len() != sides.len() {
        return Err(Error::Shape(format!(
            "mismatched lengths: {} predictions, {} truths, {} sides",
            predictions.len(),
            truths.len(),
            sides.len()
        )));
    }
    let both = report(&confusion(predictions, truths)?, Slice::Both);
    let mut out = [both, MetricsReport::undefined(Slice::Left), MetricsReport::undefined(Slice::Right)];
    for (slot, side, slice) in [(1usize, Side::Left, Slice::Left), (2, Side::Right, Slice::Right)] {
        let preds: Vec<u8> = predictions
            .iter()
            .zip(sides)
            .filter(|(_, s)| **s == side)
            .map(|(p, _)| *p)
            .collect();
        let ts: Vec<u8> = truths
            .iter()
            .zip(sides)
            .filter(|(_, s)| **s == side)
            .map(|(t, _)| *t)
            .collect();
        if !preds.is_empty() {
            out[slot] = report(&confusion(&preds, &ts)?, slice);
        }
    }
    Ok(out)
}

/// One point of a ROC curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// Per-class ROC curves with micro/macro AUC summaries.
///
/// The class-0 curve treats class 0 as positive with `1 - score` as its
/// score; the micro average pools both per-class decision sets.
#[derive(Debug, Clone, PartialEq)]
pub struct RocSeries {
    pub class0: Vec<RocPoint>,
    pub class1: Vec<RocPoint>,
    pub auc_class0: f64,
    pub auc_class1: f64,
    pub auc_micro: f64,
    pub auc_macro: f64,
}

/// Threshold sweep over one score vector; `positives[i]` says whether item
/// `i` belongs to the positive class of this curve.
fn roc_curve(scores: &[f64], positives: &[bool]) -> (Vec<RocPoint>, f64) {
    let p = positives.iter().filter(|&&b| b).count() as f64;
    let n = positives.len() as f64 - p;
    debug_assert!(p > 0.0 && n > 0.0);

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut i = 0;
    while i < order.len() {
        // Items sharing a score move together, which draws tied groups as a
        // single diagonal segment and keeps the trapezoid rule equal to the
        // concordant-pair count with ties at one half.
        let score = scores[order[i]];
        while i < order.len() && scores[order[i]] == score {
            if positives[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push(RocPoint { fpr: fp / n, tpr: tp / p });
    }
    let mut auc = 0.0;
    for pair in points.windows(2) {
        auc += (pair[1].fpr - pair[0].fpr) * (pair[1].tpr + pair[0].tpr) / 2.0;
    }
    (points, auc)
}

/// ROC curves and AUC values from positive-class probabilities.
pub fn roc_auc(scores: &[f64], truths: &[u8]) -> Result<RocSeries> {
    if scores.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} truths",
            scores.len(),
            truths.len()
        )));
    }
    check_binary(truths, "truths")?;
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Value(format!("non-finite score {s}")));
    }
    let positives = truths.iter().filter(|&&t| t == 1).count();
    if positives == 0 || positives == truths.len() {
        return Err(Error::Data(
            "ROC needs at least one item of each class".into(),
        ));
    }

    let class1_pos: Vec<bool> = truths.iter().map(|&t| t == 1).collect();
    let (class1, auc_class1) = roc_curve(scores, &class1_pos);

    let inverted: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
    let class0_pos: Vec<bool> = truths.iter().map(|&t| t == 0).collect();
    let (class0, auc_class0) = roc_curve(&inverted, &class0_pos);

    // Micro: pool the two per-class decision sets into one ranking problem.
    let mut pooled_scores = Vec::with_capacity(scores.len() * 2);
    let mut pooled_pos = Vec::with_capacity(scores.len() * 2);
    pooled_scores.extend_from_slice(scores);
    pooled_pos.extend_from_slice(&class1_pos);
    pooled_scores.extend_from_slice(&inverted);
    pooled_pos.extend_from_slice(&class0_pos);
    let (_, auc_micro) = roc_curve(&pooled_scores, &pooled_pos);

    Ok(RocSeries {
        class0,
        class1,
        auc_class0,
        auc_class1,
        auc_micro,
        auc_macro: (auc_class0 + auc_class1) / 2.0,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

/// Render reports as the metrics CSV: `slice,npv,tnr,n_f1,ppv,tpr,p_f1,acc`.
pub fn reports_to_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("slice,npv,tnr,n_f1,ppv,tpr,p_f1,acc\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.slice.name(),
            fmt_opt(r.npv),
            fmt_opt(r.tnr),
            fmt_opt(r.n_f1),
            fmt_opt(r.ppv),
            fmt_opt(r.tpr),
            fmt_opt(r.p_f1),
            fmt_opt(r.acc),
        ));
    }
    out
}

/// Render a ROC series as CSV: `class,fpr,tpr` rows, then a trailing
/// `auc,<micro>,<macro>` summary row.
pub fn roc_to_csv(series: &RocSeries) -> String {
    let mut out = String::from("class,fpr,tpr\n");
    for p in &series.class0 {
        out.push_str(&format!("0,{:.6},{:.6}\n", p.fpr, p.tpr));
    }
    for p in &series.class1 {
        out.push_str(&format!("1,{:.6},{:.6}\n", p.fpr, p.tpr));
    }
    out.push_str(&format!("auc,{:.6},{:.6}\n", series.auc_micro, series.auc_macro));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_perfect_and_complement() {
        let c = confusion(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!((c.tp, c.tn, c.fp, c.fn_), (2, 1, 0, 0));

        let c = confusion(&[0, 1, 0], &[1, 0, 1]).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
        assert_eq!((c.fp, c.fn_), (1, 2));
    }

    #[test]
    fn confusion_hand_count() {
        let c = confusion(&[1, 1, 0, 0, 1], &[1, 0, 0, 1, 1]).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (2, 1, 1, 1));
    }

    #[test]
    fn confusion_rejects_bad_input() {
        assert!(confusion(&[1, 0], &[1]).is_err());
        assert!(confusion(&[2], &[1]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn f1_reproduces_reported_rows() {
        // Printed NPV/TNR and PPV/TPR pairs must regenerate the printed F1s.
        let n_f1 = harmonic(Some(0.467), Some(0.525)).unwrap();
        assert!((n_f1 - 0.494).abs() < 0.001, "{n_f1}");
        let p_f1 = harmonic(Some(0.480), Some(0.600)).unwrap();
        assert!((p_f1 - 0.533).abs() < 0.001, "{p_f1}");
        let n_f1 = harmonic(Some(0.789), Some(0.750)).unwrap();
        assert!((n_f1 - 0.769).abs() < 0.001, "{n_f1}");
        let p_f1 = harmonic(Some(0.762), Some(0.800)).unwrap();
        assert!((p_f1 - 0.780).abs() < 0.001, "{p_f1}");
    }

    #[test]
    fn perfect_predictions_score_one_everywhere() {
        let preds = [1, 0, 1, 0, 1];
        let r = report(&confusion(&preds, &preds).unwrap(), Slice::Both);
        for v in r.values() {
            assert_eq!(v, Some(1.0));
        }
    }

    #[test]
    fn zero_denominators_become_undefined() {
        // All predicted positive: TN + FN = 0, so NPV is undefined.
        let r = report(&confusion(&[1, 1], &[1, 0]).unwrap(), Slice::Both);
        assert_eq!(r.npv, None);
        assert_eq!(r.acc, Some(0.5));
    }

    #[test]
    fn side_reports_with_single_side() {
        let preds = [1, 0, 1];
        let truths = [1, 0, 0];
        let sides = [Side::Left, Side::Left, Side::Left];
        let [both, left, right] = side_reports(&preds, &truths, &sides).unwrap();
        assert_eq!(both.acc, Some(2.0 / 3.0));
        assert_eq!(left.acc, both.acc);
        assert!(right.values().iter().all(|v| v.is_none()));
    }

    #[test]
    fn side_reports_match_bruteforce_slices() {
        let preds = [1, 0, 1, 1, 0, 0, 1, 0];
        let truths = [1, 0, 0, 1, 1, 0, 1, 1];
        let sides = [
            Side::Left,
            Side::Right,
            Side::Left,
            Side::Right,
            Side::Left,
            Side::Right,
            Side::Left,
            Side::Right,
        ];
        let [both, left, right] = side_reports(&preds, &truths, &sides).unwrap();
        // Brute-force recomputation per slice.
        let slice =
            |want: Option<Side>| -> (Vec<u8>, Vec<u8>) {
                let mut p = Vec::new();
                let mut t = Vec::new();
                for i in 0..preds.len() {
                    if want.is_none() || want == Some(sides[i]) {
                        p.push(preds[i]);
                        t.push(truths[i]);
                    }
                }
                (p, t)
            };
        for (got, want_side, slice_tag) in [
            (both, None, Slice::Both),
            (left, Some(Side::Left), Slice::Left),
            (right, Some(Side::Right), Slice::Right),
        ] {
            let (p, t) = slice(want_side);
            let expect = report(&confusion(&p, &t).unwrap(), slice_tag);
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn identical_side_behavior_gives_identical_reports() {
        let preds = [1, 0, 1, 0];
        let truths = [1, 0, 0, 1];
        let sides = [Side::Left, Side::Left, Side::Right, Side::Right];
        // Left items (1,0)/(1,0): tp=1 tn=1. Right items (1,0)/(0,1): fp=1 fn=1.
        // Use a symmetric arrangement instead:
        let preds2 = [1, 0, 1, 0];
        let truths2 = [1, 0, 1, 0];
        let [both, left, right] = side_reports(&preds2, &truths2, &sides).unwrap();
        assert_eq!(left.values(), right.values());
        assert_eq!(left.values(), both.values());
        let _ = (preds, truths);
    }

    #[test]
    fn roc_perfectly_separated_is_one() {
        let series = roc_auc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(series.auc_class1, 1.0);
        assert_eq!(series.auc_class0, 1.0);
        assert_eq!(series.auc_micro, 1.0);
        assert_eq!(series.auc_macro, 1.0);
    }

    #[test]
    fn roc_constant_scores_are_chance() {
        let series = roc_auc(&[0.4, 0.4, 0.4, 0.4], &[1, 0, 1, 0]).unwrap();
        assert!((series.auc_class1 - 0.5).abs() < 1e-15);
        assert!((series.auc_micro - 0.5).abs() < 1e-15);
    }

    #[test]
    fn roc_hand_case() {
        let series = roc_auc(&[0.9, 0.8, 0.4, 0.3], &[1, 0, 1, 0]).unwrap();
        assert!((series.auc_class1 - 0.75).abs() < 1e-15);
    }

    #[test]
    fn roc_rejects_single_class() {
        assert!(roc_auc(&[0.1, 0.9], &[1, 1]).is_err());
        assert!(roc_auc(&[0.1, 0.9], &[0, 0]).is_err());
    }

    #[test]
    fn roc_curve_is_monotone() {
        let scores = [0.1, 0.7, 0.7, 0.3, 0.9, 0.2, 0.5];
        let truths = [0, 1, 0, 1, 1, 0, 1];
        let series = roc_auc(&scores, &truths).unwrap();
        for curve in [&series.class0, &series.class1] {
            for pair in curve.windows(2) {
                assert!(pair[1].fpr >= pair[0].fpr);
                assert!(pair[1].tpr >= pair[0].tpr);
            }
        }
    }

    /// Brute-force Mann-Whitney statistic: concordant pairs, ties at 1/2.
    fn mann_whitney(scores: &[f64], truths: &[u8]) -> f64 {
        let mut concordant = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            if truths[i] != 1 {
                continue;
            }
            for (j, &sj) in scores.iter().enumerate() {
                if truths[j] != 0 {
                    continue;
                }
                pairs += 1.0;
                if si > sj {
                    concordant += 1.0;
                } else if si == sj {
                    concordant += 0.5;
                }
            }
        }
        concordant / pairs
    }

    #[test]
    fn auc_equals_pair_counting_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..300 {
            let n = rng.gen_range(2..=50);
            let mut truths: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            truths[0] = 1;
            if n > 1 {
                truths[1] = 0;
            }
            // Coarse grid so score ties actually occur.
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=10) as f64 / 10.0).collect();
            let series = roc_auc(&scores, &truths).unwrap();
            let oracle = mann_whitney(&scores, &truths);
            assert!(
                (series.auc_class1 - oracle).abs() < 1e-12,
                "auc {} vs oracle {}",
                series.auc_class1,
                oracle
            );
        }
    }

    #[test]
    fn label_swap_exchanges_metric_families() {
        let preds = [1, 0, 1, 1, 0, 1, 0, 0, 1];
        let truths = [1, 0, 0, 1, 1, 1, 0, 1, 0];
        let r = report(&confusion(&preds, &truths).unwrap(), Slice::Both);
        let swapped_preds: Vec<u8> = preds.iter().map(|p| 1 - p).collect();
        let swapped_truths: Vec<u8> = truths.iter().map(|t| 1 - t).collect();
        let s = report(&confusion(&swapped_preds, &swapped_truths).unwrap(), Slice::Both);
        assert_eq!(r.ppv, s.npv);
        assert_eq!(r.tpr, s.tnr);
        assert_eq!(r.p_f1, s.n_f1);
        assert_eq!(r.npv, s.ppv);
        assert_eq!(r.tnr, s.tpr);
        assert_eq!(r.n_f1, s.p_f1);
        assert_eq!(r.acc, s.acc);
    }

    #[test]
    fn metrics_are_scale_free() {
        let preds = [1, 0, 1, 0, 1];
        let truths = [1, 0, 0, 1, 1];
        let r1 = report(&confusion(&preds, &truths).unwrap(), Slice::Both);
        let mut preds_k = Vec::new();
        let mut truths_k = Vec::new();
        for _ in 0..7 {
            preds_k.extend_from_slice(&preds);
            truths_k.extend_from_slice(&truths);
        }
        let rk = report(&confusion(&preds_k, &truths_k).unwrap(), Slice::Both);
        assert_eq!(r1.values(), rk.values());
    }

    #[test]
    fn defined_metrics_stay_in_unit_interval() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(1..=30);
            let preds: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            let truths: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            let r = report(&confusion(&preds, &truths).unwrap(), Slice::Both);
            for v in r.values().into_iter().flatten() {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn csv_rendering_uses_na_for_undefined() {
        let r = report(&confusion(&[1, 1], &[1, 0]).unwrap(), Slice::Both);
        let csv = reports_to_csv(&[r]);
        assert!(csv.contains("n/a"));
        assert!(csv.starts_with("slice,npv,tnr,n_f1,ppv,tpr,p_f1,acc\n"));
    }
}
