//! Sizing-error statistics and instance-segmentation metrics.
//!
//! Sums run in input order so results are reproducible bit-for-bit.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::csv_error;
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::types::MaskRegion;

/// Paired ground-truth and predicted sizes in mm.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeSeries<T: Real> {
    actual: Vec<T>,
    predicted: Vec<T>,
}

impl<T: Real> SizeSeries<T> {
    pub fn new(actual: Vec<T>, predicted: Vec<T>) -> Result<Self> {
        if actual.len() != predicted.len() {
            return Err(Error::invalid(format!(
                "series length mismatch: {} actual vs {} predicted",
                actual.len(),
                predicted.len()
            )));
        }
        if actual.is_empty() {
            return Err(Error::invalid("size series is empty"));
        }
        if actual.iter().chain(&predicted).any(|v| !v.is_finite()) {
            return Err(Error::invalid("size series contains a non-finite value"));
        }
        Ok(Self { actual, predicted })
    }

    pub fn actual(&self) -> &[T] {
        &self.actual
    }

    pub fn predicted(&self) -> &[T] {
        &self.predicted
    }

    pub fn len(&self) -> usize {
        self.actual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actual.is_empty()
    }

    fn n(&self) -> T {
        from_usize(self.len())
    }

    fn sse(&self) -> T {
        self.actual
            .iter()
            .zip(&self.predicted)
            .fold(T::zero(), |acc, (&y, &p)| acc + (p - y) * (p - y))
    }
}

pub fn rmse<T: Real>(s: &SizeSeries<T>) -> T {
    (s.sse() / s.n()).sqrt()
}

pub fn mae<T: Real>(s: &SizeSeries<T>) -> T {
    s.actual
        .iter()
        .zip(&s.predicted)
        .fold(T::zero(), |acc, (&y, &p)| acc + (y - p).abs())
        / s.n()
}

/// Mean absolute percentage error, in percent.
pub fn mape<T: Real>(s: &SizeSeries<T>) -> Result<T> {
    if let Some(bad) = s.actual.iter().find(|&&y| y <= T::zero()) {
        return Err(Error::invalid(format!("MAPE needs positive actual sizes, got {bad}")));
    }
    let sum = s
        .actual
        .iter()
        .zip(&s.predicted)
        .fold(T::zero(), |acc, (&y, &p)| acc + ((y - p) / y).abs());
    Ok(sum * lit(100.0) / s.n())
}

pub fn r_squared<T: Real>(s: &SizeSeries<T>) -> Result<T> {
    let mean = s.actual.iter().fold(T::zero(), |a, &y| a + y) / s.n();
    let sst = s.actual.iter().fold(T::zero(), |a, &y| a + (y - mean) * (y - mean));
    if sst == T::zero() {
        return Err(Error::UndefinedStatistic(
            "R² needs actual sizes with nonzero variance".into(),
        ));
    }
    Ok(T::one() - s.sse() / sst)
}

/// JSON-facing summary of a size series. Undefined statistics are `null`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeReport {
    pub rmse_mm: f64,
    pub mae_mm: f64,
    pub mape_pct: Option<f64>,
    pub r_squared: Option<f64>,
    pub n: usize,
}

impl SizeReport {
    pub fn compute<T: Real>(s: &SizeSeries<T>) -> Self {
        Self {
            rmse_mm: to_f64(rmse(s)),
            mae_mm: to_f64(mae(s)),
            mape_pct: mape(s).ok().map(to_f64),
            r_squared: r_squared(s).ok().map(to_f64),
            n: s.len(),
        }
    }
}

/// Reads `id,actual_mm,predicted_mm` rows (header required).
pub fn load_size_series<T: Real>(path: &Path) -> Result<(Vec<String>, SizeSeries<T>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.to_owned(),
            line: 1,
            message: format!("missing column '{name}'"),
        })
    };
    let (ci, ca, cp) = (col("id")?, col("actual_mm")?, col("predicted_mm")?);
    let (mut ids, mut actual, mut predicted) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let num = |k: usize| {
            rec[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(lit::<T>)
                .ok_or_else(|| Error::Parse {
                    path: path.to_owned(),
                    line: i + 2,
                    message: format!("'{}' is not a finite number", &rec[k]),
                })
        };
        ids.push(rec[ci].to_string());
        actual.push(num(ca)?);
        predicted.push(num(cp)?);
    }
    Ok((ids, SizeSeries::new(actual, predicted)?))
}

/// Intersection over union; 0 when both masks are empty.
pub fn mask_iou(a: &MaskRegion, b: &MaskRegion) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "mask dimension mismatch: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredDetection {
    pub mask: MaskRegion,
    pub confidence: f64,
    pub image_id: usize,
}

impl ScoredDetection {
    pub fn new(mask: MaskRegion, confidence: f64, image_id: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::invalid(format!("confidence {confidence} must lie in [0, 1]")));
        }
        Ok(Self {
            mask,
            confidence,
            image_id,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub counts: MatchCounts,
    /// Matched ground-truth index for each prediction, in input order.
    pub assignment: Vec<Option<usize>>,
}

/// Input indices sorted by descending confidence; ties keep input order.
fn confidence_order(preds: &[ScoredDetection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&i, &j| preds[j].confidence.total_cmp(&preds[i].confidence));
    order
}

/// Greedy one-to-one matching of one image's predictions to its ground
/// truths: in descending confidence, each prediction takes the unmatched
/// ground truth of highest IoU, if that IoU reaches `iou_threshold`.
pub fn match_instances(preds: &[ScoredDetection], gts: &[MaskRegion], iou_threshold: f64) -> Result<MatchResult> {
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::invalid(format!(
            "IoU threshold {iou_threshold} must lie in [0, 1]"
        )));
    }
    let mut taken = vec![false; gts.len()];
    let mut assignment = vec![None; preds.len()];
    for i in confidence_order(preds) {
        assignment[i] = best_match(&preds[i].mask, gts, &taken, iou_threshold)?;
        if let Some(g) = assignment[i] {
            taken[g] = true;
        }
    }
    let tp = assignment.iter().filter(|a| a.is_some()).count();
    Ok(MatchResult {
        counts: MatchCounts {
            tp,
            fp: preds.len() - tp,
            fn_: gts.len() - tp,
        },
        assignment,
    })
}

fn best_match(mask: &MaskRegion, gts: &[MaskRegion], taken: &[bool], threshold: f64) -> Result<Option<usize>> {
    let mut best: Option<(usize, f64)> = None;
    for (g, gt) in gts.iter().enumerate() {
        let iou = mask_iou(mask, gt)?;
        if taken[g] || iou < threshold {
            continue;
        }
        if best.is_none_or(|(_, b)| iou > b) {
            best = Some((g, iou));
        }
    }
    Ok(best.map(|(g, _)| g))
}

/// Each ratio is 0 when its denominator is 0.
pub fn precision_recall_f1(c: MatchCounts) -> (f64, f64, f64) {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

/// A ground-truth mask tagged with its image.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthMask {
    pub mask: MaskRegion,
    pub image_id: usize,
}

/// Area under the precision-recall curve with all-point interpolation:
/// precision at each recall level is replaced by the best precision at any
/// recall at least as high.
pub fn average_precision(preds: &[ScoredDetection], gts: &[GroundTruthMask], iou_threshold: f64) -> Result<f64> {
    if gts.is_empty() {
        return Err(Error::UndefinedStatistic(
            "average precision needs at least one ground truth".into(),
        ));
    }
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::invalid(format!(
            "IoU threshold {iou_threshold} must lie in [0, 1]"
        )));
    }
    let mut taken = vec![false; gts.len()];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut curve: Vec<(f64, f64)> = Vec::with_capacity(preds.len());
    for i in confidence_order(preds) {
        let pred = &preds[i];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt.image_id != pred.image_id {
                continue;
            }
            let iou = mask_iou(&pred.mask, &gt.mask)?;
            if taken[g] || iou < iou_threshold {
                continue;
            }
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        match best {
            Some((g, _)) => {
                taken[g] = true;
                tp += 1;
            }
            None => fp += 1,
        }
        curve.push((tp as f64 / gts.len() as f64, tp as f64 / (tp + fp) as f64));
    }
    // Envelope from the right, then sum rectangles over recall increments.
    for k in (0..curve.len().saturating_sub(1)).rev() {
        curve[k].1 = curve[k].1.max(curve[k + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &(r, p) in &curve {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    Ok(ap)
}

/// Mean AP over IoU thresholds (single class).
pub fn map_over_thresholds(preds: &[ScoredDetection], gts: &[GroundTruthMask], thresholds: &[f64]) -> Result<f64> {
    if thresholds.is_empty() {
        return Err(Error::invalid("threshold list is empty"));
    }
    let mut sum = 0.0;
    for &t in thresholds {
        sum += average_precision(preds, gts, t)?;
    }
    Ok(sum / thresholds.len() as f64)
}
