use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::output::{emit, sig, sig_json, InputDigest, Provenance};
use super::{merge_config, require_file, resolve, thread_pool, CliError, CliResult, Phase};
use crate::io::{csv_error, load_mask_png};
use crate::metrics::{
    average_precision, map_over_thresholds, mask_iou, match_instances, precision_recall_f1, GroundTruthMask,
    MatchCounts, ScoredDetection,
};

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DetArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Predictions csv: `image_id,mask_path,confidence` (paths relative to the csv).
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Ground truth csv: `image_id,mask_path`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// IoU threshold for precision, recall and F1.
    #[arg(long)]
    pub iou_threshold: Option<f64>,
}

pub const DET_CSV_HEADER: &str = "tp,fp,fn,precision,recall,f1,mean_iou,ap50,ap75,map50_95";

struct Listed {
    image_id: usize,
    path: PathBuf,
    confidence: Option<f64>,
}

fn read_list(path: &Path, with_confidence: bool) -> CliResult<Vec<Listed>> {
    let v = |e: csv::Error| CliError::validation(csv_error(path, e));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(v)?;
    let headers = rdr.headers().map_err(v)?.clone();
    let col = |n: &str| {
        headers
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| CliError::validation(format!("{}: missing column '{n}'", path.display())))
    };
    let ic = col("image_id")?;
    let mc = col("mask_path")?;
    let cc = if with_confidence {
        Some(col("confidence")?)
    } else {
        None
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(v)?;
        let bad = |what: &str, s: &str| CliError::validation(format!("{}:{}: bad {what} '{s}'", path.display(), i + 2));
        let image_id = rec[ic].parse().map_err(|_| bad("image_id", &rec[ic]))?;
        let confidence = match cc {
            Some(c) => Some(rec[c].parse::<f64>().map_err(|_| bad("confidence", &rec[c]))?),
            None => None,
        };
        let mask = resolve(dir, Path::new(&rec[mc]));
        require_file("mask_path", &mask)?;
        out.push(Listed {
            image_id,
            path: mask,
            confidence,
        });
    }
    Ok(out)
}

pub fn run(flags: DetArgs) -> CliResult<()> {
    let a = merge_config(&flags, flags.config.as_deref())?;
    let pred_path = a
        .pred
        .clone()
        .ok_or_else(|| CliError::validation("--pred is required"))?;
    let truth_path = a
        .truth
        .clone()
        .ok_or_else(|| CliError::validation("--truth is required"))?;
    require_file("--pred", &pred_path)?;
    require_file("--truth", &truth_path)?;
    let threshold = a.iou_threshold.unwrap_or(0.5);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::validation("--iou-threshold must lie in [0, 1]"));
    }
    let pool = thread_pool(a.jobs)?;

    let pred_list = read_list(&pred_path, true)?;
    let truth_list = read_list(&truth_path, false)?;
    let (preds, gts) = pool.install(|| -> CliResult<_> {
        let preds = pred_list
            .par_iter()
            .map(|l| {
                let m = load_mask_png(&l.path).validation()?;
                ScoredDetection::new(m, l.confidence.unwrap_or(0.0), l.image_id).validation()
            })
            .collect::<CliResult<Vec<_>>>()?;
        let gts = truth_list
            .par_iter()
            .map(|l| {
                Ok(GroundTruthMask {
                    mask: load_mask_png(&l.path).validation()?,
                    image_id: l.image_id,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok((preds, gts))
    })?;

    // Per-image matching, summed in image order.
    let mut images: BTreeMap<usize, (Vec<ScoredDetection>, Vec<crate::types::MaskRegion>)> = BTreeMap::new();
    for p in &preds {
        images.entry(p.image_id).or_default().0.push(p.clone());
    }
    for g in &gts {
        images.entry(g.image_id).or_default().1.push(g.mask.clone());
    }
    let mut counts = MatchCounts::default();
    let mut ious = Vec::new();
    for (p, g) in images.values() {
        let m = match_instances(p, g, threshold).runtime()?;
        counts.tp += m.counts.tp;
        counts.fp += m.counts.fp;
        counts.fn_ += m.counts.fn_;
        for (i, a) in m.assignment.iter().enumerate() {
            if let Some(j) = a {
                ious.push(mask_iou(&p[i].mask, &g[*j]).runtime()?);
            }
        }
    }
    let (precision, recall, f1) = precision_recall_f1(counts);
    let mean_iou = if ious.is_empty() {
        0.0
    } else {
        ious.iter().sum::<f64>() / ious.len() as f64
    };
    let ap50 = average_precision(&preds, &gts, 0.5).runtime()?;
    let ap75 = average_precision(&preds, &gts, 0.75).runtime()?;
    let coco: Vec<f64> = (0..10).map(|k| 0.5 + 0.05 * k as f64).collect();
    let map = map_over_thresholds(&preds, &gts, &coco).runtime()?;

    let csv = format!(
        "{DET_CSV_HEADER}\n{},{},{},{},{},{},{},{},{},{}\n",
        counts.tp,
        counts.fp,
        counts.fn_,
        sig(precision),
        sig(recall),
        sig(f1),
        sig(mean_iou),
        sig(ap50),
        sig(ap75),
        sig(map)
    );
    let params = json!({ "iou_threshold": threshold });
    let doc = json!({
        "provenance": Provenance::new("detmetrics", a.seed, &params, vec![InputDigest::of(&pred_path)?, InputDigest::of(&truth_path)?]),
        "tp": counts.tp,
        "fp": counts.fp,
        "fn": counts.fn_,
        "precision": sig_json(precision),
        "recall": sig_json(recall),
        "f1": sig_json(f1),
        "mean_iou": sig_json(mean_iou),
        "ap50": sig_json(ap50),
        "ap75": sig_json(ap75),
        "map50_95": sig_json(map),
    });
    emit(a.out.as_deref(), &csv, &doc)
}
