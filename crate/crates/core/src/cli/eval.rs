use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::output::{emit, field, sig, sig_json, InputDigest, Provenance};
use super::{merge_config, require_file, CliError, CliResult, Phase};
use crate::io::csv_error;
use crate::metrics::{SizeReport, SizeSeries};

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Predictions csv: `id` plus `diameter_mm` or `predicted_mm` (a `fit` report works).
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Ground truth csv: `id` plus `diameter_mm` or `actual_mm` (a benchmark manifest works).
    /// Optional when the predictions carry `actual_mm`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Report one metrics row per value of this column (only `method`).
    #[arg(long)]
    pub group_by: Option<String>,
}

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn load(path: &Path) -> CliResult<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| CliError::validation(csv_error(path, e)))?;
        let headers = rdr
            .headers()
            .map_err(|e| CliError::validation(csv_error(path, e)))?
            .iter()
            .map(str::to_owned)
            .collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_owned).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(|e| CliError::validation(csv_error(path, e)))?;
        Ok(Self { headers, rows })
    }

    fn col(&self, names: &[&str]) -> Option<usize> {
        names.iter().find_map(|n| self.headers.iter().position(|h| h == n))
    }
}

fn number(path: &Path, line: usize, s: &str) -> CliResult<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::validation(format!("{}:{line}: '{s}' is not a finite number", path.display())))
}

pub const EVAL_CSV_HEADER: &str = "group,n,rmse_mm,mae_mm,mape_pct,r_squared";

pub fn run(flags: EvalArgs) -> CliResult<()> {
    let a = merge_config(&flags, flags.config.as_deref())?;
    let pred_path = a
        .pred
        .clone()
        .ok_or_else(|| CliError::validation("--pred is required"))?;
    require_file("--pred", &pred_path)?;
    if let Some(t) = &a.truth {
        require_file("--truth", t)?;
    }
    match a.group_by.as_deref() {
        None | Some("method") => {}
        Some(other) => {
            return Err(CliError::validation(format!(
                "--group-by: unsupported column '{other}'"
            )))
        }
    }

    let pred = Table::load(&pred_path)?;
    let id_col = pred
        .col(&["id"])
        .ok_or_else(|| CliError::validation(format!("{}: missing column 'id'", pred_path.display())))?;
    let p_col = pred.col(&["predicted_mm", "diameter_mm"]).ok_or_else(|| {
        CliError::validation(format!(
            "{}: missing column 'predicted_mm' or 'diameter_mm'",
            pred_path.display()
        ))
    })?;
    let group_col = match a.group_by.as_deref() {
        Some(g) => Some(
            pred.col(&[g])
                .ok_or_else(|| CliError::validation(format!("{}: missing column '{g}'", pred_path.display())))?,
        ),
        None => None,
    };

    let mut inputs = vec![InputDigest::of(&pred_path)?];
    let truth: HashMap<String, f64> = match &a.truth {
        Some(t) => {
            inputs.push(InputDigest::of(t)?);
            let table = Table::load(t)?;
            let ic = table
                .col(&["id"])
                .ok_or_else(|| CliError::validation(format!("{}: missing column 'id'", t.display())))?;
            let vc = table.col(&["actual_mm", "diameter_mm"]).ok_or_else(|| {
                CliError::validation(format!("{}: missing column 'actual_mm' or 'diameter_mm'", t.display()))
            })?;
            table
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| Ok((r[ic].clone(), number(t, i + 2, &r[vc])?)))
                .collect::<CliResult<_>>()?
        }
        None => {
            let ac = pred
                .col(&["actual_mm"])
                .ok_or_else(|| CliError::validation("--truth is required unless the predictions carry 'actual_mm'"))?;
            pred.rows
                .iter()
                .enumerate()
                .map(|(i, r)| Ok((r[id_col].clone(), number(&pred_path, i + 2, &r[ac])?)))
                .collect::<CliResult<_>>()?
        }
    };

    // Rows without a prediction (failed fits) are skipped and counted.
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut skipped = 0usize;
    for (i, r) in pred.rows.iter().enumerate() {
        if r[p_col].is_empty() {
            skipped += 1;
            continue;
        }
        let p = number(&pred_path, i + 2, &r[p_col])?;
        let y = *truth
            .get(&r[id_col])
            .ok_or_else(|| CliError::validation(format!("id '{}' has no ground truth", r[id_col])))?;
        let key = group_col.map(|c| r[c].clone()).unwrap_or_else(|| "all".to_owned());
        let g = groups.entry(key).or_default();
        g.0.push(y);
        g.1.push(p);
    }
    if groups.is_empty() {
        return Err(CliError::validation("no predictions to evaluate"));
    }

    let reports: Vec<(String, SizeReport)> = groups
        .into_iter()
        .map(|(k, (y, p))| Ok((k, SizeReport::compute(&SizeSeries::new(y, p).validation()?))))
        .collect::<CliResult<_>>()?;

    let opt = |v: Option<f64>| v.map(sig).unwrap_or_default();
    let mut csv = String::from(EVAL_CSV_HEADER);
    csv.push('\n');
    for (k, r) in &reports {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            field(k),
            r.n,
            sig(r.rmse_mm),
            sig(r.mae_mm),
            opt(r.mape_pct),
            opt(r.r_squared)
        );
    }
    let groups_json: Vec<Value> = reports
        .iter()
        .map(|(k, r)| {
            json!({
                "group": k,
                "n": r.n,
                "rmse_mm": sig_json(r.rmse_mm),
                "mae_mm": sig_json(r.mae_mm),
                "mape_pct": r.mape_pct.map(sig_json),
                "r_squared": r.r_squared.map(sig_json),
            })
        })
        .collect();
    let params = json!({ "group_by": a.group_by });
    let mut doc = json!({
        "provenance": Provenance::new("eval", a.seed, &params, inputs),
        "skipped": skipped,
        "groups": groups_json,
    });
    if reports.len() == 1 && a.group_by.is_none() {
        let r = &doc["groups"][0].clone();
        for k in ["rmse_mm", "mae_mm", "mape_pct", "r_squared", "n"] {
            doc[k] = r[k].clone();
        }
    }
    emit(a.out.as_deref(), &csv, &doc)
}
