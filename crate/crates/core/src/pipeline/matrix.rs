use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, Variant};
use super::layout::{ensure_dir, read_json, write_json, Layout};
use super::stages::{Pipeline, Stage};
use crate::error::{Error, Result};

/// Outcome of one (seed, variant) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub seed: u64,
    pub variant: String,
    pub score: Option<f64>,
    pub acceptance_rate: Option<f64>,
    pub error: Option<String>,
}

/// One row of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    pub scores: Vec<f64>,
    pub mean: Option<f64>,
    /// Population standard deviation over seeds; 0 for a single seed.
    pub std: Option<f64>,
    /// Percent change of `mean` relative to the full pipeline.
    pub delta_pct: Option<f64>,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub env: String,
    pub tier: String,
    pub cells: Vec<CellResult>,
    pub rows: Vec<SummaryRow>,
    /// Wall-clock seconds per stage, summed over seeds.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

pub fn summarize(cells: &[CellResult], variants: &[Variant]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = variants
        .iter()
        .map(|v| {
            let name = v.name();
            let mine: Vec<&CellResult> = cells.iter().filter(|c| c.variant == name).collect();
            let scores: Vec<f64> = mine.iter().filter_map(|c| c.score).collect();
            let (mean, std) = if scores.is_empty() {
                (None, None)
            } else {
                let n = scores.len() as f64;
                let m = scores.iter().sum::<f64>() / n;
                let var = scores.iter().map(|s| (s - m).powi(2)).sum::<f64>() / n;
                (Some(m), Some(var.sqrt()))
            };
            SummaryRow {
                variant: name,
                scores,
                mean,
                std,
                delta_pct: None,
                failures: mine.iter().filter(|c| c.error.is_some()).count(),
            }
        })
        .collect();
    let full = rows.iter().find(|r| r.variant == Variant::full().name()).and_then(|r| r.mean);
    for r in &mut rows {
        r.delta_pct = match (r.mean, full) {
            (Some(m), Some(f)) if f != 0.0 => Some(100.0 * (m - f) / f.abs()),
            _ => None,
        };
    }
    rows
}

fn cell(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.digits$}"))
}

/// `variant  env/tier  mean  std  delta_pct  n  failures  scores`, tab-separated.
pub fn summary_tsv(report: &RunReport) -> String {
    let mut out = String::from("variant\tenv\ttier\tmean\tstd\tdelta_pct\tn\tfailures\tscores\n");
    for r in &report.rows {
        let scores: Vec<String> = r.scores.iter().map(|s| format!("{s:.2}")).collect();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.variant,
            report.env,
            report.tier,
            cell(r.mean, 2),
            cell(r.std, 2),
            cell(r.delta_pct, 1),
            r.scores.len(),
            r.failures,
            scores.join(",")
        );
    }
    out
}

fn add_timing(timings: &mut BTreeMap<String, f64>, name: &str, dir: &Path) {
    #[derive(Deserialize)]
    struct T {
        seconds: f64,
    }
    if let Ok(t) = read_json::<T>(&dir.join("timings.json")) {
        *timings.entry(name.to_string()).or_default() += t.seconds;
    }
}

/// Run every (seed × variant) cell, continuing past failures, and write
/// `summary.tsv` plus `report.json` under the output root.
pub fn run_matrix(config: &RunConfig, out: &Path, seeds: &[u64], variants: &[Variant], force: bool) -> Result<RunReport> {
    if seeds.is_empty() || variants.is_empty() {
        return Err(Error::Config("a matrix needs at least one seed and one variant".into()));
    }
    ensure_dir(out)?;
    let mut cells = Vec::new();
    let mut timings = BTreeMap::new();
    for &seed in seeds {
        let p = Pipeline::new(config.clone(), out, seed, force)?;
        let shared = [Stage::GenerateData, Stage::TrainSim, Stage::TrainVae, Stage::Synthesize]
            .into_iter()
            .try_for_each(|s| p.run(s, &Variant::full()).map(drop));
        for v in variants {
            let res = shared.as_ref().map_err(|e| Error::Config(format!("shared stage failed: {e}"))).and_then(|_| {
                p.run(Stage::TrainPolicy, v)?;
                p.run(Stage::Evaluate, v)?;
                read_json::<super::stages::EvalFile>(&p.layout.eval(v))
            });
            let c = match res {
                Ok(e) => CellResult {
                    seed,
                    variant: v.name(),
                    score: Some(e.score),
                    acceptance_rate: Some(e.synthesis.acceptance_rate()),
                    error: None,
                },
                Err(e) => {
                    log::error!("cell (seed {seed}, {}) failed: {e}", v.name());
                    CellResult {
                        seed,
                        variant: v.name(),
                        score: None,
                        acceptance_rate: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            cells.push(c);
            add_timing(&mut timings, &format!("train-policy/{}", v.name()), &p.layout.variant_dir(v));
        }
        let l = &p.layout;
        for (name, dir) in [
            ("generate-data", l.data_dir()),
            ("train-sim", l.sim_dir()),
            ("train-vae", l.vae_dir()),
            ("synthesize", l.synth_dir()),
        ] {
            add_timing(&mut timings, name, &dir);
        }
    }
    let report = RunReport {
        config_hash: config.hash(),
        env: config.env.clone(),
        tier: config.tier.clone(),
        rows: summarize(&cells, variants),
        cells,
        timings,
    };
    write_json(&out.join("report.json"), &report)?;
    let tsv = out.join("summary.tsv");
    std::fs::write(&tsv, summary_tsv(&report)).map_err(|e| Error::io(&tsv, e))?;
    Ok(report)
}

/// Seed directories present under `out`, in ascending order.
pub fn seed_layouts(out: &Path) -> Result<Vec<Layout>> {
    let mut seeds: Vec<u64> = std::fs::read_dir(out)
        .map_err(|e| Error::io(out, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str()?.strip_prefix("seed-")?.parse().ok())
        .collect();
    seeds.sort_unstable();
    Ok(seeds.into_iter().map(|s| Layout::new(PathBuf::from(out), s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::config::Ablation;

    fn ok(seed: u64, v: &Variant, s: f64) -> CellResult {
        CellResult {
            seed,
            variant: v.name(),
            score: Some(s),
            acceptance_rate: None,
            error: None,
        }
    }

    #[test]
    fn single_variant_has_zero_delta() {
        let f = Variant::full();
        let rows = summarize(&[ok(0, &f, 40.0)], &[f]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].delta_pct, Some(0.0));
        assert_eq!(rows[0].std, Some(0.0));
    }

    #[test]
    fn deltas_and_population_std() {
        let f = Variant::full();
        let nv = Variant::single(Ablation::NoVae);
        let cells = [ok(0, &f, 40.0), ok(1, &f, 60.0), ok(0, &nv, 20.0), ok(1, &nv, 20.0)];
        let rows = summarize(&cells, &[f, nv]);
        assert_eq!(rows[0].mean, Some(50.0));
        assert_eq!(rows[0].std, Some(10.0));
        assert_eq!(rows[1].delta_pct, Some(-60.0));
    }

    #[test]
    fn failures_are_counted() {
        let f = Variant::full();
        let mut bad = ok(1, &f, 0.0);
        bad.score = None;
        bad.error = Some("boom".into());
        let rows = summarize(&[ok(0, &f, 10.0), bad], &[f]);
        assert_eq!(rows[0].failures, 1);
        assert_eq!(rows[0].scores, vec![10.0]);
    }
}
