use std::fmt::Write as _;
use std::path::Path;

use super::layout::ensure_dir;
use super::matrix::seed_layouts;
use super::stages::MetricsLine;
use crate::error::{Error, Result};

/// Parsed metrics with the count of lines that failed to parse.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedMetrics {
    pub lines: Vec<MetricsLine>,
    pub skipped: usize,
}

pub fn parse_metrics(text: &str) -> ParsedMetrics {
    let mut out = ParsedMetrics::default();
    for raw in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str::<MetricsLine>(raw) {
            Ok(l) => out.lines.push(l),
            Err(_) => out.skipped += 1,
        }
    }
    out
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;

/// A line chart of normalized score against training step.
pub fn render_chart(title: &str, points: &[(f64, f64)]) -> String {
    let x_max = points.iter().map(|p| p.0).fold(0.0_f64, f64::max).max(1.0);
    let y_lo = points.iter().map(|p| p.1).fold(0.0_f64, f64::min);
    let y_hi = points.iter().map(|p| p.1).fold(100.0_f64, f64::max);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + pw * x / x_max;
    let sy = |y: f64| TOP + ph * (1.0 - (y - y_lo) / (y_hi - y_lo));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let (x0, y0, x1, y1) = (LEFT, TOP + ph, LEFT + pw, TOP);
    let _ = writeln!(s, r#"<line x1="{x0:.1}" y1="{y0:.1}" x2="{x1:.1}" y2="{y0:.1}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0:.1}" y1="{y0:.1}" x2="{x0:.1}" y2="{y1:.1}" stroke="black"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x_max * f;
        let yv = y_lo + (y_hi - y_lo) * f;
        let (tx, ty) = (sx(xv), sy(yv));
        let _ = writeln!(s, r#"<line x1="{tx:.1}" y1="{y0:.1}" x2="{tx:.1}" y2="{:.1}" stroke="black"/>"#, y0 + 4.0);
        let _ = writeln!(s, r#"<text x="{tx:.1}" y="{:.1}" text-anchor="middle">{xv:.0}</text>"#, y0 + 16.0);
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{ty:.1}" x2="{x0:.1}" y2="{ty:.1}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.1}</text>"#, x0 - 6.0, ty + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">step</text>"#, LEFT + pw / 2.0, H - 8.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">normalized score</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    if points.len() > 1 {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{:.1},{:.1}", sx(*x), sy(*y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#, pts.join(" "));
    }
    for (x, y) in points {
        let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="steelblue"/>"#, sx(*x), sy(*y));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReportStats {
    pub runs: usize,
    pub points: usize,
    pub skipped: usize,
}

/// Render one chart per run found under `out` into `out/report/`, plus `progress.tsv`.
pub fn emit_report(out: &Path) -> Result<ReportStats> {
    let dir = out.join("report");
    ensure_dir(&dir)?;
    let mut stats = ReportStats::default();
    let mut tsv = String::from("seed\tvariant\tstep\tscore\teval_mean\teval_std\tacceptance_rate\n");
    for layout in seed_layouts(out)? {
        let seed_dir = layout.seed_dir();
        let mut runs: Vec<String> = std::fs::read_dir(&seed_dir)
            .map_err(|e| Error::io(&seed_dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join("metrics.jsonl").is_file())
            .filter_map(|e| e.file_name().to_str().map(str::to_string))
            .collect();
        runs.sort();
        for run in runs {
            let path = seed_dir.join(&run).join("metrics.jsonl");
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let parsed = parse_metrics(&text);
            if parsed.skipped > 0 {
                log::warn!("{}: skipped {} malformed lines", path.display(), parsed.skipped);
            }
            stats.runs += 1;
            stats.points += parsed.lines.len();
            stats.skipped += parsed.skipped;
            let pts: Vec<(f64, f64)> = parsed.lines.iter().map(|l| (l.step as f64, l.score)).collect();
            for l in &parsed.lines {
                let _ = writeln!(
                    tsv,
                    "{}\t{run}\t{}\t{:.3}\t{:.3}\t{:.3}\t{:.4}",
                    layout.seed, l.step, l.score, l.eval_mean, l.eval_std, l.acceptance_rate
                );
            }
            let svg = dir.join(format!("seed-{}-{run}.svg", layout.seed));
            let chart = render_chart(&format!("seed {} / {run}", layout.seed), &pts);
            std::fs::write(&svg, chart).map_err(|e| Error::io(&svg, e))?;
        }
    }
    let p = dir.join("progress.tsv");
    std::fs::write(&p, tsv).map_err(|e| Error::io(&p, e))?;
    Ok(stats)
}
