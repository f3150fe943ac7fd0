//! Aggregates run directories into two self-contained SVG figures and a
//! summary table.
//!
//! `curves.svg` plots normalized score against iteration: one thin polyline
//! per run and, for every label shared by several runs, a mean line with a
//! shaded standard-error band (half-width = sample std / √n at each
//! iteration). `bars.svg` shows each label's final score with an error bar.
//! `summary.csv` lists the same final-score statistics as text.
//!
//! Runs are grouped by label: a directory name ending in `-s<digits>` (the
//! seed convention, e.g. `cartpole-proprio-s3`) is grouped under the name
//! with that suffix stripped; anything else is its own label.
//!
//! Output is byte-deterministic for the same inputs: coordinates are fixed
//! two-decimal strings, full-precision statistics ride along in `data-*`
//! attributes, and labels are emitted in sorted order. Rows whose score is
//! `nan` (for example expert runs, which have no expert baseline) are left
//! out of curves and statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pifo_core::gfmt::format_g17;

use crate::error::{AppError, Result};
use crate::metrics::{read_metrics, MetricsRow};
use crate::pipeline::{mean, std_error};

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 780.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 440.0;

/// One loaded run directory.
pub struct RunData {
    pub dir: PathBuf,
    pub name: String,
    pub label: String,
    pub rows: Vec<MetricsRow>,
}

/// Strips a trailing `-s<digits>` seed suffix; otherwise the name itself.
pub fn label_of(name: &str) -> String {
    if let Some(pos) = name.rfind("-s") {
        let digits = &name[pos + 2..];
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            return name[..pos].to_string();
        }
    }
    name.to_string()
}

/// Reads `metrics.csv` from every run directory, in the given order.
pub fn load_runs(dirs: &[PathBuf]) -> Result<Vec<RunData>> {
    let mut runs = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let rows = read_metrics(&dir.join("metrics.csv"))?;
        runs.push(RunData { dir: dir.clone(), label: label_of(&name), name, rows });
    }
    Ok(runs)
}

/// Writes `curves.svg`, `bars.svg`, and `summary.csv` into `out`.
pub fn emit_report(dirs: &[PathBuf], out: &Path) -> Result<()> {
    if dirs.is_empty() {
        return Err(AppError::Usage("--run-dirs needs at least one run directory".into()));
    }
    let runs = load_runs(dirs)?;
    std::fs::create_dir_all(out).map_err(AppError::io(out))?;
    let write = |name: &str, text: String| -> Result<()> {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(AppError::io(&path))
    };
    write("curves.svg", curves_svg(&runs))?;
    write("bars.svg", bars_svg(&runs))?;
    write("summary.csv", summary_csv(&runs))
}

/// (iteration, score) pairs with non-finite scores dropped.
fn curve_points(rows: &[MetricsRow]) -> Vec<(usize, f64)> {
    rows.iter()
        .filter(|r| r.normalized_score.is_finite())
        .map(|r| (r.iteration, r.normalized_score))
        .collect()
}

/// The final row's score, or `nan` for empty or all-`nan` runs.
pub fn final_score(rows: &[MetricsRow]) -> f64 {
    rows.last().map_or(f64::NAN, |r| r.normalized_score)
}

struct LabelGroup<'a> {
    label: &'a str,
    runs: Vec<&'a RunData>,
}

/// Groups runs by label, labels sorted, members in input order.
fn group_by_label(runs: &[RunData]) -> Vec<LabelGroup<'_>> {
    let mut map: BTreeMap<&str, Vec<&RunData>> = BTreeMap::new();
    for run in runs {
        map.entry(&run.label).or_default().push(run);
    }
    map.into_iter().map(|(label, runs)| LabelGroup { label, runs }).collect()
}

fn color_for(groups: &[LabelGroup<'_>], label: &str) -> &'static str {
    let idx = groups.iter().position(|g| g.label == label).unwrap_or(0);
    PALETTE[idx % PALETTE.len()]
}

/// Mean and standard error of the label's score at every iteration present
/// (with a finite score) in all member runs.
fn label_band(group: &LabelGroup<'_>) -> Vec<(usize, f64, f64)> {
    let first = curve_points(&group.runs[0].rows);
    let mut out = Vec::new();
    for (it, _) in first {
        let mut vals = Vec::with_capacity(group.runs.len());
        for run in &group.runs {
            match run
                .rows
                .iter()
                .find(|r| r.iteration == it && r.normalized_score.is_finite())
            {
                Some(r) => vals.push(r.normalized_score),
                None => break,
            }
        }
        if vals.len() == group.runs.len() {
            out.push((it, mean(&vals), std_error(&vals)));
        }
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn px(v: f64) -> String {
    format!("{v:.2}")
}

struct Scale {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Scale {
    fn x(&self, v: f64) -> f64 {
        LEFT + (v - self.x0) / (self.x1 - self.x0) * (RIGHT - LEFT)
    }

    fn y(&self, v: f64) -> f64 {
        BOTTOM - (v - self.y0) / (self.y1 - self.y0) * (BOTTOM - TOP)
    }
}

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH:.0} {HEIGHT:.0}\" \
         width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" font-family=\"monospace\" font-size=\"12\">\n\
         <title>{}</title>\n\
         <rect x=\"0\" y=\"0\" width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" fill=\"white\"/>\n",
        xml_escape(title)
    )
}

fn axes(svg: &mut String, scale: &Scale, x_label: &str, y_label: &str) {
    let _ = write!(
        svg,
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = px(LEFT),
        r = px(RIGHT),
        t = px(TOP),
        b = px(BOTTOM),
    );
    for i in 0..=4 {
        let fx = i as f64 / 4.0;
        let vx = scale.x0 + fx * (scale.x1 - scale.x0);
        let vy = scale.y0 + fx * (scale.y1 - scale.y0);
        let x = scale.x(vx);
        let y = scale.y(vy);
        let _ = write!(
            svg,
            "<line x1=\"{x}\" y1=\"{b}\" x2=\"{x}\" y2=\"{b2}\" stroke=\"black\"/>\n\
             <text x=\"{x}\" y=\"{ty}\" text-anchor=\"middle\">{vx:.2}</text>\n\
             <line x1=\"{l}\" y1=\"{y}\" x2=\"{l2}\" y2=\"{y}\" stroke=\"black\"/>\n\
             <text x=\"{tx}\" y=\"{y}\" text-anchor=\"end\" dominant-baseline=\"middle\">{vy:.2}</text>\n",
            x = px(x),
            b = px(BOTTOM),
            b2 = px(BOTTOM + 5.0),
            ty = px(BOTTOM + 18.0),
            l = px(LEFT),
            l2 = px(LEFT - 5.0),
            y = px(y),
            tx = px(LEFT - 8.0),
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{cx}\" y=\"{by}\" text-anchor=\"middle\">{xl}</text>\n\
         <text x=\"{lx}\" y=\"{cy}\" text-anchor=\"middle\" transform=\"rotate(-90 {lx} {cy})\">{yl}</text>\n",
        cx = px((LEFT + RIGHT) / 2.0),
        by = px(HEIGHT - 8.0),
        xl = xml_escape(x_label),
        lx = px(16.0),
        cy = px((TOP + BOTTOM) / 2.0),
        yl = xml_escape(y_label),
    );
}

fn polyline(svg: &mut String, scale: &Scale, pts: &[(usize, f64)], attrs: &str) {
    if pts.is_empty() {
        return;
    }
    let coords: Vec<String> =
        pts.iter().map(|&(it, v)| format!("{},{}", px(scale.x(it as f64)), px(scale.y(v)))).collect();
    let _ = write!(svg, "<polyline {attrs} fill=\"none\" points=\"{}\"/>\n", coords.join(" "));
}

/// Learning curves: every run's score trace plus per-label mean and band.
pub fn curves_svg(runs: &[RunData]) -> String {
    let groups = group_by_label(runs);
    let mut max_iter: f64 = 1.0;
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 1.0;
    for run in runs {
        for (it, v) in curve_points(&run.rows) {
            max_iter = max_iter.max(it as f64);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let pad = 0.05 * (hi - lo);
    let scale = Scale { x0: 0.0, x1: max_iter, y0: lo - pad, y1: hi + pad };

    let mut svg = svg_open("Normalized score by training iteration");
    axes(&mut svg, &scale, "iteration", "normalized score");

    // Bands first so lines draw above them.
    for group in &groups {
        if group.runs.len() < 2 {
            continue;
        }
        let band = label_band(group);
        if band.is_empty() {
            continue;
        }
        let color = color_for(&groups, group.label);
        let mut d = String::new();
        for (i, &(it, m, se)) in band.iter().enumerate() {
            let cmd = if i == 0 { "M" } else { "L" };
            let _ = write!(d, "{cmd} {} {} ", px(scale.x(it as f64)), px(scale.y(m + se)));
        }
        for &(it, m, se) in band.iter().rev() {
            let _ = write!(d, "L {} {} ", px(scale.x(it as f64)), px(scale.y(m - se)));
        }
        d.push('Z');
        let data: Vec<String> =
            band.iter().map(|&(it, _, se)| format!("{it}:{}", format_g17(se))).collect();
        let _ = write!(
            svg,
            "<path data-label=\"{}\" data-band=\"{}\" fill=\"{color}\" fill-opacity=\"0.2\" \
             stroke=\"none\" d=\"{d}\"/>\n",
            xml_escape(group.label),
            data.join(";"),
        );
    }
    for group in &groups {
        let color = color_for(&groups, group.label);
        let solo = group.runs.len() == 1;
        for run in &group.runs {
            let attrs = format!(
                "data-run=\"{}\" stroke=\"{color}\" stroke-width=\"1\" stroke-opacity=\"{}\"",
                xml_escape(&run.name),
                if solo { "1" } else { "0.35" },
            );
            polyline(&mut svg, &scale, &curve_points(&run.rows), &attrs);
        }
        if !solo {
            let band = label_band(group);
            let pts: Vec<(usize, f64)> = band.iter().map(|&(it, m, _)| (it, m)).collect();
            let attrs = format!(
                "data-label=\"{}\" stroke=\"{color}\" stroke-width=\"2\"",
                xml_escape(group.label)
            );
            polyline(&mut svg, &scale, &pts, &attrs);
        }
    }
    for (i, group) in groups.iter().enumerate() {
        let color = color_for(&groups, group.label);
        let y = TOP + 14.0 * (i as f64 + 1.0);
        let _ = write!(
            svg,
            "<rect x=\"{x}\" y=\"{ry}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n\
             <text x=\"{tx}\" y=\"{ty}\">{label}</text>\n",
            x = px(RIGHT - 180.0),
            ry = px(y - 9.0),
            tx = px(RIGHT - 166.0),
            ty = px(y),
            label = xml_escape(group.label),
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Final normalized score per label, with standard-error whiskers.
pub fn bars_svg(runs: &[RunData]) -> String {
    let groups = group_by_label(runs);
    let stats: Vec<(&str, f64, f64)> = groups
        .iter()
        .map(|g| {
            let finals: Vec<f64> =
                g.runs.iter().map(|r| final_score(&r.rows)).filter(|v| v.is_finite()).collect();
            if finals.is_empty() {
                (g.label, f64::NAN, f64::NAN)
            } else {
                (g.label, mean(&finals), std_error(&finals))
            }
        })
        .collect();

    let mut lo: f64 = 0.0;
    let mut hi: f64 = 1.0;
    for &(_, m, se) in &stats {
        if m.is_finite() {
            lo = lo.min(m - se);
            hi = hi.max(m + se);
        }
    }
    let pad = 0.05 * (hi - lo);
    let scale = Scale { x0: 0.0, x1: 1.0, y0: lo - pad, y1: hi + pad };

    let mut svg = svg_open("Final normalized score by label");
    axes(&mut svg, &scale, "", "normalized score");
    let slot = (RIGHT - LEFT) / stats.len() as f64;
    for (i, &(label, m, se)) in stats.iter().enumerate() {
        let color = color_for(&groups, label);
        let cx = LEFT + slot * (i as f64 + 0.5);
        let _ = write!(
            svg,
            "<g data-label=\"{}\" data-mean=\"{}\" data-se=\"{}\">\n",
            xml_escape(label),
            format_g17(m),
            format_g17(se),
        );
        if m.is_finite() {
            let y_zero = scale.y(scale.y0.max(0.0));
            let y_mean = scale.y(m);
            let (top, height) = if y_mean <= y_zero {
                (y_mean, y_zero - y_mean)
            } else {
                (y_zero, y_mean - y_zero)
            };
            let _ = write!(
                svg,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{w}\" height=\"{h}\" fill=\"{color}\"/>\n",
                x = px(cx - slot * 0.3),
                y = px(top),
                w = px(slot * 0.6),
                h = px(height),
            );
            if se > 0.0 {
                let y_hi = scale.y(m + se);
                let y_lo = scale.y(m - se);
                let _ = write!(
                    svg,
                    "<line x1=\"{cx}\" y1=\"{y1}\" x2=\"{cx}\" y2=\"{y2}\" stroke=\"black\"/>\n\
                     <line x1=\"{a}\" y1=\"{y1}\" x2=\"{b}\" y2=\"{y1}\" stroke=\"black\"/>\n\
                     <line x1=\"{a}\" y1=\"{y2}\" x2=\"{b}\" y2=\"{y2}\" stroke=\"black\"/>\n",
                    cx = px(cx),
                    y1 = px(y_hi),
                    y2 = px(y_lo),
                    a = px(cx - 8.0),
                    b = px(cx + 8.0),
                );
            }
        }
        let _ = write!(
            svg,
            "<text x=\"{x}\" y=\"{y}\" text-anchor=\"middle\">{label}</text>\n</g>\n",
            x = px(cx),
            y = px(BOTTOM + 18.0),
            label = xml_escape(label),
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Final-score table: one row per label.
pub fn summary_csv(runs: &[RunData]) -> String {
    let groups = group_by_label(runs);
    let mut out = String::from("label,runs,final_score_mean,final_score_stderr\n");
    for g in &groups {
        let finals: Vec<f64> =
            g.runs.iter().map(|r| final_score(&r.rows)).filter(|v| v.is_finite()).collect();
        let (m, se) = if finals.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (mean(&finals), std_error(&finals))
        };
        let _ = writeln!(out, "{},{},{},{}", g.label, g.runs.len(), format_g17(m), format_g17(se));
    }
    out
}
