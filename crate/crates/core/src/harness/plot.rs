//! Minimal SVG charts regenerated from the per-trial CSV files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Self { x: pad(x), y: pad(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN)
    }

    fn open(&self, title: &str, x_label: &str, y_label: &str) -> String {
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
            W / 2.0,
            escape(title)
        );
        let (x0, x1, y0, y1) = (MARGIN, W - MARGIN, H - MARGIN, MARGIN);
        let _ = writeln!(s, "<path d=\"M{x0} {y1} V{y0} H{x1}\" fill=\"none\" stroke=\"black\"/>");
        for k in 0..=4 {
            let t = k as f64 / 4.0;
            let xv = self.x.0 + t * (self.x.1 - self.x.0);
            let yv = self.y.0 + t * (self.y.1 - self.y.0);
            let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", self.px(xv), y0 + 16.0, tick(xv));
            let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", x0 - 4.0, self.py(yv) + 4.0, tick(yv));
        }
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", W / 2.0, H - 12.0, escape(x_label));
        let _ = writeln!(
            s,
            "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>",
            H / 2.0,
            H / 2.0,
            escape(y_label)
        );
        s
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Line chart of each named series against its index.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<f64>)]) -> String {
    let n = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let mut y = range(series.iter().flat_map(|(_, v)| v.iter().copied()));
    if !y.0.is_finite() {
        y = (0.0, 1.0);
    }
    let frame = Frame::new((0.0, n.saturating_sub(1) as f64), y);
    let mut s = frame.open(title, x_label, y_label);
    for (k, (name, values)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut d = String::new();
        for (i, v) in values.iter().enumerate().filter(|(_, v)| v.is_finite()) {
            let _ = write!(d, "{}{:.2} {:.2} ", if d.is_empty() { "M" } else { "L" }, frame.px(i as f64), frame.py(*v));
        }
        let _ = writeln!(s, "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>", d.trim_end());
        let ly = MARGIN + 14.0 * k as f64;
        let _ = writeln!(s, "<text x=\"{}\" y=\"{ly}\" fill=\"{color}\" text-anchor=\"end\">{}</text>", W - MARGIN, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

/// Scatter plot on fixed axes.
pub fn scatter(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)], x: (f64, f64), y: (f64, f64)) -> String {
    let frame = Frame::new(x, y);
    let mut s = frame.open(title, x_label, y_label);
    for (i, &(px, py)) in points.iter().enumerate().filter(|(_, (a, b))| a.is_finite() && b.is_finite()) {
        // Later points are darker so the end of training stands out.
        let shade = 0.2 + 0.8 * (i + 1) as f64 / points.len() as f64;
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"{}\" fill-opacity=\"{shade:.2}\"/>",
            frame.px(px),
            frame.py(py),
            COLORS[0]
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Columns of one trial CSV by header name; empty cells become NaN.
pub fn read_columns(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut cols: BTreeMap<String, Vec<f64>> = headers.iter().map(|h| (h.clone(), Vec::new())).collect();
    for record in reader.records() {
        let record = record?;
        for (h, cell) in headers.iter().zip(record.iter()) {
            let v = if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse().map_err(|_| Error::Config(format!("{}: bad number {cell:?} in column {h}", path.display())))?
            };
            cols.get_mut(h).expect("header present").push(v);
        }
    }
    Ok(cols)
}

/// Trial CSV files in a results directory, ordered by trial index.
pub fn trial_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(usize, PathBuf)> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let name = p.file_name()?.to_str()?;
            let k = name.strip_prefix("trial_")?.strip_suffix(".csv")?.parse().ok()?;
            Some((k, p))
        })
        .collect();
    files.sort();
    Ok(files.into_iter().map(|(_, p)| p).collect())
}

fn mean_across(trials: &[BTreeMap<String, Vec<f64>>], col: &str) -> Option<Vec<f64>> {
    let series: Vec<&Vec<f64>> = trials.iter().filter_map(|t| t.get(col)).collect();
    let n = series.iter().map(|s| s.len()).min()?;
    Some(
        (0..n)
            .map(|i| {
                let vals: Vec<f64> = series.iter().map(|s| s[i]).filter(|v| v.is_finite()).collect();
                if vals.is_empty() {
                    f64::NAN
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                }
            })
            .collect(),
    )
}

/// Writes the SVG charts for a results directory and returns their paths.
///
/// `threshold` marks an episode as converged: joint optimal-action
/// probability for discrete runs, mean reward for continuous ones.
pub fn render_results(dir: &Path, discrete_threshold: f64, reward_threshold: f64) -> Result<Vec<PathBuf>> {
    let files = trial_files(dir)?;
    if files.is_empty() {
        return Err(Error::Config(format!("no trial_<k>.csv files in {}", dir.display())));
    }
    let trials = files.iter().map(|f| read_columns(f)).collect::<Result<Vec<_>>>()?;
    let mut charts: Vec<(&str, String)> = Vec::new();
    let rewards = mean_across(&trials, "mean_reward").unwrap_or_default();
    charts.push((
        "learning_curve.svg",
        line_chart("Mean reward per episode", "episode", "reward", &[("mean over trials".into(), rewards)]),
    ));
    let discrete = trials[0].contains_key("joint_opt");
    let (col, thr) = if discrete { ("joint_opt", discrete_threshold) } else { ("mean_reward", reward_threshold) };
    let n = trials.iter().filter_map(|t| t.get(col).map(Vec::len)).min().unwrap_or(0);
    let conv: Vec<f64> = (0..n)
        .map(|i| trials.iter().filter(|t| t[col][i] >= thr).count() as f64 / trials.len() as f64)
        .collect();
    charts.push((
        "convergence.svg",
        line_chart("Fraction of trials at the global optimum", "episode", "fraction", &[("converged".into(), conv)]),
    ));
    if discrete {
        let mut series = Vec::new();
        for (name, c) in [("rho1 (agent 1 model of agent 2)", "rho1_opt"), ("pi2 (agent 2 policy)", "pi2_opt"), ("freq1 (observed)", "freq1_opt")] {
            if let Some(v) = mean_across(&trials, c) {
                series.push((name.to_string(), v));
            }
        }
        charts.push(("rho_vs_pi.svg", line_chart("Probability of the optimal action", "episode", "probability", &series)));
    } else {
        let mut points = Vec::new();
        for t in &trials {
            points.extend(t["a1_last"].iter().copied().zip(t["a2_last"].iter().copied()));
        }
        charts.push(("actions.svg", scatter("Actions at episode ends", "agent 1", "agent 2", &points, (-10.0, 10.0), (-10.0, 10.0))));
        let series = ["pi1_mean", "pi2_mean", "rho1_mean", "rho2_mean"]
            .iter()
            .filter_map(|c| mean_across(&trials, c).map(|v| (c.to_string(), v)))
            .collect::<Vec<_>>();
        charts.push(("means.svg", line_chart("Policy and opponent-model means", "episode", "action", &series)));
    }
    let mut out = Vec::new();
    for (name, svg) in charts {
        let path = dir.join(name);
        std::fs::write(&path, svg)?;
        out.push(path);
    }
    Ok(out)
}
