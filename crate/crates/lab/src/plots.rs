//! Minimal SVG bar and line charts.

use std::collections::BTreeMap;
use std::path::Path;

use haptolab_core::dynamics::TaskId;
use haptolab_core::render::{Condition, ForceSample};
use svg::node::element::path::Data;
use svg::node::element::{Line, Path as SvgPath, Rectangle, Text};
use svg::Document;

use crate::campaign::CellSummary;
use crate::error::{io_err, Result};

const W: f64 = 640.0;
const H: f64 = 360.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 3] = ["#b2182b", "#2166ac", "#1b7837"];

fn frame(title: &str) -> Document {
    Document::new()
        .set("viewBox", (0, 0, W, H))
        .set("width", W)
        .set("height", H)
        .set("font-family", "sans-serif")
        .set("font-size", 12)
        .add(Rectangle::new().set("width", W).set("height", H).set("fill", "white"))
        .add(Text::new(title).set("x", W / 2.0).set("y", 20).set("text-anchor", "middle").set("font-size", 14))
        .add(axis(MARGIN, H - MARGIN, W - MARGIN, H - MARGIN))
        .add(axis(MARGIN, MARGIN, MARGIN, H - MARGIN))
}

fn axis(x1: f64, y1: f64, x2: f64, y2: f64) -> Line {
    Line::new().set("x1", x1).set("y1", y1).set("x2", x2).set("y2", y2).set("stroke", "black")
}

fn legend(mut doc: Document) -> Document {
    for (i, c) in Condition::ALL.iter().enumerate() {
        let y = MARGIN + 16.0 * i as f64;
        doc = doc
            .add(Rectangle::new().set("x", W - 150.0).set("y", y - 9.0).set("width", 10).set("height", 10).set("fill", COLORS[i]))
            .add(Text::new(c.to_string()).set("x", W - 135.0).set("y", y));
    }
    doc
}

/// Grouped bars of mean ± SD per task and condition.
pub fn condition_bars(title: &str, cells: &BTreeMap<(TaskId, Condition), CellSummary>) -> Document {
    let top = cells.values().map(|c| c.mean + c.sd).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let plot_h = H - 2.0 * MARGIN;
    let slot = (W - 2.0 * MARGIN) / TaskId::ALL.len() as f64;
    let bar = slot / 4.0;
    let y_of = |v: f64| H - MARGIN - plot_h * v / top;
    let mut doc = frame(title);
    for (ti, t) in TaskId::ALL.iter().enumerate() {
        let x0 = MARGIN + slot * ti as f64 + bar / 2.0;
        for (ci, c) in Condition::ALL.iter().enumerate() {
            let Some(s) = cells.get(&(*t, *c)) else { continue };
            let x = x0 + bar * ci as f64;
            doc = doc
                .add(
                    Rectangle::new()
                        .set("x", x)
                        .set("y", y_of(s.mean))
                        .set("width", bar * 0.9)
                        .set("height", H - MARGIN - y_of(s.mean))
                        .set("fill", COLORS[ci]),
                )
                .add(axis(x + bar * 0.45, y_of(s.mean - s.sd), x + bar * 0.45, y_of(s.mean + s.sd)));
        }
        doc = doc.add(Text::new(t.to_string()).set("x", x0 + 1.5 * bar).set("y", H - MARGIN + 16.0).set("text-anchor", "middle"));
    }
    doc = doc.add(Text::new(format!("{top:.3}")).set("x", MARGIN - 4.0).set("y", MARGIN).set("text-anchor", "end"));
    legend(doc)
}

/// Delivered and ideal force over a trial.
pub fn force_trace(title: &str, ticks: &[ForceSample], ideal: &[f64]) -> Document {
    let n = ticks.len().min(ideal.len()).max(2);
    let (lo, hi) = ticks
        .iter()
        .map(|t| t.f_delayed)
        .chain(ideal.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x_of = |k: usize| MARGIN + (W - 2.0 * MARGIN) * k as f64 / (n - 1) as f64;
    let y_of = |v: f64| H - MARGIN - (H - 2.0 * MARGIN) * (v - lo) / span;
    let line = |vals: &mut dyn Iterator<Item = f64>| {
        let mut d = Data::new();
        for (k, v) in vals.enumerate() {
            d = if k == 0 { d.move_to((x_of(k), y_of(v))) } else { d.line_to((x_of(k), y_of(v))) };
        }
        d
    };
    frame(title)
        .add(SvgPath::new().set("d", line(&mut ideal.iter().copied().take(n))).set("fill", "none").set("stroke", "#888").set("stroke-width", 2))
        .add(SvgPath::new().set("d", line(&mut ticks.iter().map(|t| t.f_delayed).take(n))).set("fill", "none").set("stroke", COLORS[1]))
        .add(Text::new(format!("{hi:.3} N")).set("x", MARGIN - 4.0).set("y", MARGIN).set("text-anchor", "end"))
        .add(Text::new(format!("{lo:.3} N")).set("x", MARGIN - 4.0).set("y", H - MARGIN).set("text-anchor", "end"))
}

/// Bars of mean performance index per condition.
pub fn hpi_bars(means: &BTreeMap<Condition, f64>) -> Document {
    let slot = (W - 2.0 * MARGIN) / 3.0;
    let plot_h = H - 2.0 * MARGIN;
    let mut doc = frame("Performance index by condition");
    for (i, c) in Condition::ALL.iter().enumerate() {
        let Some(&m) = means.get(c) else { continue };
        let h = plot_h * m.clamp(0.0, 1.0);
        let x = MARGIN + slot * i as f64 + slot * 0.2;
        doc = doc
            .add(Rectangle::new().set("x", x).set("y", H - MARGIN - h).set("width", slot * 0.6).set("height", h).set("fill", COLORS[i]))
            .add(Text::new(format!("{c} {m:.3}")).set("x", x + slot * 0.3).set("y", H - MARGIN + 16.0).set("text-anchor", "middle"));
    }
    doc
}

pub fn save(path: &Path, doc: &Document) -> Result<()> {
    svg::save(path, doc).map_err(io_err(path))
}
