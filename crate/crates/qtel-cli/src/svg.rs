//! Minimal self-contained SVG charts: fixed 800x600 viewBox, linear axes
//! with tick labels, no external assets, and fully deterministic output.

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 770.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 540.0;

pub struct Series {
    pub name: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
    /// Symmetric y error bars, parallel to `points`.
    pub y_err: Option<Vec<f64>>,
    /// Draw a polyline through the points; otherwise circle markers.
    pub line: bool,
}

pub struct XyPlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Vertical reference lines with captions.
    pub v_lines: Vec<(f64, String)>,
}

pub struct BarPlot {
    pub title: String,
    pub y_label: String,
    pub categories: Vec<String>,
    /// (name, color, one value per category).
    pub groups: Vec<(String, &'static str, Vec<f64>)>,
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Tick step of the form {1, 2, 2.5, 5} x 10^k closest to range/5 from above.
fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    for m in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if m * mag >= raw {
            return m * mag;
        }
    }
    10.0 * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

/// Smallest decimal count that prints the tick step exactly.
fn tick_label(v: f64, step: f64) -> String {
    let mut decimals = 0;
    while decimals < 9 {
        let scale = 10f64.powi(decimals);
        if (step * scale - (step * scale).round()).abs() < 1e-9 {
            break;
        }
        decimals += 1;
    }
    let decimals = decimals as usize;
    format!("{v:.decimals$}")
}

struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        LEFT + (v - self.x_lo) / (self.x_hi - self.x_lo) * (RIGHT - LEFT)
    }

    fn y(&self, v: f64) -> f64 {
        BOTTOM - (v - self.y_lo) / (self.y_hi - self.y_lo) * (BOTTOM - TOP)
    }
}

fn pad(lo: f64, hi: f64) -> (f64, f64) {
    if (hi - lo).abs() < 1e-12 {
        let w = lo.abs().max(1.0) * 0.1;
        (lo - w, hi + w)
    } else {
        let w = (hi - lo) * 0.05;
        (lo - w, hi + w)
    }
}

fn open_svg(out: &mut String, title: &str) {
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"400\" y=\"28\" text-anchor=\"middle\" font-size=\"18\">{title}</text>\n"
    ));
}

fn draw_axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str, x_ticks: bool) {
    out.push_str(&format!(
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        RIGHT - LEFT,
        BOTTOM - TOP
    ));
    let x_step = nice_step(frame.x_hi - frame.x_lo);
    if x_ticks {
        for t in ticks(frame.x_lo, frame.x_hi) {
            let px = fmt(frame.x(t));
            out.push_str(&format!(
                "<line x1=\"{px}\" y1=\"{BOTTOM}\" x2=\"{px}\" y2=\"{}\" stroke=\"black\"/>\n\
                 <text x=\"{px}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
                BOTTOM + 6.0,
                BOTTOM + 22.0,
                tick_label(t, x_step)
            ));
        }
    }
    let y_step = nice_step(frame.y_hi - frame.y_lo);
    for t in ticks(frame.y_lo, frame.y_hi) {
        let py = fmt(frame.y(t));
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{LEFT}\" y2=\"{py}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{py}\" text-anchor=\"end\" dominant-baseline=\"middle\" \
             font-size=\"12\">{}</text>\n",
            LEFT - 6.0,
            LEFT - 10.0,
            tick_label(t, y_step)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">{x_label}</text>\n",
        (LEFT + RIGHT) / 2.0,
        HEIGHT - 12.0
    ));
    out.push_str(&format!(
        "<text x=\"20\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\" \
         transform=\"rotate(-90 20 {})\">{y_label}</text>\n",
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0
    ));
}

fn draw_legend(out: &mut String, entries: &[(String, &'static str)]) {
    for (i, (name, color)) in entries.iter().enumerate() {
        let y = TOP + 18.0 + 20.0 * i as f64;
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"14\" height=\"10\" fill=\"{color}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"12\">{name}</text>\n",
            RIGHT - 160.0,
            y - 9.0,
            RIGHT - 140.0,
            y
        ));
    }
}

impl XyPlot {
    pub fn render(&self) -> String {
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for s in &self.series {
            for (i, &(x, y)) in s.points.iter().enumerate() {
                xs.push(x);
                let e = s.y_err.as_ref().map_or(0.0, |v| v[i]);
                ys.push(y - e);
                ys.push(y + e);
            }
        }
        for &(x, _) in &self.v_lines {
            xs.push(x);
        }
        let lo_hi = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) }
        };
        let (x_lo, x_hi) = pad(lo_hi(&xs).0, lo_hi(&xs).1);
        let (y_lo, y_hi) = pad(lo_hi(&ys).0, lo_hi(&ys).1);
        let frame = Frame { x_lo, x_hi, y_lo, y_hi };

        let mut out = String::new();
        open_svg(&mut out, &self.title);
        draw_axes(&mut out, &frame, &self.x_label, &self.y_label, true);
        for (x, label) in &self.v_lines {
            let px = fmt(frame.x(*x));
            out.push_str(&format!(
                "<line x1=\"{px}\" y1=\"{TOP}\" x2=\"{px}\" y2=\"{BOTTOM}\" stroke=\"gray\" \
                 stroke-dasharray=\"6 4\"/>\n\
                 <text x=\"{px}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" \
                 fill=\"gray\">{label}</text>\n",
                TOP - 6.0
            ));
        }
        for s in &self.series {
            if s.line {
                let pts: Vec<String> = s
                    .points
                    .iter()
                    .map(|&(x, y)| format!("{},{}", fmt(frame.x(x)), fmt(frame.y(y))))
                    .collect();
                out.push_str(&format!(
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                    pts.join(" "),
                    s.color
                ));
            } else {
                let color = s.color;
                for (i, &(x, y)) in s.points.iter().enumerate() {
                    let (px, py) = (fmt(frame.x(x)), fmt(frame.y(y)));
                    if let Some(errs) = &s.y_err {
                        let (lo, hi) = (fmt(frame.y(y - errs[i])), fmt(frame.y(y + errs[i])));
                        out.push_str(&format!(
                            "<line x1=\"{px}\" y1=\"{lo}\" x2=\"{px}\" y2=\"{hi}\" \
                             stroke=\"{color}\"/>\n"
                        ));
                    }
                    out.push_str(&format!(
                        "<circle cx=\"{px}\" cy=\"{py}\" r=\"3\" fill=\"{color}\"/>\n"
                    ));
                }
            }
        }
        draw_legend(&mut out, &self.series.iter().map(|s| (s.name.clone(), s.color)).collect::<Vec<_>>());
        out.push_str("</svg>\n");
        out
    }
}

impl BarPlot {
    pub fn render(&self) -> String {
        let max = self
            .groups
            .iter()
            .flat_map(|(_, _, v)| v.iter().cloned())
            .fold(0.0f64, f64::max);
        let frame = Frame { x_lo: 0.0, x_hi: 1.0, y_lo: 0.0, y_hi: (max * 1.1).max(1e-6) };
        let mut out = String::new();
        open_svg(&mut out, &self.title);
        draw_axes(&mut out, &frame, "", &self.y_label, false);
        let n_cat = self.categories.len().max(1);
        let n_grp = self.groups.len().max(1);
        let slot = (RIGHT - LEFT) / n_cat as f64;
        let bar = slot * 0.7 / n_grp as f64;
        for (ci, cat) in self.categories.iter().enumerate() {
            let x0 = LEFT + slot * ci as f64 + slot * 0.15;
            for (gi, (_, color, values)) in self.groups.iter().enumerate() {
                let v = values[ci];
                let top = frame.y(v);
                out.push_str(&format!(
                    "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\"/>\n",
                    fmt(x0 + bar * gi as f64),
                    fmt(top),
                    fmt(bar * 0.9),
                    fmt(BOTTOM - top)
                ));
            }
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{cat}</text>\n",
                fmt(LEFT + slot * (ci as f64 + 0.5)),
                BOTTOM + 22.0
            ));
        }
        let entries: Vec<(String, &'static str)> =
            self.groups.iter().map(|(n, c, _)| (n.clone(), *c)).collect();
        draw_legend(&mut out, &entries);
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xy_plot_is_deterministic_and_well_formed() {
        let plot = XyPlot {
            title: "demo".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series {
                name: "curve".into(),
                color: "steelblue",
                points: vec![(0.0, 0.5), (1.0, 0.8), (2.0, 0.9)],
                y_err: None,
                line: true,
            }],
            v_lines: vec![(1.5, "ref".into())],
        };
        let a = plot.render();
        let b = plot.render();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
        assert!(a.contains("viewBox=\"0 0 800 600\""));
        assert!(a.contains("polyline"));
    }

    #[test]
    fn ticks_cover_the_range() {
        let t = ticks(0.0, 50.0);
        assert!(t.first().copied().unwrap() >= 0.0);
        assert!(t.last().copied().unwrap() <= 50.0 + 1e-9);
        assert!(t.len() >= 4 && t.len() <= 8, "{t:?}");
        assert!(ticks(0.64, 1.0).len() >= 4);
    }

    #[test]
    fn bar_plot_renders_groups() {
        let plot = BarPlot {
            title: "bars".into(),
            y_label: "weight".into(),
            categories: vec!["a".into(), "b".into()],
            groups: vec![
                ("mc".into(), "steelblue", vec![0.2, 0.5]),
                ("analytic".into(), "darkorange", vec![0.25, 0.45]),
            ],
        };
        let svg = plot.render();
        // Background + frame + one legend swatch per group + one bar per value.
        assert_eq!(svg.matches("<rect").count(), 2 + 2 + 4);
        assert!(svg.contains("</svg>"));
    }
}
