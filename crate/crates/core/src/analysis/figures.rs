use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ImpactPoint, SwapImpact, SwapPoint};
use crate::error::{Error, Result};
use crate::models::Task;
use crate::nn::PROB_EPS;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

/// Write scatter and impact CSVs plus SVG figures into `out_dir` and return
/// the written paths in a fixed order.
pub fn emit_figures(
    points: &[SwapPoint],
    curve: &[SwapImpact],
    impact_points: &[ImpactPoint],
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        written.push(path);
        Ok(())
    };

    for task in Task::BOTH {
        let subset: Vec<&SwapPoint> = points.iter().filter(|p| p.task == task).collect();
        put(&format!("swap_scatter_{task}.csv"), scatter_csv(&subset))?;
        put(
            &format!("swap_scatter_{task}.svg"),
            scatter_svg(&subset, task),
        )?;
    }
    put("swap_impact.csv", impact_csv(curve))?;
    put("swap_impact_points.csv", impact_points_csv(impact_points))?;
    put("swap_impact.svg", impact_svg(curve))?;
    Ok(written)
}

fn scatter_csv(points: &[&SwapPoint]) -> String {
    let mut out = String::from("item_id,position,task,p_orig,p_swap,lo_orig,lo_swap\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.item_id, p.position, p.task, p.p_orig, p.p_swap, p.lo_orig, p.lo_swap
        );
    }
    out
}

fn impact_csv(curve: &[SwapImpact]) -> String {
    let mut out = String::from("position,ratio_ctr,ratio_cvr,ratio_seen,n\n");
    for c in curve {
        let seen = c.ratio_seen.map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            c.position, c.ratio_ctr, c.ratio_cvr, seen, c.n
        );
    }
    out
}

fn impact_points_csv(points: &[ImpactPoint]) -> String {
    let mut out = String::from("item_id,position,ratio_ctr,ratio_cvr\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.item_id, p.position, p.ratio_ctr, p.ratio_cvr
        );
    }
    out
}

/// Linear map from a data range onto pixel coordinates.
struct Axis {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, from: f64, to: f64) -> Self {
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, lo + 1.0)
        };
        Axis { lo, hi, from, to }
    }

    fn map(&self, v: f64) -> f64 {
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=4)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0)
            .collect()
    }
}

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, "<metadata>log-odds clamp eps={PROB_EPS:e}</metadata>");
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#,
        WIDTH / 2.0
    );
}

fn axes(out: &mut String, x: &Axis, y: &Axis, x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (
        MARGIN,
        WIDTH - MARGIN / 2.0,
        HEIGHT - MARGIN,
        MARGIN / 2.0 + 10.0,
    );
    let _ = writeln!(
        out,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    for t in x.ticks() {
        let px = x.map(t);
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{t:.2}</text>"#,
            y0 + 5.0,
            y0 + 18.0
        );
    }
    for t in y.ticks() {
        let py = y.map(t);
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{t:.2}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{0}" text-anchor="middle" transform="rotate(-90 15 {0})">{y_label}</text>"#,
        (y0 + y1) / 2.0
    );
}

fn scatter_svg(points: &[&SwapPoint], task: Task) -> String {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in points {
        lo = lo.min(p.lo_orig.min(p.lo_swap));
        hi = hi.max(p.lo_orig.max(p.lo_swap));
    }
    if points.is_empty() {
        (lo, hi) = (-1.0, 1.0);
    }
    // one shared range keeps the y = x guide on the diagonal
    let x = Axis::new(lo, hi, MARGIN, WIDTH - MARGIN / 2.0);
    let y = Axis::new(lo, hi, HEIGHT - MARGIN, MARGIN / 2.0 + 10.0);

    let mut out = String::new();
    svg_open(
        &mut out,
        &format!(
            "{} log odds: original vs. swapped to position 1",
            task.as_str().to_uppercase()
        ),
    );
    axes(
        &mut out,
        &x,
        &y,
        "log odds, swapped to position 1",
        "log odds, original position",
    );
    let _ = writeln!(
        out,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        x.map(x.lo),
        y.map(y.lo),
        x.map(x.hi),
        y.map(y.hi)
    );
    for p in points {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="steelblue" fill-opacity="0.6"/>"#,
            x.map(p.lo_swap),
            y.map(p.lo_orig)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn impact_svg(curve: &[SwapImpact]) -> String {
    let max_pos = curve.iter().map(|c| c.position).max().unwrap_or(1);
    let mut hi: f64 = 1.0;
    for c in curve {
        hi = hi
            .max(c.ratio_ctr)
            .max(c.ratio_cvr)
            .max(c.ratio_seen.unwrap_or(0.0));
    }
    let x = Axis::new(1.0, max_pos as f64, MARGIN, WIDTH - MARGIN / 2.0);
    let y = Axis::new(0.0, hi * 1.05, HEIGHT - MARGIN, MARGIN / 2.0 + 10.0);

    let mut out = String::new();
    svg_open(&mut out, "Impact of swapping to position 1");
    axes(
        &mut out,
        &x,
        &y,
        "logged position",
        "mean ratio P(y|f,1) / P(y|f,p)",
    );

    type Series = (&'static str, &'static str, fn(&SwapImpact) -> Option<f64>);
    let series: [Series; 3] = [
        ("ctr", "steelblue", |c| Some(c.ratio_ctr)),
        ("cvr", "darkorange", |c| Some(c.ratio_cvr)),
        ("seen", "seagreen", |c| c.ratio_seen),
    ];
    for (i, (name, color, get)) in series.iter().enumerate() {
        let pts: Vec<String> = curve
            .iter()
            .filter_map(|c| {
                get(c).map(|v| format!("{:.2},{:.2}", x.map(c.position as f64), y.map(v)))
            })
            .collect();
        if pts.is_empty() {
            continue;
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN / 2.0 + 20.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{2}" y="{3}">{name}</text>"#,
            MARGIN + 10.0,
            MARGIN + 30.0,
            MARGIN + 35.0,
            ly + 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}
