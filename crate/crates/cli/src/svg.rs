//! A dependency-free SVG box plot, enough to eyeball the ablation grid.

use std::fmt::Write;

/// One x-axis group holding a box per named series.
pub struct BoxGroup {
    pub label: String,
    pub series: Vec<(String, Vec<f64>)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Five-number summary with linearly interpolated quartiles.
pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some(BoxStats {
        min: v[0],
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: v[v.len() - 1],
    })
}

const COLORS: [&str; 6] = ["#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_box_plot(groups: &[BoxGroup], title: &str, y_label: &str) -> String {
    let all: Vec<f64> = groups
        .iter()
        .flat_map(|g| g.series.iter().flat_map(|s| s.1.iter().copied()))
        .filter(|x| x.is_finite())
        .collect();
    let (mut lo, mut hi) = all.iter().fold((0.0f64, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    if hi - lo < 1e-9 {
        hi += 1.0;
        lo -= 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);

    let n_series = groups.iter().map(|g| g.series.len()).max().unwrap_or(1).max(1);
    let box_w = 14.0;
    let group_w = box_w * n_series as f64 + 24.0;
    let (left, top, plot_h) = (70.0, 40.0, 300.0);
    let width = left + group_w * groups.len().max(1) as f64 + 120.0;
    let height = top + plot_h + 70.0;
    let y = |v: f64| top + plot_h * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.0}" y="20" font-size="14">{}</text>"#,
        left,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {:.0}) rotate(-90)" text-anchor="middle">{}</text>"#,
        top + plot_h / 2.0,
        escape(y_label)
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{left}" x2="{:.0}" y1="{yy:.1}" y2="{yy:.1}" stroke="#ddd"/><text x="{:.0}" y="{:.1}" text-anchor="end">{v:.0}</text>"##,
            width - 120.0,
            left - 4.0,
            y(v) + 4.0,
            yy = y(v)
        );
    }
    if lo < 0.0 && hi > 0.0 {
        let _ = writeln!(
            s,
            r##"<line x1="{left}" x2="{:.0}" y1="{yy:.1}" y2="{yy:.1}" stroke="#888"/>"##,
            width - 120.0,
            yy = y(0.0)
        );
    }
    for (gi, g) in groups.iter().enumerate() {
        let gx = left + group_w * gi as f64 + 12.0;
        for (si, (_, values)) in g.series.iter().enumerate() {
            let Some(b) = box_stats(values) else { continue };
            let x = gx + box_w * si as f64;
            let cx = x + box_w / 2.0;
            let c = COLORS[si % COLORS.len()];
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.1}" x2="{cx:.1}" y1="{:.1}" y2="{:.1}" stroke="{c}"/><rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{c}" fill-opacity="0.35" stroke="{c}"/><line x1="{:.1}" x2="{:.1}" y1="{my:.1}" y2="{my:.1}" stroke="{c}" stroke-width="2"/>"#,
                y(b.max),
                y(b.min),
                x + 1.0,
                y(b.q3),
                box_w - 2.0,
                (y(b.q1) - y(b.q3)).max(0.5),
                x + 1.0,
                x + box_w - 1.0,
                my = y(b.median)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.0}" text-anchor="middle">{}</text>"#,
            gx + box_w * n_series as f64 / 2.0,
            top + plot_h + 18.0,
            escape(&g.label)
        );
    }
    let names: Vec<&str> = groups
        .first()
        .map(|g| g.series.iter().map(|x| x.0.as_str()).collect())
        .unwrap_or_default();
    for (i, name) in names.iter().enumerate() {
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.0}" y="{:.0}" width="10" height="10" fill="{}"/><text x="{:.0}" y="{:.0}">{}</text>"#,
            width - 100.0,
            ly,
            COLORS[i % COLORS.len()],
            width - 85.0,
            ly + 9.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
