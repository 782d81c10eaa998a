//! Standalone SVG forest plots of causal estimates.

use std::fmt::Write as _;

use ivsel_core::{CausalEstimate, Error, Result};

const PALETTE: [&str; 8] = ["#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#6a4c93", "#00798c", "#8d6a9f", "#4d4d4d"];
const WIDTH: f64 = 760.0;
const LEFT: f64 = 220.0;
const RIGHT: f64 = 40.0;
const TOP: f64 = 30.0;
const ROW: f64 = 28.0;
const AXIS: f64 = 44.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One row per estimate: the point, its 95% interval as a whisker and `labels[i]` on the left.
/// Rows sharing a label share a color. A non-finite SE gives a point-only row with a note.
pub fn forest_plot(estimates: &[CausalEstimate], labels: &[String]) -> Result<String> {
    if estimates.is_empty() {
        return Err(Error::Config("forest plot needs at least one estimate".into()));
    }
    if labels.len() != estimates.len() {
        return Err(Error::Config(format!("{} labels for {} estimates", labels.len(), estimates.len())));
    }
    let has_ci = |e: &CausalEstimate| e.se.is_finite() && e.ci95.0.is_finite() && e.ci95.1.is_finite();
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for e in estimates {
        if e.theta_hat.is_finite() {
            lo = lo.min(e.theta_hat);
            hi = hi.max(e.theta_hat);
        }
        if has_ci(e) {
            lo = lo.min(e.ci95.0);
            hi = hi.max(e.ci95.1);
        }
    }
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_w = WIDTH - LEFT - RIGHT;
    let sx = |v: f64| LEFT + (v - lo) / (hi - lo) * plot_w;
    let height = TOP + ROW * estimates.len() as f64 + AXIS;
    let bottom = TOP + ROW * estimates.len() as f64;

    let mut keys: Vec<&str> = Vec::new();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let z = sx(0.0);
    let _ = writeln!(
        s,
        r##"<line class="zero" x1="{z:.2}" y1="{TOP}" x2="{z:.2}" y2="{bottom}" stroke="#888" stroke-dasharray="4 3"/>"##
    );
    for (i, (e, label)) in estimates.iter().zip(labels).enumerate() {
        let k = keys.iter().position(|&l| l == label).unwrap_or_else(|| {
            keys.push(label);
            keys.len() - 1
        });
        let color = PALETTE[k % PALETTE.len()];
        let y = TOP + ROW * (i as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            LEFT - 10.0,
            y,
            escape(label)
        );
        if has_ci(e) {
            let (a, b) = (sx(e.ci95.0), sx(e.ci95.1));
            let _ = writeln!(
                s,
                r#"<line class="whisker" data-lo="{}" data-hi="{}" x1="{a:.2}" y1="{y:.2}" x2="{b:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/>"#,
                e.ci95.0, e.ci95.1
            );
        }
        if e.theta_hat.is_finite() {
            let _ = writeln!(
                s,
                r#"<circle class="point" data-x="{}" cx="{:.2}" cy="{y:.2}" r="4.5" fill="{color}"/>"#,
                e.theta_hat,
                sx(e.theta_hat)
            );
        }
        if !has_ci(e) {
            let _ = writeln!(
                s,
                r##"<text class="annotation" x="{:.2}" y="{:.2}" fill="#555" font-style="italic">SE not finite; point only</text>"##,
                WIDTH - RIGHT - 170.0,
                y - 9.0
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{bottom}" x2="{:.2}" y2="{bottom}" stroke="black"/>"#,
        WIDTH - RIGHT
    );
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        let x = sx(v);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{bottom}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{v:.3}</text>"#,
            bottom + 5.0,
            bottom + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Causal effect estimate (95% CI)</text>"#,
        LEFT + plot_w / 2.0,
        bottom + 36.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ivsel_core::mr::MrEstimator;

    fn attr(svg: &str, class: &str, name: &str) -> Vec<f64> {
        svg.lines()
            .filter(|l| l.contains(&format!(r#"class="{class}""#)))
            .filter_map(|l| {
                let key = format!(r#"{name}=""#);
                let start = l.find(&key)? + key.len();
                l[start..].split('"').next()?.parse().ok()
            })
            .collect()
    }

    #[test]
    fn single_estimate_whisker() {
        let e = CausalEstimate::new(MrEstimator::Ivw, 0.2, 0.05);
        let svg = forest_plot(&[e], &["ivw".into()]).unwrap();
        assert_eq!(attr(&svg, "point", "data-x"), vec![0.2]);
        let (lo, hi) = (attr(&svg, "whisker", "data-lo"), attr(&svg, "whisker", "data-hi"));
        assert!((lo[0] - 0.102).abs() < 5e-4 && (hi[0] - 0.298).abs() < 5e-4);
        assert_eq!(svg.matches(r#"class="zero""#).count(), 1);
    }

    #[test]
    fn rows_and_colors() {
        let a = CausalEstimate::new(MrEstimator::Tsls, 0.1, 0.05);
        let b = CausalEstimate::new(MrEstimator::Tsls, 0.3, 0.1);
        let c = CausalEstimate::new(MrEstimator::Tsls, -0.2, 0.02);
        let svg = forest_plot(&[a, b, c], &["g1".into(), "g2".into(), "g1".into()]).unwrap();
        assert_eq!(attr(&svg, "point", "data-x").len(), 3);
        let fills: Vec<&str> = svg
            .lines()
            .filter(|l| l.contains(r#"class="point""#))
            .map(|l| l.split("fill=\"").nth(1).unwrap().split('"').next().unwrap())
            .collect();
        assert_eq!(fills[0], fills[2]);
        assert_ne!(fills[0], fills[1]);
    }

    #[test]
    fn infinite_se_is_point_only() {
        let e = CausalEstimate::new(MrEstimator::WaldRatio, 0.4, f64::INFINITY);
        let svg = forest_plot(&[e], &["wald".into()]).unwrap();
        assert_eq!(attr(&svg, "point", "data-x"), vec![0.4]);
        assert!(!svg.contains(r#"class="whisker""#));
        assert!(svg.contains(r#"class="annotation""#));
    }

    #[test]
    fn empty_is_an_error() {
        assert!(forest_plot(&[], &[]).is_err());
    }
}
