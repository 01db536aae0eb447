//! Reward-curve rendering as a standalone SVG.

use std::fmt::Write as _;

use crate::rl::CurvePoint;

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
    format!(r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "))
}

/// Mean reward (left axis, blue) and EOE rate (right axis in [0, 1], orange)
/// against update step.
pub fn curve_svg(curve: &[CurvePoint]) -> String {
    let (x0, x1) = match (curve.first(), curve.last()) {
        (Some(a), Some(b)) => (a.step as f64, (b.step as f64).max(a.step as f64 + 1.0)),
        _ => (0.0, 1.0),
    };
    let lo = curve.iter().map(|p| p.mean_reward).fold(f64::INFINITY, f64::min);
    let hi = curve.iter().map(|p| p.mean_reward).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = match (lo.is_finite(), hi > lo) {
        (true, true) => (lo, hi),
        (true, false) => (lo - 0.5, lo + 0.5),
        _ => (0.0, 1.0),
    };
    let sx = |s: f64| PAD + (s - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |v: f64, a: f64, b: f64| H - PAD - (v - a) / (b - a) * (H - 2.0 * PAD);

    let reward: Vec<(f64, f64)> = curve.iter().map(|p| (sx(p.step as f64), sy(p.mean_reward, lo, hi))).collect();
    let eoe: Vec<(f64, f64)> = curve.iter().map(|p| (sx(p.step as f64), sy(p.eoe_rate, 0.0, 1.0))).collect();

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{PAD},{PAD} V{b} H{r} V{PAD}" fill="none" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(s, r#"<text x="{PAD}" y="{y}">{lo:.3}</text>"#, y = H - PAD + 14.0);
    let _ = writeln!(s, r#"<text x="{PAD}" y="{y}">{hi:.3}</text>"#, y = PAD - 6.0);
    let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="middle">update step ({x0:.0} to {x1:.0})</text>"#, x = W / 2.0, y = H - 12.0);
    let _ = writeln!(s, r##"<text x="{x}" y="20" fill="#1f77b4">mean reward</text>"##, x = PAD);
    let _ = writeln!(s, r##"<text x="{x}" y="20" fill="#ff7f0e" text-anchor="end">EOE rate (0 to 1)</text>"##, x = W - PAD);
    if !curve.is_empty() {
        let _ = writeln!(s, "{}", polyline(&reward, "#1f77b4"));
        let _ = writeln!(s, "{}", polyline(&eoe, "#ff7f0e"));
    }
    s.push_str("</svg>\n");
    s
}

/// Plain-text summary: first, best and last points.
pub fn curve_summary(curve: &[CurvePoint]) -> String {
    let (Some(first), Some(last)) = (curve.first(), curve.last()) else {
        return "empty curve\n".into();
    };
    let best = curve.iter().max_by(|a, b| a.mean_reward.total_cmp(&b.mean_reward)).expect("nonempty");
    format!(
        "points {}\nfirst step {} reward {:.4} eoe {:.3}\nbest  step {} reward {:.4} eoe {:.3}\nlast  step {} reward {:.4} eoe {:.3}\n",
        curve.len(),
        first.step,
        first.mean_reward,
        first.eoe_rate,
        best.step,
        best.mean_reward,
        best.eoe_rate,
        last.step,
        last.mean_reward,
        last.eoe_rate
    )
}
