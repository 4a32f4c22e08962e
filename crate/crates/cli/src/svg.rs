//! Minimal SVG bar chart for run comparisons: two bars (UAR, WAR) per
//! variant, deterministic text output.

pub struct ChartRow {
    pub label: String,
    pub uar: f64,
    pub war: f64,
}

const BAR_W: f64 = 28.0;
const GROUP_GAP: f64 = 34.0;
const PLOT_H: f64 = 220.0;
const MARGIN_L: f64 = 50.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 70.0;

pub fn bar_chart(title: &str, rows: &[ChartRow]) -> String {
    let group_w = 2.0 * BAR_W + GROUP_GAP;
    let width = MARGIN_L + rows.len() as f64 * group_w + 40.0;
    let height = MARGIN_TOP + PLOT_H + MARGIN_BOTTOM;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n"
    ));
    out.push_str(&format!(
        "  <text x=\"{MARGIN_L}\" y=\"14\" font-family=\"monospace\" font-size=\"12\">{}</text>\n",
        xml_escape(title)
    ));
    // y axis with gridlines at 0, 0.25, 0.5, 0.75, 1.0
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let y = MARGIN_TOP + PLOT_H * (1.0 - frac);
        out.push_str(&format!(
            "  <line x1=\"{MARGIN_L}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n",
            width - 20.0
        ));
        out.push_str(&format!(
            "  <text x=\"8\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\">{frac:.2}</text>\n",
            y + 3.0
        ));
    }
    for (i, row) in rows.iter().enumerate() {
        let x0 = MARGIN_L + i as f64 * group_w + GROUP_GAP / 2.0;
        for (j, (value, color)) in [(row.uar, "#4477aa"), (row.war, "#ee6677")]
            .iter()
            .enumerate()
        {
            let clamped = value.clamp(0.0, 1.0);
            let h = PLOT_H * clamped;
            let x = x0 + j as f64 * BAR_W;
            let y = MARGIN_TOP + PLOT_H - h;
            out.push_str(&format!(
                "  <rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"{color}\"/>\n",
                BAR_W - 4.0
            ));
            out.push_str(&format!(
                "  <text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"9\">{value:.3}</text>\n",
                y - 3.0
            ));
        }
        out.push_str(&format!(
            "  <text x=\"{x0:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\" transform=\"rotate(35 {x0:.1} {:.1})\">{}</text>\n",
            MARGIN_TOP + PLOT_H + 14.0,
            MARGIN_TOP + PLOT_H + 14.0,
            xml_escape(&row.label)
        ));
    }
    // legend
    out.push_str(&format!(
        "  <rect x=\"{:.1}\" y=\"{MARGIN_TOP}\" width=\"10\" height=\"10\" fill=\"#4477aa\"/>\n  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\">UAR</text>\n",
        width - 90.0,
        width - 76.0,
        MARGIN_TOP + 9.0
    ));
    out.push_str(&format!(
        "  <rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"#ee6677\"/>\n  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\">WAR</text>\n",
        width - 90.0,
        MARGIN_TOP + 16.0,
        width - 76.0,
        MARGIN_TOP + 25.0
    ));
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
