//! Trial records, CSV artifacts and minimal SVG charts.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::world::Task;

pub const TRIAL_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Highest perception score, no simulation.
    Standalone,
    /// Outcome-based selection through the task library.
    Simulated,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Standalone => "standalone",
            Strategy::Simulated => "simulated",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub object: String,
    pub task: Task,
    pub seed: u64,
    pub strategy: Strategy,
    pub selected: Option<usize>,
    pub confidence: Option<f64>,
    pub success: bool,
    pub simulations: usize,
    pub candidates: usize,
    pub d_h: Option<f64>,
}

fn header<W: Write>(w: &mut W, kind: &str, config_hash: &str) -> Result<()> {
    writeln!(w, "# taskgrasp {kind} schema={TRIAL_SCHEMA_VERSION}")?;
    writeln!(w, "# config={config_hash}")?;
    Ok(())
}

/// Writes serialisable rows as CSV preceded by `#` header comments.
pub fn write_csv<W: Write, T: Serialize>(mut w: W, kind: &str, config_hash: &str, rows: &[T]) -> Result<()> {
    header(&mut w, kind, config_hash)?;
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_trials<W: Write>(w: W, config_hash: &str, trials: &[TrialRecord]) -> Result<()> {
    write_csv(w, "trials", config_hash, trials)
}

pub fn read_trials<R: Read>(r: R) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

/// Grouped bar chart. `references` draws one dashed marker per group.
pub fn bar_chart_svg(
    title: &str,
    config_hash: &str,
    groups: &[String],
    series: &[(String, Vec<f64>)],
    references: Option<&[f64]>,
) -> String {
    let (w, h) = (640.0, 360.0);
    let (left, right, top, bottom) = (50.0, 140.0, 40.0, 40.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let ymax = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .chain(references.into_iter().flatten().copied())
        .fold(0.0f64, f64::max)
        .max(1e-12)
        * 1.1;
    let y = |v: f64| top + plot_h * (1.0 - v / ymax);
    let group_w = plot_w / groups.len().max(1) as f64;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, "<!-- config={config_hash} -->");
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(s, r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, top + plot_h, left + plot_w, top + plot_h);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + plot_h);
    for k in 0..=4 {
        let v = ymax * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, left - 4.0, y(v) + 4.0);
    }
    for (g, name) in groups.iter().enumerate() {
        let gx = left + group_w * (g as f64 + 0.1);
        for (k, (_, vals)) in series.iter().enumerate() {
            let v = vals.get(g).copied().unwrap_or(0.0);
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                gx + bar_w * k as f64,
                y(v),
                bar_w,
                top + plot_h - y(v),
                PALETTE[k % PALETTE.len()]
            );
        }
        if let Some(r) = references.and_then(|r| r.get(g)) {
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-dasharray="4 3"/>"#,
                gx,
                y(*r),
                gx + group_w * 0.8,
                y(*r)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            left + group_w * (g as f64 + 0.5),
            top + plot_h + 16.0,
            escape(name)
        );
    }
    for (k, (name, _)) in series.iter().enumerate() {
        let ly = top + 16.0 * k as f64;
        let _ = writeln!(s, r#"<rect x="{}" y="{ly}" width="10" height="10" fill="{}"/>"#, w - right + 10.0, PALETTE[k % PALETTE.len()]);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, w - right + 24.0, ly + 9.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(selected: Option<usize>) -> TrialRecord {
        TrialRecord {
            object: "glass".into(),
            task: Task::Pour,
            seed: 3,
            strategy: Strategy::Simulated,
            selected,
            confidence: selected.map(|_| 0.1 + 0.2),
            success: selected.is_some(),
            simulations: 2,
            candidates: 10,
            d_h: selected.map(|_| 0.07),
        }
    }

    #[test]
    fn trials_round_trip_with_header() {
        let rows = vec![record(Some(4)), record(None)];
        let mut buf = Vec::new();
        write_trials(&mut buf, "abc", &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# taskgrasp trials schema=1\n# config=abc\n"));
        assert!(text.contains("object,task,seed,strategy,selected,confidence,success,simulations,candidates,d_h"));
        assert_eq!(read_trials(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn svg_is_well_formed() {
        let svg = bar_chart_svg(
            "rates <1>",
            "abc",
            &["pour".into(), "shake".into()],
            &[("a".into(), vec![0.5, 1.0]), ("b".into(), vec![0.25, 0.0])],
            Some(&[0.3, 0.3]),
        );
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("config=abc"));
        assert!(svg.contains("rates &lt;1&gt;"));
        assert_eq!(svg.matches("<rect").count(), 4 + 2);
    }
}
