//! Static SVG views of CSV artifacts. Every drawn value is read from the CSV;
//! heatmap cells also carry the raw cell text in `data-*` attributes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::table::Table;
use crate::CliError;

const PALETTE: [&str; 5] = ["#1f4e79", "#c0392b", "#27864a", "#8e44ad", "#d68910"];
const LINE_COLUMNS: [&str; 5] = ["actual", "predicted", "baseline", "fixed", "relearn"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Fill for a heatmap cell; every channel decreases as `t` goes from 0 to 1.
pub fn ramp(t: f64) -> (u8, u8, u8) {
    let t = t.clamp(0.0, 1.0);
    let ch = |hi: f64, lo: f64| (hi - (hi - lo) * t).round() as u8;
    (ch(255.0, 40.0), ch(250.0, 60.0), ch(235.0, 130.0))
}

struct Frame {
    width: f64,
    height: f64,
    margin: f64,
}

impl Frame {
    const PLOT: Frame = Frame {
        width: 820.0,
        height: 340.0,
        margin: 56.0,
    };

    fn open(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
            w = self.width,
            h = self.height
        );
        let _ = writeln!(s, "<title>{}</title>", escape(title));
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
            self.width / 2.0,
            escape(title)
        );
        s
    }

    fn sx(&self, v: f64, lo: f64, hi: f64) -> f64 {
        let span = if hi > lo { hi - lo } else { 1.0 };
        self.margin + (v - lo) / span * (self.width - 2.0 * self.margin)
    }

    fn sy(&self, v: f64, lo: f64, hi: f64) -> f64 {
        let span = if hi > lo { hi - lo } else { 1.0 };
        self.height - self.margin - (v - lo) / span * (self.height - 2.0 * self.margin)
    }

    fn axes(&self, s: &mut String, x: (f64, f64), y: (f64, f64), xlabel: &str, ylabel: &str) {
        let (l, r) = (self.margin, self.width - self.margin);
        let (t, b) = (self.margin, self.height - self.margin);
        let _ = writeln!(s, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black"/>"#);
        let _ = writeln!(s, r#"<text x="{l}" y="{}" text-anchor="middle">{}</text>"#, b + 14.0, fmt_tick(x.0));
        let _ = writeln!(s, r#"<text x="{r}" y="{}" text-anchor="middle">{}</text>"#, b + 14.0, fmt_tick(x.1));
        let _ = writeln!(s, r#"<text x="{}" y="{b}" text-anchor="end">{}</text>"#, l - 4.0, fmt_tick(y.0));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, l - 4.0, t + 4.0, fmt_tick(y.1));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            self.width / 2.0,
            b + 30.0,
            escape(xlabel)
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            self.height / 2.0,
            self.height / 2.0,
            escape(ylabel)
        );
    }

    fn legend(&self, s: &mut String, names: &[&str]) {
        for (k, name) in names.iter().enumerate() {
            let x = self.width - self.margin - 110.0;
            let y = self.margin + 14.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{}" width="10" height="3" fill="{}"/><text x="{}" y="{}">{}</text>"#,
                y - 3.0,
                PALETTE[k % PALETTE.len()],
                x + 14.0,
                y + 1.0,
                escape(name)
            );
        }
    }
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn bounds<'a>(values: impl IntoIterator<Item = &'a f64>) -> (f64, f64) {
    values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn polyline(frame: &Frame, xs: &[f64], ys: &[f64], xb: (f64, f64), yb: (f64, f64)) -> String {
    let mut pts = String::new();
    for (x, y) in xs.iter().zip(ys) {
        let _ = write!(pts, "{:.2},{:.2} ", frame.sx(*x, xb.0, xb.1), frame.sy(*y, yb.0, yb.1));
    }
    pts.trim_end().to_string()
}

/// Heatmap of `value` over (`row`, `col`) keys, keys ordered numerically.
pub fn heatmap(table: &Table, row: &str, col: &str, value: &str, title: &str) -> Result<String, CliError> {
    if table.rows.is_empty() {
        return Err(CliError::data(format!("{title}: no cells to draw")));
    }
    let rj = table.column(row).ok_or_else(|| CliError::data(format!("missing column {row}")))?;
    let cj = table.column(col).ok_or_else(|| CliError::data(format!("missing column {col}")))?;
    let vals = table.numeric(value)?;
    let status = table.column("status");
    let keys = |j: usize| -> Result<Vec<String>, CliError> {
        let mut k: Vec<(f64, String)> = Vec::new();
        for r in &table.rows {
            let v: f64 = r[j]
                .parse()
                .map_err(|_| CliError::data(format!("non-numeric key {:?}", r[j])))?;
            if !k.iter().any(|(_, s)| s == &r[j]) {
                k.push((v, r[j].clone()));
            }
        }
        k.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(k.into_iter().map(|(_, s)| s).collect())
    };
    let rows = keys(rj)?;
    let cols = keys(cj)?;
    let (lo, hi) = bounds(vals.iter().flatten());
    let cell = 56.0;
    let left = 80.0;
    let top = 50.0;
    let frame = Frame {
        width: left + cell * cols.len() as f64 + 40.0,
        height: top + cell * rows.len() as f64 + 50.0,
        margin: 0.0,
    };
    let mut s = frame.open(title);
    let _ = writeln!(s, r#"<g class="cells" data-min="{lo}" data-max="{hi}">"#);
    for (i, r) in table.rows.iter().enumerate() {
        let ri = rows.iter().position(|k| k == &r[rj]).expect("row key collected");
        let ci = cols.iter().position(|k| k == &r[cj]).expect("col key collected");
        let (x, y) = (left + cell * ci as f64, top + cell * ri as f64);
        let raw = &r[table.column(value).expect("value column parsed")];
        let st = status.map(|j| r[j].as_str()).unwrap_or("ok");
        match vals[i] {
            Some(v) => {
                let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
                let (cr, cg, cb) = ramp(t);
                let _ = writeln!(
                    s,
                    r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({cr},{cg},{cb})" data-{row}="{}" data-{col}="{}" data-{value}="{}"/>"#,
                    escape(&r[rj]),
                    escape(&r[cj]),
                    escape(raw)
                );
                let ink = if t > 0.55 { "white" } else { "black" };
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{v:.3}</text>"#,
                    x + cell / 2.0,
                    y + cell / 2.0 + 4.0
                );
            }
            None => {
                let _ = writeln!(
                    s,
                    r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="#f4f4f4" stroke="#bbbbbb" data-{row}="{}" data-{col}="{}" data-{value}="" data-status="{}"/>"##,
                    escape(&r[rj]),
                    escape(&r[cj]),
                    escape(st)
                );
            }
        }
    }
    let _ = writeln!(s, "</g>");
    for (ci, k) in cols.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            left + cell * (ci as f64 + 0.5),
            top - 6.0,
            escape(k)
        );
    }
    for (ri, k) in rows.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 6.0,
            top + cell * (ri as f64 + 0.5) + 4.0,
            escape(k)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{} (columns) / {} (rows)</text>"#,
        frame.width / 2.0,
        frame.height - 18.0,
        escape(col),
        escape(row)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

/// Line plot of the value columns of a predictions-style table against `t`.
pub fn lines(table: &Table, title: &str) -> Result<String, CliError> {
    let t = table.numeric_complete("t")?;
    let mut series: Vec<(&str, Vec<f64>, Vec<f64>)> = Vec::new();
    for name in LINE_COLUMNS {
        if table.column(name).is_none() {
            continue;
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = t
            .iter()
            .zip(table.numeric(name)?)
            .filter_map(|(x, y)| y.map(|y| (*x, y)))
            .unzip();
        if !ys.is_empty() {
            series.push((name, xs, ys));
        }
    }
    if series.is_empty() {
        return Err(CliError::data(format!("{title}: no value columns")));
    }
    let frame = Frame::PLOT;
    let xb = bounds(&t);
    let yb = bounds(series.iter().flat_map(|s| &s.2));
    let mut s = frame.open(title);
    frame.axes(&mut s, xb, yb, "t (bin)", "value");
    for (k, (name, xs, ys)) in series.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<polyline data-column="{name}" fill="none" stroke="{}" stroke-width="1" points="{}"/>"#,
            PALETTE[k % PALETTE.len()],
            polyline(&frame, xs, ys, xb, yb)
        );
    }
    let names: Vec<&str> = series.iter().map(|s| s.0).collect();
    frame.legend(&mut s, &names);
    s.push_str("</svg>\n");
    Ok(s)
}

/// Power spectra with a log10 power axis; zero-power bins are skipped.
pub fn spectra(tables: &[(String, Table)], title: &str) -> Result<String, CliError> {
    let mut series = Vec::new();
    for (name, table) in tables {
        let f = table.numeric_complete("freq")?;
        let p = table.numeric_complete("power")?;
        let (xs, ys): (Vec<f64>, Vec<f64>) = f
            .iter()
            .zip(&p)
            .filter(|(_, p)| **p > 0.0)
            .map(|(f, p)| (*f, p.log10()))
            .unzip();
        series.push((name.as_str(), xs, ys));
    }
    let frame = Frame::PLOT;
    let xb = bounds(series.iter().flat_map(|s| &s.1));
    let yb = bounds(series.iter().flat_map(|s| &s.2));
    if !xb.0.is_finite() {
        return Err(CliError::data(format!("{title}: every spectrum is zero")));
    }
    let mut s = frame.open(title);
    frame.axes(&mut s, xb, yb, "frequency (cycles per bin)", "log10 power");
    for (k, (name, xs, ys)) in series.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<polyline data-source="{}" fill="none" stroke="{}" stroke-width="1" points="{}"/>"#,
            escape(name),
            PALETTE[k % PALETTE.len()],
            polyline(&frame, xs, ys, xb, yb)
        );
    }
    let names: Vec<&str> = series.iter().map(|s| s.0).collect();
    frame.legend(&mut s, &names);
    s.push_str("</svg>\n");
    Ok(s)
}

/// Scatter of the first two delay coordinates of each cloud.
pub fn attractors(tables: &[(String, Table)], title: &str) -> Result<String, CliError> {
    let mut clouds = Vec::new();
    for (name, table) in tables {
        clouds.push((name.as_str(), table.numeric_complete("x0")?, table.numeric_complete("x1")?));
    }
    let frame = Frame {
        width: 520.0,
        height: 520.0,
        margin: 56.0,
    };
    let xb = bounds(clouds.iter().flat_map(|c| &c.1));
    let yb = bounds(clouds.iter().flat_map(|c| &c.2));
    let mut s = frame.open(title);
    frame.axes(&mut s, xb, yb, "x0", "x1");
    for (k, (name, xs, ys)) in clouds.iter().enumerate() {
        let _ = writeln!(s, r#"<g data-source="{}" fill="{}" fill-opacity="0.6">"#, escape(name), PALETTE[k]);
        for (x, y) in xs.iter().zip(ys) {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="1.6"/>"#,
                frame.sx(*x, xb.0, xb.1),
                frame.sy(*y, yb.0, yb.1)
            );
        }
        let _ = writeln!(s, "</g>");
    }
    let names: Vec<&str> = clouds.iter().map(|c| c.0).collect();
    frame.legend(&mut s, &names);
    s.push_str("</svg>\n");
    Ok(s)
}

/// Renders every known artifact in `dir`; returns the SVG file names written.
pub fn render_dir(dir: &Path) -> Result<Vec<String>, CliError> {
    let mut written = Vec::new();
    let mut emit = |name: &str, svg: String| -> Result<(), CliError> {
        fs::write(dir.join(name), svg)?;
        written.push(name.to_string());
        Ok(())
    };
    let load = |name: &str| -> Result<Option<Table>, CliError> {
        let path = dir.join(name);
        if path.is_file() {
            Ok(Some(Table::read(&path)?))
        } else {
            Ok(None)
        }
    };

    if let Some(t) = load("sweep.csv")? {
        emit("sweep_heatmap.svg", heatmap(&t, "tau", "interval_s", "nrmse", "Test NRMSE by horizon and interval")?)?;
    }
    if let Some(t) = load("online_grid.csv")? {
        emit("online_heatmap.svg", heatmap(&t, "r1", "r2", "nrmse", "Online NRMSE by r1 and r2")?)?;
    }
    for stem in ["fit_predictions", "predictions", "online_predictions", "ablation_predictions"] {
        if let Some(t) = load(&format!("{stem}.csv"))? {
            emit(&format!("{stem}.svg"), lines(&t, &stem.replace('_', " "))?)?;
        }
    }
    let mut spectra_tables = Vec::new();
    for stem in ["spectrum_target", "spectrum_actual", "spectrum_predicted"] {
        if let Some(t) = load(&format!("{stem}.csv"))? {
            spectra_tables.push((stem.trim_start_matches("spectrum_").to_string(), t));
        }
    }
    if !spectra_tables.is_empty() {
        emit("spectrum.svg", spectra(&spectra_tables, "Power spectrum")?)?;
    }
    let mut clouds = Vec::new();
    for stem in ["attractor_actual", "attractor_predicted"] {
        if let Some(t) = load(&format!("{stem}.csv"))? {
            clouds.push((stem.trim_start_matches("attractor_").to_string(), t));
        }
    }
    if !clouds.is_empty() {
        emit("attractor.svg", attractors(&clouds, "Delay-embedded attractors")?)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(headers: &[&str], rows: &[&[&str]]) -> Table {
        Table {
            headers: headers.iter().map(|s| s.to_string()).collect(),
            rows: rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        }
    }

    #[test]
    fn ramp_is_monotone() {
        let mut prev = ramp(0.0);
        for k in 1..=100 {
            let c = ramp(k as f64 / 100.0);
            assert!(c.0 <= prev.0 && c.1 <= prev.1 && c.2 <= prev.2);
            prev = c;
        }
        assert!(ramp(1.0) < ramp(0.0));
    }

    #[test]
    fn one_cell_heatmap_has_one_rectangle() {
        let t = table(&["tau", "interval_s", "nrmse", "status"], &[&["7", "18", "0.5", "ok"]]);
        let svg = heatmap(&t, "tau", "interval_s", "nrmse", "x").unwrap();
        assert_eq!(svg.matches("data-nrmse=").count(), 1);
        assert!(svg.contains(r#"data-nrmse="0.5""#));
    }

    #[test]
    fn empty_heatmap_is_an_error() {
        let t = table(&["tau", "interval_s", "nrmse", "status"], &[]);
        assert!(heatmap(&t, "tau", "interval_s", "nrmse", "x").is_err());
    }

    #[test]
    fn failed_cells_are_marked() {
        let t = table(
            &["tau", "interval_s", "nrmse", "status"],
            &[&["7", "18", "0.5", "ok"], &["8", "18", "", "too few rows"]],
        );
        let svg = heatmap(&t, "tau", "interval_s", "nrmse", "x").unwrap();
        assert!(svg.contains(r#"data-status="too few rows""#));
    }

    #[test]
    fn line_plot_skips_empty_cells() {
        let t = table(&["t", "actual", "predicted"], &[&["7", "", "0.1"], &["8", "", "0.2"]]);
        let svg = lines(&t, "p").unwrap();
        assert!(svg.contains(r#"data-column="predicted""#));
        assert!(!svg.contains(r#"data-column="actual""#));
    }

    #[test]
    fn escaping() {
        assert_eq!(escape(r#"a<b>&"c""#), "a&lt;b&gt;&amp;&quot;c&quot;");
    }
}
