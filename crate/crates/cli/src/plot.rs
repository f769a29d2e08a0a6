//! Self-contained SVG line plots of a trajectory CSV.

use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use thiserror::Error;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const MAX_POINTS: usize = 4000;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("CSV has no data rows")]
    Empty,
    #[error("CSV is missing column `{0}`")]
    MissingColumn(String),
    #[error("non-numeric value `{value}` in column `{column}`, row {row}")]
    BadValue { column: String, row: usize, value: String },
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

/// Named numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn read<R: Read>(input: R) -> Result<Self, PlotError> {
        let mut rdr = csv::Reader::from_reader(input);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut columns = vec![Vec::new(); names.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for ((col, name), field) in columns.iter_mut().zip(&names).zip(rec.iter()) {
                let v = field.trim().parse::<f64>().map_err(|_| PlotError::BadValue {
                    column: name.clone(),
                    row: row + 1,
                    value: field.to_string(),
                })?;
                col.push(v);
            }
        }
        if columns.first().is_none_or(Vec::is_empty) {
            return Err(PlotError::Empty);
        }
        Ok(Self { names, columns })
    }

    pub fn column(&self, name: &str) -> Result<&[f64], PlotError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| PlotError::MissingColumn(name.to_string()))
    }

    /// Number of consecutive columns `prefix1, prefix2, ...`.
    pub fn family_len(&self, prefix: &str) -> usize {
        (1..)
            .take_while(|i| self.names.iter().any(|n| *n == format!("{prefix}{i}")))
            .count()
    }
}

/// One figure: several series against a shared time axis.
#[derive(Debug, Clone)]
pub struct Figure<'a> {
    pub title: String,
    pub y_label: String,
    pub t: &'a [f64],
    pub series: Vec<(String, &'a [f64])>,
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    step * mag
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo <= 1e-12 * lo.abs().max(hi.abs()).max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo, 5);
    let mut v = Vec::new();
    let mut k = (lo / step).ceil();
    while k * step <= hi + 1e-9 * step {
        v.push(k * step);
        k += 1.0;
    }
    v
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1e6).round() / 1e6)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a figure as a standalone SVG document.
pub fn render_svg(fig: &Figure<'_>) -> String {
    let (t0, t1) = padded_range(fig.t.iter().copied());
    let (y0, y1) = padded_range(fig.series.iter().flat_map(|(_, s)| s.iter().copied()));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |t: f64| LEFT + (t - t0) / (t1 - t0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(&fig.title)
    );
    for tv in ticks(t0, t1) {
        let x = sx(tv);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 16.0,
            label(tv)
        );
    }
    for yv in ticks(y0, y1) {
        let y = sy(yv);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            label(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t, s</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        escape(&fig.y_label)
    );

    let stride = fig.t.len().div_ceil(MAX_POINTS).max(1);
    for (k, (name, ys)) in fig.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = String::new();
        let last = fig.t.len().saturating_sub(1);
        for i in (0..fig.t.len()).step_by(stride).chain(std::iter::once(last)) {
            let (t, y) = (fig.t[i], ys[i]);
            if t.is_finite() && y.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(t), sy(y));
            }
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.trim_end()
        );
        if fig.series.len() > 1 {
            let ly = TOP + 14.0 + 16.0 * k as f64;
            let lx = LEFT + pw - 110.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                lx + 20.0,
                lx + 26.0,
                ly + 4.0,
                escape(name)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Figure family of a trajectory table: all `Θ̂ᵢ` overlaid, then each `Θ̂ᵢ - Θᵢ`,
/// then each `x̂ᵢ - xᵢ`. Returns `(file stem, figure)` pairs.
pub fn figures(table: &Table) -> Result<Vec<(String, Figure<'_>)>, PlotError> {
    let t = table.column("t")?;
    let r = table.family_len("thetahat");
    if r == 0 {
        return Err(PlotError::MissingColumn("thetahat1".into()));
    }
    let n = table.family_len("xerr");
    if n == 0 {
        return Err(PlotError::MissingColumn("xerr1".into()));
    }
    let mut figs = Vec::with_capacity(1 + r + n);
    let series = (1..=r)
        .map(|i| {
            let name = format!("thetahat{i}");
            table.column(&name).map(|c| (name, c))
        })
        .collect::<Result<Vec<_>, _>>()?;
    figs.push((
        "fig1_thetahat".to_string(),
        Figure {
            title: "Parameter estimates".into(),
            y_label: "thetahat".into(),
            t,
            series,
        },
    ));
    for i in 1..=r {
        let name = format!("thetaerr{i}");
        let col = table.column(&name)?;
        figs.push((
            format!("fig{}_{name}", 1 + i),
            Figure {
                title: format!("Parameter error thetahat{i} - theta{i}"),
                y_label: name.clone(),
                t,
                series: vec![(name, col)],
            },
        ));
    }
    for i in 1..=n {
        let name = format!("xerr{i}");
        let col = table.column(&name)?;
        figs.push((
            format!("fig{}_{name}", 1 + r + i),
            Figure {
                title: format!("State error xhat{i} - x{i}"),
                y_label: name.clone(),
                t,
                series: vec![(name, col)],
            },
        ));
    }
    Ok(figs)
}

/// Reads a trajectory CSV and writes one SVG per figure into `out_dir`.
pub fn plot_csv(csv_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let file = std::fs::File::open(csv_path).map_err(|source| PlotError::Read {
        path: csv_path.display().to_string(),
        source,
    })?;
    let table = Table::read(std::io::BufReader::new(file))?;
    let figs = figures(&table)?;
    let rendered: Vec<(PathBuf, String)> = figs
        .iter()
        .map(|(stem, fig)| (out_dir.join(format!("{stem}.svg")), render_svg(fig)))
        .collect();
    std::fs::create_dir_all(out_dir).map_err(|source| PlotError::Write {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::with_capacity(rendered.len());
    for (path, svg) in rendered {
        std::fs::write(&path, svg).map_err(|source| PlotError::Write {
            path: path.display().to_string(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}
