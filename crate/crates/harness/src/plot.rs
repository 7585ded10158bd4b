//! Line plots rendered from the harness CSVs. The CSV stays the source of
//! truth; a plot only ever reads one.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableKind {
    Convergence,
    Training,
    Sweep,
    Latency,
}

impl TableKind {
    fn required(&self) -> &'static [&'static str] {
        match self {
            TableKind::Convergence => &["iteration", "M", "kappa", "wscsc"],
            TableKind::Training => &["epoch", "train_wscsc", "val_wscsc"],
            TableKind::Sweep => &["variable", "value", "scheme", "scc", "ssc", "wscsc"],
            TableKind::Latency => &["bits", "bus_bits", "total_cycles"],
        }
    }
}

/// One named line of `(x, y)` points sorted by `x`.
pub type Series = (String, Vec<(f64, f64)>);

pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn col(&self, name: &str) -> usize {
        self.headers.iter().position(|h| h == name).expect("checked column")
    }

    fn num(&self, row: &[String], name: &str) -> Result<f64> {
        let v = &row[self.col(name)];
        v.parse().map_err(|_| HarnessError::Plot(format!("column `{name}`: `{v}` is not a number")))
    }
}

fn read_table(path: &Path) -> Result<(TableKind, Table)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let has = |c: &str| headers.iter().any(|h| h == c);
    if has("layer") {
        return Err(HarnessError::Plot(format!(
            "{}: per-layer latency tables have no figure; plot latency.csv instead",
            path.display()
        )));
    }
    let kind = if has("iteration") {
        TableKind::Convergence
    } else if has("epoch") {
        TableKind::Training
    } else if has("bus_bits") {
        TableKind::Latency
    } else {
        TableKind::Sweep
    };
    if let Some(missing) = kind.required().iter().find(|c| !headers.iter().any(|h| h == *c)) {
        return Err(HarnessError::Plot(format!("{}: missing column `{missing}`", path.display())));
    }
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    if rows.is_empty() {
        return Err(HarnessError::Plot(format!("{}: no data rows", path.display())));
    }
    Ok((kind, Table { headers, rows }))
}

/// Mean `y` per `x` for each series key, in key order.
fn mean_series(points: BTreeMap<String, Vec<(f64, f64)>>) -> Vec<Series> {
    points
        .into_iter()
        .map(|(name, pts)| {
            let mut acc: Vec<(f64, f64, usize)> = Vec::new();
            for (x, y) in pts {
                match acc.iter_mut().find(|(ax, _, _)| *ax == x) {
                    Some(e) => {
                        e.1 += y;
                        e.2 += 1;
                    }
                    None => acc.push((x, y, 1)),
                }
            }
            acc.sort_by(|a, b| a.0.total_cmp(&b.0));
            (name, acc.into_iter().map(|(x, s, n)| (x, s / n as f64)).collect())
        })
        .collect()
}

pub fn figure_from_csv(path: &Path) -> Result<Figure> {
    let (kind, t) = read_table(path)?;
    let mut points: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let fig = match kind {
        TableKind::Convergence => {
            for row in &t.rows {
                let key = format!("M={} kappa={}", row[t.col("M")], row[t.col("kappa")]);
                points.entry(key).or_default().push((t.num(row, "iteration")?, t.num(row, "wscsc")?));
            }
            ("WSCSC vs training iteration", "iteration", "WSCSC")
        }
        TableKind::Training => {
            for row in &t.rows {
                let x = t.num(row, "epoch")?;
                points.entry("train".into()).or_default().push((x, t.num(row, "train_wscsc")?));
                points.entry("validation".into()).or_default().push((x, t.num(row, "val_wscsc")?));
            }
            ("WSCSC vs training epoch", "epoch", "WSCSC")
        }
        TableKind::Latency => {
            for row in &t.rows {
                let key = format!("{}-bit", row[t.col("bits")]);
                points.entry(key).or_default().push((t.num(row, "bus_bits")?, t.num(row, "total_cycles")?));
            }
            ("Estimated latency vs bus width", "bus width (bits)", "cycles")
        }
        TableKind::Sweep => {
            let var = t.rows[0][t.col("variable")].clone();
            let split = var == "alpha";
            for row in &t.rows {
                let scheme = &row[t.col("scheme")];
                let x = t.num(row, "value")?;
                if split {
                    points.entry(format!("{scheme} SCC")).or_default().push((x, t.num(row, "scc")?));
                    points.entry(format!("{scheme} SSC")).or_default().push((x, t.num(row, "ssc")?));
                } else {
                    points.entry(scheme.clone()).or_default().push((x, t.num(row, "wscsc")?));
                }
            }
            let y = if split { "capacity (nats)" } else { "WSCSC" };
            return Ok(Figure {
                title: format!("{y} vs {var}"),
                x_label: var,
                y_label: y.to_string(),
                series: mean_series(points),
            });
        }
    };
    Ok(Figure {
        title: fig.0.to_string(),
        x_label: fig.1.to_string(),
        y_label: fig.2.to_string(),
        series: mean_series(points),
    })
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let pad = if y1 > y0 { 0.05 * (y1 - y0) } else { 0.5f64.max(0.05 * y0.abs()) };
    (x0, x1, y0 - pad, y1 + pad)
}

pub fn render_svg(fig: &Figure) -> Result<String> {
    let err = |e: &dyn std::fmt::Display| HarnessError::Plot(e.to_string());
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 500)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| err(&e))?;
        let (x0, x1, y0, y1) = bounds(&fig.series);
        let mut chart = ChartBuilder::on(&root)
            .caption(&fig.title, ("sans-serif", 22))
            .margin(15)
            .x_label_area_size(40)
            .y_label_area_size(70)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(|e| err(&e))?;
        chart
            .configure_mesh()
            .x_desc(fig.x_label.as_str())
            .y_desc(fig.y_label.as_str())
            .draw()
            .map_err(|e| err(&e))?;
        for (k, (name, pts)) in fig.series.iter().enumerate() {
            let color = Palette99::pick(k).to_rgba();
            chart
                .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                .map_err(|e| err(&e))?
                .label(name.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| err(&e))?;
        root.present().map_err(|e| err(&e))?;
    }
    Ok(svg)
}

/// Renders `csv` to an SVG next to it (or in `out_dir`). Nothing is written
/// if the CSV cannot be plotted.
pub fn emit_plot(csv: &Path, out_dir: Option<&Path>) -> Result<PathBuf> {
    let fig = figure_from_csv(csv)?;
    let svg = render_svg(&fig)?;
    let name = csv.with_extension("svg");
    let target = match out_dir {
        Some(d) => {
            fs::create_dir_all(d)?;
            d.join(name.file_name().expect("csv has a file name"))
        }
        None => name,
    };
    fs::write(&target, svg)?;
    Ok(target)
}
