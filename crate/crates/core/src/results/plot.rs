//! SVG plots over a run directory: metric curves across rounds, the class
//! histogram of acquired labels, and per-class standard/robust bars.

use super::svg::Canvas;
use crate::experiment::ExperimentError;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    MetricCurves,
    LabelDistribution,
    PerClassBars,
}

impl PlotKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlotKind::MetricCurves => "metric-curves",
            PlotKind::LabelDistribution => "label-distribution",
            PlotKind::PerClassBars => "per-class-bars",
        }
    }

    pub fn all() -> [PlotKind; 3] {
        [
            PlotKind::MetricCurves,
            PlotKind::LabelDistribution,
            PlotKind::PerClassBars,
        ]
    }
}

impl FromStr for PlotKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "metric-curves" => Ok(PlotKind::MetricCurves),
            "label-distribution" => Ok(PlotKind::LabelDistribution),
            "per-class-bars" => Ok(PlotKind::PerClassBars),
            other => Err(ExperimentError::InvalidConfig(format!(
                "unknown plot kind `{other}`; expected metric-curves, label-distribution, \
                 or per-class-bars"
            ))),
        }
    }
}

/// Render one plot kind; returns the written file path.
pub fn plot(run_dir: &Path, kind: PlotKind) -> Result<PathBuf, ExperimentError> {
    match kind {
        PlotKind::MetricCurves => plot_metric_curves(run_dir),
        PlotKind::LabelDistribution => plot_label_distribution(run_dir),
        PlotKind::PerClassBars => plot_per_class_bars(run_dir),
    }
}

fn read_csv(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>), ExperimentError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| ExperimentError::Persist(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| ExperimentError::Persist(format!("{}: {e}", path.display())))?
        .clone();
    let mut rows = Vec::new();
    for record in reader.records() {
        rows.push(record.map_err(|e| ExperimentError::Persist(format!("{}: {e}", path.display())))?);
    }
    Ok((headers, rows))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, ExperimentError> {
    headers.iter().position(|h| h == name).ok_or_else(|| {
        ExperimentError::Persist(format!("{}: missing column {name}", path.display()))
    })
}

fn parse_f64(text: &str, path: &Path) -> Result<f64, ExperimentError> {
    text.parse::<f64>()
        .map_err(|e| ExperimentError::Persist(format!("{}: {text:?}: {e}", path.display())))
}

fn ensure_plot_dir(run_dir: &Path) -> Result<PathBuf, ExperimentError> {
    let dir = run_dir.join("plots");
    std::fs::create_dir_all(&dir)
        .map_err(|e| ExperimentError::Persist(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

const MARGIN_LEFT: f64 = 52.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 42.0;
const WIDTH: f64 = 680.0;
const HEIGHT: f64 = 420.0;

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(f64::EPSILON);
        MARGIN_LEFT + (v - self.x_min) / span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(f64::EPSILON);
        HEIGHT - MARGIN_BOTTOM - (v - self.y_min) / span * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }

    fn draw_axes(&self, canvas: &mut Canvas, x_label: &str, y_label: &str) {
        let x0 = MARGIN_LEFT;
        let x1 = WIDTH - MARGIN_RIGHT;
        let y0 = HEIGHT - MARGIN_BOTTOM;
        let y1 = MARGIN_TOP;
        canvas.line(x0, y0, x1, y0, "black", 1.0);
        canvas.line(x0, y0, x0, y1, "black", 1.0);
        canvas.text((x0 + x1) / 2.0, HEIGHT - 8.0, 12.0, "middle", x_label);
        canvas.text(14.0, (y0 + y1) / 2.0, 12.0, "middle", y_label);
        for i in 0..=4 {
            let v = self.y_min + (self.y_max - self.y_min) * f64::from(i) / 4.0;
            let y = self.y(v);
            canvas.line(x0 - 3.0, y, x0, y, "black", 1.0);
            canvas.text(x0 - 6.0, y + 4.0, 10.0, "end", &format!("{v:.2}"));
        }
    }
}

/// Test-split fairness curves over rounds, one point per round including
/// the initialization row.
pub fn plot_metric_curves(run_dir: &Path) -> Result<PathBuf, ExperimentError> {
    let path = run_dir.join("metrics.csv");
    let (headers, rows) = read_csv(&path)?;
    if rows.is_empty() {
        return Err(ExperimentError::Persist(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let round_col = column(&headers, "round", &path)?;
    let series = [
        ("test_worst_std", "#1f77b4"),
        ("test_worst_rob", "#d62728"),
        ("test_avg_std", "#2ca02c"),
        ("test_avg_rob", "#9467bd"),
    ];

    let rounds: Vec<f64> = rows
        .iter()
        .map(|r| parse_f64(&r[round_col], &path))
        .collect::<Result<_, _>>()?;
    let frame = Frame {
        x_min: 0.0,
        x_max: rounds.last().copied().unwrap_or(1.0).max(1.0),
        y_min: 0.0,
        y_max: 1.0,
    };

    let mut canvas = Canvas::new(WIDTH, HEIGHT);
    frame.draw_axes(&mut canvas, "round", "metric");
    for (round, &x) in rounds.iter().enumerate() {
        let px = frame.x(x);
        let y0 = HEIGHT - MARGIN_BOTTOM;
        canvas.line(px, y0, px, y0 + 3.0, "black", 1.0);
        canvas.text(px, y0 + 14.0, 10.0, "middle", &round.to_string());
    }
    for (i, (name, color)) in series.iter().enumerate() {
        let col = column(&headers, name, &path)?;
        let mut points = Vec::with_capacity(rows.len());
        for (row, &x) in rows.iter().zip(&rounds) {
            let cell = &row[col];
            if cell.is_empty() {
                continue;
            }
            points.push((frame.x(x), frame.y(parse_f64(cell, &path)?)));
        }
        canvas.polyline(&points, color, &format!("series-{name}"));
        for &(px, py) in &points {
            canvas.circle(px, py, 2.5, color, &format!("pt-{name}"));
        }
        let ly = MARGIN_TOP + 14.0 * i as f64;
        canvas.rect(WIDTH - MARGIN_RIGHT + 10.0, ly, 10.0, 10.0, color, "legend");
        canvas.text(WIDTH - MARGIN_RIGHT + 24.0, ly + 9.0, 11.0, "start", name);
    }

    let out = ensure_plot_dir(run_dir)?.join("metric_curves.svg");
    std::fs::write(&out, canvas.finish())
        .map_err(|e| ExperimentError::Persist(format!("{}: {e}", out.display())))?;
    Ok(out)
}

/// Class histogram of all acquired samples, read from `acquisitions.csv`.
pub fn read_label_histogram(run_dir: &Path) -> Result<BTreeMap<u32, usize>, ExperimentError> {
    let path = run_dir.join("acquisitions.csv");
    let (headers, rows) = read_csv(&path)?;
    let label_col = column(&headers, "label", &path)?;
    let mut histogram: BTreeMap<u32, usize> = BTreeMap::new();
    for row in rows {
        let label: u32 = row[label_col].parse().map_err(|e| {
            ExperimentError::Persist(format!("{}: bad label: {e}", path.display()))
        })?;
        *histogram.entry(label).or_insert(0) += 1;
    }
    Ok(histogram)
}

pub fn plot_label_distribution(run_dir: &Path) -> Result<PathBuf, ExperimentError> {
    let histogram = read_label_histogram(run_dir)?;
    let total: usize = histogram.values().sum();
    let max_count = histogram.values().copied().max().unwrap_or(0).max(1);

    let frame = Frame {
        x_min: 0.0,
        x_max: histogram.len().max(1) as f64,
        y_min: 0.0,
        y_max: max_count as f64,
    };
    let mut canvas = Canvas::new(WIDTH, HEIGHT);
    frame.draw_axes(&mut canvas, "class", "acquired labels");
    let slot = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / histogram.len().max(1) as f64;
    for (i, (class, count)) in histogram.iter().enumerate() {
        let x = MARGIN_LEFT + slot * (i as f64 + 0.2);
        let y = frame.y(*count as f64);
        let h = (HEIGHT - MARGIN_BOTTOM) - y;
        canvas.rect(x, y, slot * 0.6, h, "#1f77b4", "bar-count");
        canvas.text(x + slot * 0.3, y - 4.0, 10.0, "middle", &count.to_string());
        canvas.text(
            x + slot * 0.3,
            HEIGHT - MARGIN_BOTTOM + 14.0,
            10.0,
            "middle",
            &class.to_string(),
        );
    }
    canvas.text(
        WIDTH - MARGIN_RIGHT + 10.0,
        MARGIN_TOP + 10.0,
        11.0,
        "start",
        &format!("total {total}"),
    );

    let out = ensure_plot_dir(run_dir)?.join("label_distribution.svg");
    std::fs::write(&out, canvas.finish())
        .map_err(|e| ExperimentError::Persist(format!("{}: {e}", out.display())))?;
    Ok(out)
}

/// Final-round per-class rows from `per_class.csv`: (class, standard,
/// robust).
fn read_final_per_class(run_dir: &Path) -> Result<Vec<(u32, f64, Option<f64>)>, ExperimentError> {
    let path = run_dir.join("per_class.csv");
    let (headers, rows) = read_csv(&path)?;
    let round_col = column(&headers, "round", &path)?;
    let class_col = column(&headers, "class", &path)?;
    let std_col = column(&headers, "standard", &path)?;
    let rob_col = column(&headers, "robust", &path)?;
    let last_round = rows
        .iter()
        .map(|r| parse_f64(&r[round_col], &path))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    let mut out = Vec::new();
    for row in &rows {
        if parse_f64(&row[round_col], &path)? != last_round {
            continue;
        }
        let class: u32 = row[class_col].parse().map_err(|e| {
            ExperimentError::Persist(format!("{}: bad class: {e}", path.display()))
        })?;
        let standard = parse_f64(&row[std_col], &path)?;
        let robust = if row[rob_col].is_empty() {
            None
        } else {
            Some(parse_f64(&row[rob_col], &path)?)
        };
        out.push((class, standard, robust));
    }
    out.sort_by_key(|(class, _, _)| *class);
    Ok(out)
}

/// Nested per-class bars from the final round: the wide bar is the standard
/// metric, the narrow inner bar the robust one. Values render verbatim from
/// the persisted file.
pub fn plot_per_class_bars(run_dir: &Path) -> Result<PathBuf, ExperimentError> {
    let per_class = read_final_per_class(run_dir)?;
    if per_class.is_empty() {
        return Err(ExperimentError::Persist(format!(
            "{}: no per-class rows",
            run_dir.join("per_class.csv").display()
        )));
    }

    let frame = Frame {
        x_min: 0.0,
        x_max: per_class.len() as f64,
        y_min: 0.0,
        y_max: 1.0,
    };
    let mut canvas = Canvas::new(WIDTH, HEIGHT);
    frame.draw_axes(&mut canvas, "class", "accuracy");
    let slot = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / per_class.len() as f64;
    for (i, (class, standard, robust)) in per_class.iter().enumerate() {
        let base = MARGIN_LEFT + slot * i as f64;
        let y_std = frame.y(*standard);
        canvas.rect(
            base + slot * 0.15,
            y_std,
            slot * 0.7,
            (HEIGHT - MARGIN_BOTTOM) - y_std,
            "#aec7e8",
            "bar-standard",
        );
        if let Some(rob) = robust {
            let y_rob = frame.y(*rob);
            canvas.rect(
                base + slot * 0.325,
                y_rob,
                slot * 0.35,
                (HEIGHT - MARGIN_BOTTOM) - y_rob,
                "#1f77b4",
                "bar-robust",
            );
        }
        canvas.text(
            base + slot * 0.5,
            HEIGHT - MARGIN_BOTTOM + 14.0,
            10.0,
            "middle",
            &class.to_string(),
        );
    }
    let legend_x = WIDTH - MARGIN_RIGHT + 10.0;
    canvas.rect(legend_x, MARGIN_TOP, 10.0, 10.0, "#aec7e8", "legend");
    canvas.text(legend_x + 14.0, MARGIN_TOP + 9.0, 11.0, "start", "standard");
    canvas.rect(legend_x, MARGIN_TOP + 14.0, 10.0, 10.0, "#1f77b4", "legend");
    canvas.text(
        legend_x + 14.0,
        MARGIN_TOP + 23.0,
        11.0,
        "start",
        "robust",
    );

    let out = ensure_plot_dir(run_dir)?.join("per_class_bars.svg");
    std::fs::write(&out, canvas.finish())
        .map_err(|e| ExperimentError::Persist(format!("{}: {e}", out.display())))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::store::test_support::run_with_store;
    use super::*;
    use crate::selection::Strategy;

    fn count(haystack: &str, needle: &str) -> usize {
        haystack.matches(needle).count()
    }

    #[test]
    fn metric_curves_have_one_point_per_round_row() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        run_with_store(Strategy::Rand, &dir);
        let out = plot_metric_curves(&dir).unwrap();
        let svg = std::fs::read_to_string(out).unwrap();
        // 2 rounds plus the init row.
        assert_eq!(count(&svg, r#"class="pt-test_worst_std""#), 3);
        assert_eq!(count(&svg, r#"class="pt-test_worst_rob""#), 3);
        assert_eq!(count(&svg, r#"class="series-test_avg_std""#), 1);
    }

    #[test]
    fn label_histogram_sums_to_the_acquired_count() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        let summary = run_with_store(Strategy::GRand, &dir);
        let histogram = read_label_histogram(&dir).unwrap();
        let total: usize = histogram.values().sum();
        let acquired: usize = summary.round_reports.iter().map(|r| r.selected.len()).sum();
        assert_eq!(total, acquired);

        let out = plot_label_distribution(&dir).unwrap();
        let svg = std::fs::read_to_string(out).unwrap();
        assert!(svg.contains(&format!("total {acquired}")));
    }

    #[test]
    fn per_class_bars_render_both_sides() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        run_with_store(Strategy::Ent, &dir);
        let out = plot_per_class_bars(&dir).unwrap();
        let svg = std::fs::read_to_string(out).unwrap();
        assert_eq!(count(&svg, r#"class="bar-standard""#), 2);
        assert_eq!(count(&svg, r#"class="bar-robust""#), 2);
    }

    #[test]
    fn missing_inputs_name_the_file() {
        let tmp = tempfile::tempdir().unwrap();
        let err = plot_label_distribution(tmp.path()).unwrap_err();
        assert!(err.to_string().contains("acquisitions.csv"), "{err}");
        let err = plot_metric_curves(tmp.path()).unwrap_err();
        assert!(err.to_string().contains("metrics.csv"), "{err}");
    }

    #[test]
    fn plot_kind_parses_and_dispatches() {
        assert_eq!(
            "metric-curves".parse::<PlotKind>().unwrap(),
            PlotKind::MetricCurves
        );
        assert!("pie".parse::<PlotKind>().is_err());

        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        run_with_store(Strategy::Rand, &dir);
        for kind in PlotKind::all() {
            let path = plot(&dir, kind).unwrap();
            assert!(path.exists(), "{kind:?}");
        }
    }
}
