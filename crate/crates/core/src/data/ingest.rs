//! Tabular and image-manifest ingestion.

use super::splits::{stratified_splits, SplitFractions};
use super::{DataError, DatasetBundle, Example, Splits, DEFAULT_CLAMP};
use std::collections::BTreeMap;
use std::path::Path;

/// Options for delimiter-separated ingestion.
#[derive(Debug, Clone)]
pub struct TabularOptions {
    pub delimiter: u8,
    pub splits: SplitFractions,
    pub split_seed: u64,
}

impl Default for TabularOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            splits: SplitFractions::default(),
            split_seed: 0,
        }
    }
}

/// Load a delimiter-separated file with a header row. Feature columns are the
/// ones named `feature_*` (kept in header order); `label` and `group` columns
/// are required. Features are min-max scaled per column into the clamp range;
/// a constant column maps to the lower bound.
pub fn load_tabular(path: &Path, options: &TabularOptions) -> Result<DatasetBundle, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataError::Source(format!("{}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| DataError::Source(e.to_string()))?
        .clone();
    let mut feature_cols = Vec::new();
    let mut label_col = None;
    let mut group_col = None;
    for (idx, name) in headers.iter().enumerate() {
        if name.starts_with("feature_") {
            feature_cols.push(idx);
        } else if name == "label" {
            label_col = Some(idx);
        } else if name == "group" {
            group_col = Some(idx);
        } else {
            return Err(DataError::Source(format!("unknown column {name:?}")));
        }
    }
    let label_col = label_col.ok_or_else(|| DataError::Source("missing label column".into()))?;
    let group_col = group_col.ok_or_else(|| DataError::Source("missing group column".into()))?;
    if feature_cols.is_empty() {
        return Err(DataError::Source("no feature_* columns".into()));
    }

    let mut raw: Vec<(Vec<f64>, u32, u32)> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        // Header is row 0 in the file; report data rows 1-based past it.
        let row = row_idx + 1;
        let record = record.map_err(|e| DataError::Ingestion {
            row,
            reason: e.to_string(),
        })?;
        let field = |col: usize, what: &str| -> Result<&str, DataError> {
            let value = record.get(col).unwrap_or("");
            if value.is_empty() {
                Err(DataError::Ingestion {
                    row,
                    reason: format!("blank {what} value"),
                })
            } else {
                Ok(value)
            }
        };
        let mut features = Vec::with_capacity(feature_cols.len());
        for &col in &feature_cols {
            let v: f64 = field(col, "feature")?.parse().map_err(|e| DataError::Ingestion {
                row,
                reason: format!("bad feature value: {e}"),
            })?;
            if !v.is_finite() {
                return Err(DataError::Ingestion {
                    row,
                    reason: "non-finite feature value".into(),
                });
            }
            features.push(v);
        }
        let label: u32 = field(label_col, "label")?.parse().map_err(|e| DataError::Ingestion {
            row,
            reason: format!("bad label value: {e}"),
        })?;
        let group: u32 = field(group_col, "group")?.parse().map_err(|e| DataError::Ingestion {
            row,
            reason: format!("bad group value: {e}"),
        })?;
        raw.push((features, label, group));
    }
    if raw.is_empty() {
        return Err(DataError::Source("no data rows".into()));
    }

    scale_features(&mut raw, DEFAULT_CLAMP);
    bundle_from_rows(raw, options.splits, options.split_seed)
}

/// Load images listed in a manifest with lines `path,label,group`. Paths are
/// resolved relative to the manifest's directory; pixels are scaled to [0, 1]
/// and flattened in RGB order. All images must share one size.
pub fn load_image_manifest(
    manifest: &Path,
    options: &TabularOptions,
) -> Result<DatasetBundle, DataError> {
    let text = std::fs::read_to_string(manifest)
        .map_err(|e| DataError::Source(format!("{}: {e}", manifest.display())))?;
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));

    let mut raw: Vec<(Vec<f64>, u32, u32)> = Vec::new();
    let mut shape: Option<(u32, u32)> = None;
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let rel = parts.next().unwrap_or("").trim();
        let label = parts.next().unwrap_or("").trim();
        let group = parts.next().unwrap_or("").trim();
        if rel.is_empty() || label.is_empty() || group.is_empty() {
            return Err(DataError::Ingestion {
                row,
                reason: "expected `path,label,group`".into(),
            });
        }
        let label: u32 = label.parse().map_err(|e| DataError::Ingestion {
            row,
            reason: format!("bad label value: {e}"),
        })?;
        let group: u32 = group.parse().map_err(|e| DataError::Ingestion {
            row,
            reason: format!("bad group value: {e}"),
        })?;
        let img = image::open(base.join(rel)).map_err(|e| DataError::Ingestion {
            row,
            reason: format!("{rel}: {e}"),
        })?;
        let rgb = img.to_rgb8();
        let dims = rgb.dimensions();
        match shape {
            None => shape = Some(dims),
            Some(expected) if expected != dims => {
                return Err(DataError::Ingestion {
                    row,
                    reason: format!("image size {dims:?} differs from {expected:?}"),
                })
            }
            _ => {}
        }
        let features: Vec<f64> = rgb.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
        raw.push((features, label, group));
    }
    if raw.is_empty() {
        return Err(DataError::Source("empty manifest".into()));
    }
    bundle_from_rows(raw, options.splits, options.split_seed)
}

fn scale_features(rows: &mut [(Vec<f64>, u32, u32)], clamp: (f64, f64)) {
    let dim = rows[0].0.len();
    for col in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in rows.iter() {
            lo = lo.min(row.0[col]);
            hi = hi.max(row.0[col]);
        }
        let span = hi - lo;
        for row in rows.iter_mut() {
            row.0[col] = if span > 0.0 {
                clamp.0 + (row.0[col] - lo) / span * (clamp.1 - clamp.0)
            } else {
                clamp.0
            };
        }
    }
}

fn bundle_from_rows(
    rows: Vec<(Vec<f64>, u32, u32)>,
    fractions: SplitFractions,
    split_seed: u64,
) -> Result<DatasetBundle, DataError> {
    let num_classes = rows.iter().map(|r| r.1).max().unwrap() + 1;
    let num_groups = rows.iter().map(|r| r.2).max().unwrap() + 1;
    let examples: Vec<Example> = rows
        .into_iter()
        .enumerate()
        .map(|(id, (features, label, group))| Example {
            id,
            features,
            label: Some(label),
            group,
        })
        .collect();

    let mut cells: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for ex in &examples {
        cells
            .entry((ex.label.unwrap(), ex.group))
            .or_default()
            .push(ex.id);
    }
    let n = examples.len();
    let [train, validation, test] = stratified_splits(&cells, n, fractions, split_seed)?;
    DatasetBundle::new(
        examples,
        num_classes,
        num_groups,
        DEFAULT_CLAMP,
        Splits {
            train,
            validation,
            test,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(dir: &Path, body: &str) -> std::path::PathBuf {
        let path = dir.join("data.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn tabular_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("feature_0,feature_1,label,group\n");
        for i in 0..80 {
            let label = i % 2;
            let group = (i / 2) % 2;
            body.push_str(&format!(
                "{},{},{label},{group}\n",
                i as f64 * 0.5,
                40.0 - i as f64 * 0.25
            ));
        }
        let path = write_csv(dir.path(), &body);
        let bundle = load_tabular(&path, &TabularOptions::default()).unwrap();
        assert_eq!(bundle.len(), 80);
        assert_eq!(bundle.num_classes(), 2);
        assert_eq!(bundle.num_groups(), 2);
        // Min-max scaling pins the extremes.
        let flat: Vec<f64> = (0..80).map(|id| bundle.example(id).features[0]).collect();
        assert_eq!(flat.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(flat.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
    }

    #[test]
    fn blank_group_reports_row_index() {
        let dir = tempfile::tempdir().unwrap();
        let body = "feature_0,label,group\n0.5,0,0\n0.25,1,\n0.75,1,1\n";
        let path = write_csv(dir.path(), body);
        let err = load_tabular(&path, &TabularOptions::default()).unwrap_err();
        match err {
            DataError::Ingestion { row, reason } => {
                assert_eq!(row, 2);
                assert!(reason.contains("group"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_column_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = "feature_0,label,group,extra\n0.5,0,0,9\n";
        let path = write_csv(dir.path(), body);
        let err = load_tabular(&path, &TabularOptions::default()).unwrap_err();
        assert!(err.to_string().contains("extra"));
    }

    #[test]
    fn image_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        // 4x(class,group) cells x 10 images of 2x2 pixels.
        let mut manifest = String::new();
        let mut idx = 0;
        for label in 0..2u32 {
            for group in 0..2u32 {
                for _ in 0..10 {
                    let name = format!("img{idx}.png");
                    let shade = (idx * 3 % 255) as u8;
                    let img = image::RgbImage::from_pixel(2, 2, image::Rgb([shade, 0, 255]));
                    img.save(dir.path().join(&name)).unwrap();
                    manifest.push_str(&format!("{name},{label},{group}\n"));
                    idx += 1;
                }
            }
        }
        let manifest_path = dir.path().join("manifest.txt");
        std::fs::write(&manifest_path, manifest).unwrap();
        let bundle = load_image_manifest(&manifest_path, &TabularOptions::default()).unwrap();
        assert_eq!(bundle.len(), 40);
        assert_eq!(bundle.feature_dim(), 12); // 2x2 RGB
        for id in 0..bundle.len() {
            for &v in &bundle.example(id).features {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn mismatched_image_sizes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        image::RgbImage::from_pixel(2, 2, image::Rgb([1, 2, 3]))
            .save(dir.path().join("a.png"))
            .unwrap();
        image::RgbImage::from_pixel(3, 2, image::Rgb([1, 2, 3]))
            .save(dir.path().join("b.png"))
            .unwrap();
        let manifest_path = dir.path().join("manifest.txt");
        std::fs::write(&manifest_path, "a.png,0,0\nb.png,1,1\n").unwrap();
        let err = load_image_manifest(&manifest_path, &TabularOptions::default()).unwrap_err();
        assert!(err.to_string().contains("differs"));
    }
}
