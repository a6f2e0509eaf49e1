//! Dataset file format: one directory per person.
//!
//! ```text
//! <root>/<person_id>/
//!   features_head.csv   T rows x d_h columns, real-valued, header f0..f{d-1}
//!   features_body.csv   T rows x d_b columns, real-valued, header f0..f{d-1}
//!   labels.csv          columns t,head_class,body_class (t = 0..T-1)
//!   soft_head.csv       optional, T rows x c columns of reals, header s0..
//!   soft_body.csv       optional, same shape
//! ```
//!
//! Features are stored sample-per-row on disk and transposed to `d x T` in
//! memory. Floats round-trip exactly (shortest-representation formatting).

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// All per-person inputs for one joint head/body completion.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonDataset {
    pub person_id: String,
    /// `d_h x T` visual features for the head crops.
    pub head_features: DMatrix<f64>,
    /// `d_b x T` visual features for the body crops.
    pub body_features: DMatrix<f64>,
    pub head_truth: Vec<usize>,
    pub body_truth: Vec<usize>,
    /// Optional sensor-derived soft labels (`c x T`), used only to initialize
    /// unobserved columns.
    pub soft_head: Option<DMatrix<f64>>,
    pub soft_body: Option<DMatrix<f64>>,
}

impl PersonDataset {
    pub fn samples(&self) -> usize {
        self.head_truth.len()
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        let t = self.head_truth.len();
        if t == 0 {
            return Err(Error::InvalidInput(format!(
                "person {}: no samples",
                self.person_id
            )));
        }
        if self.body_truth.len() != t
            || self.head_features.ncols() != t
            || self.body_features.ncols() != t
        {
            return Err(Error::ShapeMismatch(format!(
                "person {}: column counts disagree (labels {} / {}, features {} / {})",
                self.person_id,
                t,
                self.body_truth.len(),
                self.head_features.ncols(),
                self.body_features.ncols()
            )));
        }
        for soft in [&self.soft_head, &self.soft_body].into_iter().flatten() {
            if soft.ncols() != t || soft.nrows() != classes {
                return Err(Error::ShapeMismatch(format!(
                    "person {}: soft labels are {}x{}, expected {classes}x{t}",
                    self.person_id,
                    soft.nrows(),
                    soft.ncols()
                )));
            }
        }
        if let Some(&bad) = self
            .head_truth
            .iter()
            .chain(&self.body_truth)
            .find(|&&c| c >= classes)
        {
            return Err(Error::InvalidInput(format!(
                "person {}: class index {bad} out of range for {classes} classes",
                self.person_id
            )));
        }
        Ok(())
    }
}

/// Loads every person directory under `root` (sorted by name) and validates
/// shapes against `classes`.
pub fn load_dataset(root: &Path, classes: usize) -> Result<Vec<PersonDataset>> {
    let mut person_dirs: Vec<_> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join("labels.csv").exists())
        .collect();
    person_dirs.sort();
    if person_dirs.is_empty() {
        return Err(Error::parse(
            root,
            0,
            "-",
            "no person directories with a labels.csv found",
        ));
    }
    person_dirs
        .iter()
        .map(|dir| load_person(dir, classes))
        .collect()
}

fn load_person(dir: &Path, classes: usize) -> Result<PersonDataset> {
    let person_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "person".to_string());

    let (head_truth, body_truth) = read_labels(&dir.join("labels.csv"), classes)?;
    let head_features = read_feature_matrix(&dir.join("features_head.csv"))?;
    let body_features = read_feature_matrix(&dir.join("features_body.csv"))?;
    let soft_head = read_optional_matrix(&dir.join("soft_head.csv"))?;
    let soft_body = read_optional_matrix(&dir.join("soft_body.csv"))?;

    let person = PersonDataset {
        person_id,
        head_features,
        body_features,
        head_truth,
        body_truth,
        soft_head: soft_head.map(|m| m.transpose()),
        soft_body: soft_body.map(|m| m.transpose()),
    };
    person.validate(classes).map_err(|e| match e {
        Error::ShapeMismatch(msg) | Error::InvalidInput(msg) => Error::parse(dir, 0, "-", msg),
        other => other,
    })?;
    Ok(person)
}

fn read_labels(path: &Path, classes: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut reader = csv_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 0, "-", e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["t", "head_class", "body_class"] {
        return Err(Error::parse(
            path,
            0,
            "-",
            "expected header t,head_class,body_class",
        ));
    }
    let mut head = Vec::new();
    let mut body = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::parse(path, row, "-", e.to_string()))?;
        let t: usize = parse_field(&record, 0, path, row, "t")?;
        if t != i {
            return Err(Error::parse(
                path,
                row,
                "t",
                format!("expected t = {i}, got {t}"),
            ));
        }
        let h: usize = parse_field(&record, 1, path, row, "head_class")?;
        let b: usize = parse_field(&record, 2, path, row, "body_class")?;
        for (value, column) in [(h, "head_class"), (b, "body_class")] {
            if value >= classes {
                return Err(Error::parse(
                    path,
                    row,
                    column,
                    format!("class {value} out of range for {classes} classes"),
                ));
            }
        }
        head.push(h);
        body.push(b);
    }
    if head.is_empty() {
        return Err(Error::parse(path, 0, "-", "no label rows"));
    }
    Ok((head, body))
}

/// Reads a T x d CSV and returns the transposed d x T matrix.
fn read_feature_matrix(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix(path).map(|m| m.transpose())
}

fn read_optional_matrix(path: &Path) -> Result<Option<DMatrix<f64>>> {
    if path.exists() {
        read_matrix(path).map(Some)
    } else {
        Ok(None)
    }
}

fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv_reader(path)?;
    let width = reader
        .headers()
        .map_err(|e| Error::parse(path, 0, "-", e.to_string()))?
        .len();
    let mut data: Vec<f64> = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::parse(path, row, "-", e.to_string()))?;
        if record.len() != width {
            return Err(Error::parse(
                path,
                row,
                "-",
                format!("expected {width} fields, got {}", record.len()),
            ));
        }
        for col in 0..width {
            let v: f64 = parse_field(&record, col, path, row, &format!("f{col}"))?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::parse(path, 0, "-", "no data rows"));
    }
    Ok(DMatrix::from_row_iterator(rows, width, data))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, 0, "-", e.to_string()))
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    index: usize,
    path: &Path,
    row: usize,
    column: &str,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = record
        .get(index)
        .ok_or_else(|| Error::parse(path, row, column, "missing field"))?;
    raw.trim()
        .parse()
        .map_err(|e: T::Err| Error::parse(path, row, column, e.to_string()))
}

/// Writes each person into `<root>/<person_id>/` in the documented format.
pub fn save_dataset(root: &Path, persons: &[PersonDataset]) -> Result<()> {
    for person in persons {
        let dir = root.join(&person.person_id);
        fs::create_dir_all(&dir)?;
        write_labels(
            &dir.join("labels.csv"),
            &person.head_truth,
            &person.body_truth,
        )?;
        write_matrix(
            &dir.join("features_head.csv"),
            &person.head_features.transpose(),
            "f",
        )?;
        write_matrix(
            &dir.join("features_body.csv"),
            &person.body_features.transpose(),
            "f",
        )?;
        if let Some(soft) = &person.soft_head {
            write_matrix(&dir.join("soft_head.csv"), &soft.transpose(), "s")?;
        }
        if let Some(soft) = &person.soft_body {
            write_matrix(&dir.join("soft_body.csv"), &soft.transpose(), "s")?;
        }
    }
    Ok(())
}

fn write_labels(path: &Path, head: &[usize], body: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "head_class", "body_class"])
        .map_err(csv_io)?;
    for (t, (h, b)) in head.iter().zip(body.iter()).enumerate() {
        w.write_record([t.to_string(), h.to_string(), b.to_string()])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn write_matrix(path: &Path, rows_by_cols: &DMatrix<f64>, prefix: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = (0..rows_by_cols.ncols())
        .map(|i| format!("{prefix}{i}"))
        .collect();
    w.write_record(&header).map_err(csv_io)?;
    for r in 0..rows_by_cols.nrows() {
        let record: Vec<String> = rows_by_cols.row(r).iter().map(|v| format!("{v}")).collect();
        w.write_record(&record).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Numerical(format!("csv write failed: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate_synthetic, SyntheticSpec};

    fn small_person(seed: u64) -> PersonDataset {
        let spec = SyntheticSpec {
            samples: 40,
            d_h: 4,
            d_b: 3,
            n_turn_events: 2,
            feature_rank: 3,
            ..SyntheticSpec::default()
        };
        generate_synthetic(&spec.with_seed(seed)).unwrap()
    }

    #[test]
    fn save_load_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = small_person(5);
        a.soft_head = Some(DMatrix::from_fn(8, 40, |i, j| {
            (i as f64 + 0.25) / (j as f64 + 3.0)
        }));
        let b = small_person(6);
        save_dataset(dir.path(), &[a.clone(), b.clone()]).unwrap();

        let loaded = load_dataset(dir.path(), 8).unwrap();
        assert_eq!(loaded.len(), 2);
        // Directory scan sorts by name.
        let (first, second) = if loaded[0].person_id == a.person_id {
            (&loaded[0], &loaded[1])
        } else {
            (&loaded[1], &loaded[0])
        };
        assert_eq!(first, &a);
        assert_eq!(second, &b);
        assert!(first.soft_head.is_some());
        assert_eq!(first.soft_body, None);
    }

    #[test]
    fn shape_mismatch_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let person = small_person(7);
        save_dataset(dir.path(), std::slice::from_ref(&person)).unwrap();
        // Truncate the head features to break the column count.
        let path = dir.path().join(&person.person_id).join("features_head.csv");
        let contents = fs::read_to_string(&path).unwrap();
        let truncated: Vec<&str> = contents.lines().take(20).collect();
        fs::write(&path, truncated.join("\n")).unwrap();
        assert!(matches!(
            load_dataset(dir.path(), 8),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn unknown_class_index_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let person_dir = dir.path().join("p0");
        fs::create_dir_all(&person_dir).unwrap();
        fs::write(
            person_dir.join("labels.csv"),
            "t,head_class,body_class\n0,0,1\n1,9,1\n",
        )
        .unwrap();
        fs::write(person_dir.join("features_head.csv"), "f0\n0.5\n0.25\n").unwrap();
        fs::write(person_dir.join("features_body.csv"), "f0\n0.5\n0.25\n").unwrap();
        let err = load_dataset(dir.path(), 8).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "head_class");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn empty_directory_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_dataset(dir.path(), 8),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn bad_float_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let person = small_person(9);
        save_dataset(dir.path(), std::slice::from_ref(&person)).unwrap();
        let path = dir.path().join(&person.person_id).join("features_body.csv");
        let mut lines: Vec<String> = fs::read_to_string(&path)
            .unwrap()
            .lines()
            .map(String::from)
            .collect();
        lines[3] = lines[3].replacen(',', ",oops", 1);
        fs::write(&path, lines.join("\n")).unwrap();
        match load_dataset(dir.path(), 8).unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected error: {other}"),
        }
    }
}
