//! Dataset loaders.
//!
//! * dense-csv: one sample per line, comma-separated features.
//! * labeled-csv: as dense-csv, with a nonnegative integer class id in the
//!   last column.
//! * multi-view-manifest: a text file with one `view <path>` line per view
//!   and an optional `labels <path>` line naming a file of one integer per
//!   line. Relative paths are resolved against the manifest's directory.
//!
//! Blank lines and lines starting with `#` are skipped in every format.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use sgl_core::{Dataset, DenseMatrix, ViewCollection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    DenseCsv,
    LabeledCsv,
    MultiViewManifest,
}

/// A loaded input: a single view or several aligned views.
#[derive(Debug, Clone)]
pub enum Input {
    Single(Dataset),
    Multi(ViewCollection),
}

impl Input {
    pub fn views(&self) -> &[Dataset] {
        match self {
            Input::Single(d) => std::slice::from_ref(d),
            Input::Multi(v) => v.views(),
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match self {
            Input::Single(d) => d.labels(),
            Input::Multi(v) => v.labels(),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.views()[0].n_samples()
    }

    pub fn feature_matrices(&self) -> Vec<DenseMatrix> {
        self.views().iter().map(|v| v.features().clone()).collect()
    }
}

pub fn ingest(path: &Path, format: Format) -> Result<Input> {
    match format {
        Format::DenseCsv => Ok(Input::Single(read_csv(path, false)?)),
        Format::LabeledCsv => Ok(Input::Single(read_csv(path, true)?)),
        Format::MultiViewManifest => read_manifest(path),
    }
}

pub fn read_csv(path: &Path, labeled: bool) -> Result<Dataset> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_csv(&text, labeled).with_context(|| format!("parsing {}", path.display()))
}

/// Parses csv text; errors name the offending line (1-based).
pub fn parse_csv(text: &str, labeled: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let n_features = record.len() - usize::from(labeled);
        if n_features == 0 {
            bail!("line {line}: no feature columns");
        }
        match width {
            None => width = Some(n_features),
            Some(w) if w != n_features => {
                bail!("line {line}: expected {w} features, found {n_features}")
            }
            _ => {}
        }
        for (col, cell) in record.iter().take(n_features).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| anyhow::anyhow!("line {line}, column {}: not a number: {cell:?}", col + 1))?;
            if !v.is_finite() {
                bail!("line {line}, column {}: non-finite value {cell}", col + 1);
            }
            values.push(v);
        }
        if labeled {
            let cell = &record[n_features];
            let label: usize = cell.parse().map_err(|_| {
                anyhow::anyhow!("line {line}: label must be a nonnegative integer, got {cell:?}")
            })?;
            labels.push(label);
        }
    }
    let Some(d) = width else {
        bail!("no data rows");
    };
    let n = values.len() / d;
    let features = DenseMatrix::new(n, d, values)?;
    Ok(Dataset::new(features, labeled.then_some(labels))?)
}

/// One integer per line.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_labels(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(
            t.parse()
                .map_err(|_| anyhow::anyhow!("line {line_no}: not a nonnegative integer: {t:?}"))?,
        );
    }
    Ok(out)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut s = String::with_capacity(labels.len() * 3);
    for l in labels {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

/// Writes labeled-csv (or dense-csv when `labels` is `None`).
pub fn write_csv(path: &Path, x: &DenseMatrix, labels: Option<&[usize]>) -> Result<()> {
    let mut s = String::new();
    for (i, row) in x.row_iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        if let Some(l) = labels {
            s.push(',');
            s.push_str(&l[i].to_string());
        }
        s.push('\n');
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn read_manifest(path: &Path) -> Result<Input> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let (view_paths, label_path) =
        parse_manifest(&text, base).with_context(|| format!("parsing {}", path.display()))?;
    let labels = label_path.as_deref().map(read_labels).transpose()?;
    let mut views = Vec::with_capacity(view_paths.len());
    for (i, p) in view_paths.iter().enumerate() {
        let d = read_csv(p, false)?;
        if let Some(first) = views.first().map(Dataset::n_samples) {
            if d.n_samples() != first {
                bail!(
                    "view length mismatch: view {i} ({}) has {} rows, view 0 has {first}",
                    p.display(),
                    d.n_samples()
                );
            }
        }
        views.push(d);
    }
    let views = views
        .into_iter()
        .map(|d| d.with_labels(labels.clone()))
        .collect::<sgl_core::Result<Vec<_>>>()
        .context("label file does not match the views")?;
    if views.len() == 1 {
        return Ok(Input::Single(views.into_iter().next().expect("one view")));
    }
    Ok(Input::Multi(ViewCollection::new(views)?))
}

fn parse_manifest(text: &str, base: &Path) -> Result<(Vec<PathBuf>, Option<PathBuf>)> {
    let mut views = Vec::new();
    let mut labels = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (key, rest) = t
            .split_once(char::is_whitespace)
            .ok_or_else(|| anyhow::anyhow!("line {line_no}: expected `view <path>` or `labels <path>`"))?;
        let p = base.join(rest.trim());
        match key {
            "view" => views.push(p),
            "labels" if labels.is_none() => labels = Some(p),
            "labels" => bail!("line {line_no}: second labels entry"),
            other => bail!("line {line_no}: unknown entry {other:?}"),
        }
    }
    if views.is_empty() {
        bail!("manifest lists no views");
    }
    Ok((views, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_line_csv() {
        let d = parse_csv("0,0\n1,1", false).unwrap();
        assert_eq!((d.n_samples(), d.n_features()), (2, 2));
        assert!(d.labels().is_none());
    }

    #[test]
    fn labeled_csv() {
        let d = parse_csv("# comment\n0.5, 1, 2\n\n-1,3e2,0\n", true).unwrap();
        assert_eq!(d.labels(), Some(&[2, 0][..]));
        assert_eq!(d.features().row(1), &[-1.0, 300.0]);
    }

    #[test]
    fn errors_name_the_line() {
        let e = format!("{:#}", parse_csv("0,0,1\n1,1,1.5\n", true).unwrap_err());
        assert!(e.contains("line 2"), "{e}");
        let e = format!("{:#}", parse_csv("0,0\n1,x\n", false).unwrap_err());
        assert!(e.contains("line 2") && e.contains("column 2"), "{e}");
        let e = format!("{:#}", parse_csv("0,0\n1,1\n2\n", false).unwrap_err());
        assert!(e.contains("line 3"), "{e}");
        let e = format!("{:#}", parse_labels("1\n2\nz\n").unwrap_err());
        assert!(e.contains("line 3"), "{e}");
    }

    #[test]
    fn manifest_views_must_align() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "0,0\n1,1\n2,2\n").unwrap();
        fs::write(dir.path().join("b.csv"), "0\n1\n").unwrap();
        fs::write(dir.path().join("c.csv"), "5\n6\n7\n").unwrap();
        fs::write(dir.path().join("y.txt"), "0\n1\n1\n").unwrap();

        let bad = dir.path().join("bad.txt");
        fs::write(&bad, "view a.csv\nview b.csv\n").unwrap();
        let e = format!("{:#}", read_manifest(&bad).unwrap_err());
        assert!(e.contains("view length mismatch"), "{e}");

        let good = dir.path().join("good.txt");
        fs::write(&good, "view a.csv\nview c.csv\nlabels y.txt\n").unwrap();
        let Input::Multi(v) = read_manifest(&good).unwrap() else {
            panic!("expected two views");
        };
        assert_eq!(v.n_views(), 2);
        assert_eq!(v.labels(), Some(&[0, 1, 1][..]));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let x = DenseMatrix::from_rows(&[[0.1, 1.0 / 3.0], [-2.5, 1e-300]]).unwrap();
        write_csv(&p, &x, Some(&[4, 1])).unwrap();
        let d = read_csv(&p, true).unwrap();
        assert_eq!(d.features(), &x);
        assert_eq!(d.labels(), Some(&[4, 1][..]));
    }
}
