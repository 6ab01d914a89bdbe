//! On-disk model directory.
//!
//! `manifest.json` holds the format tag, the solver config, shapes of every
//! stored matrix, view weights, the objective trace and optional metrics.
//! Each matrix is a text file with one row per line and space-separated
//! values written in shortest round-trip form, so load followed by save
//! reproduces every file byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sgl_core::{
    AnchorSet, BipartiteAffinity, ClusterModel, DenseMatrix, MetricSummary, SolverConfig,
    SpectralEmbedding,
};

pub const FORMAT_VERSION: &str = "sgl-model/1";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: SolverConfig,
    pub n_views: usize,
    /// `[rows, cols]` of every matrix file, keyed by file name.
    pub shapes: BTreeMap<String, [usize; 2]>,
    pub view_weights: Vec<f64>,
    pub anchor_sse: Vec<f64>,
    pub anchor_iterations: Vec<usize>,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    pub metrics: Option<MetricSummary>,
}

fn anchors_file(v: usize) -> String {
    format!("anchors_{v}.txt")
}

fn assignments_file(v: usize) -> String {
    format!("anchor_assignments_{v}.txt")
}

fn labels_matrix(labels: &[usize]) -> DenseMatrix {
    DenseMatrix::new(labels.len(), 1, labels.iter().map(|&l| l as f64).collect())
        .expect("labels are finite")
}

fn matrix_labels(m: &DenseMatrix, name: &str) -> Result<Vec<usize>> {
    m.values()
        .iter()
        .map(|&v| {
            ensure!(v >= 0.0 && v.fract() == 0.0, "{name}: {v} is not a label");
            Ok(v as usize)
        })
        .collect()
}

/// Writes `model` (and `metrics`, when known) into `dir`, creating it.
pub fn save(dir: &Path, model: &ClusterModel, metrics: Option<MetricSummary>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files: Vec<(String, DenseMatrix)> = Vec::new();
    for (v, a) in model.anchors.iter().enumerate() {
        files.push((anchors_file(v), a.centers.clone()));
        files.push((assignments_file(v), labels_matrix(&a.assignments)));
    }
    let emb = &model.embedding;
    files.push(("z.txt".into(), model.affinity.matrix().clone()));
    files.push(("u.txt".into(), emb.u_block.clone()));
    files.push(("v.txt".into(), emb.v_block.clone()));
    files.push((
        "singular_values.txt".into(),
        DenseMatrix::new(1, emb.singular_values.len(), emb.singular_values.clone())?,
    ));
    files.push(("sample_labels.txt".into(), labels_matrix(&model.sample_labels)));
    files.push(("anchor_labels.txt".into(), labels_matrix(&model.anchor_labels)));

    let manifest = Manifest {
        format: FORMAT_VERSION.into(),
        config: model.config.clone(),
        n_views: model.n_views(),
        shapes: files
            .iter()
            .map(|(name, m)| (name.clone(), [m.rows(), m.cols()]))
            .collect(),
        view_weights: model.view_weights.clone(),
        anchor_sse: model.anchors.iter().map(|a| a.within_cluster_sse).collect(),
        anchor_iterations: model.anchors.iter().map(|a| a.iterations_used).collect(),
        converged: model.converged,
        objective_trace: model.objective_trace.clone(),
        metrics,
    };
    for (name, m) in &files {
        write_matrix(&dir.join(name), m)?;
    }
    let json = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(dir.join(MANIFEST), json).context("writing manifest")?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<(ClusterModel, Manifest)> {
    let text = fs::read_to_string(dir.join(MANIFEST))
        .with_context(|| format!("reading {}", dir.join(MANIFEST).display()))?;
    let manifest: Manifest = serde_json::from_str(&text).context("parsing manifest")?;
    if manifest.format != FORMAT_VERSION {
        bail!(
            "unsupported model format {:?} (expected {FORMAT_VERSION:?})",
            manifest.format
        );
    }
    ensure!(manifest.n_views >= 1, "manifest declares no views");
    ensure!(
        manifest.anchor_sse.len() == manifest.n_views
            && manifest.anchor_iterations.len() == manifest.n_views,
        "per-view anchor metadata does not match the view count"
    );
    let read = |name: &str| -> Result<DenseMatrix> {
        let shape = manifest
            .shapes
            .get(name)
            .with_context(|| format!("manifest has no shape for {name}"))?;
        let m = read_matrix(&dir.join(name))?;
        ensure!(
            [m.rows(), m.cols()] == *shape,
            "{name} is {}x{}, manifest says {}x{}",
            m.rows(),
            m.cols(),
            shape[0],
            shape[1]
        );
        Ok(m)
    };
    let mut anchors = Vec::with_capacity(manifest.n_views);
    for v in 0..manifest.n_views {
        anchors.push(AnchorSet {
            centers: read(&anchors_file(v))?,
            within_cluster_sse: manifest.anchor_sse[v],
            iterations_used: manifest.anchor_iterations[v],
            assignments: matrix_labels(&read(&assignments_file(v))?, "anchor assignments")?,
        });
    }
    let affinity = BipartiteAffinity::new(read("z.txt")?)?;
    let embedding = SpectralEmbedding {
        u_block: read("u.txt")?,
        v_block: read("v.txt")?,
        singular_values: read("singular_values.txt")?.into_values(),
    };
    let model = ClusterModel {
        anchors,
        affinity,
        embedding,
        sample_labels: matrix_labels(&read("sample_labels.txt")?, "sample labels")?,
        anchor_labels: matrix_labels(&read("anchor_labels.txt")?, "anchor labels")?,
        view_weights: manifest.view_weights.clone(),
        objective_trace: manifest.objective_trace.clone(),
        converged: manifest.converged,
        config: manifest.config.clone(),
    };
    ensure!(
        model.view_weights.len() == model.n_views(),
        "{} view weights for {} views",
        model.view_weights.len(),
        model.n_views()
    );
    Ok((model, manifest))
}

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut s = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{} line {}: bad number", path.display(), i + 1))?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                bail!("{} line {}: expected {c} values, found {}", path.display(), i + 1, row.len())
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    Ok(DenseMatrix::new(rows, cols.unwrap_or(0), values)?)
}
