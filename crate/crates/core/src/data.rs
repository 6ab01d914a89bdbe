use serde::{Deserialize, Serialize};

use crate::error::{Result, SglError};
use crate::matrix::DenseMatrix;

/// Samples stored one per row, with optional ground-truth class ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset", into = "RawDataset")]
pub struct Dataset {
    features: DenseMatrix,
    labels: Option<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct RawDataset {
    features: DenseMatrix,
    labels: Option<Vec<usize>>,
}

impl TryFrom<RawDataset> for Dataset {
    type Error = SglError;
    fn try_from(raw: RawDataset) -> Result<Self> {
        Dataset::new(raw.features, raw.labels)
    }
}

impl From<Dataset> for RawDataset {
    fn from(d: Dataset) -> Self {
        RawDataset {
            features: d.features,
            labels: d.labels,
        }
    }
}

impl Dataset {
    pub fn new(features: DenseMatrix, labels: Option<Vec<usize>>) -> Result<Self> {
        if features.rows() < 2 {
            return Err(SglError::Data(format!(
                "dataset needs at least 2 samples, got {}",
                features.rows()
            )));
        }
        if features.cols() == 0 {
            return Err(SglError::Data("dataset has no features".into()));
        }
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(SglError::Data(format!(
                    "{} labels for {} samples",
                    l.len(),
                    features.rows()
                )));
            }
        }
        Ok(Self { features, labels })
    }

    pub fn unlabeled(features: DenseMatrix) -> Result<Self> {
        Self::new(features, None)
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn with_labels(self, labels: Option<Vec<usize>>) -> Result<Self> {
        Self::new(self.features, labels)
    }

    /// Subset of samples (and their labels) in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let labels = self
            .labels
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i]).collect());
        Self::new(self.features.select_rows(idx), labels)
    }
}

/// Several feature views of the same samples, in the same order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawViews", into = "RawViews")]
pub struct ViewCollection {
    views: Vec<Dataset>,
}

#[derive(Serialize, Deserialize)]
struct RawViews {
    views: Vec<Dataset>,
}

impl TryFrom<RawViews> for ViewCollection {
    type Error = SglError;
    fn try_from(raw: RawViews) -> Result<Self> {
        ViewCollection::new(raw.views)
    }
}

impl From<ViewCollection> for RawViews {
    fn from(v: ViewCollection) -> Self {
        RawViews { views: v.views }
    }
}

impl ViewCollection {
    pub fn new(views: Vec<Dataset>) -> Result<Self> {
        if views.len() < 2 {
            return Err(SglError::Data(format!(
                "multi-view data needs at least 2 views, got {}",
                views.len()
            )));
        }
        check_same_length(&views)?;
        Ok(Self { views })
    }

    pub fn views(&self) -> &[Dataset] {
        &self.views
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn n_samples(&self) -> usize {
        self.views[0].n_samples()
    }

    /// Ground truth from the first view that carries labels.
    pub fn labels(&self) -> Option<&[usize]> {
        self.views.iter().find_map(|v| v.labels())
    }
}

pub(crate) fn check_same_length(views: &[Dataset]) -> Result<()> {
    let n = views[0].n_samples();
    for (v, d) in views.iter().enumerate() {
        if d.n_samples() != n {
            return Err(SglError::Data(format!(
                "view length mismatch: view {v} has {} samples, view 0 has {n}",
                d.n_samples()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_rows() -> DenseMatrix {
        DenseMatrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap()
    }

    #[test]
    fn label_count_must_match() {
        assert!(Dataset::new(two_rows(), Some(vec![0])).is_err());
        assert!(Dataset::new(two_rows(), Some(vec![0, 1])).is_ok());
    }

    #[test]
    fn needs_two_rows() {
        let one = DenseMatrix::from_rows(&[[0.0]]).unwrap();
        assert!(Dataset::unlabeled(one).is_err());
    }

    #[test]
    fn views_must_agree_on_n() {
        let a = Dataset::unlabeled(two_rows()).unwrap();
        let b = Dataset::unlabeled(DenseMatrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap()).unwrap();
        let err = ViewCollection::new(vec![a.clone(), b]).unwrap_err();
        assert!(err.to_string().contains("view length mismatch"));
        assert!(ViewCollection::new(vec![a.clone()]).is_err());
        assert!(ViewCollection::new(vec![a.clone(), a]).is_ok());
    }

    #[test]
    fn serde_round_trip() {
        let d = Dataset::new(two_rows(), Some(vec![1, 0])).unwrap();
        let vc = ViewCollection::new(vec![d.clone(), d.clone()]).unwrap();
        let s = serde_json::to_string(&vc).unwrap();
        assert_eq!(serde_json::from_str::<ViewCollection>(&s).unwrap(), vc);
        let bad = r#"{"features":{"rows":2,"cols":1,"values":[0.0,1.0]},"labels":[0]}"#;
        assert!(serde_json::from_str::<Dataset>(bad).is_err());
    }
}
