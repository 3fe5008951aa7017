use crate::data::Dataset;
use crate::error::{config, Result};
use crate::scalar::Scalar;

/// Labelled probe samples grouped by class.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryData<F: Scalar> {
    per_class: Vec<Vec<Vec<F>>>,
    /// Indices into the source dataset, for isolation checks.
    source_indices: Vec<usize>,
    pub provenance: String,
}

impl<F: Scalar> AuxiliaryData<F> {
    /// Builds the set from explicit feature vectors; every class needs at least one.
    pub fn new(per_class: Vec<Vec<Vec<F>>>, provenance: impl Into<String>) -> Result<Self> {
        if per_class.len() < 2 {
            return Err(config("auxiliary data needs at least two classes"));
        }
        if let Some(p) = per_class.iter().position(|c| c.is_empty()) {
            return Err(config(format!("auxiliary data has no sample of class {p}")));
        }
        let dim = per_class[0][0].len();
        if per_class.iter().flatten().any(|x| x.len() != dim) {
            return Err(config("auxiliary samples differ in dimension"));
        }
        Ok(Self {
            per_class,
            source_indices: Vec::new(),
            provenance: provenance.into(),
        })
    }

    pub fn from_indices(data: &Dataset<F>, indices: &[usize], provenance: impl Into<String>) -> Result<Self> {
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        let mut per_class = vec![Vec::new(); data.class_count()];
        for &i in &sorted {
            per_class[data.label(i)].push(data.sample(i).to_vec());
        }
        let mut aux = Self::new(per_class, provenance)?;
        aux.source_indices = sorted;
        Ok(aux)
    }

    pub fn class_count(&self) -> usize {
        self.per_class.len()
    }

    pub fn dim(&self) -> usize {
        self.per_class[0][0].len()
    }

    /// `n_a^p`.
    pub fn count(&self, class: usize) -> usize {
        self.per_class[class].len()
    }

    pub fn samples(&self, class: usize) -> &[Vec<F>] {
        &self.per_class[class]
    }

    pub fn source_indices(&self) -> &[usize] {
        &self.source_indices
    }
}
