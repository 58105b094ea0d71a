//! Finite state spaces with optional human-readable labels.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// A finite state space. States are dense indices `0..n`; labels are optional
/// and default to the decimal index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    /// Anonymous space of `n` states labelled `"0".."n-1"`.
    pub fn of_size(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidModel(format!(
                "state space needs at least 2 states, got {n}"
            )));
        }
        Ok(Self {
            labels: (0..n).map(|i| i.to_string()).collect(),
        })
    }

    /// Space with explicit labels; labels must be distinct.
    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidModel(format!(
                "state space needs at least 2 states, got {}",
                labels.len()
            )));
        }
        let mut seen = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if let Some(j) = seen.insert(l.clone(), i) {
                return Err(Error::InvalidModel(format!(
                    "duplicate state label {l:?} at indices {j} and {i}"
                )));
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, x: usize) -> &str {
        &self.labels[x]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Index of a label, if present.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}
