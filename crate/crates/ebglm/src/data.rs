//! Design matrices, responses, and model configurations.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::GlmFamily;

/// A model configuration: the set of active columns, stored as 1-based
/// indices in strictly increasing order. Configurations are never empty;
/// the empty model lies outside the prior's support.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Configuration {
    indices: Vec<usize>,
}

impl Configuration {
    /// Builds a configuration from 1-based column indices, in any order.
    /// Fails on an empty set, duplicates, zeros, or indices above `p`.
    pub fn new(mut indices: Vec<usize>, p: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidInput(
                "a configuration must contain at least one index".into(),
            ));
        }
        indices.sort_unstable();
        if indices[0] == 0 {
            return Err(Error::InvalidInput(
                "configuration indices are 1-based; found 0".into(),
            ));
        }
        if *indices.last().unwrap() > p {
            return Err(Error::InvalidInput(format!(
                "configuration index {} exceeds the number of columns {p}",
                indices.last().unwrap()
            )));
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(
                "configuration indices must be distinct".into(),
            ));
        }
        Ok(Self { indices })
    }

    /// Single-column configuration `{j}` (1-based).
    pub fn singleton(j: usize) -> Self {
        assert!(j >= 1, "configuration indices are 1-based");
        Self { indices: vec![j] }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Whether column `j` (1-based) is active.
    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    /// The index set with membership of `j` flipped. The result may be
    /// empty, which is why it is returned as a plain vector; callers decide
    /// whether an empty move is admissible.
    pub fn toggled(&self, j: usize) -> Vec<usize> {
        let mut out = self.indices.clone();
        match out.binary_search(&j) {
            Ok(pos) => {
                out.remove(pos);
            }
            Err(pos) => out.insert(pos, j),
        }
        out
    }
}

impl std::fmt::Display for Configuration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (k, j) in self.indices.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, "}}")
    }
}

/// An immutable regression dataset: an `n x p` design matrix, a response
/// vector, and column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    column_names: Vec<String>,
}

impl Dataset {
    /// Validates shapes, finiteness, and response support for `family`.
    /// Pass an empty name vector to get generated names `x1..xp`.
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        column_names: Vec<String>,
        family: &GlmFamily,
    ) -> Result<Self> {
        for (i, value) in y.iter().enumerate() {
            if !family.valid_response(*value) {
                return Err(Error::InvalidInput(format!(
                    "response value {value} at row {} is outside the {} family's support",
                    i + 1,
                    family.name(),
                )));
            }
        }
        Self::from_parts(x, y, column_names)
    }

    /// Same as [`Dataset::new`] but without the family support check, for
    /// internal constructions with synthetic fractional responses (for
    /// example mean responses used by projection solves).
    pub(crate) fn from_parts(
        x: DMatrix<f64>,
        y: DVector<f64>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidInput(
                "the design matrix must have at least one row and one column".into(),
            ));
        }
        if y.len() != n {
            return Err(Error::InvalidInput(format!(
                "response length {} does not match the design's {} rows",
                y.len(),
                n
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "the design matrix contains a non-finite entry".into(),
            ));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "the response contains a non-finite entry".into(),
            ));
        }
        let column_names = if column_names.is_empty() {
            (1..=p).map(|j| format!("x{j}")).collect()
        } else if column_names.len() == p {
            column_names
        } else {
            return Err(Error::InvalidInput(format!(
                "{} column names supplied for {} columns",
                column_names.len(),
                p
            )));
        };
        Ok(Self { x, y, column_names })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Copies the active columns `X_S` into a dense `n x |S|` matrix.
    pub fn column_subset(&self, config: &Configuration) -> Result<DMatrix<f64>> {
        let last = *config.indices().last().unwrap();
        if last > self.p() {
            return Err(Error::InvalidInput(format!(
                "configuration index {last} exceeds the dataset's {} columns",
                self.p()
            )));
        }
        let mut xs = DMatrix::zeros(self.n(), config.len());
        for (k, &j) in config.indices().iter().enumerate() {
            xs.set_column(k, &self.x.column(j - 1));
        }
        Ok(xs)
    }
}
