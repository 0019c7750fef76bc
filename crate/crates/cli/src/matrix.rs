//! Matrices in configuration and artifact files: row-major nested arrays.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type Mat = DMatrix<f64>;

/// A matrix as written in a scenario: explicit rows, a diagonal, or an
/// identity of the given size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Rows(Vec<Vec<f64>>),
    Diag { diag: Vec<f64> },
    Identity { identity: usize },
}

impl MatrixSpec {
    pub fn to_mat(&self) -> Result<Mat, String> {
        match self {
            MatrixSpec::Rows(rows) => from_rows(rows),
            MatrixSpec::Diag { diag } => {
                check_finite(diag)?;
                Ok(Mat::from_diagonal(&DVector::from_column_slice(diag)))
            }
            MatrixSpec::Identity { identity } => Ok(Mat::identity(*identity, *identity)),
        }
    }
}

fn check_finite(v: &[f64]) -> Result<(), String> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(format!("entry {} is not finite", i + 1)),
        None => Ok(()),
    }
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat, String> {
    let Some(first) = rows.first() else {
        return Err("matrix has no rows".into());
    };
    let ncols = first.len();
    if ncols == 0 {
        return Err("matrix has empty rows".into());
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(format!(
                "ragged matrix: row {} has {} entries, row 1 has {ncols}",
                i + 1,
                row.len()
            ));
        }
        check_finite(row).map_err(|e| format!("row {}: {e}", i + 1))?;
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// `#[serde(with = "rows")]` for `Mat` fields.
pub mod rows {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with = "opt_rows")]` for `Option<Mat>` fields.
pub mod opt_rows {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat>, D::Error> {
        Option::<Vec<Vec<f64>>>::deserialize(d)?
            .map(|rows| from_rows(&rows).map_err(serde::de::Error::custom))
            .transpose()
    }
}
