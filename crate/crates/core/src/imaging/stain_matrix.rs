use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const HEMATOXYLIN: &str = "Hematoxylin";
pub const EOSIN: &str = "Eosin";
pub const SAFFRON: &str = "Saffron";

/// Stain matrix `W`: up to three unit-norm, non-negative OD color vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct StainMatrix<T> {
    columns: Vec<[T; 3]>,
    labels: Vec<String>,
    illuminant: u32,
    p99: Option<Vec<T>>,
}

fn norm<T: Scalar>(v: &[T; 3]) -> T {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn norm_tolerance<T: Scalar>() -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(16.0))
}

impl<T: Scalar> StainMatrix<T> {
    pub fn new(columns: Vec<[T; 3]>, labels: Vec<String>, illuminant: u32) -> Result<Self> {
        let m = Self { columns, labels, illuminant, p99: None };
        m.validate()?;
        Ok(m)
    }

    /// Normalizes each column to unit length before validating.
    pub fn from_unnormalized(columns: Vec<[T; 3]>, labels: Vec<String>, illuminant: u32) -> Result<Self> {
        let columns = columns
            .into_iter()
            .map(|c| {
                let n = norm(&c);
                if n > T::zero() {
                    [c[0] / n, c[1] / n, c[2] / n]
                } else {
                    c
                }
            })
            .collect();
        Self::new(columns, labels, illuminant)
    }

    fn validate(&self) -> Result<()> {
        let r = self.columns.len();
        if !(1..=3).contains(&r) {
            return Err(Error::InvalidStainMatrix(format!("stain count {r} not in 1..=3")));
        }
        if self.labels.len() != r {
            return Err(Error::InvalidStainMatrix(format!("{} labels for {} columns", self.labels.len(), r)));
        }
        if !(1..=255).contains(&self.illuminant) {
            return Err(Error::InvalidIlluminant(self.illuminant));
        }
        for (c, label) in self.columns.iter().zip(&self.labels) {
            if c.iter().any(|v| !v.is_finite() || *v < T::zero()) {
                return Err(Error::InvalidStainMatrix(format!("column {label} has negative entries")));
            }
            if (norm(c) - T::one()).abs() > norm_tolerance() {
                return Err(Error::InvalidStainMatrix(format!("column {label} is not unit norm")));
            }
        }
        if let Some(p) = &self.p99 {
            if p.len() != r {
                return Err(Error::InvalidStainMatrix("p99 length differs from stain count".into()));
            }
        }
        Ok(())
    }

    pub fn stains(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[[T; 3]] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> [T; 3] {
        self.columns[j]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn illuminant(&self) -> u32 {
        self.illuminant
    }

    pub fn p99(&self) -> Option<&[T]> {
        self.p99.as_deref()
    }

    pub fn with_p99(mut self, p99: Option<Vec<T>>) -> Result<Self> {
        self.p99 = p99;
        self.validate()?;
        Ok(self)
    }

    /// Index of the column whose label matches, ignoring ASCII case.
    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.eq_ignore_ascii_case(label))
    }

    /// Sub-matrix made of the selected columns, in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let columns = idx.iter().map(|&i| self.columns[i]).collect();
        let labels = idx.iter().map(|&i| self.labels[i].clone()).collect();
        let p99 = self.p99.as_ref().map(|p| idx.iter().map(|&i| p[i]).collect());
        Self::new(columns, labels, self.illuminant)?.with_p99(p99)
    }

    /// OD vector `W h` for one pixel.
    #[inline]
    pub fn mix(&self, h: &[T]) -> [T; 3] {
        let mut v = [T::zero(); 3];
        for (col, &c) in self.columns.iter().zip(h) {
            for k in 0..3 {
                v[k] = v[k] + col[k] * c;
            }
        }
        v
    }

    pub fn cast<U: Scalar>(&self) -> StainMatrix<U> {
        let conv = |v: T| U::lit(v.as_f64());
        StainMatrix {
            columns: self.columns.iter().map(|c| c.map(conv)).collect(),
            labels: self.labels.clone(),
            illuminant: self.illuminant,
            p99: self.p99.as_ref().map(|p| p.iter().map(|&v| conv(v)).collect()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StainMatrixDoc {
    labels: Vec<String>,
    /// 3 rows x r columns
    matrix: Vec<Vec<f64>>,
    illuminant: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p99: Option<Vec<f64>>,
}

impl<T: Scalar> StainMatrix<T> {
    pub fn to_text(&self) -> String {
        let matrix = (0..3)
            .map(|row| self.columns.iter().map(|c| c[row].as_f64()).collect())
            .collect();
        let doc = StainMatrixDoc {
            labels: self.labels.clone(),
            matrix,
            illuminant: self.illuminant,
            p99: self.p99.as_ref().map(|p| p.iter().map(|v| v.as_f64()).collect()),
        };
        toml::to_string(&doc).expect("stain matrix serializes")
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let doc: StainMatrixDoc = toml::from_str(text).map_err(|e| e.to_string())?;
        if doc.matrix.len() != 3 {
            return Err(format!("matrix must have 3 rows, got {}", doc.matrix.len()));
        }
        let r = doc.labels.len();
        if doc.matrix.iter().any(|row| row.len() != r) {
            return Err(format!("every matrix row must have {r} columns"));
        }
        let columns = (0..r)
            .map(|j| [doc.matrix[0][j], doc.matrix[1][j], doc.matrix[2][j]].map(T::lit))
            .collect();
        let p99 = doc.p99.map(|p| p.into_iter().map(T::lit).collect());
        Self::new(columns, doc.labels, doc.illuminant)
            .and_then(|m| m.with_p99(p99))
            .map_err(|e| e.to_string())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::from_text(&text).map_err(|msg| Error::Parse { path: path.to_path_buf(), msg })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}
