use serde::{Deserialize, Serialize};

use crate::dataset::CovariateSchema;

/// One column of a model's design, built from covariate indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Linear(usize),
    Square(usize),
    Product(usize, usize),
}

impl Term {
    fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Term::Linear(j) => x[j],
            Term::Square(j) => x[j] * x[j],
            Term::Product(i, j) => x[i] * x[j],
        }
    }

    fn involves(&self, j: usize) -> bool {
        match *self {
            Term::Linear(a) | Term::Square(a) => a == j,
            Term::Product(a, b) => a == j || b == j,
        }
    }

    pub fn label(&self, schema: &CovariateSchema) -> String {
        let name = |j: usize| {
            schema
                .entries()
                .get(j)
                .map(|c| c.name.clone())
                .unwrap_or_else(|| format!("x{j}"))
        };
        match *self {
            Term::Linear(j) => name(j),
            Term::Square(j) => format!("{}^2", name(j)),
            Term::Product(i, j) => format!("{}*{}", name(i), name(j)),
        }
    }
}

/// Right-hand side of a model (the intercept is implicit).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub terms: Vec<Term>,
}

impl FeatureSpec {
    /// Main effects for covariates `0..p`.
    pub fn linear(p: usize) -> Self {
        Self {
            terms: (0..p).map(Term::Linear).collect(),
        }
    }

    pub fn with(mut self, term: Term) -> Self {
        self.terms.push(term);
        self
    }

    /// Drops every term that touches covariate `j`.
    pub fn without_covariate(&self, j: usize) -> Self {
        Self {
            terms: self.terms.iter().copied().filter(|t| !t.involves(j)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn row(&self, x: &[f64]) -> Vec<f64> {
        self.terms.iter().map(|t| t.eval(x)).collect()
    }

    /// Calls `f` on the row without allocating for small specs.
    pub fn with_row<T>(&self, x: &[f64], f: impl FnOnce(&[f64]) -> T) -> T {
        const STACK: usize = 32;
        if self.terms.len() <= STACK {
            let mut buf = [0.0; STACK];
            for (b, t) in buf.iter_mut().zip(&self.terms) {
                *b = t.eval(x);
            }
            f(&buf[..self.terms.len()])
        } else {
            f(&self.row(x))
        }
    }

    pub fn design<'a>(&self, rows: impl IntoIterator<Item = &'a [f64]>) -> FeatureMatrix {
        let mut data = Vec::new();
        let mut n = 0;
        for x in rows {
            data.extend(self.terms.iter().map(|t| t.eval(x)));
            n += 1;
        }
        FeatureMatrix::from_row_major(n, self.terms.len(), data)
    }

    pub fn labels(&self, schema: &CovariateSchema) -> Vec<String> {
        self.terms.iter().map(|t| t.label(schema)).collect()
    }
}

/// Dense row-major feature matrix without the intercept column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "feature matrix shape mismatch");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_row_major(rows.len(), cols, data)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_terms() {
        let spec = FeatureSpec::linear(2).with(Term::Square(0)).with(Term::Product(0, 1));
        assert_eq!(spec.row(&[2.0, 3.0]), vec![2.0, 3.0, 4.0, 6.0]);
        let reduced = spec.without_covariate(1);
        assert_eq!(reduced.terms, vec![Term::Linear(0), Term::Square(0)]);
    }

    #[test]
    fn design_is_row_major() {
        let rows = [vec![1.0, 2.0], vec![3.0, 4.0]];
        let m = FeatureSpec::linear(2).design(rows.iter().map(Vec::as_slice));
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.column(0), vec![1.0, 3.0]);
    }
}
