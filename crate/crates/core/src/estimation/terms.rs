use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PilotDataset;

/// Which covariates enter a regression, and how.
///
/// Every covariate in `main` (all covariates when omitted) enters linearly,
/// except those listed in `categorical`, which are expanded into indicator
/// columns against their lowest observed level. `quadratic` adds a squared
/// column for each named covariate. An intercept is always included.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelTerms {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub main: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quadratic: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categorical: Vec<String>,
}

impl ModelTerms {
    /// Intercept only.
    pub fn intercept_only() -> Self {
        ModelTerms {
            main: Some(vec![]),
            ..Default::default()
        }
    }

    /// Linear main effects for every covariate.
    pub fn all_main_effects() -> Self {
        ModelTerms::default()
    }
}

/// One column of a design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "term", rename_all = "snake_case")]
pub enum Term {
    Intercept,
    Linear { column: usize },
    Square { column: usize },
    Level { column: usize, value: f64 },
}

/// Model terms resolved against a dataset's columns (and levels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub terms: Vec<Term>,
    pub names: Vec<String>,
    pub arity: usize,
}

impl DesignSpec {
    pub fn resolve(terms: &ModelTerms, data: &PilotDataset) -> Result<Self> {
        let lookup = |name: &str| {
            data.column_index(name).ok_or_else(|| {
                Error::Schema(format!("model term refers to unknown covariate '{name}'"))
            })
        };
        let mut out = vec![Term::Intercept];
        let mut names = vec!["(intercept)".to_string()];

        let main: Vec<String> = match &terms.main {
            Some(m) => m.clone(),
            None => data.covariate_names.clone(),
        };
        for c in &terms.categorical {
            if !main.contains(c) {
                return Err(Error::Schema(format!(
                    "categorical covariate '{c}' is not among the main effects"
                )));
            }
        }
        for name in &main {
            let j = lookup(name)?;
            if terms.categorical.contains(name) {
                let mut levels: Vec<f64> = data.rows.iter().map(|r| r.x[j]).collect();
                levels.sort_by(f64::total_cmp);
                levels.dedup();
                for &v in levels.iter().skip(1) {
                    out.push(Term::Level {
                        column: j,
                        value: v,
                    });
                    names.push(format!("{name}[{v}]"));
                }
            } else {
                out.push(Term::Linear { column: j });
                names.push(name.clone());
            }
        }
        for name in &terms.quadratic {
            let j = lookup(name)?;
            out.push(Term::Square { column: j });
            names.push(format!("{name}^2"));
        }
        Ok(DesignSpec {
            terms: out,
            names,
            arity: data.arity(),
        })
    }

    pub fn width(&self) -> usize {
        self.terms.len()
    }

    pub fn fill_row(&self, x: &[f64], row: &mut [f64]) {
        for (slot, t) in row.iter_mut().zip(&self.terms) {
            *slot = match *t {
                Term::Intercept => 1.0,
                Term::Linear { column } => x[column],
                Term::Square { column } => x[column] * x[column],
                Term::Level { column, value } => (x[column] == value) as u8 as f64,
            };
        }
    }

    /// Row-major design matrix for a dataset with the same covariate layout.
    pub fn matrix(&self, data: &PilotDataset) -> Result<DesignMatrix> {
        if data.arity() != self.arity {
            return Err(Error::Schema(format!(
                "design expects {} covariates, dataset has {}",
                self.arity,
                data.arity()
            )));
        }
        let p = self.width();
        let mut values = vec![0.0; data.len() * p];
        for (r, chunk) in data.rows.iter().zip(values.chunks_mut(p)) {
            self.fill_row(&r.x, chunk);
        }
        Ok(DesignMatrix {
            rows: data.len(),
            cols: p,
            values,
        })
    }
}

/// Dense row-major matrix of regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl DesignMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.cols.max(1)).take(self.rows)
    }

    /// Keeps only the rows where `keep` is true.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> DesignMatrix {
        let mut values = Vec::new();
        let mut rows = 0;
        for (i, r) in self.iter_rows().enumerate() {
            if keep(i) {
                values.extend_from_slice(r);
                rows += 1;
            }
        }
        DesignMatrix {
            rows,
            cols: self.cols,
            values,
        }
    }
}
