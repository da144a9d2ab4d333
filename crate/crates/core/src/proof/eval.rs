//! Public evaluation functions `F` that a dataset must satisfy.
//!
//! Datasets are UTF-8 CSV; a record is a non-empty line. Predicates are
//! total: malformed input evaluates to `false`.
//!
//! Built-in ids:
//! - `min-records:N` holds when the dataset has at least `N` records.
//! - `schema:csv:f64xK` holds when there is at least one record and every
//!   record has exactly `K` comma-separated finite floats.
//! - `mean-in-range:colC:LO:HI` holds when every record has a finite float in
//!   column `C` and their mean lies in `[LO, HI]`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::ProofError;

type Predicate = dyn Fn(&[u8]) -> bool + Send + Sync;

#[derive(Clone)]
pub struct EvalFunction {
    id: String,
    description: String,
    predicate: Arc<Predicate>,
}

impl fmt::Debug for EvalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EvalFunction")
            .field("id", &self.id)
            .finish()
    }
}

impl EvalFunction {
    pub fn new(
        id: impl Into<String>,
        description: impl Into<String>,
        predicate: impl Fn(&[u8]) -> bool + Send + Sync + 'static,
    ) -> Self {
        EvalFunction {
            id: id.into(),
            description: description.into(),
            predicate: Arc::new(predicate),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn evaluate(&self, data: &[u8]) -> bool {
        (self.predicate)(data)
    }
}

fn records(data: &[u8]) -> Option<Vec<&str>> {
    let text = std::str::from_utf8(data).ok()?;
    Some(
        text.split('\n')
            .map(|l| l.strip_suffix('\r').unwrap_or(l))
            .filter(|l| !l.trim().is_empty())
            .collect(),
    )
}

fn field(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn min_records(n: usize) -> impl Fn(&[u8]) -> bool {
    move |data| records(data).is_some_and(|r| r.len() >= n)
}

fn csv_schema(cols: usize) -> impl Fn(&[u8]) -> bool {
    move |data| {
        let Some(rows) = records(data) else {
            return false;
        };
        !rows.is_empty()
            && rows.iter().all(|row| {
                let fields: Vec<&str> = row.split(',').collect();
                fields.len() == cols && fields.iter().all(|f| field(f).is_some())
            })
    }
}

fn mean_in_range(col: usize, lo: f64, hi: f64) -> impl Fn(&[u8]) -> bool {
    move |data| {
        let Some(rows) = records(data) else {
            return false;
        };
        if rows.is_empty() {
            return false;
        }
        let mut sum = 0.0;
        for row in &rows {
            match row.split(',').nth(col).and_then(field) {
                Some(v) => sum += v,
                None => return false,
            }
        }
        let mean = sum / rows.len() as f64;
        mean >= lo && mean <= hi
    }
}

/// Resolves one of the built-in predicates from its id.
pub fn builtin_eval(eval_id: &str) -> Result<EvalFunction, ProofError> {
    let unknown = || ProofError::UnknownEval(eval_id.to_owned());
    let parts: Vec<&str> = eval_id.split(':').collect();
    match parts.as_slice() {
        ["min-records", n] => {
            let n: usize = n.parse().map_err(|_| unknown())?;
            Ok(EvalFunction::new(
                eval_id,
                format!("at least {n} records"),
                min_records(n),
            ))
        }
        ["schema", "csv", ty] => {
            let cols: usize = ty
                .strip_prefix("f64x")
                .and_then(|c| c.parse().ok())
                .filter(|&c| c >= 1)
                .ok_or_else(unknown)?;
            Ok(EvalFunction::new(
                eval_id,
                format!("every record has {cols} float columns"),
                csv_schema(cols),
            ))
        }
        ["mean-in-range", col, lo, hi] => {
            let col: usize = col
                .strip_prefix("col")
                .and_then(|c| c.parse().ok())
                .ok_or_else(unknown)?;
            let lo = field(lo).ok_or_else(unknown)?;
            let hi = field(hi).ok_or_else(unknown)?;
            if lo > hi {
                return Err(unknown());
            }
            Ok(EvalFunction::new(
                eval_id,
                format!("mean of column {col} within [{lo}, {hi}]"),
                mean_in_range(col, lo, hi),
            ))
        }
        _ => Err(unknown()),
    }
}

/// Built-ins plus caller-registered predicates, looked up by id.
#[derive(Debug, Clone, Default)]
pub struct EvalRegistry {
    custom: BTreeMap<String, EvalFunction>,
}

impl EvalRegistry {
    pub fn new() -> Self {
        EvalRegistry::default()
    }

    pub fn register(&mut self, eval: EvalFunction) {
        self.custom.insert(eval.id.clone(), eval);
    }

    pub fn resolve(&self, eval_id: &str) -> Result<EvalFunction, ProofError> {
        match self.custom.get(eval_id) {
            Some(e) => Ok(e.clone()),
            None => builtin_eval(eval_id),
        }
    }
}
