//! Synthetic seller data shaped to pass or fail a given evaluation function.

use rand::{Rng, RngCore};

use super::ProtocolError;
use crate::proof::EvalFunction;

struct Shape {
    cols: usize,
    min_rows: usize,
    fixed: Option<(usize, f64)>,
}

fn shape_for(eval_id: &str) -> Shape {
    let parts: Vec<&str> = eval_id.split(':').collect();
    let mut shape = Shape {
        cols: 3,
        min_rows: 1,
        fixed: None,
    };
    match parts.as_slice() {
        ["min-records", n] => shape.min_rows = n.parse().unwrap_or(1).max(1),
        ["schema", "csv", ty] => {
            shape.cols = ty
                .strip_prefix("f64x")
                .and_then(|c| c.parse().ok())
                .unwrap_or(3)
        }
        ["mean-in-range", col, lo, hi] => {
            let col: usize = col
                .strip_prefix("col")
                .and_then(|c| c.parse().ok())
                .unwrap_or(0);
            let lo: f64 = lo.parse().unwrap_or(0.0);
            let hi: f64 = hi.parse().unwrap_or(0.0);
            shape.cols = col + 1;
            shape.fixed = Some((col, (lo + hi) / 2.0));
        }
        _ => {}
    }
    shape
}

/// CSV records of at least `target_bytes` that satisfy `eval`.
pub fn passing_dataset(
    eval: &EvalFunction,
    target_bytes: usize,
    rng: &mut impl RngCore,
) -> Result<Vec<u8>, ProtocolError> {
    let shape = shape_for(eval.id());
    let mut out = String::new();
    let mut rows = 0;
    while rows < shape.min_rows || out.len() < target_bytes {
        for c in 0..shape.cols {
            if c > 0 {
                out.push(',');
            }
            match shape.fixed {
                Some((col, v)) if col == c => out.push_str(&format!("{v}")),
                _ => out.push_str(&format!("{:.4}", rng.random::<f64>())),
            }
        }
        out.push('\n');
        rows += 1;
    }
    let data = out.into_bytes();
    if eval.evaluate(&data) {
        Ok(data)
    } else {
        Err(ProtocolError::InvalidConfig(format!(
            "cannot synthesise data passing {}",
            eval.id()
        )))
    }
}

/// `target_bytes` of non-UTF-8 bytes that `eval` rejects.
pub fn failing_dataset(
    eval: &EvalFunction,
    target_bytes: usize,
    rng: &mut impl RngCore,
) -> Result<Vec<u8>, ProtocolError> {
    let mut data = vec![0u8; target_bytes.max(1)];
    rng.fill_bytes(&mut data);
    data[0] = 0xff;
    if eval.evaluate(&data) {
        Err(ProtocolError::InvalidConfig(format!(
            "cannot synthesise data failing {}",
            eval.id()
        )))
    } else {
        Ok(data)
    }
}
