//! F1 family with the degenerate-case convention, and the paired t-test used
//! to compare seeded runs.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contingency {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Contingency {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// `2tp / (2tp + fp + fn)`, taken as 1 when `tp = fp = fn = 0`.
pub fn f1_binary(c: &Contingency) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        (2 * c.tp) as f64 / denom as f64
    }
}

/// F1 of the counts pooled over all classes.
pub fn micro_f1(cs: &[Contingency]) -> f64 {
    let pooled = cs.iter().fold(Contingency::default(), |acc, c| Contingency {
        tp: acc.tp + c.tp,
        fp: acc.fp + c.fp,
        fn_: acc.fn_ + c.fn_,
        tn: acc.tn + c.tn,
    });
    f1_binary(&pooled)
}

/// Unweighted mean of per-class F1.
pub fn macro_f1(cs: &[Contingency]) -> f64 {
    if cs.is_empty() {
        return 1.0;
    }
    cs.iter().map(f1_binary).sum::<f64>() / cs.len() as f64
}

/// Sorted label ids of every row of a binary label matrix.
pub fn label_sets(y: &CsrMatrix) -> Vec<Vec<usize>> {
    (0..y.rows()).map(|r| y.row(r).map(|(c, _)| c).collect()).collect()
}

/// Per-class contingencies from true and predicted label sets.
pub fn contingencies(truth: &[Vec<usize>], predicted: &[Vec<usize>], n_classes: usize) -> Result<Vec<Contingency>> {
    if truth.len() != predicted.len() {
        return Err(Error::Dimension(format!(
            "{} true label sets but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut cs = vec![Contingency::default(); n_classes];
    for (t, p) in truth.iter().zip(predicted) {
        for (j, c) in cs.iter_mut().enumerate() {
            match (t.contains(&j), p.contains(&j)) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(cs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub per_class: Vec<ClassScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: String,
    pub f1: f64,
    #[serde(flatten)]
    pub counts: Contingency,
}

pub fn evaluate(truth: &[Vec<usize>], predicted: &[Vec<usize>], classes: &[String]) -> Result<Evaluation> {
    let cs = contingencies(truth, predicted, classes.len())?;
    Ok(Evaluation {
        macro_f1: macro_f1(&cs),
        micro_f1: micro_f1(&cs),
        per_class: cs
            .iter()
            .zip(classes)
            .map(|(c, name)| ClassScore {
                class: name.clone(),
                f1: f1_binary(c),
                counts: *c,
            })
            .collect(),
    })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
    pub mean_difference: f64,
    pub significant_05: bool,
    pub significant_005: bool,
}

/// Two-tailed paired t-test on `a[i] - b[i]`.
///
/// Zero variance of the differences gives `p = 1` when they are all zero
/// and `p = 0` otherwise.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "paired lists differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Insufficient("a paired t-test needs at least two runs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, sd) = mean_std(&d);
    let df = d.len() - 1;
    let (t, p) = if sd == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = mean / (sd / (d.len() as f64).sqrt());
        let dff = df as f64;
        (t, beta_reg(dff / 2.0, 0.5, dff / (dff + t * t)))
    };
    Ok(TTest {
        t,
        df,
        p_value: p,
        mean_difference: mean,
        significant_05: p < 0.05,
        significant_005: p < 0.005,
    })
}
