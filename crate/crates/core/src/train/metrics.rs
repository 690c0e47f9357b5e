use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Accuracy,
    MacroF1,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "accuracy" | "acc" => Ok(Self::Accuracy),
            "macro-f1" | "macro_f1" | "f1" => Ok(Self::MacroF1),
            _ => Err(format!("unknown metric '{s}' (expected accuracy or macro-f1)")),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Accuracy => "accuracy",
            Self::MacroF1 => "macro-f1",
        })
    }
}

impl Metric {
    pub fn score(self, predicted: &[usize], gold: &[usize]) -> Result<f64> {
        match self {
            Self::Accuracy => accuracy(predicted, gold),
            Self::MacroF1 => macro_f1(predicted, gold),
        }
    }
}

fn check(predicted: &[usize], gold: &[usize]) -> Result<()> {
    if gold.is_empty() {
        return Err(Error::EmptySplit("evaluation"));
    }
    if predicted.len() != gold.len() {
        return Err(Error::Config(format!(
            "{} predictions for {} labels",
            predicted.len(),
            gold.len()
        )));
    }
    Ok(())
}

pub fn accuracy(predicted: &[usize], gold: &[usize]) -> Result<f64> {
    check(predicted, gold)?;
    let hits = predicted.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Unweighted mean of per-class F1 over every class that occurs in either
/// the predictions or the gold labels.
pub fn macro_f1(predicted: &[usize], gold: &[usize]) -> Result<f64> {
    check(predicted, gold)?;
    let classes: BTreeSet<usize> = predicted.iter().chain(gold).copied().collect();
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut fn_ = 0usize;
            for (&p, &g) in predicted.iter().zip(gold) {
                match (p == c, g == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        })
        .sum();
    Ok(total / classes.len() as f64)
}

/// Mean and sample standard deviation; a single value has std 0.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}
