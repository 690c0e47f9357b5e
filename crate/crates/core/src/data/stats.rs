use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::LabeledInstance;
use crate::error::{Error, Result};
use crate::graph::GraphOfTriplets;
use crate::train::mean_std;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

/// Size of the original graphs (concepts and triplets, not Levi units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraphStats {
    pub graphs: usize,
    pub nodes: MeanStd,
    pub edges: MeanStd,
    /// `2 * edges / nodes` per graph.
    pub mean_degree: MeanStd,
}

fn summarize(values: &[f64]) -> MeanStd {
    let (mean, std) = mean_std(values).expect("caller checks for empty input");
    MeanStd { mean, std }
}

pub fn stats<'a>(graphs: impl IntoIterator<Item = &'a GraphOfTriplets>) -> Result<GraphStats> {
    let (mut nodes, mut edges, mut degree) = (Vec::new(), Vec::new(), Vec::new());
    for g in graphs {
        let n = g.concepts().len() as f64;
        let e = g.len() as f64;
        nodes.push(n);
        edges.push(e);
        degree.push(2.0 * e / n);
    }
    if nodes.is_empty() {
        return Err(Error::EmptyCollection);
    }
    Ok(GraphStats {
        graphs: nodes.len(),
        nodes: summarize(&nodes),
        edges: summarize(&edges),
        mean_degree: summarize(&degree),
    })
}

pub fn stats_by_radius(instances: &[LabeledInstance]) -> Result<BTreeMap<usize, GraphStats>> {
    if instances.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let mut by: BTreeMap<usize, Vec<&GraphOfTriplets>> = BTreeMap::new();
    for i in instances {
        by.entry(i.radius).or_default().push(&i.graph);
    }
    by.into_iter().map(|(r, gs)| Ok((r, stats(gs)?))).collect()
}
