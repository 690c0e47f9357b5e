//! Graph files.
//!
//! TSV: one triplet per line, `head<TAB>relation<TAB>tail`. Blank lines and
//! lines starting with `#` are ignored.
//!
//! JSON:
//! ```json
//! {
//!   "triplets": [{"head": "dog", "relation": "<mask0>", "tail": "animal"}],
//!   "target": 0,
//!   "mask_level": 1
//! }
//! ```
//! `target` and `mask_level` are optional. When `target` is set, that
//! triplet's relation must be `<mask0>`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GraphOfTriplets, Triplet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub triplets: Vec<Triplet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_level: Option<usize>,
}

impl TryFrom<GraphFile> for GraphOfTriplets {
    type Error = Error;

    fn try_from(f: GraphFile) -> Result<Self> {
        let mut g = match f.target {
            Some(t) => GraphOfTriplets::with_target(f.triplets, t)?,
            None => GraphOfTriplets::new(f.triplets)?,
        };
        g.mask_level = f.mask_level;
        Ok(g)
    }
}

impl From<GraphOfTriplets> for GraphFile {
    fn from(g: GraphOfTriplets) -> Self {
        Self {
            triplets: g.triplets,
            target: g.target,
            mask_level: g.mask_level,
        }
    }
}

/// Parses TSV triplets. `origin` is only used in error messages.
pub fn read_tsv(text: &str, origin: &str) -> Result<Vec<Triplet>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        out.push(Triplet::new(fields[0].trim(), fields[1].trim(), fields[2].trim()));
    }
    Ok(out)
}

pub fn write_tsv(g: &GraphOfTriplets) -> String {
    let mut s = String::new();
    for t in g.triplets() {
        let _ = writeln!(s, "{}\t{}\t{}", t.head, t.relation, t.tail);
    }
    s
}

/// Reads a graph from a `.json` file or, for any other extension, TSV.
pub fn read_graph(path: &Path) -> Result<GraphOfTriplets> {
    let text = std::fs::read_to_string(path)?;
    let origin = path.display().to_string();
    let g = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str::<GraphOfTriplets>(&text).map_err(|e| Error::Parse {
            path: origin,
            line: e.line(),
            reason: e.to_string(),
        })?
    } else {
        GraphOfTriplets::new(read_tsv(&text, &origin)?)?
    };
    if g.is_empty() {
        return Err(Error::EmptyGraph);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_round_trip() {
        let text = "# comment\nblack poodle\tis a\tdog\n\ndog\tis a\tanimal\n";
        let g = GraphOfTriplets::new(read_tsv(text, "mem").unwrap()).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(read_tsv(&write_tsv(&g), "mem").unwrap(), g.triplets());
    }

    #[test]
    fn tsv_bad_line_reports_position() {
        let err = read_tsv("a\tb\tc\na\tb\n", "g.tsv").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn json_schema() {
        let json = r#"{"triplets":[{"head":"dog","relation":"<mask0>","tail":"animal"}],"target":0,"mask_level":1}"#;
        let g: GraphOfTriplets = serde_json::from_str(json).unwrap();
        assert_eq!(g.target(), Some(0));
        assert_eq!(g.mask_level(), Some(1));
        assert_eq!(serde_json::to_string(&g).unwrap(), json);

        let bad = r#"{"triplets":[{"head":"dog","relation":"is a","tail":"animal"}],"target":0}"#;
        assert!(serde_json::from_str::<GraphOfTriplets>(bad).is_err());
    }

    #[test]
    fn empty_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.tsv");
        std::fs::write(&path, "\n").unwrap();
        assert!(matches!(read_graph(&path), Err(Error::EmptyGraph)));
    }
}
