use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{verbalize_relation, Triplet, KNOWN_RELATIONS};

/// Triplet store with entity and entity-pair indexes. Relations are kept
/// under their canonical names (`IsA`, `AtLocation`, ...).
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    triplets: Vec<Triplet>,
    by_entity: HashMap<String, Vec<usize>>,
    pairs: HashMap<(String, String), usize>,
}

/// Rows dropped while loading, by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub kept: usize,
    pub unknown_relation: usize,
    pub self_loop: usize,
    pub duplicate: usize,
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// `/r/IsA` -> `IsA`.
fn clean_relation(r: &str) -> &str {
    r.trim().trim_start_matches("/r/").trim_end_matches('/')
}

/// `/c/en/black_poodle/n` -> `black poodle`; plain text passes through
/// with underscores turned into spaces.
fn clean_concept(c: &str) -> String {
    let c = c.trim();
    let c = match c.strip_prefix("/c/") {
        Some(rest) => rest.split('/').nth(1).unwrap_or(rest),
        None => c,
    };
    c.replace('_', " ").split_whitespace().collect::<Vec<_>>().join(" ")
}

impl KnowledgeGraph {
    /// Keeps triplets with a known relation, dropping self-loops and exact
    /// duplicates.
    pub fn from_triplets(triplets: impl IntoIterator<Item = Triplet>) -> (Self, LoadReport) {
        let mut kg = Self::default();
        let mut report = LoadReport::default();
        let mut seen = HashSet::new();
        for t in triplets {
            if verbalize_relation(&t.relation).is_err() {
                report.unknown_relation += 1;
            } else if t.head == t.tail || t.head.is_empty() || t.tail.is_empty() {
                report.self_loop += 1;
            } else if !seen.insert(t.clone()) {
                report.duplicate += 1;
            } else {
                let i = kg.triplets.len();
                kg.by_entity.entry(t.head.clone()).or_default().push(i);
                kg.by_entity.entry(t.tail.clone()).or_default().push(i);
                *kg.pairs.entry(pair_key(&t.head, &t.tail)).or_default() += 1;
                kg.triplets.push(t);
                report.kept += 1;
            }
        }
        (kg, report)
    }

    /// Tab-separated `head relation tail` rows; `#` lines and blanks are
    /// skipped. ConceptNet URIs are shortened to plain text.
    pub fn from_tsv(reader: impl BufRead, origin: &str) -> Result<(Self, LoadReport)> {
        let mut rows = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() < 3 {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: i + 1,
                    reason: format!("expected 3 tab-separated fields, found {}", f.len()),
                });
            }
            rows.push(Triplet::new(
                clean_concept(f[0]),
                clean_relation(f[1]),
                clean_concept(f[2]),
            ));
        }
        let (kg, report) = Self::from_triplets(rows);
        if kg.triplets.is_empty() {
            return Err(Error::EmptyCollection);
        }
        Ok((kg, report))
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// Indices of triplets touching `entity`, in load order.
    pub fn incident(&self, entity: &str) -> &[usize] {
        self.by_entity.get(entity).map_or(&[], Vec::as_slice)
    }

    /// Number of triplets joining `a` and `b` in either direction.
    pub fn connecting(&self, a: &str, b: &str) -> usize {
        self.pairs.get(&pair_key(a, b)).copied().unwrap_or(0)
    }

    /// Triplet indices per relation name, in load order.
    pub fn by_relation(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, t) in self.triplets.iter().enumerate() {
            out.entry(t.relation.as_str()).or_default().push(i);
        }
        out
    }
}

/// Random knowledge graph over `num_entities` entities named `c0`, `c1`, ...
/// with `num_triplets` triplets whose relations are drawn from every known
/// relation. Each entity pair is joined at most once.
pub fn synthetic_kg(num_entities: usize, num_triplets: usize, rng: &mut impl Rng) -> KnowledgeGraph {
    let relations: Vec<&str> = KNOWN_RELATIONS.iter().map(|(r, _)| *r).collect();
    let mut pairs = HashSet::new();
    let mut out = Vec::with_capacity(num_triplets);
    let max_pairs = num_entities * num_entities.saturating_sub(1) / 2;
    while out.len() < num_triplets.min(max_pairs) {
        let a = rng.random_range(0..num_entities);
        let b = rng.random_range(0..num_entities);
        if a == b || !pairs.insert((a.min(b), a.max(b))) {
            continue;
        }
        let r = *relations.choose(rng).expect("relations are non-empty");
        out.push(Triplet::new(format!("c{a}"), r, format!("c{b}")));
    }
    KnowledgeGraph::from_triplets(out).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tsv_loading_filters_rows() {
        let text = "# comment\n\
                    /c/en/black_poodle/n\t/r/IsA\t/c/en/dog\n\
                    dog\tIsA\tanimal\n\
                    dog\tIsA\tanimal\n\
                    dog\tLikes\tcat\n\
                    cat\tIsA\tcat\n\
                    \n";
        let (kg, report) = KnowledgeGraph::from_tsv(text.as_bytes(), "mem").unwrap();
        assert_eq!(
            report,
            LoadReport {
                kept: 2,
                unknown_relation: 1,
                self_loop: 1,
                duplicate: 1
            }
        );
        assert_eq!(kg.triplets()[0], Triplet::new("black poodle", "IsA", "dog"));
        assert_eq!(kg.incident("dog"), &[0, 1]);
        assert_eq!(kg.connecting("animal", "dog"), 1);
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = KnowledgeGraph::from_tsv("a\tIsA\tb\nbroken\n".as_bytes(), "kg.tsv").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn synthetic_kg_has_unique_pairs() {
        let kg = synthetic_kg(50, 300, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(kg.len(), 300);
        assert!(kg.triplets().iter().all(|t| kg.connecting(&t.head, &t.tail) == 1));
    }
}
