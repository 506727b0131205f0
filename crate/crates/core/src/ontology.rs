//! Parent/child class taxonomy.
//!
//! The text format is one edge per line, `parent_name child_name`; blank lines
//! and `#` comments are ignored.

use std::collections::BTreeSet;
use std::path::Path;

use crate::corpus::ClassId;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OntologyError {
    #[error("class id {id} out of range for {num_classes} classes")]
    OutOfRange { id: ClassId, num_classes: usize },
    #[error("ontology contains a cycle: {cycle:?}")]
    Cycle { cycle: Vec<ClassId> },
    #[error("ontology line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unknown class {name:?} on ontology line {line}")]
    UnknownClass { name: String, line: usize },
    #[error("cannot read ontology {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ontology {
    children: Vec<Vec<ClassId>>,
    parents: Vec<Vec<ClassId>>,
}

impl Ontology {
    /// An ontology with `num_classes` classes and no relations.
    pub fn empty(num_classes: usize) -> Self {
        Self {
            children: vec![Vec::new(); num_classes],
            parents: vec![Vec::new(); num_classes],
        }
    }

    /// Builds the graph from `(parent, child)` edges without checking for
    /// cycles; call [`validate`] for that.
    pub fn from_edges(
        num_classes: usize,
        edges: impl IntoIterator<Item = (ClassId, ClassId)>,
    ) -> Result<Self, OntologyError> {
        let mut onto = Self::empty(num_classes);
        for (p, c) in edges {
            onto.check(p)?;
            onto.check(c)?;
            if !onto.children[p].contains(&c) {
                onto.children[p].push(c);
                onto.parents[c].push(p);
            }
        }
        for list in onto.children.iter_mut().chain(onto.parents.iter_mut()) {
            list.sort_unstable();
        }
        Ok(onto)
    }

    /// Parses `parent child` lines, resolving names against `class_names`.
    pub fn parse(text: &str, class_names: &[String]) -> Result<Self, OntologyError> {
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [parent, child] = fields[..] else {
                return Err(OntologyError::Parse {
                    line: i + 1,
                    reason: format!("expected `parent child`, got {line:?}"),
                });
            };
            let lookup = |name: &str| {
                class_names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| OntologyError::UnknownClass {
                        name: name.to_string(),
                        line: i + 1,
                    })
            };
            edges.push((lookup(parent)?, lookup(child)?));
        }
        Self::from_edges(class_names.len(), edges)
    }

    pub fn read(path: &Path, class_names: &[String]) -> Result<Self, OntologyError> {
        let text = std::fs::read_to_string(path).map_err(|e| OntologyError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text, class_names)
    }

    pub fn to_text(&self, class_names: &[String]) -> String {
        self.edges()
            .map(|(p, c)| format!("{} {}\n", class_names[p], class_names[c]))
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.children.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (ClassId, ClassId)> + '_ {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(p, cs)| cs.iter().map(move |&c| (p, c)))
    }

    fn check(&self, k: ClassId) -> Result<(), OntologyError> {
        if k >= self.num_classes() {
            return Err(OntologyError::OutOfRange {
                id: k,
                num_classes: self.num_classes(),
            });
        }
        Ok(())
    }

    pub fn children(&self, k: ClassId) -> Result<&[ClassId], OntologyError> {
        self.check(k)?;
        Ok(&self.children[k])
    }

    pub fn parents(&self, k: ClassId) -> Result<&[ClassId], OntologyError> {
        self.check(k)?;
        Ok(&self.parents[k])
    }

    /// Direct parents and direct children of `k`. Transitive relations are not
    /// included.
    pub fn neighbors(&self, k: ClassId) -> Result<BTreeSet<ClassId>, OntologyError> {
        self.check(k)?;
        Ok(self.parents[k]
            .iter()
            .chain(&self.children[k])
            .copied()
            .collect())
    }
}

/// Accepts the graph iff it is acyclic; otherwise reports one cycle in edge
/// order (`cycle[i]` is a parent of `cycle[i + 1]`, the last a parent of the
/// first).
pub fn validate(onto: &Ontology) -> Result<(), OntologyError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = onto.num_classes();
    let mut mark = vec![Mark::New; n];
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        // iterative DFS; `path` mirrors the active stack
        let mut stack: Vec<(ClassId, usize)> = vec![(root, 0)];
        let mut path = vec![root];
        mark[root] = Mark::Active;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if let Some(&child) = onto.children[node].get(*next) {
                *next += 1;
                match mark[child] {
                    Mark::New => {
                        mark[child] = Mark::Active;
                        stack.push((child, 0));
                        path.push(child);
                    }
                    Mark::Active => {
                        let start = path.iter().position(|&x| x == child).unwrap_or(0);
                        return Err(OntologyError::Cycle {
                            cycle: path[start..].to_vec(),
                        });
                    }
                    Mark::Done => {}
                }
            } else {
                mark[node] = Mark::Done;
                stack.pop();
                path.pop();
            }
        }
    }
    Ok(())
}
