//! Terminological ontology: label classes, subclass edges from the tree and
//! relation assertions about the labels. Also the subject–object graph used
//! for seed pruning.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use percent_encoding::{utf8_percent_encode, AsciiSet, CONTROLS};
use serde::{Deserialize, Serialize};

use crate::corpus::{is_synonym_or_acronym, normalize_phrase, Corpus, SynonymLexicon, TripletKey};
use crate::error::{Error, Result};
use crate::hierarchy::TopicTree;

/// Predicate naming subclass rules in gold files and text exports.
pub const SUBCLASS_PREDICATE: &str = "subclass-of";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ontology {
    pub classes: BTreeSet<String>,
    /// (child, parent)
    pub subclass_edges: BTreeSet<(String, String)>,
    pub assertions: BTreeSet<TripletKey>,
    /// label → node id
    pub provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkReport {
    pub asserted: usize,
    /// Distinct corpus triplets whose subject matched no class.
    pub dropped: Vec<TripletKey>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LinkOptions<'a> {
    /// Also attach triplets whose subject is a synonym or acronym of a class;
    /// such assertions are rewritten onto the class label.
    pub match_synonyms: bool,
    pub lexicon: Option<&'a SynonymLexicon>,
}

pub fn link_relations(tree: &TopicTree, corpus: &Corpus) -> (Ontology, LinkReport) {
    link_relations_with(tree, corpus, LinkOptions::default())
}

pub fn link_relations_with(tree: &TopicTree, corpus: &Corpus, opts: LinkOptions<'_>) -> (Ontology, LinkReport) {
    let mut ontology = Ontology::default();
    for node in tree.nodes() {
        let Some(label) = &node.label else { continue };
        ontology.classes.insert(label.clone());
        ontology.provenance.insert(label.clone(), node.node_id.clone());
        for child in &node.children {
            if let Some(child_label) = &child.label {
                ontology.subclass_edges.insert((child_label.clone(), label.clone()));
            }
        }
    }

    let mut report = LinkReport::default();
    for key in corpus.triplet_keys() {
        let class = if ontology.classes.contains(&key.subject) {
            Some(key.subject.clone())
        } else if opts.match_synonyms {
            ontology
                .classes
                .iter()
                .find(|c| is_synonym_or_acronym(&key.subject, c, opts.lexicon))
                .cloned()
        } else {
            None
        };
        match class {
            Some(subject) => {
                ontology.assertions.insert(TripletKey { subject, ..key.clone() });
            }
            None => report.dropped.push(key.clone()),
        }
    }
    report.dropped.sort();
    report.asserted = ontology.assertions.len();
    (ontology, report)
}

#[derive(Serialize, Deserialize)]
struct OntologyJson {
    classes: Vec<String>,
    subclass_edges: Vec<(String, String)>,
    assertions: Vec<(String, String, String)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Turtle,
}

// Everything that could break a `<...>` term or the line structure.
const TERM: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b'#')
    .add(b'%')
    .add(b'<')
    .add(b'>')
    .add(b'\\')
    .add(b'^')
    .add(b'`')
    .add(b'{')
    .add(b'|')
    .add(b'}');

fn term(s: &str) -> String {
    format!("<{}>", utf8_percent_encode(s, TERM))
}

impl Ontology {
    pub fn to_json(&self) -> String {
        let doc = OntologyJson {
            classes: self.classes.iter().cloned().collect(),
            subclass_edges: self.subclass_edges.iter().cloned().collect(),
            assertions: self
                .assertions
                .iter()
                .map(|k| (k.subject.clone(), k.verb.clone(), k.object.clone()))
                .collect(),
            provenance: self.provenance.clone(),
        };
        serde_json::to_string(&doc).expect("plain strings serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: OntologyJson = serde_json::from_str(text)?;
        let ontology = Ontology {
            classes: doc.classes.into_iter().collect(),
            subclass_edges: doc.subclass_edges.into_iter().collect(),
            assertions: doc
                .assertions
                .into_iter()
                .map(|(s, v, o)| TripletKey {
                    subject: s,
                    verb: v,
                    object: o,
                })
                .collect(),
            provenance: doc.provenance,
        };
        ontology.validate()?;
        Ok(ontology)
    }

    /// Plain-text triples, one per line, sorted.
    pub fn to_turtle(&self) -> String {
        let mut lines: Vec<String> = self
            .subclass_edges
            .iter()
            .map(|(child, parent)| format!("{} subClassOf {} .", term(child), term(parent)))
            .chain(
                self.assertions
                    .iter()
                    .map(|k| format!("{} {} {} .", term(&k.subject), term(&k.verb), term(&k.object))),
            )
            .collect();
        lines.sort();
        let mut out = String::new();
        for line in lines {
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn export(&self, format: ExportFormat) -> Vec<u8> {
        match format {
            ExportFormat::Json => self.to_json().into_bytes(),
            ExportFormat::Turtle => self.to_turtle().into_bytes(),
        }
    }

    /// Edges and assertions refer only to classes, and the edges form a
    /// forest.
    pub fn validate(&self) -> Result<()> {
        let mut parent_of: BTreeMap<&str, &str> = BTreeMap::new();
        for (child, parent) in &self.subclass_edges {
            for end in [child, parent] {
                if !self.classes.contains(end) {
                    return Err(Error::InvariantViolation(format!(
                        "edge endpoint {end:?} is not a class"
                    )));
                }
            }
            if parent_of.insert(child, parent).is_some() {
                return Err(Error::InvariantViolation(format!("class {child:?} has two parents")));
            }
        }
        for start in parent_of.keys() {
            let mut cur = *start;
            let mut hops = 0;
            while let Some(p) = parent_of.get(cur) {
                cur = p;
                hops += 1;
                if hops > parent_of.len() {
                    return Err(Error::InvariantViolation(format!("subclass cycle through {start:?}")));
                }
            }
        }
        if let Some(a) = self.assertions.iter().find(|a| !self.classes.contains(&a.subject)) {
            return Err(Error::InvariantViolation(format!(
                "assertion {a} has a non-class subject"
            )));
        }
        Ok(())
    }

    /// Keeps the classes in `phrases` and the assertions in `triplets`;
    /// edges survive when both ends do.
    pub fn restrict(&self, kept: &PruneResult) -> Ontology {
        let classes: BTreeSet<String> = self.classes.intersection(&kept.phrases).cloned().collect();
        Ontology {
            subclass_edges: self
                .subclass_edges
                .iter()
                .filter(|(c, p)| classes.contains(c) && classes.contains(p))
                .cloned()
                .collect(),
            assertions: self
                .assertions
                .iter()
                .filter(|a| classes.contains(&a.subject) && kept.triplets.contains(a))
                .cloned()
                .collect(),
            provenance: self
                .provenance
                .iter()
                .filter(|(label, _)| classes.contains(*label))
                .map(|(l, n)| (l.clone(), n.clone()))
                .collect(),
            classes,
        }
    }
}

/// Undirected subject–object graph. Parallel triplets between the same pair
/// share one edge; triplets without an object hang off their subject node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripletGraph {
    pub nodes: BTreeSet<String>,
    /// (smaller phrase, larger phrase) → triplets
    pub edges: BTreeMap<(String, String), BTreeSet<TripletKey>>,
    pub unary: BTreeMap<String, BTreeSet<TripletKey>>,
}

pub fn build_triplet_graph<'a>(triplets: impl IntoIterator<Item = &'a TripletKey>) -> TripletGraph {
    let mut g = TripletGraph::default();
    for t in triplets {
        g.nodes.insert(t.subject.clone());
        if t.object.is_empty() {
            g.unary.entry(t.subject.clone()).or_default().insert(t.clone());
            continue;
        }
        g.nodes.insert(t.object.clone());
        let pair = if t.subject <= t.object {
            (t.subject.clone(), t.object.clone())
        } else {
            (t.object.clone(), t.subject.clone())
        };
        g.edges.entry(pair).or_default().insert(t.clone());
    }
    g
}

impl TripletGraph {
    pub fn neighbors(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut adj: BTreeMap<&str, BTreeSet<&str>> =
            self.nodes.iter().map(|n| (n.as_str(), BTreeSet::new())).collect();
        for (a, b) in self.edges.keys() {
            adj.get_mut(a.as_str()).unwrap().insert(b);
            adj.get_mut(b.as_str()).unwrap().insert(a);
        }
        adj
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PruneResult {
    pub phrases: BTreeSet<String>,
    /// Triplets whose subject and object (if any) were both reached.
    pub triplets: BTreeSet<TripletKey>,
}

/// Breadth-first expansion from `seeds`: each step adds every phrase adjacent
/// to the current frontier. `steps = None` runs until nothing new is reached.
pub fn prune<S: AsRef<str>>(graph: &TripletGraph, seeds: &[S], steps: Option<u32>) -> Result<PruneResult> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("pruning needs at least one seed".into()));
    }
    let seeds: BTreeSet<String> = seeds.iter().map(|s| normalize_phrase(s.as_ref())).collect();
    let missing: Vec<String> = seeds.iter().filter(|s| !graph.nodes.contains(*s)).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingSeeds(missing));
    }
    let adj = graph.neighbors();
    let mut reached: BTreeSet<&str> = seeds.iter().map(String::as_str).collect();
    let mut frontier: VecDeque<&str> = reached.iter().copied().collect();
    let mut step = 0;
    while !frontier.is_empty() && steps.is_none_or(|s| step < s) {
        let mut next = VecDeque::new();
        for node in frontier {
            for &n in &adj[node] {
                if reached.insert(n) {
                    next.push_back(n);
                }
            }
        }
        frontier = next;
        step += 1;
    }
    let triplets = graph
        .edges
        .iter()
        .filter(|((a, b), _)| reached.contains(a.as_str()) && reached.contains(b.as_str()))
        .flat_map(|(_, ts)| ts.iter().cloned())
        .chain(
            graph
                .unary
                .iter()
                .filter(|(s, _)| reached.contains(s.as_str()))
                .flat_map(|(_, ts)| ts.iter().cloned()),
        )
        .collect();
    Ok(PruneResult {
        phrases: reached.into_iter().map(str::to_owned).collect(),
        triplets,
    })
}

/// The corpus restricted to triplets that survived pruning.
pub fn prune_corpus(corpus: &Corpus, kept: &PruneResult) -> Result<Corpus> {
    corpus.retain_triplets(|k| kept.triplets.contains(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key(s: &str, v: &str, o: &str) -> TripletKey {
        TripletKey::new(s, v, o)
    }

    #[test]
    fn empty_ontology_bytes() {
        let o = Ontology::default();
        assert_eq!(o.to_json(), r#"{"classes":[],"subclass_edges":[],"assertions":[]}"#);
        assert_eq!(o.to_turtle(), "");
        assert_eq!(Ontology::from_json(&o.to_json()).unwrap(), o);
    }

    #[test]
    fn graph_merges_parallel_triplets() {
        let ts = [key("a", "r", "b")];
        let g = build_triplet_graph(&ts);
        assert_eq!(g.nodes, ["a".to_string(), "b".to_string()].into());
        assert_eq!(g.edges.len(), 1);

        let ts = [key("a", "r1", "b"), key("b", "r2", "a")];
        let g = build_triplet_graph(&ts);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[&("a".to_string(), "b".to_string())].len(), 2);
    }

    #[test]
    fn prune_examples() {
        let ts = [key("a", "r", "b"), key("b", "r", "c"), key("d", "r", "e")];
        let g = build_triplet_graph(&ts);
        let two = prune(&g, &["a"], Some(2)).unwrap();
        assert_eq!(two.phrases, ["a", "b", "c"].map(String::from).into());
        assert_eq!(two.triplets.len(), 2);
        let zero = prune(&g, &["a"], Some(0)).unwrap();
        assert_eq!(zero.phrases, ["a".to_string()].into());
        assert!(zero.triplets.is_empty());
        let all = prune(&g, &["d"], None).unwrap();
        assert_eq!(all.phrases.len(), 2);

        let g = build_triplet_graph(&[key("lonely", "exist", "")]);
        let iso = prune(&g, &["lonely"], None).unwrap();
        assert_eq!(iso.phrases, ["lonely".to_string()].into());

        let err = prune(&g, &["nowhere", "lonely", "absent"], None).unwrap_err();
        assert!(matches!(&err, Error::MissingSeeds(m) if m == &["absent", "nowhere"]));
        assert!(err.to_string().contains("absent, nowhere"));
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        let mut o = Ontology::default();
        o.classes.extend(["a", "b"].map(String::from));
        o.subclass_edges.insert(("a".into(), "b".into()));
        o.validate().unwrap();
        o.subclass_edges.insert(("b".into(), "a".into()));
        assert!(o.validate().is_err());
        o.subclass_edges.clear();
        o.assertions.insert(key("c", "r", "a"));
        assert!(o.validate().is_err());
    }

    #[test]
    fn turtle_escapes_terms() {
        let mut o = Ontology::default();
        o.classes.extend(["new york", "city"].map(String::from));
        o.subclass_edges.insert(("new york".into(), "city".into()));
        o.assertions
            .insert(key("new york", "be the largest city in", "the united states"));
        assert_eq!(
            o.to_turtle(),
            "<new%20york> <be%20the%20largest%20city%20in> <the%20united%20states> .\n\
             <new%20york> subClassOf <city> .\n"
        );
    }

    proptest! {
        #[test]
        fn node_count_is_distinct_phrase_count(
            raw in proptest::collection::vec((0u8..30, 0u8..4, 0u8..30), 1..100)
        ) {
            let ts: Vec<TripletKey> = raw.iter().map(|(s, v, o)| key(&format!("p{s}"), &format!("r{v}"), &format!("p{o}"))).collect();
            let g = build_triplet_graph(&ts);
            let phrases: BTreeSet<String> = ts.iter().flat_map(|t| [t.subject.clone(), t.object.clone()]).collect();
            prop_assert_eq!(g.nodes, phrases);
            let triplets: usize = g.edges.values().map(BTreeSet::len).sum();
            let distinct: BTreeSet<_> = ts.iter().collect();
            prop_assert_eq!(triplets, distinct.len());
        }

        #[test]
        fn json_round_trip(
            classes in proptest::collection::btree_set("[a-z ]{1,8}", 0..8),
            verbs in proptest::collection::vec("[a-z]{1,5}", 0..6),
        ) {
            let mut o = Ontology { classes: classes.clone(), ..Default::default() };
            let cs: Vec<_> = classes.iter().cloned().collect();
            for w in cs.windows(2) {
                o.subclass_edges.insert((w[1].clone(), w[0].clone()));
            }
            for (i, v) in verbs.iter().enumerate() {
                if let Some(c) = cs.get(i % cs.len().max(1)) {
                    o.assertions.insert(key(c, v, "thing"));
                    o.provenance.insert(c.clone(), i.to_string());
                }
            }
            let back = Ontology::from_json(&o.to_json()).unwrap();
            prop_assert_eq!(back, o);
        }
    }
}
