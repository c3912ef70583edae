//! Divisive construction of the labeled topic tree.
//!
//! Each node holds a pool of unlabeled tokens. A round at a node estimates the
//! topic count with ACRP, fits rLDA with that count, and groups the pool by
//! topic. All tokens of one phrase are kept together (they follow the topic
//! holding most of them), so a phrase labels at most one node in the tree.
//!
//! * Several topics: one child per topic. The child's label is its top phrase;
//!   the label tokens stop there and the rest of the group recurses below it.
//! * One topic: the top phrase is peeled off as a leaf child and the node runs
//!   another round on what is left, so no child ever inherits its parent's
//!   whole pool.
//! * A pool holding a single phrase becomes one labeled leaf.
//! * At `max_depth` the pool stays at the node as residual tokens.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::acrp::estimate_k;
use crate::config::CorpusConfig;
use crate::corpus::{Corpus, NounPhraseToken, SynonymLexicon, TripletKey};
use crate::error::{Error, Result};
use crate::eval::model_perplexity;
use crate::rlda::{init_from_acrp, train_node, GibbsState, NodeCorpus, PosteriorEstimates};
use crate::rng::{derive_seed, seeded_rng};

/// Number of top triplets kept per node in the serialized beta summary.
pub const BETA_SUMMARY_LEN: usize = 5;

/// One ACRP + rLDA round run at a node.
#[derive(Debug, Clone)]
pub struct NodeFit {
    pub round: u32,
    pub k: usize,
    /// corpus token index of each sampler token, in sampler order
    pub tokens: Vec<usize>,
    pub node: NodeCorpus,
    pub state: GibbsState,
    pub estimates: PosteriorEstimates,
    /// Perplexity before the first sweep and after each sweep, when traced.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TopicNode {
    pub node_id: String,
    pub path: Vec<u32>,
    pub label: Option<String>,
    pub level: u32,
    pub children: Vec<TopicNode>,
    /// Every token routed into this subtree, sorted.
    pub members: Vec<usize>,
    /// Tokens whose phrase is this node's label.
    pub label_tokens: Vec<usize>,
    /// Unlabeled tokens left here by the depth cap.
    pub residual: Vec<usize>,
    pub beta_summary: Vec<(TripletKey, f64)>,
    /// Topic count of every round run at this node.
    pub round_topic_counts: Vec<usize>,
    pub fits: Vec<NodeFit>,
}

impl TopicNode {
    /// A childless node at `path`; `members` must be sorted.
    pub fn new(path: Vec<u32>, label: Option<String>, members: Vec<usize>, label_tokens: Vec<usize>) -> Self {
        TopicNode {
            node_id: path_id(&path),
            level: path.len() as u32,
            path,
            label,
            children: Vec::new(),
            members,
            label_tokens,
            residual: Vec::new(),
            beta_summary: Vec::new(),
            round_topic_counts: Vec::new(),
            fits: Vec::new(),
        }
    }

    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&TopicNode> {
        let mut out = vec![self];
        let mut i = 0;
        while i < out.len() {
            let node = out[i];
            out.splice(i + 1..i + 1, node.children.iter());
            i += 1;
        }
        out
    }

    fn depth(&self) -> u32 {
        self.children.iter().map(TopicNode::depth).max().unwrap_or(self.level)
    }
}

pub fn path_id(path: &[u32]) -> String {
    path.iter().map(u32::to_string).collect::<Vec<_>>().join(".")
}

#[derive(Debug, Clone)]
pub struct TopicTree {
    pub root: TopicNode,
    /// doc id → node id → tokens of the document that stop at that node
    /// (as label or residual).
    pub leaves: BTreeMap<String, BTreeMap<String, Vec<usize>>>,
    pub depth: u32,
    pub token_count: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions<'a> {
    pub lexicon: Option<&'a SynonymLexicon>,
    /// Record per-sweep perplexity of every fit.
    pub trace: bool,
}

struct Ctx<'a> {
    corpus: &'a Corpus,
    config: &'a CorpusConfig,
    opts: BuildOptions<'a>,
}

/// A label candidate within one fitted topic.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelCandidate {
    pub phrase: String,
    /// Sum of the topic's relation probabilities over the distinct triplets
    /// carried by the phrase's tokens.
    pub mass: f64,
    pub token_count: usize,
}

/// Highest mass, then more tokens, then lexicographically smallest; phrases
/// in `excluded` are skipped.
pub fn select_topic_label<'c>(candidates: &'c [LabelCandidate], excluded: &BTreeSet<String>) -> Option<&'c str> {
    candidates
        .iter()
        .filter(|c| !excluded.contains(&c.phrase))
        .min_by(|a, b| {
            b.mass
                .total_cmp(&a.mass)
                .then(b.token_count.cmp(&a.token_count))
                .then_with(|| a.phrase.cmp(&b.phrase))
        })
        .map(|c| c.phrase.as_str())
}

pub fn build_tree(corpus: &Corpus, config: &CorpusConfig) -> Result<TopicTree> {
    build_tree_with(corpus, config, BuildOptions::default())
}

pub fn build_tree_with(corpus: &Corpus, config: &CorpusConfig, opts: BuildOptions<'_>) -> Result<TopicTree> {
    config.validate()?;
    if corpus.token_count() == 0 {
        return Err(Error::EmptyCorpus);
    }
    let ctx = Ctx { corpus, config, opts };
    let all: Vec<usize> = (0..corpus.token_count()).collect();
    let root = expand(&ctx, Vec::new(), None, Vec::new(), all, &BTreeSet::new())?;
    Ok(TopicTree::assemble(root, corpus))
}

struct ChildSpec {
    label: String,
    label_tokens: Vec<usize>,
    pending: Vec<usize>,
    beta_summary: Vec<(TripletKey, f64)>,
}

fn phrase_of<'a>(ctx: &Ctx<'a>, token: usize) -> &'a str {
    &ctx.corpus.token(token).content
}

fn split_by_phrase(ctx: &Ctx<'_>, tokens: &[usize], phrase: &str) -> (Vec<usize>, Vec<usize>) {
    tokens.iter().partition(|&&t| phrase_of(ctx, t) == phrase)
}

fn expand(
    ctx: &Ctx<'_>,
    path: Vec<u32>,
    label: Option<String>,
    label_tokens: Vec<usize>,
    pending: Vec<usize>,
    ancestors: &BTreeSet<String>,
) -> Result<TopicNode> {
    let mut members: Vec<usize> = label_tokens.iter().chain(&pending).copied().collect();
    members.sort_unstable();
    let mut node = TopicNode::new(path, label, members, label_tokens);
    if pending.is_empty() {
        return Ok(node);
    }
    if ctx.config.max_depth.is_some_and(|cap| node.level >= cap) {
        node.residual = pending;
        node.residual.sort_unstable();
        return Ok(node);
    }

    let mut lineage = ancestors.clone();
    lineage.extend(node.label.clone());

    let mut specs: Vec<ChildSpec> = Vec::new();
    let mut remaining = pending;
    let mut round = 0u32;
    while !remaining.is_empty() {
        let distinct: BTreeSet<&str> = remaining.iter().map(|&t| phrase_of(ctx, t)).collect();
        if distinct.len() == 1 {
            let phrase = distinct.into_iter().next().unwrap().to_owned();
            let summary = leaf_summary(ctx, &remaining);
            specs.push(ChildSpec {
                label: phrase,
                label_tokens: std::mem::take(&mut remaining),
                pending: Vec::new(),
                beta_summary: summary,
            });
            break;
        }

        let fit = fit_round(ctx, &node.path, &node.node_id, round, &remaining)?;
        let groups = consolidate(ctx, &fit, fit.k);
        node.round_topic_counts.push(fit.k);
        let mut taken: BTreeSet<String> = lineage.clone();
        taken.extend(specs.iter().map(|s| s.label.clone()));

        if groups.len() == 1 {
            let (topic, group) = &groups[0];
            let label = pick_label(ctx, &fit, *topic, group, &taken)?;
            let (label_tokens, rest) = split_by_phrase(ctx, &remaining, &label);
            specs.push(ChildSpec {
                beta_summary: topic_summary(ctx, &fit, *topic, &label_tokens),
                label,
                label_tokens,
                pending: Vec::new(),
            });
            remaining = rest;
            node.fits.push(fit);
            round += 1;
        } else {
            for (topic, group) in &groups {
                let label = pick_label(ctx, &fit, *topic, group, &taken)?;
                taken.insert(label.clone());
                let (label_tokens, rest) = split_by_phrase(ctx, group, &label);
                specs.push(ChildSpec {
                    beta_summary: topic_summary(ctx, &fit, *topic, group),
                    label,
                    label_tokens,
                    pending: rest,
                });
            }
            node.fits.push(fit);
            remaining.clear();
        }
    }

    let parent_path = node.path.clone();
    let children: Result<Vec<TopicNode>> = specs
        .into_par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut path = parent_path.clone();
            path.push(i as u32);
            let mut child = expand(ctx, path, Some(spec.label), spec.label_tokens, spec.pending, &lineage)?;
            child.beta_summary = spec.beta_summary;
            Ok(child)
        })
        .collect();
    node.children = children?;
    Ok(node)
}

fn fit_round(ctx: &Ctx<'_>, path: &[u32], node_id: &str, round: u32, tokens: &[usize]) -> Result<NodeFit> {
    let mut rng = seeded_rng(derive_seed(ctx.config.rng_seed, path, round));
    let refs: Vec<&NounPhraseToken> = tokens.iter().map(|&t| ctx.corpus.token(t)).collect();
    let (k, acrp) = estimate_k(&refs, ctx.config, &mut rng, ctx.opts.lexicon)?;
    let init = init_from_acrp(&acrp)?;
    let node = NodeCorpus::from_corpus(ctx.corpus, tokens);
    let (alpha, eta) = (ctx.config.alpha, ctx.config.eta);
    let mut trace = Vec::new();
    let (state, estimates) = if ctx.opts.trace {
        let mut observe = |_: usize, s: &GibbsState| {
            let est = PosteriorEstimates::from_state(s, alpha, eta);
            trace.push(model_perplexity(s, &est).unwrap_or(f64::NAN));
        };
        train_node(node_id, &node, k, &init, ctx.config, &mut rng, Some(&mut observe))?
    } else {
        train_node(node_id, &node, k, &init, ctx.config, &mut rng, None)?
    };
    Ok(NodeFit {
        round,
        k,
        tokens: tokens.to_vec(),
        node,
        state,
        estimates,
        trace,
    })
}

/// Groups the fitted tokens by topic, moving every phrase wholesale to the
/// topic holding most of its tokens (lowest topic on ties). Empty topics are
/// dropped; the rest keep topic order.
fn consolidate(ctx: &Ctx<'_>, fit: &NodeFit, k: usize) -> Vec<(usize, Vec<usize>)> {
    let z = fit.state.assignments();
    let mut by_phrase: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (pos, &t) in fit.tokens.iter().enumerate() {
        let entry = by_phrase
            .entry(phrase_of(ctx, t))
            .or_insert_with(|| (vec![0; k], Vec::new()));
        entry.0[z[pos]] += 1;
        entry.1.push(t);
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (counts, tokens) in by_phrase.into_values() {
        let best = (0..k)
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .unwrap();
        groups[best].extend(tokens);
    }
    groups
        .into_iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(i, mut g)| {
            g.sort_unstable();
            (i, g)
        })
        .collect()
}

fn label_candidates(ctx: &Ctx<'_>, fit: &NodeFit, topic: usize, group: &[usize]) -> Vec<LabelCandidate> {
    let position: HashMap<usize, usize> = fit.tokens.iter().enumerate().map(|(p, &t)| (t, p)).collect();
    let mut per_phrase: BTreeMap<&str, (BTreeSet<usize>, usize)> = BTreeMap::new();
    for &t in group {
        let entry = per_phrase.entry(phrase_of(ctx, t)).or_default();
        entry.0.extend(fit.node.tokens[position[&t]].words.iter().copied());
        entry.1 += 1;
    }
    let beta = &fit.estimates.beta_hat[topic];
    per_phrase
        .into_iter()
        .map(|(phrase, (words, count))| LabelCandidate {
            phrase: phrase.to_owned(),
            mass: words.iter().map(|&w| beta[w]).sum(),
            token_count: count,
        })
        .collect()
}

fn pick_label(ctx: &Ctx<'_>, fit: &NodeFit, topic: usize, group: &[usize], taken: &BTreeSet<String>) -> Result<String> {
    let candidates = label_candidates(ctx, fit, topic, group);
    select_topic_label(&candidates, taken)
        .map(str::to_owned)
        .ok_or_else(|| {
            Error::InvariantViolation(format!(
                "no unused label phrase in topic {topic} at node {:?}",
                fit.state.node_id
            ))
        })
}

/// Top relations of `topic` among the triplets carried by `tokens`.
fn topic_summary(ctx: &Ctx<'_>, fit: &NodeFit, topic: usize, tokens: &[usize]) -> Vec<(TripletKey, f64)> {
    let local: HashMap<_, usize> = fit.node.vocabulary.iter().enumerate().map(|(w, &id)| (id, w)).collect();
    let beta = &fit.estimates.beta_hat[topic];
    let ids: BTreeSet<_> = tokens
        .iter()
        .flat_map(|&t| ctx.corpus.token_triplet_ids(t).iter().copied())
        .collect();
    let mut ranked: Vec<(TripletKey, f64)> = ids
        .into_iter()
        .map(|id| (ctx.corpus.vocabulary().key(id).clone(), beta[local[&id]]))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(BETA_SUMMARY_LEN);
    ranked
}

/// Summary for a single-phrase leaf that got no fit of its own: the
/// empirical relation frequencies of its tokens.
fn leaf_summary(ctx: &Ctx<'_>, tokens: &[usize]) -> Vec<(TripletKey, f64)> {
    let mut counts: BTreeMap<&TripletKey, usize> = BTreeMap::new();
    for &t in tokens {
        for &id in ctx.corpus.token_triplet_ids(t) {
            *counts.entry(ctx.corpus.vocabulary().key(id)).or_default() += 1;
        }
    }
    let total: usize = counts.values().sum();
    let mut ranked: Vec<(TripletKey, f64)> = counts
        .into_iter()
        .map(|(k, c)| (k.clone(), c as f64 / total as f64))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(BETA_SUMMARY_LEN);
    ranked
}

impl TopicTree {
    fn assemble(root: TopicNode, corpus: &Corpus) -> Self {
        let mut leaves: BTreeMap<String, BTreeMap<String, Vec<usize>>> = BTreeMap::new();
        for doc in corpus.documents() {
            leaves.insert(doc.doc_id.clone(), BTreeMap::new());
        }
        for node in root.walk() {
            for &t in node.label_tokens.iter().chain(&node.residual) {
                let doc = &corpus.token(t).doc_id;
                leaves
                    .get_mut(doc)
                    .expect("token document is in the corpus")
                    .entry(node.node_id.clone())
                    .or_default()
                    .push(t);
            }
        }
        for groups in leaves.values_mut() {
            for tokens in groups.values_mut() {
                tokens.sort_unstable();
            }
        }
        TopicTree {
            depth: root.depth(),
            root,
            leaves,
            token_count: corpus.token_count(),
        }
    }

    /// Wraps a hand-assembled node hierarchy, checking token conservation.
    pub fn from_root(root: TopicNode, corpus: &Corpus) -> Result<Self> {
        if root.label.is_some() || !root.path.is_empty() {
            return Err(Error::InvalidArgument(
                "the root must be unlabeled and have an empty path".into(),
            ));
        }
        let tree = TopicTree::assemble(root, corpus);
        tree.check_conservation()?;
        Ok(tree)
    }

    pub fn nodes(&self) -> Vec<&TopicNode> {
        self.root.walk()
    }

    pub fn node(&self, node_id: &str) -> Option<&TopicNode> {
        self.nodes().into_iter().find(|n| n.node_id == node_id)
    }

    pub fn labels(&self) -> BTreeSet<&str> {
        self.nodes().iter().filter_map(|n| n.label.as_deref()).collect()
    }

    /// Label sequence from the root to `node_id` (the root contributes none).
    pub fn label_path(&self, node_id: &str) -> Option<Vec<String>> {
        let mut node = &self.root;
        let mut labels = Vec::new();
        if node_id.is_empty() {
            return Some(labels);
        }
        for step in node_id.split('.') {
            let i: usize = step.parse().ok()?;
            node = node.children.get(i)?;
            labels.extend(node.label.clone());
        }
        Some(labels)
    }

    /// Every token sits exactly once as a label or residual token.
    pub fn check_conservation(&self) -> Result<()> {
        let mut seen = vec![false; self.token_count];
        for node in self.nodes() {
            for &t in node.label_tokens.iter().chain(&node.residual) {
                let slot = seen
                    .get_mut(t)
                    .ok_or_else(|| Error::InvariantViolation(format!("token {t} out of range")))?;
                if std::mem::replace(slot, true) {
                    return Err(Error::InvariantViolation(format!("token {t} placed twice")));
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(t) => Err(Error::InvariantViolation(format!("token {t} was lost"))),
            None => Ok(()),
        }
    }

    /// For every token stopping at depth ≥ `level`, the id of its ancestor
    /// node at `level`.
    pub fn level_assignment(&self, level: u32) -> BTreeMap<usize, String> {
        let mut out = BTreeMap::new();
        for node in self.nodes() {
            if node.level == level {
                for &t in &node.members {
                    out.insert(t, node.node_id.clone());
                }
            }
        }
        out
    }

    /// Canonical JSON (sorted keys, children in creation order). Member
    /// phrase counts are looked up in `corpus`.
    pub fn to_json(&self, corpus: &Corpus) -> String {
        let phrases: Vec<String> = (0..corpus.token_count())
            .map(|t| corpus.token(t).content.clone())
            .collect();
        json!({
            "depth": self.depth,
            "root": node_json(&self.root, &phrases),
            "token_count": self.token_count,
        })
        .to_string()
    }

    /// Rebuilds a tree from [`TopicTree::to_json`] output. Fits are not
    /// serialized and come back empty.
    pub fn from_json(text: &str, corpus: &Corpus) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let token_count = value["token_count"]
            .as_u64()
            .ok_or_else(|| schema("token_count missing"))? as usize;
        if token_count != corpus.token_count() {
            return Err(Error::InvalidArgument(format!(
                "tree covers {token_count} tokens but the corpus has {}",
                corpus.token_count()
            )));
        }
        let root = node_from_json(&value["root"], Vec::new(), token_count)?;
        let tree = TopicTree::assemble(root, corpus);
        tree.check_conservation()?;
        Ok(tree)
    }
}

/// Label paths of every node holding a label or residual token of `doc_id`.
pub fn topic_paths(tree: &TopicTree, doc_id: &str) -> Result<Vec<Vec<String>>> {
    let groups = tree
        .leaves
        .get(doc_id)
        .ok_or_else(|| Error::UnknownDocument(doc_id.to_owned()))?;
    let paths: BTreeSet<Vec<String>> = groups
        .keys()
        .map(|id| tree.label_path(id).expect("leaf ids name tree nodes"))
        .collect();
    Ok(paths.into_iter().collect())
}

fn schema(message: &str) -> Error {
    Error::InvalidArgument(format!("malformed tree: {message}"))
}

fn node_json(node: &TopicNode, phrases: &[String]) -> Value {
    let mut members: BTreeMap<&str, usize> = BTreeMap::new();
    for &t in &node.members {
        *members.entry(phrases[t].as_str()).or_default() += 1;
    }
    let summary: Vec<Value> = node
        .beta_summary
        .iter()
        .map(|(k, p)| json!({"probability": p, "triplet": [k.subject, k.verb, k.object]}))
        .collect();
    let mut map = Map::new();
    map.insert("beta_summary".into(), Value::Array(summary));
    map.insert(
        "children".into(),
        Value::Array(node.children.iter().map(|c| node_json(c, phrases)).collect()),
    );
    map.insert("label".into(), node.label.clone().map_or(Value::Null, Value::String));
    map.insert("label_tokens".into(), json!(node.label_tokens));
    map.insert("level".into(), json!(node.level));
    map.insert("members".into(), json!(members));
    map.insert("node_id".into(), json!(node.node_id));
    map.insert("residual".into(), json!(node.residual));
    map.insert("round_topic_counts".into(), json!(node.round_topic_counts));
    Value::Object(map)
}

fn index_list(value: &Value, field: &str, token_count: usize) -> Result<Vec<usize>> {
    value[field]
        .as_array()
        .ok_or_else(|| schema(&format!("{field} missing")))?
        .iter()
        .map(|v| {
            v.as_u64()
                .map(|t| t as usize)
                .filter(|&t| t < token_count)
                .ok_or_else(|| schema(&format!("bad token index in {field}")))
        })
        .collect()
}

fn node_from_json(value: &Value, path: Vec<u32>, token_count: usize) -> Result<TopicNode> {
    let label = match &value["label"] {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        _ => return Err(schema("label must be a string or null")),
    };
    if label.is_none() != path.is_empty() {
        return Err(schema("only the root may be unlabeled"));
    }
    if value["node_id"].as_str() != Some(path_id(&path).as_str()) {
        return Err(schema("node_id does not match the node's position"));
    }
    let label_tokens = index_list(value, "label_tokens", token_count)?;
    let residual = index_list(value, "residual", token_count)?;
    let children = value["children"]
        .as_array()
        .ok_or_else(|| schema("children missing"))?
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut p = path.clone();
            p.push(i as u32);
            node_from_json(c, p, token_count)
        })
        .collect::<Result<Vec<_>>>()?;
    let beta_summary = value["beta_summary"]
        .as_array()
        .ok_or_else(|| schema("beta_summary missing"))?
        .iter()
        .map(|e| {
            let t = e["triplet"]
                .as_array()
                .filter(|t| t.len() == 3)
                .ok_or_else(|| schema("bad triplet"))?;
            let s = |i: usize| t[i].as_str().map(str::to_owned).ok_or_else(|| schema("bad triplet"));
            let p = e["probability"].as_f64().ok_or_else(|| schema("bad probability"))?;
            Ok((
                TripletKey {
                    subject: s(0)?,
                    verb: s(1)?,
                    object: s(2)?,
                },
                p,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let round_topic_counts = value["round_topic_counts"]
        .as_array()
        .ok_or_else(|| schema("round_topic_counts missing"))?
        .iter()
        .map(|v| v.as_u64().map(|k| k as usize).ok_or_else(|| schema("bad topic count")))
        .collect::<Result<Vec<_>>>()?;

    let mut members: Vec<usize> = label_tokens
        .iter()
        .chain(&residual)
        .copied()
        .chain(children.iter().flat_map(|c| c.members.iter().copied()))
        .collect();
    members.sort_unstable();
    let mut node = TopicNode::new(path, label, members, label_tokens);
    node.residual = residual;
    node.children = children;
    node.beta_summary = beta_summary;
    node.round_topic_counts = round_topic_counts;
    Ok(node)
}
