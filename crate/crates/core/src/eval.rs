//! Perplexity, gold-rule precision/recall and cluster purity.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::corpus::normalize_phrase;
use crate::error::{Error, Result};
use crate::hierarchy::TopicTree;
use crate::ontology::{Ontology, SUBCLASS_PREDICATE};
use crate::rlda::{GibbsState, NodeToken, PosteriorEstimates};

/// `exp(−mean ln p)` over per-token probabilities.
pub fn perplexity_from_probabilities(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::InvalidArgument("perplexity of zero tokens".into()));
    }
    let mut log_sum = 0.0;
    for (index, &p) in probs.iter().enumerate() {
        if p.is_nan() || p <= 0.0 {
            return Err(Error::ZeroProbability { index });
        }
        log_sum += p.ln();
    }
    Ok((-log_sum / probs.len() as f64).exp())
}

/// Log probability of token `n` under the estimates: the document's weight
/// on the token's topic times the topic's probability of each triplet.
pub fn token_log_probability(est: &PosteriorEstimates, token: &NodeToken, topic: usize) -> f64 {
    let mut lp = est.theta_hat[token.doc][topic].ln();
    for &w in &token.words {
        lp += est.beta_hat[topic][w].ln();
    }
    lp
}

/// Summed log likelihood and token count for a set of assigned tokens.
pub fn log_likelihood(est: &PosteriorEstimates, tokens: &[NodeToken], assignments: &[usize]) -> Result<f64> {
    if tokens.len() != assignments.len() {
        return Err(Error::InvalidArgument(format!(
            "{} assignments for {} tokens",
            assignments.len(),
            tokens.len()
        )));
    }
    let mut total = 0.0;
    for (index, (tok, &z)) in tokens.iter().zip(assignments).enumerate() {
        let lp = token_log_probability(est, tok, z);
        if !lp.is_finite() {
            return Err(Error::ZeroProbability { index });
        }
        total += lp;
    }
    Ok(total)
}

pub fn perplexity(est: &PosteriorEstimates, tokens: &[NodeToken], assignments: &[usize]) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("perplexity of zero tokens".into()));
    }
    Ok((-log_likelihood(est, tokens, assignments)? / tokens.len() as f64).exp())
}

/// Perplexity of a sampler state under its own smoothed estimates.
pub fn model_perplexity(state: &GibbsState, est: &PosteriorEstimates) -> Result<f64> {
    perplexity(est, state.tokens(), &state.assignments())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodePerplexity {
    pub node_id: String,
    pub level: u32,
    pub round: u32,
    pub k: usize,
    pub tokens: usize,
    pub perplexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreePerplexity {
    pub nodes: Vec<NodePerplexity>,
    /// Token-weighted perplexity of all fits whose node sits at each level.
    pub levels: BTreeMap<u32, f64>,
    pub aggregate: f64,
}

/// Perplexity of every fit in the tree, per level and overall.
pub fn tree_perplexity(tree: &TopicTree) -> Result<TreePerplexity> {
    let mut nodes = Vec::new();
    let mut per_level: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for node in tree.nodes() {
        for fit in &node.fits {
            let ll = log_likelihood(&fit.estimates, fit.state.tokens(), &fit.state.assignments())?;
            let n = fit.state.token_count();
            nodes.push(NodePerplexity {
                node_id: node.node_id.clone(),
                level: node.level,
                round: fit.round,
                k: fit.k,
                tokens: n,
                perplexity: (-ll / n as f64).exp(),
            });
            let slot = per_level.entry(node.level).or_default();
            slot.0 += ll;
            slot.1 += n;
        }
    }
    let (ll, n) = per_level.values().fold((0.0, 0), |(a, b), (ll, n)| (a + ll, b + n));
    let aggregate = if n == 0 { f64::NAN } else { (-ll / n as f64).exp() };
    Ok(TreePerplexity {
        nodes,
        levels: per_level
            .into_iter()
            .map(|(level, (ll, n))| (level, (-ll / n as f64).exp()))
            .collect(),
        aggregate,
    })
}

pub type Rule = (String, String, String);

/// Reference rules: `(child, subclass-of, parent)` or `(subject, verb, object)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldRuleSet {
    pub rules: BTreeSet<Rule>,
}

impl GoldRuleSet {
    pub fn new<I, S>(rules: I) -> Self
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: AsRef<str>,
    {
        GoldRuleSet {
            rules: rules
                .into_iter()
                .map(|(a, b, c)| {
                    (
                        normalize_phrase(a.as_ref()),
                        normalize_phrase(b.as_ref()),
                        normalize_phrase(c.as_ref()),
                    )
                })
                .collect(),
        }
    }

    /// Parses a JSON array of three-string arrays.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let rules: Vec<(String, String, String)> = serde_json::from_str(text)?;
        Ok(GoldRuleSet::new(rules))
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

pub fn load_gold(path: impl AsRef<Path>) -> Result<GoldRuleSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    GoldRuleSet::from_json_str(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrfReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

impl PrfReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        // harmonic mean of precision and recall, written over the counts
        let f_measure = ratio(2 * tp, 2 * tp + fp + fn_);
        PrfReport {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f_measure,
        }
    }
}

impl fmt::Display for PrfReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "p={:.3} r={:.3} f={:.3} (tp={} fp={} fn={})",
            self.precision,
            self.recall,
            self.f_measure,
            self.true_positives,
            self.false_positives,
            self.false_negatives
        )
    }
}

pub fn compare_rules(extracted: &BTreeSet<Rule>, gold: &BTreeSet<Rule>) -> PrfReport {
    let tp = extracted.intersection(gold).count();
    PrfReport::from_counts(tp, extracted.len() - tp, gold.len() - tp)
}

/// Rules of an ontology: its subclass edges and its assertions.
pub fn ontology_rules(ontology: &Ontology) -> BTreeSet<Rule> {
    let edges = ontology
        .subclass_edges
        .iter()
        .map(|(child, parent)| (child.clone(), SUBCLASS_PREDICATE.to_owned(), parent.clone()));
    let assertions = ontology
        .assertions
        .iter()
        .map(|t| (t.subject.clone(), t.verb.clone(), t.object.clone()));
    edges.chain(assertions).collect()
}

pub fn compare_gold(extracted: &Ontology, gold: &GoldRuleSet) -> PrfReport {
    compare_rules(&ontology_rules(extracted), &gold.rules)
}

/// Fraction of items whose cluster's majority domain is their own.
pub fn cluster_purity<K, C, D>(assignment: &BTreeMap<K, C>, truth: &BTreeMap<K, D>) -> Result<f64>
where
    K: Ord + fmt::Debug,
    C: Ord,
    D: Ord,
{
    if assignment.len() != truth.len() || assignment.keys().zip(truth.keys()).any(|(a, b)| a != b) {
        let missing = assignment
            .keys()
            .find(|k| !truth.contains_key(k))
            .or_else(|| truth.keys().find(|k| !assignment.contains_key(k)));
        return Err(Error::KeyMismatch(format!("{missing:?} is not in both maps")));
    }
    if assignment.is_empty() {
        return Err(Error::InvalidArgument("purity of an empty assignment".into()));
    }
    let mut table: BTreeMap<&C, BTreeMap<&D, usize>> = BTreeMap::new();
    for (key, cluster) in assignment {
        *table.entry(cluster).or_default().entry(&truth[key]).or_default() += 1;
    }
    let hits: usize = table.values().map(|row| row.values().copied().max().unwrap_or(0)).sum();
    Ok(hits as f64 / assignment.len() as f64)
}
