//! Relation-based LDA at one tree node, fitted by collapsed Gibbs sampling.
//!
//! The "word" is a relation triplet. A token is a noun-phrase occurrence
//! carrying one or more triplets; the token is the unit that receives a topic
//! and its triplets are emitted from that topic. With one triplet per token
//! this is plain LDA over triplet ids.
//!
//! Counts are node-scoped: documents are restricted to the tokens routed to
//! the node, and the vocabulary is the set of triplets those tokens carry.

use std::collections::HashMap;

use rand::Rng;

use crate::acrp::{sample_categorical, AcrpState};
use crate::config::CorpusConfig;
use crate::corpus::{Corpus, TripletId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeToken {
    /// Node-local document index.
    pub doc: usize,
    /// Node-local vocabulary ids, one per carried triplet.
    pub words: Vec<usize>,
}

/// The tokens of one node with node-local document and vocabulary indexing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeCorpus {
    pub tokens: Vec<NodeToken>,
    /// local vocabulary id → corpus triplet id
    pub vocabulary: Vec<TripletId>,
    /// local document index → corpus document index
    pub documents: Vec<usize>,
}

impl NodeCorpus {
    pub fn new(tokens: Vec<NodeToken>, vocab_size: usize, doc_count: usize) -> Self {
        NodeCorpus {
            tokens,
            vocabulary: (0..vocab_size as u32).map(TripletId).collect(),
            documents: (0..doc_count).collect(),
        }
    }

    /// Node view over the corpus tokens at `indices`, in that order.
    pub fn from_corpus(corpus: &Corpus, indices: &[usize]) -> Self {
        let mut vocab_map: HashMap<TripletId, usize> = HashMap::new();
        let mut doc_map: HashMap<usize, usize> = HashMap::new();
        let mut vocabulary = Vec::new();
        let mut documents = Vec::new();
        let tokens = indices
            .iter()
            .map(|&i| {
                let d = corpus.token_document(i);
                let doc = *doc_map.entry(d).or_insert_with(|| {
                    documents.push(d);
                    documents.len() - 1
                });
                let words = corpus
                    .token_triplet_ids(i)
                    .iter()
                    .map(|&id| {
                        *vocab_map.entry(id).or_insert_with(|| {
                            vocabulary.push(id);
                            vocabulary.len() - 1
                        })
                    })
                    .collect();
                NodeToken { doc, words }
            })
            .collect();
        NodeCorpus {
            tokens,
            vocabulary,
            documents,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn doc_count(&self) -> usize {
        self.documents.len()
    }
}

/// Sampler state: assignments plus the topic–relation counts `C`, the
/// node-scoped document–topic counts `B` and their cached row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    pub node_id: String,
    k: usize,
    vocab_size: usize,
    tokens: Vec<NodeToken>,
    z: Vec<Option<usize>>,
    // k × vocab_size, row-major
    topic_word: Vec<u32>,
    // doc_count × k, row-major
    doc_topic: Vec<u32>,
    // triplet occurrences per topic
    topic_totals: Vec<u32>,
    // assigned tokens per document
    doc_totals: Vec<u32>,
}

impl GibbsState {
    /// Builds counts from an initial assignment (`init[n] < k`).
    pub fn new(node_id: impl Into<String>, node: &NodeCorpus, k: usize, init: &[usize]) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("topic count must be at least 1".into()));
        }
        if node.tokens.is_empty() {
            return Err(Error::InvalidArgument("node has no tokens".into()));
        }
        if init.len() != node.tokens.len() {
            return Err(Error::InvalidArgument(format!(
                "{} initial assignments for {} tokens",
                init.len(),
                node.tokens.len()
            )));
        }
        let w = node.vocab_size();
        for t in &node.tokens {
            if t.doc >= node.doc_count() || t.words.iter().any(|&x| x >= w) {
                return Err(Error::InvalidArgument("token indexes outside the node".into()));
            }
        }
        let mut state = GibbsState {
            node_id: node_id.into(),
            k,
            vocab_size: w,
            tokens: node.tokens.clone(),
            z: vec![None; node.tokens.len()],
            topic_word: vec![0; k * w],
            doc_topic: vec![0; node.doc_count() * k],
            topic_totals: vec![0; k],
            doc_totals: vec![0; node.doc_count()],
        };
        for (n, &topic) in init.iter().enumerate() {
            if topic >= k {
                return Err(Error::InvalidArgument(format!(
                    "initial topic {topic} of token {n} is outside 0..{k}"
                )));
            }
            state.insert(n, topic)?;
        }
        Ok(state)
    }

    pub fn topic_count(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn doc_count(&self) -> usize {
        self.doc_totals.len()
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[NodeToken] {
        &self.tokens
    }

    pub fn assignment(&self, n: usize) -> Option<usize> {
        self.z[n]
    }

    /// Assignments of all tokens. Panics if a token is mid-update.
    pub fn assignments(&self) -> Vec<usize> {
        self.z.iter().map(|z| z.expect("all tokens assigned")).collect()
    }

    pub fn topic_word_count(&self, k: usize, w: usize) -> u32 {
        self.topic_word[k * self.vocab_size + w]
    }

    pub fn doc_topic_count(&self, d: usize, k: usize) -> u32 {
        self.doc_topic[d * self.k + k]
    }

    pub fn topic_total(&self, k: usize) -> u32 {
        self.topic_totals[k]
    }

    pub fn doc_total(&self, d: usize) -> u32 {
        self.doc_totals[d]
    }

    /// Tokens currently assigned to each topic.
    pub fn topic_token_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for z in self.z.iter().flatten() {
            counts[*z] += 1;
        }
        counts
    }

    /// Takes token `n` out of the counts (the ¬n state).
    pub fn remove(&mut self, n: usize) -> Result<usize> {
        let k = self.z[n]
            .take()
            .ok_or_else(|| Error::InvariantViolation(format!("token {n} is not assigned")))?;
        let underflow = || Error::InvariantViolation(format!("negative count removing token {n} from topic {k}"));
        let d = self.tokens[n].doc;
        let di = d * self.k + k;
        self.doc_topic[di] = self.doc_topic[di].checked_sub(1).ok_or_else(underflow)?;
        self.doc_totals[d] = self.doc_totals[d].checked_sub(1).ok_or_else(underflow)?;
        for &w in &self.tokens[n].words {
            let wi = k * self.vocab_size + w;
            self.topic_word[wi] = self.topic_word[wi].checked_sub(1).ok_or_else(underflow)?;
            self.topic_totals[k] = self.topic_totals[k].checked_sub(1).ok_or_else(underflow)?;
        }
        Ok(k)
    }

    pub fn insert(&mut self, n: usize, k: usize) -> Result<()> {
        if self.z[n].is_some() {
            return Err(Error::InvariantViolation(format!("token {n} is already assigned")));
        }
        if k >= self.k {
            return Err(Error::InvariantViolation(format!("topic {k} outside 0..{}", self.k)));
        }
        let d = self.tokens[n].doc;
        self.z[n] = Some(k);
        self.doc_topic[d * self.k + k] += 1;
        self.doc_totals[d] += 1;
        for &w in &self.tokens[n].words {
            self.topic_word[k * self.vocab_size + w] += 1;
            self.topic_totals[k] += 1;
        }
        Ok(())
    }

    /// Recomputes every cached sum from the assignments and compares.
    pub fn check_invariants(&self) -> Result<()> {
        let mut topic_word = vec![0u32; self.topic_word.len()];
        let mut doc_topic = vec![0u32; self.doc_topic.len()];
        for (n, z) in self.z.iter().enumerate() {
            let Some(k) = *z else { continue };
            doc_topic[self.tokens[n].doc * self.k + k] += 1;
            for &w in &self.tokens[n].words {
                topic_word[k * self.vocab_size + w] += 1;
            }
        }
        if topic_word != self.topic_word {
            return Err(Error::InvariantViolation("topic–relation counts drifted".into()));
        }
        if doc_topic != self.doc_topic {
            return Err(Error::InvariantViolation("document–topic counts drifted".into()));
        }
        for k in 0..self.k {
            let row: u32 = self.topic_word[k * self.vocab_size..(k + 1) * self.vocab_size]
                .iter()
                .sum();
            if row != self.topic_totals[k] {
                return Err(Error::InvariantViolation(format!(
                    "topic {k} total {} != row sum {row}",
                    self.topic_totals[k]
                )));
            }
        }
        for d in 0..self.doc_count() {
            let row: u32 = self.doc_topic[d * self.k..(d + 1) * self.k].iter().sum();
            if row != self.doc_totals[d] {
                return Err(Error::InvariantViolation(format!(
                    "document {d} total {} != row sum {row}",
                    self.doc_totals[d]
                )));
            }
        }
        Ok(())
    }
}

/// Full conditional of token `n` over the `K` topics, given every other
/// assignment. The token must already be removed from the counts.
///
/// For a one-triplet token `t̂` in document `d`:
///
/// ```text
/// p(z = k) ∝ (C[k][t̂] + η) / Σ_w (C[k][w] + η) · (B[d][k] + α) / Σ_k' (B[d][k'] + α)
/// ```
///
/// A token with several triplets multiplies the sequential predictive terms
/// of each.
pub fn gibbs_conditional(n: usize, state: &GibbsState, alpha: f64, eta: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; state.k];
    conditional_into(n, state, alpha, eta, &mut out)?;
    Ok(out)
}

fn conditional_into(n: usize, state: &GibbsState, alpha: f64, eta: f64, out: &mut [f64]) -> Result<()> {
    if state.z[n].is_some() {
        return Err(Error::InvariantViolation(format!(
            "token {n} must be removed before computing its conditional"
        )));
    }
    let tok = &state.tokens[n];
    let k_count = state.k;
    let w_eta = state.vocab_size as f64 * eta;
    let doc_norm = f64::from(state.doc_totals[tok.doc]) + k_count as f64 * alpha;
    let doc_row = &state.doc_topic[tok.doc * k_count..(tok.doc + 1) * k_count];

    if let [w] = tok.words[..] {
        for k in 0..k_count {
            let c = f64::from(state.topic_word[k * state.vocab_size + w]);
            out[k] =
                (c + eta) / (f64::from(state.topic_totals[k]) + w_eta) * ((f64::from(doc_row[k]) + alpha) / doc_norm);
        }
    } else {
        // several triplets: log space, then rescale
        for k in 0..k_count {
            let mut lp = ((f64::from(doc_row[k]) + alpha) / doc_norm).ln();
            let base = f64::from(state.topic_totals[k]) + w_eta;
            for (j, &w) in tok.words.iter().enumerate() {
                let repeats = tok.words[..j].iter().filter(|&&x| x == w).count() as f64;
                let c = f64::from(state.topic_word[k * state.vocab_size + w]);
                lp += ((c + eta + repeats) / (base + j as f64)).ln();
            }
            out[k] = lp;
        }
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for v in out.iter_mut() {
            *v = (*v - max).exp();
        }
    }
    let total: f64 = out.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::InvariantViolation(format!(
            "conditional of token {n} does not normalize"
        )));
    }
    for v in out.iter_mut() {
        *v /= total;
    }
    Ok(())
}

/// One systematic-scan sweep over all tokens in index order.
pub fn gibbs_sweep<R: Rng + ?Sized>(state: &mut GibbsState, alpha: f64, eta: f64, rng: &mut R) -> Result<()> {
    let mut probs = vec![0.0; state.k];
    for n in 0..state.tokens.len() {
        state.remove(n)?;
        conditional_into(n, state, alpha, eta, &mut probs)?;
        let k = sample_categorical(&probs, rng);
        state.insert(n, k)?;
    }
    Ok(())
}

/// Smoothed point estimates from the final counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEstimates {
    /// node-local document × topic
    pub theta_hat: Vec<Vec<f64>>,
    /// topic × node-local relation
    pub beta_hat: Vec<Vec<f64>>,
}

impl PosteriorEstimates {
    pub fn from_state(state: &GibbsState, alpha: f64, eta: f64) -> Self {
        let k = state.k;
        let w = state.vocab_size;
        let theta_hat = (0..state.doc_count())
            .map(|d| {
                let denom = f64::from(state.doc_totals[d]) + k as f64 * alpha;
                (0..k)
                    .map(|t| (f64::from(state.doc_topic_count(d, t)) + alpha) / denom)
                    .collect()
            })
            .collect();
        let beta_hat = (0..k)
            .map(|t| {
                let denom = f64::from(state.topic_totals[t]) + w as f64 * eta;
                (0..w)
                    .map(|x| (f64::from(state.topic_word_count(t, x)) + eta) / denom)
                    .collect()
            })
            .collect();
        PosteriorEstimates { theta_hat, beta_hat }
    }
}

/// Callback receiving the sweep index and the state after that sweep.
pub type SweepObserver<'a> = dyn FnMut(usize, &GibbsState) + 'a;

/// Fits one node: counts from `init`, `config.gibbs_iterations` sweeps, then
/// estimates. With `k == 1` the conditional is degenerate and no sweeps run.
///
/// `observer`, when given, sees the state before the first sweep (index 0)
/// and after each sweep `i` (index `i`).
pub fn train_node<R: Rng + ?Sized>(
    node_id: &str,
    node: &NodeCorpus,
    k: usize,
    init: &[usize],
    config: &CorpusConfig,
    rng: &mut R,
    mut observer: Option<&mut SweepObserver<'_>>,
) -> Result<(GibbsState, PosteriorEstimates)> {
    let mut state = GibbsState::new(node_id, node, k, init)?;
    if let Some(obs) = observer.as_mut() {
        obs(0, &state);
    }
    if k > 1 {
        for i in 0..config.gibbs_iterations as usize {
            gibbs_sweep(&mut state, config.alpha, config.eta, rng)?;
            if let Some(obs) = observer.as_mut() {
                obs(i + 1, &state);
            }
        }
    }
    let est = PosteriorEstimates::from_state(&state, config.alpha, config.eta);
    Ok((state, est))
}

/// Initial assignment vector from an ACRP partition over the same tokens.
pub fn init_from_acrp(acrp: &AcrpState) -> Result<Vec<usize>> {
    acrp.assignments()
        .iter()
        .enumerate()
        .map(|(i, a)| a.ok_or_else(|| Error::StateInconsistent(format!("token {i} left unassigned by ACRP"))))
        .collect()
}
