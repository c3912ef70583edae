//! Acquaintance Chinese Restaurant Process.
//!
//! A sequential partition of noun-phrase tokens in which a token prefers
//! topics holding a synonym or acronym of it, is penalized for joining topics
//! from other documents, and is otherwise drawn to topics with members close
//! to it in (chunk, sentence) space. Used to estimate the topic count of a
//! node and to seed the rLDA sampler.
//!
//! For a candidate after `n` assigned tokens and `k` live topics, raw scores
//! are
//!
//! * new topic: `γ / (n + γ)`
//! * topic `i` holding a synonym/acronym of the candidate: `1 − γ`
//! * else topic `i` with no member from the candidate's document: `γ`
//! * else `(C_i − (1 − 1/min Q)) / ((1 + min S)·n + γ)`, where `Q`, `S` are
//!   absolute chunk and sentence offsets to same-document members, `min Q`
//!   is clamped to at least 1 and the numerator to at least 0,
//!
//! and the `k + 1` scores are normalized jointly.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::CorpusConfig;
use crate::corpus::{acronym_of, NounPhraseToken, SynonymLexicon};
use crate::error::{Error, Result};

/// Partition state of one ACRP pass. Token indices refer to the token slice
/// the state was built over.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AcrpState {
    assignments: Vec<Option<usize>>,
    topics: Vec<Vec<usize>>,
    topic_doc_ids: Vec<BTreeSet<String>>,
    topic_contents: Vec<HashSet<String>>,
    // acronyms of multi-word members, for the "candidate is an acronym" side
    topic_acronyms: Vec<HashSet<String>>,
    // doc id → (chunk, sentence) of every member from that document
    topic_sites: Vec<HashMap<String, Vec<(u32, u32)>>>,
}

impl AcrpState {
    pub fn new(token_count: usize) -> Self {
        AcrpState {
            assignments: vec![None; token_count],
            ..Default::default()
        }
    }

    pub fn topic_count(&self) -> usize {
        self.topics.len()
    }

    pub fn assigned_count(&self) -> usize {
        self.topics.iter().map(Vec::len).sum()
    }

    pub fn assignments(&self) -> &[Option<usize>] {
        &self.assignments
    }

    pub fn topic_of(&self, token: usize) -> Option<usize> {
        self.assignments[token]
    }

    pub fn members(&self, topic: usize) -> &[usize] {
        &self.topics[topic]
    }

    pub fn topic_doc_ids(&self, topic: usize) -> &BTreeSet<String> {
        &self.topic_doc_ids[topic]
    }

    /// Places `token` (at index `index`) into `topic`; `topic ==
    /// topic_count()` opens a new topic.
    pub fn assign(&mut self, index: usize, token: &NounPhraseToken, topic: usize) -> Result<()> {
        if index >= self.assignments.len() {
            return Err(Error::StateInconsistent(format!(
                "token index {index} out of range for {} tokens",
                self.assignments.len()
            )));
        }
        if self.assignments[index].is_some() {
            return Err(Error::StateInconsistent(format!("token {index} is already assigned")));
        }
        if topic > self.topics.len() {
            return Err(Error::StateInconsistent(format!(
                "topic {topic} skips past the next new topic {}",
                self.topics.len()
            )));
        }
        if topic == self.topics.len() {
            self.topics.push(Vec::new());
            self.topic_doc_ids.push(BTreeSet::new());
            self.topic_contents.push(HashSet::new());
            self.topic_acronyms.push(HashSet::new());
            self.topic_sites.push(HashMap::new());
        }
        self.assignments[index] = Some(topic);
        self.topics[topic].push(index);
        self.topic_doc_ids[topic].insert(token.doc_id.clone());
        self.topic_contents[topic].insert(token.content.clone());
        if let Some(ac) = acronym_of(&token.content) {
            self.topic_acronyms[topic].insert(ac);
        }
        self.topic_sites[topic]
            .entry(token.doc_id.clone())
            .or_default()
            .push((token.chunk_index, token.sentence_index));
        Ok(())
    }

    /// True iff some member of `topic` is a synonym or acronym of `content`.
    pub fn has_synonym(&self, topic: usize, content: &str, lexicon: Option<&SynonymLexicon>) -> bool {
        let contents = &self.topic_contents[topic];
        if contents.contains(content) || self.topic_acronyms[topic].contains(content) {
            return true;
        }
        if acronym_of(content).is_some_and(|ac| contents.contains(&ac)) {
            return true;
        }
        lexicon.is_some_and(|lex| lex.synonyms(content).any(|s| contents.contains(s)))
    }

    /// Minimum absolute chunk and sentence offsets from `token` to members
    /// of `topic` in the same document.
    fn min_offsets(&self, topic: usize, token: &NounPhraseToken) -> Option<(u32, u32)> {
        let sites = self.topic_sites[topic].get(&token.doc_id)?;
        let min_q = sites.iter().map(|&(c, _)| c.abs_diff(token.chunk_index)).min()?;
        let min_s = sites.iter().map(|&(_, s)| s.abs_diff(token.sentence_index)).min()?;
        Some((min_q, min_s))
    }

    /// Re-indexes a state built over `order`-permuted tokens back to the
    /// original indexing: pass position `j` was original token `order[j]`.
    fn unpermute(self, order: &[usize]) -> AcrpState {
        let mut assignments = vec![None; self.assignments.len()];
        for (j, a) in self.assignments.iter().enumerate() {
            assignments[order[j]] = *a;
        }
        let topics = self
            .topics
            .into_iter()
            .map(|m| {
                let mut m: Vec<usize> = m.into_iter().map(|j| order[j]).collect();
                m.sort_unstable();
                m
            })
            .collect();
        AcrpState {
            assignments,
            topics,
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcrpScores {
    /// k existing topics followed by the new topic.
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

/// Same-document closeness score for an existing topic.
pub fn closeness_score(topic_size: usize, min_q: u32, min_s: u32, n: usize, gamma: f64) -> f64 {
    let q = f64::from(min_q.max(1));
    let numerator = (topic_size as f64 - (1.0 - 1.0 / q)).max(0.0);
    numerator / ((1.0 + f64::from(min_s)) * n as f64 + gamma)
}

pub fn new_topic_score(n: usize, gamma: f64) -> f64 {
    gamma / (n as f64 + gamma)
}

/// Scores for placing `candidate` given `n` previously assigned tokens.
pub fn acrp_scores(
    candidate: &NounPhraseToken,
    state: &AcrpState,
    n: usize,
    gamma: f64,
    lexicon: Option<&SynonymLexicon>,
) -> Result<AcrpScores> {
    if n != state.assigned_count() {
        return Err(Error::StateInconsistent(format!(
            "n = {n} but the state holds {} assigned tokens across {} topics",
            state.assigned_count(),
            state.topic_count()
        )));
    }
    let k = state.topic_count();
    let mut raw = Vec::with_capacity(k + 1);
    for i in 0..k {
        let score = if state.has_synonym(i, &candidate.content, lexicon) {
            1.0 - gamma
        } else if !state.topic_doc_ids[i].contains(&candidate.doc_id) {
            gamma
        } else {
            let (q, s) = state
                .min_offsets(i, candidate)
                .expect("topic lists the document, so it has a member there");
            closeness_score(state.topics[i].len(), q, s, n, gamma)
        };
        raw.push(score);
    }
    raw.push(new_topic_score(n, gamma));
    let total: f64 = raw.iter().sum();
    let normalized = raw.iter().map(|r| r / total).collect();
    Ok(AcrpScores { raw, normalized })
}

/// Draws an index from the categorical distribution `scores.normalized`.
pub fn sample_assignment<R: Rng + ?Sized>(scores: &AcrpScores, rng: &mut R) -> usize {
    sample_categorical(&scores.normalized, rng)
}

/// Inverse-CDF draw from unnormalized non-negative weights.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap at the top
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// One sequential pass over `tokens` in the given order.
pub fn acrp_pass<R: Rng + ?Sized>(
    tokens: &[&NounPhraseToken],
    gamma: f64,
    rng: &mut R,
    lexicon: Option<&SynonymLexicon>,
) -> AcrpState {
    let mut state = AcrpState::new(tokens.len());
    for (n, tok) in tokens.iter().enumerate() {
        let scores = acrp_scores(tok, &state, n, gamma, lexicon).expect("pass keeps n in sync");
        let topic = sample_assignment(&scores, rng);
        state.assign(n, tok, topic).expect("sampled topic is live or new");
    }
    state
}

/// Repeats ACRP passes, shuffling the document order between passes, until
/// two consecutive passes agree on the topic count or `acrp_max_passes` is
/// reached. Token order inside a document is never changed.
///
/// Returns the final count and the final pass's partition, indexed like
/// `tokens`.
pub fn estimate_k<R: Rng + ?Sized>(
    tokens: &[&NounPhraseToken],
    config: &CorpusConfig,
    rng: &mut R,
    lexicon: Option<&SynonymLexicon>,
) -> Result<(usize, AcrpState)> {
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("cannot estimate topics for zero tokens".into()));
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of: HashMap<&str, usize> = HashMap::new();
    for (i, t) in tokens.iter().enumerate() {
        let g = *group_of.entry(t.doc_id.as_str()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }

    let mut previous_k = None;
    let mut passes = 0;
    loop {
        if passes > 0 {
            groups.shuffle(rng);
        }
        let order: Vec<usize> = groups.iter().flatten().copied().collect();
        let ordered: Vec<&NounPhraseToken> = order.iter().map(|&i| tokens[i]).collect();
        let state = acrp_pass(&ordered, config.gamma, rng, lexicon);
        passes += 1;
        let k = state.topic_count();
        if previous_k == Some(k) || passes >= config.acrp_max_passes {
            return Ok((k, state.unpermute(&order)));
        }
        previous_k = Some(k);
    }
}
