//! Rule-based relation triplet extraction.
//!
//! Three sources are supported: inclusion relations read off the indentation
//! of itemized text (slides, outlines), a shallow subject–verb–object surface
//! pattern over a closed verb list, and the title–name pattern
//! ("Queen Elizabeth" → (elizabeth, be, queen)). None of it needs a parser.

use std::collections::BTreeSet;

use crate::corpus::{normalize_phrase, Document, NounPhraseToken, RelationTriplet, TripletSource};
use crate::error::{Error, Result};

/// Predicate for relations derived from indentation.
pub const SUBTOPIC_PREDICATE: &str = "be a subtopic of";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemLine {
    pub level: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemizedDoc {
    pub doc_id: String,
    pub lines: Vec<ItemLine>,
}

impl ItemizedDoc {
    pub fn new<S: Into<String>>(doc_id: impl Into<String>, lines: impl IntoIterator<Item = (u32, S)>) -> Self {
        ItemizedDoc {
            doc_id: doc_id.into(),
            lines: lines
                .into_iter()
                .map(|(level, text)| ItemLine {
                    level,
                    text: text.into(),
                })
                .collect(),
        }
    }

    /// Reads indented text. Each leading tab is one level; leading spaces
    /// count one level per `spaces_per_level`. Blank lines are skipped.
    pub fn parse(doc_id: impl Into<String>, text: &str, spaces_per_level: usize) -> Self {
        let spaces_per_level = spaces_per_level.max(1);
        let mut lines = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let mut tabs = 0usize;
            let mut spaces = 0usize;
            for c in line.chars() {
                match c {
                    '\t' => tabs += 1,
                    ' ' => spaces += 1,
                    _ => break,
                }
            }
            let level = tabs + spaces / spaces_per_level;
            lines.push(ItemLine {
                level: level as u32,
                text: line.trim().to_string(),
            });
        }
        ItemizedDoc {
            doc_id: doc_id.into(),
            lines,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuralExtraction {
    /// One triplet per line that has a shallower predecessor, in line order.
    pub triplets: Vec<RelationTriplet>,
    /// The outline as a one-chunk document, one sentence per line. `None`
    /// when no line takes part in a relation.
    pub document: Option<Document>,
}

/// Emits (line, "be a subtopic of", parent) for every indented line whose
/// parent is the nearest preceding line at a shallower level.
pub fn extract_structural_triplets(doc: &ItemizedDoc) -> StructuralExtraction {
    let phrases: Vec<(u32, String, &str)> = doc
        .lines
        .iter()
        .map(|l| (l.level, normalize_phrase(&l.text), l.text.as_str()))
        .filter(|(_, p, _)| !p.is_empty())
        .collect();

    let mut stack: Vec<usize> = Vec::new();
    let mut parent_of: Vec<Option<usize>> = vec![None; phrases.len()];
    for (i, (level, _, _)) in phrases.iter().enumerate() {
        while stack.last().is_some_and(|&top| phrases[top].0 >= *level) {
            stack.pop();
        }
        if *level > 0 {
            parent_of[i] = stack.last().copied();
        }
        stack.push(i);
    }

    let mut triplets = Vec::new();
    // triplets each line participates in, as subject or object
    let mut attached: Vec<Vec<RelationTriplet>> = vec![Vec::new(); phrases.len()];
    for (i, parent) in parent_of.iter().enumerate() {
        let Some(p) = *parent else { continue };
        let t = RelationTriplet {
            subject: phrases[i].1.clone(),
            verb: SUBTOPIC_PREDICATE.to_string(),
            object: phrases[p].1.clone(),
            source: TripletSource::Structural,
            doc_id: doc.doc_id.clone(),
        };
        attached[i].push(t.clone());
        attached[p].push(t.clone());
        triplets.push(t);
    }

    let sentences: Vec<Vec<NounPhraseToken>> = phrases
        .iter()
        .zip(attached)
        .enumerate()
        .map(|(i, ((_, content, raw), ts))| {
            if ts.is_empty() {
                return Vec::new();
            }
            vec![NounPhraseToken {
                content: content.clone(),
                raw: raw.to_string(),
                doc_id: doc.doc_id.clone(),
                chunk_index: 0,
                sentence_index: i as u32,
                triplets: ts,
            }]
        })
        .collect();
    let document = (!triplets.is_empty()).then(|| Document {
        doc_id: doc.doc_id.clone(),
        chunks: vec![sentences],
    });
    StructuralExtraction { triplets, document }
}

struct VerbEntry {
    lemma: &'static str,
    forms: &'static [&'static str],
    participle: &'static str,
}

const COPULA_FORMS: &[&str] = &["is", "are", "was", "were", "be", "been", "being", "am"];

const VERBS: &[VerbEntry] = &[
    VerbEntry {
        lemma: "have",
        forms: &["has", "have", "had"],
        participle: "had",
    },
    VerbEntry {
        lemma: "give",
        forms: &["give", "gives", "gave"],
        participle: "given",
    },
    VerbEntry {
        lemma: "contain",
        forms: &["contain", "contains", "contained"],
        participle: "contained",
    },
    VerbEntry {
        lemma: "include",
        forms: &["include", "includes", "included"],
        participle: "included",
    },
    VerbEntry {
        lemma: "use",
        forms: &["use", "uses", "used"],
        participle: "used",
    },
    VerbEntry {
        lemma: "produce",
        forms: &["produce", "produces", "produced"],
        participle: "produced",
    },
    VerbEntry {
        lemma: "make",
        forms: &["make", "makes", "made"],
        participle: "made",
    },
    VerbEntry {
        lemma: "connect",
        forms: &["connect", "connects", "connected"],
        participle: "connected",
    },
    VerbEntry {
        lemma: "develop",
        forms: &["develop", "develops", "developed"],
        participle: "developed",
    },
    VerbEntry {
        lemma: "form",
        forms: &["form", "forms", "formed"],
        participle: "formed",
    },
    VerbEntry {
        lemma: "provide",
        forms: &["provide", "provides", "provided"],
        participle: "provided",
    },
    VerbEntry {
        lemma: "require",
        forms: &["require", "requires", "required"],
        participle: "required",
    },
    VerbEntry {
        lemma: "consist",
        forms: &["consist", "consists", "consisted"],
        participle: "consisted",
    },
    VerbEntry {
        lemma: "attach",
        forms: &["attach", "attaches", "attached"],
        participle: "attached",
    },
    VerbEntry {
        lemma: "bond",
        forms: &["bond", "bonds", "bonded"],
        participle: "bonded",
    },
    VerbEntry {
        lemma: "mount",
        forms: &["mount", "mounts", "mounted"],
        participle: "mounted",
    },
    VerbEntry {
        lemma: "build",
        forms: &["build", "builds", "built"],
        participle: "built",
    },
    VerbEntry {
        lemma: "hold",
        forms: &["hold", "holds", "held"],
        participle: "held",
    },
    VerbEntry {
        lemma: "host",
        forms: &["host", "hosts", "hosted"],
        participle: "hosted",
    },
    VerbEntry {
        lemma: "found",
        forms: &["found", "founds", "founded"],
        participle: "founded",
    },
    VerbEntry {
        lemma: "border",
        forms: &["border", "borders", "bordered"],
        participle: "bordered",
    },
    VerbEntry {
        lemma: "cover",
        forms: &["cover", "covers", "covered"],
        participle: "covered",
    },
    VerbEntry {
        lemma: "lie",
        forms: &["lie", "lies", "lay"],
        participle: "lain",
    },
    VerbEntry {
        lemma: "become",
        forms: &["become", "becomes", "became"],
        participle: "become",
    },
    VerbEntry {
        lemma: "write",
        forms: &["write", "writes", "wrote"],
        participle: "written",
    },
    VerbEntry {
        lemma: "take",
        forms: &["take", "takes", "took"],
        participle: "taken",
    },
    VerbEntry {
        lemma: "lead",
        forms: &["lead", "leads", "led"],
        participle: "led",
    },
    VerbEntry {
        lemma: "replace",
        forms: &["replace", "replaces", "replaced"],
        participle: "replaced",
    },
    VerbEntry {
        lemma: "protect",
        forms: &["protect", "protects", "protected"],
        participle: "protected",
    },
    VerbEntry {
        lemma: "define",
        forms: &["define", "defines", "defined"],
        participle: "defined",
    },
    VerbEntry {
        lemma: "publish",
        forms: &["publish", "publishes", "published"],
        participle: "published",
    },
];

const PREPOSITIONS: &[&str] = &[
    "in", "of", "on", "at", "for", "to", "from", "by", "with", "into", "onto", "near", "within", "about", "between",
    "under", "over", "as", "than", "through", "across", "along", "among", "inside", "outside",
];

const ARTICLES: &[&str] = &["the", "a", "an"];

pub const DEFAULT_TITLES: &[&str] = &[
    "queen",
    "king",
    "prince",
    "princess",
    "president",
    "chancellor",
    "prime minister",
    "senator",
    "governor",
    "mayor",
    "doctor",
    "dr",
    "professor",
    "prof",
    "mr",
    "mrs",
    "ms",
    "sir",
    "lady",
    "lord",
    "pope",
    "emperor",
    "empress",
    "general",
    "captain",
];

fn lemma_of(word: &str) -> Option<&'static VerbEntry> {
    VERBS.iter().find(|v| v.forms.contains(&word))
}

/// Past participle of `lemma`: closed-list irregulars, else the regular
/// spelling rules.
pub fn past_participle(lemma: &str) -> String {
    if let Some(v) = VERBS.iter().find(|v| v.lemma == lemma) {
        return v.participle.to_string();
    }
    let bytes = lemma.as_bytes();
    if lemma.ends_with('e') {
        format!("{lemma}d")
    } else if lemma.len() >= 2 && lemma.ends_with('y') && !b"aeiou".contains(&bytes[bytes.len() - 2]) {
        format!("{}ied", &lemma[..lemma.len() - 1])
    } else {
        format!("{lemma}ed")
    }
}

fn is_literal(object: &str) -> bool {
    !object.chars().any(char::is_alphabetic)
}

/// (s, v, o) → (o, "be <participle of v> by", s).
///
/// Copula triplets and literal objects have no meaningful passive and are
/// rejected.
pub fn passive_inverse(t: &RelationTriplet) -> Result<RelationTriplet> {
    let not_invertible = |reason| Error::NotInvertible {
        subject: t.subject.clone(),
        verb: t.verb.clone(),
        object: t.object.clone(),
        reason,
    };
    let mut words = t.verb.split_whitespace();
    let head = words.next().ok_or_else(|| not_invertible("empty verb"))?;
    if head == "be" || COPULA_FORMS.contains(&head) {
        return Err(not_invertible("copula relation"));
    }
    if is_literal(&t.object) {
        return Err(not_invertible("object is a literal"));
    }
    let lemma = lemma_of(head).map_or(head, |v| v.lemma);
    let mut verb = format!("be {}", past_participle(lemma));
    for w in words {
        verb.push(' ');
        verb.push_str(w);
    }
    verb.push_str(" by");
    Ok(RelationTriplet {
        subject: t.object.clone(),
        verb,
        object: t.subject.clone(),
        source: TripletSource::PassiveInverse,
        doc_id: t.doc_id.clone(),
    })
}

fn clean_word(w: &str) -> String {
    normalize_phrase(w)
}

/// Shallow sentence-level extractor.
#[derive(Debug, Clone)]
pub struct PatternExtractor {
    titles: BTreeSet<String>,
    /// Also emit passive inversions of invertible triplets.
    pub passive: bool,
}

impl Default for PatternExtractor {
    fn default() -> Self {
        PatternExtractor::with_titles(DEFAULT_TITLES.iter().copied())
    }
}

impl PatternExtractor {
    pub fn with_titles<S: AsRef<str>>(titles: impl IntoIterator<Item = S>) -> Self {
        PatternExtractor {
            titles: titles.into_iter().map(|t| normalize_phrase(t.as_ref())).collect(),
            passive: false,
        }
    }

    pub fn extract(&self, doc_id: &str, sentence: &str) -> Vec<RelationTriplet> {
        let words: Vec<&str> = sentence.split_whitespace().collect();
        let mut out = Vec::new();
        if let Some(t) = svo_triplet(doc_id, &words) {
            out.push(t);
        }
        out.extend(self.title_triplets(doc_id, &words));
        if self.passive {
            let inverses: Vec<_> = out.iter().filter_map(|t| passive_inverse(t).ok()).collect();
            out.extend(inverses);
        }
        out
    }

    fn title_triplets(&self, doc_id: &str, words: &[&str]) -> Vec<RelationTriplet> {
        let mut out = Vec::new();
        let mut i = 0;
        while i + 1 < words.len() {
            // two-word titles first ("prime minister")
            let (title, name_start) = if i + 2 < words.len()
                && self
                    .titles
                    .contains(&format!("{} {}", clean_word(words[i]), clean_word(words[i + 1])))
            {
                (format!("{} {}", clean_word(words[i]), clean_word(words[i + 1])), i + 2)
            } else if self.titles.contains(&clean_word(words[i])) {
                (clean_word(words[i]), i + 1)
            } else {
                i += 1;
                continue;
            };
            let mut end = name_start;
            while end < words.len() && words[end].chars().next().is_some_and(char::is_uppercase) {
                let stop = words[end].ends_with([',', '.', ';', ':', '!', '?']);
                end += 1;
                if stop {
                    break;
                }
            }
            if end > name_start {
                let name = normalize_phrase(&words[name_start..end].join(" "));
                if let Ok(t) = RelationTriplet::new(&name, "be", &title, TripletSource::Pattern, doc_id) {
                    out.push(t);
                }
                i = end;
            } else {
                i += 1;
            }
        }
        out
    }
}

fn svo_triplet(doc_id: &str, words: &[&str]) -> Option<RelationTriplet> {
    let cleaned: Vec<String> = words.iter().map(|w| clean_word(w)).collect();
    let verb_at = (1..words.len()).find(|&i| {
        let w = cleaned[i].as_str();
        COPULA_FORMS.contains(&w) || lemma_of(w).is_some()
    })?;

    let subject_start = cleaned[..verb_at]
        .iter()
        .position(|w| !ARTICLES.contains(&w.as_str()))?;
    let subject = words[subject_start..verb_at].join(" ");
    let rest = &words[verb_at + 1..];
    let rest_clean = &cleaned[verb_at + 1..];
    if rest.is_empty() {
        return None;
    }

    let head = cleaned[verb_at].as_str();
    let (verb, object) = if COPULA_FORMS.contains(&head) {
        // predicate runs through the first preposition that still leaves an object
        match (0..rest.len() - 1).find(|&j| PREPOSITIONS.contains(&rest_clean[j].as_str())) {
            Some(j) => (format!("be {}", rest[..=j].join(" ")), rest[j + 1..].join(" ")),
            None => ("be".to_string(), rest.join(" ")),
        }
    } else {
        let lemma = lemma_of(head)?.lemma;
        if rest.len() > 1 && PREPOSITIONS.contains(&rest_clean[0].as_str()) {
            (format!("{lemma} {}", rest_clean[0]), rest[1..].join(" "))
        } else {
            (lemma.to_string(), rest.join(" "))
        }
    };
    let t = RelationTriplet::new(&subject, &verb, &object, TripletSource::Pattern, doc_id).ok()?;
    (!t.object.is_empty()).then_some(t)
}

/// [`PatternExtractor::extract`] with the default title lexicon and no
/// passive inversion.
pub fn extract_pattern_triplets(sentence: &str) -> Vec<RelationTriplet> {
    PatternExtractor::default().extract("", sentence)
}

/// Splits prose into sentences at `.`, `!` or `?` followed by whitespace or
/// end of text.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        if matches!(c, '.' | '!' | '?') && chars.get(k + 1).is_none_or(|&(_, n)| n.is_whitespace()) {
            let end = i + c.len_utf8();
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Runs pattern extraction over prose. Paragraphs (blank-line separated)
/// become chunks; each sentence yields one token per distinct subject.
pub fn pattern_document(extractor: &PatternExtractor, doc_id: &str, text: &str) -> Option<Document> {
    let mut chunks = Vec::new();
    let mut sentence_index = 0u32;
    let paragraphs = text.split("\n\n").map(str::trim).filter(|p| !p.is_empty());
    for (ci, para) in paragraphs.enumerate() {
        let mut sentences = Vec::new();
        for sentence in split_sentences(para) {
            let mut tokens: Vec<NounPhraseToken> = Vec::new();
            for t in extractor.extract(doc_id, sentence) {
                match tokens.iter_mut().find(|tok| tok.content == t.subject) {
                    Some(tok) => tok.triplets.push(t),
                    None => tokens.push(NounPhraseToken {
                        content: t.subject.clone(),
                        raw: t.subject.clone(),
                        doc_id: doc_id.to_string(),
                        chunk_index: ci as u32,
                        sentence_index,
                        triplets: vec![t],
                    }),
                }
            }
            sentences.push(tokens);
            sentence_index += 1;
        }
        chunks.push(sentences);
    }
    let doc = Document {
        doc_id: doc_id.to_string(),
        chunks,
    };
    (doc.token_count() > 0).then_some(doc)
}
