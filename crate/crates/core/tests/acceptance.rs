//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use ontolearn::acrp::{acrp_pass, acrp_scores, AcrpState};
use ontolearn::corpus::{Corpus, NounPhraseToken, RelationTriplet, TripletKey, TripletSource};
use ontolearn::eval::{
    cluster_purity, compare_gold, model_perplexity, perplexity, perplexity_from_probabilities, GoldRuleSet,
};
use ontolearn::extract::{extract_pattern_triplets, extract_structural_triplets, ItemizedDoc};
use ontolearn::hierarchy::{build_tree, TopicTree};
use ontolearn::ontology::{build_triplet_graph, link_relations, prune, ExportFormat, Ontology};
use ontolearn::rlda::{
    gibbs_conditional, gibbs_sweep, train_node, GibbsState, NodeCorpus, NodeToken, PosteriorEstimates,
};
use ontolearn::CorpusConfig;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn token(content: &str, doc: &str, chunk: u32, sentence: u32) -> NounPhraseToken {
    NounPhraseToken {
        content: content.into(),
        raw: content.into(),
        doc_id: doc.into(),
        chunk_index: chunk,
        sentence_index: sentence,
        triplets: vec![RelationTriplet::new(content, "relate to", "thing", TripletSource::Ingested, doc).unwrap()],
    }
}

const PHRASES: &[&str] = &[
    "integrated circuit",
    "ic",
    "wafer",
    "silicon",
    "berlin",
    "london",
    "river thames",
    "rt",
    "doping",
    "chip",
];

fn random_token(r: &mut ChaCha8Rng) -> NounPhraseToken {
    let doc = format!("d{}", r.random_range(0..4));
    token(
        PHRASES.choose(r).unwrap(),
        &doc,
        r.random_range(0..6),
        r.random_range(0..25),
    )
}

/// Random state over `n` tokens with topics opened in order.
fn random_state(r: &mut ChaCha8Rng, n: usize) -> AcrpState {
    let mut s = AcrpState::new(n);
    for i in 0..n {
        let topic = r.random_range(0..=s.topic_count());
        s.assign(i, &random_token(r), topic).unwrap();
    }
    s
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for case in 0..10_000 {
        let n = r.random_range(0..30);
        let state = random_state(&mut r, n);
        let gamma = r.random_range(1e-4..0.999);
        let cand = random_token(&mut r);
        let s = acrp_scores(&cand, &state, n, gamma, None).map_err(|e| e.to_string())?;
        check(s.raw.len() == state.topic_count() + 1, || {
            format!("case {case}: wrong length")
        })?;
        check(s.normalized.iter().all(|p| (0.0..=1.0).contains(p)), || {
            format!("case {case}: {:?}", s.normalized)
        })?;
        let dev = (s.normalized.iter().sum::<f64>() - 1.0).abs();
        worst = worst.max(dev);
        check(dev <= 1e-12, || format!("case {case}: sum off by {dev:e}"))?;
        check(*s.raw.last().unwrap() == gamma / (n as f64 + gamma), || {
            format!("case {case}: new-topic score")
        })?;
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!(
        "10000 cases, max |sum-1| = {worst:.1e}, {:.2?}",
        start.elapsed()
    ))
}

fn criterion_2() -> Outcome {
    for gamma in [1e-6, 0.01, 0.5, 0.99] {
        for (i, c) in PHRASES.iter().enumerate() {
            let s = acrp_scores(&token(c, "d", i as u32, 0), &AcrpState::new(1), 0, gamma, None)
                .map_err(|e| e.to_string())?;
            check(s.normalized == vec![1.0], || {
                format!("gamma {gamma}: {:?}", s.normalized)
            })?;
        }
    }
    Ok("new-topic probability 1 at n = 0 for every gamma tried".into())
}

/// State with topic 0 = `c` members of document "d" at chunk `q` and sentence
/// `s` from the candidate (placed at the origin), and topic 1 = `n - c`
/// members of another document.
fn closeness_setup(c: usize, n: usize, q: u32, s: u32, gamma: f64) -> f64 {
    let mut state = AcrpState::new(n);
    for i in 0..c {
        state.assign(i, &token(&format!("m{i}"), "d", q, s), 0).unwrap();
    }
    for i in c..n {
        state.assign(i, &token(&format!("o{i}"), "e", 0, 0), 1).unwrap();
    }
    acrp_scores(&token("candidate", "d", 0, 0), &state, n, gamma, None)
        .unwrap()
        .raw[0]
}

fn criterion_3() -> Outcome {
    let mut r = rng(3);
    for case in 0..1000 {
        let n = r.random_range(3..60);
        let c = r.random_range(1..n - 1);
        let q = r.random_range(0..20);
        let s = r.random_range(0..40);
        let gamma = r.random_range(1e-4..0.999);
        let base = closeness_setup(c, n, q, s, gamma);
        let fail = |what: &str| format!("case {case} (n={n} C={c} Q={q} S={s} γ={gamma}): {what}");
        check(closeness_setup(c, n, q + 1, s, gamma) <= base, || {
            fail("increased with min Q")
        })?;
        check(closeness_setup(c, n, q, s + 1, gamma) <= base, || {
            fail("increased with min S")
        })?;
        check(closeness_setup(c + 1, n, q, s, gamma) >= base, || {
            fail("decreased with C")
        })?;
    }
    Ok("1000 parameterizations monotone in min Q, min S and C".into())
}

// (x)(x+1)…(x+n-1)
fn rising(x: f64, n: u32) -> f64 {
    (0..n).map(|i| x + f64::from(i)).product()
}

/// Joint probability of (z, w) with θ and β integrated out, up to a
/// constant: Π_d Dir(B_d + α)/Dir(α) · Π_k Dir(C_k + η)/Dir(η).
fn exact_joint(tokens: &[NodeToken], z: &[usize], k: usize, w: usize, docs: usize, alpha: f64, eta: f64) -> f64 {
    let mut b = vec![vec![0u32; k]; docs];
    let mut c = vec![vec![0u32; w]; k];
    for (t, &zt) in tokens.iter().zip(z) {
        b[t.doc][zt] += 1;
        for &x in &t.words {
            c[zt][x] += 1;
        }
    }
    let dp: f64 = b
        .iter()
        .map(|row| row.iter().map(|&n| rising(alpha, n)).product::<f64>() / rising(k as f64 * alpha, row.iter().sum()))
        .product();
    let tp: f64 = c
        .iter()
        .map(|row| row.iter().map(|&n| rising(eta, n)).product::<f64>() / rising(w as f64 * eta, row.iter().sum()))
        .product();
    dp * tp
}

/// Word sequences of length `n` using exactly the symbols 0..w, each first
/// appearing in increasing order (one representative per relabeling).
fn growth_strings(n: usize, w: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, n: usize, w: usize, out: &mut Vec<Vec<usize>>) {
        let used = prefix.iter().max().map_or(0, |m| m + 1);
        if prefix.len() == n {
            if used == w {
                out.push(prefix.clone());
            }
            return;
        }
        if w - used > n - prefix.len() {
            return;
        }
        for x in 0..(used + 1).min(w) {
            prefix.push(x);
            go(prefix, n, w, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), n, w, &mut out);
    out
}

fn instance(words: &[usize], split: usize, w: usize) -> (NodeCorpus, usize) {
    let docs = if split == 0 || split == words.len() { 1 } else { 2 };
    let tokens = words
        .iter()
        .enumerate()
        .map(|(i, &x)| NodeToken {
            doc: usize::from(docs == 2 && i >= split),
            words: vec![x],
        })
        .collect();
    (NodeCorpus::new(tokens, w, docs), docs)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let (alpha, eta) = (1.0, 0.1);
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for n in 1..=6 {
        for w in 1..=3 {
            for words in growth_strings(n, w) {
                for split in 0..n {
                    let (nc, docs) = instance(&words, split, w);
                    for k in 1..=2usize {
                        for code in 0..k.pow(n as u32) {
                            let z: Vec<usize> = (0..n).map(|i| (code / k.pow(i as u32)) % k).collect();
                            for pos in 0..n {
                                let mut s = GibbsState::new("", &nc, k, &z).map_err(|e| e.to_string())?;
                                s.remove(pos).map_err(|e| e.to_string())?;
                                let got = gibbs_conditional(pos, &s, alpha, eta).map_err(|e| e.to_string())?;
                                let joint: Vec<f64> = (0..k)
                                    .map(|t| {
                                        let mut zz = z.clone();
                                        zz[pos] = t;
                                        exact_joint(&nc.tokens, &zz, k, w, docs, alpha, eta)
                                    })
                                    .collect();
                                let total: f64 = joint.iter().sum();
                                for t in 0..k {
                                    let diff = (got[t] - joint[t] / total).abs();
                                    worst = worst.max(diff);
                                    check(diff <= 1e-9, || {
                                        format!("words {words:?} split {split} z {z:?} token {pos}: {diff:e}")
                                    })?;
                                }
                                checked += 1;
                            }
                        }
                    }
                }
            }
        }
    }

    // Long-run distribution of the chain against the exact posterior.
    let cases: [(&[usize], usize); 3] = [
        (&[0, 1, 2, 0, 1, 2], 3),
        (&[0, 0, 1, 1, 2, 2], 3),
        (&[0, 1, 0, 2, 2, 1], 2),
    ];
    let mut tvs = Vec::new();
    for (ci, (words, split)) in cases.iter().enumerate() {
        let (nc, docs) = instance(words, *split, 3);
        let n = words.len();
        let states = 1usize << n;
        let decode = |code: usize| (0..n).map(|i| (code >> i) & 1).collect::<Vec<_>>();
        let weights: Vec<f64> = (0..states)
            .map(|c| exact_joint(&nc.tokens, &decode(c), 2, 3, docs, alpha, eta))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut state = GibbsState::new("", &nc, 2, &vec![0; n]).map_err(|e| e.to_string())?;
        let mut r = rng(40 + ci as u64);
        for _ in 0..1000 {
            gibbs_sweep(&mut state, alpha, eta, &mut r).map_err(|e| e.to_string())?;
        }
        let sweeps = 100_000;
        let mut counts = vec![0usize; states];
        for _ in 0..sweeps {
            gibbs_sweep(&mut state, alpha, eta, &mut r).map_err(|e| e.to_string())?;
            let code = state
                .assignments()
                .iter()
                .enumerate()
                .map(|(i, &z)| z << i)
                .sum::<usize>();
            counts[code] += 1;
        }
        let tv = 0.5
            * (0..states)
                .map(|c| (counts[c] as f64 / sweeps as f64 - weights[c] / total).abs())
                .sum::<f64>();
        tvs.push(tv);
        check(tv <= 0.02, || format!("instance {words:?}: total variation {tv:.4}"))?;
    }
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "{checked} conditionals, max error {worst:.1e}; TV after 1e5 sweeps {:?}; {:.2?}",
        tvs.iter().map(|t| format!("{t:.4}")).collect::<Vec<_>>(),
        start.elapsed()
    ))
}

fn criterion_5() -> Outcome {
    let mut r = rng(5);
    let mut sizes = Vec::new();
    for &n in &[10usize, 100, 1000, 10_000] {
        let w = r.random_range(1..=(n / 3).max(2));
        let docs = r.random_range(1..=(n / 5).max(1));
        let k = r.random_range(1..=6);
        let tokens: Vec<NodeToken> = (0..n)
            .map(|i| NodeToken {
                doc: if i < docs { i } else { r.random_range(0..docs) },
                words: (0..r.random_range(1..=3))
                    .map(|j| if i == 0 && j == 0 { 0 } else { r.random_range(0..w) })
                    .collect(),
            })
            .collect();
        let triplets: u32 = tokens.iter().map(|t| t.words.len() as u32).sum();
        let nc = NodeCorpus::new(tokens, w, docs);
        let init: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let mut s = GibbsState::new("", &nc, k, &init).map_err(|e| e.to_string())?;
        let sweeps = if n >= 10_000 { 5 } else { 20 };
        for sweep in 0..sweeps {
            gibbs_sweep(&mut s, 1.0, 0.1, &mut r).map_err(|e| e.to_string())?;
            s.check_invariants().map_err(|e| format!("n={n} sweep {sweep}: {e}"))?;
            let c_total: u32 = (0..k).map(|t| s.topic_total(t)).sum();
            let b_total: u32 = (0..docs).map(|d| s.doc_total(d)).sum();
            check(c_total == triplets && b_total == n as u32, || {
                format!("n={n} sweep {sweep}: totals drifted")
            })?;
        }
        sizes.push(format!("{n}×{sweeps}"));
    }
    Ok(format!("invariants exact after every sweep ({})", sizes.join(", ")))
}

fn dirichlet(r: &mut ChaCha8Rng, alpha: f64, n: usize) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).unwrap();
    let draws: Vec<f64> = (0..n).map(|_| g.sample(r).max(1e-300)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

fn categorical(r: &mut ChaCha8Rng, p: &[f64]) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let (docs, per_doc, vocab, k) = (50, 40, 30, 2);
    let config = CorpusConfig::default();
    let mut better = 0;
    let mut ratios = Vec::new();
    for run in 0..20u64 {
        let mut r = rng(600 + run);
        let beta: Vec<Vec<f64>> = (0..k).map(|_| dirichlet(&mut r, 0.1, vocab)).collect();
        let mut tokens = Vec::new();
        let mut oracle_probs = Vec::new();
        for d in 0..docs {
            let theta = dirichlet(&mut r, config.alpha, k);
            for _ in 0..per_doc {
                let z = categorical(&mut r, &theta);
                let w = categorical(&mut r, &beta[z]);
                tokens.push(NodeToken { doc: d, words: vec![w] });
                oracle_probs.push(theta[z] * beta[z][w]);
            }
        }
        let oracle = perplexity_from_probabilities(&oracle_probs).map_err(|e| e.to_string())?;
        // relabel the vocabulary densely, as a node view would
        let used: BTreeSet<usize> = tokens.iter().map(|t| t.words[0]).collect();
        let dense: BTreeMap<usize, usize> = used.iter().enumerate().map(|(i, &w)| (w, i)).collect();
        for t in &mut tokens {
            t.words[0] = dense[&t.words[0]];
        }
        let nc = NodeCorpus::new(tokens, used.len(), docs);
        let init: Vec<usize> = (0..nc.tokens.len()).map(|_| r.random_range(0..k)).collect();
        let random_state = GibbsState::new("", &nc, k, &init).map_err(|e| e.to_string())?;
        let random_est = PosteriorEstimates::from_state(&random_state, config.alpha, config.eta);
        let random_pp = model_perplexity(&random_state, &random_est).map_err(|e| e.to_string())?;
        let (state, est) = train_node("", &nc, k, &init, &config, &mut r, None).map_err(|e| e.to_string())?;
        let trained = perplexity(&est, state.tokens(), &state.assignments()).map_err(|e| e.to_string())?;
        if trained < random_pp {
            better += 1;
        }
        let ratio = trained / oracle;
        ratios.push(ratio);
        check((1.0 / 1.5..=1.5).contains(&ratio), || {
            format!("run {run}: trained {trained:.3} vs oracle {oracle:.3}")
        })?;
    }
    check(better >= 19, || {
        format!("trained beat random init in only {better}/20 runs")
    })?;
    within(start.elapsed(), Duration::from_secs(60))?;
    let (lo, hi) = ratios
        .iter()
        .fold((f64::MAX, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    Ok(format!(
        "trained < random in {better}/20; trained/oracle in [{lo:.3}, {hi:.3}]; {:.2?}",
        start.elapsed()
    ))
}

fn four_domains() -> Corpus {
    ontolearn::load_corpus(fixture("four_domains.jsonl")).unwrap()
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let corpus = four_domains();
    let labels: BTreeMap<String, String> =
        serde_json::from_str(&std::fs::read_to_string(fixture("four_domains.labels.json")).unwrap()).unwrap();
    let tree = build_tree(&corpus, &CorpusConfig::default()).map_err(|e| e.to_string())?;
    let assignment = tree.level_assignment(1);
    let truth: BTreeMap<usize, &str> = assignment
        .keys()
        .map(|&t| (t, labels[&corpus.token(t).doc_id].as_str()))
        .collect();
    let purity = cluster_purity(&assignment, &truth).map_err(|e| e.to_string())?;
    let children = tree.root.children.len();
    let summary = format!(
        "{children} level-1 children, purity {purity:.3}, root topic counts {:?}",
        tree.root.round_topic_counts
    );
    within(start.elapsed(), Duration::from_secs(30))?;
    check(children >= 4 && purity >= 0.9, || summary.clone())?;
    Ok(summary)
}

/// Reachable phrases by repeated relaxation over the raw triplet list.
fn brute_reach(triplets: &[TripletKey], seeds: &BTreeSet<String>, steps: Option<u32>) -> BTreeSet<String> {
    let mut dist: BTreeMap<&str, u32> = seeds.iter().map(|s| (s.as_str(), 0)).collect();
    loop {
        let mut changed = false;
        for t in triplets.iter().filter(|t| !t.object.is_empty()) {
            for (a, b) in [(&t.subject, &t.object), (&t.object, &t.subject)] {
                if let Some(&da) = dist.get(a.as_str()) {
                    if dist.get(b.as_str()).is_none_or(|&db| db > da + 1) {
                        dist.insert(b, da + 1);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist.into_iter()
        .filter(|(_, d)| steps.is_none_or(|s| *d <= s))
        .map(|(p, _)| p.to_owned())
        .collect()
}

fn criterion_8() -> Outcome {
    let mut r = rng(8);
    let mut compared = 0;
    for g in 0..100 {
        let nodes = r.random_range(1..=100);
        let edges = r.random_range(0..=nodes * 2);
        let mut triplets: Vec<TripletKey> = (0..edges)
            .map(|_| {
                TripletKey::new(
                    format!("n{}", r.random_range(0..nodes)),
                    format!("r{}", r.random_range(0..3)),
                    format!("n{}", r.random_range(0..nodes)),
                )
            })
            .collect();
        // every node appears in at least one triplet
        for i in 0..nodes {
            triplets.push(TripletKey::new(format!("n{i}"), "exist", ""));
        }
        let graph = build_triplet_graph(&triplets);
        let seeds: BTreeSet<String> = (0..r.random_range(1..=3))
            .map(|_| format!("n{}", r.random_range(0..nodes)))
            .collect();
        let seed_list: Vec<&String> = seeds.iter().collect();
        for steps in [Some(0), Some(1), Some(2), None] {
            let got = prune(&graph, &seed_list, steps).map_err(|e| e.to_string())?;
            let expected = brute_reach(&triplets, &seeds, steps);
            check(got.phrases == expected, || {
                format!("graph {g} steps {steps:?}: phrase sets differ")
            })?;
            let expected_triplets: BTreeSet<TripletKey> = triplets
                .iter()
                .filter(|t| expected.contains(&t.subject) && (t.object.is_empty() || expected.contains(&t.object)))
                .cloned()
                .collect();
            check(got.triplets == expected_triplets, || {
                format!("graph {g} steps {steps:?}: triplet sets differ")
            })?;
            compared += 1;
        }
    }
    Ok(format!("{compared} prune results equal the brute-force reachable sets"))
}

fn ontology_with(rules: &[(&str, &str, &str)]) -> Ontology {
    let mut o = Ontology::default();
    for &(s, v, obj) in rules {
        o.classes.insert(s.into());
        o.assertions.insert(TripletKey::new(s, v, obj));
    }
    o
}

fn criterion_9() -> Outcome {
    let extracted = ontology_with(&[("x", "r", "1"), ("y", "r", "2"), ("z", "r", "3")]);
    let gold = GoldRuleSet::new([("x", "r", "1"), ("y", "r", "2"), ("w", "r", "4")]);
    let r = compare_gold(&extracted, &gold);
    let third = 2.0 / 3.0;
    check(
        r.precision == third && r.recall == third && r.f_measure == third,
        || format!("{r:?}"),
    )?;

    let same = compare_gold(
        &extracted,
        &GoldRuleSet::new([("x", "r", "1"), ("y", "r", "2"), ("z", "r", "3")]),
    );
    check((same.precision, same.recall, same.f_measure) == (1.0, 1.0, 1.0), || {
        format!("{same:?}")
    })?;
    let empty = compare_gold(&Ontology::default(), &gold);
    check(
        (empty.precision, empty.recall, empty.f_measure) == (0.0, 0.0, 0.0),
        || format!("{empty:?}"),
    )?;
    let no_gold = compare_gold(&extracted, &GoldRuleSet::default());
    check(
        (no_gold.precision, no_gold.recall, no_gold.f_measure) == (0.0, 0.0, 0.0),
        || format!("{no_gold:?}"),
    )?;
    let nothing = compare_gold(&Ontology::default(), &GoldRuleSet::default());
    check(
        (nothing.precision, nothing.recall, nothing.f_measure) == (0.0, 0.0, 0.0),
        || format!("{nothing:?}"),
    )?;

    let pp = perplexity_from_probabilities(&[0.1; 25]).map_err(|e| e.to_string())?;
    check((pp - 10.0).abs() <= 1e-12, || format!("perplexity {pp}"))?;
    let one = perplexity_from_probabilities(&[1.0; 4]).map_err(|e| e.to_string())?;
    check(one == 1.0, || format!("perplexity {one}"))?;
    Ok(format!("p=r=f={third}; degenerate cases 0/1; perplexity(0.1) = {pp}"))
}

fn build_outputs(corpus: &Corpus, config: &CorpusConfig, threads: usize) -> Result<(String, Vec<u8>, Vec<u8>), String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| e.to_string())?;
    let tree: TopicTree = pool.install(|| build_tree(corpus, config)).map_err(|e| e.to_string())?;
    let (ontology, _) = link_relations(&tree, corpus);
    Ok((
        tree.to_json(corpus),
        ontology.export(ExportFormat::Json),
        ontology.export(ExportFormat::Turtle),
    ))
}

fn criterion_10() -> Outcome {
    let corpus = four_domains();
    let config = CorpusConfig {
        rng_seed: 42,
        ..Default::default()
    };
    let reference = build_outputs(&corpus, &config, 1)?;
    for (run, threads) in [(1, 1), (2, 4), (3, 4)] {
        let again = build_outputs(&corpus, &config, threads)?;
        check(again == reference, || {
            format!("run {run} with {threads} threads differs")
        })?;
    }
    Ok(format!(
        "tree ({} bytes), ontology json and turtle identical across runs and 1/4 threads",
        reference.0.len()
    ))
}

fn criterion_11() -> Outcome {
    for name in ["packaging", "jumps", "spaces"] {
        let text = std::fs::read_to_string(fixture(&format!("outlines/{name}.txt"))).unwrap();
        let expected = std::fs::read_to_string(fixture(&format!("outlines/{name}.expected.tsv"))).unwrap();
        let got: String = extract_structural_triplets(&ItemizedDoc::parse(name, &text, 2))
            .triplets
            .iter()
            .map(|t| format!("{}\t{}\t{}\n", t.subject, t.verb, t.object))
            .collect();
        check(got == expected, || format!("{name}: got\n{got}"))?;
    }
    let ny = extract_pattern_triplets("New York is the largest city in the United States.");
    check(
        ny.iter()
            .any(|t| t.key() == TripletKey::new("new york", "be the largest city in", "the united states")),
        || format!("new york sentence gave {ny:?}"),
    )?;
    let queen = extract_pattern_triplets("Queen Elizabeth");
    check(
        queen
            .iter()
            .any(|t| t.key() == TripletKey::new("elizabeth", "be", "queen")),
        || format!("queen sentence gave {queen:?}"),
    )?;
    Ok("3 outline goldens byte-exact; both pattern examples reproduced".into())
}

/// Synthetic corpus with `n` tokens: 20 tokens per document, phrases and
/// triplets drawn from four planted groups.
fn synthetic_corpus(n: usize, seed: u64) -> Corpus {
    let mut r = rng(seed);
    let mut lines = Vec::new();
    for d in 0..n / 20 {
        let group = d % 4;
        let sentences: Vec<Vec<serde_json::Value>> = (0..20)
            .map(|_| {
                let p = format!("g{group} phrase {}", r.random_range(0..25));
                let o = format!("g{group} object {}", r.random_range(0..10));
                vec![serde_json::json!({"raw": p, "triplets": [{"subject": p, "verb": "relate to", "object": o}]})]
            })
            .collect();
        let chunks = vec![sentences[..10].to_vec(), sentences[10..].to_vec()];
        lines.push(serde_json::json!({"doc_id": format!("doc{d}"), "chunks": chunks}).to_string());
    }
    Corpus::from_jsonl_str(&lines.join("\n")).unwrap()
}

/// One level of work over an `n`-token corpus: an ACRP pass over every token
/// followed by a fixed four-topic rLDA fit. Median of five timings.
fn level_time(n: usize) -> Duration {
    let config = CorpusConfig {
        gibbs_iterations: 100,
        ..Default::default()
    };
    let mut times: Vec<Duration> = (0..5)
        .map(|seed| {
            let corpus = synthetic_corpus(n, 1200 + seed);
            let all: Vec<usize> = (0..corpus.token_count()).collect();
            let tokens: Vec<&NounPhraseToken> = all.iter().map(|&i| corpus.token(i)).collect();
            let mut r = rng(seed);
            let start = Instant::now();
            acrp_pass(&tokens, config.gamma, &mut r, None);
            let node = NodeCorpus::from_corpus(&corpus, &all);
            let init: Vec<usize> = (0..all.len()).map(|i| i % 4).collect();
            train_node("", &node, 4, &init, &config, &mut r, None).unwrap();
            start.elapsed()
        })
        .collect();
    times.sort();
    times[2]
}

fn criterion_12() -> Outcome {
    let mut parts = Vec::new();
    for n in [1000, 2000] {
        let t1 = level_time(n);
        let t2 = level_time(2 * n);
        let ratio = t2.as_secs_f64() / t1.as_secs_f64();
        parts.push(format!("N={n}: {t1:.2?} → {t2:.2?} (×{ratio:.2})"));
        check(ratio <= 5.0, || parts.join("; "))?;
    }
    Ok(parts.join("; "))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("ACRP distribution validity", criterion_1),
        ("ACRP first-customer rule", criterion_2),
        ("ACRP monotonicity", criterion_3),
        ("Gibbs conditional and chain vs brute force", criterion_4),
        ("count conservation", criterion_5),
        ("perplexity: trained vs random vs oracle", criterion_6),
        ("four-domain robustness fixture", criterion_7),
        ("pruning vs brute-force BFS", criterion_8),
        ("metric exactness", criterion_9),
        ("build determinism across runs and threads", criterion_10),
        ("extraction goldens", criterion_11),
        ("per-level scaling smoke", criterion_12),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let number = i + 1;
        if only.is_some_and(|o| o != number) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("[PASS] criterion {number:>2}: {name} ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] criterion {number:>2}: {name} ({detail})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
