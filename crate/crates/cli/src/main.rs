use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use ontolearn::corpus::{load_lexicon, SynonymLexicon};
use ontolearn::eval::{compare_gold, tree_perplexity, GoldRuleSet};
use ontolearn::extract::{extract_structural_triplets, pattern_document, ItemizedDoc, PatternExtractor};
use ontolearn::hierarchy::{build_tree_with, BuildOptions, TopicTree};
use ontolearn::ontology::{
    build_triplet_graph, link_relations_with, prune, prune_corpus, ExportFormat, LinkOptions, Ontology, PruneResult,
};
use ontolearn::{Corpus, CorpusConfig};

#[derive(Parser)]
#[command(
    name = "ontolearn",
    version,
    about = "Topic hierarchies and terminological ontologies from relation triplets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract triplets from itemized outlines or prose into a corpus file.
    ExtractTriplets(ExtractArgs),
    /// Build the topic tree (and optionally the ontology) from a corpus.
    Build(BuildArgs),
    /// Keep only the part of the corpus reachable from seed phrases.
    Prune(PruneArgs),
    /// Link a built tree with the corpus relations and export the ontology.
    Export(ExportArgs),
    /// Score an ontology against gold rules, or report model perplexity.
    Eval(EvalArgs),
    /// Build, export and evaluate in one run.
    All(AllArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML or JSON config file; a run manifest with a "config" key also works.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    max_depth: Option<u32>,
    /// Gibbs sweeps per node fit.
    #[arg(long)]
    iterations: Option<u32>,
    #[arg(long)]
    acrp_max_passes: Option<u32>,
    /// Run seed (default 0).
    #[arg(long)]
    seed_rng: Option<u64>,
    /// Worker threads for sibling expansion (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SeedArgs {
    /// Seed phrase for pruning; repeatable.
    #[arg(long = "seed")]
    seeds: Vec<String>,
    /// Expansion steps from the seeds (default: unlimited).
    #[arg(long, requires = "seeds")]
    steps: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Structural,
    Pattern,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Input text files; each file is one document named by its file stem.
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    /// Corpus JSONL to write.
    #[arg(long)]
    out: PathBuf,
    /// Also emit passive inverses of pattern triplets.
    #[arg(long)]
    passive: bool,
    /// Spaces per indentation level in structural mode.
    #[arg(long, default_value_t = 2)]
    spaces_per_level: usize,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Tree JSON to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    ontology_out: Option<PathBuf>,
    /// JSON array of synonym pairs.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[command(flatten)]
    seeds: SeedArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct PruneArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long = "seed", required = true)]
    seeds: Vec<String>,
    #[arg(long)]
    steps: Option<u32>,
    /// Pruned corpus JSONL to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Turtle,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    tree: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: PathBuf,
    /// Attach triplets whose subject is a synonym or acronym of a label.
    #[arg(long)]
    match_synonyms: bool,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Post-hoc filter: keep only what the seeds reach.
    #[command(flatten)]
    seeds: SeedArgs,
}

#[derive(Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["gold", "perplexity"])))]
struct EvalArgs {
    /// Gold rules: JSON array of [a, b, c] triples.
    #[arg(long, requires = "ontology")]
    gold: Option<PathBuf>,
    #[arg(long)]
    ontology: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
    /// Fit the corpus and report perplexity per level.
    #[arg(long, requires = "corpus")]
    perplexity: bool,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// JSON report (gold) or perplexity-per-sweep CSV (perplexity).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct AllArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[command(flatten)]
    seeds: SeedArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a [String],
    config: Option<&'a CorpusConfig>,
    inputs: &'a BTreeMap<String, String>,
    output: String,
    tool_version: &'static str,
    stages: &'a [(String, f64)],
}

/// Tracks inputs, stage timings and outputs of one invocation.
struct Run {
    argv: Vec<String>,
    config: Option<CorpusConfig>,
    inputs: BTreeMap<String, String>,
    stages: Vec<(String, f64)>,
}

impl Run {
    fn read(&mut self, path: &Path) -> Result<String> {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.inputs
            .insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push((name.to_owned(), start.elapsed().as_secs_f64()));
        out
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
        fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        let manifest = Manifest {
            command: &self.argv,
            config: self.config.as_ref(),
            inputs: &self.inputs,
            output: path.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION"),
            stages: &self.stages,
        };
        let mut manifest_path = path.as_os_str().to_owned();
        manifest_path.push(".manifest.json");
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&manifest_path, text + "\n")
            .with_context(|| format!("cannot write {}", Path::new(&manifest_path).display()))?;
        Ok(())
    }

    fn load_corpus(&mut self, path: &Path) -> Result<Corpus> {
        let text = self.read(path)?;
        Corpus::from_jsonl_str(&text).with_context(|| format!("invalid corpus {}", path.display()))
    }

    fn load_lexicon(&mut self, path: Option<&Path>) -> Result<Option<SynonymLexicon>> {
        let Some(path) = path else { return Ok(None) };
        self.read(path)?;
        Ok(Some(load_lexicon(path)?))
    }

    fn resolve_config(&mut self, args: &ConfigArgs) -> Result<CorpusConfig> {
        let mut config = match &args.config {
            Some(path) => {
                let text = self.read(path)?;
                parse_config(path, &text).with_context(|| format!("invalid config {}", path.display()))?
            }
            None => CorpusConfig::default(),
        };
        if let Some(v) = args.alpha {
            config.alpha = v;
        }
        if let Some(v) = args.eta {
            config.eta = v;
        }
        if let Some(v) = args.gamma {
            config.gamma = v;
        }
        if let Some(v) = args.max_depth {
            config.max_depth = Some(v);
        }
        if let Some(v) = args.iterations {
            config.gibbs_iterations = v;
        }
        if let Some(v) = args.acrp_max_passes {
            config.acrp_max_passes = v;
        }
        if let Some(v) = args.seed_rng {
            config.rng_seed = v;
        }
        config.validate()?;
        self.config = Some(config.clone());
        Ok(config)
    }
}

fn parse_config(path: &Path, text: &str) -> Result<CorpusConfig> {
    if path.extension().is_some_and(|e| e == "toml") {
        return Ok(toml::from_str(text)?);
    }
    let mut value: serde_json::Value = serde_json::from_str(text)?;
    if let Some(inner) = value.get_mut("config") {
        value = inner.take();
    }
    Ok(serde_json::from_value(value)?)
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()?)
}

fn prune_seeds(run: &mut Run, corpus: Corpus, seeds: &SeedArgs) -> Result<Corpus> {
    if seeds.seeds.is_empty() {
        return Ok(corpus);
    }
    let kept = seed_reach(&corpus, seeds)?;
    run.stage("prune", || prune_corpus(&corpus, &kept))
        .context("nothing left after pruning")
}

fn seed_reach(corpus: &Corpus, seeds: &SeedArgs) -> Result<PruneResult> {
    let graph = build_triplet_graph(corpus.triplet_keys());
    Ok(prune(&graph, &seeds.seeds, seeds.steps)?)
}

fn build(
    run: &mut Run,
    corpus: &Corpus,
    config: &CorpusConfig,
    threads: Option<usize>,
    lexicon: Option<&SynonymLexicon>,
    trace: bool,
) -> Result<TopicTree> {
    let pool = thread_pool(threads)?;
    let opts = BuildOptions { lexicon, trace };
    Ok(run.stage("build", || pool.install(|| build_tree_with(corpus, config, opts)))?)
}

fn link(corpus: &Corpus, tree: &TopicTree, lexicon: Option<&SynonymLexicon>, match_synonyms: bool) -> Ontology {
    let (ontology, report) = link_relations_with(
        tree,
        corpus,
        LinkOptions {
            match_synonyms,
            lexicon,
        },
    );
    eprintln!(
        "linked {} assertions onto {} classes; {} triplets had no matching class",
        report.asserted,
        ontology.classes.len(),
        report.dropped.len()
    );
    ontology
}

fn run_extract(run: &mut Run, args: &ExtractArgs) -> Result<()> {
    let mut extractor = PatternExtractor::default();
    extractor.passive = args.passive;
    let mut documents = Vec::new();
    let mut lines = Vec::new();
    for path in &args.input {
        let text = run.read(path)?;
        let doc_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .with_context(|| format!("{} has no file name", path.display()))?;
        let (triplets, document) = match args.mode {
            Mode::Structural => {
                let ex = extract_structural_triplets(&ItemizedDoc::parse(&doc_id, &text, args.spaces_per_level));
                (ex.triplets, ex.document)
            }
            Mode::Pattern => {
                let doc = pattern_document(&extractor, &doc_id, &text);
                let ts = doc
                    .iter()
                    .flat_map(|d| d.tokens())
                    .flat_map(|t| t.triplets.clone())
                    .collect();
                (ts, doc)
            }
        };
        let Some(document) = document else {
            eprintln!("{}: no triplets", path.display());
            continue;
        };
        let mut seen = std::collections::BTreeSet::new();
        for t in &triplets {
            if seen.insert(t.key()) {
                lines.push(format!("{}\t{}\t{}\t{}", doc_id, t.subject, t.verb, t.object));
            }
        }
        documents.push(document);
    }
    if documents.is_empty() {
        bail!("no triplets extracted from {} input file(s)", args.input.len());
    }
    let corpus = Corpus::new(documents)?;
    for line in lines {
        println!("{line}");
    }
    run.write(&args.out, corpus.to_jsonl().as_bytes())
}

fn run_build(run: &mut Run, args: &BuildArgs) -> Result<()> {
    let config = run.resolve_config(&args.config)?;
    let lexicon = run.load_lexicon(args.lexicon.as_deref())?;
    let corpus = run.load_corpus(&args.corpus)?;
    let corpus = prune_seeds(run, corpus, &args.seeds)?;
    let tree = build(run, &corpus, &config, args.config.threads, lexicon.as_ref(), false)?;
    run.write(&args.out, tree.to_json(&corpus).as_bytes())?;
    if let Some(path) = &args.ontology_out {
        let ontology = link(&corpus, &tree, lexicon.as_ref(), false);
        run.write(path, &ontology.export(ExportFormat::Json))?;
    }
    println!(
        "tree: {} nodes, depth {}, {} tokens",
        tree.nodes().len(),
        tree.depth,
        tree.token_count
    );
    Ok(())
}

fn run_prune(run: &mut Run, args: &PruneArgs) -> Result<()> {
    let corpus = run.load_corpus(&args.corpus)?;
    let seeds = SeedArgs {
        seeds: args.seeds.clone(),
        steps: args.steps,
    };
    let kept = seed_reach(&corpus, &seeds)?;
    let pruned = prune_corpus(&corpus, &kept).context("nothing left after pruning")?;
    run.write(&args.out, pruned.to_jsonl().as_bytes())?;
    println!(
        "kept {} phrases and {} triplets; {} documents, {} tokens",
        kept.phrases.len(),
        kept.triplets.len(),
        pruned.documents().len(),
        pruned.token_count()
    );
    Ok(())
}

fn run_export(run: &mut Run, args: &ExportArgs) -> Result<()> {
    let lexicon = run.load_lexicon(args.lexicon.as_deref())?;
    let corpus = run.load_corpus(&args.corpus)?;
    let text = run.read(&args.tree)?;
    let tree = TopicTree::from_json(&text, &corpus).with_context(|| format!("invalid tree {}", args.tree.display()))?;
    let mut ontology = link(&corpus, &tree, lexicon.as_ref(), args.match_synonyms);
    if !args.seeds.seeds.is_empty() {
        ontology = ontology.restrict(&seed_reach(&corpus, &args.seeds)?);
    }
    let format = match args.format {
        Format::Json => ExportFormat::Json,
        Format::Turtle => ExportFormat::Turtle,
    };
    run.write(&args.out, &ontology.export(format))
}

fn perplexity_csv(tree: &TopicTree) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["node_id", "level", "round", "sweep", "perplexity"])?;
    for node in tree.nodes() {
        for fit in &node.fits {
            for (sweep, p) in fit.trace.iter().enumerate() {
                w.write_record([
                    node.node_id.clone(),
                    node.level.to_string(),
                    fit.round.to_string(),
                    sweep.to_string(),
                    p.to_string(),
                ])?;
            }
        }
    }
    Ok(w.into_inner()?)
}

fn print_perplexity(tree: &TopicTree, json: bool) -> Result<()> {
    let report = tree_perplexity(tree)?;
    if json {
        println!("{}", serde_json::to_string(&report)?);
        return Ok(());
    }
    for (level, p) in &report.levels {
        println!("level {level}: perplexity {p:.4}");
    }
    println!("aggregate: perplexity {:.4}", report.aggregate);
    Ok(())
}

fn run_eval(run: &mut Run, args: &EvalArgs) -> Result<()> {
    if let Some(gold_path) = &args.gold {
        let ontology_path = args.ontology.as_ref().expect("clap requires --ontology with --gold");
        let gold = GoldRuleSet::from_json_str(&run.read(gold_path)?)
            .with_context(|| format!("invalid gold rules {}", gold_path.display()))?;
        let ontology = Ontology::from_json(&run.read(ontology_path)?)
            .with_context(|| format!("invalid ontology {}", ontology_path.display()))?;
        let report = compare_gold(&ontology, &gold);
        if args.json {
            println!("{}", serde_json::to_string(&report)?);
        } else {
            println!("{report}");
        }
        if let Some(out) = &args.out {
            run.write(out, serde_json::to_string(&report)?.as_bytes())?;
        }
        return Ok(());
    }
    let config = run.resolve_config(&args.config)?;
    let corpus_path = args.corpus.as_ref().expect("clap requires --corpus with --perplexity");
    let corpus = run.load_corpus(corpus_path)?;
    let tree = build(run, &corpus, &config, args.config.threads, None, true)?;
    print_perplexity(&tree, args.json)?;
    if let Some(out) = &args.out {
        run.write(out, &perplexity_csv(&tree)?)?;
    }
    Ok(())
}

fn run_all(run: &mut Run, args: &AllArgs) -> Result<()> {
    let config = run.resolve_config(&args.config)?;
    let lexicon = run.load_lexicon(args.lexicon.as_deref())?;
    let gold = match &args.gold {
        Some(path) => Some(
            GoldRuleSet::from_json_str(&run.read(path)?)
                .with_context(|| format!("invalid gold rules {}", path.display()))?,
        ),
        None => None,
    };
    let corpus = run.load_corpus(&args.corpus)?;
    let corpus = prune_seeds(run, corpus, &args.seeds)?;
    let tree = build(run, &corpus, &config, args.config.threads, lexicon.as_ref(), true)?;
    let ontology = run.stage("link", || link(&corpus, &tree, lexicon.as_ref(), false));
    let dir = &args.out_dir;
    run.write(&dir.join("tree.json"), tree.to_json(&corpus).as_bytes())?;
    run.write(&dir.join("ontology.json"), &ontology.export(ExportFormat::Json))?;
    run.write(&dir.join("ontology.ttl"), &ontology.export(ExportFormat::Turtle))?;
    run.write(&dir.join("perplexity.csv"), &perplexity_csv(&tree)?)?;
    print_perplexity(&tree, false)?;
    if let Some(gold) = gold {
        let report = compare_gold(&ontology, &gold);
        println!("{report}");
        run.write(&dir.join("eval.json"), serde_json::to_string(&report)?.as_bytes())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let mut run = Run {
        argv,
        config: None,
        inputs: BTreeMap::new(),
        stages: Vec::new(),
    };
    let result = match &cli.command {
        Command::ExtractTriplets(a) => run_extract(&mut run, a),
        Command::Build(a) => run_build(&mut run, a),
        Command::Prune(a) => run_prune(&mut run, a),
        Command::Export(a) => run_export(&mut run, a),
        Command::Eval(a) => run_eval(&mut run, a),
        Command::All(a) => run_all(&mut run, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
