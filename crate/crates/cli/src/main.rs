use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mediagap_core::config::{parse_topics, Overrides, RunConfig, YearRange};
use mediagap_core::corpus::OutletSet;
use mediagap_core::lexicon::{CountingMode, MultiTopic, Topic};
use mediagap_core::metrics::{ClusterThreshold, MadCenter, MadVariant};
use mediagap_core::pipeline::{self, Error, UnitStatus, Verdict};
use mediagap_core::synth::{bundled_lexicon_tsv, synth_corpus, to_jsonl, SynthSpec};

/// Thematic discrepancy analysis of news headlines across outlets.
#[derive(Parser, Debug)]
#[command(name = "mediagap", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Corpus file (.jsonl or .csv).
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Outlet list (TOML or JSON); defaults to the bundled nine outlets.
    #[arg(long, global = true)]
    outlets: Option<PathBuf>,
    /// Topic lexicon (`bigram<TAB>topic`).
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    /// Stopword list, one word per line.
    #[arg(long, global = true)]
    stoplist: Option<PathBuf>,
    /// Lemma exceptions (`word<TAB>lemma`).
    #[arg(long, global = true)]
    lemma_exceptions: Option<PathBuf>,
    /// Inclusive year range, e.g. 2014..2022.
    #[arg(long, global = true, value_parser = clap::value_parser!(YearRange))]
    years: Option<YearRange>,
    /// Comma-separated topics: foreign, domestic, economic, social.
    #[arg(long, global = true, value_parser = parse_topics)]
    topics: Option<Vec<Topic>>,
    #[arg(long, global = true)]
    mining_threshold: Option<u64>,
    #[arg(long, global = true)]
    inclusion_threshold: Option<u64>,
    #[arg(long, global = true)]
    top_k: Option<usize>,
    /// Single-linkage cut height, or `auto` for the median pairwise distance.
    #[arg(long, global = true)]
    cluster_threshold: Option<ClusterThreshold>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// occurrences | headlines
    #[arg(long, global = true)]
    counting: Option<CountingMode>,
    /// all | first
    #[arg(long, global = true)]
    multi_topic: Option<MultiTopic>,
    /// all | major
    #[arg(long, global = true)]
    mad_variant: Option<MadVariant>,
    /// componentwise | spatial
    #[arg(long, global = true)]
    mad_center: Option<MadCenter>,
    /// Seed for fixture generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print summaries as JSON.
    #[arg(long, global = true)]
    json: bool,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse the corpus and report skipped rows and counts.
    IngestCheck,
    /// Mine frequent bigrams and write a lexicon skeleton.
    Mine,
    /// Run the full analysis and write the output tree.
    Analyze,
    /// Re-check an output tree against its manifest.
    Verify,
    /// Re-render plots from the CSVs of an output tree.
    Report,
    /// Write a synthetic corpus, lexicon, outlet list and config.
    Synth {
        /// Relevant headlines per outlet, topic and year.
        #[arg(long, default_value_t = SynthSpec::default().per_cell)]
        per_cell: usize,
        /// Off-topic headlines.
        #[arg(long, default_value_t = SynthSpec::default().noise)]
        noise: usize,
    },
}

impl Global {
    fn overrides(&self) -> Overrides {
        Overrides {
            corpus: self.corpus.clone(),
            outlets: self.outlets.clone(),
            lexicon: self.lexicon.clone(),
            stoplist: self.stoplist.clone(),
            lemma_exceptions: self.lemma_exceptions.clone(),
            out: self.out.clone(),
            years: self.years,
            topics: self.topics.clone(),
            mining_threshold: self.mining_threshold,
            inclusion_threshold: self.inclusion_threshold,
            top_k: self.top_k,
            cluster_threshold: self.cluster_threshold,
            jobs: self.jobs,
            counting: self.counting,
            multi_topic: self.multi_topic,
            mad_variant: self.mad_variant,
            mad_center: self.mad_center,
        }
    }

    fn run_config(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&self.overrides());
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("summary serializes"));
}

fn write_out(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn synth(g: &Global, per_cell: usize, noise: usize) -> Result<(), Error> {
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("synthetic"));
    let years = g.years.unwrap_or_default();
    let spec = SynthSpec { seed: g.seed.unwrap_or(SynthSpec::default().seed), years: years.range(), per_cell, noise, ..Default::default() };
    let outlets = OutletSet::default_nine();
    let records = synth_corpus(&spec, &outlets);
    fs::create_dir_all(&out).map_err(|e| Error::Config(format!("{}: {e}", out.display())))?;
    write_out(&out.join("corpus.jsonl"), &to_jsonl(&records))?;
    write_out(&out.join("outlets.toml"), &outlets.to_toml())?;
    write_out(&out.join("lexicon.tsv"), &bundled_lexicon_tsv())?;
    let config = format!(
        "[inputs]\ncorpus = \"corpus.jsonl\"\noutlets = \"outlets.toml\"\nlexicon = \"lexicon.tsv\"\n\n[scope]\nyears = \"{years}\"\n\n[output]\ndir = \"out\"\n"
    );
    write_out(&out.join("config.toml"), &config)?;
    println!("wrote {} headlines (seed {}) to {}", records.len(), spec.seed, out.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let g = &cli.global;
    match &cli.command {
        Command::Synth { per_cell, noise } => synth(g, *per_cell, *noise),
        Command::IngestCheck => {
            let r = pipeline::ingest_check(&g.run_config()?)?;
            if g.json {
                print_json(&r);
                return Ok(());
            }
            let s = &r.stats;
            println!("records {}  skipped {}  out-of-range {}  empty-after-preprocessing {}  headlines {}", s.records, s.skipped, s.out_of_range, s.dropped_empty, s.headlines);
            for (line, reason) in r.skipped.iter().take(20) {
                println!("  line {line}: {reason}");
            }
            for (o, n) in &r.per_outlet {
                println!("  outlet {o}: {n}");
            }
            for (y, n) in &r.per_year {
                println!("  year {y}: {n}");
            }
            Ok(())
        }
        Command::Mine => {
            let s = pipeline::mine(&g.run_config()?)?;
            if g.json {
                print_json(&s);
            } else {
                println!("{} candidate bigram(s) from {} headlines", s.candidates, s.stats.headlines);
                println!("report   {}", s.report.display());
                println!("skeleton {}", s.skeleton.display());
            }
            Ok(())
        }
        Command::Analyze => {
            let m = pipeline::analyze(&g.run_config()?)?;
            if g.json {
                print_json(&m);
                return Ok(());
            }
            println!("{} relevant headlines ({} in several topics)", m.selection.relevant, m.selection.overlap);
            for u in &m.units {
                match &u.status {
                    UnitStatus::Ok => println!(
                        "ok          {}/{}  {}x{}  inertia {:.4}  2-D share {:.3}",
                        u.topic,
                        u.year,
                        u.rows,
                        u.columns,
                        u.total_inertia.unwrap_or(0.0),
                        u.explained_2d.unwrap_or(0.0)
                    ),
                    UnitStatus::Degenerate { reason } => println!("degenerate  {}/{}  {reason}", u.topic, u.year),
                    UnitStatus::Failed { reason } => println!("failed      {}/{}  {reason}", u.topic, u.year),
                }
            }
            println!("{} files, manifest {}", m.files.len(), pipeline::MANIFEST);
            Ok(())
        }
        Command::Verify => {
            let cfg = g.run_config()?;
            let r = pipeline::verify(&cfg.output.dir)?;
            if g.json {
                print_json(&r);
            } else {
                for u in &r.units {
                    match &u.verdict {
                        Verdict::Pass { .. } => println!("PASS  {}", u.unit),
                        Verdict::Skipped { reason } => println!("SKIP  {}  {reason}", u.unit),
                        Verdict::Fail { checks, problems } => {
                            println!("FAIL  {}", u.unit);
                            for c in checks.iter().filter(|c| !c.pass) {
                                println!("      {}: residual {:e} > {:e}", c.name, c.residual, c.tolerance);
                            }
                            for p in problems {
                                println!("      {p}");
                            }
                        }
                    }
                }
                for f in &r.tampered {
                    println!("CHANGED  {f}");
                }
            }
            if r.passed() {
                Ok(())
            } else {
                Err(Error::Numeric(format!("verification failed for {} unit(s), {} changed file(s)", r.failed_units().len(), r.tampered.len())))
            }
        }
        Command::Report => {
            let cfg = g.run_config()?;
            let s = pipeline::rerender(&cfg.output.dir, cfg.canvas())?;
            if g.json {
                print_json(&s);
            } else {
                println!("re-rendered {} scatter plot(s) and {} series plot(s)", s.scatters, s.series);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
