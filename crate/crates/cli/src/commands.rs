use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use nplsa_core::autostop::AutoConfig;
use nplsa_core::corpus::{looks_sparse, read_sparse_corpus, read_stopwords, read_text_corpus};
use nplsa_core::model::{align_topics, write_json, ModelFile, ModelMeta, TruthFile};
use nplsa_core::rng::RNG_IDENTITY;
use nplsa_core::{
    diversity, perplexity, pmi_coherence, train_nplsa, train_plsa, Corpus, CooccurrenceStats, DocTopicMix,
    EmConfig, MetricsReport, NplsaConfig, PmiConfig, RunTrace, SynthConfig, TopicSet,
};

use crate::args::{Algo, EvalArgs, Profile, SynthArgs, TrainArgs};
use crate::CliError;

fn echo<A: Serialize, R: Serialize>(dir: &Path, command: &str, args: &A, resolved: &R) -> Result<(), CliError> {
    let doc = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "rng": RNG_IDENTITY,
        "args": args,
        "resolved": resolved,
    });
    write_json(dir.join("config.json"), &doc)?;
    Ok(())
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", dir.display())))
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Core(nplsa_core::Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{what} {} not found", path.display()),
        ))))
    }
}

fn set_threads(n: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn load_corpus(path: &Path, min_df: usize, stopwords: Option<&Path>) -> Result<Corpus, CliError> {
    require_file(path, "corpus")?;
    if looks_sparse(path)? {
        if min_df > 1 || stopwords.is_some() {
            warn!("--min-df and --stopwords only apply to text corpora; ignored");
        }
        return Ok(read_sparse_corpus(path)?);
    }
    let stop = stopwords.map(read_stopwords).transpose()?;
    let corpus = read_text_corpus(path, min_df, stop.as_ref())?;
    if !corpus.dropped().is_empty() {
        warn!("{} documents were empty after filtering and were dropped", corpus.dropped().len());
    }
    Ok(corpus)
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let mut cfg = match a.profile {
        Profile::Paper => SynthConfig::paper(a.seed),
        Profile::Desk => SynthConfig::desk(a.seed),
    };
    macro_rules! override_field {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = a.$flag { cfg.$field = v; }
        )*};
    }
    override_field!(docs => n_docs, doc_len => doc_len, topics => n_topics, vocab => vocab_size,
        alpha => alpha, beta => beta, min_topic_dist => min_topic_dist);
    cfg.validate()?;
    out_dir(&a.out)?;

    let s = nplsa_core::generate_corpus(&cfg)?;
    s.corpus.save_sparse(a.out.join("corpus.txt"))?;
    TruthFile::new(s.corpus.vocab(), &s.truth, &cfg).save(a.out.join("truth.json"))?;
    if a.latent {
        let mut w = BufWriter::new(File::create(a.out.join("latent.csv"))?);
        writeln!(w, "doc,position,term,topic")?;
        for (d, tokens) in s.assignments.iter().enumerate() {
            for (i, (t, z)) in tokens.iter().enumerate() {
                writeln!(w, "{d},{i},{},{z}", s.corpus.vocab().terms()[*t as usize])?;
            }
        }
        w.flush()?;
    }
    echo(&a.out, "synth", a, &cfg)?;
    println!(
        "wrote {} documents, {} topics over {} terms to {}",
        s.corpus.n_docs(),
        cfg.n_topics,
        cfg.vocab_size,
        a.out.display()
    );
    Ok(())
}

fn check_train_args(a: &TrainArgs) -> Result<(), CliError> {
    let need = |ok: bool, flag: &str| {
        if ok {
            Ok(())
        } else {
            Err(CliError::Usage(format!("--algo {:?} requires {flag}", a.algo).to_lowercase()))
        }
    };
    match a.algo {
        Algo::Plsa => need(a.k.is_some(), "--k")?,
        Algo::Nplsa => need(a.epsilon.is_some(), "--epsilon")?,
        Algo::Query => need(a.query.as_deref().is_some_and(|q| !q.trim().is_empty()), "--query")?,
        Algo::Auto => {}
    }
    let unused = [
        (a.k.is_some() && a.algo != Algo::Plsa, "--k"),
        (a.epsilon.is_some() && a.algo != Algo::Nplsa, "--epsilon"),
        (a.query.is_some() && a.algo != Algo::Query, "--query"),
        (a.shuffle.is_some() && a.algo != Algo::Nplsa, "--shuffle"),
    ];
    for (hit, flag) in unused {
        if hit {
            warn!("{flag} has no effect with this algorithm");
        }
    }
    Ok(())
}

struct Trained {
    topics: TopicSet,
    mixes: DocTopicMix,
    trace: RunTrace,
    epsilon: Option<f64>,
    extra: serde_json::Value,
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    check_train_args(a)?;
    require_file(&a.corpus, "corpus")?;
    if let Some(s) = &a.stopwords {
        require_file(s, "stopword list")?;
    }
    out_dir(&a.out)?;
    set_threads(a.threads)?;

    let em = EmConfig {
        max_iters: a.max_iters,
        rel_tol: a.rel_tol,
        seed: a.seed,
        smoothing_floor: a.floor,
        fold_in_max_iters: a.fold_in_iters,
        fold_in_rel_tol: a.fold_in_tol,
    };
    em.validate()?;
    let corpus = load_corpus(&a.corpus, a.min_df, a.stopwords.as_deref())?;
    info!(
        "corpus: {} documents, {} terms, {} tokens",
        corpus.n_docs(),
        corpus.n_terms(),
        corpus.total_tokens()
    );

    let auto = AutoConfig {
        em,
        patience: a.patience,
        max_topics: a.max_topics,
        max_k: a.max_k,
        refine: !a.no_refine,
        lambda: a.lambda,
        feedback_iters: a.feedback_iters,
    };
    let t = match a.algo {
        Algo::Plsa => {
            let fit = train_plsa(&corpus, a.k.unwrap(), &em)?;
            Trained {
                topics: fit.topics,
                mixes: fit.mixes,
                trace: fit.trace,
                epsilon: None,
                extra: json!({ "log_likelihood": fit.log_likelihood }),
            }
        }
        Algo::Nplsa => {
            let eps = a.epsilon.unwrap();
            let cfg = NplsaConfig {
                em,
                max_topics: a.max_topics,
                shuffle: a.shuffle,
            };
            let fit = train_nplsa(&corpus, eps, &cfg)?;
            Trained {
                topics: fit.state.topics,
                mixes: fit.state.mixes,
                trace: fit.trace,
                epsilon: Some(eps),
                extra: json!({ "spawned_from": fit.spawned_from }),
            }
        }
        Algo::Auto | Algo::Query => {
            let (fit, query) = if a.algo == Algo::Auto {
                (nplsa_core::train_parameter_free(&corpus, &auto)?, None)
            } else {
                let terms: Vec<&str> = a.query.as_deref().unwrap().split_whitespace().collect();
                let (fit, qm) = nplsa_core::train_weakly_supervised(&corpus, &terms, &auto)?;
                (fit, Some(qm))
            };
            Trained {
                topics: fit.topics,
                mixes: fit.mixes,
                trace: fit.trace,
                epsilon: None,
                extra: json!({
                    "best_k": fit.best_k,
                    "best_score": fit.best_score,
                    "spawned_from": fit.spawned_from,
                    "query_feedback_docs": query.as_ref().map(|q| q.feedback_size),
                }),
            }
        }
    };

    let k = t.topics.n_topics();
    let meta = ModelMeta {
        k,
        seed: a.seed,
        iters: t.trace.rows.len(),
        algo: Some(format!("{:?}", a.algo).to_lowercase()),
        epsilon: t.epsilon,
    };
    ModelFile::new(corpus.vocab(), &t.topics, Some(&t.mixes), meta).save(a.out.join("model.json"))?;
    t.trace.save(a.out.join("trace.csv"))?;
    echo(&a.out, "train", a, &json!({ "em": em, "result": t.extra }))?;
    println!("trained {k} topics; wrote {}", a.out.display());
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    require_file(&a.model, "model")?;
    for (p, what) in [(&a.corpus, "corpus"), (&a.truth, "truth file"), (&a.reference, "reference corpus")] {
        if let Some(p) = p {
            require_file(p, what)?;
        }
    }
    set_threads(a.threads)?;
    let out: PathBuf = a.out.clone().unwrap_or_else(|| {
        a.model.parent().unwrap_or(Path::new(".")).join("metrics.json")
    });

    let model = ModelFile::load(&a.model)?;
    let topics = model.topic_set()?;
    let vocab = model.vocabulary();
    let mut report = MetricsReport {
        k: topics.n_topics(),
        diversity: (topics.n_topics() >= 2).then(|| diversity(&topics)).transpose()?.map(|d| d.value),
        ..Default::default()
    };

    if let Some(path) = &a.truth {
        let truth = TruthFile::load(path)?;
        let truth_vocab = nplsa_core::Vocabulary::from_terms(truth.vocab.iter().cloned());
        let truth_topics = TopicSet::from_rows(truth.topics)?;
        let learned = align_topics(&topics, &vocab, &truth_vocab)?;
        report.tqe = Some(nplsa_core::topic_quality_error(&learned, &truth_topics)?);
        report.tce = Some(nplsa_core::topic_coverage_error(&learned, &truth_topics)?);
    }

    if let Some(path) = &a.reference {
        let reference = load_corpus(path, 1, None)?;
        let mut shared = reference.vocab().clone();
        for t in vocab.terms() {
            shared.insert(t.clone());
        }
        let (reference, _) = reference.align_to(&shared)?;
        let aligned = align_topics(&topics, &vocab, &shared)?;
        let cfg = PmiConfig { top_n: a.top_n };
        let mut words: Vec<u32> = (0..aligned.n_topics()).flat_map(|k| aligned.top_words(k, a.top_n)).collect();
        words.sort_unstable();
        words.dedup();
        let stats = CooccurrenceStats::for_terms(&reference, &words);
        report.pmi = Some(pmi_coherence(&aligned, &stats, &cfg)?);
    }

    if let Some(path) = &a.corpus {
        let held_out = load_corpus(path, 1, None)?;
        let (held_out, lost) = held_out.align_to(&vocab)?;
        if lost > 0 {
            warn!("{lost} held-out tokens are outside the model vocabulary and were skipped");
        }
        let em = EmConfig {
            seed: a.seed,
            fold_in_max_iters: a.fold_in_iters,
            fold_in_rel_tol: a.fold_in_tol,
            ..EmConfig::default()
        };
        em.validate()?;
        report.perplexity = Some(perplexity(&held_out, &topics, a.split, &em)?);
    }

    write_json(&out, &report)?;
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}
