//! End-to-end acceptance criteria on desk-scale synthetic corpora.
//!
//! Every criterion is its own test and writes one `[PASS]`/`[FAIL]` line to
//! stderr (bypassing the test harness capture). Tests hold a shared lock so
//! wall-clock measurements are not skewed by concurrent runs.
//!
//! A failed criterion is reported but does not fail the test unless
//! `NPLSA_ACCEPTANCE_STRICT=1` is set; errors inside the library always do.

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use nplsa_core::autostop::feedback_log_likelihood;
use nplsa_core::trace::Phase;
use nplsa_core::*;

static SERIAL: Mutex<()> = Mutex::new(());

const TRUE_K: usize = 10;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] criterion {id:>2} {name}: {detail}");
    if !pass && std::env::var("NPLSA_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        panic!("criterion {id} ({name}) failed: {detail}");
    }
}

fn desk(seed: u64) -> SyntheticCorpus {
    generate_corpus(&SynthConfig::desk(seed)).expect("desk profile generates")
}

fn lock() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

#[test]
fn c01_objective_monotonicity() {
    let _g = lock();
    let start = Instant::now();
    let mut violations = Vec::new();
    let mut runs = 0;
    for seed in SEEDS {
        let s = desk(seed);
        for eps in [150.0, 200.0, 300.0] {
            let fit = train_nplsa(&s.corpus, eps, &NplsaConfig::with_seed(seed)).unwrap();
            let obj: Vec<f64> = fit.trace.rows.iter().map(|r| r.objective.unwrap()).collect();
            for (i, w) in obj.windows(2).enumerate() {
                if w[1] < w[0] - 1e-6 * w[0].abs() {
                    violations.push(format!("seed {seed} eps {eps} sweep {}: {} -> {}", i + 2, w[0], w[1]));
                }
            }
            runs += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = violations.is_empty() && elapsed < Duration::from_secs(120);
    report(
        1,
        "objective monotonicity",
        pass,
        &format!("{runs} runs, {} violations, {:.1}s (< 120s)", violations.len(), elapsed.as_secs_f64()),
    );
}

#[test]
fn c02_topic_count_recovery() {
    let _g = lock();
    let mut ks = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in SEEDS {
        let s = desk(seed);
        let start = Instant::now();
        let fit = train_parameter_free(&s.corpus, &AutoConfig::with_seed(seed)).unwrap();
        slowest = slowest.max(start.elapsed());
        ks.push(fit.topics.n_topics());
    }
    let hits = ks.iter().filter(|&&k| (8..=12).contains(&k)).count();
    let pass = hits >= 4 && slowest < Duration::from_secs(180);
    report(
        2,
        "topic-count recovery",
        pass,
        &format!("K per seed {ks:?}, {hits}/5 in [8, 12], slowest {:.2}s (< 180s)", slowest.as_secs_f64()),
    );
}

/// Growth traces long enough to see well past the diversity peak.
fn extended_growth(seed: u64) -> (SyntheticCorpus, AutoFit) {
    let s = desk(seed);
    let config = AutoConfig {
        patience: 100,
        max_k: Some(2 * TRUE_K + 2),
        refine: false,
        ..AutoConfig::with_seed(seed)
    };
    let fit = train_parameter_free(&s.corpus, &config).unwrap();
    (s, fit)
}

#[test]
fn c03_diversity_curve_shape() {
    let _g = lock();
    let mut good = 0;
    let mut details = Vec::new();
    for seed in SEEDS {
        let (_, fit) = extended_growth(seed);
        let curve: Vec<(usize, f64)> = fit
            .trace
            .phase(Phase::Grow)
            .map(|r| (r.k, r.diversity.unwrap()))
            .collect();
        let (peak_k, peak) = curve
            .iter()
            .copied()
            .fold((0, f64::NEG_INFINITY), |b, (k, d)| if d > b.1 { (k, d) } else { b });
        let tail_below = curve
            .iter()
            .filter(|(k, _)| *k >= TRUE_K + 4)
            .all(|&(_, d)| d < peak);
        let reaches_tail = curve.iter().any(|(k, _)| *k >= TRUE_K + 4);
        let ok = peak_k.abs_diff(TRUE_K) <= 2 && tail_below && reaches_tail;
        good += ok as usize;
        details.push(format!("seed {seed}: peak K={peak_k} ({peak:.3}){}", if ok { "" } else { " x" }));
    }
    let pass = good >= 4;
    report(3, "diversity curve shape", pass, &format!("{good}/5 ok; {}", details.join(", ")));
}

#[test]
fn c04_quality_parity() {
    let _g = lock();
    let grid = [100.0, 150.0, 200.0, 250.0, 300.0, 400.0];
    let mut nplsa_tqe = Vec::new();
    let mut plsa_tqe = Vec::new();
    let mut chosen = Vec::new();
    for seed in SEEDS {
        let s = desk(seed);
        // closest K to K*; ties resolved toward the larger epsilon
        let mut best: Option<(usize, f64, f64)> = None;
        for eps in grid {
            let fit = train_nplsa(&s.corpus, eps, &NplsaConfig::with_seed(seed)).unwrap();
            let k = fit.state.n_topics();
            let tqe = topic_quality_error(&fit.state.topics, &s.truth.topics).unwrap();
            if best.is_none_or(|(bk, _, _)| k.abs_diff(TRUE_K) <= bk.abs_diff(TRUE_K)) {
                best = Some((k, eps, tqe));
            }
        }
        let (k, eps, tqe) = best.unwrap();
        chosen.push(format!("eps {eps}->K {k}"));
        nplsa_tqe.push(tqe);
        let plsa = train_plsa(&s.corpus, TRUE_K, &EmConfig::with_seed(seed)).unwrap();
        plsa_tqe.push(topic_quality_error(&plsa.topics, &s.truth.topics).unwrap());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (n, p) = (mean(&nplsa_tqe), mean(&plsa_tqe));
    let pass = n <= 1.25 * p;
    report(
        4,
        "quality parity",
        pass,
        &format!("mean TQE nPLSA {n:.4} vs PLSA {p:.4} (ratio {:.3} <= 1.25); {}", n / p, chosen.join(", ")),
    );
}

#[test]
fn c05_epsilon_monotonicity() {
    let _g = lock();
    let grid = [100.0, 150.0, 200.0, 300.0, 400.0, 800.0];
    let s = desk(0);
    let mut violations = 0;
    let mut rows = Vec::new();
    for seed in SEEDS {
        let ks: Vec<usize> = grid
            .iter()
            .map(|&eps| train_nplsa(&s.corpus, eps, &NplsaConfig::with_seed(seed)).unwrap().state.n_topics())
            .collect();
        violations += ks.windows(2).filter(|w| w[1] > w[0]).count();
        rows.push(format!("seed {seed}: {ks:?}"));
    }
    let pass = violations == 0;
    report(5, "epsilon monotonicity", pass, &format!("{violations} violations; {}", rows.join("; ")));
}

#[test]
fn c06_order_insensitivity() {
    let _g = lock();
    let start = Instant::now();
    let s = desk(0);
    let ks: Vec<usize> = (0..10u64)
        .map(|shuffle| {
            let config = NplsaConfig {
                shuffle: Some(shuffle),
                ..NplsaConfig::with_seed(0)
            };
            train_nplsa(&s.corpus, 200.0, &config).unwrap().state.n_topics()
        })
        .collect();
    let range = ks.iter().max().unwrap() - ks.iter().min().unwrap();
    let elapsed = start.elapsed();
    let pass = range <= 3 && elapsed < Duration::from_secs(300);
    report(
        6,
        "order insensitivity",
        pass,
        &format!("K over 10 shuffles {ks:?}, range {range} (<= 3), {:.1}s (< 300s)", elapsed.as_secs_f64()),
    );
}

#[test]
fn c07_delta_stabilization() {
    let _g = lock();
    let (_, fit) = extended_growth(0);
    // each growth row carries the mean Δ against the topics before its spawn
    let series: Vec<(usize, f64)> = fit
        .trace
        .phase(Phase::Grow)
        .filter_map(|r| r.mean_delta.map(|d| (r.k - 1, d)))
        .collect();
    let decreasing = series.windows(2).all(|w| w[1].1 < w[0].1);
    let changes: Vec<(usize, f64)> = series
        .windows(2)
        .filter(|w| w[0].0 >= TRUE_K)
        .map(|w| (w[0].0, (w[1].1 - w[0].1).abs() / w[0].1))
        .collect();
    let stable = changes.iter().all(|&(_, c)| c < 0.05);
    let pass = decreasing && stable && !changes.is_empty();
    let shown: Vec<String> = changes.iter().map(|(k, c)| format!("{k}->{}: {:.1}%", k + 1, 100.0 * c)).collect();
    report(
        7,
        "delta stabilization",
        pass,
        &format!("decreasing={decreasing}; relative change per topic for K >= K*: {}", shown.join(", ")),
    );
}

mod oracle {
    /// Dense L2 written independently of the library.
    pub fn dist(a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += (a[i] - b[i]).powi(2);
        }
        s.sqrt()
    }

    pub fn nearest_mean(from: &[Vec<f64>], to: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for a in from {
            let mut best = f64::MAX;
            for b in to {
                best = best.min(dist(a, b));
            }
            total += best;
        }
        total / from.len() as f64
    }

    /// Maximizes Σ c_w log(λ q_w + (1 − λ) b_w) over the 4-simplex by grid
    /// search at step 0.01, refined twice by 10x finer local grids.
    pub fn feedback_grid(counts: &[f64; 4], bg: &[f64; 4], lambda: f64) -> [f64; 4] {
        let f = |q: &[f64; 4]| -> f64 {
            (0..4)
                .filter(|&w| counts[w] > 0.0)
                .map(|w| counts[w] * (lambda * q[w] + (1.0 - lambda) * bg[w]).ln())
                .sum()
        };
        let mut best = [0.25; 4];
        let mut best_val = f(&best);
        let mut center = [0.0f64; 3];
        let mut radius = 1.0f64;
        for step in [0.01, 0.001, 0.0001] {
            let span = (radius / step).round() as i64;
            let lo: Vec<f64> = center.iter().map(|&c| if radius >= 1.0 { 0.0 } else { c - radius }).collect();
            let n = if radius >= 1.0 { (1.0 / step).round() as i64 } else { 2 * span };
            for i in 0..=n {
                let a = lo[0] + i as f64 * step;
                if !(-1e-12..=1.0 + 1e-12).contains(&a) {
                    continue;
                }
                for j in 0..=n {
                    let b = lo[1] + j as f64 * step;
                    if b < -1e-12 || a + b > 1.0 + 1e-12 {
                        continue;
                    }
                    for k in 0..=n {
                        let c = lo[2] + k as f64 * step;
                        let d = 1.0 - a - b - c;
                        if c < -1e-12 || d < -1e-12 {
                            continue;
                        }
                        let q = [a.max(0.0), b.max(0.0), c.max(0.0), d.max(0.0)];
                        let v = f(&q);
                        if v > best_val {
                            best_val = v;
                            best = q;
                        }
                    }
                }
            }
            center = [best[0], best[1], best[2]];
            radius = step;
        }
        best
    }
}

#[test]
fn c08_oracle_equivalence() {
    let _g = lock();
    let start = Instant::now();
    let mut failures = Vec::new();
    let s = generate_corpus(&SynthConfig {
        n_docs: 25,
        doc_len: 30,
        n_topics: 3,
        vocab_size: 40,
        ..SynthConfig::desk(21)
    })
    .unwrap();
    let corpus = &s.corpus;
    let v = corpus.n_terms();
    let mut rng = nplsa_core::rng::stream(99, 0);
    let topics = TopicSet::random(&mut rng, 4, v);
    let mixes = DocTopicMix::new((0..corpus.n_docs()).map(|_| nplsa_core::rng::dirichlet(&mut rng, 1.0, 4)).collect());

    // E-step against direct evaluation of the posterior formula
    for d in 0..corpus.n_docs() {
        let post = e_step_doc(corpus, d, &topics, mixes.get(d)).unwrap();
        for (i, (w, _)) in corpus.doc(d).iter().enumerate() {
            let joint: Vec<f64> = (0..4).map(|z| mixes.get(d)[z] * topics.row(z)[w as usize]).collect();
            let mut norm = 0.0;
            for j in &joint {
                norm += j;
            }
            for z in 0..4 {
                if post.word(i)[z] != joint[z] / norm {
                    failures.push(format!("e-step d{d} w{w} z{z}"));
                }
            }
        }
    }

    // log-likelihood against a dense double loop
    let mut dense = vec![vec![0u32; v]; corpus.n_docs()];
    for (d, row) in dense.iter_mut().enumerate() {
        for (w, n) in corpus.doc(d).iter() {
            row[w as usize] = n;
        }
    }
    let mut oracle_ll = 0.0;
    for d in 0..corpus.n_docs() {
        for w in 0..v {
            if dense[d][w] > 0 {
                let mut p = 0.0;
                for z in 0..4 {
                    p += mixes.get(d)[z] * topics.row(z)[w];
                }
                oracle_ll += dense[d][w] as f64 * p.ln();
            }
        }
    }
    let ll = log_likelihood(corpus, &topics, &mixes).unwrap();
    if (ll - oracle_ll).abs() > 1e-10 {
        failures.push(format!("loglik {ll} vs {oracle_ll}"));
    }

    // TQE / TCE against brute-force pair scans
    let learned = TopicSet::random(&mut rng, 2, v);
    let truth_rows = s.truth.topics.to_rows();
    let tqe = topic_quality_error(&learned, &s.truth.topics).unwrap();
    let tce = topic_coverage_error(&learned, &s.truth.topics).unwrap();
    let tqe_o = oracle::nearest_mean(&learned.to_rows(), &truth_rows);
    let tce_o = oracle::nearest_mean(&truth_rows, &learned.to_rows());
    if (tqe - tqe_o).abs() > 1e-12 || (tce - tce_o).abs() > 1e-12 {
        failures.push(format!("tqe {tqe}/{tqe_o} tce {tce}/{tce_o}"));
    }

    // uniform single-topic perplexity on desk held-out data
    let held_out = desk(77).corpus;
    let ppl = perplexity(&held_out, &TopicSet::uniform(1, 500), 0.8, &EmConfig::with_seed(5)).unwrap();
    if (ppl - 500.0).abs() > 1e-6 {
        failures.push(format!("uniform perplexity {ppl}"));
    }

    // query-model EM against a simplex grid search, V = 4
    let qc = ingest_sparse(vec![
        ("f1", "q", 2), ("f1", "a", 3), ("f1", "b", 1), ("f1", "c", 1),
        ("f2", "q", 1), ("f2", "b", 4), ("f2", "c", 2),
        ("o1", "a", 6), ("o1", "c", 3),
        ("o2", "b", 2), ("o2", "c", 5),
    ])
    .unwrap();
    let qm = estimate_query_model(&qc, &["q"], 0.5, 5000).unwrap();
    let bg = background_model(&qc);
    let idx = |t: &str| qc.vocab().id(t).unwrap() as usize;
    let mut counts = [0.0; 4];
    for (t, n) in [("q", 3.0), ("a", 3.0), ("b", 5.0), ("c", 3.0)] {
        counts[idx(t)] = n;
    }
    let bgv = [bg.probs()[0], bg.probs()[1], bg.probs()[2], bg.probs()[3]];
    let grid = oracle::feedback_grid(&counts, &bgv, 0.5);
    let gap = oracle::dist(qm.theta.probs(), &grid);
    if gap > 1e-3 {
        failures.push(format!("query model {:?} vs grid {grid:?} ({gap})", qm.theta.probs()));
    }
    let em_val = feedback_log_likelihood(&counts, qm.theta.probs(), &bgv, 0.5);
    let grid_val = feedback_log_likelihood(&counts, &grid, &bgv, 0.5);
    if em_val < grid_val - 1e-9 {
        failures.push(format!("grid beats EM: {grid_val} > {em_val}"));
    }

    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(30);
    report(
        8,
        "oracle equivalence",
        pass,
        &format!(
            "{} failures; loglik gap {:.2e}, perplexity {ppl}, query L2 gap {gap:.2e}, {:.1}s (< 30s)",
            failures.len(),
            (ll - oracle_ll).abs(),
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn c09_weak_supervision() {
    let _g = lock();
    let target = 3;
    let mut good = 0;
    let mut details = Vec::new();
    for seed in SEEDS {
        let s = desk(seed);
        let top = s.truth.topics.top_words(target, 1)[0];
        let word = s.corpus.vocab().term(top).unwrap().to_string();
        let (fit, qm) = train_weakly_supervised(&s.corpus, &[word.as_str()], &AutoConfig::with_seed(seed)).unwrap();
        let (dist, closest) = query_distance(qm.theta.probs(), &fit.snapshot);
        let gap = l2(fit.snapshot.row(closest), s.truth.topics.row(target));
        let ok = gap <= 0.3 && (dist - fit.best_score).abs() < 1e-12;
        good += ok as usize;
        details.push(format!("seed {seed}: K={} L2 to truth {gap:.3}", fit.best_k));
    }
    let pass = good >= 4;
    report(9, "weak supervision", pass, &format!("{good}/5 within 0.3; {}", details.join(", ")));
}

#[test]
fn c10_scaling() {
    let _g = lock();
    let cfg = SynthConfig {
        n_docs: 500,
        n_topics: 20,
        vocab_size: 1000,
        ..SynthConfig::desk(10)
    };
    let s = generate_corpus(&cfg).unwrap();
    let em = EmConfig::with_seed(10);
    let auto = AutoConfig {
        em,
        patience: 100,
        max_k: Some(20),
        ..AutoConfig::default()
    };
    let fit = train_parameter_free(&s.corpus, &auto).unwrap();
    let auto_ms = fit.trace.total_wall_ms();
    let mut enum_ms = 0.0;
    for k in 1..=20 {
        enum_ms += train_plsa(&s.corpus, k, &em).unwrap().trace.total_wall_ms();
    }
    let pass = auto_ms < 0.5 * enum_ms;
    report(
        10,
        "scaling",
        pass,
        &format!(
            "parameter-free to K=20 (selected {}): {auto_ms:.0} ms vs PLSA K=1..20: {enum_ms:.0} ms (ratio {:.2} < 0.5)",
            fit.best_k,
            auto_ms / enum_ms
        ),
    );
}
