use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anchorlab::aligner::{
    evaluate_alignment, prepare_sequences, train, write_training_log, AlignerModel, AnchorSequence, EncoderConfig,
    TrainConfig,
};
use anchorlab::bench::{decode_samples, rank_reconstructions};
use anchorlab::corpus::{load_dataset, split, AnnotatedSentence, Corpus, Part, Split, SplitSpec, EEG_FEATURE_DIM};
use anchorlab::embedding::EmbeddingBank;
use anchorlab::eval::{
    permutation_test, run_condition_suite, score_records, EvalReport, IdfWordEmbedder, RemoteEmbedder,
    SentenceBankEmbedder, SentenceEmbedder, SuiteInputs,
};
use anchorlab::info_scale::scale_table;
use anchorlab::reconstruct::{
    load_records, save_records, Backend, ChatClient, EndpointConfig, Job, Mode, Reconstructor, RetrievalIndex,
    Template, ENV_KEY, ENV_URL,
};
use anchorlab::synth::{generate, snr_report};
use anchorlab::vocab::{build_vocabulary, parse_root_map, ExclusionRules, KeywordVocabulary, VocabParams};
use anchorlab::{Error, Result};

use crate::config::RunConfig;
use crate::{Cli, Command};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn require<'a>(value: &'a Option<PathBuf>, what: &str, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("no {what} given (use {flag} or set it in the config)")))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *slot = value;
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let out = cli.out.clone();
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    let mut cfg = RunConfig::resolve(cli.config.as_deref(), &out)?;
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.profile, cli.profile.map(Into::into));

    let step = match cli.command {
        Command::BuildVocab(a) => {
            set_path(&mut cfg.paths.dataset, a.dataset);
            set_path(&mut cfg.paths.word_bank, a.word_bank);
            set_path(&mut cfg.paths.exclusions, a.exclusions);
            set_path(&mut cfg.paths.root_map, a.root_map);
            set(&mut cfg.vocab.size, a.size);
            set(&mut cfg.vocab.min_freq, a.min_freq);
            set(&mut cfg.vocab.reserve_fraction, a.reserve_fraction);
            build_vocab(&mut cfg, &out)?;
            "build-vocab"
        }
        Command::SynthGen(a) => {
            if let Some(s) = a.snr {
                cfg.synth.snr_db = parse_db(&s)?;
            }
            set(&mut cfg.synth.vocab_size, a.vocab_size);
            set(&mut cfg.synth.sentences, a.sentences);
            set(&mut cfg.synth.subjects, a.subjects);
            set(&mut cfg.synth.feature_dim, a.feature_dim);
            set(&mut cfg.synth.bank_dim, a.bank_dim);
            set(&mut cfg.synth.filler_rate, a.filler_rate);
            cfg.synth.seed = cfg.seed;
            synth_gen(&mut cfg, &out)?;
            "synth-gen"
        }
        Command::Train(a) => {
            set_path(&mut cfg.paths.dataset, a.dataset);
            set_path(&mut cfg.paths.vocab, a.vocab);
            set_path(&mut cfg.paths.keyword_bank, a.keyword_bank);
            if a.epochs.is_some() {
                cfg.train.epochs = a.epochs;
            }
            if a.lr.is_some() {
                cfg.train.learning_rate = a.lr;
            }
            if a.feature_dim.is_some() {
                cfg.train.feature_dim = a.feature_dim;
            }
            set(&mut cfg.train.batch_size, a.batch_size);
            set(&mut cfg.train.tau, a.tau);
            set(&mut cfg.train.aux_weight, a.aux_weight);
            cfg.train.learn_tau |= a.learn_tau;
            train_cmd(&mut cfg, &out)?;
            "train"
        }
        Command::Decode(a) => {
            set_path(&mut cfg.paths.checkpoint, a.checkpoint);
            set_path(&mut cfg.paths.dataset, a.dataset);
            set(&mut cfg.decode.m, a.m);
            set(&mut cfg.decode.part, a.part);
            decode_cmd(&mut cfg, &out)?;
            "decode"
        }
        Command::Reconstruct(a) => {
            set_path(&mut cfg.paths.decoded, a.decoded);
            set_path(&mut cfg.paths.dataset, a.dataset);
            set_path(&mut cfg.paths.templates, a.templates);
            set(&mut cfg.reconstruct.mode, a.mode.map(Into::into));
            set(&mut cfg.reconstruct.k, a.k);
            set(&mut cfg.endpoint.concurrency, a.concurrency);
            reconstruct_cmd(&mut cfg, &out, a.remote)?;
            "reconstruct"
        }
        Command::Evaluate(a) => {
            set_path(&mut cfg.paths.dataset, a.dataset);
            set_path(&mut cfg.paths.checkpoint, a.checkpoint);
            set_path(&mut cfg.paths.decoded, a.decoded);
            set_path(&mut cfg.paths.word_bank, a.word_bank);
            set(&mut cfg.eval.embedder, a.embedder);
            match a.records {
                Some(records) => score_cmd(&cfg, &out, &records)?,
                None => evaluate_cmd(&mut cfg, &out, a.remote, cli.emit_plot_data)?,
            }
            "evaluate"
        }
        Command::Entropy(a) => {
            entropy_cmd(&a, &out, cli.emit_plot_data)?;
            "entropy"
        }
        Command::Permute(a) => {
            set_path(&mut cfg.paths.records, a.records);
            set_path(&mut cfg.paths.dataset, a.dataset);
            set(&mut cfg.eval.perm_k, a.k);
            set(&mut cfg.eval.n_perm, a.n_perm);
            set(&mut cfg.eval.embedder, a.embedder);
            permute_cmd(&cfg, &out)?;
            "permute"
        }
        Command::Report(a) => {
            set_path(&mut cfg.paths.report, a.report);
            report_cmd(&cfg, &out)?;
            "report"
        }
    };
    cfg.freeze(&out, step)
}

fn parse_db(s: &str) -> Result<f64> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        other => other
            .parse()
            .map_err(|_| Error::Config(format!("cannot parse SNR {s:?}; use a number, inf or -inf"))),
    }
}

/// Feature length of the first sample in a dataset file, if any.
fn peek_feature_dim(path: &Path) -> Result<Option<usize>> {
    let file = File::open(path).map_err(io_err(path))?;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if !line.contains("\"segments\"") {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)?;
        if let Some(f) = v.pointer("/segments/0/features").and_then(|f| f.as_array()) {
            return Ok(Some(f.len()));
        }
    }
    Ok(None)
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let path = require(&cfg.paths.dataset, "dataset", "--dataset")?;
    let dim = match cfg.train.feature_dim {
        Some(d) => d,
        None => peek_feature_dim(path)?.unwrap_or(EEG_FEATURE_DIM),
    };
    let (corpus, report) = load_dataset(path, dim)?;
    log::info!("loaded {} sentences, {} samples from {}", report.sentences, report.samples, path.display());
    Ok(corpus)
}

fn rules(cfg: &RunConfig) -> Result<ExclusionRules> {
    match &cfg.paths.exclusions {
        Some(dir) => ExclusionRules::from_dir(dir),
        None => Ok(ExclusionRules::default()),
    }
}

fn build_vocab(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let bank = EmbeddingBank::load(require(&cfg.paths.word_bank, "word bank", "--word-bank")?)?;
    let root_map = match &cfg.paths.root_map {
        Some(p) => parse_root_map(&fs::read_to_string(p).map_err(io_err(p))?)?,
        None => BTreeMap::new(),
    };
    let params = VocabParams {
        size: cfg.vocab.size,
        min_freq: cfg.vocab.min_freq,
        reserve_fraction: cfg.vocab.reserve_fraction,
        seed: cfg.seed,
        root_map,
        ..VocabParams::default()
    };
    let vocab = build_vocabulary(corpus.sentences(), &bank, &rules(cfg)?, &params)?;
    let (txt, audit) = (out.join("vocab.txt"), out.join("vocab.audit.json"));
    vocab.save(&txt, &audit)?;
    println!(
        "vocabulary: {} keywords ({} core, {} refinement, {} pruned, overflow {}) -> {}",
        vocab.len(),
        vocab.meta.core,
        vocab.meta.refinement,
        vocab.meta.pruned.len(),
        vocab.meta.overflow,
        txt.display()
    );
    cfg.paths.vocab = Some(txt);
    Ok(())
}

fn synth_gen(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let data = generate(&cfg.synth)?;
    let dataset = out.join("synth.jsonl");
    data.corpus.save(&dataset)?;
    cfg.synth.save(&out.join("synth.spec.json"))?;
    let vocab = out.join("synth.vocab.txt");
    data.vocab.save(&vocab, out.join("synth.vocab.audit.json"))?;
    let bank = out.join("synth.keywords.embk");
    data.bank.save(&bank)?;
    // retrieval over synthetic text should ignore only the filler words
    let excl = out.join("synth.exclusions");
    fs::create_dir_all(&excl).map_err(io_err(&excl))?;
    let stop = excl.join("stopwords.txt");
    let words: Vec<&str> = anchorlab::synth::FILLER_SURFACES.to_vec();
    fs::write(&stop, words.join("\n") + "\n").map_err(io_err(&stop))?;

    let snr = snr_report(&data);
    println!(
        "synthetic: {} sentences, {} samples, V={}, requested {} dB, measured {:.2} dB -> {}",
        data.corpus.sentences().len(),
        data.corpus.samples().len(),
        data.vocab.len(),
        cfg.synth.snr_db,
        snr.measured_db,
        dataset.display()
    );
    cfg.paths.dataset = Some(dataset);
    cfg.paths.vocab = Some(vocab);
    cfg.paths.keyword_bank = Some(bank.clone());
    cfg.paths.word_bank = Some(bank);
    cfg.paths.exclusions = Some(excl);
    cfg.train.feature_dim = Some(cfg.synth.feature_dim);
    Ok(())
}

fn split_spec(cfg: &RunConfig) -> SplitSpec {
    SplitSpec {
        ratios: cfg.train.split_ratios,
        seed: cfg.seed,
        ..SplitSpec::default()
    }
}

fn train_cmd(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let vocab = KeywordVocabulary::load(require(&cfg.paths.vocab, "vocabulary", "--vocab")?)?;
    let bank = EmbeddingBank::load(require(&cfg.paths.keyword_bank, "keyword bank", "--keyword-bank")?)?;
    let sp = split(&corpus, &split_spec(cfg))?;
    let split_path = out.join("split.json");
    fs::write(&split_path, serde_json::to_string_pretty(&sp)? + "\n").map_err(io_err(&split_path))?;

    let prep = |p| prepare_sequences(&corpus, &sp.samples(&corpus, p), &vocab);
    let (tr, va, te) = (prep(Part::Train)?, prep(Part::Val)?, prep(Part::Test)?);
    let enc = EncoderConfig::for_profile(cfg.profile, corpus.feature_dim(), bank.dim());
    let tc = TrainConfig {
        learning_rate: cfg.learning_rate(),
        epochs: cfg.epochs(),
        batch_size: cfg.train.batch_size,
        weight_decay: cfg.train.weight_decay,
        tau_init: cfg.train.tau,
        learn_tau: cfg.train.learn_tau,
        aux_weight: cfg.train.aux_weight,
        aux_noise: cfg.train.aux_noise,
        seed: cfg.seed,
        ..TrainConfig::default()
    };
    let model = AlignerModel::new(enc, &vocab, &bank, tc.tau_init, cfg.seed)?;
    let outcome = train(model, &tr, &va, &tc)?;
    let log_path = out.join("training_log.csv");
    write_training_log(&outcome.history, File::create(&log_path).map_err(io_err(&log_path))?)
        .map_err(io_err(&log_path))?;
    let ckpt = out.join("model.bclm");
    outcome.model.save(&ckpt)?;
    let test = if te.iter().any(|s| s.supervised() > 0) {
        Some(evaluate_alignment(&outcome.model, &te)?)
    } else {
        None
    };
    let metrics = out.join("train_metrics.json");
    let summary = serde_json::json!({"best_epoch": outcome.best_epoch, "test": test});
    fs::write(&metrics, serde_json::to_string_pretty(&summary)? + "\n").map_err(io_err(&metrics))?;
    match test {
        Some(t) => println!(
            "trained {} epochs (best {}): test top1 {:.4} top5 {:.4} over {} positions -> {}",
            tc.epochs,
            outcome.best_epoch,
            t.top1,
            t.top5,
            t.n,
            ckpt.display()
        ),
        None => println!("trained {} epochs (best {}) -> {}", tc.epochs, outcome.best_epoch, ckpt.display()),
    }
    cfg.paths.checkpoint = Some(ckpt);
    cfg.paths.split = Some(split_path);
    Ok(())
}

fn load_split(cfg: &RunConfig, corpus: &Corpus) -> Result<Split> {
    match &cfg.paths.split {
        Some(p) => Ok(serde_json::from_str(&fs::read_to_string(p).map_err(io_err(p))?)?),
        None => split(corpus, &split_spec(cfg)),
    }
}

fn selected_samples<'a>(cfg: &RunConfig, corpus: &'a Corpus) -> Result<Vec<&'a anchorlab::corpus::EegWordSequence>> {
    let part = match cfg.decode.part.as_str() {
        "all" => return Ok(corpus.samples().iter().collect()),
        "train" => Part::Train,
        "val" => Part::Val,
        "test" => Part::Test,
        other => return Err(Error::Config(format!("unknown part {other:?}; use train, val, test or all"))),
    };
    Ok(load_split(cfg, corpus)?.samples(corpus, part))
}

fn decode_with(cfg: &RunConfig, corpus: &Corpus, m: usize) -> Result<Vec<AnchorSequence>> {
    let model = AlignerModel::load(require(&cfg.paths.checkpoint, "checkpoint", "--checkpoint")?)?;
    decode_samples(&model, &selected_samples(cfg, corpus)?, m)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_decoded(path: &Path) -> Result<Vec<AnchorSequence>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Line {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn decode_cmd(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let decoded = decode_with(cfg, &corpus, cfg.decode.m)?;
    let path = out.join(format!("decoded_m{}.jsonl", cfg.decode.m));
    write_jsonl(&path, &decoded)?;
    let anchors: usize = decoded.iter().map(|d| d.len()).sum();
    println!("decoded {} samples, {anchors} anchors -> {}", decoded.len(), path.display());
    cfg.paths.decoded = Some(path);
    Ok(())
}

fn templates(cfg: &RunConfig) -> Result<BTreeMap<Mode, Template>> {
    Mode::ALL
        .iter()
        .map(|&m| Ok((m, Template::load(cfg.paths.templates.as_deref(), m)?)))
        .collect()
}

fn chat_client(cfg: &RunConfig) -> Result<ChatClient> {
    ChatClient::from_env(EndpointConfig {
        url: String::new(),
        model: cfg.endpoint.model.clone(),
        retries: cfg.endpoint.retries,
        backoff_ms: cfg.endpoint.backoff_ms,
        timeout_s: cfg.endpoint.timeout_s,
        concurrency: cfg.endpoint.concurrency,
    })
}

fn reconstruct_cmd(cfg: &mut RunConfig, out: &Path, remote: bool) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let decoded = read_decoded(require(&cfg.paths.decoded, "decoded anchors", "--decoded")?)?;
    let stop = rules(cfg)?.stopwords;
    let client = if remote { Some(chat_client(cfg)?) } else { None };
    let backend = match &client {
        Some(c) => Backend::Remote(c),
        None => Backend::Fallback,
    };
    let templates = templates(cfg)?;
    let by_id = corpus.sentence_map();
    let mode = cfg.reconstruct.mode;

    // group by task pool, then restore input order
    let mut records = vec![None; decoded.len()];
    let mut tasks: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    let mut skipped = 0;
    for (i, d) in decoded.iter().enumerate() {
        if d.is_empty() {
            skipped += 1;
            continue;
        }
        let s = by_id
            .get(d.sentence_id.as_str())
            .ok_or_else(|| Error::Validation(format!("decoded sample refers to unknown sentence {}", d.sentence_id)))?;
        tasks.entry(s.task).or_default().push(i);
    }
    for (task, members) in tasks {
        let pool = corpus.task_pool(task);
        let index = RetrievalIndex::build(&pool, &stop)?;
        let mut rec = Reconstructor::new(&index);
        rec.templates = templates.clone();
        rec.params = cfg.generation;
        rec.k = cfg.reconstruct.k;
        let jobs: Vec<Job> = members
            .iter()
            .map(|&i| Job {
                sentence_id: decoded[i].sentence_id.clone(),
                subject_id: Some(decoded[i].subject_id.clone()),
                anchors: decoded[i].lemmas(),
            })
            .collect();
        let done = rec.reconstruct_all(&jobs, mode, &backend, cfg.endpoint.concurrency)?;
        for (&i, r) in members.iter().zip(done) {
            records[i] = Some(r);
        }
    }
    let records: Vec<_> = records.into_iter().flatten().collect();
    if skipped > 0 {
        log::warn!("{skipped} samples had no decoded anchors and were skipped");
    }
    let path = out.join(format!("records_{mode}.jsonl"));
    save_records(&records, &path)?;
    println!(
        "reconstructed {} samples ({mode}, {}) -> {}",
        records.len(),
        if remote { "remote" } else { "fallback" },
        path.display()
    );
    cfg.paths.records = Some(path);
    Ok(())
}

/// The configured sentence embedder plus the word bank used for greedy F1.
fn embedder(cfg: &RunConfig, sentences: &[AnnotatedSentence]) -> Result<(Box<dyn SentenceEmbedder>, Option<EmbeddingBank>)> {
    let word_bank = match cfg.paths.word_bank.as_ref().or(cfg.paths.keyword_bank.as_ref()) {
        Some(p) => Some(EmbeddingBank::load(p)?),
        None => None,
    };
    let e: Box<dyn SentenceEmbedder> = match cfg.eval.embedder.as_str() {
        "idf" => {
            let bank = word_bank
                .clone()
                .ok_or_else(|| Error::Config("the idf embedder needs a word bank (--word-bank)".into()))?;
            let texts: Vec<&str> = sentences.iter().map(|s| s.text.as_str()).collect();
            Box::new(IdfWordEmbedder::new(bank, &texts))
        }
        "sentence-bank" => {
            let p = require(&cfg.paths.sentence_bank, "sentence bank", "paths.sentence_bank")?;
            Box::new(SentenceBankEmbedder { bank: EmbeddingBank::load(p)? })
        }
        "remote" => {
            let chat = std::env::var(ENV_URL).map_err(|_| Error::Config(format!("{ENV_URL} is not set")))?;
            let url = match chat.strip_suffix("/chat/completions") {
                Some(base) => format!("{base}/embeddings"),
                None => chat,
            };
            let key = std::env::var(ENV_KEY).ok().filter(|k| !k.is_empty());
            Box::new(RemoteEmbedder::new(url, cfg.endpoint.embedding_model.clone(), key))
        }
        other => return Err(Error::Config(format!("unknown embedder {other:?}; use idf, sentence-bank or remote"))),
    };
    Ok((e, word_bank))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(io_err(path))
}

fn score_cmd(cfg: &RunConfig, out: &Path, records: &Path) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let recs = load_records(records)?;
    let (emb, bank) = embedder(cfg, corpus.sentences())?;
    let scores = score_records(&recs, corpus.sentences(), emb.as_ref(), &cfg.eval.ks, bank.as_ref())?;
    let path = out.join("record_scores.json");
    write_json(&path, &scores)?;
    let topk: Vec<String> = scores.topk.iter().map(|(k, v)| format!("top{k} {v:.4}")).collect();
    println!("scored {} records: {} -> {}", scores.n, topk.join(", "), path.display());
    Ok(())
}

fn evaluate_cmd(cfg: &mut RunConfig, out: &Path, remote: bool, plot: bool) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let vocab = match (&cfg.paths.vocab, &cfg.paths.checkpoint) {
        (Some(p), _) => KeywordVocabulary::load(p)?,
        (None, Some(c)) => KeywordVocabulary::from_lemmas(AlignerModel::load(c)?.vocab())?,
        (None, None) => return Err(Error::Config("no vocabulary given (use --vocab or a checkpoint)".into())),
    };
    let mut decoded: BTreeMap<usize, Vec<AnchorSequence>> = BTreeMap::new();
    if cfg.paths.checkpoint.is_some() {
        for &m in &cfg.eval.ms {
            decoded.insert(m, decode_with(cfg, &corpus, m)?);
        }
    } else {
        let seqs = read_decoded(require(&cfg.paths.decoded, "decoded anchors or checkpoint", "--decoded")?)?;
        let m = seqs.first().map(|s| s.m_requested).unwrap_or(cfg.decode.m);
        decoded.insert(m, seqs);
    }
    let client = if remote { Some(chat_client(cfg)?) } else { None };
    let backend = match &client {
        Some(c) => Backend::Remote(c),
        None => Backend::Fallback,
    };
    let (emb, bank) = embedder(cfg, corpus.sentences())?;
    let stop = rules(cfg)?.stopwords;
    let inputs = SuiteInputs {
        sentences: corpus.sentences(),
        vocab: &vocab,
        decoded: &decoded,
        conditions: &cfg.eval.conditions,
        modes: &cfg.eval.modes,
        ks: &cfg.eval.ks,
        stopwords: &stop,
        templates: templates(cfg)?,
        params: cfg.generation,
        retrieval_k: cfg.reconstruct.k,
        seed: cfg.seed,
        embedder_name: cfg.eval.embedder.clone(),
    };
    let report = run_condition_suite(&inputs, &backend, emb.as_ref(), bank.as_ref())?;
    let json = out.join("report.json");
    write_json(&json, &report)?;
    let csv = out.join("report.csv");
    fs::write(&csv, report.to_csv()).map_err(io_err(&csv))?;
    if plot {
        let (by_k, by_m) = report.plot_data();
        for (name, body) in [("plot_topk_by_k.csv", by_k), ("plot_top5_by_m.csv", by_m)] {
            let p = out.join(name);
            fs::write(&p, body).map_err(io_err(&p))?;
        }
    }
    if !report.gaps.is_empty() {
        log::warn!("report has {} gaps: {:?}", report.gaps.len(), report.gaps);
    }
    print!("{}", summary_table(&report));
    println!("-> {}", json.display());
    cfg.paths.report = Some(json);
    Ok(())
}

fn summary_table(r: &EvalReport) -> String {
    let mut s = String::from("| condition | mode | m | n | anchor hit | top5 | bleu1 | rouge1 |\n|---|---|---|---|---|---|---|---|\n");
    for row in r.rows.iter().filter(|r| r.subject.is_none()) {
        let top5 = row.topk.get(&5).map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        s += &format!(
            "| {} | {} | {} | {} | {:.3} | {} | {:.3} | {:.3} |\n",
            row.condition.as_str(),
            row.mode,
            row.m,
            row.n,
            row.anchor_hit,
            top5,
            row.bleu[0],
            row.rouge1_f1
        );
    }
    for rec in &r.recovery {
        if let Some(ratio) = rec.recovery_ratio {
            s += &format!("recovery ({}, m={}): {:.1}% of oracle\n", rec.mode, rec.m, 100.0 * ratio);
        }
    }
    for t in &r.statistics {
        s += &format!("{}: statistic {:.4}, p {:.4}\n", t.test, t.statistic, t.p);
    }
    for g in &r.gaps {
        s += &format!("gap: {g}\n");
    }
    s
}

fn entropy_cmd(a: &crate::EntropyArgs, out: &Path, plot: bool) -> Result<()> {
    if a.vocab_sizes.contains(&0) {
        return Err(Error::Validation("vocabulary sizes must be positive".into()));
    }
    let table = scale_table(&a.vocab_sizes, &a.m, a.length, a.distinct);
    println!("{:>6} {:>3} {:>10}{}", "V", "m", "bits", if a.distinct { "   distinct" } else { "" });
    for r in &table.rows {
        let d = r.anchor_bits_distinct.map(|d| format!(" {d:>10.2}")).unwrap_or_default();
        println!("{:>6} {:>3} {:>10.2}{d}", r.vocab_size, r.m, r.anchor_bits);
    }
    for (v, bits) in &table.sentence_bits {
        println!("sentence bound L={} V={v}: {bits:.2} bits", table.sentence_length);
    }
    let csv = out.join("entropy.csv");
    fs::write(&csv, table.to_csv()).map_err(io_err(&csv))?;
    if plot {
        write_json(&out.join("entropy.json"), &table)?;
    }
    Ok(())
}

fn permute_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let records = load_records(require(&cfg.paths.records, "records", "--records")?)?;
    let (emb, _) = embedder(cfg, corpus.sentences())?;
    let by_id: HashMap<&str, &AnnotatedSentence> = corpus.sentence_map();
    let task = match records.first().and_then(|r| by_id.get(r.sentence_id.as_str())) {
        Some(s) => s.task,
        None => return Err(Error::Validation("records are empty or refer to unknown sentences".into())),
    };
    if records.iter().any(|r| by_id.get(r.sentence_id.as_str()).map(|s| s.task) != Some(task)) {
        return Err(Error::Validation("permutation needs records from a single task pool".into()));
    }
    let pool = corpus.task_pool(task);
    let (table, targets) = rank_reconstructions(&records, &pool, emb.as_ref())?;
    let result = permutation_test(&table, &targets, cfg.eval.perm_k, cfg.eval.n_perm, cfg.seed)?;
    let path = out.join("permutation.json");
    write_json(&path, &result)?;
    println!(
        "top{} observed {:.4}, null mean {:.4}, p = {:.4} ({} permutations, n = {}) -> {}",
        result.k,
        result.observed,
        result.null.iter().sum::<f64>() / result.null.len() as f64,
        result.p,
        result.n_perm,
        result.n,
        path.display()
    );
    Ok(())
}

fn report_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let path = require(&cfg.paths.report, "report", "--report")?;
    let report: EvalReport = serde_json::from_str(&fs::read_to_string(path).map_err(io_err(path))?)?;
    let table = summary_table(&report);
    print!("{table}");
    let md = out.join("report.md");
    fs::write(&md, table).map_err(io_err(&md))
}
