use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::PipelineConfig;
use super::manifest::Artifacts;
use super::planted::{planted_corpus, PlantedLayout};
use super::PipelineError;
use crate::agents::{behavior_table, run_broadcast_with, BehaviorRow, BroadcastOptions, FeedbackLedger};
use crate::classifier::{
    ablation_table, metrics_table, train_classifier, Ablation, EpochLog, Example, GraphContext, MetricsReport, Model, TrainOutcome, TrainingData,
    ABLATION_ROWS, METRICS_COLUMNS,
};
use crate::corpus::{corpus_stats, load_corpus, load_splits, merge_augmented, split_dataset, Corpus};
use crate::emotion::Split;
use crate::encoding::{build_role_matrix, encode_author_attributes, encode_reader_comments, shipped_roles, UserInputs};
use crate::gateway::{
    encode_text, with_cache, ChatBackend, Decoding, EncoderBackend, HttpChat, HttpChatConfig, HttpEncoder, HttpEncoderConfig, MockChat, MockChatConfig,
    MockEncoder, RetryPolicy,
};
use crate::graph::{build_overlapping_network, collect_reader_features, ViewId};
use crate::matrix_io::{encode_matrices, read_matrices};

pub struct Backends {
    pub chat: Box<dyn ChatBackend>,
    pub encoder: Box<dyn EncoderBackend>,
    pub mock: bool,
}

pub fn make_backends(cfg: &PipelineConfig) -> Result<Backends, PipelineError> {
    let (chat, encoder): (Box<dyn ChatBackend>, Box<dyn EncoderBackend>) = match cfg.backend.as_str() {
        "mock" => (
            Box::new(MockChat::new(MockChatConfig {
                label_fidelity: cfg.mock_fidelity,
                ..Default::default()
            })),
            Box::new(MockEncoder::new(cfg.d1, cfg.seq_len, cfg.named_seed("encoder"))),
        ),
        _ => (
            Box::new(HttpChat::new(HttpChatConfig {
                name: cfg.chat_model.clone(),
                endpoint: cfg.chat_endpoint.clone(),
                model: cfg.chat_model.clone(),
                api_key_env: cfg.api_key_env.clone(),
                max_prompt_length: 4096,
                decoding: Decoding::default(),
                timeout_s: 60.0,
                retry: RetryPolicy::default(),
            })?),
            Box::new(HttpEncoder::new(HttpEncoderConfig {
                name: cfg.encoder_model.clone(),
                endpoint: cfg.encoder_endpoint.clone(),
                model: cfg.encoder_model.clone(),
                api_key_env: cfg.api_key_env.clone(),
                dim: cfg.d1,
                max_len: cfg.seq_len,
                timeout_s: 60.0,
                retry: RetryPolicy::default(),
            })?),
        ),
    };
    let (chat, encoder) = match &cfg.cache_dir {
        Some(dir) => (
            Box::new(with_cache(chat, &dir.join("chat"))?) as Box<dyn ChatBackend>,
            Box::new(with_cache(encoder, &dir.join("encoder"))?) as Box<dyn EncoderBackend>,
        ),
        None => (chat, encoder),
    };
    Ok(Backends {
        chat,
        encoder,
        mock: cfg.backend == "mock",
    })
}

pub fn load_run_corpus(cfg: &PipelineConfig) -> Result<Corpus, PipelineError> {
    let corpus = if cfg.planted {
        planted_corpus(&PlantedLayout {
            users: cfg.planted_users,
            per_class: cfg.planted_per_class,
            seed: cfg.named_seed("corpus"),
            ..Default::default()
        })
    } else {
        let (posts, users) = cfg.posts.as_deref().zip(cfg.users.as_deref()).ok_or_else(|| PipelineError::Usage("posts and users paths required".into()))?;
        load_corpus(posts, users, cfg.follows.as_deref())?
    };
    let mut corpus = match &cfg.splits {
        Some(path) => {
            let mut c = corpus;
            load_splits(&mut c, path)?;
            c
        }
        None => {
            let [a, b, c] = cfg.split_ratios;
            split_dataset(corpus, (a, b, c), cfg.named_seed("split"))?
        }
    };
    if let Some(path) = &cfg.augmented {
        corpus = merge_augmented(corpus, path)?;
    }
    Ok(corpus)
}

fn artifacts(cfg: &PipelineConfig, stage: &str) -> Result<Artifacts, PipelineError> {
    let a = Artifacts {
        dir: cfg.out.clone(),
        stage: stage.into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
    };
    a.write("config.toml", cfg.to_toml().as_bytes(), &[])?;
    Ok(a)
}

fn require(path: &Path) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::Data(format!("missing artifact: {}", path.display())))
    }
}

fn load_ledger(cfg: &PipelineConfig) -> Result<(FeedbackLedger, PathBuf), PipelineError> {
    let path = cfg.out.join("ledger.jsonl");
    require(&path)?;
    Ok((FeedbackLedger::load(&path)?, path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub ledger_entries: usize,
    pub rows: Vec<BehaviorRow>,
    pub report: String,
}

fn simulate_k(cfg: &PipelineConfig, corpus: &Corpus, chat: &dyn ChatBackend, a: &Artifacts, k: usize, name: &str) -> Result<FeedbackLedger, PipelineError> {
    let path = a.path(name);
    let resume = if cfg.resume && path.exists() { FeedbackLedger::load(&path)? } else { FeedbackLedger::new() };
    std::fs::create_dir_all(&a.dir)?;
    let opts = BroadcastOptions {
        max_inflight: cfg.max_inflight,
        checkpoint: Some(path.clone()),
        ..BroadcastOptions::new(k, cfg.named_seed("sampling"))
    };
    let ledger = run_broadcast_with(corpus, chat, &opts, resume)?;
    ledger.save(&path)?;
    a.record(&path, &[], BTreeMap::from([("k".to_string(), json!(k))]))?;
    Ok(ledger)
}

fn agent_count(ledger: &FeedbackLedger) -> String {
    let readers: std::collections::BTreeSet<&str> = ledger.entries().map(|e| e.reader_id.as_str()).collect();
    readers.len().to_string()
}

/// Broadcasts every training post to its top-k readers, writes the ledger
/// and the behavior statistics (one row per k, the configured k first).
pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<SimulateSummary, PipelineError> {
    let backends = make_backends(cfg)?;
    let corpus = load_run_corpus(cfg)?;
    let a = artifacts(cfg, "simulate")?;
    a.write("stats.txt", corpus_stats(&corpus).to_table().as_bytes(), &[])?;
    let ledger = simulate_k(cfg, &corpus, backends.chat.as_ref(), &a, cfg.k, "ledger.jsonl")?;
    let mut rows = vec![BehaviorRow::from_ledger(&ledger, cfg.k, agent_count(&ledger))];
    for &k in &cfg.sweep_k {
        let l = simulate_k(cfg, &corpus, backends.chat.as_ref(), &a, k, &format!("ledger_k{k}.jsonl"))?;
        rows.push(BehaviorRow::from_ledger(&l, k, agent_count(&l)));
    }
    let report = behavior_table(&rows);
    let ledger_path = a.path("ledger.jsonl");
    a.write("behavior.txt", report.as_bytes(), &[&ledger_path])?;
    a.write("behavior.json", &serde_json::to_vec_pretty(&rows).expect("rows serialize"), &[&ledger_path])?;
    Ok(SimulateSummary {
        ledger_entries: ledger.len(),
        rows,
        report,
    })
}

/// Encodes users, comments, roles and labeled posts into model inputs.
pub fn assemble_training_data(cfg: &PipelineConfig, corpus: &Corpus, ledger: &FeedbackLedger, backends: &Backends) -> Result<TrainingData, PipelineError> {
    let encoder = backends.encoder.as_ref();
    let network = build_overlapping_network(corpus, ledger)?;
    let user_ids = network.nodes.clone();
    let mut h_at = Array2::zeros((user_ids.len(), encoder.dim()));
    for (i, uid) in user_ids.iter().enumerate() {
        h_at.row_mut(i).assign(&encode_author_attributes(&corpus.users[uid], encoder)?);
    }
    let mut by_reader = encode_reader_comments(ledger, encoder, cfg.k)?;
    let comments = user_ids.iter().map(|u| by_reader.remove(u).unwrap_or_default()).collect();
    let mut roles = shipped_roles();
    let chat = (!backends.mock).then_some(backends.chat.as_ref());
    let role_matrix = build_role_matrix(&mut roles, chat, encoder, cfg.named_seed("roles"))?;
    let index: BTreeMap<&str, usize> = user_ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let mut splits: BTreeMap<Split, Vec<Example>> = BTreeMap::new();
    for post in corpus.labeled_posts() {
        let (Some(split), Some(&author)) = (corpus.split_of(&post.post_id), index.get(post.author_id.as_str())) else {
            continue;
        };
        splits.entry(split).or_default().push(Example {
            post_id: post.post_id.clone(),
            author,
            content: encode_text(encoder, &post.text)?.values,
            gold: post.emotion_label.expect("labeled").index(),
        });
    }
    Ok(TrainingData {
        inputs: UserInputs {
            user_ids,
            h_at,
            comments,
            role_matrix,
        },
        network,
        train: splits.remove(&Split::Train).unwrap_or_default(),
        validate: splits.remove(&Split::Validate).unwrap_or_default(),
        test: splits.remove(&Split::Test).unwrap_or_default(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub users: usize,
    pub edges: [usize; 3],
    pub view_trained: [bool; 3],
}

fn prepare(cfg: &PipelineConfig) -> Result<(TrainingData, PathBuf), PipelineError> {
    let backends = make_backends(cfg)?;
    let corpus = load_run_corpus(cfg)?;
    let (ledger, path) = load_ledger(cfg)?;
    Ok((assemble_training_data(cfg, &corpus, &ledger, &backends)?, path))
}

fn build_graph(cfg: &PipelineConfig, data: &TrainingData, ablation: Ablation, rounds: usize) -> Result<GraphContext, PipelineError> {
    let base = Model::initial_embeddings(cfg.model_shape(), &data.inputs, ablation, cfg.named_seed("init"))?;
    Ok(GraphContext::build(&data.network, &base, &cfg.view_config(rounds))?)
}

fn load_graph(cfg: &PipelineConfig, data: &TrainingData) -> Result<(GraphContext, PathBuf), PipelineError> {
    let path = cfg.out.join("graph.rpmx");
    require(&path)?;
    let named = read_matrices(&path)?;
    let flags = named
        .iter()
        .find(|(n, _)| n == "view_trained")
        .map(|(_, m)| [m[[0, 0]] != 0.0, m[[0, 1]] != 0.0, m[[0, 2]] != 0.0])
        .ok_or_else(|| PipelineError::Data("graph.rpmx lacks view_trained".into()))?;
    Ok((GraphContext::from_named(&data.network, cfg.rounds, &named, flags)?, path))
}

/// Builds the overlapping network, trains each view and stores the
/// per-user reader-feedback matrices.
pub fn cmd_build_graph(cfg: &PipelineConfig) -> Result<GraphSummary, PipelineError> {
    let (data, ledger_path) = prepare(cfg)?;
    let a = artifacts(cfg, "build-graph")?;
    let net_path = a.write("network.txt", data.network.to_text().as_bytes(), &[&ledger_path])?;
    a.write("roles.rpmx", &encode_matrices(&[("roles".into(), data.inputs.role_matrix.clone())]), &[])?;
    let graph = build_graph(cfg, &data, cfg.ablation, cfg.rounds)?;
    let flags = graph.view_trained;
    let mut named = graph.to_named();
    named.push(("view_trained".into(), Array2::from_shape_fn((1, 3), |(_, j)| f64::from(u8::from(flags[j])))));
    let mut notes = BTreeMap::new();
    for v in ViewId::ALL {
        notes.insert(format!("view_{}", v.tag()), json!(if flags[v.index()] { "trained" } else { "pass-through" }));
    }
    if data.network.e_fw.is_empty() {
        notes.insert("mode".into(), json!("no follow relations; follow view passes embeddings through"));
    }
    let graph_path = a.write_with_notes("graph.rpmx", &encode_matrices(&named), &[&ledger_path, &net_path], notes)?;
    let features = collect_reader_features(&graph.trained)?;
    a.write("reader_features.rpmx", &encode_matrices(&[("h_rf".into(), features.values)]), &[&graph_path])?;
    Ok(GraphSummary {
        users: data.network.nodes.len(),
        edges: [data.network.e_fw.len(), data.network.e_rp.len(), data.network.e_rc.len()],
        view_trained: flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub outcome: TrainOutcome,
    pub validate: MetricsReport,
    pub test: MetricsReport,
}

fn epoch_table(logs: &[EpochLog]) -> String {
    let mut out = format!("{}\n", METRICS_COLUMNS.join(" | "));
    for l in logs {
        let mut cells = vec![format!("epoch {}", l.epoch)];
        cells.extend(l.val_per_class_f1.iter().map(|f| format!("{f:.3}")));
        cells.push(format!("{:.3}", l.val_macro_f1));
        cells.push(format!("{:.3}", l.val_accuracy));
        let _ = writeln!(out, "{}", cells.join(" | "));
    }
    out
}

fn jsonl_bytes<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for i in items {
        serde_json::to_writer(&mut out, i).expect("serializable");
        out.push(b'\n');
    }
    out
}

/// Trains the classifier end to end, keeping the best-on-validation
/// parameters, and reports validation and test metrics.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainSummary, PipelineError> {
    let (data, _) = prepare(cfg)?;
    let (graph, graph_path) = load_graph(cfg, &data)?;
    let a = artifacts(cfg, "train")?;
    let mut model = Model::with_graph(cfg.model_shape(), cfg.ablation, cfg.named_seed("init"), graph);
    let outcome = train_classifier(&mut model, &data, &cfg.train_config(Some(cfg.out.join("checkpoint"))))?;
    let validate = model.evaluate(&data.inputs, &data.validate)?;
    let test = model.evaluate(&data.inputs, &data.test)?;
    a.write("train_log.jsonl", &jsonl_bytes(&outcome.logs), &[&graph_path])?;
    a.write("train_metrics.txt", epoch_table(&outcome.logs).as_bytes(), &[&graph_path])?;
    let shape = cfg.model_shape();
    let notes = BTreeMap::from([
        ("d1".to_string(), json!(shape.d1)),
        ("d2".to_string(), json!(shape.d2)),
        ("n".to_string(), json!(shape.n)),
        ("l".to_string(), json!(shape.classes)),
        ("trainable_params".to_string(), json!(outcome.trainable_params)),
        ("freeze_upstream".to_string(), json!(cfg.freeze_upstream)),
        ("ablation".to_string(), json!(cfg.ablation)),
    ]);
    let model_path = a.write_with_notes("model.rpmx", &encode_matrices(&model.named_params()), &[&graph_path], notes)?;
    let table = metrics_table(&[("validate".into(), validate.clone()), ("test".into(), test.clone())]);
    a.write("metrics.txt", table.as_bytes(), &[&model_path])?;
    let record = json!({ "validate": validate, "test": test, "best_epoch": outcome.best_epoch });
    a.write("metrics.json", &serde_json::to_vec_pretty(&record).expect("json"), &[&model_path])?;
    Ok(TrainSummary { outcome, validate, test })
}

/// Scores the stored model on the test split.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<MetricsReport, PipelineError> {
    let (data, _) = prepare(cfg)?;
    let (graph, _) = load_graph(cfg, &data)?;
    let model_path = cfg.out.join("model.rpmx");
    require(&model_path)?;
    let mut model = Model::with_graph(cfg.model_shape(), cfg.ablation, cfg.named_seed("init"), graph);
    model.load_params(&read_matrices(&model_path)?)?;
    let report = model.evaluate(&data.inputs, &data.test)?;
    let a = artifacts(cfg, "evaluate")?;
    a.write("eval.txt", metrics_table(&[("test".into(), report.clone())]).as_bytes(), &[&model_path])?;
    a.write("eval.json", &serde_json::to_vec_pretty(&report).expect("json"), &[&model_path])?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub ablation: Ablation,
    pub label: String,
    pub outcome: TrainOutcome,
    pub validate: MetricsReport,
    pub test: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub rows: Vec<AblationRow>,
    /// `(rounds, validation, test)` per swept round count.
    pub rounds_sweep: Vec<(usize, MetricsReport, MetricsReport)>,
    pub table: String,
}

fn train_fresh(cfg: &PipelineConfig, data: &TrainingData, graph: GraphContext, ablation: Ablation) -> Result<(TrainOutcome, MetricsReport, MetricsReport), PipelineError> {
    let mut model = Model::with_graph(cfg.model_shape(), ablation, cfg.named_seed("init"), graph);
    let tc = crate::classifier::TrainConfig {
        resume: false,
        ..cfg.train_config(None)
    };
    let outcome = train_classifier(&mut model, data, &tc)?;
    let v = model.evaluate(&data.inputs, &data.validate)?;
    let t = model.evaluate(&data.inputs, &data.test)?;
    Ok((outcome, v, t))
}

/// One training run per ablation row on identical data, splits and seeds,
/// plus the optional sweep over propagation rounds.
pub fn cmd_ablate(cfg: &PipelineConfig) -> Result<AblationSummary, PipelineError> {
    let (data, _) = prepare(cfg)?;
    let (graph, graph_path) = load_graph(cfg, &data)?;
    let a = artifacts(cfg, "ablate")?;
    let mut rows = Vec::new();
    for ablation in ABLATION_ROWS {
        let g = if ablation == Ablation::NoRoleInit { build_graph(cfg, &data, ablation, cfg.rounds)? } else { graph.clone() };
        let (outcome, validate, test) = train_fresh(cfg, &data, g, ablation)?;
        log::info!("{}: validation macro-F1 {:.3}, test macro-F1 {:.3}", ablation.label(), validate.macro_f1, test.macro_f1);
        rows.push(AblationRow {
            ablation,
            label: ablation.label().into(),
            outcome,
            validate,
            test,
        });
    }
    let table = ablation_table(&rows.iter().map(|r| (r.ablation, r.test.clone())).collect::<Vec<_>>());
    a.write("ablation.txt", table.as_bytes(), &[&graph_path])?;
    let mut rounds_sweep = Vec::new();
    if !cfg.sweep_rounds.is_empty() {
        let mut text = String::from("K | Macro-F1 | Accuracy\n");
        for &k in &cfg.sweep_rounds {
            let g = build_graph(cfg, &data, Ablation::Full, k)?;
            let (_, v, t) = train_fresh(cfg, &data, g, Ablation::Full)?;
            let _ = writeln!(text, "{k} | {:.3} | {:.3}", t.macro_f1, t.accuracy);
            rounds_sweep.push((k, v, t));
        }
        a.write("rounds_sweep.txt", text.as_bytes(), &[&graph_path])?;
    }
    let summary = AblationSummary { rows, rounds_sweep, table };
    a.write("ablation.json", &serde_json::to_vec_pretty(&summary).expect("json"), &[&graph_path])?;
    Ok(summary)
}

fn run_dirs(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    if root.join("config.toml").exists() {
        out.push(root.to_path_buf());
    }
    if let Ok(entries) = std::fs::read_dir(root) {
        let mut subs: Vec<PathBuf> = entries.filter_map(Result::ok).map(|e| e.path()).filter(|p| p.join("config.toml").exists()).collect();
        subs.sort();
        out.extend(subs);
    }
    out
}

fn macro_of(metrics: &serde_json::Value, split: &str) -> String {
    metrics[split]["macro_f1"].as_f64().map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

/// One section per run found at `root` or directly below it, and a
/// comparison table when there are several.
pub fn cmd_report(root: &Path) -> Result<String, PipelineError> {
    let runs = run_dirs(root);
    let mut out = String::new();
    let mut compare = Vec::new();
    for dir in &runs {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| dir.display().to_string());
        let hash = super::manifest::read_manifest(&dir.join("config.toml")).map(|m| m.config_hash).unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "== run {name} ==\nconfig hash: {hash}\n");
        for file in ["stats.txt", "behavior.txt", "metrics.txt", "eval.txt", "ablation.txt", "rounds_sweep.txt"] {
            if let Ok(text) = std::fs::read_to_string(dir.join(file)) {
                let _ = writeln!(out, "-- {file} --\n{text}");
            }
        }
        let metrics: serde_json::Value = std::fs::read(dir.join("metrics.json")).ok().and_then(|b| serde_json::from_slice(&b).ok()).unwrap_or_default();
        let acc = metrics["test"]["accuracy"].as_f64().map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        compare.push(format!("{name} | {} | {} | {} | {acc}", &hash[..hash.len().min(12)], macro_of(&metrics, "validate"), macro_of(&metrics, "test")));
    }
    if runs.len() > 1 {
        let _ = writeln!(out, "== comparison ==\nRun | Config hash | Validation Macro-F1 | Test Macro-F1 | Test Accuracy");
        for row in compare {
            let _ = writeln!(out, "{row}");
        }
    }
    Ok(out)
}
