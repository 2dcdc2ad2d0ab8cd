//! Training loops for the listening and speaking models, the staged
//! speaking-model schedule, checkpointing, and free-running evaluation.

pub mod runcfg;

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{AuPose, ConversationSample, NormStats, Split, FRAME_DIM};
use crate::losses::{self, LossConfig};
use crate::numerics::checkpoint;
use crate::numerics::rng::substream;
use crate::numerics::{ParamStore, RealArray, Tape, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use crate::seqmodels::{
    DecodeMode, EmbeddingTable, ListeningModel, ListeningModelConfig, SpeakingModel,
    SpeakingModelConfig,
};

pub const GRAD_CLIP_NORM: f64 = 5.0;
pub const STATS_BLOCK: &str = "stats";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Listening,
    Speaking,
    Synth,
}

impl Phase {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "listening" => Ok(Phase::Listening),
            "speaking" => Ok(Phase::Speaking),
            "synth" => Ok(Phase::Synth),
            other => Err(Error::InvalidConfig(format!("unknown phase {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Listening => "listening",
            Phase::Speaking => "speaking",
            Phase::Synth => "synth",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub phase: Phase,
    pub lr: f64,
    pub batch: usize,
    pub iters: usize,
    pub seed: u64,
    pub eval_interval: usize,
    pub window_stride: usize,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            phase: Phase::Listening,
            lr: 0.0001,
            batch: 16,
            iters: 80_000,
            seed: 0,
            eval_interval: 100,
            window_stride: 1,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch < 1 {
            return Err(Error::InvalidConfig("batch must be >= 1".into()));
        }
        if self.iters < 1 {
            return Err(Error::InvalidConfig("iters must be >= 1".into()));
        }
        if self.eval_interval < 1 {
            return Err(Error::InvalidConfig("eval_interval must be >= 1".into()));
        }
        if self.window_stride < 1 {
            return Err(Error::InvalidConfig("stride must be >= 1".into()));
        }
        self.loss.validate()
    }
}

/// One loss-history row, recorded at eval intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub total: f64,
    pub mse: f64,
    pub con: f64,
}

pub fn history_to_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from("iter,total,mse,con\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.iter, r.total, r.mse, r.con));
    }
    out
}

/// Normalized training pair: input window and target window.
struct WindowPair {
    input: Vec<[f64; FRAME_DIM]>,
    target: Vec<[f64; FRAME_DIM]>,
}

fn split_samples(data: &[ConversationSample], split: Split) -> Vec<&ConversationSample> {
    data.iter().filter(|s| s.split == split).collect()
}

fn to_frames(stats: &NormStats, frames: &[AuPose]) -> Vec<[f64; FRAME_DIM]> {
    frames.iter().map(|f| stats.normalize(f).to_vec20()).collect()
}

/// Aligned (speaker window -> listener window) pairs from the given samples.
fn listening_pairs(
    samples: &[&ConversationSample],
    stats: &NormStats,
    n: usize,
    stride: usize,
) -> Vec<WindowPair> {
    let mut pairs = Vec::new();
    for s in samples {
        let spk = s.speaker_track.windows(n, stride);
        let lis = s.listener_track.windows(n, stride);
        for (a, b) in spk.iter().zip(&lis) {
            pairs.push(WindowPair {
                input: to_frames(stats, a),
                target: to_frames(stats, b),
            });
        }
    }
    pairs
}

/// (transcript -> first decoder_len speaker frames) pairs.
fn speaking_pairs<'a>(
    samples: &[&'a ConversationSample],
    stats: &NormStats,
    decoder_len: usize,
) -> Result<Vec<(&'a [String], Vec<[f64; FRAME_DIM]>)>> {
    let mut pairs = Vec::new();
    for s in samples {
        if s.speaker_track.len() < decoder_len {
            return Err(Error::Data(format!(
                "speaker track too short for decoder length {decoder_len}: {}",
                s.speaker_track.len()
            )));
        }
        let target = to_frames(stats, &s.speaker_track.frames()[..decoder_len]);
        pairs.push((s.transcript.as_slice(), target));
    }
    Ok(pairs)
}

/// Stores NormStats as a [2, 20] block so checkpoints carry them.
pub fn register_stats(store: &mut ParamStore, stats: &NormStats) -> Result<()> {
    let mut values = stats.min.to_vec();
    values.extend_from_slice(&stats.max);
    store.register(STATS_BLOCK, RealArray::new(vec![2, FRAME_DIM], values)?)
}

pub fn stats_from_store(store: &ParamStore) -> Result<NormStats> {
    let block = store.values(STATS_BLOCK)?;
    if block.shape() != [2, FRAME_DIM] {
        return Err(Error::Checkpoint(format!(
            "stats block has shape {:?}",
            block.shape()
        )));
    }
    let mut min = [0.0; FRAME_DIM];
    let mut max = [0.0; FRAME_DIM];
    min.copy_from_slice(&block.values()[..FRAME_DIM]);
    max.copy_from_slice(&block.values()[FRAME_DIM..]);
    NormStats::new(min, max)
}

pub struct TrainedListening {
    pub store: ParamStore,
    pub stats: NormStats,
    pub history: Vec<HistoryRow>,
}

/// Trains the listening model: teacher-forced forward over sampled window
/// pairs, combined loss, clipped Adam steps. Deterministic given the seed.
pub fn train_listening(
    data: &[ConversationSample],
    model_cfg: &ListeningModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainedListening> {
    cfg.validate()?;
    let train = split_samples(data, Split::Train);
    if train.is_empty() {
        return Err(Error::Data("no training samples".into()));
    }
    let stats = NormStats::from_sequences(
        train
            .iter()
            .flat_map(|s| [&s.speaker_track, &s.listener_track]),
    )?;
    let pairs = listening_pairs(&train, &stats, model_cfg.n, cfg.window_stride);
    if pairs.is_empty() {
        return Err(Error::Data(format!(
            "no windows of length {} available",
            model_cfg.n
        )));
    }

    let model = ListeningModel::new(model_cfg.clone())?;
    let mut store = ParamStore::new();
    let mut init_rng = substream(cfg.seed, "listen.init");
    model.register(&mut store, &mut init_rng)?;
    register_stats(&mut store, &stats)?;

    let names: Vec<String> = model.block_names();
    let mut batch_rng = substream(cfg.seed, "listen.batch");
    let mut history = Vec::new();
    for iter in 0..cfg.iters {
        store.zero_grads();
        let mut tape = Tape::new();
        let mut batch_losses = Vec::with_capacity(cfg.batch);
        let mut batch_mse = Vec::with_capacity(cfg.batch);
        let mut batch_con = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let pair = &pairs[batch_rng.gen_range(0..pairs.len())];
            let enc = model.encode(&mut tape, &store, &pair.input)?;
            let start = pair.input[pair.input.len() - 1];
            let pred = model.decode(
                &mut tape,
                &store,
                &enc,
                &start,
                DecodeMode::TeacherForced { gt: &pair.target },
                model_cfg.n,
            )?;
            let gt_nodes: Vec<_> = pair
                .target
                .iter()
                .map(|f| tape.input_vector(f.to_vec()))
                .collect::<Result<_>>()?;
            let mse = losses::mse_loss_node(&mut tape, &gt_nodes, &pred, &cfg.loss)?;
            let con = losses::continuity_loss_node(&mut tape, &gt_nodes, &pred, &cfg.loss)?;
            let con_w = tape.affine(con, cfg.loss.alpha, 0.0)?;
            let total = tape.add(mse, con_w)?;
            batch_losses.push(total);
            batch_mse.push(mse);
            batch_con.push(con);
        }
        let loss = tape.mean_of_scalars(&batch_losses)?;
        tape.backward(loss, &mut store)?;
        store.clip_grads(names.iter().map(|s| s.as_str()), GRAD_CLIP_NORM)?;
        store.adam_step_subset(
            names.iter().map(|s| s.as_str()),
            cfg.lr,
            ADAM_BETA1,
            ADAM_BETA2,
            ADAM_EPS,
        )?;
        if iter % cfg.eval_interval == 0 || iter + 1 == cfg.iters {
            let mean = |nodes: &[crate::numerics::NodeId]| -> f64 {
                nodes.iter().map(|&n| tape.value(n).values()[0]).sum::<f64>()
                    / nodes.len() as f64
            };
            history.push(HistoryRow {
                iter,
                total: tape.value(loss).values()[0],
                mse: mean(&batch_mse),
                con: mean(&batch_con),
            });
        }
    }
    Ok(TrainedListening {
        store,
        stats,
        history,
    })
}

/// Data selector for one stage of the speaking schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubsetSelector {
    Full,
    /// Seeded fraction of the training samples (at least one).
    Fraction(f64),
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub name: &'static str,
    pub trainable: BTreeSet<String>,
    pub frozen: BTreeSet<String>,
    pub iters: usize,
    pub subset: SubsetSelector,
}

/// The three-stage speaking recipe: pretrain everything on a small subset,
/// freeze the encoder and train the decoder on the full set, then fine-tune
/// everything. Budgets default to 10%/60%/30% of the configured iterations.
#[derive(Debug, Clone)]
pub struct StageSchedule {
    pub stages: Vec<Stage>,
}

impl StageSchedule {
    pub fn default_for(model: &SpeakingModel, total_iters: usize) -> Self {
        let all: BTreeSet<String> = model.block_names().into_iter().collect();
        let encoder: BTreeSet<String> = model.encoder_block_names().into_iter().collect();
        let decoder: BTreeSet<String> = model.decoder_block_names().into_iter().collect();
        let s1 = (total_iters / 10).max(1);
        let s2 = (total_iters * 6 / 10).max(1);
        let s3 = total_iters.saturating_sub(s1 + s2).max(1);
        StageSchedule {
            stages: vec![
                Stage {
                    name: "pretrain",
                    trainable: all.clone(),
                    frozen: BTreeSet::new(),
                    iters: s1,
                    subset: SubsetSelector::Fraction(0.1),
                },
                Stage {
                    name: "freeze-encoder",
                    trainable: decoder,
                    frozen: encoder,
                    iters: s2,
                    subset: SubsetSelector::Full,
                },
                Stage {
                    name: "finetune",
                    trainable: all,
                    frozen: BTreeSet::new(),
                    iters: s3,
                    subset: SubsetSelector::Full,
                },
            ],
        }
    }

    /// Every model block must appear in exactly one of trainable/frozen per
    /// stage, and the sets must be disjoint.
    pub fn validate(&self, model: &SpeakingModel) -> Result<()> {
        if self.stages.len() != 3 {
            return Err(Error::InvalidConfig(format!(
                "speaking schedule needs 3 stages, got {}",
                self.stages.len()
            )));
        }
        let all: BTreeSet<String> = model.block_names().into_iter().collect();
        for stage in &self.stages {
            if !stage.trainable.is_disjoint(&stage.frozen) {
                return Err(Error::InvalidConfig(format!(
                    "stage {}: trainable and frozen overlap",
                    stage.name
                )));
            }
            let union: BTreeSet<String> =
                stage.trainable.union(&stage.frozen).cloned().collect();
            if union != all {
                return Err(Error::InvalidConfig(format!(
                    "stage {}: trainable+frozen must cover every block exactly once",
                    stage.name
                )));
            }
            if stage.iters == 0 {
                return Err(Error::InvalidConfig(format!(
                    "stage {}: zero iterations",
                    stage.name
                )));
            }
        }
        Ok(())
    }
}

pub struct TrainedSpeaking {
    pub store: ParamStore,
    pub stats: NormStats,
    pub table: EmbeddingTable,
    pub history: Vec<HistoryRow>,
}

/// Trains the speaking model through the stage schedule. Frozen blocks
/// receive no updates (their Adam state is never touched).
pub fn train_speaking(
    data: &[ConversationSample],
    model_cfg: &SpeakingModelConfig,
    cfg: &TrainConfig,
    schedule: &StageSchedule,
) -> Result<TrainedSpeaking> {
    cfg.validate()?;
    let train = split_samples(data, Split::Train);
    if train.is_empty() {
        return Err(Error::Data("no training samples".into()));
    }
    let stats = NormStats::from_sequences(train.iter().map(|s| &s.speaker_track))?;
    let model = SpeakingModel::new(model_cfg.clone())?;
    schedule.validate(&model)?;

    let table = EmbeddingTable::build(
        train
            .iter()
            .flat_map(|s| s.transcript.iter().cloned()),
        model_cfg.embedding_dim,
    );
    let mut store = ParamStore::new();
    table.register(&mut store, cfg.seed)?;
    let mut init_rng = substream(cfg.seed, "speak.init");
    model.register(&mut store, &mut init_rng)?;
    register_stats(&mut store, &stats)?;

    let pairs = speaking_pairs(&train, &stats, model_cfg.decoder_len)?;
    let mut batch_rng = substream(cfg.seed, "speak.batch");
    let mut subset_rng = substream(cfg.seed, "speak.subset");
    let mut history = Vec::new();
    let mut iter_global = 0usize;

    for stage in &schedule.stages {
        let stage_pairs: Vec<usize> = match stage.subset {
            SubsetSelector::Full => (0..pairs.len()).collect(),
            SubsetSelector::Fraction(f) => {
                let count = ((pairs.len() as f64 * f).round() as usize).max(1);
                let mut idx: Vec<usize> = (0..pairs.len()).collect();
                // seeded partial shuffle
                for i in 0..count.min(idx.len()) {
                    let j = subset_rng.gen_range(i..idx.len());
                    idx.swap(i, j);
                }
                idx.truncate(count);
                idx
            }
        };
        let trainable: Vec<&str> = stage.trainable.iter().map(|s| s.as_str()).collect();
        for _ in 0..stage.iters {
            store.zero_grads();
            let mut tape = Tape::new();
            let mut batch_losses = Vec::with_capacity(cfg.batch);
            let mut batch_mse = Vec::with_capacity(cfg.batch);
            let mut batch_con = Vec::with_capacity(cfg.batch);
            for _ in 0..cfg.batch {
                let &pair_idx = &stage_pairs[batch_rng.gen_range(0..stage_pairs.len())];
                let (tokens, target) = &pairs[pair_idx];
                let embedded = model.embed_tokens(&mut tape, &store, &table, tokens)?;
                let states = model.encode_text(&mut tape, &store, &embedded)?;
                let pred = model.decode(
                    &mut tape,
                    &store,
                    &states,
                    DecodeMode::TeacherForced { gt: target },
                    model_cfg.decoder_len,
                )?;
                let gt_nodes: Vec<_> = target
                    .iter()
                    .map(|f| tape.input_vector(f.to_vec()))
                    .collect::<Result<_>>()?;
                let mse = losses::mse_loss_node(&mut tape, &gt_nodes, &pred, &cfg.loss)?;
                let con = losses::continuity_loss_node(&mut tape, &gt_nodes, &pred, &cfg.loss)?;
                let con_w = tape.affine(con, cfg.loss.alpha, 0.0)?;
                let total = tape.add(mse, con_w)?;
                batch_losses.push(total);
                batch_mse.push(mse);
                batch_con.push(con);
            }
            let loss = tape.mean_of_scalars(&batch_losses)?;
            tape.backward(loss, &mut store)?;
            // frozen blocks keep their accumulated grads out of the update
            store.clip_grads(trainable.iter().copied(), GRAD_CLIP_NORM)?;
            store.adam_step_subset(
                trainable.iter().copied(),
                cfg.lr,
                ADAM_BETA1,
                ADAM_BETA2,
                ADAM_EPS,
            )?;
            if iter_global % cfg.eval_interval == 0 {
                let mean = |nodes: &[crate::numerics::NodeId]| -> f64 {
                    nodes.iter().map(|&n| tape.value(n).values()[0]).sum::<f64>()
                        / nodes.len() as f64
                };
                history.push(HistoryRow {
                    iter: iter_global,
                    total: tape.value(loss).values()[0],
                    mse: mean(&batch_mse),
                    con: mean(&batch_con),
                });
            }
            iter_global += 1;
        }
    }
    Ok(TrainedSpeaking {
        store,
        stats,
        table,
        history,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct EvalReport {
    pub d_mse: f64,
    pub d_cos: f64,
    /// Mean continuity loss of free-running predictions against ground
    /// truth, as a smoothness diagnostic.
    pub continuity: f64,
}

/// Free-running listening evaluation over every window pair of the given
/// samples.
pub fn evaluate_listening(
    model: &ListeningModel,
    store: &ParamStore,
    stats: &NormStats,
    samples: &[&ConversationSample],
    loss_cfg: &LossConfig,
    stride: usize,
) -> Result<EvalReport> {
    let pairs = listening_pairs(samples, stats, model.cfg.n, stride);
    if pairs.is_empty() {
        return Err(Error::Data("no evaluation windows".into()));
    }
    let mut gt_set = Vec::with_capacity(pairs.len());
    let mut pred_set = Vec::with_capacity(pairs.len());
    let mut con_acc = 0.0;
    for pair in &pairs {
        let pred = model.predict(store, &pair.input)?;
        con_acc += losses::continuity_loss(&pair.target, &pred, loss_cfg)?;
        gt_set.push(pair.target.clone());
        pred_set.push(pred);
    }
    let (d_mse, d_cos) = losses::eval_mse_cosine(&gt_set, &pred_set)?;
    Ok(EvalReport {
        d_mse,
        d_cos,
        continuity: con_acc / pairs.len() as f64,
    })
}

/// Free-running speaking evaluation: transcript in, first decoder_len
/// speaker frames as ground truth.
pub fn evaluate_speaking(
    model: &SpeakingModel,
    store: &ParamStore,
    table: &EmbeddingTable,
    stats: &NormStats,
    samples: &[&ConversationSample],
    loss_cfg: &LossConfig,
) -> Result<EvalReport> {
    let pairs = speaking_pairs(samples, stats, model.cfg.decoder_len)?;
    if pairs.is_empty() {
        return Err(Error::Data("no evaluation samples".into()));
    }
    let mut gt_set = Vec::with_capacity(pairs.len());
    let mut pred_set = Vec::with_capacity(pairs.len());
    let mut con_acc = 0.0;
    for (tokens, target) in &pairs {
        let pred = model.predict(store, table, tokens)?;
        con_acc += losses::continuity_loss(target, &pred, loss_cfg)?;
        gt_set.push(target.clone());
        pred_set.push(pred);
    }
    let (d_mse, d_cos) = losses::eval_mse_cosine(&gt_set, &pred_set)?;
    Ok(EvalReport {
        d_mse,
        d_cos,
        continuity: con_acc / pairs.len() as f64,
    })
}

/// Saves a trained store (parameters plus the stats block) to disk.
pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    checkpoint::save(store, path)
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    if !path.exists() {
        return Err(Error::Checkpoint(format!(
            "checkpoint not found: {}",
            path.display()
        )));
    }
    checkpoint::load_store(path)
}
