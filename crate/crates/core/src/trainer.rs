//! Margin ranking loss over sampled negatives and the full-batch RMSprop
//! training loop.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{rank_pairs, BaseSimilarity, Direction, MetricSpace, RankingReport, DEFAULT_K_CSLS};
use crate::model::{
    backward, forward_with_cache, ForwardCache, ForwardOptions, FinalRepresentations, Mode, ModelParams, ModelShape,
    TimeView,
};
use crate::numerics::{read_checkpoint, write_checkpoint, CheckpointHeader, DenseMatrix, Real, RmsProp};
use crate::tkg::{Dataset, EntityId, NeighborhoodIndex};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Embedding dimension `k`.
    pub dim: usize,
    pub layers: usize,
    pub lr: f64,
    pub margin: f64,
    pub dropout: f64,
    pub epochs: usize,
    /// Negatives per positive and direction; `None` derives it from the
    /// entity and seed counts.
    pub neg_per_pos: Option<usize>,
    /// Evaluate on the test pairs every this many epochs; 0 disables.
    pub eval_every: usize,
    pub seed: u64,
    pub mode: Mode,
    pub self_loops: bool,
    pub rho: f64,
    pub eps: f64,
    pub k_csls: usize,
    pub eval_space: MetricSpace,
    pub time_view: TimeView,
    /// Seed pairs per optimizer step; `None` is full batch.
    pub batch_size: Option<usize>,
    /// Stop after this many evaluations without an MRR improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            layers: 2,
            lr: 0.005,
            margin: 1.0,
            dropout: 0.3,
            epochs: 6000,
            neg_per_pos: None,
            eval_every: 0,
            seed: 0,
            mode: Mode::TimeAware,
            self_loops: true,
            rho: 0.9,
            eps: 1e-8,
            k_csls: DEFAULT_K_CSLS,
            eval_space: MetricSpace::Csls,
            time_view: TimeView::Multiset,
            batch_size: None,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad("margin must be a non-negative number");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.rho) || !(self.eps > 0.0) {
            return bad("rho must lie in [0, 1) and eps must be positive");
        }
        if self.neg_per_pos == Some(0) {
            return bad("neg_per_pos must be at least 1");
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be at least 1");
        }
        if self.k_csls == 0 {
            return bad("k_csls must be at least 1");
        }
        Ok(())
    }
}

/// `(|E1| + |E2|) // |S| + 1`.
pub fn default_neg_per_pos(n1: usize, n2: usize, seeds: usize) -> usize {
    (n1 + n2) / seeds.max(1) + 1
}

/// A positive pair with its corruptions in both directions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegativeGroup {
    pub positive: (EntityId, EntityId),
    /// Replacements for the target side, `(e_i, e′_j)`.
    pub target_negatives: Vec<EntityId>,
    /// Replacements for the source side, `(e′_i, e_j)`.
    pub source_negatives: Vec<EntityId>,
}

impl NegativeGroup {
    /// Moves target-side ids into the merged id space.
    pub fn merged(&self, offset: usize) -> Self {
        Self {
            positive: (self.positive.0, self.positive.1 + offset),
            target_negatives: self.target_negatives.iter().map(|&e| e + offset).collect(),
            source_negatives: self.source_negatives.clone(),
        }
    }
}

fn uniform_except<R: Rng + ?Sized>(n: usize, gold: usize, rng: &mut R) -> usize {
    let x = rng.gen_range(0..n - 1);
    if x >= gold {
        x + 1
    } else {
        x
    }
}

/// For every positive `(e_i, e_j)` draws `eta` targets uniformly from
/// `E2 ∖ {e_j}` and `eta` sources from `E1 ∖ {e_i}`. Ids are per graph.
pub fn sample_negatives<R: Rng + ?Sized>(
    pairs: &[(EntityId, EntityId)],
    n1: usize,
    n2: usize,
    eta: usize,
    rng: &mut R,
) -> Result<Vec<NegativeGroup>> {
    if eta == 0 {
        return Err(Error::Config("neg_per_pos must be at least 1".into()));
    }
    if n1 < 2 || n2 < 2 {
        return Err(Error::Config(format!("cannot corrupt seeds with {n1} and {n2} entities per graph")));
    }
    Ok(pairs
        .iter()
        .map(|&(a, b)| NegativeGroup {
            positive: (a, b),
            target_negatives: (0..eta).map(|_| uniform_except(n2, b, rng)).collect(),
            source_negatives: (0..eta).map(|_| uniform_except(n1, a, rng)).collect(),
        })
        .collect())
}

pub fn l1_distance<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + (a - b).abs()))
}

/// `Σ_p Σ_n ReLU(pos[p] + margin − negs[p][n])`.
pub fn margin_loss<T: Real>(positive: &[T], negatives: &[Vec<T>], margin: T) -> T {
    positive
        .iter()
        .zip(negatives)
        .flat_map(|(&p, ns)| ns.iter().map(move |&n| (p + margin - n).max(T::zero())))
        .fold(T::zero(), |a, b| a + b)
}

fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Adds `scale · ∂‖x_a − x_b‖₁` to rows `a` and `b` of `grad`.
fn push_l1_grad<T: Real>(reps: &DenseMatrix<T>, grad: &mut DenseMatrix<T>, a: usize, b: usize, scale: T) {
    for d in 0..reps.cols() {
        let s = scale * sign(reps.get(a, d) - reps.get(b, d));
        let ga = grad.get(a, d);
        grad.set(a, d, ga + s);
        let gb = grad.get(b, d);
        grad.set(b, d, gb - s);
    }
}

/// Margin loss over merged-id groups, adding `∂loss/∂reps` into `grad`.
pub fn loss_and_grad<T: Real>(reps: &DenseMatrix<T>, groups: &[NegativeGroup], margin: T, grad: &mut DenseMatrix<T>) -> Result<T> {
    let mut loss = T::zero();
    for g in groups {
        let (a, b) = g.positive;
        let pos = l1_distance(reps.row(a), reps.row(b))?;
        let mut active = 0usize;
        for &n in &g.target_negatives {
            let term = pos + margin - l1_distance(reps.row(a), reps.row(n))?;
            if term > T::zero() {
                loss += term;
                active += 1;
                push_l1_grad(reps, grad, a, n, -T::one());
            }
        }
        for &n in &g.source_negatives {
            let term = pos + margin - l1_distance(reps.row(n), reps.row(b))?;
            if term > T::zero() {
                loss += term;
                active += 1;
                push_l1_grad(reps, grad, n, b, -T::one());
            }
        }
        if active > 0 {
            push_l1_grad(reps, grad, a, b, T::of(active as f64));
        }
    }
    Ok(loss)
}

/// Forward pass, loss and backward pass. Gradients of `params` are
/// overwritten. Returns the loss and the forward cache.
pub fn objective<T: Real, R: Rng + ?Sized>(
    params: &mut ModelParams<T>,
    index: &NeighborhoodIndex,
    groups: &[NegativeGroup],
    margin: f64,
    options: &ForwardOptions,
    rng: &mut R,
) -> Result<(T, ForwardCache<T>)> {
    let cache = forward_with_cache(params, index, options, rng)?;
    let reps = cache.final_reps.matrix();
    let mut grad = DenseMatrix::zeros(reps.rows(), reps.cols());
    let loss = loss_and_grad(reps, groups, T::of(margin), &mut grad)?;
    let grads = backward(params, index, &cache, &grad, options.time_view)?;
    params.store_mut().zero_grads();
    grads.accumulate_into(params);
    Ok((loss, cache))
}

/// Replaces every timestamp by the unknown-time id.
pub fn apply_time_unaware(index: &NeighborhoodIndex) -> NeighborhoodIndex {
    index.time_unaware()
}

/// The index a model trains and evaluates on, and the number of time rows
/// it needs. The τ0 row is only kept when something refers to it: a fact
/// without a timestamp, a self-loop, the time-unaware ablation or an entity
/// whose timestamp view falls back to τ0. Without it, time ids shift down
/// by one.
pub fn model_index(dataset: &Dataset, mode: Mode, self_loops: bool) -> Result<(NeighborhoodIndex, usize)> {
    let mut index = dataset.neighborhoods(self_loops);
    if mode == Mode::TimeUnaware {
        index = apply_time_unaware(&index);
    }
    let rows = dataset.times.len();
    if rows > 1 && !index.uses_unknown_time() && !index.has_isolated() {
        Ok((index.without_unknown_slot()?, rows - 1))
    } else {
        Ok((index, rows))
    }
}

/// Dropout-free forward pass.
pub fn eval_representations<T: Real>(
    params: &ModelParams<T>,
    index: &NeighborhoodIndex,
    time_view: TimeView,
) -> Result<FinalRepresentations<T>> {
    let options = ForwardOptions {
        time_view,
        ..ForwardOptions::eval()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(forward_with_cache(params, index, &options, &mut rng)?.final_reps)
}

/// Loads a checkpoint written by [`Trainer::write_checkpoint`] together
/// with the index it was trained on. Fails when the checkpoint's table
/// sizes or precision do not fit `dataset`.
pub fn restore_model<T: Real>(dataset: &Dataset, path: &Path) -> Result<(CheckpointHeader, ModelParams<T>, NeighborhoodIndex)> {
    let (header, store) = read_checkpoint::<T>(path)?;
    if header.precision != T::NAME {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} values, requested {}",
            header.precision,
            T::NAME
        )));
    }
    let mode: Mode = header
        .mode
        .parse()
        .map_err(|_| Error::Checkpoint(format!("unknown mode `{}`", header.mode)))?;
    let (index, time_rows) = model_index(dataset, mode, header.self_loops)?;
    let shape = ModelShape::new(
        dataset.num_entities(),
        dataset.num_base_relations(),
        time_rows,
        header.dim,
        header.layers,
        header.self_loops,
    );
    let found = (header.entities, header.relations, header.times);
    let expected = (shape.entities, shape.relations, shape.times);
    if found != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint/dataset mismatch: checkpoint has (entities, relations, times) = {found:?}, dataset needs {expected:?}"
        )));
    }
    let params = ModelParams::from_store(shape, store)?;
    Ok((header, params, index))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub mrr: Option<f64>,
    pub hits1: Option<f64>,
    pub hits10: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub neg_per_pos: usize,
    pub stopped_early: bool,
}

pub const HISTORY_CSV_HEADER: &str = "epoch,loss,mrr,hits1,hits10,seconds";

impl TrainReport {
    /// History as CSV; wall-clock seconds are written as 0 when
    /// `with_timing` is false.
    pub fn history_csv(&self, with_timing: bool) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = format!("{HISTORY_CSV_HEADER}\n");
        for r in &self.history {
            let secs = if with_timing { r.seconds } else { 0.0 };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch,
                r.loss,
                opt(r.mrr),
                opt(r.hits1),
                opt(r.hits10),
                secs
            ));
        }
        out
    }

    pub fn losses(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.loss).collect()
    }
}

/// One training run. Parameters always hold the last finite state, so a
/// diverged run can still be checkpointed.
pub struct Trainer<T: Real> {
    config: TrainConfig,
    index: NeighborhoodIndex,
    params: ModelParams<T>,
    optimizer: RmsProp<T>,
    rng: ChaCha8Rng,
    train_pairs: Vec<(EntityId, EntityId)>,
    test_pairs: Vec<(EntityId, EntityId)>,
    n1: usize,
    n2: usize,
    neg_per_pos: usize,
    epoch: usize,
}

impl<T: Real> Trainer<T> {
    pub fn new(dataset: &Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if dataset.seeds.train.is_empty() {
            return Err(Error::Config("no training seed pairs".into()));
        }
        let (index, time_rows) = model_index(dataset, config.mode, config.self_loops)?;
        let shape = ModelShape::new(
            dataset.num_entities(),
            dataset.num_base_relations(),
            time_rows,
            config.dim,
            config.layers,
            config.self_loops,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = ModelParams::init(shape, &mut rng);
        params.check_index(&index)?;
        let optimizer = RmsProp::new(params.store(), config.lr, config.rho, config.eps);
        let (n1, n2) = (dataset.g1.num_entities(), dataset.g2.num_entities());
        let neg_per_pos = config
            .neg_per_pos
            .unwrap_or_else(|| default_neg_per_pos(n1, n2, dataset.seeds.train.len()));
        Ok(Self {
            train_pairs: dataset.seeds.train.clone(),
            test_pairs: dataset.merge_pairs(&dataset.seeds.test),
            config,
            index,
            params,
            optimizer,
            rng,
            n1,
            n2,
            neg_per_pos,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    /// The index the model trains on (timestamps erased in time-unaware mode).
    pub fn index(&self) -> &NeighborhoodIndex {
        &self.index
    }

    pub fn neg_per_pos(&self) -> usize {
        self.neg_per_pos
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// Test pairs in merged ids.
    pub fn test_pairs(&self) -> &[(EntityId, EntityId)] {
        &self.test_pairs
    }

    /// One epoch. `probe` sees the cache of the epoch's first forward pass.
    pub fn train_epoch(&mut self, probe: &mut dyn FnMut(usize, &ForwardCache<T>)) -> Result<f64> {
        let epoch = self.epoch + 1;
        let diverged = |e: Error| match e {
            Error::NonFinite(reason) => Error::Diverged { epoch, reason },
            other => other,
        };
        let mut order = self.train_pairs.clone();
        let batch = self.config.batch_size.unwrap_or(order.len()).min(order.len());
        if batch < order.len() {
            order.shuffle(&mut self.rng);
        }
        let groups = sample_negatives(&order, self.n1, self.n2, self.neg_per_pos, &mut self.rng)?;
        let groups: Vec<NegativeGroup> = groups.iter().map(|g| g.merged(self.n1)).collect();
        let options = ForwardOptions {
            time_view: self.config.time_view,
            ..ForwardOptions::train(self.config.dropout)
        };
        let mut total = 0.0;
        for (b, chunk) in groups.chunks(batch).enumerate() {
            let (loss, cache) =
                objective(&mut self.params, &self.index, chunk, self.config.margin, &options, &mut self.rng).map_err(diverged)?;
            if b == 0 {
                probe(epoch, &cache);
            }
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    reason: format!("loss is {loss}"),
                });
            }
            self.optimizer.step(self.params.store_mut()).map_err(diverged)?;
            total += loss;
        }
        self.epoch = epoch;
        Ok(total)
    }

    /// Trains for the configured number of epochs.
    pub fn run(&mut self) -> Result<TrainReport> {
        self.run_with_probe(&mut |_, _| {})
    }

    pub fn run_with_probe(&mut self, probe: &mut dyn FnMut(usize, &ForwardCache<T>)) -> Result<TrainReport> {
        let mut report = TrainReport {
            neg_per_pos: self.neg_per_pos,
            ..TrainReport::default()
        };
        let mut best = f64::NEG_INFINITY;
        let mut stale = 0usize;
        while self.epoch < self.config.epochs {
            let start = Instant::now();
            let loss = self.train_epoch(probe)?;
            let mut record = EpochRecord {
                epoch: self.epoch,
                loss,
                mrr: None,
                hits1: None,
                hits10: None,
                seconds: 0.0,
            };
            let every = self.config.eval_every;
            if every > 0 && (self.epoch.is_multiple_of(every) || self.epoch == self.config.epochs) && !self.test_pairs.is_empty() {
                let r = self.evaluate(self.config.eval_space, Direction::SourceToTarget)?;
                record.mrr = Some(r.mrr);
                record.hits1 = Some(r.hits1);
                record.hits10 = Some(r.hits10);
                if r.mrr > best {
                    best = r.mrr;
                    stale = 0;
                } else {
                    stale += 1;
                }
            }
            record.seconds = start.elapsed().as_secs_f64();
            log::debug!("epoch {} loss {:.6}", record.epoch, record.loss);
            report.history.push(record);
            if self.config.patience.is_some_and(|p| stale >= p) {
                log::info!("stopping early after epoch {}", self.epoch);
                report.stopped_early = true;
                break;
            }
        }
        Ok(report)
    }

    /// Final representations in evaluation mode.
    pub fn representations(&self) -> Result<FinalRepresentations<T>> {
        eval_representations(&self.params, &self.index, self.config.time_view)
    }

    pub fn evaluate(&self, space: MetricSpace, direction: Direction) -> Result<RankingReport> {
        let reps = self.representations()?;
        rank_pairs(&reps, &self.test_pairs, space, BaseSimilarity::L1, self.config.k_csls, direction)
    }

    pub fn checkpoint_header(&self) -> CheckpointHeader {
        let shape = self.params.shape();
        CheckpointHeader {
            dim: shape.dim,
            layers: shape.layers,
            entities: shape.entities,
            relations: shape.relations,
            times: shape.times,
            precision: T::NAME.to_string(),
            seed: self.config.seed,
            self_loops: self.config.self_loops,
            mode: self.config.mode.as_str().to_string(),
        }
    }

    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.checkpoint_header(), self.params.store())
    }
}
