//! The time-aware attention network.
//!
//! Every layer attends over an entity's inward links twice: once through the
//! Householder reflection of the link's timestamp and once through that of
//! its relation. Outputs of all layers are concatenated and extended with the
//! mean embedding of the entity's neighbouring timestamps.

mod backward;
mod forward;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use backward::{backward, ModelGrads};
pub use forward::{forward_with_cache, ForwardCache, LayerCache};

use crate::error::{Error, Result};
use crate::numerics::{dot, householder_apply, DenseMatrix, ParameterStore, Real};
use crate::tkg::{NeighborhoodIndex, UNKNOWN_TIME};

/// Time-aware model or the ablation that treats every timestamp as unknown.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    TimeAware,
    TimeUnaware,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::TimeAware => "time-aware",
            Mode::TimeUnaware => "time-unaware",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time-aware" => Ok(Mode::TimeAware),
            "time-unaware" => Ok(Mode::TimeUnaware),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// How the reflections are evaluated. `Materialized` builds `I − 2hhᵀ`
/// explicitly and exists to cross-check the rank-one path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Transform {
    #[default]
    RankOne,
    Materialized,
}

/// Whether the timestamp view averages over the multiset of neighbouring
/// timestamps or over the distinct set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeView {
    #[default]
    Multiset,
    Set,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOptions {
    pub training: bool,
    pub dropout: f64,
    pub transform: Transform,
    pub time_view: TimeView,
}

impl ForwardOptions {
    pub fn eval() -> Self {
        Self {
            training: false,
            dropout: 0.0,
            transform: Transform::RankOne,
            time_view: TimeView::Multiset,
        }
    }

    pub fn train(dropout: f64) -> Self {
        Self {
            training: true,
            dropout,
            ..Self::eval()
        }
    }
}

/// Table sizes of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelShape {
    pub entities: usize,
    /// Rows of the relation table: originals, reverses and (optionally) the
    /// self-loop relation.
    pub relations: usize,
    /// Rows of the time table, the unknown-time slot included.
    pub times: usize,
    pub dim: usize,
    pub layers: usize,
}

impl ModelShape {
    /// Shape for two graphs with `base_relations = |R1| + |R2|`.
    pub fn new(entities: usize, base_relations: usize, times: usize, dim: usize, layers: usize, self_loops: bool) -> Self {
        Self {
            entities,
            relations: 2 * base_relations + usize::from(self_loops),
            times,
            dim,
            layers,
        }
    }

    /// Width of a final representation: `(L + 2)·k`.
    pub fn output_dim(&self) -> usize {
        (self.layers + 2) * self.dim
    }

    pub fn num_scalars(&self) -> usize {
        self.dim * (self.entities + self.relations + self.times) + 6 * self.dim * self.layers
    }
}

const ENTITY: usize = 0;
const RELATION: usize = 1;
const TIME: usize = 2;

fn nu_time_slot(layer: usize) -> usize {
    3 + 2 * layer
}

fn nu_rel_slot(layer: usize) -> usize {
    4 + 2 * layer
}

/// Trainable tables. Entity, relation and time tables are shared by all
/// layers; each layer owns a temporal and a relational attention vector of
/// length `3k`. Relation and time rows are stored raw and normalised inside
/// every forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    shape: ModelShape,
    store: ParameterStore<T>,
}

impl<T: Real> ModelParams<T> {
    /// Uniform initialisation in `[−1/√k, 1/√k]`; relation and time rows are
    /// then scaled to unit norm.
    pub fn init<R: Rng + ?Sized>(shape: ModelShape, rng: &mut R) -> Self {
        let k = shape.dim;
        let bound = 1.0 / (k as f64).sqrt();
        let mut store = ParameterStore::new();
        store.add("entity", DenseMatrix::uniform(shape.entities, k, bound, rng));
        for (name, rows) in [("relation", shape.relations), ("time", shape.times)] {
            let mut m = DenseMatrix::<T>::uniform(rows, k, bound, rng);
            for i in 0..rows {
                let n = crate::numerics::norm(m.row(i));
                if n > T::zero() {
                    m.row_mut(i).iter_mut().for_each(|v| *v = *v / n);
                }
            }
            store.add(name, m);
        }
        for l in 0..shape.layers {
            store.add(format!("nu_time.{l}"), DenseMatrix::uniform(1, 3 * k, bound, rng));
            store.add(format!("nu_rel.{l}"), DenseMatrix::uniform(1, 3 * k, bound, rng));
        }
        Self { shape, store }
    }

    /// Wraps a loaded parameter store, checking names and shapes.
    pub fn from_store(shape: ModelShape, store: ParameterStore<T>) -> Result<Self> {
        let k = shape.dim;
        let mut expected = vec![
            ("entity".to_string(), shape.entities, k),
            ("relation".to_string(), shape.relations, k),
            ("time".to_string(), shape.times, k),
        ];
        for l in 0..shape.layers {
            expected.push((format!("nu_time.{l}"), 1, 3 * k));
            expected.push((format!("nu_rel.{l}"), 1, 3 * k));
        }
        if store.len() != expected.len() {
            return Err(Error::Checkpoint(format!("expected {} tensors, found {}", expected.len(), store.len())));
        }
        for (p, (name, rows, cols)) in store.iter().zip(&expected) {
            if &p.name != name || p.value.rows() != *rows || p.value.cols() != *cols {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` is {}x{}, expected `{name}` {rows}x{cols}",
                    p.name,
                    p.value.rows(),
                    p.value.cols()
                )));
            }
        }
        Ok(Self { shape, store })
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn store(&self) -> &ParameterStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore<T> {
        &mut self.store
    }

    pub fn into_store(self) -> ParameterStore<T> {
        self.store
    }

    pub fn entity(&self) -> &DenseMatrix<T> {
        self.store.value(ENTITY)
    }

    pub fn relation_raw(&self) -> &DenseMatrix<T> {
        self.store.value(RELATION)
    }

    pub fn time_raw(&self) -> &DenseMatrix<T> {
        self.store.value(TIME)
    }

    pub fn nu_time(&self, layer: usize) -> &[T] {
        self.store.value(nu_time_slot(layer)).as_slice()
    }

    pub fn nu_rel(&self, layer: usize) -> &[T] {
        self.store.value(nu_rel_slot(layer)).as_slice()
    }

    pub fn entity_mut(&mut self) -> &mut DenseMatrix<T> {
        &mut self.store.get_mut(ENTITY).value
    }

    pub fn relation_raw_mut(&mut self) -> &mut DenseMatrix<T> {
        &mut self.store.get_mut(RELATION).value
    }

    pub fn time_raw_mut(&mut self) -> &mut DenseMatrix<T> {
        &mut self.store.get_mut(TIME).value
    }

    pub fn nu_time_mut(&mut self, layer: usize) -> &mut [T] {
        self.store.get_mut(nu_time_slot(layer)).value.as_mut_slice()
    }

    pub fn nu_rel_mut(&mut self, layer: usize) -> &mut [T] {
        self.store.get_mut(nu_rel_slot(layer)).value.as_mut_slice()
    }

    pub fn num_scalars(&self) -> usize {
        self.store.num_scalars()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            shape: self.shape,
            store: self.store.cast(),
        }
    }

    /// Checks that `index` only references rows this model has.
    pub fn check_index(&self, index: &NeighborhoodIndex) -> Result<()> {
        if index.num_entities() != self.shape.entities {
            return Err(Error::DimensionMismatch {
                expected: self.shape.entities,
                got: index.num_entities(),
            });
        }
        if index.relation_bound() > self.shape.relations {
            return Err(Error::Config(format!(
                "graph uses {} relation ids but the model has {} rows",
                index.relation_bound(),
                self.shape.relations
            )));
        }
        if index.time_bound() > self.shape.times || self.shape.times == 0 {
            return Err(Error::Config(format!(
                "graph uses {} time ids but the model has {} rows",
                index.time_bound(),
                self.shape.times
            )));
        }
        Ok(())
    }
}

/// Per-layer entity features; layer 0 is the raw entity table.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerActivations<T> {
    pub layers: Vec<DenseMatrix<T>>,
}

/// Multi-view entity representations of width `(L + 2)·k`.
#[derive(Clone, Debug, PartialEq)]
pub struct FinalRepresentations<T> {
    matrix: DenseMatrix<T>,
}

impl<T: Real> FinalRepresentations<T> {
    pub fn new(matrix: DenseMatrix<T>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix<T> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    pub fn row(&self, entity: usize) -> &[T] {
        self.matrix.row(entity)
    }

    /// Rows for `entities`, in order.
    pub fn select(&self, entities: &[usize]) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(entities.len(), self.dim());
        for (r, &e) in entities.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.row(e));
        }
        out
    }
}

/// `νᵀ[h_i ‖ M_edge·h_j ‖ h_edge]` with `M_edge = I − 2·h_edge·h_edgeᵀ`.
pub fn attention_logit<T: Real>(h_i: &[T], h_j: &[T], h_edge: &[T], nu: &[T]) -> Result<T> {
    let k = h_i.len();
    for len in [h_j.len(), h_edge.len()] {
        if len != k {
            return Err(Error::DimensionMismatch { expected: k, got: len });
        }
    }
    if nu.len() != 3 * k {
        return Err(Error::DimensionMismatch {
            expected: 3 * k,
            got: nu.len(),
        });
    }
    let transformed = householder_apply(h_edge, h_j)?;
    Ok(dot(&nu[..k], h_i) + dot(&nu[k..2 * k], &transformed) + dot(&nu[2 * k..], h_edge))
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let Some(max) = logits.iter().copied().reduce(T::max) else {
        return Vec::new();
    };
    let exps: Vec<T> = logits.iter().map(|&a| (a - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Normalises the temporal logits `alpha` and relational logits `beta` of
/// one entity's inward links into weights `(ω, υ)`.
pub fn normalize_attention<T: Real>(alpha: &[T], beta: &[T]) -> (Vec<T>, Vec<T>) {
    (softmax(alpha), softmax(beta))
}

/// One attention layer on `input` features; returns the next layer's features.
pub fn layer_forward<T: Real, R: Rng + ?Sized>(
    input: &DenseMatrix<T>,
    index: &NeighborhoodIndex,
    params: &ModelParams<T>,
    layer: usize,
    options: &ForwardOptions,
    rng: &mut R,
) -> Result<DenseMatrix<T>> {
    let tables = forward::Tables::new(params)?;
    let cache = forward::run_layer(input, index, params, &tables, layer, options, rng)?;
    Ok(cache.output())
}

/// `[h⁽⁰⁾ ‖ h⁽¹⁾ ‖ … ‖ h⁽ᴸ⁾]` per entity.
pub fn cross_layer_concat<T: Real>(acts: &LayerActivations<T>) -> DenseMatrix<T> {
    let n = acts.layers.first().map_or(0, DenseMatrix::rows);
    let k = acts.layers.first().map_or(0, DenseMatrix::cols);
    let mut out = DenseMatrix::zeros(n, k * acts.layers.len());
    for i in 0..n {
        let row = out.row_mut(i);
        for (l, m) in acts.layers.iter().enumerate() {
            row[l * k..(l + 1) * k].copy_from_slice(m.row(i));
        }
    }
    out
}

/// Timestamps averaged into an entity's time view. An entity without any
/// inward link falls back to the unknown-time slot.
pub(crate) fn view_timestamps(index: &NeighborhoodIndex, entity: usize, view: TimeView) -> Vec<usize> {
    let mut ts: Vec<usize> = index.timestamps(entity).collect();
    if view == TimeView::Set {
        ts.sort_unstable();
        ts.dedup();
    }
    if ts.is_empty() {
        ts.push(UNKNOWN_TIME);
    }
    ts
}

/// Appends to each row of `concat` the mean of the unit time embeddings over
/// the entity's neighbouring timestamps.
pub fn multi_view<T: Real>(
    concat: &DenseMatrix<T>,
    index: &NeighborhoodIndex,
    time_unit: &DenseMatrix<T>,
    view: TimeView,
) -> Result<FinalRepresentations<T>> {
    if concat.rows() != index.num_entities() {
        return Err(Error::DimensionMismatch {
            expected: index.num_entities(),
            got: concat.rows(),
        });
    }
    let k = time_unit.cols();
    let width = concat.cols();
    let mut out = DenseMatrix::zeros(concat.rows(), width + k);
    for i in 0..concat.rows() {
        let ts = view_timestamps(index, i, view);
        let scale = T::one() / T::of(ts.len() as f64);
        let row = out.row_mut(i);
        row[..width].copy_from_slice(concat.row(i));
        for t in ts {
            for (o, &v) in row[width..].iter_mut().zip(time_unit.row(t)) {
                *o += v * scale;
            }
        }
    }
    Ok(FinalRepresentations::new(out))
}

/// Full forward pass. In time-unaware mode every link timestamp is replaced
/// by the unknown-time id before computing.
pub fn model_forward<T: Real, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    index: &NeighborhoodIndex,
    mode: Mode,
    options: &ForwardOptions,
    rng: &mut R,
) -> Result<FinalRepresentations<T>> {
    let cache = match mode {
        Mode::TimeAware => forward_with_cache(params, index, options, rng)?,
        Mode::TimeUnaware => forward_with_cache(params, &index.time_unaware(), options, rng)?,
    };
    Ok(cache.final_reps)
}

#[cfg(test)]
mod tests;
