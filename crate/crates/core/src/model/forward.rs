use rand::Rng;

use super::{
    cross_layer_concat, multi_view, FinalRepresentations, ForwardOptions, LayerActivations, ModelParams, Transform,
};
use crate::error::{Error, Result};
use crate::numerics::{dot, dropout, householder_matrix, normalize_rows_with_norms, reflect_into, DenseMatrix, Real};
use crate::tkg::NeighborhoodIndex;

/// Unit-norm relation and time tables plus the raw norms they came from.
#[derive(Clone, Debug)]
pub(crate) struct Tables<T> {
    pub relation: DenseMatrix<T>,
    pub relation_norms: Vec<T>,
    pub time: DenseMatrix<T>,
    pub time_norms: Vec<T>,
}

impl<T: Real> Tables<T> {
    pub fn new(params: &ModelParams<T>) -> Result<Self> {
        let (relation, relation_norms) = normalize_rows_with_norms(params.relation_raw())?;
        let (time, time_norms) = normalize_rows_with_norms(params.time_raw())?;
        Ok(Self {
            relation,
            relation_norms,
            time,
            time_norms,
        })
    }
}

/// Everything one layer needs for its backward pass. Per-link arrays are
/// indexed by position in the index's grouped-by-object order.
#[derive(Clone, Debug)]
pub struct LayerCache<T> {
    /// Input features after dropout.
    pub dropped: DenseMatrix<T>,
    /// Dropout scale factors, `None` when dropout was inactive.
    pub mask: Option<Vec<T>>,
    /// `M_τ·h_j` per link, `k` values each.
    pub time_terms: Vec<T>,
    /// `M_r·h_j` per link.
    pub rel_terms: Vec<T>,
    pub omega: Vec<T>,
    pub upsilon: Vec<T>,
    /// Pre-activation aggregate per entity.
    pub pre: DenseMatrix<T>,
}

impl<T: Real> LayerCache<T> {
    pub fn output(&self) -> DenseMatrix<T> {
        let mut out = self.pre.clone();
        out.as_mut_slice().iter_mut().for_each(|v| *v = v.max(T::zero()));
        out
    }
}

#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    pub(crate) tables: Tables<T>,
    pub layers: Vec<LayerCache<T>>,
    pub activations: LayerActivations<T>,
    pub final_reps: FinalRepresentations<T>,
}

impl<T: Real> ForwardCache<T> {
    pub fn relation_unit(&self) -> &DenseMatrix<T> {
        &self.tables.relation
    }

    pub fn time_unit(&self) -> &DenseMatrix<T> {
        &self.tables.time
    }
}

fn transform<T: Real>(kind: Transform, h: &[T], x: &[T], out: &mut [T]) {
    match kind {
        Transform::RankOne => reflect_into(h, x, out),
        Transform::Materialized => {
            let m = householder_matrix(h);
            for (i, o) in out.iter_mut().enumerate() {
                *o = dot(m.row(i), x);
            }
        }
    }
}

pub(crate) fn run_layer<T: Real, R: Rng + ?Sized>(
    input: &DenseMatrix<T>,
    index: &NeighborhoodIndex,
    params: &ModelParams<T>,
    tables: &Tables<T>,
    layer: usize,
    options: &ForwardOptions,
    rng: &mut R,
) -> Result<LayerCache<T>> {
    let k = params.shape().dim;
    let n = index.num_entities();
    if input.rows() != n || input.cols() != k {
        return Err(Error::DimensionMismatch {
            expected: n * k,
            got: input.len(),
        });
    }
    let rate = if options.training { options.dropout } else { 0.0 };
    let (dropped, mask) = dropout(input, rate, options.training, rng)?;
    let nu_t = params.nu_time(layer);
    let nu_r = params.nu_rel(layer);
    let links = index.links();
    let order = index.grouped_ids();
    let num_links = order.len();

    let mut time_terms = vec![T::zero(); num_links * k];
    let mut rel_terms = vec![T::zero(); num_links * k];
    let mut omega = vec![T::zero(); num_links];
    let mut upsilon = vec![T::zero(); num_links];
    let mut pre = DenseMatrix::zeros(n, k);
    let mut alpha = Vec::new();
    let mut beta = Vec::new();

    for i in 0..n {
        let range = index.inward_range(i);
        if range.is_empty() {
            continue;
        }
        let h_i = dropped.row(i);
        let self_t = dot(&nu_t[..k], h_i);
        let self_r = dot(&nu_r[..k], h_i);
        alpha.clear();
        beta.clear();
        for p in range.clone() {
            let link = &links[order[p]];
            let h_j = dropped.row(link.subject);
            let h_t = tables.time.row(link.time);
            let h_r = tables.relation.row(link.relation);
            let u = &mut time_terms[p * k..(p + 1) * k];
            transform(options.transform, h_t, h_j, u);
            let v = &mut rel_terms[p * k..(p + 1) * k];
            transform(options.transform, h_r, h_j, v);
            alpha.push(self_t + dot(&nu_t[k..2 * k], u) + dot(&nu_t[2 * k..], h_t));
            beta.push(self_r + dot(&nu_r[k..2 * k], v) + dot(&nu_r[2 * k..], h_r));
        }
        let (w, y) = super::normalize_attention(&alpha, &beta);
        let z: &mut [T] = pre.row_mut(i);
        for (q, p) in range.enumerate() {
            omega[p] = w[q];
            upsilon[p] = y[q];
            let u = &time_terms[p * k..(p + 1) * k];
            let v = &rel_terms[p * k..(p + 1) * k];
            for d in 0..k {
                z[d] += w[q] * u[d] + y[q] * v[d];
            }
        }
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("layer {} output of entity {i}", layer + 1)));
        }
    }
    Ok(LayerCache {
        dropped,
        mask,
        time_terms,
        rel_terms,
        omega,
        upsilon,
        pre,
    })
}

/// Forward pass keeping every intermediate needed by [`super::backward`].
pub fn forward_with_cache<T: Real, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    index: &NeighborhoodIndex,
    options: &ForwardOptions,
    rng: &mut R,
) -> Result<ForwardCache<T>> {
    params.check_index(index)?;
    if !params.entity().is_finite() {
        return Err(Error::NonFinite("entity embeddings".into()));
    }
    let tables = Tables::new(params)?;
    let mut acts = vec![params.entity().clone()];
    let mut layers = Vec::with_capacity(params.shape().layers);
    for l in 0..params.shape().layers {
        let cache = run_layer(&acts[l], index, params, &tables, l, options, rng)?;
        acts.push(cache.output());
        layers.push(cache);
    }
    let activations = LayerActivations { layers: acts };
    let concat = cross_layer_concat(&activations);
    let final_reps = multi_view(&concat, index, &tables.time, options.time_view)?;
    Ok(ForwardCache {
        tables,
        layers,
        activations,
        final_reps,
    })
}
