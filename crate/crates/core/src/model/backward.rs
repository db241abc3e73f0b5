use super::{view_timestamps, ForwardCache, ModelParams, TimeView};
use crate::error::{Error, Result};
use crate::numerics::{dot, normalize_backward, reflect_backward, DenseMatrix, Real};
use crate::tkg::NeighborhoodIndex;

/// Gradients with respect to every model table, in [`ModelParams`] layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads<T> {
    pub entity: DenseMatrix<T>,
    pub relation: DenseMatrix<T>,
    pub time: DenseMatrix<T>,
    pub nu_time: Vec<Vec<T>>,
    pub nu_rel: Vec<Vec<T>>,
}

impl<T: Real> ModelGrads<T> {
    /// Adds these gradients into the accumulators of `params`.
    pub fn accumulate_into(&self, params: &mut ModelParams<T>) {
        let store = params.store_mut();
        let add = |dst: &mut DenseMatrix<T>, src: &[T]| {
            dst.as_mut_slice().iter_mut().zip(src).for_each(|(d, &s)| *d += s);
        };
        add(store.grad_mut(0), self.entity.as_slice());
        add(store.grad_mut(1), self.relation.as_slice());
        add(store.grad_mut(2), self.time.as_slice());
        for l in 0..self.nu_time.len() {
            add(store.grad_mut(3 + 2 * l), &self.nu_time[l]);
            add(store.grad_mut(4 + 2 * l), &self.nu_rel[l]);
        }
    }
}

/// Reverse pass: given `grad_final` (same shape as the final
/// representations), returns the gradient of every parameter table.
///
/// `index` and `time_view` must be those used for the forward pass that
/// produced `cache`. ReLU at exactly zero propagates no gradient.
pub fn backward<T: Real>(
    params: &ModelParams<T>,
    index: &NeighborhoodIndex,
    cache: &ForwardCache<T>,
    grad_final: &DenseMatrix<T>,
    time_view: TimeView,
) -> Result<ModelGrads<T>> {
    let shape = params.shape();
    let (n, k, layers) = (shape.entities, shape.dim, shape.layers);
    if grad_final.rows() != n || grad_final.cols() != shape.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: n * shape.output_dim(),
            got: grad_final.len(),
        });
    }
    let tables = &cache.tables;
    let mut g_rel_unit = DenseMatrix::zeros(shape.relations, k);
    let mut g_time_unit = DenseMatrix::zeros(shape.times, k);
    let mut nu_time = vec![vec![T::zero(); 3 * k]; layers];
    let mut nu_rel = vec![vec![T::zero(); 3 * k]; layers];

    // time view segment
    let tv = (layers + 1) * k;
    for i in 0..n {
        let seg = &grad_final.row(i)[tv..];
        let ts = view_timestamps(index, i, time_view);
        let scale = T::one() / T::of(ts.len() as f64);
        for t in ts {
            g_time_unit.row_mut(t).iter_mut().zip(seg).for_each(|(g, &s)| *g += s * scale);
        }
    }

    let segment = |l: usize| {
        let mut m = DenseMatrix::zeros(n, k);
        for i in 0..n {
            m.row_mut(i).copy_from_slice(&grad_final.row(i)[l * k..(l + 1) * k]);
        }
        m
    };

    let links = index.links();
    let order = index.grouped_ids();
    let mut g_act = segment(layers);
    for l in (0..layers).rev() {
        let lc = &cache.layers[l];
        let nu_t = params.nu_time(l);
        let nu_r = params.nu_rel(l);
        let mut g_in = DenseMatrix::zeros(n, k);
        let mut gu = vec![T::zero(); k];
        let mut gv = vec![T::zero(); k];
        let mut gj = vec![T::zero(); k];
        let mut g_omega = Vec::new();
        let mut g_upsilon = Vec::new();
        for i in 0..n {
            let range = index.inward_range(i);
            if range.is_empty() {
                continue;
            }
            let gz: Vec<T> = g_act
                .row(i)
                .iter()
                .zip(lc.pre.row(i))
                .map(|(&g, &z)| if z > T::zero() { g } else { T::zero() })
                .collect();
            if gz.iter().all(|g| *g == T::zero()) {
                continue;
            }
            g_omega.clear();
            g_upsilon.clear();
            for p in range.clone() {
                g_omega.push(dot(&gz, &lc.time_terms[p * k..(p + 1) * k]));
                g_upsilon.push(dot(&gz, &lc.rel_terms[p * k..(p + 1) * k]));
            }
            let w = &lc.omega[range.clone()];
            let y = &lc.upsilon[range.clone()];
            let mean_w = dot(w, &g_omega);
            let mean_y = dot(y, &g_upsilon);
            let h_i = lc.dropped.row(i);
            for (q, p) in range.enumerate() {
                let g_alpha = w[q] * (g_omega[q] - mean_w);
                let g_beta = y[q] * (g_upsilon[q] - mean_y);
                let link = &links[order[p]];
                let h_j = lc.dropped.row(link.subject);
                let h_t = tables.time.row(link.time);
                let h_r = tables.relation.row(link.relation);
                let u = &lc.time_terms[p * k..(p + 1) * k];
                let v = &lc.rel_terms[p * k..(p + 1) * k];
                for d in 0..k {
                    gu[d] = w[q] * gz[d] + g_alpha * nu_t[k + d];
                    gv[d] = y[q] * gz[d] + g_beta * nu_r[k + d];
                    nu_time[l][d] += g_alpha * h_i[d];
                    nu_time[l][k + d] += g_alpha * u[d];
                    nu_time[l][2 * k + d] += g_alpha * h_t[d];
                    nu_rel[l][d] += g_beta * h_i[d];
                    nu_rel[l][k + d] += g_beta * v[d];
                    nu_rel[l][2 * k + d] += g_beta * h_r[d];
                }
                {
                    let gi = g_in.row_mut(i);
                    for d in 0..k {
                        gi[d] += g_alpha * nu_t[d] + g_beta * nu_r[d];
                    }
                }
                {
                    let gt = g_time_unit.row_mut(link.time);
                    for d in 0..k {
                        gt[d] += g_alpha * nu_t[2 * k + d];
                    }
                }
                {
                    let gr = g_rel_unit.row_mut(link.relation);
                    for d in 0..k {
                        gr[d] += g_beta * nu_r[2 * k + d];
                    }
                }
                // gradient into h_j accumulates in a scratch row to avoid
                // aliasing g_in when j == i
                gj.iter_mut().for_each(|g| *g = T::zero());
                reflect_backward(h_t, h_j, &gu, &mut gj, g_time_unit.row_mut(link.time));
                reflect_backward(h_r, h_j, &gv, &mut gj, g_rel_unit.row_mut(link.relation));
                g_in.row_mut(link.subject).iter_mut().zip(&gj).for_each(|(a, &b)| *a += b);
            }
        }
        if let Some(mask) = &lc.mask {
            g_in.as_mut_slice().iter_mut().zip(mask).for_each(|(g, &m)| *g *= m);
        }
        let skip = segment(l);
        g_in.as_mut_slice().iter_mut().zip(skip.as_slice()).for_each(|(g, &s)| *g += s);
        g_act = g_in;
    }

    let mut relation = DenseMatrix::zeros(shape.relations, k);
    for r in 0..shape.relations {
        normalize_backward(tables.relation.row(r), tables.relation_norms[r], g_rel_unit.row(r), relation.row_mut(r));
    }
    let mut time = DenseMatrix::zeros(shape.times, k);
    for t in 0..shape.times {
        normalize_backward(tables.time.row(t), tables.time_norms[t], g_time_unit.row(t), time.row_mut(t));
    }
    Ok(ModelGrads {
        entity: g_act,
        relation,
        time,
        nu_time,
        nu_rel,
    })
}
