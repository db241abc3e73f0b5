use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::numerics::{householder_matrix, norm, normalize_rows, ParameterStore};
use crate::tkg::{build_neighborhoods, DirectedLink};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn link(s: usize, r: usize, o: usize, t: usize) -> DirectedLink {
    DirectedLink { subject: s, relation: r, object: o, time: t }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}

/// Random six-entity graph with self-loops, used by several invariants.
fn fixture_index() -> NeighborhoodIndex {
    let links = vec![
        link(0, 0, 1, 1),
        link(1, 2, 0, 2),
        link(1, 1, 2, 3),
        link(2, 3, 1, 3),
        link(3, 0, 2, 0),
        link(2, 2, 3, 0),
        link(4, 1, 5, 2),
        link(5, 3, 4, 1),
        link(0, 1, 5, 3),
        link(5, 3, 0, 1),
        link(0, 0, 1, 2),
        link(1, 2, 0, 2),
    ];
    build_neighborhoods(links, 6).unwrap().with_self_loops(4)
}

fn fixture_params(seed: u64) -> ModelParams<f64> {
    ModelParams::init(ModelShape::new(6, 2, 4, 4, 2, true), &mut rng(seed))
}

#[test]
fn logit_examples() {
    let h_i = [0.3, -0.7, 0.2, 0.9];
    let h_j = [0.1, 0.4, -0.6, 0.5];
    let h_e = unit(&[1.0, 2.0, -1.0, 0.5]);
    assert_eq!(attention_logit(&h_i, &h_j, &h_e, &[0.0; 12]).unwrap(), 0.0);
    let mut selector = [0.0; 12];
    selector[0] = 1.0;
    assert_eq!(attention_logit(&h_i, &h_j, &h_e, &selector).unwrap(), 0.3);
    assert!(attention_logit(&h_i, &h_j[..3], &h_e, &selector).is_err());
    assert!(attention_logit(&h_i, &h_j, &h_e, &selector[..11]).is_err());
}

#[test]
fn logit_matches_explicit_matrix() {
    let mut r = rng(4);
    for _ in 0..20 {
        let m = DenseMatrix::<f64>::uniform(4, 4, 1.0, &mut r);
        let nu = DenseMatrix::<f64>::uniform(1, 12, 1.0, &mut r);
        let (h_i, h_j) = (m.row(0), m.row(1));
        let h_e = unit(m.row(2));
        let mh = householder_matrix(&h_e).mat_vec(h_j).unwrap();
        let concat: Vec<f64> = h_i.iter().chain(&mh).chain(&h_e).copied().collect();
        let expected = dot(nu.as_slice(), &concat);
        let got = attention_logit(h_i, h_j, &h_e, nu.as_slice()).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }
}

#[test]
fn attention_normalization_examples() {
    let (w, y) = normalize_attention(&[3.7], &[-1.0]);
    assert_eq!((w, y), (vec![1.0], vec![1.0]));
    let (w, _) = normalize_attention(&[0.2, 0.2], &[0.0, 1.0]);
    assert_eq!(w, vec![0.5, 0.5]);
    let (w, _) = normalize_attention(&[0.0, 2f64.ln(), 3f64.ln()], &[0.0; 3]);
    for (a, b) in w.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
        assert!((a - b).abs() < 1e-15);
    }
    // large logits stay finite
    let (w, _) = normalize_attention(&[1000.0, 1000.0], &[0.0, 0.0]);
    assert_eq!(w, vec![0.5, 0.5]);
}

#[test]
fn self_loop_with_orthogonal_axes_reflects_nothing() {
    // both reflection axes are orthogonal to the input, so each transform
    // acts as the identity and both terms contribute h_in
    let index = build_neighborhoods(vec![], 1).unwrap().with_self_loops(0);
    let mut params = ModelParams::<f64>::init(ModelShape::new(1, 0, 1, 3, 1, true), &mut rng(1));
    params.entity_mut().as_mut_slice().copy_from_slice(&[0.5, -0.25, 0.0]);
    params.relation_raw_mut().as_mut_slice().copy_from_slice(&[0.0, 0.0, 1.0]);
    params.time_raw_mut().as_mut_slice().copy_from_slice(&[0.0, 0.0, 2.0]);
    let out = layer_forward(&params.entity().clone(), &index, &params, 0, &ForwardOptions::eval(), &mut rng(0)).unwrap();
    assert_eq!(out.row(0), &[1.0, 0.0, 0.0]);
}

#[test]
fn two_entity_hand_computation() {
    // entity 0 --(r0, t1)--> entity 1, no self-loops
    let index = build_neighborhoods(vec![link(0, 0, 1, 1)], 2).unwrap();
    let mut params = ModelParams::<f64>::init(ModelShape::new(2, 1, 2, 2, 1, false), &mut rng(2));
    params.entity_mut().as_mut_slice().copy_from_slice(&[0.5, -0.3, 0.2, 0.4]);
    params.relation_raw_mut().as_mut_slice().copy_from_slice(&[0.0, 1.0, 1.0, 0.0]);
    params.time_raw_mut().as_mut_slice().copy_from_slice(&[1.0, 0.0, 0.6, 0.8]);
    let out = layer_forward(&params.entity().clone(), &index, &params, 0, &ForwardOptions::eval(), &mut rng(0)).unwrap();
    // M_t x0 = x0 - 2(0.06)(0.6, 0.8) = (0.428, -0.396); M_r x0 = (0.5, 0.3)
    assert_eq!(out.row(0), &[0.0, 0.0]);
    assert!((out.get(1, 0) - 0.928).abs() < 1e-12);
    assert_eq!(out.get(1, 1), 0.0);
}

#[test]
fn zero_attention_vectors_average_uniformly() {
    let index = fixture_index();
    let mut params = fixture_params(3);
    for l in 0..2 {
        params.nu_time_mut(l).iter_mut().for_each(|v| *v = 0.0);
        params.nu_rel_mut(l).iter_mut().for_each(|v| *v = 0.0);
    }
    let x = params.entity().clone();
    let out = layer_forward(&x, &index, &params, 0, &ForwardOptions::eval(), &mut rng(0)).unwrap();
    let rel = normalize_rows(params.relation_raw()).unwrap();
    let time = normalize_rows(params.time_raw()).unwrap();
    for i in 0..6 {
        let inward: Vec<&DirectedLink> = index.links().iter().filter(|l| l.object == i).collect();
        let mut expected = vec![0.0; 4];
        for l in &inward {
            let a = householder_matrix(time.row(l.time)).mat_vec(x.row(l.subject)).unwrap();
            let b = householder_matrix(rel.row(l.relation)).mat_vec(x.row(l.subject)).unwrap();
            for d in 0..4 {
                expected[d] += (a[d] + b[d]) / inward.len() as f64;
            }
        }
        for d in 0..4 {
            assert!((out.get(i, d) - expected[d].max(0.0)).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_weights_sum_to_one_and_outputs_nonnegative() {
    let index = fixture_index();
    let params = fixture_params(5);
    let cache = forward_with_cache(&params, &index, &ForwardOptions::train(0.3), &mut rng(8)).unwrap();
    for lc in &cache.layers {
        for i in 0..6 {
            let r = index.inward_range(i);
            let sw: f64 = lc.omega[r.clone()].iter().sum();
            let sy: f64 = lc.upsilon[r].iter().sum();
            assert!((sw - 1.0).abs() < 1e-12 && (sy - 1.0).abs() < 1e-12);
        }
    }
    for act in &cache.activations.layers[1..] {
        assert!(act.as_slice().iter().all(|v| *v >= 0.0));
    }
    for t in cache.time_unit().as_slice().chunks(4).chain(cache.relation_unit().as_slice().chunks(4)) {
        assert!((norm(t) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn link_order_does_not_matter() {
    let index = fixture_index();
    let mut links = index.links().to_vec();
    links.reverse();
    links.rotate_left(5);
    let shuffled = build_neighborhoods(links, 6).unwrap();
    let params = fixture_params(6);
    let a = model_forward(&params, &index, Mode::TimeAware, &ForwardOptions::eval(), &mut rng(0)).unwrap();
    let b = model_forward(&params, &shuffled, Mode::TimeAware, &ForwardOptions::eval(), &mut rng(0)).unwrap();
    for (x, y) in a.matrix().as_slice().iter().zip(b.matrix().as_slice()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn materialized_transform_agrees() {
    let index = fixture_index();
    let params = fixture_params(7).cast::<f32>();
    let fast = model_forward(&params, &index, Mode::TimeAware, &ForwardOptions::eval(), &mut rng(0)).unwrap();
    let slow_opts = ForwardOptions {
        transform: Transform::Materialized,
        ..ForwardOptions::eval()
    };
    let slow = model_forward(&params, &index, Mode::TimeAware, &slow_opts, &mut rng(0)).unwrap();
    for (x, y) in fast.matrix().as_slice().iter().zip(slow.matrix().as_slice()) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn concat_segments() {
    let mut r = rng(9);
    let l0 = DenseMatrix::<f64>::uniform(3, 2, 1.0, &mut r);
    let single = cross_layer_concat(&LayerActivations { layers: vec![l0.clone()] });
    assert_eq!(single, l0);
    let l1 = DenseMatrix::<f64>::uniform(3, 2, 1.0, &mut r);
    let l2 = DenseMatrix::<f64>::uniform(3, 2, 1.0, &mut r);
    let cat = cross_layer_concat(&LayerActivations { layers: vec![l0.clone(), l1.clone(), l2.clone()] });
    assert_eq!(cat.cols(), 6);
    for i in 0..3 {
        assert_eq!(&cat.row(i)[0..2], l0.row(i));
        assert_eq!(&cat.row(i)[2..4], l1.row(i));
        assert_eq!(&cat.row(i)[4..6], l2.row(i));
    }
}

#[test]
fn time_view_is_a_multiset_mean() {
    let index = build_neighborhoods(
        vec![link(1, 0, 0, 1), link(2, 0, 1, 2), link(3, 0, 1, 2), link(0, 0, 2, 1), link(0, 0, 2, 2), link(1, 0, 2, 2)],
        4,
    )
    .unwrap();
    let time = normalize_rows(&DenseMatrix::<f64>::from_rows(&[vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 1.0]]).unwrap()).unwrap();
    let concat = DenseMatrix::zeros(4, 0);
    let reps = multi_view(&concat, &index, &time, TimeView::Multiset).unwrap();
    assert_eq!(reps.row(0), &[0.6, 0.8]);
    assert_eq!(reps.row(1), &[0.0, 1.0]);
    let expected: [f64; 2] = [(0.6 + 2.0 * 0.0) / 3.0, (0.8 + 2.0 * 1.0) / 3.0];
    assert!((reps.row(2)[0] - expected[0]).abs() < 1e-15 && (reps.row(2)[1] - expected[1]).abs() < 1e-15);
    // isolated entity falls back to the unknown-time slot
    assert_eq!(reps.row(3), &[1.0, 0.0]);
    let set = multi_view(&concat, &index, &time, TimeView::Set).unwrap();
    assert_eq!(set.row(2), &[0.3, 0.9]);
}

#[test]
fn unaware_mode_is_a_fixed_point_on_unknown_times() {
    let index = fixture_index().time_unaware();
    let params = fixture_params(10);
    let a = model_forward(&params, &index, Mode::TimeAware, &ForwardOptions::eval(), &mut rng(0)).unwrap();
    let b = model_forward(&params, &index, Mode::TimeUnaware, &ForwardOptions::eval(), &mut rng(0)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn timestamps_separate_mirrored_entities_only_when_time_aware() {
    // entity 2 links to 0 at t1 and to 1 at t2; 0 and 1 share their embedding
    let index = build_neighborhoods(vec![link(2, 0, 0, 1), link(2, 0, 1, 2)], 3).unwrap();
    let mut params = ModelParams::<f64>::init(ModelShape::new(3, 1, 3, 4, 2, false), &mut rng(11));
    let shared = params.entity().row(0).to_vec();
    params.entity_mut().row_mut(1).copy_from_slice(&shared);
    let aware = model_forward(&params, &index, Mode::TimeAware, &ForwardOptions::eval(), &mut rng(0)).unwrap();
    let unaware = model_forward(&params, &index, Mode::TimeUnaware, &ForwardOptions::eval(), &mut rng(0)).unwrap();
    assert_ne!(aware.row(0), aware.row(1));
    assert_eq!(unaware.row(0), unaware.row(1));
}

#[test]
fn unaware_mode_ignores_timestamp_permutations() {
    let index = fixture_index();
    let permuted: Vec<DirectedLink> = index
        .links()
        .iter()
        .map(|l| DirectedLink {
            time: if l.time == 0 { 0 } else { 1 + (l.time + 1) % 3 },
            ..*l
        })
        .collect();
    let permuted = build_neighborhoods(permuted, 6).unwrap();
    let params = fixture_params(12);
    let a = model_forward(&params, &index, Mode::TimeUnaware, &ForwardOptions::eval(), &mut rng(0)).unwrap();
    let b = model_forward(&params, &permuted, Mode::TimeUnaware, &ForwardOptions::eval(), &mut rng(0)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn forward_is_deterministic() {
    let index = fixture_index();
    let params = fixture_params(13).cast::<f32>();
    let a = model_forward(&params, &index, Mode::TimeAware, &ForwardOptions::train(0.3), &mut rng(77)).unwrap();
    let b = model_forward(&params, &index, Mode::TimeAware, &ForwardOptions::train(0.3), &mut rng(77)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.dim(), 4 * 4);
}

#[test]
fn backward_matches_finite_differences() {
    use crate::numerics::{gradient_check, sample_coordinates};
    let index = fixture_index();
    let mut params = fixture_params(14);
    let weights = DenseMatrix::<f64>::uniform(6, 16, 1.0, &mut rng(15));
    let options = ForwardOptions::train(0.3);
    let objective = |p: &ModelParams<f64>| {
        let reps = model_forward(p, &index, Mode::TimeAware, &options, &mut rng(99)).unwrap();
        dot(reps.matrix().as_slice(), weights.as_slice())
    };
    let cache = forward_with_cache(&params, &index, &options, &mut rng(99)).unwrap();
    let grads = backward(&params, &index, &cache, &weights, TimeView::Multiset).unwrap();
    params.store_mut().zero_grads();
    grads.accumulate_into(&mut params);
    let shape = params.shape();
    let coords = sample_coordinates(params.store(), 40, &mut rng(16));
    let mut store = params.clone().into_store();
    let report = gradient_check(
        &mut store,
        |s: &ParameterStore<f64>| objective(&ModelParams::from_store(shape, s.clone()).unwrap()),
        1e-5,
        &coords,
    );
    assert!(report.max_rel_error < 1e-5, "{report:?}");
    assert!(report.checked > 100);
}
