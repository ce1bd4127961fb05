mod common;

use std::collections::BTreeSet;

use layoutforge::degen::{augment_sample, degenerate, AugmentConfig};
use layoutforge::layout::{
    build_dag, rasterize, surfaces_of, validate_layout, Grid, LayoutMask, RoomTaxonomy, Surface, SurfaceSet,
};
use layoutforge::losses::{
    bce_mask_loss, ce_loss, contrastive_loss, dice_loss, edge_loss, ContrastiveConfig, EdgeLossConfig, CLAMP_EPS,
    DICE_EPS,
};
use layoutforge::metrics::{corner_error, min_cost_assignment, pixel_error};
use layoutforge::model::{ModelConfig, ToyModel};
use layoutforge::rng::{Purpose, Stream};
use layoutforge::synth::{generate_sample, sample_layout, SynthConfig};
use proptest::prelude::*;

fn tax() -> RoomTaxonomy {
    RoomTaxonomy::default_lsun()
}

fn cfg(seed: u64) -> SynthConfig {
    SynthConfig { width: 64, height: 64, seed, ..Default::default() }.resolved(&tax()).unwrap()
}

/// Unordered label pairs that touch 4-connectedly.
fn adjacency(mask: &LayoutMask) -> BTreeSet<(u8, u8)> {
    let mut out = BTreeSet::new();
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            let a = mask.get(r, c);
            for (nr, nc) in [(r + 1, c), (r, c + 1)] {
                if nr < mask.height() && nc < mask.width() {
                    let b = mask.get(nr, nc);
                    if a != b {
                        out.insert((a.min(b), a.max(b)));
                    }
                }
            }
        }
    }
    out
}

/// Surface adjacency of a Manhattan room view, from its surface set alone:
/// ceiling and floor touch every wall; side walls touch the front wall, or
/// each other when there is none; ceiling meets floor only with no walls.
fn canonical_adjacency(set: SurfaceSet) -> BTreeSet<(u8, u8)> {
    use Surface::*;
    let walls: Vec<Surface> = [LeftWall, RightWall, FrontWall].into_iter().filter(|w| set.contains(*w)).collect();
    let mut out = BTreeSet::new();
    let mut add = |a: Surface, b: Surface| {
        if set.contains(a) && set.contains(b) {
            out.insert((a.id().min(b.id()), a.id().max(b.id())));
        }
    };
    for w in &walls {
        add(Ceiling, *w);
        add(Floor, *w);
    }
    if set.contains(FrontWall) {
        add(LeftWall, FrontWall);
        add(RightWall, FrontWall);
    } else {
        add(LeftWall, RightWall);
    }
    if walls.is_empty() {
        add(Ceiling, Floor);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn generated_layouts_are_valid(seed in 0u64..1000, index in 0u64..1_000_000) {
        let tax = tax();
        let poly = sample_layout(&cfg(seed), &tax, index).unwrap();
        let mask = rasterize(&poly).unwrap();
        prop_assert_eq!(surfaces_of(&mask), poly.surface_set());
        prop_assert!(validate_layout(&mask, &tax).is_valid());
        prop_assert_eq!(poly.corners.len(), tax.get(poly.room_type).unwrap().corners);
        prop_assert_eq!(adjacency(&mask), canonical_adjacency(poly.surface_set()));
    }

    #[test]
    fn generator_is_pure(seed in 0u64..1000, index in 0u64..1000) {
        let tax = tax();
        let a = generate_sample(&cfg(seed), &tax, index).unwrap();
        let b = generate_sample(&cfg(seed), &tax, index).unwrap();
        prop_assert_eq!(a.image, b.image);
        prop_assert_eq!(a.mask, b.mask);
        prop_assert_eq!(a.poly, b.poly);
    }

    #[test]
    fn sub_taxonomies_give_acyclic_dags(keep in proptest::collection::vec(any::<bool>(), 11)) {
        let types: Vec<_> = tax().types().iter().zip(&keep).filter(|(_, k)| **k).map(|(t, _)| t.clone()).collect();
        prop_assume!(!types.is_empty());
        let sub = RoomTaxonomy::new(types).unwrap();
        let dag = build_dag(&sub).unwrap();
        prop_assert!(dag.topological_order().is_some());
        for e in dag.edges() {
            prop_assert!(sub.get(e.parent).is_some() && sub.get(e.child).is_some());
        }
    }

    #[test]
    fn degeneration_shrinks_by_one_and_keeps_topology(edge_index in 0usize..17, seed in 0u64..500) {
        let tax = tax();
        let dag = build_dag(&tax).unwrap();
        let edge = dag.edges()[edge_index % dag.edges().len()];
        let s = &common::samples_of_type(&tax, edge.parent, 1, seed)[0];
        let out = degenerate(&s.poly, edge, &dag).unwrap();
        let m = rasterize(&out).unwrap();
        let before = surfaces_of(&s.mask);
        let after = surfaces_of(&m);
        prop_assert!(after.is_subset(before));
        prop_assert_eq!(after.len() + 1, before.len());
        prop_assert_eq!(adjacency(&m), canonical_adjacency(tax.get(edge.child).unwrap().surfaces));
    }

    #[test]
    fn augmentation_is_pure(seed in 0u64..1000, index in 0u64..100) {
        let tax = tax();
        let dag = build_dag(&tax).unwrap();
        let render = cfg(seed);
        let s = generate_sample(&render, &tax, index).unwrap();
        let aug = AugmentConfig { degen_prob: 0.5, seed, ..Default::default() };
        let run = || {
            let mut rng = Stream::new(seed, Purpose::Augment, index);
            augment_sample(&s, &dag, &tax, &aug, &render, &mut rng).unwrap()
        };
        let (a, la) = run();
        let (b, lb) = run();
        prop_assert_eq!(la, lb);
        prop_assert_eq!(a.image, b.image);
        prop_assert_eq!(a.mask, b.mask);
    }
}

fn grid_strategy(w: usize, h: usize, lo: f64, hi: f64) -> impl Strategy<Value = Grid> {
    proptest::collection::vec(lo..hi, w * h).prop_map(move |v| Grid::new(w, h, v).unwrap())
}

fn binary_strategy(w: usize, h: usize) -> impl Strategy<Value = Grid> {
    proptest::collection::vec(any::<bool>(), w * h)
        .prop_map(move |v| Grid::new(w, h, v.into_iter().map(|b| b as u8 as f64).collect()).unwrap())
}

fn stack_strategy(w: usize, h: usize) -> impl Strategy<Value = Vec<Grid>> {
    proptest::collection::vec(-4.0f64..4.0, 6 * w * h).prop_map(move |z| {
        let mut out: Vec<Grid> = (0..6).map(|_| Grid::zeros(w, h)).collect();
        for i in 0..w * h {
            let s: f64 = (0..6).map(|k| z[k * w * h + i].exp()).sum();
            for k in 0..6 {
                out[k].data_mut()[i] = z[k * w * h + i].exp() / s;
            }
        }
        out
    })
}

fn mask_strategy(w: usize, h: usize) -> impl Strategy<Value = LayoutMask> {
    proptest::collection::vec(0u8..6, w * h).prop_map(move |v| LayoutMask::new(w, h, v).unwrap())
}

proptest! {
    #[test]
    fn loss_values_are_bounded(
        probs in stack_strategy(5, 4),
        labels in mask_strategy(5, 4),
        pred in grid_strategy(5, 4, 0.0, 1.0),
        gt in binary_strategy(5, 4),
    ) {
        let cap = -CLAMP_EPS.ln() + 1e-12;
        let ce = ce_loss(&probs, &labels).unwrap().value;
        prop_assert!((0.0..=cap).contains(&ce));
        let dice = dice_loss(&pred, &gt, DICE_EPS).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&dice));
        let bce = bce_mask_loss(&pred, &gt).unwrap().value;
        prop_assert!((0.0..=cap).contains(&bce));
        let edge = edge_loss(&probs, &gt, &EdgeLossConfig::default()).unwrap().value;
        prop_assert!(edge >= 0.0);
    }

    #[test]
    fn contrastive_is_permutation_invariant(
        rows in proptest::collection::vec(-1.0f64..1.0, 2 * 4 * 3),
        tau in 0.02f64..1.0,
        shift in 1usize..4,
    ) {
        let (b, d) = (4, 3);
        let (o, t) = rows.split_at(b * d);
        let perm: Vec<usize> = (0..b).map(|i| (i + shift) % b).collect();
        let permute = |m: &[f64]| perm.iter().flat_map(|&i| m[i * d..(i + 1) * d].to_vec()).collect::<Vec<_>>();
        let cfg = ContrastiveConfig { tau };
        let a = contrastive_loss(o, t, d, &cfg).unwrap().value;
        let p = contrastive_loss(&permute(o), &permute(t), d, &cfg).unwrap().value;
        prop_assert!((a - p).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn edge_gradient_vanishes_at_constant_prediction(levels in proptest::collection::vec(0.01f64..1.0, 6)) {
        let s: f64 = levels.iter().sum();
        let stack: Vec<Grid> = levels.iter().map(|l| Grid::filled(6, 5, l / s)).collect();
        let b = edge_loss(&stack, &Grid::zeros(6, 5), &EdgeLossConfig::default()).unwrap();
        prop_assert!(b.grads[0].iter().all(|g| *g == 0.0));
    }

    #[test]
    fn pixel_error_symmetry_and_relabeling(a in mask_strategy(8, 8), b in mask_strategy(8, 8), rot in 1u8..6) {
        let ab = pixel_error(&a, &b).unwrap();
        prop_assert_eq!(ab, pixel_error(&b, &a).unwrap());
        let relabel = |m: &LayoutMask| LayoutMask::from_fn(8, 8, |r, c| (m.get(r, c) + rot) % 6);
        prop_assert_eq!(ab, pixel_error(&relabel(&a), &relabel(&b)).unwrap());
        prop_assert_eq!(ab, common::brute_pixel_error(&a, &b));
    }

    #[test]
    fn corner_error_symmetry_translation_scaling(
        gt in proptest::collection::vec((0.0f64..40.0, 0.0f64..40.0), 0..6),
        noise in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 6),
        extra in proptest::collection::vec((0.0f64..40.0, 0.0f64..40.0), 0..3),
        shift in (0.0f64..20.0, 0.0f64..20.0),
    ) {
        let (w, h) = (64, 48);
        let pred: Vec<(f64, f64)> = gt.iter().zip(&noise).map(|(g, n)| (g.0 + n.0 + 4.0, g.1 + n.1 + 4.0)).collect();
        let gt: Vec<(f64, f64)> = gt.iter().map(|g| (g.0 + 4.0, g.1 + 4.0)).collect();
        let mut pred_x = pred.clone();
        pred_x.extend(extra.iter().map(|e| (e.0 + 4.0, e.1 + 4.0)));
        let e = corner_error(&pred_x, &gt, w, h).unwrap();
        prop_assert!((e - corner_error(&gt, &pred_x, w, h).unwrap()).abs() < 1e-12);
        let mv = |v: &[(f64, f64)]| v.iter().map(|p| (p.0 + shift.0, p.1 + shift.1)).collect::<Vec<_>>();
        prop_assert!((e - corner_error(&mv(&pred_x), &mv(&gt), w, h).unwrap()).abs() < 1e-9);
        prop_assert!((e - common::brute_corner_error(&pred_x, &gt, w, h)).abs() < 1e-12);
        // equal counts: every point is matched, so only the diagonal changes
        let e1 = corner_error(&pred, &gt, w, h).unwrap();
        let e2 = corner_error(&pred, &gt, 2 * w, 2 * h).unwrap();
        prop_assert!((e1 - 2.0 * e2).abs() < 1e-9);
    }

    #[test]
    fn assignment_matches_factorial_search(n in 0usize..7, seed in any::<u64>()) {
        let mut rng = Stream::new(seed, Purpose::Check, 0);
        let cost: Vec<f64> = (0..n * n).map(|_| rng.range(0.0, 10.0)).collect();
        let assign = min_cost_assignment(&cost, n);
        let mut cols = assign.clone();
        cols.sort_unstable();
        prop_assert_eq!(cols, (0..n).collect::<Vec<_>>());
        let got: f64 = assign.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
        prop_assert!((got - common::brute_assignment_cost(&cost, n)).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn forward_is_finite_and_query_count_only_changes_query_dims(seed in any::<u64>(), n in 2usize..9) {
        let tax = tax();
        let sc = SynthConfig { width: 16, height: 16, seed, ..Default::default() }.resolved(&tax).unwrap();
        let img = generate_sample(&sc, &tax, 0).unwrap().image;
        let base = ModelConfig { width: 16, height: 16, ..Default::default() };
        let a = ToyModel::new(base.clone()).unwrap();
        let b = ToyModel::new(ModelConfig { queries: n, ..base }).unwrap();
        let pa = a.predict(&a.init_params(seed, 0.07), &img).unwrap();
        let pb = b.predict(&b.init_params(seed, 0.07), &img).unwrap();
        prop_assert!(pb.mask_logits.iter().chain(&pb.class_logits).chain(&pb.query_embed).all(|v| v.is_finite()));
        prop_assert_eq!((pa.width, pa.height, pa.dim), (pb.width, pb.height, pb.dim));
        prop_assert_eq!(pb.mask_logits.len(), n * 16 * 16);
        prop_assert_eq!(pb.class_logits.len(), n * 6);
        prop_assert_eq!(pb.query_embed.len(), n * pb.dim);
    }
}
