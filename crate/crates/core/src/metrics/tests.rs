use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn accuracy_limits() {
    let logits = Tensor::new(vec![4, 2], vec![2., 1., 0., 3., 5., -1., 0., 0.5]).unwrap();
    assert_eq!(accuracy(&logits, &[0, 1, 0, 1]).unwrap(), 100.0);
    assert_eq!(accuracy(&logits, &[1, 0, 1, 0]).unwrap(), 0.0);
    let tied = Tensor::new(vec![1, 3], vec![1., 1., 1.]).unwrap();
    assert_eq!(accuracy(&tied, &[0]).unwrap(), 100.0);
    let empty = Tensor::new(vec![0, 2], vec![]).unwrap();
    assert!(accuracy(&empty, &[]).is_err());
}

#[test]
fn tree_separates_on_one_feature() {
    let x = vec![vec![0.1, 5.0], vec![0.2, 1.0], vec![0.9, 5.0], vec![0.8, 1.0]];
    let y = vec![0, 0, 1, 1];
    let t = DecisionTree::fit(&x, &y, TreeParams::default()).unwrap();
    assert_eq!(t.depth(), 1);
    assert_eq!(t.predict(&x).unwrap(), y);
    match &t.nodes[0] {
        TreeNode::Split { feature, threshold, .. } => {
            assert_eq!(*feature, 0);
            assert!(close(*threshold, 0.5, 1e-12));
        }
        other => panic!("expected a split, got {other:?}"),
    }
}

#[test]
fn tree_single_leaf_and_errors() {
    let x = vec![vec![0.0], vec![1.0], vec![2.0]];
    let t = DecisionTree::fit(&x, &[1, 1, 1], TreeParams::default()).unwrap();
    assert_eq!(t.nodes.len(), 1);
    assert_eq!(t.predict_one(&[7.0]), 1);
    assert!(DecisionTree::fit(&[vec![]], &[0], TreeParams::default()).is_err());
    assert!(DecisionTree::fit(&[], &[], TreeParams::default()).is_err());
    assert!(DecisionTree::fit(&[vec![0.0], vec![0.0, 1.0]], &[0, 1], TreeParams::default()).is_err());
}

#[test]
fn tree_ties_go_to_lowest_class() {
    let x = vec![vec![0.0], vec![0.0]];
    let t = DecisionTree::fit(&x, &[1, 0], TreeParams::default()).unwrap();
    assert_eq!(t.predict_one(&[0.0]), 0);
}

#[test]
fn tree_solves_xor_through_zero_gain_split() {
    let x = vec![vec![0., 0.], vec![0., 1.], vec![1., 0.], vec![1., 1.]];
    let y = vec![0, 1, 1, 0];
    let t = DecisionTree::fit(&x, &y, TreeParams::default()).unwrap();
    assert_eq!(t.predict(&x).unwrap(), y);
    let capped = DecisionTree::fit(
        &x,
        &y,
        TreeParams {
            max_depth: Some(1),
            min_samples_split: 2,
        },
    )
    .unwrap();
    assert_eq!(capped.depth(), 1);
}

#[test]
fn tree_splits_adjacent_floats() {
    let a = 0.3f64;
    let b = f64::from_bits(a.to_bits() + 1);
    let x = vec![vec![a], vec![b], vec![a], vec![b]];
    let y = vec![0, 1, 0, 1];
    let t = DecisionTree::fit(&x, &y, TreeParams::default()).unwrap();
    assert_eq!(t.nodes.len(), 3);
    assert_eq!(t.predict(&x).unwrap(), y);
}

#[test]
fn deep_tree_fits_on_small_stack() {
    // alternating labels on one feature force a chain of width-one splits
    let n = 3000;
    let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
    let y: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let t = std::thread::Builder::new()
        .stack_size(64 * 1024)
        .spawn(move || {
            let t = DecisionTree::fit(&x, &y, TreeParams::default()).unwrap();
            assert_eq!(t.predict(&x).unwrap(), y);
            t
        })
        .unwrap()
        .join()
        .unwrap();
    assert_eq!(t.num_leaves(), n);
    assert!(t.depth() > 100);
}

/// Brute force over every tree of depth at most 2 on binary features:
/// returns the largest number of correctly classified rows.
fn best_depth2(rows: &[(Vec<u8>, usize)], features: usize) -> usize {
    fn leaf(rows: &[&(Vec<u8>, usize)]) -> usize {
        let ones = rows.iter().filter(|r| r.1 == 1).count();
        ones.max(rows.len() - ones)
    }
    fn stump(rows: &[&(Vec<u8>, usize)], features: usize) -> usize {
        let mut best = leaf(rows);
        for f in 0..features {
            let (a, b): (Vec<_>, Vec<_>) = rows.iter().partition(|r| r.0[f] == 0);
            best = best.max(leaf(&a) + leaf(&b));
        }
        best
    }
    let all: Vec<&(Vec<u8>, usize)> = rows.iter().collect();
    let mut best = stump(&all, features);
    for f in 0..features {
        let (a, b): (Vec<_>, Vec<_>) = all.iter().partition(|r| r.0[f] == 0);
        best = best.max(stump(&a, features) + stump(&b, features));
    }
    best
}

/// Every multiset of `size` items drawn from `types` kinds.
fn multisets(types: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, types: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for t in start..types {
            cur.push(t);
            rec(t, types, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, types, size, &mut Vec::new(), &mut out);
    out
}

fn decode(t: usize, features: usize) -> (Vec<u8>, usize) {
    (
        (0..features).map(|f| ((t >> f) & 1) as u8).collect(),
        (t >> features) & 1,
    )
}

fn cart_correct(rows: &[(Vec<u8>, usize)]) -> usize {
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r.0.iter().map(|&v| v as f64).collect()).collect();
    let y: Vec<usize> = rows.iter().map(|r| r.1).collect();
    let t = DecisionTree::fit(&x, &y, TreeParams::default()).unwrap();
    t.predict(&x).unwrap().iter().zip(&y).filter(|(p, l)| p == l).count()
}

#[test]
fn tree_matches_exhaustive_depth2_on_two_binary_features() {
    let mut instances = 0;
    for size in 1..=8 {
        for ms in multisets(8, size) {
            let rows: Vec<_> = ms.iter().map(|&t| decode(t, 2)).collect();
            assert_eq!(cart_correct(&rows), best_depth2(&rows, 2), "{rows:?}");
            instances += 1;
        }
    }
    assert_eq!(instances, 12869);
}

#[test]
fn tree_dominates_depth2_on_three_binary_features() {
    for size in 1..=6 {
        for ms in multisets(16, size) {
            let rows: Vec<_> = ms.iter().map(|&t| decode(t, 3)).collect();
            let cart = cart_correct(&rows);
            // an unlimited tree reaches the per-cell majority bound
            let mut cells = [[0usize; 2]; 8];
            for r in &rows {
                let cell = r.0.iter().enumerate().map(|(f, &v)| (v as usize) << f).sum::<usize>();
                cells[cell][r.1] += 1;
            }
            let bound: usize = cells.iter().map(|c| c[0].max(c[1])).sum();
            assert_eq!(cart, bound);
            assert!(cart >= best_depth2(&rows, 3));
        }
    }
}

fn random_concepts(rng: &mut ChaCha8Rng, label: usize, k: usize, with_subgraphs: bool) -> GraphConcepts {
    let n = rng.gen_range(2..6);
    let row = |rng: &mut ChaCha8Rng, w: usize| -> Vec<f64> { (0..w).map(|_| rng.gen_range(0.0..1.0)).collect() };
    GraphConcepts {
        label,
        prediction: label,
        node_concepts: (0..n).map(|_| row(rng, 3)).collect(),
        assignments: with_subgraphs.then(|| (0..n).map(|_| row(rng, k)).collect()),
        subgraph_node_concepts: with_subgraphs.then(|| (0..n).map(|_| row(rng, 2)).collect()),
        subgraph_concepts: with_subgraphs.then(|| (0..k).map(|_| row(rng, 2)).collect()),
        importance: with_subgraphs.then(|| row(rng, k)),
        graph_concept: row(rng, 2),
    }
}

#[test]
fn completeness_of_label_encoding_is_full() {
    let enc = |l: usize| if l == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
    let labels = [0, 1, 1, 0, 1, 0, 0, 1];
    let t = ConceptTable::new(
        ConceptLevel::Graph,
        labels.iter().map(|&l| enc(l)).collect(),
        labels.to_vec(),
    )
    .unwrap();
    assert_eq!(concept_completeness(&t, &t).unwrap(), 100.0);
}

#[test]
fn completeness_of_noise_is_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut table = |n: usize| {
        let enc: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        let labels = (0..n).map(|i| i % 2).collect();
        ConceptTable::new(ConceptLevel::Graph, enc, labels).unwrap()
    };
    let (train, test) = (table(800), table(800));
    let c = concept_completeness(&train, &test).unwrap();
    assert!((40.0..=60.0).contains(&c), "{c}");
}

#[test]
fn completeness_rejects_width_mismatch() {
    let a = ConceptTable::new(ConceptLevel::Graph, vec![vec![0.0]], vec![0]).unwrap();
    let b = ConceptTable::new(ConceptLevel::Graph, vec![vec![0.0, 1.0]], vec![0]).unwrap();
    assert!(concept_completeness(&a, &b).is_err());
}

#[test]
fn single_subgraph_individual_equals_concat() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gs: Vec<GraphConcepts> = (0..40).map(|i| random_concepts(&mut rng, i % 2, 1, true)).collect();
    let (train, test) = gs.split_at(30);
    let ind = subgraph_completeness(train, test, SubgraphMode::Individual).unwrap();
    let cat = subgraph_completeness(train, test, SubgraphMode::Concat).unwrap();
    assert_eq!(ind, cat);
}

#[test]
fn concat_train_accuracy_dominates_individual() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut gs: Vec<GraphConcepts> = (0..60).map(|i| random_concepts(&mut rng, i % 2, 3, true)).collect();
    // coarsen the encodings so individual trees cannot fit everything
    for g in &mut gs {
        for row in g.subgraph_concepts.as_mut().unwrap() {
            for v in row {
                *v = (*v * 2.0).floor();
            }
        }
    }
    let concat = ConceptTable::subgraph_concat(&gs, false).unwrap();
    let cat = concept_completeness(&concat, &concat).unwrap();
    for k in 0..3 {
        let t = ConceptTable::subgraph_individual(&gs, k).unwrap();
        assert!(cat >= concept_completeness(&t, &t).unwrap());
    }
}

#[test]
fn importance_mode_needs_importance() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut gs: Vec<GraphConcepts> = (0..4).map(|i| random_concepts(&mut rng, i % 2, 2, true)).collect();
    for g in &mut gs {
        g.importance = None;
    }
    assert!(subgraph_completeness(&gs, &gs, SubgraphMode::ConcatWithImportance).is_err());
    assert!(subgraph_completeness(&gs, &gs, SubgraphMode::Concat).is_ok());
    let flat: Vec<GraphConcepts> = (0..4).map(|i| random_concepts(&mut rng, i % 2, 2, false)).collect();
    assert!(subgraph_completeness(&flat, &flat, SubgraphMode::Individual).is_err());
}

#[test]
fn node_completeness_with_class_concept() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut gs: Vec<GraphConcepts> = (0..20).map(|i| random_concepts(&mut rng, i % 2, 2, true)).collect();
    for g in &mut gs {
        let code = if g.label == 1 {
            vec![0.0, 0.0, 1.0]
        } else {
            vec![1.0, 0.0, 0.0]
        };
        g.node_concepts.iter_mut().for_each(|r| *r = code.clone());
    }
    let (train, test) = gs.split_at(12);
    assert_eq!(
        node_completeness(train, test, ConceptLevel::NodeGraphSpace).unwrap(),
        100.0
    );
    let t = ConceptTable::node_level(&gs, ConceptLevel::NodeGraphSpace).unwrap();
    assert_eq!(
        t.encodings.len(),
        gs.iter().map(GraphConcepts::num_nodes).sum::<usize>()
    );
    assert!(node_completeness(train, test, ConceptLevel::NodeSubgraphSpace).is_ok());
    assert!(ConceptTable::node_level(&gs, ConceptLevel::Graph).is_err());
}

#[test]
fn assignment_strength_examples() {
    assert_eq!(assignment_strength(&[vec![0., 1.], vec![1., 0.]]).unwrap(), 1.0);
    assert!(close(
        assignment_strength(&vec![vec![0.25; 4]; 3]).unwrap(),
        0.25,
        1e-15
    ));
    assert!(close(
        assignment_strength(&[vec![0.9, 0.1], vec![0.6, 0.4]]).unwrap(),
        0.75,
        1e-15
    ));
    assert!(assignment_strength(&[]).is_err());
}

#[test]
fn conditional_strength_examples() {
    let rows = vec![vec![0.9, 0.1], vec![0.8, 0.2], vec![0.6, 0.4]];
    let c = conditional_strength(&rows).unwrap();
    assert!(close(c[0], 2.3 / 3.0, 1e-12) && c[1] == 0.0);
    assert!(close(cluster_utilisation(&c), 2.3 / 6.0, 1e-12));
    assert!(close(c[0], 0.7667, 1e-4) && close(cluster_utilisation(&c), 0.3833, 1e-4));

    let collapsed = vec![vec![1.0, 0.0, 0.0, 0.0]; 5];
    let c = conditional_strength(&collapsed).unwrap();
    assert_eq!(c, vec![1.0, 0.0, 0.0, 0.0]);
    assert_eq!(cluster_utilisation(&c), 0.25);

    let balanced: Vec<Vec<f64>> = (0..8)
        .map(|i| {
            let mut r = vec![0.0; 4];
            r[i % 4] = 1.0;
            r
        })
        .collect();
    assert_eq!(cluster_utilisation(&conditional_strength(&balanced).unwrap()), 1.0);

    let third = 1.0f64 / 3.0;
    let uniform = vec![vec![third; 3]; 2];
    assert!(close(
        cluster_utilisation(&conditional_strength(&uniform).unwrap()),
        third,
        1e-15
    ));
}

#[test]
fn consistency_examples() {
    let s = |v: &str| v.to_string();
    let codes: Vec<String> = (0..20).map(|i| if i < 10 { s("10") } else { s("01") }).collect();
    let clusters: Vec<usize> = (0..20)
        .map(|i| {
            if i < 10 {
                1
            } else if i < 16 {
                0
            } else {
                1
            }
        })
        .collect();
    assert!(close(subgraph_consistency(&codes, &clusters).unwrap(), 0.8, 1e-15));
    assert_eq!(subgraph_consistency(&[s("1"), s("1")], &[0, 1]).unwrap(), 0.5);
    assert_eq!(
        subgraph_consistency(&[s("1"), s("0"), s("1")], &[2, 0, 2]).unwrap(),
        1.0
    );
    assert!(subgraph_consistency(&[], &[]).is_err());
}

#[test]
fn concept_codes_binarize_at_half() {
    assert_eq!(concept_code(&[1.0, 0.5, 0.49, 0.0]), "1100");
    assert_eq!(argmax(&[0.2, 0.7, 0.7]), 1);
}

#[test]
fn ci95_examples() {
    let same = ci95(&[0.7, 0.7, 0.7], (0.0, 1.0)).unwrap();
    assert_eq!((same.low, same.high), (0.7, 0.7));

    let pair = ci95(&[0.0, 1.0], (0.0, 1.0)).unwrap();
    assert_eq!(pair.mean, 0.5);
    assert_eq!((pair.low, pair.high), (0.0, 1.0));
    let open = ci95(&[0.0, 1.0], (-10.0, 10.0)).unwrap();
    assert!(close(open.high - 0.5, 1.96 * 0.5f64.sqrt() / 2f64.sqrt(), 1e-12));

    // sd = sqrt(10/4), sd/sqrt(5) = sqrt(1/2)
    let five = ci95(&[1., 2., 3., 4., 5.], (f64::NEG_INFINITY, f64::INFINITY)).unwrap();
    assert_eq!(five.mean, 3.0);
    assert!(close(five.high - 3.0, 1.385_929_291, 1e-9));
    assert!(close(3.0 - five.low, 1.385_929_291, 1e-9));

    assert!(ci95(&[1.0], (0.0, 1.0)).is_err());
    assert_eq!(summarize(&[42.0], (0.0, 100.0)).unwrap(), Interval::point(42.0));
}

#[test]
fn cell_format() {
    let cell = Interval {
        mean: 99.4,
        low: 98.594,
        high: 100.0,
    }
    .cell();
    assert_eq!(cell, "99.40 (98.59, 100.00)");
}

fn prob_rows(k: usize, n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.001f64..1.0, k), 1..n).prop_map(|rows| {
        rows.into_iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            })
            .collect()
    })
}

/// Checks that every root-to-leaf threshold chain leaves a non-empty interval.
fn paths_consistent(t: &DecisionTree, id: usize, bounds: &mut Vec<(f64, f64)>) -> bool {
    match &t.nodes[id] {
        TreeNode::Leaf { .. } => bounds.iter().all(|(lo, hi)| lo < hi),
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let saved = bounds[*feature];
            bounds[*feature].1 = saved.1.min(*threshold);
            let ok_left = paths_consistent(t, *left, bounds);
            bounds[*feature] = (saved.0.max(*threshold), saved.1);
            let ok_right = paths_consistent(t, *right, bounds);
            bounds[*feature] = saved;
            ok_left && ok_right
        }
    }
}

proptest! {
    #[test]
    fn strength_in_unit_band(rows in (2usize..6).prop_flat_map(|k| prob_rows(k, 30))) {
        let k = rows[0].len() as f64;
        let s = assignment_strength(&rows).unwrap();
        prop_assert!(s >= 1.0 / k - 1e-12 && s <= 1.0 + 1e-12);
        for c in conditional_strength(&rows).unwrap() {
            prop_assert!(c == 0.0 || (c >= 1.0 / k - 1e-12 && c <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn consistency_is_one_for_functional_maps(
        codes in prop::collection::vec(0usize..6, 1..60),
        table in prop::collection::vec(0usize..4, 6),
    ) {
        let names: Vec<String> = codes.iter().map(|c| format!("{c:03b}")).collect();
        let clusters: Vec<usize> = codes.iter().map(|&c| table[c]).collect();
        prop_assert_eq!(subgraph_consistency(&names, &clusters).unwrap(), 1.0);
    }

    #[test]
    fn consistency_in_unit_interval_and_pure(
        pairs in prop::collection::vec((0usize..4, 0usize..3), 1..60),
    ) {
        let names: Vec<String> = pairs.iter().map(|p| p.0.to_string()).collect();
        let clusters: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let a = subgraph_consistency(&names, &clusters).unwrap();
        let mut rev_n = names.clone();
        let mut rev_c = clusters.clone();
        rev_n.reverse();
        rev_c.reverse();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(a, subgraph_consistency(&rev_n, &rev_c).unwrap());
    }

    #[test]
    fn tree_paths_are_consistent(
        rows in prop::collection::vec((prop::collection::vec(-3.0f64..3.0, 3), 0usize..3), 1..40),
    ) {
        let x: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
        let y: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let t = DecisionTree::fit(&x, &y, TreeParams::default()).unwrap();
        prop_assert!(paths_consistent(&t, 0, &mut vec![(f64::NEG_INFINITY, f64::INFINITY); 3]));
        prop_assert_eq!(t.predict(&x).unwrap(), t.predict(&x).unwrap());
        let again = DecisionTree::fit(&x, &y, TreeParams::default()).unwrap();
        prop_assert_eq!(again, t);
    }
}
