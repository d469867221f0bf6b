mod common;

use common::{fd_error, uniform, weighted_sum};
use kern_core::corpus::{ElementKind, FashionElement};
use kern_core::gradkernel::{Graph, ParamStore, Tensor};
use kern_core::taxonomy::{build_taxonomy, message_pass, message_pass_graph, RelationWeights, Taxonomy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Category → attribute → value tree with the given branching per node.
fn tree(shape: &[Vec<usize>]) -> Taxonomy {
    let mut elements = Vec::new();
    let mut edges = Vec::new();
    let add = |name: String, kind: ElementKind, elements: &mut Vec<FashionElement>| {
        elements.push(FashionElement {
            id: elements.len(),
            name: name.clone(),
            kind,
        });
        name
    };
    for (c, attrs) in shape.iter().enumerate() {
        let cat = add(format!("c{c}"), ElementKind::Category, &mut elements);
        for (a, &values) in attrs.iter().enumerate() {
            let attr = add(format!("c{c}a{a}"), ElementKind::Attribute, &mut elements);
            edges.push((cat.clone(), attr.clone()));
            for v in 0..values {
                let val = add(format!("c{c}a{a}v{v}"), ElementKind::AttributeValue, &mut elements);
                edges.push((attr.clone(), val));
            }
        }
    }
    build_taxonomy(&edges, &elements).unwrap()
}

fn shape_strategy() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0usize..4, 0..4), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn message_pass_is_linear_in_embeddings(
        shape in shape_strategy(),
        alpha in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let tax = tree(&shape);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = uniform(&mut rng, tax.node_count(), 4).to_rows();
        let weights = RelationWeights::from_vec(uniform(&mut rng, 1, tax.edge_count()).data().to_vec());
        let scaled: Vec<Vec<f64>> = table.iter().map(|r| r.iter().map(|v| alpha * v).collect()).collect();
        let a = message_pass(&scaled, &tax, &weights).unwrap();
        let b = message_pass(&table, &tax, &weights).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!((x - alpha * y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn leaves_are_unchanged(shape in shape_strategy(), seed in any::<u64>()) {
        let tax = tree(&shape);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = uniform(&mut rng, tax.node_count(), 3).to_rows();
        let out = message_pass(&table, &tax, &RelationWeights::uniform(&tax)).unwrap();
        for node in 0..tax.node_count() {
            if tax.children(node).is_empty() {
                prop_assert_eq!(&out[node], &table[node]);
            }
        }
    }

    #[test]
    fn gradients_match_central_differences(shape in shape_strategy(), seed in any::<u64>()) {
        let tax = tree(&shape);
        prop_assume!(tax.edge_count() > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let table = store.insert("table", uniform(&mut rng, tax.node_count(), 3)).unwrap();
        let w = store.insert("w", uniform(&mut rng, 1, tax.edge_count())).unwrap();
        let r = uniform(&mut rng, tax.node_count(), 3);
        let err = fd_error(&mut store, |st, g: &mut Graph| {
            let (t, wn) = (g.param(st, table), g.param(st, w));
            let out = message_pass_graph(g, t, wn, &tax)?;
            weighted_sum(g, out, &r)
        });
        prop_assert!(err < 1e-4, "{}", err);
    }

    #[test]
    fn initial_weights_sum_to_one_per_parent(
        shape in shape_strategy(),
        counts in prop::collection::vec(0.0f64..5.0, 64),
    ) {
        let tax = tree(&shape);
        let counts = &counts[..tax.node_count()];
        for weights in [RelationWeights::uniform(&tax), RelationWeights::from_frequencies(&tax, counts)] {
            for (_, sum) in weights.parent_sums(&tax) {
                prop_assert!((sum - 1.0).abs() <= 1e-12, "{}", sum);
            }
        }
    }
}

#[test]
fn zero_children_leave_parent_unchanged() {
    let tax = tree(&[vec![2, 1]]);
    let mut table = vec![vec![0.0; 2]; tax.node_count()];
    table[0] = vec![0.7, -0.2];
    let out = message_pass(&table, &tax, &RelationWeights::uniform(&tax)).unwrap();
    assert_eq!(out[0], vec![0.7, -0.2]);
    let t = Tensor::from_rows(&out).unwrap();
    assert_eq!(t.rows(), tax.node_count());
}
