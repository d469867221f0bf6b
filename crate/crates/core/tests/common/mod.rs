#![allow(dead_code)]

pub mod oracles;

use kern_core::corpus::{generate_synthetic_corpus, make_samples, Corpus, Sample, SynthConfig, WindowSpec};
use kern_core::gradkernel::{finite_diff_check, GradError, Graph, LstmCellParams, NodeId, ParamStore, Tensor};
use kern_core::kern::{sample_triplet, KernModel, ModelDims};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-5;

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// `Σ (node ⊙ R)` for a fixed random `R`, so every output coordinate
/// carries a distinct weight.
pub fn weighted_sum(g: &mut Graph, node: NodeId, weights: &Tensor) -> Result<NodeId, GradError> {
    let r = g.constant(weights.clone());
    let prod = g.mul(node, r)?;
    Ok(g.sum_all(prod))
}

pub fn fd_error(store: &mut ParamStore, loss: impl FnMut(&ParamStore, &mut Graph) -> Result<NodeId, GradError>) -> f64 {
    finite_diff_check(store, FD_EPS, loss).unwrap().max_relative_error
}

pub fn three_step_unroll_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (input, hidden, batch) = (3, 4, 2);
    let mut s = ParamStore::new();
    let cell = LstmCellParams::init(&mut s, "cell", input, hidden, &mut rng).unwrap();
    let xs: Vec<Tensor> = (0..3).map(|_| uniform(&mut rng, batch, input)).collect();
    let head = uniform(&mut rng, batch, hidden);
    fd_error(&mut s, |st, g| {
        let leaves = cell.leaves(g, st);
        let mut h = g.constant(Tensor::zeros(batch, hidden));
        let mut c = g.constant(Tensor::zeros(batch, hidden));
        for x in &xs {
            let xn = g.constant(x.clone());
            (h, c) = cell.step(g, &leaves, xn, h, c)?;
        }
        weighted_sum(g, h, &head)
    })
}

/// 2 groups × 3 elements (one category → attribute → value chain).
pub fn micro_corpus() -> Corpus {
    let cfg = SynthConfig {
        cities: 2,
        age_bands: 1,
        genders: 1,
        categories: 1,
        attributes_per_category: 1,
        values_per_attribute: 1,
        length: 16,
        similar_pairs: 0,
        opposite_pairs: 0,
        ..SynthConfig::default()
    };
    generate_synthetic_corpus(&cfg, 4).unwrap()
}

/// D=3, H=5
pub fn micro_dims(corpus: &Corpus) -> ModelDims {
    ModelDims {
        cities: corpus.cities.len(),
        elements: corpus.elements.len(),
        grid_period: corpus.grid_period,
        embed_dim: 3,
        hidden: 5,
    }
}

/// Last window of every micro-corpus series (T=8, T'=4) plus two triplets
/// drawn from them.
pub fn micro_batch(corpus: &Corpus) -> (Vec<Sample>, Vec<(usize, usize, usize)>) {
    let window = WindowSpec::new(8, 4, 1).unwrap();
    let samples: Vec<Sample> = corpus
        .series
        .iter()
        .enumerate()
        .map(|(i, s)| make_samples(i, s, window, corpus.grid_period).unwrap().pop().unwrap())
        .collect();
    let windows: Vec<Vec<f64>> = samples.iter().map(Sample::full).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let triplets = (0..2).map(|_| sample_triplet(&windows, &mut rng).unwrap()).collect();
    (samples, triplets)
}

/// Finite-difference error of the full objective (sequence losses plus
/// triplet term, message passing on) over every parameter.
pub fn full_model_error() -> f64 {
    let corpus = micro_corpus();
    assert_eq!((corpus.groups.len(), corpus.elements.len()), (2, 3));
    let dims = micro_dims(&corpus);
    let taxonomy = corpus.taxonomy.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let model = KernModel::new(dims, taxonomy.clone(), None, true, &mut rng).unwrap();
    let (samples, triplets) = micro_batch(&corpus);
    let refs: Vec<&Sample> = samples.iter().collect();
    let mut store = model.store().clone();
    fd_error(&mut store, |st, g| {
        let m = KernModel::from_store(st.clone(), dims, taxonomy.clone(), true).expect("same layout");
        Ok(m.objective_node(g, &corpus, &refs, &triplets, 0.5).expect("valid batch"))
    })
}

/// Solves `(XᵀX + μ·P) β = Xᵀy` by Gaussian elimination with partial
/// pivoting; `P` is the identity without its first entry when
/// `free_first` is set.
pub fn normal_equations(rows: &[Vec<f64>], y: &[f64], ridge: f64, free_first: bool) -> Vec<f64> {
    let k = rows[0].len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (row, &target) in rows.iter().zip(y) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += row[i] * row[j];
            }
            a[i][k] += row[i] * target;
        }
    }
    for (i, r) in a.iter_mut().enumerate() {
        if !(free_first && i == 0) {
            r[i] += ridge;
        }
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..k).map(|i| a[i][k] / a[i][i]).collect()
}
