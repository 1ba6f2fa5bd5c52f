//! Finite-difference audits for every layer type. Each returns the max
//! relative error over all parameters and inputs of a random instance.

use bggan::nn::balancer::Balancer;
use bggan::nn::dense::{cross_entropy, dense_softmax_forward, Classifier};
use bggan::nn::discriminator::Discriminator;
use bggan::nn::innergcn::{innergcn_backward, innergcn_forward, matrix_to_tensor, tensor_to_matrix};
use bggan::nn::{gcn_backward, gcn_forward, Activation};
use bggan::spectral::{normalized_laplacian, spectral_basis, SliceKind};
use bggan::tensor::Tensor3;
use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;

use super::{max_rel_error, numeric_grad, random_adjacency, random_matrix, rng};

fn weighted_sum(m: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    m.component_mul(c).sum()
}

pub fn gcn(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, d, h) = (5, 3, 4);
    let x = random_matrix(n, d, &mut r);
    let adj = random_adjacency(n, &mut r);
    let w = random_matrix(d, h, &mut r);
    let c = random_matrix(n, h, &mut r);
    let loss = |x: &DMatrix<f64>, adj: &DMatrix<f64>, w: &DMatrix<f64>| {
        weighted_sum(&gcn_forward(x, adj, w, Activation::Relu).unwrap().0, &c)
    };
    let (_, cache) = gcn_forward(&x, &adj, &w, Activation::Relu).unwrap();
    let g = gcn_backward(&cache, &w, &c).unwrap();
    let ex = max_rel_error(&g.x, &numeric_grad(&x, |v| loss(v, &adj, &w)));
    let ew = max_rel_error(&g.w, &numeric_grad(&w, |v| loss(&x, &adj, v)));
    let ea = max_rel_error(&g.adj, &numeric_grad(&adj, |v| loss(&x, v, &w)));
    ex.max(ew).max(ea)
}

pub fn random_basis(n: usize, r: usize, rng: &mut ChaCha8Rng) -> bggan::spectral::SpectralBasis {
    let slices: Vec<DMatrix<f64>> = (0..r).map(|_| random_adjacency(n, rng)).collect();
    let lap = normalized_laplacian(&Tensor3::from_real_slices(&slices).unwrap(), &vec![SliceKind::Structural; r]).unwrap();
    spectral_basis(&lap).unwrap()
}

pub fn innergcn(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, d, slices) = (3, 2, 3);
    let basis = random_basis(n, slices, &mut r);
    let x = random_matrix(n, d * slices, &mut r);
    let g = random_matrix(n, d * slices, &mut r);
    let c = random_matrix(n, d * slices, &mut r);
    let loss = |x: &DMatrix<f64>, g: &DMatrix<f64>| {
        let (y, _) = innergcn_forward(&matrix_to_tensor(x, slices), &matrix_to_tensor(g, slices), &basis).unwrap();
        weighted_sum(&tensor_to_matrix(&y), &c)
    };
    let (_, cache) = innergcn_forward(&matrix_to_tensor(&x, slices), &matrix_to_tensor(&g, slices), &basis).unwrap();
    let (gx, gg) = innergcn_backward(&cache, &basis, &matrix_to_tensor(&c, slices)).unwrap();
    let ex = max_rel_error(&tensor_to_matrix(&gx), &numeric_grad(&x, |v| loss(v, &g)));
    let eg = max_rel_error(&tensor_to_matrix(&gg), &numeric_grad(&g, |v| loss(&x, v)));
    ex.max(eg)
}

/// Dense + softmax + cross-entropy, both the bare layer and the full
/// classifier head (dropout off).
pub fn dense_softmax(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n_in, classes) = (6, 3);
    let f = random_matrix(1, n_in, &mut r);
    let w = random_matrix(n_in, classes, &mut r);
    let b = random_matrix(1, classes, &mut r);
    let label = (seed % classes as u64) as usize;
    let loss = |f: &DMatrix<f64>, w: &DMatrix<f64>, b: &DMatrix<f64>| {
        cross_entropy(&dense_softmax_forward(f, w, b).unwrap(), label).unwrap()
    };
    let p = dense_softmax_forward(&f, &w, &b).unwrap();
    let mut gl = DMatrix::from_row_slice(1, classes, &p);
    gl[label] -= 1.0;
    let e1 = max_rel_error(&(f.transpose() * &gl), &numeric_grad(&w, |v| loss(&f, v, &b)))
        .max(max_rel_error(&gl, &numeric_grad(&b, |v| loss(&f, &w, v))))
        .max(max_rel_error(&(&gl * w.transpose()), &numeric_grad(&f, |v| loss(v, &w, &b))));

    let (nodes, width) = (3, 2);
    let head = Classifier::new(nodes * width, 5, classes, &mut r);
    let latent = random_matrix(nodes, width, &mut r);
    let none: Option<(f64, &mut ChaCha8Rng)> = None;
    let cache = head.forward(&latent, none).unwrap();
    let (grads, g_lat) = head.backward(&cache, label, (nodes, width)).unwrap();
    let head_loss = |h: &Classifier, lat: &DMatrix<f64>| {
        let none: Option<(f64, &mut ChaCha8Rng)> = None;
        cross_entropy(&h.forward(lat, none).unwrap().probs, label).unwrap()
    };
    let mut e2 = max_rel_error(&g_lat, &numeric_grad(&latent, |v| head_loss(&head, v)));
    for (idx, g) in grads.iter().enumerate() {
        let base = [&head.w1, &head.b1, &head.w2, &head.b2][idx].value.clone();
        let num = numeric_grad(&base, |v| {
            let mut h = head.clone();
            [&mut h.w1, &mut h.b1, &mut h.w2, &mut h.b2][idx].value = v.clone();
            head_loss(&h, &latent)
        });
        e2 = e2.max(max_rel_error(g, &num));
    }
    e1.max(e2)
}

pub fn discriminator(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, d, h) = (5, 4, 3);
    let disc = Discriminator::new(d, h, &mut r);
    let adj = random_adjacency(n, &mut r);
    let feats = random_matrix(n, d, &mut r);
    let cache = disc.forward(&adj, &feats).unwrap();
    let g = disc.backward(&cache, 1.0).unwrap();
    let mut err = max_rel_error(&g.adj, &numeric_grad(&adj, |v| disc.score(v, &feats).unwrap()))
        .max(max_rel_error(&g.feats, &numeric_grad(&feats, |v| disc.score(&adj, v).unwrap())));
    for idx in 0..4 {
        let base = [&disc.w1, &disc.w2, &disc.w_out, &disc.b_out][idx].value.clone();
        let num = numeric_grad(&base, |v| {
            let mut dd = disc.clone();
            [&mut dd.w1, &mut dd.w2, &mut dd.w_out, &mut dd.b_out][idx].value = v.clone();
            dd.score(&adj, &feats).unwrap()
        });
        err = err.max(max_rel_error(&g.params[idx], &num));
    }
    err
}

pub fn balancer(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = 5;
    let bal = Balancer::new(4, &mut r);
    let x = random_matrix(n, n, &mut r);
    let z = random_matrix(n, n, &mut r);
    let c = random_matrix(n, n, &mut r);
    let (_, cache) = bal.forward(&x, &z).unwrap();
    let g = bal.backward(&cache, &c).unwrap();
    let loss = |b: &Balancer, x: &DMatrix<f64>, z: &DMatrix<f64>| weighted_sum(&b.forward(x, z).unwrap().0, &c);
    let mut err = max_rel_error(&g.real_target, &numeric_grad(&x, |v| loss(&bal, v, &z)))
        .max(max_rel_error(&g.other_domain, &numeric_grad(&z, |v| loss(&bal, &x, v))));
    for idx in 0..4 {
        let base = [&bal.k1, &bal.b1, &bal.k2, &bal.b2][idx].value.clone();
        let num = numeric_grad(&base, |v| {
            let mut bb = bal.clone();
            [&mut bb.k1, &mut bb.b1, &mut bb.k2, &mut bb.b2][idx].value = v.clone();
            loss(&bb, &x, &z)
        });
        err = err.max(max_rel_error(&g.params[idx], &num));
    }
    err
}
