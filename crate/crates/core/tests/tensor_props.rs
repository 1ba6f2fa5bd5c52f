use bggan::tensor::*;
use nalgebra::{Complex, DMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(n1: usize, n2: usize, r: usize, seed: u64) -> Tensor3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor3::from_fn(n1, n2, r, |_, _, _| rng.random_range(-1.0..1.0))
}

// C(:,:,k) = sum_j A(:,:,(k - j) mod r) B(:,:,j), the slice-level reading
// of bcirc(A) * unfold(B).
fn circular_oracle(a: &Tensor3, b: &Tensor3) -> Tensor3 {
    let (n1, n2, r) = a.dims();
    let n3 = b.dims().1;
    let mut c = Tensor3::zeros(n1, n3, r);
    for k in 0..r {
        for j in 0..r {
            let ka = (k + r - j) % r;
            for i in 0..n1 {
                for l in 0..n3 {
                    let mut acc = c.get(i, l, k);
                    for m in 0..n2 {
                        acc += a.get(i, m, ka) * b.get(m, l, j);
                    }
                    c.set(i, l, k, acc);
                }
            }
        }
    }
    c
}

fn dims() -> impl Strategy<Value = (usize, usize, usize, usize)> {
    (1usize..=6, 1usize..=6, 1usize..=6, 1usize..=5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn dft_roundtrip(n1 in 1usize..=16, n2 in 1usize..=16, r in 1usize..=5, seed in any::<u64>()) {
        let t = random_tensor(n1, n2, r, seed);
        prop_assert!(idft3(&dft3(&t)).max_abs_diff(&t) < 1e-12);
    }

    #[test]
    fn fourier_product_matches_circular_oracle((n1, n2, n3, r) in dims(), seed in any::<u64>()) {
        let a = random_tensor(n1, n2, r, seed);
        let b = random_tensor(n2, n3, r, seed.wrapping_add(1));
        let oracle = circular_oracle(&a, &b);
        prop_assert!(tprod(&a, &b).unwrap().max_abs_diff(&oracle) < 1e-9);
        prop_assert!(tprod_block(&a, &b).unwrap().max_abs_diff(&oracle) < 1e-9);
    }

    #[test]
    fn product_is_associative((n1, n2, n3, r) in dims(), n4 in 1usize..=6, seed in any::<u64>()) {
        let a = random_tensor(n1, n2, r, seed);
        let b = random_tensor(n2, n3, r, seed ^ 0x55);
        let c = random_tensor(n3, n4, r, seed ^ 0xaa);
        let left = tprod(&tprod(&a, &b).unwrap(), &c).unwrap();
        let right = tprod(&a, &tprod(&b, &c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-9);
    }

    #[test]
    fn product_of_real_tensors_is_real((n1, n2, n3, r) in dims(), seed in any::<u64>()) {
        let a = random_tensor(n1, n2, r, seed);
        let b = random_tensor(n2, n3, r, seed ^ 7);
        let c = tprod(&a, &b).unwrap();
        prop_assert!(c.is_real());
        prop_assert!(dft3(&a).is_conjugate_symmetric(1e-12));
    }

    #[test]
    fn transpose_reverses_products((n1, n2, n3, r) in dims(), seed in any::<u64>()) {
        let a = random_tensor(n1, n2, r, seed);
        let b = random_tensor(n2, n3, r, seed ^ 3);
        let lhs = ttranspose(&tprod(&a, &b).unwrap());
        let rhs = tprod(&ttranspose(&b), &ttranspose(&a)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-9);
        prop_assert_eq!(ttranspose(&ttranspose(&a)), a);
    }

    #[test]
    fn identity_is_neutral(n1 in 1usize..=6, n2 in 1usize..=6, r in 1usize..=5, seed in any::<u64>()) {
        let a = random_tensor(n1, n2, r, seed);
        prop_assert!(tprod(&Tensor3::identity(n1, r), &a).unwrap().max_abs_diff(&a) < 1e-12);
        prop_assert!(tprod(&a, &Tensor3::identity(n2, r)).unwrap().max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn fold_unfold_roundtrip(n1 in 1usize..=6, n2 in 1usize..=6, r in 1usize..=5, seed in any::<u64>()) {
        let b = random_tensor(n1, n2, r, seed);
        prop_assert_eq!(unfold(&fold1(&b), (n1, n2, r)).unwrap(), b.clone());
        prop_assert_eq!(unfold(&fold2(&b), (n1, n2, r)).unwrap(), b);
    }
}

#[test]
fn bcirc_has_circulant_block_layout() {
    let a = random_tensor(2, 3, 4, 9);
    let m = fold2(&a);
    assert_eq!(m.shape(), (8, 12));
    for bi in 0..4 {
        for bj in 0..4 {
            let k = (bi + 4 - bj) % 4;
            let block = m.view((bi * 2, bj * 3), (2, 3)).into_owned();
            assert_eq!(block, a.slice(k), "block ({bi}, {bj})");
        }
    }
}

#[test]
fn hand_computed_two_slice_product() {
    // r = 2, 1x1 tubes: circular convolution of (1, 2) and (3, 4) is (1*3 + 2*4, 1*4 + 2*3)
    let a = Tensor3::from_real_slices(&[DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 2.0)]).unwrap();
    let b = Tensor3::from_real_slices(&[DMatrix::from_element(1, 1, 3.0), DMatrix::from_element(1, 1, 4.0)]).unwrap();
    let c = tprod(&a, &b).unwrap();
    assert!((c.get(0, 0, 0) - Complex::new(11.0, 0.0)).norm() < 1e-12);
    assert!((c.get(0, 0, 1) - Complex::new(10.0, 0.0)).norm() < 1e-12);
}
