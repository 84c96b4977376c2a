use fofreg::wavelet::{build_operator, dwt_rows, idwt_rows, project_surface, Band, WaveletOperator, WaveletSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Deepest valid decomposition no deeper than `want`.
fn spec_for(vm: usize, want: usize, len: usize) -> WaveletSpec {
    (1..=want.max(1))
        .rev()
        .map(|levels| WaveletSpec::daubechies(vm, levels, len))
        .find(|s| s.validate().is_ok())
        .unwrap_or_else(|| WaveletSpec::daubechies(1, 1, len))
}

fn op(vm: usize, want: usize, len: usize) -> WaveletOperator {
    build_operator(spec_for(vm, want, len)).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn perfect_reconstruction(
        vm in 1usize..=10,
        levels in 1usize..=10,
        signal in prop::collection::vec(-1e6f64..1e6, 4..=1024),
    ) {
        let op = op(vm, levels, signal.len());
        let back = op.inverse(&op.forward(&signal).unwrap()).unwrap();
        let err = signal.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // relative to the magnitude of the entries
        prop_assert!(err < 1e-10 * 1e6, "max error {err}");
        let scaled: Vec<f64> = signal.iter().map(|v| v / 1e6).collect();
        let back = op.inverse(&op.forward(&scaled).unwrap()).unwrap();
        let err = scaled.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10, "max error {err}");
    }

    #[test]
    fn energy_is_preserved(
        vm in 1usize..=10,
        levels in 1usize..=8,
        signal in prop::collection::vec(-1.0f64..1.0, 4..=512),
    ) {
        let op = op(vm, levels, signal.len());
        let coeffs = op.forward(&signal).unwrap();
        prop_assert_eq!(coeffs.len(), op.padded_length());
        // zero padding adds no energy
        prop_assert!((norm(&signal) - norm(&coeffs)).abs() < 1e-10);
    }

    #[test]
    fn transform_is_linear(
        vm in 1usize..=6,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        xy in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8..=300),
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        let op = op(vm, 4, x.len());
        let combo: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let lhs = op.forward(&combo).unwrap();
        let (fx, fy) = (op.forward(&x).unwrap(), op.forward(&y).unwrap());
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (a * fx[i] + b * fy[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn matrix_is_orthonormal(vm in 1usize..=10, levels in 1usize..=6, pow in 2u32..=7) {
        let len = 1usize << pow;
        let op = op(vm, levels, len);
        let w = op.matrix();
        // short inputs are padded further to admit the requested depth
        let n = op.padded_length();
        let gram = w * w.transpose();
        let err = (gram - DMatrix::identity(n, n)).amax();
        prop_assert!(err < 1e-10, "orthonormality error {err}");
    }

    #[test]
    fn polynomials_vanish_in_interior_details(
        vm in 1usize..=10,
        pow in 5u32..=10,
        coef in prop::collection::vec(-1.0f64..1.0, 10),
    ) {
        let n = 1usize << pow;
        let op = op(vm, 4, n);
        // degree vm - 1 polynomial on [0, 1)
        let signal: Vec<f64> = (0..n)
            .map(|i| {
                let x = i as f64 / n as f64;
                coef[..vm].iter().rev().fold(0.0, |acc, c| acc * x + c)
            })
            .collect();
        let coeffs = op.forward(&signal).unwrap();
        for (flat, c) in coeffs.iter().enumerate() {
            let idx = op.index(flat);
            if matches!(idx.band, Band::Detail(_)) && op.is_interior(idx) {
                prop_assert!(c.abs() < 1e-8, "coefficient {idx:?} = {c}");
            }
        }
    }

    #[test]
    fn row_transforms_round_trip(
        rows in 1usize..=6,
        len in 4usize..=200,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let op = op(4, 6, len);
        let x = DMatrix::from_fn(rows, len, |_, _| rng.gen_range(-10.0..10.0));
        let back = idwt_rows(&dwt_rows(&x, &op).unwrap(), &op).unwrap();
        prop_assert!((back - &x).amax() < 1e-10);
    }
}

#[test]
fn projection_inverts_two_sided_transform() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let (t, s) = (37, 23);
    let phi = op(4, 3, t);
    let omega = op(2, 3, s);
    let b = DMatrix::from_fn(t, s, |_, _| rng.gen_range(-1.0..1.0));
    // transform columns with phi, then rows with omega
    let cols = dwt_rows(&b.transpose(), &phi).unwrap().transpose();
    let beta_star = dwt_rows(&cols, &omega).unwrap();
    let back = project_surface(&beta_star, &phi, &omega).unwrap();
    assert!((back - b).amax() < 1e-10);
}

#[test]
fn projection_matches_matrix_path() {
    let phi = op(4, 3, 20);
    let omega = op(3, 2, 12);
    let (tp, sp) = (phi.padded_length(), omega.padded_length());
    let beta_star = DMatrix::from_fn(tp, sp, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
    let full = phi.matrix().transpose() * &beta_star * omega.matrix();
    let direct = project_surface(&beta_star, &phi, &omega).unwrap();
    let expect = full.view((0, 0), (20, 12)).into_owned();
    assert!((direct - expect).amax() < 1e-10);
}
