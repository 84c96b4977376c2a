use fofreg::model::{
    estimate_hyperparameters, fit_column, fit_ffr, Design, EbOptions, FitOptions, FunctionalDataset, McmcConfig,
    SamplerOptions, SpikeSlabHyper,
};
use fofreg::wavelet::{build_operator, dwt_rows, project_surface, WaveletSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Smooth-ish random exposure curves and outcomes driven by a bump surface.
fn toy_dataset(seed: u64, n: usize, t: usize, s: usize, amplitude: f64, noise: f64) -> FunctionalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, t);
    for i in 0..n {
        let mut prev = normal(&mut rng);
        for j in 0..t {
            prev = 0.7 * prev + normal(&mut rng);
            x[(i, j)] = prev;
        }
    }
    let beta = DMatrix::from_fn(t, s, |ti, si| {
        if (t / 4..t / 2).contains(&ti) && (s / 4..s / 2).contains(&si) {
            amplitude
        } else {
            0.0
        }
    });
    let mut y = &x * &beta;
    y.iter_mut().for_each(|v| *v += noise * normal(&mut rng));
    FunctionalDataset::new(y, x).unwrap()
}

fn small_mcmc(seed: u64) -> McmcConfig {
    McmcConfig { total_draws: 300, burn_in: 100, seed, thin: 1 }
}

/// Batch-means standard error of the mean of a correlated series.
fn batch_se(series: &[f64], batches: usize) -> f64 {
    let len = series.len() / batches;
    let means: Vec<f64> = series.chunks_exact(len).map(|c| c.iter().sum::<f64>() / len as f64).collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

#[test]
fn forced_inclusion_matches_conjugate_posterior() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, p) = (60, 4);
    // correlated predictors so the Gibbs sweep actually mixes
    let mut x = DMatrix::from_fn(n, p, |_, _| normal(&mut rng));
    for i in 0..n {
        x[(i, 1)] += 0.6 * x[(i, 0)];
    }
    let truth = [0.8, -0.5, 0.0, 0.3];
    let sigma2: f64 = 0.5;
    let y: Vec<f64> =
        (0..n).map(|i| (0..p).map(|k| x[(i, k)] * truth[k]).sum::<f64>() + sigma2.sqrt() * normal(&mut rng)).collect();
    let tau = 2.0;
    let hyper = SpikeSlabHyper::uniform(p, 1, 0.5, tau);
    let design = Design::new(x.clone(), DMatrix::zeros(n, 0)).unwrap();
    let mcmc = McmcConfig { total_draws: 11_000, burn_in: 1_000, seed: 99, thin: 1 };
    let opts = SamplerOptions { force_include: true, fixed_sigma2: Some(sigma2) };
    let draws = fit_column(&y, &design, &hyper, 0, &mcmc, 0, opts, "oracle").unwrap();
    assert_eq!(draws.draws, 10_000);

    // closed form: precision X'X / s2 + I / tau, mean = cov X'y / s2
    let precision = x.transpose() * &x / sigma2 + DMatrix::identity(p, p) / tau;
    let cov = precision.try_inverse().unwrap();
    let mean = &cov * (x.transpose() * DVector::from_column_slice(&y)) / sigma2;

    for k in 0..p {
        let series: Vec<f64> = (0..draws.draws).map(|m| draws.beta_draw(m)[k]).collect();
        let avg = series.iter().sum::<f64>() / series.len() as f64;
        let se = batch_se(&series, 50);
        assert!((avg - mean[k]).abs() < 3.0 * se, "coefficient {k}: {avg} vs {} (se {se})", mean[k]);

        let sq: Vec<f64> = series.iter().map(|b| (b - mean[k]).powi(2)).collect();
        let var = sq.iter().sum::<f64>() / sq.len() as f64;
        let var_se = batch_se(&sq, 50);
        assert!(
            (var - cov[(k, k)]).abs() < 3.0 * var_se,
            "coefficient {k}: variance {var} vs {} (se {var_se})",
            cov[(k, k)]
        );
    }
}

#[test]
fn surface_draws_are_projected_wavelet_draws() {
    let ds = toy_dataset(1, 80, 20, 12, 0.5, 1.0);
    let t_spec = WaveletSpec::daubechies(2, 2, 20);
    let s_spec = WaveletSpec::daubechies(2, 2, 12);
    let opts = FitOptions { keep_wavelet: true, ..Default::default() };
    let fit = fit_ffr(&ds, &t_spec, &s_spec, &small_mcmc(5), &opts).unwrap();
    let wav = fit.wavelet.as_ref().unwrap();
    let (phi, omega) = (build_operator(t_spec).unwrap(), build_operator(s_spec).unwrap());
    for m in [0, 57, fit.draws() - 1] {
        let beta_star = DMatrix::from_column_slice(wav.t_coefficients, wav.s_coefficients, wav.draw(m));
        let surface = project_surface(&beta_star, &phi, &omega).unwrap();
        for t in 0..20 {
            for s in 0..12 {
                assert!((surface[(t, s)] - fit.surface.get(m, t, s)).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn columns_fit_alone_and_in_any_order_match_the_joint_fit() {
    let ds = toy_dataset(2, 60, 16, 8, 0.5, 1.0);
    let t_spec = WaveletSpec::daubechies(2, 2, 16);
    let s_spec = WaveletSpec::daubechies(1, 2, 8);
    let mcmc = small_mcmc(11);
    let opts = FitOptions { keep_wavelet: true, ..Default::default() };
    let fit = fit_ffr(&ds, &t_spec, &s_spec, &mcmc, &opts).unwrap();
    let wav = fit.wavelet.unwrap();

    let (phi, omega) = (build_operator(t_spec).unwrap(), build_operator(s_spec).unwrap());
    let design = Design::new(dwt_rows(&ds.x, &phi).unwrap(), ds.w.clone()).unwrap();
    let ystar = dwt_rows(&ds.y, &omega).unwrap();
    let group_of = omega.level_map();
    let hyper = estimate_hyperparameters(&design, &ystar, &group_of, 3, &EbOptions::default()).unwrap();
    let tp = wav.t_coefficients;
    for c in (0..ystar.ncols()).rev() {
        let col = fit_column(
            ystar.column(c).as_slice(),
            &design,
            &hyper,
            group_of[c],
            &mcmc,
            c as u64,
            SamplerOptions::default(),
            "alone",
        )
        .unwrap();
        for m in 0..col.draws {
            assert_eq!(col.beta_draw(m), &wav.draw(m)[c * tp..(c + 1) * tp]);
        }
    }
}

#[test]
fn thread_count_does_not_change_draws() {
    let ds = toy_dataset(3, 60, 16, 8, 0.5, 1.0);
    let t_spec = WaveletSpec::daubechies(2, 2, 16);
    let s_spec = WaveletSpec::daubechies(1, 2, 8);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| fit_ffr(&ds, &t_spec, &s_spec, &small_mcmc(4), &FitOptions::default()).unwrap())
    };
    let (one, three) = (run(1), run(3));
    assert_eq!(one.surface, three.surface);
    assert_eq!(one.sigma2, three.sigma2);
    assert_eq!(one.provenance, three.provenance);
}

#[test]
fn null_truth_gives_flat_mean_surface() {
    // the mean surface of a null fit sits close to zero everywhere, with
    // exposures on the scale of the simulation harness (sd 5)
    let mut ds = toy_dataset(4, 400, 32, 16, 0.0, 2.0);
    ds.x *= 5.0 / 1.4;
    let t_spec = WaveletSpec::daubechies(4, 2, 32);
    let s_spec = WaveletSpec::daubechies(2, 2, 16);
    let fit = fit_ffr(&ds, &t_spec, &s_spec, &small_mcmc(8), &FitOptions::default()).unwrap();
    let worst = fit.surface.mean().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(worst < 0.05, "max |mean| {worst}");
}

#[test]
fn signal_is_recovered_in_the_band() {
    let ds = toy_dataset(6, 300, 32, 16, 0.5, 1.0);
    let t_spec = WaveletSpec::daubechies(2, 2, 32);
    let s_spec = WaveletSpec::daubechies(1, 2, 16);
    let fit = fit_ffr(&ds, &t_spec, &s_spec, &small_mcmc(8), &FitOptions::default()).unwrap();
    let mean = fit.surface.mean();
    let inside: Vec<f64> = (8..16).flat_map(|t| (4..8).map(move |s| (t, s))).map(|(t, s)| mean[t * 16 + s]).collect();
    let avg = inside.iter().sum::<f64>() / inside.len() as f64;
    assert!((avg - 0.5).abs() < 0.1, "band mean {avg}");
}

#[test]
fn unknown_config_fields_are_rejected() {
    let ok: McmcConfig = serde_json::from_str(r#"{"total_draws": 50, "burn_in": 10}"#).unwrap();
    assert_eq!(ok.retained(), 40);
    assert!(serde_json::from_str::<McmcConfig>(r#"{"draws": 50}"#).is_err());
}

#[test]
fn invalid_mcmc_is_an_error() {
    let ds = toy_dataset(7, 30, 8, 4, 0.0, 1.0);
    let t_spec = WaveletSpec::daubechies(1, 1, 8);
    let s_spec = WaveletSpec::daubechies(1, 1, 4);
    let bad = McmcConfig { total_draws: 10, burn_in: 10, seed: 0, thin: 1 };
    assert!(fit_ffr(&ds, &t_spec, &s_spec, &bad, &FitOptions::default()).is_err());
    let mismatched = WaveletSpec::daubechies(1, 1, 9);
    assert!(fit_ffr(&ds, &mismatched, &s_spec, &small_mcmc(0), &FitOptions::default()).is_err());
}
