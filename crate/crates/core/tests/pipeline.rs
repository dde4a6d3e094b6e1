use ghostpixel::hadamard::{compress, HadamardBasis, Ordering};
use ghostpixel::metrics::{cnr, knife_edge_fwhm, mse, normalized_correlation, RegionMask};
use ghostpixel::optics::{
    random_speckle_patterns, run_acquisition, source_blur, speckle_pattern, ImperfectionModel,
    MeasurementSeries, NoiseModel, Phantom, SourceModel,
};
use ghostpixel::phantoms::{generate, PhantomKind, PhantomSpec};
use ghostpixel::reconstruct::{
    correlation_gi, differential_gi, series_patterns, series_problem, tv_admm, wavelet_fista,
    FistaParams, OperatorModel, TvParams,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_phantom(n: usize, seed: u64) -> Phantom {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Phantom::new(Array2::from_shape_fn((n, n), |_| rng.random::<f64>()), 10.0).unwrap()
}

fn acquire(phantom: &Phantom, k: u32, ordering: Ordering, rate: f64, differential: bool) -> MeasurementSeries {
    let basis = HadamardBasis::new(k, ordering).unwrap();
    let indices = compress(basis.permutation(), rate).unwrap();
    run_acquisition(
        &basis,
        &indices,
        phantom,
        &ImperfectionModel::IDEAL,
        None,
        &NoiseModel::noiseless(0),
        differential,
    )
    .unwrap()
}

fn named(kind: &str, n: usize) -> Phantom {
    generate(&PhantomSpec::new(kind.parse().unwrap(), n, 10.0)).unwrap()
}

#[test]
fn full_series_correlation_has_closed_form() {
    // With P = (1 + h)/2 over the full basis, Σ hᵢ vanishes except at pixel 0,
    // so the estimate is (T − T₀e₀)/4 exactly.
    let phantom = random_phantom(16, 11);
    let series = acquire(&phantom, 4, Ordering::Natural, 1.0, true);
    let patterns = series_patterns(&series).unwrap();
    let g = correlation_gi(&series, &patterns).unwrap().image;
    let mut expected = phantom.transmission() / 4.0;
    expected[[0, 0]] = 0.0;
    for (a, b) in g.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    let dgi = differential_gi(&series).unwrap().image;
    assert!(normalized_correlation(&dgi, phantom.transmission()).unwrap() > 0.999);
}

#[test]
fn zero_phantom_gives_zero_differential_image() {
    let phantom = Phantom::new(Array2::zeros((8, 8)), 10.0).unwrap();
    let series = acquire(&phantom, 3, Ordering::Sequency, 1.0, true);
    assert!(differential_gi(&series).unwrap().image.iter().all(|&v| v == 0.0));
}

#[test]
fn ordered_prefix_beats_natural_prefix_on_smooth_object() {
    let n = 64;
    let smooth = Array2::from_shape_fn((n, n), |(y, x)| {
        let (u, v) = (x as f64 / n as f64 - 0.5, y as f64 / n as f64 - 0.5);
        0.5 + 0.4 * (-(u * u + v * v) / 0.05).exp() * (3.0 * u).cos()
    });
    let phantom = Phantom::new(smooth, 10.0).unwrap();
    let err = |ordering| {
        let series = acquire(&phantom, 6, ordering, 0.1875, true);
        // Scale 1/N instead of 1/M so a partial expansion is a projection.
        let g = differential_gi(&series).unwrap().image * (series.len() as f64 / (n * n) as f64);
        mse(&g, phantom.transmission()).unwrap()
    };
    let ordered = err(Ordering::ConnectivityAscending);
    let natural = err(Ordering::Natural);
    assert!(ordered < natural, "connectivity {ordered} vs natural {natural}");
}

#[test]
fn tv_with_heavy_data_weight_inverts_full_basis() {
    let phantom = random_phantom(16, 5);
    let series = acquire(&phantom, 4, Ordering::Natural, 1.0, true);
    let (op, b) = series_problem(&series, OperatorModel::Designed).unwrap();
    let params = TvParams {
        mu: 1e6,
        ..TvParams::default()
    };
    let x = tv_admm(&op, &b, &params).unwrap().image;
    // Direct inverse: H⁻¹ = Hᵀ / N.
    let direct = differential_gi(&series).unwrap().image;
    let err = (&x - &direct).mapv(|v| v * v).sum().sqrt() / direct.mapv(|v| v * v).sum().sqrt();
    assert!(err < 1e-3, "relative error {err}");
}

#[test]
fn tv_reconstruction_scales_with_data() {
    let phantom = named("semicylinder_gap", 32);
    let series = acquire(&phantom, 5, Ordering::ConnectivityAscending, 0.25, true);
    let (op, b) = series_problem(&series, OperatorModel::Designed).unwrap();
    let base = TvParams {
        mu: 4.0,
        beta: 32.0,
        ..TvParams::default()
    };
    let alpha = 3.0;
    let scaled_b: Vec<f64> = b.iter().map(|v| v * alpha).collect();
    // The minimizer of TV(x) + (μ/2)‖Ax − b‖² scales by α when b → αb and μ → μ/α.
    let scaled = TvParams {
        mu: base.mu / alpha,
        beta: base.beta / alpha,
        ..base
    };
    let x = tv_admm(&op, &b, &base).unwrap().image;
    let xs = tv_admm(&op, &scaled_b, &scaled).unwrap().image;
    let extreme = |img: &Array2<f64>, max: bool| {
        let target = if max {
            img.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        } else {
            img.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        let tol = 1e-6 * img.iter().map(|v| v.abs()).fold(0.0, f64::max);
        img.indexed_iter()
            .filter(|(_, &v)| (v - target).abs() <= tol)
            .map(|(i, _)| i)
            .collect::<Vec<_>>()
    };
    assert_eq!(extreme(&x, true), extreme(&xs, true));
    assert_eq!(extreme(&x, false), extreme(&xs, false));
}

#[test]
fn wavelet_solver_beats_correlation_on_compressed_data() {
    let phantom = named("semicylinder_gap", 64);
    let series = acquire(&phantom, 6, Ordering::ConnectivityAscending, 0.1875, true);
    let mask = RegionMask::from_reference(phantom.transmission()).unwrap();
    let patterns = series_patterns(&series).unwrap();
    let gi = cnr(&correlation_gi(&series, &patterns).unwrap().image, &mask).unwrap();
    let (op, b) = series_problem(&series, OperatorModel::Designed).unwrap();
    let params = FistaParams {
        lambda: 10.0,
        ..FistaParams::default()
    };
    let wf = cnr(&wavelet_fista(&op, &b, &params).unwrap().image, &mask).unwrap();
    assert!(wf > gi, "wavelet {wf} vs correlation {gi}");
}

#[test]
fn calibrated_operator_reproduces_noiseless_buckets() {
    let phantom = random_phantom(16, 2);
    let basis = HadamardBasis::new(4, Ordering::Sequency).unwrap();
    let imp = ImperfectionModel::new(0.83, 0.5, 0.0).unwrap();
    let src = SourceModel::new([37.0, 30.0], 100.0, 50.0).unwrap();
    let indices = compress(basis.permutation(), 0.5).unwrap();
    for differential in [false, true] {
        let series = run_acquisition(
            &basis,
            &indices,
            &phantom,
            &imp,
            Some(&src),
            &NoiseModel::noiseless(0),
            differential,
        )
        .unwrap();
        let (op, b) = series_problem(&series, OperatorModel::Calibrated).unwrap();
        let flat: Vec<f64> = phantom.transmission().iter().copied().collect();
        for (a, y) in op.apply(&flat).iter().zip(&b) {
            assert!((a - y).abs() < 1e-9 * y.abs().max(1.0));
        }
    }
}

#[test]
fn speckle_mean_field_is_flat() {
    let patterns = random_speckle_patterns(16, 5000, 1, 3).unwrap();
    let mut mean = Array2::<f64>::zeros((16, 16));
    for p in &patterns {
        mean += p;
    }
    mean /= patterns.len() as f64;
    let avg = mean.sum() / mean.len() as f64;
    let std = (mean.mapv(|v| (v - avg) * (v - avg)).sum() / mean.len() as f64).sqrt();
    assert!(std < 0.05, "std of per-pixel means {std}");
}

#[test]
fn fine_speckle_decorrelates_after_one_pixel() {
    let n = 32;
    let (mut lag0, mut lag1, mut lag2) = (0.0, 0.0, 0.0);
    for i in 0..200 {
        let p = speckle_pattern(n, 1, 9, i).unwrap();
        let mean = p.sum() / p.len() as f64;
        let c = p.mapv(|v| v - mean);
        for y in 0..n {
            for x in 0..n - 2 {
                lag0 += c[[y, x]] * c[[y, x]];
                lag1 += c[[y, x]] * c[[y, x + 1]];
                lag2 += c[[y, x]] * c[[y, x + 2]];
            }
        }
    }
    assert!((lag1 / lag0).abs() < 0.05);
    assert!((lag2 / lag0).abs() < 0.05);

    // Coarse grains stay correlated within a grain.
    let p = speckle_pattern(n, 4, 9, 0).unwrap();
    assert_eq!(p[[0, 0]], p[[3, 3]]);
}

#[test]
fn knife_edge_recovers_source_size() {
    let phantom = generate(&PhantomSpec::new(PhantomKind::KnifeEdge { position: 0.5 }, 64, 10.0)).unwrap();
    let src = SourceModel::new([37.0, 30.0], 100.0, 100.0).unwrap();
    let blurred = source_blur(phantom.transmission(), &src, 10.0).unwrap();
    let row: Vec<f64> = blurred.row(32).iter().copied().skip(16).take(32).collect();
    let fwhm = knife_edge_fwhm(&row, 10.0).unwrap();
    assert!((fwhm - 37.0).abs() < 0.05 * 37.0, "fwhm {fwhm}");
}
