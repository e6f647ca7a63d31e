use fbm_viability::fbm::{derive_seed, fbm_covariance, FbmSampler, HurstParameter, SampleOptions, SamplingMethod};

fn hurst(h: f64) -> HurstParameter {
    HurstParameter::new(h).unwrap()
}

fn sampler(h: f64, n: usize, method: SamplingMethod) -> FbmSampler {
    let options = SampleOptions {
        method,
        ..SampleOptions::default()
    };
    FbmSampler::new(hurst(h), 0.0, 1.0, n, &options).unwrap()
}

#[test]
fn sample_covariance_matches_the_kernel() {
    let n = 64;
    let paths = 2000;
    let nodes = [(16, 32), (32, 64), (64, 64)];
    for h in [0.6, 0.75, 0.9] {
        let s = sampler(h, n, SamplingMethod::CirculantEmbedding);
        let mut sums = [(0.0, 0.0, 0.0); 3];
        for i in 0..paths {
            let p = s.sample(derive_seed(77, i));
            for (acc, &(a, b)) in sums.iter_mut().zip(&nodes) {
                let (x, y) = (p.values()[a], p.values()[b]);
                acc.0 += x * y;
                acc.1 += x;
                acc.2 += y;
            }
        }
        let m = paths as f64;
        for (acc, &(a, b)) in sums.iter().zip(&nodes) {
            let cov = (acc.0 - acc.1 * acc.2 / m) / (m - 1.0);
            let target = fbm_covariance(a as f64 / n as f64, b as f64 / n as f64, hurst(h)).unwrap();
            assert!((cov - target).abs() / target < 0.1, "H={h} ({a},{b}): {cov} vs {target}");
        }
    }
}

#[test]
fn standard_brownian_increments_are_uncorrelated_with_unit_scale() {
    let n = 100;
    let s = sampler(0.5, n, SamplingMethod::CirculantEmbedding);
    let mut inc = Vec::with_capacity(10_000);
    for i in 0..100 {
        let p = s.sample(derive_seed(5, i));
        inc.extend(p.values().windows(2).map(|w| w[1] - w[0]));
    }
    let m = inc.len() as f64;
    let mean = inc.iter().sum::<f64>() / m;
    let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let lag: f64 = inc.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (m - 1.0);
    let h = 1.0 / n as f64;
    assert!((0.9..=1.1).contains(&(var / h)), "variance ratio {}", var / h);
    assert!((lag / var).abs() < 0.05, "lag-1 autocorrelation {}", lag / var);
}

/// Asymptotic two-sample Kolmogorov–Smirnov p-value.
fn ks_p_value(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let q: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    q.clamp(0.0, 1.0)
}

#[test]
fn circulant_and_cholesky_agree_in_distribution() {
    for h in [0.6, 0.9] {
        let circ = sampler(h, 64, SamplingMethod::CirculantEmbedding);
        let chol = sampler(h, 64, SamplingMethod::Cholesky);
        let a: Vec<f64> = (0..2000).map(|i| circ.sample(derive_seed(1, i)).terminal()).collect();
        let b: Vec<f64> = (0..2000).map(|i| chol.sample(derive_seed(2, i)).terminal()).collect();
        let p = ks_p_value(a, b);
        assert!(p > 0.01, "H={h}: KS p-value {p}");
    }
}

#[test]
fn ks_detects_a_scale_change() {
    let s = sampler(0.75, 16, SamplingMethod::CirculantEmbedding);
    let a: Vec<f64> = (0..2000).map(|i| s.sample(derive_seed(1, i)).terminal()).collect();
    let b: Vec<f64> = (0..2000).map(|i| 1.5 * s.sample(derive_seed(2, i)).terminal()).collect();
    assert!(ks_p_value(a, b) < 1e-6);
}

#[test]
fn paths_are_bit_identical_per_seed_and_method() {
    for method in [SamplingMethod::CirculantEmbedding, SamplingMethod::Cholesky] {
        let a = sampler(0.7, 128, method).sample(123);
        let b = sampler(0.7, 128, method).sample(123);
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), sampler(0.7, 128, method).sample(124).values());
    }
}
