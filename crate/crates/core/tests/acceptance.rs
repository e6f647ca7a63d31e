//! Acceptance criteria, one test per criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.

use std::time::{Duration, Instant};

use fbm_viability::coeff::CoefficientField;
use fbm_viability::fbm::{
    derive_seed, fbm_covariance, roughness_diagnostic, sample_fbm, FbmSampler, HurstParameter, SampleOptions,
    SamplingMethod,
};
use fbm_viability::frac::{lambda_alpha, norm_w_alpha_1, stieltjes_integral, FracOrder};
use fbm_viability::mc::{local_bound_diagnostic, run_experiment, ExperimentConfig, ExperimentReport, InitialCondition};
use fbm_viability::sde::{convergence_study, solve_euler, ConvergenceReference, SolveOptions};
use fbm_viability::viability::{verify_class_h, CheckSettings, ConstraintSet, TransformMap};
use fbm_viability::GridFunction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const C1_LINEAR_TOL: f64 = 1e-6;
const C1_FBM_REL_TOL: f64 = 1e-2;
const C1_BUDGET: Duration = Duration::from_secs(30);
const C2_SLACK: f64 = 1.05;
const C3_VAR_RANGE: (f64, f64) = (0.9, 1.1);
const C3_COV_REL_TOL: f64 = 0.10;
const C3_RHO_TOL: f64 = 0.05;
const C3_BUDGET: Duration = Duration::from_secs(60);
const C4_SLOPE_RANGE: (f64, f64) = (0.05, 0.45);
const C5_MIN_ORDER: f64 = 0.35;
const C5_EXACT_TOL: f64 = 1e-12;
const C6_MAX_EXCURSION: f64 = 0.02;
const C6_MIN_VIOLATION: f64 = 0.95;
const C6_TOL: f64 = 0.05;
const C7_TOL: f64 = 1e-3;
const C7_MIN_VIOLATION: f64 = 0.5;
const C8_TOL: f64 = 1e-6;
const C8_MIN_VIOLATION: f64 = 0.5;
const C9_SAMPLES: usize = 10_000;
const C10_MAX_RATIO: f64 = 1.1;

const SEED: u64 = 20_240_601;

fn report(n: u32, ok: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} failed: {detail}");
}

fn hurst(h: f64) -> HurstParameter {
    HurstParameter::new(h).unwrap()
}

fn alpha(a: f64) -> FracOrder {
    FracOrder::new(a).unwrap()
}

#[test]
fn criterion_01_integral_oracle_equivalence() {
    let start = Instant::now();
    let n = 1 << 14;
    let r = GridFunction::sample(0.0, 1.0, n, |t| t).unwrap();
    let linear = stieltjes_integral(&r, &r, alpha(0.25), 0.0, 1.0).unwrap()[0];
    let linear_err = (linear - 0.5).abs();

    let path = sample_fbm(hurst(0.75), 0.0, 1.0, n, SEED, SamplingMethod::CirculantEmbedding).unwrap();
    let integral = stieltjes_integral(path.grid(), path.grid(), alpha(0.3), 0.0, 1.0).unwrap()[0];
    let closed = 0.5 * path.terminal().powi(2);
    let rel = (integral - closed).abs() / closed.abs();
    let elapsed = start.elapsed();
    report(
        1,
        linear_err < C1_LINEAR_TOL && rel < C1_FBM_REL_TOL && elapsed < C1_BUDGET,
        format!("|∫r dr - 0.5| = {linear_err:.2e}, fBm relative error {rel:.2e}, {elapsed:.2?}"),
    );
}

fn random_smooth(rng: &mut ChaCha8Rng, n: usize) -> GridFunction {
    let c: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
    let w: Vec<f64> = (0..2).map(|_| rng.random_range(0.5..6.0)).collect();
    GridFunction::sample(0.0, 1.0, n, |t| c[0] + c[1] * t + c[2] * (w[0] * t).sin() + c[3] * (w[1] * t).cos()).unwrap()
}

#[test]
fn criterion_02_duality_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let n = 512;
    let a = alpha(0.3);
    let sampler = FbmSampler::new(hurst(0.75), 0.0, 1.0, n, &SampleOptions::default()).unwrap();
    let mut worst = 0.0f64;
    for k in 0..50u64 {
        let (f, g) = if k < 25 {
            (random_smooth(&mut rng, n), random_smooth(&mut rng, n))
        } else {
            let g = sampler.sample(derive_seed(SEED, 2 * k)).grid().clone();
            let f = if k % 2 == 0 {
                sampler.sample(derive_seed(SEED, 2 * k + 1)).grid().clone()
            } else {
                random_smooth(&mut rng, n)
            };
            (f, g)
        };
        let lhs = stieltjes_integral(&f, &g, a, 0.0, 1.0).unwrap()[0].abs();
        let rhs = lambda_alpha(&g, a, 0.0, 1.0).unwrap() * norm_w_alpha_1(&f, a).unwrap();
        worst = worst.max(lhs / rhs);
    }
    report(2, worst <= C2_SLACK, format!("max |∫f dg| / (Λ_α(g) ‖f‖_α,1) = {worst:.3} over 50 pairs"));
}

#[test]
fn criterion_03_fbm_statistics() {
    let start = Instant::now();
    let n_paths = 2000;
    let n = 256;
    let mut ok = true;
    let mut details = Vec::new();
    for h in [0.6, 0.75, 0.9] {
        let hp = hurst(h);
        let sampler = FbmSampler::new(hp, 0.0, 1.0, n, &SampleOptions::default()).unwrap();
        let (mut s_end, mut s_mid_end, mut s_mid, mut s_mid2) = (0.0, 0.0, 0.0, 0.0);
        let mut s_end2 = 0.0;
        for i in 0..n_paths {
            let p = sampler.sample(derive_seed(SEED, i));
            let (b_mid, b_end) = (p.values()[n / 2], p.terminal());
            s_end += b_end;
            s_end2 += b_end * b_end;
            s_mid += b_mid;
            s_mid2 += b_mid * b_mid;
            s_mid_end += b_mid * b_end;
        }
        let m = n_paths as f64;
        let var = (s_end2 - s_end * s_end / m) / (m - 1.0);
        let cov = (s_mid_end - s_mid * s_end / m) / (m - 1.0);
        let _ = s_mid2;
        let target = fbm_covariance(0.5, 1.0, hp).unwrap();
        let cov_rel = (cov - target).abs() / target;
        ok &= var >= C3_VAR_RANGE.0 && var <= C3_VAR_RANGE.1 && cov_rel <= C3_COV_REL_TOL;
        details.push(format!("H={h}: Var(B_1)={var:.3}, cov rel err {cov_rel:.3}"));
    }
    let sampler = FbmSampler::new(hurst(0.5), 0.0, 1.0, n, &SampleOptions::default()).unwrap();
    let (mut sxy, mut sxx, mut sx) = (0.0, 0.0, 0.0);
    let mut count = 0.0;
    for i in 0..n_paths {
        let p = sampler.sample(derive_seed(SEED ^ 0xB0B, i));
        let inc: Vec<f64> = p.values().windows(2).map(|w| w[1] - w[0]).collect();
        for w in inc.windows(2) {
            sxy += w[0] * w[1];
            sxx += w[0] * w[0];
            sx += w[0];
            count += 1.0;
        }
    }
    let mean = sx / count;
    let rho = (sxy / count - mean * mean) / (sxx / count - mean * mean);
    ok &= rho.abs() < C3_RHO_TOL;
    details.push(format!("H=0.5 lag-1 rho={rho:.4}"));
    let elapsed = start.elapsed();
    ok &= elapsed < C3_BUDGET;
    report(3, ok, format!("{}; {elapsed:.2?}", details.join("; ")));
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn criterion_04_roughness() {
    let finest = 1 << 14;
    let levels: Vec<usize> = (8..=14).map(|k| 1usize << k).collect();
    let sampler = FbmSampler::new(hurst(0.75), 0.0, 1.0, finest, &SampleOptions::default()).unwrap();
    let mut sums = vec![0.0; levels.len()];
    for i in 0..50 {
        let p = sampler.sample(derive_seed(SEED, i));
        for (slot, &n) in sums.iter_mut().zip(&levels) {
            *slot += roughness_diagnostic(&p.coarsen(finest / n).unwrap().grid().clone()).unwrap() / 50.0;
        }
    }
    let xs: Vec<f64> = levels.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = sums.iter().map(|v| v.ln()).collect();
    let slope = fit_slope(&xs, &ys);
    report(
        4,
        slope >= C4_SLOPE_RANGE.0 && slope <= C4_SLOPE_RANGE.1,
        format!("log-log slope of max|ΔB|/h against 1/h = {slope:.3}"),
    );
}

#[test]
fn criterion_05_euler_convergence() {
    let geometric = CoefficientField::parse(1, &["0"], &["x1"]).unwrap();
    let levels: Vec<usize> = (8..=12).map(|k| 1usize << k).collect();
    let rate = convergence_study(
        &geometric,
        &[1.0],
        0.0,
        1.0,
        hurst(0.75),
        SEED,
        &levels,
        ConvergenceReference::Geometric { lambda: 1.0 },
    )
    .unwrap();
    let order = rate.order.unwrap_or(f64::NAN);

    let additive = CoefficientField::parse(1, &["0.5"], &["1.3"]).unwrap();
    let driver = sample_fbm(hurst(0.75), 0.0, 1.0, 4096, SEED, SamplingMethod::CirculantEmbedding).unwrap();
    let sol = solve_euler(&additive, &[2.0], 0.0, 1.0, &driver, &SolveOptions::default()).unwrap();
    let node_err = (0..=4096)
        .map(|k| (sol.values.node(k)[0] - (2.0 + 0.5 * driver.grid().time(k) + 1.3 * driver.values()[k])).abs())
        .fold(0.0, f64::max);
    let errors: Vec<String> = rate.errors.iter().map(|e| format!("{}:{:.2e}", e.level, e.error)).collect();
    report(
        5,
        order >= C5_MIN_ORDER && node_err <= C5_EXACT_TOL,
        format!("geometric order {order:.3} ({}), additive-noise node error {node_err:.1e}", errors.join(" ")),
    );
}

fn experiment(
    cf: CoefficientField,
    upper: Option<CoefficientField>,
    constraint: ConstraintSet,
    x0: InitialCondition,
    n_steps: usize,
    n_paths: usize,
    tol: f64,
) -> ExperimentConfig {
    ExperimentConfig {
        hurst: hurst(0.75),
        t: 0.0,
        t_end: 1.0,
        n_steps,
        n_paths,
        master_seed: SEED,
        coefficients: cf,
        upper,
        constraint,
        membership_tol: tol,
        x0,
        check: CheckSettings::default(),
        alpha: None,
        lambda_diagnostic: false,
    }
}

#[test]
fn criterion_06_viability() {
    let sphere = ConstraintSet::Sphere { rho: 1.0, d: 2 };
    let rotation = experiment(
        CoefficientField::rotation(1.0, 1.0),
        None,
        sphere,
        InitialCondition::BoundaryUniform,
        4096,
        100,
        C6_MAX_EXCURSION,
    );
    let good = run_experiment(&rotation).unwrap();
    let worst = good.paths.iter().map(|p| p.excursion.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);

    let outward = CoefficientField::parse(2, &["x1", "x2"], &["-x2", "x1"]).unwrap();
    let ball = experiment(
        outward,
        None,
        ConstraintSet::Ball { rho: 1.0, d: 2 },
        InitialCondition::BoundaryUniform,
        4096,
        100,
        C6_TOL,
    );
    let bad = run_experiment(&ball).unwrap();
    report(
        6,
        good.check.passed() && worst <= C6_MAX_EXCURSION && !bad.check.passed() && bad.violation_fraction >= C6_MIN_VIOLATION,
        format!(
            "sphere/rotation max ||X|-1| = {worst:.4} (checker {:?}); ball/b=x violation fraction {} (checker {:?})",
            good.check.verdict, bad.violation_fraction, bad.check.verdict
        ),
    );
}

#[test]
fn criterion_07_positivity() {
    let pass_cf = CoefficientField::parse(1, &["1 - x1"], &["x1"]).unwrap();
    let good = run_experiment(&experiment(
        pass_cf,
        None,
        ConstraintSet::HalfLine,
        InitialCondition::Fixed { x: vec![0.5] },
        1024,
        200,
        C7_TOL,
    ))
    .unwrap();
    let fail_cf = CoefficientField::parse(1, &["0"], &["1"]).unwrap();
    let bad = run_experiment(&experiment(
        fail_cf,
        None,
        ConstraintSet::HalfLine,
        InitialCondition::Fixed { x: vec![0.01] },
        1024,
        200,
        C7_TOL,
    ))
    .unwrap();
    report(
        7,
        good.check.passed() && good.violation_fraction == 0.0 && bad.violation_fraction >= C7_MIN_VIOLATION,
        format!(
            "b=1-x, σ=x: violation fraction {}; b=0, σ=1: violation fraction {}",
            good.violation_fraction, bad.violation_fraction
        ),
    );
}

#[test]
fn criterion_08_comparison() {
    let lo = CoefficientField::parse(1, &["-x1"], &["x1"]).unwrap();
    let hi = CoefficientField::parse(1, &["-x1 + 1"], &["x1"]).unwrap();
    let good = run_experiment(&experiment(
        lo,
        Some(hi),
        ConstraintSet::ComparisonCone,
        InitialCondition::Fixed { x: vec![1.0, 1.0] },
        1024,
        200,
        C8_TOL,
    ))
    .unwrap();
    let s1 = CoefficientField::parse(1, &["0"], &["1"]).unwrap();
    let s2 = CoefficientField::parse(1, &["0"], &["2"]).unwrap();
    let bad = run_experiment(&experiment(
        s1,
        Some(s2),
        ConstraintSet::ComparisonCone,
        InitialCondition::Fixed { x: vec![0.0, 0.01] },
        1024,
        200,
        C8_TOL,
    ))
    .unwrap();
    report(
        8,
        good.check.passed() && good.violations == 0 && bad.violation_fraction >= C8_MIN_VIOLATION,
        format!(
            "passing pair: {} crossings, max X-Y {:?}; failing pair: crossing fraction {}",
            good.violations, good.max_excursion, bad.violation_fraction
        ),
    );
}

#[test]
fn criterion_09_class_h() {
    let sq = verify_class_h(&TransformMap::squared_norm(2, 0.25, 4.0).unwrap(), C9_SAMPLES, 1e-9);
    let diff = verify_class_h(&TransformMap::difference(0.0, 10.0).unwrap(), C9_SAMPLES, 1e-9);
    let bad = verify_class_h(&TransformMap::squared_norm(2, 0.0, 4.0).unwrap(), C9_SAMPLES, 1e-9);
    let witness_radius = bad
        .witnesses
        .first()
        .map(|w| w.x.iter().map(|v| v * v).sum::<f64>().sqrt())
        .unwrap_or(f64::INFINITY);
    report(
        9,
        sq.passed() && diff.passed() && !bad.passed() && witness_radius < 0.05,
        format!(
            "|x|² on [1/4, 4]: {:?}; difference map: {:?}; |x|² on [0, 4]: {:?} with witness at |x| = {witness_radius:.3e}",
            sq.verdict, diff.verdict, bad.verdict
        ),
    );
}

#[test]
fn criterion_10_local_bounds() {
    let n = 1024;
    let a = alpha(0.3);
    let driver = sample_fbm(hurst(0.75), 0.0, 1.0, n, SEED, SamplingMethod::CirculantEmbedding).unwrap();
    let other = sample_fbm(hurst(0.75), 0.0, 1.0, n, SEED + 1, SamplingMethod::CirculantEmbedding).unwrap();
    let u = GridFunction::sample(0.0, 1.0, n, |r| r.powf(1.0 - a.value())).unwrap();
    let v = other.grid().clone();
    let diag = local_bound_diagnostic(&u, &v, driver.grid(), a, 1.0, 0.0, 1.0, 50).unwrap();
    let worst = diag.max_ratio_a.max(diag.max_ratio_b);
    report(
        10,
        worst <= C10_MAX_RATIO,
        format!(
            "max ratio (a) {:.4}, (b) {:.4} over {} pairs, C = {:.3}",
            diag.max_ratio_a, diag.max_ratio_b, diag.pairs, diag.constant
        ),
    );
}

fn outputs(report: &ExperimentReport) -> (String, Vec<u8>) {
    let mut csv = Vec::new();
    report.write_paths_csv(&mut csv).unwrap();
    (report.to_json().unwrap(), csv)
}

#[test]
fn criterion_11_reproducibility() {
    let mut cfg = experiment(
        CoefficientField::rotation(1.0, 1.0),
        None,
        ConstraintSet::Sphere { rho: 1.0, d: 2 },
        InitialCondition::BoundaryUniform,
        1024,
        64,
        C6_MAX_EXCURSION,
    );
    cfg.lambda_diagnostic = true;
    let run_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| outputs(&run_experiment(&cfg).unwrap()))
    };
    let one = run_with(1);
    let four = run_with(4);
    let again = run_with(3);
    let path_csv = |seed| {
        let mut buf = Vec::new();
        sample_fbm(hurst(0.75), 0.0, 1.0, 1024, seed, SamplingMethod::CirculantEmbedding)
            .unwrap()
            .write_csv(&mut buf)
            .unwrap();
        buf
    };
    let same = one == four && one == again && path_csv(7) == path_csv(7);
    report(11, same, format!("report JSON {} bytes and path CSVs identical across 1, 3, 4 threads", one.0.len()));
}
