//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use fbm_viability::GridFunction;

/// Composite Simpson rule on `[a, b]` with `panels` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// `∫_0^len h(d) dd` for `h` with an integrable power singularity at 0,
/// via `d = len·u^k` followed by Simpson.
pub fn singular_at_zero_with(h: impl Fn(f64) -> f64, len: f64, panels: usize, k: f64) -> f64 {
    simpson(
        |u| {
            let u = u.max(1e-12);
            h(len * u.powf(k)) * len * k * u.powf(k - 1.0)
        },
        0.0,
        1.0,
        panels,
    )
}

pub fn singular_at_zero(h: impl Fn(f64) -> f64, len: f64, panels: usize) -> f64 {
    singular_at_zero_with(h, len, panels, 4.0)
}

/// `∫_0^len num(d) d^{-p-1} dd` where `num(d) ≈ slope·d` near 0. The linear
/// part is integrated in closed form to avoid cancellation in `num`.
fn difference_integral(num: impl Fn(f64) -> f64, slope: f64, p: f64, len: f64) -> f64 {
    let tiny = 1e-12 * len;
    let remainder = singular_at_zero_with(
        |d| if d < tiny { 0.0 } else { (num(d) - slope * d) * d.powf(-p - 1.0) },
        len,
        20_000,
        2.0,
    );
    slope * len.powf(1.0 - p) / (1.0 - p) + remainder
}

fn central_slope(f: &impl Fn(f64) -> f64, x: f64) -> f64 {
    const H: f64 = 1e-5;
    (f(x + H) - f(x - H)) / (2.0 * H)
}

/// Weyl form of the left derivative of a continuous `f`.
pub fn left_derivative_oracle(f: impl Fn(f64) -> f64, alpha: f64, t: f64, r: f64) -> f64 {
    let fr = f(r);
    let inner = difference_integral(|d| fr - f(r - d), central_slope(&f, r), alpha, r - t);
    (fr * (r - t).powf(-alpha) + alpha * inner) / statrs::function::gamma::gamma(1.0 - alpha)
}

/// Real-convention right derivative of order `1 - alpha` of a continuous `g`.
pub fn right_derivative_oracle(g: impl Fn(f64) -> f64, alpha: f64, s: f64, r: f64) -> f64 {
    let beta = 1.0 - alpha;
    let gr = g(r);
    let inner = difference_integral(|d| g(r + d) - gr, central_slope(&g, r), beta, s - r);
    ((g(s) - gr) * (s - r).powf(-beta) + beta * inner) / statrs::function::gamma::gamma(alpha)
}

/// Left-point Riemann–Stieltjes sum over the whole grid.
pub fn left_sum(f: &GridFunction, g: &GridFunction) -> f64 {
    let (fv, gv) = (f.values(), g.values());
    (0..f.n_steps()).map(|k| fv[k] * (gv[k + 1] - gv[k])).sum()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
