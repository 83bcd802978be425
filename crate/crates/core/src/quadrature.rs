//! Quadrature rules shared by the solvers.

use crate::C64;
use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss–Hermite rule for the weight `exp(-x²)` (Golub–Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrise to remove eigensolver asymmetry
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}

/// Trapezoidal weights for `n` uniformly spaced samples with spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 0 {
        w[0] *= 0.5;
        w[n - 1] *= 0.5;
    }
    if n == 1 {
        w[0] = 0.0;
    }
    w
}

pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    values
        .iter()
        .zip(trapezoid_weights(values.len(), h))
        .map(|(v, w)| v * w)
        .sum()
}

/// `∫₀¹ e^{μw} dw` and `∫₀¹ w e^{μw} dw`, stable for small `μ`.
fn phi01(mu: C64) -> (C64, C64) {
    if mu.norm() < 0.5 {
        let mut p0 = C64::new(0.0, 0.0);
        let mut p1 = C64::new(0.0, 0.0);
        let mut pow = C64::new(1.0, 0.0); // μⁿ/n!
        for n in 0..30 {
            p0 += pow / (n + 1) as f64;
            p1 += pow / (n + 2) as f64;
            pow *= mu / (n + 1) as f64;
        }
        (p0, p1)
    } else {
        let e = mu.exp();
        let p0 = (e - 1.0) / mu;
        let p1 = (e * (mu - 1.0) + 1.0) / (mu * mu);
        (p0, p1)
    }
}

/// Weights `w_k` with `Σ w_k s_k = ∫₀ᴸ s(x) e^{−κ(L−x)} dx` for the
/// piecewise-linear interpolant of samples `s_k` at `x_k = k·h`,
/// `L = (n−1)·h`. Exact for any complex `κ`.
pub fn exp_moment_weights(n: usize, h: f64, kappa: C64) -> Vec<C64> {
    let mut w = vec![C64::new(0.0, 0.0); n];
    if n < 2 {
        return w;
    }
    exp_moment_weights_into(h, kappa, &mut w);
    w
}

/// In-place variant of [`exp_moment_weights`]; `out.len()` sets `n`.
pub fn exp_moment_weights_into(h: f64, kappa: C64, out: &mut [C64]) {
    let n = out.len();
    out.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
    if n < 2 {
        return;
    }
    let mu = -kappa * h;
    let (p0, p1) = phi01(mu);
    let step = mu.exp(); // e^{−κh}
    let mut anchor = C64::new(h, 0.0); // h·e^{−κ(L − x_{k+1})}
    for k in (0..n - 1).rev() {
        out[k] += anchor * p1;
        out[k + 1] += anchor * (p0 - p1);
        anchor *= step;
        if anchor.norm() < 1e-300 {
            break;
        }
    }
}

/// `∫₀ᴸ s(x) e^{−κ(L−x)} dx` for the piecewise-linear interpolant of
/// `values`; allocation-free form of [`exp_moment_weights`].
pub fn exp_moment(values: &[C64], h: f64, kappa: C64) -> C64 {
    let n = values.len();
    if n < 2 {
        return C64::new(0.0, 0.0);
    }
    let mu = -kappa * h;
    let (p0, p1) = phi01(mu);
    let step = mu.exp();
    let (a, b) = (p1, p0 - p1);
    let mut anchor = C64::new(h, 0.0);
    let mut acc = C64::new(0.0, 0.0);
    for k in (0..n - 1).rev() {
        acc += anchor * (a * values[k] + b * values[k + 1]);
        anchor *= step;
        if anchor.norm() < 1e-300 {
            break;
        }
    }
    acc
}

/// `(e^z − 1)/z`, accurate near `z = 0`.
pub fn exprel(z: C64) -> C64 {
    if z.norm() < 0.5 {
        let mut term = C64::new(1.0, 0.0);
        let mut sum = term;
        for n in 2..30 {
            term *= z / n as f64;
            sum += term;
            if term.norm() < 1e-17 * sum.norm() {
                break;
            }
        }
        sum
    } else {
        (z.exp() - 1.0) / z
    }
}

/// Gauss–Legendre panel rule: nodes and weights of an `order`-point rule
/// on each interval between consecutive `breakpoints`.
pub fn panel_rule(breakpoints: &[f64], order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let mut nodes = Vec::with_capacity(order * breakpoints.len());
    let mut weights = Vec::with_capacity(order * breakpoints.len());
    for win in breakpoints.windows(2) {
        let c = 0.5 * (win[0] + win[1]);
        let h = 0.5 * (win[1] - win[0]);
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(c + h * xi);
            weights.push(h * wi);
        }
    }
    (nodes, weights)
}

/// Adaptive Gauss–Kronrod (7/15) integration of a real function.
pub fn adaptive_gk<F: FnMut(f64) -> f64>(
    mut f: F,
    breakpoints: &[f64],
    abs_tol: f64,
    max_intervals: usize,
) -> (f64, f64) {
    let mut work: Vec<(f64, f64, f64, f64)> = Vec::new();
    for win in breakpoints.windows(2) {
        let (v, e) = gk15(&mut f, win[0], win[1]);
        work.push((win[0], win[1], v, e));
    }
    loop {
        let total_err: f64 = work.iter().map(|w| w.3).sum();
        if total_err <= abs_tol || work.len() >= max_intervals {
            break;
        }
        let (idx, _) = work
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .3.total_cmp(&b.1 .3))
            .unwrap();
        let (a, b, _, _) = work.swap_remove(idx);
        let m = 0.5 * (a + b);
        let (v1, e1) = gk15(&mut f, a, m);
        let (v2, e2) = gk15(&mut f, m, b);
        work.push((a, m, v1, e1));
        work.push((m, b, v2, e2));
    }
    work.sort_by(|x, y| x.0.total_cmp(&y.0));
    let value = work.iter().map(|w| w.2).sum();
    let err = work.iter().map(|w| w.3).sum();
    (value, err)
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(12);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(22)).sum();
        assert!((s - 2.0 / 23.0).abs() < 1e-14);
    }

    #[test]
    fn hermite_moments() {
        let (x, w) = gauss_hermite(20);
        let m0: f64 = w.iter().sum();
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert!((m0 - PI.sqrt()).abs() < 1e-12);
        assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn exp_moments_exact_for_linear_functions() {
        // ∫₀¹ x e^{−κ(1−x)} dx = 1/κ − (1 − e^{−κ})/κ²
        for kappa in [C64::new(1e-9, 0.0), C64::new(0.3, 2.0), C64::new(40.0, -300.0), C64::new(-2.0, 1.0)] {
            let n = 7;
            let h = 1.0 / (n - 1) as f64;
            let w = exp_moment_weights(n, h, kappa);
            let got: C64 = (0..n).map(|k| w[k] * (k as f64 * h)).sum();
            let want = if kappa.norm() < 1e-6 {
                0.5 - kappa / 6.0
            } else {
                1.0 / kappa - (1.0 - (-kappa).exp()) / (kappa * kappa)
            };
            assert!((got - want).norm() < 1e-12 * (1.0 + want.norm()), "{kappa}: {got} vs {want}");
        }
    }

    #[test]
    fn exp_moment_matches_weights() {
        let vals: Vec<C64> = (0..9).map(|k| C64::new((k as f64).sin(), 0.3 * k as f64)).collect();
        for kappa in [C64::new(0.0, 0.0), C64::new(3.0, -7.0), C64::new(-1.0, 40.0)] {
            let w = exp_moment_weights(vals.len(), 0.125, kappa);
            let direct: C64 = w.iter().zip(&vals).map(|(w, v)| w * v).sum();
            assert!((exp_moment(&vals, 0.125, kappa) - direct).norm() < 1e-13);
        }
    }

    #[test]
    fn exprel_is_continuous() {
        for z in [C64::new(1e-9, 0.0), C64::new(0.49, 0.1), C64::new(0.51, 0.1), C64::new(-30.0, 4.0)] {
            let direct = (z.exp() - 1.0) / z;
            assert!((exprel(z) - direct).norm() < 1e-7 * direct.norm().max(1.0));
        }
        assert_eq!(exprel(C64::new(0.0, 0.0)), C64::new(1.0, 0.0));
    }

    #[test]
    fn panel_rule_integrates_exponential() {
        let (x, w) = panel_rule(&[0.0, 0.5, 2.0, 3.0], 16);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.exp()).sum();
        assert!((s - (3f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn gk_handles_peaked_integrand() {
        let (v, _) = adaptive_gk(|x| 1.0 / (1e-4 + x * x), &[-1.0, 0.0, 1.0], 1e-10, 2000);
        let want = 2.0 * (1.0 / 1e-2) * (1.0f64 / 1e-2).atan();
        assert!((v - want).abs() < 1e-8 * want);
    }
}
