//! Gauss-Legendre rules and orthonormal shifted Legendre polynomials.

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = mid - half * x;
        nodes[n - 1 - i] = mid + half * x;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}

/// Values `tau_0(t), ..., tau_{count-1}(t)` of the shifted Legendre
/// polynomials, orthonormal on `[0, 1]`.
pub fn shifted_legendre(count: usize, t: f64, out: &mut [f64]) {
    let x = 2.0 * t - 1.0;
    let (mut p0, mut p1) = (1.0, x);
    for (p, slot) in out.iter_mut().take(count).enumerate() {
        let v = match p {
            0 => 1.0,
            1 => x,
            _ => {
                let pf = (p - 1) as f64;
                let p2 = ((2.0 * pf + 1.0) * x * p1 - pf * p0) / (pf + 1.0);
                p0 = p1;
                p1 = p2;
                p2
            }
        };
        *slot = (2.0 * p as f64 + 1.0).sqrt() * v;
    }
}
