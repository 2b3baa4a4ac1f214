//! Gauss-Legendre quadrature with support for integrable endpoint
//! singularities via power substitutions.

/// A Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes nodes and weights of the n-point rule by Newton iteration
    /// on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Chebyshev-based initial guess
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrates f over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + c * x);
        }
        acc * c
    }

    pub fn nodes_on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + c * x, w * c))
    }
}

/// Legendre polynomial P_n and its derivative at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive integration of a smooth integrand by panel bisection,
/// comparing an n-point rule against a 2n-point rule on each panel.
pub fn adaptive<F: FnMut(f64) -> f64>(a: f64, b: f64, rel_tol: f64, f: &mut F) -> f64 {
    let lo = GaussLegendre::new(10);
    let hi = GaussLegendre::new(20);
    let mut total = 0.0;
    let scale = hi.integrate(a, b, &mut *f).abs().max(1e-300);
    let mut stack = vec![(a, b)];
    while let Some((x0, x1)) = stack.pop() {
        let coarse = lo.integrate(x0, x1, &mut *f);
        let fine = hi.integrate(x0, x1, &mut *f);
        if (fine - coarse).abs() <= rel_tol * scale || (x1 - x0) < 1e-14 * (b - a) {
            total += fine;
        } else {
            let mid = 0.5 * (x0 + x1);
            stack.push((x0, mid));
            stack.push((mid, x1));
        }
    }
    total
}

/// Integrates g(u) (u - s)^(alpha - 1) over [s, l] for alpha in (0, 1),
/// absorbing the endpoint singularity with the substitution t = (u - s)^alpha.
///
/// The transformed integrand (1/alpha) g(s + t^(1/alpha)) is smooth at t = 0.
pub fn integrate_left_singular<F: FnMut(f64) -> f64>(
    s: f64,
    l: f64,
    alpha: f64,
    rel_tol: f64,
    mut g: F,
) -> f64 {
    debug_assert!(alpha > 0.0 && alpha < 1.0);
    if l <= s {
        return 0.0;
    }
    let t_max = (l - s).powf(alpha);
    let inv_alpha = 1.0 / alpha;
    adaptive(0.0, t_max, rel_tol, &mut |t: f64| {
        inv_alpha * g(s + t.powf(inv_alpha))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_exactness() {
        let gl = GaussLegendre::new(5);
        // degree 9 is exact for a 5-point rule
        let val = gl.integrate(0.0, 1.0, |x| x.powi(9));
        assert_relative_eq!(val, 0.1, epsilon = 1e-14);
    }

    #[test]
    fn adaptive_oscillatory() {
        let mut f = |x: f64| (10.0 * x).sin();
        let val = adaptive(0.0, 1.0, 1e-10, &mut f);
        assert_relative_eq!(val, (1.0 - 10.0f64.cos()) / 10.0, epsilon = 1e-9);
    }

    #[test]
    fn singular_endpoint() {
        // int_0^1 (u)^{-1/2} du = 2
        let val = integrate_left_singular(0.0, 1.0, 0.5, 1e-10, |_| 1.0);
        assert_relative_eq!(val, 2.0, epsilon = 1e-9);
    }
}
