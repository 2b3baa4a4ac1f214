//! Clarke generalized directional derivatives and subdifferentials,
//! exact for the min-of-two-convex-quadratics family and sampled for
//! generic locally Lipschitz scalar functions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// A convex quadratic a x^2 + b x + c with a > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quadratic {
    pub fn eval(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }

    pub fn gradient(&self, x: f64) -> f64 {
        2.0 * self.a * x + self.b
    }
}

/// A locally Lipschitz scalar function: either the exact family
/// min(q1, q2) or a generic callable with a stated Lipschitz bound.
pub enum LocallyLipschitzFn {
    MinQuadratics { q1: Quadratic, q2: Quadratic },
    Generic { f: Box<dyn Fn(f64) -> f64 + Send + Sync>, lipschitz: f64 },
}

impl LocallyLipschitzFn {
    pub fn min_quadratics(q1: Quadratic, q2: Quadratic) -> Result<Self> {
        if q1.a <= 0.0 || q2.a <= 0.0 {
            return Err(Error::Config("min-of-quadratics branches must be convex (a > 0)".into()));
        }
        Ok(Self::MinQuadratics { q1, q2 })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::MinQuadratics { q1, q2 } => q1.eval(x).min(q2.eval(x)),
            Self::Generic { f, .. } => f(x),
        }
    }

    /// Gradients of the active branches at z. A tie is declared when
    /// |q1(z) - q2(z)| <= 1e-12 (1 + |q1(z)|).
    fn active_gradients(&self, z: f64) -> Result<Vec<f64>> {
        match self {
            Self::MinQuadratics { q1, q2 } => {
                let v1 = q1.eval(z);
                let v2 = q2.eval(z);
                if (v1 - v2).abs() <= 1e-12 * (1.0 + v1.abs()) {
                    Ok(vec![q1.gradient(z), q2.gradient(z)])
                } else if v1 < v2 {
                    Ok(vec![q1.gradient(z)])
                } else {
                    Ok(vec![q2.gradient(z)])
                }
            }
            Self::Generic { .. } => Err(Error::GenericSubdifferential),
        }
    }
}

/// Closed interval [lo, hi], the convex hull of the active gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubdifferentialSet {
    pub lo: f64,
    pub hi: f64,
}

impl SubdifferentialSet {
    pub fn is_singleton(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, g: f64) -> bool {
        self.lo <= g && g <= self.hi
    }

    /// Projection of 0 onto the interval.
    pub fn minimal_norm_element(&self) -> f64 {
        0.0f64.clamp(self.lo, self.hi)
    }

    /// sup over the set of |g|^2.
    pub fn sup_norm_sq(&self) -> f64 {
        self.lo.abs().max(self.hi.abs()).powi(2)
    }

    /// Support function max{g w : g in set}.
    pub fn support(&self, w: f64) -> f64 {
        (self.lo * w).max(self.hi * w)
    }
}

/// Clarke generalized directional derivative at z in direction w.
///
/// Exact family: max inner product over the active-branch gradients.
/// Generic: a sampled lower estimate of the limsup of difference
/// quotients over shrinking neighbourhoods.
pub fn directional_derivative(f: &LocallyLipschitzFn, z: f64, w: f64, budget: usize) -> f64 {
    match f {
        LocallyLipschitzFn::MinQuadratics { .. } => {
            let grads = f.active_gradients(z).expect("exact family");
            grads.iter().map(|g| g * w).fold(f64::NEG_INFINITY, f64::max)
        }
        LocallyLipschitzFn::Generic { .. } => sampled_directional_derivative(f, z, w, budget),
    }
}

/// Sampling lower estimate of the directional derivative, used for the
/// generic route and as the independent probe of the exact one.
pub fn sampled_directional_derivative(f: &LocallyLipschitzFn, z: f64, w: f64, budget: usize) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha12Rng::seed_from_u64(0x5eed);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..budget.max(10_000) {
        // x -> z and eps -> 0+ on log-uniform scales
        let dx = 1e-4 * 10f64.powf(-3.0 * rng.gen::<f64>()) * (2.0 * rng.gen::<f64>() - 1.0);
        let eps = 1e-4 * 10f64.powf(-3.0 * rng.gen::<f64>());
        let x = z + dx;
        let quotient = (f.eval(x + eps * w) - f.eval(x)) / eps;
        best = best.max(quotient);
    }
    best
}

/// Exact Clarke subdifferential for the min-of-quadratics family:
/// singleton gradient on a strict branch, interval hull at a tie.
pub fn subdifferential(f: &LocallyLipschitzFn, z: f64) -> Result<SubdifferentialSet> {
    let grads = f.active_gradients(z)?;
    let lo = grads.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grads.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(SubdifferentialSet { lo, hi })
}

/// Selection strategy tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SelectionStrategy {
    MinimalNorm,
    BranchFollowing,
}

/// One subdifferential element per grid time.
#[derive(Debug, Clone, Serialize)]
pub struct Selection {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub strategy: SelectionStrategy,
}

impl Selection {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,rho\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            out.push_str(&format!("{:.16e},{:.16e}\n", t, v));
        }
        out
    }
}

/// Minimal-norm selection: projects 0 onto the subdifferential at each
/// grid point. Deterministic, and inherits any growth envelope.
pub fn minimal_norm_selection(
    f: &LocallyLipschitzFn,
    times: &[f64],
    chi: &[f64],
) -> Result<Selection> {
    let values = chi
        .iter()
        .map(|&x| subdifferential(f, x).map(|s| s.minimal_norm_element()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Selection {
        times: times.to_vec(),
        values,
        strategy: SelectionStrategy::MinimalNorm,
    })
}

/// Result of checking ||dSigma(s, x)||^2 <= b1(s) + b2 |x|^2 over a box.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub pass: bool,
    pub worst_margin: f64,
    pub witness: Option<(f64, f64)>,
}

/// Grid search of the growth envelope over s in [0, s_max], |x| <= x_max.
pub fn growth_check(
    f: &LocallyLipschitzFn,
    b1: impl Fn(f64) -> f64,
    b2: f64,
    s_max: f64,
    x_max: f64,
    n_grid: usize,
) -> Result<GrowthReport> {
    let mut worst = f64::INFINITY;
    let mut witness = None;
    for i in 0..=n_grid {
        let s = s_max * i as f64 / n_grid as f64;
        for j in 0..=n_grid {
            let x = -x_max + 2.0 * x_max * j as f64 / n_grid as f64;
            let set = subdifferential(f, x)?;
            let margin = b1(s) + b2 * x * x - set.sup_norm_sq();
            if margin < worst {
                worst = margin;
                witness = Some((s, x));
            }
        }
    }
    Ok(GrowthReport {
        pass: worst >= 0.0,
        worst_margin: worst,
        witness: if worst < 0.0 { witness } else { None },
    })
}
