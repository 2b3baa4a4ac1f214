//! Mild-solution machinery: convolution quadratures against the evolution
//! operators, the piecewise solution map, and Picard iteration under a
//! Clarke selection.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::clarke::{subdifferential, LocallyLipschitzFn};
use crate::error::{Error, Result};
use crate::evolution::{GalerkinSpace, PropagatorPair};
use crate::phase::{History, IntervalKind};
use crate::problem::ProblemSpec;
use crate::rosenblatt::RosenblattPath;

/// Grid-indexed access to the two-parameter operators G and E; the
/// identity stub backs the exactness tests.
pub trait EvolutionFamily {
    fn n_dim(&self) -> usize;
    fn g_at(&self, tau_idx: usize, s_idx: usize) -> DMatrix<f64>;
    fn e_at(&self, tau_idx: usize, s_idx: usize) -> DMatrix<f64>;
}

impl EvolutionFamily for PropagatorPair {
    fn n_dim(&self) -> usize {
        PropagatorPair::n_dim(self)
    }

    fn g_at(&self, tau_idx: usize, s_idx: usize) -> DMatrix<f64> {
        self.g(tau_idx, s_idx)
    }

    fn e_at(&self, tau_idx: usize, s_idx: usize) -> DMatrix<f64> {
        self.e(tau_idx, s_idx)
    }
}

/// G = E = I at every index pair.
pub struct IdentityFamily {
    pub dim: usize,
}

impl EvolutionFamily for IdentityFamily {
    fn n_dim(&self) -> usize {
        self.dim
    }

    fn g_at(&self, _: usize, _: usize) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }

    fn e_at(&self, _: usize, _: usize) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }
}

/// Composite trapezoid quadrature of s -> G(tau, s) rho(s) over the grid
/// window [lo, tau_idx]; rho is indexed on the full grid.
pub fn deterministic_convolution(
    fam: &dyn EvolutionFamily,
    rho: &[DVector<f64>],
    dt: f64,
    lo: usize,
    tau_idx: usize,
) -> DVector<f64> {
    let mut acc = DVector::zeros(fam.n_dim());
    if tau_idx <= lo {
        return acc;
    }
    for i in lo..=tau_idx {
        let w = if i == lo || i == tau_idx { 0.5 * dt } else { dt };
        acc += fam.g_at(tau_idx, i) * &rho[i] * w;
    }
    acc
}

/// Left-point Riemann-Stieltjes sum
/// sum_i G(tau, s_i) (q_i . dZ_i) over [lo, tau_idx); pathwise Young
/// integral for H > 1/2. The mode increments multiply the matching state
/// components of q; modes beyond the noise dimension see no noise.
pub fn stochastic_convolution(
    fam: &dyn EvolutionFamily,
    q_vals: &[DVector<f64>],
    noise: &RosenblattPath,
    dt: f64,
    lo: usize,
    tau_idx: usize,
) -> Result<DVector<f64>> {
    let dim = fam.n_dim();
    let mut acc = DVector::zeros(dim);
    if tau_idx <= lo {
        return Ok(acc);
    }
    if noise.times.len() <= tau_idx {
        return Err(Error::GridMismatch(format!(
            "noise path has {} points, need {}",
            noise.times.len(),
            tau_idx + 1
        )));
    }
    let noise_dt = noise.times[1] - noise.times[0];
    if (noise_dt - dt).abs() > 1e-12 * dt.max(1.0) {
        return Err(Error::GridMismatch(format!(
            "noise step {noise_dt} differs from solver step {dt}"
        )));
    }
    let n_modes = noise.n_components();
    for i in lo..tau_idx {
        let mut weighted = DVector::zeros(dim);
        for m in 0..dim.min(n_modes) {
            let dz = noise.values[i + 1][m] - noise.values[i][m];
            weighted[m] = q_vals[i][m] * dz;
        }
        acc += fam.g_at(tau_idx, i) * weighted;
    }
    Ok(acc)
}

/// Pointwise minimal-norm Clarke selection lifted to the Galerkin
/// coefficients: evaluate on a spatial grid, select, project back by
/// interior trapezoid quadrature.
pub fn nemytskii_selection(
    space: &GalerkinSpace,
    sigma: &LocallyLipschitzFn,
    coeffs: &DVector<f64>,
    n_points: usize,
) -> Result<DVector<f64>> {
    let n = space.n_dim();
    let pi = std::f64::consts::PI;
    let dw = pi / (n_points + 1) as f64;
    let mut out = DVector::zeros(n);
    for m in 1..=n_points {
        let w = m as f64 * dw;
        let x: f64 = (1..=n).map(|k| coeffs[k - 1] * space.basis(k, w)).sum();
        let rho = subdifferential(sigma, x)?.minimal_norm_element();
        for k in 1..=n {
            out[k - 1] += rho * space.basis(k, w) * dw;
        }
    }
    Ok(out)
}

/// One pass of the piecewise solution map on the grid.
#[derive(Debug, Clone)]
pub struct MildSolutionPath {
    pub times: Vec<f64>,
    pub values: Vec<DVector<f64>>,
    pub provenance: Vec<IntervalKind>,
    /// contraction part: impulse assignments, initial-data terms and the
    /// stochastic convolution
    pub theta1: Vec<DVector<f64>>,
    /// compact part: deterministic convolution of the selection
    pub theta2: Vec<DVector<f64>>,
    /// selection coefficients used at each grid point
    pub selection: Vec<DVector<f64>>,
    pub seed: u64,
}

impl MildSolutionPath {
    pub fn sup_distance(&self, other: &MildSolutionPath) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn sup_theta1_distance(&self, other: &MildSolutionPath) -> f64 {
        self.theta1
            .iter()
            .zip(&other.theta1)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `t,z_1,...,z_N` rows at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.values.first().map_or(0, DVector::len);
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",z_{i}"));
        }
        out.push('\n');
        for (t, v) in self.times.iter().zip(&self.values) {
            out.push_str(&format!("{:.16e}", t));
            for x in v.iter() {
                out.push_str(&format!(",{:.16e}", x));
            }
            out.push('\n');
        }
        out
    }
}

/// Number of spatial points for the pointwise selection.
const NEMYTSKII_POINTS: usize = 64;

/// Applies the solution map to the previous iterate.
///
/// Base intervals get the variation-of-constants formula with both
/// convolutions; impulse windows assign f_k directly against the path
/// being built, solving the one implicit trapezoid endpoint so the
/// assignment holds exactly at grid points.
pub fn theta_apply(
    problem: &ProblemSpec,
    pair: &PropagatorPair,
    noise: &RosenblattPath,
    prev: &[DVector<f64>],
) -> Result<MildSolutionPath> {
    let times: Vec<f64> = pair.grid().to_vec();
    let n_grid = times.len();
    if prev.len() != n_grid {
        return Err(Error::GridMismatch(format!(
            "iterate has {} points, grid has {n_grid}",
            prev.len()
        )));
    }
    let dim = problem.n_dim();
    let dt = times[1] - times[0];
    let space = GalerkinSpace::new(dim)?;
    let prev_hist = History::new(problem.eta.clone(), times.clone(), prev.to_vec())?;

    // selection and noise amplitude from the previous iterate
    let mut rho = Vec::with_capacity(n_grid);
    let mut q_vals = Vec::with_capacity(n_grid);
    let q_active = !matches!(problem.q_map.kernel, crate::problem::DelayKernel::Zero);
    for (i, &t) in times.iter().enumerate() {
        let r = match &problem.sigma {
            Some(sig) => nemytskii_selection(&space, sig, &prev[i], NEMYTSKII_POINTS)?,
            None => DVector::zeros(dim),
        };
        rho.push(r);
        let q = if q_active {
            problem.q_map.apply(t, &prev_hist.segment(t)?)?
        } else {
            DVector::zeros(dim)
        };
        q_vals.push(q);
    }

    let eta0 = problem.eta.eval(0.0);
    let mut values: Vec<DVector<f64>> = vec![DVector::zeros(dim); n_grid];
    let mut theta1 = vec![DVector::zeros(dim); n_grid];
    let mut theta2 = vec![DVector::zeros(dim); n_grid];
    let mut provenance = Vec::with_capacity(n_grid);
    // g_k(t_k, .) evaluated once per post-impulse interval
    let mut g_cache: Vec<Option<DVector<f64>>> = vec![None; problem.impulse_maps.len() + 1];

    for j in 0..n_grid {
        let tau = times[j];
        let kind = problem.schedule.classify(tau.min(problem.beta));
        provenance.push(kind);
        match kind {
            IntervalKind::Impulse { k } => {
                let map = &problem.impulse_maps[k - 1];
                // history built from the updated path, the current point
                // left at zero so its implicit trapezoid weight can be
                // solved for in closed form
                let hist = History::new(problem.eta.clone(), times.clone(), values.clone())?;
                let partial = map.f.kernel.apply(&hist.segment(tau)?)?;
                let coeff = map.f.coeff.eval(tau);
                let self_weight = coeff * map.f.kernel.eval(0.0) * 0.5 * dt;
                let denom = 1.0 - self_weight;
                if denom.abs() < 1e-12 {
                    return Err(Error::SelectionInfeasible(format!(
                        "implicit impulse assignment singular at tau = {tau}"
                    )));
                }
                values[j] = partial * (coeff / denom);
                theta1[j] = values[j].clone();
            }
            IntervalKind::Base { k } => {
                let lo_time = problem.schedule.base_start(k);
                let lo = (lo_time / dt).round() as usize;
                let init = if k == 0 {
                    pair.e(j, 0) * &eta0 + pair.g(j, 0) * &problem.xi
                } else {
                    // f_k(t_k, .) is the already-assigned value at t_k
                    let g_val = match &g_cache[k] {
                        Some(v) => v.clone(),
                        None => {
                            let hist =
                                History::new(problem.eta.clone(), times.clone(), values.clone())?;
                            let v = problem.impulse_maps[k - 1]
                                .g
                                .apply(lo_time, &hist.segment(lo_time)?)?;
                            g_cache[k] = Some(v.clone());
                            v
                        }
                    };
                    pair.e(j, lo) * &values[lo] + pair.g(j, lo) * g_val
                };
                let det = deterministic_convolution(pair, &rho, dt, lo, j);
                let sto = stochastic_convolution(pair, &q_vals, noise, dt, lo, j)?;
                theta1[j] = &init + &sto;
                theta2[j] = det;
                values[j] = &theta1[j] + &theta2[j];
            }
        }
    }
    Ok(MildSolutionPath {
        times,
        values,
        provenance,
        theta1,
        theta2,
        selection: rho,
        seed: problem.seed,
    })
}

/// Outcome of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converged,
    Stalled,
    Diverged,
}

/// Per-iteration diagnostics of the Picard run.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTrace {
    /// d_n = sup_tau ||y^(n+1) - y^(n)||
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
    /// squared ratios of successive contraction-part distances over
    /// squared input distances
    pub theta1_sq_ratios: Vec<f64>,
    pub verdict: Verdict,
    pub iterations: usize,
    /// first iteration with d_n <= abs_tol
    pub converged_at: Option<usize>,
}

/// Picard iteration from the zero extension of the initial history.
pub fn picard_solve(
    problem: &ProblemSpec,
    pair: &PropagatorPair,
    noise: &RosenblattPath,
) -> Result<(MildSolutionPath, ConvergenceTrace)> {
    let n_grid = pair.grid().len();
    let eta0 = problem.eta.eval(0.0);
    let mut current: Vec<DVector<f64>> = vec![eta0; n_grid];
    let mut last_path: Option<MildSolutionPath> = None;
    let mut distances = Vec::new();
    let mut theta1_sq_ratios = Vec::new();
    let mut converged_at = None;
    let mut growth_streak = 0usize;
    let mut verdict = Verdict::Stalled;
    let mut iterations = 0usize;

    for iter in 1..=problem.max_iter.max(2) {
        iterations = iter;
        let next = theta_apply(problem, pair, noise, &current)?;
        let d = next
            .values
            .iter()
            .zip(&current)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if let Some(prev_path) = &last_path {
            let t1 = next.sup_theta1_distance(prev_path);
            let d_in = *distances.last().unwrap_or(&0.0);
            if d_in > 1e-300 {
                theta1_sq_ratios.push((t1 * t1) / (d_in * d_in));
            }
        }
        if let Some(&d_prev) = distances.last() {
            if d > d_prev {
                growth_streak += 1;
            } else {
                growth_streak = 0;
            }
        }
        distances.push(d);
        current = next.values.clone();
        last_path = Some(next);
        if d <= problem.abs_tol && converged_at.is_none() {
            converged_at = Some(iter);
        }
        if d <= problem.abs_tol && iter >= 2 {
            verdict = Verdict::Converged;
            break;
        }
        if growth_streak >= 3 {
            verdict = Verdict::Diverged;
            break;
        }
    }
    let ratios = distances
        .windows(2)
        .map(|w| if w[0] > 1e-300 { w[1] / w[0] } else { 0.0 })
        .collect();
    let trace = ConvergenceTrace {
        distances,
        ratios,
        theta1_sq_ratios,
        verdict,
        iterations,
        converged_at,
    };
    Ok((last_path.expect("at least one iteration ran"), trace))
}
