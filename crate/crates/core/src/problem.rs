//! Problem assembly: named delay kernels, the full instance of the
//! impulsive inclusion, and the JSON config schema.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::clarke::{LocallyLipschitzFn, Quadratic};
use crate::error::{Error, Result};
use crate::evolution::{assemble_generator, GalerkinSpace, GeneratorFamily};
use crate::phase::{AnalyticTail, HistorySegment, ImpulseSchedule, WeightFunction};
use crate::quad::adaptive;
use crate::rosenblatt::{HurstParameter, TraceClassCovariance};

/// Named delay kernel on (-inf, 0].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayKernel {
    Zero,
    /// k(t) = scale * e^(rate t), rate > 0
    Exponential { scale: f64, rate: f64 },
    /// k(t) = scale * (1 - t)^(-power), power > 1
    PowerDecay { scale: f64, power: f64 },
}

impl DelayKernel {
    pub fn eval(&self, t: f64) -> f64 {
        debug_assert!(t <= 1e-12);
        match self {
            Self::Zero => 0.0,
            Self::Exponential { scale, rate } => scale * (rate * t).exp(),
            Self::PowerDecay { scale, power } => scale * (1.0 - t).powf(-power),
        }
    }

    /// (int_{-inf}^0 k(t)^2 / l(t) dt)^(1/2), the weighted norm whose
    /// finiteness the delay maps require.
    pub fn weighted_l2(&self, weight: &WeightFunction, name: &str) -> Result<f64> {
        let WeightFunction::Exponential { rate: r } = *weight;
        match self {
            Self::Zero => Ok(0.0),
            Self::Exponential { scale, rate } => {
                let denom = 2.0 * rate - r;
                if denom <= 0.0 {
                    return Err(Error::DivergentKernel(format!(
                        "{name}: kernel rate {rate} too slow against weight rate {r}"
                    )));
                }
                Ok((scale * scale / denom).sqrt())
            }
            Self::PowerDecay { .. } => Err(Error::DivergentKernel(format!(
                "{name}: polynomial decay cannot beat the exponential weight"
            ))),
        }
    }

    /// int_{-inf}^0 k(theta) Xi(theta) dtheta for the tau-segment Xi:
    /// closed-form tail contribution plus trapezoid on the computed part.
    pub fn apply(&self, seg: &HistorySegment<'_>) -> Result<DVector<f64>> {
        let hist = seg.history();
        let tau = seg.anchor();
        let dim = hist.dim();
        if matches!(self, Self::Zero) {
            return Ok(DVector::zeros(dim));
        }
        // tail part: int_{-inf}^0 k(sigma - tau) eta(sigma) dsigma
        let tail_part = match (self, hist.tail()) {
            (Self::Exponential { scale, rate }, tail) => {
                tail.exp_kernel_integral(*scale, *rate)? * (-rate * tau).exp()
            }
            (Self::PowerDecay { scale, power }, AnalyticTail::Zero { .. }) => {
                let _ = (scale, power);
                DVector::zeros(dim)
            }
            (Self::PowerDecay { scale, power }, AnalyticTail::Constant { value }) => {
                if *power <= 1.0 {
                    return Err(Error::DivergentKernel(
                        "power-decay kernel needs power > 1 for a constant tail".into(),
                    ));
                }
                value * (scale * (1.0 + tau).powf(1.0 - power) / (power - 1.0))
            }
            (Self::PowerDecay { scale, power }, AnalyticTail::ExpDecay { value, rate: a }) => {
                let cutoff = -(40.0 / a).max(1.0);
                let mass = adaptive(cutoff, 0.0, 1e-10, &mut |sigma: f64| {
                    scale * (1.0 - (sigma - tau)).powf(-power) * (a * sigma).exp()
                });
                value * mass
            }
            (Self::Zero, _) => unreachable!(),
        };
        // computed part: int_0^tau k(sigma - tau) path(sigma) dsigma
        let mut acc = DVector::zeros(dim);
        let mut prev: Option<(f64, DVector<f64>)> = None;
        for (t, v) in hist.times().iter().zip(hist.values()) {
            if *t > tau + 1e-12 {
                break;
            }
            let term = v * self.eval(*t - tau);
            if let Some((tp, fp)) = prev {
                acc += (fp + &term) * (0.5 * (t - tp));
            }
            prev = Some((*t, term));
        }
        if let Some((tp, fp)) = prev {
            if tau > tp + 1e-12 {
                let end = hist.value_at(tau) * self.eval(0.0);
                acc += (fp + end) * (0.5 * (tau - tp));
            }
        }
        Ok(tail_part + acc)
    }
}

/// Scalar coefficient of time used for the drift weight v and the
/// delay-map amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeCoefficient {
    Constant { value: f64 },
    /// value * sqrt(tau), Holder-1/2 in time
    SqrtScaled { value: f64 },
}

impl TimeCoefficient {
    pub fn eval(&self, tau: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::SqrtScaled { value } => value * tau.max(0.0).sqrt(),
        }
    }

    pub fn sup_on(&self, beta: f64) -> f64 {
        match self {
            Self::Constant { value } => value.abs(),
            Self::SqrtScaled { value } => value.abs() * beta.sqrt(),
        }
    }
}

/// A delay map Xi -> coeff(tau) * int k(t) Xi(t) dt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayMap {
    pub kernel: DelayKernel,
    pub coeff: TimeCoefficient,
}

impl DelayMap {
    pub fn zero() -> Self {
        Self { kernel: DelayKernel::Zero, coeff: TimeCoefficient::Constant { value: 0.0 } }
    }

    pub fn apply(&self, tau: f64, seg: &HistorySegment<'_>) -> Result<DVector<f64>> {
        Ok(self.kernel.apply(seg)? * self.coeff.eval(tau))
    }

    /// Amplitude-weighted kernel norm, the Lipschitz envelope of the map.
    pub fn envelope(&self, weight: &WeightFunction, beta: f64, name: &str) -> Result<f64> {
        Ok(self.coeff.sup_on(beta) * self.kernel.weighted_l2(weight, name)?)
    }
}

/// The pair of maps active on one impulse window (r_k, t_k].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpulsePair {
    pub f: DelayMap,
    pub g: DelayMap,
}

/// A full instance of the impulsive second-order inclusion.
pub struct ProblemSpec {
    pub generator: GeneratorFamily,
    pub hurst: HurstParameter,
    pub covariance: TraceClassCovariance,
    pub schedule: ImpulseSchedule,
    pub weight: WeightFunction,
    /// noise amplitude map q
    pub q_map: DelayMap,
    /// (f_k, g_k) for k = 1..=M, aligned with schedule.pairs
    pub impulse_maps: Vec<ImpulsePair>,
    /// multivalued perturbation; None drops the inclusion term
    pub sigma: Option<LocallyLipschitzFn>,
    pub eta: AnalyticTail,
    pub xi: DVector<f64>,
    pub beta: f64,
    pub delta: f64,
    pub seed: u64,
    pub max_iter: usize,
    pub abs_tol: f64,
}

impl ProblemSpec {
    pub fn n_dim(&self) -> usize {
        self.generator.n_dim()
    }

    pub fn n_steps(&self) -> usize {
        (self.beta / self.delta).round() as usize
    }

    /// Validates schedule alignment and delay-kernel finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.impulse_maps.len() != self.schedule.n_impulses() {
            return Err(Error::Config(format!(
                "{} impulse maps for {} schedule windows",
                self.impulse_maps.len(),
                self.schedule.n_impulses()
            )));
        }
        if self.eta.dim() != self.n_dim() || self.xi.len() != self.n_dim() {
            return Err(Error::Config("initial data dimension mismatch".into()));
        }
        if self.delta <= 0.0 || self.beta <= 0.0 {
            return Err(Error::Config("beta and delta must be positive".into()));
        }
        // every breakpoint must sit within one step of a grid point
        let mut breaks = vec![self.beta];
        for &(r, t) in &self.schedule.pairs {
            breaks.push(r);
            breaks.push(t);
        }
        for b in breaks {
            let missing = (b / self.delta - (b / self.delta).round()).abs();
            if missing > 1e-9 {
                return Err(Error::Config(format!(
                    "breakpoint {b} is not within one step of the grid (delta = {})",
                    self.delta
                )));
            }
        }
        self.q_map.envelope(&self.weight, self.beta, "L_u")?;
        for (k, pair) in self.impulse_maps.iter().enumerate() {
            pair.f.envelope(&self.weight, self.beta, &format!("A_{}", k + 1))?;
            pair.g.envelope(&self.weight, self.beta, &format!("A~_{}", k + 1))?;
        }
        Ok(())
    }
}

/// JSON-facing schema mirroring the ProblemSpec fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub hurst: f64,
    /// covariance eigenvalues, one per noise mode
    pub q_modes: Vec<f64>,
    pub galerkin_dim: usize,
    pub beta: f64,
    pub delta: f64,
    #[serde(default)]
    pub t0: f64,
    #[serde(default)]
    pub impulses: Vec<ImpulseWindowConfig>,
    pub weight: WeightConfig,
    #[serde(default = "default_drift")]
    pub v: TimeCoefficient,
    pub kernels: KernelsConfig,
    #[serde(default)]
    pub sigma: Option<SigmaConfig>,
    pub eta: EtaConfig,
    pub xi: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
}

fn default_drift() -> TimeCoefficient {
    TimeCoefficient::SqrtScaled { value: 0.1 }
}

fn default_max_iter() -> usize {
    50
}

fn default_abs_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ImpulseWindowConfig {
    pub r: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightConfig {
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelsConfig {
    pub u: DelayKernel,
    #[serde(default = "default_b_tilde")]
    pub b_tilde: TimeCoefficient,
    /// one kernel per impulse window, cycled if shorter
    #[serde(default)]
    pub mu: Vec<DelayKernel>,
    #[serde(default)]
    pub mu_tilde: Vec<DelayKernel>,
}

fn default_b_tilde() -> TimeCoefficient {
    TimeCoefficient::Constant { value: 1.0 }
}

/// min of two quadratics a x^2 + b x + c, given as coefficient triples.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SigmaConfig {
    pub q1: [f64; 3],
    pub q2: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaConfig {
    Zero,
    Constant { value: Vec<f64> },
    ExpDecay { value: Vec<f64>, rate: f64 },
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build(&self) -> Result<ProblemSpec> {
        let space = GalerkinSpace::new(self.galerkin_dim)?;
        let v = self.v;
        let generator = assemble_generator(&space, move |tau| v.eval(tau));
        let hurst = HurstParameter::new(self.hurst)?;
        let covariance = TraceClassCovariance::new(self.q_modes.clone())?;
        let schedule = ImpulseSchedule::new(
            self.t0,
            self.impulses.iter().map(|w| (w.r, w.t)).collect(),
            self.beta,
        )?;
        let WeightConfig::Exponential { rate } = self.weight;
        let weight = WeightFunction::Exponential { rate };
        let dim = self.galerkin_dim;
        let eta = match &self.eta {
            EtaConfig::Zero => AnalyticTail::Zero { dim },
            EtaConfig::Constant { value } => {
                AnalyticTail::Constant { value: DVector::from_vec(value.clone()) }
            }
            EtaConfig::ExpDecay { value, rate } => AnalyticTail::ExpDecay {
                value: DVector::from_vec(value.clone()),
                rate: *rate,
            },
        };
        let sigma = match &self.sigma {
            None => None,
            Some(s) => Some(LocallyLipschitzFn::min_quadratics(
                Quadratic { a: s.q1[0], b: s.q1[1], c: s.q1[2] },
                Quadratic { a: s.q2[0], b: s.q2[1], c: s.q2[2] },
            )?),
        };
        let unit = TimeCoefficient::Constant { value: 1.0 };
        let pick = |list: &[DelayKernel], k: usize| -> DelayKernel {
            if list.is_empty() {
                DelayKernel::Zero
            } else {
                list[k % list.len()]
            }
        };
        let impulse_maps = (0..self.impulses.len())
            .map(|k| ImpulsePair {
                f: DelayMap { kernel: pick(&self.kernels.mu, k), coeff: unit },
                g: DelayMap { kernel: pick(&self.kernels.mu_tilde, k), coeff: unit },
            })
            .collect();
        let spec = ProblemSpec {
            generator,
            hurst,
            covariance,
            schedule,
            weight,
            q_map: DelayMap { kernel: self.kernels.u, coeff: self.kernels.b_tilde },
            impulse_maps,
            sigma,
            eta,
            xi: DVector::from_vec(self.xi.clone()),
            beta: self.beta,
            delta: self.delta,
            seed: self.seed,
            max_iter: self.max_iter,
            abs_tol: self.abs_tol,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::History;
    use approx::assert_relative_eq;

    #[test]
    fn weighted_norm_closed_form() {
        // u(t) = e^{2t}, weight e^{2s}: L_u = sqrt(1/2)
        let k = DelayKernel::Exponential { scale: 1.0, rate: 2.0 };
        let w = WeightFunction::Exponential { rate: 2.0 };
        let l = k.weighted_l2(&w, "L_u").unwrap();
        assert_relative_eq!(l, 0.5f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn slow_kernel_diverges() {
        let k = DelayKernel::Exponential { scale: 1.0, rate: 0.5 };
        let w = WeightFunction::Exponential { rate: 2.0 };
        let err = k.weighted_l2(&w, "L_u").unwrap_err();
        assert!(err.to_string().contains("L_u"));
    }

    #[test]
    fn power_kernel_diverges_against_exponential_weight() {
        let k = DelayKernel::PowerDecay { scale: 1.0, power: 2.0 };
        let w = WeightFunction::Exponential { rate: 2.0 };
        assert!(k.weighted_l2(&w, "A_1").is_err());
    }

    #[test]
    fn exponential_kernel_against_constant_tail() {
        // int_{-inf}^0 e^{2t} * 1 dt = 1/2 at tau = 0
        let k = DelayKernel::Exponential { scale: 1.0, rate: 2.0 };
        let tail = AnalyticTail::Constant { value: DVector::from_element(1, 1.0) };
        let times: Vec<f64> = (0..=64).map(|i| i as f64 / 64.0).collect();
        let values = vec![DVector::from_element(1, 1.0); times.len()];
        let hist = History::new(tail, times, values).unwrap();
        let v0 = k.apply(&hist.segment(0.0).unwrap()).unwrap();
        assert_relative_eq!(v0[0], 0.5, epsilon = 1e-12);
        // constant-one history: the full integral stays 1/2 at any anchor
        let v1 = k.apply(&hist.segment(1.0).unwrap()).unwrap();
        assert_relative_eq!(v1[0], 0.5, epsilon = 1e-4);
    }

    #[test]
    fn zero_kernel_maps_to_zero() {
        let tail = AnalyticTail::Constant { value: DVector::from_element(2, 3.0) };
        let times = vec![0.0, 1.0];
        let values = vec![DVector::from_element(2, 3.0); 2];
        let hist = History::new(tail, times, values).unwrap();
        let v = DelayKernel::Zero.apply(&hist.segment(1.0).unwrap()).unwrap();
        assert_eq!(v, DVector::zeros(2));
    }

    fn sample_config_json() -> String {
        serde_json::json!({
            "hurst": 0.75,
            "q_modes": [1.0, 0.25],
            "galerkin_dim": 2,
            "beta": 1.0,
            "delta": 0.01,
            "impulses": [{"r": 0.3, "t": 0.5}],
            "weight": {"kind": "exponential", "rate": 2.0},
            "kernels": {
                "u": {"kind": "exponential", "scale": 0.1, "rate": 2.0},
                "mu": [{"kind": "exponential", "scale": 0.1, "rate": 2.0}],
                "mu_tilde": [{"kind": "exponential", "scale": 0.1, "rate": 2.0}]
            },
            "sigma": {"q1": [1.0, 0.0, 0.0], "q2": [1.0, -2.0, 1.0]},
            "eta": {"kind": "constant", "value": [0.5, 0.0]},
            "xi": [0.0, 0.0],
            "seed": 42
        })
        .to_string()
    }

    #[test]
    fn config_round_trip_builds() {
        let cfg = ProblemConfig::from_json(&sample_config_json()).unwrap();
        let spec = cfg.build().unwrap();
        assert_eq!(spec.n_dim(), 2);
        assert_eq!(spec.n_steps(), 100);
        assert_eq!(spec.impulse_maps.len(), 1);
        assert_eq!(spec.max_iter, 50);
    }

    #[test]
    fn misaligned_breakpoint_rejected() {
        let mut cfg = ProblemConfig::from_json(&sample_config_json()).unwrap();
        cfg.impulses[0].r = 0.305; // off the delta = 0.01 grid
        assert!(cfg.build().is_err());
    }

    #[test]
    fn bad_schedule_rejected() {
        let mut cfg = ProblemConfig::from_json(&sample_config_json()).unwrap();
        cfg.impulses[0] = ImpulseWindowConfig { r: 0.5, t: 0.3 };
        assert!(cfg.build().is_err());
    }
}
