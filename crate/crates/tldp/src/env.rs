//! Synthetic pricing environments with covariate shift.
//!
//! The target covariate is uniform on `[0,1]^d`. The source covariate density
//! is proportional to `||x - x*||_inf^gamma` around the cube center
//! `x* = (1/2, ..., 1/2)`, which realises a prescribed transfer exponent
//! `gamma` against the uniform target law (gamma = 0 collapses to uniform).
//! Source prices follow a piecewise-uniform conditional density on a central
//! band; the minimum piece value is the exploration coefficient `kappa`.
//!
//! Two reward families are provided: a price-quadratic family (linear in
//! covariates, concave in price for the stock configurations) and a bump
//! family (a constant floor plus localized plateaus around a few centers).
//! Source and target share one reward model instance; only covariates shift.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::{linf_slice, sample_uniform, IntervalUnion, Point};
use crate::policy::SourceDataset;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid reward configuration: {0}")]
    InvalidReward(String),
    #[error("invalid source sampler configuration: {0}")]
    InvalidSourceConfig(String),
    #[error("bernoulli noise needs a mean in [0,1], got {0}")]
    MeanOutsideUnit(f64),
}

/// Reward linear in covariates and quadratic in price:
/// `f(x, p) = theta0 + (theta . x) p + theta_tilde p^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticReward {
    theta0: f64,
    theta: Vec<f64>,
    theta_tilde: f64,
}

impl QuadraticReward {
    /// Validates that the reward stays inside `[0,1]` over the whole joint
    /// cube. For fixed `p` the covariate extremes sit at cube corners, and
    /// the resulting envelopes are quadratics in `p`, so endpoints plus an
    /// interior vertex cover the range exactly.
    pub fn new(theta0: f64, theta: Vec<f64>, theta_tilde: f64) -> Result<Self, EnvError> {
        if theta.is_empty() {
            return Err(EnvError::InvalidReward("theta must have d >= 1 entries".into()));
        }
        let lo_x: f64 = theta.iter().map(|t| t.min(0.0)).sum();
        let hi_x: f64 = theta.iter().map(|t| t.max(0.0)).sum();
        let envelope_extremes = |slope: f64| -> (f64, f64) {
            let eval = |p: f64| theta0 + slope * p + theta_tilde * p * p;
            let mut lo = eval(0.0).min(eval(1.0));
            let mut hi = eval(0.0).max(eval(1.0));
            if theta_tilde != 0.0 {
                let vertex = -slope / (2.0 * theta_tilde);
                if (0.0..=1.0).contains(&vertex) {
                    lo = lo.min(eval(vertex));
                    hi = hi.max(eval(vertex));
                }
            }
            (lo, hi)
        };
        let (min_f, _) = envelope_extremes(lo_x);
        let (_, max_f) = envelope_extremes(hi_x);
        if min_f < -1e-9 || max_f > 1.0 + 1e-9 {
            return Err(EnvError::InvalidReward(format!(
                "reward range [{min_f}, {max_f}] leaves [0,1]"
            )));
        }
        Ok(Self {
            theta0,
            theta,
            theta_tilde,
        })
    }

    pub fn d(&self) -> usize {
        self.theta.len()
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_tilde(&self) -> f64 {
        self.theta_tilde
    }

    pub fn mean(&self, x: &[f64], p: f64) -> f64 {
        debug_assert_eq!(x.len(), self.theta.len());
        let dot: f64 = self.theta.iter().zip(x).map(|(t, xi)| t * xi).sum();
        self.theta0 + dot * p + self.theta_tilde * p * p
    }

    /// l∞ Lipschitz constant: per-covariate slopes sum to `||theta||_1`, the
    /// price slope is bounded by `max |theta . x| + 2 |theta_tilde|`.
    pub fn lipschitz_bound(&self) -> f64 {
        let l1: f64 = self.theta.iter().map(|t| t.abs()).sum();
        let pos: f64 = self.theta.iter().map(|t| t.max(0.0)).sum();
        let neg: f64 = self.theta.iter().map(|t| (-t).max(0.0)).sum();
        l1 + pos.max(neg) + 2.0 * self.theta_tilde.abs()
    }
}

/// Plateau profile of the bump rewards: 1 on `[0, 1/12)`, linearly decaying
/// to 0 on `[1/12, 1/6)`, 0 beyond.
pub fn phi(z: f64) -> f64 {
    debug_assert!(z >= 0.0);
    if z < 1.0 / 12.0 {
        1.0
    } else if z < 1.0 / 6.0 {
        2.0 - 12.0 * z
    } else {
        0.0
    }
}

/// Reward made of a constant floor `1/4` plus localized bumps of height `3/4`
/// around joint centers, gated by covariate-ball membership.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpReward {
    centers: Vec<Point>,
    r_star: f64,
}

impl BumpReward {
    /// Centers are joint (covariate, price) points; their covariate parts
    /// must be pairwise at least `2 r_star` apart so the gating balls are
    /// disjoint.
    pub fn new(centers: Vec<Point>, r_star: f64) -> Result<Self, EnvError> {
        if centers.is_empty() {
            return Err(EnvError::InvalidReward("at least one bump center".into()));
        }
        if !(r_star > 0.0 && r_star <= 1.0) {
            return Err(EnvError::InvalidReward(format!(
                "r_star = {r_star} must lie in (0, 1]"
            )));
        }
        let dim = centers[0].dim();
        if centers.iter().any(|c| c.dim() != dim) {
            return Err(EnvError::InvalidReward("centers of mixed dimension".into()));
        }
        for i in 0..centers.len() {
            for j in (i + 1)..centers.len() {
                let gap = linf_slice(centers[i].covariate(), centers[j].covariate());
                if gap < 2.0 * r_star {
                    return Err(EnvError::InvalidReward(format!(
                        "covariate centers {i} and {j} are {gap} apart, need >= {}",
                        2.0 * r_star
                    )));
                }
            }
        }
        Ok(Self { centers, r_star })
    }

    pub fn d(&self) -> usize {
        self.centers[0].dim() - 1
    }

    pub fn r_star(&self) -> f64 {
        self.r_star
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn mean(&self, x: &[f64], p: f64) -> f64 {
        debug_assert_eq!(x.len() + 1, self.centers[0].dim());
        let mut f = 0.25;
        for c in &self.centers {
            let cov_gap = linf_slice(x, c.covariate());
            if cov_gap <= self.r_star {
                let joint_gap = cov_gap.max((p - c.price()).abs());
                f += 0.75 * phi(joint_gap);
            }
        }
        f
    }

    /// `phi` has slope 12, scaled by the bump height 3/4.
    pub fn lipschitz_bound(&self) -> f64 {
        9.0
    }
}

/// Expected-revenue model shared by the source and target domains.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardModel {
    Quadratic(QuadraticReward),
    Bump(BumpReward),
}

impl RewardModel {
    pub fn mean(&self, x: &[f64], p: f64) -> f64 {
        match self {
            RewardModel::Quadratic(m) => m.mean(x, p),
            RewardModel::Bump(m) => m.mean(x, p),
        }
    }

    /// The reward as a function of the price at a fixed covariate, with all
    /// covariate-dependent work hoisted out. Grid search over prices calls
    /// this once per covariate instead of re-deriving per grid point.
    pub fn price_profile(&self, x: &[f64]) -> impl Fn(f64) -> f64 + '_ {
        enum Profile {
            Quadratic { theta0: f64, slope: f64, curvature: f64 },
            Bump { gated: Vec<(f64, f64)> },
        }
        let profile = match self {
            RewardModel::Quadratic(m) => Profile::Quadratic {
                theta0: m.theta0(),
                slope: m.theta().iter().zip(x).map(|(t, xi)| t * xi).sum(),
                curvature: m.theta_tilde(),
            },
            RewardModel::Bump(m) => Profile::Bump {
                gated: m
                    .centers()
                    .iter()
                    .filter_map(|c| {
                        let gap = linf_slice(x, c.covariate());
                        (gap <= m.r_star()).then_some((gap, c.price()))
                    })
                    .collect(),
            },
        };
        move |p: f64| match &profile {
            Profile::Quadratic {
                theta0,
                slope,
                curvature,
            } => theta0 + slope * p + curvature * p * p,
            Profile::Bump { gated } => {
                let mut f = 0.25;
                for &(gap, pc) in gated {
                    f += 0.75 * phi(gap.max((p - pc).abs()));
                }
                f
            }
        }
    }

    pub fn d(&self) -> usize {
        match self {
            RewardModel::Quadratic(m) => m.d(),
            RewardModel::Bump(m) => m.d(),
        }
    }

    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            RewardModel::Quadratic(m) => m.lipschitz_bound(),
            RewardModel::Bump(m) => m.lipschitz_bound(),
        }
    }
}

/// Observation noise around the mean reward. Noisy draws are not clipped to
/// `[0,1]`: the Gaussian model is unbounded by construction and the uniform
/// band may graze the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// `Y` uniform on `[f - half_width, f + half_width]`.
    UniformBand { half_width: f64 },
    /// `Y ~ N(f, sigma^2)`.
    Gaussian { sigma: f64 },
    /// `Y in {0, 1}` with success probability `f`; requires `f in [0,1]`.
    Bernoulli,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), EnvError> {
        let ok = match self {
            NoiseModel::UniformBand { half_width } => *half_width >= 0.0,
            NoiseModel::Gaussian { sigma } => *sigma >= 0.0,
            NoiseModel::Bernoulli => true,
        };
        if ok {
            Ok(())
        } else {
            Err(EnvError::InvalidReward(format!("invalid noise model {self:?}")))
        }
    }
}

/// A noisy revenue draw with mean `model.mean(x, p)`.
pub fn sample_reward<R: Rng + ?Sized>(
    model: &RewardModel,
    noise: &NoiseModel,
    x: &[f64],
    p: f64,
    rng: &mut R,
) -> Result<f64, EnvError> {
    let f = model.mean(x, p);
    match noise {
        NoiseModel::UniformBand { half_width } => {
            Ok(f + half_width * (2.0 * rng.random::<f64>() - 1.0))
        }
        NoiseModel::Gaussian { sigma } => {
            let normal = Normal::new(f, *sigma)
                .map_err(|e| EnvError::InvalidReward(format!("gaussian noise: {e}")))?;
            Ok(normal.sample(rng))
        }
        NoiseModel::Bernoulli => {
            if !(0.0..=1.0).contains(&f) {
                return Err(EnvError::MeanOutsideUnit(f));
            }
            Ok(if rng.random::<f64>() < f { 1.0 } else { 0.0 })
        }
    }
}

/// Which of the two piecewise price densities the source uses: a band whose
/// density is the minimum piece (sparse) or a band holding the excess mass
/// (heavy, with the minimum outside).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceDensityKind {
    SparseBand,
    HeavyBand,
}

/// Source sampler parameters: covariate law exponent, price band layout and
/// the exploration coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceConfig {
    pub gamma: f64,
    pub kappa: f64,
    /// Center of the price band.
    pub p_star: f64,
    /// Width of the price band (the band is `[p* - w/2, p* + w/2]`).
    pub band_width: f64,
    pub density: PriceDensityKind,
    pub d: usize,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let fail = |msg: String| Err(EnvError::InvalidSourceConfig(msg));
        if self.d < 1 {
            return fail(format!("d = {} must be >= 1", self.d));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return fail(format!("kappa = {} must lie in (0, 1]", self.kappa));
        }
        if !(self.gamma >= 0.0) {
            return fail(format!("gamma = {} must be >= 0", self.gamma));
        }
        if !(self.band_width > 0.0 && self.band_width < 1.0) {
            return fail(format!("band width {} must lie in (0, 1)", self.band_width));
        }
        let (lo, hi) = self.band();
        if lo < 0.0 || hi > 1.0 {
            return fail(format!("price band [{lo}, {hi}] leaves [0,1]"));
        }
        if self.band_density() < 0.0 || self.outside_density() < 0.0 {
            return fail(format!(
                "negative density piece: band {}, outside {}",
                self.band_density(),
                self.outside_density()
            ));
        }
        Ok(())
    }

    pub fn band(&self) -> (f64, f64) {
        (
            self.p_star - self.band_width / 2.0,
            self.p_star + self.band_width / 2.0,
        )
    }

    /// Density value on the band.
    pub fn band_density(&self) -> f64 {
        match self.density {
            PriceDensityKind::SparseBand => self.kappa,
            PriceDensityKind::HeavyBand => {
                (1.0 - self.kappa * (1.0 - self.band_width)) / self.band_width
            }
        }
    }

    /// Density value outside the band.
    pub fn outside_density(&self) -> f64 {
        match self.density {
            PriceDensityKind::SparseBand => {
                (1.0 - self.kappa * self.band_width) / (1.0 - self.band_width)
            }
            PriceDensityKind::HeavyBand => self.kappa,
        }
    }

    /// Probability mass of the band (density times width).
    pub fn band_mass(&self) -> f64 {
        self.band_density() * self.band_width
    }
}

/// Analytic exploration coefficient of the configured piecewise density: the
/// minimum of its piece values.
pub fn exploration_coefficient_of(cfg: &SourceConfig) -> f64 {
    cfg.band_density().min(cfg.outside_density())
}

/// One target covariate, i.i.d. uniform on `[0,1]^d`.
pub fn sample_target_covariate<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

/// One source covariate with density proportional to `||x - x*||_inf^gamma`.
///
/// Exact two-stage construction: the radius law is `P(R <= r) = (2r)^{gamma+d}`
/// (inverse CDF on a single uniform draw), and conditional on the radius the
/// point is uniform on the l∞ sphere: a face chosen uniformly among the `2d`
/// faces, the remaining coordinates uniform within the face.
pub fn sample_source_covariate<R: Rng + ?Sized>(gamma: f64, d: usize, rng: &mut R) -> Vec<f64> {
    debug_assert!(gamma >= 0.0 && d >= 1);
    let u: f64 = rng.random();
    let radius = 0.5 * u.powf(1.0 / (gamma + d as f64));
    let face = rng.random_range(0..2 * d);
    let axis = face / 2;
    let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
    let mut x = vec![0.0; d];
    for (k, xk) in x.iter_mut().enumerate() {
        *xk = if k == axis {
            0.5 + sign * radius
        } else {
            0.5 + radius * (2.0 * rng.random::<f64>() - 1.0)
        };
    }
    x
}

/// One source price from the piecewise-uniform conditional density (which is
/// covariate-independent in both stock scenarios).
pub fn sample_source_price<R: Rng + ?Sized>(cfg: &SourceConfig, rng: &mut R) -> f64 {
    let (lo, hi) = cfg.band();
    if rng.random::<f64>() < cfg.band_mass() {
        lo + rng.random::<f64>() * (hi - lo)
    } else {
        let complement = IntervalUnion::from_intervals(vec![(0.0, lo), (hi, 1.0)]);
        sample_uniform(&complement, rng).expect("complement of an interior band is nonempty")
    }
}

/// Draws `n_p` i.i.d. source triples. The reward model instance is the same
/// one the target uses; only the covariate law differs.
pub fn generate_source_dataset<R: Rng + ?Sized>(
    n_p: u64,
    cfg: &SourceConfig,
    model: &RewardModel,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<SourceDataset, EnvError> {
    cfg.validate()?;
    noise.validate()?;
    let mut out = SourceDataset::empty(cfg.d);
    for _ in 0..n_p {
        let x = sample_source_covariate(cfg.gamma, cfg.d, rng);
        let p = sample_source_price(cfg, rng);
        let y = sample_reward(model, noise, &x, p, rng)?;
        out.push(&x, p, y).expect("samplers stay in the unit cube");
    }
    Ok(out)
}

/// The named scenario/configuration presets addressable from the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioId {
    S1C1,
    S1C2,
    S2C1,
    S2C2,
}

impl ScenarioId {
    pub fn all() -> [ScenarioId; 4] {
        [Self::S1C1, Self::S1C2, Self::S2C1, Self::S2C2]
    }

    pub fn d(&self) -> usize {
        match self {
            Self::S1C1 | Self::S2C1 => 2,
            Self::S1C2 | Self::S2C2 => 3,
        }
    }

    pub fn reward_model(&self) -> RewardModel {
        match self {
            Self::S1C1 => RewardModel::Quadratic(
                QuadraticReward::new(0.2, vec![0.3, 0.2], -0.1).expect("stock preset is valid"),
            ),
            Self::S1C2 => RewardModel::Quadratic(
                QuadraticReward::new(0.3, vec![0.1, 0.4, -0.2], -0.1)
                    .expect("stock preset is valid"),
            ),
            Self::S2C1 => {
                let q = 0.25;
                let centers = vec![
                    Point::new(vec![q, q, q]),
                    Point::new(vec![3.0 * q, q, q]),
                    Point::new(vec![q, 3.0 * q, 3.0 * q]),
                    Point::new(vec![3.0 * q, 3.0 * q, q]),
                ];
                RewardModel::Bump(BumpReward::new(centers, q).expect("stock preset is valid"))
            }
            Self::S2C2 => {
                let q = 0.25;
                let h = 0.75;
                let centers = vec![
                    Point::new(vec![q, q, q, q]),
                    Point::new(vec![h, q, q, q]),
                    Point::new(vec![q, h, q, q]),
                    Point::new(vec![h, h, q, q]),
                    Point::new(vec![q, q, h, h]),
                    Point::new(vec![h, q, h, h]),
                    Point::new(vec![q, h, h, h]),
                    Point::new(vec![h, h, h, h]),
                ];
                RewardModel::Bump(BumpReward::new(centers, q).expect("stock preset is valid"))
            }
        }
    }

    pub fn noise(&self) -> NoiseModel {
        match self {
            Self::S1C1 | Self::S1C2 => NoiseModel::UniformBand { half_width: 0.1 },
            Self::S2C1 | Self::S2C2 => NoiseModel::Gaussian { sigma: 0.01 },
        }
    }

    pub fn source_config(&self, gamma: f64, kappa: f64) -> SourceConfig {
        let density = match self {
            Self::S1C1 | Self::S1C2 => PriceDensityKind::SparseBand,
            Self::S2C1 | Self::S2C2 => PriceDensityKind::HeavyBand,
        };
        SourceConfig {
            gamma,
            kappa,
            p_star: 0.5,
            band_width: 0.25,
            density,
            d: self.d(),
        }
    }
}

impl std::str::FromStr for ScenarioId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s1c1" => Ok(Self::S1C1),
            "s1c2" => Ok(Self::S1C2),
            "s2c1" => Ok(Self::S2C1),
            "s2c2" => Ok(Self::S2C2),
            other => Err(format!(
                "unknown scenario '{other}' (expected s1c1, s1c2, s2c1 or s2c2)"
            )),
        }
    }
}

impl std::fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::S1C1 => "s1c1",
            Self::S1C2 => "s1c2",
            Self::S2C1 => "s2c1",
            Self::S2C2 => "s2c2",
        };
        f.write_str(s)
    }
}
