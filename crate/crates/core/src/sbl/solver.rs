use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{Dictionary, DictionaryKind, Result, SblError};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SblConfig {
    pub lambda: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub max_iterations: usize,
    pub dictionary: DictionaryKind,
    pub oversampling: f64,
}

impl Default for SblConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-2,
            epsilon: 1e-6,
            delta: 1e-4,
            max_iterations: 100,
            dictionary: DictionaryKind::OvercompleteDct,
            oversampling: 2.0,
        }
    }
}

impl SblConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SblError::InvalidConfig(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("lambda", self.lambda)?;
        positive("epsilon", self.epsilon)?;
        positive("delta", self.delta)?;
        if self.max_iterations == 0 {
            return Err(SblError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !(self.oversampling >= 1.0) {
            return Err(SblError::InvalidConfig(format!("oversampling must be >= 1, got {}", self.oversampling)));
        }
        Ok(())
    }
}

/// Iteration state: sparsity parameters `gamma`, posterior mean `mu` (the sparse
/// coefficient estimate) and posterior covariance `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct SblState {
    pub gamma: DVector<f64>,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub iteration: usize,
}

impl SblState {
    /// `gamma = 1`, `mu = D^T x`, `sigma = I`.
    pub fn initial(dict: &Dictionary, x: &DVector<f64>) -> Self {
        let k = dict.num_atoms();
        Self {
            gamma: DVector::from_element(k, 1.0),
            mu: dict.atoms().tr_mul(x),
            sigma: DMatrix::identity(k, k),
            iteration: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SblSolution {
    pub mu: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// A dictionary with its Gram matrix `D^T D` cached, for repeated solves.
#[derive(Debug, Clone)]
pub struct SblProblem {
    dict: Dictionary,
    gram: DMatrix<f64>,
}

impl SblProblem {
    pub fn new(dict: Dictionary) -> Self {
        let gram = dict.atoms().tr_mul(dict.atoms());
        Self { dict, gram }
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    /// Factors `D^T D / lambda + diag(prior_precision)`, retrying once with a
    /// diagonal jitter of `1e-10 * trace / n`.
    fn factor(&self, prior_precision: &DVector<f64>, lambda: f64, iteration: usize) -> Result<Cholesky<f64, Dyn>> {
        let build = |jitter: f64| {
            let mut a = &self.gram / lambda;
            for (i, p) in prior_precision.iter().enumerate() {
                a[(i, i)] += p + jitter;
            }
            a
        };
        if let Some(c) = build(0.0).cholesky() {
            return Ok(c);
        }
        let n = prior_precision.len() as f64;
        let trace = self.gram.trace() / lambda + prior_precision.sum();
        build(1e-10 * trace / n).cholesky().ok_or(SblError::SingularSystem { iteration })
    }

    fn check(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dict.signal_dim() {
            return Err(SblError::InvalidDimension(format!(
                "signal has {} samples, dictionary expects {}",
                x.len(),
                self.dict.signal_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SblError::InvalidDimension("signal contains non-finite values".into()));
        }
        Ok(())
    }

    /// One full update, materializing `sigma`:
    ///
    /// ```text
    /// gamma' = 1 / (|mu| + eps)
    /// sigma' = (D^T D / lambda + diag(1 / gamma))^-1
    /// mu'    = sigma' D^T x / lambda
    /// ```
    ///
    /// `sigma'` uses the incoming `gamma`, not `gamma'`. `mu'` comes from a
    /// Cholesky solve rather than from the explicit inverse.
    pub fn iterate(&self, state: &SblState, x: &DVector<f64>, cfg: &SblConfig) -> Result<SblState> {
        self.check(x)?;
        let k = self.dict.num_atoms();
        if state.gamma.len() != k || state.mu.len() != k {
            return Err(SblError::InvalidDimension(format!("state has wrong length for {k} atoms")));
        }
        if state.gamma.iter().any(|&g| !(g > 0.0)) {
            return Err(SblError::InvalidConfig("gamma must be strictly positive".into()));
        }
        let gamma = state.mu.map(|m| 1.0 / (m.abs() + cfg.epsilon));
        let precision = state.gamma.map(|g| 1.0 / g);
        let chol = self.factor(&precision, cfg.lambda, state.iteration + 1)?;
        let rhs = self.dict.atoms().tr_mul(x) / cfg.lambda;
        let mu = chol.solve(&rhs);
        let sigma = chol.inverse();
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        Ok(SblState { gamma, mu, sigma, iteration: state.iteration + 1 })
    }

    /// Iterates from the default initialization until the largest relative
    /// change in `gamma` drops below `delta`, or `max_iterations` is reached.
    pub fn solve(&self, x: &DVector<f64>, cfg: &SblConfig) -> Result<SblSolution> {
        cfg.validate()?;
        self.check(x)?;
        let rhs = self.dict.atoms().tr_mul(x) / cfg.lambda;
        let mut gamma = DVector::from_element(self.dict.num_atoms(), 1.0);
        let mut mu = self.dict.atoms().tr_mul(x);
        for iteration in 1..=cfg.max_iterations {
            let next_gamma = mu.map(|m| 1.0 / (m.abs() + cfg.epsilon));
            let precision = gamma.map(|g| 1.0 / g);
            mu = self.factor(&precision, cfg.lambda, iteration)?.solve(&rhs);
            let change = next_gamma
                .iter()
                .zip(gamma.iter())
                .map(|(new, old)| ((new - old) / old).abs())
                .fold(0.0, f64::max);
            gamma = next_gamma;
            if change < cfg.delta {
                return Ok(SblSolution { mu, iterations: iteration, converged: true });
            }
        }
        Ok(SblSolution { mu, iterations: cfg.max_iterations, converged: false })
    }
}

pub fn sbl_iterate(state: &SblState, dict: &Dictionary, x: &DVector<f64>, cfg: &SblConfig) -> Result<SblState> {
    cfg.validate()?;
    SblProblem::new(dict.clone()).iterate(state, x, cfg)
}

pub fn sbl_solve(x: &DVector<f64>, dict: &Dictionary, cfg: &SblConfig) -> Result<SblSolution> {
    SblProblem::new(dict.clone()).solve(x, cfg)
}
