//! Run configuration: one JSON document, per-problem defaults, flag overrides.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use mlmc_boed::eig::{EigConfig, EigEstimator};
use mlmc_boed::mlmc::{Construction, GradientConfig, GradientEstimator, LevelWeights};
use mlmc_boed::optim::{AmsGradConfig, BoxDomain, OptimizerConfig};
use mlmc_boed::problems::{LaplaceStep, ProposalKind};
use mlmc_boed::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemId {
    Testcase,
    Pk,
}

impl ProblemId {
    pub fn design_dim(self) -> usize {
        match self {
            ProblemId::Testcase => 1,
            ProblemId::Pk => 15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Stdmc,
    Mlmc,
    MlmcNaive,
}

/// Gradient estimator. `m` applies to `stdmc`; `tau`, `m0`, `w0` to the MLMC kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub kind: EstimatorKind,
    pub m: usize,
    pub tau: f64,
    pub m0: u64,
    pub w0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Rm,
    Amsgrad,
}

/// `c`, `polyak` apply to `rm`; `alpha`, `beta1`, `beta2`, `eps` to `amsgrad`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub kind: OptimizerKind,
    pub c: f64,
    pub polyak: bool,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigKind {
    Nested,
    Mlmc,
}

/// EIG evaluation, used by the `eig` command and periodically during `optimize`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigSection {
    pub kind: EigKind,
    pub inner_m: usize,
    pub tau: f64,
    pub m0: u64,
    pub w0: Option<f64>,
    pub n_outer: usize,
    /// Steps between evaluations during optimization; 0 disables.
    pub every: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySection {
    pub levels: u32,
    pub samples_per_level: usize,
    /// First level of the regression; the last is `levels`.
    pub fit_from: u32,
}

/// Box bounds; `null` stands for an infinite bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

impl Bounds {
    pub fn to_domain(&self) -> Result<BoxDomain> {
        BoxDomain::new(
            self.lower.iter().map(|b| b.unwrap_or(f64::NEG_INFINITY)).collect(),
            self.upper.iter().map(|b| b.unwrap_or(f64::INFINITY)).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemId,
    pub seed: u64,
    pub estimator: EstimatorSection,
    pub proposal: ProposalKind,
    pub laplace_step: LaplaceStep,
    pub optimizer: OptimizerSection,
    pub n_outer: usize,
    pub max_iters: u64,
    pub bounds: Bounds,
    pub xi0: Vec<f64>,
    pub eig: EigSection,
    pub decay: DecaySection,
}

impl RunConfig {
    pub fn defaults(problem: ProblemId) -> Self {
        let rm = OptimizerSection {
            kind: OptimizerKind::Rm,
            c: 5.0,
            polyak: true,
            alpha: 0.004,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        let decay = DecaySection {
            levels: 10,
            samples_per_level: 100_000,
            fit_from: 1,
        };
        match problem {
            ProblemId::Testcase => Self {
                problem,
                seed: 0,
                estimator: EstimatorSection {
                    kind: EstimatorKind::Mlmc,
                    m: 1,
                    tau: 1.5,
                    m0: 1,
                    w0: None,
                },
                proposal: ProposalKind::Prior,
                laplace_step: LaplaceStep::default(),
                optimizer: rm,
                n_outer: 2000,
                // ⌊10⁷ / 2.21⌋: equal budget with the M = 1 baseline.
                max_iters: 4_524_886,
                bounds: Bounds {
                    lower: vec![Some(1e-8)],
                    upper: vec![None],
                },
                xi0: vec![1.5],
                eig: EigSection {
                    kind: EigKind::Mlmc,
                    inner_m: 1024,
                    tau: 1.5,
                    m0: 1,
                    w0: None,
                    n_outer: 100_000,
                    every: 0,
                },
                decay,
            },
            ProblemId::Pk => Self {
                problem,
                seed: 0,
                estimator: EstimatorSection {
                    kind: EstimatorKind::Mlmc,
                    m: 1,
                    tau: 1.5,
                    m0: 1,
                    w0: Some(0.9),
                },
                proposal: ProposalKind::Laplace,
                laplace_step: LaplaceStep::default(),
                optimizer: OptimizerSection {
                    kind: OptimizerKind::Amsgrad,
                    ..rm
                },
                n_outer: 2000,
                max_iters: 10_000,
                bounds: Bounds {
                    lower: vec![Some(0.0); 15],
                    upper: vec![Some(24.0); 15],
                },
                xi0: (1..=15).map(f64::from).collect(),
                eig: EigSection {
                    kind: EigKind::Mlmc,
                    inner_m: 128,
                    tau: 1.5,
                    m0: 1,
                    w0: None,
                    n_outer: 1_000_000,
                    every: 500,
                },
                decay,
            },
        }
    }

    /// Overlays a user document on the defaults of its problem. The problem is
    /// taken from `problem` if given, else from the document, else `testcase`.
    pub fn from_value(doc: Option<&Value>, problem: Option<ProblemId>) -> Result<Self> {
        let problem = match (problem, doc.and_then(|d| d.get("problem"))) {
            (Some(p), _) => p,
            (None, Some(p)) => serde_json::from_value(p.clone())
                .map_err(|e| Error::Config(format!("problem: {e}")))?,
            (None, None) => ProblemId::Testcase,
        };
        let mut merged = serde_json::to_value(Self::defaults(problem)).expect("serializable defaults");
        if let Some(doc) = doc {
            if !doc.is_object() {
                return Err(Error::Config("configuration must be a JSON object".into()));
            }
            merge(&mut merged, doc);
        }
        merged["problem"] = serde_json::to_value(problem).expect("serializable problem");
        serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str, problem: Option<ProblemId>) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(Some(&doc), problem)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable config")
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        let d = self.problem.design_dim();
        let dim_err = |what: &str, got: usize| {
            Error::Config(format!("{what} has {got} coordinates, the problem has {d}"))
        };
        if self.xi0.len() != d {
            return Err(dim_err("xi0", self.xi0.len()));
        }
        if self.bounds.lower.len() != d || self.bounds.upper.len() != d {
            return Err(dim_err("bounds", self.bounds.lower.len().max(self.bounds.upper.len())));
        }
        let domain = self.bounds.to_domain()?;
        if !domain.contains(&self.xi0) {
            return Err(Error::Config(format!("xi0 {:?} lies outside the bounds", self.xi0)));
        }
        if self.problem == ProblemId::Testcase && self.proposal == ProposalKind::Laplace {
            return Err(Error::Config("the test case supports only the prior proposal".into()));
        }
        if self.n_outer == 0 || self.eig.n_outer == 0 {
            return Err(Error::Config("outer sample counts must be positive".into()));
        }
        if self.estimator.kind == EstimatorKind::Stdmc && self.estimator.m == 0 {
            return Err(Error::Config("estimator.m must be positive".into()));
        }
        if self.eig.kind == EigKind::Nested && self.eig.inner_m == 0 {
            return Err(Error::Config("eig.inner_m must be positive".into()));
        }
        self.gradient()?;
        self.eig_config()?;
        self.optimizer()?;
        if self.decay.levels < 2 {
            return Err(Error::Config("decay.levels must be at least 2".into()));
        }
        if self.decay.samples_per_level == 0 {
            return Err(Error::Config("decay.samples_per_level must be positive".into()));
        }
        if self.decay.fit_from >= self.decay.levels {
            return Err(Error::Config("decay.fit_from must be below decay.levels".into()));
        }
        Ok(())
    }

    pub fn gradient(&self) -> Result<GradientConfig> {
        let e = &self.estimator;
        let estimator = match e.kind {
            EstimatorKind::Stdmc => GradientEstimator::StandardMc { m: e.m },
            EstimatorKind::Mlmc | EstimatorKind::MlmcNaive => GradientEstimator::Mlmc {
                weights: LevelWeights::new(e.m0, e.tau, e.w0)?,
                construction: self.construction(),
            },
        };
        let mut g = GradientConfig::new(estimator, self.proposal, self.n_outer);
        g.laplace_step = self.laplace_step;
        Ok(g)
    }

    pub fn construction(&self) -> Construction {
        match self.estimator.kind {
            EstimatorKind::MlmcNaive => Construction::Naive,
            _ => Construction::Antithetic,
        }
    }

    pub fn eig_config(&self) -> Result<EigConfig> {
        let e = &self.eig;
        let estimator = match e.kind {
            EigKind::Nested => EigEstimator::Nested { m: e.inner_m },
            EigKind::Mlmc => EigEstimator::Mlmc {
                weights: LevelWeights::new(e.m0, e.tau, e.w0)?,
            },
        };
        let mut c = EigConfig::new(estimator, self.proposal, e.n_outer);
        c.laplace_step = self.laplace_step;
        Ok(c)
    }

    pub fn optimizer(&self) -> Result<OptimizerConfig> {
        let o = &self.optimizer;
        match o.kind {
            OptimizerKind::Rm => {
                if !(o.c > 0.0 && o.c.is_finite()) {
                    return Err(Error::Config(format!("optimizer.c = {} must be positive", o.c)));
                }
                Ok(OptimizerConfig::Rm {
                    c: o.c,
                    polyak: o.polyak,
                })
            }
            OptimizerKind::Amsgrad => {
                let ok = o.alpha > 0.0
                    && (0.0..1.0).contains(&o.beta1)
                    && (0.0..1.0).contains(&o.beta2)
                    && o.eps > 0.0;
                if !ok {
                    return Err(Error::Config("optimizer: need alpha > 0, beta in [0, 1), eps > 0".into()));
                }
                Ok(OptimizerConfig::Amsgrad(AmsGradConfig {
                    alpha: o.alpha,
                    beta1: o.beta1,
                    beta2: o.beta2,
                    eps: o.eps,
                }))
            }
        }
    }
}

/// Recursive object merge; anything that is not an object on both sides is replaced.
fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}
