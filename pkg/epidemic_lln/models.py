from typing import Annotated, Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import AfterValidator, BaseModel, ConfigDict, Field, model_validator

# Mass sums are accepted when they match 1 this closely
MASS_TOLERANCE = 1e-12


class WeightDistribution(BaseModel):
    """Finite-support law of the vertex weight: P(rho = q[j]) = mu[j]"""
    model_config = ConfigDict(frozen=True)

    q: Tuple[float, ...]
    mu: Tuple[float, ...]
    m1: float = Field(ge=0.0)

    @model_validator(mode='after')
    def validate_atoms(self):
        if not self.q:
            raise ValueError("At least one atom is required")
        if len(self.q) != len(self.mu):
            raise ValueError(f"Got {len(self.q)} atoms but {len(self.mu)} masses")
        for j, (q, mu) in enumerate(zip(self.q, self.mu)):
            if not mu > 0.0:
                raise ValueError(f"Atom {j} has non-positive mass {mu}")
            if not 0.0 <= q <= self.m1:
                raise ValueError(f"Atom {j} has weight {q} outside [0, {self.m1}]")
        if abs(sum(self.mu) - 1.0) > MASS_TOLERANCE:
            raise ValueError(f"Masses sum to {sum(self.mu)!r}, not 1")
        if max(self.q) <= 0.0:
            raise ValueError("At least one atom must have positive weight")
        if any(b <= a for a, b in zip(self.q, self.q[1:])):
            raise ValueError("Atoms must be distinct and sorted by weight")
        return self

    @property
    def K(self) -> int:
        """Number of atoms"""
        return len(self.q)

    @property
    def q_array(self) -> np.ndarray:
        return np.asarray(self.q, dtype=float)

    @property
    def mu_array(self) -> np.ndarray:
        return np.asarray(self.mu, dtype=float)

    def pairs(self) -> List[Tuple[float, float]]:
        return list(zip(self.q, self.mu))

    def __str__(self) -> str:
        """Config-file rendering, e.g. '1:0.5, 2:0.5'"""
        return ", ".join(f"{q:.12g}:{mu:.12g}" for q, mu in self.pairs())


def _check_theta(v: float) -> float:
    if not 0.0 < v < 1.0:
        raise ValueError("theta must lie strictly in (0,1)")
    return v


def _check_p(v: float) -> float:
    if not 0.0 < v <= 1.0:
        raise ValueError("p must lie in (0,1]")
    return v


def _check_lambda(v: float) -> float:
    if not v > 0.0:
        raise ValueError("lambda must be > 0")
    return v


Theta = Annotated[float, AfterValidator(_check_theta)]
EdgeProbability = Annotated[float, AfterValidator(_check_p)]
InfectionRate = Annotated[float, AfterValidator(_check_lambda)]


class ModelParams(BaseModel):
    """Parameters of the SIR process on G(n, p)"""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    n: int = Field(ge=1)
    p: EdgeProbability  # recorded for formulas; 1.0 marks the all-edges fixture
    lam: InfectionRate = Field(alias="lambda")
    theta: Theta


class LimitParams(BaseModel):
    """The n -> infinity counterpart of ModelParams"""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    dist: WeightDistribution
    theta: Theta
    p: EdgeProbability
    lam: InfectionRate = Field(alias="lambda")

    @property
    def rate(self) -> float:
        """p * lambda, the factor that multiplies every limit equation"""
        return self.p * self.lam


class ExperimentConfig(BaseModel):
    """Validated experiment configuration consumed by the harness"""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    dist: WeightDistribution
    theta: Theta
    p: EdgeProbability
    lam: InfectionRate = Field(alias="lambda")
    n_list: List[int]
    replicates: int = 1
    obs_times: List[float]
    master_seed: int = 0
    tol: float = 1e-9
    out_dir: str = "results"
    fixed_graph: bool = False
    workers: int = 1
    t_end: float = 10.0
    m_list: List[int] = Field(default_factory=lambda: [1, 4, 16])
    lambda_grid: List[float] = Field(default_factory=list)
    sandwich_low: float = 0.0
    sandwich_high: float = 2.0
    beta_c: float = 0.25
    beta_d: float = 0.25
    beta_trials: int = 200
    lemma1_t: float = 1.0

    @model_validator(mode='after')
    def validate_experiment(self):
        if not self.n_list:
            raise ValueError("n_list must not be empty")
        if any(n < 1 for n in self.n_list):
            raise ValueError("n_list entries must be positive integers")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ValueError("n_list must be strictly increasing")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not self.obs_times:
            raise ValueError("obs_times must not be empty")
        if self.obs_times[0] < 0.0:
            raise ValueError("obs_times must start at or after 0")
        if any(b <= a for a, b in zip(self.obs_times, self.obs_times[1:])):
            raise ValueError("obs_times must be strictly increasing")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if not self.tol > 0.0:
            raise ValueError("tol must be > 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not self.t_end > 0.0:
            raise ValueError("t_end must be > 0")
        if any(m < 1 for m in self.m_list):
            raise ValueError("m_list entries must be positive integers")
        if any(not lam > 0.0 for lam in self.lambda_grid):
            raise ValueError("lambda_grid entries must be > 0")
        if not 0.0 <= self.sandwich_low < self.sandwich_high:
            raise ValueError("sandwich range must satisfy 0 <= sandwich_low < sandwich_high")
        if self.m_list and self.sandwich_high <= 1.0 / min(self.m_list):
            raise ValueError("sandwich_high must exceed 1/min(m_list)")
        if not (0.0 < self.beta_c <= 1.0 and 0.0 < self.beta_d <= 1.0):
            raise ValueError("beta_c and beta_d must lie in (0,1]")
        if self.beta_trials < 0:
            raise ValueError("beta_trials must be >= 0")
        if not self.lemma1_t >= 0.0:
            raise ValueError("lemma1_t must be >= 0")
        return self

    def model_params(self, n: int) -> ModelParams:
        return ModelParams(n=n, p=self.p, lam=self.lam, theta=self.theta)

    def limit_params(self, lam: Optional[float] = None) -> LimitParams:
        return LimitParams(dist=self.dist, theta=self.theta, p=self.p,
                           lam=self.lam if lam is None else lam)

    def to_summary(self) -> Dict[str, Any]:
        """Flat, JSON-ready echo of the configuration"""
        data = self.model_dump(by_alias=True, exclude={"dist"})
        data["dist"] = str(self.dist)
        return data
