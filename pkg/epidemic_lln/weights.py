"""
Vertex-weight laws: finite-support distributions, their moments, i.i.d.
sampling onto vertices and the lower/upper discretisation of realised
weights.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from epidemic_lln.decorators import require_positive
from epidemic_lln.exceptions import InvalidDistributionError, PositivityError, PreconditionError
from epidemic_lln.models import WeightDistribution

logger = logging.getLogger(__name__)

# Raw mass sums within this distance of 1 are renormalised silently
RENORMALIZE_TOLERANCE = 1e-9


class Direction(str, Enum):
    """Side of the discretisation sandwich"""
    LOWER = "lower"
    UPPER = "upper"


@dataclass(frozen=True, eq=False)
class WeightAssignment:
    """Realised weight of every vertex plus the atom index it belongs to."""
    values: np.ndarray
    class_of: np.ndarray
    dist: WeightDistribution

    def __post_init__(self):
        if self.values.shape != self.class_of.shape:
            raise ValueError("values and class_of must have the same length")
        self.values.setflags(write=False)
        self.class_of.setflags(write=False)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def K(self) -> int:
        return self.dist.K

    @classmethod
    def from_values(cls, values: Iterable[float]) -> "WeightAssignment":
        """
        Build an assignment whose classes are the distinct realised values.

        The attached distribution is the empirical law of ``values``.
        """
        arr = np.asarray(values, dtype=float)
        atoms, class_of = np.unique(arr, return_inverse=True)
        dist = empirical_distribution(arr)
        return cls(values=atoms[class_of].astype(float), class_of=class_of.astype(np.int64), dist=dist)


def make_distribution(pairs: Sequence[Tuple[float, float]]) -> WeightDistribution:
    """
    Build a validated weight law from (q, mass) pairs.

    Atoms with equal q are merged, zero-mass atoms dropped and the result
    sorted by q. Masses summing to within 1e-9 of one are renormalised.

    Raises:
        InvalidDistributionError: empty input, negative or all-zero masses,
            negative weights, or masses far from summing to one
        PositivityError: every atom has q = 0
    """
    pairs = [(float(q), float(mu)) for q, mu in pairs]
    if not pairs:
        raise InvalidDistributionError("At least one (q, mass) pair is required")

    merged = {}
    for q, mu in pairs:
        if not np.isfinite(q) or not np.isfinite(mu):
            raise InvalidDistributionError(f"Non-finite atom ({q}, {mu})")
        if mu < 0.0:
            raise InvalidDistributionError(f"Mass {mu} of atom q={q} is negative")
        if q < 0.0:
            raise InvalidDistributionError(f"Weight q={q} is negative")
        merged[q] = merged.get(q, 0.0) + mu

    total = sum(merged.values())
    if total <= 0.0:
        raise InvalidDistributionError("All masses are zero")
    if abs(total - 1.0) > RENORMALIZE_TOLERANCE:
        raise InvalidDistributionError(f"Masses sum to {total!r}, expected 1")

    atoms = sorted((q, mu / total) for q, mu in merged.items() if mu > 0.0)
    if max(q for q, _ in atoms) <= 0.0:
        raise PositivityError("Every atom has weight 0; P(rho > 0) > 0 is required")

    q_values = tuple(q for q, _ in atoms)
    masses = np.asarray([mu for _, mu in atoms])
    masses = masses / masses.sum()
    try:
        return WeightDistribution(q=q_values, mu=tuple(float(m) for m in masses), m1=max(q_values))
    except ValidationError as e:
        raise InvalidDistributionError(str(e)) from e


def parse_distribution(text: str) -> WeightDistribution:
    """Parse the config form 'q:mass, q:mass, ...'"""
    pairs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if item.count(":") != 1:
            raise InvalidDistributionError(f"Expected 'q:mass', got '{item}'")
        q, mu = item.split(":")
        try:
            pairs.append((float(q), float(mu)))
        except ValueError as e:
            raise InvalidDistributionError(f"Expected 'q:mass', got '{item}'") from e
    return make_distribution(pairs)


def empirical_distribution(values: Union[Sequence[float], np.ndarray]) -> WeightDistribution:
    """Finite law putting mass count/n on each distinct realised value."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise InvalidDistributionError("Cannot build a law from zero samples")
    atoms, counts = np.unique(arr, return_counts=True)
    return make_distribution(list(zip(atoms.tolist(), (counts / arr.size).tolist())))


def moment(dist: WeightDistribution, k: int) -> float:
    """Return E(rho^k)."""
    if k < 0:
        raise PreconditionError("moment order must be nonnegative")
    return float(np.sum(dist.mu_array * dist.q_array ** k))


@require_positive("x")
def generalized_moment(dist: WeightDistribution, x: Union[float, np.ndarray], weighted: bool = False):
    """
    Return E(x^rho), or E(rho x^rho) when ``weighted`` is set.

    ``x`` may be an array, in which case the moment is taken elementwise.
    """
    q = dist.q_array
    xs = np.asarray(x, dtype=float)
    terms = dist.mu_array * np.power(xs[..., None], q)
    if weighted:
        terms = terms * q
    out = terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def sample_assignment(dist: WeightDistribution, n: int, seed: int) -> WeightAssignment:
    """Draw n i.i.d. weights from ``dist``; identical seeds give identical output."""
    if n < 1:
        raise PreconditionError("n must be >= 1")
    rng = np.random.default_rng(seed)
    class_of = rng.choice(dist.K, size=n, p=dist.mu_array).astype(np.int64)
    values = dist.q_array[class_of]
    return WeightAssignment(values=values, class_of=class_of, dist=dist)


def sample_uniform(low: float, high: float, n: int, seed: int) -> np.ndarray:
    """n i.i.d. Uniform[low, high) weights."""
    if not 0.0 <= low < high:
        raise PreconditionError("uniform weights need 0 <= low < high")
    if n < 1:
        raise PreconditionError("n must be >= 1")
    return np.random.default_rng(seed).uniform(low, high, size=n)


def discretize(samples: Union[Sequence[float], np.ndarray], m: int,
               direction: Union[Direction, str] = Direction.LOWER) -> np.ndarray:
    """
    Map each sample x to floor(m x)/m (lower) or (floor(m x) + 1)/m (upper).

    lower(x) <= x < upper(x) and the two differ by 1/m.
    """
    if m < 1:
        raise PreconditionError("m must be a positive integer")
    direction = Direction(direction)
    arr = np.asarray(samples, dtype=float)
    if np.any(arr < 0.0):
        raise PreconditionError("weights must be nonnegative")
    cells = np.floor(arr * m)
    # floor(m*x)/m can overshoot x by one ulp when m*x rounds up
    cells = np.where(cells / m > arr, cells - 1.0, cells)
    if direction is Direction.UPPER:
        cells = cells + 1.0
    return cells / m
