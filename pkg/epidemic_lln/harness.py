"""
Experiment orchestration: configuration ingestion, replicate scheduling,
the law-of-large-numbers studies and CSV/JSON report emission.
"""
import json
import logging
import math
import os
import platform
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy
import yaml
from pydantic import ValidationError

from epidemic_lln.exceptions import ConfigError, EpidemicError, InvalidDistributionError, PreconditionError, ReportError
from epidemic_lln.graph import Graph, complete_graph, estimate_beta, generate_er
from epidemic_lln.limit import extinction_root, final_size, lambda_critical, limit_curves, solve_psi
from epidemic_lln.models import ExperimentConfig, LimitParams, ModelParams, WeightDistribution
from epidemic_lln.sim import (
    Stream, SummaryStats, VertexState, derive_seed, init_states, parallel_map, run_replicates, simulate,
)
from epidemic_lln.weights import (
    Direction, WeightAssignment, discretize, empirical_distribution, make_distribution,
    parse_distribution, sample_assignment, sample_uniform,
)

logger = logging.getLogger(__name__)

# Spacing of the grid on which per-class infima over time are evaluated
LEMMA_GRID_STEP = 0.05
# Quantile points used to build the law of a discretised uniform weight
_QUANTILE_POINTS = 1 << 14
FLOAT_FORMAT = "%.12g"

_INT_KEYS = {"replicates", "master_seed", "workers", "beta_trials"}
_FLOAT_KEYS = {"theta", "p", "lambda", "tol", "t_end", "sandwich_low", "sandwich_high",
               "beta_c", "beta_d", "lemma1_t"}
_INT_LIST_KEYS = {"n_list", "m_list"}
_FLOAT_LIST_KEYS = {"obs_times", "lambda_grid"}
_BOOL_KEYS = {"fixed_graph"}
_STR_KEYS = {"out_dir", "preset"}
CONFIG_KEYS = ({"dist"} | _INT_KEYS | _FLOAT_KEYS | _INT_LIST_KEYS | _FLOAT_LIST_KEYS
               | _BOOL_KEYS | _STR_KEYS)


class Experiment(IntEnum):
    """First seed key of every experiment, so their streams never collide"""
    SIMULATE = 0
    CONVERGE = 1
    COROLLARY = 2
    LEMMA1 = 3
    SANDWICH = 4
    THRESHOLD = 5
    BETA = 6


# ---------------------------------------------------------------- config

def _load_presets() -> Dict[str, Dict[str, Any]]:
    """Load the packaged presets from data/presets.yaml."""
    filepath = os.path.join(os.path.dirname(__file__), "data", "presets.yaml")
    try:
        with open(filepath, "r") as f:
            return yaml.safe_load(f) or {}
    except FileNotFoundError:
        return {}


def preset_names() -> List[str]:
    return sorted(_load_presets())


def _preset(name: str, path: Optional[str] = None, line: Optional[int] = None) -> Dict[str, Any]:
    presets = _load_presets()
    if name not in presets:
        raise ConfigError(f"unknown preset '{name}' (available: {', '.join(sorted(presets))})",
                          path=path, line=line)
    return dict(presets[name])


def _coerce_dist(value: Any) -> WeightDistribution:
    if isinstance(value, WeightDistribution):
        return value
    if isinstance(value, str):
        return parse_distribution(value)
    if isinstance(value, Mapping):
        if set(value) == {"q", "mu", "m1"}:
            return WeightDistribution(**value)
        return make_distribution([(float(q), float(mu)) for q, mu in value.items()])
    if isinstance(value, (list, tuple)):
        return make_distribution([(float(q), float(mu)) for q, mu in value])
    raise InvalidDistributionError(f"cannot read a weight law from {value!r}")


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got '{text}'")


def _parse_value(key: str, text: str) -> Any:
    text = text.strip()
    if key == "dist" or key in _STR_KEYS:
        return text
    if key in _INT_KEYS:
        return int(text)
    if key in _FLOAT_KEYS:
        return float(text)
    if key in _BOOL_KEYS:
        return _parse_bool(text)
    items = [item.strip() for item in text.split(",") if item.strip()]
    if key in _INT_LIST_KEYS:
        return [int(item) for item in items]
    return [float(item) for item in items]


def _read_key_value(path: str, lines: List[str]) -> Tuple[Dict[str, Any], Dict[str, int]]:
    values: Dict[str, Any] = {}
    where: Dict[str, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got '{raw.strip()}'", path=path, line=lineno)
        key, text = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key '{key}'", path=path, line=lineno)
        if key in values:
            raise ConfigError(f"duplicate key '{key}' (first set on line {where[key]})", path=path, line=lineno)
        try:
            values[key] = _parse_value(key, text)
        except ValueError as e:
            raise ConfigError(f"bad value for '{key}': {e}", path=path, line=lineno) from e
        where[key] = lineno
    return values, where


def _read_yaml(path: str, text: str) -> Tuple[Dict[str, Any], Dict[str, int]]:
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(e, 'problem', e)}", path=path,
                          line=mark.line + 1 if mark is not None else None) from e
    if data is None:
        return {}, {}
    if not isinstance(root, yaml.MappingNode) or not isinstance(data, dict):
        raise ConfigError("top level must be a mapping of keys to values", path=path, line=1)
    where: Dict[str, int] = {}
    for key_node, _ in root.value:
        key, lineno = str(key_node.value), key_node.start_mark.line + 1
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key '{key}'", path=path, line=lineno)
        if key in where:
            raise ConfigError(f"duplicate key '{key}' (first set on line {where[key]})", path=path, line=lineno)
        where[key] = lineno
    return {str(k): v for k, v in data.items()}, where


def _validation_message(e: ValidationError) -> Tuple[str, Optional[str]]:
    """First validation failure as (message, offending key)."""
    first = e.errors()[0]
    loc = [str(part) for part in first.get("loc", ())]
    error = first.get("ctx", {}).get("error")
    if error is not None:
        message = str(error)
    else:
        message = f"{'.'.join(loc)}: {first['msg']}" if loc else first["msg"]
    return message, (loc[0] if loc else None)


def config_from_mapping(values: Mapping[str, Any], defaults: Optional[Mapping[str, Any]] = None,
                        path: Optional[str] = None, where: Optional[Mapping[str, int]] = None) -> ExperimentConfig:
    """
    Validate raw key/value pairs into an ExperimentConfig.

    Precedence: ``values`` over the preset they name over ``defaults``.

    Raises:
        ConfigError: unknown key or violated invariant
    """
    where = where or {}
    merged: Dict[str, Any] = dict(defaults or {})
    values = dict(values)
    preset = values.pop("preset", None)
    if preset is not None:
        merged.update(_preset(str(preset), path, where.get("preset")))
    merged.update(values)

    unknown = sorted(set(merged) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}'", path=path, line=where.get(unknown[0]))
    if "dist" not in merged:
        raise ConfigError("missing required key 'dist'", path=path)
    try:
        merged["dist"] = _coerce_dist(merged["dist"])
    except (InvalidDistributionError, TypeError, ValueError) as e:
        raise ConfigError(f"bad value for 'dist': {e}", path=path, line=where.get("dist")) from e
    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as e:
        message, key = _validation_message(e)
        raise ConfigError(message, path=path, line=where.get(key) if key else None) from e


def load_config(path: str, defaults: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """
    Read an experiment configuration.

    ``*.yaml``/``*.yml`` files are YAML mappings; anything else is the
    line-oriented ``key = value`` format, with ``#`` comments and
    ``dist = q:mass, q:mass, ...``. ``preset = <name>`` pulls in a packaged
    preset that explicit keys override.

    Raises:
        ConfigError: missing file, parse error (with line) or invariant violation
    """
    if not os.path.exists(path):
        raise ConfigError("config file not found", path=path)
    with open(path, "r") as f:
        text = f.read()
    if path.endswith((".yaml", ".yml")):
        values, where = _read_yaml(path, text)
    else:
        values, where = _read_key_value(path, text.splitlines())
    cfg = config_from_mapping(values, defaults, path=path, where=where)
    logger.info(f"Loaded config from {path}: dist={cfg.dist}, n_list={cfg.n_list}")
    return cfg


def load_preset(name: str, defaults: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    return config_from_mapping({"preset": name}, defaults)


def apply_overrides(cfg: ExperimentConfig, **overrides: Any) -> ExperimentConfig:
    """Revalidated copy of ``cfg`` with the non-None ``overrides`` applied."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    if not updates:
        return cfg
    data = cfg.model_dump(by_alias=True)
    data["dist"] = cfg.dist
    data.update(updates)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_validation_message(e)[0]) from e


# ---------------------------------------------------------------- reports

@dataclass(eq=False)
class ConvergenceReport:
    """
    Tables produced by one experiment, keyed by CSV file stem, plus the
    seeding information needed to reproduce them.
    """
    experiment: str
    config: ExperimentConfig
    tables: Dict[str, pd.DataFrame]
    seeds: Dict[str, Any]
    notes: List[str] = field(default_factory=list)

    def __getitem__(self, name: str) -> pd.DataFrame:
        return self.tables[name]

    def summary(self) -> Dict[str, Any]:
        from epidemic_lln import __version__

        return {
            "experiment": self.experiment,
            "config": self.config.to_summary(),
            "seeds": self.seeds,
            "tables": sorted(self.tables),
            "notes": list(self.notes),
            "versions": {
                "epidemic_lln": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "pandas": pd.__version__,
                "python": platform.python_version(),
            },
        }


def emit_reports(report: ConvergenceReport, out_dir: str) -> List[str]:
    """
    Write one CSV per table and ``summary.json`` into ``out_dir``.

    Returns:
        Written paths, CSVs in table-name order then the summary

    Raises:
        ReportError: the directory or a file could not be written
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise ReportError(str(e), path=out_dir) from e

    written = []
    for name in sorted(report.tables):
        path = os.path.join(out_dir, f"{name}.csv")
        try:
            report.tables[name].to_csv(path, index=False, float_format=FLOAT_FORMAT,
                                       na_rep="nan", lineterminator="\n")
        except OSError as e:
            raise ReportError(str(e), path=path) from e
        written.append(path)
        logger.info(f"Wrote {path}")

    path = os.path.join(out_dir, "summary.json")
    try:
        with open(path, "w") as f:
            json.dump(report.summary(), f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise ReportError(str(e), path=path) from e
    written.append(path)
    logger.info(f"Wrote {path}")
    return written


def _seed_info(cfg: ExperimentConfig, experiment: Experiment) -> Dict[str, Any]:
    return {
        "master_seed": cfg.master_seed,
        "experiment_key": int(experiment),
        "stream_layout": "derive_seed(master_seed, experiment_key, n, replicate, purpose)",
        "fixed_graph": cfg.fixed_graph,
    }


# ---------------------------------------------------------------- helpers

def _graph_for(cfg: ExperimentConfig, experiment: Experiment, n: int) -> Optional[Graph]:
    """Shared graph for quenched runs; None lets each replicate draw its own."""
    if cfg.p >= 1.0:
        return complete_graph(n)
    if not cfg.fixed_graph:
        return None
    return generate_er(n, cfg.p, derive_seed(cfg.master_seed, experiment, n, Stream.GRAPH))


def _limit_on_grid(lp: LimitParams, times: np.ndarray, tol: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """psi, H_S(psi), H_V(psi) at ``times``; t = inf maps to the extinction root."""
    psi = np.empty(times.shape[0])
    hs = np.empty_like(psi)
    hv = np.empty_like(psi)
    finite = np.isfinite(times)
    if finite.any():
        grid = times[finite]
        t_end = grid[-1] if grid[-1] > 0.0 else 1.0
        sol = solve_psi(lp, t_end, tol, times=grid)
        psi[finite], hs[finite], hv[finite] = sol.psi, sol.hs, sol.hv
    if not finite.all():
        root = extinction_root(lp)
        psi[~finite] = root
        hs[~finite] = final_size(lp)
        hv[~finite] = 0.0
    return psi, hs, hv


def _class_limit(lp: LimitParams, psi: np.ndarray) -> np.ndarray:
    """(1 - theta) mu_j psi^{q_j}, shape (T, K)."""
    return (1.0 - lp.theta) * lp.dist.mu_array * np.power(psi[:, None], lp.dist.q_array)


# ---------------------------------------------------------------- experiments

def single_trajectory(cfg: ExperimentConfig, n: Optional[int] = None) -> ConvergenceReport:
    """One realisation at n (default: the first entry of n_list) on the observation grid."""
    n = cfg.n_list[0] if n is None else n
    g = _graph_for(cfg, Experiment.SIMULATE, n)
    if g is None:
        g = generate_er(n, cfg.p, derive_seed(cfg.master_seed, Experiment.SIMULATE, n, 0, Stream.GRAPH))
    w = sample_assignment(cfg.dist, n, derive_seed(cfg.master_seed, Experiment.SIMULATE, n, 0, Stream.WEIGHTS))
    init = init_states(n, cfg.theta, derive_seed(cfg.master_seed, Experiment.SIMULATE, n, 0, Stream.INIT))
    traj = simulate(g, w, cfg.model_params(n), init, cfg.obs_times,
                    derive_seed(cfg.master_seed, Experiment.SIMULATE, n, 0, Stream.DYNAMICS))
    logger.info(f"Simulated one trajectory at n={n}: {traj.event_count} events")
    return ConvergenceReport("simulate", cfg, {"trajectory": traj.to_frame()},
                             _seed_info(cfg, Experiment.SIMULATE))


def limit_report(cfg: ExperimentConfig, times: Optional[Sequence[float]] = None) -> ConvergenceReport:
    """Limit curves psi, H_S, H_V and the per-class ODE on [0, t_end]."""
    sol = limit_curves(cfg.limit_params(), cfg.t_end, cfg.tol, times)
    logger.info(f"Solved the limit on [0, {cfg.t_end}] with tol={cfg.tol}")
    return ConvergenceReport("limit", cfg, {"limit": sol.to_frame()}, _seed_info(cfg, Experiment.SIMULATE))


def lln_experiment(cfg: ExperimentConfig) -> ConvergenceReport:
    """
    Compare replicate means of S/n, V/n and S(j)/n with H_S(psi_t),
    H_V(psi_t) and (1 - theta) mu_j psi_t^{q_j} for each n in n_list.
    """
    lp = cfg.limit_params()
    times = np.asarray(cfg.obs_times, dtype=float)
    psi, hs, hv = _limit_on_grid(lp, times, cfg.tol)
    s_class = _class_limit(lp, psi)
    q = cfg.dist.q_array

    rows, class_rows = [], []
    for n in cfg.n_list:
        logger.info(f"converge: n={n}, {cfg.replicates} replicates")
        stats = run_replicates(_graph_for(cfg, Experiment.CONVERGE, n), cfg.dist, cfg.model_params(n), times,
                               cfg.replicates, cfg.master_seed, stream=(Experiment.CONVERGE, n),
                               workers=cfg.workers)
        for k, t in enumerate(times):
            rows.append({
                "n": n, "t": t,
                "mean_S": stats.s.mean[k], "std_S": stats.s.std[k],
                "mean_V": stats.v.mean[k], "std_V": stats.v.std[k],
                "limit_S": hs[k], "limit_V": hv[k],
                "err_S": abs(stats.s.mean[k] - hs[k]), "err_V": abs(stats.v.mean[k] - hv[k]),
                "discrepancy": stats.discrepancy.mean[k],
            })
            for j in range(cfg.dist.K):
                mean_sj = stats.s_by_class.mean[k, j]
                class_rows.append({
                    "n": n, "t": t, "class": j + 1, "q": q[j],
                    "mean_S": mean_sj, "limit_S": s_class[k, j], "err_S": abs(mean_sj - s_class[k, j]),
                })
    return ConvergenceReport("converge", cfg,
                             {"converge": pd.DataFrame(rows), "converge_classes": pd.DataFrame(class_rows)},
                             _seed_info(cfg, Experiment.CONVERGE))


def corollary_check(cfg: ExperimentConfig) -> ConvergenceReport:
    """
    Mean and max over replicates of max_{j,l} |L(j,l) - p S(j) I(l)| / n^2 per (n, t).

    The ``corollary_summary`` table takes the sup over obs_times per n. Its
    ``sup_max_discrepancy`` is the largest discrepancy any replicate showed
    at any observation time.
    """
    times = np.asarray(cfg.obs_times, dtype=float)
    rows, summary_rows = [], []
    for n in cfg.n_list:
        logger.info(f"corollary: n={n}, {cfg.replicates} replicates")
        stats = run_replicates(_graph_for(cfg, Experiment.COROLLARY, n), cfg.dist, cfg.model_params(n), times,
                               cfg.replicates, cfg.master_seed, stream=(Experiment.COROLLARY, n),
                               workers=cfg.workers)
        for k, t in enumerate(times):
            rows.append({"n": n, "t": t, "mean_discrepancy": stats.discrepancy.mean[k],
                         "max_discrepancy": stats.discrepancy.max[k]})
        summary_rows.append({"n": n, "sup_mean_discrepancy": float(np.max(stats.discrepancy.mean)),
                             "sup_max_discrepancy": float(np.max(stats.discrepancy.max))})
    return ConvergenceReport("corollary", cfg,
                             {"corollary": pd.DataFrame(rows), "corollary_summary": pd.DataFrame(summary_rows)},
                             _seed_info(cfg, Experiment.COROLLARY))


def lemma_grid(obs_times: Sequence[float], t: float) -> np.ndarray:
    """Observation times up to t merged with a grid of spacing LEMMA_GRID_STEP."""
    steps = int(math.ceil(round(t / LEMMA_GRID_STEP, 9)))
    grid = np.linspace(0.0, t, steps + 1) if steps > 0 else np.array([0.0])
    obs = np.asarray([u for u in obs_times if 0.0 <= u <= t], dtype=float)
    return np.unique(np.concatenate([grid, obs]))


def lemma1_check(cfg: ExperimentConfig, t: Optional[float] = None) -> ConvergenceReport:
    """
    Fraction of replicates with inf_{u<=s} S_u(j)/n >= (1 - theta) mu_j e^{-2 lambda M1^2 s}
    and inf_{u<=s} I_u(j)/n >= theta mu_j e^{-2 s}, for every grid time s <= t.

    The infimum over continuous time is taken on a grid of spacing
    LEMMA_GRID_STEP merged with the observation times.
    """
    t = cfg.lemma1_t if t is None else t
    if t < 0.0:
        raise PreconditionError("lemma1 t must be >= 0")
    grid = lemma_grid(cfg.obs_times, t)
    mu, q = cfg.dist.mu_array, cfg.dist.q_array
    bound_s = (1.0 - cfg.theta) * mu[None, :] * np.exp(-2.0 * cfg.lam * cfg.dist.m1 ** 2 * grid)[:, None]
    bound_i = cfg.theta * mu[None, :] * np.exp(-2.0 * grid)[:, None]

    rows = []
    for n in cfg.n_list:
        logger.info(f"lemma1: n={n}, t={t}, {cfg.replicates} replicates")
        stats = run_replicates(_graph_for(cfg, Experiment.LEMMA1, n), cfg.dist, cfg.model_params(n), grid,
                               cfg.replicates, cfg.master_seed, stream=(Experiment.LEMMA1, n),
                               workers=cfg.workers, keep_trajectories=True, record_cross_edges=False)
        hits_s = np.zeros(bound_s.shape)
        hits_i = np.zeros(bound_i.shape)
        for traj in stats.trajectories:
            hits_s += np.minimum.accumulate(traj.S_by_class / n, axis=0) >= bound_s
            hits_i += np.minimum.accumulate(traj.I_by_class / n, axis=0) >= bound_i
        frac_s, frac_i = hits_s / stats.count, hits_i / stats.count
        for j in range(cfg.dist.K):
            for k, u in enumerate(grid):
                rows.append({"n": n, "class": j + 1, "q": q[j], "t": u,
                             "bound_S": bound_s[k, j], "bound_I": bound_i[k, j],
                             "frac_S": frac_s[k, j], "frac_I": frac_i[k, j]})
    report = ConvergenceReport("lemma1", cfg, {"lemma1": pd.DataFrame(rows)}, _seed_info(cfg, Experiment.LEMMA1))
    report.notes.append(f"infima over time evaluated on a grid of spacing {LEMMA_GRID_STEP} "
                        f"merged with the observation times")
    return report


def discretized_uniform_law(low: float, high: float, m: int,
                            direction: Direction = Direction.LOWER) -> WeightDistribution:
    """Law of the m-grid discretisation of a Uniform[low, high) weight."""
    points = low + (np.arange(_QUANTILE_POINTS) + 0.5) * (high - low) / _QUANTILE_POINTS
    return empirical_distribution(discretize(points, m, direction))


@dataclass(frozen=True)
class _SandwichTask:
    index: int
    params: ModelParams
    low: float
    high: float
    m_list: Tuple[int, ...]
    obs_times: Tuple[float, ...]
    graph_seed: int
    weight_seed: int
    init_seed: int
    dynamics_seed: int


def _sandwich_replicate(task: _SandwichTask) -> Dict[Tuple[str, int], Tuple[np.ndarray, np.ndarray]]:
    """S/n and V/n for the raw weights and both discretisations, on common graph, start and seed."""
    n = task.params.n
    g = complete_graph(n) if task.params.p >= 1.0 else generate_er(n, task.params.p, task.graph_seed)
    raw = sample_uniform(task.low, task.high, n, task.weight_seed)
    init = init_states(n, task.params.theta, task.init_seed)

    def run(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if not np.any(values > 0.0):
            # no vertex can infect or be infected
            count = np.full(len(task.obs_times), float(np.count_nonzero(init == VertexState.SUSCEPTIBLE)))
            return count / n, np.zeros(len(task.obs_times))
        traj = simulate(g, WeightAssignment.from_values(values), task.params, init, task.obs_times,
                        task.dynamics_seed, record_cross_edges=False)
        return traj.S / n, traj.V / n

    out = {("raw", 0): run(raw)}
    for m in task.m_list:
        out[(Direction.LOWER.value, m)] = run(discretize(raw, m, Direction.LOWER))
        out[(Direction.UPPER.value, m)] = run(discretize(raw, m, Direction.UPPER))
    return out


def sandwich_experiment(cfg: ExperimentConfig, m_list: Optional[Sequence[int]] = None,
                        n: Optional[int] = None) -> ConvergenceReport:
    """
    Uniform[sandwich_low, sandwich_high) weights against their lower and
    upper m-grid discretisations at n (default: the last entry of n_list).

    Lower weights infect less, so the expected ordering is
    S_lower >= S >= S_upper and V_lower <= V <= V_upper; each is checked
    within 2 combined standard errors.
    """
    m_list = tuple(cfg.m_list if m_list is None else m_list)
    n = cfg.n_list[-1] if n is None else n
    times = np.asarray(cfg.obs_times, dtype=float)
    params = cfg.model_params(n)
    tasks = [
        _SandwichTask(index=r, params=params, low=cfg.sandwich_low, high=cfg.sandwich_high, m_list=m_list,
                      obs_times=tuple(times.tolist()),
                      graph_seed=derive_seed(cfg.master_seed, Experiment.SANDWICH, n, r, Stream.GRAPH),
                      weight_seed=derive_seed(cfg.master_seed, Experiment.SANDWICH, n, r, Stream.WEIGHTS),
                      init_seed=derive_seed(cfg.master_seed, Experiment.SANDWICH, n, r, Stream.INIT),
                      dynamics_seed=derive_seed(cfg.master_seed, Experiment.SANDWICH, n, r, Stream.DYNAMICS))
        for r in range(cfg.replicates)
    ]
    logger.info(f"sandwich: n={n}, m in {list(m_list)}, {cfg.replicates} replicates")
    results = parallel_map(_sandwich_replicate, tasks, cfg.workers)

    merged: Dict[Tuple[str, int], Tuple[SummaryStats, SummaryStats]] = {}
    for result in results:
        for key, (s, v) in result.items():
            part = (SummaryStats.of(s), SummaryStats.of(v))
            merged[key] = part if key not in merged else (merged[key][0].merge(part[0]),
                                                          merged[key][1].merge(part[1]))

    s_raw, v_raw = merged[("raw", 0)]
    rows = []
    for m in m_list:
        s_lo, v_lo = merged[(Direction.LOWER.value, m)]
        s_up, v_up = merged[(Direction.UPPER.value, m)]
        limits = {}
        for direction in Direction:
            law = discretized_uniform_law(cfg.sandwich_low, cfg.sandwich_high, m, direction)
            lp = LimitParams(dist=law, theta=cfg.theta, p=cfg.p, lam=cfg.lam)
            limits[direction] = _limit_on_grid(lp, times, cfg.tol)[1]
        for k, t in enumerate(times):
            se_lo, se, se_up = s_lo.se[k], s_raw.se[k], s_up.se[k]
            ordered_s = (s_lo.mean[k] + 2.0 * math.hypot(se_lo, se) >= s_raw.mean[k]
                         and s_raw.mean[k] + 2.0 * math.hypot(se, se_up) >= s_up.mean[k])
            ordered_v = (v_lo.mean[k] <= v_raw.mean[k] + 2.0 * math.hypot(v_lo.se[k], v_raw.se[k])
                         and v_raw.mean[k] <= v_up.mean[k] + 2.0 * math.hypot(v_raw.se[k], v_up.se[k]))
            rows.append({
                "m": m, "t": t,
                "mean_S_lower": s_lo.mean[k], "mean_S": s_raw.mean[k], "mean_S_upper": s_up.mean[k],
                "se_S_lower": se_lo, "se_S": se, "se_S_upper": se_up,
                "mean_V_lower": v_lo.mean[k], "mean_V": v_raw.mean[k], "mean_V_upper": v_up.mean[k],
                "limit_S_lower": limits[Direction.LOWER][k], "limit_S_upper": limits[Direction.UPPER][k],
                "gap_S": s_lo.mean[k] - s_up.mean[k],
                "ordered_S": int(ordered_s), "ordered_V": int(ordered_v),
            })
    report = ConvergenceReport("sandwich", cfg, {"sandwich": pd.DataFrame(rows)},
                               _seed_info(cfg, Experiment.SANDWICH))
    report.notes.append("variants share graph, weights, initial states and dynamics seed per replicate; "
                        "the coupling is statistical, not pathwise")
    return report


def threshold_sweep(cfg: ExperimentConfig, lambda_grid: Optional[Sequence[float]] = None,
                    n: Optional[int] = None) -> ConvergenceReport:
    """
    Final susceptible fraction against lambda / lambda_c at n (default:
    the last entry of n_list). lambda_c is always part of the sweep.

    An empty grid defaults to {1/4, 1/2, 1, 2, 4} x lambda_c.
    """
    n = cfg.n_list[-1] if n is None else n
    lam_c = lambda_critical(cfg.dist, cfg.p)
    grid = list(cfg.lambda_grid if lambda_grid is None else lambda_grid)
    if not grid:
        grid = [f * lam_c for f in (0.25, 0.5, 1.0, 2.0, 4.0)]
    if any(not lam > 0.0 for lam in grid):
        raise ConfigError("lambda_grid entries must be > 0")
    grid = sorted(set(grid) | {lam_c})

    rows = []
    for k, lam in enumerate(grid):
        params = ModelParams(n=n, p=cfg.p, lam=lam, theta=cfg.theta)
        stats = run_replicates(_graph_for(cfg, Experiment.THRESHOLD, n), cfg.dist, params, [math.inf],
                               cfg.replicates, cfg.master_seed, stream=(Experiment.THRESHOLD, n, k),
                               workers=cfg.workers, record_cross_edges=False)
        limit_s = final_size(cfg.limit_params(lam))
        rows.append({"lambda": lam, "lambda_ratio": lam / lam_c, "is_critical": int(lam == lam_c),
                     "mean_final_S": stats.s.mean[0], "std_final_S": stats.s.std[0],
                     "limit_final_S": limit_s})
        logger.info(f"threshold: lambda={lam:.6g} ({lam / lam_c:.3g} lambda_c), final S/n={stats.s.mean[0]:.6g}")
    report = ConvergenceReport("threshold", cfg, {"threshold": pd.DataFrame(rows)},
                               _seed_info(cfg, Experiment.THRESHOLD))
    report.notes.append(f"lambda_c = 1/(p E rho^2) = {lam_c!r}")
    return report


def beta_study(cfg: ExperimentConfig) -> ConvergenceReport:
    """Sampled beta(c, d, n) and beta / n^2 for each n in n_list."""
    rows = []
    for n in cfg.n_list:
        if cfg.p >= 1.0:
            g = complete_graph(n)
        else:
            g = generate_er(n, cfg.p, derive_seed(cfg.master_seed, Experiment.BETA, n, Stream.GRAPH))
        beta = estimate_beta(g, cfg.beta_c, cfg.beta_d, cfg.beta_trials,
                             derive_seed(cfg.master_seed, Experiment.BETA, n, Stream.BETA), p=cfg.p)
        rows.append({"n": n, "c": cfg.beta_c, "d": cfg.beta_d, "trials": cfg.beta_trials,
                     "beta": beta, "beta_over_n2": beta / float(n) ** 2})
        logger.info(f"beta: n={n}, beta/n^2={beta / float(n) ** 2:.6g}")
    return ConvergenceReport("beta", cfg, {"beta": pd.DataFrame(rows)}, _seed_info(cfg, Experiment.BETA))


EXPERIMENTS = {
    "simulate": single_trajectory,
    "limit": limit_report,
    "converge": lln_experiment,
    "corollary": corollary_check,
    "lemma1": lemma1_check,
    "sandwich": sandwich_experiment,
    "threshold": threshold_sweep,
    "beta": beta_study,
}


def run_experiment(name: str, cfg: ExperimentConfig) -> ConvergenceReport:
    """Run the experiment registered under ``name``."""
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment '{name}'")
    try:
        return EXPERIMENTS[name](cfg)
    except EpidemicError:
        raise
    except ValidationError as e:
        raise ConfigError(_validation_message(e)[0]) from e
