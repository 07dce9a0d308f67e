from epidemic_lln.models import WeightDistribution, ModelParams, LimitParams, ExperimentConfig
from epidemic_lln.weights import (
    WeightAssignment, Direction, make_distribution, parse_distribution, empirical_distribution,
    moment, generalized_moment, sample_assignment, sample_uniform, discretize,
)
from epidemic_lln.graph import (
    Graph, generate_er, complete_graph, from_edges, cross_edges, estimate_beta,
    dump_edgelist, load_edgelist,
)
from epidemic_lln.sim import (
    VertexState, Trajectory, ReplicateStats, simulate, run_replicates, init_states,
    infection_rate_of, observables, audit_events, derive_seed,
)
from epidemic_lln.limit import (
    LimitSolution, ClassicalSolution, h_s, h_v, solve_psi, solve_component_ode, solve_time_change,
    limit_curves, classical_limit, lambda_critical, extinction_root, final_size,
)
from epidemic_lln.harness import (
    ConvergenceReport, load_config, lln_experiment, corollary_check, lemma1_check,
    sandwich_experiment, threshold_sweep, beta_study, emit_reports,
)
import epidemic_lln.exceptions as exceptions

__version__ = "0.1.0"
__all__ = [
    # Models
    "WeightDistribution",
    "ModelParams",
    "LimitParams",
    "ExperimentConfig",

    # Weights
    "WeightAssignment",
    "Direction",
    "make_distribution",
    "parse_distribution",
    "empirical_distribution",
    "moment",
    "generalized_moment",
    "sample_assignment",
    "sample_uniform",
    "discretize",

    # Graphs
    "Graph",
    "generate_er",
    "complete_graph",
    "from_edges",
    "cross_edges",
    "estimate_beta",
    "dump_edgelist",
    "load_edgelist",

    # Simulation
    "VertexState",
    "Trajectory",
    "ReplicateStats",
    "simulate",
    "run_replicates",
    "init_states",
    "infection_rate_of",
    "observables",
    "audit_events",
    "derive_seed",

    # Limit
    "LimitSolution",
    "ClassicalSolution",
    "h_s",
    "h_v",
    "solve_psi",
    "solve_component_ode",
    "solve_time_change",
    "limit_curves",
    "classical_limit",
    "lambda_critical",
    "extinction_root",
    "final_size",

    # Experiments
    "ConvergenceReport",
    "load_config",
    "lln_experiment",
    "corollary_check",
    "lemma1_check",
    "sandwich_experiment",
    "threshold_sweep",
    "beta_study",
    "emit_reports",

    # Module imports
    "exceptions",
]
