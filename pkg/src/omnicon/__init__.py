"""Online omniprediction with long-term constraints.

A forecaster produces calibrated-enough predictions of a d-dimensional
outcome; downstream agents best-respond over action sets pruned by their
own constraint ledgers; metrics and a harness measure constraint violation
and regret against the safe-action benchmarks.
"""

from .agents import (CandidateLedger, EliminationAgent, FeasibilityExhausted, constrained_best_response,
                     responsible_index, step_alg1, step_alg2, step_alg3, step_alg4, tau_subsequence,
                     threshold_tau, union_candidates)
from .core import (AgentSpec, ConfigurationError, ConstraintFamily, ConstraintRangeError, InvariantViolation,
                   LinearConstraints, LinearUtility, Outcome, ProtocolError, TabularConstraints,
                   ThresholdConstraints, Transcript, UnsupportedQuery, eval_utility, hypercube_vertices,
                   lipschitz_constant, validate_utility_range)
from .env import (AdaptiveAdversary, Adversary, IIDAdversary, OutcomeDistribution, SamplerDistribution,
                  ScriptedAdversary, SubsequenceDef, active_subsequences, expected_constraint, make_adversary)
from .forecast import (Event, ExpertState, Forecaster, PredictionDistribution, PredictionGrid, SolverError,
                       compute_weights, conditional_bias, inner_max, learning_rate, record_outcome,
                       register_events, sample_prediction, solve_game, solve_minmax)
from .harness import RunConfig, RunResult, loglog_slope, run_simulation, run_sweep, write_outputs
from .metrics import (BenchmarkSets, RegretResult, action_bias, ccv, compute_benchmarks, external_regret,
                      swap_regret, swap_regret_bruteforce, theorem_bounds)

__version__ = "0.1.0"
