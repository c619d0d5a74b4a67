"""Truncated theta-Milstein simulation of scalar stochastic delay differential equations."""

from .model import ProblemSpec, TimeGrid, TruncationPolicy, truncate, truncated_coeffs, truncation_radius
from .noise import BrownianStore, coarse_increment, q1, q2
from .scheme import SchemeConfig, Trajectory, implicit_solve, simulate, simulate_em, step
from .harness import ErrorTable, StudyPlan, fit_rate, moment_estimate, strong_errors
from .probe import AssumptionCase, ProbeReport, probe_assumption, probe_lambda_bound

__all__ = [
    "ProblemSpec", "TimeGrid", "TruncationPolicy", "truncate", "truncated_coeffs", "truncation_radius",
    "BrownianStore", "coarse_increment", "q1", "q2",
    "SchemeConfig", "Trajectory", "implicit_solve", "simulate", "simulate_em", "step",
    "ErrorTable", "StudyPlan", "fit_rate", "moment_estimate", "strong_errors",
    "AssumptionCase", "ProbeReport", "probe_assumption", "probe_lambda_bound",
]
