"""Sparse model selection for linear bandits over Legendre feature maps."""

from .agents import AgentBank, RidgeAgent, get_posterior, oracle_width
from .alexp import ALExp
from .baselines import ETC, ETS, UCB, Corral, log_barrier_omd
from .diagnostics import EigenReport, cmin_uniform, empirical_covariance, restricted_eigenvalue
from .environment import SyntheticEnv, make_env
from .features import LegendreFeatures, ModelClass, action_grid, enumerate_models
from .grouplasso import GroupEstimate, GroupLasso, LassoSchedule, lambda_schedule, solve
from .trace import RegretTrace

__version__ = "0.1.0"

__all__ = [
    "ALExp", "AgentBank", "Corral", "ETC", "ETS", "EigenReport", "GroupEstimate", "GroupLasso",
    "LassoSchedule", "LegendreFeatures", "ModelClass", "RegretTrace", "RidgeAgent",
    "SyntheticEnv", "UCB", "action_grid", "cmin_uniform", "empirical_covariance",
    "enumerate_models", "get_posterior", "lambda_schedule", "log_barrier_omd", "make_env",
    "oracle_width", "restricted_eigenvalue", "solve",
]
