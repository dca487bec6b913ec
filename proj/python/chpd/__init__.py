"""Robust CHP dispatch: constraint tightening, nominal dispatch and Monte Carlo validation."""

import json

from ._chpd import ChpdError, InfeasibleError, Problem, gamma

__all__ = ["ChpdError", "InfeasibleError", "Problem", "gamma", "reference", "validate", "compare"]


def reference(horizon=24, step_seconds=3600.0):
    return Problem.reference(horizon, step_seconds)


def validate(problem, mode="box", gamma=None, samples=1000, seed=1, sampling="uniform"):
    return json.loads(problem.validate(mode, gamma, samples, seed, sampling))


def compare(problem, methods, samples=1000, seed=1):
    return json.loads(problem.compare(list(methods), samples, seed))
