"""Symbolic equation discovery: expression algebra, datasets, evaluation and search."""

import json

from ._eqdisc import (
    BackendError,
    Candidate,
    DatasetError,
    ExprError,
    NumericsError,
    OdeTrajectory,
    PdeGrid,
    canonical,
    cli,
    discover,
    evaluate,
    fd_derivative,
    generate_odebench,
    generate_pde,
    integrate_ode,
    load_dataset,
    pde_systems,
    r_squared,
    recovery_error,
    ridge,
    score,
    split_terms,
    stridge,
    trajectory_r2,
    violations,
)


def discover_records(data, **kwargs):
    """Like discover() but returns the run log as a list of dicts."""
    return [json.loads(line) for line in discover(data, **kwargs).splitlines() if line]


__all__ = [name for name in dir() if not name.startswith("_")]
