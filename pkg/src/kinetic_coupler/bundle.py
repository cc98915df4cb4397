"""The full certified constant set for one model, built in dependency order."""
from dataclasses import dataclass
from typing import Optional

from .drift import DriftConstants, simplified_to_general
from .metric import (
    CouplingGeometry,
    MetricTable,
    RateConstants,
    build_metric_table,
    closed_form_rate,
    make_rate_constants,
    optimize_rate,
    solve_geometry,
)
from .model import ModelParams, Potential


@dataclass(frozen=True)
class ModelBundle:
    pot: Potential
    params: ModelParams
    consts: DriftConstants
    geometry: CouplingGeometry
    rates: RateConstants
    table: MetricTable
    c_closed: float
    c_opt: Optional[float] = None


def build_bundle(pot, params, consts=None, use_optimized=False, n_grid=4096, ell=None):
    """Drift constants (from the potential unless given), geometry, rate and table."""
    if consts is None:
        consts = simplified_to_general(pot.lipschitz_L, pot.drift_R, pot.drift_beta, params)
    consts.check(params)
    geometry = solve_geometry(consts, params)
    c_closed = closed_form_rate(geometry, consts, params)
    c_opt = optimize_rate(geometry, consts, params) if use_optimized else None
    c = c_opt if use_optimized else c_closed
    rates = make_rate_constants(geometry, consts, params, c, ell=ell)
    table = build_metric_table(geometry, c, consts, params, n_grid=n_grid)
    return ModelBundle(pot, params, consts, geometry, rates, table, c_closed, c_opt)
