"""Operator cost, marginal-cost prices, grid reduction and the induced game.

Unit convention: the operator's hourly cost is ``H = eta * |S0|**2`` with the
head apparent power ``S0`` in MVA. Prices are ``dH/dL`` with the demand ``L``
counted in MW, which is the scale at which ``eta = 5e-3`` yields unit prices
of 0.1 to 0.2 per kWh of charging. Loads themselves are always passed in kW.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize

from ..game import GameError, GameSpec, LambdaDescriptor, Tabulated
from .network import GridNetwork, NetworkError, PricingConfig
from .powerflow import head_power_batch

PRICE_TOL = 1e-12
REDUCTION_POINTS = 21
# finite-difference noise in the objective sits around 1e-11
OBJECTIVE_FATOL = 1e-9
LAMBDA_SAMPLES = 256


class ReductionError(RuntimeError):
    pass


def eno_costs(net: GridNetwork, cases, pricing: PricingConfig) -> np.ndarray:
    """Operator cost for each load mapping in ``cases``."""
    s0 = head_power_batch(net, list(cases), tol=PRICE_TOL)
    return pricing.eta * (np.abs(s0) * net.power_base_mva) ** 2


def eno_cost(net: GridNetwork, loads_kw: dict, pricing: PricingConfig) -> float:
    return float(eno_costs(net, [loads_kw], pricing)[0])


def marginal_prices(net: GridNetwork, cases, pricing: PricingConfig) -> np.ndarray:
    """Central-difference ``dH/dL_bus`` for a list of ``(loads_kw, bus)`` pairs."""
    h = pricing.fd_step_kw
    shifted = []
    for loads_kw, bus in cases:
        for step in (h, -h):
            moved = dict(loads_kw)
            moved[bus] = moved.get(bus, 0.0) + step
            shifted.append(moved)
    if not shifted:
        return np.zeros(0)
    cost = eno_costs(net, shifted, pricing)
    return (cost[0::2] - cost[1::2]) / (2.0 * h / 1000.0)


def marginal_price(net: GridNetwork, loads_kw: dict, bus: str, pricing: PricingConfig) -> float:
    """Central-difference ``dH/dL_bus`` (currency per MW, quoted per kWh)."""
    return float(marginal_prices(net, [(loads_kw, bus)], pricing)[0])


def transformer_loads(net: GridNetwork, demand_kw: float) -> dict:
    """Loads of the reduced network: EVCS demand moved to the transformer bus.

    Buses that are neither EVCS nor slack keep their base demand.
    """
    loads = {b: 0.0 if b in net.evcs_buses else kw for b, kw in net.base_loads().items()}
    loads[net.transformer_bus] = loads.get(net.transformer_bus, 0.0) + demand_kw
    return loads


def transformer_prices(net: GridNetwork, demands_kw, pricing: PricingConfig) -> np.ndarray:
    """``dH/dL_d`` with each of ``demands_kw`` placed at the transformer bus."""
    d = net.transformer_bus
    return marginal_prices(net, [(transformer_loads(net, float(x)), d) for x in demands_kw],
                           pricing)


def transformer_price(net: GridNetwork, demand_kw: float, pricing: PricingConfig) -> float:
    return float(transformer_prices(net, [demand_kw], pricing)[0])


@dataclass(frozen=True, eq=False)
class GridMarginal(LambdaDescriptor):
    """lam evaluated on demand by power flow at the transformer bus."""

    network: GridNetwork
    pricing: PricingConfig
    kind = "grid_marginal"

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        out = transformer_prices(self.network, arr.ravel(), self.pricing)
        return out.reshape(arr.shape) if arr.ndim else float(out[0])

    def to_dict(self):
        return {"kind": self.kind, "network": self.network.to_dict(),
                "pricing": self.pricing.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(GridNetwork.from_dict(d["network"]), PricingConfig(**d["pricing"]))


@dataclass(frozen=True, eq=False)
class ReductionResult:
    alpha_tilde: np.ndarray          # ordered like network.evcs_buses
    objective_value: float
    l_max_kw: float
    network: GridNetwork = field(repr=False, default=None)

    def __post_init__(self):
        a = np.array(self.alpha_tilde, dtype=float)
        if np.any(a <= 0):
            raise ReductionError("reduction coefficients must be positive")
        a.flags.writeable = False
        object.__setattr__(self, "alpha_tilde", a)

    def as_dict(self) -> dict:
        return {b: float(a) for b, a in zip(self.network.evcs_buses, self.alpha_tilde)}


def _check_pricing(net, pricing):
    pricing = pricing or net.pricing
    if pricing is None:
        raise NetworkError("no pricing constants given and none in the scenario")
    return pricing


def reduction_objective(net: GridNetwork, pricing: PricingConfig, l_max_kw: float,
                        points: int = REDUCTION_POINTS):
    """Build the square-error objective of the reduction as a function of alpha.

    For each EVCS ``r`` and extra demand ``x`` in ``[0, l_max]`` it compares the
    true marginal price at ``r`` with ``alpha_r * dH/dL_d`` evaluated at the
    reduced demand ``sum_s alpha_s L0_s + alpha_r x``; the squared gap is
    integrated over ``x`` with the trapezoid rule.
    """
    xs = np.linspace(0.0, l_max_kw, points)
    base = net.base_loads()
    l0 = np.array(net.evcs_base_loads())
    cases = []
    for bus in net.evcs_buses:
        for x in xs:
            loads = dict(base)
            loads[bus] += x
            cases.append((loads, bus))
    target = marginal_prices(net, cases, pricing).reshape(len(net.evcs_buses), points)

    def objective(alpha):
        alpha = np.asarray(alpha, dtype=float)
        if np.any(alpha <= 0):
            return np.inf
        offset = float(alpha @ l0)
        demand = offset + alpha[:, None] * xs[None, :]
        approx = alpha[:, None] * transformer_prices(net, demand.ravel(), pricing).reshape(demand.shape)
        return float(trapezoid((target - approx) ** 2, xs, axis=1).sum())

    return objective


def reduce_grid(net: GridNetwork, pricing: PricingConfig | None, l_max_kw: float,
                points: int = REDUCTION_POINTS) -> ReductionResult:
    """Fit one scaling coefficient per EVCS mapping its demand onto the transformer bus.

    Nelder-Mead from the all-ones vector; stops once the objective spread over
    the simplex drops below OBJECTIVE_FATOL.
    """
    if l_max_kw <= 0:
        raise ReductionError("l_max_kw must be positive")
    pricing = _check_pricing(net, pricing)
    objective = reduction_objective(net, pricing, l_max_kw, points)
    start = np.ones(len(net.evcs_buses))
    f0 = objective(start)
    res = minimize(objective, start, method="Nelder-Mead",
                   options={"xatol": 1e-9, "fatol": OBJECTIVE_FATOL, "maxiter": 4000, "maxfev": 8000})
    if not np.isfinite(res.fun) or res.fun > f0 or not res.success:
        raise ReductionError(
            f"reduction optimizer failed ({res.message}); objective {res.fun} vs start {f0}")
    return ReductionResult(res.x, float(res.fun), float(l_max_kw), net)


def charging_cost(reduction: ReductionResult, pricing: PricingConfig, counts, base_loads_kw,
                  resource: int) -> float:
    """Cost of one session at EVCS ``resource`` on the reduced network.

    ``rho * alpha_r * dH/dL_d(sum_s rho alpha_s n_s + sum_s alpha_s L0_s)``.
    """
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    a = reduction.alpha_tilde
    load = float(pricing.rho_kwh * (a * counts).sum() + (a * np.asarray(base_loads_kw)).sum())
    return float(pricing.rho_kwh * a[resource] * transformer_price(reduction.network, load, pricing))


def lambda_table(net: GridNetwork, pricing: PricingConfig, upper_kw: float,
                 samples: int = LAMBDA_SAMPLES) -> Tabulated:
    xs = np.linspace(0.0, upper_kw, samples)
    ys = transformer_prices(net, xs, pricing)
    if np.any(np.diff(ys) < 0) or np.any(ys < 0):
        raise GameError("sampled marginal price is not monotone; operating range exceeds "
                        "the grid's stable region")
    return Tabulated(xs, ys)


def game_offset(net: GridNetwork, reduction: ReductionResult) -> float:
    return float((reduction.alpha_tilde * np.array(net.evcs_base_loads())).sum())


def build_congestion_game(net: GridNetwork, pricing: PricingConfig | None,
                          reduction: ReductionResult, n_players: int,
                          table: Tabulated | None = None) -> GameSpec:
    """Symmetric game with ``alpha_r = rho * alpha_tilde_r`` and a tabulated lam.

    lam is ``dH/dL_d`` sampled on ``[0, N rho max(alpha_tilde) + offset]``. A
    precomputed ``table`` covering that range can be supplied instead.
    """
    pricing = _check_pricing(net, pricing)
    offset = game_offset(net, reduction)
    upper = n_players * pricing.rho_kwh * float(reduction.alpha_tilde.max()) + offset
    if table is None:
        table = lambda_table(net, pricing, upper)
    elif table.xs[-1] < upper:
        raise GameError(f"lambda table ends at {table.xs[-1]} kW, game needs {upper} kW")
    alpha = pricing.rho_kwh * reduction.alpha_tilde
    return GameSpec.symmetric(alpha, n_players, table, offset)
