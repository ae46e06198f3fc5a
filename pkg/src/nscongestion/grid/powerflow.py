"""Newton-Raphson solution of the bus-injection power balance.

At every non-slack bus ``k`` the specified injection ``S_k = -load_k`` must
equal ``U_k * sum_m conj(Y_km) conj(U_m)``. Unknowns are the voltage angles
and magnitudes of the non-slack nodes; the slack voltage is pinned. Loads are
purely active (unity power factor).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import GridNetwork, NetworkError

# the residual contract is 1e-8 pu; the tighter default keeps voltages accurate to ~1e-12
DEFAULT_TOL = 1e-10
MAX_ITER = 50


class PowerFlowError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class PowerFlowSolution:
    voltages: dict
    head_apparent_power: complex
    residual: float
    iterations: int

    @property
    def head_power_pu(self) -> float:
        """``|S0|`` in per-unit."""
        return abs(self.head_apparent_power)


@dataclass(frozen=True, eq=False)
class _Topology:
    node_of: dict          # bus id -> node index
    slack_node: int
    ybus: np.ndarray
    pq: np.ndarray


_TOPO_CACHE: dict = {}


def _topology(net: GridNetwork) -> _Topology:
    key = id(net)
    hit = _TOPO_CACHE.get(key)
    if hit is not None and hit[0] is net:
        return hit[1]

    parent = {b.id: b.id for b in net.buses}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for ln in net.lines:
        if ln.is_tie:
            parent[find(ln.from_bus)] = find(ln.to_bus)
    roots = []
    for b in net.buses:
        r = find(b.id)
        if r not in roots:
            roots.append(r)
    node_of = {b.id: roots.index(find(b.id)) for b in net.buses}
    n = len(roots)
    y = np.zeros((n, n), dtype=complex)
    for ln in net.lines:
        if ln.is_tie:
            continue
        i, j = node_of[ln.from_bus], node_of[ln.to_bus]
        if i == j:
            continue
        y[i, i] += ln.admittance
        y[j, j] += ln.admittance
        y[i, j] -= ln.admittance
        y[j, i] -= ln.admittance
    slack = node_of[net.slack_bus]
    pq = np.array([k for k in range(n) if k != slack], dtype=int)
    topo = _Topology(node_of, slack, y, pq)
    if len(_TOPO_CACHE) > 64:
        _TOPO_CACHE.clear()
    _TOPO_CACHE[key] = (net, topo)
    return topo


def _jacobian(y, v, pq):
    """Batched polar Jacobian of the injections w.r.t. (angle, magnitude) of ``pq`` nodes."""
    i_bus = v @ y.T
    vy = v[:, None, :] * y[None, :, :]                  # Y diag(V)
    ds_dva = 1j * v[:, :, None] * np.conj(_diag(i_bus) - vy)
    unit = v / np.abs(v)
    ds_dvm = v[:, :, None] * np.conj(y[None] * unit[:, None, :]) + _diag(np.conj(i_bus) * unit)
    a = ds_dva[:, pq][:, :, pq]
    m = ds_dvm[:, pq][:, :, pq]
    top = np.concatenate([a.real, m.real], axis=2)
    bottom = np.concatenate([a.imag, m.imag], axis=2)
    return np.concatenate([top, bottom], axis=1)


def _diag(x):
    out = np.zeros(x.shape + (x.shape[-1],), dtype=x.dtype)
    idx = np.arange(x.shape[-1])
    out[:, idx, idx] = x
    return out


def _demand_matrix(net: GridNetwork, topo: _Topology, cases) -> np.ndarray:
    demand = np.zeros((len(cases), topo.ybus.shape[0]))
    for k, loads_kw in enumerate(cases):
        for bus, kw in loads_kw.items():
            if bus not in topo.node_of:
                raise NetworkError(f"load given for unknown bus {bus!r}")
            if bus == net.slack_bus and kw != 0:
                raise NetworkError("the slack bus cannot carry a load")
            demand[k, topo.node_of[bus]] += kw
    return demand / (1000.0 * net.power_base_mva)


def _newton(net: GridNetwork, topo: _Topology, demand: np.ndarray, tol: float, max_iter: int):
    """Solve every row of ``demand`` (pu); converged rows are frozen."""
    k_cases, n = demand.shape
    y = topo.ybus
    pq = topo.pq
    npq = pq.size
    s_spec = -demand[:, pq]
    v = np.full((k_cases, n), net.slack_voltage, dtype=complex)
    iterations = np.zeros(k_cases, dtype=int)
    residual = np.zeros(k_cases)
    active = np.ones(k_cases, dtype=bool)
    while True:
        va = v[active]
        mis = (va * np.conj(va @ y.T))[:, pq] - s_spec[active]
        res = np.max(np.abs(mis), axis=1) if npq else np.zeros(va.shape[0])
        if not np.all(np.isfinite(res)):
            raise PowerFlowError("power flow diverged (non-finite mismatch)")
        rows = np.flatnonzero(active)
        iterations[rows] += 1
        residual[rows] = res
        still = res > tol
        active[rows[~still]] = False
        if not np.any(still):
            break
        if iterations[rows[still]].max() > max_iter:
            raise PowerFlowError(
                f"Newton-Raphson did not converge in {max_iter} iterations "
                f"(residual {res.max():.3e} pu); loading may be infeasible")
        va = va[still]
        mis = mis[still]
        jac = _jacobian(y, va, pq)
        rhs = -np.concatenate([mis.real, mis.imag], axis=1)
        try:
            dx = np.linalg.solve(jac, rhs[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            raise PowerFlowError("singular Jacobian; loading may be infeasible") from None
        ang = np.angle(va[:, pq]) + dx[:, :npq]
        mag = np.abs(va[:, pq]) + dx[:, npq:]
        if np.any(mag <= 0):
            raise PowerFlowError("voltage collapse during Newton-Raphson iterations")
        va[:, pq] = mag * np.exp(1j * ang)
        v[rows[still]] = va
    s_head = (v * np.conj(v @ y.T))[:, topo.slack_node] + demand[:, topo.slack_node]
    return v, s_head, residual, iterations


def solve_power_flow(net: GridNetwork, loads_kw: dict, tol: float = DEFAULT_TOL,
                     max_iter: int = MAX_ITER) -> PowerFlowSolution:
    """Flat-start Newton-Raphson solve.

    ``loads_kw`` maps bus id to active demand in kW; buses not listed carry
    no load. ``iterations`` counts mismatch evaluations, so an already
    balanced flat start reports 1.
    """
    topo = _topology(net)
    v, s0, residual, iterations = _newton(net, topo, _demand_matrix(net, topo, [loads_kw]),
                                          tol, max_iter)
    voltages = {b.id: complex(v[0, topo.node_of[b.id]]) for b in net.buses}
    return PowerFlowSolution(voltages, complex(s0[0]), float(residual[0]), int(iterations[0]))


def head_power_batch(net: GridNetwork, cases, tol: float = DEFAULT_TOL,
                     max_iter: int = MAX_ITER) -> np.ndarray:
    """Head apparent power (pu, complex) for a list of load mappings, solved together."""
    topo = _topology(net)
    return _newton(net, topo, _demand_matrix(net, topo, cases), tol, max_iter)[1]
