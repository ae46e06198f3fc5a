"""Linear reward-inaction learning on congestion games.

Each player keeps a mixed strategy row. Every iteration all players sample
an action, observe their own cost ``c`` and move their row towards the played
action by ``delta * (1 - c / c_max)``. In synchronous mode every row updates;
in asynchronous mode a single uniformly chosen player updates.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .game import (
    GameError,
    GameSpec,
    MixedProfile,
    _check_mixed,
    expected_costs,
    potential_gradient,
    sample_actions,
)
from .rng import iteration_uniforms

RENORM_TOL = 1e-12
DESCENT_TOL = 1e-10
COST_RTOL = 1e-12

_MODES = {"synchronous": "synchronous", "sync": "synchronous",
          "asynchronous": "asynchronous", "async": "asynchronous"}


@dataclass(frozen=True)
class LearnerConfig:
    delta: float
    c_max: float
    mode: str = "synchronous"
    max_iterations: int = 10_000
    convergence_threshold: float = 0.999
    seed: int = 0
    snapshot_stride: int = 1

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.c_max > 0:
            raise ValueError(f"c_max must be positive, got {self.c_max}")
        if self.mode not in _MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "mode", _MODES[self.mode])
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.convergence_threshold < 1:
            raise ValueError("convergence_threshold must lie in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")

    @classmethod
    def for_game(cls, game: GameSpec, **kwargs) -> "LearnerConfig":
        """Config with ``c_max`` taken from :func:`compute_cmax`."""
        return cls(c_max=compute_cmax(game), **kwargs)


@dataclass
class Trajectory:
    """Result of :func:`run`.

    ``snapshots`` and ``realized`` are recorded every ``snapshot_stride``
    iterations (plus the final state); ``mean_probs`` holds the player-averaged
    strategy at every iteration ``0 .. iterations`` and ``mean_costs`` the
    average realized cost at every iteration ``0 .. iterations-1``.
    """

    snapshots: list = field(default_factory=list)
    realized: list = field(default_factory=list)
    converged_at: Optional[int] = None
    final_profile: tuple = ()
    iterations: int = 0
    mean_probs: np.ndarray = None
    mean_costs: np.ndarray = None
    final_mixed: MixedProfile = None

    def first_reaching(self, resource: int, level: float) -> Optional[int]:
        """First iteration whose mean probability on ``resource`` is >= ``level``."""
        hit = np.flatnonzero(self.mean_probs[:, resource] >= level)
        return int(hit[0]) if hit.size else None


@dataclass(frozen=True, eq=False)
class DriftVector:
    entries: np.ndarray
    std_error: Optional[np.ndarray] = None

    def __post_init__(self):
        if np.any(np.abs(self.entries.sum(axis=1)) > 1e-9):
            raise ValueError("drift rows must sum to zero")


@dataclass(frozen=True)
class DescentReport:
    violations: int
    max_positive: float
    max_rel_disagreement: float
    trials: int


# ---------------------------------------------------------------------------


def compute_cmax(game: GameSpec) -> float:
    """Largest cost the game can produce.

    Loads are maximal when everybody picks their largest coefficient and lam
    is non-decreasing, so the bound is attained for symmetric games.
    """
    load = game.base_load
    for a in game.alpha.max(axis=1):
        load += a
    c_max = float(game.alpha.max() * game.lam(load))
    if not c_max > 0:
        raise GameError("game produces no positive cost; reward-inaction needs c_max > 0")
    return c_max


def update_strategy(row, action: int, cost: float, config: LearnerConfig) -> np.ndarray:
    row = np.asarray(row, dtype=float)
    if cost < 0:
        raise ValueError(f"negative cost {cost}")
    if cost > config.c_max:
        raise ValueError(f"cost {cost} exceeds c_max {config.c_max}; c_max is mis-sized")
    beta = config.delta * (1.0 - cost / config.c_max)
    target = np.zeros_like(row)
    target[action] = 1.0
    new = row + beta * (target - row)
    s = new.sum()
    if abs(s - 1.0) > RENORM_TOL:
        new = new / s
    return new


def _update_rows(p: np.ndarray, rows: np.ndarray, actions: np.ndarray,
                 costs: np.ndarray, delta: float, c_max: float):
    """In-place reward-inaction update of ``p[rows]``."""
    beta = delta * (1.0 - costs / c_max)
    block = p[rows]
    target = np.zeros_like(block)
    target[np.arange(rows.size), actions] = 1.0
    block = block + beta[:, None] * (target - block)
    s = block.sum(axis=1)
    off = np.abs(s - 1.0) > RENORM_TOL
    if np.any(off):
        block[off] /= s[off, None]
    p[rows] = block


def _converged(p: np.ndarray, threshold: float) -> bool:
    return bool(np.all(p.max(axis=1) >= threshold))


def run(game: GameSpec, config: LearnerConfig, initial, workers: int = 1) -> Trajectory:
    """Run reward-inaction learning from ``initial`` until convergence or the cap.

    ``workers > 1`` splits the synchronous row update across threads; the
    output is bit-identical to ``workers=1``.
    """
    p = _check_mixed(game, initial).copy()
    MixedProfile(p)
    needed = compute_cmax(game)
    if config.c_max < needed:
        raise ValueError(f"config.c_max={config.c_max} is below the game's bound {needed}")

    n_players, n_res = p.shape
    idx = np.arange(n_players)
    sync = config.mode == "synchronous"
    stride = config.snapshot_stride
    chunks = np.array_split(idx, max(1, min(workers, n_players))) if sync else [idx]
    pool = ThreadPoolExecutor(len(chunks)) if len(chunks) > 1 else None

    traj = Trajectory()
    mean_probs = [p.mean(axis=0)]
    mean_costs = []
    n = 0
    try:
        while True:
            if n % stride == 0:
                traj.snapshots.append((n, MixedProfile(p.copy())))
            if _converged(p, config.convergence_threshold):
                traj.converged_at = n
                break
            if n >= config.max_iterations:
                break
            u = iteration_uniforms(config.seed, n, n_players + 1)
            r = sample_actions(p, u[:n_players])
            own = game.alpha[idx, r]
            c = own * game.lam(game.base_load + own.sum())
            if c.max() > config.c_max:
                # the bound is summed sequentially, the load here pairwise
                if c.max() > config.c_max * (1 + COST_RTOL):
                    raise ValueError(f"observed cost {c.max()} exceeds c_max {config.c_max}")
                c = np.minimum(c, config.c_max)
            if n % stride == 0:
                traj.realized.append((n, r.copy(), c.copy()))
            mean_costs.append(c.mean())
            if sync:
                if pool is None:
                    _update_rows(p, idx, r, c, config.delta, config.c_max)
                else:
                    list(pool.map(
                        lambda rows: _update_rows(p, rows, r[rows], c[rows],
                                                  config.delta, config.c_max),
                        chunks))
            else:
                i = min(int(u[n_players] * n_players), n_players - 1)
                sel = idx[i:i + 1]
                _update_rows(p, sel, r[sel], c[sel], config.delta, config.c_max)
            n += 1
            mean_probs.append(p.mean(axis=0))
    finally:
        if pool is not None:
            pool.shutdown()

    if traj.snapshots[-1][0] != n:
        traj.snapshots.append((n, MixedProfile(p.copy())))
    traj.iterations = n
    traj.mean_probs = np.array(mean_probs)
    traj.mean_costs = np.array(mean_costs)
    traj.final_mixed = MixedProfile(p)
    traj.final_profile = tuple(int(a) for a in p.argmax(axis=1))
    return traj


# ---------------------------------------------------------------------------
# mean-field diagnostics
# ---------------------------------------------------------------------------


def drift_closed_form(game: GameSpec, mixed, c_max: float) -> DriftVector:
    """Expected update direction ``f_{i,a} = -pi_{i,a} sum_b pi_{i,b} (cbar_{i,a} - cbar_{i,b}) / c_max``."""
    p = _check_mixed(game, mixed)
    cbar = expected_costs(game, p)
    avg = (p * cbar).sum(axis=1, keepdims=True)
    f = -p * (cbar * p.sum(axis=1, keepdims=True) - avg) / c_max
    return DriftVector(f)


def drift_monte_carlo(game: GameSpec, mixed, config: LearnerConfig, samples: int,
                      chunk: int = 20_000) -> DriftVector:
    """Sample mean of the one-step update divided by ``delta``, with standard errors."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    p = _check_mixed(game, mixed)
    n_players, n_res = p.shape
    idx = np.arange(n_players)
    rng = np.random.default_rng(config.seed)
    total = np.zeros_like(p)
    total_sq = np.zeros_like(p)
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        r = sample_actions(p, rng.random((k, n_players)))
        own = game.alpha[idx, r]
        c = own * game.lam(game.base_load + own.sum(axis=1, keepdims=True))
        beta = 1.0 - c / config.c_max
        g = np.zeros((k, n_players, n_res))
        np.put_along_axis(g, r[:, :, None], 1.0, axis=2)
        g = beta[:, :, None] * (g - p[None])
        total += g.sum(axis=0)
        total_sq += (g * g).sum(axis=0)
        done += k
    mean = total / samples
    if samples > 1:
        var = np.maximum(total_sq - samples * mean**2, 0.0) / (samples - 1)
        se = np.sqrt(var / samples)
    else:
        se = np.zeros_like(mean)
    return DriftVector(mean, se)


def descent_rate(game: GameSpec, mixed, c_max: float) -> float:
    """Closed-form time derivative of the continuous potential along the mean drift.

    Pairs of resources contribute
    ``-pi_k pi_l (cbar_k - cbar_l)(pbar_k - pbar_l) / c_max`` where ``pbar`` is
    the conditional expected potential (``cbar / alpha``); both differences
    share a sign, so every term is non-positive.
    """
    p = _check_mixed(game, mixed)
    pbar = potential_gradient(game, p)
    cbar = game.alpha * pbar
    dc = cbar[:, :, None] - cbar[:, None, :]
    dp = pbar[:, :, None] - pbar[:, None, :]
    pair = p[:, :, None] * p[:, None, :] * dc * dp
    upper = np.triu(np.ones(pair.shape[1:], dtype=bool), k=1)
    return float(-pair[:, upper].sum() / c_max)


def fd_potential_gradient(game: GameSpec, mixed, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of the continuous potential in raw coordinates."""
    from .game import continuous_potential

    p = _check_mixed(game, mixed)
    grad = np.empty_like(p)
    for i in range(p.shape[0]):
        for a in range(p.shape[1]):
            up = p.copy()
            dn = p.copy()
            up[i, a] += h
            dn[i, a] -= h
            grad[i, a] = (continuous_potential(game, up) - continuous_potential(game, dn)) / (2 * h)
    return grad


def random_interior(rng: np.random.Generator, n_players: int, n_resources: int) -> np.ndarray:
    """Dirichlet(1) rows, clipped away from the simplex boundary."""
    p = rng.dirichlet(np.ones(n_resources), size=n_players)
    p = np.clip(p, 1e-3, None)
    return p / p.sum(axis=1, keepdims=True)


def lyapunov_descent_check(game: GameSpec, trials: int, seed=None, c_max: float | None = None,
                           h: float = 1e-5) -> DescentReport:
    """Check that the continuous potential never increases along the mean drift.

    At each random interior point the rate is computed in closed form and as
    the finite-difference gradient dotted with :func:`drift_closed_form`.
    """
    if c_max is None:
        c_max = compute_cmax(game)
    rng = np.random.default_rng(seed)
    violations = 0
    max_pos = -np.inf
    max_rel = 0.0
    for _ in range(trials):
        p = random_interior(rng, game.n_players, game.n_resources)
        closed = descent_rate(game, p, c_max)
        fd = float((fd_potential_gradient(game, p, h) * drift_closed_form(game, p, c_max).entries).sum())
        worst = max(closed, fd)
        max_pos = max(max_pos, worst)
        if worst > DESCENT_TOL:
            violations += 1
        scale = max(abs(closed), abs(fd))
        if scale > 1e-12:
            max_rel = max(max_rel, abs(closed - fd) / scale)
    return DescentReport(violations, float(max_pos), max_rel, trials)
