"""Finite congestion games with linearly non-separable costs.

A player choosing resource ``a`` pays ``alpha[i, a] * lam(L)`` where
``L = base_load + sum_j alpha[j, r_j]`` is the weighted aggregate load of
the whole profile. The symmetric game is the special case where every row
of ``alpha`` is identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ENUMERATION_LIMIT = 10**6
CHARACTERIZATION_ATOL = 1e-12


class GameError(ValueError):
    """Invalid game, profile or index."""


class EnumerationLimitError(GameError):
    """Exact enumeration would exceed ``ENUMERATION_LIMIT`` terms."""


# ---------------------------------------------------------------------------
# lambda descriptors
# ---------------------------------------------------------------------------


class LambdaDescriptor:
    """Non-decreasing map R+ -> R+ used inside the congestion cost."""

    kind: str = ""

    def __call__(self, x):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def check_monotone(self, lo: float, hi: float, pairs: int = 1000, seed: int = 0) -> bool:
        """Sample ``pairs`` ordered pairs ``x < y`` in ``[lo, hi]`` and check
        ``0 <= lam(x) <= lam(y)``."""
        rng = np.random.default_rng(seed)
        pts = np.sort(rng.uniform(lo, hi, size=(pairs, 2)), axis=1)
        fx = np.asarray(self(pts[:, 0]), dtype=float)
        fy = np.asarray(self(pts[:, 1]), dtype=float)
        return bool(np.all(fx >= 0.0) and np.all(fx <= fy))


@dataclass(frozen=True)
class Affine(LambdaDescriptor):
    c0: float = 0.0
    c1: float = 1.0
    kind = "affine"

    def __post_init__(self):
        if self.c0 < 0 or self.c1 < 0:
            raise GameError(f"affine lambda needs c0, c1 >= 0, got ({self.c0}, {self.c1})")

    def __call__(self, x):
        return self.c0 + self.c1 * np.asarray(x, dtype=float)

    def to_dict(self):
        return {"kind": self.kind, "c0": float(self.c0), "c1": float(self.c1)}


@dataclass(frozen=True)
class Polynomial(LambdaDescriptor):
    """``sum_k coeffs[k] * x**k`` with non-negative coefficients."""

    coeffs: tuple[float, ...] = (0.0, 1.0)
    kind = "polynomial"

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if not self.coeffs or min(self.coeffs) < 0:
            raise GameError("polynomial lambda needs a non-empty list of non-negative coefficients")

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coeffs)

    def to_dict(self):
        return {"kind": self.kind, "coeffs": list(self.coeffs)}


@dataclass(frozen=True, eq=False)
class Tabulated(LambdaDescriptor):
    """Piecewise-linear interpolation of sorted breakpoints.

    Outside the table the end values are held constant, which keeps the map
    monotone on all of R+.
    """

    xs: np.ndarray
    ys: np.ndarray
    kind = "tabulated"

    def __post_init__(self):
        xs = np.array(self.xs, dtype=float)
        ys = np.array(self.ys, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise GameError("tabulated lambda needs two equal-length 1-D arrays of >= 2 points")
        if np.any(np.diff(xs) <= 0):
            raise GameError("tabulated lambda breakpoints must be strictly increasing")
        if np.any(ys < 0) or np.any(np.diff(ys) < 0):
            raise GameError("tabulated lambda values must be non-negative and non-decreasing")
        xs.flags.writeable = False
        ys.flags.writeable = False
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    def __call__(self, x):
        return np.interp(x, self.xs, self.ys)

    def __eq__(self, other):
        return (
            isinstance(other, Tabulated)
            and np.array_equal(self.xs, other.xs)
            and np.array_equal(self.ys, other.ys)
        )

    def to_dict(self):
        return {"kind": self.kind, "xs": self.xs.tolist(), "ys": self.ys.tolist()}


def lambda_from_dict(d: dict) -> LambdaDescriptor:
    kind = d.get("kind")
    if kind == "affine":
        return Affine(float(d.get("c0", 0.0)), float(d.get("c1", 1.0)))
    if kind == "polynomial":
        return Polynomial(tuple(d["coeffs"]))
    if kind == "tabulated":
        return Tabulated(d["xs"], d["ys"])
    if kind == "grid_marginal":
        from .grid.pricing import GridMarginal

        return GridMarginal.from_dict(d)
    raise GameError(f"unknown lambda kind {kind!r}")


IDENTITY = Affine(0.0, 1.0)


# ---------------------------------------------------------------------------
# game and profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GameSpec:
    """The game: an ``N x M`` coefficient matrix, a lambda map and a load offset."""

    alpha: np.ndarray
    lambda_fn: LambdaDescriptor = IDENTITY
    base_load: float = 0.0

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        if alpha.ndim != 2 or alpha.shape[0] < 1 or alpha.shape[1] < 1:
            raise GameError(f"alpha must be an N x M matrix with N, M >= 1, got shape {alpha.shape}")
        if np.any(alpha < 0) or not np.all(np.isfinite(alpha)):
            raise GameError("alpha entries must be finite and >= 0")
        if self.base_load < 0:
            raise GameError("base_load must be >= 0")
        alpha.flags.writeable = False
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "base_load", float(self.base_load))

    @classmethod
    def symmetric(cls, alpha: Sequence[float], n_players: int,
                  lambda_fn: LambdaDescriptor = IDENTITY, base_load: float = 0.0) -> "GameSpec":
        if n_players < 1:
            raise GameError("need at least one player")
        row = np.asarray(alpha, dtype=float)
        return cls(np.tile(row, (n_players, 1)), lambda_fn, base_load)

    @property
    def n_players(self) -> int:
        return self.alpha.shape[0]

    @property
    def n_resources(self) -> int:
        return self.alpha.shape[1]

    @property
    def is_symmetric(self) -> bool:
        return bool(np.all(self.alpha == self.alpha[0]))

    def lam(self, x):
        return self.lambda_fn(x)

    def __eq__(self, other):
        return (
            isinstance(other, GameSpec)
            and np.array_equal(self.alpha, other.alpha)
            and self.lambda_fn == other.lambda_fn
            and self.base_load == other.base_load
        )


@dataclass(frozen=True, eq=False)
class MixedProfile:
    """Row-stochastic ``N x M`` matrix of mixed strategies."""

    probs: np.ndarray
    atol: float = field(default=1e-9, repr=False)

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2:
            raise GameError("mixed profile must be a 2-D matrix")
        if np.any(p < 0) or np.any(p > 1):
            raise GameError("mixed profile entries must lie in [0, 1]")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > self.atol):
            raise GameError("mixed profile rows must sum to 1")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, n_players: int, n_resources: int) -> "MixedProfile":
        return cls(np.full((n_players, n_resources), 1.0 / n_resources))

    @classmethod
    def degenerate(cls, actions: Sequence[int], n_resources: int) -> "MixedProfile":
        actions = np.asarray(actions, dtype=int)
        p = np.zeros((actions.size, n_resources))
        p[np.arange(actions.size), actions] = 1.0
        return cls(p)

    @classmethod
    def concentrated(cls, n_players: int, n_resources: int, resource: int) -> "MixedProfile":
        return cls.degenerate([resource] * n_players, n_resources)

    @property
    def shape(self):
        return self.probs.shape

    def __eq__(self, other):
        return isinstance(other, MixedProfile) and np.array_equal(self.probs, other.probs)


def _probs(mixed) -> np.ndarray:
    return np.asarray(getattr(mixed, "probs", mixed), dtype=float)


def check_profile(game: GameSpec, actions) -> np.ndarray:
    """Validate an action profile and return it as an int array."""
    r = np.asarray(actions)
    if r.ndim != 1 or r.size != game.n_players:
        raise GameError(f"profile of length {r.size} does not match {game.n_players} players")
    if not np.issubdtype(r.dtype, np.integer):
        if not np.all(np.mod(r, 1) == 0):
            raise GameError("profile entries must be integers")
        r = r.astype(int)
    if np.any(r < 0) or np.any(r >= game.n_resources):
        raise GameError(f"profile entries must lie in [0, {game.n_resources})")
    return r.astype(np.intp, copy=False)


def _check_mixed(game: GameSpec, mixed) -> np.ndarray:
    p = _probs(mixed)
    if p.shape != game.alpha.shape:
        raise GameError(f"mixed profile shape {p.shape} does not match game {game.alpha.shape}")
    return p


def _check_index(game: GameSpec, player: int, resource: int | None = None):
    if not 0 <= player < game.n_players:
        raise GameError(f"player index {player} out of range")
    if resource is not None and not 0 <= resource < game.n_resources:
        raise GameError(f"resource index {resource} out of range")


# ---------------------------------------------------------------------------
# pure-profile quantities
# ---------------------------------------------------------------------------


def count_loads(game: GameSpec, profile) -> np.ndarray:
    r = check_profile(game, profile)
    return np.bincount(r, minlength=game.n_resources)


def aggregate_load(game: GameSpec, profile) -> float:
    r = check_profile(game, profile)
    # sequential in player order, matching the enumeration code paths bit for bit
    load = game.base_load
    for a in game.alpha[np.arange(game.n_players), r]:
        load += a
    return float(load)


def cost(game: GameSpec, player: int, profile) -> float:
    _check_index(game, player)
    r = check_profile(game, profile)
    return float(game.alpha[player, r[player]] * game.lam(aggregate_load(game, r)))


def costs(game: GameSpec, profile) -> np.ndarray:
    """Costs of every player at ``profile``, consistent with :func:`cost`."""
    r = check_profile(game, profile)
    return game.alpha[np.arange(game.n_players), r] * game.lam(aggregate_load(game, r))


def ordinal_potential(game: GameSpec, profile) -> float:
    return float(game.lam(aggregate_load(game, profile)))


def deviation_costs(game: GameSpec, profile) -> np.ndarray:
    """``D[i, a]``: cost to player ``i`` of playing ``a`` while the others keep ``profile``.

    Every entry of a row shares the same rounding of the others' load, so
    tied coefficients produce exactly tied costs.
    """
    r = check_profile(game, profile)
    idx = np.arange(game.n_players)
    own = game.alpha[idx, r]
    others = (game.base_load + own.sum()) - own
    loads = others[:, None] + game.alpha
    return game.alpha * game.lam(loads)


def is_nash(game: GameSpec, profile, epsilon: float = 0.0) -> bool:
    """True iff no unilateral deviation lowers any player's cost by more than ``epsilon``."""
    if epsilon < 0:
        raise GameError("epsilon must be >= 0")
    r = check_profile(game, profile)
    dev = deviation_costs(game, r)
    current = dev[np.arange(game.n_players), r]
    return bool(np.all(current[:, None] <= dev + epsilon))


# ---------------------------------------------------------------------------
# enumeration helpers
# ---------------------------------------------------------------------------


def _guard(n_terms: int):
    if n_terms > ENUMERATION_LIMIT:
        raise EnumerationLimitError(
            f"exact enumeration needs {n_terms} terms (limit {ENUMERATION_LIMIT})"
        )


def all_profiles(n_players: int, n_resources: int) -> np.ndarray:
    """Every pure profile as rows of a ``(M**N, N)`` array, lexicographic order."""
    _guard(n_resources**n_players)
    dtype = np.uint8 if n_resources <= 255 else np.int32
    if n_players == 0:
        return np.zeros((1, 0), dtype=dtype)
    grid = np.indices((n_resources,) * n_players, dtype=dtype)
    return grid.reshape(n_players, -1).T


def _conditional_potentials(game: GameSpec, p: np.ndarray, player: int) -> np.ndarray:
    """``E[lam(L) | player plays a]`` for every resource ``a`` (length-M vector)."""
    others = [j for j in range(game.n_players) if j != player]
    _guard(game.n_resources ** len(others))
    prof = all_profiles(len(others), game.n_resources)
    weight = np.ones(prof.shape[0])
    load = np.full((prof.shape[0], game.n_resources), game.base_load)
    for k, j in enumerate(others):
        weight = weight * p[j, prof[:, k]]
    # loads accumulate in player order so degenerate mixtures reproduce cost() exactly
    k = 0
    for j in range(game.n_players):
        if j == player:
            load = load + game.alpha[player][None, :]
        else:
            load = load + game.alpha[j, prof[:, k]][:, None]
            k += 1
    return weight @ game.lam(load)


def expected_cost(game: GameSpec, mixed, player: int, resource: int) -> float:
    """Exact expected cost of ``player`` pinned to ``resource`` while others mix."""
    p = _check_mixed(game, mixed)
    _check_index(game, player, resource)
    return float(game.alpha[player, resource] * _conditional_potentials(game, p, player)[resource])


def expected_costs(game: GameSpec, mixed) -> np.ndarray:
    """Matrix of all exact expected costs, shape ``N x M``."""
    p = _check_mixed(game, mixed)
    cond = np.array([_conditional_potentials(game, p, i) for i in range(game.n_players)])
    return game.alpha * cond


def potential_gradient(game: GameSpec, mixed) -> np.ndarray:
    """Analytic gradient of :func:`continuous_potential` in raw coordinates.

    Entry ``(i, a)`` is the expected ordinal potential given that ``i`` plays
    ``a``; for ``alpha[i, a] > 0`` it equals ``expected_cost / alpha[i, a]``.
    """
    p = _check_mixed(game, mixed)
    return np.array([_conditional_potentials(game, p, i) for i in range(game.n_players)])


def expected_cost_mc(game: GameSpec, mixed, player: int, resource: int,
                     samples: int, seed=None) -> tuple[float, float]:
    """Monte Carlo estimate of :func:`expected_cost` and its standard error."""
    if samples < 1:
        raise GameError("samples must be >= 1")
    p = _check_mixed(game, mixed)
    _check_index(game, player, resource)
    rng = np.random.default_rng(seed)
    acts = sample_actions(p, rng.random((samples, game.n_players)))
    acts[:, player] = resource
    loads = game.base_load + game.alpha[np.arange(game.n_players), acts].sum(axis=1)
    c = game.alpha[player, resource] * game.lam(loads)
    se = float(c.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return float(c.mean()), se


def sample_actions(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling: ``u[..., i]`` in [0, 1) picks player ``i``'s action.

    Zero-probability actions are never returned.
    """
    cdf = np.cumsum(p, axis=-1)[:, :-1]
    return (u[..., None] >= cdf).sum(axis=-1)


def continuous_potential(game: GameSpec, mixed) -> float:
    """Expected ordinal potential under ``mixed``.

    Evaluated as a multilinear polynomial of the raw matrix entries, so it is
    also defined off the simplex (finite-difference probing relies on this).
    """
    p = _check_mixed(game, mixed)
    n, m = p.shape
    _guard(m**n)
    prof = all_profiles(n, m)
    weight = np.ones(prof.shape[0])
    load = np.full(prof.shape[0], game.base_load)
    for j in range(n):
        col = prof[:, j]
        weight = weight * p[j, col]
        load = load + game.alpha[j, col]
    return float(weight @ game.lam(load))


# ---------------------------------------------------------------------------
# equilibria
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NECharacterization:
    """Pure equilibria are exactly the profiles supported on ``min_alpha_resources``."""

    min_alpha_resources: frozenset

    def contains(self, profile) -> bool:
        return all(int(a) in self.min_alpha_resources for a in profile)


def characterize_ne(game: GameSpec) -> NECharacterization:
    if not game.is_symmetric:
        raise GameError("NE characterization is only available for symmetric games")
    row = game.alpha[0]
    keep = np.flatnonzero(np.abs(row - row.min()) <= CHARACTERIZATION_ATOL)
    return NECharacterization(frozenset(int(a) for a in keep))


def enumerate_ne_bruteforce(game: GameSpec, chunk: int = 65536) -> list[tuple[int, ...]]:
    """All pure Nash equilibria by exhaustive scan (lexicographic order)."""
    n, m = game.n_players, game.n_resources
    prof = all_profiles(n, m)
    idx = np.arange(n)
    found = []
    for start in range(0, prof.shape[0], chunk):
        r = prof[start:start + chunk].astype(np.intp)
        own = game.alpha[idx, r]
        others = (game.base_load + own.sum(axis=1, keepdims=True)) - own
        dev = game.alpha[None, :, :] * game.lam(others[:, :, None] + game.alpha[None, :, :])
        current = np.take_along_axis(dev, r[:, :, None], axis=2)
        ok = np.all(current <= dev, axis=(1, 2))
        found.extend(tuple(int(a) for a in row) for row in r[ok])
    return found
