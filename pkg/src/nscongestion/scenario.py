"""Scenario files: what game to build, how to learn it, where to write results.

Example (inline game)::

    game:
      n_players: 3
      alpha: [1.0, 2.0, 3.0]          # one row (symmetric) or an N x M matrix
      lambda: {kind: affine, c0: 0.0, c1: 1.0}
      base_load: 0.0
    learner: {delta: 0.1, mode: sync, max_iterations: 10000,
              convergence_threshold: 0.999, seed: 0}
    initial_strategy: uniform          # or {concentrate: 2} or {matrix: [[...], ...]}
    outputs: {dir: out, trajectory: "trajectory_{run:03d}.csv",
              summary: summary.json, stride: 10}
    runs: 5

Example (smart-charging game)::

    game:
      grid: default                    # path to a grid scenario, or "default"
      n_players: 1500
      l_max_kw: 4500.0                 # optional, defaults to n_players * rho
      reduction: reduction.yaml        # optional output of ``reduce-grid``
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .game import GameError, GameSpec, MixedProfile, lambda_from_dict
from .grid import (
    GridNetwork,
    ReductionResult,
    build_congestion_game,
    default_scenario_path,
    load_network,
    reduce_grid,
)
from .grid.pricing import game_offset
from .game import Tabulated


class ConfigError(ValueError):
    """Invalid scenario file; ``line`` is 1-based when known."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.message = message
        self.path = path
        self.line = line
        where = ""
        if path:
            where = f"{path}:{line}: " if line else f"{path}: "
        super().__init__(where + message)


@dataclass
class GameConfig:
    n_players: int
    alpha: Optional[list] = None
    lambda_fn: Optional[dict] = None
    base_load: float = 0.0
    grid: Optional[str] = None
    l_max_kw: Optional[float] = None
    reduction: Optional[str] = None

    @property
    def is_grid(self) -> bool:
        return self.grid is not None

    def to_dict(self) -> dict:
        if self.is_grid:
            d = {"grid": self.grid, "n_players": self.n_players}
            if self.l_max_kw is not None:
                d["l_max_kw"] = self.l_max_kw
            if self.reduction is not None:
                d["reduction"] = self.reduction
            return d
        return {"n_players": self.n_players, "alpha": self.alpha,
                "lambda": self.lambda_fn, "base_load": self.base_load}


@dataclass
class LearnerParams:
    delta: float = 0.1
    mode: str = "synchronous"
    max_iterations: int = 10_000
    convergence_threshold: float = 0.999
    seed: int = 0
    c_max: Optional[float] = None


@dataclass
class Outputs:
    dir: str = "out"
    trajectory: str = "trajectory_{run:03d}.csv"
    summary: str = "summary.json"
    stride: int = 10


@dataclass
class ScenarioConfig:
    game: GameConfig
    learner: LearnerParams = field(default_factory=LearnerParams)
    initial_strategy: Any = "uniform"
    outputs: Outputs = field(default_factory=Outputs)
    runs: int = 1

    def to_dict(self) -> dict:
        learner = asdict(self.learner)
        if learner["c_max"] is None:
            del learner["c_max"]
        return {"game": self.game.to_dict(), "learner": learner,
                "initial_strategy": self.initial_strategy,
                "outputs": asdict(self.outputs), "runs": self.runs}

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


# ---------------------------------------------------------------------------
# parsing with line anchors
# ---------------------------------------------------------------------------


class _Reader:
    def __init__(self, root_node, source: Optional[str]):
        self.root = root_node
        self.source = source

    def line(self, path) -> Optional[int]:
        node = self.root
        if node is None:
            return None
        line = node.start_mark.line
        for key in path:
            nxt = None
            if isinstance(node, yaml.MappingNode):
                for k, v in node.value:
                    if k.value == key:
                        nxt = v
                        break
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
                nxt = node.value[key]
            if nxt is None:
                break
            node = nxt
            line = node.start_mark.line
        return line + 1

    def fail(self, path, message):
        raise ConfigError(f"{'.'.join(str(p) for p in path) or '<root>'}: {message}",
                          self.source, self.line(path))


def _get(reader, data, path, key, kind, default=...):
    if not isinstance(data, dict):
        reader.fail(path, "expected a mapping")
    if key not in data:
        if default is ...:
            reader.fail(path, f"missing required key {key!r}")
        return default
    value = data[key]
    try:
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            return value
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind is str:
            if not isinstance(value, str):
                raise TypeError
            return value
    except (TypeError, ValueError):
        reader.fail(path + [key], f"expected {kind.__name__}, got {value!r}")
    return value


_KNOWN = {
    "root": {"game", "learner", "initial_strategy", "outputs", "runs"},
    "game": {"n_players", "alpha", "lambda", "base_load", "grid", "l_max_kw", "reduction"},
    "learner": {"delta", "mode", "max_iterations", "convergence_threshold", "seed", "c_max"},
    "outputs": {"dir", "trajectory", "summary", "stride"},
}


def _check_keys(reader, data, path, allowed):
    for k in data:
        if k not in allowed:
            reader.fail(path + [k], f"unknown key {k!r}")


def parse_scenario(text: str, source: Optional[str] = None) -> ScenarioConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", source,
                          mark.line + 1 if mark else None) from None
    reader = _Reader(node, source)
    if not isinstance(data, dict):
        reader.fail([], "scenario must be a mapping")
    _check_keys(reader, data, [], _KNOWN["root"])

    g = _get(reader, data, [], "game", dict)
    _check_keys(reader, g, ["game"], _KNOWN["game"])
    n_players = _get(reader, g, ["game"], "n_players", int)
    if n_players < 1:
        reader.fail(["game", "n_players"], "must be >= 1")
    if "grid" in g:
        game = GameConfig(
            n_players=n_players,
            grid=_get(reader, g, ["game"], "grid", str),
            l_max_kw=_get(reader, g, ["game"], "l_max_kw", float, None),
            reduction=_get(reader, g, ["game"], "reduction", str, None),
        )
    else:
        alpha = _get(reader, g, ["game"], "alpha", list)
        if not isinstance(alpha, list) or not alpha:
            reader.fail(["game", "alpha"], "expected a non-empty list")
        lam = _get(reader, g, ["game"], "lambda", dict, {"kind": "affine", "c0": 0.0, "c1": 1.0})
        game = GameConfig(n_players=n_players, alpha=alpha, lambda_fn=lam,
                          base_load=_get(reader, g, ["game"], "base_load", float, 0.0))
        try:
            _inline_game(game)
        except (GameError, KeyError, TypeError, ValueError) as exc:
            reader.fail(["game"], str(exc))

    lp = _get(reader, data, [], "learner", dict, {})
    _check_keys(reader, lp, ["learner"], _KNOWN["learner"])
    learner = LearnerParams(
        delta=_get(reader, lp, ["learner"], "delta", float, 0.1),
        mode=_get(reader, lp, ["learner"], "mode", str, "synchronous"),
        max_iterations=_get(reader, lp, ["learner"], "max_iterations", int, 10_000),
        convergence_threshold=_get(reader, lp, ["learner"], "convergence_threshold", float, 0.999),
        seed=_get(reader, lp, ["learner"], "seed", int, 0),
        c_max=_get(reader, lp, ["learner"], "c_max", float, None),
    )
    if not 0 < learner.delta < 1:
        reader.fail(["learner", "delta"], "must lie in (0, 1)")
    if learner.mode not in ("sync", "async", "synchronous", "asynchronous"):
        reader.fail(["learner", "mode"], f"unknown mode {learner.mode!r}")
    if learner.max_iterations < 1:
        reader.fail(["learner", "max_iterations"], "must be >= 1")

    init = data.get("initial_strategy", "uniform")
    if not (init == "uniform"
            or (isinstance(init, dict) and len(init) == 1
                and ("concentrate" in init or "matrix" in init))):
        reader.fail(["initial_strategy"], "expected 'uniform', {concentrate: k} or {matrix: [...]}")

    op = _get(reader, data, [], "outputs", dict, {})
    _check_keys(reader, op, ["outputs"], _KNOWN["outputs"])
    outputs = Outputs(
        dir=_get(reader, op, ["outputs"], "dir", str, "out"),
        trajectory=_get(reader, op, ["outputs"], "trajectory", str, "trajectory_{run:03d}.csv"),
        summary=_get(reader, op, ["outputs"], "summary", str, "summary.json"),
        stride=_get(reader, op, ["outputs"], "stride", int, 10),
    )
    if outputs.stride < 1:
        reader.fail(["outputs", "stride"], "must be >= 1")
    runs = _get(reader, data, [], "runs", int, 1)
    if runs < 1:
        reader.fail(["runs"], "must be >= 1")
    return ScenarioConfig(game, learner, init, outputs, runs)


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read: {exc.strerror}", str(path)) from None
    return parse_scenario(text, str(path))


# ---------------------------------------------------------------------------
# building
# ---------------------------------------------------------------------------


def _inline_game(cfg: GameConfig) -> GameSpec:
    alpha = np.asarray(cfg.alpha, dtype=float)
    lam = lambda_from_dict(cfg.lambda_fn)
    if alpha.ndim == 1:
        return GameSpec.symmetric(alpha, cfg.n_players, lam, cfg.base_load)
    if alpha.shape[0] != cfg.n_players:
        raise GameError(f"alpha has {alpha.shape[0]} rows for {cfg.n_players} players")
    return GameSpec(alpha, lam, cfg.base_load)


def resolve(path: str, base_dir) -> Path:
    if path == "default":
        return default_scenario_path()
    p = Path(path)
    return p if p.is_absolute() else Path(base_dir) / p


@dataclass
class BuiltGame:
    game: GameSpec
    resource_names: list
    network: Optional[GridNetwork] = None
    reduction: Optional[ReductionResult] = None


def build_game(cfg: GameConfig, base_dir=".") -> BuiltGame:
    if not cfg.is_grid:
        game = _inline_game(cfg)
        return BuiltGame(game, [f"r{a}" for a in range(game.n_resources)])
    net = load_network(resolve(cfg.grid, base_dir))
    if net.pricing is None:
        raise ConfigError("grid scenario has no pricing section", cfg.grid)
    table = None
    if cfg.reduction is not None:
        reduction, table = load_reduction(resolve(cfg.reduction, base_dir), net)
    else:
        l_max = cfg.l_max_kw if cfg.l_max_kw is not None else cfg.n_players * net.pricing.rho_kwh
        reduction = reduce_grid(net, net.pricing, l_max)
    upper = cfg.n_players * net.pricing.rho_kwh * float(reduction.alpha_tilde.max()) \
        + game_offset(net, reduction)
    if table is not None and table.xs[-1] != upper:
        table = None
    game = build_congestion_game(net, net.pricing, reduction, cfg.n_players, table=table)
    return BuiltGame(game, list(net.evcs_buses), net, reduction)


def initial_profile(spec, n_players: int, n_resources: int) -> MixedProfile:
    if spec == "uniform":
        return MixedProfile.uniform(n_players, n_resources)
    if "concentrate" in spec:
        return MixedProfile.concentrated(n_players, n_resources, int(spec["concentrate"]))
    return MixedProfile(np.asarray(spec["matrix"], dtype=float))


# ---------------------------------------------------------------------------
# reduction files
# ---------------------------------------------------------------------------


def reduction_table(net: GridNetwork, reduction: ReductionResult) -> Tabulated:
    """The lam table of the game whose maximal EV demand equals ``l_max_kw``."""
    from .grid import lambda_table

    upper = reduction.l_max_kw * float(reduction.alpha_tilde.max()) + game_offset(net, reduction)
    return lambda_table(net, net.pricing, upper)


def reduction_to_dict(reduction: ReductionResult, table: Tabulated, scenario: str) -> dict:
    return {
        "scenario": scenario,
        "l_max_kw": reduction.l_max_kw,
        "alpha_tilde": reduction.as_dict(),
        "objective_value": reduction.objective_value,
        "lambda_table": {"xs": table.xs.tolist(), "ys": table.ys.tolist()},
    }


def load_reduction(path, net: GridNetwork):
    data = yaml.safe_load(Path(path).read_text())
    try:
        alpha = [float(data["alpha_tilde"][b]) for b in net.evcs_buses]
        reduction = ReductionResult(alpha, float(data["objective_value"]),
                                    float(data["l_max_kw"]), net)
        table = Tabulated(data["lambda_table"]["xs"], data["lambda_table"]["ys"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed reduction file (missing {exc})", str(path)) from None
    return reduction, table
