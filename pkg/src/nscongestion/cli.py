"""Command line entry point: ``nscongestion {simulate,find-ne,reduce-grid,powerflow}``."""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .game import (
    ENUMERATION_LIMIT,
    GameError,
    characterize_ne,
    enumerate_ne_bruteforce,
    is_nash,
)
from .grid import (
    NetworkError,
    PowerFlowError,
    ReductionError,
    default_scenario_path,
    load_network,
    reduce_grid,
    solve_power_flow,
)
from .learning import LearnerConfig, compute_cmax, run
from .outputs import dumps_summary, fmt, trajectory_csv
from .scenario import (
    ConfigError,
    build_game,
    initial_profile,
    load_scenario,
    reduction_table,
    reduction_to_dict,
    resolve,
)


def _echo(args, *parts):
    if not args.quiet:
        print(*parts)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _run_summary(k, seed, traj, game, names, ne_set):
    hist = Counter(traj.final_profile)
    modal = int(np.argmax(traj.mean_probs[-1]))
    on_min = None
    if ne_set is not None:
        on_min = sum(hist[a] for a in ne_set) / game.n_players
    return {
        "run": k,
        "seed": seed,
        "converged_at": traj.converged_at,
        "iterations": traj.iterations,
        "final_mean_probs": {names[a]: float(v) for a, v in enumerate(traj.mean_probs[-1])},
        "final_profile_histogram": {names[a]: hist.get(a, 0) for a in range(game.n_resources)},
        "modal_resource": names[modal],
        "fraction_on_min_alpha": on_min,
        "is_nash": is_nash(game, traj.final_profile, 0.0),
    }


def cmd_simulate(args) -> int:
    cfg = load_scenario(args.config)
    if args.seed is not None:
        cfg.learner.seed = args.seed
    if args.mode is not None:
        cfg.learner.mode = args.mode
    base_dir = Path(args.config).resolve().parent
    built = build_game(cfg.game, base_dir)
    game, names = built.game, built.resource_names
    c_max = cfg.learner.c_max if cfg.learner.c_max is not None else compute_cmax(game)
    init = initial_profile(cfg.initial_strategy, game.n_players, game.n_resources)
    out_dir = Path(args.out_dir) if args.out_dir else base_dir / cfg.outputs.dir
    out_dir.mkdir(parents=True, exist_ok=True)
    ne_set = sorted(characterize_ne(game).min_alpha_resources) if game.is_symmetric else None

    def one(k):
        seed = cfg.learner.seed + k
        lc = LearnerConfig(
            delta=cfg.learner.delta, c_max=c_max, mode=cfg.learner.mode,
            max_iterations=cfg.learner.max_iterations,
            convergence_threshold=cfg.learner.convergence_threshold,
            seed=seed, snapshot_stride=cfg.outputs.stride)
        traj = run(game, lc, init, workers=args.workers)
        path = out_dir / cfg.outputs.trajectory.format(run=k, seed=seed)
        path.write_text(trajectory_csv(traj, names))
        return _run_summary(k, seed, traj, game, names, ne_set)

    if args.jobs > 1 and cfg.runs > 1:
        with ThreadPoolExecutor(args.jobs) as pool:
            runs = list(pool.map(one, range(cfg.runs)))
    else:
        runs = [one(k) for k in range(cfg.runs)]

    hist = Counter()
    for r in runs:
        hist.update(r["final_profile_histogram"])
    summary = {
        "scenario": cfg.to_dict(),
        "resources": names,
        "c_max": c_max,
        "min_alpha_resources": None if ne_set is None else [names[a] for a in ne_set],
        "runs": runs,
        "aggregate": {
            "final_profile_histogram": {n: hist.get(n, 0) for n in names},
            "converged_runs": sum(r["converged_at"] is not None for r in runs),
            "nash_runs": sum(r["is_nash"] for r in runs),
            "modal_on_min_alpha_fraction": (
                None if ne_set is None
                else sum(r["modal_resource"] in [names[a] for a in ne_set] for r in runs) / len(runs)),
        },
    }
    if built.reduction is not None:
        summary["alpha_tilde"] = built.reduction.as_dict()
    (out_dir / cfg.outputs.summary).write_text(dumps_summary(summary))
    for r in runs:
        _echo(args, f"run {r['run']} seed {r['seed']}: converged_at={r['converged_at']} "
                    f"modal={r['modal_resource']} nash={r['is_nash']}")
    _echo(args, f"summary written to {out_dir / cfg.outputs.summary}")
    return 0


# ---------------------------------------------------------------------------
# find-ne
# ---------------------------------------------------------------------------


def find_ne_report(game, names) -> dict:
    n, m = game.n_players, game.n_resources
    report = {"n_players": n, "n_resources": m, "symmetric": game.is_symmetric}
    char = None
    if game.is_symmetric:
        char = characterize_ne(game)
        report["characterization"] = {
            "min_alpha_resources": [names[a] for a in sorted(char.min_alpha_resources)]}
    else:
        report["characterization"] = None
        report["characterization_notice"] = "unavailable: heterogeneous coefficients"
    if m**n <= ENUMERATION_LIMIT:
        found = enumerate_ne_bruteforce(game)
        brute = {"performed": True, "equilibria": len(found)}
        if char is not None:
            k = len(char.min_alpha_resources)
            brute["agrees"] = (all(char.contains(r) for r in found) and len(found) == k**n)
        else:
            brute["profiles"] = [list(r) for r in found[:100]]
        report["bruteforce"] = brute
    else:
        report["bruteforce"] = {
            "performed": False,
            "notice": f"skipped: {m}^{n} profiles exceed the enumeration limit {ENUMERATION_LIMIT}"}
    return report


def cmd_find_ne(args) -> int:
    cfg = load_scenario(args.config)
    base_dir = Path(args.config).resolve().parent
    built = build_game(cfg.game, base_dir)
    report = find_ne_report(built.game, built.resource_names)
    text = json.dumps(report, indent=2) + "\n"
    out_dir = Path(args.out_dir) if args.out_dir else base_dir / cfg.outputs.dir
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "ne_report.json").write_text(text)
    _echo(args, text.rstrip())
    return 0


# ---------------------------------------------------------------------------
# grid commands
# ---------------------------------------------------------------------------


def _grid_path(args) -> Path:
    return resolve(args.config, Path.cwd()) if args.config else default_scenario_path()


def cmd_reduce_grid(args) -> int:
    path = _grid_path(args)
    net = load_network(path)
    if net.pricing is None:
        raise ConfigError("grid scenario has no pricing section", str(path))
    if args.l_max is not None:
        l_max = args.l_max
    elif args.players is not None:
        l_max = args.players * net.pricing.rho_kwh
    else:
        raise ConfigError("give --l-max or --players")
    reduction = reduce_grid(net, net.pricing, l_max)
    table = reduction_table(net, reduction)
    data = reduction_to_dict(reduction, table, str(path))
    out = Path(args.out) if args.out else Path(args.out_dir or ".") / "reduction.yaml"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(yaml.safe_dump(data, sort_keys=False))
    for bus, a in reduction.as_dict().items():
        _echo(args, f"alpha_tilde[{bus}] = {fmt(a)}")
    _echo(args, f"objective = {fmt(reduction.objective_value)}")
    _echo(args, f"written to {out}")
    return 0


def _parse_loads(items):
    loads = {}
    for item in items or []:
        bus, _, kw = item.partition("=")
        if not _:
            raise ConfigError(f"--load expects BUS=KW, got {item!r}")
        try:
            loads[bus] = float(kw)
        except ValueError:
            raise ConfigError(f"--load value {kw!r} is not a number") from None
    return loads


def cmd_powerflow(args) -> int:
    net = load_network(_grid_path(args))
    loads = net.base_loads()
    loads.update(_parse_loads(args.load))
    sol = solve_power_flow(net, loads)
    base = net.power_base_mva
    print(f"iterations {sol.iterations}")
    print(f"residual_pu {fmt(sol.residual)}")
    s0 = sol.head_apparent_power * base
    print(f"head_power_mva {fmt(s0.real)} {fmt(s0.imag)} |S0| {fmt(abs(s0))}")
    for bus, v in sol.voltages.items():
        print(f"voltage {bus} {fmt(abs(v))} {fmt(np.degrees(np.angle(v)))}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nscongestion", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="scenario / grid file")
        p.add_argument("--out-dir", help="output directory")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("simulate", help="run reward-inaction learning")
    common(p)
    p.add_argument("--seed", type=int, help="override learner.seed (seed base)")
    p.add_argument("--mode", choices=["sync", "async"])
    p.add_argument("--jobs", type=int, default=1, help="concurrent runs")
    p.add_argument("--workers", type=int, default=1, help="threads per synchronous update")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("find-ne", help="characterize and enumerate pure equilibria")
    common(p)
    p.set_defaults(func=cmd_find_ne)

    p = sub.add_parser("reduce-grid", help="fit the transformer-bus reduction")
    common(p, config_required=False)
    p.add_argument("--l-max", type=float, help="upper bound of the EV demand sweep (kW)")
    p.add_argument("--players", type=int, help="set l_max to players * rho")
    p.add_argument("--out", help="reduction output file")
    p.set_defaults(func=cmd_reduce_grid)

    p = sub.add_parser("powerflow", help="one-shot power flow at base loads")
    common(p, config_required=False)
    p.add_argument("--load", action="append", metavar="BUS=KW", help="override a bus load")
    p.set_defaults(func=cmd_powerflow)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NetworkError, yaml.YAMLError) as exc:
        print(f"error: grid scenario: {exc}", file=sys.stderr)
        return 2
    except PowerFlowError as exc:
        print(f"error: power flow: {exc}", file=sys.stderr)
        return 1
    except ReductionError as exc:
        print(f"error: grid reduction: {exc}", file=sys.stderr)
        return 1
    except (GameError, ValueError) as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
