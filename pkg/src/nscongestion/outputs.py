"""Trajectory CSV and summary serialization.

Trajectory columns: ``iteration, player, p_<resource>..., action, cost``.
``player`` is a player index or ``mean``. Mean rows appear at every iteration
(mean strategy, mean realized cost); per-player rows appear every ``stride``
iterations. ``action`` and ``cost`` are empty at the terminal iteration, where
no action was drawn. Numbers use 12 significant digits.
"""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from .learning import Trajectory


def fmt(x) -> str:
    return format(float(x), ".12g")


def round12(x) -> float:
    return float(fmt(x))


def trajectory_rows(traj: Trajectory, resource_names) -> list:
    header = ["iteration", "player"] + [f"p_{r}" for r in resource_names] + ["action", "cost"]
    snaps = {it: m.probs for it, m in traj.snapshots}
    realized = {it: (acts, costs) for it, acts, costs in traj.realized}
    rows = [header]
    for it in range(traj.iterations + 1):
        mean_cost = fmt(traj.mean_costs[it]) if it < traj.iterations else ""
        rows.append([str(it), "mean"] + [fmt(v) for v in traj.mean_probs[it]] + ["", mean_cost])
        if it in snaps:
            probs = snaps[it]
            acts, costs = realized.get(it, (None, None))
            for i, row in enumerate(probs):
                a = str(int(acts[i])) if acts is not None else ""
                c = fmt(costs[i]) if costs is not None else ""
                rows.append([str(it), str(i)] + [fmt(v) for v in row] + [a, c])
    return rows


def trajectory_csv(traj: Trajectory, resource_names) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(trajectory_rows(traj, resource_names))
    return buf.getvalue()


def parse_trajectory_csv(text: str) -> dict:
    """Parse a trajectory file into ``{"resources", "mean", "players"}`` tables.

    ``mean`` maps iteration -> (probs, cost or None); ``players`` maps
    (iteration, player) -> (probs, action or None, cost or None).
    """
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    resources = [h[2:] for h in header[2:-2]]
    m = len(resources)
    mean, players = {}, {}
    for row in reader:
        it = int(row[0])
        probs = np.array([float(v) for v in row[2:2 + m]])
        action = int(row[2 + m]) if row[2 + m] else None
        cost = float(row[3 + m]) if row[3 + m] else None
        if row[1] == "mean":
            mean[it] = (probs, cost)
        else:
            players[(it, int(row[1]))] = (probs, action, cost)
    return {"resources": resources, "mean": mean, "players": players}


def write_trajectory_from_parsed(parsed: dict) -> str:
    """Inverse of :func:`parse_trajectory_csv` (used for round-trip checks)."""
    res = parsed["resources"]
    rows = [["iteration", "player"] + [f"p_{r}" for r in res] + ["action", "cost"]]
    by_it: dict = {}
    for (it, i), val in parsed["players"].items():
        by_it.setdefault(it, []).append((i, val))
    for it in sorted(parsed["mean"]):
        probs, cost = parsed["mean"][it]
        rows.append([str(it), "mean"] + [fmt(v) for v in probs] + ["", "" if cost is None else fmt(cost)])
        for i, (p, a, c) in sorted(by_it.get(it, [])):
            rows.append([str(it), str(i)] + [fmt(v) for v in p]
                        + ["" if a is None else str(a), "" if c is None else fmt(c)])
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _round_tree(obj):
    if isinstance(obj, float):
        return round12(obj)
    if isinstance(obj, dict):
        return {k: _round_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_tree(v) for v in obj]
    return obj


def dumps_summary(summary: dict) -> str:
    return json.dumps(_round_tree(summary), indent=2) + "\n"
