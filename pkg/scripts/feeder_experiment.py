"""Synchronous learning on the default feeder at full scale.

Runs the 1500-player game for several seeds and reports when the average
mixed strategy on the cheapest station first reaches 0.99. Optionally writes
the mean-strategy curves of every run to a CSV file for plotting.

    python scripts/feeder_experiment.py --seeds 20 --curves out/mean_curves.csv
"""

import argparse
import time
from pathlib import Path

import numpy as np

from nscongestion.game import MixedProfile
from nscongestion.grid import build_congestion_game, default_network, reduce_grid
from nscongestion.learning import LearnerConfig, run
from nscongestion.outputs import fmt


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--players", type=int, default=1500)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--delta", type=float, default=0.5)
    ap.add_argument("--max-iterations", type=int, default=5000)
    ap.add_argument("--curves", type=Path, help="CSV of mean strategies per run and iteration")
    args = ap.parse_args()

    net = default_network()
    red = reduce_grid(net, None, args.players * net.pricing.rho_kwh)
    game = build_congestion_game(net, None, red, args.players)
    names = list(net.evcs_buses)
    best = int(np.argmin(red.alpha_tilde))
    print("alpha_tilde", {b: round(a, 4) for b, a in red.as_dict().items()})

    rows = []
    hits = []
    for seed in range(args.seeds):
        cfg = LearnerConfig.for_game(game, delta=args.delta, max_iterations=args.max_iterations,
                                     seed=seed, snapshot_stride=10**9)
        t0 = time.perf_counter()
        tr = run(game, cfg, MixedProfile.uniform(args.players, len(names)))
        hit = tr.first_reaching(best, 0.99)
        hits.append(hit)
        counts = np.bincount(tr.final_profile, minlength=len(names))
        print(f"seed {seed:2d}: mean on {names[best]} >= 0.99 at {hit}, converged_at "
              f"{tr.converged_at}, final counts {dict(zip(names, counts.tolist()))} "
              f"({time.perf_counter() - t0:.1f}s)")
        rows += [[seed, it, *(fmt(v) for v in m)] for it, m in enumerate(tr.mean_probs)]

    reached = [h for h in hits if h is not None]
    print(f"{len(reached)}/{len(hits)} runs reached 0.99; median {np.median(reached) if reached else None}")
    if args.curves:
        args.curves.parent.mkdir(parents=True, exist_ok=True)
        lines = ["seed,iteration," + ",".join(f"p_{n}" for n in names)]
        lines += [",".join(map(str, r)) for r in rows]
        args.curves.write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
