"""Synchronous versus asynchronous updates on a reduced-size feeder game.

With one player updating per iteration the asynchronous learner needs far
more iterations; this compares the median iterations to convergence.

    python scripts/async_proxy.py --players 50 --seeds 10
"""

import argparse

import numpy as np

from nscongestion.game import MixedProfile
from nscongestion.grid import build_congestion_game, default_network, reduce_grid
from nscongestion.learning import LearnerConfig, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--players", type=int, default=50)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--delta", type=float, default=0.5)
    args = ap.parse_args()

    net = default_network()
    red = reduce_grid(net, None, args.players * net.pricing.rho_kwh)
    game = build_congestion_game(net, None, red, args.players)
    init = MixedProfile.uniform(args.players, game.n_resources)
    medians = {}
    for mode, cap in (("sync", 100_000), ("async", 5_000_000)):
        its = []
        for seed in range(args.seeds):
            cfg = LearnerConfig.for_game(game, delta=args.delta, mode=mode, max_iterations=cap,
                                         seed=seed, snapshot_stride=10**9)
            tr = run(game, cfg, init)
            its.append(tr.converged_at if tr.converged_at is not None else cap)
        medians[mode] = float(np.median(its))
        print(f"{mode:5s}: iterations {its}, median {medians[mode]:.0f}")
    print(f"ratio async/sync = {medians['async'] / medians['sync']:.1f}")


if __name__ == "__main__":
    main()
