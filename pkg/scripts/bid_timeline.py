#!/usr/bin/env python3
"""Streamed-update poisoning timeline, including backdoor decay.

Pre-trains on half the training data, then streams the rest with a few
backdoor samples per batch; injection stops midway so the second half of the
series shows the backdoor washing out under clean updates.
"""

import argparse

from bdnet import data as D
from bdnet import masks, metrics, poison


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--per-batch", type=int, default=8)
    ap.add_argument("--horizon", type=int, default=160)
    ap.add_argument("--stop-at", type=int, default=80)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    ds = D.generate_synthetic(6, 250, 32, 3, rng_seed=3)
    splits = D.split(ds, D.SplitPlan(seed=3))
    resolved = poison.resolve_scenario("BID-FK", splits, args.seed,
                                       victim_arch="tiny-synthetic",
                                       need_mask_model=False, epochs=6, batch_size=64)
    mask = masks.generate_static(32, 32, 3, 2, (0, 0), 10.0)
    spec = poison.InjectionSpec(source=0, target=2, mask=mask,
                                per_batch=args.per_batch, batch_size=64,
                                horizon=args.horizon)
    base = metrics.accuracy(resolved.pretrained, splits.test)
    print(f"pre-trained accuracy {base:.2f}%; injecting until batch {args.stop_at}")
    _, report = poison.train_bid(resolved.pretrained, resolved.victim_train,
                                 resolved.injection_pool, spec, args.seed,
                                 test_set=splits.test, eval_every=20,
                                 inject_until=args.stop_at)
    print(f"{'batch':>6}{'success %':>12}{'accuracy %':>12}")
    for e in report.series:
        print(f"{e['batch']:>6}{e['attack_success']:>12.1f}{e['test_accuracy']:>12.2f}")


if __name__ == "__main__":
    main()
