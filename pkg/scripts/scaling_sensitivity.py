#!/usr/bin/env python3
"""Show how one huge-dynamic-range feature wrecks unscaled 1-NN but not RF.

Multiplies the third-moment column of the shared FLY_LS channel by 2**27
(an exact power of two, i.e. a strictly increasing transform) and compares
4-fold x 10-repeat accuracies before and after. Tree partitions are
invariant under monotone transforms, so RF is unchanged; raw Euclidean
distances are dominated by the blown-up column, so 1-NN collapses to
whatever that single (deliberately non-discriminative) statistic can do.
"""

import argparse
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from phytopulse import (  # noqa: E402
    cross_validate,
    extract_features,
    generate_dataset,
    load_synth_spec,
    stratified_folds,
    with_scaled_feature,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--feature", default="fly_ls_third_moment")
    parser.add_argument("--factor", type=float, default=2.0**27)
    parser.add_argument("--repeats", type=int, default=10)
    parser.add_argument("--ntree", type=int, default=500)
    parser.add_argument("--seed", type=int, default=20260810)
    args = parser.parse_args()

    dataset = generate_dataset(load_synth_spec(REPO / "configs" / "reference_benchmark.json"))
    features = extract_features(dataset, "proposed")
    injected = with_scaled_feature(features, args.feature, args.factor)
    plan = stratified_folds(dataset.labels(), 4, args.repeats, seed=args.seed)

    specs = {
        "1-nn (unscaled)": {"kind": "knn", "k": 1, "scale": False},
        "rf": {"kind": "forest", "variant": "rf", "ntree": args.ntree},
    }
    print(f"scaling {args.feature} by {args.factor:g}\n")
    print(f"{'classifier':18s} {'baseline':>9s} {'injected':>9s} {'delta':>8s}")
    for role, (name, spec) in enumerate(specs.items()):
        base = cross_validate(dataset, "proposed", spec, plan, features=features,
                              role=role).average()
        after = cross_validate(dataset, "proposed", spec, plan, features=injected,
                               role=role).average()
        print(f"{name:18s} {base:9.4f} {after:9.4f} {after - base:+8.4f}")


if __name__ == "__main__":
    main()
