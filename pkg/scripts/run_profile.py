"""Reconstruct the CUT profile of one realization per error case.

    python scripts/run_profile.py --preset fig3 --out results/fig3
"""
import argparse

from sparse_stap.harness import load_spec, preset, run_profile_experiment, write_manifest


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--spec")
    ap.add_argument("--preset", default="fig3")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", default="results/profile")
    args = ap.parse_args()
    spec = load_spec(args.spec) if args.spec else preset(args.preset)
    if args.seed is not None:
        spec = spec.with_overrides([f"base_seed={args.seed}"])
    profiles = run_profile_experiment(spec, args.out)
    write_manifest(args.out, spec, "profile", {"status": "complete"})
    for (case, alg), prof in sorted(profiles.items()):
        print(f"case {case} {alg:8s} nonzeros {int((abs(prof) > 0).sum()):5d}  peak {abs(prof).max():.3g}")


if __name__ == "__main__":
    main()
