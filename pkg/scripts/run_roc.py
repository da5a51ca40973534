"""ROC curves for the three target Dopplers at the largest error case.

    python scripts/run_roc.py --out results/roc
"""
import argparse

from sparse_stap.harness import load_spec, preset, run_roc, write_manifest


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--spec")
    ap.add_argument("--trials", type=int)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out", default="results/roc")
    args = ap.parse_args()
    spec = load_spec(args.spec) if args.spec else preset("roc")
    if args.trials:
        spec = spec.with_overrides([f"num_trials={args.trials}"])
    rows = run_roc(spec, out_dir=args.out, workers=args.workers)
    write_manifest(args.out, spec, "roc", {"status": "complete"})
    for r in rows:
        print(f"f_d {r['doppler']:5.2f} {r['algorithm']:8s} pfa {r['pfa']:.3f} pd {r['pd']:.3f}")


if __name__ == "__main__":
    main()
