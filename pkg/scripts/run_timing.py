"""Per-solve and per-iteration wall time of JIE-ADM against plain ADM.

    python scripts/run_timing.py --out results/timing
"""
import argparse

from sparse_stap.harness import preset, run_timing, write_manifest


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--out", default="results/timing")
    args = ap.parse_args()
    spec = preset("desk").with_overrides([f"timing_repeats={args.repeats}"])
    rows = run_timing(spec, args.out)
    write_manifest(args.out, spec, "timing", {"status": "complete"})
    by = {(r["columns"], r["algorithm"]): r for r in rows}
    for cols in sorted({r["columns"] for r in rows}):
        j, a = by[(cols, "jie-adm")], by[(cols, "adm")]
        print(f"{cols:5d} columns  jie-adm {j['mean_iter_ms']:.3f} ms/it  adm {a['mean_iter_ms']:.3f} ms/it"
              f"  ratio {j['mean_iter_ms'] / a['mean_iter_ms']:.3f}")


if __name__ == "__main__":
    main()
