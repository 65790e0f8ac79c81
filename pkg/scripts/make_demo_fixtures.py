#!/usr/bin/env python3
"""Write the synthetic demo dataset plus its replay fixtures.

The result is a Cornell-layout root that `vlad eval` and `vlad run` can
consume offline with `--clients replay:<root>/fixtures`. The default
trio covers the identity case, a rotated-and-depth-scaled case, and an
unbroken-rod failure case; --extra adds more solvable variants.
"""

import argparse
import math
import sys

from vlad.synthetic import batch_cases, default_cases, write_demo_root


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo", help="dataset root to create")
    parser.add_argument(
        "--extra", type=int, default=0,
        help="additional solvable variants beyond the default trio",
    )
    args = parser.parse_args(argv)

    cases = batch_cases(args.extra) if args.extra else default_cases()
    manifest = write_demo_root(args.out, cases)
    for sample_id, expected in manifest:
        if expected is None:
            print(f"{sample_id}: no viable grasp by construction")
        else:
            cu, cv = expected.center
            print(
                f"{sample_id}: center ({cu:.1f}, {cv:.1f}),"
                f" angle {math.degrees(expected.angle):.1f} deg,"
                f" width {expected.width:.1f} px"
            )
    print(f"wrote {len(manifest)} samples under {args.out}/")
    print(f"try: vlad eval --dataset cornell --root {args.out}"
          f" --out report.json --delta 0.1 --epsilon 0.03")
    return 0


if __name__ == "__main__":
    sys.exit(main())
