"""Run the full harness on a workspace: pipeline, scaling grid and all three sweeps.

    python scripts/run_experiments.py --config configs/fixtures.json --workspace runs/fixtures

With the mock backends the scores only exercise the plumbing; point
``--backend http --endpoint ...`` at a served model to get real numbers.
"""

import argparse
import shutil
import sys
import time
from pathlib import Path

from ercgen.cli import main as ercgen


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/mini.json")
    ap.add_argument("--workspace", default="runs/mini")
    ap.add_argument("--backend", choices=["mock_echo", "mock_rule", "http"])
    ap.add_argument("--endpoint")
    ap.add_argument("--skip-sweeps", action="store_true")
    args = ap.parse_args()

    ws = Path(args.workspace)
    ws.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(args.config, ws / "ercgen.json")
    common = ["-w", str(ws)]
    if args.backend:
        common += ["--backend", args.backend]
    if args.endpoint:
        common += ["--endpoint", args.endpoint]

    steps = [["pipeline"], ["scale-experiment", "--evaluate"]]
    if not args.skip_sweeps:
        steps += [["sweep", kind, "--dataset", "UIME", "--evaluate"] for kind in ("window", "alpha", "pairing")]
    for step in steps:
        t0 = time.perf_counter()
        code = ercgen([step[0], *common, *step[1:]])
        print(f"[{' '.join(step)}] exit {code} in {time.perf_counter() - t0:.1f}s", file=sys.stderr)
        if code not in (0, 3):
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
