"""Generate and diagnose the catenoid and the three Riemann-type examples.

    python scripts/generate_examples.py --out runs/examples
"""

import argparse
import json
import sys
from pathlib import Path

from maxsurf.cli import main as cli

EXAMPLES = {
    "catenoid": ["catenoid", "--grid", "128x256"],
    "riemann_1.2": ["riemann", "--r", "1.2"],
    "riemann_1.5": ["riemann", "--r", "1.5"],
    "riemann_2.0": ["riemann", "--r", "2.0"],
}
HEIGHTS = {"catenoid": None, "riemann": "--heights=-0.8,-0.5,-0.2,0.2,0.5,0.8"}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/examples")
    args = p.parse_args(argv)
    root = Path(args.out)
    for name, cmd in EXAMPLES.items():
        surf, diag = root / name, root / name / "diagnose"
        if cli(["--out", str(surf), "generate", *cmd]) != 0:
            return 1
        extra = [h] if (h := HEIGHTS[cmd[0]]) else []
        if cli(["--out", str(diag), "diagnose", str(surf), *extra]) != 0:
            return 1
        rep = json.loads((diag / "report.json").read_text())
        print(f"{name:12s} max|u|={rep['max_abs_u']:.2e}  counts={rep['counts']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
