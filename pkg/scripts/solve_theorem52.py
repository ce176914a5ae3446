"""Solve the two-hole configuration and print the level verdicts.

    python scripts/solve_theorem52.py --out runs/theorem52
"""

import argparse
import json
import sys
from pathlib import Path

from maxsurf.cli import main as cli

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "theorem52.toml"


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/theorem52")
    p.add_argument("--config", default=str(CONFIG))
    args = p.parse_args(argv)
    out = Path(args.out)
    code = cli(["--out", str(out), "-v", "solve", args.config])
    conv = json.loads((out / "convergence.json").read_text())
    ver = json.loads((out / "verdicts.json").read_text())
    print(f"status={conv['status']}  sweeps={conv.get('sweeps')}  oracle agreement={conv['oracle']['agreement']:.2e}")
    print(f"end fit: t0={ver['end_fit']['t0']:+.4f}  beta={ver['end_fit']['beta']:+.2e}")
    for v in ver["verdicts"]:
        print(f"  {v['source']:24s} t={v['t']:+.4f}  {v['kind']}")
    return code


if __name__ == "__main__":
    sys.exit(main())
