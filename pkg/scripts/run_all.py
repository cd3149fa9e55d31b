"""Run every config in configs/ and print one PASS/FAIL line per check.

Usage: python3 scripts/run_all.py [configs_dir]
CSV files land where each config's [output] path points (results/ by default).
"""

import sys
import time
from pathlib import Path

from holofield import experiments as ex


def main(argv):
    root = Path(argv[1]) if len(argv) > 1 else Path(__file__).resolve().parent.parent / "configs"
    status = 0
    for path in sorted(root.glob("*.ini")):
        cfg = ex.load_config(path)
        t = time.perf_counter()
        rows, checks = ex.run_experiment(cfg)
        if cfg.output_path:
            out = Path(cfg.output_path)
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_bytes(ex.rows_to_csv(rows).encode("utf-8"))
        for c in checks:
            print(f"{'PASS' if c.passed else 'FAIL'} {cfg.experiment}: {c.detail} [{time.perf_counter() - t:.1f}s]")
            status = status or (0 if c.passed else 2)
    return status


if __name__ == "__main__":
    sys.exit(main(sys.argv))
