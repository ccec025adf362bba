#!/usr/bin/env python3
"""Run every config in corpus/ through the CLI machinery and summarize.

Artifacts land under corpus_runs/<config-name>/.  Exits nonzero if any
run fails a check or errors out.
"""

import json
import sys
from pathlib import Path

from ncpde import cli


def main() -> int:
    root = Path(__file__).resolve().parent.parent
    out_base = root / "corpus_runs"
    worst = 0
    for path in sorted((root / "corpus").glob("*.json")):
        config = json.loads(path.read_text(encoding="utf-8"))
        try:
            code = cli.run(config, out_dir=str(out_base / path.stem), quiet=True)
        except Exception as exc:  # noqa: BLE001 - summarize, do not crash the sweep
            print(f"{path.stem:24s} ERROR  {exc}")
            worst = max(worst, 1)
            continue
        status = {0: "ok", 2: "CHECKS FAILED"}.get(code, f"exit {code}")
        print(f"{path.stem:24s} {status}")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
