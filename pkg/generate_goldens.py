"""Regenerate the golden CLI outputs under fixtures/.

Run from any directory with the project environment active; inputs and
outputs resolve against the repository root. Review the diff before
committing: a changed golden means a changed report.
"""

from pathlib import Path
from typing import Dict, List

import settings as cfg
from cli import app

GOLDEN_RUNS: Dict[str, List[str]] = {
    "fixtures/gold.panel.json": [
        "panel",
        "--src", "fixtures/gold.src",
        "--ref", "fixtures/gold.ref",
        "--hyp", "fixtures/gold.hyp",
        "--seed", "0",
    ],
    "fixtures/gold.baseline.json": [
        "baseline",
        "--ref", "fixtures/gold.ref",
        "--orders", "1,2",
        "--seed", "0",
    ],
}


def repo_root() -> Path:
    return Path(__file__).resolve().parent


def main() -> None:
    cfg.base_path = str(repo_root())
    for output, args in GOLDEN_RUNS.items():
        app([*args, "--out", output], standalone_mode=False)
        print(f"Wrote {repo_root() / output}")


if __name__ == "__main__":
    main()
