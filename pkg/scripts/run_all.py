#!/usr/bin/env python3
"""Validate and run every example config; outputs land in scripts/out/."""

import pathlib
import sys

from anisopriv.cli import main

CONFIG_DIR = pathlib.Path(__file__).resolve().parent / "configs"


def run() -> int:
    failures = []
    for cfg in sorted(CONFIG_DIR.glob("*.json")):
        print(f"== {cfg.name}")
        if main(["validate", str(cfg)]) != 0 or main(["run", str(cfg)]) != 0:
            failures.append(cfg.name)
    if failures:
        print("failed:", ", ".join(failures))
        return 1
    print(f"all {len(list(CONFIG_DIR.glob('*.json')))} configs ran")
    return 0


if __name__ == "__main__":
    sys.exit(run())
