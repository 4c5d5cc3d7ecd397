"""Verify a seeded random family of compositions and write a JSON summary.

    python3 scripts/verify_family.py --count 25 --seed 2024 --output family.json
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from affine_calabi.specio import dumps, spec_to_dict
from affine_calabi.verify import random_spec, verify_parallel, verify_spec


@dataclass(frozen=True)
class FamilyConfig:
    count: int = 25
    seed: int = 2024
    samples: int = 10
    tol: float = 1e-8
    max_dim: int = 8
    output: Path | None = None


def parse_args(argv=None) -> FamilyConfig:
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--count", type=int, default=FamilyConfig.count)
    p.add_argument("--seed", type=int, default=FamilyConfig.seed)
    p.add_argument("--samples", type=int, default=FamilyConfig.samples)
    p.add_argument("--tol", type=float, default=FamilyConfig.tol)
    p.add_argument("--max-dim", type=int, default=FamilyConfig.max_dim)
    p.add_argument("--output", type=Path, default=None)
    a = p.parse_args(argv)
    return FamilyConfig(a.count, a.seed, a.samples, a.tol, a.max_dim, a.output)


def run(cfg: FamilyConfig) -> dict:
    rng = np.random.default_rng(cfg.seed)
    entries = []
    for _ in range(cfg.count):
        spec = random_spec(rng, cfg.max_dim)
        report = verify_spec(spec, cfg.samples, cfg.tol, seed=cfg.seed)
        parallel = verify_parallel(spec, cfg.tol)
        entries.append({
            "spec": spec_to_dict(spec),
            "label": spec.label,
            "n": spec.n,
            "passed": report.passed and parallel.passed,
            "failures": [c.name for c in report.failures() + parallel.failures()],
            "worst_rel": {c.name: c.max_rel_residual for c in report.checks if c.status != "skipped"},
        })
        status = "PASS" if entries[-1]["passed"] else "FAIL"
        print(f"{status} {spec.label:<28} n={spec.n}", file=sys.stderr)
    return {"seed": cfg.seed, "count": cfg.count, "passed": all(e["passed"] for e in entries), "specs": entries}


def main(argv=None) -> int:
    cfg = parse_args(argv)
    summary = run(cfg)
    text = dumps(summary) + "\n"
    if cfg.output is None:
        sys.stdout.write(text)
    else:
        cfg.output.write_text(text)
    return 0 if summary["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
