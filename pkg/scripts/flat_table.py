"""Closed-form constants of flat spheres next to the engine values.

    python3 scripts/flat_table.py --n0 1 2 3 --C0 0.5 1 3
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass

import numpy as np

from affine_calabi import equiaffine as eq
from affine_calabi.factors import Flat, flat_closed_forms


@dataclass(frozen=True)
class TableConfig:
    n0: tuple[int, ...] = (1, 2, 3)
    C0: tuple[float, ...] = (0.5, 1.0, 3.0)


def parse_args(argv=None) -> TableConfig:
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--n0", type=int, nargs="+", default=list(TableConfig.n0))
    p.add_argument("--C0", type=float, nargs="+", default=list(TableConfig.C0))
    a = p.parse_args(argv)
    return TableConfig(tuple(a.n0), tuple(a.C0))


def rows(cfg: TableConfig):
    for n0 in cfg.n0:
        for C0 in cfg.C0:
            cf = flat_closed_forms(n0, C0)
            inv = eq.invariants(Flat(n0, C0).chart(), np.zeros(n0))
            g_err = float(np.abs(inv.frame.g - cf["g"]).max() / np.abs(cf["g"]).max())
            J = cf["J"] if cf["J"] is not None else float("nan")
            yield n0, C0, cf["C"], cf["L1"], inv.L1, J, g_err


def main(argv=None) -> None:
    cfg = parse_args(argv)
    print(f"{'n0':>3} {'C0':>6} {'C':>12} {'L1 closed':>14} {'L1 engine':>14} {'J':>12} {'rel err g':>10}")
    for n0, C0, C, L1, L1e, J, g_err in rows(cfg):
        print(f"{n0:>3} {C0:>6g} {C:>12.9f} {L1:>14.10f} {L1e:>14.10f} {J:>12.9f} {g_err:>10.1e}")


if __name__ == "__main__":
    main()
