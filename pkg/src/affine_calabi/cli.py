"""Command line interface.

    affine-calabi compose    --spec S.json
    affine-calabi invariants --spec S.json [--point 0.1,0.2,...]
    affine-calabi verify     --spec S.json [--samples 10 --tol 1e-8 --seed 42]
    affine-calabi laws       --spec S.json

Exit codes: 0 all checks pass, 1 some check failed, 2 bad arguments,
3 unreadable or invalid spec.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import equiaffine as eq
from .calabi import compose, layout, normalization_constants, structure_constant
from .specio import SpecError, dumps, load_spec
from .verify import (
    VerificationReport,
    verify_associativity,
    verify_commutativity,
    verify_equivalence_triple,
    verify_spec,
)

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_SPEC = 0, 1, 2, 3
LAW_TOL = {"commutativity": 1e-12, "associativity": 1e-12, "equivalence": 1e-10}


@dataclass(frozen=True)
class CliConfig:
    command: str
    spec_path: Path
    output_path: Path | None = None
    samples: int = 10
    tol: float | None = None
    seed: int = 42
    format: str = "json"
    points: tuple[tuple[float, ...], ...] = ()


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 already; keep the message on stderr
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _point(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad point {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="affine-calabi", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_text in (("compose", "structure constants of a composition"),
                            ("invariants", "engine invariants at chart points"),
                            ("verify", "closed forms against the engine at random points"),
                            ("laws", "commutativity, associativity and equivalence witnesses")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--spec", required=True, type=Path, help="composition spec (JSON)")
        p.add_argument("--output", type=Path, default=None, help="write the report here instead of stdout")
        p.add_argument("--samples", type=int, default=10)
        p.add_argument("--tol", type=float, default=None, help="tolerance (default 1e-8; laws use their own)")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--point", type=_point, action="append", default=[],
                       help="comma-separated chart point (invariants only; repeatable)")
    return parser


def parse_config(argv: Sequence[str]) -> CliConfig:
    args = build_parser().parse_args(list(argv))
    if args.samples < 1:
        raise _UsageError("--samples must be >= 1")
    if args.tol is not None and not args.tol > 0:
        raise _UsageError("--tol must be positive")
    return CliConfig(args.command, args.spec, args.output, args.samples, args.tol, args.seed, args.format,
                     tuple(args.point))


def _emit(text: str, cfg: CliConfig) -> None:
    if cfg.output_path is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        cfg.output_path.write_text(text if text.endswith("\n") else text + "\n")


def _flat_rows(data: dict, prefix: str = "") -> list[tuple[str, object]]:
    rows = []
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            rows.extend(_flat_rows(value, name + "."))
        elif isinstance(value, (list, tuple, np.ndarray)):
            rows.append((name, " ".join(f"{float(v):.17g}" for v in np.ravel(value))))
        elif isinstance(value, float):
            rows.append((name, f"{value:.17g}"))
        else:
            rows.append((name, value))
    return rows


def _csv(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _render_reports(reports: Sequence[VerificationReport], cfg: CliConfig) -> str:
    if cfg.format == "csv":
        rows = [(r.spec_id, c.name, f"{c.max_abs_residual:.17g}", f"{c.max_rel_residual:.17g}",
                 f"{c.tolerance:.17g}", c.status) for r in reports for c in r.checks]
        return _csv(("report", "check", "max_abs_residual", "max_rel_residual", "tolerance", "status"), rows)
    payload = reports[0].to_dict() if len(reports) == 1 else {
        "passed": all(r.passed for r in reports), "reports": [r.to_dict() for r in reports]}
    return dumps(payload)


def _summary(reports: Sequence[VerificationReport]) -> None:
    for r in reports:
        failed = r.failures()
        if failed:
            names = ", ".join(c.name for c in failed)
            print(f"FAIL {r.spec_id}: {len(failed)} of {len(r.checks)} checks failed ({names})", file=sys.stderr)
        else:
            print(f"PASS {r.spec_id}: {len(r.checks)} checks", file=sys.stderr)


def _cmd_compose(spec, cfg: CliConfig) -> int:
    lay = layout(spec)
    C = structure_constant(spec)
    c, cp = normalization_constants(spec)
    data = {
        "label": spec.label, "K": lay.K, "dims": list(lay.dims), "n": lay.n, "ambient_dim": lay.n + 1,
        "r": spec.r, "s": spec.s, "f": list(lay.f), "C": C, "L1": -1.0 / (lay.f[-1] * C),
        "normalization": {"c": c, "c_prime": cp},
    }
    _emit(_csv(("key", "value"), _flat_rows(data)) if cfg.format == "csv" else dumps(data), cfg)
    return EXIT_OK


def _cmd_invariants(spec, cfg: CliConfig) -> int:
    chart = compose(spec)
    if cfg.points:
        points = np.array(cfg.points, dtype=float)
        if points.shape[1:] != (chart.dim,):
            raise _UsageError(f"--point needs {chart.dim} comma-separated coordinates")
    else:
        points = chart.sample(np.random.default_rng(cfg.seed), cfg.samples)
    out = []
    status = EXIT_OK
    for u in points:
        try:
            inv = eq.invariants(chart, u)
        except eq.EquiaffineError as exc:
            out.append({"point": u, "error": f"{type(exc).__name__}: {exc}"})
            status = EXIT_FAILED
            continue
        out.append({"point": u, "L1": inv.L1, "J": inv.J, "H": inv.frame.H, "xi": inv.xi,
                    "eigenvalues": inv.eigenvalues, "g": inv.frame.g, "A": inv.A, "B": inv.B})
    if cfg.format == "csv":
        rows = []
        for i, entry in enumerate(out):
            rows.extend((i, k, v) for k, v in _flat_rows(entry))
        _emit(_csv(("sample", "key", "value"), rows), cfg)
    else:
        _emit(dumps({"label": spec.label, "samples": out}), cfg)
    return status


def _cmd_verify(spec, cfg: CliConfig) -> int:
    report = verify_spec(spec, cfg.samples, cfg.tol if cfg.tol is not None else 1e-8, cfg.seed)
    _emit(_render_reports([report], cfg), cfg)
    _summary([report])
    return EXIT_OK if report.passed else EXIT_FAILED


def _cmd_laws(spec, cfg: CliConfig) -> int:
    def tol(kind):
        return cfg.tol if cfg.tol is not None else LAW_TOL[kind]

    f = spec.factors
    reports = [verify_commutativity(f[0], f[1], tol("commutativity"), cfg.samples, cfg.seed)]
    if spec.K >= 3:
        reports.append(verify_associativity(f[0], f[1], f[2], tol("associativity"), cfg.samples, cfg.seed))
    reports.append(verify_equivalence_triple(spec, tol("equivalence"), cfg.samples, cfg.seed))
    _emit(_render_reports(reports, cfg), cfg)
    _summary(reports)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED


COMMANDS = {"compose": _cmd_compose, "invariants": _cmd_invariants, "verify": _cmd_verify, "laws": _cmd_laws}


def run(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        spec = load_spec(cfg.spec_path)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    try:
        return COMMANDS[cfg.command](spec, cfg)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
