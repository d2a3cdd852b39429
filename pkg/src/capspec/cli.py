"""Command-line front end.

Exit codes: 0 on success, 2 on identifiability or configuration errors,
3 on I/O errors; stderr carries the reason.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .analysis import whitenoise_variance_closed_form
from .estimator import IdentifiabilityError
from .patterns import (
    CosetPattern,
    design_pair_cover_family,
    exhaustive_minimal_ruler,
    is_circular_sparse_ruler,
    minimal_circular_sparse_ruler,
    verify_pair_coverage,
)
from .runner import parse_manifest, run_manifest
from .structure import build_system_matrix


def _marks_arg(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(" ", "").split(",") if tok)


def _pattern_line(pattern: CosetPattern, status: str) -> str:
    marks = ",".join(map(str, pattern.marks))
    return f"{marks}  cardinality={pattern.size}  {status}"


def cmd_design_ruler(args) -> int:
    if args.exhaustive:
        pattern = exhaustive_minimal_ruler(args.period)
        status = "ruler=yes minimal=yes"
    else:
        result = minimal_circular_sparse_ruler(args.period, node_budget=args.node_budget)
        pattern = result.pattern
        status = f"ruler=yes minimal={'yes' if result.minimal else 'no'}"
    assert is_circular_sparse_ruler(pattern)
    print(_pattern_line(pattern, status))
    return 0


def cmd_design_family(args) -> int:
    family = design_pair_cover_family(args.period, args.marks)
    complete = verify_pair_coverage(family)
    for pattern in family.patterns:
        print(_pattern_line(pattern, "member"))
    print(f"groups={family.size}  pair-coverage={'complete' if complete else 'INCOMPLETE'}")
    return 0 if complete else 2


def cmd_inspect_pattern(args) -> int:
    pattern = CosetPattern(args.period, _marks_arg(args.marks))
    sysmat = build_system_matrix(pattern)
    print(_pattern_line(pattern, f"ruler={'yes' if sysmat.identifiable else 'no'}"))
    print("gamma=" + ",".join(str(int(g)) for g in sysmat.gamma))
    if sysmat.identifiable:
        closed = whitenoise_variance_closed_form(pattern, 1.0, 1)
        print(f"identifiable=yes  unit-noise-nmse-times-tau={closed.nmse!r}")
    else:
        missing = ",".join(map(str, sysmat.missing_differences))
        print(f"identifiable=no  missing-differences={missing}")
    return 0


def _experiment_command(args) -> int:
    manifest = parse_manifest(args.manifest, kind=args.kind)
    if args.seed is not None:
        manifest.seed = args.seed
    if args.threads is not None:
        manifest.threads = args.threads
    if args.output is not None:
        manifest.output = Path(args.output)
    if args.runs is not None:
        manifest.runs = args.runs
    manifest.validate()
    paths = run_manifest(manifest)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capspec",
        description="Compressive averaged-periodogram estimation from "
        "multi-coset sub-Nyquist samples",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design-ruler", help="minimum-cardinality circular sparse ruler")
    p.add_argument("--period", type=int, required=True)
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--node-budget", type=int, default=5_000_000)
    p.set_defaults(fn=cmd_design_ruler)

    p = sub.add_parser("design-family", help="pair-covering pattern family")
    p.add_argument("--period", type=int, required=True)
    p.add_argument("--marks", type=int, required=True, help="marks per pattern")
    p.set_defaults(fn=cmd_design_family)

    p = sub.add_parser("inspect-pattern", help="gamma diagonal and identifiability")
    p.add_argument("--period", type=int, required=True)
    p.add_argument("--marks", type=str, required=True, help="comma-separated coset indices")
    p.set_defaults(fn=cmd_inspect_pattern)

    for kind, needs_seed in (
        ("reconstruct", True),
        ("nmse-sweep", True),
        ("roc", True),
        ("variance-check", True),
        ("bench", False),
    ):
        p = sub.add_parser(kind, help=f"run a {kind} experiment manifest")
        p.add_argument("--manifest", type=str, required=True)
        p.add_argument("--seed", type=int, required=needs_seed, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--output", type=str, default=None)
        p.add_argument("--runs", type=int, default=None)
        p.set_defaults(fn=_experiment_command, kind=kind)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except IdentifiabilityError as exc:
        print(f"error: identifiability: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
