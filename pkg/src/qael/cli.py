"""Command-line entry point: ``qael {analyze,reduce,validate,sweep,example}``.

Exit codes: 0 success, 1 input/usage errors, 2 failed fast-generator
assumption, 3 unmet order-2 precondition, 4 failed invariant suite.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import certify
from .config import Tolerances
from .errors import AssumptionError, InvariantError, ModelError, QaelError
from .models import EXAMPLES, example_document
from .modelspec import ModelDefinition, load_model, model_from_dict
from .reduction import build_reduced_model
from .serialize import dumps, reduced_model_dict
from .simulate import compare, epsilon_sweep, invariant_suite

log = logging.getLogger("qael")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would collide with the
    # assumption-failure code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    model_path: str | None = None
    example: str | None = None
    params: dict = field(default_factory=dict)
    order: int = 2
    epsilons: list = field(default_factory=list)
    horizon: tuple = ("fixed", None)
    output_dir: str | None = None
    points: int = 400
    jobs: int = 1
    seed: int = 0
    initial: str = "random"


def _complex(text):
    try:
        return complex(text.replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from None


def parse_horizon(text):
    kind, _, value = text.partition(":")
    if kind not in ("fixed", "slow"):
        raise argparse.ArgumentTypeError("horizon must be fixed:T or slow:tau")
    if not value:
        if kind == "slow":
            raise argparse.ArgumentTypeError("slow horizon needs a value, e.g. slow:1")
        return (kind, None)
    try:
        v = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad horizon value {value!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("horizon must be positive")
    return (kind, v)


def _epsilon_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad epsilon list {text!r}") from None


def _add_model_args(p, positional=True):
    if positional:
        p.add_argument("model", nargs="?", help="model JSON file")
    p.add_argument("--example", choices=sorted(EXAMPLES), help="use a built-in model")
    p.add_argument("--kappa", type=float, default=10.0)
    p.add_argument("--g", type=float, default=0.1)
    p.add_argument("--u", type=_complex, default=1.0)
    p.add_argument("--n-trunc", type=int, default=16)
    p.add_argument("--hb", default="sigmaz", help="qubit Hamiltonian for cavity-qubit-hb")
    p.add_argument("--dim", type=int, default=None, help="dimension for the random example")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qael", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qael {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--seed", type=int, default=0, help="seed for randomized inputs")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="certify the fast generator")
    _add_model_args(p)
    p.add_argument("--out", help="write the report to this file instead of stdout")

    p = sub.add_parser("reduce", help="compute the reduced slow model")
    _add_model_args(p)
    p.add_argument("--order", type=int, choices=(1, 2), default=2)
    p.add_argument("--out", help="output directory")

    for name, helptext in (("validate", "compare full and reduced dynamics"),
                           ("sweep", "compare across epsilon and fit the error exponent")):
        p = sub.add_parser(name, help=helptext)
        _add_model_args(p)
        p.add_argument("--order", type=int, choices=(1, 2), default=2)
        if name == "validate":
            p.add_argument("--epsilon", type=float, default=None)
        else:
            p.add_argument("--epsilons", type=_epsilon_list, required=True)
            p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--horizon", type=parse_horizon, default=("fixed", None))
        p.add_argument("--points", type=int, default=400)
        p.add_argument("--initial", default="random",
                       help="initial slow state: random, mixed or basis:K")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("example", help="print a built-in model")
    p.add_argument("name", choices=sorted(EXAMPLES))
    _add_model_args(p, positional=False)
    p.add_argument("--emit-model", action="store_true", help="print the model file JSON")
    p.add_argument("--out", help="write to this file instead of stdout")
    return parser


def _load(args) -> ModelDefinition:
    has_path = getattr(args, "model", None) is not None
    if has_path == (args.example is not None):
        raise ModelError("give exactly one of a model file or --example")
    if has_path:
        return load_model(args.model)
    doc = example_document(args.example, kappa=args.kappa, g=args.g, u=args.u,
                           n_trunc=args.n_trunc, hb=args.hb, seed=args.seed, dim=args.dim)
    return model_from_dict(doc)


def _emit(text: str, out: str | None, name: str | None = None):
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    if name is not None:
        path.mkdir(parents=True, exist_ok=True)
        path = path / name
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


def initial_state(spec: str, dim: int, seed: int):
    if spec == "mixed":
        return np.eye(dim, dtype=complex) / dim
    if spec.startswith("basis:"):
        k = int(spec.split(":", 1)[1])
        if not 0 <= k < dim:
            raise ModelError(f"basis state {k} out of range for slow dim {dim}")
        rho = np.zeros((dim, dim), dtype=complex)
        rho[k, k] = 1.0
        return rho
    if spec == "random":
        rng = np.random.default_rng(seed)
        psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        psi /= np.linalg.norm(psi)
        return np.outer(psi, psi.conj())
    raise ModelError(f"unknown initial state {spec!r}")


def _summary_line(model):
    gen = model.generator()
    worst = max(model.residuals.values(), default=0.0)
    return (f"slow_dim={model.slow_dim} order={model.order} jumps={len(gen.jumps)}"
            f" max_residual={worst:.3e}")


def cmd_analyze(args, tol):
    m = _load(args)
    try:
        analysis = certify(m.fast, m.tolerances)
    except AssumptionError as exc:
        if exc.report is not None:
            _emit(dumps(exc.report), args.out)
        raise
    _emit(dumps(analysis.report), args.out)
    return 0


def _reduce(args, m):
    analysis = certify(m.fast, m.tolerances)
    return build_reduced_model(m.fast, m.slow, m.epsilon, args.order, tol=m.tolerances,
                               analysis=analysis, strict=True), analysis


def cmd_reduce(args, tol):
    m = _load(args)
    model, _ = _reduce(args, m)
    _emit(dumps(reduced_model_dict(model, m.tolerances)), args.out, "reduced_model.json"
          if args.out else None)
    print(_summary_line(model), file=sys.stderr)
    for note in model.notes:
        print(f"note: {note}", file=sys.stderr)
    return 0


def _check_invariants(checks):
    failed = [c for c in checks if not c.passed]
    if failed:
        c = failed[0]
        bound = "<=" if c.kind == "max" else ">="
        raise InvariantError(c.name, f"value {c.value:.3e} is not {bound} {c.threshold:.3e}")


def _write_report_csv(report, out, name):
    import io

    buf = io.StringIO(newline="")
    report.write_csv(buf)
    if out is None:
        return
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / name, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def cmd_validate(args, tol):
    m = _load(args)
    model, analysis = _reduce(args, m)
    eps = m.epsilon if args.epsilon is None else args.epsilon
    if eps < 0:
        raise ModelError("epsilon must be nonnegative")
    from .simulate import horizon_for

    horizon = args.horizon
    if horizon[0] == "slow" and eps == 0:
        raise ModelError("slow-time horizon needs epsilon > 0")
    t_end = horizon_for(horizon, eps, analysis.spectrum.gap)
    times = np.linspace(0.0, t_end, args.points)
    rho_s0 = initial_state(args.initial, model.slow_dim, args.seed)
    report = compare(m.fast, m.slow, model.with_epsilon(eps), rho_s0, times)
    checks = invariant_suite(model.with_epsilon(eps), [report])
    summary = {"report": report.summary(), "invariants": [c.to_dict() for c in checks],
               "passed": all(c.passed for c in checks)}
    _write_report_csv(report, args.out, "comparison.csv")
    _emit(dumps(summary), args.out, "summary.json" if args.out else None)
    _check_invariants(checks)
    return 0


def cmd_sweep(args, tol):
    if len(args.epsilons) < 3:
        raise ModelError("need >= 3 epsilons")
    m = _load(args)
    model, analysis = _reduce(args, m)
    rho_s0 = initial_state(args.initial, model.slow_dim, args.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = epsilon_sweep(m.fast, m.slow, rho_s0, args.epsilons, args.horizon,
                               order=args.order, points=args.points, jobs=args.jobs,
                               tol=m.tolerances, analysis=analysis, strict=True)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    checks = invariant_suite(result.model, result.reports)
    summary = result.summary()
    summary["invariants"] = [c.to_dict() for c in checks]
    summary["passed"] = all(c.passed for c in checks)
    summary["warnings"] = [str(w.message) for w in caught]
    for k, r in enumerate(result.reports):
        name = f"sweep_{k:02d}.csv"
        summary["points"][k]["csv"] = name
        _write_report_csv(r, args.out, name)
    _emit(dumps(summary), args.out, "summary.json" if args.out else None)
    _check_invariants(checks)
    return 0


def cmd_example(args, tol):
    doc = example_document(args.name, kappa=args.kappa, g=args.g, u=args.u,
                           n_trunc=args.n_trunc, hb=args.hb, seed=args.seed, dim=args.dim)
    if args.emit_model:
        _emit(dumps(doc), args.out)
        return 0
    m = model_from_dict(doc)
    info = {"name": args.name, "description": EXAMPLES[args.name], "dim": m.dim,
            "epsilon": m.epsilon, "factors": [list(f) for f in m.factors],
            "fast_jumps": len(m.fast.jumps), "slow_jumps": len(m.slow.jumps)}
    _emit(dumps(info), args.out)
    return 0


COMMANDS = {
    "analyze": cmd_analyze,
    "reduce": cmd_reduce,
    "validate": cmd_validate,
    "sweep": cmd_sweep,
    "example": cmd_example,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        tol = Tolerances.from_env()
        return COMMANDS[args.command](args, tol)
    except AssumptionError as exc:
        print(f"error: assumption failed: {exc}", file=sys.stderr)
        return exc.exit_code
    except QaelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
