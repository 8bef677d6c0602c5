"""Command-line experiments: AtI certification, rate tables, Gauss-Newton traces,
the Shepp-Logan phantom and gradient audits.

Every run writes ``manifest.json`` holding the command, the fully resolved
configuration and the seed.  Passing that manifest back through ``--config``
reproduces the run's outputs byte for byte.

Exit codes: 0 success, 1 a checked property was violated, 2 usage or
precondition error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .activation import DerivativeUnavailable, decay_constant, gaussian_tail, heaviside, sigmoid
from .approximation import (RATE_SETUPS, FrameExpansion, GridTooCoarse, random_expansion,
                            rate_grid, rate_table)
from .fields import Grid, SampledField, atomic_write_text, format_float
from .inverse import (Diverged, LinearOperator, RankCollapse, convergence_order, forward_map,
                      gauss_newton)
from .networks import (fd_gradient, grad_dnn_w11, grad_rqnn, params_to_json, random_dnn4,
                       random_rqnn, relative_error)
from .phantom import (FixtureMissing, build_shepp_logan_gqnn, compare_fields, rasterize,
                      rasterize_ellipses, unit_square_ellipses, write_pgm)
from .streams import DEFAULT_SEED, substream
from .wavelets import (RadialKernelSystem, check_ati_item1, check_ati_item2,
                       check_double_lipschitz, check_mass, lemma_constants)

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2

ACTIVATIONS = {"sigmoid": sigmoid, "gaussian-tail": gaussian_tail, "heaviside": heaviside}


class UsageError(Exception):
    """Invalid configuration or unmet precondition; carries every problem found."""

    def __init__(self, problems):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("; ".join(self.problems))


def _u64(text) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _common(parser: argparse.ArgumentParser, dims=(1, 2)):
    parser.add_argument("--config", type=Path, help="JSON file with option values (or a manifest)")
    parser.add_argument("--seed", type=_u64, default=DEFAULT_SEED)
    parser.add_argument("--out", type=Path, default=Path("radialnets-out"))
    parser.add_argument("--dim", type=int, choices=dims, default=dims[0])
    parser.add_argument("--json", action="store_true", help="print the summary as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radialnets", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-ati", help="sample the AtI inequalities with the sufficient constants")
    _common(p)
    p.add_argument("--activation", choices=sorted(ACTIVATIONS), default="sigmoid")
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--constant-scale", type=float, default=1.0,
                   help="multiply C, C_item2 and tilde_C (values < 1 force failures)")
    p.add_argument("--mass-tol", type=float, default=1e-6)

    p = sub.add_parser("rate", help="greedy N-term error table against the rate bound")
    _common(p)
    p.add_argument("--atoms", type=int, default=64)
    p.add_argument("--max-terms", type=int, default=64)
    p.add_argument("--expansion", type=Path, help="JSON expansion [{k, j, beta}] instead of a random one")

    p = sub.add_parser("invert", help="Gauss-Newton recovery of RQNN parameters")
    _common(p)
    p.add_argument("--operator", choices=["identity", "cumulative-integration", "gaussian-blur"],
                   default="identity")
    p.add_argument("--blur-width", type=float, default=0.1)
    p.add_argument("--neurons", type=int, default=2)
    p.add_argument("--grid-size", type=int, default=64)
    p.add_argument("--extent", type=float, default=3.0)
    p.add_argument("--offset", type=float, default=1e-3, help="norm of the start perturbation")
    p.add_argument("--noise", type=float, default=0.0,
                   help="L2 norm of a perturbation added to the data (0 gives attainable data)")
    p.add_argument("--max-iter", type=int, default=20)
    p.add_argument("--svd-rel-tol", type=float, default=1e-10)
    p.add_argument("--stop-tol", type=float, default=1e-13)

    p = sub.add_parser("phantom", help="rasterise the Shepp-Logan GQNN and compare with ellipses")
    _common(p, dims=(2,))
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--fixture", type=Path, help="alternative ellipse table CSV")

    p = sub.add_parser("gradcheck", help="audit analytic derivatives against finite differences")
    _common(p)
    p.add_argument("--family", choices=["rqnn", "dnn4", "all"], default="all")
    p.add_argument("--activation", choices=sorted(ACTIVATIONS), default="sigmoid")
    p.add_argument("--neurons", type=int, default=3)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-6)
    parser.subcommands = sub.choices
    return parser


# options that are not part of the reproducible configuration
_RUNTIME_KEYS = {"command", "config", "out", "json"}


def _config_tokens(sub: argparse.ArgumentParser, data: dict) -> list[str]:
    """Turn a config mapping into flags so argparse applies its own type and choice checks."""
    actions = {a.dest: a for a in sub._actions if a.option_strings}
    problems, tokens = [], []
    for key, value in data.items():
        action = actions.get(key.replace("-", "_"))
        if action is None or action.dest in _RUNTIME_KEYS:
            problems.append(f"unknown config key {key!r}")
            continue
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                tokens.append(flag)
        elif value is not None:
            tokens += [flag, str(value)]
    if problems:
        raise UsageError(problems)
    return tokens


def _resolve(parser, argv):
    """Parse argv; ``--config`` values act as flags placed before the explicit ones."""
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        data = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    if isinstance(data, dict) and "config" in data and "command" in data:
        if data["command"] != args.command:
            raise UsageError(f"manifest is for {data['command']!r}, not {args.command!r}")
        data = data["config"]
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    at = argv.index(args.command) + 1
    tokens = _config_tokens(parser.subcommands[args.command], data)
    return parser.parse_args(argv[:at] + tokens + argv[at:])


def _config_dict(args) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in _RUNTIME_KEYS:
            continue
        out[key] = str(value) if isinstance(value, Path) else value
    return out


def _validate(args) -> list[str]:
    problems = []

    def positive(name, strict=True):
        value = getattr(args, name)
        if value is None:
            return
        if (strict and not value > 0) or (not strict and value < 0):
            problems.append(f"--{name.replace('_', '-')} must be {'positive' if strict else 'nonnegative'}")

    cmd = args.command
    if cmd == "check-ati":
        for name in ("r", "samples", "constant_scale", "mass_tol"):
            positive(name)
        if args.activation == "heaviside":
            problems.append("check-ati needs a smooth activation; heaviside has no derivatives")
    elif cmd == "rate":
        positive("atoms")
        positive("max_terms", strict=False)
    elif cmd == "invert":
        for name in ("blur_width", "neurons", "grid_size", "extent", "svd_rel_tol", "stop_tol"):
            positive(name)
        for name in ("offset", "noise", "max_iter"):
            positive(name, strict=False)
    elif cmd == "phantom":
        positive("resolution")
    elif cmd == "gradcheck":
        for name in ("neurons", "trials", "step", "tol"):
            positive(name)
        if args.activation == "heaviside":
            problems.append("gradcheck needs a smooth activation; heaviside has no derivatives")
    return problems


def _write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def cmd_check_ati(args) -> tuple[int, dict]:
    act = ACTIVATIONS[args.activation]()
    system = RadialKernelSystem.build(act, args.r, args.dim)
    C_sigma = decay_constant(act, args.r, args.dim)
    quint = lemma_constants(system, C_sigma).scaled(args.constant_scale)

    def seed_for(name):
        return int(substream(args.seed, f"check-ati/{name}").integers(2 ** 63))

    reports = [
        check_ati_item1(system, quint, sample_count=args.samples, seed=seed_for("size")),
        check_ati_item2(system, quint, sample_count=args.samples, seed=seed_for("smoothness")),
        check_mass(system, tol=args.mass_tol, seed=seed_for("mass")),
        check_double_lipschitz(system, quint, sample_count=args.samples,
                               seed=seed_for("double-lipschitz")),
    ]
    out = [r.to_json() for r in reports]
    _write_json(args.out / "check_ati.json",
                {"C_n": system.C_n, "C_sigma": C_sigma, "reports": out})
    total = sum(r.violations for r in reports)
    summary = {"C_n": system.C_n, "C_sigma": C_sigma, "violations": total,
               "items": {r.item: {"samples": r.samples, "violations": r.violations,
                                  "empirical_C": r.empirical_C} for r in reports}}
    if total:
        summary["violating"] = [r.to_json() for r in reports if r.violations]
    return (EXIT_VIOLATION if total else EXIT_OK), summary


def cmd_rate(args) -> tuple[int, dict]:
    n = args.dim
    setup = RATE_SETUPS[n]
    if args.expansion is not None:
        try:
            exp = FrameExpansion.from_json(args.expansion.read_text())
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot read expansion {args.expansion}: {exc}") from exc
        if any(len(a.j) != n for a in exp.atoms):
            raise UsageError(f"expansion atoms are not {n}-dimensional")
    else:
        exp = random_expansion(substream(args.seed, "rate/expansion"), n, args.atoms,
                               setup["k_range"], setup["center_box"])
    system = RadialKernelSystem.build(sigmoid(), 1.0, n)
    try:
        rows = rate_table(system, exp, rate_grid(n), range(args.max_terms + 1))
    except GridTooCoarse as exc:
        raise UsageError(str(exc)) from exc
    atomic_write_text(args.out / "rate.csv", _csv_text(
        ("N", "l2_error", "bound"), [(r["N"], r["l2_error"], r["bound"]) for r in rows]))
    _write_json(args.out / "expansion.json", exp.to_json())
    bad = [r["N"] for r in rows if r["l2_error"] > r["bound"]]
    summary = {"terms": len(exp), "coefficient_l1": float(np.sum(np.abs(exp.betas))),
               "rows": len(rows), "violating_N": bad,
               "max_ratio": max((r["l2_error"] / r["bound"] for r in rows if r["bound"] > 0),
                                default=0.0)}
    return (EXIT_VIOLATION if bad else EXIT_OK), summary


def _invert_setup(args):
    n = args.dim
    grid = Grid.cell_centered(-args.extent, args.extent, (args.grid_size,) * n)
    if args.operator == "identity":
        F = LinearOperator.identity(grid)
    elif args.operator == "cumulative-integration":
        F = LinearOperator.cumulative_integration(grid)
    else:
        F = LinearOperator.gaussian_blur(grid, args.blur_width)
    rng = substream(args.seed, "invert/truth")
    p_true = random_rqnn(rng, n, args.neurons, spread=args.extent / 3)
    delta = substream(args.seed, "invert/start").normal(size=p_true.n_star)
    p0 = p_true.with_flat(p_true.flatten() + args.offset * delta / np.linalg.norm(delta))
    return F, p_true, p0


def cmd_invert(args) -> tuple[int, dict]:
    act = sigmoid()
    F, p_true, p0 = _invert_setup(args)
    y = forward_map(F, p_true, act)
    if args.noise > 0:
        e = substream(args.seed, "invert/noise").normal(size=y.grid.shape)
        e *= args.noise / SampledField(y.grid, e).l2_norm()
        y = y + SampledField(y.grid, e)
    status = EXIT_OK
    try:
        trace = gauss_newton(F, act, y, p0, max_iter=args.max_iter, svd_rel_tol=args.svd_rel_tol,
                             stop_tol=args.stop_tol, p_true=p_true)
    except (Diverged, RankCollapse) as exc:
        trace, status = exc.trace, EXIT_VIOLATION
    trace.write(args.out / "trace.csv", args.out / "trace.json")
    _write_json(args.out / "truth.json", params_to_json(p_true))
    errors = trace.column("param_error")
    q, C, pairs = convergence_order(errors)
    if args.noise == 0 and not trace.converged:
        status = EXIT_VIOLATION
    summary = {"iterations": len(trace.records) - 1, "converged": trace.converged,
               "reason": trace.reason, "final_residual": trace.final.residual_norm,
               "final_param_error": trace.final.param_error,
               "order_fit": {"q": q, "C": C, "pairs": pairs}}
    return status, summary


def cmd_phantom(args) -> tuple[int, dict]:
    try:
        net = build_shepp_logan_gqnn(args.fixture)
        ellipses = unit_square_ellipses(args.fixture)
    except FixtureMissing as exc:
        raise UsageError(str(exc)) from exc
    field = rasterize(net, heaviside(), args.resolution)
    reference = rasterize_ellipses(ellipses, args.resolution)
    report = compare_fields(field, reference, ellipses)
    write_pgm(field, args.out / "phantom.pgm")
    field.write_csv(args.out / "phantom.csv")
    _write_json(args.out / "phantom_network.json", params_to_json(net))
    _write_json(args.out / "comparison.json", report)
    summary = dict(report, neurons=net.N, parameters=net.n_star)
    return (EXIT_VIOLATION if report["mismatch_count"] else EXIT_OK), summary


def gradient_audit(family: str, act, n: int, neurons: int, trials: int, rng,
                   step: float = 1e-5) -> list[float]:
    """Relative errors of analytic derivatives against central differences."""
    errs = []
    for _ in range(trials):
        if family == "rqnn":
            params = random_rqnn(rng, n, neurons)
            x = rng.uniform(-1.5, 1.5, size=n)
            errs.append(relative_error(grad_rqnn(params, act, x),
                                       fd_gradient(params, act, x, step)))
        else:
            params = random_dnn4(rng, 2, 2)
            x = float(rng.uniform(-2.0, 2.0))
            # w1[0] sits right after the 2 + 2 amplitudes in the flat layout
            fd = fd_gradient(params, act, x, step)[params.N1 + params.N2]
            errs.append(relative_error(grad_dnn_w11(params, act, x), fd))
    return errs


def cmd_gradcheck(args) -> tuple[int, dict]:
    act = ACTIVATIONS[args.activation]()
    families = ["rqnn", "dnn4"] if args.family == "all" else [args.family]
    audit = {}
    for fam in families:
        errs = gradient_audit(fam, act, args.dim, args.neurons, args.trials,
                              substream(args.seed, f"gradcheck/{fam}"), args.step)
        audit[fam] = {"trials": len(errs), "max_rel_err": max(errs),
                      "passed": max(errs) <= args.tol}
    _write_json(args.out / "gradcheck.json", audit)
    ok = all(v["passed"] for v in audit.values())
    return (EXIT_OK if ok else EXIT_VIOLATION), audit


COMMANDS = {"check-ati": cmd_check_ati, "rate": cmd_rate, "invert": cmd_invert,
            "phantom": cmd_phantom, "gradcheck": cmd_gradcheck}


def _report(args, code, summary):
    if args.json:
        print(json.dumps({"command": args.command, "exit_code": code, "summary": summary},
                         indent=2, sort_keys=True))
    else:
        status = {EXIT_OK: "ok", EXIT_VIOLATION: "VIOLATION"}[code]
        brief = {}
        for key, value in summary.items():
            if isinstance(value, dict):
                brief.update({f"{key}.{k}": v for k, v in value.items()
                              if not isinstance(v, (list, dict))})
            elif not isinstance(value, list):
                brief[key] = value
        print(f"{args.command}: {status} " + " ".join(f"{k}={v}" for k, v in brief.items()))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _resolve(parser, argv)
        problems = _validate(args)
        if problems:
            raise UsageError(problems)
        args.out.mkdir(parents=True, exist_ok=True)
        _write_json(args.out / "manifest.json",
                    {"command": args.command, "config": _config_dict(args),
                     "version": __version__})
        code, summary = COMMANDS[args.command](args)
    except UsageError as exc:
        for problem in exc.problems:
            print(f"radialnets: error: {problem}", file=sys.stderr)
        return EXIT_USAGE
    except DerivativeUnavailable as exc:
        print(f"radialnets: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _report(args, code, summary)
    return code


if __name__ == "__main__":
    sys.exit(main())
