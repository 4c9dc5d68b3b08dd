"""Batch front end: configuration, subcommands, result archive, figures.

Subcommands
-----------
eval        component breakdown of the regularized functional on a loop
grad-check  analytic-vs-finite-difference gradient self test
solve       find one critical point and archive it as an orbit record
continue    natural-parameter continuation along a list of field configs
integrate   re-integrate a converged orbit with the adaptive RK oracle (CSV)
verify      run the generalized-solution checks on an archived orbit
plot        emit an SVG figure (blown-up curve and physical curve)
export      extract the blown-up loop of an archive so it can reseed a run

Exit codes: 0 success, 2 validation failure, 3 no convergence, 4 I/O failure.
All floating-point output is serialized with 17 significant digits so that
identical inputs produce byte-identical archives.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

import numpy as np

from .action import eval_components
from .dynamics import SingularityError, integrate, verify_generalized
from .fields import FieldConfig, FieldConfigError, config_from_dict, config_to_dict, preset
from .geometry import birkhoff_derivative, birkhoff_map, conformal_weight
from .loops import (
    DiscreteLoop,
    LoopError,
    derivative,
    double_cover,
    load_loop,
    loop_from_dict,
    loop_to_dict,
    save_loop,
    time_map,
)
from .action import eval_action, gradient, pack
from .solver import (
    NoConvergenceError,
    SolveError,
    SolveOptions,
    continue_family,
    make_seed,
    record_from_dict,
    solve,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NO_CONVERGENCE = 3
EXIT_IO = 4

_CONFIG_KEYS = {"fields", "grid", "solver", "seed", "out", "path"}
_DEFAULT_SEED = {"kind": "kepler_guess", "side": -1, "radius": 0.3}


# -------------------------------------------------------- deterministic JSON


def _fmt_float(x: float) -> str:
    if x != x:
        return "NaN"
    if x in (float("inf"), float("-inf")):
        return '"Infinity"' if x > 0 else '"-Infinity"'
    return format(float(x), ".17g")


def dumps_canonical(obj, indent: int = 0) -> str:
    """Serialize to JSON with 17-significant-digit floats.

    Plain ``json.dumps`` formats floats by shortest round trip, which is also
    deterministic but version-sensitive; the fixed format pins the bytes.
    """
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f'{pad}  {json.dumps(str(k))}: {dumps_canonical(v, indent + 2)}'
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        flat = all(isinstance(v, (int, float, bool)) or v is None for v in obj)
        if flat:
            return "[" + ", ".join(dumps_canonical(v) for v in obj) + "]"
        items = [f"{pad}  {dumps_canonical(v, indent + 2)}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    return json.dumps(obj)


def _write_text(path, text: str, quiet: bool) -> None:
    if path is None:
        if not quiet:
            print(text)
        return
    with open(path, "w") as fh:
        fh.write(text)
        if not text.endswith("\n"):
            fh.write("\n")


# ------------------------------------------------------------- configuration


@dataclasses.dataclass
class RunConfig:
    """Resolved run configuration: fields, grids, solver options, seed spec."""

    cfg: FieldConfig
    n: int = 256
    m: int = 512
    opts: SolveOptions = dataclasses.field(default_factory=SolveOptions)
    seed_spec: dict = dataclasses.field(default_factory=lambda: dict(_DEFAULT_SEED))
    out: str | None = None
    path: list = dataclasses.field(default_factory=list)


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FieldConfigError(f"{path}: invalid JSON near line {exc.lineno}: {exc.msg}")


def load_run_config(args) -> RunConfig:
    """Merge the config file (if any) with command-line overrides."""
    data = {}
    if getattr(args, "config", None):
        data = _load_json(args.config)
        if not isinstance(data, dict):
            raise FieldConfigError("config must be a JSON object")
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise FieldConfigError(f"unknown config keys: {sorted(unknown)}")

    cfg = config_from_dict(data.get("fields", {"mu": 0.5}))

    grid = dict(data.get("grid", {}))
    unknown = set(grid) - {"n", "m"}
    if unknown:
        raise FieldConfigError(f"unknown grid keys: {sorted(unknown)}")
    n = int(grid.get("n", 256))
    m = int(grid.get("m", 512))

    solver_block = dict(data.get("solver", {}))
    option_names = {f.name for f in dataclasses.fields(SolveOptions)}
    unknown = set(solver_block) - option_names
    if unknown:
        raise FieldConfigError(f"unknown solver keys: {sorted(unknown)}")

    seed_spec = data.get("seed", dict(_DEFAULT_SEED))
    out = data.get("out")
    path = [config_from_dict(block) for block in data.get("path", [])]

    if getattr(args, "n", None):
        n = args.n
    if getattr(args, "m", None):
        m = args.m
    if getattr(args, "tol", None):
        solver_block["g_tol"] = args.tol
    if getattr(args, "seed", None):
        seed_spec = _parse_seed_flag(args.seed)
    if getattr(args, "out", None):
        out = args.out

    try:
        opts = SolveOptions(n=n, m=m, **solver_block)
    except TypeError as exc:
        raise FieldConfigError(f"bad solver options: {exc}")
    return RunConfig(cfg=cfg, n=n, m=m, opts=opts, seed_spec=seed_spec, out=out, path=path)


def _parse_seed_flag(text: str) -> dict:
    text = text.strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise LoopError(f"--seed: invalid JSON: {exc.msg}")
    return {"kind": "file", "path": text}


def _build_seed(run: RunConfig, args) -> DiscreteLoop:
    loop = make_seed(run.seed_spec, n=run.n)
    twisted = getattr(args, "twisted", None)
    if twisted is not None and twisted != loop.twisted:
        loop = DiscreteLoop(samples=loop.samples, twisted=twisted)
    return loop


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


# ----------------------------------------------------------------- commands


def cmd_eval(args) -> int:
    run = load_run_config(args)
    if args.loop:
        loop = load_loop(args.loop)
    else:
        loop = _build_seed(run, args)
    b = eval_components(loop, run.cfg)
    lines = [
        f"F  = {b.F:.12g}",
        f"G  = {b.G:.12g}",
        f"H1 = {b.H1:.12g}",
        f"H2 = {b.H2:.12g}",
        f"M  = {b.M:.12g}",
        f"E  = {b.E_val:.12g}",
        f"E1 = {b.E1:.12g}",
        f"total = {b.total:.12g}",
        f"C  = {b.C:.12g}",
    ]
    if not args.quiet:
        print("\n".join(lines))
    if run.out:
        payload = {
            "components": {
                "F": b.F,
                "G": b.G,
                "H1": b.H1,
                "H2": b.H2,
                "M": b.M,
                "E": b.E_val,
                "E1": b.E1,
            },
            "total": b.total,
            "C": b.C,
        }
        _write_text(run.out, dumps_canonical(payload), args.quiet)
    return EXIT_OK


def _random_smooth_loop(rng, n: int, twisted: bool) -> DiscreteLoop:
    k = np.arange(-3, 4)
    coef = rng.normal(0, 0.25, len(k)) + 1j * rng.normal(0, 0.25, len(k))
    tau = np.arange(n) / n
    period = 2.0 if twisted else 1.0
    z = 1.8 + 0.4j + sum(
        c * np.exp(2j * np.pi * kk * tau / period) for c, kk in zip(coef, k)
    )
    return DiscreteLoop(samples=z, twisted=twisted)


def cmd_grad_check(args) -> int:
    run = load_run_config(args)
    n = args.n or 64
    tol = args.tol or 1e-6
    rng = np.random.default_rng(7)
    configs = [
        preset("zero", mu=0.3),
        preset("constant", mu=0.5, b=2.0),
        preset("uniform_oscillating", mu=0.5, epsilon=0.1),
        preset("rotating_charge", mu=0.5, mu_s=0.01, r_s=3.0, k=1),
    ]
    worst = 0.0
    for cfg in configs:
        for twisted in (False, True):
            for _ in range(3):
                loop = _random_smooth_loop(rng, n, twisted)
                direction = _random_smooth_loop(rng, n, twisted).samples - 1.8 - 0.4j
                # the discrete gradient pairs against perturbations through
                # the mean-value quadrature, hence the 1/n weight
                g = pack(gradient(loop, cfg))
                analytic = float(
                    g @ np.concatenate([direction.real, direction.imag])
                ) / n
                best = np.inf
                for h in (1e-4, 1e-5, 1e-6, 1e-7):
                    plus = DiscreteLoop(loop.samples + h * direction, twisted=twisted)
                    minus = DiscreteLoop(loop.samples - h * direction, twisted=twisted)
                    fd = (eval_action(plus, cfg) - eval_action(minus, cfg)) / (2 * h)
                    best = min(best, abs(fd - analytic) / max(abs(analytic), 1e-12))
                worst = max(worst, best)
    ok = worst < tol
    if not args.quiet:
        print(f"max relative gradient error: {worst:.3e} (tolerance {tol:.1e})")
        print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_solve(args) -> int:
    run = load_run_config(args)
    seed = _build_seed(run, args)
    record = solve(seed, run.cfg, run.opts)
    text = dumps_canonical(record.to_dict())
    _write_text(run.out, text, quiet=run.out is None and args.quiet)
    if not args.quiet:
        print(
            f"converged in {record.iterations} iterations: "
            f"action={record.action:.10g} grad_norm={record.grad_norm:.3e} "
            f"delay_sup={record.delay_sup:.3e} phi_sup={record.phi_sup:.3e}",
            file=sys.stderr,
        )
    return EXIT_OK


def cmd_continue(args) -> int:
    run = load_run_config(args)
    if not run.path:
        raise FieldConfigError("continue requires a 'path' list in the config")
    seed = _build_seed(run, args)
    start = solve(seed, run.cfg, run.opts)
    family = continue_family(start, run.path, run.opts)
    payload = {"family": [rec.to_dict() for rec in family]}
    _write_text(run.out, dumps_canonical(payload), quiet=run.out is None and args.quiet)
    if not args.quiet:
        steps = ", ".join(str(rec.iterations) for rec in family)
        print(f"{len(family)} converged records (iterations: {steps})", file=sys.stderr)
    return EXIT_OK


def _initial_conditions(z_loop: DiscreteLoop):
    """Position and velocity at physical time zero, from the blown-up side."""
    tm = time_map(z_loop)
    z0 = complex(z_loop.samples[0])
    zp0 = complex(derivative(z_loop)[0])
    w0 = float(conformal_weight(np.array([z0]))[0])
    q0 = complex(birkhoff_map(np.array([z0]))[0])
    v0 = complex(birkhoff_derivative(np.array([z0]))[0]) * zp0 * tm.zhat / w0
    return q0, v0


def cmd_integrate(args) -> int:
    run = load_run_config(args)
    data = _load_json(args.orbit)
    record = record_from_dict(data)
    q0, v0 = _initial_conditions(record.z)
    m = run.m
    times = np.arange(m + 1) / m
    tol = args.tol or 1e-10
    traj = integrate(q0, v0, 0.0, 1.0, record.cfg, tol=tol, sample_times=times)
    rows = ["t,q_re,q_im,v_re,v_im"]
    for t, q, v in zip(traj.times, traj.positions, traj.velocities):
        rows.append(
            f"{t:.17g},{q.real:.17g},{q.imag:.17g},{v.real:.17g},{v.imag:.17g}"
        )
    _write_text(run.out, "\n".join(rows), args.quiet)
    if not args.quiet and traj.terminated != "completed":
        print(f"integration terminated early: {traj.terminated}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    run = load_run_config(args)
    data = _load_json(args.orbit)
    record = record_from_dict(data)
    tol = args.tol or 1e-5
    report = verify_generalized(record, record.cfg, tol=tol)
    if not args.quiet:
        print(report)
    return EXIT_OK if report.ok else EXIT_NO_CONVERGENCE


def _svg_path(points, scale: float, offset_x: float, offset_y: float) -> str:
    cmds = []
    for j, p in enumerate(points):
        x = offset_x + scale * p.real
        y = offset_y - scale * p.imag
        cmds.append(f"{'M' if j == 0 else 'L'} {x:.2f} {y:.2f}")
    cmds.append("Z")
    return " ".join(cmds)


def cmd_plot(args) -> int:
    run = load_run_config(args)
    data = _load_json(args.orbit)
    record = record_from_dict(data)
    zc = double_cover(record.z)
    qc = record.q.samples
    size, half = 420.0, 210.0
    extent = max(
        1.5,
        float(np.max(np.abs(zc.real))),
        float(np.max(np.abs(zc.imag))),
        float(np.max(np.abs(qc.real))),
        float(np.max(np.abs(qc.imag))),
    )
    scale = (half - 20.0) / extent
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{2 * size:.0f}" '
        f'height="{size:.0f}" viewBox="0 0 {2 * size:.0f} {size:.0f}">',
        f'<circle cx="{half - scale:.2f}" cy="{half:.2f}" r="3" fill="black"/>',
        f'<circle cx="{half + scale:.2f}" cy="{half:.2f}" r="3" fill="black"/>',
        f'<circle cx="{half:.2f}" cy="{half:.2f}" r="{scale:.2f}" fill="none" '
        'stroke="gray" stroke-dasharray="6 4"/>',
        f'<path d="{_svg_path(zc, scale, half, half)}" fill="none" stroke="crimson"/>',
        f'<circle cx="{size + half - scale:.2f}" cy="{half:.2f}" r="3" fill="black"/>',
        f'<circle cx="{size + half + scale:.2f}" cy="{half:.2f}" r="3" fill="black"/>',
        f'<path d="{_svg_path(qc, scale, size + half, half)}" fill="none" '
        'stroke="steelblue"/>',
        "</svg>",
    ]
    _write_text(run.out or "orbit.svg", "\n".join(parts), args.quiet)
    return EXIT_OK


def cmd_export(args) -> int:
    run = load_run_config(args)
    data = _load_json(args.orbit)
    if "z" in data and isinstance(data["z"], dict):
        loop = loop_from_dict(data["z"])
    else:
        loop = loop_from_dict(data)
    if run.out:
        save_loop(loop, run.out)
    else:
        _write_text(None, dumps_canonical(loop_to_dict(loop)), args.quiet)
    return EXIT_OK


# --------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="szbov",
        description="Periodic-orbit solver for planar two-center Stark-Zeeman systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration JSON")
        p.add_argument("--seed", help="seed spec (JSON object or loop file path)")
        p.add_argument("--out", help="output path (stdout when omitted)")
        p.add_argument("--n", type=int, help="loop grid size")
        p.add_argument("--m", type=int, help="physical reconstruction grid size")
        p.add_argument("--tol", type=float, help="tolerance override")
        p.add_argument("--twisted", type=_parse_bool, help="force seed sector")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("eval", help="component breakdown of the functional")
    p.add_argument("loop", nargs="?", help="loop JSON file (defaults to the seed)")
    common(p)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("grad-check", help="gradient self test")
    common(p)
    p.set_defaults(handler=cmd_grad_check)

    p = sub.add_parser("solve", help="find one critical point")
    common(p)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("continue", help="parameter continuation")
    common(p)
    p.set_defaults(handler=cmd_continue)

    p = sub.add_parser("integrate", help="RK re-integration of an orbit (CSV)")
    p.add_argument("orbit", help="orbit record JSON")
    common(p)
    p.set_defaults(handler=cmd_integrate)

    p = sub.add_parser("verify", help="generalized-solution checks")
    p.add_argument("orbit", help="orbit record JSON")
    common(p)
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("plot", help="SVG figure of an orbit")
    p.add_argument("orbit", help="orbit record JSON")
    common(p)
    p.set_defaults(handler=cmd_plot)

    p = sub.add_parser("export", help="extract the blown-up loop of an archive")
    p.add_argument("orbit", help="orbit record or loop JSON")
    common(p)
    p.set_defaults(handler=cmd_export)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except NoConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (FieldConfigError, LoopError, SingularityError, SolveError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
