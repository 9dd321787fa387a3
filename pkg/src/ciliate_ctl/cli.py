"""Command line entry point: ciliate-ctl <command> [options].

Exit codes: 0 success, 2 invalid input, 3 planner did not converge, 64 usage.
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
from .config import Config, Tolerances
from .core import FullState, KinematicModel, SphericalModel, ValidationError, expm_so3
from .criteria import _jsonable, classify
from .dynamics import ControlSignal, SimulationError, simulate_full, simulate_kinematic
from .modelio import ModelFileError, dumps_model, load_model
from .sphere_stokes import QuadratureError, build_kinematic, build_matrices, load_sphere

EXIT_OK, EXIT_INVALID, EXIT_NOCONV, EXIT_USAGE = 0, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str, n: int | None = None, name: str = "value") -> np.ndarray:
    try:
        v = np.array([float(x) for x in text.replace(",", " ").split()])
    except ValueError:
        raise ValueError(f"{name}: expected numbers, got {text!r}") from None
    if n is not None and v.size != n:
        raise ValueError(f"{name}: expected {n} numbers, got {v.size}")
    return v


def parse_control(spec: str, m: int, T: float | None) -> ControlSignal:
    """'zero', 'const:a,b,...' or a CSV file as written by ControlSignal.to_csv."""
    if spec == "zero":
        if T is None:
            raise ValueError("--T is required with --u zero")
        return ControlSignal.zero(T, m)
    if spec.startswith("const:"):
        if T is None:
            raise ValueError("--T is required with --u const:...")
        return ControlSignal.constant(T, _floats(spec[6:], m, "--u"))
    path = Path(spec)
    if not path.exists():
        raise ValueError(f"--u: {spec!r} is neither 'zero', 'const:...' nor a file")
    rows = list(csv.reader(io.StringIO(path.read_text(encoding="utf-8"))))
    head, body = rows[0], [r for r in rows[1:] if r]
    if len(head) != m + 2:
        raise ValueError(f"control file has {len(head) - 2} channels, model expects {m}")
    modes = {r[-1] for r in body}
    if len(modes) != 1:
        raise ValueError("control file mixes interpolation modes; split it into parts")
    t = np.array([float(r[0]) for r in body])
    U = np.array([[float(x) for x in r[1:-1]] for r in body])
    mode = modes.pop()
    return ControlSignal(t - t[0], U[:-1] if mode == "hold" else U, mode)


def _config(args) -> Config:
    tol = Tolerances(rank=args.tol_rank, det=args.tol_det)
    return Config(tol=tol, dt=args.dt, depth=args.depth, seed=args.seed, out_dir=args.out)


def _write(args, name: str, text: str, stdout_ok: bool = True) -> str | None:
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / name).write_text(text, encoding="utf-8")
        return str(d / name)
    if stdout_ok and not args.json:
        sys.stdout.write(text)
    return None


def _emit(args, payload: dict) -> None:
    if args.json:
        sys.stdout.write(json.dumps(_jsonable(payload), indent=1) + "\n")


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_check(args) -> int:
    cfg = _config(args)
    model = load_model(args.model)
    rep = classify(model, cfg.tol, cfg.depth, with_lie=not args.no_lie)
    if not args.json:
        print(rep.text())
    _emit(args, {"command": "check", "model": args.model, **rep.to_dict()})
    return EXIT_OK


def _parse_pose(text: str, name: str):
    v = _floats(text, 6, name)
    return v[:3], expm_so3(v[3:])


def cmd_simulate(args) -> int:
    cfg = _config(args)
    model = load_model(args.model)
    u = parse_control(args.u, model.m, args.T)
    if isinstance(model, KinematicModel):
        pose = _parse_pose(args.pose0, "--pose0") if args.pose0 else (np.zeros(3), np.eye(3))
        traj = simulate_kinematic(model, pose, u, cfg.dt, args.record)
    else:
        if isinstance(model, SphericalModel):
            model = model.to_swimmer()
        z0 = _floats(args.z0, 6, "--z0") if args.z0 else np.zeros(6)
        pose = _parse_pose(args.pose0, "--pose0") if args.pose0 else (np.zeros(3), np.eye(3))
        traj = simulate_full(model, FullState.from_parts(z0, *pose), u, cfg.dt, args.record)
    path = _write(args, "trajectory.csv", traj.to_csv())
    fin = traj.final
    _emit(args, {"command": "simulate", "T": u.T, "csv": path, "diagnostics": traj.diagnostics,
                 "final": {"z": fin.z, "zeta": fin.zeta, "R": fin.R}})
    return EXIT_OK


def cmd_plan(args) -> int:
    from .planner import plan_kinematic, plan_velocity
    cfg = _config(args)
    model = load_model(args.model)
    if isinstance(model, KinematicModel):
        start = _parse_pose(args.start, "--start") if args.start else (np.zeros(3), np.eye(3))
        goal = _parse_pose(args.goal, "--goal")
        res = plan_kinematic(model, start, goal, args.T or 1.0, seed=cfg.seed)
        traj = simulate_kinematic(model, start, res.control)
    else:
        z0 = _floats(args.start, 6, "--start") if args.start else np.zeros(6)
        z1 = _floats(args.goal, 6, "--goal")
        res = plan_velocity(model, z0, z1, args.T, dt=cfg.dt, seed=cfg.seed)
        full = model.to_swimmer() if isinstance(model, SphericalModel) else model
        traj = simulate_full(full, FullState.from_parts(z0), res.control, cfg.dt, args.record) \
            if res.converged else None
    cpath = _write(args, "control.csv", res.control.to_csv())
    tpath = _write(args, "trajectory.csv", traj.to_csv(), stdout_ok=False) if traj else None
    if not args.json:
        state = "converged" if res.converged else "did not converge"
        print(f"plan {state}: " + ", ".join(f"{k} error {v:.3e}" for k, v in res.errors.items()),
              file=sys.stderr)
    _emit(args, {"command": "plan", **res.summary(), "control_csv": cpath, "trajectory_csv": tpath})
    return EXIT_OK if res.converged else EXIT_NOCONV


def cmd_sample(args) -> int:
    from .genericity import SampleConfig, measure, wilson
    cfg = _config(args)
    sc = SampleConfig(m=args.m, space=args.space, count=args.count, seed=cfg.seed,
                      scale=args.scale, family=args.family, depth=cfg.depth)
    crit = args.criteria or (["prop-pa"] if args.m == 1 else ["prop-pc"])
    st = measure(sc, crit, cfg.tol)
    rep = st.to_dict()
    if args.out:
        _write(args, "report.json", json.dumps(_jsonable(rep), indent=1) + "\n")
        _write(args, "samples.csv", st.to_csv())
    if not args.json:
        for c in st.criteria:
            k, f = st.passes[c], st.fails[c]
            lo, hi = wilson(k, k + f)
            print(f"{c}: {k}/{k + f} pass (rate {st.rate(c):.4f}, 95% CI [{lo:.4f}, {hi:.4f}])")
    _emit(args, {"command": "sample", **rep})
    return EXIT_OK


def cmd_bracket(args) -> int:
    from .lie import kinematic_lie_rank, lie_rank
    cfg = _config(args)
    model = load_model(args.model)
    if isinstance(model, KinematicModel):
        rank, labels = kinematic_lie_rank(model, depth=cfg.depth, tol_rank=cfg.tol.rank,
                                          labels=True)
        payload = {"rank": rank, "dim": 6, "pivots": labels}
    else:
        if isinstance(model, SphericalModel):
            model = model.to_swimmer()
        z = _floats(args.point, 6, "--point") if args.point else np.zeros(6)
        rep = lie_rank(model, FullState.from_parts(z), cfg.depth, cfg.tol.rank)
        payload = {"rank": rep.rank, "dim": rep.dim, "depth_reached": rep.depth_reached,
                   "pivots": rep.pivots, "fields": rep.n_fields}
    if not args.json:
        print(f"rank {payload['rank']} of {payload['dim']}")
        for lab in payload["pivots"]:
            print(f"  {lab}")
    _emit(args, {"command": "bracket", **payload})
    return EXIT_OK


def cmd_sphere_build(args) -> int:
    spec, psi = load_sphere(args.sphere)
    if args.kinematic:
        model = build_kinematic(spec, psi, args.order)
    else:
        model = build_matrices(spec, psi, args.order)
    text = dumps_model(model)
    path = _write(args, "model.json", text)
    _emit(args, {"command": "sphere-build", "model_file": path,
                 "model": json.loads(text)})
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="emit a JSON block on stdout")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--dt", type=float, default=1e-3, help="integrator step")
    common.add_argument("--depth", type=int, default=6, help="bracket depth")
    common.add_argument("--tol-rank", type=float, default=1e-8)
    common.add_argument("--tol-det", type=float, default=1e-10)
    common.add_argument("--out", metavar="DIR", help="write output files to DIR")

    p = _Parser(prog="ciliate-ctl", description="Controllability toolkit for micro-swimmers")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", parents=[common], help="classify a model")
    c.add_argument("model")
    c.add_argument("--no-lie", action="store_true", help="skip the bracket rank computation")
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("simulate", parents=[common], help="integrate a trajectory")
    s.add_argument("model")
    s.add_argument("--u", default="zero", help="zero | const:u1,u2,... | control CSV file")
    s.add_argument("--T", type=float, help="horizon for zero / constant controls")
    s.add_argument("--z0", help="initial xi, omega (6 numbers)")
    s.add_argument("--pose0", help="initial zeta and rotation vector (6 numbers)")
    s.add_argument("--record", type=int, default=1, help="store every k-th step")
    s.set_defaults(func=cmd_simulate)

    q = sub.add_parser("plan", parents=[common], help="steer between two states")
    q.add_argument("model")
    q.add_argument("--start", help="start state (6 numbers; kinematic: zeta and rotation vector)")
    q.add_argument("--goal", required=True, help="goal state, same format as --start")
    q.add_argument("--T", type=float, help="horizon")
    q.add_argument("--record", type=int, default=10)
    q.set_defaults(func=cmd_plan)

    g = sub.add_parser("sample", parents=[common], help="empirical criterion pass rates")
    g.add_argument("--m", type=int, default=1)
    g.add_argument("--space", choices=["Xi0", "Xi1"], default="Xi0")
    g.add_argument("--count", type=int, default=1000)
    g.add_argument("--family", choices=["generic", "isotropic_J", "degenerate_B"],
                   default="generic")
    g.add_argument("--scale", type=float, default=1.0)
    g.add_argument("--criteria", nargs="+", choices=["prop-pa", "prop-pc", "lie-rank"])
    g.set_defaults(func=cmd_sample)

    b = sub.add_parser("bracket", parents=[common], help="Lie bracket rank at a point")
    b.add_argument("model")
    b.add_argument("--point", help="xi, omega (6 numbers); default rest")
    b.set_defaults(func=cmd_bracket)

    w = sub.add_parser("sphere-build", parents=[common], help="model matrices of a sphere")
    w.add_argument("sphere")
    w.add_argument("--order", type=int, default=24, help="quadrature order")
    w.add_argument("--kinematic", action="store_true", help="emit L = (L1; L2) instead")
    w.set_defaults(func=cmd_sphere_build)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:            # --help / --version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ModelFileError, ValidationError, QuadratureError, SimulationError,
            ValueError, np.linalg.LinAlgError, FileNotFoundError, json.JSONDecodeError,
            KeyError) as exc:
        msg = str(exc) if not isinstance(exc, KeyError) else f"missing field {exc}"
        print(f"ciliate-ctl: {msg}", file=sys.stderr)
        if getattr(args, "json", False):
            sys.stdout.write(json.dumps({"command": args.command, "error": msg}) + "\n")
        return EXIT_INVALID


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
