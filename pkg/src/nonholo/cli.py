"""Command-line front end: ``nonholo <command> --scene FILE [--out DIR] [--seed N] [--force]``.

Exit codes: 0 ok, 1 check or verification failure, 2 usage/schema/IO error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .connection import lift_path, parallel_project
from .errors import AssumptionViolated, InputError, NumericFailure, SceneSchemaError
from .expr import BinOp, Num
from .flow import EventSpec, IntegratorConfig, simulate_gvf
from .gvf import Custom, GuidingField
from .report import Report
from .scene import check_assumptions, sample_tube, theta_on_path
from .scenefile import LoadedScene, read_scene_text, scene_from_dict
from .trajectory import COLUMNS, Trajectory
from .verify import SuiteConfig, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
MANIFEST = "manifest.json"


# ---------------------------------------------------------------------------
# output helpers

def format_row(values) -> str:
    return ",".join("%.17g" % v for v in values)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(format_row(row) + "\n")
    return path


def write_trajectory(path: Path, traj: Trajectory) -> Path:
    return write_csv(path, COLUMNS, traj.table())


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    """One per output directory: what produced the files and their digests."""

    command: str
    config_hash: str
    scene_digest: str
    version: str = __version__
    outputs: list = field(default_factory=list)

    def add(self, path: Path, out_dir: Path):
        self.outputs.append({"file": str(Path(path).relative_to(out_dir)), "sha256": sha256_file(path)})

    def carry(self, done: dict):
        """Keep entries of a resumed run that were not regenerated."""
        have = {o["file"] for o in self.outputs}
        self.outputs += [{"file": f, "sha256": h} for f, h in done.items() if f not in have]

    def to_dict(self) -> dict:
        return {"tool": "nonholo", "version": self.version, "command": self.command,
                "config_hash": self.config_hash, "scene_digest": self.scene_digest,
                "outputs": sorted(self.outputs, key=lambda o: o["file"])}

    def write(self, out_dir: Path) -> Path:
        p = out_dir / MANIFEST
        p.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        return p

    @staticmethod
    def completed(out_dir: Path, config_hash: str) -> dict:
        """Files recorded by a previous run with the same configuration whose digests still match."""
        p = out_dir / MANIFEST
        if not p.exists():
            return {}
        try:
            old = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            return {}
        if old.get("config_hash") != config_hash:
            return {}
        done = {}
        for o in old.get("outputs", []):
            f = out_dir / o["file"]
            if f.exists() and sha256_file(f) == o["sha256"]:
                done[o["file"]] = o["sha256"]
        return done


def config_hash(command: str, raw_scene: dict, options: dict) -> str:
    blob = json.dumps({"command": command, "scene": raw_scene, "options": options, "version": __version__},
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# scene and argument helpers

def load(args) -> LoadedScene:
    text = read_scene_text(args.scene)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneSchemaError(f"scene file is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise SceneSchemaError("scene file must hold a JSON object")
    if getattr(args, "seed", None) is not None:
        raw = dict(raw)
        raw["numerics"] = dict(raw.get("numerics", {}), rng_seed=args.seed)
    if getattr(args, "max_time", None) is not None:
        raw = dict(raw)
        raw["numerics"] = dict(raw.get("numerics", {}), max_time=args.max_time)
    return scene_from_dict(raw, hashlib.sha256(text.encode("utf-8")).hexdigest())


def parse_points(spec: str | None, loaded: LoadedScene, default_count: int) -> np.ndarray:
    """``N`` for N seeded random tube points, inline JSON ``[[x1,x2,x3], ...]``, or a JSON file."""
    scene = loaded.scene
    if spec is None or spec.strip().isdigit():
        n = default_count if spec is None else int(spec)
        if n < 1:
            raise InputError("need at least one start")
        pts, _ = sample_tube(scene, n, scene.numerics.rng_seed, radii=(0.1 * scene.delta, 0.9 * scene.delta))
        return pts
    text = Path(spec).read_text(encoding="utf-8") if Path(spec).exists() else spec
    try:
        pts = np.asarray(json.loads(text), dtype=float)
    except (json.JSONDecodeError, ValueError) as exc:
        raise InputError(f"cannot read points from {spec!r}: {exc}") from None
    pts = pts.reshape(-1, 3) if pts.size % 3 == 0 and pts.size else None
    if pts is None:
        raise InputError("points must be a list of [x1, x2, x3] triples")
    return pts


def prepare_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def gate(loaded: LoadedScene, args) -> Report | None:
    """Run the assumption battery; returns the failing report unless --force."""
    rep = check_assumptions(loaded.scene)
    if not rep.passed and not args.force:
        return rep
    return None


def figures_enabled(args) -> bool:
    return not getattr(args, "no_figures", False)


# ---------------------------------------------------------------------------
# commands

def cmd_check(args) -> int:
    loaded = load(args)
    rep = check_assumptions(loaded.scene)
    print(rep.summary())
    if args.out:
        out = prepare_out(args)
        path = out / "check.json"
        path.write_text(rep.to_json() + "\n", encoding="utf-8")
        man = RunManifest("check", config_hash("check", loaded.raw, {}), loaded.digest)
        man.add(path, out)
        man.write(out)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_trace(args) -> int:
    loaded = load(args)
    poly = loaded.scene.polyline
    out = prepare_out(args)
    theta = 2 * math.pi * poly.cumulative[:-1] / poly.length
    path = write_csv(out / "path.csv", ("x1", "x2", "x3", "theta"),
                     np.column_stack([poly.nodes, theta]))
    man = RunManifest("trace", config_hash("trace", loaded.raw, {}), loaded.digest)
    man.add(path, out)
    if figures_enabled(args):
        from .plotting import path_figure
        man.add(path_figure(poly.nodes, out / "path.png", loaded.scene.name), out)
    man.write(out)
    print(f"path: {len(poly.nodes)} nodes, length {poly.length:.12g}, closure gap {poly.closure_gap:.3g}, "
          f"orientation {poly.orientation_sign:+d}")
    return EXIT_OK


def _gvf_runs(loaded, gf, starts, args, out, prefix, man, done) -> list:
    """Simulate each start unless a matching output exists (resume); returns (file, trajectory|None)."""
    results = []
    scene = loaded.scene
    for i, p in enumerate(starts):
        name = f"{prefix}{i:03d}.csv"
        if args.resume and name in done:
            man.outputs.append({"file": name, "sha256": done[name]})
            results.append((out / name, None))
            continue
        traj = simulate_gvf(scene, gf, [p], require_in_tube=not args.force)[0]
        path = write_trajectory(out / name, traj)
        man.add(path, out)
        results.append((path, traj))
    return results


def cmd_simulate(args) -> int:
    loaded = load(args)
    failing = gate(loaded, args)
    if failing is not None:
        print(failing.summary())
        print("assumption checks fail; use --force to simulate anyway", file=sys.stderr)
        return EXIT_FAIL
    scene = loaded.scene
    starts = parse_points(args.starts, loaded, 5)
    outside = [p for p in starts if scene.H(p) > scene.delta ** 2]
    if outside and not args.force:
        print(f"{len(outside)} start(s) outside the tube (H > {scene.delta ** 2:g}); use --force", file=sys.stderr)
        return EXIT_USAGE
    out = prepare_out(args)
    options = {"starts": starts.tolist()}
    chash = config_hash("simulate", loaded.raw, options)
    done = RunManifest.completed(out, chash) if args.resume else {}
    man = RunManifest("simulate", chash, loaded.digest)
    gf = loaded.field()
    runs = _gvf_runs(loaded, gf, starts, args, out, "traj_", man, done)
    for path, traj in runs:
        if traj is None:
            print(f"{path.name}: up to date, skipped")
        else:
            _, th, _ = traj.theta_samples()
            adv = th[-1] - th[0] if len(th) else math.nan
            print(f"{path.name}: {traj.label}, s_end={traj.s[-1]:.6g}, H_end={traj.H[-1]:.3e}, "
                  f"theta_advance={adv:.6g}, rows={len(traj)}")
    from .plotting import gnuplot_script
    man.add(gnuplot_script([p.name for p, _ in runs], None, out / "trajectories.gp"), out)
    fresh = [t for _, t in runs if t is not None]
    if figures_enabled(args) and fresh:
        from .plotting import trajectories_figure
        man.add(trajectories_figure(fresh, scene.polyline.nodes, out / "trajectories.png", scene.name), out)
    man.carry(done)
    man.write(out)
    return EXIT_OK


def cmd_project(args) -> int:
    loaded = load(args)
    scene = loaded.scene
    pts = parse_points(args.points, loaded, 5)
    out = prepare_out(args)
    rows = []
    for p in pts:
        q = parallel_project(scene, p)
        rows.append([*p, *q, theta_on_path(scene.polyline, q)])
        print(f"{tuple(float(v) for v in p)} -> {q}, theta={rows[-1][-1]:.12g}")
    path = write_csv(out / "project.csv", ("x1", "x2", "x3", "q1", "q2", "q3", "theta"), rows)
    man = RunManifest("project", config_hash("project", loaded.raw, {"points": pts.tolist()}), loaded.digest)
    man.add(path, out)
    man.write(out)
    return EXIT_OK


def cmd_lift(args) -> int:
    loaded = load(args)
    scene = loaded.scene
    start = parse_points(args.start, loaded, 1)[0]
    f0, g0 = scene.fg(start)
    z1, z2 = args.to

    def base(t):
        return ((1 - t) * f0 + t * z1, (1 - t) * g0 + t * z2)

    traj = lift_path(scene, base, start, args.steps, lambda t: (z1 - f0, z2 - g0),
                     enforce_tube=not args.force)
    out = prepare_out(args)
    path = write_trajectory(out / "lift.csv", traj)
    man = RunManifest("lift", config_hash("lift", loaded.raw, {"start": start.tolist(), "to": list(args.to),
                                                                "steps": args.steps}), loaded.digest)
    man.add(path, out)
    man.write(out)
    end = tuple(float(v) for v in traj.end)
    print(f"lift: {len(traj)} rows, end {end}, (f,g)(end)={scene.fg(end)}, "
          f"max tracking error {traj.stats['max_tracking_error']:.3e}, "
          f"max |beta(v)| {traj.stats['max_beta_residual']:.3e}")
    return EXIT_OK


def cmd_verify(args) -> int:
    loaded = load(args)
    gf = None
    if check_assumptions(loaded.scene).passed:
        gf = loaded.field()
    rep = run_suite(loaded.scene, gf, SuiteConfig(starts=args.starts, duality_trials=args.trials))
    print(rep.summary())
    out_path = Path(args.out) if args.out else None
    if out_path is not None:
        out_dir = out_path.parent if out_path.suffix == ".json" else out_path
        out_dir.mkdir(parents=True, exist_ok=True)
        target = out_path if out_path.suffix == ".json" else out_dir / "report.json"
        target.write_text(rep.to_json() + "\n", encoding="utf-8")
        man = RunManifest("verify", config_hash("verify", loaded.raw, {"starts": args.starts,
                                                                      "trials": args.trials}), loaded.digest)
        man.add(target, out_dir)
        man.write(out_dir)
    return EXIT_OK if rep.passed else EXIT_FAIL


def scaled_weights(gf: GuidingField, scale: float) -> Custom:
    w = gf.weights
    return Custom(w.a, BinOp("*", Num(float(scale)), w.b), w.a_lambda, {"scaled_from": w.describe(), "scale": scale})


def sweep_row(scale: float, trajs, target: float) -> dict:
    times, advances, per_log, steps, h_end = [], [], [], [], []
    for t in trajs:
        hit = np.flatnonzero(t.H < target)
        times.append(float(t.s[hit[0]]) if hit.size else math.nan)
        _, th, idx = t.theta_samples()
        adv = float(th[-1] - th[0]) if len(th) else math.nan
        advances.append(adv)
        drop = math.log(t.H[0] / t.H[-1]) if t.H[-1] > 0 and t.H[0] > 0 else math.nan
        per_log.append(adv / drop if drop > 1e-6 else math.nan)
        steps.append(t.stats.get("min_step", math.nan))
        h_end.append(float(t.H[-1]))
    converged = all(math.isfinite(x) for x in times)
    return {"scale": scale, "time_to_target": float(np.mean(times)) if converged else math.nan,
            "target_H": target, "H_end": float(np.mean(h_end)),
            "total_theta_advance": float(np.mean(advances)), "theta_per_log_H": float(np.nanmean(per_log))
            if any(math.isfinite(x) for x in per_log) else math.nan,
            "min_step": float(np.min(steps)), "status": "ok" if converged else "no convergence"}


SWEEP_COLUMNS = ("scale", "time_to_target", "target_H", "H_end", "total_theta_advance", "theta_per_log_H",
                 "min_step")


def cmd_sweep(args) -> int:
    scales = args.b_scale
    if not scales:
        print("sweep needs at least one --b-scale value", file=sys.stderr)
        return EXIT_USAGE
    loaded = load(args)
    failing = gate(loaded, args)
    if failing is not None:
        print(failing.summary())
        return EXIT_FAIL
    scene = loaded.scene
    starts = parse_points(args.starts, loaded, 1)
    out = prepare_out(args)
    chash = config_hash("sweep", loaded.raw, {"scales": scales, "starts": starts.tolist(), "target": args.target_h})
    man = RunManifest("sweep", chash, loaded.digest)
    base = loaded.field()
    rows, files = [], []
    for k, sc in enumerate(scales):
        gf = GuidingField(scene, scaled_weights(base, sc))
        trajs = simulate_gvf(scene, gf, starts, events=EventSpec(None, scene.delta ** 2, None, None),
                             require_in_tube=not args.force)
        for i, t in enumerate(trajs):
            f = write_trajectory(out / f"scale{k:02d}_run{i:03d}.csv", t)
            man.add(f, out)
            files.append(f.name)
        row = sweep_row(sc, trajs, args.target_h)
        rows.append(row)
        print(f"scale {sc:g}: {row['status']}, time to H<{args.target_h:g} = {row['time_to_target']:.6g}, "
              f"H_end={row['H_end']:.3e}, theta advance={row['total_theta_advance']:.6g}")
    path = out / "sweep.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(SWEEP_COLUMNS + ("status",)) + "\n")
        for r in rows:
            fh.write(format_row([r[c] for c in SWEEP_COLUMNS]) + "," + r["status"] + "\n")
    man.add(path, out)
    from .plotting import gnuplot_script
    man.add(gnuplot_script(files, None, out / "sweep.gp"), out)
    if figures_enabled(args):
        from .plotting import sweep_figure
        man.add(sweep_figure(rows, out / "sweep.png"), out)
    man.write(out)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scene", required=True, help="scene JSON file or bundled scene name")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="override the scene's RNG seed")
    common.add_argument("--force", action="store_true", help="run despite failing checks or out-of-tube starts")
    common.add_argument("--resume", action="store_true", help="skip outputs already recorded in the manifest")
    common.add_argument("--no-figures", action="store_true", help="write data and scripts only, no PNGs")
    common.add_argument("--max-time", type=float, help="override the integration time budget")

    parser = argparse.ArgumentParser(prog="nonholo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nonholo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="standing-assumption diagnostics")
    p = sub.add_parser("trace", parents=[common], help="trace the path and write it as CSV")
    p.set_defaults(out="out")
    p = sub.add_parser("simulate", parents=[common], help="guiding-field trajectories")
    p.add_argument("--starts", help="N random tube starts, or JSON list of points / file")
    p.set_defaults(out="out")
    p = sub.add_parser("project", parents=[common], help="parallel projection onto the path")
    p.add_argument("--points", help="N random tube points, or JSON list of points / file")
    p.set_defaults(out="out")
    p = sub.add_parser("lift", parents=[common], help="horizontal lift of a straight base segment")
    p.add_argument("--start", required=True, help="JSON point [x1, x2, x3]")
    p.add_argument("--to", nargs=2, type=float, default=(0.0, 0.0), metavar=("F", "G"))
    p.add_argument("--steps", type=int, default=100)
    p.set_defaults(out="out")
    p = sub.add_parser("verify", parents=[common], help="run the verification suite")
    p.add_argument("--starts", type=int, default=4)
    p.add_argument("--trials", type=int, default=1000)
    p = sub.add_parser("sweep", parents=[common], help="scale the convergence weight and compare runs")
    p.add_argument("--b-scale", type=float, nargs="*", default=None)
    p.add_argument("--starts", help="N random tube starts, or JSON list of points / file")
    p.add_argument("--target-h", type=float, default=1e-6)
    p.set_defaults(out="out")
    return parser


COMMANDS = {"check": cmd_check, "trace": cmd_trace, "simulate": cmd_simulate, "project": cmd_project,
            "lift": cmd_lift, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AssumptionViolated as exc:
        print(f"assumptions violated: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except NumericFailure as exc:
        print(f"numeric failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
