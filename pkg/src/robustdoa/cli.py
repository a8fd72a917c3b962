"""Command-line front end: ``python -m robustdoa <command> -c config.ini``."""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import tempfile
import time
from pathlib import Path

from . import paving as pv
from .config import ConfigError, ProblemConfig
from .expr import ExprError
from .interval import BoxVec
from .rnis import PlantError, estimate_wn, level_set_baseline, rnisevia
from .sim import RandomAdmissible, as_region, batch, trajectories_csv, zero_controller
from .synth import (
    SwarmTrace,
    coefficients,
    extract_controller,
    linear_gain,
    load_controller,
    polynomial_text,
    pso_optimize,
    save_controller,
)

log = logging.getLogger("robustdoa")

COMMANDS = ("pave", "rnis", "levelset", "optimize", "synth", "simulate", "report")
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class RunError(RuntimeError):
    pass


def _intervals_text(runs) -> str:
    return "".join(f"[{float(a)!r},{float(b)!r}]\n" for a, b in runs)


class Run:
    """Artifact directory that only appears once the command succeeds."""

    def __init__(self, outdir: Path, command: str, cfg: ProblemConfig):
        self.cfg = cfg
        self.command = command
        self.final = outdir / f"{command}-{cfg.digest()[:12]}"
        outdir.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{command}-", dir=outdir))
        self.artifacts: list[str] = []
        self.counts: dict[str, int | float] = {}
        self.extra: dict[str, object] = {}
        self.start = time.perf_counter()

    def write(self, name: str, text: str) -> None:
        (self.tmp / name).write_text(text)
        self.artifacts.append(name)

    def commit(self) -> Path:
        self.write("config.ini", self.cfg.to_text())
        manifest = {
            "command": self.command,
            "config_sha256": self.cfg.digest(),
            "seed": self.cfg.seed,
            "eps": self.cfg.eps,
            "alpha": self.cfg.alpha,
            "lyapunov": lyapunov_label(self.cfg),
            "wall_time_s": round(time.perf_counter() - self.start, 2),
            "counts": self.counts,
            "artifacts": sorted(self.artifacts + ["manifest.json"]),
            **self.extra,
        }
        (self.tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        if self.final.exists():
            shutil.rmtree(self.final)
        self.tmp.rename(self.final)
        return self.final

    def abort(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)


def lyapunov_label(cfg: ProblemConfig) -> str:
    if cfg.lyapunov is not None:
        return cfg.lyapunov
    if cfg.lyap_P is not None:
        L = cfg.lyapunov_fn()
        return L.source or "P"
    return ""


def _need_lyapunov(cfg: ProblemConfig):
    L = cfg.lyapunov_fn()
    if L is None:
        raise ConfigError("this command needs a [lyapunov] section (expr, or d and P)")
    return L


def _core(cfg, p):
    if not cfg.use_core:
        return None, None, []
    K, x0 = linear_gain(p, cfg.pole)
    log.info("linear gain K = %s, X0 = %s", K.reshape(-1).tolist(), x0)
    return K, x0, [x0]


def _rnis(cfg, run):
    p = cfg.plant()
    L = _need_lyapunov(cfg)
    K, x0, core = _core(cfg, p)
    res = rnisevia(p, L, cfg.eps, core=core, threads=cfg.threads)
    run.counts.update(
        in_boxes=res.paving.n_in,
        out_boxes=int(res.paving.out_lo.shape[0]),
        boundary_boxes=int(res.paving.bou_lo.shape[0]),
        iterations=res.paving.meta.get("iterations", 0),
        measure=round(pv.measure(res.tree), 12),
    )
    run.write("paving.txt", pv.serialize(res.paving))
    if p.n == 1:
        run.write("projection.txt", _intervals_text(pv.covered_intervals(res.tree)))
    run.write("stats.csv", res.stats_csv())
    if x0 is not None:
        run.extra["X0"] = str(x0)
        run.extra["K"] = K.reshape(-1).tolist()
    return p, L, K, x0, res


def cmd_pave(cfg, run):
    p = cfg.plant()
    L = _need_lyapunov(cfg)
    wn = estimate_wn(p, L, cfg.eps, threads=cfg.threads)
    run.counts.update(in_boxes=wn.n_in, out_boxes=int(wn.out_lo.shape[0]), boundary_boxes=int(wn.bou_lo.shape[0]),
                      evaluations=wn.meta.get("evaluations", 0))
    run.write("paving.txt", pv.serialize(wn))


def cmd_rnis(cfg, run):
    _rnis(cfg, run)


def cmd_levelset(cfg, run):
    p = cfg.plant()
    L = _need_lyapunov(cfg)
    _, x0, core = _core(cfg, p)
    wn = estimate_wn(p, L, cfg.eps, threads=cfg.threads)
    c, boxes = level_set_baseline(p, L, wn, cfg.eps, core=core)
    run.counts.update(level=c, pieces=len(boxes))
    lines = [f"c {c!r}"] + [str(b) for b in boxes]
    run.write("levelset.txt", "\n".join(lines) + "\n")


def cmd_optimize(cfg, run):
    p = cfg.plant()
    d = cfg.lyap_d or 2
    _, _, core = _core(cfg, p)
    init = [cfg.lyap_P] if cfg.lyap_P is not None else []
    trace = SwarmTrace()
    eps = cfg.pso_eps or cfg.eps
    spec = pso_optimize(p, p.n, d, eps, cfg.budget, cfg.seed, swarm=cfg.swarm, init=init, core=core,
                        threads=cfg.threads, trace=trace)
    rows = ["[lyapunov]", f"d = {d}",
            "P = " + "; ".join(" ".join(repr(float(v)) for v in row) for row in spec.P),
            f"# L = {polynomial_text(coefficients(spec))}",
            f"# objective = {spec.objective!r}"]
    run.write("lyapunov.ini", "\n".join(rows) + "\n")
    run.write("trace.csv", "round,best\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(trace.best)))
    run.counts.update(objective=spec.objective, rounds=len(trace.best))


def cmd_synth(cfg, run):
    p, L, K, x0, res = _rnis(cfg, run)
    if K is None:
        raise RunError("synth needs the linear-controller neighborhood ([controller] core = true)")
    ctl = extract_controller(p, res.paving, K, x0)
    report = save_controller(run.tmp / "controller.txt", ctl, p, res.paving, cfg.grid)
    run.artifacts.append("controller.txt")
    run.write("verification.txt", str(report) + "\n")
    run.counts.update(knots=sum(c.knots_x.size for c in ctl.components), components=len(ctl.components))


def _find_controller(cfg, outdir: Path):
    if cfg.controller_file is not None:
        return load_controller(cfg.resolve(cfg.controller_file))
    path = outdir / f"synth-{cfg.digest()[:12]}" / "controller.txt"
    if path.exists():
        log.info("using controller %s", path)
        return load_controller(path)
    return None


def cmd_simulate(cfg, run, outdir: Path):
    p = cfg.plant()
    L = cfg.lyapunov_fn()
    region = cfg.region_boxes()
    if cfg.policy == "zero":
        policy = zero_controller(p.m)
        if region is None:
            region = [p.state_root]
    else:
        policy = _find_controller(cfg, outdir) if cfg.policy == "fitted" else None
        if policy is None or region is None:
            _, L, K, x0, res = _rnis(cfg, run)
            if region is None:
                region = [BoxVec([a], [b]) for a, b in pv.covered_intervals(res.tree)]
            if policy is None:
                if cfg.policy == "random":
                    policy = RandomAdmissible(res.paving, K, x0)
                else:
                    policy = extract_controller(p, res.paving, K, x0)
    summary = batch(p, policy, as_region(region), cfg.count, cfg.steps, cfg.conv_tol, cfg.seed,
                    adversarial=cfg.adversarial, threads=cfg.threads)
    run.write("trajectories.csv", trajectories_csv(summary.trajectories, L))
    run.write("summary.txt", str(summary) + "\n")
    run.counts.update(runs=cfg.count, converged=summary.converged, escaped=summary.escaped,
                      max_steps=summary.max_steps)


def report_table(outdir: Path) -> str:
    """Wall times per Lyapunov function and command from every run manifest."""
    rows = []
    for path in sorted(outdir.glob("*/manifest.json")):
        m = json.loads(path.read_text())
        rows.append((m.get("lyapunov", ""), m["command"], m.get("eps"), m["wall_time_s"], path.parent.name))
    if not rows:
        raise RunError(f"no runs found under {outdir}")
    lines = ["| Lyapunov function | command | eps | wall time (s) | run |", "|---|---|---|---|---|"]
    for lyap, cmd, eps, wall, name in rows:
        lines.append(f"| {lyap} | {cmd} | {eps:g} | {wall:.2f} | {name} |")
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robustdoa", description="Robust domain of attraction synthesis with interval paving.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("-c", "--config", help="problem configuration (INI)")
    ap.add_argument("-o", "--outdir", help="output directory (default: [output] dir of the config)")
    ap.add_argument("--eps", type=float, help="paving resolution")
    ap.add_argument("--alpha", type=float, help="strict decrease margin")
    ap.add_argument("--seed", type=int, help="random seed for optimization and simulation")
    ap.add_argument("--threads", type=int, help="worker threads for paving and simulation")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _load(args) -> ProblemConfig:
    if args.config is None:
        raise ConfigError(f"{args.command} needs -c <config>")
    cfg = ProblemConfig.load(args.config)
    for key in ("eps", "alpha", "seed", "threads"):
        val = getattr(args, key)
        if val is not None:
            setattr(cfg, key, val)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "report":
        outdir = Path(args.outdir or (ProblemConfig.load(args.config).output if args.config else "out"))
        try:
            table = report_table(outdir)
        except RunError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAIL
        (outdir / "report.md").write_text(table)
        print(table, end="")
        return EXIT_OK
    try:
        cfg = _load(args)
    except (ConfigError, ExprError, PlantError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    outdir = Path(args.outdir or cfg.output)
    run = Run(outdir, args.command, cfg)
    try:
        if args.command == "simulate":
            cmd_simulate(cfg, run, outdir)
        else:
            globals()[f"cmd_{args.command}"](cfg, run)
        final = run.commit()
    except (ConfigError, ExprError, PlantError) as exc:
        run.abort()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # any module error: report, clean up, fail
        run.abort()
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(final)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
