"""Problem configuration read from INI-style files."""

from __future__ import annotations

import configparser
import hashlib
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .expr import ExprError
from .interval import BoxVec
from .rnis import DEFAULT_ALPHA, LyapunovFn, PlantError, PlantSet
from .synth import DEFAULT_POLE, LyapunovSpec, lyapunov_from_P


class ConfigError(ValueError):
    pass


def _strip(text: str) -> str:
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


def _exprs(text: str) -> list[str]:
    """One expression per non-empty line, quotes optional."""
    return [_strip(line) for line in text.splitlines() if line.strip()]


def _matrix(text: str) -> np.ndarray:
    rows = [r for r in text.replace("\n", ";").split(";") if r.strip()]
    try:
        return np.array([[float(v) for v in r.replace(",", " ").split()] for r in rows])
    except ValueError as exc:
        raise ConfigError(f"bad matrix {text!r}: {exc}") from None


@dataclass
class ProblemConfig:
    n: int
    m: int
    fhat: list[str]
    delta: list[str]
    w_cons: str
    alpha: float = DEFAULT_ALPHA
    eps: float = 1e-3
    threads: int = 1
    lyapunov: str | None = None
    lyap_d: int | None = None
    lyap_P: np.ndarray | None = None
    swarm: int = 20
    budget: int = 30
    seed: int = 0
    pso_eps: float | None = None
    pole: float = DEFAULT_POLE
    use_core: bool = True
    conv_tol: float = 0.01
    grid: int = 2000
    count: int = 200
    steps: int = 200
    policy: str = "fitted"
    adversarial: bool = False
    region: str | None = None
    controller_file: str | None = None
    output: str = "out"
    source: str = field(default="", repr=False)
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    # -- construction ---------------------------------------------------

    @classmethod
    def from_text(cls, text: str, base_dir: Path | str | None = None) -> "ProblemConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        if not cp.has_section("plant"):
            raise ConfigError("missing [plant] section")
        pl = cp["plant"]
        for key in ("n", "m", "fhat", "delta", "w_cons"):
            if key not in pl:
                raise ConfigError(f"[plant] is missing {key}")
        try:
            cfg = cls(
                n=pl.getint("n"),
                m=pl.getint("m"),
                fhat=_exprs(pl["fhat"]),
                delta=_exprs(pl["delta"]),
                w_cons=_strip(pl["w_cons"]),
                alpha=pl.getfloat("alpha", DEFAULT_ALPHA),
                base_dir=Path(base_dir) if base_dir is not None else Path.cwd(),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[plant]: {exc}") from None

        def get(section, key, conv, default):
            if not cp.has_option(section, key):
                return default
            try:
                return conv(cp[section], key)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None

        gf = lambda s, k: s.getfloat(k)  # noqa: E731
        gi = lambda s, k: s.getint(k)  # noqa: E731
        gb = lambda s, k: s.getboolean(k)  # noqa: E731
        gs = lambda s, k: _strip(s[k])  # noqa: E731
        cfg.eps = get("paving", "eps", gf, cfg.eps)
        cfg.threads = get("paving", "threads", gi, cfg.threads)
        cfg.lyapunov = get("lyapunov", "expr", gs, None)
        cfg.lyap_d = get("lyapunov", "d", gi, None)
        if cp.has_option("lyapunov", "P"):
            cfg.lyap_P = _matrix(cp["lyapunov"]["P"])
        cfg.swarm = get("pso", "swarm", gi, cfg.swarm)
        cfg.budget = get("pso", "budget", gi, cfg.budget)
        cfg.seed = get("pso", "seed", gi, cfg.seed)
        cfg.pso_eps = get("pso", "eps", gf, None)
        cfg.pole = get("controller", "pole", gf, cfg.pole)
        cfg.use_core = get("controller", "core", gb, cfg.use_core)
        cfg.conv_tol = get("controller", "conv_tol", gf, cfg.conv_tol)
        cfg.grid = get("controller", "grid", gi, cfg.grid)
        cfg.controller_file = get("controller", "file", gs, None)
        cfg.count = get("sim", "count", gi, cfg.count)
        cfg.steps = get("sim", "steps", gi, cfg.steps)
        cfg.policy = get("sim", "policy", gs, cfg.policy)
        cfg.adversarial = get("sim", "adversarial", gb, cfg.adversarial)
        cfg.region = get("sim", "region", gs, None)
        cfg.output = get("output", "dir", gs, cfg.output)
        cfg.validate()
        cfg.source = cfg.to_text()
        return cfg

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ProblemConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_text(text, base_dir=path.parent)

    def validate(self) -> None:
        if self.lyap_P is not None and self.lyap_d is None:
            raise ConfigError("[lyapunov] P needs d")
        if self.lyapunov is not None and self.lyap_P is not None:
            raise ConfigError("[lyapunov] give either expr or (d, P), not both")
        if self.policy not in ("fitted", "random", "zero"):
            raise ConfigError(f"[sim] policy must be fitted, random or zero, got {self.policy!r}")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.controller_file is not None and not self.resolve(self.controller_file).exists():
            raise ConfigError(f"controller file {self.controller_file} does not exist")
        try:
            self.plant()
        except (ExprError, PlantError):
            raise
        except ValueError as exc:
            raise ConfigError(f"[plant]: {exc}") from None
        self.region_boxes()

    # -- derived objects -----------------------------------------------------

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def plant(self) -> PlantSet:
        return PlantSet.from_strings(self.fhat, self.delta, self.w_cons, self.n, self.m, self.alpha)

    def lyapunov_fn(self) -> LyapunovFn | None:
        if self.lyapunov is not None:
            return LyapunovFn.from_text(self.lyapunov, self.n)
        if self.lyap_P is not None:
            return lyapunov_from_P(LyapunovSpec(self.lyap_P, self.lyap_d, self.n))
        return None

    def region_boxes(self) -> list[BoxVec] | None:
        if self.region is None:
            return None
        parts = [r for r in self.region.replace("\n", ";").split(";") if r.strip()]
        try:
            return [BoxVec.parse(r.strip()) for r in parts]
        except ValueError as exc:
            raise ConfigError(f"[sim] region: {exc}") from None

    # -- serialization -------------------------------------------------------

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        q = lambda s: '"' + s + '"'  # noqa: E731
        cp["plant"] = {
            "n": str(self.n),
            "m": str(self.m),
            "fhat": "\n".join(q(s) for s in self.fhat),
            "delta": "\n".join(q(s) for s in self.delta),
            "w_cons": self.w_cons,
            "alpha": repr(self.alpha),
        }
        cp["paving"] = {"eps": repr(self.eps), "threads": str(self.threads)}
        lyap = {}
        if self.lyapunov is not None:
            lyap["expr"] = q(self.lyapunov)
        if self.lyap_P is not None:
            lyap["d"] = str(self.lyap_d)
            lyap["P"] = "; ".join(" ".join(repr(float(v)) for v in row) for row in self.lyap_P)
        cp["lyapunov"] = lyap
        cp["pso"] = {"swarm": str(self.swarm), "budget": str(self.budget), "seed": str(self.seed)}
        if self.pso_eps is not None:
            cp["pso"]["eps"] = repr(self.pso_eps)
        cp["controller"] = {
            "pole": repr(self.pole),
            "core": str(self.use_core).lower(),
            "conv_tol": repr(self.conv_tol),
            "grid": str(self.grid),
        }
        if self.controller_file is not None:
            cp["controller"]["file"] = self.controller_file
        cp["sim"] = {
            "count": str(self.count),
            "steps": str(self.steps),
            "policy": self.policy,
            "adversarial": str(self.adversarial).lower(),
        }
        if self.region is not None:
            cp["sim"]["region"] = self.region
        cp["output"] = {"dir": self.output}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()
