"""Potentials and problem configuration.

The operator is -y'' + V(x) y on the half-line with

    V(x) = q(x) + c sin(2 omega x + delta) / (x + 1) + q1(x)

where q is a-periodic, the middle term is the Wigner-von Neumann tail and
q1 is summable.  Configuration files use an INI-style ``key = value``
layout with sections ``[periodic]``, ``[wvn]``, ``[q1]`` and ``[boundary]``.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError

TOL_FREQ = 1e-9

FOURIER = "fourier"
STEP = "step"


def _as_tuple(values) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class PeriodicPotential:
    """An a-periodic potential.

    Two representations are supported.  ``kind == "fourier"``:

        q(x) = sum_m A_m cos(2 pi m x / a) + sum_{m>=1} B_m sin(2 pi m x / a)

    with ``fourier_cos = (A_0, A_1, ...)`` and ``fourier_sin = (B_1, B_2, ...)``.
    ``kind == "step"``: a left-continuous step function taking the value
    ``step_values[i]`` on ``(step_nodes[i], step_nodes[i+1]]`` where
    ``step_nodes[0] = 0`` and the last cell closes at ``a``.
    """

    period: float
    fourier_cos: tuple[float, ...] = ()
    fourier_sin: tuple[float, ...] = ()
    step_nodes: tuple[float, ...] | None = None
    step_values: tuple[float, ...] | None = None
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.period) and self.period > 0):
            raise ConfigError(f"periodic.a must be a positive finite number, got {self.period!r}")
        object.__setattr__(self, "fourier_cos", _as_tuple(self.fourier_cos))
        object.__setattr__(self, "fourier_sin", _as_tuple(self.fourier_sin))
        if self.step_nodes is not None or self.step_values is not None:
            if self.fourier_cos or self.fourier_sin:
                raise ConfigError("periodic: give either Fourier coefficients or a sample table, not both")
            nodes = _as_tuple(self.step_nodes or ())
            vals = _as_tuple(self.step_values or ())
            if len(nodes) != len(vals) or not nodes:
                raise ConfigError("periodic.samples: x and q columns must be non-empty and of equal length")
            if abs(nodes[0]) > 0:
                raise ConfigError("periodic.samples: first node must be x = 0")
            if any(b <= a_ for a_, b in zip(nodes, nodes[1:])) or nodes[-1] >= self.period:
                raise ConfigError("periodic.samples: nodes must increase strictly inside [0, a)")
            object.__setattr__(self, "step_nodes", nodes)
            object.__setattr__(self, "step_values", vals)
        for v in self.fourier_cos + self.fourier_sin + (self.step_values or ()):
            if not math.isfinite(v):
                raise ConfigError("periodic: coefficients must be finite")

    @property
    def kind(self) -> str:
        return STEP if self.step_nodes is not None else FOURIER

    @property
    def a(self) -> float:
        return self.period

    @property
    def is_constant(self) -> bool:
        if self.kind == STEP:
            return len(set(self.step_values)) == 1
        return all(v == 0.0 for v in self.fourier_cos[1:]) and all(v == 0.0 for v in self.fourier_sin)

    @property
    def mean(self) -> float:
        if self.kind == STEP:
            w = np.diff(np.append(self.step_nodes, self.period))
            return float(np.dot(w, self.step_values) / self.period)
        return self.fourier_cos[0] if self.fourier_cos else 0.0

    def pieces(self) -> list[tuple[float, float, float]]:
        """Constant pieces ``(x_start, x_end, value)`` covering one period (step kind)."""
        if self.kind != STEP:
            if self.is_constant:
                return [(0.0, self.period, self.mean)]
            raise ValueError("pieces() is only defined for piecewise-constant potentials")
        ends = list(self.step_nodes[1:]) + [self.period]
        return list(zip(self.step_nodes, ends, self.step_values))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == STEP:
            # reduce to (0, a] so that cell boundaries take the left value
            s = self.period - np.mod(-x, self.period)
            idx = np.searchsorted(np.asarray(self.step_nodes), s, side="left") - 1
            idx = np.where(idx < 0, len(self.step_values) - 1, idx)
            out = np.asarray(self.step_values)[idx]
        else:
            s = np.mod(x, self.period)
            th = 2.0 * np.pi * s / self.period
            out = np.zeros_like(s)
            for m, A in enumerate(self.fourier_cos):
                if A:
                    out = out + A * np.cos(m * th)
            for m, B in enumerate(self.fourier_sin, start=1):
                if B:
                    out = out + B * np.sin(m * th)
        return out if out.ndim else float(out)

    def sup_norm(self) -> float:
        if self.kind == STEP:
            return max(abs(v) for v in self.step_values)
        return sum(abs(v) for v in self.fourier_cos) + sum(abs(v) for v in self.fourier_sin)

    @cached_property
    def l1_norm_per_period(self) -> float:
        if self.kind == STEP:
            return float(sum(abs(v) * (e - s) for s, e, v in self.pieces()))
        if self.is_constant:
            return abs(self.mean) * self.period
        # trigonometric polynomial: a uniform periodic rule resolves |q| well
        # once the grid is much finer than the highest harmonic
        deg = max(len(self.fourier_cos), len(self.fourier_sin) + 1)
        n = max(4096, 64 * deg)
        x = np.arange(n) * (self.period / n)
        return float(np.mean(np.abs(self(x))) * self.period)


@dataclass(frozen=True)
class WvnTerm:
    """Wigner-von Neumann term ``c sin(2 omega x + delta) / (x + 1)``."""

    c: float
    omega: float
    delta: float = 0.0

    def __post_init__(self):
        for name in ("c", "omega", "delta"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"wvn.{name} must be finite")
        if self.omega <= 0:
            raise ConfigError(f"wvn.omega must be positive, got {self.omega!r}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self.c * np.sin(2.0 * self.omega * x + self.delta) / (x + 1.0)
        return out if out.ndim else float(out)


def frequency_defect(a: float, omega: float) -> float:
    """Distance of 2 a omega / pi to the nearest integer."""
    r = 2.0 * a * omega / math.pi
    return abs(r - round(r))


def check_non_resonant(a: float, omega: float, tol: float = TOL_FREQ) -> float:
    d = frequency_defect(a, omega)
    if d < tol:
        raise ConfigError(
            f"resonant frequency: 2*a*omega/pi = {2 * a * omega / math.pi!r} is within {tol:g} of an integer"
        )
    return d


ZERO = "zero"
TABLE = "compactly_supported_table"
EXPONENTIAL = "exponential_envelope"


@dataclass(frozen=True)
class SummablePerturbation:
    """Summable perturbation q1.

    * ``zero``: q1 = 0.
    * ``compactly_supported_table``: left-continuous step function with value
      ``values[i]`` on ``(nodes[i], nodes[i+1]]``, zero beyond ``nodes[-1]``;
      ``len(nodes) == len(values) + 1``.
    * ``exponential_envelope``: ``amplitude * exp(-rate x) * cos(freq x + phase)``.
    """

    kind: str = ZERO
    nodes: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    amplitude: float = 0.0
    rate: float = 1.0
    freq: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "nodes", _as_tuple(self.nodes))
        object.__setattr__(self, "values", _as_tuple(self.values))
        if self.kind not in (ZERO, TABLE, EXPONENTIAL):
            raise ConfigError(f"q1.kind must be one of zero, {TABLE}, {EXPONENTIAL}; got {self.kind!r}")
        if self.kind == TABLE:
            if len(self.nodes) != len(self.values) + 1 or not self.values:
                raise ConfigError("q1: table needs len(nodes) == len(values) + 1 >= 2")
            if self.nodes[0] < 0 or any(b <= a_ for a_, b in zip(self.nodes, self.nodes[1:])):
                raise ConfigError("q1.nodes must be nonnegative and strictly increasing")
        if self.kind == EXPONENTIAL and not self.rate > 0:
            raise ConfigError("q1.rate must be positive")

    @property
    def support_end(self) -> float:
        if self.kind == TABLE:
            return self.nodes[-1]
        return 0.0 if self.kind == ZERO else math.inf

    @property
    def l1_bound(self) -> float:
        if self.kind == ZERO:
            return 0.0
        if self.kind == TABLE:
            return float(sum(abs(v) * (b - a_) for v, a_, b in zip(self.values, self.nodes, self.nodes[1:])))
        return abs(self.amplitude) / self.rate

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == ZERO:
            out = np.zeros_like(x)
        elif self.kind == TABLE:
            idx = np.searchsorted(np.asarray(self.nodes), x, side="left") - 1
            inside = (idx >= 0) & (idx < len(self.values))
            out = np.where(inside, np.asarray(self.values)[np.clip(idx, 0, len(self.values) - 1)], 0.0)
        else:
            out = self.amplitude * np.exp(-self.rate * x) * np.cos(self.freq * x + self.phase)
        return out if out.ndim else float(out)

    def breakpoints(self) -> tuple[float, ...]:
        return self.nodes if self.kind == TABLE else ()


@dataclass(frozen=True)
class ProblemConfig:
    periodic: PeriodicPotential
    wvn: WvnTerm
    q1: SummablePerturbation = SummablePerturbation()
    alpha: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.alpha < math.pi):
            raise ConfigError(f"boundary.alpha must lie in [0, pi), got {self.alpha!r}")
        if self.wvn.c != 0.0:
            check_non_resonant(self.periodic.period, self.wvn.omega)

    @property
    def frequency_margin(self) -> float:
        return frequency_defect(self.periodic.period, self.wvn.omega)

    def with_alpha(self, alpha: float) -> "ProblemConfig":
        return ProblemConfig(self.periodic, self.wvn, self.q1, float(alpha))

    def with_wvn(self, **kw) -> "ProblemConfig":
        d = dict(c=self.wvn.c, omega=self.wvn.omega, delta=self.wvn.delta)
        d.update(kw)
        return ProblemConfig(self.periodic, WvnTerm(**d), self.q1, self.alpha)


def evaluate_total(cfg: ProblemConfig, x):
    """Total potential q(x) + c sin(2 omega x + delta)/(x+1) + q1(x)."""
    return cfg.periodic(x) + cfg.wvn(x) + cfg.q1(x)


def free_config(a=1.0, c=0.0, omega=1.0, delta=0.0, alpha=0.0) -> ProblemConfig:
    return ProblemConfig(PeriodicPotential(a), WvnTerm(c, omega, delta), SummablePerturbation(), alpha)


# --- text format -----------------------------------------------------------

def _parse_list(text: str, key: str) -> tuple[float, ...]:
    s = text.strip()
    if s.startswith("["):
        if not s.endswith("]"):
            raise ConfigError(f"{key}: unterminated list {text!r}")
        s = s[1:-1]
    if not s.strip():
        return ()
    try:
        return tuple(float(t) for t in s.replace("\n", " ").split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse list {text!r}") from exc


def _get_float(sec, key: str, where: str, default=None) -> float:
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing key {where}.{key}")
        return default
    raw = sec[key].strip()
    try:
        return float(eval_number(raw))
    except ValueError as exc:
        raise ConfigError(f"{where}.{key}: not a number: {raw!r}") from exc


def eval_number(raw: str) -> float:
    """Parse a float, also accepting ``pi`` multiples such as ``pi/2`` or ``0.5*pi``."""
    raw = raw.strip().strip('"').strip("'")
    try:
        return float(raw)
    except ValueError:
        pass
    expr = raw.replace(" ", "")
    if "pi" not in expr:
        raise ValueError(raw)
    num, den = expr, "1"
    if "/" in expr:
        num, den = expr.split("/", 1)
    factor = num.replace("pi", "").rstrip("*") or "1"
    if factor in ("-", "+"):
        factor += "1"
    return float(factor) * math.pi / float(den)


def read_samples_csv(path: Path) -> tuple[tuple[float, ...], tuple[float, ...]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"periodic.samples: cannot read {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ConfigError(f"periodic.samples: {path} is empty")
    header = [h.strip().lower() for h in rows[0]]
    if header[:2] != ["x", "q"]:
        raise ConfigError(f"periodic.samples: {path} must start with header 'x,q'")
    xs, qs = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or not "".join(row).strip():
            continue
        try:
            xs.append(float(row[0]))
            qs.append(float(row[1]))
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"periodic.samples: {path}:{lineno}: bad row {row!r}") from exc
    return tuple(xs), tuple(qs)


def load_config(source, base_dir=None) -> ProblemConfig:
    """Load a configuration from a path or from the text itself.

    ``source`` is treated as a path when it is a ``Path`` or a string naming an
    existing file; otherwise it is parsed as configuration text.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and os.path.isfile(source)):
        path = Path(source)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        base_dir = base_dir or path.parent
    else:
        text = str(source)
    base_dir = Path(base_dir or ".")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc

    for sec in parser.sections():
        if sec not in ("periodic", "wvn", "q1", "boundary"):
            raise ConfigError(f"unknown section [{sec}]")
    if "periodic" not in parser:
        raise ConfigError("missing section [periodic]")
    per = parser["periodic"]
    a = _get_float(per, "a", "periodic")
    if "samples" in per:
        if "fourier_cos" in per or "fourier_sin" in per:
            raise ConfigError("periodic: give either Fourier coefficients or samples, not both")
        spath = Path(per["samples"].strip().strip('"').strip("'"))
        if not spath.is_absolute():
            spath = base_dir / spath
        xs, qs = read_samples_csv(spath)
        periodic = PeriodicPotential(a, step_nodes=xs, step_values=qs, source=str(spath))
    else:
        periodic = PeriodicPotential(
            a,
            _parse_list(per.get("fourier_cos", ""), "periodic.fourier_cos"),
            _parse_list(per.get("fourier_sin", ""), "periodic.fourier_sin"),
        )

    w = parser["wvn"] if "wvn" in parser else {}
    wvn = WvnTerm(_get_float(w, "c", "wvn", 0.0), _get_float(w, "omega", "wvn", 1.0),
                  _get_float(w, "delta", "wvn", 0.0))

    q1 = SummablePerturbation()
    if "q1" in parser:
        s = parser["q1"]
        kind = s.get("kind", ZERO).strip().strip('"')
        if kind == TABLE:
            q1 = SummablePerturbation(TABLE, nodes=_parse_list(s.get("nodes", ""), "q1.nodes"),
                                      values=_parse_list(s.get("values", ""), "q1.values"))
        elif kind == EXPONENTIAL:
            q1 = SummablePerturbation(EXPONENTIAL, amplitude=_get_float(s, "amplitude", "q1"),
                                      rate=_get_float(s, "rate", "q1"), freq=_get_float(s, "freq", "q1", 0.0),
                                      phase=_get_float(s, "phase", "q1", 0.0))
        else:
            q1 = SummablePerturbation(kind)

    alpha = 0.0
    if "boundary" in parser:
        alpha = _get_float(parser["boundary"], "alpha", "boundary", 0.0)
    return ProblemConfig(periodic, wvn, q1, alpha)


def _fmt_list(vals: Sequence[float]) -> str:
    return "[" + ", ".join(repr(float(v)) for v in vals) + "]"


def dump_config(cfg: ProblemConfig, samples_path=None) -> str:
    """Serialize ``cfg`` to the text format accepted by :func:`load_config`.

    Floats are written with ``repr`` so a round trip is exact.  Step potentials
    are written inline as a sample file at ``samples_path`` (or the original
    source file when unchanged).
    """
    p = cfg.periodic
    lines = ["[periodic]", f"a = {p.period!r}"]
    if p.kind == STEP:
        target = samples_path or p.source
        if target is None:
            raise ConfigError("dump_config: a step potential needs samples_path")
        if samples_path is not None:
            body = "x,q\n" + "".join(f"{x!r},{v!r}\n" for x, v in zip(p.step_nodes, p.step_values))
            Path(samples_path).write_text(body, encoding="utf-8")
        lines.append(f"samples = {target}")
    else:
        lines.append(f"fourier_cos = {_fmt_list(p.fourier_cos)}")
        lines.append(f"fourier_sin = {_fmt_list(p.fourier_sin)}")
    w = cfg.wvn
    lines += ["", "[wvn]", f"c = {w.c!r}", f"omega = {w.omega!r}", f"delta = {w.delta!r}", "", "[q1]",
              f"kind = {cfg.q1.kind}"]
    q = cfg.q1
    if q.kind == TABLE:
        lines += [f"nodes = {_fmt_list(q.nodes)}", f"values = {_fmt_list(q.values)}"]
    elif q.kind == EXPONENTIAL:
        lines += [f"amplitude = {q.amplitude!r}", f"rate = {q.rate!r}", f"freq = {q.freq!r}",
                  f"phase = {q.phase!r}"]
    lines += ["", "[boundary]", f"alpha = {cfg.alpha!r}", ""]
    return "\n".join(lines)
