"""Command-line front end.

    wvnspec bands --config free.toml --lambda-max 50
    wvnspec exponent --config free_wvn.toml --band 0 --sign minus --side right
    wvnspec model --beta 1 --epsilon-grid 0 --remainder zero --f 1,0,0,0
    wvnspec verify

Data files carry the hash of the run manifest; CSV and JSON are deterministic
given the inputs (17 significant digits).  Exit codes: 0 ok, 1 domain error or
failed verification, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, WvnError
from .potentials import dump_config, free_config, load_config


# --- serialization ----------------------------------------------------------------

def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return "%.17g" % float(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _jsonable(obj.real), "im": _jsonable(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


class _Float17(float):
    def __repr__(self):
        return "%.17g" % self


def _round17(obj):
    if isinstance(obj, dict):
        return {k: _round17(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round17(v) for v in obj]
    if isinstance(obj, float):
        return _Float17(obj)
    return obj


def dumps_json(obj) -> str:
    # hand-rolled so every float prints with exactly 17 significant digits
    return _encode(_round17(_jsonable(obj))) + "\n"


def _encode(obj, indent=0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(obj[k], indent + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, _Float17):
        return repr(obj)
    return json.dumps(obj)


class Run:
    """Collects outputs of one invocation and writes the manifest."""

    def __init__(self, args, cfg_text: str):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        params = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "func", "no_timestamp", "config")}
        payload = json.dumps({"subcommand": args.cmd, "config": cfg_text, "params": params,
                              "version": __version__}, sort_keys=True, default=str)
        self.hash = hashlib.sha256(payload.encode()).hexdigest()[:16]
        self.paths: list[str] = []
        self.t0 = time.time()

    def csv(self, name: str, header, rows) -> Path:
        lines = [f"# manifest: {self.hash}", ",".join(header)]
        lines += [",".join(v if isinstance(v, str) else _num(v) for v in r) for r in rows]
        return self._write(name, "\n".join(lines) + "\n")

    def json(self, name: str, obj) -> Path:
        return self._write(name, dumps_json({"manifest": self.hash, **obj}))

    def _write(self, name, text) -> Path:
        p = self.out / name
        p.write_text(text, encoding="utf-8")
        self.paths.append(p.name)
        return p

    def finish(self):
        m = {"subcommand": self.args.cmd, "config_hash": self.hash, "version": __version__, "outputs": self.paths}
        if not self.args.no_timestamp:
            m["wall_clock_s"] = round(time.time() - self.t0, 3)
            m["started"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(self.t0))
        (self.out / "manifest.json").write_text(json.dumps(m, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        for p in self.paths:
            print(self.out / p)


def _config(args):
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        cfg = free_config()
    return cfg, dump_config(cfg)


# --- subcommands --------------------------------------------------------------------

def cmd_bands(args):
    from .floquet import band_edges

    cfg, text = _config(args)
    bs = band_edges(cfg.periodic, args.lambda_max)
    run = Run(args, text)
    run.csv("bands.csv", ["j", "edge_low", "edge_high"], [(j, lo, hi) for j, (lo, hi) in enumerate(bs.bands)])
    return run


def cmd_bloch(args):
    from .floquet import bloch_data

    cfg, text = _config(args)
    b = bloch_data(cfg.periodic, args.lam, args.band)
    ls = list(range(-b.l_max, b.l_max + 1))
    run = Run(args, text)
    run.json("bloch.json", {"lambda": b.lam, "band": b.band_index, "k": b.k, "W": b.wronskian,
                            "l": ls, "b": b.fourier_b, "b_plus": b.fourier_b_plus})
    return run


def cmd_resonances(args):
    from dataclasses import replace

    from .resonance import all_resonance_points, critical_alpha

    cfg, text = _config(args)
    pts = all_resonance_points(cfg.periodic, cfg.wvn, args.j_max)
    rows = []
    for p in pts:
        acr = ""
        if args.alpha_cr and p.pseudogap:
            p = replace(p, alpha_cr=critical_alpha(cfg, p))
            acr = p.alpha_cr
        if not p.pseudogap:
            print(f"band {p.band_index} nu_{p.sign_label} = {p.nu:.12g}: no pseudogap predicted (beta = 0)",
                  file=sys.stderr)
        rows.append((p.band_index, p.sign_label, p.nu, p.beta, acr))
    run = Run(args, text)
    run.csv("resonances.csv", ["j", "sign", "nu", "beta", "alpha_cr"], rows)
    return run


def cmd_density(args):
    from .spectral import density_sweep

    cfg, text = _config(args)
    if args.points < 1 or not args.lambda_max >= args.lambda_min:
        raise ConfigError("need --points >= 1 and --lambda-max >= --lambda-min")
    lams = np.linspace(args.lambda_min, args.lambda_max, args.points)
    kw = {} if args.alpha is None else {"alpha": args.alpha}
    samples = density_sweep(cfg, lams, args.band, **kw)
    run = Run(args, text)
    run.csv("density.csv", ["lambda", "rho_prime", "abs_A", "est_error", "converged"],
            [(s.lam, s.rho_prime, abs(s.A), s.est_error, s.converged) for s in samples])
    return run


def _pick(cfg, band, sign):
    from .resonance import resonance_points

    rp, rm = resonance_points(cfg.periodic, cfg.wvn, band)
    return rp if sign == "plus" else rm


def cmd_exponent(args):
    from .spectral import exponent_fit
    from .svg import emit_svg

    cfg, text = _config(args)
    rp = _pick(cfg, args.band, args.sign)
    if not rp.pseudogap:
        raise WvnError(f"nu = {rp.nu:.12g} has beta = 0: no pseudogap predicted")
    fit = exponent_fit(cfg, rp, args.side, n_points=args.points, decades=args.decades,
                       d_min=args.d_min, d_max=args.d_max)
    run = Run(args, text)
    run.json("exponent.json", {"band": args.band, "sign": args.sign, "beta": rp.beta, **fit.to_dict()})
    if args.svg:
        emit_svg(fit, run.out / "exponent.svg", timestamp=not args.no_timestamp)
        run.paths.append("exponent.svg")
    return run


def _parse_f(text: str) -> np.ndarray:
    try:
        v = [float(t) for t in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"--f: expected re,im,re,im; got {text!r}") from exc
    if len(v) != 4:
        raise ConfigError(f"--f: expected 4 numbers re,im,re,im; got {len(v)}")
    return np.array([v[0] + 1j * v[1], v[2] + 1j * v[3]])


def _parse_grid(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"--epsilon-grid: bad list {text!r}") from exc


def _model_family(args, cfg):
    """eps -> ModelParams for the chosen remainder kind."""
    from .model_system.recursion import ModelParams, RemainderSeq

    if args.remainder == "zero":
        return lambda e: ModelParams(args.beta, e)
    if args.remainder == "synthetic":
        rem = RemainderSeq.synthetic(args.amplitude, args.power)
        return lambda e: ModelParams(args.beta, e, rem)
    # operator: eps = 2 (k(lambda) - k(nu)) fixes lambda; beta comes from the operator
    from scipy.optimize import brentq

    from .floquet import quasimomentum
    from .model_system.density import default_remainder_horizon
    from .model_system.harris_lutz import reduce_to_model

    rp = _pick(cfg, args.band, args.sign)
    lo, hi = rp.band
    pad = 1e-9 * (hi - lo)

    def lam_of(eps):
        if eps == 0:
            return rp.nu
        target = rp.k_target + 0.5 * eps
        a, b = (rp.nu, hi - pad) if eps > 0 else (lo + pad, rp.nu)
        g = lambda l: quasimomentum(cfg.periodic, l, rp.band_index, check=False) - target  # noqa: E731
        if g(a) * g(b) > 0:
            raise ConfigError(f"epsilon {eps} leaves band {rp.band_index}")
        return brentq(g, a, b, xtol=1e-15)

    def fam(eps):
        red = reduce_to_model(cfg, rp, lam_of(eps), args.n_remainder or default_remainder_horizon(eps or 1e-3))
        tail = float(np.linalg.norm(red.remainder[-1], 2)) * len(red.remainder)
        return ModelParams(red.beta, red.epsilon, RemainderSeq.operator(red.remainder, tail), 1)

    return fam


def cmd_model(args):
    from .model_system.recursion import run_recursion, theta_map
    from .model_system.slow_scale import volterra_solve
    from .svg import emit_svg

    cfg, text = (None, "")
    if args.remainder == "operator":
        cfg, text = _config(args)
    f = _parse_f(args.f)
    fam = _model_family(args, cfg)
    grid = _parse_grid(args.epsilon_grid)
    if not grid:
        raise ConfigError("--epsilon-grid is empty")
    runs = []
    for e in grid:
        p = fam(e)
        r = run_recursion(p, f)
        runs.append({"epsilon": p.epsilon, "beta": p.beta, "remainder": p.remainder.kind, "n_start": p.n_start,
                     "n_max": r.n_max, "limit_u": r.limit_u, "limit_error": r.limit_error,
                     "converged": r.converged, "c3": r.c3, "max_product_norm": r.max_product_norm})
    run = Run(args, text)
    report = {"f": f, "runs": runs}
    p0 = fam(0.0)
    h0 = theta_map(p0).theta @ f
    trajs = {}
    for s, name in ((1, "plus"), (-1, "minus")):
        if args.ymax > 0:
            t = volterra_solve(p0.beta, s, h0, args.ymax, args.step)
            trajs[name] = t
            report[f"h_{name}_limit"] = t.limit
            report[f"h_{name}_limit_error"] = t.limit_error
    report["h0"] = h0
    run.json("model.json", report)
    for name, t in trajs.items():
        stride = max(1, (len(t.y) - 1) // args.samples)
        idx = np.arange(0, len(t.y), stride)
        rows = [(t.y[i], t.h[i, 0].real, t.h[i, 0].imag, t.h[i, 1].real, t.h[i, 1].imag) for i in idx]
        run.csv(f"trajectory_{name}.csv", ["y", "h1_re", "h1_im", "h2_re", "h2_im"], rows)
        if args.svg:
            emit_svg((t.y[idx], t.h[idx]), run.out / f"trajectory_{name}.svg", timestamp=not args.no_timestamp,
                     title=f"slow-scale trajectory h_{name}, beta = {p0.beta:g}")
            run.paths.append(f"trajectory_{name}.svg")
    return run


def cmd_verify(args):
    from .acceptance import CRITERIA, run_criteria

    sel = args.criteria or sorted(CRITERIA)
    bad = [n for n in sel if n not in CRITERIA]
    if bad:
        raise ConfigError(f"unknown criteria {bad}; choose from 1-9")
    results = run_criteria(sel, echo=print)
    run = Run(args, "")
    run.json("verify.json", {"results": [{"number": r.number, "title": r.title, "passed": r.passed,
                                          "detail": r.detail} for r in results]})
    run.failed = not all(r.passed for r in results)
    return run


# --- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wvnspec", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"wvnspec {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file ([periodic], [wvn], [q1], [boundary])")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--no-timestamp", action="store_true", help="omit wall-clock data from manifest and SVG")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("bands", parents=[common], help="band edges up to --lambda-max")
    s.add_argument("--lambda-max", type=float, required=True)
    s.set_defaults(func=cmd_bands)

    s = sub.add_parser("bloch", parents=[common], help="Bloch data at one spectral point")
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--band", type=int)
    s.set_defaults(func=cmd_bloch)

    s = sub.add_parser("resonances", parents=[common], help="resonance points and beta")
    s.add_argument("--j-max", type=int, default=2)
    s.add_argument("--alpha-cr", action="store_true", help="also compute the critical boundary parameter")
    s.set_defaults(func=cmd_resonances)

    s = sub.add_parser("density", parents=[common], help="spectral density on a uniform grid")
    s.add_argument("--lambda-min", type=float, required=True)
    s.add_argument("--lambda-max", type=float, required=True)
    s.add_argument("--points", type=int, default=11)
    s.add_argument("--alpha", type=float)
    s.add_argument("--band", type=int)
    s.set_defaults(func=cmd_density)

    s = sub.add_parser("exponent", parents=[common], help="power-law fit at a resonance point")
    s.add_argument("--band", type=int, default=0)
    s.add_argument("--sign", choices=("plus", "minus"), default="minus")
    s.add_argument("--side", choices=("left", "right"), default="right")
    s.add_argument("--decades", type=float, default=2.0)
    s.add_argument("--points", type=int)
    s.add_argument("--d-min", type=float)
    s.add_argument("--d-max", type=float)
    s.add_argument("--svg", action="store_true", help="also write a log-log plot")
    s.set_defaults(func=cmd_exponent)

    s = sub.add_parser("model", parents=[common], help="discrete model system and slow-scale limit")
    s.add_argument("--beta", type=float, default=0.25)
    s.add_argument("--epsilon-grid", default="0")
    s.add_argument("--remainder", choices=("zero", "synthetic", "operator"), default="zero")
    s.add_argument("--f", default="1,0,0,0", help="initial vector re,im,re,im")
    s.add_argument("--ymax", type=float, default=0.0, help="slow-scale horizon (0: no trajectory)")
    s.add_argument("--step", type=float, default=1e-3)
    s.add_argument("--samples", type=int, default=2000, help="trajectory rows per CSV (about)")
    s.add_argument("--amplitude", type=float, default=0.1, help="synthetic remainder amplitude")
    s.add_argument("--power", type=float, default=2.0, help="synthetic remainder decay power")
    s.add_argument("--band", type=int, default=0, help="operator remainder: band of the resonance")
    s.add_argument("--sign", choices=("plus", "minus"), default="minus")
    s.add_argument("--n-remainder", type=int)
    s.add_argument("--svg", action="store_true")
    s.set_defaults(func=cmd_model)

    s = sub.add_parser("verify", parents=[common], help="run the acceptance criteria")
    s.add_argument("criteria", nargs="*", type=int)
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        run = args.func(args)
        run.finish()
    except WvnError as exc:
        print(f"wvnspec {args.cmd}: error: {exc}", file=sys.stderr)
        return 1
    return 1 if getattr(run, "failed", False) else 0


if __name__ == "__main__":
    sys.exit(main())
