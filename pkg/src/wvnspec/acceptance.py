"""Acceptance checks shared by ``wvnspec verify`` and the test-suite.

Each check returns a CriterionResult; runtime bounds are part of the verdict
where a hard bound is stated.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

from .floquet import band_edges
from .potentials import PeriodicPotential, ProblemConfig, WvnTerm, free_config


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float
    time_limit: float | None = None
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        lim = f" (limit {self.time_limit:g} s)" if self.time_limit else ""
        return f"{verdict} [{self.number}] {self.title}: {self.detail} [{self.seconds:.1f} s{lim}]"


def _timed(number, title, limit, fn) -> CriterionResult:
    t0 = time.perf_counter()
    ok, detail, data = fn()
    dt = time.perf_counter() - t0
    if limit is not None and dt > limit:
        ok = False
        detail += f"; runtime {dt:.1f} s exceeds {limit:g} s"
    return CriterionResult(number, title, bool(ok), detail, dt, limit, data)


def mathieu_config(two_beta: float = 0.75, omega: float = 0.3):
    """q = 2 cos x (a = 2 pi) with c scaled so that band-0 nu_- has the given 2 beta."""
    from .resonance import resonance_points

    q = PeriodicPotential(2 * math.pi, (0.0, 2.0))
    _, rm = resonance_points(q, WvnTerm(1.0, omega, 0.0), 0)
    c = two_beta / (2.0 * rm.beta)
    cfg = ProblemConfig(q, WvnTerm(c, omega, 0.0))
    _, rm = resonance_points(q, cfg.wvn, 0)
    return cfg, rm


MATHIEU_D_SCALE = 1e-2


# --- criteria ----------------------------------------------------------------------

def criterion_1() -> CriterionResult:
    def run():
        bs = band_edges(PeriodicPotential(1.0), 100.0)
        edges = sorted({e for band in bs.bands for e in band})
        errs = [min(abs(e - (math.pi * j) ** 2) for e in edges) for j in range(4)]
        worst = max(errs)
        return worst < 1e-8, f"max |edge - (pi j)^2| = {worst:.2e} for j <= 3 (tol 1e-8)", {"errors": errs}
    return _timed(1, "free-case band structure", 5.0, run)


def criterion_2() -> CriterionResult:
    from .resonance import all_resonance_points

    def run():
        cfg = free_config(1.0, 1.0, 1.0, 0.0)
        pts = all_resonance_points(cfg.periodic, cfg.wvn, 2)
        pos = [p for p in pts if p.beta > 1e-10]
        plus_max = max(p.beta for p in pts if p.sign > 0)
        ok = (len(pos) == 1 and abs(pos[0].nu - 1.0) <= 1e-9 and abs(pos[0].beta - 0.25) <= 1e-9
              and plus_max < 1e-10)
        if len(pos) == 1:
            detail = f"nu = {pos[0].nu:.12f}, beta = {pos[0].beta:.12f}, max beta(+) = {plus_max:.1e}"
        else:
            detail = f"{len(pos)} points with beta > 0"
        return ok, detail, {"points": [(p.band_index, p.sign, p.nu, p.beta) for p in pts]}
    return _timed(2, "free-case resonance", 10.0, run)


def criterion_3(workers=None) -> CriterionResult:
    from .resonance import resonance_points
    from .spectral import default_d_max, exponent_fit

    def run():
        cfg = free_config(1.0, 1.0, 1.0, 0.0, 0.0)
        _, rm = resonance_points(cfg.periodic, cfg.wvn, 0)
        fits = {s: exponent_fit(cfg, rm, s, d_min=1e-3, d_max=1e-1, workers=workers) for s in ("left", "right")}
        ok = all(abs(f.fitted_exponent - 0.5) <= 0.025 and f.r_squared > 0.999
                 and 0 < f.fitted_C < math.inf for f in fits.values())
        mcfg, mrm = mathieu_config()
        # innermost decade only: the sibling point and the edge bend the curve farther out
        md = MATHIEU_D_SCALE * default_d_max(mrm)
        mfits = {s: exponent_fit(mcfg, mrm, s, d_max=md, decades=1, workers=workers) for s in ("left", "right")}
        pred = 2 * mrm.beta
        mok = all(abs(f.fitted_exponent - pred) <= 0.1 * pred for f in mfits.values())
        detail = ("free: " + ", ".join(f"{s} {f.fitted_exponent:.4f} (r2 {f.r_squared:.5f})" for s, f in fits.items())
                  + f"; Mathieu 2beta={pred:.4f}: "
                  + ", ".join(f"{s} {f.fitted_exponent:.4f}" for s, f in mfits.items()))
        data = {"free": {s: f.to_dict() for s, f in fits.items()},
                "mathieu": {s: f.to_dict() for s, f in mfits.items()}, "mathieu_c": mcfg.wvn.c}
        return ok and mok, detail, data
    return _timed(3, "power-law zero", None, run)


def criterion_4() -> CriterionResult:
    from .model_system.recursion import ModelParams, theta_map

    def run():
        rows, ok = [], True
        for beta in (0.25, 0.5, 1.0):
            th = theta_map(ModelParams(beta), 10 ** 6)
            ratio = float(th.singular_values[1] / th.singular_values[0])
            val = float(th.richardson[0, 0])
            target = 1.0 / gamma(1.0 + beta)
            good = ratio < 1e-4 and abs(val - target) <= 1e-4
            ok &= good
            rows.append((beta, ratio, val, target))
        detail = "; ".join(f"beta={b}: s2/s1={r:.2e}, Theta11={v:.6f} vs {t:.6f}" for b, r, v, t in rows)
        return ok, detail, {"rows": rows}
    return _timed(4, "rank-one Theta", 10.0, run)


def criterion_5() -> CriterionResult:
    from .model_system.recursion import ModelParams
    from .model_system.slow_scale import interchange_check, limit_ode_solve, volterra_solve

    def run():
        rep = interchange_check(ModelParams(0.25), [0.1 * 2.0 ** -m for m in range(5)], [1.0, 0.0])
        traj = volterra_solve(0.25, 1, rep.h0, 500.0)
        ode = limit_ode_solve(0.25, traj.at(1.0), 1.0, 500.0, 1, rep.h0[1])
        d_ode = float(np.max(np.abs(ode.tail_value - traj.h[-1])))
        ok = rep.deviation <= 1e-3 and d_ode <= 1e-6
        detail = f"|extrapolated - h_+(inf)| = {rep.deviation:.2e} (tol 1e-3); Volterra vs ODE at y=500: {d_ode:.2e} (tol 1e-6)"
        return ok, detail, rep.to_dict()
    return _timed(5, "limit interchange", 60.0, run)


def criterion_6() -> CriterionResult:
    from .model_system.recursion import ModelParams, max_product_norm

    def run():
        eps = [0.0] + [0.1 * 2.0 ** -m for m in range(10)]
        norms = [max_product_norm(ModelParams(0.25, e), 10 ** 6) for e in eps]
        ratio = max(norms) / min(norms)
        return ratio < 2.0, f"max/min of sup_n |prod B| over {len(eps)} eps values = {ratio:.4f} (limit 2)", {
            "eps": eps, "norms": norms}
    return _timed(6, "uniform a priori bound", 60.0, run)


def criterion_7() -> CriterionResult:
    from .model_system.density import model_density
    from .resonance import resonance_points
    from .spectral import spectral_density

    def run():
        cfg = free_config(1.0, 1.0, 1.0, 0.0, 0.0)
        _, rm = resonance_points(cfg.periodic, cfg.wvn, 0)
        rows, ok = [], True
        for lam in np.linspace(1.05, 1.5, 10):
            s = spectral_density(cfg, float(lam), 0)
            m = model_density(cfg, rm, float(lam))
            diff = abs(s.rho_prime - m.rho_prime)
            bound = 3.0 * (s.rho_error + m.rho_error)
            ok &= diff <= bound and s.converged and m.converged
            rows.append((float(lam), s.rho_prime, m.rho_prime, diff, bound))
        worst = max(r[3] / r[4] for r in rows)
        return ok, f"max |diff| / (3 x error sum) = {worst:.3f} over 10 lambda", {"rows": rows}
    return _timed(7, "cross-channel density", None, run)


def criterion_8() -> CriterionResult:
    from .spectral import spectral_density

    def run():
        cfg = free_config(1.0, 0.0, 1.0, 0.0, 0.0)
        errs = [abs(spectral_density(cfg, lam).rho_prime - math.sqrt(lam) / math.pi) for lam in (1.0, 4.0, 9.0)]
        return max(errs) <= 1e-6, f"max |rho' - sqrt(lambda)/pi| = {max(errs):.2e} (tol 1e-6)", {"errors": errs}
    return _timed(8, "unperturbed density", 10.0, run)


def criterion_9(workers=None) -> CriterionResult:
    from .resonance import critical_alpha, resonance_points
    from .spectral import donoghue_check
    from dataclasses import replace

    def run():
        cfg = free_config(1.0, 5.0, 1.0, 0.0, 0.0)
        _, rm = resonance_points(cfg.periodic, cfg.wvn, 0)
        rm = replace(rm, alpha_cr=critical_alpha(cfg, rm))
        rep = donoghue_check(cfg, rm, 1e-3, 1e-1, 2, workers=workers)
        worst = max(rep.rel_changes)
        detail = (f"2beta = {2 * rm.beta:.3f}, alpha_cr = {rm.alpha_cr:.4f}; sums "
                  + ", ".join(f"{s:.6g}" for s in rep.sums) + f"; max rel change {worst:.2e} (limit 5%)")
        return worst < 0.05, detail, {"sums": rep.sums, "d_mins": rep.d_mins}
    return _timed(9, "Aronszajn-Donoghue consistency", None, run)


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}


def run_criteria(selection=None, echo=None) -> list[CriterionResult]:
    out = []
    for n in sorted(selection or CRITERIA):
        r = CRITERIA[n]()
        out.append(r)
        if echo is not None:
            echo(r.line())
    return out
