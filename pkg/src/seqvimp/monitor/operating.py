"""Operating characteristics of the Wald-type regimes and the PVAL cost formula.

Everything here is vectorized over the true exceedance probability ``p``.
Scalar inputs give scalar outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericalError
from .regimes import SequentialSpec

__all__ = [
    "OperatingCharacteristic",
    "singular_point",
    "solve_k",
    "power_function",
    "expected_permutations",
    "operating_characteristic",
    "effective_alpha",
    "average_expected_permutations",
    "pval_expected_m",
    "pval_se_fraction",
    "simpson",
]

K_TOL = 1e-10
SINGULAR_EPS = 1e-6
N_PANELS = 10_000


@dataclass(frozen=True)
class OperatingCharacteristic:
    p: float
    k: float
    L_p: float
    E_m: float


def _logs(p0: float, p1: float) -> tuple[float, float]:
    if not (0.0 < p1 < p0 < 1.0):
        raise ConfigError(f"need 0 < p1 < p0 < 1, got p0={p0}, p1={p1}")
    return math.log(p1 / p0), math.log((1.0 - p1) / (1.0 - p0))


def singular_point(p0: float, p1: float) -> float:
    """The p at which the drift of the log-likelihood ratio vanishes (k = 0)."""
    a, b = _logs(p0, p1)
    return b / (b - a)


def _f(k, p, a, b):
    # p*(p1/p0)^k + (1-p)*((1-p1)/(1-p0))^k - 1, written to stay accurate near k = 0
    return p * np.expm1(k * a) + (1.0 - p) * np.expm1(k * b)


def solve_k(p, p0: float, p1: float, tol: float = K_TOL, max_bracket: float = 1e6):
    """Nonzero root in k of ``p (p1/p0)^k + (1-p) ((1-p1)/(1-p0))^k = 1``.

    Uses bisection on a bracket whose side is fixed by the sign of the slope at
    k = 0: the root is positive when the drift ``p log(p1/p0) + (1-p)
    log((1-p1)/(1-p0))`` is negative and negative otherwise.  At the singular
    point the two roots merge and 0 is returned.
    """
    a, b = _logs(p0, p1)
    p_arr = np.asarray(p, dtype=float)
    scalar = p_arr.ndim == 0
    p_arr = np.atleast_1d(p_arr)
    if np.any((p_arr <= 0.0) | (p_arr >= 1.0)):
        raise ConfigError("solve_k needs 0 < p < 1")

    drift = p_arr * a + (1.0 - p_arr) * b
    sign = np.where(drift < 0.0, 1.0, -1.0)  # side of the nonzero root
    k = np.zeros_like(p_arr)
    # near p* the nonzero root is about -2*drift/E[Z^2]; below tol it is 0
    ez2 = p_arr * a * a + (1.0 - p_arr) * b * b
    active = 2.0 * np.abs(drift) / ez2 > tol

    if np.any(active):
        pa = p_arr[active]
        sg = sign[active]
        # expand the outer end until f turns positive
        outer = np.ones_like(pa)
        for _ in range(200):
            bad = _f(sg * outer, pa, a, b) <= 0.0
            if not bad.any():
                break
            outer = np.where(bad, outer * 2.0, outer)
            if np.any(outer > max_bracket):
                worst = pa[bad][0]
                raise NumericalError(f"solve_k: no bracket below |k|={max_bracket} at p={worst!r}")
        lo = np.zeros_like(pa)  # magnitude where f < 0 (or k = 0)
        hi = outer  # magnitude where f > 0
        for _ in range(400):
            if np.all(hi - lo <= tol):
                break
            mid = 0.5 * (lo + hi)
            if np.all((mid == lo) | (mid == hi) | (hi - lo <= tol)):
                break  # no representable midpoint left
            neg = _f(sg * mid, pa, a, b) < 0.0
            lo = np.where(neg, mid, lo)
            hi = np.where(neg, hi, mid)
        else:
            raise NumericalError("solve_k: bisection did not converge")
        k[active] = sg * 0.5 * (lo + hi)
    return float(k[0]) if scalar else k


def _power_from_k(k, lA: float, lB: float):
    k = np.asarray(k, dtype=float)
    out = np.empty_like(k)
    pos = k > 0
    neg = k < 0
    zero = ~(pos | neg)
    kp = k[pos]
    out[pos] = np.exp(-kp * lB) * np.expm1(kp * lA) / np.expm1(kp * (lA - lB))
    kn = k[neg]
    out[neg] = np.expm1(-kn * lA) / np.expm1(kn * (lB - lA))
    out[zero] = -lA / (lB - lA)
    return out


def _require_wald(spec: SequentialSpec):
    if not spec.is_wald:
        raise ConfigError(f"operating characteristics need SPRT or SAPT, not {spec.label}")


def _core(p, spec: SequentialSpec):
    """k, L and E on an array of p in [0, 1]; endpoints use their limits."""
    _require_wald(spec)
    a, b = _logs(spec.p0, spec.p1)
    lA, lB = math.log(spec.A), math.log(spec.B)
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any((p < 0.0) | (p > 1.0)):
        raise ConfigError("p must lie in [0, 1]")
    k = np.empty_like(p)
    L = np.empty_like(p)
    E = np.empty_like(p)

    at0 = p == 0.0
    at1 = p == 1.0
    k[at0], L[at0], E[at0] = -np.inf, 1.0, lB / b
    k[at1], L[at1], E[at1] = np.inf, 0.0, lA / a

    inner = ~(at0 | at1)
    if inner.any():
        pi = p[inner]
        ki = solve_k(pi, spec.p0, spec.p1)
        Li = _power_from_k(ki, lA, lB)
        drift = pi * a + (1.0 - pi) * b
        ps = singular_point(spec.p0, spec.p1)
        near = np.abs(pi - ps) < SINGULAR_EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            Ei = (Li * lB + (1.0 - Li) * lA) / drift
        if near.any():
            side = np.array([ps - SINGULAR_EPS, ps + SINGULAR_EPS])
            ks = solve_k(side, spec.p0, spec.p1, tol=1e-15)
            Ls = _power_from_k(ks, lA, lB)
            ds = side * a + (1.0 - side) * b
            Ei[near] = np.mean((Ls * lB + (1.0 - Ls) * lA) / ds)
        k[inner], L[inner], E[inner] = ki, Li, Ei
    if not np.all(np.isfinite(E)):
        bad = p[~np.isfinite(E)][0]
        raise NumericalError(f"expected permutations not finite at p={bad!r}")
    return k, L, E


def _maybe_scalar(x, like):
    return float(x[0]) if np.ndim(like) == 0 else x


def power_function(p, spec: SequentialSpec):
    """Probability that the regime accepts H1 when the true exceedance rate is p."""
    _, L, _ = _core(p, spec)
    return _maybe_scalar(L, p)


def expected_permutations(p, spec: SequentialSpec):
    """Expected stopping time of the untruncated Wald test at rate p."""
    _, _, E = _core(p, spec)
    return _maybe_scalar(E, p)


def operating_characteristic(p: float, spec: SequentialSpec) -> OperatingCharacteristic:
    k, L, E = _core(p, spec)
    return OperatingCharacteristic(float(p), float(k[0]), float(L[0]), float(E[0]))


def simpson(values, h: float) -> float:
    """Composite Simpson rule on an odd number of equally spaced samples."""
    v = np.asarray(values, dtype=float)
    if v.size < 3 or v.size % 2 == 0:
        raise NumericalError("Simpson's rule needs an odd number (>= 3) of samples")
    return float(h / 3.0 * (v[0] + v[-1] + 4.0 * v[1:-1:2].sum() + 2.0 * v[2:-1:2].sum()))


def _grid(n_panels: int):
    if n_panels < 2 or n_panels % 2:
        raise ConfigError("n_panels must be an even integer >= 2")
    return np.linspace(0.0, 1.0, n_panels + 1), 1.0 / n_panels


def effective_alpha(spec: SequentialSpec, n_panels: int = N_PANELS) -> float:
    """Rejection rate when p is uniform on [0, 1], i.e. the realized type-I error."""
    p, h = _grid(n_panels)
    _, L, _ = _core(p, spec)
    return simpson(L, h)


def average_expected_permutations(spec: SequentialSpec, n_panels: int = N_PANELS) -> float:
    """Expected stopping time averaged over uniformly distributed p."""
    p, h = _grid(n_panels)
    _, _, E = _core(p, spec)
    return simpson(E, h)


def pval_expected_m(h: int, M: int) -> float:
    """Approximate mean number of permutations PVAL uses under H0."""
    if not (1 <= h <= M):
        raise ConfigError(f"need 1 <= h <= M, got h={h}, M={M}")
    return h + h * math.log((M + 0.5) / (h + 0.5))


def pval_se_fraction(h: int) -> float:
    """Standard error of the sequential p-value as a fraction of p."""
    if h < 1:
        raise ConfigError(f"h must be >= 1, got {h}")
    return 1.0 / math.sqrt(h)
