"""Stopping regimes for a stream of exceedance indicators I(u_s >= u).

Five regimes share one interface: the fixed-size Monte Carlo test (COMPLETE),
its certain-stopping shortcut (CERTAIN), Wald's SPRT, the SAPT variant with
B = 1/A, and the sequential Monte Carlo p-value (PVAL).  The engine never sees
a forest; it only counts how many permuted statistics reached the observed one.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from ..errors import ConfigError, UsageError

__all__ = [
    "Method",
    "Decision",
    "SequentialSpec",
    "MonitorState",
    "sprt_boundaries",
    "certain_stop",
    "evaluate",
    "monitor_step",
    "replay",
    "pval_estimate",
    "pval_support",
    "final_hypothesis",
    "decide_trajectories",
    "DEFAULTS",
]

DEFAULTS = dict(p0=0.06, p1=0.04, alpha=0.05, beta=0.2, A=0.1, M=500, h=8)


class Method(str, Enum):
    SPRT = "sprt"
    SAPT = "sapt"
    PVAL = "pval"
    CERTAIN = "certain"
    COMPLETE = "complete"

    @classmethod
    def parse(cls, value: "str | Method") -> "Method":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ConfigError(f"unknown method {value!r}; expected one of {names}") from None


class Decision(str, Enum):
    CONTINUE = "continue"
    ACCEPT_H0 = "accept_H0"
    ACCEPT_H1 = "accept_H1"
    PVALUE_READY = "pvalue_ready"

    @property
    def terminal(self) -> bool:
        return self is not Decision.CONTINUE


@dataclass(frozen=True)
class SequentialSpec:
    """Full parameterization of one stopping regime.

    For SPRT the log-boundaries follow from the error rates,
    ``A = beta / (1 - alpha)`` and ``B = (1 - beta) / alpha``; passing A or B
    explicitly is a configuration error.  For SAPT ``B = 1 / A``.  ``h`` is
    only used by PVAL and ``alpha`` doubles as the rejection level of the
    CERTAIN, COMPLETE and PVAL regimes.
    """

    method: Method
    p0: float = DEFAULTS["p0"]
    p1: float = DEFAULTS["p1"]
    alpha: float = DEFAULTS["alpha"]
    beta: float = DEFAULTS["beta"]
    A: float | None = None
    B: float | None = None
    M: int = DEFAULTS["M"]
    h: int = DEFAULTS["h"]

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        for name in ("p0", "p1", "alpha", "beta"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ConfigError(f"{name} must lie in (0, 1), got {v!r}")
        if not (self.p1 < self.p0):
            raise ConfigError(f"need 0 < p1 < p0 < 1, got p0={self.p0}, p1={self.p1}")
        if int(self.M) != self.M or self.M < 1:
            raise ConfigError(f"M must be a positive integer, got {self.M!r}")
        object.__setattr__(self, "M", int(self.M))
        if int(self.h) != self.h or not (1 <= self.h <= self.M):
            raise ConfigError(f"h must satisfy 1 <= h <= M, got h={self.h}, M={self.M}")
        object.__setattr__(self, "h", int(self.h))

        if self.method is Method.SPRT:
            if self.A is not None or self.B is not None:
                a = self.beta / (1.0 - self.alpha)
                b = (1.0 - self.beta) / self.alpha
                if (self.A is not None and not math.isclose(self.A, a)) or (
                    self.B is not None and not math.isclose(self.B, b)
                ):
                    raise ConfigError("SPRT derives A and B from alpha and beta; do not set them")
            object.__setattr__(self, "A", self.beta / (1.0 - self.alpha))
            object.__setattr__(self, "B", (1.0 - self.beta) / self.alpha)
        elif self.method is Method.SAPT:
            a = DEFAULTS["A"] if self.A is None else float(self.A)
            if not (0.0 < a < 1.0):
                raise ConfigError(f"SAPT needs 0 < A < 1, got {a!r}")
            if self.B is not None and not math.isclose(self.B, 1.0 / a):
                raise ConfigError(f"SAPT requires B = 1/A; got A={a}, B={self.B}")
            object.__setattr__(self, "A", a)
            object.__setattr__(self, "B", 1.0 / a)
            if not math.isclose((self.p0 + self.p1) / 2.0, self.alpha, abs_tol=1e-12):
                warnings.warn(
                    f"SAPT works best with (p0 + p1)/2 = alpha; got "
                    f"({self.p0} + {self.p1})/2 != {self.alpha}",
                    stacklevel=3,
                )
        elif self.A is not None or self.B is not None:
            if self.A is not None and self.B is not None and not (0 < self.A < 1 < self.B):
                raise ConfigError("need 0 < A < 1 < B")

    # convenience constructors -------------------------------------------------
    @classmethod
    def sprt(cls, p0=DEFAULTS["p0"], p1=DEFAULTS["p1"], alpha=DEFAULTS["alpha"],
             beta=DEFAULTS["beta"], M=DEFAULTS["M"]) -> "SequentialSpec":
        return cls(Method.SPRT, p0=p0, p1=p1, alpha=alpha, beta=beta, M=M)

    @classmethod
    def sapt(cls, p0=DEFAULTS["p0"], p1=DEFAULTS["p1"], A=DEFAULTS["A"],
             alpha=DEFAULTS["alpha"], M=DEFAULTS["M"]) -> "SequentialSpec":
        return cls(Method.SAPT, p0=p0, p1=p1, alpha=alpha, A=A, M=M)

    @classmethod
    def pval(cls, h=DEFAULTS["h"], M=DEFAULTS["M"], alpha=DEFAULTS["alpha"]) -> "SequentialSpec":
        return cls(Method.PVAL, h=h, M=M, alpha=alpha)

    @classmethod
    def certain(cls, alpha=DEFAULTS["alpha"], M=DEFAULTS["M"]) -> "SequentialSpec":
        return cls(Method.CERTAIN, alpha=alpha, M=M)

    @classmethod
    def complete(cls, alpha=DEFAULTS["alpha"], M=DEFAULTS["M"]) -> "SequentialSpec":
        return cls(Method.COMPLETE, alpha=alpha, M=M)

    # boundary geometry ------------------------------------------------------
    @property
    def is_wald(self) -> bool:
        return self.method in (Method.SPRT, Method.SAPT)

    def _boundary_coefficients(self) -> tuple[float, float, float]:
        # d_m >= (log A + m*c) / den  -> accept H0
        # d_m <= (log B + m*c) / den  -> accept H1
        c = math.log((1.0 - self.p0) / (1.0 - self.p1))
        den = math.log(self.p1 * (1.0 - self.p0) / (self.p0 * (1.0 - self.p1)))
        return c, den, c / den

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "p0": self.p0,
            "p1": self.p1,
            "alpha": self.alpha,
            "beta": self.beta,
            "A": self.A,
            "B": self.B,
            "M": self.M,
            "h": self.h,
        }

    @property
    def label(self) -> str:
        return self.method.value.upper()


@dataclass(frozen=True)
class MonitorState:
    """Running state of one monitored permutation test."""

    m: int = 0
    d_m: int = 0
    trajectory: tuple[bool, ...] = field(default=())
    decision: Decision = Decision.CONTINUE

    def __post_init__(self):
        if self.d_m != sum(self.trajectory) or self.m != len(self.trajectory):
            raise UsageError("inconsistent monitor state: counts do not match trajectory")

    @property
    def terminal(self) -> bool:
        return self.decision.terminal

    def bits(self) -> str:
        return "".join("1" if x else "0" for x in self.trajectory)


def sprt_boundaries(spec: SequentialSpec, m: int) -> tuple[float, float]:
    """Return ``(upper_H0, lower_H1)`` for the exceedance count at stage *m*.

    H0 is accepted when ``d_m >= upper_H0`` and H1 when ``d_m <= lower_H1``.
    """
    if not spec.is_wald:
        raise ConfigError(f"boundaries are only defined for SPRT/SAPT, not {spec.label}")
    if m < 1:
        raise ConfigError(f"m must be >= 1, got {m}")
    c, den, _ = spec._boundary_coefficients()
    upper = (math.log(spec.A) + m * c) / den
    lower = (math.log(spec.B) + m * c) / den
    return upper, lower


def _complete_rule(d: int, M: int, alpha: float) -> Decision:
    return Decision.ACCEPT_H0 if d / M > alpha else Decision.ACCEPT_H1


def certain_stop(state: MonitorState, M: int, alpha: float) -> Decision:
    """Decision of the fixed-size test that is already certain at ``state.m``."""
    if state.m > M:
        raise UsageError(f"m={state.m} exceeds M={M}")
    return _certain(state.d_m, state.m, M, alpha)


def _certain(d: int, m: int, M: int, alpha: float) -> Decision:
    if d / M > alpha:
        return Decision.ACCEPT_H0
    if (d + (M - m)) / M <= alpha:
        return Decision.ACCEPT_H1
    return Decision.CONTINUE


def evaluate(spec: SequentialSpec, m: int, d: int) -> Decision:
    """Closed-form decision of *spec* after *m* steps with *d* exceedances."""
    M = spec.M
    method = spec.method
    if method is Method.COMPLETE:
        return _complete_rule(d, M, spec.alpha) if m >= M else Decision.CONTINUE
    if method is Method.CERTAIN:
        return _certain(d, m, M, spec.alpha)
    if method is Method.PVAL:
        return Decision.PVALUE_READY if (d >= spec.h or m >= M) else Decision.CONTINUE
    # SPRT / SAPT
    if m >= 1:
        upper, lower = sprt_boundaries(spec, m)
        if d >= upper:
            return Decision.ACCEPT_H0
        if d <= lower:
            return Decision.ACCEPT_H1
    if m >= M:
        # truncated without crossing: fall back to the fixed-size rule
        return _complete_rule(d, M, spec.alpha)
    return Decision.CONTINUE


def monitor_step(state: MonitorState, exceeded: bool, spec: SequentialSpec) -> MonitorState:
    """Feed one exceedance indicator and re-evaluate the stopping rule."""
    if state.terminal:
        raise UsageError(f"monitor already terminated with {state.decision.value} at m={state.m}")
    if state.m >= spec.M:
        raise UsageError(f"monitor already consumed M={spec.M} permutations")
    exceeded = bool(exceeded)
    m = state.m + 1
    d = state.d_m + int(exceeded)
    return MonitorState(m, d, state.trajectory + (exceeded,), evaluate(spec, m, d))


def replay(trajectory, spec: SequentialSpec) -> MonitorState:
    """Run *spec* over a recorded trajectory until it terminates or the data run out."""
    state = MonitorState()
    for x in trajectory:
        if state.terminal or state.m >= spec.M:
            break
        state = monitor_step(state, x, spec)
    return state


def pval_estimate(state: MonitorState, spec: SequentialSpec) -> float:
    """Sequential Monte Carlo p-value of a terminated PVAL monitor.

    ``d_m / m`` once the h-th exceedance arrives, else ``(d_M + 1) / (M + 1)``.
    """
    if spec.method is not Method.PVAL:
        raise UsageError("pval_estimate requires a PVAL spec")
    if state.d_m >= spec.h:
        return state.d_m / state.m
    if state.m >= spec.M:
        return (state.d_m + 1) / (spec.M + 1)
    raise UsageError(f"PVAL monitor not terminal at m={state.m} (d_m={state.d_m}, h={spec.h})")


def pval_support(h: int, M: int) -> list[float]:
    """All values the sequential p-value can take, descending.

    ``{h/m : h <= m <= M}`` from early stops joined with
    ``{(d + 1)/(M + 1) : 0 <= d < h}`` from runs that reach M.
    """
    if not (1 <= h <= M):
        raise ConfigError(f"need 1 <= h <= M, got h={h}, M={M}")
    values = {h / m for m in range(h, M + 1)}
    values.update((d + 1) / (M + 1) for d in range(h))
    return sorted(values, reverse=True)


def final_hypothesis(state: MonitorState, spec: SequentialSpec) -> Decision:
    """Map a terminal state to AcceptH0/AcceptH1 (PVAL rejects when p <= alpha)."""
    if not state.terminal:
        raise UsageError("monitor has not terminated")
    if state.decision is Decision.PVALUE_READY:
        p = pval_estimate(state, spec)
        return Decision.ACCEPT_H1 if p <= spec.alpha else Decision.ACCEPT_H0
    return state.decision


def complete_pvalue(state: MonitorState, spec: SequentialSpec) -> float:
    """Fraction of exceedances among all M permutations."""
    if state.m != spec.M:
        raise UsageError("COMPLETE p-value needs all M permutations")
    return state.d_m / spec.M


# vectorized evaluation --------------------------------------------------------

H0, H1, OPEN = 0, 1, -1


def decide_trajectories(spec: SequentialSpec, traj) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Apply *spec* to many trajectories at once.

    Parameters
    ----------
    traj : bool array, shape (R, L)
        Exceedance indicators, one row per replicate; ``L <= spec.M``.

    Returns
    -------
    hypothesis : int array
        1 for AcceptH1, 0 for AcceptH0, -1 if the row ran out before stopping.
    stop : int array
        Permutations consumed (``L`` for open rows).
    pvalue : float array
        PVAL/COMPLETE p-value where defined, NaN elsewhere.
    """
    traj = np.atleast_2d(np.asarray(traj, dtype=bool))
    R, L = traj.shape
    if L > spec.M:
        raise ConfigError(f"trajectory length {L} exceeds M={spec.M}")
    d = np.cumsum(traj, axis=1)
    m = np.arange(1, L + 1)[None, :]
    M, alpha = spec.M, spec.alpha
    method = spec.method

    if method is Method.COMPLETE:
        stop_h0 = (m >= M) & (d / M > alpha)
        stop_h1 = (m >= M) & ~(d / M > alpha)
    elif method is Method.CERTAIN:
        stop_h0 = d / M > alpha
        stop_h1 = ~stop_h0 & ((d + (M - m)) / M <= alpha)
    elif method is Method.PVAL:
        ready = (d >= spec.h) | (m >= M)
        stop_h0 = stop_h1 = ready  # resolved below
    else:
        c, den, _ = spec._boundary_coefficients()
        upper = (math.log(spec.A) + m * c) / den
        lower = (math.log(spec.B) + m * c) / den
        stop_h0 = d >= upper
        stop_h1 = ~stop_h0 & (d <= lower)
        last = m >= M
        trunc = last & ~stop_h0 & ~stop_h1
        stop_h0 = stop_h0 | (trunc & (d / M > alpha))
        stop_h1 = stop_h1 | (trunc & ~(d / M > alpha))

    any_stop = stop_h0 | stop_h1
    has = any_stop.any(axis=1)
    first = np.where(has, any_stop.argmax(axis=1), L - 1)
    rows = np.arange(R)
    stop = np.where(has, first + 1, L)
    d_at = d[rows, first] if L else np.zeros(R, dtype=int)
    pvalue = np.full(R, np.nan)

    if method is Method.PVAL:
        p = np.where(d_at >= spec.h, d_at / np.maximum(stop, 1), (d_at + 1) / (M + 1))
        pvalue = np.where(has, p, np.nan)
        hyp = np.where(p <= alpha, H1, H0)
    else:
        hyp = np.where(stop_h1[rows, first], H1, H0)
        if method is Method.COMPLETE:
            pvalue = np.where(has, d_at / M, np.nan)
    hyp = np.where(has, hyp, OPEN)
    return hyp.astype(int), stop.astype(int), pvalue


def with_overrides(spec: SequentialSpec, **kw) -> SequentialSpec:
    """Copy of *spec* with fields replaced (A/B re-derived where applicable)."""
    if spec.method is Method.SPRT:
        kw.setdefault("A", None)
        kw.setdefault("B", None)
    elif spec.method is Method.SAPT and "A" in kw:
        kw.setdefault("B", None)
    return replace(spec, **kw)
