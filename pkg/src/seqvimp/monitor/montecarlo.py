"""Monte Carlo replays of a stopping regime on Bernoulli exceedance streams."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError
from .regimes import H0, H1, SequentialSpec, decide_trajectories

CHUNK = 512


def bernoulli_replays(spec: SequentialSpec, p, n: int, rng: np.random.Generator,
                      truncate: bool = True, max_steps: int = 10_000_000):
    """Stopping outcome of *n* independent Bernoulli(p) streams.

    Parameters
    ----------
    p : float or array of shape (n,)
        Exceedance probability per stream.
    truncate : bool
        Honour ``spec.M``.  With ``False`` an SPRT/SAPT run continues until a
        boundary is crossed, which is the setting the Wald approximations of
        the operating characteristic describe.

    Returns
    -------
    hypothesis, stop : int arrays of shape (n,)
    """
    p = np.broadcast_to(np.asarray(p, dtype=float), (n,))
    if truncate:
        hyp = np.empty(n, dtype=int)
        stop = np.empty(n, dtype=int)
        for lo in range(0, n, 4096):
            hi = min(n, lo + 4096)
            traj = rng.random((hi - lo, spec.M)) < p[lo:hi, None]
            h, s, _ = decide_trajectories(spec, traj)
            hyp[lo:hi], stop[lo:hi] = h, s
        return hyp, stop
    if not spec.is_wald:
        raise ConfigError("untruncated replays need an SPRT or SAPT spec")
    c, den, _ = spec._boundary_coefficients()
    lA, lB = math.log(spec.A), math.log(spec.B)
    hyp = np.full(n, -1)
    stop = np.zeros(n, dtype=int)
    d = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    m0 = 0
    while active.size and m0 < max_steps:
        x = rng.random((active.size, CHUNK)) < p[active, None]
        dd = d[active, None] + np.cumsum(x, axis=1)
        m = m0 + np.arange(1, CHUNK + 1)[None, :]
        # den < 0, so dividing flips: d >= (lA + m c)/den  <=>  d*den <= lA + m c
        acc0 = dd * den <= lA + m * c
        acc1 = ~acc0 & (dd * den >= lB + m * c)
        hit = acc0 | acc1
        has = hit.any(axis=1)
        first = hit.argmax(axis=1)
        rows = np.arange(active.size)
        done = active[has]
        hyp[done] = np.where(acc1[rows[has], first[has]], H1, H0)
        stop[done] = m0 + first[has] + 1
        d[active] = dd[:, -1]
        active = active[~has]
        m0 += CHUNK
    return hyp, stop
