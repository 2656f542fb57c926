"""Simulation studies: data generators and the shared-trajectory experiment harness.

Study I is a logistic classification problem with six correlated normal
predictors and coefficients ``(k, k, k, 1, 0, 0)``.  Study II is the Friedman 1
regression problem with ten uniform predictors, five of them noise.

:func:`run_experiment` draws one exceedance trajectory per replicate and
variable, then applies every stopping regime to that same trajectory, so the
regimes are compared on identical data and permutations.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, SeqVimpError
from .forest import Dataset, ForestConfig
from .monitor import Method, SequentialSpec, decide_trajectories, evaluate
from .vimp_tests import normalize_kind, statistic_stream, worker_count

log = logging.getLogger(__name__)

K_GRID = tuple(i / 8 for i in range(9))
STUDY1_VARIABLES = ("X1", "X2", "X5")
STUDY2_VARIABLES = ("X1", "X3", "X6")

# Study I covariance: unit variances, Cov(X2,X4) = Cov(X3,X5) = 0.5
STUDY1_COV = np.eye(6)
STUDY1_COV[1, 3] = STUDY1_COV[3, 1] = 0.5
STUDY1_COV[2, 4] = STUDY1_COV[4, 2] = 0.5
STUDY1_CHOL = np.linalg.cholesky(STUDY1_COV)


def logistic_probability(eta):
    """P(Y=1) for linear predictor *eta*."""
    eta = np.asarray(eta, dtype=float)
    return np.exp(-np.logaddexp(0.0, -eta))


def friedman1(x, eps=0.0):
    """Friedman 1 response for rows of *x* (first five columns used)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return (10 * np.sin(np.pi * x[:, 0] * x[:, 1]) + 20 * (x[:, 2] - 0.5) ** 2
            + 10 * x[:, 3] + 5 * x[:, 4] + eps)


@dataclass(frozen=True)
class StudyISpec:
    k: float = 0.0
    n: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if not math.isfinite(self.k):
            raise ConfigError("k must be finite")

    @property
    def beta(self) -> np.ndarray:
        return np.array([self.k, self.k, self.k, 1.0, 0.0, 0.0])


def gen_study1(spec: StudyISpec, rng: np.random.Generator | None = None) -> Dataset:
    """Correlated normal predictors X1..X6 and a Bernoulli target Y with levels '0', '1'."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    X = rng.standard_normal((spec.n, 6)) @ STUDY1_CHOL.T
    y = (rng.random(spec.n) < logistic_probability(X @ spec.beta)).astype(float)
    return Dataset(X, y, [f"X{i}" for i in range(1, 7)], "Y", target_levels=("0", "1"))


def gen_study2(n: int, rng: np.random.Generator | None = None) -> Dataset:
    """Ten uniform predictors and the Friedman 1 response with standard normal noise."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    X = rng.random((n, 10))
    y = friedman1(X, rng.standard_normal(n))
    return Dataset(X, y, [f"X{i}" for i in range(1, 11)], "Y")


@dataclass(frozen=True)
class Study:
    """A named data generator: ``make(rng) -> Dataset``."""

    name: str
    make: Callable[[np.random.Generator], Dataset]
    k: float | None = None
    variables: tuple[str, ...] = ()

    def __call__(self, rng):
        return self.make(rng)


@dataclass(frozen=True)
class _Study1Maker:
    k: float
    n: int

    def __call__(self, rng):
        return gen_study1(StudyISpec(self.k, self.n), rng)


@dataclass(frozen=True)
class _Study2Maker:
    n: int

    def __call__(self, rng):
        return gen_study2(self.n, rng)


def study1(k: float = 0.0, n: int = 100) -> Study:
    return Study("study1", _Study1Maker(k, n), k, STUDY1_VARIABLES)


def study2(n: int = 100) -> Study:
    return Study("study2", _Study2Maker(n), None, STUDY2_VARIABLES)


# experiment -------------------------------------------------------------------

def replicate_seeds(seed: int, r: int) -> tuple[int, int]:
    """(data seed, stream seed) of replicate *r*."""
    s = np.random.SeedSequence(seed, spawn_key=(r,)).generate_state(2, dtype=np.uint32)
    return int(s[0]), int(s[1])


@dataclass
class ReplicateRecord:
    study: str
    k: float | None
    replicate: int
    variable: str
    method: str
    hypothesis: int  # 1 AcceptH1 (H0 rejected), 0 AcceptH0, -1 failed
    permutations: int
    p_value: float | None
    u: float | None
    data_seed: int
    stream_seed: int
    trajectory: str = ""
    error: str | None = None


@dataclass
class ExperimentSummary:
    study: str
    k: float | None
    variable: str
    method: str
    replicates: int
    failures: int
    rejection_rate: float
    mean_permutations: float

    def to_row(self) -> dict:
        row = asdict(self)
        row["k"] = "" if self.k is None else f"{self.k:g}"
        row["rejection_rate"] = f"{self.rejection_rate:.6g}"
        row["mean_permutations"] = f"{self.mean_permutations:.6g}"
        return row


@dataclass
class ExperimentResult:
    summaries: list[ExperimentSummary]
    records: list[ReplicateRecord] = field(repr=False)
    manifest: dict = field(repr=False)

    def summary(self, variable: str, method: str) -> ExperimentSummary:
        for s in self.summaries:
            if s.variable == variable and s.method == method.upper():
                return s
        raise KeyError((variable, method))


def _undecided(specs: Sequence[SequentialSpec], m: int, d: int, done: list[bool]) -> bool:
    for i, spec in enumerate(specs):
        if done[i]:
            continue
        # COMPLETE is settled as soon as the fixed-size decision is certain
        probe = spec if spec.method is not Method.COMPLETE else SequentialSpec.certain(spec.alpha, spec.M)
        if evaluate(probe, m, d).terminal:
            done[i] = True
    return not all(done)


def collect_trajectory(exceedances, specs: Sequence[SequentialSpec], M: int,
                       full: bool) -> np.ndarray:
    """Draw indicators until every spec has decided (or all *M* if *full*)."""
    out = []
    d = 0
    done = [False] * len(specs)
    for x in exceedances:
        out.append(bool(x))
        d += bool(x)
        if len(out) >= M or (not full and not _undecided(specs, len(out), d, done)):
            break
    return np.array(out, dtype=bool)


def derive_decisions(traj: np.ndarray, specs: Sequence[SequentialSpec]):
    """Per-spec (hypothesis, permutations, p-value) from one shared trajectory.

    COMPLETE always costs M; when the trajectory stops early its decision is
    the one the fixed-size test had already been forced into.
    """
    out = []
    for spec in specs:
        row = traj[None, : spec.M]
        if spec.method is Method.COMPLETE and row.shape[1] < spec.M:
            hyp, _, _ = decide_trajectories(SequentialSpec.certain(spec.alpha, spec.M), row)
            out.append((int(hyp[0]), spec.M, None))
            continue
        hyp, stop, pv = decide_trajectories(spec, row)
        out.append((int(hyp[0]), int(stop[0]), None if np.isnan(pv[0]) else float(pv[0])))
    return out


def _run_replicate(args):
    study, r, seed, fcfg, specs, kind, variables, full = args
    data_seed, stream_seed = replicate_seeds(seed, r)
    records = []
    try:
        data = study(np.random.default_rng(data_seed))
    except SeqVimpError as exc:
        log.warning("replicate %d: data generation failed: %s", r, exc)
        return [ReplicateRecord(study.name, study.k, r, v, s.label, -1, 0, None, None,
                                data_seed, stream_seed, "", str(exc))
                for v in variables for s in specs]
    M = max(s.M for s in specs)
    for v in variables:
        try:
            stream = statistic_stream(data, v, fcfg, kind, stream_seed)
            traj = collect_trajectory(stream.exceedances(), specs, M, full)
            bits = "".join("1" if x else "0" for x in traj)
            for spec, (hyp, perms, pv) in zip(specs, derive_decisions(traj, specs)):
                records.append(ReplicateRecord(study.name, study.k, r, v, spec.label, hyp, perms,
                                               pv, stream.u, data_seed, stream_seed, bits))
        except SeqVimpError as exc:
            log.warning("replicate %d, %s failed: %s", r, v, exc)
            records.extend(ReplicateRecord(study.name, study.k, r, v, s.label, -1, 0, None, None,
                                           data_seed, stream_seed, "", str(exc)) for s in specs)
    return records


def summarize(records: Sequence[ReplicateRecord], study: str, k, variables, specs) -> list[ExperimentSummary]:
    out = []
    for v in variables:
        for spec in specs:
            rs = [r for r in records if r.variable == v and r.method == spec.label]
            ok = [r for r in rs if r.hypothesis >= 0]
            rate = float(np.mean([r.hypothesis for r in ok])) if ok else math.nan
            perms = float(np.mean([r.permutations for r in ok])) if ok else math.nan
            out.append(ExperimentSummary(study, k, v, spec.label, len(ok), len(rs) - len(ok),
                                         rate, perms))
    return out


def run_experiment(generator: Study, replicates: int, fcfg: ForestConfig,
                   specs: Sequence[SequentialSpec], test_kind: str = "general",
                   variables: Sequence[str] | None = None, seed: int = 0,
                   full_trajectory: bool = False, workers: int | None = None) -> ExperimentResult:
    """Monte Carlo study of several stopping regimes on shared permutation streams.

    Parameters
    ----------
    generator : Study
        Data generator; ``generator.variables`` is used when *variables* is None.
    replicates : int
        Number of simulated datasets.
    specs : sequence of SequentialSpec
        Regimes to compare; all are applied to the same trajectory.
    full_trajectory : bool
        Draw all M permutations even once every regime has decided.  Decisions
        are identical either way; only the stored trajectory and the COMPLETE
        p-value differ.

    Returns
    -------
    ExperimentResult
        Summaries per (variable, method), raw per-replicate records and a manifest.
    """
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    if not specs:
        raise ConfigError("need at least one stopping regime")
    kind = normalize_kind(test_kind)
    variables = tuple(variables or generator.variables)
    if not variables:
        raise ConfigError("no variables to test")
    jobs = [(generator, r, seed, fcfg, tuple(specs), kind, variables, full_trajectory)
            for r in range(replicates)]
    n_workers = worker_count(workers)
    if n_workers > 1 and replicates > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as ex:
            chunks = list(ex.map(_run_replicate, jobs))
    else:
        chunks = [_run_replicate(job) for job in jobs]
    records = [rec for chunk in chunks for rec in chunk]
    summaries = summarize(records, generator.name, generator.k, variables, specs)
    manifest = {
        "study": generator.name,
        "k": generator.k,
        "generator": repr(generator.make),
        "replicates": replicates,
        "seed": seed,
        "test": kind,
        "variables": list(variables),
        "forest": asdict(fcfg),
        "methods": [s.to_dict() for s in specs],
        "full_trajectory": full_trajectory,
        "replicate_seeds": [list(replicate_seeds(seed, r)) for r in range(replicates)],
    }
    return ExperimentResult(summaries, records, manifest)


# output -----------------------------------------------------------------------

SUMMARY_COLUMNS = ("study", "variable", "method", "k", "replicates", "failures",
                   "rejection_rate", "mean_permutations")


def write_summaries(summaries: Sequence[ExperimentSummary], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for s in summaries:
            w.writerow(s.to_row())
    return path


def write_records(records: Sequence[ReplicateRecord], path) -> Path:
    path = Path(path)
    cols = list(ReplicateRecord.__dataclass_fields__)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in records:
            row = asdict(r)
            for key in ("p_value", "u"):
                row[key] = "" if row[key] is None else f"{row[key]:.6g}"
            row["k"] = "" if r.k is None else f"{r.k:g}"
            row["error"] = row["error"] or ""
            w.writerow(row)
    return path


def write_manifest(manifest: dict, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
