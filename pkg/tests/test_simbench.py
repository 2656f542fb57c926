import csv
import io
import json
import math

import numpy as np
import pytest
from scipy import integrate

import seqvimp.simbench as sb
from seqvimp.errors import ConfigError, DataError
from seqvimp.forest import ForestConfig
from seqvimp.monitor import Decision, SequentialSpec
from seqvimp.simbench import (
    STUDY1_CHOL,
    STUDY1_COV,
    StudyISpec,
    friedman1,
    gen_study1,
    gen_study2,
    logistic_probability,
    replicate_seeds,
    run_experiment,
    study1,
    study2,
    write_manifest,
    write_records,
    write_summaries,
)
from seqvimp.vimp_tests import general_test, two_sample_test

SPECS = [SequentialSpec.sprt(), SequentialSpec.sapt(), SequentialSpec.pval(),
         SequentialSpec.certain(), SequentialSpec.complete()]


# generators -------------------------------------------------------------------

def test_friedman_midpoint():
    assert friedman1(np.full((1, 10), 0.5))[0] == pytest.approx(14.5711, abs=1e-4)
    assert friedman1(np.full((1, 10), 0.5))[0] == pytest.approx(10 * math.sin(math.pi / 4) + 7.5)


def test_friedman_quadratic_symmetry():
    x = np.full((2, 10), 0.3)
    x[0, 2], x[1, 2] = 0.0, 1.0
    y = friedman1(x)
    assert y[0] == y[1]


def test_logistic_probability():
    assert logistic_probability(0.0) == 0.5
    assert logistic_probability(800.0) == 1.0
    assert logistic_probability(-800.0) == pytest.approx(0.0, abs=1e-300)
    assert logistic_probability(1.0) == pytest.approx(1 / (1 + math.exp(-1)))


def test_study1_covariance_factor():
    assert np.allclose(STUDY1_CHOL @ STUDY1_CHOL.T, STUDY1_COV)
    assert np.all(np.linalg.eigvalsh(STUDY1_COV) > 0)
    assert np.array_equal(np.triu(STUDY1_CHOL, 1), np.zeros((6, 6)))


def test_study1_moments():
    data = gen_study1(StudyISpec(k=0.5, n=100_000), np.random.default_rng(1))
    cov = np.cov(data.X.T)
    assert cov[1, 3] == pytest.approx(0.5, abs=0.01)
    assert cov[2, 4] == pytest.approx(0.5, abs=0.01)
    off = cov - np.diag(np.diag(cov))
    off[1, 3] = off[3, 1] = off[2, 4] = off[4, 2] = 0
    assert np.abs(off).max() < 0.02
    assert np.allclose(np.diag(cov), 1, atol=0.02)
    assert data.names == ("X1", "X2", "X3", "X4", "X5", "X6")
    assert data.task == "classification" and data.target_levels == ("0", "1")


def logistic_fit(X, y, iters=25):
    Z = np.column_stack([np.ones(len(y)), X])
    b = np.zeros(Z.shape[1])
    for _ in range(iters):
        p = 1 / (1 + np.exp(-Z @ b))
        W = p * (1 - p)
        b += np.linalg.solve(Z.T @ (Z * W[:, None]), Z.T @ (y - p))
    cov = np.linalg.inv(Z.T @ (Z * W[:, None]))
    return b, np.sqrt(np.diag(cov))


def test_study1_k0_only_x4_matters():
    data = gen_study1(StudyISpec(k=0.0, n=100_000), np.random.default_rng(2))
    b, se = logistic_fit(data.X, data.y)
    assert abs(b[1]) < 4 * se[1]
    assert b[4] == pytest.approx(1.0, abs=4 * se[4])


def test_study1_coefficients_recovered():
    data = gen_study1(StudyISpec(k=0.75, n=100_000), np.random.default_rng(3))
    b, se = logistic_fit(data.X, data.y)
    assert np.all(np.abs(b[1:] - np.array([0.75, 0.75, 0.75, 1, 0, 0])) < 4 * se[1:])


def test_study2_variance_matches_analytic():
    sin_m1, _ = integrate.dblquad(lambda a, b: 10 * math.sin(math.pi * a * b), 0, 1, 0, 1)
    sin_m2, _ = integrate.dblquad(lambda a, b: (10 * math.sin(math.pi * a * b)) ** 2, 0, 1, 0, 1)
    quad_var = 400 / 80 - (20 / 12) ** 2
    signal_var = (sin_m2 - sin_m1 ** 2) + quad_var + 100 / 12 + 25 / 12
    # 23.8 is the noise-free part; unit-variance noise adds 1
    assert signal_var == pytest.approx(23.8, abs=0.05)
    data = gen_study2(100_000, np.random.default_rng(4))
    assert data.y.var() == pytest.approx(signal_var + 1, rel=0.02)
    assert data.p == 10 and data.task == "regression"
    assert data.X.min() >= 0 and data.X.max() < 1


def test_generators_are_seeded():
    a = gen_study2(50, np.random.default_rng(5))
    b = gen_study2(50, np.random.default_rng(5))
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


def test_invalid_generator_args():
    with pytest.raises(ConfigError):
        gen_study2(0)
    with pytest.raises(ConfigError):
        StudyISpec(n=0)


# harness ----------------------------------------------------------------------

def test_replicate_seeds_are_stable_and_distinct():
    seeds = [replicate_seeds(7, r) for r in range(50)]
    assert seeds == [replicate_seeds(7, r) for r in range(50)]
    assert len({s for pair in seeds for s in pair}) == 100


def test_collect_stops_once_every_regime_decided():
    traj = sb.collect_trajectory(iter([True] * 500), SPECS, 500, full=False)
    # CERTAIN needs 26 exceedances, the slowest here
    assert traj.size == 26
    full = sb.collect_trajectory(iter([True] * 500), SPECS, 500, full=True)
    assert full.size == 500


def test_derived_decisions_agree_for_short_and_full_trajectories():
    rng = np.random.default_rng(0)
    for _ in range(200):
        p = rng.uniform(0, 0.2)
        stream = rng.random(500) < p
        short = sb.collect_trajectory(iter(stream), SPECS, 500, full=False)
        a = sb.derive_decisions(short, SPECS)
        b = sb.derive_decisions(stream, SPECS)
        assert [x[:2] for x in a] == [x[:2] for x in b]


@pytest.fixture(scope="module")
def two_sample_run():
    return run_experiment(study1(0.0, 60), 100, ForestConfig(ntree=20), SPECS, "two_sample",
                          ["X1"], seed=11)


def test_shared_trajectory_matches_live_runs(two_sample_run):
    res = two_sample_run
    by_rep = {}
    for rec in res.records:
        by_rep.setdefault(rec.replicate, []).append(rec)
    for r, recs in by_rep.items():
        data = study1(0.0, 60)(np.random.default_rng(recs[0].data_seed))
        for rec, spec in zip(recs, SPECS):
            live = two_sample_test(data, "X1", ForestConfig(ntree=20), spec, seed=rec.stream_seed)
            assert (live.decision is Decision.ACCEPT_H1) == (rec.hypothesis == 1)
            assert live.permutations_used == rec.permutations


def test_shared_trajectory_matches_live_general_runs():
    fcfg = ForestConfig(ntree=5)
    res = run_experiment(study2(60), 3, fcfg, SPECS[:4], "general", ["X6"], seed=2)
    for rec, spec in zip(res.records, SPECS[:4]):
        data = study2(60)(np.random.default_rng(rec.data_seed))
        live = general_test(data, "X6", fcfg, spec, seed=rec.stream_seed)
        assert (live.decision is Decision.ACCEPT_H1) == (rec.hypothesis == 1)
        assert live.permutations_used == rec.permutations
        assert live.bits() == rec.trajectory[: live.permutations_used]


def test_summary_invariants(two_sample_run):
    assert len(two_sample_run.summaries) == len(SPECS)
    for s in two_sample_run.summaries:
        assert 0 <= s.rejection_rate <= 1
        assert 1 <= s.mean_permutations <= 500
        assert s.replicates == 100 and s.failures == 0
    assert two_sample_run.summary("X1", "complete").mean_permutations == 500


def test_certain_and_complete_reject_together(two_sample_run):
    rates = {s.method: s.rejection_rate for s in two_sample_run.summaries}
    assert rates["CERTAIN"] == rates["COMPLETE"]


def test_failed_replicates_are_counted():
    calls = []

    def flaky(rng):
        calls.append(1)
        if len(calls) == 2:
            raise DataError("bad draw")
        return gen_study2(40, rng)

    gen = sb.Study("flaky", flaky, None, ("X1",))
    res = run_experiment(gen, 3, ForestConfig(ntree=5), SPECS[:1], "two_sample", seed=0)
    s = res.summaries[0]
    assert s.replicates == 2 and s.failures == 1


def test_single_replicate():
    res = run_experiment(study2(40), 1, ForestConfig(ntree=5), SPECS[:1], "two_sample",
                         ["X1"], seed=0)
    assert len(res.summaries) == 1 and res.summaries[0].replicates == 1


def test_bad_arguments():
    with pytest.raises(ConfigError):
        run_experiment(study2(40), 0, ForestConfig(ntree=5), SPECS)
    with pytest.raises(ConfigError):
        run_experiment(study2(40), 1, ForestConfig(ntree=5), [])


def test_outputs_are_byte_identical(tmp_path):
    paths = []
    for run in ("a", "b"):
        res = run_experiment(study1(0.5, 50), 4, ForestConfig(ntree=10), SPECS, "two_sample",
                             seed=3)
        d = tmp_path / run
        d.mkdir()
        write_summaries(res.summaries, d / "summary.csv")
        write_records(res.records, d / "rep.csv")
        write_manifest(res.manifest, d / "manifest.json")
        paths.append(d)
    for name in ("summary.csv", "rep.csv", "manifest.json"):
        assert (paths[0] / name).read_bytes() == (paths[1] / name).read_bytes()
    rows = list(csv.DictReader(io.StringIO((paths[0] / "summary.csv").read_text())))
    assert list(rows[0])[:4] == ["study", "variable", "method", "k"]
    assert len(rows) == 3 * len(SPECS)
    manifest = json.loads((paths[0] / "manifest.json").read_text())
    assert manifest["replicates"] == 4 and len(manifest["replicate_seeds"]) == 4


def test_manifest_reproduces_results(tmp_path):
    res = run_experiment(study2(40), 2, ForestConfig(ntree=5), SPECS[:2], "two_sample", seed=8)
    m = res.manifest
    again = run_experiment(study2(40), m["replicates"], ForestConfig(**m["forest"]),
                           [SequentialSpec(**s) for s in m["methods"]], m["test"],
                           m["variables"], seed=m["seed"])
    assert [s.rejection_rate for s in again.summaries] == [s.rejection_rate for s in res.summaries]


@pytest.mark.slow
def test_sequential_power_close_to_complete():
    res = run_experiment(study2(100), 40, ForestConfig(ntree=50), SPECS, "general", ["X3"],
                         seed=20)
    complete = res.summary("X3", "complete").rejection_rate
    for method in ("sprt", "sapt", "pval"):
        assert res.summary("X3", method).rejection_rate >= 0.95 * complete
