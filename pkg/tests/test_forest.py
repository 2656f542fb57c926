import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from seqvimp.errors import ConfigError, DataError, FitError
from seqvimp.forest import (
    Dataset,
    ForestConfig,
    fit_forest,
    forest_vimp,
    per_tree_vi,
    read_csv,
    read_schema,
    tree_vi,
)
from seqvimp.forest.importance import mean_exact
from seqvimp.simbench import StudyISpec, gen_study1, gen_study2


@pytest.fixture(scope="module")
def friedman():
    return gen_study2(100, np.random.default_rng(8))


@pytest.fixture(scope="module")
def logistic():
    return gen_study1(StudyISpec(k=1.0, n=100), np.random.default_rng(9))


# independent tree walker used as an oracle ----------------------------------------

def walk(model, t, x):
    node = 0
    while model.feature[t, node] >= 0:
        f = model.feature[t, node]
        if model.is_cat[f]:
            go_left = bool((int(model.catmask[t, node]) >> int(x[f])) & 1)
        else:
            go_left = x[f] <= model.threshold[t, node]
        node = model.left[t, node] if go_left else model.right[t, node]
    return model.value[t, node]


def loss(pred, y, task):
    if task == "regression":
        return (y - pred[0]) ** 2
    onehot = np.zeros(pred.size)
    onehot[int(y)] = 1.0
    return float(((pred - onehot) ** 2).sum())


def exact_expected_vi(model, t, j, data):
    """Mean over all cyclic shifts of the OOB rows, i.e. the exact permutation expectation."""
    oob = model.oob_indices(t)
    base = np.mean([loss(walk(model, t, data.X[i]), data.y[i], model.task) for i in oob])
    total = 0.0
    for shift in range(len(oob)):
        src = np.roll(oob, shift)
        vals = []
        for i, s in zip(oob, src):
            x = data.X[i].copy()
            x[j] = data.X[s, j]
            vals.append(loss(walk(model, t, x), data.y[i], model.task))
        total += np.mean(vals)
    return total / len(oob) - base


# config -----------------------------------------------------------------------

def test_default_mtry_by_task(friedman, logistic):
    assert ForestConfig().resolve(logistic).mtry == 3
    assert ForestConfig().resolve(friedman).mtry == 4
    assert ForestConfig().resolve(logistic).min_node_size == 1
    assert ForestConfig().resolve(friedman).min_node_size == 5


def test_default_loss_by_task(friedman, logistic):
    assert ForestConfig().resolve(logistic).loss == "brier"
    assert ForestConfig().resolve(friedman).loss == "squared_error"
    with pytest.raises(ConfigError):
        ForestConfig(loss="brier").resolve(friedman)


@pytest.mark.parametrize("kw", [dict(ntree=0), dict(nperm=0), dict(mtry=0), dict(loss="hinge"),
                                dict(min_node_size=0)])
def test_invalid_forest_config(kw):
    with pytest.raises(ConfigError):
        ForestConfig(**kw)


def test_mtry_above_p_rejected(logistic):
    with pytest.raises(ConfigError):
        fit_forest(logistic, ForestConfig(ntree=2, mtry=7))


# fitting ----------------------------------------------------------------------

def test_fit_is_deterministic(friedman):
    a = fit_forest(friedman, ForestConfig(ntree=20, seed=5))
    b = fit_forest(friedman, ForestConfig(ntree=20, seed=5))
    for name in ("feature", "threshold", "left", "right", "value", "inbag", "n_nodes"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = fit_forest(friedman, ForestConfig(ntree=20, seed=6))
    assert not np.array_equal(a.inbag, c.inbag)


def test_bootstrap_and_oob_partition_rows(friedman):
    model = fit_forest(friedman, ForestConfig(ntree=30, seed=1))
    for t in range(model.ntree):
        boot = model.bootstrap_indices(t)
        oob = model.oob_indices(t)
        assert boot.size == friedman.n
        assert not set(boot) & set(oob)
        assert set(boot) | set(oob) == set(range(friedman.n))


def test_separable_data_has_zero_oob_error():
    x = np.concatenate([np.linspace(-1, -0.5, 20), np.linspace(0.5, 1, 20)])
    data = Dataset(x[:, None], (x > 0).astype(float), target_levels=("0", "1"))
    model = fit_forest(data, ForestConfig(ntree=1, seed=2))
    oob = model.oob_indices(0)
    pred = model.tree_predict(data.X[oob])[0].argmax(axis=1)
    assert np.array_equal(pred, data.y[oob].astype(int))


def test_friedman_oob_loss_beats_mean_predictor():
    ratios = []
    for s in range(20):
        data = gen_study2(100, np.random.default_rng(1000 + s))
        model = fit_forest(data, ForestConfig(ntree=500, mtry=4, seed=s))
        pred, has = model.oob_predict(data)
        mse = np.mean((pred[has] - data.y[has]) ** 2)
        ratios.append(mse / data.y.var())
    assert np.mean(ratios) < 1.0
    assert max(ratios) < 1.0


def test_leaf_values_are_probabilities(logistic):
    model = fit_forest(logistic, ForestConfig(ntree=25, seed=3))
    probs = model.tree_predict(logistic)
    assert np.allclose(probs.sum(axis=2), 1.0, atol=1e-12, rtol=0)
    assert probs.min() >= 0
    onehot = np.eye(2)[logistic.y.astype(int)]
    brier = ((probs - onehot[None]) ** 2).sum(axis=2)
    assert brier.min() >= 0 and brier.max() <= 2


def test_predict_averages_trees(friedman):
    model = fit_forest(friedman, ForestConfig(ntree=7, seed=4))
    assert np.allclose(model.predict(friedman), model.tree_predict(friedman)[:, :, 0].mean(axis=0))


@pytest.mark.parametrize("which", ["friedman", "logistic"])
def test_row_order_does_not_matter_given_bootstrap(which, request):
    data = request.getfixturevalue(which)
    rng = np.random.default_rng(12)
    T, n = 60, data.n
    boot = rng.integers(0, n, size=(T, n))
    perm = rng.permutation(n)
    inv = np.argsort(perm)
    shuffled = data.take(perm)
    a = fit_forest(data, ForestConfig(ntree=T, seed=1), bootstrap=boot)
    b = fit_forest(shuffled, ForestConfig(ntree=T, seed=1), bootstrap=inv[boot])
    grid = data.X[np.random.default_rng(0).integers(0, n, 50)] + 1e-3
    assert np.allclose(a.tree_predict(grid), b.tree_predict(grid), rtol=0, atol=1e-12)


def test_bootstrap_shape_checked(friedman):
    with pytest.raises(ConfigError):
        fit_forest(friedman, ForestConfig(ntree=2), bootstrap=np.zeros((3, friedman.n), dtype=int))


@pytest.mark.parametrize("y,levels", [(np.zeros(20), ("a", "b")), (np.ones(20), None)])
def test_degenerate_target(y, levels):
    data = Dataset(np.arange(20.0)[:, None], y, target_levels=levels)
    with pytest.raises(FitError):
        fit_forest(data, ForestConfig(ntree=2))


def test_too_few_rows_for_node_size():
    data = Dataset(np.arange(8.0)[:, None], np.arange(8.0))
    with pytest.raises(FitError):
        fit_forest(data, ForestConfig(ntree=2))


def test_categorical_subset_split():
    rng = np.random.default_rng(0)
    g = rng.integers(0, 4, 200)
    y = np.isin(g, [0, 2]).astype(float)
    data = Dataset(g[:, None].astype(float), y, is_cat=[True], levels=[("a", "b", "c", "d")],
                   target_levels=("0", "1"))
    model = fit_forest(data, ForestConfig(ntree=5, seed=0))
    pred = model.predict(data).argmax(axis=1)
    assert np.array_equal(pred, y.astype(int))
    root_mask = int(model.catmask[0, 0])
    assert root_mask & 0b1111 in (0b0101, 0b1010)


def test_many_level_categorical_uses_ordering():
    rng = np.random.default_rng(1)
    g = rng.integers(0, 30, 600)
    y = (g % 3 == 0).astype(float)
    data = Dataset(g[:, None].astype(float), y, is_cat=[True], target_levels=("0", "1"))
    model = fit_forest(data, ForestConfig(ntree=3, seed=0))
    assert np.mean(model.predict(data).argmax(axis=1) == y) == 1.0


# importance -------------------------------------------------------------------

def test_constant_predictor_has_zero_vi(friedman):
    data = friedman.with_predictor(9, np.full(friedman.n, 0.3))
    model = fit_forest(data, ForestConfig(ntree=20, seed=0))
    vi = per_tree_vi(model, 9, data)
    assert np.all(vi[~np.isnan(vi)] == 0.0)


def test_unused_predictor_has_zero_vi(friedman):
    model = fit_forest(friedman, ForestConfig(ntree=40, mtry=1, seed=0))
    vi = per_tree_vi(model, 7, friedman)
    for t in range(model.ntree):
        if 7 not in model.used_variables(t):
            assert vi[t] == 0.0


def test_vi_matches_exact_permutation_expectation():
    rng = np.random.default_rng(4)
    x = rng.random((60, 2))
    y = 5 * (x[:, 0] > 0.5) + 0.1 * rng.standard_normal(60)
    data = Dataset(x, y)
    model = fit_forest(data, ForestConfig(ntree=3, mtry=2, min_node_size=10, seed=1))
    vi = per_tree_vi(model, 0, data, nperm=4000)
    for t in range(model.ntree):
        exact = exact_expected_vi(model, t, 0, data)
        assert exact > 0
        assert vi[t] == pytest.approx(exact, rel=0.05)


def test_vi_matches_exact_expectation_for_classification(logistic):
    model = fit_forest(logistic, ForestConfig(ntree=2, seed=2))
    vi = per_tree_vi(model, 3, logistic, nperm=3000)
    for t in range(model.ntree):
        assert vi[t] == pytest.approx(exact_expected_vi(model, t, 3, logistic), abs=0.01)


def test_forest_vimp_is_mean_of_tree_vis(friedman):
    model = fit_forest(friedman, ForestConfig(ntree=50, seed=3))
    rep = forest_vimp(model, "X1", friedman)
    assert rep.vimp == pytest.approx(rep.valid.mean(), rel=1e-12)
    assert rep.variable == "X1" and rep.loss == "squared_error"
    assert rep.vimp > 0


def test_tree_vi_agrees_with_per_tree_vector(friedman):
    model = fit_forest(friedman, ForestConfig(ntree=5, seed=3))
    vec = per_tree_vi(model, 2, friedman)
    assert tree_vi(model, 4, "X3", friedman) == vec[4]
    with pytest.raises(DataError):
        tree_vi(model, 5, 2, friedman)


def test_mean_exact_arithmetic():
    assert mean_exact([0.1, 0.3]) == pytest.approx(0.2)
    assert mean_exact([0.7] * 9) == 0.7


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40), st.randoms())
def test_mean_exact_ignores_order(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert mean_exact(values) == mean_exact(shuffled)


def test_no_oob_rows_means_undefined_vimp(friedman):
    boot = np.tile(np.arange(friedman.n), (3, 1))
    model = fit_forest(friedman, ForestConfig(ntree=3), bootstrap=boot)
    assert np.all(np.isnan(per_tree_vi(model, 0, friedman)))
    with pytest.raises(DataError):
        forest_vimp(model, 0, friedman)


def test_nperm_averaging_reduces_spread(friedman):
    model = fit_forest(friedman, ForestConfig(ntree=100, seed=0))
    one = per_tree_vi(model, 0, friedman, nperm=1)
    many = per_tree_vi(model, 0, friedman, nperm=50)
    assert np.nanstd(many) < np.nanstd(one)


def test_misclassification_loss_option(logistic):
    model = fit_forest(logistic, ForestConfig(ntree=30, loss="misclassification", seed=0))
    vi = forest_vimp(model, "X4", logistic)
    assert vi.loss == "misclassification"
    assert np.all(np.abs(vi.valid) <= 1)


def test_noise_vimp_is_centred_on_zero():
    vimps = []
    for s in range(100):
        data = gen_study1(StudyISpec(k=0.0, n=100), np.random.default_rng(500 + s))
        model = fit_forest(data, ForestConfig(ntree=100, seed=s))
        vimps.append(forest_vimp(model, "X1", data).vimp)
    positives = int(np.sum(np.array(vimps) > 0))
    assert stats.binomtest(positives, 100, 0.5).pvalue > 0.01


# data -------------------------------------------------------------------------

def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 2)), np.zeros(4))
    with pytest.raises(DataError):
        Dataset(np.array([[np.nan]]), np.zeros(1))
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 1)), np.zeros(2), names=["y"], target="y")
    with pytest.raises(DataError):
        Dataset(np.full((2, 1), 70.0), np.zeros(2), is_cat=[True])


def test_permute_predictor_keeps_other_columns(friedman):
    p = friedman.permute_predictor(2, np.random.default_rng(0))
    assert np.array_equal(np.delete(p.X, 2, axis=1), np.delete(friedman.X, 2, axis=1))
    assert np.array_equal(np.sort(p.X[:, 2]), np.sort(friedman.X[:, 2]))
    assert not np.array_equal(p.X[:, 2], friedman.X[:, 2])


def write(path, text):
    path.write_text(text)
    return path


def test_read_csv_infers_types_and_drops_incomplete_rows(tmp_path):
    f = write(tmp_path / "d.csv", "a,b,g,y\n1,2.5,x,yes\n2,NA,y,no\n3,1.5,x,no\n4,0.5,z,yes\n")
    data = read_csv(f, "y")
    assert data.n == 3 and data.names == ("a", "b", "g")
    assert list(data.is_cat) == [False, False, True]
    assert data.levels[2] == ("x", "z")
    assert data.task == "classification" and data.target_levels == ("no", "yes")
    assert list(data.y) == [1, 0, 1]


def test_read_csv_numeric_target_means_regression(tmp_path):
    f = write(tmp_path / "d.csv", "a,y\n1,0.5\n2,1.5\n")
    assert read_csv(f, "y").task == "regression"


def test_schema_overrides_inference(tmp_path):
    f = write(tmp_path / "d.csv", "a,b,y\n1,2,0\n2,3,1\n1,4,1\n")
    s = write(tmp_path / "s.txt", "# types\na:categorical\ny:categorical\n")
    schema = read_schema(s)
    data = read_csv(f, "y", schema)
    assert list(data.is_cat) == [True, False]
    assert data.task == "classification"


@pytest.mark.parametrize("text,target", [("a,y\n1,2\n", "z"), ("a,y\n1\n", "y"), ("", "y"),
                                         ("a,y\nNA,1\n", "y")])
def test_read_csv_errors(tmp_path, text, target):
    f = write(tmp_path / "d.csv", text)
    with pytest.raises(DataError):
        read_csv(f, target)


def test_bad_schema_line(tmp_path):
    s = write(tmp_path / "s.txt", "a:string\n")
    with pytest.raises(ConfigError):
        read_schema(s)


def test_declared_numeric_column_must_parse(tmp_path):
    f = write(tmp_path / "d.csv", "a,y\nx,1\ny,2\n")
    with pytest.raises(DataError):
        read_csv(f, "y", {"a": "numeric"})


def test_missing_file():
    with pytest.raises(DataError):
        read_csv("/nonexistent/file.csv", "y")
