import math

import numpy as np
import pytest
from scipy.special import expit

from oracles import TILTS, quadrature_truth

from wate.errors import ConfigError
from wate.estimands import ATE, ATO, PAPER_ESTIMANDS
from wate.simulation import (
    MODELS,
    EffectType,
    ScenarioSpec,
    _super_covariates,
    generate,
    make_cell,
    pseudo_true_wate,
    run_monte_carlo,
    run_replicates,
    summarize_cell,
    true_wate,
    true_wates,
    TRUTH_SEED,
)
from wate.variance import METHOD_TAGS, normal_quantile

def test_model_table():
    assert MODELS[2].beta == (-0.78, 0.3, 0.4, 0.4, 0.4, -0.1, -0.1, 0.1)
    assert MODELS[4].beta == (0.2, 1.0, -0.9, -0.9, 0.9, 0.15, 0.15, -0.2)
    assert MODELS[5].beta == MODELS[3].beta and MODELS[5].n_default == 50
    assert [MODELS[m].beta[0] for m in (1, 2, 3)] == [-2.17, -0.78, 0.98]


def test_scenarios():
    a1, a2, a3, a4 = (ScenarioSpec(t) for t in ("A1", "A2", "A3", "a4"))
    assert a1.ps_spec.column_indices == tuple(range(7)) == a1.or_spec.column_indices
    assert a2.ps_spec == a1.ps_spec and a2.or_spec.column_indices == (0, 1, 2, 3)
    assert a3.or_spec == a1.or_spec and a3.ps_spec.column_indices == (0, 1, 2, 3)
    assert a4.ps_spec == a4.or_spec == a2.or_spec
    with pytest.raises(ConfigError):
        ScenarioSpec("A5")


def test_generate_bookkeeping_and_determinism():
    s = generate(2, 500, "heterogeneous", 3)
    ds = s.dataset
    np.testing.assert_array_equal(ds.y, np.where(ds.z == 1, s.y1, s.y0))
    x = ds.covariates
    np.testing.assert_array_equal(x[:, 4], x[:, 0] ** 2)
    np.testing.assert_array_equal(x[:, 5], x[:, 0] * x[:, 1])
    np.testing.assert_array_equal(x[:, 6], x[:, 1] ** 2)
    np.testing.assert_allclose(s.delta, 4 + 3 * (x[:, 0] + x[:, 1]) ** 2 + x[:, 0] * x[:, 2])
    np.testing.assert_allclose(s.y1 - s.y0 - s.delta, s.y1 - s.y0 - s.delta)
    t = generate(2, 500, EffectType.HETEROGENEOUS, 3)
    assert t.dataset.y.tobytes() == ds.y.tobytes()
    assert generate(2, 500, "het", 4).dataset.y.tobytes() != ds.y.tobytes()
    h = generate(2, 500, "homogeneous", 3)
    np.testing.assert_array_equal(h.delta, 4.0)
    with pytest.raises(ConfigError):
        generate(2, 1, "het", 0)


def test_outcome_noise_is_standard_normal():
    s = generate(2, 200_000, "homogeneous", 1)
    x = s.dataset.covariates
    base = 0.5 + x[:, 0] + 0.6 * x[:, 1] + 2.2 * x[:, 2] - 1.2 * x[:, 3] + (x[:, 0] + x[:, 1]) ** 2
    for eps in (s.y0 - base, s.y1 - base - 4.0):
        assert abs(eps.mean()) < 0.01 and abs(eps.std() - 1) < 0.01


def test_covariate_moments():
    x = _super_covariates(1_000_000, TRUTH_SEED)
    assert abs(x[:, 3].mean() - 0.5) < 0.002
    assert abs(x[:, 2].mean() - 0.5) < 0.002
    sel = (x[:, 2] == 1) & (x[:, 3] == 1)
    c = np.cov(x[sel, 0], x[sel, 1])
    np.testing.assert_allclose(c, [[1, 0.5], [0.5, 1]], atol=0.01)
    np.testing.assert_allclose([x[sel, 0].mean(), x[sel, 1].mean()], [0.5, 1.0], atol=0.01)
    sel = (x[:, 2] == 0) & (x[:, 3] == 1)
    c = np.cov(x[sel, 0], x[sel, 1])
    np.testing.assert_allclose(c, [[2, 0.25], [0.25, 2]], atol=0.02)


@pytest.mark.parametrize("model,p", [(1, 0.20), (2, 0.459), (3, 0.80)])
def test_treated_share(model, p):
    z = generate(model, 1_000_000, "homogeneous", 12).dataset.z
    assert abs(z.mean() - p) < 0.01


def test_homogeneous_truth_is_four():
    for m in (1, 2, 3, 4):
        for v in true_wates(m, "homogeneous", PAPER_ESTIMANDS).values():
            assert v == pytest.approx(4.0, abs=1e-9)


@pytest.mark.parametrize("model", [1, 2, 3, 4])
def test_truth_against_quadrature(model):
    """The super-population estimate lies within 4 of its own standard errors of the exact value."""
    x = _super_covariates(1_000_000, TRUTH_SEED)
    b = np.array(MODELS[model].beta)
    e = expit(b[0] + x @ b[1:])
    d = 4 + 3 * (x[:, 0] + x[:, 1]) ** 2 + x[:, 0] * x[:, 2]
    for est in PAPER_ESTIMANDS:
        g = TILTS[est.tag](e)
        ratio = g @ d / g.sum()
        se = np.std(g * (d - ratio)) / g.mean() / math.sqrt(len(g))
        exact = quadrature_truth(model, est.tag)
        assert abs(true_wate(model, "het", est) - exact) < 4 * se


def test_quadrature_matches_reference_truths():
    # exact integrals agree with the two-decimal reference truths
    reference = {
        (2, "ATE"): 17.22, (2, "ATT"): 18.35, (2, "ATO"): 15.07, (2, "ATM"): 14.26,
        (2, "ATEN"): 15.47, (1, "ATT"): 20.92, (3, "ATO"): 15.42, (3, "ATM"): 15.84,
        (4, "ATEN"): 17.68,
    }
    for (m, tag), v in reference.items():
        assert quadrature_truth(m, tag) == pytest.approx(v, abs=0.02)


def test_truth_validation():
    with pytest.raises(ConfigError):
        true_wate(2, "het", ATE, n_super=1000)


def test_pseudo_truth_scenarios():
    n = 300_000
    t = quadrature_truth(2, "ATE")
    a1 = pseudo_true_wate(2, "het", ATE, "A1", n)
    assert abs(a1 - t) < 0.15
    a4 = pseudo_true_wate(2, "het", ATE, "A4", n)
    assert 1.0 < t - a4 < 2.0
    assert pseudo_true_wate(2, "hom", ATO, "A2", n) == pytest.approx(4.0, abs=0.05)


def test_make_cell_validation():
    with pytest.raises(ConfigError):
        make_cell(2, None, "het", "A1", [], ["sand"], 10, 0)
    with pytest.raises(ConfigError):
        make_cell(2, None, "het", "A1", [ATE], [], 10, 0)
    with pytest.raises(ConfigError):
        make_cell(2, None, "het", "A1", [ATE], ["boot3"], 10, 0)
    with pytest.raises(ConfigError):
        make_cell(2, None, "het", "A1", [ATE], ["boot1"], 1, 0)
    with pytest.raises(ConfigError):
        make_cell(9, None, "het", "A1", [ATE], ["sand"], 1, 0)
    assert make_cell(5, None, "het", "A1", [ATE], ["sand"], 1, 0).n == 50


TRUTHS = {e: quadrature_truth(2, e.tag) for e in PAPER_ESTIMANDS}


@pytest.fixture(scope="module")
def small_cell():
    cfg = make_cell(2, 200, "het", "A1", PAPER_ESTIMANDS, METHOD_TAGS, 12, 21)
    return cfg, run_replicates(cfg, 6)


def test_monte_carlo_deterministic_across_workers(small_cell):
    cfg, table = small_cell
    again = run_replicates(cfg, 6)
    par = run_replicates(cfg, 6, workers=2)
    for other in (again, par):
        assert other.tau.tobytes() == table.tau.tobytes()
        for m in cfg.methods:
            assert other.variance[m].tobytes() == table.variance[m].tobytes()


def test_replicate_prefix_stability(small_cell):
    cfg, table = small_cell
    head = run_replicates(cfg, 3)
    assert head.tau.tobytes() == table.tau[:3].tobytes()


def test_metrics_recomputed_from_replicates(small_cell):
    cfg, table = small_cell
    rows = summarize_cell(table, TRUTHS, 0.05)
    assert len(rows) == len(PAPER_ESTIMANDS) * len(METHOD_TAGS)
    z = normal_quantile(0.975)
    for row in rows:
        j = [e.name for e in cfg.estimands].index(row.estimand)
        est = cfg.estimands[j]
        tau = table.tau[:, j]
        v = table.variance[row.method][:, j]
        esd = np.std(tau, ddof=1)
        assert row.esd == esd
        assert row.median_re == float(np.median(esd**2 / v))
        assert row.median_se == float(np.median(np.sqrt(v)))
        assert row.cp == float(np.mean(np.abs(tau - TRUTHS[est]) <= z * np.sqrt(v)))
        assert 0 <= row.cp <= 1
        bias = np.mean(tau - TRUTHS[est])
        assert row.rmse**2 >= bias**2 - 1e-12
        assert row.arbias_pct == pytest.approx(100 * abs(np.mean((tau - TRUTHS[est]) / TRUTHS[est])))
        assert row.failures == 0 and row.M == 6 and row.R == 12


def test_cp_monotone_in_alpha(small_cell):
    _, table = small_cell
    narrow = summarize_cell(table, TRUTHS, 0.10)
    wide = summarize_cell(table, TRUTHS, 0.05)
    for a, b in zip(narrow, wide):
        assert a.cp <= b.cp


def test_wb_ate_variants_coincide(small_cell):
    cfg, table = small_cell
    j = cfg.estimands.index(ATE)
    assert table.variance["wbexp1"][:, j].tobytes() == table.variance["wbexp2"][:, j].tobytes()
    assert table.variance["wbrad1"][:, j].tobytes() == table.variance["wbrad2"][:, j].tobytes()


def test_run_monte_carlo_rows_and_failures():
    rows = run_monte_carlo(5, None, "het", "A1", [ATO], ["sand", "boot2"], 20, 10, seed=3,
                           truths={ATO: 1.0})
    assert {r.method for r in rows} == {"sand", "boot2"}
    sand = next(r for r in rows if r.method == "sand")
    assert 0 < sand.failures < 20
    rows2 = run_monte_carlo(5, None, "het", "A1", [ATO], ["sand", "boot2"], 20, 10, seed=3,
                            truths={ATO: 1.0})
    assert repr(rows) == repr(rows2)
