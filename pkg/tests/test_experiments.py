import math

import numpy as np
import pytest

from sksfem import experiments as ex
from sksfem.config import RunConfig
from sksfem.noise import make_model, sample_path
from sksfem.spline import build_space

SMALL = RunConfig(N=16, T=0.1, M=16, M_list=(8, 16, 32), M_ref=256, N_list=(8, 16, 32),
                  N_ref=128, mc=3, seed=99)


def test_fit_rate_recovers_power_law():
    k = 0.1 / 2.0 ** np.arange(5)
    rep = ex.fit_rate(k, 3.0 * k**0.5)
    assert rep.slope == pytest.approx(0.5, abs=1e-12)
    assert rep.intercept == pytest.approx(math.log(3.0), abs=1e-12)
    assert rep.residual < 1e-12 and rep.ci_halfwidth < 1e-6


def test_fit_rate_ci_uses_student_t():
    k = 1.0 / 2.0 ** np.arange(4)
    err = k * np.array([1.0, 1.1, 0.95, 1.05])
    rep = ex.fit_rate(k, err)
    from scipy import stats
    fit = stats.linregress(np.log(k), np.log(err))
    assert rep.ci_halfwidth == pytest.approx(stats.t.ppf(0.975, 2) * fit.stderr)


@pytest.mark.parametrize("x, y, msg", [([1, 0.5], [1, 1], "at least 3"),
                                       ([1, 0.5, 0.3], [1, 1, 1], "dyadic"),
                                       ([1, 0.5, 0.25], [1, 0, 1], "positive")])
def test_fit_rate_rejects(x, y, msg):
    with pytest.raises(ValueError, match=msg):
        ex.fit_rate(x, y)


def test_projection_rate_order():
    assert ex.projection_rate(2 * math.pi, 4, (8, 16, 32, 64)).slope == pytest.approx(4.0, abs=0.3)
    assert ex.projection_rate(2 * math.pi, 5, (8, 16, 32)).slope == pytest.approx(5.0, abs=0.3)


def test_path_errors_vanish_on_identical_states():
    space = build_space(2 * math.pi, 8, 4)
    ref = build_space(2 * math.pi, 32, 4)
    emb = ex.Embedding.build(space, ref)
    states = np.random.default_rng(0).standard_normal((5, 8))
    out = ex.path_errors(states, emb.lift(states), emb, 1.0, 0.1)
    assert out["sup_l2"] < 1e-12 and out["h2"] < 1e-12
    # a reference on a twice finer time grid is subsampled
    fine = np.repeat(emb.lift(states), 2, axis=0)[1:]
    assert ex.path_errors(states, fine, emb, 1.0, 0.1)["sup_l2"] < 1e-12


def test_embedding_rejects_non_nested():
    with pytest.raises(ValueError):
        ex.Embedding.build(build_space(1.0, 12, 4), build_space(1.0, 32, 4))


def test_quad_form_matches_dense():
    from sksfem.assembly import assemble_bending
    A = assemble_bending(build_space(1.0, 10, 5))
    X = np.random.default_rng(1).standard_normal((4, 10))
    np.testing.assert_allclose(ex.quad_form(A, X), np.einsum("ni,ij,nj->n", X, A.to_dense(), X))


def test_jensen_ordering_is_exact():
    gen = np.random.default_rng(2)
    rep = ex.ErrorReport(sup_l2=gen.exponential(size=50), h2=gen.exponential(size=50),
                         l2_sq=gen.exponential(size=(50, 4)))
    agg = rep.aggregates()
    assert agg["sup_l2_4q[q=0.5]"][0] >= agg["sup_l2_2q[q=0.5]"][0]
    assert agg["sup_l2_2q[q=0.75]"][0] >= agg["sup_l2_2q[q=0.5]"][0]


def test_check_coupling_detects_corruption():
    path = sample_path(0, 1.0, 4)
    ex._check_coupling(path, [2, 4, 8])
    bad = list(path.levels)
    bad[2] = bad[2] + 1e-3
    with pytest.raises(ex.InvariantViolation):
        ex._check_coupling(type(path)(path.seed, path.T, path.max_level, tuple(bad)), [4])


def test_temporal_rate_small_is_reproducible():
    a = ex.temporal_rate(SMALL)
    b = ex.temporal_rate(SMALL)
    assert set(a.rates) == {"sup_l2_2q[q=0.5]", "sup_l2_2q[q=0.75]", "sup_l2_4q[q=0.5]", "h2"}
    for name in a.rates:
        assert a.rates[name].slope == b.rates[name].slope
    assert len(list(a.table_rows())) == 4 * 3 and len(list(a.raw_rows())) == 3 * 3
    assert 0.1 < a.rate.slope < 1.5


def test_workers_do_not_change_results():
    a = ex.temporal_rate(SMALL.with_(mc=2))
    b = ex.temporal_rate(SMALL.with_(mc=2, workers=2))
    np.testing.assert_array_equal(a.reports[0].sup_l2, b.reports[0].sup_l2)


def test_spatial_rate_deterministic_control():
    study = ex.spatial_rate(SMALL.with_(model="zero", M=16))
    assert study.reports[0].samples == 1
    assert study.rate.slope >= 1.7
    assert study.extra["projection"].slope == pytest.approx(4.0, abs=0.5)


def test_localization_radius():
    rho = ex.localization_radius(1.0, 1.0, 0.25, 2 * math.pi / 64, 0.5)
    assert rho == pytest.approx(1.0 / 9.0 * 0.5 * math.log(64 / (2 * math.pi)))
    assert ex.localization_radius(1, 1, 0.25, 0.01, 0.5) > ex.localization_radius(1, 1, 0.25, 0.1, 0.5)


def test_localized_limits():
    cfg = SMALL.with_(model="linear", u0_amp=0.1, mc=4)
    full = ex.localized_error(cfg, rho=math.inf)
    none = ex.localized_error(cfg, rho=-1.0)
    np.testing.assert_array_equal(full.probability, 1.0)
    np.testing.assert_array_equal(none.probability, 0.0)
    for a, b in zip(full.localized, full.unlocalized):
        assert a.max_mean_l2() == b.max_mean_l2()
    assert all(r.max_mean_l2() == 0.0 for r in none.localized)
    rule = ex.localized_error(cfg)
    assert np.all(np.diff(rule.probability) >= 0)
    assert len(list(rule.rows())) == 3


def test_stability_and_holder_shapes():
    rep = ex.stability_stats(SMALL)
    assert set(rep.h2_sums) == {16, 32}
    assert all(np.isfinite(v[0]) for v in rep.sup_moments.values())
    table = ex.holder_quotients(SMALL.with_(M_ref=64), m_list=(0, 1), q_list=(1.0, 0.5))
    assert set(table.quotients) == {(0, 1.0), (0, 0.5), (1, 1.0), (1, 0.5)}
    assert all(np.all(v > 0) for v in table.quotients.values())


def test_holder_deterministic_quotient_shrinks_with_gap():
    # a smooth deterministic flow has ||u(t) - u(s)||^2 ~ (t - s)^2
    table = ex.holder_quotients(SMALL.with_(model="zero", M_ref=256, mc=1), m_list=(0,))
    q = table.quotients[(0, 1.0)]
    assert np.all(np.diff(q) > 0)


def test_kappa_threshold():
    assert ex.kappa_threshold(make_model("sin", 2 * math.pi)) == pytest.approx(1 / (32 * math.pi))
    assert ex.kappa_threshold(make_model("zero", 1.0)) == math.inf
    with pytest.raises(ValueError, match="unbounded"):
        ex.kappa_threshold(make_model("linear", 1.0))


def test_exp_moment_overflow_and_default_kappa():
    cfg = SMALL.with_(mc=2)
    rep = ex.exp_moment_stats(cfg)
    assert rep.kappa == pytest.approx(1 / (32 * math.pi)) and rep.samples == 4
    with pytest.raises(ex.ExpMomentOverflow):
        ex.exp_moment_stats(cfg, kappa=1e4)


def test_theorem_hypotheses_recorded():
    out = ex.theorem_hypotheses(RunConfig())
    assert out["L0_condition_holds[q=0.5]"] is False
    assert out["L0_bound[q=0.5]"] == pytest.approx(1 / (240 * math.sqrt(0.5)))


def test_divergence_context_in_experiment():
    cfg = SMALL.with_(newton_tol=1e-300, newton_max_iter=1, mc=1)
    with pytest.raises(ex.NewtonDivergence) as info:
        ex.temporal_rate(cfg)
    assert info.value.seed == [99, ex.EXPERIMENT_CODES["convergence-time"], 0]
    assert info.value.M == 256 and info.value.step_index == 0
