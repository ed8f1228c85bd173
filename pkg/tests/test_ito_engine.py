import numpy as np
import pytest

from fwdwick.errors import ConfigError
from fwdwick.frac_ops import constants, frac_int_plus
from fwdwick.functions import constant, parse_function, polynomial
from fwdwick.ito_engine import (
    ExperimentConfig,
    FbmRung,
    RosenblattRung,
    decomposition_check_fbm,
    decomposition_check_rosenblatt,
    forward_sum,
    ito_formula_check,
    lemma_gap_quadrature,
    rhs_theorem1,
    rhs_theorem3,
)
from fwdwick.kernels import fbm_kernel_table, rosenblatt_kernel_table
from fwdwick.malliavin import functional_of_rosenblatt, rosenblatt_operator, skorokhod2_rank1
from fwdwick.noise_grid import make_graded_grid, make_grid, required_left_cut, sample_noise_batch

H = 0.7
SMALL = dict(eps_ladder=(0.2, 0.1), replicates=200, chunk=50)


# ------------------------------------------------------------ forward sum


def test_forward_sum_linear_path():
    a, b, dt, eps = 0.25, 1.0, 1 / 40, 0.1
    t = np.arange(0, 1.0 + dt / 2, dt)
    got = forward_sum(constant(1.0), t, t, eps, a, b)
    # left Riemann sum of the capped increment; the exact integral is (b-a) - eps/2
    assert got == pytest.approx((b - a) - eps / 2 + dt / 2, rel=1e-13)
    fine = np.arange(0, 1.0 + 1e-9, 1 / 4000)
    assert forward_sum(constant(1.0), fine, fine, eps, a, b) == pytest.approx((b - a) - eps / 2, abs=2e-4)


def test_forward_sum_constant_integrand_telescopes():
    r = np.random.default_rng(0)
    t = np.linspace(0, 1, 401)
    X = np.cumsum(r.normal(size=401)) * 0.05
    eps = 1 / 400
    got = forward_sum(constant(2.0), X, t, eps, 0.0, 1.0)
    assert got == pytest.approx(2.0 * (X[-1] - X[0]), rel=1e-12)


def test_forward_sum_zero_path_and_errors():
    t = np.linspace(0, 1, 11)
    assert forward_sum(parse_function("x2"), np.zeros(11), t, 0.2, 0.0, 1.0) == 0.0
    with pytest.raises(ConfigError):
        forward_sum(parse_function("x2"), np.zeros(11), t, 0.15, 0.0, 1.0)
    with pytest.raises(ConfigError):
        forward_sum(parse_function("x2"), np.zeros(3), np.array([0.0, 0.1, 0.5]), 0.1, 0.0, 0.5)


# --------------------------------------------------- pathwise identities


def test_fbm_decomposition_exact():
    g = make_graded_grid(1 / 40, 1.5, required_left_cut(H, "fbm", 1e-3))
    xi = sample_noise_batch(g, 1, range(20))
    for x in xi:
        res = decomposition_check_fbm(parse_function("x3"), H, g, 0.5, 0.1, x)
        assert res["residual"] < 1e-9 * (1 + abs(res["lhs"]))


def test_fbm_decomposition_deterministic_phi():
    g = make_grid(-20.0, 1.5, 200)
    x = sample_noise_batch(g, 2, [0])[0]
    res = decomposition_check_fbm(constant(3.0), H, g, 0.5, 0.1, x)
    assert res["trace"] == 0.0
    assert res["lhs"] == pytest.approx(res["wick"], rel=1e-14)


def test_fbm_trace_term_matches_fractional_route():
    # h <grad Phi, g> = F'(B_t) <c_t, c_{t+eps} - c_t>_W against
    # A * int_t^{t+eps} I_+^(H-1/2)(c_t)(s) ds
    t, eps = 0.5, 0.1
    g = make_graded_grid(1 / 320, 1.5, required_left_cut(H, "fbm", 1e-5))
    tab = fbm_kernel_table(H, g, np.array([t, t + eps]))
    grid_route = g.inner(tab.C[0], tab.C[1] - tab.C[0])
    s = t + (np.arange(200) + 0.5) * eps / 200
    frac_route = constants(H).A * np.mean(frac_int_plus(H - 0.5, g, tab.C[0], s)) * eps
    assert grid_route == pytest.approx(frac_route, rel=1e-3)


@pytest.fixture(scope="module")
def small_ros():
    g = make_grid(-6.0, 1.5, 6)
    tab = rosenblatt_kernel_table(H, g, np.array([0.5, 0.6]), nq=2)
    return g, tab


def test_rosenblatt_decomposition_exact(small_ros):
    g, tab = small_ros
    r = np.random.default_rng(4)
    for name in ("x2", "x3", "poly:1,-0.5,0.3,0.2"):
        for _ in range(10):
            x = r.normal(size=6) * np.sqrt(g.widths)
            res = decomposition_check_rosenblatt(parse_function(name), tab, 0.5, 0.1, x)
            assert res["residual"] < 1e-8 * res["scale"]


def test_rosenblatt_decomposition_constant_phi(small_ros):
    g, tab = small_ros
    x = np.random.default_rng(5).normal(size=6)
    res = decomposition_check_rosenblatt(constant(1.5), tab, 0.5, 0.1, x)
    assert res["middle"] == 0.0 and res["trace"] == 0.0
    assert res["lhs"] == pytest.approx(res["wick"], rel=1e-12)


def test_rosenblatt_second_trace_dense_route(small_ros):
    g, tab = small_ros
    x = np.random.default_rng(6).normal(size=6)
    F = parse_function("x3")
    res = decomposition_check_rosenblatt(F, tab, 0.5, 0.1, x)
    Phi = functional_of_rosenblatt(F, rosenblatt_operator(tab, 0.5), x, g.widths)
    K = tab.dense(0.6) - tab.dense(0.5)
    W = np.diag(g.widths)
    dense = float(np.sum((W @ Phi.second_dense() @ W) * K))
    assert res["trace"] == pytest.approx(dense, rel=1e-10)


def test_rank_one_e_kernel_matches_dense():
    from fwdwick.kernels import l_table

    g = make_grid(-6.0, 1.5, 6)
    tab = rosenblatt_kernel_table(H, g, np.array([0.5]), nq=3)
    l = l_table(tab, [0.5], [0.5])[0]
    x = np.random.default_rng(7).normal(size=6)
    rank1 = (x @ l) ** 2 - (l * l) @ g.widths
    E = np.outer(l, l)
    dense = x @ E @ x - np.trace(E * g.widths)
    assert rank1 == pytest.approx(dense, rel=1e-10)


# ------------------------------------------------------------ RHS terms


def test_zero_function_gives_zero_terms():
    g = make_graded_grid(1 / 40, 1.25, -2.0e5)
    t = np.linspace(0.25, 1.0, 16)
    xi = sample_noise_batch(g, 1, range(3))
    zero = polynomial([0.0])
    for terms in (rhs_theorem1(zero, xi, FbmRung(H, g, t)), rhs_theorem3(zero, xi, RosenblattRung(H, g, t))):
        assert all(np.all(v == 0.0) for v in terms.values())


def test_rosenblatt_wick_term_matches_rank1_divergence():
    # the node-space wick2 term equals sum_m dt-weighted delta^2 evaluated by rank-1 formulas
    g = make_graded_grid(1 / 20, 1.25, -400.0)
    t = np.linspace(0.25, 0.5, 6)
    rung = RosenblattRung(H, g, t, nq=2)
    F = parse_function("x3")
    x = sample_noise_batch(g, 3, [0])[0]
    got = rung.rhs(F, x[None, :])[1]["wick2"][0]
    tab = rung.table
    ref = 0.0
    for k in range(t.size - 1):
        Phi = functional_of_rosenblatt(F, rosenblatt_operator(tab, t[k]), x, g.widths)
        n0, n1 = tab.n_before(t[k]), tab.n_before(t[k + 1])
        for m in range(n0, n1):
            ref += tab.d * tab.omega[m] * skorokhod2_rank1(tab.V[m], Phi, x, g.widths)
    assert got == pytest.approx(ref, rel=1e-10)


# ------------------------------------------------------------ config


@pytest.mark.parametrize("change", [
    dict(H=0.4), dict(process="levy"), dict(a=1.0, b=0.5), dict(eps_ladder=(0.1, 0.2)),
    dict(a=0.26), dict(grid="uniform"), dict(F="expsq:0.9"), dict(left_cut=-0.5),
    dict(process="rosenblatt", F="expsq:0.01"), dict(replicates=1),
])
def test_invalid_configs(change):
    with pytest.raises(ConfigError):
        ExperimentConfig(**change).validate()


def test_ladder_coupling():
    cfg = ExperimentConfig()
    assert cfg.ladder()[-1] == (0.025, 0.025 / 8, 0.025 / 16)
    grids = cfg.rung_grids()
    assert [g.spacing for g in grids] == pytest.approx([1 / 80, 1 / 160, 1 / 320, 1 / 640])


# --------------------------------------------------------------- runs


def test_empty_interval():
    rep = ito_formula_check(ExperimentConfig(a=0.5, b=0.5, **SMALL))
    assert rep.passed
    assert all(r.rms == 0 and r.mean_lhs == 0 and r.mean_rhs == 0 for r in rep.rungs)


def test_zero_function_run():
    rep = ito_formula_check(ExperimentConfig(F="poly:0", **SMALL))
    assert all(r.rms == 0.0 for r in rep.rungs)


def test_worker_count_does_not_change_results():
    a = ito_formula_check(ExperimentConfig(workers=1, **SMALL))
    b = ito_formula_check(ExperimentConfig(workers=3, **SMALL))
    for ra, rb in zip(a.rungs, b.rungs):
        assert ra.rms == rb.rms and ra.terms == rb.terms


def test_rosenblatt_terms_reproducible():
    cfg = ExperimentConfig(process="rosenblatt", F="x3", **SMALL)
    a, b = ito_formula_check(cfg), ito_formula_check(cfg)
    assert a.rungs[-1].terms == b.rungs[-1].terms
    assert set(a.rungs[-1].terms) == {"wick2", "div_l", "trace_h", "trace_kappa3", "trace_e"}


def test_fbm_small_run_converges():
    rep = ito_formula_check(ExperimentConfig(**SMALL))
    assert rep.rungs[1].rms < rep.rungs[0].rms
    assert rep.rungs[-1].rel_rms < 0.1


def test_lemma_gap_shrinks():
    vals = [lemma_gap_quadrature(H, 0.5, e)[0] for e in (0.2, 0.1, 0.05)]
    assert vals[0] > vals[1] > vals[2] > 0
