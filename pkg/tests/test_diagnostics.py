import csv
import io
import json

import numpy as np
import pytest

from renormstat import diagnostics as d
from renormstat.ensembles import typical_vector_reduced
from renormstat.errors import ValidationError
from renormstat.models import PAULI, build_model, chaotic_spec, integrable_spec
from renormstat.renorm import EnvironmentData, interaction_blocks
from renormstat.spectra import Spectrum, centered_window, diagonalize, env_windows, make_window


def env_data(spec):
    hs = build_model(spec)
    return hs, EnvironmentData(diagonalize(hs.h_env), hs.space), diagonalize(hs.h_s)


@pytest.fixture(scope="module")
def chaotic8():
    return env_data(chaotic_spec(8, epsilon=0.3, system_field=2.0, interaction_terms=(("x", "n"),)))


# -- G statistics -------------------------------------------------------------------


def test_g_normalization_and_completeness(chaotic8):
    hs, env, _ = chaotic8
    g = d.g_statistics(env, 100, seed=1)
    assert g.normalization_error < 1e-12
    assert g.completeness_error < 1e-12
    rng = np.random.default_rng(0)
    triples = [(int(rng.integers(env.spec.dim)), int(rng.integers(2)), int(rng.integers(2))) for _ in range(30)]
    assert d.completeness_residuals(env, triples).max() < 1e-12


def test_g_statistics_match_estimates(chaotic8):
    hs, env, _ = chaotic8
    g = d.g_statistics(env, 200, seed=2)
    assert abs(g.summaries["g_diag"]["mean"] - g.predicted_diag) <= 0.2 * g.predicted_diag
    for per_m in g.summaries["g_diag_per_m"]:
        assert abs(per_m["mean"] - 0.5) <= 0.1
    ratio = g.summaries["g_offdiag"]["mean"] / g.predicted_offdiag
    assert 0.5 <= ratio <= 2.0


def test_g_statistics_export(chaotic8):
    hs, env, _ = chaotic8
    g = d.g_statistics(env, 20, seed=3)
    data = json.loads(d.to_json(g))
    assert data["n_a"] == 2
    text = d.rows_to_csv(g.rows())
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 20 * 2 + 20


# -- element hierarchy ----------------------------------------------------------------


def test_hierarchy_zero_coupling():
    hs, env, sys_spec = env_data(chaotic_spec(5, epsilon=0.0))
    h = d.element_hierarchy(interaction_blocks(hs, sys_spec), env, 200, 0)
    assert h.offdiag_magnitudes.size == 0 or not np.any(h.offdiag_magnitudes)
    assert not np.any(h.diag_values)
    assert h.hierarchy_ratio is None


def test_hierarchy_under_bound(chaotic8):
    hs, env, sys_spec = chaotic8
    h = d.element_hierarchy(interaction_blocks(hs, sys_spec), env, 2000, 0)
    assert h.fraction_under_bound >= 0.95
    assert h.hierarchy_ratio > 1


def test_hierarchy_inapplicable_for_traceless_blocks():
    hs, env, sys_spec = env_data(chaotic_spec(5, epsilon=0.3, interaction_terms=(("x", "x"),)))
    h = d.element_hierarchy(interaction_blocks(hs, sys_spec), env, 200, 0)
    assert h.hierarchy_ratio is None
    assert "hierarchy_ratio" in h.to_dict()


def test_hierarchy_ratio_grows_with_environment():
    ratios, medians, sizes = [], [], []
    for nb in (5, 6, 7, 8):
        hs, env, sys_spec = env_data(chaotic_spec(nb, epsilon=0.3, system_field=2.0, interaction_terms=(("x", "n"),)))
        h = d.element_hierarchy(interaction_blocks(hs, sys_spec), env, 1500, 0)
        ratios.append(h.hierarchy_ratio)
        medians.append(h.median_offdiag)
        sizes.append(hs.space.n_env)
    assert all(a < b for a, b in zip(ratios, ratios[1:]))
    slope = np.polyfit(np.log(sizes), np.log(medians), 1)[0]
    assert -0.7 <= slope <= -0.3


def test_bare_diagonal_identity_blocks():
    hs, env, sys_spec = env_data(chaotic_spec(5, epsilon=0.3, interaction_terms=(("x", "i"),)))
    blocks = interaction_blocks(hs, sys_spec)
    windows = env_windows(env.spec, sys_spec.values, -1.0, 2.0)
    rows = d.bare_diagonal_check(blocks, env, windows)
    assert rows and all(r["max_deviation"] < 1e-14 for r in rows)


def test_bare_diagonal_chaotic(chaotic8):
    hs, env, sys_spec = chaotic8
    blocks = interaction_blocks(hs, sys_spec)
    windows = env_windows(env.spec, sys_spec.values, -2.0, 1.0)
    rows = d.bare_diagonal_check(blocks, env, windows)
    assert all(r["within_slack"] for r in rows)
    assert not any(r["cap_violated"] for r in rows)
    full = blocks.diagonal_elements(env)
    # exact ceiling: |sum O_mn G_nm| <= sum |O_mn| = N_A^2 h_ab
    assert np.abs(full).max() <= hs.space.n_a**2 * blocks.h_max + 1e-12


# -- perturbative width -------------------------------------------------------------------


def test_narrowest_window_synthetic():
    e = np.arange(10.0)
    p = np.zeros(10)
    p[[3, 4, 5]] = [0.2, 0.6, 0.2]
    assert d.narrowest_window(e, p, 4, 0.25) == (3, 4) or d.narrowest_window(e, p, 4, 0.25) == (4, 5)
    assert d.narrowest_window(e, p, 4, 0.1) == (3, 5)
    assert d.narrowest_window(e, p, 4, 0.5) == (4, 4)


def test_width_zero_coupling():
    hs = build_model(chaotic_spec(5, epsilon=0.0, system_field=2.0, interaction_terms=(("x", "n"),)))
    total = diagonalize(hs.h_total)
    rep = d.perturbative_width(hs, total, total.dim // 2, 0.01)
    assert rep.measured_width == 0
    assert rep.p_tail < 1e-20


def test_width_small_coupling():
    hs = build_model(chaotic_spec(7, epsilon=0.03, system_field=2.0, interaction_terms=(("x", "n"),)))
    total = diagonalize(hs.h_total)
    basis = d.UnperturbedBasis(hs)
    for eta in range(100, 160, 10):
        rep = d.perturbative_width(hs, total, eta, 1e-3, basis)
        assert abs(rep.population_sum - 1) < 1e-10
        assert rep.p_tail <= 1e-3
        assert rep.measured_width <= d.DEFAULT_SLACK * rep.bound
        # first order describes the same tail
        assert rep.p_first_order == pytest.approx(rep.p_tail, rel=0.5)


def test_width_validates_eps_p(chaotic8):
    hs, *_ = chaotic8
    with pytest.raises(ValidationError):
        d.perturbative_width(hs, None, 0, 1.5)


# -- ETH scans ------------------------------------------------------------------------------


def test_eth_identity_has_no_spread(chaotic8):
    hs, env, _ = chaotic8
    reps = d.eth_scan(env, np.eye(2), 0.5, 0.25)
    assert all(r.window_stddev < 1e-12 for r in reps if r.count)


def test_eth_shift_invariance():
    hs, env, _ = env_data(chaotic_spec(6))
    shifted = EnvironmentData(Spectrum(env.spec.values + 3.7, env.spec.vectors), env.space)
    a = d.eth_scan(env, PAULI["z"], 1.0, 0.5)
    b = d.eth_scan(shifted, PAULI["z"], 1.0, 0.5)
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert x.count == y.count
        if x.count:
            assert x.window_stddev == pytest.approx(y.window_stddev, abs=1e-12)


def test_eth_spread_shrinks_with_size():
    spreads = []
    for nb in (6, 8, 10):
        hs, env, _ = env_data(chaotic_spec(nb))
        span = env.spec.span
        mid = env.spec.values[0] + 0.45 * span
        reps = d.eth_scan(EnvironmentData(env.spec, env.space), PAULI["z"], 0.1 * span, 0.1 * span)
        central = [r for r in reps if r.e_lo <= mid <= r.e_hi]
        spreads.append(central[0].window_stddev)
    assert spreads[0] > spreads[1] > spreads[2]


def test_eth_integrable_fails_more_windows():
    counts = {}
    for name, spec in (("chaotic", chaotic_spec(10)), ("integrable", integrable_spec(10))):
        hs, env, _ = env_data(spec)
        span = env.spec.span
        reps = d.eth_scan(env, PAULI["z"], 0.05 * span, 0.025 * span, threshold=0.1)
        counts[name] = sum(not r.eth_flag for r in reps)
    assert counts["integrable"] > counts["chaotic"]


def test_eth_region_and_validation(chaotic8):
    hs, env, _ = chaotic8
    reps = d.eth_scan(env, PAULI["z"], 2.0, 0.5, threshold=1.0, min_states=1)
    region = d.eth_region(reps)
    assert region is not None and region[1] > region[0]
    with pytest.raises(ValidationError):
        d.eth_scan(env, np.array([[0, 1], [0, 0]]), 1.0, 0.5)
    with pytest.raises(ValidationError):
        d.eth_scan(env, PAULI["z"], 0.0, 0.5)
    text = d.rows_to_csv(r.row() for r in reps)
    assert text.splitlines()[0].startswith("e_lo,e_hi")


def test_eth_region_helper():
    mk = lambda flag: d.EthReport(0, 1, "O", np.zeros(3), 0, 0, flag)
    flags = [False, True, True, False, True, True, True, False]
    assert d.eth_region([mk(f) for f in flags]) == (4, 7)
    assert d.eth_region([mk(False)]) is None


# -- typical-state structure ------------------------------------------------------------------


def test_typical_check_single_member(small_chaotic):
    hs, total, env, sys_spec = small_chaotic
    w = make_window(total, total.values[50] - 1e-12, 2e-12, min_count=1)
    rep = typical_vector_reduced(hs, total, w, 0, sys_spec, env.spec)
    check = d.typical_offdiag_check(rep)
    assert check["skipped"] and "single" in check["notice"]


def test_typical_check_free_passes(small_free):
    hs, total, env, sys_spec = small_free
    w = centered_window(total, 0.5, 0.3, min_count=1)
    rep = typical_vector_reduced(hs, total, w, 0, sys_spec, env.spec)
    check = d.typical_offdiag_check(rep)
    assert not check["skipped"] and check["passed"]


def test_typical_offdiag_scaling():
    # coherence fluctuations around the window average shrink like N^-1/2 once
    # the window is wider than the system gap; compare sizes at fixed relative width
    spreads, sizes = [], []
    for nb in (6, 8):
        hs = build_model(chaotic_spec(nb, epsilon=0.4, system_field=2.0, interaction_terms=(("x", "n"),)))
        total, env_spec, sys_spec = diagonalize(hs.h_total), diagonalize(hs.h_env), diagonalize(hs.h_s)
        w = centered_window(total, 0.5, 0.5, min_count=1)
        vals = np.array([typical_vector_reduced(hs, total, w, s, sys_spec, env_spec).rho_eigen[0, 1] for s in range(40)])
        spreads.append(np.mean(np.abs(vals - vals.mean())))
        sizes.append(w.n_members)
    predicted = np.sqrt(sizes[1] / sizes[0])
    assert 0.5 * predicted <= spreads[0] / spreads[1] <= 2 * predicted
