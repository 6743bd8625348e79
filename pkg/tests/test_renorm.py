import numpy as np
import pytest

from renormstat.errors import ConvergenceError, EmptyWindowError, UnsupportedFormError
from renormstat.hilbert import embed
from renormstat.models import PAULI, build_model, chaotic_spec, custom_model
from renormstat.renorm import (
    EnvironmentData,
    basis_change_residual,
    build_his,
    env_average,
    first_pass_his,
    gamma_rule,
    gamma_table,
    interaction_blocks,
    mean_field_split,
    perturbed_basis,
    renormalize,
    renormalized_diagonal_elements,
)
from renormstat.spectra import EnvWindow, centered_window, diagonalize, env_windows


def setup(nb=5, eps=0.3, terms=(("x", "n"),), **kw):
    hs = build_model(chaotic_spec(nb, epsilon=eps, system_field=2.0, interaction_terms=terms, **kw))
    env = EnvironmentData(diagonalize(hs.h_env), hs.space)
    total = diagonalize(hs.h_total)
    return hs, env, total, diagonalize(hs.h_s)


def window_of(total, frac=0.3, width=0.1):
    return centered_window(total, frac, width, min_count=1)


# -- blocks -------------------------------------------------------------------


def test_blocks_of_factorized_interaction():
    hs, env, total, sys_spec = setup()
    blocks = interaction_blocks(hs, sys_spec)
    js = sys_spec.vectors.conj().T @ PAULI["x"] @ sys_spec.vectors
    for a in range(2):
        for b in range(2):
            np.testing.assert_allclose(blocks.blocks[a, b], hs.epsilon * js[a, b] * PAULI["n"], atol=1e-15)


def test_blocks_zero_coupling():
    hs, env, total, sys_spec = setup(eps=0.0)
    blocks = interaction_blocks(hs, sys_spec)
    assert not np.any(blocks.blocks)
    assert blocks.h_max == 0 and blocks.h_d == 0


def test_blocks_hand_computed():
    # 1 + 1 + 1 spins, H^I = eps sigma^x_S sigma^z_A; H^S eigenbasis is (|dn>, |up>)
    hs, env, total, sys_spec = setup(nb=1, eps=0.5, terms=(("x", "z"),))
    blocks = interaction_blocks(hs, sys_spec).blocks
    z = np.diag([1.0, -1.0])
    np.testing.assert_allclose(blocks[0, 0], np.zeros((2, 2)), atol=1e-15)
    np.testing.assert_allclose(blocks[1, 1], np.zeros((2, 2)), atol=1e-15)
    np.testing.assert_allclose(np.abs(blocks[0, 1]), 0.5 * np.abs(z), atol=1e-15)
    np.testing.assert_allclose(blocks[0, 1], blocks[1, 0].conj().T, atol=1e-15)


def test_block_derived_scalars():
    hs, env, total, sys_spec = setup(eps=0.4)
    b = interaction_blocks(hs, sys_spec)
    # x:n blocks: off-diagonal eps * n_A, whose trace / N_A is eps / 2
    assert b.h_d == pytest.approx(0.2)
    assert b.h_max == pytest.approx(0.1)
    assert b.q_alpha == pytest.approx([0.25, 0.25])


def test_element_identity(rng):
    # <E^S_a E^E_i|H^I|E^S_b E^E_j> = (H^I_ab)_ij
    hs, env, total, sys_spec = setup(eps=0.7, terms=(("x", "n"), ("z", "x")))
    blocks = interaction_blocks(hs, sys_spec)
    big = embed(hs.space, hs.h_int, "SA")
    for _ in range(20):
        a, b = rng.integers(2, size=2)
        i, j = rng.integers(env.spec.dim, size=2)
        left = np.kron(sys_spec.vectors[:, a], env.spec.vectors[:, i])
        right = np.kron(sys_spec.vectors[:, b], env.spec.vectors[:, j])
        direct = left.conj() @ big @ right
        assert abs(direct - blocks.elements(env, [i], [j])[a, b, 0]) < 1e-12


# -- environmental averages -------------------------------------------------------


def test_env_average_identity_and_energy():
    hs, env, total, sys_spec = setup()
    w = env_windows(env.spec, [0.0], -1.0, 2.0)[0]
    assert env_average(np.eye(hs.space.n_env), w, env.spec) == pytest.approx(1.0)
    assert env_average(np.eye(2), w, env) == pytest.approx(1.0)
    assert env_average(hs.h_env, w, env.spec).real == pytest.approx(env.values[w.member_indices].mean())


def test_env_average_explicit_sum(rng):
    hs, env, total, sys_spec = setup()
    idx = np.arange(10, 15)
    w = EnvWindow(0.0, env.values[10], env.values[14] - env.values[10], idx)
    x = rng.standard_normal((64, 64)) + 1j * rng.standard_normal((64, 64))
    block = x + x.conj().T
    v = env.spec.vectors
    explicit = sum(v[:, i].conj() @ block @ v[:, i] for i in idx) / 5
    assert abs(env_average(block, w, env.spec) - explicit) < 1e-14 * max(1, abs(explicit))


def test_env_average_empty():
    hs, env, *_ = setup()
    w = EnvWindow(0.0, 1e6, 1.0, np.array([], dtype=np.int64))
    with pytest.raises(EmptyWindowError):
        env_average(np.eye(2), w, env)


def test_gamma_rule():
    assert gamma_rule(2.0, 1.0) == "beta"
    assert gamma_rule(1.0, 2.0) == "alpha"
    assert gamma_rule(1.5, 1.5) == "alpha"
    table = gamma_table([0.0, 1.0, 3.0])
    np.testing.assert_array_equal(table, [[0, 0, 0], [0, 1, 1], [0, 1, 2]])
    np.testing.assert_array_equal(table, table.T)


# -- H^I_S ----------------------------------------------------------------------


def test_his_zero_coupling():
    hs, env, total, sys_spec = setup(eps=0.0)
    w = window_of(total)
    assert not np.any(build_his(hs, sys_spec, env, w.e_lo, w.width, 1).operator)


def test_his_factorized_form():
    hs, env, total, sys_spec = setup(eps=0.3)
    w = window_of(total)
    asm = build_his(hs, sys_spec, env, w.e_lo, w.width, 1)
    js = sys_spec.vectors.conj().T @ PAULI["x"] @ sys_spec.vectors
    mean_ja = [env.expect_a(PAULI["n"], win.member_indices).mean() for win in asm.windows]
    for a in range(2):
        for b in range(2):
            g = asm.gamma[a, b]
            assert asm.raw[a, b] == pytest.approx(0.3 * js[a, b] * mean_ja[g], abs=1e-14)


def test_his_matches_hand_assembly():
    # 1 + 1 + 2 spins with two interaction terms, built from env_average values
    hs, env, total, sys_spec = setup(nb=2, eps=0.6, terms=(("x", "n"), ("z", "x")))
    e_lo, width = total.values[6] - 0.3, 1.2
    asm = build_his(hs, sys_spec, env, e_lo, width, 1)
    blocks = interaction_blocks(hs, sys_spec).blocks
    windows = env_windows(env.spec, sys_spec.values, e_lo, width)
    e = sys_spec.values
    m = np.empty((2, 2), dtype=complex)
    for a in range(2):
        for b in range(2):
            g = b if e[a] > e[b] else a
            m[a, b] = env_average(np.kron(blocks[a, b], np.eye(hs.space.n_b)), windows[g], env.spec)
    m = 0.5 * (m + m.conj().T)
    expected = sys_spec.vectors @ m @ sys_spec.vectors.conj().T
    np.testing.assert_allclose(asm.operator, expected, atol=1e-12)


def test_his_linear_in_coupling():
    eps = np.logspace(-2, -1, 6)
    norms = []
    for x in eps:
        hs, env, total, sys_spec = setup(eps=x)
        w = window_of(total)
        frame = renormalize(hs, env, w.e_lo, w.width, min_count=1)
        norms.append(np.abs(frame.h_is).max())
    r = np.corrcoef(eps, norms)[0, 1]
    assert r**2 >= 0.999


# -- fixed point ---------------------------------------------------------------------


def test_renormalize_zero_coupling():
    hs, env, total, sys_spec = setup(eps=0.0)
    w = window_of(total)
    frame = renormalize(hs, env, w.e_lo, w.width, min_count=1)
    assert frame.iterations == 1 and frame.residual == 0
    np.testing.assert_array_equal(frame.h_s_tilde, hs.h_s)


def test_renormalize_uniform_average():
    # J^A = 1_A: every window average equals 1, so H~^S = H^S + eps J^S
    hs, env, total, sys_spec = setup(eps=0.3, terms=(("x", "i"),))
    w = window_of(total)
    frame = renormalize(hs, env, w.e_lo, w.width, min_count=1)
    np.testing.assert_allclose(frame.h_s_tilde, hs.h_s + 0.3 * PAULI["x"], atol=1e-12)
    split = mean_field_split(frame, hs, env)
    assert np.abs(split.delta_hs).max() < 1e-12
    assert split.mean_field[0] == pytest.approx(1.0)


def test_exact_reconstruction():
    hs, env, total, sys_spec = setup(eps=0.5)
    w = window_of(total)
    frame = renormalize(hs, env, w.e_lo, w.width, min_count=1)
    sp = hs.space
    rebuilt = embed(sp, frame.h_s_tilde, "S") + embed(sp, frame.h_int_tilde, "SA") + embed(sp, hs.h_env, "AB")
    np.testing.assert_allclose(rebuilt, hs.h_total, atol=1e-12)
    assert frame.residual < 1e-10
    assert frame.residual_trace[-1] == frame.residual


def test_first_pass_agrees_to_second_order():
    diffs = []
    for eps in (1e-3, 1e-2):
        hs, env, total, sys_spec = setup(nb=4, eps=eps)
        w = window_of(total, 0.3, 0.2)
        frame = renormalize(hs, env, w.e_lo, w.width, min_count=1)
        diffs.append(np.abs(frame.h_is - first_pass_his(hs, env, w.e_lo, w.width, 1)).max())
    slope = np.log10(diffs[1] / diffs[0])
    assert 1.7 <= slope <= 2.3


def test_convergence_error_reports_trace():
    hs, env, total, sys_spec = setup(eps=0.5)
    w = window_of(total)
    with pytest.raises(ConvergenceError) as info:
        renormalize(hs, env, w.e_lo, w.width, tol=1e-300, max_iter=3, min_count=1)
    assert len(info.value.residuals) == 3


def test_multistart_reaches_same_frame():
    hs, env, total, sys_spec = setup(eps=0.5)
    w = window_of(total)
    ref = renormalize(hs, env, w.e_lo, w.width, min_count=1)
    for seed in range(3):
        start = perturbed_basis(hs.h_s, 0.05, seed)
        other = renormalize(hs, env, w.e_lo, w.width, min_count=1, initial_basis=start)
        np.testing.assert_allclose(other.h_s_tilde, ref.h_s_tilde, atol=1e-9)


def test_basis_change_residual_permutation_invariant(rng):
    spec = diagonalize(np.diag([1.0, 2.0, 3.0]))
    assert basis_change_residual(spec, spec) == 0


def test_hermitization_asymmetry_small():
    hs, env, total, sys_spec = setup(nb=6, eps=0.5)
    w = window_of(total)
    frame = renormalize(hs, env, w.e_lo, w.width, min_count=1)
    spread = max(np.std(env.expect_a(PAULI["n"], win.member_indices)) for win in frame.windows)
    assert frame.asymmetry <= 10 * hs.epsilon * spread


def test_frame_json(small_chaotic):
    hs, total, env, sys_spec = small_chaotic
    w = window_of(total)
    frame = renormalize(hs, env, w.e_lo, w.width, min_count=1)
    import json

    data = json.loads(frame.to_json())
    assert data["iterations"] == frame.iterations
    assert len(data["levels_tilde"]) == 2


# -- mean field -------------------------------------------------------------------------


def test_mean_field_zero_coupling():
    hs, env, total, sys_spec = setup(eps=0.0)
    w = window_of(total)
    frame = renormalize(hs, env, w.e_lo, w.width, min_count=1)
    split = mean_field_split(frame, hs, env)
    assert not np.any(split.mf_operator) and not np.any(split.delta_hs)


@pytest.mark.parametrize("terms", [(("x", "n"),), (("x", "n"), ("z", "x"), ("y", "y"))])
def test_mean_field_reconstruction(terms):
    hs, env, total, sys_spec = setup(eps=0.4, terms=terms)
    w = window_of(total)
    frame = renormalize(hs, env, w.e_lo, w.width, min_count=1)
    split = mean_field_split(frame, hs, env)
    np.testing.assert_allclose(hs.h_s + split.mf_operator + split.delta_hs, frame.h_s_tilde, atol=1e-12)


def test_mean_field_needs_factorized_form():
    hs, env, total, sys_spec = setup(eps=0.4)
    bare = custom_model(hs.space, hs.h_s, hs.h_int, hs.h_env, hs.epsilon)
    w = window_of(total)
    frame = renormalize(bare, env, w.e_lo, w.width, min_count=1)
    with pytest.raises(UnsupportedFormError):
        mean_field_split(frame, bare, env)


# -- renormalized diagonal elements --------------------------------------------------------


def test_renormalized_diagonal_zero_coupling():
    hs, env, total, sys_spec = setup(eps=0.0)
    w = window_of(total)
    frame = renormalize(hs, env, w.e_lo, w.width, min_count=1)
    tab = renormalized_diagonal_elements(frame, hs, env)
    assert not np.any(tab.renormalized) and not np.any(tab.bare)


def test_renormalized_diagonal_suppressed():
    hs, env, total, sys_spec = setup(nb=7, eps=0.6)
    w = window_of(total, 0.2, 0.04)
    frame = renormalize(hs, env, w.e_lo, w.width, min_count=1)
    tab = renormalized_diagonal_elements(frame, hs, env)
    assert tab.rms_renormalized() < tab.rms_bare()
    # in the averaging window the subtraction leaves only the ETH fluctuations
    assert tab.rms_renormalized("gamma") < 0.2 * tab.rms_bare("gamma")
    assert set(np.unique(tab.group)) <= {"gamma", "other"}
