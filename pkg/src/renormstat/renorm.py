"""Renormalized self-Hamiltonian: interaction blocks, environmental averages and
the self-consistent frame H~^S = H^S + H^I_S.

Environment eigenstates enter only through the coefficients
C^i_{mq} = <m_A q_B|E^E_i>, from which every matrix element of an A-local
operator follows: <E^E_i|O (x) 1_B|E^E_j> = sum_{mm'} O_{mm'} G^{ij}_{mm'} with
G^{ij}_{mm'} = sum_q conj(C^i_{mq}) C^j_{m'q}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConvergenceError, EmptyWindowError, ShapeError, UnsupportedFormError
from .hilbert import CompositeSpace
from .spectra import DEFAULT_MIN_COUNT, Spectrum, diagonalize, env_windows

FACTORIZATION_TOL = 1e-12


class EnvironmentData:
    """Environment spectrum viewed through the A (x) B factorization."""

    def __init__(self, spec: Spectrum, space: CompositeSpace):
        if spec.dim != space.n_env:
            raise ShapeError(f"environment spectrum has dimension {spec.dim}, expected {space.n_env}")
        self.spec = spec
        self.space = space

    @property
    def values(self):
        return self.spec.values

    @cached_property
    def coefficients(self) -> np.ndarray:
        """C[m, q, i] = <m_A q_B|E^E_i>."""
        return self.spec.vectors.reshape(self.space.n_a, self.space.n_b, self.spec.dim)

    @cached_property
    def g_diag(self) -> np.ndarray:
        """G^{ii}_{mm'} for every i, shape (n_env, n_a, n_a)."""
        c = self.coefficients
        return np.einsum("mqi,nqi->imn", c.conj(), c)

    def g_pairs(self, i, j) -> np.ndarray:
        """G^{ij}_{mm'} for index arrays ``i`` and ``j``, shape (len(i), n_a, n_a)."""
        c = self.coefficients
        i, j = np.atleast_1d(i), np.atleast_1d(j)
        return np.einsum("mqp,nqp->pmn", c[:, :, i].conj(), c[:, :, j])

    def expect_a(self, op_a, indices=None) -> np.ndarray:
        """<E^E_i|op (x) 1_B|E^E_i> for the given indices (all by default)."""
        g = self.g_diag if indices is None else self.g_diag[np.asarray(indices)]
        return np.einsum("mn,imn->i", np.asarray(op_a), g)

    def elements_a(self, op_a, i, j) -> np.ndarray:
        return np.einsum("mn,pmn->p", np.asarray(op_a), self.g_pairs(i, j))


def _as_env(env, space=None) -> EnvironmentData:
    if isinstance(env, EnvironmentData):
        return env
    if space is None:
        raise ShapeError("an EnvironmentData (or the CompositeSpace) is needed for A-local operators")
    return EnvironmentData(env, space)


# ---------------------------------------------------------------------------
# interaction blocks


@dataclass(frozen=True)
class InteractionBlocks:
    """H^I_{ab} = <a|H^I|b> for all pairs of system basis states, as operators on A.

    ``blocks[a, b]`` is an n_a x n_a array. ``h_dia[a, b] = tr_A(H^I_{ab}) / n_a``,
    ``h_ab[a, b]`` is the mean absolute A-basis element, ``h_max`` and ``h_d`` are
    the maxima of ``h_ab`` and ``|h_dia|`` and ``q_alpha[a] = sum_{b != a} |E_a - E_b|^-2``.
    """

    blocks: np.ndarray
    basis: Spectrum
    space: CompositeSpace

    @cached_property
    def h_dia(self) -> np.ndarray:
        return np.trace(self.blocks, axis1=2, axis2=3) / self.space.n_a

    @cached_property
    def h_ab(self) -> np.ndarray:
        return np.abs(self.blocks).mean(axis=(2, 3))

    @property
    def h_max(self) -> float:
        return float(self.h_ab.max())

    @property
    def h_d(self) -> float:
        return float(np.abs(self.h_dia).max())

    @cached_property
    def q_alpha(self) -> np.ndarray:
        e = np.asarray(self.basis.values)
        diff = e[:, None] - e[None, :]
        np.fill_diagonal(diff, np.inf)
        return np.sum(np.abs(diff) ** -2.0, axis=1)

    def diagonal_elements(self, env: EnvironmentData, indices=None) -> np.ndarray:
        """(H^I_{ab})_{ii}, shape (n_s, n_s, len(indices))."""
        g = env.g_diag if indices is None else env.g_diag[np.asarray(indices)]
        return np.einsum("abmn,imn->abi", self.blocks, g)

    def elements(self, env: EnvironmentData, i, j) -> np.ndarray:
        """(H^I_{ab})_{ij} for paired index arrays, shape (n_s, n_s, len(i))."""
        return np.einsum("abmn,pmn->abp", self.blocks, env.g_pairs(i, j))


def interaction_blocks(hs, sys_basis: Spectrum) -> InteractionBlocks:
    sp = hs.space
    h4 = np.asarray(hs.h_int).reshape(sp.n_s, sp.n_a, sp.n_s, sp.n_a)
    v = np.asarray(sys_basis.vectors)
    blocks = np.einsum("sx,smtn,ty->xymn", v.conj(), h4, v)
    return InteractionBlocks(blocks, sys_basis, sp)


def env_average(block, env_window, env, space: CompositeSpace | None = None) -> complex:
    """Mean of <E^E_i|block|E^E_i> over the window.

    ``block`` may act on A alone (embedded with 1_B) or on the whole environment.
    """
    if env_window.n_members == 0:
        raise EmptyWindowError("cannot average over an empty environment window")
    block = np.asarray(block)
    idx = env_window.member_indices
    spec = env.spec if isinstance(env, EnvironmentData) else env
    if block.shape == (spec.dim, spec.dim):
        vw = spec.vectors[:, idx]
        vals = np.einsum("ek,ef,fk->k", vw.conj(), block, vw)
    else:
        vals = _as_env(env, space).expect_a(block, idx)
    return complex(np.mean(vals))


def gamma_rule(alpha_energy: float, beta_energy: float) -> str:
    """Which level's environment window the (alpha, beta) average runs over.

    The lower of the two levels: "beta" when E_alpha > E_beta, otherwise
    "alpha" (including the diagonal).
    """
    return "beta" if alpha_energy > beta_energy else "alpha"


def gamma_table(energies) -> np.ndarray:
    """gamma[a, b] = index of the window used for the (a, b) element."""
    n = len(energies)
    out = np.empty((n, n), dtype=int)
    for a in range(n):
        for b in range(n):
            out[a, b] = b if gamma_rule(energies[a], energies[b]) == "beta" else a
    return out


@dataclass(frozen=True)
class HisAssembly:
    """H^I_S assembled in a given system basis.

    ``raw`` is the table <H^I_{ab}>_gamma before symmetrization, ``matrix`` its
    Hermitian part in the same basis and ``operator`` the latter in the
    computational basis. ``asymmetry`` is max |raw - raw^dagger|.
    """

    operator: np.ndarray
    matrix: np.ndarray
    raw: np.ndarray
    asymmetry: float
    basis: Spectrum
    windows: tuple
    gamma: np.ndarray
    window_g: np.ndarray


def window_mean_g(env: EnvironmentData, windows) -> np.ndarray:
    """Window-averaged G^{ii}_{mm'} per window, shape (n_windows, n_a, n_a)."""
    out = np.empty((len(windows), env.space.n_a, env.space.n_a), dtype=env.g_diag.dtype)
    for k, w in enumerate(windows):
        if w.empty:
            raise EmptyWindowError(
                f"environment window for system level {k} (E = {w.level_energy:.6g}) is empty", level=k
            )
        out[k] = env.g_diag[w.member_indices].mean(axis=0)
    return out


def build_his(hs, sys_basis: Spectrum, env, e_lo: float, width: float, min_count: int = DEFAULT_MIN_COUNT) -> HisAssembly:
    env = _as_env(env, hs.space)
    blocks = interaction_blocks(hs, sys_basis)
    windows = env_windows(env.spec, sys_basis.values, e_lo, width, min_count)
    gbar = window_mean_g(env, windows)
    gamma = gamma_table(np.asarray(sys_basis.values))
    n = sys_basis.dim
    raw = np.empty((n, n), dtype=complex)
    for a in range(n):
        for b in range(n):
            raw[a, b] = np.sum(blocks.blocks[a, b] * gbar[gamma[a, b]])
    herm = 0.5 * (raw + raw.conj().T)
    asym = float(np.abs(raw - raw.conj().T).max())
    v = np.asarray(sys_basis.vectors)
    op = v @ herm @ v.conj().T
    op = 0.5 * (op + op.conj().T)
    if not np.any(op.imag) or np.abs(op.imag).max() == 0:
        op = op.real
    return HisAssembly(op, herm, raw, asym, sys_basis, tuple(windows), gamma, gbar)


# ---------------------------------------------------------------------------
# self-consistent frame


def basis_change_residual(old: Spectrum, new: Spectrum) -> float:
    """max | |<old_a|new_b>| - P_ab | with P the best-matching permutation."""
    overlap = np.abs(np.asarray(old.vectors).conj().T @ np.asarray(new.vectors))
    perm = np.zeros_like(overlap)
    perm[np.argmax(overlap, axis=0), np.arange(overlap.shape[1])] = 1.0
    return float(np.abs(overlap - perm).max())


@dataclass(frozen=True)
class RenormalizedFrame:
    """Converged H~^S = H^S + H^I_S and the data it was built from.

    ``h_int_tilde`` is H^I - H^I_S (x) 1_A on S (x) A. ``assembly`` holds the
    basis, windows and average table of the last H^I_S evaluation.
    """

    h_s_tilde: np.ndarray
    h_is: np.ndarray
    h_int_tilde: np.ndarray
    sys_spectrum_tilde: Spectrum
    env_averages: np.ndarray
    iterations: int
    residual: float
    residual_trace: tuple
    asymmetry: float
    assembly: HisAssembly
    e_lo: float
    width: float
    mixing: float = 1.0

    @property
    def windows(self):
        return self.assembly.windows

    def to_dict(self) -> dict:
        def cm(m):
            m = np.asarray(m)
            return [[[float(z.real), float(z.imag)] for z in row] for row in m.astype(complex)]

        return {
            "h_s_tilde": cm(self.h_s_tilde),
            "h_is": cm(self.h_is),
            "env_averages": cm(self.env_averages),
            "levels_tilde": [float(x) for x in self.sys_spectrum_tilde.values],
            "window_counts": [w.n_members for w in self.windows],
            "iterations": self.iterations,
            "residual_trace": [float(r) for r in self.residual_trace],
            "asymmetry": self.asymmetry,
            "mixing": self.mixing,
            "e_lo": self.e_lo,
            "width": self.width,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def renormalize(
    hs,
    env,
    e_lo: float,
    width: float,
    tol: float = 1e-10,
    max_iter: int = 200,
    mixing: float = 1.0,
    adaptive: bool = True,
    initial_basis: Spectrum | None = None,
    min_count: int = DEFAULT_MIN_COUNT,
) -> RenormalizedFrame:
    """Fixed-point iteration for the self-consistent H~^S.

    Starting from the eigenbasis of H^S (or ``initial_basis``): assemble H^I_S
    in the current basis, set H~^S = H^S + H^I_S, rediagonalize, and stop once
    the basis-change residual drops below ``tol``. With ``adaptive`` the mixing
    factor is halved whenever the residual fails to shrink twice in a row.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    env = _as_env(env, hs.space)
    h_s = np.asarray(hs.h_s)
    basis = initial_basis if initial_basis is not None else diagonalize(h_s)
    his = None
    trace = []
    stalls = 0
    for it in range(1, max_iter + 1):
        asm = build_his(hs, basis, env, e_lo, width, min_count)
        his = asm.operator if his is None else mixing * asm.operator + (1 - mixing) * his
        new_basis = diagonalize(h_s + his)
        residual = basis_change_residual(basis, new_basis)
        trace.append(residual)
        basis = new_basis
        if residual < tol:
            break
        if adaptive and len(trace) >= 2 and trace[-1] >= trace[-2]:
            stalls += 1
            if stalls >= 2:
                mixing = max(mixing / 2, 1e-3)
                stalls = 0
        else:
            stalls = 0
    else:
        raise ConvergenceError(f"no convergence after {max_iter} iterations (residual {trace[-1]:.3e})", trace)
    # report the operator assembled in the converged basis, unmixed
    his = asm.operator
    h_tilde = h_s + his
    basis = diagonalize(h_tilde)
    sp = hs.space
    h_int_tilde = np.asarray(hs.h_int) - np.kron(his, np.eye(sp.n_a))
    return RenormalizedFrame(
        h_s_tilde=h_tilde,
        h_is=his,
        h_int_tilde=h_int_tilde,
        sys_spectrum_tilde=basis,
        env_averages=asm.raw,
        iterations=it,
        residual=trace[-1],
        residual_trace=tuple(trace),
        asymmetry=asm.asymmetry,
        assembly=asm,
        e_lo=float(e_lo),
        width=float(width),
        mixing=mixing,
    )


def first_pass_his(hs, env, e_lo, width, min_count=DEFAULT_MIN_COUNT) -> np.ndarray:
    """H^I_S assembled once in the bare eigenbasis of H^S."""
    return build_his(hs, diagonalize(np.asarray(hs.h_s)), env, e_lo, width, min_count).operator


def perturbed_basis(h_s, scale: float, seed) -> Spectrum:
    """Eigenbasis of H^S plus a random Hermitian perturbation (multi-start checks)."""
    rng = np.random.default_rng(seed)
    n = np.asarray(h_s).shape[0]
    x = rng.standard_normal((n, n))
    return diagonalize(np.asarray(h_s) + scale * (x + x.T) / 2)


# ---------------------------------------------------------------------------
# mean-field split


@dataclass(frozen=True)
class MeanFieldSplit:
    """H~^S = H^S + eps sum_l mean(J^A_l) J^S_l + Delta H^S.

    ``per_level_expectations[l, g]`` is <J^A_l>_g over the window of level g.
    """

    mean_field: np.ndarray
    mf_operator: np.ndarray
    delta_hs: np.ndarray
    per_level_expectations: np.ndarray


def factorized_terms(hs) -> tuple:
    """The (J^S_l, J^A_l) pairs of ``hs``; raises if h_int is not their weighted sum."""
    if not hs.terms:
        raise UnsupportedFormError("interaction was not built in factorized form")
    rebuilt = sum(hs.epsilon * np.kron(js, ja) for js, ja in hs.terms)
    if np.abs(rebuilt - hs.h_int).max() > FACTORIZATION_TOL * max(1.0, np.abs(hs.h_int).max()):
        raise UnsupportedFormError("h_int differs from epsilon * sum_l J^S_l (x) J^A_l")
    return hs.terms


def mean_field_split(frame: RenormalizedFrame, hs, env) -> MeanFieldSplit:
    env = _as_env(env, hs.space)
    terms = factorized_terms(hs)
    asm = frame.assembly
    gbar = asm.window_g
    per_level = np.array([[np.sum(ja * gbar[g]) for g in range(len(asm.windows))] for _, ja in terms])
    mean = per_level.mean(axis=1)
    eps = hs.epsilon
    mf = sum(eps * mean[l].real * np.asarray(js) for l, (js, _) in enumerate(terms))
    v = np.asarray(asm.basis.vectors)
    n = asm.basis.dim
    raw = np.zeros((n, n), dtype=complex)
    for l, (js, _) in enumerate(terms):
        js_eig = v.conj().T @ js @ v
        dj = per_level[l][asm.gamma] - mean[l].real
        raw += eps * dj * js_eig
    herm = 0.5 * (raw + raw.conj().T)
    delta = v @ herm @ v.conj().T
    delta = 0.5 * (delta + delta.conj().T)
    if not np.any(delta.imag):
        delta = delta.real
    return MeanFieldSplit(mean, np.asarray(mf), delta, per_level)


# ---------------------------------------------------------------------------
# renormalized diagonal elements


@dataclass(frozen=True)
class DiagonalTable:
    """(H~^I_{ab})_{ii} next to bare (H^I_{ab})_{ii} on the same (a, b, i) set.

    ``group`` is "gamma" when i lies in the averaging window of the pair and
    "other" when it lies only in the other level's window.
    """

    alpha: np.ndarray
    beta: np.ndarray
    index: np.ndarray
    group: np.ndarray
    renormalized: np.ndarray
    bare: np.ndarray

    @staticmethod
    def _rms(x):
        return float(np.sqrt(np.mean(np.abs(x) ** 2))) if x.size else 0.0

    def rms_renormalized(self, group=None) -> float:
        mask = slice(None) if group is None else self.group == group
        return self._rms(self.renormalized[mask])

    def rms_bare(self, group=None) -> float:
        mask = slice(None) if group is None else self.group == group
        return self._rms(self.bare[mask])


def renormalized_diagonal_elements(frame: RenormalizedFrame, hs, env) -> DiagonalTable:
    env = _as_env(env, hs.space)
    asm = frame.assembly
    blocks_t = interaction_blocks(hs, asm.basis)
    blocks_0 = interaction_blocks(hs, diagonalize(np.asarray(hs.h_s)))
    n = asm.basis.dim
    cols = {k: [] for k in ("alpha", "beta", "index", "group", "renormalized", "bare")}
    for a in range(n):
        for b in range(n):
            g = asm.gamma[a, b]
            other = b if g == a else a
            w_g = asm.windows[g].member_indices
            w_o = np.setdiff1d(asm.windows[other].member_indices, w_g)
            idx = np.concatenate([w_g, w_o])
            groups = np.array(["gamma"] * w_g.size + ["other"] * w_o.size)
            ren = np.einsum("mn,imn->i", blocks_t.blocks[a, b], env.g_diag[idx]) - asm.matrix[a, b]
            bare = np.einsum("mn,imn->i", blocks_0.blocks[a, b], env.g_diag[idx])
            cols["alpha"].append(np.full(idx.size, a))
            cols["beta"].append(np.full(idx.size, b))
            cols["index"].append(idx)
            cols["group"].append(groups)
            cols["renormalized"].append(ren)
            cols["bare"].append(bare)
    return DiagonalTable(**{k: np.concatenate(v) for k, v in cols.items()})
