"""Reduced density matrices: microcanonical, typical-vector and canonical states."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import EmptyWindowError, ShapeError, UnfittableError, ValidationError
from .hilbert import reduce_vectors
from .spectra import DirectSumBasis, diagonalize, env_windows, product_populations

DM_TOL = 1e-10


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite operator.

    ``basis_label`` names the basis indexing rows and columns; everything in
    this package returns states in the "computational" basis of S.
    """

    matrix: np.ndarray
    basis_label: str = "computational"

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"density matrix must be square, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def check(self, tol: float = DM_TOL) -> None:
        m = self.matrix
        if np.abs(m - m.conj().T).max() > tol:
            raise ValidationError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > tol:
            raise ValidationError(f"density matrix trace is {np.trace(m).real:.12g}")
        if np.linalg.eigvalsh(m).min() < -tol:
            raise ValidationError("density matrix has a negative eigenvalue")

    def in_basis(self, vectors, label: str) -> "DensityMatrix":
        """Matrix elements <v_a|rho|v_b> for the columns of ``vectors``."""
        v = np.asarray(vectors)
        return DensityMatrix(v.conj().T @ self.matrix @ v, label)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def to_dict(self) -> dict:
        return {
            "dimension": self.dim,
            "basis": self.basis_label,
            "entries": [[[float(z.real), float(z.imag)] for z in row] for row in self.matrix],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DensityMatrix":
        m = np.array([[complex(re, im) for re, im in row] for row in data["entries"]])
        if m.shape != (data["dimension"], data["dimension"]):
            raise ShapeError("entries do not match the stated dimension")
        return cls(m, data["basis"])

    @classmethod
    def from_json(cls, text: str) -> "DensityMatrix":
        return cls.from_dict(json.loads(text))


def _hermitize(m):
    return 0.5 * (m + m.conj().T)


def microcanonical_reduced(hs, spectrum, window) -> DensityMatrix:
    """rho^S = tr_E sum_{eta in window} |E_eta><E_eta| / N_dE."""
    if window.n_members == 0:
        raise EmptyWindowError("microcanonical window is empty")
    vecs = spectrum.vectors[:, window.member_indices]
    rho = reduce_vectors(hs.space, vecs) / window.n_members
    return DensityMatrix(_hermitize(rho))


def gaussian_amplitudes(rng, n):
    """Complex amplitudes with independent N(0, 1/2) real and imaginary parts."""
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(0.5)


@dataclass(frozen=True)
class TypicalStateReport:
    """A typical vector in H_dE and its decomposition over the product basis.

    ``expansion[k, alpha, i]`` is f^eta_{alpha i} for the k-th window member,
    ``k_amps[alpha, i]`` is K_{alpha i} = sum_eta C_eta f^eta_{alpha i} and
    ``omega_norms[alpha]`` is <Omega_alpha|Omega_alpha>. ``env_counts`` holds
    N^(E)_alpha for the bare system levels and ``rho_eigen`` is the reduced
    state in the bare eigenbasis of H^S.
    """

    coefficients: np.ndarray
    expansion: np.ndarray
    k_amps: np.ndarray
    omega_norms: np.ndarray
    n_major: float
    rho: DensityMatrix
    rho_eigen: np.ndarray
    env_counts: np.ndarray
    n_window: int


def participation_ratio(populations, axis=-1):
    p = np.asarray(populations)
    return p.sum(axis=axis) ** 2 / (p**2).sum(axis=axis)


def typical_vector_reduced(hs, spectrum, window, seed, sys_spec=None, env_spec=None) -> TypicalStateReport:
    if window.n_members == 0:
        raise EmptyWindowError("typical-state window is empty")
    rng = np.random.default_rng(seed)
    c = gaussian_amplitudes(rng, window.n_members)
    c /= np.linalg.norm(c)
    vecs = spectrum.vectors[:, window.member_indices]
    psi = vecs @ c
    rho = DensityMatrix(_hermitize(reduce_vectors(hs.space, psi)))

    sys_spec = sys_spec or diagonalize(hs.h_s)
    env_spec = env_spec or diagonalize(hs.h_env)
    sp = hs.space
    f = np.stack([product_populations(sp, vecs[:, k], sys_spec, env_spec) for k in range(window.n_members)])
    k_amps = np.einsum("k,kai->ai", c, f)
    omega = np.sum(np.abs(k_amps) ** 2, axis=1)
    n_major = float(np.mean(participation_ratio(np.abs(f.reshape(window.n_members, -1)) ** 2)))
    windows = env_windows(env_spec, sys_spec.values, window.e_lo, window.width)
    counts = np.array([w.n_members for w in windows])
    rho_eigen = sys_spec.vectors.conj().T @ rho.matrix @ sys_spec.vectors
    return TypicalStateReport(c, f, k_amps, omega, n_major, rho, rho_eigen, counts, window.n_members)


def typical_vector_direct_sum(hs, hd_basis: DirectSumBasis, seed) -> DensityMatrix:
    """Reduced state of a Gaussian-random unit vector in H_d.

    For psi = sum_alpha |E^S_alpha> (x) |Omega_alpha>, the reduced state in the
    system eigenbasis is <Omega_beta|Omega_alpha>; only environment indices
    shared by both windows contribute to off-diagonal elements.
    """
    if hd_basis.dim == 0:
        raise EmptyWindowError("H_d is empty")
    rng = np.random.default_rng(seed)
    c = gaussian_amplitudes(rng, hd_basis.dim)
    c /= np.linalg.norm(c)
    n_env = hd_basis.env_spec.dim
    n_lev = len(hd_basis.windows)
    omega = np.zeros((n_lev, n_env), dtype=complex)
    offset = 0
    for alpha, w in enumerate(hd_basis.windows):
        omega[alpha, w.member_indices] = c[offset : offset + w.n_members]
        offset += w.n_members
    rho_eigen = omega @ omega.conj().T
    u = hd_basis.sys_spec.vectors
    return DensityMatrix(_hermitize(u @ rho_eigen @ u.conj().T))


def canonical_state(h_eff, beta: float) -> DensityMatrix:
    """exp(-beta h) / tr exp(-beta h) through the eigendecomposition of h."""
    h_eff = np.asarray(h_eff)
    values, vectors = np.linalg.eigh(h_eff)
    shift = values.min() if beta >= 0 else values.max()
    weights = np.exp(-beta * (values - shift))
    weights /= weights.sum()
    return DensityMatrix(_hermitize((vectors * weights) @ vectors.conj().T))


def _mean_energy(values, beta):
    shift = values.min() if beta >= 0 else values.max()
    w = np.exp(-beta * (values - shift))
    return float(np.dot(w, values) / w.sum())


def fit_beta(rho, h_eff, max_expansions: int = 200) -> float:
    """Inverse temperature whose canonical state has the same mean energy as ``rho``.

    The canonical mean energy decreases monotonically in beta, so the root is
    unique; it is found by bisection on a bracket doubled until it changes sign.
    """
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    h_eff = np.asarray(h_eff)
    values = np.linalg.eigvalsh(h_eff)
    e_min, e_max = values[0], values[-1]
    span = e_max - e_min
    target = float(np.real(np.trace(m @ h_eff)))
    if not e_min < target < e_max:
        raise UnfittableError(f"target energy {target:.6g} outside ({e_min:.6g}, {e_max:.6g})")
    tol = 1e-10 * span

    def resid(beta):
        return _mean_energy(values, beta) - target

    r0 = resid(0.0)
    if abs(r0) <= tol:
        return 0.0
    step = 1.0 / span
    lo, hi = (0.0, step) if r0 > 0 else (-step, 0.0)
    for _ in range(max_expansions):
        if resid(lo) >= 0 >= resid(hi):
            break
        if r0 > 0:
            lo, hi = hi, 2 * hi
        else:
            lo, hi = 2 * lo, lo
    else:
        raise UnfittableError("could not bracket the inverse temperature")
    best = 0.5 * (lo + hi)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        r = resid(mid)
        if abs(r) < abs(resid(best)):
            best = mid
        if r > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(mid)):
            break
    if abs(resid(best)) > tol:
        raise UnfittableError(f"energy residual {resid(best):.3e} above tolerance")
    return float(best)


def trace_distance(a, b) -> float:
    """(1/2) sum |eigenvalues(a - b)|."""
    ma = a.matrix if isinstance(a, DensityMatrix) else np.asarray(a)
    mb = b.matrix if isinstance(b, DensityMatrix) else np.asarray(b)
    if ma.shape != mb.shape:
        raise ShapeError(f"shape mismatch {ma.shape} vs {mb.shape}")
    diff = ma - mb
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(_hermitize(diff)))))


def fit_beta_min_distance(rho, h_eff, beta_guess: float | None = None) -> tuple[float, float]:
    """Inverse temperature minimizing the trace distance to ``rho``; returns (beta, distance).

    Reported for comparison only; the energy-matched :func:`fit_beta` is the
    contract value.
    """
    span = float(np.ptp(np.linalg.eigvalsh(np.asarray(h_eff))))
    if beta_guess is None:
        try:
            beta_guess = fit_beta(rho, h_eff)
        except UnfittableError:
            beta_guess = 0.0
    reach = 20.0 / span + 2 * abs(beta_guess)
    res = minimize_scalar(
        lambda b: trace_distance(rho, canonical_state(h_eff, b)),
        bounds=(beta_guess - reach, beta_guess + reach),
        method="bounded",
        options={"xatol": 1e-10 / span},
    )
    return float(res.x), float(res.fun)
