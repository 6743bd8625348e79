"""Dense Hermitian eigendecomposition, energy windows and the product subspace H_d."""

from __future__ import annotations

import fcntl
import hashlib
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .errors import EmptyWindowError, NumericError, ShapeError, ValidationError
from .hilbert import CompositeSpace

HERMITIAN_TOL = 1e-10
DEFAULT_MIN_COUNT = 50
DEFAULT_WIDTH_FRACTION = 0.02


def _readonly(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


def hermiticity_defect(h, rows_per_chunk=1024) -> float:
    """max |h - h^dagger|, evaluated in row chunks so large inputs are not copied."""
    h = np.asarray(h)
    n = h.shape[0]
    worst = 0.0
    for start in range(0, n, rows_per_chunk):
        stop = min(n, start + rows_per_chunk)
        block = h[start:stop, :] - h[:, start:stop].conj().T
        if block.size:
            worst = max(worst, float(np.abs(block).max()))
    return worst


def _check_hermitian(h):
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ShapeError(f"operator must be square, got shape {h.shape}")
    scale = max(1.0, float(np.abs(h).max())) if h.size else 1.0
    defect = hermiticity_defect(h)
    if defect > HERMITIAN_TOL * scale:
        raise ValidationError(f"operator is not Hermitian (max |H - H^dagger| = {defect:.3e})")
    return h


def _as_real_if_possible(h):
    if np.iscomplexobj(h) and not np.any(h.imag):
        return np.ascontiguousarray(h.real)
    return h


def fix_phases(vectors) -> np.ndarray:
    """Make the largest-magnitude component of every column real and positive."""
    v = np.array(vectors, copy=True)
    if v.size == 0:
        return v
    pivots = np.argmax(np.abs(v), axis=0)
    lead = v[pivots, np.arange(v.shape[1])]
    if np.iscomplexobj(v):
        v *= (np.abs(lead) / lead)[None, :]
    else:
        v *= np.sign(lead)[None, :]
    return v


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues with orthonormal eigenvectors (column k <-> value k)."""

    values: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))
        object.__setattr__(self, "vectors", _readonly(self.vectors))
        if self.vectors.shape[1] != self.values.shape[0]:
            raise ShapeError("eigenvector count does not match eigenvalue count")

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def span(self) -> float:
        return float(self.values[-1] - self.values[0])

    def vector(self, k: int) -> np.ndarray:
        return self.vectors[:, k]

    def operator(self) -> np.ndarray:
        """Reconstruct V diag(values) V^dagger."""
        return (self.vectors * self.values) @ self.vectors.conj().T


@dataclass(frozen=True)
class SpectrumSlice:
    """All eigenvalues of an operator but eigenvectors only for ``indices``."""

    values: np.ndarray
    indices: np.ndarray
    columns: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))
        object.__setattr__(self, "indices", _readonly(np.asarray(self.indices, dtype=np.int64)))
        object.__setattr__(self, "columns", _readonly(self.columns))

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def span(self) -> float:
        return float(self.values[-1] - self.values[0])

    def vector(self, k: int) -> np.ndarray:
        hits = np.flatnonzero(self.indices == k)
        if hits.size == 0:
            raise KeyError(f"eigenvector {k} was not computed")
        return self.columns[:, hits[0]]


def diagonalize(h) -> Spectrum:
    """Full eigendecomposition of a Hermitian matrix.

    Exactly real input is diagonalized in real arithmetic. Eigenvector phases
    follow :func:`fix_phases`, so the result is deterministic.
    """
    h = _check_hermitian(h)
    h = _as_real_if_possible(h)
    try:
        values, vectors = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed: {exc}") from exc
    if not (np.all(np.isfinite(values)) and np.all(np.isfinite(vectors))):
        raise NumericError("eigensolver returned non-finite output")
    return Spectrum(values, fix_phases(vectors))


def _apply_householder_lower(reflectors, tau, z):
    # Q z for Q = H(0) ... H(n-2) as stored by ?sytrd with lower=1.
    n = reflectors.shape[0]
    for i in range(n - 2, -1, -1):
        t = tau[i]
        if t == 0.0:
            continue
        v = reflectors[i + 1 :, i].copy()
        v[0] = 1.0
        sub = z[i + 1 :, :]
        sub -= t * np.outer(v, v @ sub)
    return z


def _contiguous_runs(indices):
    runs = []
    start = prev = indices[0]
    for k in indices[1:]:
        if k != prev + 1:
            runs.append((start, prev))
            start = k
        prev = k
    runs.append((start, prev))
    return runs


def diagonalize_subset(h, indices, overwrite=False) -> SpectrumSlice:
    """All eigenvalues plus the eigenvectors of the selected (sorted) indices.

    Uses one Householder tridiagonalization, so memory stays at a single copy of
    ``h`` when ``overwrite`` is set. Meant for the largest dimensions where a
    full eigenvector matrix does not fit.
    """
    h = _check_hermitian(h)
    h = _as_real_if_possible(h)
    indices = np.unique(np.asarray(indices, dtype=np.int64))
    n = h.shape[0]
    if indices.size and (indices[0] < 0 or indices[-1] >= n):
        raise IndexError("eigenvector index out of range")
    if np.iscomplexobj(h) or n < 3:
        spec = diagonalize(h)
        return SpectrumSlice(spec.values, indices, spec.vectors[:, indices])
    a = np.asfortranarray(h) if not overwrite else h
    if not a.flags.f_contiguous:
        # a symmetric C-ordered array is its own transpose; reuse the buffer
        a = a.T
    lwork = int(lapack.dsytrd_lwork(n, lower=1)[0])
    c, d, e, tau, info = lapack.dsytrd(a, lower=1, lwork=lwork, overwrite_a=1)
    if info != 0:
        raise NumericError(f"dsytrd failed with info={info}")
    values = scipy.linalg.eigvalsh_tridiagonal(d, e)
    cols = np.empty((n, indices.size))
    filled = 0
    if indices.size:
        for lo, hi in _contiguous_runs(indices.tolist()):
            _, z = scipy.linalg.eigh_tridiagonal(d, e, select="i", select_range=(lo, hi))
            cols[:, filled : filled + z.shape[1]] = z
            filled += z.shape[1]
        _apply_householder_lower(c, tau, cols)
        cols = fix_phases(cols)
    del c
    return SpectrumSlice(values, indices, cols)


# ---------------------------------------------------------------------------
# energy windows


@dataclass(frozen=True)
class EnergyWindow:
    """Eigenstates with E_eta in the closed interval [e_lo, e_lo + width]."""

    e_lo: float
    width: float
    member_indices: np.ndarray
    undersampled: bool = False

    @property
    def n_members(self) -> int:
        return int(self.member_indices.size)

    @property
    def e_hi(self) -> float:
        return self.e_lo + self.width


@dataclass(frozen=True)
class EnvWindow:
    """Environment eigenstates with E^E_i in [E - E_alpha, E - E_alpha + width]."""

    level_energy: float
    e_lo: float
    width: float
    member_indices: np.ndarray
    undersampled: bool = False

    @property
    def n_members(self) -> int:
        return int(self.member_indices.size)

    @property
    def empty(self) -> bool:
        return self.member_indices.size == 0


def _members(values, lo, hi):
    values = np.asarray(values)
    start = np.searchsorted(values, lo, side="left")
    stop = np.searchsorted(values, hi, side="right")
    return np.arange(start, stop, dtype=np.int64)


def make_window(spec, e_lo: float, width: float, min_count: int = DEFAULT_MIN_COUNT) -> EnergyWindow:
    if not width > 0:
        raise ValidationError(f"window width must be positive, got {width}")
    members = _members(spec.values, e_lo, e_lo + width)
    if members.size == 0:
        raise EmptyWindowError(f"no eigenvalues in [{e_lo}, {e_lo + width}]")
    return EnergyWindow(float(e_lo), float(width), _readonly(members), bool(members.size < min_count))


def centered_window(spec, fraction: float = 0.5, width_fraction: float = DEFAULT_WIDTH_FRACTION, min_count: int = DEFAULT_MIN_COUNT) -> EnergyWindow:
    """Window of width ``width_fraction * span`` whose centre sits at ``fraction`` of the span."""
    span = spec.span
    width = width_fraction * span
    e_lo = spec.values[0] + fraction * span - 0.5 * width
    return make_window(spec, e_lo, width, min_count)


def env_windows(env_spec, sys_levels, e_lo: float, width: float, min_count: int = DEFAULT_MIN_COUNT) -> list[EnvWindow]:
    """One environment window per system level, shifted down by that level's energy.

    Empty windows are returned with ``empty`` set rather than raising.
    """
    if not width > 0:
        raise ValidationError(f"window width must be positive, got {width}")
    out = []
    for level in np.asarray(sys_levels, dtype=float):
        lo = e_lo - level
        members = _members(env_spec.values, lo, lo + width)
        out.append(EnvWindow(float(level), float(lo), float(width), _readonly(members), bool(members.size < min_count)))
    return out


@dataclass(frozen=True)
class DirectSumBasis:
    """Product basis {|E^S_alpha> (x) |E^E_i> : i in window(alpha)} of H_d."""

    sys_spec: Spectrum
    env_spec: Spectrum
    windows: tuple

    @property
    def dim(self) -> int:
        return sum(w.n_members for w in self.windows)

    @property
    def counts(self) -> np.ndarray:
        return np.array([w.n_members for w in self.windows])

    def labels(self) -> list[tuple[int, int]]:
        return [(alpha, int(i)) for alpha, w in enumerate(self.windows) for i in w.member_indices]

    def vectors(self) -> np.ndarray:
        cols = []
        for alpha, w in enumerate(self.windows):
            if w.empty:
                continue
            u = self.sys_spec.vectors[:, alpha]
            env = self.env_spec.vectors[:, w.member_indices]
            cols.append(np.einsum("s,ek->sek", u, env).reshape(-1, w.n_members))
        return np.concatenate(cols, axis=1)


def direct_sum_subspace(sys_spec, env_spec, windows) -> DirectSumBasis:
    if len(windows) != sys_spec.dim:
        raise ShapeError(f"need one window per system level ({sys_spec.dim}), got {len(windows)}")
    return DirectSumBasis(sys_spec, env_spec, tuple(windows))


def product_populations(space: CompositeSpace, psi, sys_spec, env_spec) -> np.ndarray:
    """Components f_{alpha i} = <E^S_alpha E^E_i|psi> as an (n_s, n_env) array."""
    block = np.asarray(psi).reshape(space.n_s, space.n_env)
    return sys_spec.vectors.conj().T @ block @ env_spec.vectors.conj()


# ---------------------------------------------------------------------------
# spectrum cache

CACHE_MAGIC = b"RNSTSPEC"
CACHE_VERSION = 1
_HEADER = struct.Struct("<8sIQ32s")


def operator_hash(h) -> bytes:
    """SHA-256 over dtype, shape and raw little-endian bytes of the operator."""
    h = np.ascontiguousarray(h)
    digest = hashlib.sha256()
    digest.update(h.dtype.str.encode())
    digest.update(struct.pack("<QQ", *h.shape))
    digest.update(h.astype(h.dtype.newbyteorder("<"), copy=False).tobytes())
    return digest.digest()


def write_spectrum(path, spec: Spectrum, source_hash: bytes) -> None:
    dim = spec.dim
    header = _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, dim, source_hash)
    cols = np.asarray(spec.vectors, dtype="<c16").T  # column-major order
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(np.asarray(spec.values, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(cols).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_spectrum(path, expected_hash: bytes | None = None) -> Spectrum:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValidationError(f"{path}: truncated header")
    magic, version, dim, source_hash = _HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC or version != CACHE_VERSION:
        raise ValidationError(f"{path}: not a spectrum cache file (version {version})")
    if expected_hash is not None and source_hash != expected_hash:
        raise ValidationError(f"{path}: content hash mismatch")
    offset = _HEADER.size
    values = np.frombuffer(raw, dtype="<f8", count=dim, offset=offset).astype(np.float64)
    offset += 8 * dim
    if len(raw) != offset + 16 * dim * dim:
        raise ValidationError(f"{path}: unexpected payload size")
    cols = np.frombuffer(raw, dtype="<c16", count=dim * dim, offset=offset).reshape(dim, dim)
    vectors = cols.T.astype(np.complex128)
    if not np.any(vectors.imag):
        vectors = np.ascontiguousarray(vectors.real)
    return Spectrum(values, vectors)


@dataclass
class SpectrumCache:
    """Directory of spectrum files keyed by the source operator's content hash.

    Writes go through a temporary file and an atomic rename, so concurrent
    readers never observe a partial record; an advisory lock per entry keeps
    two workers from computing the same spectrum.
    """

    directory: Path
    hits: int = field(default=0, init=False)
    misses: int = field(default=0, init=False)

    def __post_init__(self):
        self.directory = Path(self.directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path_for(self, key: bytes) -> Path:
        return self.directory / f"{key.hex()}.spec"

    def get(self, h) -> Spectrum:
        key = operator_hash(h)
        path = self.path_for(key)
        if path.exists():
            self.hits += 1
            return read_spectrum(path, key)
        # one writer per entry; a second process waits and then reads
        with open(path.with_suffix(".lock"), "w") as lock:
            fcntl.flock(lock, fcntl.LOCK_EX)
            try:
                if path.exists():
                    self.hits += 1
                    return read_spectrum(path, key)
                self.misses += 1
                spec = diagonalize(h)
                write_spectrum(path, spec, key)
                return spec
            finally:
                fcntl.flock(lock, fcntl.LOCK_UN)

    def entries(self) -> list[Path]:
        return sorted(self.directory.glob("*.spec"))

    def clear(self) -> int:
        removed = 0
        for path in self.entries():
            path.unlink()
            removed += 1
        for lock in self.directory.glob("*.lock"):
            lock.unlink()
        return removed


def diagonalize_cached(h, cache: SpectrumCache | None = None) -> Spectrum:
    return diagonalize(h) if cache is None else cache.get(h)
