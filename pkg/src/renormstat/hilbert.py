"""Index arithmetic and partial traces on the S (x) A (x) B product space.

Flat indices are s-major: ``flat = (s * n_a + a) * n_b + b``. The environment
index ``e = a * n_b + b`` is therefore contiguous inside every system block,
which turns the trace over the environment into a block sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

FACTORS = ("S", "A", "B", "SA", "AB")


@dataclass(frozen=True)
class CompositeSpace:
    """Dimensions of the system, the coupled part A and the bulk B."""

    n_s: int
    n_a: int
    n_b: int

    def __post_init__(self):
        for name in ("n_s", "n_a", "n_b"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ShapeError(f"{name} must be a positive integer, got {value!r}")

    @property
    def n_env(self) -> int:
        return self.n_a * self.n_b

    @property
    def n_tot(self) -> int:
        return self.n_s * self.n_env

    def factor_dim(self, factor: str) -> int:
        dims = {
            "S": self.n_s,
            "A": self.n_a,
            "B": self.n_b,
            "SA": self.n_s * self.n_a,
            "AB": self.n_env,
        }
        try:
            return dims[factor]
        except KeyError:
            raise ValueError(f"unknown factor {factor!r}; expected one of {FACTORS}") from None


def flat_index(space: CompositeSpace, s: int, a: int, b: int) -> int:
    """Flat index of the product state |s, a, b>."""
    for name, value, bound in (("s", s, space.n_s), ("a", a, space.n_a), ("b", b, space.n_b)):
        if not 0 <= value < bound:
            raise IndexError(f"{name}={value} out of range [0, {bound})")
    return (s * space.n_a + a) * space.n_b + b


def unflatten(space: CompositeSpace, index: int) -> tuple[int, int, int]:
    """Inverse of :func:`flat_index`."""
    if not 0 <= index < space.n_tot:
        raise IndexError(f"index {index} out of range [0, {space.n_tot})")
    sa, b = divmod(index, space.n_b)
    s, a = divmod(sa, space.n_a)
    return s, a, b


def _check_square(op, dim, what):
    op = np.asarray(op)
    if op.ndim != 2 or op.shape != (dim, dim):
        raise ShapeError(f"{what} must be {dim}x{dim}, got shape {op.shape}")
    return op


def partial_trace_env(space: CompositeSpace, rho_total) -> np.ndarray:
    """Trace out A and B: (rho_S)_{ss'} = sum_e <s,e|rho|s',e>."""
    rho = _check_square(rho_total, space.n_tot, "rho_total")
    blocks = rho.reshape(space.n_s, space.n_env, space.n_s, space.n_env)
    return np.einsum("iaja->ij", blocks)


def reduce_vectors(space: CompositeSpace, vectors, weights=None) -> np.ndarray:
    """Reduced system operator sum_k w_k tr_E |v_k><v_k| for column vectors.

    Equivalent to forming the outer products and calling
    :func:`partial_trace_env`, without materializing any n_tot x n_tot array.
    """
    v = np.asarray(vectors)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] != space.n_tot:
        raise ShapeError(f"vectors must have {space.n_tot} rows, got {v.shape[0]}")
    blocks = v.reshape(space.n_s, space.n_env, v.shape[1])
    if weights is not None:
        weights = np.asarray(weights)
        return np.einsum("sek,tek,k->st", blocks, blocks.conj(), weights)
    return np.einsum("sek,tek->st", blocks, blocks.conj())


def embed(space: CompositeSpace, op, factor: str) -> np.ndarray:
    """Promote an operator on one factor to the full S (x) A (x) B space."""
    dim = space.factor_dim(factor)
    op = _check_square(op, dim, f"operator on {factor}")
    left = {"S": 1, "A": space.n_s, "B": space.n_s * space.n_a, "SA": 1, "AB": space.n_s}[factor]
    right = space.n_tot // (left * dim)
    out = op
    if right > 1:
        out = np.kron(out, np.eye(right, dtype=op.dtype))
    if left > 1:
        out = np.kron(np.eye(left, dtype=op.dtype), out)
    return out
