"""Spin-1/2 models with a system S, a coupled part A and a bulk B.

The environment is an open Ising chain A_0 ... A_{n_a-1} B_0 ... B_{n_b-1}; the
system register sits next to A_0 and touches A only through ``h_int``. Single-site
states use |0> = spin up, so sigma^z = diag(1, -1) and ``n`` = |up><up|.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegeneracyError, ResourceError, ShapeError
from .hilbert import CompositeSpace, embed
from .spectra import Spectrum, diagonalize

DEFAULT_MAX_DIM = 2**14
GAP_THRESHOLD = 1e-10
SPAN_THRESHOLD = 1e-8
GOLDEN = (1 + 5**0.5) / 2

PAULI = {
    "i": np.eye(2),
    "x": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]]),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]]),
    "n": np.array([[1.0, 0.0], [0.0, 0.0]]),
    "m": np.array([[0.0, 0.0], [0.0, 1.0]]),
}
_LABEL = re.compile(r"^([ixyznm])(\d*)$")


def site_operator(label: str, n_sites: int) -> np.ndarray:
    """Operator ``label`` ("x", "z1", "n", "i", ...) on a register of ``n_sites`` spins.

    A trailing digit selects the site; the default is site 0.
    """
    match = _LABEL.match(label.strip().lower())
    if not match:
        raise ConfigError(f"bad operator label {label!r}")
    name, site = match.group(1), int(match.group(2) or 0)
    if site >= n_sites:
        raise ConfigError(f"label {label!r} addresses site {site} of a {n_sites}-site register")
    out = np.eye(1)
    for k in range(n_sites):
        out = np.kron(out, PAULI[name] if k == site else PAULI["i"])
    return out


@dataclass(frozen=True)
class ModelSpec:
    """Definition of one S + A + B spin model.

    ``interaction_terms`` pairs a system label with an A label, giving
    ``h_int = epsilon * sum_l J^S_l (x) J^A_l``. ``env_couplings`` is
    (nearest, next-nearest) zz exchange and ``env_fields`` is
    (longitudinal, transverse); ``disorder_width`` adds uniform random
    longitudinal fields in [-W, W] on every environment site.
    """

    n_spins_s: int = 1
    n_spins_a: int = 1
    n_spins_b: int = 10
    epsilon: float = 0.0
    system_field: float = 1.0
    interaction_terms: tuple = (("z", "z"),)
    env_couplings: tuple = (1.0, 0.0)
    env_fields: tuple = (0.0, 0.0)
    disorder_width: float = 0.0
    seed: int = 0
    max_dim: int = DEFAULT_MAX_DIM

    def __post_init__(self):
        for name in ("n_spins_s", "n_spins_a", "n_spins_b"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        if self.disorder_width < 0:
            raise ConfigError("disorder_width must be non-negative")
        terms = tuple((str(s), str(a)) for s, a in self.interaction_terms)
        object.__setattr__(self, "interaction_terms", terms)
        object.__setattr__(self, "env_couplings", tuple(float(x) for x in self.env_couplings))
        object.__setattr__(self, "env_fields", tuple(float(x) for x in self.env_fields))
        if len(self.env_couplings) != 2 or len(self.env_fields) != 2:
            raise ConfigError("env_couplings and env_fields take exactly two values")

    @property
    def space(self) -> CompositeSpace:
        return CompositeSpace(2**self.n_spins_s, 2**self.n_spins_a, 2**self.n_spins_b)

    def with_(self, **changes) -> "ModelSpec":
        return replace(self, **changes)

    # flat key = value configuration -------------------------------------

    def to_config(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            if key == "interaction_terms":
                text = ", ".join(f"{s}:{a}" for s, a in value)
            elif isinstance(value, (tuple, list)):
                text = ", ".join(repr(float(v)) for v in value)
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ModelSpec":
        known = {f.name: f for f in cls.__dataclass_fields__.values()}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown model key {key!r}")
            kwargs[key] = _parse_model_value(key, raw)
        return cls(**kwargs)

    @classmethod
    def from_config(cls, text: str) -> "ModelSpec":
        return cls.from_mapping(parse_key_values(text))

    @classmethod
    def load(cls, path) -> "ModelSpec":
        return cls.from_config(Path(path).read_text())

    def dump(self, path) -> None:
        Path(path).write_text(self.to_config())


_INT_KEYS = {"n_spins_s", "n_spins_a", "n_spins_b", "seed", "max_dim"}
_PAIR_KEYS = {"env_couplings", "env_fields"}


def parse_key_values(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def _parse_model_value(key, raw):
    if not isinstance(raw, str):
        return raw
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _PAIR_KEYS:
            return tuple(float(v) for v in raw.split(","))
        if key == "interaction_terms":
            terms = []
            for item in raw.split(","):
                s, a = item.split(":")
                terms.append((s.strip(), a.strip()))
            return tuple(terms)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


# ---------------------------------------------------------------------------
# presets

CHAOTIC = dict(env_couplings=(1.0, 0.3), env_fields=(0.5, 0.9), disorder_width=0.3)
INTEGRABLE = dict(env_couplings=(1.0, 0.0), env_fields=(0.5, 0.0), disorder_width=0.3)


def chaotic_spec(n_spins_b=10, **overrides) -> ModelSpec:
    """Mixed-field Ising environment with next-nearest exchange and weak disorder."""
    return ModelSpec(n_spins_b=n_spins_b, **{**CHAOTIC, **overrides})


def integrable_spec(n_spins_b=10, **overrides) -> ModelSpec:
    """Classical (all-z) Ising environment: nearest-neighbour exchange, no transverse field."""
    return ModelSpec(n_spins_b=n_spins_b, **{**INTEGRABLE, **overrides})


# ---------------------------------------------------------------------------
# construction


@dataclass(frozen=True)
class HamiltonianSet:
    """H = H^S + H^I + H^E on an explicit S (x) A (x) B factorization.

    ``terms`` holds the (J^S_l, J^A_l) operator pairs when ``h_int`` was built
    in factorized form; it is empty otherwise.
    """

    space: CompositeSpace
    h_s: np.ndarray
    h_env: np.ndarray
    h_int: np.ndarray
    h_total: np.ndarray
    epsilon: float = 0.0
    terms: tuple = field(default=())


def system_hamiltonian(spec: ModelSpec) -> np.ndarray:
    """sum_k (omega_k / 2) sigma^z_k with omega_k = system_field * golden^k."""
    n = spec.n_spins_s
    h = np.zeros((2**n, 2**n))
    for k in range(n):
        h += 0.5 * spec.system_field * GOLDEN**k * site_operator(f"z{k}", n)
    return h


def chain_hamiltonian(n_sites, nn, nnn, hz, hx) -> np.ndarray:
    """Open Ising chain sum J zz + J2 z z' + sum_k (hz_k z_k + hx_k x_k), built bitwise.

    ``hz`` and ``hx`` are per-site arrays. Site 0 is the most significant bit.
    """
    dim = 2**n_sites
    idx = np.arange(dim)
    spins = np.empty((n_sites, dim))
    for k in range(n_sites):
        spins[k] = 1.0 - 2.0 * ((idx >> (n_sites - 1 - k)) & 1)
    diag = np.zeros(dim)
    for k in range(n_sites - 1):
        diag += nn * spins[k] * spins[k + 1]
    for k in range(n_sites - 2):
        diag += nnn * spins[k] * spins[k + 2]
    diag += np.asarray(hz, dtype=float) @ spins
    h = np.zeros((dim, dim))
    h[idx, idx] = diag
    for k in range(n_sites):
        if hx[k] != 0.0:
            h[idx, idx ^ (1 << (n_sites - 1 - k))] += hx[k]
    return h


def environment_fields(spec: ModelSpec):
    """Per-site (longitudinal, transverse) fields; disorder drawn from ``spec.seed``."""
    n_env = spec.n_spins_a + spec.n_spins_b
    rng = np.random.default_rng(spec.seed)
    hz = spec.env_fields[0] + spec.disorder_width * rng.uniform(-1.0, 1.0, n_env)
    hx = np.full(n_env, spec.env_fields[1])
    return hz, hx


def environment_hamiltonian(spec: ModelSpec) -> np.ndarray:
    hz, hx = environment_fields(spec)
    nn, nnn = spec.env_couplings
    return chain_hamiltonian(spec.n_spins_a + spec.n_spins_b, nn, nnn, hz, hx)


def interaction_terms(spec: ModelSpec) -> tuple:
    return tuple(
        (site_operator(ls, spec.n_spins_s), site_operator(la, spec.n_spins_a)) for ls, la in spec.interaction_terms
    )


def assemble_total(space: CompositeSpace, h_s, h_int, h_env) -> np.ndarray:
    """embed(h_s, S) + embed(h_int, SA) + embed(h_env, AB) without dense Kronecker temporaries."""
    dtype = np.result_type(h_s, h_int, h_env)
    n_s, n_a, n_b, n_env = space.n_s, space.n_a, space.n_b, space.n_env
    total = np.zeros((space.n_tot, space.n_tot), dtype=dtype)
    blocks = total.reshape(n_s, n_env, n_s, n_env)
    env_idx = np.arange(n_env)
    for s in range(n_s):
        blocks[s, :, s, :] += h_env
        for t in range(n_s):
            if h_s[s, t] != 0:
                blocks[s, env_idx, t, env_idx] += h_s[s, t]
    fine = total.reshape(n_s, n_a, n_b, n_s, n_a, n_b)
    b_idx = np.arange(n_b)
    h_int4 = np.asarray(h_int).reshape(n_s, n_a, n_s, n_a)
    for s, a, t, c in zip(*np.nonzero(h_int4)):
        fine[s, a, b_idx, t, c, b_idx] += h_int4[s, a, t, c]
    return total


def check_nondegenerate(h, what="H^S", threshold=GAP_THRESHOLD) -> np.ndarray:
    values = np.linalg.eigvalsh(h)
    if values.size > 1 and np.min(np.diff(values)) < threshold:
        raise DegeneracyError(f"{what} has a level gap below {threshold:g}")
    return values


def build_model(spec: ModelSpec) -> HamiltonianSet:
    space = spec.space
    if space.n_tot > spec.max_dim:
        raise ResourceError(f"total dimension {space.n_tot} exceeds cap {spec.max_dim}")
    h_s = system_hamiltonian(spec)
    check_nondegenerate(h_s)
    terms = interaction_terms(spec)
    h_int = np.zeros((space.n_s * space.n_a,) * 2, dtype=np.result_type(*[t for pair in terms for t in pair], float))
    for js, ja in terms:
        h_int = h_int + spec.epsilon * np.kron(js, ja)
    h_env = environment_hamiltonian(spec)
    h_total = assemble_total(space, h_s, h_int, h_env)
    return HamiltonianSet(space, h_s, h_env, h_int, h_total, float(spec.epsilon), terms)


def custom_model(space: CompositeSpace, h_s, h_int, h_env, epsilon=0.0, terms=()) -> HamiltonianSet:
    """HamiltonianSet from explicit operators (h_int on S (x) A)."""
    h_s, h_int, h_env = (np.asarray(x) for x in (h_s, h_int, h_env))
    for op, dim, name in ((h_s, space.n_s, "h_s"), (h_int, space.n_s * space.n_a, "h_int"), (h_env, space.n_env, "h_env")):
        if op.shape != (dim, dim):
            raise ShapeError(f"{name} must be {dim}x{dim}, got {op.shape}")
    return HamiltonianSet(space, h_s, h_env, h_int, assemble_total(space, h_s, h_int, h_env), float(epsilon), tuple(terms))


def reference_total(hs: HamiltonianSet) -> np.ndarray:
    """Kronecker-product route to H, used to cross-check :func:`assemble_total`."""
    sp = hs.space
    return embed(sp, hs.h_s, "S") + embed(sp, hs.h_int, "SA") + embed(sp, hs.h_env, "AB")


def spectral_span(hs: HamiltonianSet, spectrum: Spectrum | None = None) -> float:
    """Delta E = E_max - E_min of the total Hamiltonian."""
    values = np.asarray((spectrum or diagonalize(hs.h_total)).values)
    span = float(values[-1] - values[0])
    if span <= SPAN_THRESHOLD:
        raise DegeneracyError(f"total spectrum has vanishing span {span:g}")
    return span


def environment_bandwidth(spec: ModelSpec) -> float:
    values = np.linalg.eigvalsh(environment_hamiltonian(spec))
    return float(values[-1] - values[0])


def mean_spacing_ratio(values, central_fraction: float = 0.5) -> float:
    """Mean of min(s_n, s_{n+1}) / max(s_n, s_{n+1}) over the central part of a spectrum.

    About 0.386 for Poisson levels and 0.531 for GOE.
    """
    values = np.sort(np.asarray(values))
    n = values.size
    cut = int(round(n * (1 - central_fraction) / 2))
    bulk = values[cut : n - cut]
    gaps = np.diff(bulk)
    lo, hi = np.minimum(gaps[:-1], gaps[1:]), np.maximum(gaps[:-1], gaps[1:])
    keep = hi > 0
    return float(np.mean(lo[keep] / hi[keep]))
