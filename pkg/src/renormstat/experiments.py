"""Experiment pipeline: bare vs renormalized canonical fits, sweeps and reports.

A point of an experiment is one (epsilon, n_spins_b, seed) triple. For each
point the total Hamiltonian is diagonalized, the microcanonical reduced state
of a window is formed, and three canonical states are fitted to it: one built
from H^S, one from the self-consistent H~^S and one from the mean-field part
H^S + eps mean(J^A) J^S. Sweeps run points over the Cartesian product of the
configured lists and record failures instead of aborting.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from itertools import product
from pathlib import Path

import numpy as np
from scipy import stats

from . import diagnostics as diag
from .ensembles import (
    canonical_state,
    fit_beta,
    microcanonical_reduced,
    trace_distance,
    typical_vector_reduced,
)
from .errors import (
    ConfigError,
    RenormStatError,
    UnsupportedFormError,
    ValidationError,
)
from .models import (
    DEFAULT_MAX_DIM,
    PAULI,
    ModelSpec,
    build_model,
    environment_bandwidth,
    parse_key_values,
)
from .renorm import (
    EnvironmentData,
    interaction_blocks,
    mean_field_split,
    renormalize,
    renormalized_diagonal_elements,
)
from .spectra import SpectrumCache, centered_window, diagonalize, diagonalize_cached, make_window

EPSILON_MODES = ("absolute", "bandwidth", "gap_ratio")
DIAGNOSTICS = ("hierarchy", "gstats", "width", "eth", "typical", "diagonal")

# columns each diagnostic contributes to a sweep row
DIAGNOSTIC_COLUMNS = {
    "hierarchy": ("offdiag_median", "offdiag_bound", "offdiag_fraction_under", "hierarchy_ratio"),
    "gstats": ("g_diag_mean", "g_offdiag_mean", "g_completeness_error"),
    "width": ("width_mean", "width_median", "width_bound", "width_max_ratio"),
    "eth": ("eth_pass_windows", "eth_total_windows", "eth_region_length"),
    "typical": ("typical_max_rel_deviation", "typical_max_offdiag", "typical_passed"),
    "diagonal": ("diag_rms_renormalized", "diag_rms_bare", "diag_rms_ratio"),
}

BASE_COLUMNS = (
    "index",
    "status",
    "epsilon_input",
    "epsilon",
    "n_spins_b",
    "seed",
    "n_tot",
    "window_e_lo",
    "window_width",
    "window_count",
    "beta_bare",
    "beta_renorm",
    "beta_meanfield",
    "d_bare",
    "d_renorm",
    "d_meanfield",
    "mean_field",
    "iterations",
    "residual",
    "h_d",
    "min_gap",
)


def _parse_list(raw, cast):
    if isinstance(raw, str):
        items = [x.strip() for x in raw.split(",") if x.strip()]
    else:
        items = list(raw)
    return tuple(cast(x) for x in items)


def _parse_bool(raw):
    if isinstance(raw, bool):
        return raw
    text = str(raw).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {raw!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a comparison or a sweep.

    ``epsilon_sweep`` values are read according to ``epsilon_mode``:
    ``absolute`` uses them directly, ``bandwidth`` multiplies them by the
    environment bandwidth and ``gap_ratio`` picks epsilon so that the largest
    bare diagonal element |(H^I_ab)_ii| equals value x the minimal system gap.
    The window is either absolute (``window_e_lo``, ``window_width``) or placed
    at ``window_fraction`` of the total spectrum with width ``width_fraction``
    of the span.
    """

    model: ModelSpec = field(default_factory=ModelSpec)
    window_fraction: float = 0.5
    width_fraction: float = 0.02
    window_e_lo: float | None = None
    window_width: float | None = None
    epsilon_mode: str = "absolute"
    epsilon_sweep: tuple = ()
    size_sweep: tuple = ()
    seeds: tuple = ()
    diagnostics: tuple = ()
    output: str = "out"
    workers: int = 0
    cache: bool = True
    allow_large_dim: bool = False
    samples: int = 2000
    width_samples: int = 20
    eps_p: float = 1e-3
    slack: float = diag.DEFAULT_SLACK
    eth_threshold: float = diag.DEFAULT_ETH_THRESHOLD
    renorm_tol: float = 1e-10
    max_iter: int = 200
    mixing: float = 1.0
    min_count: int = 50

    def __post_init__(self):
        if not self.epsilon_sweep:
            object.__setattr__(self, "epsilon_sweep", (self.model.epsilon,))
        if not self.size_sweep:
            object.__setattr__(self, "size_sweep", (self.model.n_spins_b,))
        if not self.seeds:
            object.__setattr__(self, "seeds", (self.model.seed,))
        self.validate()

    def validate(self) -> None:
        if self.epsilon_mode not in EPSILON_MODES:
            raise ConfigError(f"epsilon_mode must be one of {EPSILON_MODES}, got {self.epsilon_mode!r}")
        for name in ("epsilon_sweep", "size_sweep", "seeds"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"{name} must not be empty")
        unknown = set(self.diagnostics) - set(DIAGNOSTICS)
        if unknown:
            raise ConfigError(f"unknown diagnostics {sorted(unknown)}; choose from {DIAGNOSTICS}")
        if (self.window_e_lo is None) != (self.window_width is None):
            raise ConfigError("window_e_lo and window_width must be given together")
        if not 0 < self.width_fraction <= 1:
            raise ConfigError("width_fraction must lie in (0, 1]")
        if not 0 <= self.window_fraction <= 1:
            raise ConfigError("window_fraction must lie in [0, 1]")
        if not 0 < self.eps_p < 1:
            raise ConfigError("eps_p must lie in (0, 1)")
        if self.model.max_dim > DEFAULT_MAX_DIM and not self.allow_large_dim:
            raise ConfigError(f"max_dim above {DEFAULT_MAX_DIM} needs allow_large_dim = true")
        for nb in self.size_sweep:
            if nb < 1:
                raise ConfigError(f"n_spins_b must be >= 1, got {nb}")
            dim = self.model.space.n_s * self.model.space.n_a * 2**nb
            if dim > self.model.max_dim:
                raise ConfigError(f"n_spins_b = {nb} gives dimension {dim} above the cap {self.model.max_dim}")

    @property
    def n_points(self) -> int:
        return len(self.epsilon_sweep) * len(self.size_sweep) * len(self.seeds)

    def points(self):
        """(epsilon value, n_spins_b, seed) in sweep order."""
        return list(product(self.epsilon_sweep, self.size_sweep, self.seeds))

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    # -- text form -------------------------------------------------------

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        model_keys = set(ModelSpec.__dataclass_fields__)
        exp_fields = {f.name: f for f in fields(cls) if f.name != "model"}
        model_part, kwargs = {}, {}
        for key, raw in mapping.items():
            if key in model_keys:
                model_part[key] = raw
            elif key in exp_fields:
                kwargs[key] = _parse_experiment_value(key, raw)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        try:
            model = ModelSpec.from_mapping(model_part)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(model=model, **kwargs)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        return cls.from_mapping(parse_key_values(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)

    def to_text(self) -> str:
        lines = [self.model.to_config().rstrip("\n")]
        for f in fields(self):
            if f.name == "model":
                continue
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, tuple):
                text = ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = asdict(self.model)
        return d


_FLOAT_KEYS = {
    "window_fraction",
    "width_fraction",
    "window_e_lo",
    "window_width",
    "eps_p",
    "slack",
    "eth_threshold",
    "renorm_tol",
    "mixing",
}
_INT_KEYS = {"workers", "samples", "width_samples", "max_iter", "min_count"}


def _parse_experiment_value(key, raw):
    try:
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _INT_KEYS:
            return int(raw)
        if key in ("cache", "allow_large_dim"):
            return _parse_bool(raw)
        if key == "epsilon_sweep":
            return _parse_list(raw, float)
        if key in ("size_sweep", "seeds"):
            return _parse_list(raw, int)
        if key == "diagnostics":
            return _parse_list(raw, str)
        return str(raw).strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


# ---------------------------------------------------------------------------
# single point


class PointError(RenormStatError):
    """A module error raised while running one point, with the point attached.

    ``partial`` holds whatever results were computed before the failure.
    """

    def __init__(self, point, cause, partial=None):
        eps, nb, seed = point
        super().__init__(f"point (epsilon={eps!r}, n_spins_b={nb}, seed={seed}): {type(cause).__name__}: {cause}")
        self.point = point
        self.cause = cause
        self.partial = dict(partial or {})


@dataclass
class ComparisonReport:
    """Outcome of one point. Distances are trace distances to the microcanonical rho^S."""

    epsilon_input: float
    epsilon: float
    n_spins_b: int
    seed: int
    n_tot: int
    window: dict
    beta_bare: float
    beta_renorm: float
    beta_meanfield: float
    d_bare: float
    d_renorm: float
    d_meanfield: float
    mean_field: list
    iterations: int
    residual: float
    residual_trace: list
    h_d: float
    min_gap: float
    rho: list
    h_s_tilde: list
    diagnostics: dict = field(default_factory=dict)
    elapsed_s: float = 0.0
    status: str = "ok"

    def to_dict(self) -> dict:
        return diag._jsonable(asdict(self))

    def to_row(self, diagnostics=()) -> dict:
        row = {
            "status": self.status,
            "epsilon_input": self.epsilon_input,
            "epsilon": self.epsilon,
            "n_spins_b": self.n_spins_b,
            "seed": self.seed,
            "n_tot": self.n_tot,
            "window_e_lo": self.window["e_lo"],
            "window_width": self.window["width"],
            "window_count": self.window["count"],
            "beta_bare": self.beta_bare,
            "beta_renorm": self.beta_renorm,
            "beta_meanfield": self.beta_meanfield,
            "d_bare": self.d_bare,
            "d_renorm": self.d_renorm,
            "d_meanfield": self.d_meanfield,
            "mean_field": float(np.real(self.mean_field[0])) if self.mean_field else float("nan"),
            "iterations": self.iterations,
            "residual": self.residual,
            "h_d": self.h_d,
            "min_gap": self.min_gap,
        }
        for name in diagnostics:
            summary = self.diagnostics.get(name, {})
            for col in DIAGNOSTIC_COLUMNS[name]:
                row[col] = summary.get(col, float("nan"))
        return row


def _complex_matrix(m):
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m, dtype=complex)]


def resolve_epsilon(config: ExperimentConfig, spec: ModelSpec, value: float, env=None, sys_spec=None) -> float:
    """Translate a sweep value into an absolute coupling strength."""
    if config.epsilon_mode == "absolute":
        return float(value)
    if config.epsilon_mode == "bandwidth":
        return float(value) * environment_bandwidth(spec)
    unit = build_model(spec.with_(epsilon=1.0))
    sys_spec = sys_spec or diagonalize(np.asarray(unit.h_s))
    env = env or EnvironmentData(diagonalize(np.asarray(unit.h_env)), unit.space)
    blocks = interaction_blocks(unit, sys_spec)
    largest = float(np.abs(blocks.diagonal_elements(env)).max())
    if largest == 0:
        raise ValidationError("gap_ratio mode needs nonzero diagonal interaction elements")
    gap = float(np.diff(np.asarray(sys_spec.values)).min())
    return float(value) * gap / largest


def _window(config: ExperimentConfig, spectrum):
    if config.window_e_lo is not None:
        return make_window(spectrum, config.window_e_lo, config.window_width, config.min_count)
    return centered_window(spectrum, config.window_fraction, config.width_fraction, config.min_count)


def _fit_and_distance(rho, h):
    beta = fit_beta(rho, h)
    return beta, trace_distance(rho, canonical_state(h, beta))


def _central_etas(n, count):
    return np.unique(np.linspace(0.4 * n, 0.6 * n, count).astype(int))


def run_diagnostics(config: ExperimentConfig, names, hs, env, sys_spec, total, window, frame, seed) -> dict:
    out = {}
    if "hierarchy" in names:
        blocks = interaction_blocks(hs, sys_spec)
        h = diag.element_hierarchy(blocks, env, config.samples, seed, slack=config.slack)
        out["hierarchy"] = {
            "offdiag_median": h.median_offdiag,
            "offdiag_bound": h.offdiag_bound,
            "offdiag_fraction_under": h.fraction_under_bound,
            "hierarchy_ratio": float("nan") if h.hierarchy_ratio is None else h.hierarchy_ratio,
        }
    if "gstats" in names:
        g = diag.g_statistics(env, min(config.samples, env.spec.dim), seed)
        out["gstats"] = {
            "g_diag_mean": g.summaries["g_diag"]["mean"],
            "g_offdiag_mean": g.summaries["g_offdiag"]["mean"],
            "g_completeness_error": g.completeness_error,
        }
    if "width" in names:
        if hs.epsilon == 0:
            out["width"] = {"width_mean": 0.0, "width_median": 0.0, "width_bound": 0.0, "width_max_ratio": 0.0}
        else:
            basis = diag.UnperturbedBasis(hs, sys_spec, env)
            reps = [diag.perturbative_width(hs, total, e, config.eps_p, basis) for e in _central_etas(total.dim, config.width_samples)]
            w = np.array([r.measured_width for r in reps])
            out["width"] = {
                "width_mean": float(w.mean()),
                "width_median": float(np.median(w)),
                "width_bound": reps[0].bound,
                "width_max_ratio": float(np.max(w / reps[0].bound)),
            }
    if "eth" in names:
        span = env.spec.span
        reps = diag.eth_scan(env, PAULI["z"], 0.05 * span, 0.025 * span, config.eth_threshold, label="sigma_z^A")
        region = diag.eth_region(reps)
        out["eth"] = {
            "eth_pass_windows": int(sum(r.eth_flag for r in reps)),
            "eth_total_windows": len(reps),
            "eth_region_length": 0 if region is None else region[1] - region[0],
        }
    if "typical" in names:
        rep = typical_vector_reduced(hs, total, window, seed, sys_spec, env.spec)
        check = diag.typical_offdiag_check(rep)
        out["typical"] = {
            "typical_max_rel_deviation": check.get("max_rel_deviation", 0.0),
            "typical_max_offdiag": check.get("max_offdiag", 0.0),
            "typical_passed": bool(check["passed"]),
        }
    if "diagonal" in names:
        tab = renormalized_diagonal_elements(frame, hs, env)
        bare = tab.rms_bare()
        out["diagonal"] = {
            "diag_rms_renormalized": tab.rms_renormalized(),
            "diag_rms_bare": bare,
            "diag_rms_ratio": tab.rms_renormalized() / bare if bare > 0 else float("nan"),
        }
    return out


def run_point(config: ExperimentConfig, point, cache: SpectrumCache | None = None) -> ComparisonReport:
    """Run the full comparison pipeline at one (epsilon value, n_spins_b, seed)."""
    eps_value, nb, seed = point
    partial = {}
    start = time.perf_counter()
    try:
        spec = config.model.with_(n_spins_b=int(nb), seed=int(seed))
        base = build_model(spec.with_(epsilon=0.0))
        sys_spec = diagonalize(np.asarray(base.h_s))
        env = EnvironmentData(diagonalize_cached(base.h_env, cache), base.space)
        eps = resolve_epsilon(config, spec, eps_value, env, sys_spec)
        partial["epsilon"] = eps
        hs = build_model(spec.with_(epsilon=eps))
        total = diagonalize_cached(hs.h_total, cache)
        window = _window(config, total)
        partial["window"] = {"e_lo": window.e_lo, "width": window.width, "count": window.n_members}
        rho = microcanonical_reduced(hs, total, window)
        partial["rho"] = _complex_matrix(rho.matrix)
        frame = renormalize(
            hs, env, window.e_lo, window.width, tol=config.renorm_tol, max_iter=config.max_iter,
            mixing=config.mixing, min_count=config.min_count,
        )
        partial["iterations"] = frame.iterations
        try:
            mf = mean_field_split(frame, hs, env)
            h_mf = np.asarray(hs.h_s) + mf.mf_operator
            mean_field = [float(np.real(x)) for x in mf.mean_field]
        except UnsupportedFormError:
            h_mf, mean_field = None, []
        beta_bare, d_bare = _fit_and_distance(rho, hs.h_s)
        partial.update(beta_bare=beta_bare, d_bare=d_bare)
        beta_renorm, d_renorm = _fit_and_distance(rho, frame.h_s_tilde)
        partial.update(beta_renorm=beta_renorm, d_renorm=d_renorm)
        if h_mf is not None:
            beta_mf, d_mf = _fit_and_distance(rho, h_mf)
        else:
            beta_mf, d_mf = float("nan"), float("nan")
        blocks = interaction_blocks(hs, sys_spec)
        diags = run_diagnostics(config, config.diagnostics, hs, env, sys_spec, total, window, frame, seed)
    except RenormStatError as exc:
        raise PointError(point, exc, partial) from exc
    return ComparisonReport(
        epsilon_input=float(eps_value),
        epsilon=eps,
        n_spins_b=int(nb),
        seed=int(seed),
        n_tot=hs.space.n_tot,
        window=partial["window"],
        beta_bare=beta_bare,
        beta_renorm=beta_renorm,
        beta_meanfield=beta_mf,
        d_bare=d_bare,
        d_renorm=d_renorm,
        d_meanfield=d_mf,
        mean_field=mean_field,
        iterations=frame.iterations,
        residual=frame.residual,
        residual_trace=list(frame.residual_trace),
        h_d=blocks.h_d,
        min_gap=float(np.diff(np.asarray(sys_spec.values)).min()),
        rho=partial["rho"],
        h_s_tilde=_complex_matrix(frame.h_s_tilde),
        diagnostics=diags,
        elapsed_s=time.perf_counter() - start,
    )


def run_diagnose(config: ExperimentConfig, cache: SpectrumCache | None = None, names=None) -> dict:
    """Diagnostics alone at the first configured point (no canonical fits)."""
    names = tuple(names or config.diagnostics or DIAGNOSTICS)
    eps_value, nb, seed = config.points()[0]
    spec = config.model.with_(n_spins_b=int(nb), seed=int(seed))
    base = build_model(spec.with_(epsilon=0.0))
    sys_spec = diagonalize(np.asarray(base.h_s))
    env = EnvironmentData(diagonalize_cached(base.h_env, cache), base.space)
    eps = resolve_epsilon(config, spec, eps_value, env, sys_spec)
    hs = build_model(spec.with_(epsilon=eps))
    total = diagonalize_cached(hs.h_total, cache)
    window = _window(config, total)
    frame = None
    if "diagonal" in names:
        frame = renormalize(hs, env, window.e_lo, window.width, tol=config.renorm_tol, max_iter=config.max_iter,
                            mixing=config.mixing, min_count=config.min_count)
    return {
        "epsilon": eps,
        "n_spins_b": int(nb),
        "seed": int(seed),
        "window": {"e_lo": window.e_lo, "width": window.width, "count": window.n_members},
        "diagnostics": run_diagnostics(config, names, hs, env, sys_spec, total, window, frame, seed),
    }


def run_comparison(config: ExperimentConfig, cache: SpectrumCache | None = None) -> ComparisonReport:
    """Comparison at the first point of the configured sweep lists."""
    return run_point(config, config.points()[0], cache)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    config: ExperimentConfig
    reports: list
    failures: list
    fits: dict

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def rows(self) -> list[dict]:
        columns = BASE_COLUMNS + tuple(c for name in self.config.diagnostics for c in DIAGNOSTIC_COLUMNS[name])
        out = []
        for k, item in enumerate(self.reports):
            if isinstance(item, ComparisonReport):
                row = {"index": k, **item.to_row(self.config.diagnostics)}
            else:
                eps, nb, seed = item["point"]
                row = {"index": k, "status": "failed:" + item["error_type"], "epsilon_input": eps, "n_spins_b": nb, "seed": seed}
            out.append({c: row.get(c, float("nan")) for c in columns})
        return out

    def to_dict(self) -> dict:
        return diag._jsonable(
            {
                "config": self.config.to_dict(),
                "points": [r.to_dict() if isinstance(r, ComparisonReport) else r for r in self.reports],
                "n_failures": len(self.failures),
                "fits": self.fits,
            }
        )


def _point_worker(args):
    config, point, cache_dir = args
    cache = SpectrumCache(cache_dir) if cache_dir else None
    try:
        return run_point(config, point, cache)
    except PointError as exc:
        return {
            "point": list(point),
            "error_type": type(exc.cause).__name__,
            "message": str(exc),
            "partial": exc.partial,
        }


def fit_scaling(x, y) -> dict | None:
    """Least-squares slope of log y against log x with a 95% interval.

    Every (x, y) pair enters separately, so the interval reflects the seed
    scatter at each x. Returns None with fewer than two distinct positive x.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    x, y = np.log(x[ok]), np.log(y[ok])
    if np.unique(x).size < 2:
        return None
    res = stats.linregress(x, y)
    dof = x.size - 2
    half = float(stats.t.ppf(0.975, dof) * res.stderr) if dof > 0 else float("inf")
    return {
        "slope": float(res.slope),
        "intercept": float(res.intercept),
        "ci_low": float(res.slope - half),
        "ci_high": float(res.slope + half),
        "n": int(x.size),
    }


SCALING_FITS = (
    ("d_bare_vs_epsilon", "epsilon", "d_bare"),
    ("d_renorm_vs_epsilon", "epsilon", "d_renorm"),
    ("d_bare_vs_n_env", "n_env", "d_bare"),
    ("d_renorm_vs_n_env", "n_env", "d_renorm"),
    ("offdiag_median_vs_n_env", "n_env", "offdiag_median"),
    ("width_mean_vs_n_env", "n_env", "width_mean"),
    ("g_offdiag_mean_vs_n_env", "n_env", "g_offdiag_mean"),
)


def sweep_fits(config: ExperimentConfig, reports) -> dict:
    rows = [r.to_row(config.diagnostics) for r in reports if isinstance(r, ComparisonReport)]
    n_a = config.model.space.n_a
    for row in rows:
        row["n_env"] = n_a * 2 ** row["n_spins_b"]
    swept = {"epsilon": len(set(config.epsilon_sweep)) > 1, "n_env": len(set(config.size_sweep)) > 1}
    fits = {}
    for name, xkey, ykey in SCALING_FITS:
        if not rows or ykey not in rows[0] or not swept[xkey]:
            continue
        fit = fit_scaling([r[xkey] for r in rows], [r[ykey] for r in rows])
        if fit is not None:
            fits[name] = fit
    return fits


def run_sweep(config: ExperimentConfig, cache_dir=None, workers: int | None = None) -> SweepResult:
    """Run every point of the sweep; failures are recorded and the sweep continues."""
    points = config.points()
    workers = workers or config.workers or os.cpu_count() or 1
    cache_dir = str(cache_dir) if cache_dir else None
    jobs = [(config, p, cache_dir) for p in points]
    if workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(points))) as pool:
            reports = list(pool.map(_point_worker, jobs))
    else:
        reports = [_point_worker(job) for job in jobs]
    failures = [r for r in reports if not isinstance(r, ComparisonReport)]
    return SweepResult(config, reports, failures, sweep_fits(config, reports))


def write_outputs(result, out_dir) -> dict:
    """Write report.json and sweep.csv; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(result, ComparisonReport):
        data = result.to_dict()
        rows = [{"index": 0, **result.to_row(tuple(result.diagnostics))}]
    else:
        data = result.to_dict()
        rows = result.rows()
    report_path = out / "report.json"
    report_path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    csv_path = out / "sweep.csv"
    diag.rows_to_csv(rows, csv_path)
    return {"report": report_path, "csv": csv_path}
