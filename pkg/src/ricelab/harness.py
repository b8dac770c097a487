"""Experiment harness: configs, batched empirical runs, predictions, verdicts.

An experiment pins down one model, one observation window, a list of levels,
and one empirical estimator.  Running it draws ``n_realizations`` independent
realizations (seeded per index, so results never depend on worker count),
measures the chosen level-set functional on each, evaluates the matching
prediction, and scores every level with a z-test at the configured threshold.
Reports serialize to JSON; the canonical form drops wall time so identical
(config, master_seed) pairs produce byte-identical documents.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import gammainc

from .engine import (
    RhsEvaluation,
    euler_char_expectation,
    kacrice_rhs,
    microlens_rhs,
    second_factorial_moment_rhs,
    shotnoise_rhs,
    weighted_kacrice_rhs,
)
from .errors import ConfigurationError, RicelabError
from .fields import (
    ChiSquareField,
    DeterministicField,
    GradientField,
    GradientFieldRealization,
    MicrolensModel,
    ShotNoiseModel,
    SpectralGaussian1D,
    SpectralGaussian2D,
    batch_coefficients,
    sample_realization,
    trig_basis_1d,
)
from .geometry import favard_measure
from .levelsets import count_roots_1d, count_roots_2d, local_time, nodal_length
from .modelspec import SCHEMA_VERSION, model_from_doc
from .rng import fanout_seed

ESTIMATORS = ("roots", "length", "weighted", "local_time", "euler", "moment2")

# model kinds each estimator accepts (doc "kind" strings)
_COMPAT = {
    "roots": {
        "spectral_gaussian_1d",
        "chi_square",
        "shot_noise",
        "microlens",
        "gradient_field",
    },
    "length": {"spectral_gaussian_2d"},
    "weighted": {"spectral_gaussian_1d", "gradient_field"},
    "local_time": {"spectral_gaussian_1d", "chi_square"},
    "euler": {"spectral_gaussian_1d", "spectral_gaussian_2d"},
    "moment2": {"spectral_gaussian_1d"},
}

# estimators whose levels live in the plane rather than on the line
_VECTOR_LEVEL_KINDS = {"microlens", "gradient_field"}

_ID_PATTERN = re.compile(r"^[A-Za-z0-9._-]+$")

MAX_PARITY_GRID = 1024


def _auto_grid(estimator: str, kind: str) -> int:
    if kind == "microlens":
        return 64
    if estimator == "length":
        return 512
    if estimator == "euler" and kind == "spectral_gaussian_2d":
        return 256
    if kind == "gradient_field":
        return 256
    return 2048


def _is_scalar(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(float(x))


def _as_plain(x):
    """Recursively strip numpy types so docs are plain JSON data."""
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return [_as_plain(v) for v in x.tolist()]
    if isinstance(x, Mapping):
        return {k: _as_plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_as_plain(v) for v in x]
    return x


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """One closed-pipeline comparison, fully determined by plain JSON data.

    ``levels`` are scalars, except for point-mass deflection models and
    gradient fields where each level is a 2-vector (source position, or the
    target value of the gradient).  ``grid`` of ``None`` picks an
    estimator-appropriate default.  ``weight`` applies to the "weighted"
    estimator only: "unit", "upcrossing", or {"kind": "index", "k": 0|1|2}.
    ``delta`` is the window half-width of the "local_time" estimator.
    ``region`` (deflection models only) is the prediction region; omitted, a
    centered disk large enough to contain every image is derived per level.
    ``n_lines`` > 0 adds a random-line length cross-check per realization.
    """

    experiment_id: str
    model: dict
    levels: list
    estimator: str
    n_realizations: int
    box: object = None
    grid: Optional[int] = None
    quadrature: Optional[int] = None
    inner_mc: int = 4096
    weight: object = None
    delta: Optional[float] = None
    p_max: int = 12
    rhs_delta: Optional[float] = None
    region: Optional[dict] = None
    n_lines: int = 0
    z_crit: float = 3.0
    abs_floor: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "experiment_id", str(self.experiment_id))
        for key in ("model", "levels", "box", "weight", "region"):
            object.__setattr__(self, key, _as_plain(getattr(self, key)))
        object.__setattr__(self, "n_realizations", int(self.n_realizations))
        object.__setattr__(self, "inner_mc", int(self.inner_mc))
        object.__setattr__(self, "p_max", int(self.p_max))
        object.__setattr__(self, "n_lines", int(self.n_lines))
        object.__setattr__(self, "z_crit", float(self.z_crit))
        object.__setattr__(self, "abs_floor", float(self.abs_floor))
        if self.grid is not None:
            object.__setattr__(self, "grid", int(self.grid))
        if self.quadrature is not None:
            object.__setattr__(self, "quadrature", int(self.quadrature))
        if self.delta is not None:
            object.__setattr__(self, "delta", float(self.delta))
        if self.rhs_delta is not None:
            object.__setattr__(self, "rhs_delta", float(self.rhs_delta))
        _validate_config(self)

    # -- serialization ------------------------------------------------------

    def to_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "experiment",
            "experiment_id": self.experiment_id,
            "model": _as_plain(self.model),
            "levels": _as_plain(self.levels),
            "estimator": self.estimator,
            "n_realizations": self.n_realizations,
            "box": _as_plain(self.box),
            "grid": self.grid,
            "quadrature": self.quadrature,
            "inner_mc": self.inner_mc,
            "weight": _as_plain(self.weight),
            "delta": self.delta,
            "p_max": self.p_max,
            "rhs_delta": self.rhs_delta,
            "region": _as_plain(self.region),
            "n_lines": self.n_lines,
            "z_crit": self.z_crit,
            "abs_floor": self.abs_floor,
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "ExperimentConfig":
        if not isinstance(doc, Mapping):
            raise ConfigurationError("experiment config must be a mapping")
        allowed = set(cls.__dataclass_fields__) | {"schema_version", "kind"}
        unknown = sorted(set(doc) - allowed)
        if unknown:
            raise ConfigurationError(f"unknown experiment config keys: {unknown}")
        if "kind" in doc and doc["kind"] != "experiment":
            raise ConfigurationError(f"not an experiment config: kind={doc['kind']!r}")
        kwargs = {k: doc[k] for k in cls.__dataclass_fields__ if k in doc}
        missing = [k for k in ("experiment_id", "model", "levels", "estimator",
                               "n_realizations") if k not in kwargs]
        if missing:
            raise ConfigurationError(f"experiment config missing keys: {missing}")
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
        return cls.from_doc(doc)


def _validate_config(cfg: ExperimentConfig) -> None:
    if not cfg.experiment_id or not _ID_PATTERN.match(cfg.experiment_id):
        raise ConfigurationError(
            "experiment_id must be nonempty and use only [A-Za-z0-9._-]")
    if cfg.estimator not in ESTIMATORS:
        raise ConfigurationError(
            f"unknown estimator {cfg.estimator!r}; choose one of {ESTIMATORS}")
    if cfg.n_realizations < 30:
        raise ConfigurationError(
            "need n_realizations >= 30 for a meaningful standard error")
    if cfg.inner_mc < 100:
        raise ConfigurationError("inner_mc must be >= 100")
    if cfg.grid is not None and cfg.grid < 2:
        raise ConfigurationError("grid must be >= 2")
    if cfg.quadrature is not None and cfg.quadrature < 2:
        raise ConfigurationError("quadrature must be >= 2")
    if cfg.p_max < 1:
        raise ConfigurationError("p_max must be >= 1")
    if cfg.z_crit <= 0:
        raise ConfigurationError("z_crit must be positive")
    if cfg.abs_floor < 0:
        raise ConfigurationError("abs_floor must be >= 0")
    if cfg.rhs_delta is not None and cfg.rhs_delta <= 0:
        raise ConfigurationError("rhs_delta must be positive")
    if cfg.n_lines != 0 and cfg.n_lines < 1000:
        raise ConfigurationError("n_lines is 0 (off) or >= 1000")

    if not isinstance(cfg.model, Mapping):
        raise ConfigurationError("model must be a serialized model document")
    model = model_from_doc(dict(cfg.model))
    kind = cfg.model.get("kind")
    if kind not in _COMPAT[cfg.estimator]:
        raise ConfigurationError(
            f"estimator {cfg.estimator!r} does not apply to model kind {kind!r}")

    levels = cfg.levels
    if not isinstance(levels, Sequence) or isinstance(levels, (str, bytes)) or not levels:
        raise ConfigurationError("levels must be a nonempty list")
    if kind in _VECTOR_LEVEL_KINDS:
        for lvl in levels:
            ok = (isinstance(lvl, Sequence) and len(lvl) == 2
                  and all(_is_scalar(v) for v in lvl))
            if not ok:
                raise ConfigurationError(
                    f"model kind {kind!r} takes planar levels [u1, u2], got {lvl!r}")
    else:
        for lvl in levels:
            if not _is_scalar(lvl):
                raise ConfigurationError(f"levels must be finite scalars, got {lvl!r}")
        if kind == "chi_square" and min(levels) <= 0.0:
            raise ConfigurationError(
                "a squared-norm field is positive: levels must satisfy u > 0")
        if kind == "shot_noise" and any(float(u) == 0.0 for u in levels):
            raise ConfigurationError(
                "the shot-noise value distribution has an atom at 0; pick u != 0")

    if cfg.box is None:
        if kind != "microlens":
            raise ConfigurationError("box is required (omitting it is allowed "
                                     "only for point-mass deflection models)")
    else:
        _check_box(cfg.box, model.D)
        if kind == "shot_noise":
            lo, hi = float(cfg.box[0]), float(cfg.box[1])
            dlo, dhi = model.domain
            if lo < dlo or hi > dhi:
                raise ConfigurationError(
                    f"box [{lo}, {hi}] exceeds the model domain [{dlo}, {dhi}]")

    if cfg.estimator == "local_time":
        if cfg.delta is None or cfg.delta <= 0:
            raise ConfigurationError("local_time needs a window half-width delta > 0")
        if kind == "chi_square" and cfg.delta >= min(float(u) for u in levels):
            raise ConfigurationError(
                "local_time window [u - delta, u + delta] must stay positive "
                "for a squared-norm field")
    if cfg.estimator == "weighted":
        _check_weight(cfg.weight, kind)
    elif cfg.weight is not None:
        raise ConfigurationError("weight applies to the 'weighted' estimator only")
    if cfg.region is not None:
        if kind != "microlens":
            raise ConfigurationError("region applies to deflection models only")
        _check_region(cfg.region)


def _check_box(box, D: int) -> None:
    try:
        arr = np.asarray(box, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"box {box!r} is not numeric") from exc
    if D == 1:
        if arr.shape != (2,) or not arr[0] < arr[1]:
            raise ConfigurationError(f"1D box must be [lo, hi] with lo < hi, got {box!r}")
    else:
        if arr.shape != (2, 2) or not np.all(arr[:, 0] < arr[:, 1]):
            raise ConfigurationError(
                f"2D box must be [[lo0, hi0], [lo1, hi1]], got {box!r}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError("box bounds must be finite")


def _check_weight(weight, kind: str) -> None:
    if weight in ("unit", "upcrossing"):
        if kind != "spectral_gaussian_1d":
            raise ConfigurationError(f"weight {weight!r} needs a scalar line field")
        return
    if isinstance(weight, Mapping) and weight.get("kind") == "index":
        if kind != "gradient_field":
            raise ConfigurationError("index weights need a gradient field")
        if weight.get("k") not in (0, 1, 2):
            raise ConfigurationError("index weight k must be 0, 1, or 2")
        return
    raise ConfigurationError(
        f"weight must be 'unit', 'upcrossing', or {{'kind': 'index', 'k': k}}; "
        f"got {weight!r}")


def _check_region(region) -> None:
    if isinstance(region, Mapping):
        if region.get("kind") != "disk":
            raise ConfigurationError(f"unknown region kind {region.get('kind')!r}")
        center = np.asarray(region.get("center", ()), dtype=float)
        if center.shape != (2,) or not np.all(np.isfinite(center)):
            raise ConfigurationError("disk region needs a finite 2-vector center")
        if not (float(region.get("radius", 0.0)) > 0.0):
            raise ConfigurationError("disk region needs a positive radius")
        return
    _check_box(region, 2)


def default_image_region(model: MicrolensModel, y) -> dict:
    """Centered disk guaranteed to contain every image of source ``y``.

    Outside radius r with |c| r^2 - (|c| R + |y|) r - (2 m N - |y| R) > 0 the
    deflection dominates the total pull of the masses toward any point of the
    configuration disk, so no solution exists; the returned disk takes the
    positive root of the quadratic plus a 10% margin.
    """
    c = abs(model.c)
    yn = float(np.hypot(float(y[0]), float(y[1])))
    b = c * model.R + yn
    extra = max(2.0 * model.m * model.n_stars - yn * model.R, 0.0)
    r = (b + math.sqrt(b * b + 4.0 * c * extra)) / (2.0 * c)
    return {"kind": "disk", "center": [0.0, 0.0], "radius": 1.1 * r}


def _lens_geometry(cfg: ExperimentConfig, model: MicrolensModel, level):
    """Resolve (region, search box) for one source position."""
    region = cfg.region
    if region is None:
        region = default_image_region(model, level)
    if isinstance(region, Mapping):
        cx, cy = (float(v) for v in region["center"])
        rad = float(region["radius"])
        bound = [[cx - rad, cx + rad], [cy - rad, cy + rad]]
    else:
        arr = np.asarray(region, dtype=float)
        bound = arr.tolist()
    if cfg.box is not None:
        box = np.asarray(cfg.box, dtype=float)
    else:
        # pad so region-boundary images stay strictly inside the search box
        box = np.asarray(bound, dtype=float)
        pad = 0.02 * np.max(box[:, 1] - box[:, 0])
        box[:, 0] -= pad
        box[:, 1] += pad
    return region, box


def _region_mask(points: np.ndarray, region) -> np.ndarray:
    if points.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    if isinstance(region, Mapping):
        center = np.asarray(region["center"], dtype=float)
        rad = float(region["radius"])
        return np.sum((points - center) ** 2, axis=1) <= rad * rad
    arr = np.asarray(region, dtype=float)
    return np.all((points >= arr[:, 0]) & (points <= arr[:, 1]), axis=1)


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------


def verdict(lhs_mean: float, lhs_se: float, rhs_value: float, rhs_error: float,
            z_crit: float = 3.0, abs_floor: float = 1e-9) -> tuple:
    """Score one comparison; returns (passed, z).

    Both error channels combine in quadrature; the absolute floor keeps
    exact-vs-exact comparisons from failing on roundoff when both standard
    errors vanish.
    """
    diff = abs(float(lhs_mean) - float(rhs_value))
    scale = math.hypot(float(lhs_se), float(rhs_error))
    passed = diff <= z_crit * scale + abs_floor
    if scale > 0.0:
        z = diff / scale
    else:
        z = 0.0 if diff <= abs_floor else math.inf
    return bool(passed), float(z)


@dataclass(frozen=True)
class LevelRow:
    """Per-level comparison: empirical mean vs prediction with both errors."""

    level: object
    lhs_mean: float
    lhs_se: float
    rhs_value: float
    rhs_quadrature_error: float
    rhs_mc_error: float
    z_score: float
    passed: bool

    @property
    def rhs_total_error(self) -> float:
        return self.rhs_quadrature_error + self.rhs_mc_error

    def to_doc(self) -> dict:
        return {
            "level": _as_plain(self.level),
            "lhs_mean": self.lhs_mean,
            "lhs_se": self.lhs_se,
            "rhs_value": self.rhs_value,
            "rhs_quadrature_error": self.rhs_quadrature_error,
            "rhs_mc_error": self.rhs_mc_error,
            "rhs_total_error": self.rhs_total_error,
            "z_score": self.z_score,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class ExperimentReport:
    """Everything one run produced, JSON-ready.

    ``canonical_doc`` omits wall time, so two runs with the same config and
    master seed serialize to byte-identical documents regardless of worker
    count or machine speed.
    """

    config: ExperimentConfig
    master_seed: int
    rows: tuple
    extras: dict
    passed: bool
    wall_time_s: float

    def canonical_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "experiment_report",
            "experiment_id": self.config.experiment_id,
            "master_seed": self.master_seed,
            "config": self.config.to_doc(),
            "rows": [r.to_doc() for r in self.rows],
            "extras": _as_plain(self.extras),
            "passed": self.passed,
        }

    def to_doc(self) -> dict:
        doc = self.canonical_doc()
        doc["wall_time_s"] = self.wall_time_s
        return doc

    def to_json(self, canonical: bool = False) -> str:
        doc = self.canonical_doc() if canonical else self.to_doc()
        return json.dumps(doc, indent=2, sort_keys=True)

    def write(self, path: str) -> str:
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")
        return path

    @property
    def max_abs_z(self) -> float:
        return max((r.z_score for r in self.rows), default=0.0)

    def summary_lines(self) -> list:
        out = []
        for r in self.rows:
            tag = "pass" if r.passed else "FAIL"
            out.append(
                f"{self.config.experiment_id} level={_fmt_level(r.level)} "
                f"lhs={r.lhs_mean:.6g}+-{r.lhs_se:.2g} rhs={r.rhs_value:.6g}"
                f"+-{r.rhs_total_error:.2g} z={r.z_score:.2f} {tag}")
        return out


def _fmt_level(level) -> str:
    if isinstance(level, (list, tuple)):
        return "(" + ",".join(f"{float(v):g}" for v in level) + ")"
    return f"{float(level):g}"


# ---------------------------------------------------------------------------
# Empirical side (chunked; seeds depend on the global index only)
# ---------------------------------------------------------------------------

_CORPUS_BLOCK = 256


def _chunk_lhs(config_doc: dict, master_seed: int, lo: int, hi: int) -> dict:
    """Measure realizations lo..hi-1; picklable for process pools."""
    cfg = ExperimentConfig.from_doc(config_doc)
    model = model_from_doc(dict(cfg.model))
    kind = cfg.model["kind"]
    seeds = [fanout_seed(master_seed, cfg.experiment_id, i) for i in range(lo, hi)]
    if cfg.estimator in ("roots", "weighted", "moment2"):
        if kind in ("spectral_gaussian_1d", "chi_square"):
            return _corpus_chunk(cfg, model, seeds)
        if kind == "shot_noise":
            return _shotnoise_chunk(cfg, model, seeds)
        if kind == "microlens":
            return _microlens_chunk(cfg, model, seeds)
        if kind == "gradient_field":
            return _gradient_roots_chunk(cfg, model, seeds)
    if cfg.estimator == "length":
        return _length_chunk(cfg, model, seeds, master_seed, lo)
    if cfg.estimator == "local_time":
        return _local_time_chunk(cfg, model, seeds)
    if cfg.estimator == "euler":
        if kind == "spectral_gaussian_1d":
            return _euler_line_chunk(cfg, model, seeds)
        return _euler_plane_chunk(cfg, model, seeds)
    raise ConfigurationError(
        f"no empirical path for estimator {cfg.estimator!r} on {kind!r}")


def _grid_of(cfg: ExperimentConfig) -> int:
    return cfg.grid if cfg.grid is not None else _auto_grid(
        cfg.estimator, cfg.model["kind"])


def _corpus_values(model, seeds, ts) -> np.ndarray:
    """(m, T) value matrix; rows match sample_realization exactly."""
    if isinstance(model, SpectralGaussian1D):
        basis = trig_basis_1d(model, ts)
        return batch_coefficients(model, seeds) @ basis
    if isinstance(model, ChiSquareField):
        base = model.base
        basis = trig_basis_1d(base, ts)
        comp_seeds = [fanout_seed(s, "chi2-component", j)
                      for s in seeds for j in range(model.n)]
        comp = batch_coefficients(base, comp_seeds) @ basis
        comp = comp.reshape(len(seeds), model.n, ts.size)
        return np.sum(comp**2, axis=1)
    raise ConfigurationError("batched values exist for line-field corpora only")


def _sign_change_counts(vals: np.ndarray, u: float) -> np.ndarray:
    v = vals - u
    return np.sum(v[:, :-1] * v[:, 1:] < 0.0, axis=1)


def _upcrossing_counts(vals: np.ndarray, u: float) -> np.ndarray:
    v = vals - u
    return np.sum((v[:, :-1] < 0.0) & (v[:, 1:] > 0.0), axis=1)


def _corpus_chunk(cfg, model, seeds) -> dict:
    lo, hi = float(cfg.box[0]), float(cfg.box[1])
    ts = np.linspace(lo, hi, _grid_of(cfg))
    up = cfg.estimator == "weighted" and cfg.weight == "upcrossing"
    out = np.empty((len(seeds), len(cfg.levels)))
    for blo in range(0, len(seeds), _CORPUS_BLOCK):
        block = seeds[blo:blo + _CORPUS_BLOCK]
        vals = _corpus_values(model, block, ts)
        for j, u in enumerate(cfg.levels):
            counts = (_upcrossing_counts(vals, float(u)) if up
                      else _sign_change_counts(vals, float(u)))
            out[blo:blo + len(block), j] = counts
    if cfg.estimator == "moment2":
        out = out * (out - 1.0)
    return {"values": out, "extras": {}}


def _shotnoise_chunk(cfg, model, seeds) -> dict:
    lo, hi = float(cfg.box[0]), float(cfg.box[1])
    ts = np.linspace(lo, hi, _grid_of(cfg))
    out = np.empty((len(seeds), len(cfg.levels)))
    for i, s in enumerate(seeds):
        vals = sample_realization(model, s).value(ts)[None, :]
        for j, u in enumerate(cfg.levels):
            out[i, j] = _sign_change_counts(vals, float(u))[0]
    return {"values": out, "extras": {}}


def _count_images(sys, box, y, region, grid0: int):
    """Escalating image count: double the seed grid until parities balance."""
    target = 1 - sys.star_positions.shape[0]
    g = grid0
    while True:
        roots = count_roots_2d(sys, box, y, grid=g)
        if roots.points.shape[0]:
            jac = np.asarray(sys.jacobian(roots.points)).reshape(-1, 2, 2)
            dets = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
            parity = int(np.sum(np.sign(dets)))
        else:
            parity = 0
        resolved = parity == target
        if resolved or g >= MAX_PARITY_GRID:
            count = int(np.sum(_region_mask(roots.points, region)))
            return count, g > grid0, not resolved
        g *= 2


def _microlens_chunk(cfg, model, seeds) -> dict:
    grid0 = _grid_of(cfg)
    geoms = [_lens_geometry(cfg, model, lvl) for lvl in cfg.levels]
    out = np.empty((len(seeds), len(cfg.levels)))
    escalations = 0
    unresolved = 0
    for i, s in enumerate(seeds):
        sys = sample_realization(model, s)
        for j, lvl in enumerate(cfg.levels):
            region, box = geoms[j]
            y = np.asarray(lvl, dtype=float)
            count, escalated, bad = _count_images(sys, box, y, region, grid0)
            out[i, j] = count
            escalations += escalated
            unresolved += bad
    return {"values": out,
            "extras": {"parity_escalations": escalations,
                       "parity_unresolved": unresolved}}


def _gradient_roots_chunk(cfg, model, seeds) -> dict:
    grid = _grid_of(cfg)
    k_sel = cfg.weight["k"] if cfg.estimator == "weighted" else None
    out = np.empty((len(seeds), len(cfg.levels)))
    for i, s in enumerate(seeds):
        real = sample_realization(model, s)
        for j, lvl in enumerate(cfg.levels):
            u = np.asarray(lvl, dtype=float)
            roots = count_roots_2d(real, cfg.box, u, grid=grid)
            if k_sel is None:
                out[i, j] = roots.points.shape[0]
            else:
                out[i, j] = int(np.sum(_hessian_index(real.scalar,
                                                      roots.points) == k_sel))
    return {"values": out, "extras": {}}


def _hessian_index(scalar, points: np.ndarray) -> np.ndarray:
    """Negative-eigenvalue count of the Hessian at each point (2D)."""
    if points.shape[0] == 0:
        return np.zeros(0, dtype=int)
    h = np.asarray(scalar.hessian(points)).reshape(-1, 2, 2)
    det = h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] * h[:, 1, 0]
    trace = h[:, 0, 0] + h[:, 1, 1]
    idx = np.ones(points.shape[0], dtype=int)  # saddles: det < 0
    idx[(det > 0) & (trace > 0)] = 0
    idx[(det > 0) & (trace < 0)] = 2
    return idx


def _length_chunk(cfg, model, seeds, master_seed, lo) -> dict:
    grid = _grid_of(cfg)
    nl = len(cfg.levels)
    out = np.empty((len(seeds), nl))
    extras = {}
    if cfg.n_lines:
        extras = {"favard_within": np.zeros(nl, dtype=int),
                  "favard_sum": np.zeros(nl),
                  "favard_sumsq": np.zeros(nl),
                  "favard_n": 0}
    for i, s in enumerate(seeds):
        real = sample_realization(model, s)
        for j, u in enumerate(cfg.levels):
            curve = nodal_length(real, cfg.box, float(u), grid=grid)
            out[i, j] = curve.length
            if cfg.n_lines:
                fseed = fanout_seed(master_seed,
                                    f"{cfg.experiment_id}#lines{j}", lo + i)
                est, se = favard_measure(curve.polyline, cfg.n_lines, fseed)
                if abs(est - curve.length) <= 3.0 * se:
                    extras["favard_within"][j] += 1
                extras["favard_sum"][j] += est
                extras["favard_sumsq"][j] += est * est
        if cfg.n_lines:
            extras["favard_n"] += 1
    return {"values": out, "extras": extras}


def _local_time_chunk(cfg, model, seeds) -> dict:
    grid = _grid_of(cfg)
    out = np.empty((len(seeds), len(cfg.levels)))
    for i, s in enumerate(seeds):
        real = sample_realization(model, s)
        for j, u in enumerate(cfg.levels):
            out[i, j] = local_time(real, cfg.box, float(u), cfg.delta, grid=grid)
    return {"values": out, "extras": {}}


def _euler_line_chunk(cfg, model, seeds) -> dict:
    """Signed critical-point count above each level, d = 1.

    Critical points of index i carry (-1)^(1 - i): interior maxima above the
    level +1, interior minima -1.
    """
    grid = _grid_of(cfg)
    out = np.empty((len(seeds), len(cfg.levels)))
    for i, s in enumerate(seeds):
        real = sample_realization(model, s)
        slope = DeterministicField(value_fn=real.derivative,
                                   jacobian_fn=real.second_derivative, d=1, D=1)
        crit = count_roots_1d(slope, cfg.box, 0.0, grid=grid)
        pts = crit.points.ravel()
        if pts.size:
            vals = np.asarray(real.value(pts), dtype=float)
            curv = np.asarray(real.second_derivative(pts), dtype=float)
            signs = -np.sign(curv)
        for j, u in enumerate(cfg.levels):
            out[i, j] = float(np.sum(signs[vals > float(u)])) if pts.size else 0.0
    return {"values": out, "extras": {}}


def _euler_plane_chunk(cfg, model, seeds) -> dict:
    """Signed critical-point count above each level, d = 2.

    Weight (-1)^(2 - i) = sign(det Hessian): extrema +1, saddles -1.
    """
    grid = _grid_of(cfg)
    grad_model = GradientField(model)
    out = np.empty((len(seeds), len(cfg.levels)))
    for i, s in enumerate(seeds):
        scalar = sample_realization(model, s)
        grad = GradientFieldRealization(grad_model, int(s), scalar)
        crit = count_roots_2d(grad, cfg.box, (0.0, 0.0), grid=grid)
        pts = crit.points
        if pts.shape[0]:
            h = np.asarray(scalar.hessian(pts)).reshape(-1, 2, 2)
            det = h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] * h[:, 1, 0]
            signs = np.sign(det)
            vals = np.asarray(scalar.value(pts), dtype=float)
        for j, u in enumerate(cfg.levels):
            out[i, j] = (float(np.sum(signs[vals > float(u)]))
                         if pts.shape[0] else 0.0)
    return {"values": out, "extras": {}}


# ---------------------------------------------------------------------------
# Prediction side
# ---------------------------------------------------------------------------


def _gauss_cdf(x: float, var: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0 * var)))


def _local_time_rhs(model, box, u: float, delta: float) -> RhsEvaluation:
    """Exact prediction vol * P(|X - u| <= delta) / (2 delta) (stationary)."""
    lo, hi = float(box[0]), float(box[1])
    vol = hi - lo
    if isinstance(model, SpectralGaussian1D):
        prob = (_gauss_cdf(u + delta, model.lambda0)
                - _gauss_cdf(u - delta, model.lambda0))
    elif isinstance(model, ChiSquareField):
        half = 0.5 * model.n
        prob = float(gammainc(half, (u + delta) / 2.0)
                     - gammainc(half, max(u - delta, 0.0) / 2.0))
    else:
        raise ConfigurationError(
            f"no occupation-density prediction for {type(model).__name__}")
    return RhsEvaluation(value=vol * prob / (2.0 * delta),
                         detail={"path": "closed-form-cdf"})


def _rhs_for_level(cfg: ExperimentConfig, model, level, seed: int):
    est = cfg.estimator
    kind = cfg.model["kind"]
    if est == "local_time":
        return _local_time_rhs(model, cfg.box, float(level), cfg.delta)
    if est == "euler":
        return euler_char_expectation(model, cfg.box, float(level),
                                      quadrature=cfg.quadrature,
                                      inner_mc=cfg.inner_mc, seed=seed)
    if est == "moment2":
        return second_factorial_moment_rhs(model, cfg.box, float(level),
                                           quadrature=cfg.quadrature,
                                           inner_mc=cfg.inner_mc, seed=seed)
    if kind == "shot_noise":
        return shotnoise_rhs(model, cfg.box, float(level), p_max=cfg.p_max,
                             inner_mc=cfg.inner_mc, seed=seed,
                             delta=cfg.rhs_delta)
    if kind == "microlens":
        region, _box = _lens_geometry(cfg, model, level)
        return microlens_rhs(model, np.asarray(level, dtype=float), region,
                             quadrature=cfg.quadrature,
                             inner_mc=cfg.inner_mc, seed=seed)
    u = np.asarray(level, dtype=float) if kind == "gradient_field" else float(level)
    if est == "weighted":
        return weighted_kacrice_rhs(model, cfg.box, u, cfg.weight,
                                    inner_mc=cfg.inner_mc, seed=seed)
    return kacrice_rhs(model, cfg.box, u, quadrature=cfg.quadrature,
                       inner_mc=cfg.inner_mc, seed=seed)


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def _chunk_bounds(n: int) -> list:
    """Split [0, n) into ranges that depend on n alone.

    Worker count must not influence chunking: partial sums of extras are
    floating-point, so identical chunks are what make reports byte-identical
    across worker counts.
    """
    n_chunks = max(1, min(16, n // 30))
    size = -(-n // n_chunks)
    return [(lo, min(lo + size, n)) for lo in range(0, n, size)]


def _merge_extras(parts: list) -> dict:
    merged = {}
    for part in parts:
        for key, val in part.items():
            if key in merged:
                merged[key] = merged[key] + val
            else:
                merged[key] = val
    return merged


def _finalize_extras(cfg: ExperimentConfig, extras: dict) -> dict:
    out = {k: _as_plain(v) for k, v in extras.items()}
    if cfg.n_lines and "favard_sum" in extras:
        n = int(extras["favard_n"])
        mean = extras["favard_sum"] / n
        var = (extras["favard_sumsq"] - n * mean**2) / (n - 1)
        out["favard_mean"] = _as_plain(mean)
        out["favard_se"] = _as_plain(np.sqrt(np.maximum(var, 0.0) / n))
    return out


def _measure_values(config: ExperimentConfig, master_seed: int,
                    workers: int) -> tuple:
    doc = config.to_doc()
    bounds = _chunk_bounds(config.n_realizations)
    workers = max(1, int(workers))
    if workers == 1 or len(bounds) == 1:
        parts = [_chunk_lhs(doc, master_seed, lo, hi) for lo, hi in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_chunk_lhs, doc, master_seed, lo, hi)
                       for lo, hi in bounds]
            parts = [f.result() for f in futures]
    values = np.vstack([p["values"] for p in parts])
    extras = _finalize_extras(config, _merge_extras([p["extras"] for p in parts]))
    return values, extras


def run_experiment(config, master_seed: int = 0, workers: int = 1) -> ExperimentReport:
    """Run one closed-pipeline experiment and score every level."""
    if isinstance(config, Mapping) and not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_doc(config)
    t0 = time.perf_counter()
    n = config.n_realizations
    values, extras = _measure_values(config, master_seed, workers)
    model = model_from_doc(dict(config.model))
    rows = []
    for j, level in enumerate(config.levels):
        seed = fanout_seed(master_seed, config.experiment_id + "#rhs", j)
        rhs = _rhs_for_level(config, model, level, seed)
        col = values[:, j]
        lhs_mean = float(col.mean())
        lhs_se = float(col.std(ddof=1) / math.sqrt(n))
        passed, z = verdict(lhs_mean, lhs_se, rhs.value,
                            rhs.quadrature_error + rhs.mc_error,
                            config.z_crit, config.abs_floor)
        rows.append(LevelRow(
            level=level, lhs_mean=lhs_mean, lhs_se=lhs_se,
            rhs_value=float(rhs.value),
            rhs_quadrature_error=float(rhs.quadrature_error),
            rhs_mc_error=float(rhs.mc_error), z_score=z, passed=passed))
    return ExperimentReport(
        config=config, master_seed=int(master_seed), rows=tuple(rows),
        extras=extras, passed=all(r.passed for r in rows),
        wall_time_s=time.perf_counter() - t0)


def measure_only(config, master_seed: int = 0, workers: int = 1) -> dict:
    """Empirical side alone: per-level corpus means without a prediction."""
    if isinstance(config, Mapping):
        config = ExperimentConfig.from_doc(config)
    n = config.n_realizations
    values, extras = _measure_values(config, master_seed, workers)
    rows = []
    for j, level in enumerate(config.levels):
        col = values[:, j]
        rows.append({"level": _as_plain(level),
                     "lhs_mean": float(col.mean()),
                     "lhs_se": float(col.std(ddof=1) / math.sqrt(n))})
    return {"schema_version": SCHEMA_VERSION, "kind": "measurement",
            "experiment_id": config.experiment_id, "master_seed": int(master_seed),
            "n_realizations": n, "rows": rows, "extras": _as_plain(extras)}


def predict_only(config, master_seed: int = 0) -> dict:
    """Prediction side alone: per-level values with both error channels."""
    if isinstance(config, Mapping):
        config = ExperimentConfig.from_doc(config)
    model = model_from_doc(dict(config.model))
    rows = []
    for j, level in enumerate(config.levels):
        seed = fanout_seed(master_seed, config.experiment_id + "#rhs", j)
        rhs = _rhs_for_level(config, model, level, seed)
        rows.append({"level": _as_plain(level),
                     "rhs_value": float(rhs.value),
                     "rhs_quadrature_error": float(rhs.quadrature_error),
                     "rhs_mc_error": float(rhs.mc_error)})
    return {"schema_version": SCHEMA_VERSION, "kind": "prediction",
            "experiment_id": config.experiment_id, "master_seed": int(master_seed),
            "rows": rows}


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


@dataclass
class SuiteResult:
    """Per-experiment outcomes of a manifest run."""

    entries: list = field(default_factory=list)

    @property
    def n_pass(self) -> int:
        return sum(e["status"] == "pass" for e in self.entries)

    @property
    def n_fail(self) -> int:
        return sum(e["status"] == "fail" for e in self.entries)

    @property
    def n_error(self) -> int:
        return sum(e["status"] == "error" for e in self.entries)

    def summary_rows(self) -> list:
        rows = []
        for e in self.entries:
            rep = e.get("report")
            rows.append({
                "experiment_id": e["experiment_id"],
                "status": e["status"],
                "levels": len(rep.rows) if rep else 0,
                "max_abs_z": f"{rep.max_abs_z:.4f}" if rep else "",
                "wall_time_s": f"{rep.wall_time_s:.3f}" if rep else "",
                "detail": e.get("detail", ""),
            })
        return rows

    def write_summary_csv(self, path: str) -> str:
        rows = self.summary_rows()
        names = ["experiment_id", "status", "levels", "max_abs_z",
                 "wall_time_s", "detail"]
        with open(path, "w", newline="") as fh:
            fh.write(f"# ricelab suite summary schema_version={SCHEMA_VERSION}\n")
            writer = csv.DictWriter(fh, fieldnames=names)
            writer.writeheader()
            writer.writerows(rows)
        return path


def load_manifest(doc) -> list:
    """Normalize a manifest (mapping with "experiments", or a bare list)."""
    if isinstance(doc, Mapping):
        entries = doc.get("experiments")
    else:
        entries = doc
    if not isinstance(entries, Sequence) or isinstance(entries, (str, bytes)):
        raise ConfigurationError('manifest must be a list or carry an '
                                 '"experiments" list')
    entries = list(entries)
    if not entries:
        raise ConfigurationError("manifest lists no experiments")
    return entries


def run_suite(manifest, master_seed: int = 0, workers: int = 1,
              out_dir: Optional[str] = None) -> SuiteResult:
    """Run every experiment in a manifest, capturing per-entry failures.

    A broken entry is recorded with status "error" and does not stop the
    rest.  With ``out_dir`` set, each report lands in
    ``<out_dir>/<experiment_id>.report.json`` next to ``suite_summary.csv``.
    """
    entries = load_manifest(manifest)
    ids = [e["experiment_id"] for e in entries
           if isinstance(e, Mapping) and "experiment_id" in e]
    dupes = sorted({x for x in ids if ids.count(x) > 1})
    if dupes:
        raise ConfigurationError(
            f"duplicate experiment ids in manifest: {dupes}")
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    result = SuiteResult()
    for i, doc in enumerate(entries):
        exp_id = doc.get("experiment_id", f"entry-{i}") if isinstance(
            doc, Mapping) else f"entry-{i}"
        entry = {"experiment_id": str(exp_id), "detail": ""}
        try:
            report = run_experiment(doc, master_seed=master_seed, workers=workers)
            entry["report"] = report
            entry["status"] = "pass" if report.passed else "fail"
            if out_dir is not None:
                path = f"{out_dir}/{report.config.experiment_id}.report.json"
                entry["report_path"] = report.write(path)
        except RicelabError as exc:
            entry["status"] = "error"
            entry["detail"] = f"{type(exc).__name__}: {exc}"
        result.entries.append(entry)
    if out_dir is not None:
        result.write_summary_csv(f"{out_dir}/suite_summary.csv")
    return result


# ---------------------------------------------------------------------------
# Plot data
# ---------------------------------------------------------------------------


def emit_plot_data(reports: Sequence, quantity: str, path: str) -> str:
    """Flatten reports of one quantity into a plot-ready CSV.

    Columns: level, empirical mean, half-width of the +-z_crit band, the
    prediction, and its total error.  Mixing estimators or model kinds is a
    configuration error, as are planar levels (no natural axis order).
    """
    reports = list(reports)
    if not reports:
        raise ConfigurationError("no reports to plot")
    kinds = {r.config.model["kind"] for r in reports}
    estimators = {r.config.estimator for r in reports}
    if estimators != {quantity}:
        raise ConfigurationError(
            f"reports measure {sorted(estimators)}, not {quantity!r}")
    if len(kinds) != 1:
        raise ConfigurationError(f"reports mix model kinds {sorted(kinds)}")
    rows = []
    for rep in reports:
        for r in rep.rows:
            if not _is_scalar(r.level):
                raise ConfigurationError("plot data needs scalar levels")
            rows.append((float(r.level), r.lhs_mean,
                         rep.config.z_crit * r.lhs_se, r.rhs_value,
                         r.rhs_total_error))
    rows.sort(key=lambda t: t[0])
    with open(path, "w", newline="") as fh:
        fh.write(f"# ricelab plot data schema_version={SCHEMA_VERSION} "
                 f"quantity={quantity} model={next(iter(kinds))}\n")
        writer = csv.writer(fh)
        writer.writerow(["level", "lhs_mean", "lhs_halfwidth",
                         "rhs_value", "rhs_error"])
        writer.writerows(rows)
    return path
