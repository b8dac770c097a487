"""JSON (de)serialization of field models.

The document format is versioned and closed: every document carries
schema_version and kind, and any unknown field is a configuration error.

kinds and their fields
----------------------
spectral_gaussian_1d: frequencies [floats], amplitudes [floats]
spectral_gaussian_2d: wavevectors [[x, y], ...], amplitudes [floats]
gradient_field      : base {spectral_gaussian_2d document}
chi_square          : n int, base {spectral gaussian document}
shot_noise          : eta, intensity, domain [lo, hi], beta_low, beta_high
microlens           : kappa_c, gamma, m, n_stars int, R
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ConfigurationError
from .fields import (
    ChiSquareField,
    GradientField,
    MicrolensModel,
    ShotNoiseModel,
    SpectralGaussian1D,
    SpectralGaussian2D,
)

SCHEMA_VERSION = 1

_FIELDS = {
    "spectral_gaussian_1d": {"frequencies", "amplitudes"},
    "spectral_gaussian_2d": {"wavevectors", "amplitudes"},
    "gradient_field": {"base"},
    "chi_square": {"n", "base"},
    "shot_noise": {"eta", "intensity", "domain", "beta_low", "beta_high"},
    "microlens": {"kappa_c", "gamma", "m", "n_stars", "R"},
}


def model_to_doc(model) -> dict:
    """Serialize a model to a plain JSON-ready dict."""
    if isinstance(model, SpectralGaussian1D):
        body = {
            "kind": "spectral_gaussian_1d",
            "frequencies": model.frequencies.tolist(),
            "amplitudes": model.amplitudes.tolist(),
        }
    elif isinstance(model, SpectralGaussian2D):
        body = {
            "kind": "spectral_gaussian_2d",
            "wavevectors": model.wavevectors.tolist(),
            "amplitudes": model.amplitudes.tolist(),
        }
    elif isinstance(model, GradientField):
        body = {"kind": "gradient_field", "base": model_to_doc(model.base)}
    elif isinstance(model, ChiSquareField):
        body = {"kind": "chi_square", "n": model.n, "base": model_to_doc(model.base)}
    elif isinstance(model, ShotNoiseModel):
        body = {
            "kind": "shot_noise",
            "eta": model.eta,
            "intensity": model.intensity,
            "domain": list(model.domain),
            "beta_low": model.beta_low,
            "beta_high": model.beta_high,
        }
    elif isinstance(model, MicrolensModel):
        body = {
            "kind": "microlens",
            "kappa_c": model.kappa_c,
            "gamma": model.gamma,
            "m": model.m,
            "n_stars": model.n_stars,
            "R": model.R,
        }
    else:
        raise ConfigurationError(f"cannot serialize model type {type(model).__name__}")
    body["schema_version"] = SCHEMA_VERSION
    return body


def model_from_doc(doc: dict):
    """Parse a model document; unknown kinds or fields are configuration errors."""
    if not isinstance(doc, dict):
        raise ConfigurationError("model document must be a JSON object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported schema_version {version!r}")
    kind = doc.get("kind")
    if kind not in _FIELDS:
        raise ConfigurationError(f"unknown model kind {kind!r}")
    extra = set(doc) - _FIELDS[kind] - {"kind", "schema_version"}
    if extra:
        raise ConfigurationError(f"unknown fields for {kind}: {sorted(extra)}")
    missing = _FIELDS[kind] - set(doc)
    if missing:
        raise ConfigurationError(f"missing fields for {kind}: {sorted(missing)}")
    try:
        if kind == "spectral_gaussian_1d":
            return SpectralGaussian1D(doc["frequencies"], doc["amplitudes"])
        if kind == "spectral_gaussian_2d":
            return SpectralGaussian2D(np.asarray(doc["wavevectors"]), doc["amplitudes"])
        if kind == "gradient_field":
            base = model_from_doc(doc["base"])
            if not isinstance(base, SpectralGaussian2D):
                raise ConfigurationError("gradient_field base must be spectral_gaussian_2d")
            return GradientField(base)
        if kind == "chi_square":
            return ChiSquareField(doc["n"], model_from_doc(doc["base"]))
        if kind == "shot_noise":
            return ShotNoiseModel(
                doc["eta"],
                doc["intensity"],
                tuple(doc["domain"]),
                doc["beta_low"],
                doc["beta_high"],
            )
        if kind == "microlens":
            return MicrolensModel(doc["kappa_c"], doc["gamma"], doc["m"], doc["n_stars"], doc["R"])
    except ConfigurationError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigurationError(f"malformed {kind} document: {exc}") from exc
    raise AssertionError("unreachable")


def model_to_json(model) -> str:
    return json.dumps(model_to_doc(model), indent=2, sort_keys=True)


def model_from_json(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON: {exc}") from exc
    return model_from_doc(doc)
