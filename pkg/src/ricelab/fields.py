"""Random field families with exact pointwise evaluation.

Every family here evaluates a frozen realization X(t) and its Jacobian
analytically, with no interpolation anywhere: Gaussian fields are finite
random trigonometric sums, chi-square fields are norm-squares of those,
shot noise is a finite sum of kernel bumps, and the microlensing
deflection is a rational map.  Exact derivatives are what make level-set
counts and the integral formulas they are checked against commensurable.

Realizations are immutable and reentrant; all randomness flows through
counter-based streams keyed by (seed, tag), see :mod:`ricelab.rng`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CapabilityError, ConfigurationError, DomainError, SingularityError
from .rng import fanout_seed, stream

SCHEMA_VERSION = 1

# Evaluation matrices are chunked to roughly this many doubles.
_CHUNK_BUDGET = 4_000_000


def _as_1d_positive(x, name) -> np.ndarray:
    a = np.asarray(x, dtype=float).ravel()
    if a.size == 0:
        raise ConfigurationError(f"{name} must be non-empty")
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise ConfigurationError(f"{name} must be positive, finite reals")
    return a


# ---------------------------------------------------------------------------
# Spectral Gaussian fields (random trigonometric sums)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralGaussian1D:
    """Stationary Gaussian field X(t) = sum_k a_k (xi_k cos w_k t + xi'_k sin w_k t).

    Parameters
    ----------
    frequencies : array_like
        Positive angular frequencies w_k.
    amplitudes : array_like
        Positive amplitudes a_k.  The pointwise variance is
        lambda0 = sum a_k^2 and the derivative variance is
        lambda2 = sum a_k^2 w_k^2.
    """

    frequencies: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        f = _as_1d_positive(self.frequencies, "frequencies")
        a = _as_1d_positive(self.amplitudes, "amplitudes")
        if f.shape != a.shape:
            raise ConfigurationError("frequencies and amplitudes must have equal length")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "amplitudes", a)

    d = 1
    D = 1

    @property
    def lambda0(self) -> float:
        return float(np.sum(self.amplitudes**2))

    @property
    def lambda2(self) -> float:
        return float(np.sum(self.amplitudes**2 * self.frequencies**2))

    @property
    def lambda4(self) -> float:
        return float(np.sum(self.amplitudes**2 * self.frequencies**4))

    def covariance(self, tau, order: int = 0):
        """Covariance function C(tau) = sum a_k^2 cos(w_k tau), or its derivative.

        order 0, 1, 2 gives C, C', C''.
        """
        tau = np.asarray(tau, dtype=float)
        w = self.frequencies
        a2 = self.amplitudes**2
        ph = np.multiply.outer(tau, w)
        if order == 0:
            return np.cos(ph) @ a2
        if order == 1:
            return -np.sin(ph) @ (a2 * w)
        if order == 2:
            return -np.cos(ph) @ (a2 * w**2)
        raise ConfigurationError(f"unsupported covariance derivative order {order}")

    @classmethod
    def harmonics(cls, n: int, seed: int, omega_range=(0.5, 3.0)) -> "SpectralGaussian1D":
        """n equal-amplitude harmonics with frequencies drawn once from omega_range.

        Amplitudes are 1/sqrt(n), so lambda0 = 1 exactly.
        """
        lo, hi = float(omega_range[0]), float(omega_range[1])
        if not 0 < lo < hi:
            raise ConfigurationError("omega_range must satisfy 0 < lo < hi")
        rng = stream(seed, "model-frequencies")
        freqs = np.sort(lo + (hi - lo) * rng.random(int(n)))
        return cls(freqs, np.full(int(n), 1.0 / np.sqrt(n)))


@dataclass(frozen=True)
class SpectralGaussian2D:
    """Stationary planar Gaussian field from a finite set of plane waves.

    X(t) = sum_k a_k (xi_k cos<k_k, t> + xi'_k sin<k_k, t>), t in R^2.
    """

    wavevectors: np.ndarray  # (K, 2)
    amplitudes: np.ndarray  # (K,)

    def __post_init__(self):
        w = np.asarray(self.wavevectors, dtype=float)
        a = _as_1d_positive(self.amplitudes, "amplitudes")
        if w.ndim != 2 or w.shape[1] != 2:
            raise ConfigurationError("wavevectors must have shape (K, 2)")
        if w.shape[0] != a.size:
            raise ConfigurationError("wavevectors and amplitudes must have equal length")
        if not np.all(np.isfinite(w)) or np.any(np.linalg.norm(w, axis=1) == 0):
            raise ConfigurationError("wavevectors must be finite and nonzero")
        object.__setattr__(self, "wavevectors", w)
        object.__setattr__(self, "amplitudes", a)

    d = 1
    D = 2

    @property
    def lambda0(self) -> float:
        return float(np.sum(self.amplitudes**2))

    @property
    def lambda2_matrix(self) -> np.ndarray:
        """Covariance of the gradient: sum a_k^2 k_k k_k^T."""
        a2 = self.amplitudes**2
        return np.einsum("k,ki,kj->ij", a2, self.wavevectors, self.wavevectors)

    @property
    def lambda2(self) -> float:
        """Per-direction second moment; requires the gradient covariance be isotropic."""
        m = self.lambda2_matrix
        scale = max(abs(m[0, 0]), abs(m[1, 1]), 1e-300)
        if abs(m[0, 0] - m[1, 1]) > 1e-9 * scale or abs(m[0, 1]) > 1e-9 * scale:
            raise DomainError("gradient covariance is anisotropic; no scalar lambda2")
        return float(m[0, 0])

    @property
    def hessian_fourth_moment(self) -> np.ndarray:
        """M[i,j,k,l] = Cov(d_ij X, d_kl X) = sum a^2 k_i k_j k_k k_l."""
        a2 = self.amplitudes**2
        w = self.wavevectors
        return np.einsum("k,ki,kj,kp,kq->ijpq", a2, w, w, w, w)

    @classmethod
    def isotropic_ring(cls, n_waves: int, kappa: float) -> "SpectralGaussian2D":
        """Equal-amplitude wave vectors equally spaced on the half-circle of radius kappa.

        The angles pi(j+1/2)/n cover each direction once (k and -k generate the
        same plane wave).  Discrete half-circle averages of cos^2 and cos^4 are
        exactly 1/2 and 3/8 for n >= 5, so the gradient covariance is exactly
        (kappa^2/2) I and the Hessian fourth moments match the continuous ring.
        """
        n = int(n_waves)
        if n < 5:
            raise ConfigurationError("isotropic_ring needs at least 5 wave vectors")
        if kappa <= 0:
            raise ConfigurationError("kappa must be positive")
        ang = np.pi * (np.arange(n) + 0.5) / n
        waves = kappa * np.column_stack([np.cos(ang), np.sin(ang)])
        return cls(waves, np.full(n, 1.0 / np.sqrt(n)))


def _chunked_cols(n_cols: int, n_rows: int):
    step = max(1, _CHUNK_BUDGET // max(n_rows, 1))
    for start in range(0, n_cols, step):
        yield start, min(start + step, n_cols)


@dataclass(frozen=True)
class TrigRealization1D:
    model: SpectralGaussian1D
    seed: int
    coef_cos: np.ndarray  # a_k * xi_k
    coef_sin: np.ndarray  # a_k * xi'_k

    d = 1
    D = 1

    def _eval(self, t, order: int) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        w = self.model.frequencies
        out = np.empty(t.shape, dtype=float)
        for lo, hi in _chunked_cols(t.size, w.size):
            ph = np.outer(w, t[lo:hi])
            c, s = np.cos(ph), np.sin(ph)
            if order == 0:
                out[lo:hi] = self.coef_cos @ c + self.coef_sin @ s
            elif order == 1:
                out[lo:hi] = (self.coef_sin * w) @ c - (self.coef_cos * w) @ s
            else:
                out[lo:hi] = -(self.coef_cos * w**2) @ c - (self.coef_sin * w**2) @ s
        return out

    def value(self, t):
        r = self._eval(t, 0)
        return float(r[0]) if np.isscalar(t) or np.ndim(t) == 0 else r

    def derivative(self, t):
        r = self._eval(t, 1)
        return float(r[0]) if np.isscalar(t) or np.ndim(t) == 0 else r

    def second_derivative(self, t):
        r = self._eval(t, 2)
        return float(r[0]) if np.isscalar(t) or np.ndim(t) == 0 else r

    jacobian = derivative
    hessian = second_derivative


@dataclass(frozen=True)
class TrigRealization2D:
    model: SpectralGaussian2D
    seed: int
    coef_cos: np.ndarray
    coef_sin: np.ndarray

    d = 1
    D = 2

    def _phases(self, pts):
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[-1] != 2:
            raise ConfigurationError("points must have shape (..., 2)")
        return pts, single

    def value(self, pts):
        pts, single = self._phases(pts)
        w = self.model.wavevectors
        out = np.empty(pts.shape[0])
        for lo, hi in _chunked_cols(pts.shape[0], w.shape[0]):
            ph = w @ pts[lo:hi].T
            out[lo:hi] = self.coef_cos @ np.cos(ph) + self.coef_sin @ np.sin(ph)
        return float(out[0]) if single else out

    def gradient(self, pts):
        pts, single = self._phases(pts)
        w = self.model.wavevectors
        out = np.empty((pts.shape[0], 2))
        for lo, hi in _chunked_cols(pts.shape[0], 2 * w.shape[0]):
            ph = w @ pts[lo:hi].T
            c, s = np.cos(ph), np.sin(ph)
            for axis in range(2):
                out[lo:hi, axis] = (self.coef_sin * w[:, axis]) @ c - (
                    self.coef_cos * w[:, axis]
                ) @ s
        return out[0] if single else out

    def hessian(self, pts):
        pts, single = self._phases(pts)
        w = self.model.wavevectors
        out = np.empty((pts.shape[0], 2, 2))
        for lo, hi in _chunked_cols(pts.shape[0], 4 * w.shape[0]):
            ph = w @ pts[lo:hi].T
            c, s = np.cos(ph), np.sin(ph)
            for i in range(2):
                for j in range(i, 2):
                    wij = w[:, i] * w[:, j]
                    h = -(self.coef_cos * wij) @ c - (self.coef_sin * wij) @ s
                    out[lo:hi, i, j] = h
                    out[lo:hi, j, i] = h
        return out[0] if single else out

    jacobian = gradient


@dataclass(frozen=True)
class GradientField:
    """The map t -> grad Y(t) of a scalar planar Gaussian field Y.

    Its roots are the critical points of Y; its Jacobian is the Hessian of Y.
    """

    base: SpectralGaussian2D

    d = 2
    D = 2


@dataclass(frozen=True)
class GradientFieldRealization:
    model: GradientField
    seed: int
    scalar: TrigRealization2D

    d = 2
    D = 2

    def value(self, pts):
        return self.scalar.gradient(pts)

    def jacobian(self, pts):
        return self.scalar.hessian(pts)


# ---------------------------------------------------------------------------
# Chi-square fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChiSquareField:
    """X(t) = ||Y(t)||^2 for n independent unit-variance copies of a base field."""

    n: int
    base: object  # SpectralGaussian1D or SpectralGaussian2D

    def __post_init__(self):
        if int(self.n) < 2:
            raise ConfigurationError("chi-square component count must be >= 2")
        if not isinstance(self.base, (SpectralGaussian1D, SpectralGaussian2D)):
            raise ConfigurationError("chi-square base must be a spectral Gaussian model")
        if abs(self.base.lambda0 - 1.0) > 1e-9:
            raise ConfigurationError("chi-square base must have unit variance")
        object.__setattr__(self, "n", int(self.n))

    d = 1

    @property
    def D(self) -> int:
        return self.base.D


@dataclass(frozen=True)
class ChiSquareRealization:
    model: ChiSquareField
    seed: int
    components: tuple

    d = 1

    @property
    def D(self) -> int:
        return self.model.D

    def component_values(self, t):
        return np.stack([c.value(t) for c in self.components])

    def value(self, t):
        vals = self.component_values(t)
        return np.sum(vals**2, axis=0)

    def derivative(self, t):
        # d/dt ||Y||^2 = 2 sum y_j y_j'
        if self.D != 1:
            raise CapabilityError("derivative is the 1D accessor; use gradient")
        vals = self.component_values(t)
        ders = np.stack([c.derivative(t) for c in self.components])
        return 2.0 * np.sum(vals * ders, axis=0)

    def gradient(self, t):
        vals = self.component_values(t)
        grads = np.stack([c.gradient(t) for c in self.components])
        return 2.0 * np.einsum("c...,c...i->...i", vals, grads)

    def jacobian(self, t):
        return self.derivative(t) if self.D == 1 else self.gradient(t)


# ---------------------------------------------------------------------------
# Shot noise
# ---------------------------------------------------------------------------


def _bump(x, eta):
    x = np.asarray(x, dtype=float)
    r = x / eta
    out = (1.0 - r**2) ** 2
    return np.where(np.abs(r) < 1.0, out, 0.0)


def _bump_prime(x, eta):
    x = np.asarray(x, dtype=float)
    r = x / eta
    out = -4.0 * (x / eta**2) * (1.0 - r**2)
    return np.where(np.abs(r) < 1.0, out, 0.0)


@dataclass(frozen=True)
class ShotNoiseModel:
    """1D shot noise X(t) = sum_i beta_i g(t - tau_i).

    The kernel is the quartic bump g(x) = (1 - (x/eta)^2)^2 on (-eta, eta):
    C^1 with compact support.  Poisson points have the given intensity per
    unit length; impulses beta are uniform on [beta_low, beta_high].
    Realizations place points on the domain padded by eta on both sides, so
    evaluation anywhere in the declared domain is free of boundary effects.
    """

    eta: float
    intensity: float
    domain: tuple  # (lo, hi)
    beta_low: float = 0.5
    beta_high: float = 1.5

    def __post_init__(self):
        if self.eta <= 0 or not np.isfinite(self.eta):
            raise ConfigurationError("eta must be positive")
        if self.intensity < 0 or not np.isfinite(self.intensity):
            raise ConfigurationError("intensity must be nonnegative")
        lo, hi = float(self.domain[0]), float(self.domain[1])
        if not lo < hi:
            raise ConfigurationError("domain must be a nonempty interval")
        if not 0 < self.beta_low < self.beta_high:
            raise ConfigurationError("impulse range must satisfy 0 < low < high")
        object.__setattr__(self, "domain", (lo, hi))

    d = 1
    D = 1

    def kernel(self, x):
        return _bump(x, self.eta)

    def kernel_prime(self, x):
        return _bump_prime(x, self.eta)

    @property
    def kernel_integral(self) -> float:
        return 16.0 * self.eta / 15.0

    @property
    def beta_mean(self) -> float:
        return 0.5 * (self.beta_low + self.beta_high)

    def beta_density(self, b):
        b = np.asarray(b, dtype=float)
        inside = (b >= self.beta_low) & (b <= self.beta_high)
        return np.where(inside, 1.0 / (self.beta_high - self.beta_low), 0.0)


@dataclass(frozen=True)
class ShotNoiseRealization:
    model: ShotNoiseModel
    seed: int
    points: np.ndarray
    impulses: np.ndarray

    d = 1
    D = 1

    def _check_domain(self, t):
        lo, hi = self.model.domain
        t = np.asarray(t, dtype=float)
        if np.any(t < lo) or np.any(t > hi):
            raise DomainError(
                "evaluation outside the boundary-effect-free zone "
                f"[{lo}, {hi}]"
            )
        return t

    def _sum(self, t, kernel_fn):
        t = self._check_domain(t)
        single = t.ndim == 0
        t1 = np.atleast_1d(t)
        if self.points.size == 0:
            out = np.zeros(t1.shape)
        else:
            out = np.zeros(t1.shape)
            for lo, hi in _chunked_cols(t1.size, self.points.size):
                diff = t1[None, lo:hi] - self.points[:, None]
                out[lo:hi] = self.impulses @ kernel_fn(diff)
        return float(out[0]) if single else out

    def value(self, t):
        return self._sum(t, lambda x: self.model.kernel(x))

    def derivative(self, t):
        return self._sum(t, lambda x: self.model.kernel_prime(x))

    jacobian = derivative


# ---------------------------------------------------------------------------
# Gravitational microlensing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MicrolensModel:
    """Ensemble of star fields: N stars uniform on the disk of radius R."""

    kappa_c: float
    gamma: float
    m: float
    n_stars: int
    R: float

    def __post_init__(self):
        if self.m <= 0:
            raise ConfigurationError("star mass must be positive")
        if self.kappa_c < 0:
            raise ConfigurationError("continuous matter density must be >= 0")
        if int(self.n_stars) < 0 or self.R <= 0:
            raise ConfigurationError("star count must be >= 0 and field radius positive")
        object.__setattr__(self, "n_stars", int(self.n_stars))

    d = 2
    D = 2

    @property
    def c(self) -> float:
        return 1.0 - self.kappa_c + self.gamma


@dataclass(frozen=True)
class MicrolensSystem:
    """A frozen star field together with its deflection map.

    value(x) is the deflection eta(x) = c x - 2m sum_i (x - xi_i)/||x - xi_i||^2
    with c = 1 - kappa_c + gamma; jacobian(x) its exact derivative
    c I - 2m sum_i (I - 2 z z^T/||z||^2)/||z||^2, z = x - xi_i.
    """

    kappa_c: float
    gamma: float
    m: float
    star_positions: np.ndarray  # (N, 2)
    R: float
    seed: Optional[int] = None

    d = 2
    D = 2

    def __post_init__(self):
        s = np.asarray(self.star_positions, dtype=float)
        if s.ndim != 2 or s.shape[1] != 2:
            raise ConfigurationError("star_positions must have shape (N, 2)")
        object.__setattr__(self, "star_positions", s)

    @property
    def model(self) -> MicrolensModel:
        return MicrolensModel(
            self.kappa_c, self.gamma, self.m, self.star_positions.shape[0], self.R
        )

    @property
    def c(self) -> float:
        return 1.0 - self.kappa_c + self.gamma

    def _diffs(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        z = pts[:, None, :] - self.star_positions[None, :, :]  # (n, N, 2)
        r2 = np.sum(z**2, axis=-1)  # (n, N)
        if np.any(r2 < 1e-24):
            raise SingularityError("evaluation at (or within 1e-12 of) a star position")
        return pts, z, r2, single

    def value(self, x):
        pts, z, r2, single = self._diffs(x)
        out = self.c * pts - 2.0 * self.m * np.sum(z / r2[..., None], axis=1)
        return out[0] if single else out

    def jacobian(self, x):
        pts, z, r2, single = self._diffs(x)
        n, N = r2.shape
        eye = np.eye(2)
        zz = np.einsum("nki,nkj->nkij", z, z) / r2[..., None, None]
        terms = (eye[None, None, :, :] - 2.0 * zz) / r2[..., None, None]
        out = self.c * eye[None, :, :] - 2.0 * self.m * np.sum(terms, axis=1)
        return out[0] if single else out


def check_supercritical(sys) -> bool:
    """True iff 1 - kappa_c + gamma < 0."""
    return (1.0 - sys.kappa_c + sys.gamma) < 0.0


# ---------------------------------------------------------------------------
# Deterministic fields (worked examples, counterexamples, trivial cases)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeterministicField:
    """Wrap explicit callables as a pseudo-realization with the evaluation API."""

    value_fn: Callable
    jacobian_fn: Callable
    d: int
    D: int
    hessian_fn: Optional[Callable] = None

    def value(self, t):
        return self.value_fn(t)

    def jacobian(self, t):
        return self.jacobian_fn(t)

    def derivative(self, t):
        return self.jacobian_fn(t)

    def gradient(self, t):
        return self.jacobian_fn(t)

    def hessian(self, t):
        if self.hessian_fn is None:
            raise CapabilityError("no hessian supplied")
        return self.hessian_fn(t)


# ---------------------------------------------------------------------------
# Sampling and generic evaluation
# ---------------------------------------------------------------------------


def sample_realization(model, seed: int):
    """Draw the frozen realization of `model` determined by `seed`."""
    if isinstance(model, SpectralGaussian1D):
        rng = stream(seed, "trig-coeffs")
        xi = rng.standard_normal(2 * model.frequencies.size)
        k = model.frequencies.size
        return TrigRealization1D(
            model, int(seed), model.amplitudes * xi[:k], model.amplitudes * xi[k:]
        )
    if isinstance(model, SpectralGaussian2D):
        rng = stream(seed, "trig-coeffs")
        k = model.wavevectors.shape[0]
        xi = rng.standard_normal(2 * k)
        return TrigRealization2D(
            model, int(seed), model.amplitudes * xi[:k], model.amplitudes * xi[k:]
        )
    if isinstance(model, GradientField):
        inner = sample_realization(model.base, seed)
        return GradientFieldRealization(model, int(seed), inner)
    if isinstance(model, ChiSquareField):
        comps = tuple(
            sample_realization(model.base, fanout_seed(seed, "chi2-component", j))
            for j in range(model.n)
        )
        return ChiSquareRealization(model, int(seed), comps)
    if isinstance(model, ShotNoiseModel):
        lo, hi = model.domain
        if (hi - lo) < 2.0 * model.eta:
            raise ConfigurationError("shot-noise domain smaller than kernel support")
        rng = stream(seed, "shot-noise")
        span = (hi - lo) + 2.0 * model.eta
        count = rng.poisson(model.intensity * span)
        pts = lo - model.eta + span * rng.random(count)
        beta = model.beta_low + (model.beta_high - model.beta_low) * rng.random(count)
        return ShotNoiseRealization(model, int(seed), np.sort(pts), beta[np.argsort(pts)])
    if isinstance(model, MicrolensModel):
        rng = stream(seed, "stars")
        radii = model.R * np.sqrt(rng.random(model.n_stars))
        ang = 2.0 * np.pi * rng.random(model.n_stars)
        stars = np.column_stack([radii * np.cos(ang), radii * np.sin(ang)])
        return MicrolensSystem(model.kappa_c, model.gamma, model.m, stars, model.R, int(seed))
    raise ConfigurationError(f"unknown model type {type(model).__name__}")


def eval_field(realization, t):
    """Evaluate a realization at one point: (value in R^d, Jacobian in R^{d x D})."""
    d, D = realization.d, realization.D
    v = realization.value(t)
    j = realization.jacobian(t)
    return np.atleast_1d(np.asarray(v, dtype=float)), np.reshape(
        np.asarray(j, dtype=float), (d, D)
    )


def eval_shot_noise(realization, t):
    """Value and gradient of a shot-noise realization at t."""
    if not isinstance(realization, ShotNoiseRealization):
        raise ConfigurationError("eval_shot_noise expects a shot-noise realization")
    return realization.value(t), realization.derivative(t)


# ---------------------------------------------------------------------------
# Batched corpus evaluation
# ---------------------------------------------------------------------------


def batch_coefficients(model, seeds) -> np.ndarray:
    """Stack [cos coeffs, sin coeffs] rows for many seeds.

    Row i is bit-identical to the coefficients of sample_realization(model,
    seeds[i]); only the evaluation order differs in the batched products.
    """
    if isinstance(model, SpectralGaussian1D):
        k = model.frequencies.size
    elif isinstance(model, SpectralGaussian2D):
        k = model.wavevectors.shape[0]
    else:
        raise ConfigurationError("batched coefficients exist for spectral models only")
    out = np.empty((len(seeds), 2 * k))
    amp = np.concatenate([model.amplitudes, model.amplitudes])
    for i, s in enumerate(seeds):
        out[i] = amp * stream(s, "trig-coeffs").standard_normal(2 * k)
    return out


def trig_basis_1d(model: SpectralGaussian1D, ts, order: int = 0) -> np.ndarray:
    """(2K, T) basis so that coefficients @ basis evaluates the order-th derivative."""
    ts = np.asarray(ts, dtype=float)
    w = model.frequencies
    ph = np.outer(w, ts)
    c, s = np.cos(ph), np.sin(ph)
    if order == 0:
        return np.vstack([c, s])
    if order == 1:
        return np.vstack([-w[:, None] * s, w[:, None] * c])
    if order == 2:
        return np.vstack([-(w**2)[:, None] * c, -(w**2)[:, None] * s])
    raise ConfigurationError(f"unsupported derivative order {order}")


def trig_basis_2d(model: SpectralGaussian2D, pts, deriv: tuple = ()) -> np.ndarray:
    """(2K, n) basis for the mixed partial indexed by `deriv` (e.g. (0,) is d/dx)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    w = model.wavevectors
    ph = w @ pts.T
    factor = np.ones(w.shape[0])
    for axis in deriv:
        factor = factor * w[:, axis]
    c, s = np.cos(ph), np.sin(ph)
    k = len(deriv) % 4
    # derivative cycle: cos -> -sin -> -cos -> sin; sin -> cos -> -sin -> -cos
    tops = [c, -s, -c, s][k]
    bots = [s, c, -s, -c][k]
    return np.vstack([factor[:, None] * tops, factor[:, None] * bots])
