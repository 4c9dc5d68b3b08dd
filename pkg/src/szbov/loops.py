"""Discrete loops in the blown-up plane and the time reparametrization.

Loops are stored as N uniform samples of a 1-periodic (or twisted-periodic)
complex map on nodes ``tau_j = j/N`` and manipulated spectrally: derivatives,
interpolation, and antiderivatives all go through the trigonometric
interpolant, so every identity of the continuum model is testable at
near-machine tolerances for smooth loops.

A twisted loop satisfies ``z(tau + 1) = 1/z(tau)``; its pointwise inversions
appended to the original samples form a genuine 2-periodic loop (the double
cover) which is what gets differentiated and interpolated.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import birkhoff_map, conformal_weight

__all__ = [
    "LoopError",
    "DegenerateLoopError",
    "LiftError",
    "DiscreteLoop",
    "TimeMap",
    "PhysicalLoop",
    "derivative",
    "second_derivative",
    "double_cover",
    "zhat",
    "time_map",
    "inverse_time",
    "reconstruct",
    "lift",
    "loop_to_dict",
    "loop_from_dict",
    "save_loop",
    "load_loop",
]

EPS_ZHAT = 1e-10
EPS_COLLISION = 1e-6


class LoopError(ValueError):
    """Invalid loop data."""


class DegenerateLoopError(LoopError):
    """Loop excluded from the admissible space because zhat vanishes."""


class LiftError(ValueError):
    """Branch tracking through the double cover failed."""


@dataclass(frozen=True)
class DiscreteLoop:
    """Uniformly sampled loop in the punctured plane.

    samples : complex array of length N at nodes tau_j = j/N
    twisted : interpret the samples as the [0,1) restriction of a map with
        z(tau+1) = 1/z(tau)
    """

    samples: np.ndarray
    twisted: bool = False

    def __post_init__(self):
        z = np.asarray(self.samples, dtype=complex)
        if z.ndim != 1:
            raise LoopError("loop samples must be one-dimensional")
        n = len(z)
        if n < 16 or n % 2 != 0:
            raise LoopError("loop needs an even number of samples, at least 16")
        if not np.all(np.isfinite(z)):
            raise LoopError("loop samples must be finite")
        if np.any(z == 0):
            raise LoopError("loop samples must avoid the origin")
        z = z.copy()
        z.flags.writeable = False
        object.__setattr__(self, "samples", z)

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def tau(self) -> np.ndarray:
        return np.arange(self.n) / self.n


def double_cover(loop: DiscreteLoop) -> np.ndarray:
    """2N samples of the genuine loop induced on [0, 2): z followed by 1/z."""
    z = loop.samples
    return np.concatenate([z, 1.0 / z])


def _spectral_derivative(samples: np.ndarray, period: float = 1.0, order: int = 1) -> np.ndarray:
    n = len(samples)
    k = np.fft.fftfreq(n, d=1.0 / n)
    k = k.copy()
    k[n // 2] = 0.0  # keep the differentiation matrix real antisymmetric
    sym = (2j * np.pi * k / period) ** order
    return np.fft.ifft(np.fft.fft(samples) * sym)


def _trig_eval(samples: np.ndarray, x, period: float = 1.0) -> np.ndarray:
    """Evaluate the trigonometric interpolant of uniform samples at x."""
    n = len(samples)
    c = np.fft.fft(samples) / n
    k = np.fft.fftfreq(n, d=1.0 / n)
    x = np.atleast_1d(np.asarray(x, dtype=float)) / period
    phase = np.exp(2j * np.pi * np.outer(x, k))
    m = n // 2
    phase[:, m] = np.cos(2.0 * np.pi * m * x)  # symmetric Nyquist convention
    return phase @ c


def derivative(loop: DiscreteLoop) -> np.ndarray:
    """Spectral derivative z' at the nodes (via the double cover if twisted)."""
    if loop.twisted:
        return _spectral_derivative(double_cover(loop), period=2.0)[: loop.n]
    return _spectral_derivative(loop.samples, period=1.0)


def second_derivative(loop: DiscreteLoop) -> np.ndarray:
    """Spectral second derivative z'' at the nodes."""
    if loop.twisted:
        return _spectral_derivative(double_cover(loop), period=2.0, order=2)[: loop.n]
    return _spectral_derivative(loop.samples, period=1.0, order=2)


def eval_loop(loop: DiscreteLoop, tau) -> np.ndarray:
    """Evaluate the loop at arbitrary parameters by trigonometric interpolation."""
    if loop.twisted:
        return _trig_eval(double_cover(loop), tau, period=2.0)
    return _trig_eval(loop.samples, tau, period=1.0)


@functools.lru_cache(maxsize=8)
def integration_matrix(n: int) -> np.ndarray:
    """Dense real matrix K with (K @ f)_j = integral of the trigonometric
    interpolant of f from 0 to j/n.

    Linear in the samples, which is what the exact discrete gradient of the
    time-reparametrized electric term differentiates through.
    """
    k = np.fft.fftfreq(n, d=1.0 / n)
    tau = np.arange(n) / n
    dft = np.fft.fft(np.eye(n), axis=0) / n  # c = dft @ f
    phase = np.exp(2j * np.pi * np.outer(tau, k))
    coef = np.zeros(n, dtype=complex)
    nz = k != 0
    coef[nz] = 1.0 / (2j * np.pi * k[nz])
    p = (phase - 1.0) * coef
    p[:, 0] = tau  # mean term integrates to c0 * tau
    p[:, n // 2] = 0.0  # Nyquist cosine integrates to sin, zero at the nodes
    return np.real(p @ dft)


@dataclass(frozen=True)
class TimeMap:
    """Cumulative reparametrization data between loop parameter and time.

    t(tau) is the normalized antiderivative of the conformal weight along the
    loop; its continuous inverse is realized by bracketed bisection with a
    Newton polish.
    """

    zhat: float
    t_of_tau: np.ndarray  # length n+1, from 0 to 1
    weights: np.ndarray = field(repr=False)  # w(z_j) at the nodes

    @property
    def n(self) -> int:
        return len(self.weights)

    @functools.cached_property
    def _spectral(self):
        n = self.n
        c = np.fft.fft(self.weights) / n
        k = np.fft.fftfreq(n, d=1.0 / n)
        coef = np.zeros(n, dtype=complex)
        nz = k != 0
        coef[nz] = c[nz] / (2j * np.pi * k[nz])
        coef[n // 2] = 0.0  # Nyquist handled as a cosine below
        return c, k, coef

    def t(self, tau) -> np.ndarray:
        """Continuous evaluation of t(tau); extends by t(tau+1) = t(tau)+1."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        base = np.floor(tau)
        frac = tau - base
        c, k, coef = self._spectral
        m = self.n // 2
        phase = np.exp(2j * np.pi * np.outer(frac, k))
        osc = np.real((phase - 1.0) @ coef)
        # Nyquist mode interpolated as cos: antiderivative sin(2 pi m tau)/(2 pi m)
        osc += np.real(c[m]) * np.sin(2.0 * np.pi * m * frac) / (2.0 * np.pi * m)
        raw = np.real(c[0]) * frac + osc
        return base + raw / self.zhat

    def t_prime(self, tau) -> np.ndarray:
        """dt/dtau = w(z(tau))/zhat via trigonometric interpolation of w."""
        w = np.real(_trig_eval(self.weights, np.asarray(tau, dtype=float) % 1.0))
        return np.clip(w, 0.0, None) / self.zhat

    def inverse(self, t) -> np.ndarray:
        """tau(t) with residual |t(tau) - t| below ~1e-13."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        base = np.floor(t)
        frac = t - base
        nodes = self.t_of_tau
        idx = np.clip(np.searchsorted(nodes, frac, side="right") - 1, 0, self.n - 1)
        lo = idx / self.n
        hi = (idx + 1) / self.n
        for _ in range(48):
            mid = 0.5 * (lo + hi)
            val = self.t(mid)
            above = val > frac
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        tau = 0.5 * (lo + hi)
        # Newton polish where the map is not nearly flat
        for _ in range(3):
            deriv = self.t_prime(tau)
            resid = self.t(tau) - frac
            step = np.where(deriv > 1e-6, resid / np.where(deriv > 1e-6, deriv, 1.0), 0.0)
            tau = np.clip(tau - step, lo, hi)
        return base + tau


@dataclass(frozen=True)
class PhysicalLoop:
    """Closed physical loop sampled at uniform times t_j = j/M."""

    samples: np.ndarray
    collision_times: tuple = ()

    def __post_init__(self):
        q = np.asarray(self.samples, dtype=complex)
        if q.ndim != 1 or len(q) < 16:
            raise LoopError("physical loop needs at least 16 samples")
        if not np.all(np.isfinite(q)):
            raise LoopError("physical loop samples must be finite")
        q = q.copy()
        q.flags.writeable = False
        object.__setattr__(self, "samples", q)
        object.__setattr__(self, "collision_times", tuple(float(t) for t in self.collision_times))

    @property
    def m(self) -> int:
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.m) / self.m


def zhat(loop: DiscreteLoop, eps: float = EPS_ZHAT) -> float:
    """Mean of the conformal weight along the loop (periodic trapezoid rule)."""
    value = float(np.mean(conformal_weight(loop.samples)))
    if value <= eps:
        raise DegenerateLoopError("degenerate loop: zhat vanishes")
    return value


def time_map(loop: DiscreteLoop, eps: float = EPS_ZHAT) -> TimeMap:
    """Reparametrization t(tau) between loop parameter and physical time."""
    w = conformal_weight(loop.samples)
    zh = float(np.mean(w))
    if zh <= eps:
        raise DegenerateLoopError("degenerate loop: zhat vanishes")
    n = loop.n
    raw = integration_matrix(n) @ w
    nodes = np.empty(n + 1)
    nodes[:n] = np.maximum.accumulate(np.clip(raw / zh, 0.0, 1.0))
    nodes[0] = 0.0
    nodes[n] = 1.0
    return TimeMap(zhat=zh, t_of_tau=nodes, weights=w)


def inverse_time(tm: TimeMap, t) -> np.ndarray:
    """tau(t), the continuous inverse of the reparametrization."""
    return tm.inverse(t)


def reconstruct(loop: DiscreteLoop, m: int, eps_col: float = EPS_COLLISION) -> PhysicalLoop:
    """Physical loop q(t_j) = B(z(tau(t_j))) on M uniform times.

    Closed in both sectors: for twisted z the cover map folds the twisted
    periodicity back to genuine 1-periodicity of q.
    """
    tm = time_map(loop)
    t = np.arange(m) / m
    tau = tm.inverse(t)
    q = birkhoff_map(eval_loop(loop, tau))
    near = np.minimum(np.abs(q - 1.0), np.abs(q + 1.0)) < eps_col
    return PhysicalLoop(samples=q, collision_times=tuple(t[near]))


def _track_branch(q: np.ndarray, eps_col: float) -> tuple[np.ndarray, bool]:
    """Continuously track z = q + sqrt(q^2 - 1) along the samples.

    Returns the tracked branch and whether one traversal returns to the
    inversion of the start (odd total winding, i.e. a twisted lift).
    """
    if np.min(np.minimum(np.abs(q - 1.0), np.abs(q + 1.0))) <= eps_col:
        raise LiftError("cannot lift through branch point")
    root = np.sqrt(q * q - 1.0)
    z = np.empty_like(q)
    prev = q[0] + root[0]
    z[0] = prev
    for j in range(1, len(q)):
        plus = q[j] + root[j]
        minus = q[j] - root[j]
        d_plus = abs(plus - prev)
        d_minus = abs(minus - prev)
        if abs(d_plus - d_minus) <= 1e-9 * max(d_plus, d_minus, 1e-30):
            raise LiftError("undersampled lift")
        prev = plus if d_plus < d_minus else minus
        z[j] = prev
    # close the loop: which preimage of q[0] does the branch return to?
    plus = q[0] + root[0]
    minus = q[0] - root[0]
    closed = abs(plus - prev) < abs(minus - prev)
    end = plus if closed else minus
    if abs(end - prev) > 0.5 * abs(z[0] - 1.0 / z[0]) + 1e-6:
        raise LiftError("undersampled lift")
    twisted = not np.isclose(abs(end - z[0]), 0.0, atol=1e-6 * (1 + abs(z[0])))
    return z, twisted


def lift(q: PhysicalLoop, eps_col: float = EPS_COLLISION) -> DiscreteLoop:
    """Lift a physical loop through the double cover to a blown-up loop.

    The branch is tracked sample by sample; odd total winding returns the
    inversion of the starting point after one traversal and yields a twisted
    loop.  The tracked curve (parametrized by physical time) is resampled to
    uniform loop parameter so that ``reconstruct(lift(q))`` reproduces ``q``.
    """
    qs = q.samples
    zt, twisted = _track_branch(qs, eps_col)
    m = len(zt)
    # reparametrize: dtau/dt proportional to 1/w(z(t)); normalize tau(1) = 1
    w = conformal_weight(zt)
    u = 1.0 / w
    raw = integration_matrix(m) @ u
    total = float(np.mean(u))
    aux = TimeMap(zhat=total, t_of_tau=_monotone_nodes(raw / total, m), weights=u)
    t_of_uniform_tau = aux.inverse(np.arange(m) / m)
    if twisted:
        samples = _trig_eval(np.concatenate([zt, 1.0 / zt]), t_of_uniform_tau, period=2.0)
    else:
        samples = _trig_eval(zt, t_of_uniform_tau, period=1.0)
    return DiscreteLoop(samples=samples, twisted=twisted)


def _monotone_nodes(scaled: np.ndarray, n: int) -> np.ndarray:
    nodes = np.empty(n + 1)
    nodes[:n] = np.maximum.accumulate(np.clip(scaled, 0.0, 1.0))
    nodes[0] = 0.0
    nodes[n] = 1.0
    return nodes


def loop_to_dict(loop: DiscreteLoop) -> dict:
    return {
        "n": loop.n,
        "twisted": bool(loop.twisted),
        "samples": [[float(z.real), float(z.imag)] for z in loop.samples],
    }


def loop_from_dict(data: dict) -> DiscreteLoop:
    try:
        n = int(data["n"])
        twisted = bool(data["twisted"])
        samples = np.array([complex(re, im) for re, im in data["samples"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise LoopError(f"malformed loop object: {exc}") from exc
    if len(samples) != n:
        raise LoopError("loop object: 'n' does not match number of samples")
    return DiscreteLoop(samples=samples, twisted=twisted)


def save_loop(loop: DiscreteLoop, path) -> None:
    with open(path, "w") as fh:
        json.dump(loop_to_dict(loop), fh)


def load_loop(path) -> DiscreteLoop:
    with open(path) as fh:
        return loop_from_dict(json.load(fh))
