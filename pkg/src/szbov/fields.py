"""Problem data: mass ratio, magnetic field with a gauge primitive, and the
1-periodic time-dependent electric potential.

All evaluators are vectorized over numpy arrays: the magnetic field and gauge
take a complex position array, the electric evaluators take matching time and
position arrays.  Custom evaluators must follow the same convention and be
pure; they are trusted but can be checked with :func:`validate`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "FieldConfigError",
    "MagneticSpec",
    "ElectricSpec",
    "FieldConfig",
    "magnetic_preset",
    "electric_preset",
    "preset",
    "config_from_dict",
    "config_to_dict",
    "validate",
    "ValidationReport",
]


class FieldConfigError(ValueError):
    """Invalid field configuration."""


@dataclass(frozen=True)
class MagneticSpec:
    """Magnetic field strength with an explicit gauge primitive.

    field(q) -> real array; gauge(q) -> complex array a1 + i a2 (covector
    components); gauge_jac(q) -> (dAc/dq1, dAc/dq2) complex arrays, or None to
    fall back on central differences of the gauge.
    """

    kind: str
    field_fn: Callable = field(repr=False, default=None)
    gauge_fn: Callable = field(repr=False, default=None)
    gauge_jac_fn: Optional[Callable] = field(repr=False, default=None)
    params: dict = field(default_factory=dict)

    def field_at(self, q):
        return np.asarray(self.field_fn(np.asarray(q, dtype=complex)), dtype=float)

    def gauge_at(self, q):
        return np.asarray(self.gauge_fn(np.asarray(q, dtype=complex)), dtype=complex)

    def gauge_jac_at(self, q, h: float = 1e-6):
        q = np.asarray(q, dtype=complex)
        if self.gauge_jac_fn is not None:
            d1, d2 = self.gauge_jac_fn(q)
            return np.asarray(d1, dtype=complex), np.asarray(d2, dtype=complex)
        d1 = (self.gauge_at(q + h) - self.gauge_at(q - h)) / (2.0 * h)
        d2 = (self.gauge_at(q + 1j * h) - self.gauge_at(q - 1j * h)) / (2.0 * h)
        return d1, d2


@dataclass(frozen=True)
class ElectricSpec:
    """Time-periodic electric potential with gradient and time derivative.

    e(t, q) -> real array; grad(t, q) -> complex array gx + i gy;
    dot(t, q) -> real array (partial derivative in t).  All 1-periodic in t.
    """

    kind: str
    e_fn: Callable = field(repr=False, default=None)
    grad_fn: Callable = field(repr=False, default=None)
    dot_fn: Callable = field(repr=False, default=None)
    params: dict = field(default_factory=dict)

    def e(self, t, q):
        return np.asarray(self.e_fn(np.asarray(t, dtype=float), np.asarray(q, dtype=complex)), dtype=float)

    def grad(self, t, q):
        return np.asarray(self.grad_fn(np.asarray(t, dtype=float), np.asarray(q, dtype=complex)), dtype=complex)

    def dot(self, t, q):
        return np.asarray(self.dot_fn(np.asarray(t, dtype=float), np.asarray(q, dtype=complex)), dtype=float)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"


@dataclass(frozen=True)
class FieldConfig:
    """Mass parameter plus magnetic and electric specifications.

    mu is the mass of the +1 center; 1-mu sits at -1.  The endpoints 0 and 1
    are allowed as single-center Kepler limits.
    """

    mu: float
    magnetic: MagneticSpec
    electric: ElectricSpec

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise FieldConfigError("mu must lie in [0, 1]")

    @property
    def autonomous(self) -> bool:
        return self.electric.is_zero


def magnetic_preset(kind: str, **params) -> MagneticSpec:
    if kind == "zero":
        return MagneticSpec(
            kind="zero",
            field_fn=lambda q: np.zeros_like(q, dtype=float),
            gauge_fn=lambda q: np.zeros_like(q, dtype=complex),
            gauge_jac_fn=lambda q: (np.zeros_like(q, dtype=complex), np.zeros_like(q, dtype=complex)),
        )
    if kind == "constant":
        b = float(params.pop("b"))
        if params:
            raise FieldConfigError(f"unknown constant-field parameters: {sorted(params)}")
        # symmetric gauge A = (-b q2/2, b q1/2), i.e. Ac = (i b / 2) q
        return MagneticSpec(
            kind="constant",
            field_fn=lambda q: np.full(np.shape(q), b, dtype=float),
            gauge_fn=lambda q: 0.5j * b * q,
            gauge_jac_fn=lambda q: (
                np.full(np.shape(q), 0.5j * b, dtype=complex),
                np.full(np.shape(q), -0.5 * b, dtype=complex),
            ),
            params={"b": b},
        )
    if kind == "custom":
        spec = MagneticSpec(
            kind="custom",
            field_fn=params.pop("field"),
            gauge_fn=params.pop("gauge"),
            gauge_jac_fn=params.pop("gauge_jac", None),
            params=params,
        )
        return spec
    raise FieldConfigError(f"unknown magnetic preset {kind!r}")


def _require(params: dict, name: str, kind: str):
    try:
        return params.pop(name)
    except KeyError:
        raise FieldConfigError(f"{kind!r} preset requires parameter {name!r}") from None


def electric_preset(kind: str, **params) -> ElectricSpec:
    if kind == "zero":
        return ElectricSpec(
            kind="zero",
            e_fn=lambda t, q: np.zeros(np.broadcast(t, q).shape),
            grad_fn=lambda t, q: np.zeros(np.broadcast(t, q).shape, dtype=complex),
            dot_fn=lambda t, q: np.zeros(np.broadcast(t, q).shape),
        )
    if kind == "uniform_oscillating":
        eps = float(_require(params, "epsilon", kind))
        d = complex(params.pop("d", 1.0))
        if params:
            raise FieldConfigError(f"unknown oscillating-field parameters: {sorted(params)}")
        # E(t, q) = eps cos(2 pi t) <d, q>
        proj = lambda q: np.real(np.conj(d) * q)
        return ElectricSpec(
            kind="uniform_oscillating",
            e_fn=lambda t, q: eps * np.cos(2 * np.pi * t) * proj(q),
            grad_fn=lambda t, q: eps * np.cos(2 * np.pi * t) * d * np.ones(np.shape(q)),
            dot_fn=lambda t, q: -2 * np.pi * eps * np.sin(2 * np.pi * t) * proj(q),
            params={"epsilon": eps, "d": d},
        )
    if kind == "rotating_charge":
        mu_s = float(_require(params, "mu_s", kind))
        r_s = float(_require(params, "r_s", kind))
        k = int(params.pop("k", 1))
        theta0 = float(params.pop("theta0", 0.0))
        if params:
            raise FieldConfigError(f"unknown rotating-charge parameters: {sorted(params)}")
        if r_s <= 1.0:
            warnings.warn("third center may intersect orbit region", stacklevel=2)
        omega = 2 * np.pi * k  # quantized so the potential is genuinely 1-periodic

        def q_s(t):
            return r_s * np.exp(1j * (omega * np.asarray(t, dtype=float) + theta0))

        def e_fn(t, q):
            return -mu_s / np.abs(q - q_s(t))

        def grad_fn(t, q):
            rel = q - q_s(t)
            return mu_s * rel / np.abs(rel) ** 3

        def dot_fn(t, q):
            rel = q - q_s(t)
            vs = 1j * omega * q_s(t)
            return -mu_s * np.real(np.conj(rel) * vs) / np.abs(rel) ** 3

        return ElectricSpec(
            kind="rotating_charge",
            e_fn=e_fn,
            grad_fn=grad_fn,
            dot_fn=dot_fn,
            params={"mu_s": mu_s, "r_s": r_s, "k": k, "theta0": theta0},
        )
    if kind == "custom":
        return ElectricSpec(
            kind="custom",
            e_fn=params.pop("e"),
            grad_fn=params.pop("grad"),
            dot_fn=params.pop("dot"),
            params=params,
        )
    raise FieldConfigError(f"unknown electric preset {kind!r}")


def preset(name: str, mu: float = 0.5, **params) -> FieldConfig:
    """Convenience constructor for the built-in field configurations."""
    if name == "zero":
        return FieldConfig(mu=mu, magnetic=magnetic_preset("zero"), electric=electric_preset("zero"))
    if name == "constant":
        return FieldConfig(mu=mu, magnetic=magnetic_preset("constant", **params), electric=electric_preset("zero"))
    if name in ("uniform_oscillating", "rotating_charge"):
        return FieldConfig(mu=mu, magnetic=magnetic_preset("zero"), electric=electric_preset(name, **params))
    raise FieldConfigError(f"unknown preset {name!r}")


_MAGNETIC_KEYS = {"zero": set(), "constant": {"b"}}
_ELECTRIC_KEYS = {
    "zero": set(),
    "uniform_oscillating": {"epsilon", "d"},
    "rotating_charge": {"mu_s", "r_s", "k", "theta0"},
}


def config_from_dict(data: dict) -> FieldConfig:
    """Build a FieldConfig from its JSON block; unknown keys are rejected."""
    if not isinstance(data, dict):
        raise FieldConfigError("fields block must be an object")
    unknown = set(data) - {"mu", "magnetic", "electric"}
    if unknown:
        raise FieldConfigError(f"unknown fields keys: {sorted(unknown)}")
    mu = float(data.get("mu", 0.5))
    mag_block = dict(data.get("magnetic", {"kind": "zero"}))
    ele_block = dict(data.get("electric", {"kind": "zero"}))
    mag_kind = mag_block.pop("kind", None)
    if mag_kind not in _MAGNETIC_KEYS:
        raise FieldConfigError(f"unknown magnetic kind {mag_kind!r}")
    extra = set(mag_block) - _MAGNETIC_KEYS[mag_kind]
    if extra:
        raise FieldConfigError(f"unknown magnetic keys: {sorted(extra)}")
    ele_kind = ele_block.pop("kind", None)
    if ele_kind not in _ELECTRIC_KEYS:
        raise FieldConfigError(f"unknown electric kind {ele_kind!r}")
    extra = set(ele_block) - _ELECTRIC_KEYS[ele_kind]
    if extra:
        raise FieldConfigError(f"unknown electric keys: {sorted(extra)}")
    if "d" in ele_block:
        d = ele_block["d"]
        ele_block["d"] = complex(d[0], d[1]) if isinstance(d, (list, tuple)) else complex(d)
    return FieldConfig(
        mu=mu,
        magnetic=magnetic_preset(mag_kind, **mag_block),
        electric=electric_preset(ele_kind, **ele_block),
    )


def config_to_dict(cfg: FieldConfig) -> dict:
    if cfg.magnetic.kind == "custom" or cfg.electric.kind == "custom":
        raise FieldConfigError("custom field specs are not serializable")
    mag = {"kind": cfg.magnetic.kind, **cfg.magnetic.params}
    ele = {"kind": cfg.electric.kind, **cfg.electric.params}
    if "d" in ele:
        d = complex(ele["d"])
        ele["d"] = [d.real, d.imag]
    return {"mu": cfg.mu, "magnetic": mag, "electric": ele}


@dataclass(frozen=True)
class ValidationReport:
    """Per-check maximum violations of the field-consistency requirements."""

    checks: tuple  # of (name, violation, tolerance)

    @property
    def ok(self) -> bool:
        return all(v <= tol for _, v, tol in self.checks)

    @property
    def failures(self) -> list:
        return [name for name, v, tol in self.checks if v > tol]

    def __str__(self):
        lines = []
        for name, v, tol in self.checks:
            flag = "ok  " if v <= tol else "FAIL"
            lines.append(f"{flag} {name}: max violation {v:.3e} (tol {tol:.1e})")
        return "\n".join(lines)


def validate(cfg: FieldConfig, seed: int = 0, n_points: int = 64) -> ValidationReport:
    """Check gauge/curl, periodicity, and derivative consistency on a seeded
    pseudo-random point cloud."""
    rng = np.random.default_rng(seed)
    q = rng.uniform(-3, 3, n_points) + 1j * rng.uniform(-3, 3, n_points)
    t = rng.uniform(0, 1, n_points)
    h = 1e-5
    checks = []

    # curl of the gauge primitive against the field strength
    a_q1p = cfg.magnetic.gauge_at(q + h)
    a_q1m = cfg.magnetic.gauge_at(q - h)
    a_q2p = cfg.magnetic.gauge_at(q + 1j * h)
    a_q2m = cfg.magnetic.gauge_at(q - 1j * h)
    curl = (a_q1p.imag - a_q1m.imag) / (2 * h) - (a_q2p.real - a_q2m.real) / (2 * h)
    b = cfg.magnetic.field_at(q)
    checks.append(("gauge curl mismatch", float(np.max(np.abs(curl - b) / (1.0 + np.abs(b)))), 1e-6))

    # 1-periodicity of the electric potential in time
    per = np.abs(cfg.electric.e(t + 1.0, q) - cfg.electric.e(t, q))
    checks.append(("electric periodicity", float(np.max(per / (1.0 + np.abs(cfg.electric.e(t, q))))), 1e-10))

    # spatial gradient of E against central differences
    gx = (cfg.electric.e(t, q + h) - cfg.electric.e(t, q - h)) / (2 * h)
    gy = (cfg.electric.e(t, q + 1j * h) - cfg.electric.e(t, q - 1j * h)) / (2 * h)
    g = cfg.electric.grad(t, q)
    gerr = np.abs((gx + 1j * gy) - g) / (1.0 + np.abs(g))
    checks.append(("grad_E mismatch", float(np.max(gerr)), 1e-6))

    # time derivative of E against central differences
    dt = (cfg.electric.e(t + h, q) - cfg.electric.e(t - h, q)) / (2 * h)
    de = cfg.electric.dot(t, q)
    derr = np.abs(dt - de) / (1.0 + np.abs(de))
    checks.append(("dot_E mismatch", float(np.max(derr)), 1e-6))

    return ValidationReport(checks=tuple(checks))
