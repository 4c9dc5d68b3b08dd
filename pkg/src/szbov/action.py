"""The regularized action functional, its components, its exact discrete
gradient, and the delay equation residual.

The functional evaluated here is

    B(z) = F G + ((1-mu) H1 + mu H2)/F - M - E

with F the mean conformal weight, G the kinetic term, H1/H2 the two-center
terms, M the magnetic circulation of the reconstructed loop, and E the
time-reparametrized electric term.  The gradient differentiates the
*discretized* quadratures exactly (discretize-then-differentiate), so the
solver's zero-gradient points are genuine critical points of the computed
functional; the continuum differential formulas serve as test oracles.

Gradients use the L2 pairing  dB(z)xi = mean_j Re(conj(g_j) xi_j).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import FieldConfig
from .geometry import birkhoff_derivative, birkhoff_map, conformal_weight
from .loops import (
    EPS_COLLISION,
    EPS_ZHAT,
    DegenerateLoopError,
    DiscreteLoop,
    PhysicalLoop,
    _spectral_derivative,
    double_cover,
    integration_matrix,
)

__all__ = [
    "ActionBreakdown",
    "DelayResidual",
    "eval_components",
    "eval_action",
    "eval_unregularized",
    "gradient",
    "component_gradients",
    "delay_residual",
    "pack",
    "unpack",
    "grad_norm",
]


@dataclass(frozen=True)
class ActionBreakdown:
    """Component values of the regularized functional."""

    F: float
    G: float
    H1: float
    H2: float
    M: float
    E_val: float
    E1: float
    mu: float

    @property
    def total(self) -> float:
        return self.F * self.G + ((1 - self.mu) * self.H1 + self.mu * self.H2) / self.F - self.M - self.E_val

    @property
    def C(self) -> float:
        """The global constant of the delay equation (the orbit energy)."""
        return self.F * self.G - ((1 - self.mu) * self.H1 + self.mu * self.H2) / self.F + self.E_val + self.E1


@dataclass(frozen=True)
class DelayResidual:
    """Pointwise defect of the second-order delay equation at the nodes."""

    C: float
    residual: np.ndarray
    eps1: np.ndarray
    eps2: np.ndarray
    eps3: np.ndarray
    z_second_scale: float

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def sup_relative(self) -> float:
        return self.sup_norm / max(self.z_second_scale, 1e-300)


def _prepare(loop: DiscreteLoop, eps_zhat: float):
    z = loop.samples
    w = conformal_weight(z)
    f = float(np.mean(w))
    if f <= eps_zhat:
        raise DegenerateLoopError("degenerate loop: zhat vanishes")
    return z, w, f


def _zprime(loop: DiscreteLoop) -> np.ndarray:
    if loop.twisted:
        return _spectral_derivative(double_cover(loop), period=2.0)[: loop.n]
    return _spectral_derivative(loop.samples, period=1.0)


def _kinetic(loop: DiscreteLoop) -> float:
    """G as a quadrature; for twisted loops averaged over the full double cover
    so that the discrete gradient differentiates exactly what is evaluated."""
    if loop.twisted:
        zc = double_cover(loop)
        zp = _spectral_derivative(zc, period=2.0)
        return 0.25 * float(np.mean(np.abs(zp) ** 2 / np.abs(zc) ** 2)) * 2.0
    zp = _spectral_derivative(loop.samples, period=1.0)
    return 0.5 * float(np.mean(np.abs(zp) ** 2 / np.abs(loop.samples) ** 2))


def _gauge_complex(cfg: FieldConfig, q: np.ndarray) -> np.ndarray:
    return cfg.magnetic.gauge_at(q)


def _electric_times(w: np.ndarray, f: float) -> tuple[np.ndarray, np.ndarray]:
    """Raw cumulative integral T_j of w and normalized times t_j = T_j/F."""
    raw = integration_matrix(len(w)) @ w
    return raw, raw / f


def _df_integrand(z: np.ndarray) -> np.ndarray:
    """Pointwise gradient of the conformal weight: dw = Re(conj(phi) xi)."""
    return z * (z**2 - 1.0) * (np.conj(z) ** 2 + 1.0) / (2.0 * np.abs(z) ** 4)


def eval_components(loop: DiscreteLoop, cfg: FieldConfig, eps_zhat: float = EPS_ZHAT) -> ActionBreakdown:
    """All component quadratures of the regularized functional."""
    z, w, f = _prepare(loop, eps_zhat)
    g = _kinetic(loop)
    h1 = 0.5 * float(np.mean(np.abs(z - 1.0) ** 2 / np.abs(z)))
    h2 = 0.5 * float(np.mean(np.abs(z + 1.0) ** 2 / np.abs(z)))

    q = birkhoff_map(z)
    qp = _spectral_derivative(q, period=1.0)
    m_val = float(np.mean(np.real(np.conj(_gauge_complex(cfg, q)) * qp)))

    if cfg.electric.is_zero:
        e_val = 0.0
        e1 = 0.0
    else:
        raw, t = _electric_times(w, f)
        e_val = float(np.mean(cfg.electric.e(t, q) * w)) / f
        e1 = float(np.mean(cfg.electric.dot(t, q) * raw * w)) / f**2
    return ActionBreakdown(F=f, G=g, H1=h1, H2=h2, M=m_val, E_val=e_val, E1=e1, mu=cfg.mu)


def eval_action(loop: DiscreteLoop, cfg: FieldConfig, eps_zhat: float = EPS_ZHAT) -> float:
    """Value of the regularized functional."""
    return eval_components(loop, cfg, eps_zhat).total


def eval_unregularized(q: PhysicalLoop, cfg: FieldConfig, eps_col: float = EPS_COLLISION) -> float:
    """The classical action of a collision-free physical loop.

    Independent of the blown-up quadratures: spectral derivative and trapezoid
    rule directly on the uniform time grid.
    """
    qs = q.samples
    if np.min(np.minimum(np.abs(qs - 1.0), np.abs(qs + 1.0))) < eps_col:
        raise ValueError("unregularized action singular near collision")
    qdot = _spectral_derivative(qs, period=1.0)
    t = q.times
    kinetic = 0.5 * float(np.mean(np.abs(qdot) ** 2))
    circulation = float(np.mean(np.real(np.conj(_gauge_complex(cfg, qs)) * qdot)))
    attract = float(np.mean((1 - cfg.mu) / np.abs(qs + 1.0) + cfg.mu / np.abs(qs - 1.0)))
    electric = float(np.mean(cfg.electric.e(t, qs)))
    return kinetic - circulation + attract - electric


def _grad_F(z: np.ndarray) -> np.ndarray:
    return _df_integrand(z)


def _grad_G(loop: DiscreteLoop) -> np.ndarray:
    if loop.twisted:
        zc = double_cover(loop)
        zp = _spectral_derivative(zc, period=2.0)
        gz = -_spectral_derivative(zp / np.abs(zc) ** 2, period=2.0) - zc * np.abs(zp) ** 2 / np.abs(zc) ** 4
        n = loop.n
        z = loop.samples
        return 0.5 * (gz[:n] - gz[n:] / np.conj(z) ** 2)
    z = loop.samples
    zp = _spectral_derivative(z, period=1.0)
    return -_spectral_derivative(zp / np.abs(z) ** 2, period=1.0) - z * np.abs(zp) ** 2 / np.abs(z) ** 4


def _grad_H1(z: np.ndarray) -> np.ndarray:
    return z * (z - 1.0) * (np.conj(z) + 1.0) / (2.0 * np.abs(z) ** 3)


def _grad_H2(z: np.ndarray) -> np.ndarray:
    return z * (z + 1.0) * (np.conj(z) - 1.0) / (2.0 * np.abs(z) ** 3)


def _grad_M(loop: DiscreteLoop, cfg: FieldConfig) -> np.ndarray:
    z = loop.samples
    q = birkhoff_map(z)
    qp = _spectral_derivative(q, period=1.0)
    ac = _gauge_complex(cfg, q)
    d1, d2 = cfg.magnetic.gauge_jac_at(q)
    zeta = np.real(np.conj(d1) * qp) + 1j * np.real(np.conj(d2) * qp)
    gq = zeta - _spectral_derivative(ac, period=1.0)
    return np.conj(birkhoff_derivative(z)) * gq


def _grad_E(loop: DiscreteLoop, cfg: FieldConfig, z, w, f) -> np.ndarray:
    """Exact gradient of the discretized electric term, chain rule through the
    discrete cumulative time map."""
    n = loop.n
    q = birkhoff_map(z)
    raw, t = _electric_times(w, f)
    e = cfg.electric.e(t, q)
    edot = cfg.electric.dot(t, q)
    egrad = cfg.electric.grad(t, q)
    phi = _df_integrand(z)
    kmat = integration_matrix(n)

    # N := F * E;  dN collects a dW channel and a position channel
    beta = edot * w  # multiplies dt_j inside the quadrature, before 1/N weight
    # coefficient vector c with  (dW-channel of dN) = c . dW
    c = e / n + (kmat.T @ beta) / (n * f) - (np.mean(beta * t) / (n * f))
    grad_n = n * c * phi + w * np.conj(birkhoff_derivative(z)) * egrad
    e_val = float(np.mean(e * w)) / f
    return (grad_n - e_val * phi) / f


def component_gradients(loop: DiscreteLoop, cfg: FieldConfig, eps_zhat: float = EPS_ZHAT) -> dict:
    """Per-component (value, gradient) pairs, for isolating each formula."""
    z, w, f = _prepare(loop, eps_zhat)
    out = {
        "F": (f, _grad_F(z)),
        "G": (_kinetic(loop), _grad_G(loop)),
        "H1": (0.5 * float(np.mean(np.abs(z - 1.0) ** 2 / np.abs(z))), _grad_H1(z)),
        "H2": (0.5 * float(np.mean(np.abs(z + 1.0) ** 2 / np.abs(z))), _grad_H2(z)),
        "M": (eval_components(loop, cfg, eps_zhat).M, _grad_M(loop, cfg)),
    }
    if not cfg.electric.is_zero:
        raw, t = _electric_times(w, f)
        q = birkhoff_map(z)
        e_val = float(np.mean(cfg.electric.e(t, q) * w)) / f
        out["E"] = (e_val, _grad_E(loop, cfg, z, w, f))
    return out


def gradient(loop: DiscreteLoop, cfg: FieldConfig, eps_zhat: float = EPS_ZHAT) -> np.ndarray:
    """Exact gradient of the discretized regularized functional."""
    z, w, f = _prepare(loop, eps_zhat)
    mu = cfg.mu
    g_val = _kinetic(loop)
    h1 = 0.5 * float(np.mean(np.abs(z - 1.0) ** 2 / np.abs(z)))
    h2 = 0.5 * float(np.mean(np.abs(z + 1.0) ** 2 / np.abs(z)))
    h_mu = (1 - mu) * h1 + mu * h2

    grad = g_val * _grad_F(z) + f * _grad_G(loop)
    grad += ((1 - mu) * _grad_H1(z) + mu * _grad_H2(z)) / f
    grad -= h_mu / f**2 * _grad_F(z)
    grad -= _grad_M(loop, cfg)
    if not cfg.electric.is_zero:
        grad -= _grad_E(loop, cfg, z, w, f)
    return grad


def pack(g: np.ndarray) -> np.ndarray:
    """Complex samples to the real coordinate vector [Re; Im]."""
    return np.concatenate([g.real, g.imag])


def unpack(x: np.ndarray) -> np.ndarray:
    n = len(x) // 2
    return x[:n] + 1j * x[n:]


def grad_norm(g: np.ndarray) -> float:
    """L2 functional norm sqrt(mean |g_j|^2) of a gradient."""
    return float(np.sqrt(np.mean(np.abs(g) ** 2)))


def delay_residual(loop: DiscreteLoop, cfg: FieldConfig, eps_zhat: float = EPS_ZHAT) -> DelayResidual:
    """Pointwise defect of the delay equation z'' = RHS(z, z', nonlocal data).

    Evaluates the right-hand side with spectral derivatives and cumulative
    quadratures and subtracts the spectral z''.
    """
    z, w, f = _prepare(loop, eps_zhat)
    n = loop.n
    mu = cfg.mu
    comp = eval_components(loop, cfg, eps_zhat)
    c_const = comp.C

    if loop.twisted:
        zc = double_cover(loop)
        zp = _spectral_derivative(zc, period=2.0)[:n]
        zpp = _spectral_derivative(zc, period=2.0, order=2)[:n]
    else:
        zp = _spectral_derivative(z, period=1.0)
        zpp = _spectral_derivative(z, period=1.0, order=2)

    phi = _df_integrand(z)
    absz2 = np.abs(z) ** 2
    q = birkhoff_map(z)

    rhs = c_const * phi * absz2 / f**2
    rhs = rhs + np.conj(z) * zp**2 / absz2
    rhs = rhs + ((1 - mu) * z * (z - 1.0) * (np.conj(z) + 1.0) / np.abs(z)
                 + mu * z * (z + 1.0) * (np.conj(z) - 1.0) / np.abs(z)) / (2.0 * f**2)
    # magnetic delay term, same orientation as the Lorentz force B i qdot
    rhs = rhs + (w / f) * cfg.magnetic.field_at(q) * 1j * zp

    if cfg.electric.is_zero:
        eps1 = np.zeros(n, dtype=complex)
        eps2 = np.zeros(n, dtype=complex)
        eps3 = np.zeros(n, dtype=complex)
    else:
        raw, t = _electric_times(w, f)
        e = cfg.electric.e(t, q)
        edot = cfg.electric.dot(t, q)
        egrad = cfg.electric.grad(t, q)
        fw = edot * w
        tail = float(np.mean(fw)) - integration_matrix(n) @ fw
        eps1 = (tail / f) * phi
        eps2 = egrad * np.conj(birkhoff_derivative(z)) * w
        eps3 = e * phi
        rhs = rhs - (absz2 / f**2) * (eps1 + eps2 + eps3)

    return DelayResidual(
        C=c_const,
        residual=rhs - zpp,
        eps1=eps1,
        eps2=eps2,
        eps3=eps3,
        z_second_scale=float(np.max(np.abs(zpp))),
    )
