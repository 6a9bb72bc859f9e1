"""Multi-material stiffness interpolation.

Three schemes map the per-element design variables ``gamma`` (one column per
candidate material) to a Young's modulus:

``pnorm_mapping``
    phi_i = ||gamma||_p / (||gamma||_1 + delta) * gamma_i,
    E = sum_i phi_i**n (E_i - E_void) + E_void
``extended_simp``
    hierarchical products, phi_1 = g_1 (1 - g_2), phi_2 = g_1 g_2 (1 - g_3), ...,
    phi_NM = g_1 ... g_NM with g_j = gamma_j**n, and E = sum_i phi_i (E_i - E_void) + E_void
``dmo``
    phi_i = g_i prod_{j != i} (1 - g_j), E as for ``extended_simp``

Every function accepts either a single element (shape ``(NM,)``) or a stack of
elements (shape ``(NE, NM)``) and is vectorized over the leading axis.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class SchemeKind(str, enum.Enum):
    PNORM = "pnorm_mapping"
    SIMP = "extended_simp"
    DMO = "dmo"

    @classmethod
    def parse(cls, value) -> "SchemeKind":
        if isinstance(value, cls):
            return value
        aliases = {"pnorm": cls.PNORM, "simp": cls.SIMP}
        try:
            return aliases.get(value) or cls(value)
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown scheme {value!r} (expected one of {names})") from None


@dataclass(frozen=True)
class MaterialSet:
    """Candidate materials and the interpolation parameters."""

    moduli: tuple[float, ...]
    e_void: float = 1e-9
    penal_n: float = 3.0
    norm_p: float = 6.0
    delta: float = 1e-9
    _dE: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        moduli = tuple(float(e) for e in np.atleast_1d(self.moduli))
        object.__setattr__(self, "moduli", moduli)
        if len(moduli) < 1:
            raise ValueError("at least one material is required")
        if not self.e_void > 0:
            raise ValueError("e_void must be positive")
        if any(e <= self.e_void for e in moduli):
            raise ValueError("every modulus must exceed e_void")
        if self.penal_n < 1:
            raise ValueError("penal_n must be >= 1")
        if self.norm_p < 1:
            raise ValueError("norm_p must be >= 1")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        object.__setattr__(self, "_dE", np.array(moduli) - self.e_void)

    @property
    def nm(self) -> int:
        return len(self.moduli)


def _as_2d(gamma):
    g = np.asarray(gamma, dtype=float)
    return np.atleast_2d(g), g.ndim == 1


def _restore(a, single):
    return a[0] if single else a


def _pnorm_parts(g, p, delta):
    # N = ||g||_p, D = ||g||_1 + delta; dN/dg_j = (g_j / N)**(p-1), 0 where N == 0
    norm_p = np.sum(g**p, axis=1) ** (1.0 / p)
    denom = np.sum(g, axis=1) + delta
    safe = np.where(norm_p > 0, norm_p, 1.0)
    dnorm = np.where(norm_p[:, None] > 0, (g / safe[:, None]) ** (p - 1), 0.0)
    return norm_p, denom, dnorm


def weights_pnorm(gamma, mats: MaterialSet):
    g, single = _as_2d(gamma)
    norm_p, denom, _ = _pnorm_parts(g, mats.norm_p, mats.delta)
    return _restore((norm_p / denom)[:, None] * g, single)


def _simp_weights(g):
    prefix = np.cumprod(g, axis=1)
    phi = prefix.copy()
    phi[:, :-1] *= 1.0 - g[:, 1:]
    return phi


def _dmo_weights(g):
    nm = g.shape[1]
    phi = g.copy()
    for i in range(nm):
        for j in range(nm):
            if j != i:
                phi[:, i] *= 1.0 - g[:, j]
    return phi


def weights_extended_simp(gamma, mats: MaterialSet):
    g, single = _as_2d(gamma)
    return _restore(_simp_weights(g**mats.penal_n), single)


def weights_dmo(gamma, mats: MaterialSet):
    g, single = _as_2d(gamma)
    return _restore(_dmo_weights(g**mats.penal_n), single)


def weights(gamma, mats: MaterialSet, scheme):
    scheme = SchemeKind.parse(scheme)
    if scheme is SchemeKind.PNORM:
        return weights_pnorm(gamma, mats)
    if scheme is SchemeKind.SIMP:
        return weights_extended_simp(gamma, mats)
    return weights_dmo(gamma, mats)


def modulus(gamma, mats: MaterialSet, scheme):
    """Interpolated Young's modulus per element."""
    scheme = SchemeKind.parse(scheme)
    phi, single = _as_2d(weights(gamma, mats, scheme))
    if scheme is SchemeKind.PNORM:
        phi = phi**mats.penal_n
    return _restore(phi @ mats._dE + mats.e_void, single)


def _product_grad(g, dE, kind):
    """d/dg_k of sum_i dE_i * phi_i(g) for the product-form schemes."""
    ne, nm = g.shape
    grad = np.zeros_like(g)
    for k in range(nm):
        if kind is SchemeKind.SIMP:
            # sum_i c_i prod_{j<=i} g_j with c_1 = dE_1, c_i = dE_i - dE_{i-1}
            coef = np.diff(dE, prepend=0.0)
            partial = np.ones(ne)
            for j in range(k):
                partial = partial * g[:, j]
            acc = coef[k] * partial
            for i in range(k + 1, nm):
                partial = partial * g[:, i]
                acc = acc + coef[i] * partial
            grad[:, k] = acc
        else:
            # dphi_k/dg_k = prod_{j!=k}(1-g_j); dphi_i/dg_k = -g_i prod_{j!=i,k}(1-g_j)
            others = np.ones(ne)
            for j in range(nm):
                if j != k:
                    others = others * (1.0 - g[:, j])
            acc = dE[k] * others
            for i in range(nm):
                if i == k:
                    continue
                term = g[:, i].copy()
                for j in range(nm):
                    if j != i and j != k:
                        term *= 1.0 - g[:, j]
                acc = acc - dE[i] * term
            grad[:, k] = acc
    return grad


def modulus_gradient(gamma, mats: MaterialSet, scheme):
    """Analytic dE/dgamma_i, same shape as ``gamma``."""
    scheme = SchemeKind.parse(scheme)
    g, single = _as_2d(gamma)
    n = mats.penal_n
    dE = mats._dE
    if scheme is SchemeKind.PNORM:
        norm_p, denom, dnorm = _pnorm_parts(g, mats.norm_p, mats.delta)
        ratio = norm_p / denom
        phi = ratio[:, None] * g
        # w_i = n phi_i^(n-1) dE_i; dE/dg_j = sum_i w_i dphi_i/dg_j
        w = n * phi ** (n - 1) * dE
        s = np.sum(w * g, axis=1)
        grad = (dnorm / denom[:, None]) * s[:, None] + w * ratio[:, None] - (norm_p / denom**2 * s)[:, None]
    else:
        grad = _product_grad(g**n, dE, scheme) * n * g ** (n - 1)
    return _restore(grad, single)


def volume_fractions(gamma, scheme):
    """Per-element share of each material counted by the volume constraints.

    For the mapping scheme the design variable itself marks the material. The
    product schemes use their weights without penalization, so a variable that
    only selects among materials carries no volume of its own.
    """
    scheme = SchemeKind.parse(scheme)
    g, single = _as_2d(gamma)
    if scheme is SchemeKind.PNORM:
        return _restore(g.copy(), single)
    if scheme is SchemeKind.SIMP:
        return _restore(_simp_weights(g), single)
    return _restore(_dmo_weights(g), single)


def volume_fractions_vjp(gamma, scheme, cotangent):
    """Pull a cotangent on ``volume_fractions`` back to ``gamma``.

    ``cotangent`` has the shape of ``gamma``; entry ``(e, i)`` is the weight on
    material ``i``'s fraction in element ``e``.
    """
    scheme = SchemeKind.parse(scheme)
    g, single = _as_2d(gamma)
    c, _ = _as_2d(cotangent)
    if scheme is SchemeKind.PNORM:
        return _restore(c.copy(), single)
    ne, nm = g.shape
    out = np.zeros_like(g)
    # columns are independent linear functionals, so reuse the modulus gradient
    # with a one-hot dE per material
    for i in range(nm):
        unit = np.zeros(nm)
        unit[i] = 1.0
        out += c[:, i : i + 1] * _product_grad(g, unit, scheme)
    return _restore(out, single)
