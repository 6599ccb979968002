"""Analytic matrix functions on the torus, parameter families, cocycles.

Representations:

* :class:`AnalyticTorusMatrix` -- truncated Fourier series of an m x m
  matrix function on T^d, with the strip-weighted coefficient norm
  ``|f|_h = sum_k ||f_hat(k)|| e^{2 pi |k| h}`` (operator 2-norm, |k| the
  l1 norm of the multi-index).
* :class:`ParamFamily` / :class:`TorusParamFamily` -- analytic dependence
  on a real parameter stored as Chebyshev data on an interval cell;
  derivatives come from differentiating the interpolant, sup-norms over a
  complex neighborhood from sampling the covering Bernstein ellipse.
* :class:`Cocycle` -- the skew product (x, u) -> (x + alpha, A(x) u).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as _cheb

from . import _kernels
from .errors import DiophantineError, SingularFactorError, StripOverreachError

TWO_PI = 2.0 * math.pi
COEFF_PRUNE_REL = 1e-18  # relative floor below which Fourier modes are dropped


# ---------------------------------------------------------------------------
# frequencies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Frequency:
    """A rotation vector with an empirically fitted Diophantine certificate.

    The certificate states dist(<k, alpha>, Z) >= gamma / |k|^tau for all
    0 < |k| <= k_max_checked and is verified by direct enumeration; nothing
    is claimed beyond that finite range.
    """

    alpha: np.ndarray
    gamma: float
    tau: float
    k_max_checked: int

    @property
    def dim(self) -> int:
        return len(self.alpha)

    @staticmethod
    def fit(alpha, k_max: int = 10_000) -> "Frequency":
        """Fit (gamma, tau): smallest tau on the record envelope, then the
        largest gamma valid over the checked range."""
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        norms, dists = _divisor_table(alpha, k_max)
        if dists.min() < 1e-12:
            k_bad = int(norms[np.argmin(dists)])
            raise DiophantineError(
                f"frequency looks rational: dist(<k,alpha>,Z)={dists.min():.3e} at |k|={k_bad}"
            )
        # record-low envelope of the small divisors
        order = np.argsort(norms, kind="stable")
        n_sorted, d_sorted = norms[order], dists[order]
        running = np.minimum.accumulate(d_sorted)
        rec = np.ones(len(d_sorted), dtype=bool)
        rec[1:] = d_sorted[1:] <= running[:-1]
        ln_k = np.log(n_sorted[rec])
        ln_d = np.log(d_sorted[rec])
        if rec.sum() >= 2:
            slope = np.polyfit(ln_k, ln_d, 1)[0]
            tau = max(-slope, len(alpha) - 1 + 1e-3)
        else:
            tau = float(len(alpha))
        gamma = float(np.min(dists * norms**tau))
        return Frequency(alpha, gamma, float(tau), k_max)

    def check_certificate(self, k_max: int | None = None) -> bool:
        k_max = k_max or self.k_max_checked
        norms, dists = _divisor_table(self.alpha, k_max)
        return bool(np.all(dists >= self.gamma / norms**self.tau - 1e-15))

    def divisor_floor(self, k_norm: float) -> float:
        """Certified lower bound gamma / |k|^tau (valid for |k| <= checked)."""
        return self.gamma / max(k_norm, 1.0) ** self.tau

    def phase(self, k) -> complex:
        """e^{2 pi i <k, alpha>}."""
        return np.exp(2j * math.pi * float(np.dot(k, self.alpha)))


def _divisor_table(alpha: np.ndarray, k_max: int):
    d = len(alpha)
    if d == 1:
        ks = np.arange(1, k_max + 1, dtype=float)
        vals = ks * alpha[0]
        dists = np.abs(vals - np.round(vals))
        return ks, dists
    k_max = min(k_max, 128)
    grids = np.meshgrid(*([np.arange(-k_max, k_max + 1)] * d), indexing="ij")
    ks = np.stack([g.ravel() for g in grids], axis=1)
    norms = np.abs(ks).sum(axis=1)
    keep = (norms > 0) & (norms <= k_max)
    ks, norms = ks[keep], norms[keep]
    vals = ks @ alpha
    dists = np.abs(vals - np.round(vals))
    return norms.astype(float), dists


GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
SILVER = math.sqrt(2.0) - 1.0
# real root of x^3 - x - 1, reduced mod 1
CUBIC = 1.3247179572447460 - 1.0

NAMED_FREQUENCIES = {"golden": GOLDEN, "silver": SILVER, "cubic": CUBIC}


# ---------------------------------------------------------------------------
# torus matrices
# ---------------------------------------------------------------------------

class AnalyticTorusMatrix:
    """Matrix-valued function on T^d stored as truncated Fourier data.

    ``modes`` is an (n_modes, d) integer array, ``coeffs`` the matching
    (n_modes, m, m) complex array.  Instances are immutable by convention;
    all arithmetic returns new objects.
    """

    __slots__ = ("modes", "coeffs", "h_nominal", "dim_d", "dim_m")

    def __init__(self, modes, coeffs, h_nominal: float, canonical: bool = False):
        modes = np.asarray(modes, dtype=np.int64).reshape(-1, np.shape(modes)[-1] if np.ndim(modes) > 1 else 1)
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.ndim == 2:
            coeffs = coeffs[None]
        if not canonical:
            modes, coeffs = _merge_modes(modes, coeffs)
        self.modes = modes
        self.coeffs = coeffs
        self.h_nominal = float(h_nominal)
        self.dim_d = modes.shape[1]
        self.dim_m = coeffs.shape[1]

    # -- constructors ------------------------------------------------------
    @staticmethod
    def constant(mat, d: int = 1, h_nominal: float = 1.0) -> "AnalyticTorusMatrix":
        mat = np.atleast_2d(np.asarray(mat, dtype=np.complex128))
        return AnalyticTorusMatrix(np.zeros((1, d), dtype=np.int64), mat[None], h_nominal)

    @staticmethod
    def zero(m: int, d: int = 1, h_nominal: float = 1.0) -> "AnalyticTorusMatrix":
        return AnalyticTorusMatrix.constant(np.zeros((m, m)), d, h_nominal)

    @staticmethod
    def from_mode_dict(entries: dict, m: int, d: int = 1, h_nominal: float = 1.0):
        """entries: {multi-index tuple (or int for d=1): (m, m) matrix}."""
        modes, coeffs = [], []
        for k, c in entries.items():
            k = (k,) if np.isscalar(k) else tuple(k)
            modes.append(k)
            c = np.asarray(c, dtype=np.complex128)
            coeffs.append(c * np.eye(m) if c.ndim == 0 else c)
        if not modes:
            return AnalyticTorusMatrix.zero(m, d, h_nominal)
        return AnalyticTorusMatrix(np.array(modes), np.array(coeffs), h_nominal)

    # -- basic queries -------------------------------------------------------
    def mode_norms(self) -> np.ndarray:
        """l1 order |k| of each stored mode."""
        return np.abs(self.modes).sum(axis=1)

    def support_radius(self) -> int:
        return int(self.mode_norms().max(initial=0))

    def coeff(self, k) -> np.ndarray:
        k = np.atleast_1d(np.asarray(k, dtype=np.int64))
        hit = np.all(self.modes == k, axis=1)
        if hit.any():
            return self.coeffs[np.argmax(hit)].copy()
        return np.zeros((self.dim_m, self.dim_m), dtype=np.complex128)

    def eval(self, theta) -> np.ndarray:
        """Evaluate at one torus point or a batch of shape (..., d)."""
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim <= 1
        theta = np.atleast_2d(theta)
        phases = np.exp(2j * math.pi * (theta @ self.modes.T))
        out = np.einsum("nk,kij->nij", phases, self.coeffs)
        return out[0] if single else out

    # -- arithmetic ----------------------------------------------------------
    def __add__(self, other):
        other = self._coerce(other)
        return AnalyticTorusMatrix(
            np.vstack([self.modes, other.modes]),
            np.concatenate([self.coeffs, other.coeffs]),
            min(self.h_nominal, other.h_nominal),
        )

    def __sub__(self, other):
        return self + (self._coerce(other) * (-1.0))

    def __mul__(self, scalar):
        return AnalyticTorusMatrix(self.modes, self.coeffs * scalar, self.h_nominal, canonical=True)

    __rmul__ = __mul__

    def _coerce(self, other):
        if isinstance(other, AnalyticTorusMatrix):
            return other
        return AnalyticTorusMatrix.constant(other, self.dim_d, self.h_nominal)

    def matmul(self, other) -> "AnalyticTorusMatrix":
        """Pointwise matrix product; Fourier modes convolve."""
        other = self._coerce(other)
        ka, kb = self.modes, other.modes
        sums = (ka[:, None, :] + kb[None, :, :]).reshape(-1, self.dim_d)
        prod = np.einsum("aij,bjl->abil", self.coeffs, other.coeffs).reshape(
            -1, self.dim_m, self.dim_m
        )
        out = AnalyticTorusMatrix(sums, prod, min(self.h_nominal, other.h_nominal))
        return out.prune()

    def shifted(self, alpha) -> "AnalyticTorusMatrix":
        """f(. + alpha): multiplies mode k by e^{2 pi i <k, alpha>}."""
        phases = np.exp(2j * math.pi * (self.modes @ np.atleast_1d(alpha)))
        return AnalyticTorusMatrix(self.modes, self.coeffs * phases[:, None, None],
                                   self.h_nominal, canonical=True)

    def lmul_const(self, c) -> "AnalyticTorusMatrix":
        """C f(theta) for a constant matrix C."""
        c = np.atleast_2d(np.asarray(c, dtype=np.complex128))
        return AnalyticTorusMatrix(self.modes, np.einsum("ij,kjl->kil", c, self.coeffs),
                                   self.h_nominal, canonical=True)

    def rmul_const(self, c) -> "AnalyticTorusMatrix":
        """f(theta) C for a constant matrix C."""
        c = np.atleast_2d(np.asarray(c, dtype=np.complex128))
        return AnalyticTorusMatrix(self.modes, np.einsum("kij,jl->kil", self.coeffs, c),
                                   self.h_nominal, canonical=True)

    def mode_shifted(self, shift, amplitude: complex = 1.0) -> "AnalyticTorusMatrix":
        """Multiply by amplitude * e^{2 pi i <shift, theta>} (exact mode shift)."""
        shift = np.atleast_1d(np.asarray(shift, dtype=np.int64))
        return AnalyticTorusMatrix(self.modes + shift[None, :], self.coeffs * amplitude,
                                   self.h_nominal, canonical=True)

    def prune(self, rel_tol: float = COEFF_PRUNE_REL) -> "AnalyticTorusMatrix":
        mags = np.abs(self.coeffs).max(axis=(1, 2))
        top = mags.max(initial=0.0)
        keep = mags > rel_tol * top if top > 0 else mags > 0
        if not keep.any():
            return AnalyticTorusMatrix.zero(self.dim_m, self.dim_d, self.h_nominal)
        return AnalyticTorusMatrix(self.modes[keep], self.coeffs[keep],
                                   self.h_nominal, canonical=True)

    def truncated(self, n: int):
        """Split into (modes with |k| <= n, modes with |k| > n); low + high = f."""
        low = self.mode_norms() <= n
        mk = lambda sel: (
            AnalyticTorusMatrix(self.modes[sel], self.coeffs[sel], self.h_nominal, canonical=True)
            if sel.any() else AnalyticTorusMatrix.zero(self.dim_m, self.dim_d, self.h_nominal)
        )
        return mk(low), mk(~low)

    # -- norms / io ------------------------------------------------------------
    def norm_h(self, h: float) -> float:
        if h > self.h_nominal + 1e-15:
            raise StripOverreachError(f"h={h} exceeds certified strip {self.h_nominal}")
        ops = _op_norms(self.coeffs)
        return float(np.sum(ops * np.exp(TWO_PI * self.mode_norms() * h)))

    def to_json_dict(self) -> dict:
        return {
            "m": self.dim_m,
            "d": self.dim_d,
            "coeffs": [
                {"k": [int(x) for x in k], "re": c.real.tolist(), "im": c.imag.tolist()}
                for k, c in zip(self.modes, self.coeffs)
            ],
            "h": self.h_nominal,
        }

    @staticmethod
    def from_json_dict(data: dict) -> "AnalyticTorusMatrix":
        modes = np.array([e["k"] for e in data["coeffs"]], dtype=np.int64)
        coeffs = np.array(
            [np.array(e["re"]) + 1j * np.array(e["im"]) for e in data["coeffs"]],
            dtype=np.complex128,
        )
        if len(modes) == 0:
            return AnalyticTorusMatrix.zero(data["m"], data["d"], data["h"])
        return AnalyticTorusMatrix(modes, coeffs, data["h"])

    def __repr__(self):
        return (f"AnalyticTorusMatrix(m={self.dim_m}, d={self.dim_d}, "
                f"modes={len(self.modes)}, h={self.h_nominal})")


def _merge_modes(modes, coeffs):
    uniq, inv = np.unique(modes, axis=0, return_inverse=True)
    merged = np.zeros((len(uniq),) + coeffs.shape[1:], dtype=np.complex128)
    np.add.at(merged, inv.ravel(), coeffs)
    return uniq, merged


def _op_norms(coeffs: np.ndarray) -> np.ndarray:
    if coeffs.shape[1] == 1:
        return np.abs(coeffs[:, 0, 0])
    return np.linalg.svd(coeffs, compute_uv=False)[:, 0]


# ---------------------------------------------------------------------------
# Chebyshev helpers (shared by the parameter families)
# ---------------------------------------------------------------------------

def cheb_nodes(interval, n: int) -> np.ndarray:
    """n Chebyshev extreme points mapped to the interval (endpoints included)."""
    a, b = interval
    x = _cheb.chebpts2(n) if n > 1 else np.array([0.0])
    return 0.5 * (a + b) + 0.5 * (b - a) * x


def cheb_fit(interval, values: np.ndarray) -> np.ndarray:
    """Interpolating Chebyshev coefficients from values at cheb_nodes."""
    n = values.shape[0]
    if n == 1:
        return values.copy()
    x = _cheb.chebpts2(n)
    v = _cheb.chebvander(x, n - 1)
    flat = values.reshape(n, -1)
    coef = np.linalg.solve(v, flat)
    return coef.reshape(values.shape)


def cheb_eval(interval, coef: np.ndarray, z):
    """Evaluate Chebyshev coefficients at real or complex points."""
    a, b = interval
    z = np.asarray(z)
    zs = (2.0 * z - (a + b)) / (b - a) if b != a else np.zeros_like(z)
    out = _cheb.chebval(zs, coef)  # shape coef.shape[1:] + z.shape
    if z.ndim > 0 and coef.ndim > 1:
        out = np.moveaxis(out, -1, 0)
    return out


def cheb_derivative(interval, coef: np.ndarray, order: int = 1) -> np.ndarray:
    a, b = interval
    scl = 2.0 / (b - a) if b != a else 0.0
    flat = coef.reshape(coef.shape[0], -1)
    der = _cheb.chebder(flat, m=order, scl=scl)
    if der.shape[0] == 0:
        der = np.zeros((1, flat.shape[1]), dtype=flat.dtype)
    return der.reshape((der.shape[0],) + coef.shape[1:])


def bernstein_ellipse(interval, delta: float, samples: int) -> np.ndarray:
    """Boundary samples of the Bernstein ellipse covering W_delta(interval).

    The ellipse has foci at the interval endpoints and semi-major axis
    (in standardized coordinates) 1 + 2 delta / (b - a), so it contains the
    full delta-neighborhood of the interval.
    """
    a, b = interval
    if b == a:
        return np.array([a + delta, a - delta, a + 1j * delta, a - 1j * delta])
    ds = 2.0 * delta / (b - a)
    rho = 1.0 + ds + math.sqrt(ds * (2.0 + ds))
    phi = np.linspace(0.0, TWO_PI, samples, endpoint=False)
    zs = 0.5 * (rho * np.exp(1j * phi) + np.exp(-1j * phi) / rho)
    return 0.5 * (a + b) + 0.5 * (b - a) * zs


# ---------------------------------------------------------------------------
# parameter families
# ---------------------------------------------------------------------------

class ParamFamily:
    """Scalar- or matrix-valued analytic function of a real parameter.

    Stored as values at Chebyshev extreme points of ``interval``; the
    interpolant supplies evaluation anywhere in the covering Bernstein
    ellipse and derivatives of any order.
    """

    def __init__(self, interval, values: np.ndarray, delta_nominal: float):
        self.interval = (float(interval[0]), float(interval[1]))
        self.values = np.asarray(values, dtype=np.complex128)
        self.delta_nominal = float(delta_nominal)
        self._coef = None

    @staticmethod
    def from_callable(fn, interval, degree: int = 64, delta_nominal: float | None = None):
        nodes = cheb_nodes(interval, degree + 1)
        vals = np.array([np.asarray(fn(x), dtype=np.complex128) for x in nodes])
        if delta_nominal is None:
            delta_nominal = 0.5 * (interval[1] - interval[0]) if interval[1] > interval[0] else 1.0
        return ParamFamily(interval, vals, delta_nominal)

    @staticmethod
    def constant(value, interval, delta_nominal: float = 1.0):
        value = np.asarray(value, dtype=np.complex128)
        return ParamFamily(interval, np.array([value]), delta_nominal)

    @property
    def degree(self) -> int:
        return self.values.shape[0] - 1

    @property
    def nodes(self) -> np.ndarray:
        return cheb_nodes(self.interval, self.values.shape[0])

    @property
    def coef(self) -> np.ndarray:
        if self._coef is None:
            self._coef = cheb_fit(self.interval, self.values)
        return self._coef

    def eval(self, lam):
        return cheb_eval(self.interval, self.coef, lam)

    def derivative(self, order: int = 1) -> "ParamFamily":
        der = cheb_derivative(self.interval, self.coef, order)
        nodes = self.nodes
        vals = cheb_eval(self.interval, der, nodes)
        vals = np.asarray(vals, dtype=np.complex128)
        out = ParamFamily(self.interval, vals, self.delta_nominal)
        return out

    def map_nodes(self, fn) -> "ParamFamily":
        vals = np.array([np.asarray(fn(v), dtype=np.complex128) for v in self.values])
        return ParamFamily(self.interval, vals, self.delta_nominal)

    def norm_delta(self, delta: float, samples: int = 128) -> float:
        """Lower bound of sup over W_delta via ellipse-boundary sampling."""
        if delta > self.delta_nominal + 1e-15:
            raise StripOverreachError(f"delta={delta} exceeds certificate {self.delta_nominal}")
        zs = bernstein_ellipse(self.interval, delta, samples)
        vals = cheb_eval(self.interval, self.coef, zs)
        vals = np.asarray(vals)
        if vals.ndim == 1:
            return float(np.abs(vals).max())
        return float(_op_norms(vals.reshape(len(zs), *vals.shape[1:])).max())

    def to_json_dict(self) -> dict:
        c = self.coef
        return {
            "interval": list(self.interval),
            "degree": self.degree,
            "cheb_re": c.real.tolist(),
            "cheb_im": c.imag.tolist(),
            "delta": self.delta_nominal,
        }


class TorusParamFamily:
    """AnalyticTorusMatrix-valued analytic family over a parameter cell.

    ``node_coeffs`` has shape (n_nodes, n_modes, m, m): Fourier data of the
    torus function at each Chebyshev node of the cell.
    """

    def __init__(self, interval, modes, node_coeffs, h_nominal, delta_nominal):
        self.interval = (float(interval[0]), float(interval[1]))
        self.modes = np.asarray(modes, dtype=np.int64)
        self.node_coeffs = np.asarray(node_coeffs, dtype=np.complex128)
        self.h_nominal = float(h_nominal)
        self.delta_nominal = float(delta_nominal)

    @staticmethod
    def from_torus_matrices(interval, mats, delta_nominal):
        """Build from AnalyticTorusMatrix values at the cell's Chebyshev nodes."""
        all_modes = np.unique(np.vstack([t.modes for t in mats]), axis=0)
        m = mats[0].dim_m
        nc = np.zeros((len(mats), len(all_modes), m, m), dtype=np.complex128)
        index = {tuple(k): i for i, k in enumerate(all_modes)}
        for n, t in enumerate(mats):
            for k, c in zip(t.modes, t.coeffs):
                nc[n, index[tuple(k)]] = c
        return TorusParamFamily(interval, all_modes, nc,
                                min(t.h_nominal for t in mats), delta_nominal)

    @staticmethod
    def constant_in_lambda(interval, torus_mat: AnalyticTorusMatrix, delta_nominal, n_nodes=1):
        nc = np.repeat(torus_mat.coeffs[None], n_nodes, axis=0)
        return TorusParamFamily(interval, torus_mat.modes, nc,
                                torus_mat.h_nominal, delta_nominal)

    @property
    def n_nodes(self) -> int:
        return self.node_coeffs.shape[0]

    @property
    def dim_m(self) -> int:
        return self.node_coeffs.shape[2]

    @property
    def dim_d(self) -> int:
        return self.modes.shape[1]

    def at_node(self, i: int) -> AnalyticTorusMatrix:
        return AnalyticTorusMatrix(self.modes, self.node_coeffs[i], self.h_nominal)

    def node_list(self):
        return [self.at_node(i) for i in range(self.n_nodes)]

    def eval(self, lam) -> AnalyticTorusMatrix:
        coef = cheb_fit(self.interval, self.node_coeffs)
        c = cheb_eval(self.interval, coef, lam)
        return AnalyticTorusMatrix(self.modes, c, self.h_nominal)

    def map_nodes(self, fn) -> "TorusParamFamily":
        mats = [fn(self.at_node(i)) for i in range(self.n_nodes)]
        return TorusParamFamily.from_torus_matrices(self.interval, mats, self.delta_nominal)

    def norm_h_delta_value(self, h: float, delta: float, samples: int = 128) -> float:
        if h > self.h_nominal + 1e-15:
            raise StripOverreachError(f"h={h} exceeds certified strip {self.h_nominal}")
        if delta > self.delta_nominal + 1e-15:
            raise StripOverreachError(f"delta={delta} exceeds certificate {self.delta_nominal}")
        coef = cheb_fit(self.interval, self.node_coeffs)
        zs = bernstein_ellipse(self.interval, delta, samples)
        vals = cheb_eval(self.interval, coef, zs)  # (s, n_modes, m, m)
        weights = np.exp(TWO_PI * np.abs(self.modes).sum(axis=1) * h)
        s, nm, m, _ = vals.shape
        ops = _op_norms(vals.reshape(s * nm, m, m)).reshape(s, nm)
        return float((ops * weights[None, :]).sum(axis=1).max())

    def prune(self, rel_tol: float = COEFF_PRUNE_REL) -> "TorusParamFamily":
        mags = np.abs(self.node_coeffs).max(axis=(0, 2, 3))
        top = mags.max(initial=0.0)
        keep = mags > rel_tol * top if top > 0 else mags > 0
        if not keep.any():
            keep = np.zeros(len(self.modes), dtype=bool)
            keep[np.argmin(np.abs(self.modes).sum(axis=1))] = True
            nc = np.zeros_like(self.node_coeffs[:, :1])
            return TorusParamFamily(self.interval, self.modes[keep], nc,
                                    self.h_nominal, self.delta_nominal)
        return TorusParamFamily(self.interval, self.modes[keep], self.node_coeffs[:, keep],
                                self.h_nominal, self.delta_nominal)


# ---------------------------------------------------------------------------
# norm operations (module-level API)
# ---------------------------------------------------------------------------

def norm_h(f: AnalyticTorusMatrix, h: float) -> float:
    """Strip-weighted coefficient norm |f|_h."""
    return f.norm_h(h)


@dataclass
class NormLowerBound:
    """Sampled sup-norm estimate; a lower bound of the true sup."""

    value: float
    ellipse_samples: int

    def __float__(self):
        return self.value


def norm_h_delta(f, h: float, delta: float, ellipse_samples: int = 128) -> NormLowerBound:
    """Sampled |f|_{h,delta} over the Bernstein ellipse covering W_delta.

    Sampling a finite boundary set yields a lower bound of the sup; the
    sample count travels with the result.
    """
    if ellipse_samples < 32:
        raise ValueError("ellipse_samples must be >= 32")
    if isinstance(f, TorusParamFamily):
        v = f.norm_h_delta_value(h, delta, ellipse_samples)
    elif isinstance(f, ParamFamily):
        v = f.norm_delta(delta, ellipse_samples)
    elif isinstance(f, AnalyticTorusMatrix):
        v = f.norm_h(h)
    else:
        raise TypeError(f"unsupported operand {type(f)!r}")
    return NormLowerBound(v, ellipse_samples)


# ---------------------------------------------------------------------------
# cocycles
# ---------------------------------------------------------------------------

@dataclass
class Cocycle:
    """(x, u) -> (x + alpha, A(x) u) with A = constant_part + perturbation."""

    freq: Frequency
    constant_part: np.ndarray
    perturbation: AnalyticTorusMatrix | None = None
    sing_tol: float = 1e-13

    def __post_init__(self):
        self.constant_part = np.atleast_2d(np.asarray(self.constant_part, dtype=np.complex128))
        det = abs(np.linalg.det(self.constant_part))
        if det < self.sing_tol:
            raise SingularFactorError(f"constant part singular: |det|={det:.3e}")

    @property
    def dim_m(self) -> int:
        return self.constant_part.shape[0]

    def matrix_at(self, theta) -> np.ndarray:
        a = self.constant_part
        if self.perturbation is not None:
            a = a + self.perturbation.eval(theta)
        return a

    def factor_stack(self, theta, n: int) -> np.ndarray:
        """A(theta + j alpha) for j = 0..n-1, shape (n, m, m)."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        js = np.arange(n)[:, None] * self.freq.alpha[None, :]
        thetas = theta[None, :] + js
        stack = np.broadcast_to(self.constant_part, (n,) + self.constant_part.shape).copy()
        if self.perturbation is not None:
            stack = stack + self.perturbation.eval(thetas)
        return stack


def iterate_cocycle(c: Cocycle, theta, n: int) -> np.ndarray:
    """Transfer product A(theta; n); A(theta; 0) = Id, inverses for n < 0."""
    m = c.dim_m
    if n == 0:
        return np.eye(m, dtype=np.complex128)
    if n > 0:
        stack = c.factor_stack(theta, n)
        out = np.eye(m, dtype=np.complex128)
        for a in stack:
            out = a @ out
        return out
    # A(theta; n) = A^{-1}(theta + n alpha) ... A^{-1}(theta - alpha) for n < 0
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    out = np.eye(m, dtype=np.complex128)
    for j in range(n, 0):
        a = c.matrix_at(theta + j * c.freq.alpha)
        if abs(np.linalg.det(a)) < c.sing_tol:
            raise SingularFactorError(f"singular factor at step {j} of backward iteration")
        out = out @ np.linalg.inv(a)
    return out


def _theta_grid(samples: int, d: int) -> np.ndarray:
    """Deterministic low-discrepancy torus sample points."""
    shifts = np.array([GOLDEN, SILVER, CUBIC, math.pi % 1.0][:d]) if d <= 4 else (
        np.arange(1, d + 1) * GOLDEN % 1.0)
    js = np.arange(samples)[:, None]
    return (0.1234567 + js * (shifts[None, :] + 1.0 / max(samples, 1))) % 1.0


def lyapunov_exponents(c: Cocycle, n: int, theta_samples: int = 4,
                       block: int = 65536) -> np.ndarray:
    """QR-renormalized estimates of the m Lyapunov exponents, descending.

    (1/n) mean over sampled theta of ln sigma_k(A(theta; n)), computed with
    periodic QR renormalization so arbitrarily long products never overflow.
    """
    if n < 1 or theta_samples < 1:
        raise ValueError("need n >= 1 and theta_samples >= 1")
    m = c.dim_m
    acc = np.zeros(m)
    for theta in _theta_grid(theta_samples, c.freq.dim):
        logs = np.zeros(m)
        q = np.eye(m, dtype=np.complex128)
        done = 0
        while done < n:
            cnt = min(block, n - done)
            stack = c.factor_stack(theta + done * c.freq.alpha, cnt)
            stack[0] = stack[0] @ q  # continue from the carried frame
            lg, q = _kernels.qr_growth(stack)
            logs += lg
            done += cnt
        if not np.all(np.isfinite(logs)):
            raise OverflowError(f"renormalized growth diverged: logs={logs}")
        acc += np.sort(logs)[::-1]
    return acc / (n * theta_samples)


def fibred_entropy(c: Cocycle, n: int, theta_samples: int = 4,
                   zero_tol: float | None = None) -> float:
    """Sum of the positive Lyapunov exponents (exterior-power growth rate)."""
    gammas = lyapunov_exponents(c, n, theta_samples)
    if zero_tol is None:
        zero_tol = 10.0 * math.log(max(n, 2)) / n
    positive = gammas[gammas > zero_tol]
    return float(positive.sum()) if len(positive) else 0.0


def conjugated_cocycle(c: Cocycle, b: AnalyticTorusMatrix) -> Cocycle:
    """B(.+alpha)^{-1} A(.) B(.), sampled back onto Fourier modes.

    Used by invariance tests only; the KAM engine tracks conjugations
    explicitly.
    """
    n_grid = 4 * (max(c.perturbation.support_radius() if c.perturbation else 0,
                      b.support_radius()) + 1) + 8
    if c.freq.dim != 1:
        raise NotImplementedError("sampling-based conjugation implemented for d=1")
    thetas = np.arange(n_grid) / n_grid
    vals = []
    for t in thetas:
        bm = b.eval([t])
        bp = b.eval([t + c.freq.alpha[0]])
        vals.append(np.linalg.solve(bp, c.matrix_at([t]) @ bm))
    vals = np.array(vals)
    spec = np.fft.ifft(vals, axis=0)
    half = n_grid // 2
    ks = np.arange(n_grid)
    ks[ks > half] -= n_grid
    const = spec[0]
    rest = AnalyticTorusMatrix(ks[1:, None], spec[1:], c.perturbation.h_nominal if c.perturbation else 1.0)
    return Cocycle(c.freq, const, rest.prune(1e-12))


def serialize(obj) -> str:
    """JSON text for the torus-matrix / family schema (round-trip faithful)."""
    return json.dumps(obj.to_json_dict())


def deserialize_torus_matrix(text: str) -> AnalyticTorusMatrix:
    return AnalyticTorusMatrix.from_json_dict(json.loads(text))
