"""Characteristic polynomials, twisted resultants, and the function g.

Resultants are computed through Sylvester determinants with partial
pivoting; eigenvalue root products appear only in test oracles.  For the
product over ordered eigenvalue pairs

    g(lambda, u) = prod_{i != j} (sigma_i - e^{2 pi i u} sigma_j)

two root-free routes are used: the discriminant-style resultant
Res(chi, dchi/dX) at integer u, and Res(chi, chi; u) divided by
det(A) (1 - e^{2 pi i u})^m otherwise, switching to a factored form when
1 - e^{2 pi i u} is too small to divide by safely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NearSingularError
from .fourier import ParamFamily

N_CAP = 64  # polynomial degree cap; engine matrices stay m <= 8
_MONIC_TOL = 1e-12
_TWIST_SWITCH = 1e-4  # |1 - e^{2 pi i u}| below this uses the factored route


@dataclass
class Poly:
    """Dense polynomial, leading coefficient first: a0 X^n + ... + an."""

    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=np.complex128))
        if self.degree > N_CAP:
            raise ValueError(f"degree {self.degree} exceeds cap {N_CAP}")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_monic(self) -> bool:
        return abs(self.coeffs[0] - 1.0) < _MONIC_TOL

    def sup_norm(self) -> float:
        """|chi| = sup_i |a_i|."""
        return float(np.abs(self.coeffs).max())

    def eval(self, x):
        return np.polyval(self.coeffs, x)

    def derivative(self) -> "Poly":
        if self.degree == 0:
            return Poly(np.zeros(1))
        return Poly(np.polyder(self.coeffs))

    def monic(self) -> "Poly":
        lead = self.coeffs[0]
        if abs(lead) < _MONIC_TOL:
            raise NearSingularError("leading coefficient below tolerance")
        return Poly(self.coeffs / lead)

    def twisted(self, u: float) -> "Poly":
        """e^{2 pi i n u} chi(e^{-2 pi i u} X): roots rotate by e^{2 pi i u}."""
        j = np.arange(self.degree + 1)
        return Poly(self.coeffs * np.exp(2j * math.pi * u * j))


@dataclass
class EigenMultiset:
    """Eigenvalues with multiplicity, certified inside the annulus D(R)."""

    values: np.ndarray
    annulus_R: float

    def __post_init__(self):
        self.values = np.atleast_1d(np.asarray(self.values, dtype=np.complex128))
        mags = np.abs(self.values)
        r = self.annulus_R
        if r < 1.0 or mags.max() > r * (1 + 1e-12) or mags.min() < (1 - 1e-12) / r:
            raise ValueError(f"values leave the annulus D({r}): |z| in "
                             f"[{mags.min():.3e}, {mags.max():.3e}]")

    @staticmethod
    def from_matrix(a: np.ndarray, pad: float = 1e-9) -> "EigenMultiset":
        vals = np.linalg.eigvals(np.asarray(a, dtype=np.complex128))
        mags = np.abs(vals)
        if mags.min() <= 0:
            raise NearSingularError("matrix has a zero eigenvalue")
        r = max(1.0, mags.max(), 1.0 / mags.min()) + pad
        return EigenMultiset(vals, r)

    def __len__(self):
        return len(self.values)


def characteristic_poly(s: EigenMultiset) -> Poly:
    """Monic prod (X - z) over the multiset."""
    if len(s.values) == 0:
        return Poly(np.ones(1))
    return Poly(np.atleast_1d(np.poly(s.values)).astype(np.complex128))


def char_poly_of_matrix(a: np.ndarray) -> Poly:
    """Monic characteristic polynomial of a matrix (via its spectrum)."""
    a = np.atleast_2d(np.asarray(a, dtype=np.complex128))
    return Poly(np.poly(np.linalg.eigvals(a)).astype(np.complex128))


def sylvester_matrix(f: Poly, g: Poly, deg_f: int | None = None,
                     deg_g: int | None = None) -> np.ndarray:
    """Sylvester matrix with explicit formal degrees (leading zeros allowed)."""
    n = deg_f if deg_f is not None else f.degree
    m = deg_g if deg_g is not None else g.degree
    fa = np.zeros(n + 1, dtype=np.complex128)
    ga = np.zeros(m + 1, dtype=np.complex128)
    fa[n - f.degree:] = f.coeffs
    ga[m - g.degree:] = g.coeffs
    size = n + m
    s = np.zeros((size, size), dtype=np.complex128)
    for i in range(m):
        s[i, i : i + n + 1] = fa
    for i in range(n):
        s[m + i, i : i + m + 1] = ga
    return s


def sylvester_resultant(f: Poly, g: Poly, deg_f: int | None = None,
                        deg_g: int | None = None) -> complex:
    s = sylvester_matrix(f, g, deg_f, deg_g)
    if s.size == 0:
        return 1.0 + 0j
    return complex(np.linalg.det(s))


def resultant_twisted(chi1: Poly, chi2: Poly, u: float) -> complex:
    """Res(chi1, chi2; u) = prod (sigma_i - e^{2 pi i u} tau_j), root-free.

    Inputs are normalized monic so the Sylvester determinant equals the
    root product exactly.
    """
    c1, c2 = chi1.monic(), chi2.monic().twisted(u)
    return sylvester_resultant(c1, c2)


def resultant_plain(chi1: Poly, chi2: Poly) -> complex:
    """Res(chi1, chi2) = prod (sigma_i - tau_j) for monic-normalized inputs."""
    return sylvester_resultant(chi1.monic(), chi2.monic())


def _geometric_weights(m: int, u: float) -> np.ndarray:
    """q_j = (e^{2 pi i j u} - 1)/(e^{2 pi i u} - 1) as a stable geometric sum."""
    t = np.exp(2j * math.pi * u * np.arange(m))
    return np.cumsum(t)


def g_from_poly(chi: Poly, det_a: complex, u: float) -> complex:
    """g at one parameter value from the characteristic polynomial.

    Integer u: Res(chi, dchi/dX).  Otherwise Res(chi, chi; u) divided by
    det(A) (1 - e^{2 pi i u})^m, with the factored route when the divisor
    is tiny.
    """
    m = chi.degree
    if m <= 1:
        return 1.0 + 0j
    chi = chi.monic()
    frac = u - round(u)
    if abs(frac) < 1e-12:
        return sylvester_resultant(chi, chi.derivative())
    if abs(det_a) < 1e-300:
        raise NearSingularError("det A below tolerance in g evaluation")
    w = 1.0 - np.exp(2j * math.pi * u)
    if abs(w) >= _TWIST_SWITCH:
        return resultant_twisted(chi, chi, u) / (det_a * w**m)
    # Res(chi, chi; u) = (e^{2 pi i u} - 1)^m Res(chi, chi_tilde_u)
    return (-1.0) ** m * _factored_self_resultant(chi, u) / det_a


def _factored_self_resultant(chi: Poly, u: float) -> complex:
    m = chi.degree
    q = _geometric_weights(m, u)
    tilde = np.zeros(m + 1, dtype=np.complex128)
    tilde[1:] = chi.coeffs[1:] * q
    return sylvester_resultant(chi, Poly(tilde), deg_f=m, deg_g=m)


def g_function(a_family, lam: float, u: float) -> complex:
    """g(lambda, u) for a matrix family (ParamFamily or plain matrix)."""
    if isinstance(a_family, ParamFamily):
        a = a_family.eval(lam)
    elif callable(a_family):
        a = a_family(lam)
    else:
        a = a_family
    a = np.atleast_2d(np.asarray(a, dtype=np.complex128))
    det_a = complex(np.linalg.det(a))
    if abs(det_a) < 1e-13:
        raise NearSingularError(f"det A(lambda)={det_a:.3e} below tolerance")
    return g_from_poly(char_poly_of_matrix(a), det_a, u)


def g_of_multiset(values: np.ndarray, u: float) -> complex:
    """g for an explicit eigenvalue multiset, via the same root-free routes."""
    values = np.atleast_1d(np.asarray(values, dtype=np.complex128))
    chi = characteristic_poly(EigenMultiset(values, max(1.0, np.abs(values).max(),
                                                        1.0 / np.abs(values).min()) + 1e-9))
    return g_from_poly(chi, complex(np.prod(values)), u)


def poly_perturbation_bound(a: np.ndarray, a_prime: np.ndarray) -> float:
    """m! M^{m-1} ||A - A'||: sup coefficient distance of the char polys."""
    a = np.atleast_2d(np.asarray(a, dtype=np.complex128))
    ap = np.atleast_2d(np.asarray(a_prime, dtype=np.complex128))
    m = a.shape[0]
    big = max(1.0, _op2(a), _op2(ap))
    return math.factorial(m) * big ** (m - 1) * _op2(a - ap)


def resultant_difference_bound(chi1: Poly, chi1p: Poly, chi2: Poly, chi2p: Poly,
                               u: float) -> float:
    """(m1+m2+1)! (1+|chi1|)^{m2} (1+|chi2|)^{m1} max{|eta1|, |eta2|}."""
    m1, m2 = chi1.degree, chi2.degree
    if chi1p.degree != m1 or chi2p.degree != m2:
        raise ValueError("perturbed polynomials must keep their degrees")
    eta1 = float(np.abs(chi1p.coeffs - chi1.coeffs).max())
    eta2 = float(np.abs(chi2p.coeffs - chi2.coeffs).max())
    if max(eta1, eta2) > 1.0 + 1e-12:
        raise ValueError("perturbation exceeds the unit-size precondition")
    return (math.factorial(m1 + m2 + 1)
            * (1.0 + chi1.sup_norm()) ** m2
            * (1.0 + chi2.sup_norm()) ** m1
            * max(eta1, eta2))


def twisted_factorization_check(chi: Poly, u: float) -> tuple[complex, complex]:
    """Structural self-test: Res(chi,chi;u) vs its factored form.

    Returns both sides; they must agree to ~1e-9 relative for any monic chi
    and non-integer u.
    """
    if abs(u - round(u)) < 1e-12:
        raise ValueError("u must not be an integer")
    chi = chi.monic()
    lhs = resultant_twisted(chi, chi, u)
    m = chi.degree
    rhs = (np.exp(2j * math.pi * u) - 1.0) ** m * _factored_self_resultant(chi, u)
    return lhs, complex(rhs)


def resultant_is_zero(value: complex, chi1: Poly, chi2: Poly) -> bool:
    """Scale-aware near-zero classification for resultants."""
    scale = (1.0 + chi1.sup_norm()) ** chi2.degree * (1.0 + chi2.sup_norm()) ** chi1.degree
    return abs(value) < 1e-12 * scale


def _op2(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2))
