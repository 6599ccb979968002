"""Pyartli/transversality certificates, interval exclusion, constant calculus.

Certificates are empirical at grid resolution (no interval arithmetic) and
say so; the constant-propagation rules for products, factors and
decompositions are pure arithmetic carried in natural logs, since the
composed lower bounds underflow doubles immediately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CertificateError
from .fourier import ParamFamily
from .polyalg import g_function

_GRID_PAD = 1e-9
MAX_SEGMENTS = 4000  # constructive walk limit before the grid fallback


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

@dataclass
class PyartliCert:
    """Derivative bounds sup_{0..r+1} |d^j f| <= C, sup_{0..r} |d^j f| >= c."""

    C: float
    c: float
    r: int
    interval: tuple[float, float]

    def __post_init__(self):
        if self.c > self.C + 1e-12:
            raise CertificateError(f"c={self.c} exceeds C={self.C}")

    def validate(self, f: ParamFamily, grid: int = 4096, slack: float = 1e-9) -> bool:
        lo = _order_sup_table(f, self.interval, self.r + 1, grid)
        ok_c = np.max(lo[: self.r + 1], axis=0).min() >= self.c - slack - _GRID_PAD * self.C
        ok_C = lo.max() <= self.C * (1 + slack) + slack
        return bool(ok_c and ok_C)


@dataclass
class TransverseCert:
    """(M, delta, c, r)-transversality data, with log-space companions."""

    M: float
    delta: float
    c: float
    r: int
    log_M: float = field(default=None)  # type: ignore[assignment]
    log_c: float = field(default=None)  # type: ignore[assignment]
    underflow: bool = False
    interval: tuple[float, float] | None = None

    def __post_init__(self):
        if self.log_M is None:
            self.log_M = math.log(self.M) if self.M > 0 else -math.inf
        if self.log_c is None:
            self.log_c = math.log(self.c) if self.c > 0 else -math.inf
        if self.c == 0.0 and np.isfinite(self.log_c):
            self.underflow = True

    @staticmethod
    def from_logs(log_M: float, delta: float, log_c: float, r: int,
                  interval=None) -> "TransverseCert":
        m_val = math.exp(log_M) if log_M < 700 else math.inf
        c_val = math.exp(log_c) if log_c > -700 else 0.0
        return TransverseCert(m_val, delta, c_val, r, log_M, log_c,
                              underflow=(log_c <= -700), interval=interval)

    def to_json_dict(self) -> dict:
        return {
            "M": None if not np.isfinite(self.M) else self.M,
            "delta": self.delta,
            "c": self.c,
            "r": self.r,
            "log_M": self.log_M,
            "log_c": self.log_c,
            "underflow": self.underflow,
            "interval": list(self.interval) if self.interval else None,
        }


@dataclass
class ExclusionResult:
    """Disjoint intervals outside which |f| >= threshold."""

    intervals: list[tuple[float, float]]
    count_bound: int
    length_bound: float
    threshold: float
    method: str = "constructive"
    grid_points: int = 0

    def total_length(self) -> float:
        return sum(b - a for a, b in self.intervals)

    def contains(self, x: float) -> bool:
        return any(a <= x <= b for a, b in self.intervals)

    def validate_bounds(self):
        if len(self.intervals) > self.count_bound:
            raise CertificateError(
                f"{len(self.intervals)} intervals exceed the count bound {self.count_bound}")
        worst = max((b - a for a, b in self.intervals), default=0.0)
        if worst > self.length_bound * (1 + 1e-9):
            raise CertificateError(
                f"interval length {worst:.3e} exceeds bound {self.length_bound:.3e}")


def _order_sup_table(f: ParamFamily, interval, max_order: int, grid: int) -> np.ndarray:
    """|d^j f| on a uniform grid of the interval, orders 0..max_order."""
    xs = np.linspace(interval[0], interval[1], grid)
    rows = [np.abs(np.asarray(f.eval(xs)))]
    for j in range(1, max_order + 1):
        rows.append(np.abs(np.asarray(f.derivative(j).eval(xs))))
    return np.vstack(rows)


def pyartli_certify(f: ParamFamily, r: int, grid: int = 4096,
                    pad: float = 1e-6) -> PyartliCert:
    """Measure (C, c, r) for f on its interval from a dense grid."""
    table = _order_sup_table(f, f.interval, r + 1, grid)
    big_c = float(table.max()) * (1 + pad) + pad
    small_c = float(np.max(table[: r + 1], axis=0).min()) * (1 - pad)
    if small_c <= 0:
        raise CertificateError("grid lower bound c collapsed to zero")
    return PyartliCert(big_c, small_c, r, f.interval)


def transverse_certify(f: ParamFamily, delta: float, r: int,
                       grid: int = 4096, pad: float = 1e-6) -> TransverseCert:
    """Measure an (M, delta, c, r) certificate on (a - delta/2, b + delta/2)."""
    a, b = f.interval
    wide = (a - delta / 2.0, b + delta / 2.0)
    table = _order_sup_table(f, wide, r, grid)
    c = float(np.max(table[: r + 1], axis=0).min()) * (1 - pad)
    m_val = f.norm_delta(delta)
    if c <= 0:
        raise CertificateError("transversality floor collapsed to zero")
    return TransverseCert(m_val * (1 + pad), delta, c, r, interval=f.interval)


def pyartli_from_transverse(cert: TransverseCert, interval=None) -> PyartliCert:
    """Cauchy bridge: (M,delta,c,r)-transverse => ((r+1)! M / min{1, delta^{r+1}}, c, r)."""
    interval = interval or cert.interval
    if interval is None:
        raise ValueError("need the certification interval")
    big_c = math.factorial(cert.r + 1) * cert.M / min(1.0, cert.delta ** (cert.r + 1))
    return PyartliCert(big_c, cert.c, cert.r, tuple(interval))


# ---------------------------------------------------------------------------
# small-value exclusion (constructive)
# ---------------------------------------------------------------------------

def exclude_small_values(f: ParamFamily, cert: PyartliCert, sigma: float,
                         grid: int = 100_001, validate_cert: bool = True,
                         scan_grid: int = 100_000) -> ExclusionResult:
    """Intervals outside which |f| >= sigma, following the Pyartli descent.

    Walks the interval in segments of length c/(2C); inside each segment a
    derivative order with |d^{r0} f| >= c anchors a chain of monotone-escape
    intervals, one per derivative level, each of length at most
    2 (2 sigma / c)^{1/r0}.  If the numerics refuse to produce single
    monotone runs the result degrades to a direct grid bracketing, tagged
    ``grid-certified``; either way the output is re-verified by a dense scan
    and must satisfy the count and length bounds.
    """
    a, b = cert.interval
    c_lo, c_hi, r = cert.c, cert.C, cert.r
    if not (0.0 < sigma <= c_lo / 2.0 + 1e-15):
        raise ValueError(f"sigma={sigma} outside (0, c/2]={c_lo / 2.0}")
    if validate_cert and not cert.validate(f):
        raise CertificateError("Pyartli certificate failed grid validation")

    count_bound = int(2**r * (2.0 * c_hi * (b - a) / c_lo + 1.0)) + 1
    length_bound = 2.0 * (2.0 * sigma / c_lo) ** (1.0 / max(r, 1)) if r >= 1 else 0.0
    if r == 0:
        # |f| >= c >= 2 sigma everywhere: nothing to exclude
        res = ExclusionResult([], count_bound, 0.0, sigma, "constructive", grid)
        _soundness_scan(f, res, sigma, scan_grid)
        return res

    xs = np.linspace(a, b, grid)
    step = (b - a) / (grid - 1) if grid > 1 else 0.0
    ders = [np.asarray(f.derivative(j).eval(xs)) if j else np.asarray(f.eval(xs))
            for j in range(r + 1)]
    ders = np.vstack([d[None] for d in ders])  # (r+1, grid) complex

    seg_len = c_lo / (2.0 * c_hi)
    method = "constructive"
    pieces: list[tuple[float, float]] = []
    if (b - a) / seg_len > MAX_SEGMENTS:
        method = "grid-certified"
    else:
        pieces, clean = _pyartli_walk(xs, step, ders, a, b, c_lo, sigma, r, seg_len)
        if not clean:
            method = "grid-certified"

    if method == "grid-certified":
        pieces = _grid_bracket(xs, step, np.abs(ders[0]), sigma)
    else:
        # escape intervals on which f itself never dips below sigma are
        # safe to drop; the final scan re-verifies soundness
        absf = np.abs(ders[0])
        kept = []
        for lo, hi in pieces:
            sel = (xs >= lo - step) & (xs <= hi + step)
            if not sel.any() or absf[sel].min() < sigma * (1 + 1e-9):
                kept.append((lo, hi))
        pieces = kept

    intervals = _merge_intervals(pieces, a, b)
    res = ExclusionResult(intervals, count_bound, length_bound + 4 * step, sigma,
                          method, grid)
    res = _soundness_scan(f, res, sigma, scan_grid)
    res.validate_bounds()
    return res


def _pyartli_walk(xs, step, ders, a, b, c_lo, sigma, r, seg_len):
    grid = len(xs)
    pieces: list[tuple[float, float]] = []
    clean = True
    abs_high = np.abs(ders[1:])  # orders 1..r
    pos_idx = 0
    while pos_idx < grid - 1:
        probe_hi = min(xs[pos_idx] + seg_len, b)
        hi_idx = min(int(np.searchsorted(xs, probe_hi, side="right")), grid - 1)
        window = slice(pos_idx, hi_idx + 1)
        cand = np.max(abs_high[:, window], axis=0) >= c_lo
        if not cand.any():
            pos_idx = max(hi_idx, pos_idx + 1)
            continue
        x0_off = int(np.argmax(cand))
        x0_idx = pos_idx + x0_off
        r0 = 1 + int(np.argmax(abs_high[:, x0_idx]))
        seg_hi = min(xs[x0_idx] + seg_len, b)
        seg_hi_idx = min(int(np.searchsorted(xs, seg_hi, side="right")), grid - 1)
        phase = ders[r0, x0_idx]
        phase = phase / abs(phase)
        tilted = (np.conj(phase) * ders).real  # (r+1, grid)
        new_pieces, ok = _descend(xs, tilted, pos_idx, seg_hi_idx, r0, c_lo, sigma)
        clean = clean and ok
        pieces.extend(new_pieces)
        pos_idx = max(seg_hi_idx, pos_idx + 1)
    return pieces, clean


def _descend(xs, tilted, lo_idx, hi_idx, r0, c_lo, sigma):
    """Monotone-escape descent through derivative orders r0-1 .. 0."""
    pieces = []
    ok = True
    active = [(lo_idx, hi_idx)]
    for level in range(1, r0 + 1):
        order = r0 - level
        thresh = 0.5 * c_lo * (2.0 * sigma / c_lo) ** (level / r0)
        nxt = []
        for i0, i1 in active:
            if i1 <= i0:
                continue
            small = np.abs(tilted[order, i0 : i1 + 1]) < thresh
            runs = _runs(small)
            if len(runs) > 1:
                ok = False
            for s, e in runs:
                pieces.append((xs[i0 + s], xs[i0 + e]))
            # keep descending outside the escape intervals
            cursor = i0
            for s, e in runs:
                if i0 + s - 1 > cursor:
                    nxt.append((cursor, i0 + s - 1))
                cursor = i0 + e + 1
            if cursor < i1:
                nxt.append((cursor, i1))
        active = nxt
    return pieces, ok


def _grid_bracket(xs, step, absf, sigma):
    small = absf < sigma * (1 + 1e-9)
    return [(xs[s] - step, xs[e] + step) for s, e in _runs(small)]


def _runs(mask: np.ndarray):
    if not mask.any():
        return []
    idx = np.flatnonzero(mask)
    splits = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[idx[0]], idx[splits + 1]])
    ends = np.concatenate([idx[splits], [idx[-1]]])
    return list(zip(starts, ends))


def _merge_intervals(pieces, a, b, gap: float = 0.0):
    clipped = [(max(a, lo), min(b, hi)) for lo, hi in pieces if hi > a and lo < b]
    if not clipped:
        return []
    clipped.sort()
    out = [list(clipped[0])]
    for lo, hi in clipped[1:]:
        if lo <= out[-1][1] + gap:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return [tuple(x) for x in out]


def _soundness_scan(f: ParamFamily, res: ExclusionResult, sigma: float,
                    scan_grid: int) -> ExclusionResult:
    a, b = f.interval
    xs = np.linspace(a, b, scan_grid)
    vals = np.abs(np.asarray(f.eval(xs)))
    outside = np.ones(scan_grid, dtype=bool)
    for lo, hi in res.intervals:
        outside &= ~((xs >= lo) & (xs <= hi))
    bad = outside & (vals < sigma * (1 - 1e-6))
    if bad.any():
        # dense sweep missed by the constructive walk: widen with bracketing
        step = (b - a) / (scan_grid - 1)
        extra = [(xs[s] - step, xs[e] + step) for s, e in _runs(bad)]
        res.intervals = _merge_intervals(res.intervals + extra, a, b)
        res.method = "grid-certified"
        bad2 = np.ones(scan_grid, dtype=bool)
        for lo, hi in res.intervals:
            bad2 &= ~((xs >= lo) & (xs <= hi))
        if (bad2 & (vals < sigma * (1 - 1e-6))).any():
            raise CertificateError("exclusion soundness scan failed after fallback")
    return res


# ---------------------------------------------------------------------------
# constant calculus (log space)
# ---------------------------------------------------------------------------

def _safe_pow_exponent(base: float, exp: float) -> float:
    """base^exp as a float exponent, +inf on overflow."""
    try:
        v = base**exp
    except OverflowError:
        return math.inf
    return v if np.isfinite(v) else math.inf


def product_transversality(certs: list[TransverseCert]) -> TransverseCert:
    """Certificate of f_1 ... f_l from the factors' certificates."""
    if not certs:
        raise ValueError("need at least one certificate")
    l = len(certs)
    m_sup = max(c.M for c in certs)
    log_m_sup = max(c.log_M for c in certs)
    delta = min(c.delta for c in certs)
    log_c = min(c.log_c for c in certs)
    r = sum(c.r for c in certs)
    if r == 0:
        # bounded-below factors: |f| >= prod c_i >= c^l
        out_log_c = sum(c.log_c for c in certs)
        return TransverseCert.from_logs(l * log_m_sup, delta, min(out_log_c, log_c), 0)
    outer = _safe_pow_exponent(float(l), r + 1)
    inner = r * l * (math.log(delta) - math.log(4.0 * r * r) - log_m_sup) + log_c
    out_log_c = -math.inf if outer == math.inf and inner < 0 else outer * inner
    out_log_c = min(out_log_c, log_c)  # certificates only degrade
    return TransverseCert.from_logs(l * log_m_sup, delta, out_log_c, r)


def factor_transversality(product_cert: TransverseCert, l: int, m_bound: float) -> TransverseCert:
    """Certificate of each factor from the product's certificate."""
    c0 = product_cert
    log_c = -c0.r * l * (math.log(2.0 * l * m_bound) - math.log(c0.delta)) + c0.log_c
    log_c = min(log_c, c0.log_c)
    return TransverseCert.from_logs(math.log(m_bound), c0.delta, log_c, c0.r)


def decomposition_transversality_convert(dec_cert: TransverseCert, R: float, l: int,
                                         r: int, delta: float, m: int,
                                         direction: int = 1) -> TransverseCert:
    """Transfer transversality between a decomposition and its multiset.

    direction 1: cluster-wise certificate -> whole-multiset certificate
    (grows the order to l^2 r); direction 2: multiset -> decomposition.
    """
    log_m_out = m * m * math.log(2.0 * R)
    if direction == 1:
        if r == 0:
            return TransverseCert.from_logs(log_m_out, delta, dec_cert.log_c, 0)
        base = math.log(4.0 * l**4 * r * r) + log_m_out - math.log(delta)
        outer = _safe_pow_exponent(float(l), 2 * l * l * r + 2)
        inner = -r * l**4 * base + dec_cert.log_c
        log_c = -math.inf if outer == math.inf and inner < 0 else outer * inner
        return TransverseCert.from_logs(log_m_out, delta, min(log_c, dec_cert.log_c),
                                        l * l * r)
    if direction == 2:
        base = math.log(2.0 * l * l) + log_m_out - math.log(delta)
        log_c = -r * l * l * base + dec_cert.log_c
        return TransverseCert.from_logs(log_m_out, delta, min(log_c, dec_cert.log_c), r)
    raise ValueError("direction must be 1 or 2")


# ---------------------------------------------------------------------------
# multiset transversality check
# ---------------------------------------------------------------------------

def multiset_transversality_check(a_family: ParamFamily, cert: TransverseCert,
                                  u_samples: int = 64, lambda_samples: int = 64,
                                  u_values=None):
    """Grid check of min over (lambda, u) of sup_{0<=j<=r} |d^j_lambda g|.

    Returns (passed, report); the report carries the minimizing witnesses
    and the empirical floor, usable as the run's own certificate.
    ``u_values`` restricts the twist grid (the resonance-removal stages only
    ever probe u = <k, alpha>).
    """
    if u_values is None and (u_samples < 64 or lambda_samples < 64):
        raise ValueError("u_samples and lambda_samples must be >= 64")
    lambda_samples = max(lambda_samples, 16)
    interval = a_family.interval
    nodes = ParamFamily.from_callable(lambda x: 0.0, interval, degree=lambda_samples - 1).nodes
    dense = np.linspace(interval[0], interval[1], 4 * lambda_samples)
    us = np.asarray(u_values, dtype=float) if u_values is not None else np.arange(u_samples) / u_samples
    best = math.inf
    witness = None
    for u in us:
        gv = np.array([g_function(a_family, lam, u) for lam in nodes])
        fam = ParamFamily(interval, gv, getattr(a_family, "delta_nominal", 1.0))
        table = _order_sup_table(fam, interval, cert.r, len(dense))
        score = np.max(table[: cert.r + 1], axis=0)
        i = int(np.argmin(score))
        if score[i] < best:
            best = float(score[i])
            witness = {"lambda": float(dense[i]), "u": float(u),
                       "score": best,
                       "orders": table[: cert.r + 1, i].tolist()}
    passed = best >= cert.c
    report = {"passed": bool(passed), "empirical_c": best, "witness": witness,
              "r": cert.r, "u_samples": u_samples, "lambda_samples": lambda_samples}
    return passed, report
