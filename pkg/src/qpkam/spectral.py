"""Eigenvalue clustering, block diagonalization, parameter-cell partitioning.

Spectral projectors come from sorted complex Schur forms plus one Sylvester
solve per cluster (gauge-free, so the per-node frames interpolate smoothly
in the parameter); the similarity S(lambda) applies those projectors to a
fixed midpoint basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DecompositionError
from .fourier import ParamFamily, cheb_nodes
from .transversality import TransverseCert

_PROJ_RANK_TOL = 0.5


# ---------------------------------------------------------------------------
# decompositions
# ---------------------------------------------------------------------------

@dataclass
class Decomposition:
    """Partition of an eigenvalue multiset into (nu, zeta)-separated clusters."""

    clusters: list[list[int]]
    nu: float
    zeta: float
    anchor_values: list[np.ndarray] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def sizes(self) -> list[int]:
        return [len(c) for c in self.clusters]

    def validate(self, values: np.ndarray, strict: bool = True) -> bool:
        values = np.asarray(values)
        for i, ci in enumerate(self.clusters):
            vi = values[ci]
            if len(vi) > 1 and _diam(vi) > self.zeta * (1 + 1e-12):
                if strict:
                    raise DecompositionError(f"cluster {i} diameter exceeds zeta")
                return False
            for j in range(i + 1, len(self.clusters)):
                vj = values[self.clusters[j]]
                if _set_dist(vi, vj) <= self.nu:
                    if strict:
                        raise DecompositionError(f"clusters {i},{j} closer than nu")
                    return False
        return True


def _diam(vals: np.ndarray) -> float:
    if len(vals) < 2:
        return 0.0
    return float(np.abs(vals[:, None] - vals[None, :]).max())


def _set_dist(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a[:, None] - b[None, :]).min())


def hausdorff(a, b) -> float:
    """Hausdorff distance between the supports of two finite multisets."""
    a = np.atleast_1d(np.asarray(a))
    b = np.atleast_1d(np.asarray(b))
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def maximal_separated_decomposition(values, mu: float, m_cap: int = 32) -> Decomposition:
    """Finest partition whose clusters are chains of gaps <= mu.

    Two eigenvalues share a cluster iff connected by a chain of steps of
    length <= mu; cross-cluster distances are then > mu and every cluster
    diameter is at most (#cluster - 1) mu <= m mu.
    """
    if hasattr(values, "values"):
        values = values.values
    values = np.atleast_1d(np.asarray(values, dtype=np.complex128))
    m = len(values)
    if m > m_cap:
        raise ValueError(f"multiset size {m} exceeds cap {m_cap}")
    parent = list(range(m))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(m):
        for j in range(i + 1, m):
            if abs(values[i] - values[j]) <= mu:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(m):
        groups.setdefault(find(i), []).append(i)
    clusters = sorted(groups.values(), key=lambda c: (values[c].real.min(), values[c].imag.min()))
    zeta = max((_diam(values[c]) for c in clusters), default=0.0)
    if zeta > m * mu * (1 + 1e-12):
        raise DecompositionError("chain diameter exceeded m*mu; clustering bug")
    dec = Decomposition(clusters, mu, zeta, [values[c].copy() for c in clusters])
    dec.validate(values)
    return dec


# ---------------------------------------------------------------------------
# spectral projectors / block diagonalization
# ---------------------------------------------------------------------------

def cluster_projector(a: np.ndarray, in_cluster) -> np.ndarray:
    """Spectral projector onto the invariant subspace of selected eigenvalues.

    Sorted complex Schur form puts the selected spectrum in the leading
    block; the projector is Z [[I, X], [0, 0]] Z* with T11 X - X T22 = T12.
    """
    a = np.asarray(a, dtype=np.complex128)
    m = a.shape[0]
    t, z, sdim = sla.schur(a, output="complex", sort=in_cluster)
    if sdim == 0:
        return np.zeros_like(a)
    if sdim == m:
        return np.eye(m, dtype=np.complex128)
    t11, t12, t22 = t[:sdim, :sdim], t[:sdim, sdim:], t[sdim:, sdim:]
    x = sla.solve_sylvester(t11, -t22, t12)
    p = np.zeros_like(a)
    p[:sdim, :sdim] = np.eye(sdim)
    p[:sdim, sdim:] = x
    return z @ p @ z.conj().T


def _assign_to_anchors(values: np.ndarray, anchors: list[np.ndarray]) -> list[list[int]]:
    """Assign each eigenvalue to the cluster of its nearest anchor value."""
    labels = []
    for v in values:
        d = [np.abs(anchor - v).min() for anchor in anchors]
        labels.append(int(np.argmin(d)))
    return [[i for i, lab in enumerate(labels) if lab == c] for c in range(len(anchors))]


@dataclass
class BlockConjugation:
    """S(lambda) with S^{-1} A S block diagonal, plus recorded norms."""

    s_family: ParamFamily
    s_inv_family: ParamFamily
    blocks: list[ParamFamily]
    block_sizes: list[int]
    norms: dict
    residual: float


def block_diagonalize(a_family: ParamFamily, dec: Decomposition, delta: float,
                      conj_tol: float = 1e-10, warn_ceiling: bool = True) -> BlockConjugation:
    """Conjugate a matrix family to block-diagonal form along cluster lines.

    The decomposition's anchor values (cluster representatives at the cell
    midpoint) label the spectrum at every Chebyshev node; clusters crossing
    between nodes raise DecompositionError.
    """
    nodes = a_family.nodes
    mid = a_family.eval(0.5 * (a_family.interval[0] + a_family.interval[1]))
    m = mid.shape[0]
    anchors = dec.anchor_values
    if not anchors:
        raise ValueError("decomposition must carry anchor values")
    sizes = dec.sizes()

    # fixed reference basis from midpoint projectors
    ref_cols = []
    for c, anchor in enumerate(anchors):
        p0 = cluster_projector(mid, _membership(anchor, anchors, c))
        u, s, _ = np.linalg.svd(p0)
        rank = int((s > _PROJ_RANK_TOL).sum())
        if rank != sizes[c]:
            raise DecompositionError(
                f"midpoint projector rank {rank} != cluster size {sizes[c]}")
        ref_cols.append(u[:, :rank])

    s_nodes, si_nodes = [], []
    block_nodes = [[] for _ in anchors]
    residual = 0.0
    for x in nodes:
        ax = a_family.eval(x)
        vals = np.linalg.eigvals(ax)
        pattern = _assign_to_anchors(vals, anchors)
        if [len(p) for p in pattern] != sizes:
            raise DecompositionError(
                f"cluster cardinality changed at lambda={x}: {[len(p) for p in pattern]} vs {sizes}")
        cols = []
        for c, anchor in enumerate(anchors):
            p = cluster_projector(ax, _membership(anchor, anchors, c))
            cols.append(p @ ref_cols[c])
        s_mat = np.hstack(cols)
        if np.linalg.cond(s_mat) > 1e12:
            raise DecompositionError("similarity frame nearly singular across the cell")
        s_inv = np.linalg.inv(s_mat)
        b = s_inv @ ax @ s_mat
        off = b.copy()
        pos = 0
        for c, size in enumerate(sizes):
            block_nodes[c].append(b[pos : pos + size, pos : pos + size])
            off[pos : pos + size, pos : pos + size] = 0.0
            pos += size
        residual = max(residual, float(np.linalg.norm(off, 2)))
        s_nodes.append(s_mat)
        si_nodes.append(s_inv)

    interval = a_family.interval
    dn = getattr(a_family, "delta_nominal", delta)
    s_family = ParamFamily(interval, np.array(s_nodes), dn)
    si_family = ParamFamily(interval, np.array(si_nodes), dn)
    blocks = [ParamFamily(interval, np.array(bn), dn) for bn in block_nodes]

    a_norm = a_family.norm_delta(delta)
    if residual > conj_tol * max(a_norm, 1.0):
        raise DecompositionError(f"conjugation residual {residual:.3e} above tolerance")
    norms = {
        "S": s_family.norm_delta(delta),
        "S_inv": si_family.norm_delta(delta),
        "blocks": [b.norm_delta(delta) for b in blocks],
        "A": a_norm,
    }
    if warn_ceiling:
        log_ceiling = _b_acute_log(m) + m * m * (m + 2) * max(
            math.log(max(a_norm, 1e-300)) - math.log(max(dec.nu, 1e-300)), 0.0)
        worst = max(norms["S"], norms["S_inv"], max(norms["blocks"]))
        norms["ceiling_log"] = log_ceiling
        norms["ceiling_exceeded"] = bool(math.log(max(worst, 1e-300)) > log_ceiling)
    return BlockConjugation(s_family, si_family, blocks, sizes, norms, residual)


def _membership(anchor: np.ndarray, anchors: list[np.ndarray], c: int):
    others = [a for i, a in enumerate(anchors) if i != c]

    def inside(z):
        d_own = np.abs(anchor - z).min()
        d_other = min((np.abs(a - z).min() for a in others), default=math.inf)
        return bool(d_own <= d_other)

    return inside


def _b_acute_log(m: int) -> float:
    """log of the similarity-norm ceiling constant (depends only on m)."""
    return (m * m + 4 * m) * math.log(120.0 * m)


# ---------------------------------------------------------------------------
# cell partitioning
# ---------------------------------------------------------------------------

@dataclass
class CellDecomposition:
    cell: tuple[float, float]
    dec: Decomposition
    conj: BlockConjugation
    cert: TransverseCert
    lambda0: float
    hausdorff_margin: float


def nth_cell_width_log(m: int, R: float, m_tilde: float, nu_prime: float,
                       delta: float) -> float:
    """log of the proposition-faithful cell width delta' (log space; the
    value itself underflows for any honest m)."""
    return (-_b_acute_log(m)
            + 3 * m * (math.log(nu_prime) - 2 * math.log(R) - math.log(max(m_tilde, 1.0)))
            + math.log(delta))


def partition_and_decompose(a_family: ParamFamily, cert: TransverseCert,
                            nu_prime: float, R: float, delta: float | None = None,
                            n_cells: int = 16, max_bisect: int = 8,
                            node_count: int = 9) -> list[CellDecomposition]:
    """Split the parameter interval into cells with a stable cluster pattern.

    Each cell is anchored at its midpoint: the maximal (8 nu', 8 m nu')-
    separated decomposition there extends to the whole cell by nu'-
    proximity; cells where cluster cardinalities change are bisected and
    retried.  Transversality constants degrade by the partition rule, in
    log space.
    """
    if not (0.0 < nu_prime <= 1.0):
        raise ValueError("need 0 < nu' <= 1")
    a, b = a_family.interval
    mid_mat = a_family.eval(0.5 * (a + b))
    m = mid_mat.shape[0]
    m_tilde = max(a_family.norm_delta(min(cert.delta, getattr(a_family, "delta_nominal", cert.delta))), 1.0)
    delta = delta if delta is not None else cert.delta
    width_log = nth_cell_width_log(m, R, m_tilde, nu_prime, delta)

    edges = np.linspace(a, b, n_cells + 1)
    stack = [(edges[i], edges[i + 1], 0) for i in range(n_cells)]
    out: list[CellDecomposition] = []
    while stack:
        lo, hi, depth = stack.pop(0)
        try:
            out.append(_decompose_cell(a_family, (lo, hi), nu_prime, m, cert, R,
                                       m_tilde, delta, width_log, node_count))
        except DecompositionError:
            if depth >= max_bisect:
                raise
            mid = 0.5 * (lo + hi)
            stack.append((lo, mid, depth + 1))
            stack.append((mid, hi, depth + 1))
    out.sort(key=lambda cd: cd.cell[0])
    # cell count sanity: never finer than the proposition's 1 + |Lambda|/delta'
    max_cells_log = math.log(b - a) - width_log
    if max_cells_log < 700 and len(out) > 1 + math.exp(max_cells_log):
        raise DecompositionError("partition finer than the proposition bound")
    return out


def _decompose_cell(a_family, cell, nu_prime, m, cert, R, m_tilde, delta,
                    width_log, node_count) -> CellDecomposition:
    lo, hi = cell
    lam0 = 0.5 * (lo + hi)
    vals0 = np.linalg.eigvals(a_family.eval(lam0))
    dec0 = maximal_separated_decomposition(vals0, 8.0 * nu_prime)
    if dec0.zeta > 8 * m * nu_prime * (1 + 1e-9):
        raise DecompositionError("midpoint decomposition diameter exceeds 8 m nu'")

    sub_nodes = cheb_nodes(cell, node_count)
    margin = 0.0
    for x in list(sub_nodes) + [lo, hi]:
        vals = np.linalg.eigvals(a_family.eval(x))
        pattern = _assign_to_anchors(vals, dec0.anchor_values)
        if [len(p) for p in pattern] != dec0.sizes():
            raise DecompositionError("cluster cardinality changed inside the cell")
        for c, idx in enumerate(pattern):
            d = hausdorff(vals[idx], dec0.anchor_values[c])
            margin = max(margin, d)
            if d >= nu_prime:
                raise DecompositionError("Hausdorff drift exceeds nu' inside the cell")

    sub = _restrict_family(a_family, cell, node_count)
    dec = Decomposition(dec0.clusters, nu_prime, 10.0 * m * nu_prime, dec0.anchor_values)
    conj = block_diagonalize(sub, dec, min(delta, sub.delta_nominal))

    r = cert.r
    log_c_new = (-r * m**3 * (m + 6)
                 * (_b_acute_log(m) + math.log(R) + math.log(m_tilde)
                    - math.log(nu_prime) - math.log(delta))
                 + cert.log_c)
    new_cert = TransverseCert.from_logs(m * m * math.log(2 * R), math.exp(min(width_log, 0.0)) if width_log < 0 else delta,
                                        min(log_c_new, cert.log_c), r, interval=cell)
    return CellDecomposition(cell, dec, conj, new_cert, lam0, margin)


def _restrict_family(a_family: ParamFamily, cell, node_count: int) -> ParamFamily:
    nodes = cheb_nodes(cell, node_count)
    vals = np.array([a_family.eval(x) for x in nodes])
    half = 0.5 * (cell[1] - cell[0])
    dn = min(getattr(a_family, "delta_nominal", half), max(half, 1e-12) * 4)
    return ParamFamily(cell, vals, dn)


# ---------------------------------------------------------------------------
# perturbation stability of decompositions
# ---------------------------------------------------------------------------

@dataclass
class StabilityReport:
    hausdorff_measured: list[float]
    hausdorff_bound: float
    annulus_R_new: float
    nu_new: float
    zeta_new: float
    c_degradation: float
    g_diffs_measured: list[float]
    g_diff_bound: float
    ok: bool


def decomposition_stability(a_family: ParamFamily, ap_family: ParamFamily,
                            dec: Decomposition, epsilon: float, R: float,
                            m_tilde: float, r: int = 1, delta: float = 0.1,
                            u_probe=(0.0, 0.3)) -> StabilityReport:
    """Measured vs guaranteed stability of a block-diagonal decomposition.

    Both inputs must be block diagonal with the same block sizes; epsilon
    bounds the blockwise perturbation.  The report checks the Hausdorff
    drift, the new annulus, separation loss, transversality-floor loss and
    the drift of each cluster's own pair-product function g_i.
    """
    from .polyalg import g_of_multiset

    if epsilon >= 1.0:
        raise ValueError("epsilon must be < 1")
    m = a_family.eval(a_family.nodes[0]).shape[0]
    guard = 64 * m * m * m_tilde**2 * R * epsilon ** (1.0 / m)
    if guard >= 1.0:
        raise ValueError(f"stability precondition 64 m^2 M~^2 R eps^(1/m) = {guard:.3e} >= 1")

    d_bound = 4.0 * m * m * m_tilde**2 * epsilon ** (1.0 / m)
    g_bound = 2.0 ** (8 * m) * float(m) ** (10 * m * m) * R ** (3 * m * m) * m_tilde**m * epsilon
    sizes = dec.sizes()
    d_meas: list[float] = []
    g_meas: list[float] = []
    for x in a_family.nodes:
        a_val = a_family.eval(x)
        ap_val = ap_family.eval(x)
        pos = 0
        for size in sizes:
            sl = slice(pos, pos + size)
            va = np.linalg.eigvals(a_val[sl, sl])
            vb = np.linalg.eigvals(ap_val[sl, sl])
            d_meas.append(hausdorff(va, vb))
            if size > 1:
                for u in u_probe:
                    g_meas.append(abs(g_of_multiset(va, u) - g_of_multiset(vb, u)))
            pos += size
    r_new = R + 8.0 * m * m * m_tilde**2 * R * R * epsilon ** (1.0 / m)
    nu_new = dec.nu - 2.0 * d_bound
    zeta_new = dec.zeta + 2.0 * d_bound
    c_degradation = g_bound * math.factorial(r) * (2.0 / delta) ** r
    ok = (max(d_meas, default=0.0) <= d_bound * (1 + 1e-9)
          and max(g_meas, default=0.0) <= g_bound * (1 + 1e-9))
    return StabilityReport(d_meas, d_bound, r_new, nu_new, zeta_new,
                           c_degradation, g_meas, g_bound, ok)
