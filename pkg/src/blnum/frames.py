"""Wedge-product machinery, index-set selection, and certificate traces.

The determinant bounds behind the localised and partially-localised
constants rest on three ingredients: wedge magnitudes of mapped frame
vectors, admissible families of index tuples (weighted head counts
bounded by position, weighted tail counts bounded below), and the
quantity h = max over admissible tuples of the minimum wedge.  A
Monte-Carlo minimum of h over sampled frames stands in for the
compactness constant c, and ``certify_localized`` / ``certify_partial``
replay the corresponding determinant-bound proofs step by numeric step
on concrete Gaussian inputs.

Index convention: frame columns are 0-based; a head count ``k`` means
the first k columns, so the admissibility constraints read
``sum_j p_j |I_j ∩ {0..k-1}| <= k`` for all k and, for class ell,
``sum_j p_j |I_j ∩ {k..n-1}| >= n - k`` for k >= ell.  A near-basis of
class ell has its columns from index ell onward inside H_0.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_POLICY
from .gaussopt import UNIT_BALL, lieb_quotient, partial_mode
from .rng import haar_frame, stream

__all__ = [
    "Frame",
    "NearBasis",
    "IndexTuple",
    "CEstimate",
    "TraceStep",
    "CertificateTrace",
    "wedge_magnitude",
    "greedy_index_set",
    "enumerate_admissible",
    "h_value",
    "estimate_c",
    "estimate_c_partial",
    "openness_margin",
    "certify_localized",
    "certify_partial",
]

COMBINATORIAL_MAX_N = 14
_TUPLE_TOL = 1e-12
_REL_TOL = 1e-9
_SAMPLER = "haar-head+unit-h0-tails+det-rejection"


@dataclass(frozen=True)
class Frame:
    """Ordered orthonormal vectors, one per column."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.array(self.vectors, dtype=float)
        if v.ndim != 2:
            raise ValueError("frame must be a 2-d matrix of column vectors")
        if v.shape[1] > 0 and not np.allclose(v.T @ v, np.eye(v.shape[1]), atol=1e-6):
            raise ValueError("frame columns are not orthonormal")
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)

    @property
    def k(self):
        return self.vectors.shape[1]


@dataclass(frozen=True)
class NearBasis:
    """Ordered basis with unit-bounded columns, determinant at least alpha,
    and all columns from index ``ell`` onward inside a distinguished subspace."""

    vectors: np.ndarray
    alpha: float
    ell: int

    def __post_init__(self):
        v = np.array(self.vectors, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("near-basis must be square")
        n = v.shape[0]
        if not 0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 <= self.ell <= n:
            raise ValueError("ell out of range")
        norms = np.linalg.norm(v, axis=0)
        if norms.max() > 1.0 + 1e-9:
            raise ValueError("near-basis columns must have norm at most 1")
        if abs(np.linalg.det(v)) < self.alpha - 1e-9:
            raise ValueError("near-basis determinant below alpha")
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)


@dataclass(frozen=True)
class IndexTuple:
    """One sorted index subset per map, |I_j| = n_j."""

    sets: tuple

    def __post_init__(self):
        object.__setattr__(self, "sets", tuple(tuple(sorted(s)) for s in self.sets))

    def head_count(self, j, k):
        return sum(1 for i in self.sets[j] if i < k)

    def a_weights(self, exponents, n):
        """a_i = sum_j p_j [i in I_j] for i = 0..n-1."""
        a = np.zeros(n)
        for p, subset in zip(exponents, self.sets):
            for i in subset:
                a[i] += p
        return a


@dataclass(frozen=True)
class CEstimate:
    """Monte-Carlo minimum of h over sampled frames (an over-estimate of the
    true infimum; more samples can only lower it)."""

    c_hat: float
    worst_frame: object
    samples: int
    ell: int | None = None
    sampler: str = _SAMPLER


@dataclass(frozen=True)
class TraceStep:
    label: str
    lhs: float
    rhs: float
    ok: bool


@dataclass(frozen=True)
class CertificateTrace:
    steps: tuple
    overall_ok: bool
    constant_used: float

    def to_json_lines(self):
        for s in self.steps:
            yield json.dumps(
                {"label": s.label, "lhs": s.lhs, "rhs": s.rhs, "ok": s.ok}, sort_keys=True
            )

    def failed_steps(self):
        return [s for s in self.steps if not s.ok]


class _TraceBuilder:
    def __init__(self):
        self.steps = []

    def le(self, label, lhs, rhs):
        ok = lhs <= rhs * (1.0 + _REL_TOL) + 1e-12 if rhs >= 0 else lhs <= rhs * (1.0 - _REL_TOL) + 1e-12
        self.steps.append(TraceStep(label, float(lhs), float(rhs), bool(ok)))
        return ok

    def ge(self, label, lhs, rhs):
        ok = lhs >= rhs * (1.0 - _REL_TOL) - 1e-12 if rhs >= 0 else lhs >= rhs * (1.0 + _REL_TOL) - 1e-12
        self.steps.append(TraceStep(label, float(lhs), float(rhs), bool(ok)))
        return ok

    def fact(self, label, lhs, rhs, ok):
        self.steps.append(TraceStep(label, float(lhs), float(rhs), bool(ok)))
        return ok

    def build(self, constant):
        return CertificateTrace(tuple(self.steps), all(s.ok for s in self.steps), float(constant))


def _column_matrix(vectors):
    if isinstance(vectors, Frame):
        return vectors.vectors
    if isinstance(vectors, NearBasis):
        return vectors.vectors
    v = np.asarray(vectors, dtype=float)
    if v.ndim != 2:
        # accept a sequence of vectors
        v = np.column_stack([np.asarray(x, dtype=float) for x in vectors])
    return v


def wedge_magnitude(vectors):
    """Magnitude of the wedge product of the given vectors: sqrt of the Gram
    determinant, which equals |det| when the vectors form a square matrix."""
    v = _column_matrix(vectors)
    if v.shape[1] == 0:
        return 1.0
    if v.shape[1] > v.shape[0]:
        return 0.0
    gram = v.T @ v
    det = float(np.linalg.det(gram))
    return math.sqrt(max(det, 0.0))


def _greedy_select(images, scale, policy):
    """Backwards greedy scan: keep column i iff its image is outside the span
    of all later images, judged at rank tolerance relative to ``scale``."""
    nj, k = images.shape
    tol = policy.rank_tol * max(scale, 1e-300)
    q = np.zeros((nj, 0))
    kept = []
    for i in range(k - 1, -1, -1):
        v = images[:, i]
        resid = v - q @ (q.T @ v)
        norm = np.linalg.norm(resid)
        if norm > tol:
            kept.append(i)
            q = np.hstack([q, (resid / norm).reshape(-1, 1)])
    return tuple(sorted(kept))


def greedy_index_set(mp, frame, policy=DEFAULT_POLICY):
    """Backwards-greedy index set for one map over an ordered full frame.

    The selected images are linearly independent (positive wedge) and span the
    image of the frame, so a surjective map over a full frame yields exactly
    n_j indices.
    """
    vectors = _column_matrix(frame)
    images = mp.rows @ vectors
    kept = _greedy_select(images, mp.norm2(), policy)
    if not kept:
        raise ValueError("map is numerically zero on the whole frame")
    if vectors.shape[1] == mp.n and len(kept) != mp.n_j:
        raise ValueError(
            "greedy selected %d indices but map has n_j=%d (map not surjective?)" % (len(kept), mp.n_j)
        )
    return kept


def _head_counts(subset, n):
    counts = [0] * (n + 1)
    c = 0
    it = iter(sorted(subset))
    nxt = next(it, None)
    for k in range(1, n + 1):
        if nxt is not None and nxt == k - 1:
            c += 1
            nxt = next(it, None)
        counts[k] = c
    return counts


def enumerate_admissible(datum, ell=None):
    """All index tuples with |I_j| = n_j obeying the head-count constraints
    (and, for class ``ell``, the tail-count constraints), in lexicographic
    order.  Guarded to n <= 14; sums are compared with a 1e-12 tolerance."""
    n = datum.n
    if n > COMBINATORIAL_MAX_N:
        raise ValueError("combinatorial guard: n must be at most %d" % COMBINATORIAL_MAX_N)
    if ell is not None and not 0 <= ell <= n:
        raise ValueError("ell must lie in [0, n]")
    p = datum.exponents
    m = datum.m
    per_j_subsets = [list(itertools.combinations(range(n), mp.n_j)) for mp in datum.maps]
    per_j_heads = [[_head_counts(s, n) for s in subs] for subs in per_j_subsets]
    # least possible head contribution of the remaining maps at each k
    suffix_min = [[0.0] * (n + 1) for _ in range(m + 1)]
    for j in range(m - 1, -1, -1):
        nj = datum.maps[j].n_j
        for k in range(n + 1):
            suffix_min[j][k] = suffix_min[j + 1][k] + p[j] * max(0, nj - (n - k))

    out = []
    sums = [0.0] * (n + 1)
    choice = [0] * m

    def admissible_tail():
        if ell is None:
            return True
        for k in range(ell, n + 1):
            tail = sum(
                p[t] * (datum.maps[t].n_j - per_j_heads[t][choice[t]][k]) for t in range(m)
            )
            if tail < (n - k) - _TUPLE_TOL:
                return False
        return True

    def rec(j):
        if j == m:
            if admissible_tail():
                out.append(IndexTuple(tuple(per_j_subsets[t][choice[t]] for t in range(m))))
            return
        for idx, heads in enumerate(per_j_heads[j]):
            feasible = True
            for k in range(1, n + 1):
                if sums[k] + p[j] * heads[k] + suffix_min[j + 1][k] > k + _TUPLE_TOL:
                    feasible = False
                    break
            if not feasible:
                continue
            for k in range(n + 1):
                sums[k] += p[j] * heads[k]
            choice[j] = idx
            rec(j + 1)
            for k in range(n + 1):
                sums[k] -= p[j] * heads[k]

    rec(0)
    return out


def h_value(datum, basis, ell=None, policy=DEFAULT_POLICY):
    """Maximum over admissible tuples of the minimum per-map wedge magnitude.

    Returns ``(value, tuple)``; ties go to the lexicographically smallest
    tuple, and an empty admissible family returns ``(0.0, None)``.
    """
    vectors = _column_matrix(basis)
    tuples = enumerate_admissible(datum, ell)
    if not tuples:
        return 0.0, None
    images = [mp.rows @ vectors for mp in datum.maps]
    caches = [dict() for _ in range(datum.m)]
    best = -1.0
    best_tuple = None
    for tup in tuples:
        val = math.inf
        for j, subset in enumerate(tup.sets):
            w = caches[j].get(subset)
            if w is None:
                w = wedge_magnitude(images[j][:, list(subset)])
                caches[j][subset] = w
            if w < val:
                val = w
            if val <= best:
                break
        if val > best:
            best = val
            best_tuple = tup
    return float(best), best_tuple


def estimate_c(datum, ell=None, alpha=0.5, samples=1000, seed=0, h0_basis=None, policy=DEFAULT_POLICY):
    """Monte-Carlo estimate of the frame constant: the minimum of h over
    sampled frames.

    ``ell=None`` samples Haar orthonormal frames.  With ``ell`` given, frames
    are sampled from the class with tails in H_0: head columns come from a
    Haar frame, tail columns are resampled as unit vectors inside H_0 (so
    norms stay clamped at 1), and draws with determinant below ``alpha`` are
    rejected.  The worst sampled frame is retained.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    n = datum.n
    rng = stream(seed, 0 if ell is None else 1 + ell)
    tails_in_h0 = ell is not None and ell < n
    if tails_in_h0:
        if h0_basis is None:
            raise ValueError("sampling class ell=%d < n requires h0_basis" % ell)
        h0 = np.asarray(h0_basis, dtype=float)
        if h0.shape[0] != n or h0.shape[1] == 0:
            raise ValueError("h0_basis must be a nonempty n-column basis matrix")
    c_hat = math.inf
    worst = None
    for _ in range(samples):
        if not tails_in_h0:
            frame = haar_frame(rng, n, n)
            sample_obj = Frame(frame)
        else:
            frame = None
            for _attempt in range(100):
                cand = haar_frame(rng, n, n)
                for i in range(ell, n):
                    w = h0 @ rng.standard_normal(h0.shape[1])
                    norm = np.linalg.norm(w)
                    if norm <= 0.0:
                        break
                    cand[:, i] = w / norm
                if abs(np.linalg.det(cand)) >= alpha:
                    frame = cand
                    break
            if frame is None:
                raise RuntimeError(
                    "rejection sampling failed after 100x oversampling; "
                    "alpha=%g leaves too small a determinant gap" % alpha
                )
            sample_obj = NearBasis(frame, alpha, ell)
        val, _tup = h_value(datum, frame if frame is not None else sample_obj.vectors, ell, policy)
        if val < c_hat:
            c_hat = val
            worst = sample_obj
    return CEstimate(float(c_hat), worst, samples, ell)


def estimate_c_partial(datum, loc, alpha=0.5, samples=1000, seed=0, policy=DEFAULT_POLICY):
    """min over classes ell in [n - dim H_0, n] of the per-class estimate."""
    n = datum.n
    lo = n - loc.h0_dim
    best = None
    for ell in range(lo, n + 1):
        est = estimate_c(datum, ell, alpha, samples, seed, h0_basis=loc.H0_basis, policy=policy)
        if best is None or est.c_hat < best.c_hat:
            best = est
    return best


def openness_margin(datum, k, samples=200, seed=0, policy=DEFAULT_POLICY):
    """Sampled margin of the frame form of the dimension condition at size k:
    min over frames of sum_j p_j rank(L_j restricted to the frame) - k.

    Deterministic coordinate frames are always included (so minima attained at
    axes are actually attained) alongside ``samples`` Haar frames; ranks come
    from the backwards-greedy selection.
    """
    n = datum.n
    if not 1 <= k <= n:
        raise ValueError("k must lie in [1, n]")
    frames = []
    if n <= 12:
        for idxs in itertools.combinations(range(n), k):
            e = np.zeros((n, k))
            for col, i in enumerate(idxs):
                e[i, col] = 1.0
            frames.append(e)
    for i in range(samples):
        frames.append(haar_frame(stream(seed, k, i), n, k))
    margin = math.inf
    for frame in frames:
        total = 0.0
        for p, mp in zip(datum.exponents, datum.maps):
            rank = len(_greedy_select(mp.rows @ frame, mp.norm2(), policy))
            total += p * rank
        margin = min(margin, total - k)
    return float(margin)


def _eig_desc(mat):
    vals, vecs = np.linalg.eigh(mat)
    order = np.argsort(vals, kind="stable")[::-1]
    return vals[order], vecs[:, order]


def _exponent_products(datum):
    sum_p = sum(datum.exponents)
    prod_pw = 1.0
    for p, mp in zip(datum.exponents, datum.maps):
        prod_pw *= p ** (p * mp.n_j)
    return sum_p, prod_pw


def _tuple_head_slack(datum, tup, lo=0):
    """max over k of sum_j p_j |I_j ∩ {0..k-1}| - k (should be <= 0)."""
    n = datum.n
    worst = -math.inf
    for k in range(max(lo, 1), n + 1):
        s = sum(p * tup.head_count(j, k) for j, p in enumerate(datum.exponents))
        worst = max(worst, s - k)
    return worst


def _tuple_tail_slack(datum, tup, ell):
    """min over k >= ell of sum_j p_j |I_j ∩ {k..n-1}| - (n - k) (should be >= 0)."""
    n = datum.n
    worst = math.inf
    for k in range(ell, n + 1):
        s = sum(
            p * (len(tup.sets[j]) - tup.head_count(j, k)) for j, p in enumerate(datum.exponents)
        )
        worst = min(worst, s - (n - k))
    return worst


def _hadamard_steps(tr, datum, a, eigvecs, tup, wedge_floor_label, wedge_floor):
    """Per-map steps: wedge against its floor and the Hadamard determinant bound."""
    diag_forms = []
    for j, (mp, mat) in enumerate(zip(datum.maps, a)):
        quad = mp.rows.T @ mat @ mp.rows
        diag_forms.append(quad)
    ok_all = True
    for j, subset in enumerate(tup.sets):
        cols = list(subset)
        images = datum.maps[j].rows @ eigvecs[:, cols]
        wedge = wedge_magnitude(images)
        ok_all &= tr.ge("%s[j=%d]" % (wedge_floor_label, j), wedge, wedge_floor)
        det_a = float(np.linalg.det(np.asarray(a.mats[j])))
        diag = 1.0
        for i in cols:
            e = eigvecs[:, i]
            diag *= float(e @ diag_forms[j] @ e)
        if wedge <= 0.0:
            tr.fact("hadamard_bound[j=%d]" % j, det_a, math.inf, False)
            ok_all = False
            continue
        ok_all &= tr.le("hadamard_bound[j=%d]" % j, det_a, diag / wedge**2)
    return ok_all


def certify_localized(datum, a, c_hat, policy=DEFAULT_POLICY):
    """Numeric trace of the localised determinant bound at one Gaussian input.

    Eigendecomposes M + Id, selects the admissible tuple maximizing the
    minimum wedge over the eigenframe, and asserts in order: the eigenvalue
    floor, the head-count constraints, the wedge lower bound against c_hat,
    the per-map Hadamard determinant bounds, every telescoping factor, and
    the final bound with constant C = (c_hat^{2 sum p_j} prod p_j^{p_j n_j})^{-1}.
    """
    if any(p <= 0.0 for p in datum.exponents):
        raise ValueError("certificates require every p_j > 0")
    if c_hat <= 0.0:
        raise ValueError("c_hat must be positive")
    q = lieb_quotient(datum, a, UNIT_BALL, policy)
    n = datum.n
    mu, eigvecs = _eig_desc(q.m_matrix + np.eye(n))
    sum_p, prod_pw = _exponent_products(datum)
    constant = 1.0 / (c_hat ** (2.0 * sum_p) * prod_pw)

    tr = _TraceBuilder()
    tr.ge("eigenvalue_floor mu_min > 1", mu[-1], 1.0 - 1e-9)
    hval, tup = h_value(datum, eigvecs, None, policy)
    if tup is None:
        tr.fact("admissible_tuples_exist", 0.0, 1.0, False)
        return tr.build(constant)
    tr.le("head_constraint_slack", _tuple_head_slack(datum, tup), 0.0)
    tr.ge("min_wedge>=c_hat", hval, c_hat)
    _hadamard_steps(tr, datum, a, eigvecs, tup, "wedge", c_hat)

    weights = tup.a_weights(datum.exponents, n)
    partial = np.cumsum(weights)
    mu_ext = np.append(mu, 1.0)
    for k in range(1, n + 1):
        ratio = mu_ext[k] / mu_ext[k - 1]
        factor = ratio ** (k - partial[k - 1])
        tr.le("telescope_factor[k=%d]" % k, factor, 1.0)

    log_lhs = 2.0 * q.log_numerator
    log_rhs = math.log(constant) + 2.0 * q.log_denominator
    tr.fact(
        "final_bound prod det(A_j)^p_j <= C det(M+Id)",
        math.exp(log_lhs),
        math.exp(log_rhs),
        log_lhs <= log_rhs + _REL_TOL * max(1.0, abs(log_rhs)),
    )
    return tr.build(constant)


def certify_partial(datum, loc, a, alpha, c_hat, deltahat=0.05, policy=DEFAULT_POLICY):
    """Numeric trace of the partially-localised determinant bound.

    G is first normalised to the orthogonal projection onto the complement of
    H_0.  The threshold gamma splits two branches: eigenvalues all at least
    gamma replay the localised argument rescaled by gamma; otherwise the
    trailing eigenvectors are projected into H_0 to form a near-basis, the
    class-ell admissible tuple is selected by h, and the head/tail
    telescoping chains and the final bound are asserted step by step.
    """
    if any(p <= 0.0 for p in datum.exponents):
        raise ValueError("certificates require every p_j > 0")
    if c_hat <= 0.0:
        raise ValueError("c_hat must be positive")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    n = datum.n
    if loc.n != n:
        raise ValueError("localization dimension mismatch")
    h0 = loc.H0_basis
    proj = np.eye(n) - h0 @ h0.T

    q = lieb_quotient(datum, a, partial_mode(proj), policy)
    mu, eigvecs = _eig_desc(q.m_matrix + proj)
    sum_p, prod_pw = _exponent_products(datum)

    norm_bound = max(mp.n_j * (mp.norm2() + deltahat) ** mp.n_j for mp in datum.maps)
    gamma = min(((1.0 - alpha) / n) ** 2, (c_hat / (2.0 * norm_bound)) ** 2)

    tr = _TraceBuilder()
    if mu[-1] >= gamma:
        constant = gamma ** (sum(p * mp.n_j for p, mp in zip(datum.exponents, datum.maps)) - n) / (
            c_hat ** (2.0 * sum_p) * prod_pw
        )
        tr.fact("branch mu_min >= gamma", mu[-1], gamma, mu[-1] >= gamma)
        hval, tup = h_value(datum, eigvecs, None, policy)
        if tup is None:
            tr.fact("admissible_tuples_exist", 0.0, 1.0, False)
            return tr.build(constant)
        tr.le("head_constraint_slack", _tuple_head_slack(datum, tup), 0.0)
        tr.ge("min_wedge>=c_hat", hval, c_hat)
        _hadamard_steps(tr, datum, a, eigvecs, tup, "wedge", c_hat)
        weights = tup.a_weights(datum.exponents, n)
        partial = np.cumsum(weights)
        mu_ext = np.append(mu, gamma)
        for k in range(1, n + 1):
            ratio = mu_ext[k] / mu_ext[k - 1]
            factor = ratio ** (k - partial[k - 1])
            tr.le("telescope_factor[k=%d]" % k, factor, 1.0)
        log_lhs = 2.0 * q.log_numerator
        log_rhs = math.log(constant) + 2.0 * q.log_denominator
        tr.fact(
            "final_bound prod det(A_j)^p_j <= C det(M+G)",
            math.exp(log_lhs),
            math.exp(log_rhs),
            log_lhs <= log_rhs + _REL_TOL * max(1.0, abs(log_rhs)),
        )
        return tr.build(constant)

    # low-eigenvalue branch: project trailing eigenvectors into H_0
    tr.fact("branch mu_min < gamma", mu[-1], gamma, mu[-1] < gamma)
    ell = int(np.count_nonzero(mu >= gamma))
    if not tr.ge("head_count>=n-dim(H0)", float(ell), float(n - loc.h0_dim)):
        return tr.build(math.nan)
    vbasis = eigvecs.copy()
    for i in range(ell, n):
        vbasis[:, i] = eigvecs[:, i] - proj @ eigvecs[:, i]
    displacement = max(
        float(np.linalg.norm(eigvecs[:, i] - vbasis[:, i])) for i in range(n)
    )
    tr.le("max_column_displacement<=sqrt(gamma)", displacement, math.sqrt(gamma))
    tr.le("near_basis_column_norms<=1", float(np.linalg.norm(vbasis, axis=0).max()), 1.0)
    tr.ge("near_basis_det>=alpha", abs(float(np.linalg.det(vbasis))), alpha)

    hval, tup = h_value(datum, vbasis, ell, policy)
    constant = math.nan
    if tup is None:
        tr.fact("admissible_tuples_exist", 0.0, 1.0, False)
        return tr.build(constant)
    tr.le("head_constraint_slack", _tuple_head_slack(datum, tup), 0.0)
    tr.ge("tail_constraint_slack", _tuple_tail_slack(datum, tup, ell), 0.0)
    tr.ge("min_wedge(v)>=c_hat", hval, c_hat)
    margin = max(mp.n_j * mp.norm2() ** mp.n_j for mp in datum.maps) * math.sqrt(gamma)
    tr.le("wedge_perturbation<=c_hat/2", margin, c_hat / 2.0)
    _hadamard_steps(tr, datum, a, eigvecs, tup, "wedge(e)", c_hat / 2.0)

    weights = tup.a_weights(datum.exponents, n)
    head_weight = float(np.sum(weights[:ell]))
    head_lhs = float(np.prod(mu[:ell] ** weights[:ell])) if ell else 1.0
    head_rhs = gamma ** (head_weight - ell) * (float(np.prod(mu[:ell])) if ell else 1.0)
    tr.le("head_chain", head_lhs, head_rhs)

    tail_weight = float(np.sum(weights[ell:]))
    tr.ge("tail_weight>=n-ell", tail_weight, float(n - ell))
    tail_lhs = float(np.prod(mu[ell:] ** weights[ell:]))
    tail_mid = mu[ell] ** (tail_weight - (n - ell)) * float(np.prod(mu[ell:]))
    tr.le("tail_chain", tail_lhs, tail_mid)
    tr.le("tail_chain_closure", tail_mid, float(np.prod(mu[ell:])))

    constant = gamma ** (head_weight - ell) / ((c_hat / 2.0) ** (2.0 * sum_p) * prod_pw)
    log_lhs = 2.0 * q.log_numerator
    log_rhs = math.log(constant) + 2.0 * q.log_denominator
    tr.fact(
        "final_bound prod det(A_j)^p_j <= C det(M+G)",
        math.exp(log_lhs),
        math.exp(log_rhs),
        log_lhs <= log_rhs + _REL_TOL * max(1.0, abs(log_rhs)),
    )
    return tr.build(constant)
