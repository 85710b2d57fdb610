"""Scaling, dimension, codimension, and partially-localised finiteness checks.

The global constant is finite iff the scaling condition holds and
``dim V <= sum_j p_j dim(L_j V)`` for every subspace V; the unit-ball
(localised) constant is finite iff
``codim V >= sum_j p_j codim(L_j V)`` for every V; the partially
localised constant needs the dimension condition inside ker G and the
codimension condition everywhere.  No finite test set of subspaces is
known to decide these in general, so the searcher is sound only in one
direction: ``witnessed-infinite`` exhibits a violating subspace, while
``no-violation-found`` is deliberately not a finiteness certificate.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_POLICY, kernel_basis, numerical_rank, orth_columns
from .rng import haar_frame, stream

__all__ = [
    "Subspace",
    "PartialLocalization",
    "FinitenessReport",
    "check_scaling",
    "dimension_slack",
    "codimension_slack",
    "kernel_lattice",
    "search_critical_subspaces",
    "check_partial",
]

LATTICE_CAP = 4096
COORDINATE_MAX_N = 12
_FINGERPRINT_DECIMALS = 6


@dataclass(frozen=True)
class Subspace:
    """A linear subspace of R^n, held as an orthonormal basis matrix (n, k)."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.array(self.basis, dtype=float)
        if b.ndim != 2:
            raise ValueError("basis must be a 2-d matrix")
        if b.shape[1] > 0:
            gram = b.T @ b
            if not np.allclose(gram, np.eye(b.shape[1]), atol=1e-6):
                raise ValueError("basis columns are not orthonormal")
        b.flags.writeable = False
        object.__setattr__(self, "basis", b)

    @property
    def n(self):
        return self.basis.shape[0]

    @property
    def dim(self):
        return self.basis.shape[1]

    def projector(self):
        return self.basis @ self.basis.T

    def fingerprint(self):
        """Deterministic key identifying the subspace up to basis choice."""
        p = np.round(self.projector(), _FINGERPRINT_DECIMALS) + 0.0
        return (self.dim, p.tobytes())

    @classmethod
    def zero(cls, n):
        return cls(np.zeros((n, 0)))

    @classmethod
    def full(cls, n):
        return cls(np.eye(n))

    @classmethod
    def coordinate(cls, n, indices):
        b = np.zeros((n, len(indices)))
        for col, i in enumerate(sorted(indices)):
            b[i, col] = 1.0
        return cls(b)

    @classmethod
    def from_span(cls, vectors, policy=DEFAULT_POLICY):
        """Orthonormalize the columns of ``vectors`` (rank judged at policy tolerance)."""
        return cls(orth_columns(np.asarray(vectors, dtype=float), policy.rank_tol))


@dataclass(frozen=True)
class PartialLocalization:
    """A positive semi-definite weight G together with H_0 = ker G."""

    G: np.ndarray
    H0_basis: np.ndarray

    def __post_init__(self):
        g = np.array(self.G, dtype=float)
        h0 = np.array(self.H0_basis, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("G must be square")
        scale = max(1.0, float(np.abs(g).max()))
        if not np.allclose(g, g.T, atol=1e-9 * scale):
            raise ValueError("G must be symmetric")
        eigs = np.linalg.eigvalsh((g + g.T) / 2.0)
        if eigs.size and eigs[0] < -1e-9 * scale:
            raise ValueError("G must be positive semi-definite (min eig %g)" % eigs[0])
        if h0.shape[0] != g.shape[0]:
            raise ValueError("H0 basis dimension mismatch")
        if h0.shape[1] and np.abs(g @ h0).max() > 1e-7 * scale:
            raise ValueError("H0 basis is not annihilated by G")
        g.flags.writeable = False
        h0.flags.writeable = False
        object.__setattr__(self, "G", g)
        object.__setattr__(self, "H0_basis", h0)

    @property
    def n(self):
        return self.G.shape[0]

    @property
    def h0_dim(self):
        return self.H0_basis.shape[1]

    @classmethod
    def from_matrix(cls, g, policy=DEFAULT_POLICY):
        g = np.asarray(g, dtype=float)
        g = (g + g.T) / 2.0
        return cls(g, kernel_basis(g, policy))


@dataclass(frozen=True)
class FinitenessReport:
    """Search outcome: worst slack found, its witness, and how it was found."""

    scaling_slack: float
    verdict: str  # witnessed-infinite | no-violation-found | certified-finite-special-case
    min_slack: float
    witness: Subspace | None
    method: str  # kernel-lattice | coordinate | random-search

    def to_dict(self):
        return {
            "scaling_slack": self.scaling_slack,
            "verdict": self.verdict,
            "min_slack": self.min_slack,
            "witness": None if self.witness is None else [[float(x) for x in row] for row in self.witness.basis],
            "method": self.method,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def check_scaling(datum):
    """Scaling slack sum_j p_j n_j - n (zero is the scaling condition)."""
    return float(sum(p * mp.n_j for p, mp in zip(datum.exponents, datum.maps)) - datum.n)


def _image_dims(datum, subspace, policy):
    dims = []
    for mp in datum.maps:
        if subspace.dim == 0:
            dims.append(0)
            continue
        dims.append(numerical_rank(mp.rows @ subspace.basis, policy.rank_tol, scale=mp.norm2()))
    return dims

def dimension_slack(datum, subspace, policy=DEFAULT_POLICY):
    """sum_j p_j dim(L_j V) - dim V; nonnegative for all V is the dimension condition."""
    dims = _image_dims(datum, subspace, policy)
    return float(sum(p * d for p, d in zip(datum.exponents, dims)) - subspace.dim)


def codimension_slack(datum, subspace, policy=DEFAULT_POLICY):
    """codim(V) - sum_j p_j codim(L_j V); nonnegative for all V characterises
    finiteness of the unit-ball localised constant."""
    dims = _image_dims(datum, subspace, policy)
    total = sum(p * (mp.n_j - d) for p, mp, d in zip(datum.exponents, datum.maps, dims))
    return float((datum.n - subspace.dim) - total)


def _sum_subspace(a, b, tol):
    return Subspace(orth_columns(np.hstack([a.basis, b.basis]), tol, scale=1.0))


def _intersect_subspace(a, b, tol):
    n = a.n
    comp = np.vstack([np.eye(n) - a.projector(), np.eye(n) - b.projector()])
    _, s, vh = np.linalg.svd(comp)
    # projector complements have singular values near 0 or >= something O(1)
    r = int(np.count_nonzero(s > 1e3 * tol))
    return Subspace(vh[r:].T.copy())


def kernel_lattice(datum, policy=DEFAULT_POLICY, cap=LATTICE_CAP):
    """Closure of {ker L_j} under sums and intersections, plus {0} and R^n.

    Iterated to a fixed point, capped at ``cap`` distinct subspaces
    (deduplicated by rounded-projector fingerprints) so it always terminates.
    """
    n = datum.n
    tol = policy.rank_tol
    members = {}
    def add(sub):
        key = sub.fingerprint()
        if key not in members:
            members[key] = sub
            return True
        return False

    add(Subspace.zero(n))
    add(Subspace.full(n))
    for mp in datum.maps:
        add(Subspace(kernel_basis(mp, policy)))
    changed = True
    while changed and len(members) < cap:
        changed = False
        current = list(members.values())
        for a, b in itertools.combinations(current, 2):
            for combo in (_sum_subspace(a, b, tol), _intersect_subspace(a, b, tol)):
                if add(combo):
                    changed = True
                    if len(members) >= cap:
                        return _sorted_subspaces(members.values())
    return _sorted_subspaces(members.values())


def _sorted_subspaces(subs):
    return sorted(subs, key=lambda s: s.fingerprint())


def _candidate_pool(datum, budget, seed, policy):
    """(subspace, method) candidates: kernel lattice, coordinate subspaces,
    and ``budget`` random subspaces per dimension, deduplicated in that
    priority order."""
    n = datum.n
    seen = set()
    pool = []

    def add(sub, method):
        key = sub.fingerprint()
        if key not in seen:
            seen.add(key)
            pool.append((sub, method))

    for sub in kernel_lattice(datum, policy):
        add(sub, "kernel-lattice")
    if n <= COORDINATE_MAX_N:
        for k in range(1, n):
            for idxs in itertools.combinations(range(n), k):
                add(Subspace.coordinate(n, idxs), "coordinate")
    for k in range(1, n):
        for i in range(budget):
            basis = haar_frame(stream(seed, k, i), n, k)
            add(Subspace(basis), "random-search")
    pool.sort(key=lambda item: item[0].fingerprint())
    return pool


def _verdict_from(min_slack, witness, policy):
    if min_slack < -10.0 * policy.rank_tol and witness is not None:
        return "witnessed-infinite"
    return "no-violation-found"


def _scan(datum, candidates, slack_fn, policy):
    min_slack = np.inf
    witness = None
    method = "kernel-lattice"
    for sub, src in candidates:
        slack = slack_fn(datum, sub, policy)
        if slack < min_slack:
            min_slack = slack
            witness = sub
            method = src
    return float(min_slack), witness, method


def _special_case(datum, mode):
    """Hoelder-type data (every map invertible) are decidable exactly."""
    if any(mp.n_j != datum.n for mp in datum.maps):
        return None
    total = sum(datum.exponents)
    if mode == "global" and abs(total - 1.0) <= 1e-9:
        return "certified-finite-special-case"
    if mode == "localized" and total <= 1.0 + 1e-9:
        return "certified-finite-special-case"
    return None


def search_critical_subspaces(datum, mode="global", budget=32, seed=0, policy=DEFAULT_POLICY):
    """Search for a subspace violating the dimension (global) or codimension
    (localized) condition.

    Candidates are the kernel-lattice closure, all coordinate subspaces when
    n <= 12, and ``budget`` seeded random subspaces per dimension.  The
    verdict ``witnessed-infinite`` requires slack below ``-10 * rank_tol``;
    anything else is ``no-violation-found`` (not a certificate) except for
    Hoelder-type data where finiteness is decidable exactly.
    """
    if mode not in ("global", "localized"):
        raise ValueError("mode must be 'global' or 'localized'")
    if budget <= 0:
        raise ValueError("budget must be positive")
    scaling = check_scaling(datum)
    candidates = _candidate_pool(datum, budget, seed, policy)
    slack_fn = dimension_slack if mode == "global" else codimension_slack
    min_slack, witness, method = _scan(datum, candidates, slack_fn, policy)
    verdict = _verdict_from(min_slack, witness, policy)
    if verdict == "no-violation-found":
        special = _special_case(datum, mode)
        if special:
            verdict = special
    witness_out = witness if verdict == "witnessed-infinite" else None
    return FinitenessReport(scaling, verdict, min_slack, witness_out, method)


def _restrict_candidates_to_h0(datum, loc, budget, seed, policy):
    """Candidate subspaces of H_0: lattice members and coordinate subspaces
    intersected with H_0, plus random subspaces drawn inside H_0."""
    n = datum.n
    h0 = Subspace(loc.H0_basis)
    seen = set()
    pool = []

    def add(sub, method):
        key = sub.fingerprint()
        if key not in seen:
            seen.add(key)
            pool.append((sub, method))

    add(Subspace.zero(n), "kernel-lattice")
    add(h0, "kernel-lattice")
    for sub in kernel_lattice(datum, policy):
        add(_intersect_subspace(sub, h0, policy.rank_tol), "kernel-lattice")
    if n <= COORDINATE_MAX_N:
        for k in range(1, n):
            for idxs in itertools.combinations(range(n), k):
                add(_intersect_subspace(Subspace.coordinate(n, idxs), h0, policy.rank_tol), "coordinate")
    h = loc.h0_dim
    for k in range(1, h + 1):
        for i in range(budget):
            inner = haar_frame(stream(seed, 1000 + k, i), h, k)
            add(Subspace(loc.H0_basis @ inner), "random-search")
    pool.sort(key=lambda item: item[0].fingerprint())
    return pool


def check_partial(datum, loc, budget=32, seed=0, policy=DEFAULT_POLICY):
    """Probe the partially-localised finiteness conditions.

    Evaluates the dimension condition over candidate subspaces of H_0 = ker G
    and the codimension condition over candidate subspaces of R^n, using the
    same candidate-generation strategy as ``search_critical_subspaces``
    restricted appropriately.  Returns the worst slack with its witness.
    """
    if loc.n != datum.n:
        raise ValueError("localization dimension %d does not match datum n=%d" % (loc.n, datum.n))
    if budget <= 0:
        raise ValueError("budget must be positive")
    scaling = check_scaling(datum)

    inside = _restrict_candidates_to_h0(datum, loc, budget, seed, policy)
    min_in, wit_in, meth_in = _scan(datum, inside, dimension_slack, policy)

    everywhere = _candidate_pool(datum, budget, seed, policy)
    min_out, wit_out, meth_out = _scan(datum, everywhere, codimension_slack, policy)

    if min_in <= min_out:
        min_slack, witness, method = min_in, wit_in, meth_in
    else:
        min_slack, witness, method = min_out, wit_out, meth_out
    verdict = _verdict_from(min_slack, witness, policy)
    witness_out = witness if verdict == "witnessed-infinite" else None
    return FinitenessReport(scaling, verdict, min_slack, witness_out, method)
