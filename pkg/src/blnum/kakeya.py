"""Tube families and grid quadrature for Kakeya-type overlap experiments.

A tube is the set of points within Euclidean distance delta of an
affine subspace (so a "width delta" tube has thickness 2*delta; all
closed-form reference values follow this convention).  Families carry a
direction tolerance: every member's core subspace must be within
Grassmann distance nu of the kernel of the associated linear map.  The
Grassmann distance used throughout is the chordal metric
``sqrt(k - ||D^T K||_F^2)``, which equals the Frobenius distance of the
orthogonal projectors divided by sqrt(2) and satisfies the triangle
inequality.

The quadrature is a midpoint rule on a uniform grid over [-1, 1]^n;
boundary cells contribute by center membership, giving an O(h/delta)
relative error, which is cheap and predictable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_POLICY, kernel_basis
from .rng import stream

__all__ = [
    "Tube",
    "TubeFamily",
    "GridSpec",
    "KakeyaResult",
    "grassmann_distance",
    "kakeya_lhs",
    "kakeya_ratio",
    "random_families",
    "coarsen_tubes",
    "measure_kappa",
    "partition_by_direction",
]

_CHUNK_TARGET = 2_000_000  # points per quadrature slab


def grassmann_distance(d1, d2):
    """Chordal Grassmann distance sqrt(k - ||D1^T D2||_F^2) between two
    subspaces given by orthonormal direction matrices of equal rank."""
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    if d1.shape != d2.shape:
        raise ValueError("direction matrices must have equal shape")
    k = d1.shape[1]
    overlap = float(np.sum((d1.T @ d2) ** 2))
    return math.sqrt(max(k - overlap, 0.0))


@dataclass(frozen=True)
class Tube:
    """delta-neighbourhood of an affine subspace: points x with
    ||(x - center) - D D^T (x - center)|| <= width."""

    center: np.ndarray
    directions: np.ndarray
    width: float
    j: int

    def __post_init__(self):
        c = np.array(self.center, dtype=float)
        d = np.array(self.directions, dtype=float)
        if d.ndim != 2 or d.shape[0] != c.shape[0]:
            raise ValueError("directions must be an n-by-k matrix matching the center")
        if d.shape[1] > 0 and not np.allclose(d.T @ d, np.eye(d.shape[1]), atol=1e-8):
            raise ValueError("tube directions must be orthonormal")
        if not self.width > 0.0:
            raise ValueError("tube width must be positive")
        c.flags.writeable = False
        d.flags.writeable = False
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "directions", d)

    @property
    def n(self):
        return self.center.shape[0]

    def contains(self, points):
        """Boolean membership mask for an (N, n) array of points."""
        y = np.asarray(points, dtype=float) - self.center
        along = y @ self.directions
        dist2 = np.einsum("ij,ij->i", y, y) - np.einsum("ij,ij->i", along, along)
        return dist2 <= self.width**2 + 1e-15


@dataclass(frozen=True)
class TubeFamily:
    """Tubes sharing a family index, all within Grassmann distance nu of a
    reference kernel basis."""

    tubes: tuple
    nu: float
    reference_kernel: np.ndarray

    def __post_init__(self):
        tubes = tuple(self.tubes)
        if not tubes:
            raise ValueError("empty tube family")
        ref = np.array(self.reference_kernel, dtype=float)
        js = {t.j for t in tubes}
        if len(js) != 1:
            raise ValueError("tubes in a family must share the family index")
        for t in tubes:
            if t.directions.shape != ref.shape:
                raise ValueError("tube direction shape does not match reference kernel")
            if grassmann_distance(t.directions, ref) > self.nu + 1e-9:
                raise ValueError("tube direction outside the nu-ball around the reference kernel")
        ref.flags.writeable = False
        object.__setattr__(self, "tubes", tubes)
        object.__setattr__(self, "reference_kernel", ref)

    @property
    def j(self):
        return self.tubes[0].j

    @property
    def n(self):
        return self.tubes[0].n

    def common_width(self):
        widths = {t.width for t in self.tubes}
        if len(widths) != 1:
            raise ValueError("tubes within a family must share a single width delta")
        return widths.pop()


@dataclass(frozen=True)
class GridSpec:
    """Uniform midpoint grid over the cube [-1, 1]^n."""

    resolution: int

    def __post_init__(self):
        if self.resolution < 8:
            raise ValueError("grid resolution must be at least 8")

    def axis(self):
        h = 2.0 / self.resolution
        return -1.0 + h * (np.arange(self.resolution) + 0.5)

    def cell_volume(self, n):
        return (2.0 / self.resolution) ** n


@dataclass(frozen=True)
class KakeyaResult:
    lhs: float
    rhs_base: float
    ratio: float

    def to_dict(self):
        return {"lhs": self.lhs, "rhs_base": self.rhs_base, "ratio": self.ratio}


def _point_slabs(grid, n):
    """Yield (N, n) arrays of midpoint-grid points, in row-major slabs."""
    axis = grid.axis()
    res = grid.resolution
    per_slice = res ** (n - 1)
    rows_per_slab = max(1, _CHUNK_TARGET // max(per_slice, 1))
    mesh_axes = [axis] * (n - 1)
    for start in range(0, res, rows_per_slab):
        block = axis[start : start + rows_per_slab]
        grids = np.meshgrid(block, *mesh_axes, indexing="ij")
        pts = np.stack([g.reshape(-1) for g in grids], axis=1)
        yield pts


def kakeya_lhs(families, p, grid):
    """Midpoint quadrature over [-1, 1]^n of prod_j (tube count of family j)^{p_j}.

    A zero count annihilates the integrand whenever its exponent is positive;
    exponent-zero factors are identically one.
    """
    families = list(families)
    if not families:
        raise ValueError("need at least one tube family")
    p = [float(x) for x in p]
    if len(p) != len(families):
        raise ValueError("one exponent per family required")
    n = families[0].n
    total = 0.0
    for pts in _point_slabs(grid, n):
        integrand = np.ones(len(pts))
        for fam, pj in zip(families, p):
            counts = np.zeros(len(pts), dtype=np.int32)
            for tube in fam.tubes:
                counts += tube.contains(pts)
            if pj == 0.0:
                continue
            factor = np.zeros(len(pts))
            pos = counts > 0
            factor[pos] = counts[pos].astype(float) ** pj
            integrand *= factor
        total += float(integrand.sum())
    return total * grid.cell_volume(n)


def kakeya_ratio(families, p, grid):
    """Empirical constant: quadrature value against delta^n prod (#tubes)^{p_j}."""
    families = list(families)
    if not families:
        raise ValueError("need at least one tube family")
    widths = {fam.common_width() for fam in families}
    if len(widths) != 1:
        raise ValueError("all families must share a single width delta per experiment")
    delta = widths.pop()
    n = families[0].n
    lhs = kakeya_lhs(families, p, grid)
    rhs = delta**n
    for fam, pj in zip(families, p):
        rhs *= float(len(fam.tubes)) ** float(pj)
    return KakeyaResult(lhs=lhs, rhs_base=rhs, ratio=lhs / rhs)


def random_families(datum, delta, nu, counts, seed, policy=DEFAULT_POLICY):
    """One random tube family per map: directions are the kernel basis
    perturbed by Gaussian noise of scale nu, re-orthonormalized, and
    rejection-checked against the Grassmann constraint; centers are uniform
    in [-1, 1]^n.  Deterministic per seed."""
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    counts = list(counts)
    if len(counts) != datum.m:
        raise ValueError("need one tube count per map")
    if any(c < 1 for c in counts):
        raise ValueError("empty family: every count must be at least 1")
    fams = []
    for j, mp in enumerate(datum.maps):
        ref = kernel_basis(mp, policy)
        if ref.shape[1] == 0:
            raise ValueError("map %d has trivial kernel; tubes would be points" % j)
        rng = stream(seed, j)
        tubes = []
        for _t in range(counts[j]):
            if nu == 0.0:
                d = ref
            else:
                d = None
                for _attempt in range(200):
                    noise = rng.standard_normal(ref.shape) * (0.5 * nu)
                    cand, _ = np.linalg.qr(ref + noise)
                    if grassmann_distance(cand, ref) <= nu:
                        d = cand
                        break
                if d is None:
                    raise RuntimeError("direction rejection sampling failed for map %d" % j)
            center = rng.uniform(-1.0, 1.0, size=datum.n)
            tubes.append(Tube(center, d, delta, j))
        fams.append(TubeFamily(tuple(tubes), nu, ref))
    return fams


def coarsen_tubes(family, factor, nu):
    """Fatten every tube from width delta to delta + factor * delta / nu
    (the coarse-scale tubes of the induction step); cores are unchanged."""
    if factor < 0:
        raise ValueError("factor must be nonnegative")
    if factor > 0 and nu <= 0:
        raise ValueError("nu must be positive when fattening")
    new = []
    for t in family.tubes:
        width = t.width + (factor * t.width / nu if factor > 0 else 0.0)
        new.append(Tube(t.center, t.directions, width, t.j))
    return TubeFamily(tuple(new), family.nu, family.reference_kernel)


def measure_kappa(datum, delta, nu, trials, counts, grid, seed, policy=DEFAULT_POLICY):
    """Empirical induction-on-scales factor.

    c_fine is the worst empirical ratio over random families at scale delta,
    c_coarse the same at scale delta/nu (same per-trial seeds, so nu = 1
    reproduces identical experiments and kappa_hat = 1 exactly).  Returns
    ``{"c_fine", "c_coarse", "kappa_hat"}`` plus the per-trial ratio lists.
    """
    if not delta < nu <= 1.0:
        raise ValueError("need delta < nu <= 1")
    if trials < 1:
        raise ValueError("need at least one trial")
    p = datum.exponents
    fine, coarse = [], []
    for t in range(trials):
        fams = random_families(datum, delta, nu, counts, stream(seed, t).integers(2**63), policy)
        fine.append(kakeya_ratio(fams, p, grid).ratio)
        fams = random_families(datum, delta / nu, nu, counts, stream(seed, t).integers(2**63), policy)
        coarse.append(kakeya_ratio(fams, p, grid).ratio)
    c_fine = max(fine)
    c_coarse = max(coarse)
    return {
        "c_fine": c_fine,
        "c_coarse": c_coarse,
        "kappa_hat": c_fine / c_coarse,
        "fine_ratios": fine,
        "coarse_ratios": coarse,
    }


def partition_by_direction(family, nu):
    """Greedy clustering of tubes into sub-families of Grassmann diameter at
    most nu: each tube joins the first cluster whose anchor is within nu/2
    (triangle inequality bounds the diameter), so anchors stay pairwise
    separated and the cluster count is bounded by a covering number of the
    direction ball.  The union of the output is the input multiset."""
    if nu <= 0:
        raise ValueError("nu must be positive")
    anchors = []
    clusters = []
    for tube in family.tubes:
        placed = False
        for idx, anchor in enumerate(anchors):
            if grassmann_distance(tube.directions, anchor) <= nu / 2.0:
                clusters[idx].append(tube)
                placed = True
                break
        if not placed:
            anchors.append(tube.directions)
            clusters.append([tube])
    return [
        TubeFamily(tuple(cluster), nu, anchor)
        for anchor, cluster in zip(anchors, clusters)
    ]
