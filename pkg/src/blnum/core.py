"""Data model, validation, and numeric policy for Brascamp-Lieb data.

A Brascamp-Lieb datum is a finite family of surjective linear maps
``L_j : R^n -> R^{n_j}`` together with exponents ``p_j in [0, 1]``.
Everything downstream (finiteness checks, the Gaussian optimizer, the
certificate machinery, the tube and nonlinear experiments) consumes the
types defined here.

All matrices are stored row-major in float64; instances are immutable
after construction and safe to share across concurrent tasks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DatumFormatError",
    "NumericPolicy",
    "DEFAULT_POLICY",
    "LinearMap",
    "BLDatum",
    "ValidationReport",
    "validate_datum",
    "kernel_basis",
    "numerical_rank",
    "orth_columns",
    "datum_to_dict",
    "datum_from_dict",
    "loads_datum",
    "dumps_datum",
    "load_datum",
    "save_datum",
]


class DatumFormatError(ValueError):
    """A datum document or constructor argument is structurally malformed."""


@dataclass(frozen=True)
class NumericPolicy:
    """Tolerances and limits shared by all numeric routines.

    rank_tol
        Relative singular-value threshold: values below ``rank_tol * scale``
        count as zero when deciding ranks, kernels, and spans.
    conv_tol
        Relative objective-change threshold that stops fixed-point iteration.
    max_iter
        Iteration cap for the optimizer.
    diverge_norm
        Iterate magnitude treated as blow-up.
    grid_res
        Default points per axis for grid quadrature.
    """

    rank_tol: float = 1e-9
    conv_tol: float = 1e-10
    max_iter: int = 100_000
    diverge_norm: float = 1e12
    grid_res: int = 400

    def __post_init__(self):
        if not (self.rank_tol > 0 and self.conv_tol > 0 and self.diverge_norm > 0):
            raise ValueError("tolerances must be strictly positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.grid_res < 1:
            raise ValueError("grid_res must be strictly positive")


DEFAULT_POLICY = NumericPolicy()


def _freeze(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def numerical_rank(a, tol, scale=None):
    """Number of singular values of ``a`` above ``tol * scale``.

    ``scale`` defaults to the largest singular value of ``a`` itself; pass an
    external scale (e.g. the norm of a parent map) when ``a`` is a product
    whose entries may be uniformly tiny.
    """
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if scale is None:
        scale = s[0]
    if scale <= 0.0:
        return 0
    return int(np.count_nonzero(s > tol * scale))


def orth_columns(a, tol, scale=None):
    """Orthonormal basis for the column span of ``a``, judged at ``tol``."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros((a.shape[0], 0))
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if scale is None:
        scale = s[0] if s.size else 0.0
    if scale <= 0.0:
        return np.zeros((a.shape[0], 0))
    r = int(np.count_nonzero(s > tol * scale))
    return u[:, :r]


@dataclass(frozen=True)
class LinearMap:
    """A linear map R^n -> R^{n_j}, stored as its n_j-by-n matrix."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise DatumFormatError("map matrix must be 2-d and nonempty")
        if not np.all(np.isfinite(rows)):
            raise DatumFormatError("map matrix contains NaN or Inf")
        object.__setattr__(self, "rows", _freeze(rows))

    @property
    def n(self):
        return self.rows.shape[1]

    @property
    def n_j(self):
        return self.rows.shape[0]

    @property
    def corank(self):
        """Kernel dimension n - n_j of a surjective map."""
        return self.n - self.n_j

    def norm2(self):
        """Operator 2-norm (largest singular value)."""
        return float(np.linalg.norm(self.rows, 2))


@dataclass(frozen=True)
class BLDatum:
    """A Brascamp-Lieb datum: maps (L_1, ..., L_m) and exponents (p_1, ..., p_m)."""

    n: int
    maps: tuple
    exponents: tuple

    def __post_init__(self):
        maps = tuple(m if isinstance(m, LinearMap) else LinearMap(m) for m in self.maps)
        try:
            exps = tuple(float(p) for p in self.exponents)
        except (TypeError, ValueError) as exc:
            raise DatumFormatError("exponents must be real numbers") from exc
        if len(maps) == 0:
            raise DatumFormatError("datum needs at least one map")
        if len(maps) != len(exps):
            raise DatumFormatError(
                "structural mismatch: %d maps but %d exponents" % (len(maps), len(exps))
            )
        if any(not math.isfinite(p) for p in exps):
            raise DatumFormatError("exponents contain NaN or Inf")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "exponents", exps)

    @property
    def m(self):
        return len(self.maps)

    @property
    def q_exponents(self):
        """Dual exponents q_j = 1/p_j (requires every p_j > 0)."""
        if any(p <= 0.0 for p in self.exponents):
            raise ValueError("q_j = 1/p_j undefined for p_j = 0")
        return tuple(1.0 / p for p in self.exponents)

    def stack(self):
        """Vertical stack of all map matrices, shape (sum n_j, n)."""
        return np.vstack([m.rows for m in self.maps])

    @classmethod
    def from_rows(cls, rows_list, exponents):
        rows_list = list(rows_list)
        if not rows_list:
            raise DatumFormatError("datum needs at least one map")
        maps = tuple(LinearMap(r) for r in rows_list)
        return cls(maps[0].n, maps, tuple(exponents))


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of datum validation.

    ``violations`` and ``warnings`` are tuples of ``(code, j, detail)``
    where ``j`` is a map index or None for datum-level findings.  ``ok``
    holds exactly when no violation was found; warnings (currently only
    zero exponents) do not affect it.
    """

    ok: bool
    violations: tuple
    warnings: tuple = ()

    def to_dict(self):
        return {
            "ok": self.ok,
            "violations": [list(v) for v in self.violations],
            "warnings": [list(w) for w in self.warnings],
        }


def validate_datum(datum, policy=DEFAULT_POLICY):
    """Check every datum invariant and report all violations.

    Deterministic; never raises on invariant violations (only on malformed
    shapes, which the constructors already reject).
    """
    violations = []
    warnings = []
    ambient_ok = True
    for j, mp in enumerate(datum.maps):
        if mp.n != datum.n:
            violations.append(("ambient-mismatch", j, "map acts on R^%d, datum has n=%d" % (mp.n, datum.n)))
            ambient_ok = False
            continue
        if mp.n_j > mp.n:
            violations.append(("target-dim-exceeds-ambient", j, "n_j=%d > n=%d" % (mp.n_j, mp.n)))
            continue
        r = numerical_rank(mp.rows, policy.rank_tol)
        if r < mp.n_j:
            violations.append(("not-surjective", j, "numerical rank %d < n_j=%d" % (r, mp.n_j)))
    for j, p in enumerate(datum.exponents):
        if p < 0.0 or p > 1.0:
            violations.append(("exponent-out-of-range", j, "p_j=%r not in [0, 1]" % p))
        elif p == 0.0:
            warnings.append(("zero-exponent", j, "p_j=0 accepted by the type, rejected by optimizer entry points"))
    if ambient_ok:
        stack = datum.stack()
        r = numerical_rank(stack, policy.rank_tol)
        if r < datum.n:
            violations.append(
                ("common-kernel-nontrivial", None, "stacked rank %d < n=%d; common kernel has dim %d" % (r, datum.n, datum.n - r))
            )
    return ValidationReport(ok=not violations, violations=tuple(violations), warnings=tuple(warnings))


def kernel_basis(mp, policy=DEFAULT_POLICY):
    """Orthonormal basis of ker L, shape (n, n - rank).

    Accepts a LinearMap or a plain matrix.  For a valid (surjective) map the
    result has exactly ``corank`` columns and ``L @ basis`` vanishes within
    ``rank_tol * ||L||``.
    """
    rows = mp.rows if isinstance(mp, LinearMap) else np.asarray(mp, dtype=float)
    _, s, vh = np.linalg.svd(rows)
    scale = s[0] if s.size else 0.0
    if scale <= 0.0:
        r = 0
    else:
        r = int(np.count_nonzero(s > policy.rank_tol * scale))
    return vh[r:].T.copy()


# ---------------------------------------------------------------------------
# Datum file format: UTF-8 JSON {"n": int, "maps": [{"p": x, "rows": [[...]]}]}


def _reject_constant(token):
    raise DatumFormatError("non-finite number %r not allowed in datum files" % token)


def _check_number(x, what):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise DatumFormatError("%s must be a number, got %r" % (what, x))
    if not math.isfinite(x):
        raise DatumFormatError("%s must be finite" % what)
    return float(x)


def datum_from_dict(obj):
    """Build a BLDatum from a parsed JSON document, rejecting junk keys,
    ragged rows, and non-finite numbers."""
    if not isinstance(obj, dict):
        raise DatumFormatError("datum document must be a JSON object")
    extra = set(obj) - {"n", "maps"}
    if extra:
        raise DatumFormatError("unknown keys in datum document: %s" % sorted(extra))
    if "n" not in obj or "maps" not in obj:
        raise DatumFormatError('datum document needs keys "n" and "maps"')
    n = obj["n"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise DatumFormatError('"n" must be a positive integer')
    raw_maps = obj["maps"]
    if not isinstance(raw_maps, list) or not raw_maps:
        raise DatumFormatError('"maps" must be a nonempty array')
    maps = []
    exps = []
    for j, entry in enumerate(raw_maps):
        if not isinstance(entry, dict) or set(entry) != {"p", "rows"}:
            raise DatumFormatError('map %d must be an object with exactly keys "p" and "rows"' % j)
        exps.append(_check_number(entry["p"], "map %d exponent" % j))
        rows = entry["rows"]
        if not isinstance(rows, list) or not rows:
            raise DatumFormatError('map %d "rows" must be a nonempty array of arrays' % j)
        mat = []
        for i, row in enumerate(rows):
            if not isinstance(row, list) or len(row) != n:
                raise DatumFormatError("map %d row %d is ragged (expected length %d)" % (j, i, n))
            mat.append([_check_number(x, "map %d entry" % j) for x in row])
        maps.append(LinearMap(np.array(mat)))
    return BLDatum(n, tuple(maps), tuple(exps))


def datum_to_dict(datum):
    return {
        "n": datum.n,
        "maps": [
            {"p": p, "rows": [[float(x) for x in row] for row in mp.rows]}
            for mp, p in zip(datum.maps, datum.exponents)
        ],
    }


def loads_datum(text):
    try:
        obj = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise DatumFormatError("invalid JSON: %s" % exc) from exc
    return datum_from_dict(obj)


def dumps_datum(datum):
    return json.dumps(datum_to_dict(datum), sort_keys=True)


def load_datum(path):
    with open(path, "r", encoding="utf-8") as fh:
        return loads_datum(fh.read())


def save_datum(datum, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_datum(datum))
        fh.write("\n")
