"""Gaussian determinant quotient and the fixed-point optimizer.

The constant of interest is the supremum over positive-definite
``A_j`` of

    prod_j det(A_j)^{p_j/2} / det(M + G)^{1/2},   M = sum_j p_j L_j^T A_j L_j,

with G = 0 (global), G = Id (unit-ball localisation), or a general PSD
G (partial localisation).  Suprema are approached by iterating the
stationarity condition ``A_j <- (L_j (M+G)^{-1} L_j^T)^{-1}`` with
objective-monotone damping, and classified as converged, boundary
plateau (finite supremum approached along an unbounded ray of inputs),
or diverging (unbounded objective).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_POLICY
from .finiteness import check_scaling
from .rng import random_spd, stream

__all__ = [
    "GaussianInput",
    "LocalizationMode",
    "GLOBAL",
    "UNIT_BALL",
    "partial_mode",
    "QuotientBreakdown",
    "OptimizerResult",
    "BlowupError",
    "UndeterminedError",
    "lieb_quotient",
    "gradient_log_quotient",
    "fixed_point_step",
    "compute_bl",
    "compute_bl_multistart",
    "rank_one_2d_oracle",
    "random_gaussian_input",
]

log = logging.getLogger(__name__)

# classification knobs (documented in README): plateau must hold for a full
# window; a ray drift is recognised by norm increments that fail to decay
_WINDOW = 40
_STEP_EPS = 1e-12
_RAY_RATIO = 0.8
_HARD_CAP = 1e100
_SCALING_TOL = 1e-9


class BlowupError(RuntimeError):
    """A fixed-point update hit a numerically singular L_j (M+G)^{-1} L_j^T."""

    def __init__(self, j, message=None):
        super().__init__(message or "blow-up direction at map index %d" % j)
        self.j = j


class UndeterminedError(RuntimeError):
    """Iteration budget exhausted without a defensible classification."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


@dataclass(frozen=True)
class GaussianInput:
    """Tuple of symmetric positive-definite matrices A_j, one per map."""

    mats: tuple

    def __post_init__(self):
        frozen = []
        for a in self.mats:
            a = np.array(a, dtype=float)
            if a.ndim == 0:
                a = a.reshape(1, 1)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ValueError("each A_j must be square")
            a.flags.writeable = False
            frozen.append(a)
        object.__setattr__(self, "mats", tuple(frozen))

    def __iter__(self):
        return iter(self.mats)

    def __len__(self):
        return len(self.mats)

    def max_norm(self):
        return max(float(np.linalg.norm(a)) for a in self.mats)

    @classmethod
    def identities(cls, datum):
        return cls(tuple(np.eye(mp.n_j) for mp in datum.maps))


def random_gaussian_input(datum, rng, spread=0.7):
    return GaussianInput(tuple(random_spd(rng, mp.n_j, spread) for mp in datum.maps))


@dataclass(frozen=True)
class LocalizationMode:
    """Quotient denominator weight: G = 0, G = Id, or an explicit PSD G."""

    kind: str
    g: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("global", "unit-ball", "partial"):
            raise ValueError("unknown localization kind %r" % self.kind)
        if self.kind == "partial":
            g = np.array(self.g, dtype=float)
            scale = max(1.0, float(np.abs(g).max()))
            if g.ndim != 2 or g.shape[0] != g.shape[1]:
                raise ValueError("partial G must be square")
            if not np.allclose(g, g.T, atol=1e-9 * scale):
                raise ValueError("partial G must be symmetric")
            if np.linalg.eigvalsh((g + g.T) / 2.0)[0] < -1e-9 * scale:
                raise ValueError("partial G must be positive semi-definite")
            g.flags.writeable = False
            object.__setattr__(self, "g", g)
        elif self.g is not None:
            raise ValueError("g is only meaningful for partial mode")

    def g_matrix(self, n):
        if self.kind == "global":
            return np.zeros((n, n))
        if self.kind == "unit-ball":
            return np.eye(n)
        if self.g.shape[0] != n:
            raise ValueError("G has dimension %d, datum has n=%d" % (self.g.shape[0], n))
        return self.g


GLOBAL = LocalizationMode("global")
UNIT_BALL = LocalizationMode("unit-ball")


def partial_mode(g):
    return LocalizationMode("partial", np.asarray(g, dtype=float))


@dataclass(frozen=True)
class QuotientBreakdown:
    """Log-space pieces of the Gaussian quotient at one input."""

    m_matrix: np.ndarray
    log_numerator: float
    log_denominator: float
    log_quotient: float

    @property
    def quotient(self):
        return math.exp(self.log_quotient) if math.isfinite(self.log_quotient) else math.inf


@dataclass(frozen=True)
class OptimizerResult:
    status: str  # converged | boundary_plateau | diverging
    value: float
    iterations: int
    final_input: GaussianInput
    grad_norm: float

    def to_dict(self):
        return {
            "status": self.status,
            "value": self.value if math.isfinite(self.value) else "inf",
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "final_input": [[[float(x) for x in row] for row in a] for a in self.final_input],
        }


def _check_spd_input(datum, a):
    if len(a) != datum.m:
        raise ValueError("expected %d Gaussian inputs, got %d" % (datum.m, len(a)))
    for j, (mat, mp) in enumerate(zip(a, datum.maps)):
        if mat.shape[0] != mp.n_j:
            raise ValueError("A_%d has shape %s, expected %d" % (j, mat.shape, mp.n_j))
        if not np.allclose(mat, mat.T, atol=1e-8 * (1.0 + np.abs(mat).max())):
            raise ValueError("A_%d is not symmetric" % j)


def _logdet_spd(mat, what):
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("%s is not positive definite" % what)
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def _require_positive_exponents(datum):
    if any(p <= 0.0 for p in datum.exponents):
        raise ValueError("optimizer entry points require every p_j > 0")


def _m_matrix(datum, a):
    m = np.zeros((datum.n, datum.n))
    for p, mp, mat in zip(datum.exponents, datum.maps, a):
        m += p * (mp.rows.T @ ((mat + mat.T) / 2.0) @ mp.rows)
    return (m + m.T) / 2.0


def lieb_quotient(datum, a, mode, policy=DEFAULT_POLICY):
    """Evaluate the Gaussian quotient at input ``a`` in log space.

    Returns a QuotientBreakdown; a numerically singular M + G yields the
    +inf quotient marker (log_denominator = -inf) rather than an exception.
    Non-SPD A_j is an error.
    """
    _require_positive_exponents(datum)
    _check_spd_input(datum, a)
    log_num = 0.0
    for j, (p, mat) in enumerate(zip(datum.exponents, a)):
        try:
            log_num += 0.5 * p * _logdet_spd(mat, "A_%d" % j)
        except np.linalg.LinAlgError:
            raise ValueError("A_%d is not positive definite" % j)
    m = _m_matrix(datum, a)
    denom_mat = m + mode.g_matrix(datum.n)
    try:
        log_den = 0.5 * _logdet_spd(denom_mat, "M + G")
    except np.linalg.LinAlgError:
        return QuotientBreakdown(m, log_num, -math.inf, math.inf)
    return QuotientBreakdown(m, log_num, log_den, log_num - log_den)


def gradient_log_quotient(datum, a, mode, policy=DEFAULT_POLICY):
    """Per-map gradient (p_j/2)(A_j^{-1} - L_j (M+G)^{-1} L_j^T) of the log quotient.

    Zero exactly at fixed points of the update rule.
    """
    _require_positive_exponents(datum)
    _check_spd_input(datum, a)
    m = _m_matrix(datum, a)
    denom = m + mode.g_matrix(datum.n)
    grads = []
    for p, mp, mat in zip(datum.exponents, datum.maps, a):
        inv_a = np.linalg.inv((mat + mat.T) / 2.0)
        pushed = mp.rows @ np.linalg.solve(denom, mp.rows.T)
        g = 0.5 * p * (inv_a - pushed)
        grads.append((g + g.T) / 2.0)
    return grads


def _grad_norm(grads):
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads))


def fixed_point_step(datum, a, mode, policy=DEFAULT_POLICY, damping=1.0):
    """One update A_j <- (L_j (M+G)^{-1} L_j^T)^{-1}, optionally damped.

    With damping lam the result is (1-lam) A_j + lam * update, which stays SPD
    whenever M + G is SPD (congruence); the smallest eigenvalue is asserted.
    """
    _require_positive_exponents(datum)
    _check_spd_input(datum, a)
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    m = _m_matrix(datum, a)
    denom = m + mode.g_matrix(datum.n)
    new = []
    for j, (mp, mat) in enumerate(zip(datum.maps, a)):
        try:
            pushed = mp.rows @ np.linalg.solve(denom, mp.rows.T)
            pushed = (pushed + pushed.T) / 2.0
            upd = np.linalg.inv(pushed)
        except np.linalg.LinAlgError:
            raise BlowupError(j)
        upd = (upd + upd.T) / 2.0
        cand = (1.0 - damping) * mat + damping * upd
        cand = (cand + cand.T) / 2.0
        if not np.all(np.isfinite(cand)) or np.linalg.eigvalsh(cand)[0] <= 0.0:
            raise BlowupError(j)
        new.append(cand)
    return GaussianInput(tuple(new))


def compute_bl(datum, mode, policy=DEFAULT_POLICY, a0=None):
    """Iterate the fixed-point update and classify the outcome.

    converged: objective plateaued, iterates stationary, gradient below
    10 * conv_tol.  boundary_plateau: objective plateaued while the iterates
    keep drifting along an unbounded ray (the supremum sits at the boundary).
    diverging: the objective keeps rising past diverge_norm-sized inputs
    (in global mode this is evidence the constant is infinite; localised and
    partial modes only stop at a much larger hard cap since finite suprema
    can sit at the boundary).  Exhausting max_iter raises UndeterminedError.
    """
    _require_positive_exponents(datum)
    if mode.kind == "global":
        slack = check_scaling(datum)
        if abs(slack) > _SCALING_TOL:
            raise ValueError(
                "global mode requires the scaling condition sum p_j n_j = n "
                "(slack %g); the supremum is trivially 0 or infinite under A -> tA" % slack
            )
    a = a0 if a0 is not None else GaussianInput.identities(datum)
    if not isinstance(a, GaussianInput):
        a = GaussianInput(tuple(a))
    q = lieb_quotient(datum, a, mode, policy)
    if not math.isfinite(q.log_quotient):
        raise ValueError("quotient is not finite at the starting input")

    lam = 1.0
    plateau_run = 0
    norms = [a.max_norm()]
    rel_step = math.inf
    trace = []
    cap = policy.diverge_norm if mode.kind == "global" else _HARD_CAP
    it = 0
    while it < policy.max_iter:
        it += 1
        try:
            candidate = fixed_point_step(datum, a, mode, policy, damping=lam)
        except BlowupError:
            grads = gradient_log_quotient(datum, a, mode, policy)
            return OptimizerResult("diverging", math.inf, it, a, _grad_norm(grads))
        q_new = lieb_quotient(datum, candidate, mode, policy)
        scale = max(1.0, abs(q.log_quotient))
        if not math.isfinite(q_new.log_quotient):
            return OptimizerResult("diverging", math.inf, it, a, math.nan)
        if q_new.log_quotient < q.log_quotient - 1e-15 * scale:
            if lam >= 1.0 - 1e-12:
                log.debug("undamped step decreased objective at iter %d (dq=%g)", it, q_new.log_quotient - q.log_quotient)
            lam /= 2.0
            if lam < 1e-14:
                grads = gradient_log_quotient(datum, a, mode, policy)
                gn = _grad_norm(grads)
                if gn < 10.0 * policy.conv_tol:
                    return OptimizerResult("converged", q.quotient, it, a, gn)
                raise UndeterminedError(
                    "damping exhausted with gradient norm %g at iteration %d" % (gn, it), trace
                )
            continue
        dq = q_new.log_quotient - q.log_quotient
        rel_step = max(
            float(np.linalg.norm(c - old) / (1.0 + np.linalg.norm(old)))
            for c, old in zip(candidate, a)
        )
        a = candidate
        q = q_new
        lam = min(1.0, 2.0 * lam)
        norms.append(a.max_norm())
        trace.append((it, q.log_quotient, norms[-1]))
        if len(trace) > 512:
            del trace[:256]

        plateau = dq <= policy.conv_tol * scale
        plateau_run = plateau_run + 1 if plateau else 0
        if norms[-1] > cap and not plateau:
            grads = gradient_log_quotient(datum, a, mode, policy)
            return OptimizerResult("diverging", math.inf, it, a, _grad_norm(grads))
        if plateau_run >= _WINDOW:
            if rel_step < _STEP_EPS:
                grads = gradient_log_quotient(datum, a, mode, policy)
                gn = _grad_norm(grads)
                if gn < 10.0 * policy.conv_tol:
                    return OptimizerResult("converged", q.quotient, it, a, gn)
            elif len(norms) > 2 * _WINDOW:
                inc_old = norms[-_WINDOW - 1] - norms[-2 * _WINDOW - 1]
                inc_new = norms[-1] - norms[-_WINDOW - 1]
                if inc_old > 0.0 and inc_new >= _RAY_RATIO * inc_old:
                    grads = gradient_log_quotient(datum, a, mode, policy)
                    return OptimizerResult("boundary_plateau", q.quotient, it, a, _grad_norm(grads))
    raise UndeterminedError(
        "max_iter=%d exhausted without classification (last log quotient %g, norm %g)"
        % (policy.max_iter, q.log_quotient, norms[-1]),
        trace,
    )


def compute_bl_multistart(datum, mode, policy=DEFAULT_POLICY, starts=1, seed=0):
    """Run compute_bl from the identity start plus ``starts - 1`` random SPD
    starts; return the best finite result, or a diverging one if any start
    diverges.  Finite values disagreeing by more than 1e-4 (relative) raise
    UndeterminedError."""
    if starts < 1:
        raise ValueError("starts must be at least 1")
    results = []
    for s in range(starts):
        a0 = None if s == 0 else random_gaussian_input(datum, stream(seed, s))
        results.append(compute_bl(datum, mode, policy, a0))
    for r in results:
        if r.status == "diverging":
            return r
    vals = [r.value for r in results]
    hi, lo = max(vals), min(vals)
    if hi - lo > 1e-4 * max(1.0, abs(hi)):
        raise UndeterminedError(
            "multi-start disagreement: values span [%g, %g] over %d starts" % (lo, hi, starts)
        )
    best = max(range(len(results)), key=lambda i: (vals[i], -i))
    return results[best]


def rank_one_2d_oracle(datum, policy=DEFAULT_POLICY):
    """Closed-form constant 1/|u1 v2 - u2 v1| for two rank-one maps in R^2
    with exponents (1, 1); the quotient is constant in A for this family, so
    this is an exact independent oracle for the optimizer."""
    if datum.n != 2 or datum.m != 2:
        raise ValueError("oracle needs n = 2 and m = 2")
    if any(mp.n_j != 1 for mp in datum.maps):
        raise ValueError("oracle needs rank-one maps")
    if any(abs(p - 1.0) > 1e-12 for p in datum.exponents):
        raise ValueError("oracle needs exponents (1, 1)")
    u = datum.maps[0].rows[0]
    v = datum.maps[1].rows[0]
    det = u[0] * v[1] - u[1] * v[0]
    if abs(det) < policy.rank_tol:
        return math.inf
    return 1.0 / abs(det)
