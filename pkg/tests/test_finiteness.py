import numpy as np
import pytest

from blnum.core import BLDatum, NumericPolicy
from blnum.finiteness import (
    PartialLocalization,
    Subspace,
    check_partial,
    check_scaling,
    codimension_slack,
    dimension_slack,
    kernel_lattice,
    search_critical_subspaces,
)
from blnum.rng import haar_frame, stream


def test_scaling_examples(lw3, hoelder2, single_projection):
    assert check_scaling(lw3) == pytest.approx(0.0)
    assert check_scaling(hoelder2) == pytest.approx(0.0)
    assert check_scaling(single_projection) == pytest.approx(-1.0)


def test_dimension_slack_examples(lw2, infinite_datum):
    x_axis = Subspace.coordinate(2, [0])
    y_axis = Subspace.coordinate(2, [1])
    assert dimension_slack(lw2, x_axis) == pytest.approx(0.0)
    # 0.6 * 0 + 0.7 * 1 - 1 by hand
    assert dimension_slack(infinite_datum, y_axis) == pytest.approx(-0.3)
    hoelder3 = BLDatum.from_rows([np.eye(3)] * 2, (0.4, 0.6))
    for k in (1, 2):
        v = Subspace(haar_frame(stream(0, k), 3, k))
        assert dimension_slack(hoelder3, v) == pytest.approx(0.0, abs=1e-12)


def test_codimension_slack_examples(single_projection):
    assert codimension_slack(single_projection, Subspace.coordinate(2, [1])) == pytest.approx(0.0)
    assert codimension_slack(single_projection, Subspace.zero(2)) == pytest.approx(1.0)
    assert codimension_slack(single_projection, Subspace.full(2)) == pytest.approx(0.0)


def test_slack_identities_at_extremes(young, infinite_datum):
    for datum in (young, infinite_datum):
        n = datum.n
        total = sum(p * mp.n_j for p, mp in zip(datum.exponents, datum.maps))
        assert dimension_slack(datum, Subspace.zero(n)) == pytest.approx(0.0)
        assert codimension_slack(datum, Subspace.zero(n)) == pytest.approx(n - total)
        assert dimension_slack(datum, Subspace.full(n)) == pytest.approx(total - n)
        assert codimension_slack(datum, Subspace.full(n)) == pytest.approx(0.0)


def test_slacks_agree_when_scaling_holds(young, lw3):
    # algebraic identity: with scaling slack zero the two slacks coincide
    # (sum_j p_j dim L_jV - dim V) = (n - dim V) - sum_j p_j (n_j - dim L_jV)
    for datum in (young, lw3):
        assert abs(check_scaling(datum)) < 1e-9
        for k in range(1, datum.n):
            for i in range(5):
                v = Subspace(haar_frame(stream(7, k, i), datum.n, k))
                assert dimension_slack(datum, v) == pytest.approx(codimension_slack(datum, v), abs=1e-9)


def test_slack_invariant_under_reparametrisation(young):
    rng = np.random.default_rng(3)
    basis = haar_frame(stream(11, 1), 2, 1)
    v1 = Subspace(basis)
    # rotate the basis inside the same line (sign flip) and compare
    v2 = Subspace(-basis)
    assert abs(dimension_slack(young, v1) - dimension_slack(young, v2)) < 1e-8
    assert abs(codimension_slack(young, v1) - codimension_slack(young, v2)) < 1e-8


def test_kernel_lattice_young(young):
    lattice = kernel_lattice(young)
    dims = sorted(s.dim for s in lattice)
    # {0}, three kernel lines, R^2
    assert dims == [0, 1, 1, 1, 2]


def test_search_lw2_global(lw2):
    report = search_critical_subspaces(lw2, "global", budget=16, seed=0)
    assert report.verdict == "no-violation-found"
    assert report.min_slack == pytest.approx(0.0, abs=1e-9)
    assert report.scaling_slack == pytest.approx(0.0)


def test_search_witnessed_infinite(infinite_datum):
    report = search_critical_subspaces(infinite_datum, "global", budget=16, seed=0)
    assert report.verdict == "witnessed-infinite"
    assert report.min_slack == pytest.approx(-0.3, abs=1e-9)
    # witness is the y-axis
    w = report.witness.basis
    assert w.shape == (2, 1)
    assert abs(abs(w[1, 0]) - 1.0) < 1e-9


def test_search_young_enumeration(young):
    report = search_critical_subspaces(young, "global", budget=16, seed=1)
    assert report.verdict == "no-violation-found"
    assert report.scaling_slack == pytest.approx(0.0, abs=1e-12)
    # every kernel line has slack 2/3 * 2 - 1 = 1/3; the min over all
    # candidates is 0, attained at {0} and R^2
    assert report.min_slack == pytest.approx(0.0, abs=1e-9)


def test_search_hoelder_certified(hoelder2):
    report = search_critical_subspaces(hoelder2, "global", budget=8, seed=0)
    assert report.verdict == "certified-finite-special-case"


def test_search_budget_zero_rejected(lw2):
    with pytest.raises(ValueError):
        search_critical_subspaces(lw2, "global", budget=0, seed=0)


def test_witness_stable_under_perturbation(infinite_datum):
    # rank is lower semicontinuous, so a perturbed witness keeps its negative
    # slack only when the rank tolerance dominates the perturbation size
    policy = NumericPolicy(rank_tol=1e-5)
    report = search_critical_subspaces(infinite_datum, "global", budget=16, seed=0, policy=policy)
    rng = np.random.default_rng(5)
    for _ in range(10):
        noisy = report.witness.basis + 1e-6 * rng.standard_normal(report.witness.basis.shape)
        v = Subspace.from_span(noisy)
        assert dimension_slack(infinite_datum, v, policy) < -10 * policy.rank_tol


def test_check_partial_witnessed(single_projection):
    loc = PartialLocalization.from_matrix(np.diag([1.0, 0.0]))
    report = check_partial(single_projection, loc, budget=16, seed=0)
    assert report.verdict == "witnessed-infinite"
    assert report.min_slack == pytest.approx(-1.0, abs=1e-9)
    w = report.witness.basis
    assert abs(abs(w[1, 0]) - 1.0) < 1e-9


def test_check_partial_ok():
    datum = BLDatum.from_rows([[[0.0, 1.0]]], (1.0,))
    loc = PartialLocalization.from_matrix(np.diag([1.0, 0.0]))
    report = check_partial(datum, loc, budget=16, seed=0)
    assert report.verdict == "no-violation-found"
    assert report.min_slack >= -1e-9


def test_check_partial_identity_reduces_to_localized(single_projection):
    loc = PartialLocalization.from_matrix(np.eye(2))
    partial = check_partial(single_projection, loc, budget=16, seed=0)
    localized = search_critical_subspaces(single_projection, "localized", budget=16, seed=0)
    assert partial.verdict == localized.verdict
    assert partial.min_slack == pytest.approx(localized.min_slack, abs=1e-9)


def test_check_partial_dimension_mismatch(single_projection):
    loc = PartialLocalization.from_matrix(np.eye(3))
    with pytest.raises(ValueError):
        check_partial(single_projection, loc, budget=4, seed=0)


def test_report_json_shape(infinite_datum):
    report = search_critical_subspaces(infinite_datum, "global", budget=8, seed=0)
    doc = report.to_dict()
    assert set(doc) == {"scaling_slack", "verdict", "min_slack", "witness", "method"}
    assert doc["witness"] is not None


def test_search_deterministic(lw2):
    a = search_critical_subspaces(lw2, "localized", budget=32, seed=9)
    b = search_critical_subspaces(lw2, "localized", budget=32, seed=9)
    assert a.min_slack == b.min_slack
    assert a.method == b.method
