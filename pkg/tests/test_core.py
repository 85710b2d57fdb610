import json
import math

import numpy as np
import pytest

from blnum.core import (
    BLDatum,
    DatumFormatError,
    LinearMap,
    NumericPolicy,
    datum_to_dict,
    dumps_datum,
    kernel_basis,
    loads_datum,
    numerical_rank,
    validate_datum,
)


def test_loomis_whitney_validates(lw2):
    report = validate_datum(lw2)
    assert report.ok
    assert report.violations == ()


def test_zero_map_not_surjective():
    datum = BLDatum.from_rows([[[0.0, 0.0]], [[0.0, 1.0]]], (1.0, 1.0))
    report = validate_datum(datum)
    assert not report.ok
    assert any(code == "not-surjective" and j == 0 for code, j, _ in report.violations)


def test_single_projection_common_kernel(single_projection):
    report = validate_datum(single_projection)
    assert not report.ok
    codes = [code for code, _, _ in report.violations]
    assert "common-kernel-nontrivial" in codes


def test_exponent_range_and_zero_warning():
    datum = BLDatum.from_rows([np.eye(2), np.eye(2)], (1.5, 0.0))
    report = validate_datum(datum)
    assert any(code == "exponent-out-of-range" and j == 0 for code, j, _ in report.violations)
    assert any(code == "zero-exponent" and j == 1 for code, j, _ in report.warnings)
    # warnings do not flip ok on their own
    ok_datum = BLDatum.from_rows([np.eye(2), np.eye(2)], (1.0, 0.0))
    assert validate_datum(ok_datum).ok


def test_structural_mismatch_raises():
    with pytest.raises(DatumFormatError):
        BLDatum.from_rows([[[1.0, 0.0]]], (1.0, 1.0))
    with pytest.raises(DatumFormatError):
        BLDatum.from_rows([], ())


def test_validation_invariant_under_row_scaling(lw2):
    scaled = BLDatum.from_rows([m.rows * c for m, c in zip(lw2.maps, (37.0, -0.003))], lw2.exponents)
    assert validate_datum(scaled).ok


def test_stack_rank_equals_n():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(2, 5))
        rows = [rng.standard_normal((int(rng.integers(1, n + 1)), n)) for _ in range(3)]
        datum = BLDatum.from_rows(rows, (0.5, 0.5, 0.5))
        if validate_datum(datum).ok:
            assert numerical_rank(datum.stack(), 1e-9) == n


def test_kernel_basis_projection_axis():
    basis = kernel_basis(LinearMap([[1.0, 0.0]]))
    assert basis.shape == (2, 1)
    assert abs(abs(basis[1, 0]) - 1.0) < 1e-12


def test_kernel_basis_identity_empty():
    basis = kernel_basis(LinearMap(np.eye(2)))
    assert basis.shape == (2, 0)


def test_kernel_basis_diagonal_line():
    # nullspace of (1, -1) solved by hand: span{(1, 1)/sqrt(2)}
    mp = LinearMap([[1.0, -1.0]])
    basis = kernel_basis(mp)
    assert basis.shape == (2, 1)
    target = np.array([1.0, 1.0]) / math.sqrt(2.0)
    assert min(np.linalg.norm(basis[:, 0] - target), np.linalg.norm(basis[:, 0] + target)) < 1e-12
    assert np.abs(mp.rows @ basis).max() < 1e-12


def test_kernel_column_count_matches_corank():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(2, 6))
        nj = int(rng.integers(1, n + 1))
        mp = LinearMap(rng.standard_normal((nj, n)))
        assert kernel_basis(mp).shape == (n, n - nj)


def test_policy_rejects_bad_values():
    with pytest.raises(ValueError):
        NumericPolicy(rank_tol=0.0)
    with pytest.raises(ValueError):
        NumericPolicy(max_iter=0)


def test_nan_rows_rejected_at_construction():
    with pytest.raises(DatumFormatError):
        LinearMap([[float("nan"), 0.0]])


def test_json_roundtrip(young):
    text = dumps_datum(young)
    back = loads_datum(text)
    assert back.n == young.n
    assert back.exponents == young.exponents
    for a, b in zip(back.maps, young.maps):
        assert np.array_equal(a.rows, b.rows)


def test_json_rejects_nan_and_ragged():
    with pytest.raises(DatumFormatError):
        loads_datum('{"n": 2, "maps": [{"p": 1.0, "rows": [[NaN, 0.0]]}]}')
    with pytest.raises(DatumFormatError):
        loads_datum('{"n": 2, "maps": [{"p": 1.0, "rows": [[1.0]]}]}')
    with pytest.raises(DatumFormatError):
        loads_datum('{"n": 2, "maps": [{"p": 1.0, "rows": [[1.0, 0.0]]}], "junk": 1}')
    with pytest.raises(DatumFormatError):
        loads_datum('{"n": 2, "maps": [{"p": 1.0, "rows": [[1.0, 0.0]], "extra": 2}]}')


def test_json_format_shape(lw2):
    doc = json.loads(dumps_datum(lw2))
    assert set(doc) == {"n", "maps"}
    assert doc["n"] == 2
    assert all(set(m) == {"p", "rows"} for m in doc["maps"])
    assert datum_to_dict(lw2)["maps"][0]["rows"] == [[1.0, 0.0]]


def test_immutability(lw2):
    with pytest.raises(ValueError):
        lw2.maps[0].rows[0, 0] = 5.0
