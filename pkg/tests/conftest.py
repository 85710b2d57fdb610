import numpy as np
import pytest

from blnum.core import BLDatum


@pytest.fixture
def lw2():
    """Loomis-Whitney in R^2: coordinate projections, p = (1, 1)."""
    return BLDatum.from_rows([[[1.0, 0.0]], [[0.0, 1.0]]], (1.0, 1.0))


@pytest.fixture
def lw3():
    """Loomis-Whitney in R^3: coordinate-plane projections, p = (1/2, 1/2, 1/2)."""
    rows = [
        [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    ]
    return BLDatum.from_rows(rows, (0.5, 0.5, 0.5))


@pytest.fixture
def young():
    """Young-type datum in R^2: rows (1,0), (0,1), (1,-1), p_j = 2/3."""
    return BLDatum.from_rows([[[1.0, 0.0]], [[0.0, 1.0]], [[1.0, -1.0]]], (2 / 3, 2 / 3, 2 / 3))


@pytest.fixture
def hoelder2():
    """Hoelder datum on R^2: identity maps with exponents summing to one."""
    return BLDatum.from_rows([np.eye(2), np.eye(2)], (0.5, 0.5))


@pytest.fixture
def infinite_datum():
    """Datum with a dimension-condition violation at the y-axis (slack -0.3)."""
    return BLDatum.from_rows([[[1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]]], (0.6, 0.7))


@pytest.fixture
def single_projection():
    """Single map (1, 0) on R^2 with p = 1 (localised boundary example)."""
    return BLDatum.from_rows([[[1.0, 0.0]]], (1.0,))
