import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bertrand_eq.market_model import Market, firm_blocks, intra_firm_mask, validate_prices


def market(owner):
    J = len(owner)
    return Market(owner=owner, costs=np.ones(J), characteristics=np.zeros((J, 1)))


def test_firm_blocks_examples():
    # 0-based versions of owner=[1,1], [1,2,1] and [1]
    assert firm_blocks(market([0, 0])) == [(0, [0, 1])]
    assert firm_blocks(market([0, 1, 0])) == [(0, [0, 2]), (1, [1])]
    assert firm_blocks(market([0])) == [(0, [0])]


def test_intra_firm_mask_examples():
    assert np.array_equal(intra_firm_mask(market([0, 1])), np.eye(2, dtype=bool))
    assert intra_firm_mask(market([0, 0])).all()
    m = intra_firm_mask(market([0, 1, 0]))
    expected = np.array([[1, 0, 1], [0, 1, 0], [1, 0, 1]], dtype=bool)
    assert np.array_equal(m, expected)


def test_rejects_bad_markets():
    with pytest.raises(ValueError, match="own no products"):
        market([0, 2])
    with pytest.raises(ValueError):
        Market(owner=[0], costs=[-1.0], characteristics=[[0.0]])
    with pytest.raises(ValueError):
        Market(owner=[0], costs=[np.nan], characteristics=[[0.0]])
    with pytest.raises(ValueError):
        Market(owner=[1, 1], costs=[1, 1], characteristics=[[0.0], [0.0]])


def test_prices_validated():
    m = market([0, 0])
    with pytest.raises(ValueError):
        validate_prices(m, [1.0])
    with pytest.raises(ValueError):
        validate_prices(m, [1.0, np.inf])
    assert validate_prices(m, [1, 2]).dtype == float


def test_records_are_one_based_and_round_trip():
    m = Market(owner=[0, 1, 0], costs=[1.0, 2.0, 3.0], characteristics=[[1.0], [2.0], [3.0]], labels=("a", "b", "c"))
    records = m.to_records()
    assert [r["firm"] for r in records] == [1, 2, 1]
    back = Market.from_records(records)
    assert np.array_equal(back.owner, m.owner)
    assert np.array_equal(back.costs, m.costs)
    assert back.labels == ("a", "b", "c")
    with pytest.raises(ValueError, match="1-based"):
        Market.from_records([{"firm": 0, "cost": 1.0}])


@given(st.lists(st.integers(0, 4), min_size=1, max_size=12))
def test_blocks_partition_products(raw):
    # relabel so firms are 0..F-1 in order of first appearance
    labels = {f: i for i, f in enumerate(dict.fromkeys(raw))}
    owner = [labels[f] for f in raw]
    m = market(owner)
    sizes = sum(len(b) for _, b in firm_blocks(m))
    assert sizes == m.J
    flat = sorted(j for _, b in firm_blocks(m) for j in b)
    assert flat == list(range(m.J))
    mask = intra_firm_mask(m)
    assert np.array_equal(mask, mask.T)
    assert np.array_equal(mask, np.equal.outer(owner, owner))
