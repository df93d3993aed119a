"""Products, firms, ownership and unit costs.

Indices are 0-based everywhere inside the library. Reports and scenario
files use 1-based product and firm numbers; conversion happens at the I/O
boundary only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Market:
    """An immutable market description.

    ``owner[j]`` is the (0-based) firm that sells product ``j``. Firms must be
    numbered ``0..F-1`` and each must own at least one product.
    """

    owner: np.ndarray
    costs: np.ndarray
    characteristics: np.ndarray
    labels: tuple[str, ...] | None = None
    blocks: tuple[np.ndarray, ...] = field(init=False, repr=False)
    same_firm: np.ndarray = field(init=False, repr=False)
    ownership: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        owner = np.asarray(self.owner, dtype=np.int64).ravel()
        costs = np.asarray(self.costs, dtype=float).ravel()
        chars = np.asarray(self.characteristics, dtype=float)
        if owner.size == 0:
            raise ValueError("a market needs at least one product")
        if chars.ndim == 1:
            chars = chars.reshape(owner.size, -1)
        if chars.ndim != 2 or chars.shape[0] != owner.size:
            raise ValueError("characteristics must be a J x K matrix")
        if costs.shape != owner.shape:
            raise ValueError("costs must have one entry per product")
        if not np.all(np.isfinite(costs)) or np.any(costs < 0):
            raise ValueError("unit costs must be finite and non-negative")
        if not np.all(np.isfinite(chars)):
            raise ValueError("characteristics must be finite")
        if owner.min() != 0:
            raise ValueError("firm indices must start at 0")
        n_firms = int(owner.max()) + 1
        counts = np.bincount(owner, minlength=n_firms)
        if np.any(counts == 0):
            missing = [int(f) for f in np.flatnonzero(counts == 0)]
            raise ValueError(f"firms {missing} own no products")
        if self.labels is not None and len(self.labels) != owner.size:
            raise ValueError("labels must have one entry per product")

        for arr in (owner, costs, chars):
            arr.setflags(write=False)
        blocks = tuple(np.flatnonzero(owner == f) for f in range(n_firms))
        for b in blocks:
            b.setflags(write=False)
        same = owner[:, None] == owner[None, :]
        same.setflags(write=False)
        own = np.zeros((owner.size, n_firms))
        own[np.arange(owner.size), owner] = 1.0
        own.setflags(write=False)

        object.__setattr__(self, "owner", owner)
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "characteristics", chars)
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "same_firm", same)
        object.__setattr__(self, "ownership", own)

    @property
    def J(self) -> int:
        return int(self.owner.size)

    @property
    def F(self) -> int:
        return len(self.blocks)

    @property
    def K(self) -> int:
        return int(self.characteristics.shape[1])

    def with_costs(self, costs: Sequence[float]) -> "Market":
        return Market(self.owner, np.asarray(costs, float), self.characteristics, self.labels)

    def product_names(self) -> list[str]:
        if self.labels is not None:
            return list(self.labels)
        return [f"product-{j + 1}" for j in range(self.J)]

    # -- scenario-file helpers (1-based firm numbers) -------------------------
    @classmethod
    def from_records(cls, products: Sequence[dict]) -> "Market":
        """Build from ``[{name, firm, cost, characteristics}]`` with 1-based firms."""
        if not products:
            raise ValueError("scenario lists no products")
        firms = [int(rec["firm"]) for rec in products]
        if min(firms) < 1:
            raise ValueError("firm numbers in scenario files are 1-based")
        return cls(
            owner=np.array(firms) - 1,
            costs=np.array([float(rec["cost"]) for rec in products]),
            characteristics=np.array([list(map(float, rec.get("characteristics", []))) for rec in products]),
            labels=tuple(str(rec.get("name", f"product-{j + 1}")) for j, rec in enumerate(products)),
        )

    def to_records(self) -> list[dict]:
        names = self.product_names()
        return [
            {
                "name": names[j],
                "firm": int(self.owner[j]) + 1,
                "cost": float(self.costs[j]),
                "characteristics": [float(x) for x in self.characteristics[j]],
            }
            for j in range(self.J)
        ]


def validate_prices(market: Market, p) -> np.ndarray:
    """Coerce ``p`` into a finite, non-negative length-J float vector."""
    p = np.asarray(p, dtype=float).ravel()
    if p.shape != (market.J,):
        raise ValueError(f"expected {market.J} prices, got {p.size}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("prices must be finite and non-negative")
    return p


def firm_blocks(market: Market) -> list[tuple[int, list[int]]]:
    """The ownership partition as ``(firm, sorted products)`` pairs, ascending by firm."""
    return [(f, [int(j) for j in block]) for f, block in enumerate(market.blocks)]


def intra_firm_mask(market: Market) -> np.ndarray:
    """Boolean J x J matrix, true where both products share an owner."""
    return market.same_firm.copy()
