"""Problem instances, Euclidean costs and the dataset CSV format.

Node ids follow one global convention used everywhere in the package:
item ``i`` is node ``i`` (``0 <= i < n``) and placeholder ``p`` is node
``n + p``.  With ``fixed_pair`` set, placeholder ``2n-1`` is the start,
item ``n-1`` is the goal, and the edge between them is always in the tour.

Dataset files use the header ``Experiment,ID,pX,pY,tX,tY``: one row per
(item, placeholder) index pair, coordinates written with six decimals.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .errors import (
    DatasetParseError,
    InvalidCompatibilityError,
    InvalidParameterError,
    MalformedDatasetError,
)

HEADER = ("Experiment", "ID", "pX", "pY", "tX", "tY")
FIRST_EXPERIMENT_ID = 1000


def _frozen(points) -> np.ndarray:
    arr = np.array(points, dtype=np.float64).reshape(-1, 2)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Instance:
    experiment_id: int
    items: np.ndarray
    placeholders: np.ndarray
    types: Optional[Mapping[int, str]] = None
    fixed_pair: bool = True
    n: int = field(init=False)

    def __post_init__(self):
        items = _frozen(self.items)
        places = _frozen(self.placeholders)
        if len(items) != len(places):
            raise InvalidParameterError(
                f"{len(items)} items but {len(places)} placeholders"
            )
        if len(items) < 2:
            raise InvalidParameterError(f"need n >= 2, got n={len(items)}")
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "placeholders", places)
        object.__setattr__(self, "n", len(items))
        if self.types is not None:
            types = {int(k): str(v) for k, v in self.types.items()}
            _check_types(types, self.n)
            object.__setattr__(self, "types", types)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.experiment_id == other.experiment_id
            and self.fixed_pair == other.fixed_pair
            and self.types == other.types
            and np.array_equal(self.items, other.items)
            and np.array_equal(self.placeholders, other.placeholders)
        )

    __hash__ = None

    @property
    def start(self) -> int:
        """Start node (last placeholder)."""
        return 2 * self.n - 1

    @property
    def goal(self) -> int:
        """Goal node (last item)."""
        return self.n - 1

    def is_item(self, node: int) -> bool:
        return 0 <= node < self.n

    def is_placeholder(self, node: int) -> bool:
        return self.n <= node < 2 * self.n

    def coords(self, node: int) -> np.ndarray:
        if node < self.n:
            return self.items[node]
        return self.placeholders[node - self.n]

    def all_coords(self) -> np.ndarray:
        """(2n, 2) array indexed by global node id."""
        return np.vstack([self.items, self.placeholders])

    def compat(self) -> Optional[np.ndarray]:
        """Delivery compatibility mask ``mask[i, p]`` (local placeholder index), or None."""
        if self.types is None:
            return None
        n = self.n
        it = np.array([self.types[i] for i in range(n)], dtype=object)
        pt = np.array([self.types[n + p] for p in range(n)], dtype=object)
        return it[:, None] == pt[None, :]

    def with_types(self, types: Optional[Mapping[int, str]]) -> "Instance":
        return Instance(self.experiment_id, self.items, self.placeholders, types, self.fixed_pair)

    def with_fixed_pair(self, fixed_pair: bool) -> "Instance":
        return Instance(self.experiment_id, self.items, self.placeholders, self.types, fixed_pair)


def _check_types(types: dict, n: int) -> None:
    missing = [v for v in range(2 * n) if v not in types]
    if missing:
        raise InvalidCompatibilityError(f"no type given for nodes {missing}")
    extra = [v for v in types if not 0 <= v < 2 * n]
    if extra:
        raise InvalidCompatibilityError(f"types given for unknown nodes {extra}")
    item_counts = Counter(types[i] for i in range(n))
    place_counts = Counter(types[n + p] for p in range(n))
    if item_counts != place_counts:
        raise InvalidCompatibilityError(
            f"item types {dict(item_counts)} do not match placeholder types {dict(place_counts)}"
        )


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """``d[i, p]``: distance between item ``i`` and placeholder ``n + p``."""

    d: np.ndarray

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def edge(self, u: int, v: int) -> float:
        """Cost of the undirected edge between global nodes ``u`` and ``v``."""
        n = self.n
        i, p = (u, v - n) if u < n else (v, u - n)
        if not (0 <= i < n and 0 <= p < n):
            raise InvalidParameterError(f"({u}, {v}) is not an item-placeholder edge")
        return float(self.d[i, p])

    def tour_cost(self, order) -> float:
        """Length of the closed tour visiting ``order`` (closing edge included)."""
        order = list(order)
        return float(sum(self.edge(order[k], order[(k + 1) % len(order)]) for k in range(len(order))))


def cost_matrix(instance: Instance) -> CostMatrix:
    dx = instance.items[:, None, 0] - instance.placeholders[None, :, 0]
    dy = instance.items[:, None, 1] - instance.placeholders[None, :, 1]
    d = np.sqrt(dx * dx + dy * dy)
    d.setflags(write=False)
    return CostMatrix(d)


def generate(n: int, count: int, seed: int) -> dict[int, Instance]:
    """Uniform random instances on a 1e-6 grid in [0, 1), ids starting at 1000.

    Coordinates are multiples of 1e-6 so a CSV round trip is lossless.
    """
    if n < 2:
        raise InvalidParameterError(f"need n >= 2, got n={n}")
    if count < 1:
        raise InvalidParameterError(f"need count >= 1, got count={count}")
    rng = np.random.default_rng(seed)
    out = {}
    for k in range(count):
        grid = rng.integers(0, 10**6, size=(n, 4)) / 1e6
        eid = FIRST_EXPERIMENT_ID + k
        out[eid] = Instance(eid, grid[:, 0:2], grid[:, 2:4])
    return out


def load_csv(path) -> dict[int, Instance]:
    with open(path, newline="") as fh:
        return parse_csv(fh.read())


def parse_csv(text: str) -> dict[int, Instance]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        return {}
    if tuple(h.strip() for h in header) != HEADER:
        raise DatasetParseError(1, f"expected header {','.join(HEADER)}, got {','.join(header)}")

    rows: dict[int, dict[int, tuple]] = {}
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(HEADER):
            raise DatasetParseError(row_no, f"expected {len(HEADER)} fields, got {len(row)}")
        try:
            eid, nid = int(row[0]), int(row[1])
            px, py, tx, ty = (float(c) for c in row[2:])
        except ValueError as exc:
            raise DatasetParseError(row_no, str(exc)) from None
        group = rows.setdefault(eid, {})
        if nid in group:
            raise MalformedDatasetError(eid, nid, "duplicate ID")
        group[nid] = (px, py, tx, ty)

    out = {}
    for eid, group in rows.items():
        n = len(group)
        for nid in range(n):
            if nid not in group:
                raise MalformedDatasetError(eid, nid, f"missing ID (IDs must be 0..{n - 1})")
        coords = np.array([group[i] for i in range(n)])
        if n < 2:
            raise MalformedDatasetError(eid, 0, "experiment needs at least 2 rows")
        out[eid] = Instance(eid, coords[:, 0:2], coords[:, 2:4])
    return out


def format_csv(instances: Mapping[int, Instance]) -> str:
    lines = [",".join(HEADER)]
    for eid in sorted(instances):
        inst = instances[eid]
        for i in range(inst.n):
            px, py = inst.items[i]
            tx, ty = inst.placeholders[i]
            lines.append(f"{eid},{i},{px:.6f},{py:.6f},{tx:.6f},{ty:.6f}")
    return "\n".join(lines) + "\n"


def save_csv(instances: Mapping[int, Instance], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(format_csv(instances))
    return path


def dataset_filename(n) -> str:
    return f"experimental_n_{n}_data.csv"


def load_types(path) -> dict[int, str]:
    """Read a ``node,type`` side file (header required)."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["node", "type"]:
            raise DatasetParseError(1, "expected header node,type")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out[int(row[0])] = row[1].strip()
            except (ValueError, IndexError) as exc:
                raise DatasetParseError(row_no, str(exc)) from None
    return out
