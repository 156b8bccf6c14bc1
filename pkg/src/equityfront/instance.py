"""Problem instances, the seeded random instance family, and Euclidean distances."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InstanceFormatError, ParameterError

FORMAT_VERSION = 1
COORD_LOW, COORD_HIGH = 0.0, 100.0

Point = tuple[float, float]


@dataclass(frozen=True)
class Instance:
    """A CVRP instance with a single depot and ``vehicles`` identical vehicles.

    Customers are indexed ``0 .. n_customers - 1``; in distance matrices the
    depot is row/column 0 and customer ``i`` is row ``i + 1``.
    """

    name: str
    depot: Point
    customers: tuple[Point, ...]
    vehicles: int
    capacity: int
    demands: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "depot", (float(self.depot[0]), float(self.depot[1])))
        object.__setattr__(
            self, "customers", tuple((float(x), float(y)) for x, y in self.customers)
        )
        object.__setattr__(self, "demands", tuple(int(d) for d in self.demands))
        if self.vehicles < 2:
            raise ParameterError("vehicles", f"need at least 2 vehicles, got {self.vehicles}")
        if self.capacity < 1:
            raise ParameterError("capacity", f"capacity must be positive, got {self.capacity}")
        if len(self.demands) != len(self.customers):
            raise ParameterError("demands", "one demand per customer is required")
        if any(d < 1 for d in self.demands):
            raise ParameterError("demands", "demands must be positive integers")
        if any(d > self.capacity for d in self.demands):
            raise ParameterError("demands", "a single demand exceeds the vehicle capacity")
        if self.n_customers < self.vehicles:
            raise ParameterError(
                "customers",
                f"{self.n_customers} customers cannot occupy {self.vehicles} vehicles",
            )
        if self.vehicles * self.capacity < sum(self.demands):
            raise ParameterError(
                "capacity",
                f"total demand {sum(self.demands)} exceeds fleet capacity "
                f"{self.vehicles} x {self.capacity}",
            )

    @property
    def n_customers(self) -> int:
        return len(self.customers)

    @property
    def total_demand(self) -> int:
        return sum(self.demands)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "name": self.name,
            "depot": list(self.depot),
            "customers": [list(c) for c in self.customers],
            "vehicles": self.vehicles,
            "capacity": self.capacity,
            "demands": list(self.demands),
        }

    def to_json(self) -> str:
        """Serialize with 17 significant digits per coordinate (bit-exact round trip)."""

        def point(p):
            return f"[{p[0]:.17g}, {p[1]:.17g}]"

        customers = ",\n    ".join(point(c) for c in self.customers)
        return (
            "{\n"
            f'  "format_version": {FORMAT_VERSION},\n'
            f'  "name": {json.dumps(self.name)},\n'
            f'  "depot": {point(self.depot)},\n'
            f'  "customers": [\n    {customers}\n  ],\n'
            f'  "vehicles": {self.vehicles},\n'
            f'  "capacity": {self.capacity},\n'
            f'  "demands": {json.dumps(list(self.demands))}\n'
            "}\n"
        )

    def content_hash(self) -> str:
        """SHA-256 over the canonical serialization; the name is excluded."""
        payload = self.to_dict()
        del payload["name"]
        blob = json.dumps(
            {k: payload[k] for k in sorted(payload)}, separators=(",", ":")
        ).encode()
        return hashlib.sha256(blob).hexdigest()


def family_name(seed: int, block: int, n: int, v: int, q: int) -> str:
    return f"seed{seed}_b{block}_n{n}_v{v}_q{q}"


def _stream_points(seed: int, count: int) -> np.ndarray:
    # PCG64 fills row-major, so any prefix of the stream is independent of count.
    rng = np.random.default_rng(seed)
    return rng.uniform(COORD_LOW, COORD_HIGH, size=(count, 2))


def generate_family(seed: int, block: int, n: int, v: int, slack: int) -> Instance:
    """Build one member of the seeded random instance family.

    The point stream of ``seed`` is shared by every block: stream point 0 is
    the depot and customer ``k`` of the stream is point ``k + 1``.  Block
    ``b`` takes customers ``b*n .. b*n + n - 1``, so blocks are disjoint.
    Capacity is ``ceil(n / v) + slack`` and all demands are 1.
    """
    if block < 0:
        raise ParameterError("block", "block must be nonnegative")
    if slack not in (0, 1):
        raise ParameterError("slack", f"slack must be 0 or 1, got {slack}")
    if v < 2:
        raise ParameterError("vehicles", f"need at least 2 vehicles, got {v}")
    if n < v:
        raise ParameterError("n", f"n={n} customers cannot occupy v={v} vehicles")
    q = math.ceil(n / v) + slack
    if v * q < n:
        raise ParameterError("capacity", f"v*q = {v * q} < n = {n}")
    pts = _stream_points(seed, (block + 1) * n + 1)
    customers = [tuple(p) for p in pts[1 + block * n : 1 + block * n + n]]
    return Instance(
        name=family_name(seed, block, n, v, q),
        depot=tuple(pts[0]),
        customers=tuple(customers),
        vehicles=v,
        capacity=q,
        demands=(1,) * n,
    )


def distance_matrix(inst: Instance) -> np.ndarray:
    """Full-precision Euclidean distances; index 0 is the depot."""
    pts = np.array([inst.depot, *inst.customers], dtype=float)
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    # hypot is symmetric in its arguments up to sign, but force exact symmetry anyway
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    d.flags.writeable = False
    return d


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(inst.to_json())


def _require(data: dict, field: str):
    if field not in data:
        raise InstanceFormatError(field, "missing field")
    return data[field]


def _point(value, field: str) -> Point:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in value)
    ):
        raise InstanceFormatError(field, f"expected [x, y], got {value!r}")
    return float(value[0]), float(value[1])


def _int(value, field: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise InstanceFormatError(field, f"expected an integer, got {value!r}")
    return value


def instance_from_dict(data: dict) -> Instance:
    if not isinstance(data, dict):
        raise InstanceFormatError("<root>", "expected a JSON object")
    version = _require(data, "format_version")
    if version != FORMAT_VERSION:
        raise InstanceFormatError(
            "format_version", f"unsupported version {version!r} (expected {FORMAT_VERSION})"
        )
    name = _require(data, "name")
    if not isinstance(name, str):
        raise InstanceFormatError("name", "expected a string")
    depot = _point(_require(data, "depot"), "depot")
    raw_customers = _require(data, "customers")
    if not isinstance(raw_customers, list):
        raise InstanceFormatError("customers", "expected a list of points")
    customers = tuple(_point(c, "customers") for c in raw_customers)
    vehicles = _int(_require(data, "vehicles"), "vehicles")
    capacity = _int(_require(data, "capacity"), "capacity")
    raw_demands = _require(data, "demands")
    if not isinstance(raw_demands, list):
        raise InstanceFormatError("demands", "expected a list of integers")
    demands = tuple(_int(d, "demands") for d in raw_demands)
    return Instance(name, depot, customers, vehicles, capacity, demands)


def load_instance(path: str | Path) -> Instance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceFormatError("<json>", str(exc)) from exc
    return instance_from_dict(data)


def make_instance(
    depot: Sequence[float],
    customers: Sequence[Sequence[float]],
    vehicles: int,
    capacity: int,
    demands: Sequence[int] | None = None,
    name: str = "adhoc",
) -> Instance:
    """Convenience constructor; demands default to 1 per customer."""
    if demands is None:
        demands = [1] * len(customers)
    return Instance(name, tuple(depot), tuple(tuple(c) for c in customers), vehicles, capacity, tuple(demands))
