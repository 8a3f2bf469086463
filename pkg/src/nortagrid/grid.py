"""Transmission-grid data model, flood topology, and synthetic instances.

A grid is a set of substations, each owning one or more buses, connected
by DC branches. Flood scenarios assign an integer water height to every
flood-exposed substation; a hardening plan assigns an integer protection
height. A bus is operational in a scenario iff its substation is not
flooded above its protection.

File formats owned by this module: grid JSON (keys `substations`,
`buses`, `branches`, `budget`, `reference_bus`) and the scenario CSV
(header row of flooded-substation ids, one row of integer heights per
scenario, optional trailing `#prob` column; absent probabilities default
to 1/K).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .norta import ScenarioSet

__all__ = [
    "Branch",
    "Bus",
    "GridInstance",
    "HardeningPlan",
    "InstanceSpec",
    "Substation",
    "connected_components",
    "generate_instance",
    "load_grid",
    "load_scenarios",
    "operational_topology",
    "save_grid",
    "save_scenarios",
]


@dataclass(frozen=True)
class Substation:
    id: int
    flooded_flag: bool
    fixed_cost: float
    var_cost: float
    max_height: int


@dataclass(frozen=True)
class Bus:
    id: int
    substation_id: int
    demand: float
    gen_min: float
    gen_max: float


@dataclass(frozen=True)
class Branch:
    id: int
    head: int
    tail: int
    susceptance: float
    capacity: float


class GridInstance:
    """Validated grid with derived lookups for the recourse model."""

    def __init__(self, substations, buses, branches, reference_bus, budget):
        self.substations = list(substations)
        self.buses = list(buses)
        self.branches = list(branches)
        self.reference_bus = reference_bus
        self.budget = float(budget)
        self._validate()
        self._derive()

    def _validate(self):
        sub_ids = [s.id for s in self.substations]
        if len(set(sub_ids)) != len(sub_ids):
            raise ValidationError("duplicate substation ids")
        bus_ids = [b.id for b in self.buses]
        if len(set(bus_ids)) != len(bus_ids):
            raise ValidationError("duplicate bus ids")
        br_ids = [r.id for r in self.branches]
        if len(set(br_ids)) != len(br_ids):
            raise ValidationError("duplicate branch ids")
        if not self.buses:
            raise ValidationError("grid needs at least one bus")
        sub_set = set(sub_ids)
        bus_set = set(bus_ids)
        for s in self.substations:
            if s.max_height < 0 or s.max_height != int(s.max_height):
                raise ValidationError(f"substation {s.id}: max_height must be a non-negative integer")
            if s.fixed_cost < 0 or s.var_cost < 0:
                raise ValidationError(f"substation {s.id}: hardening costs must be non-negative")
        for b in self.buses:
            if b.substation_id not in sub_set:
                raise ValidationError(f"bus {b.id}: unknown substation {b.substation_id}")
            if b.demand < 0:
                raise ValidationError(f"bus {b.id}: demand must be non-negative")
            if not (0 <= b.gen_min <= b.gen_max):
                raise ValidationError(f"bus {b.id}: need 0 <= gen_min <= gen_max")
            if b.gen_min != 0:
                # The recourse model couples generator commitment to bus
                # survival through u = z, which is only valid when the
                # committed minimum output is zero.
                raise ValidationError(f"bus {b.id}: nonzero gen_min is not supported")
        for r in self.branches:
            if r.head not in bus_set or r.tail not in bus_set:
                raise ValidationError(f"branch {r.id}: endpoint is not a known bus")
            if r.head == r.tail:
                raise ValidationError(f"branch {r.id}: self-loop")
            if not r.capacity > 0:
                raise ValidationError(f"branch {r.id}: capacity must be positive")
            if not r.susceptance > 0:
                raise ValidationError(f"branch {r.id}: susceptance must be positive")
        if self.reference_bus not in bus_set:
            raise ValidationError(f"reference bus {self.reference_bus} is not a known bus")
        if self.budget < 0:
            raise ValidationError("budget must be non-negative")

    def _derive(self):
        self.n_buses = len(self.buses)
        self.bus_index = {b.id: k for k, b in enumerate(self.buses)}
        self.flooded_ids = tuple(s.id for s in self.substations if s.flooded_flag)
        flooded_pos = {sid: k for k, sid in enumerate(self.flooded_ids)}
        self._sub_by_id = {s.id: s for s in self.substations}
        # Per-bus position in the flooded ordering, -1 for safe substations.
        self.bus_flood_pos = np.array(
            [flooded_pos.get(b.substation_id, -1) for b in self.buses], dtype=int)
        self.demand = np.array([b.demand for b in self.buses])
        self.gen_max = np.array([b.gen_max for b in self.buses])
        self.bus_ids = np.array([b.id for b in self.buses], dtype=int)
        self.head_idx = np.array([self.bus_index[r.head] for r in self.branches], dtype=int)
        self.tail_idx = np.array([self.bus_index[r.tail] for r in self.branches], dtype=int)
        self.total_demand = float(self.demand.sum())

    def substation(self, sub_id) -> Substation:
        return self._sub_by_id[sub_id]

    def flooded_substations(self):
        return [self._sub_by_id[sid] for sid in self.flooded_ids]

    def to_dict(self):
        return {
            "substations": [
                {"id": s.id, "flooded_flag": s.flooded_flag, "fixed_cost": s.fixed_cost,
                 "var_cost": s.var_cost, "max_height": s.max_height}
                for s in self.substations
            ],
            "buses": [
                {"id": b.id, "substation_id": b.substation_id, "demand": b.demand,
                 "gen_min": b.gen_min, "gen_max": b.gen_max}
                for b in self.buses
            ],
            "branches": [
                {"id": r.id, "head": r.head, "tail": r.tail,
                 "susceptance": r.susceptance, "capacity": r.capacity}
                for r in self.branches
            ],
            "reference_bus": self.reference_bus,
            "budget": self.budget,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            subs = [Substation(int(d["id"]), bool(d["flooded_flag"]), float(d["fixed_cost"]),
                               float(d["var_cost"]), int(d["max_height"]))
                    for d in data["substations"]]
            buses = [Bus(int(d["id"]), int(d["substation_id"]), float(d["demand"]),
                         float(d["gen_min"]), float(d["gen_max"]))
                     for d in data["buses"]]
            branches = [Branch(int(d["id"]), int(d["head"]), int(d["tail"]),
                               float(d["susceptance"]), float(d["capacity"]))
                        for d in data["branches"]]
            ref = int(data["reference_bus"])
            budget = float(data["budget"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed grid data: {exc}") from exc
        return cls(subs, buses, branches, ref, budget)


@dataclass(frozen=True)
class HardeningPlan:
    """Integer protection heights aligned with grid.flooded_ids order."""

    heights: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.heights)
        if h.ndim != 1:
            raise ValidationError("plan heights must be a 1-D vector")
        if h.size and not np.issubdtype(h.dtype, np.integer):
            if not np.allclose(h, np.round(h), rtol=0.0, atol=1e-9):
                raise ValidationError("plan heights must be integers")
        h = np.round(h).astype(int) if h.size else h.astype(int)
        if np.any(h < 0):
            raise ValidationError("plan heights must be non-negative")
        object.__setattr__(self, "heights", h)

    @classmethod
    def zero(cls, grid: GridInstance):
        return cls(np.zeros(len(grid.flooded_ids), dtype=int))

    @property
    def protect(self):
        """Binary protect decision y_i = 1 iff x_i >= 1."""
        return self.heights >= 1

    def cost(self, grid: GridInstance):
        total = 0.0
        for k, sid in enumerate(grid.flooded_ids):
            s = grid.substation(sid)
            h = int(self.heights[k])
            if h >= 1:
                total += s.fixed_cost + s.var_cost * h
        return total

    def check_feasible(self, grid: GridInstance, budget=None):
        if self.heights.size != len(grid.flooded_ids):
            raise ValidationError("plan length does not match the flooded set")
        for k, sid in enumerate(grid.flooded_ids):
            if self.heights[k] > grid.substation(sid).max_height:
                raise ValidationError(
                    f"substation {sid}: height {self.heights[k]} exceeds max "
                    f"{grid.substation(sid).max_height}")
        cap = grid.budget if budget is None else budget
        c = self.cost(grid)
        if c > cap + 1e-9:
            raise ValidationError(f"plan cost {c} exceeds budget {cap}")
        return self


def operational_topology(grid: GridInstance, plan: HardeningPlan, scenario):
    """Per-bus survival indicators z for one scenario.

    A bus at a flooded substation survives iff protection meets the
    water height (x >= delta, so equality keeps the bus up); buses at
    safe substations are always up.
    """
    delta = np.asarray(scenario, dtype=float).ravel()
    nf = len(grid.flooded_ids)
    if delta.size != nf:
        raise ValidationError(f"scenario has {delta.size} heights, grid has {nf} flooded substations")
    if plan.heights.size != nf:
        raise ValidationError("plan length does not match the flooded set")
    alive_sub = plan.heights >= delta
    pos = grid.bus_flood_pos
    z = np.ones(grid.n_buses, dtype=bool)
    exposed = pos >= 0
    z[exposed] = alive_sub[pos[exposed]]
    return z


def _components_idx(grid: GridInstance, z):
    """Connected components (bus indices) of the operational subgraph."""
    alive = np.asarray(z, dtype=bool)
    adj = [[] for _ in range(grid.n_buses)]
    for h, t in zip(grid.head_idx, grid.tail_idx):
        if alive[h] and alive[t]:
            adj[h].append(t)
            adj[t].append(h)
    seen = np.zeros(grid.n_buses, dtype=bool)
    comps = []
    for start in range(grid.n_buses):
        if not alive[start] or seen[start]:
            continue
        stack = [start]
        seen[start] = True
        comp = []
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        comps.append(sorted(comp))
    return comps


def connected_components(grid: GridInstance, z):
    """Operational components as sorted lists of bus ids."""
    return [sorted(int(grid.bus_ids[i]) for i in comp) for comp in _components_idx(grid, z)]


# ----------------------------------------------------------------------
# Synthetic instances


@dataclass
class InstanceSpec:
    """Parameters for the synthetic instance generator."""

    n_substations: int
    n_flooded: int
    buses_per_substation: int = 2
    topology: str = "ring"
    n_scenarios: int = 16
    max_height: int = 5
    budget: float = 50.0
    seed: int = 0
    demand_low: float = 5.0
    demand_high: float = 15.0
    gen_bus_fraction: float = 0.5
    capacity_slack: float = 1.2
    corr_length: float | None = None

    def validate(self):
        if self.n_substations < 1:
            raise ValidationError("n_substations must be at least 1")
        if not 0 <= self.n_flooded <= self.n_substations:
            raise ValidationError("n_flooded must lie in [0, n_substations]")
        if self.buses_per_substation < 1:
            raise ValidationError("buses_per_substation must be at least 1")
        if self.topology not in ("ring", "tree", "grid"):
            raise ValidationError(f"unknown topology '{self.topology}'")
        if self.n_scenarios < 1:
            raise ValidationError("n_scenarios must be at least 1")
        if self.max_height < 1:
            raise ValidationError("max_height must be at least 1")
        if self.budget < 0:
            raise ValidationError("budget must be non-negative")
        if not 0.0 < self.demand_low <= self.demand_high:
            raise ValidationError("need 0 < demand_low <= demand_high")
        if not 0.0 < self.capacity_slack:
            raise ValidationError("capacity_slack must be positive")
        return self

    def to_dict(self):
        return {
            "n_substations": self.n_substations,
            "n_flooded": self.n_flooded,
            "buses_per_substation": self.buses_per_substation,
            "topology": self.topology,
            "n_scenarios": self.n_scenarios,
            "max_height": self.max_height,
            "budget": self.budget,
            "seed": self.seed,
            "demand_low": self.demand_low,
            "demand_high": self.demand_high,
            "gen_bus_fraction": self.gen_bus_fraction,
            "capacity_slack": self.capacity_slack,
            "corr_length": self.corr_length,
        }

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ValidationError(f"unknown instance-spec fields: {sorted(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ValidationError(f"malformed instance spec: {exc}") from exc


def _inter_substation_edges(spec: InstanceSpec, rng):
    n = spec.n_substations
    if spec.topology == "ring":
        if n == 1:
            return []
        if n == 2:
            return [(0, 1)]
        return [(i, (i + 1) % n) for i in range(n)]
    if spec.topology == "tree":
        return [(int(rng.integers(0, i)), i) for i in range(1, n)]
    # Rectangular mesh, row-major.
    w = max(1, math.ceil(math.sqrt(n)))
    edges = []
    for i in range(n):
        r, c = divmod(i, w)
        if c + 1 < w and i + 1 < n:
            edges.append((i, i + 1))
        if (r + 1) * w + c < n:
            edges.append((i, (r + 1) * w + c))
    return edges


def generate_instance(spec: InstanceSpec):
    """Deterministic synthetic instance plus correlated flood scenarios.

    The first n_flooded substations form the exposed (coastal) set, and
    scenario heights come from a common-severity latent Gaussian field
    with exponentially decaying spatial correlation, floored through an
    exponential to integer heights in [0, max_height], so the scenario
    columns are genuinely cross-correlated.

    Branch capacities are capacity_slack * total demand and susceptances
    keep angle drops far below the bounds; for such capacity-adequate
    instances, shedding reduces to component-wise generation adequacy,
    which makes recourse shed provably non-increasing in protection
    (the property the first-stage bound relies on). Generating tighter
    instances is possible by shrinking capacity_slack below ~1.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, bp = spec.n_substations, spec.buses_per_substation

    substations = [
        Substation(id=i, flooded_flag=i < spec.n_flooded,
                   fixed_cost=float(np.round(rng.uniform(1.0, 3.0), 4)),
                   var_cost=float(np.round(rng.uniform(0.5, 1.5), 4)),
                   max_height=spec.max_height)
        for i in range(n)
    ]

    n_buses = n * bp
    demands = np.round(rng.uniform(spec.demand_low, spec.demand_high, size=n_buses), 4)
    gen_flags = rng.random(n_buses) < spec.gen_bus_fraction
    if not gen_flags.any():
        gen_flags[0] = True
    total_demand = float(demands.sum())
    per_gen = 1.5 * total_demand / int(gen_flags.sum())
    buses = [
        Bus(id=j, substation_id=j // bp, demand=float(demands[j]),
            gen_min=0.0, gen_max=float(np.round(per_gen, 4)) if gen_flags[j] else 0.0)
        for j in range(n_buses)
    ]

    capacity = float(np.round(spec.capacity_slack * total_demand, 4))
    susceptance = float(np.round(capacity * n_buses, 4))
    branches = []
    bid = 0
    for i in range(n):  # chain the buses inside each substation
        for k in range(bp - 1):
            branches.append(Branch(bid, i * bp + k, i * bp + k + 1, susceptance, capacity))
            bid += 1
    for a, b in _inter_substation_edges(spec, rng):
        branches.append(Branch(bid, a * bp, b * bp, susceptance, capacity))
        bid += 1

    grid = GridInstance(substations, buses, branches, reference_bus=0, budget=spec.budget)

    nf, k_scen = spec.n_flooded, spec.n_scenarios
    if nf == 0:
        heights = np.zeros((k_scen, 0))
    else:
        pos = np.arange(nf, dtype=float)
        ell = spec.corr_length if spec.corr_length is not None else max(1.0, nf / 4.0)
        cov = np.exp(-np.abs(pos[:, None] - pos[None, :]) / ell)
        chol = np.linalg.cholesky(cov + 1e-10 * np.eye(nf))
        common = rng.standard_normal(k_scen)
        eps = rng.standard_normal((k_scen, nf))
        latent = (0.6 * common[:, None] + eps @ chol.T) / math.sqrt(1.36)
        mu = math.log(spec.max_height) - 1.0
        raw = np.exp(mu + 0.7 * latent)
        heights = np.clip(np.floor(raw), 0, spec.max_height)
    scenarios = ScenarioSet(heights, np.full(k_scen, 1.0 / k_scen),
                            columns=grid.flooded_ids).validate_heights()
    return grid, scenarios


# ----------------------------------------------------------------------
# File formats


def save_grid(grid: GridInstance, path, extra=None):
    data = grid.to_dict()
    if extra:
        data.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


def load_grid(path) -> GridInstance:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read grid file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    return GridInstance.from_dict(data)


_PROB_HEADER = "#prob"


def save_scenarios(s: ScenarioSet, path):
    """Write a scenario CSV; heights as integers, `#prob` only if non-uniform."""
    s.validate_heights()
    if s.columns is None:
        raise ValidationError("scenario set has no column ids to write")
    k = s.n_scenarios
    uniform = np.allclose(s.probs, 1.0 / k, rtol=0.0, atol=1e-15)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = [str(c) for c in s.columns]
        if not uniform:
            header.append(_PROB_HEADER)
        writer.writerow(header)
        for i in range(k):
            row = [str(int(round(v))) for v in s.scenarios[i]]
            if not uniform:
                row.append(repr(float(s.probs[i])))
            writer.writerow(row)


def load_scenarios(path) -> ScenarioSet:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ValidationError(f"cannot read scenario file {path}: {exc}") from exc
    if not rows:
        raise ValidationError(f"{path}: empty scenario file")
    header = [c.strip() for c in rows[0]]
    has_prob = bool(header) and header[-1] == _PROB_HEADER
    id_cells = header[:-1] if has_prob else header
    try:
        columns = tuple(int(c) for c in id_cells)
    except ValueError as exc:
        raise ValidationError(f"{path}: header must hold integer substation ids: {exc}") from exc
    n = len(columns)
    body = [r for r in rows[1:] if r]
    if not body:
        raise ValidationError(f"{path}: no scenario rows")
    heights = np.empty((len(body), n))
    probs = np.empty(len(body)) if has_prob else None
    for i, row in enumerate(body):
        expected = n + (1 if has_prob else 0)
        if len(row) != expected:
            raise ValidationError(
                f"{path} line {i + 2}: expected {expected} cells, found {len(row)}")
        for j in range(n):
            try:
                v = float(row[j])
            except ValueError as exc:
                raise ValidationError(
                    f"{path} line {i + 2}, column {j + 1}: cannot parse {row[j]!r}") from exc
            if v < 0 or v != int(v):
                raise ValidationError(
                    f"{path} line {i + 2}, column {j + 1}: heights must be non-negative integers")
            heights[i, j] = v
        if has_prob:
            try:
                probs[i] = float(row[n])
            except ValueError as exc:
                raise ValidationError(
                    f"{path} line {i + 2}: cannot parse probability {row[n]!r}") from exc
    k = heights.shape[0]
    if probs is None:
        probs = np.full(k, 1.0 / k)
    elif abs(float(probs.sum()) - 1.0) > 1e-9:
        raise ValidationError(f"{path}: probabilities sum to {probs.sum()}, expected 1")
    else:
        probs = probs / probs.sum()
    return ScenarioSet(heights, probs, columns=columns).validate_heights()
