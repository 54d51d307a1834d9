"""Single-player MDP for 2D/3D single-bin packing.

States are immutable; every operation here is a pure function of its
inputs, so states can be shared freely between concurrent workers.

Geometry conventions (shared with the kernel backends):

* integer coordinates and dimensions throughout,
* 2D items expose dims ``(l, w)`` and positions ``(x, y)`` with y the
  vertical (gravity) axis; internally everything is padded to 3D with
  height 1 and ``z = 0``,
* the bottom-left-front corner of the first placement is the origin,
* boxes may not overlap (open-interval test: touching faces are fine),
* a placement must rest on the floor or have its footprint center over
  the top face of exactly one placed box (closed region: the boundary
  counts as supported).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

# orientation code -> axis permutation of the item dims
ORIENT_PERMS_3D = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))
ORIENT_PERMS_2D = ((0, 1), (1, 0))


class ConstraintViolation(ValueError):
    """An action or placement breaks a named packing constraint."""


@dataclass(frozen=True)
class Item:
    id: int
    dims: tuple  # (l, w) in 2D, (l, w, h) in 3D

    def __post_init__(self):
        if len(self.dims) not in (2, 3):
            raise ValueError(f"item dims must have 2 or 3 entries, got {self.dims}")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"item dims must be >= 1, got {self.dims}")

    @property
    def dim(self) -> int:
        return len(self.dims)

    @property
    def dims3(self) -> tuple:
        return self.dims if len(self.dims) == 3 else (*self.dims, 1)

    @property
    def volume(self) -> int:
        return math.prod(self.dims)


@dataclass(frozen=True)
class Placement:
    item_id: int
    pos: tuple  # (x, y) in 2D, (x, y, z) in 3D
    orient: int

    @property
    def pos3(self) -> tuple:
        return self.pos if len(self.pos) == 3 else (*self.pos, 0)


@dataclass(frozen=True)
class Action:
    item_id: int
    pos: tuple
    orient: int

    @property
    def pos3(self) -> tuple:
        return self.pos if len(self.pos) == 3 else (*self.pos, 0)


def orientation_count(dim: int) -> int:
    return 6 if dim == 3 else 2


def oriented_dims(item: Item, orient: int) -> tuple:
    """Item dims permuted by the canonical orientation mapping."""
    perms = ORIENT_PERMS_3D if item.dim == 3 else ORIENT_PERMS_2D
    if not 0 <= orient < len(perms):
        raise ConstraintViolation(
            f"orientation: code {orient} invalid for {item.dim}D items"
        )
    return tuple(item.dims[a] for a in perms[orient])


def orientation_codes(item: Item) -> tuple:
    """Orientation codes with duplicate oriented dims removed (lowest code kept)."""
    seen = {}
    for code in range(orientation_count(item.dim)):
        d = oriented_dims(item, code)
        if d not in seen:
            seen[d] = code
    return tuple(sorted(seen.values()))


@dataclass(eq=False)
class Instance:
    """A packing problem: items plus provenance metadata.

    ``optimal_layout`` is the generator's gap-free split layout.  It is
    metadata for the supervised baseline and optimality accounting only
    and must never inform the self-play agent.
    """

    dim: int
    items: tuple
    bin: tuple  # origin-bin edges, (L, W) in 2D, (L, W, H) in 3D
    seed: int
    optimal_layout: tuple | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def bin3(self) -> tuple:
        return self.bin if len(self.bin) == 3 else (*self.bin, 1)

    @property
    def bin_volume(self) -> int:
        return math.prod(self.bin)

    @property
    def total_volume(self) -> int:
        return sum(it.volume for it in self.items)

    def orient_rows(self) -> np.ndarray:
        """int64 [M, 5] rows (item_id, orient, dx, dy, dz), sorted by (item, code)."""
        rows = self._cache.get("orient_rows")
        if rows is None:
            out = []
            for it in self.items:
                for code in orientation_codes(it):
                    d = oriented_dims(it, code)
                    d3 = d if len(d) == 3 else (*d, 1)
                    out.append((it.id, code, *d3))
            rows = np.array(out, dtype=np.int64).reshape(-1, 5)
            self._cache["orient_rows"] = rows
        return rows


class PackState:
    """Immutable MDP state: placed boxes plus the set of unplaced items."""

    __slots__ = ("inst", "placements", "boxes", "unplaced_mask", "ext")

    def __init__(self, inst, placements, boxes, unplaced_mask, ext):
        self.inst = inst
        self.placements = placements  # tuple of Placement
        self.boxes = boxes  # int64 [k, 6] rows (x, y, z, dx, dy, dz)
        self.unplaced_mask = unplaced_mask  # bool [N]
        self.ext = ext  # enclosing-box extents (3-tuple of int)

    @property
    def step(self) -> int:
        return len(self.placements)

    @property
    def unplaced(self) -> frozenset:
        return frozenset(int(i) for i in np.flatnonzero(self.unplaced_mask))

    @property
    def is_terminal(self) -> bool:
        return len(self.placements) == self.inst.n_items


def initial_state(inst: Instance) -> PackState:
    return PackState(
        inst,
        (),
        np.zeros((0, 6), dtype=np.int64),
        np.ones(inst.n_items, dtype=bool),
        (0, 0, 0),
    )


def overlaps(pos_a, dims_a, pos_b, dims_b) -> bool:
    """True iff the two boxes' interiors intersect on every axis."""
    for p, d, q, e in zip(_pad(pos_a, 0), _pad(dims_a, 1), _pad(pos_b, 0), _pad(dims_b, 1)):
        if not (p < q + e and q < p + d):
            return False
    return True


def _pad(t, fill):
    return t if len(t) == 3 else (*t, fill)


def _action_box(state: PackState, action: Action) -> tuple:
    item = state.inst.items[action.item_id]
    d = oriented_dims(item, action.orient)
    d3 = d if len(d) == 3 else (*d, 1)
    return (*action.pos3, *d3)


def is_supported(state: PackState, action: Action) -> bool:
    """Floor contact, or footprint center inside one placed box's top face."""
    return kernels.box_supported(state.boxes, _action_box(state, action), state.inst.dim)


def candidate_positions(state: PackState) -> set:
    """Event-point positions derived from the corners of placed boxes."""
    if state.is_terminal:
        raise ValueError("candidate_positions: state is terminal")
    arr = kernels.candidate_positions_arr(state.boxes, state.inst.dim)
    if state.inst.dim == 2:
        return {(int(r[0]), int(r[1])) for r in arr}
    return {(int(r[0]), int(r[1]), int(r[2])) for r in arr}


def legal_action_rows(state: PackState) -> np.ndarray:
    """int64 [R, 8] rows (item_id, orient, x, y, z, dx, dy, dz).

    Ordered by item id, then orientation code, then lexicographic
    position; orientations with duplicate oriented dims are removed.
    """
    if state.is_terminal:
        raise ValueError("legal_action_rows: state is terminal")
    rows = state.inst.orient_rows()
    rows = rows[state.unplaced_mask[rows[:, 0]]]
    cands = kernels.candidate_positions_arr(state.boxes, state.inst.dim)
    return kernels.enumerate_legal(state.boxes, rows, cands, state.inst.dim)


def _row_action(dim: int, row) -> Action:
    pos = (int(row[2]), int(row[3])) if dim == 2 else (int(row[2]), int(row[3]), int(row[4]))
    return Action(int(row[0]), pos, int(row[1]))


def legal_actions(state: PackState) -> list:
    return [_row_action(state.inst.dim, r) for r in legal_action_rows(state)]


def apply_row(state: PackState, row) -> PackState:
    """Apply one legal-action row without validation (search fast path)."""
    item_id, orient = int(row[0]), int(row[1])
    box = np.asarray(row[2:8], dtype=np.int64)
    boxes = np.concatenate([state.boxes, box.reshape(1, 6)], axis=0)
    mask = state.unplaced_mask.copy()
    mask[item_id] = False
    dim = state.inst.dim
    pos = (int(row[2]), int(row[3])) if dim == 2 else tuple(int(v) for v in row[2:5])
    ext = tuple(max(int(e), int(p) + int(d)) for e, p, d in zip(state.ext, row[2:5], row[5:8]))
    return PackState(
        state.inst,
        state.placements + (Placement(item_id, pos, orient),),
        boxes,
        mask,
        ext,
    )


def apply_action(state: PackState, action: Action, validate: bool = True) -> PackState:
    """Apply an action, returning a new state (the input is unchanged).

    Illegal actions raise :class:`ConstraintViolation` naming the violated
    constraint.
    """
    inst = state.inst
    if validate:
        if not 0 <= action.item_id < inst.n_items:
            raise ConstraintViolation(f"item: unknown item id {action.item_id}")
        if not state.unplaced_mask[action.item_id]:
            raise ConstraintViolation(f"item: item {action.item_id} already placed")
        box = _action_box(state, action)  # validates the orientation code
        if action.pos not in candidate_positions(state):
            raise ConstraintViolation(
                f"candidate-position: {action.pos} is not an event point"
            )
        if kernels.overlaps_any(state.boxes, box):
            raise ConstraintViolation(f"overlap: action {action} intersects a placed box")
        if not kernels.box_supported(state.boxes, box, inst.dim):
            raise ConstraintViolation(f"support: action {action} has no support")
    else:
        box = _action_box(state, action)
    row = (action.item_id, action.orient, *box)
    return apply_row(state, np.asarray(row, dtype=np.int64))


def bin_cost(state: PackState) -> float:
    """Cost of the tight enclosing box: LW + WH + LH in 3D, W + H in 2D."""
    if state.step == 0:
        raise ValueError("bin_cost: no items placed")
    l, w, h = state.ext
    if state.inst.dim == 2:
        return float(l + w)
    return float(l * w + w * h + l * h)


def ideal_cost(inst: Instance) -> float:
    """Cost of the ideal cube (3D) or square (2D) holding the items' volume."""
    if inst.n_items == 0:
        raise ValueError("ideal_cost: empty instance")
    v = inst.total_volume
    if inst.dim == 2:
        return 2.0 * math.sqrt(v)
    return 3.0 * float(v) ** (2.0 / 3.0)


def is_optimal(state: PackState) -> bool:
    """Exact integer test for terminal reward 1 (cost equals the ideal cost)."""
    if not state.is_terminal:
        return False
    c = int(round(bin_cost(state)))
    v = state.inst.total_volume
    if state.inst.dim == 2:
        return c * c == 4 * v
    return c**3 == 27 * v * v


def terminal_reward(state: PackState) -> float:
    """Eq.-style terminal reward: ideal cost over achieved cost, in (0, 1].

    Exactly 1.0 when the integer optimality identity holds, avoiding
    float-equality fragility on the optimal branch.
    """
    if not state.is_terminal:
        raise ValueError("terminal_reward: state is not terminal")
    if is_optimal(state):
        return 1.0
    return ideal_cost(state.inst) / bin_cost(state)
