"""Instance generation by recursive random splitting, plus file I/O.

A square/cube origin bin is split into N items; the split layout tiles
the bin exactly, so a perfect replay scores terminal reward 1.  The
layout is retained as metadata only: the self-play agent never sees it.

Randomness is driven entirely by the caller's seed, so parallel
generation across seeds is safe and reproducible.

Weight choices where the split procedure is only directional:
  * pop an item with probability proportional to volume, among items
    that still have an edge of length >= 2,
  * pick the split axis with probability proportional to edge length,
    among edges of length >= 2,
  * pick the integer split offset p in 1..e-1 with weight
    min(p, e - p) + 1, biasing cuts toward the edge center.
"""

import json
import math
from pathlib import Path

import numpy as np

from .env import (
    Action,
    Instance,
    Item,
    Placement,
    apply_action,
    bin_cost,
    initial_state,
    oriented_dims,
)

FORMAT_VERSION = 1


class ParseError(ValueError):
    """An instance file failed to parse or validate."""


class SequenceError(RuntimeError):
    """No constraint-respecting replay ordering was found for a layout."""

    def __init__(self, message, seed):
        super().__init__(f"{message} (instance seed {seed})")
        self.seed = seed


def generate(n: int, bin_dims: tuple, seed: int) -> Instance:
    """Generate an instance of ``n`` items by recursively splitting the bin.

    ``bin_dims`` is (L, W) for 2D or (L, W, H) for 3D.  Deterministic
    given ``seed``.
    """
    dim = len(bin_dims)
    if dim not in (2, 3):
        raise ValueError(f"bin must have 2 or 3 edges, got {bin_dims}")
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if any(e < 1 for e in bin_dims):
        raise ValueError(f"bin edges must be >= 1, got {bin_dims}")
    if n > math.prod(bin_dims):
        raise ValueError(f"n={n} exceeds bin volume {math.prod(bin_dims)}")

    rng = np.random.default_rng(int(seed))
    bin3 = bin_dims if dim == 3 else (*bin_dims, 1)
    # (x, y, z, dx, dy, dz) boxes; start from the whole bin
    boxes = [(0, 0, 0, *bin3)]
    while len(boxes) < n:
        splittable = [i for i, b in enumerate(boxes) if max(b[3:6]) >= 2]
        vols = np.array([boxes[i][3] * boxes[i][4] * boxes[i][5] for i in splittable], dtype=float)
        pick = splittable[rng.choice(len(splittable), p=vols / vols.sum())]
        box = boxes.pop(pick)
        edges = [(ax, box[3 + ax]) for ax in range(3) if box[3 + ax] >= 2]
        lens = np.array([e for _, e in edges], dtype=float)
        ax = edges[rng.choice(len(edges), p=lens / lens.sum())][0]
        e = box[3 + ax]
        offsets = np.arange(1, e)
        w = np.minimum(offsets, e - offsets) + 1.0
        p = int(offsets[rng.choice(e - 1, p=w / w.sum())])
        lo = list(box)
        hi = list(box)
        lo[3 + ax] = p
        hi[ax] += p
        hi[3 + ax] = e - p
        boxes.append(tuple(lo))
        boxes.append(tuple(hi))

    items = []
    layout = []
    for i, b in enumerate(boxes):
        dims = b[3:6] if dim == 3 else b[3:5]
        pos = b[0:3] if dim == 3 else b[0:2]
        items.append(Item(i, tuple(int(v) for v in dims)))
        layout.append(Placement(i, tuple(int(v) for v in pos), 0))
    return Instance(dim, tuple(items), tuple(bin_dims), int(seed), tuple(layout))


def optimal_sequence(inst: Instance) -> list:
    """Replay the split layout as a legal action sequence.

    The first move is the layout box anchored at the origin (the only
    legal opening position); the rest are chosen greedily by smallest
    enclosing-cost growth among the layout placements that are currently
    legal.  Raises :class:`SequenceError` when the greedy order gets
    stuck; callers log the seed and discard the instance.
    """
    if inst.optimal_layout is None:
        raise ValueError("instance has no optimal layout")
    state = initial_state(inst)
    remaining = list(inst.optimal_layout)
    sequence = []
    origin = (0, 0) if inst.dim == 2 else (0, 0, 0)
    while remaining:
        best = None
        for pl in remaining:
            if state.step == 0 and pl.pos != origin:
                continue
            action = Action(pl.item_id, pl.pos, pl.orient)
            try:
                nxt = apply_action(state, action)
            except ValueError:
                continue
            key = (bin_cost(nxt), pl.item_id, pl.pos)
            if best is None or key < best[0]:
                best = (key, pl, action, nxt)
        if best is None:
            raise SequenceError(
                f"layout replay stuck with {len(remaining)} items left", inst.seed
            )
        _, pl, action, state = best
        remaining.remove(pl)
        sequence.append(action)
    return sequence


def _check(cond, name, detail=""):
    if not cond:
        raise ParseError(f"invariant '{name}' violated{': ' + detail if detail else ''}")


def _validate(inst: Instance) -> None:
    _check(inst.dim in (2, 3), "dim", f"dim={inst.dim}")
    _check(len(inst.bin) == inst.dim, "bin", f"bin={inst.bin}")
    _check(all(e >= 1 for e in inst.bin), "bin", f"bin={inst.bin}")
    for it in inst.items:
        _check(len(it.dims) == inst.dim, "item-dims", f"item {it.id}: {it.dims}")
        _check(all(d >= 1 for d in it.dims), "item-dims", f"item {it.id}: {it.dims}")
    _check(
        inst.total_volume == inst.bin_volume,
        "volume-conservation",
        f"items {inst.total_volume} != bin {inst.bin_volume}",
    )
    layout = inst.optimal_layout
    _check(layout is not None and len(layout) == inst.n_items, "layout-size")
    seen = set()
    boxes = []
    for pl in layout:
        _check(0 <= pl.item_id < inst.n_items, "layout-item", f"id {pl.item_id}")
        _check(pl.item_id not in seen, "layout-item", f"duplicate id {pl.item_id}")
        seen.add(pl.item_id)
        d = oriented_dims(inst.items[pl.item_id], pl.orient)
        d3 = d if len(d) == 3 else (*d, 1)
        p3 = pl.pos3
        _check(all(p >= 0 for p in p3), "layout-bounds", f"pos {pl.pos}")
        _check(
            all(p + e <= b for p, e, b in zip(p3, d3, inst.bin3)),
            "layout-bounds",
            f"item {pl.item_id} exceeds the bin",
        )
        boxes.append((*p3, *d3))
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            a, b = boxes[i], boxes[j]
            if all(a[k] < b[k] + b[3 + k] and b[k] < a[k] + a[3 + k] for k in range(3)):
                raise ParseError(
                    f"invariant 'layout-overlap' violated: boxes {i} and {j} intersect"
                )
    # disjoint + in-bounds + exact volume  =>  the layout tiles the bin


def serialize_instance(inst: Instance) -> str:
    items = [list(it.dims3) for it in inst.items]
    layout = [[pl.item_id, *pl.pos3, pl.orient] for pl in inst.optimal_layout]
    return (
        f"version = {FORMAT_VERSION}\n"
        f"dim = {inst.dim}\n"
        f"seed = {inst.seed}\n"
        f"bin = {json.dumps(list(inst.bin3))}\n"
        f"items = {json.dumps(items)}\n"
        f"optimal_layout = {json.dumps(layout)}\n"
    )


def save_instance(inst: Instance, path) -> None:
    if inst.optimal_layout is None:
        raise ValueError("cannot save an instance without a layout")
    _validate(inst)
    Path(path).write_text(serialize_instance(inst))


def load_instance(path) -> Instance:
    fields = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        try:
            fields[key] = json.loads(value.strip())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: bad value for field '{key}': {exc}") from exc
    for key in ("version", "dim", "seed", "bin", "items", "optimal_layout"):
        if key not in fields:
            raise ParseError(f"{path}: missing field '{key}'")
    if fields["version"] != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported version {fields['version']}")
    dim = fields["dim"]
    if dim not in (2, 3):
        raise ParseError(f"{path}: field 'dim' must be 2 or 3")

    def as_int(v):
        if not isinstance(v, int):
            raise ParseError(f"{path}: non-integer value {v!r}")
        return v

    try:
        bin3 = tuple(as_int(v) for v in fields["bin"])
        items = tuple(
            Item(i, tuple(as_int(v) for v in d[:dim])) for i, d in enumerate(fields["items"])
        )
        layout = tuple(
            Placement(as_int(r[0]), tuple(as_int(v) for v in r[1 : 1 + dim]), as_int(r[4]))
            for r in fields["optimal_layout"]
        )
    except (TypeError, IndexError, ValueError) as exc:
        raise ParseError(f"{path}: malformed field: {exc}") from exc
    inst = Instance(dim, items, bin3[:dim], int(fields["seed"]), layout)
    try:
        _validate(inst)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return inst
