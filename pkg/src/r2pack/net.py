"""Permutation-invariant policy/value network over variable-size action sets.

Each legal action is featurized into one row; rows are embedded by a
shared MLP, pooled with mean+max into a global vector, and combined with
the per-row embeddings for policy logits.  A tanh head on the global
vector gives the state value.  Permutation invariance holds by
construction: permuting input rows permutes the policy identically and
leaves the value unchanged.

Gradients are exact reverse-mode derivations (finite-difference checked
in the tests); the optimizer is plain Adam.  Everything is float64
NumPy, deterministic given the init seed.
"""

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .env import PackState, bin_cost, ideal_cost

CHECKPOINT_MAGIC = b"R2CKPT01"
CHECKPOINT_VERSION = 1

L2_LAMBDA = 1e-4
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class CheckpointError(ValueError):
    """A checkpoint file is malformed, corrupted, or incompatible."""


def feature_width(dim: int) -> int:
    """Feature columns per action row: 10 in 2D, 13 in 3D."""
    return 13 if dim == 3 else 10


def featurize(state: PackState, actions) -> np.ndarray:
    """Feature matrix with one row per legal action.

    ``actions`` is the int64 [R, 8] row array from
    :func:`r2pack.env.legal_action_rows` (a list of Action objects is
    accepted and converted).  Columns, 3D:

        dx/L, dy/W, dz/H, x/L, y/W, z/H, orient, volume fraction,
        fraction placed, ext_x/L, ext_y/W, ext_z/H, cost/ideal-cost

    2D drops the z-axis columns.  The trailing scalars are global state
    features repeated on every row; cost/ideal-cost is 0 for the empty
    state, whose enclosing box is undefined.
    """
    rows = _as_rows(state, actions)
    if len(rows) == 0:
        raise ValueError("featurize: empty action list")
    inst = state.inst
    dim = inst.dim
    be = np.asarray(inst.bin3, dtype=np.float64)
    r = rows.astype(np.float64)
    pos = r[:, 2:5] / be
    ext = np.asarray(state.ext, dtype=np.float64) / be
    dims = r[:, 5:8] / be
    vol = r[:, 5] * r[:, 6] * r[:, 7] / inst.bin_volume
    frac = state.step / inst.n_items
    cost = bin_cost(state) / ideal_cost(inst) if state.step else 0.0
    n = len(rows)
    ones = np.ones(n)
    if dim == 2:
        cols = [dims[:, 0], dims[:, 1], pos[:, 0], pos[:, 1], r[:, 1], vol,
                frac * ones, ext[0] * ones, ext[1] * ones, cost * ones]
    else:
        cols = [dims[:, 0], dims[:, 1], dims[:, 2], pos[:, 0], pos[:, 1], pos[:, 2],
                r[:, 1], vol, frac * ones, ext[0] * ones, ext[1] * ones,
                ext[2] * ones, cost * ones]
    return np.stack(cols, axis=1)


def _as_rows(state, actions) -> np.ndarray:
    if isinstance(actions, np.ndarray):
        return actions
    from .env import _action_box  # local: avoids a public helper for one conversion

    rows = np.empty((len(actions), 8), dtype=np.int64)
    for i, a in enumerate(actions):
        rows[i, 0] = a.item_id
        rows[i, 1] = a.orient
        rows[i, 2:8] = _action_box(state, a)
    return rows


PARAM_ORDER = (
    "W_e1", "b_e1", "W_e2", "b_e2",
    "W_p1", "b_p1", "w_p2", "b_p2",
    "W_v1", "b_v1", "w_v2", "b_v2",
)


class NetParams:
    """All network weights plus Adam state and the optimizer step counter."""

    def __init__(self, feature_width: int, hidden: int = 64, seed: int = 0):
        self.feature_width = feature_width
        self.hidden = hidden
        self.step = 0
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        f, h = feature_width, hidden

        def he(n_in, shape):
            limit = np.sqrt(6.0 / n_in)
            return rng.uniform(-limit, limit, size=shape)

        self.params = {
            "W_e1": he(f, (f, h)), "b_e1": np.zeros(h),
            "W_e2": he(h, (h, h)), "b_e2": np.zeros(h),
            "W_p1": he(3 * h, (3 * h, h)), "b_p1": np.zeros(h),
            "w_p2": he(h, (h,)), "b_p2": np.zeros(1),
            "W_v1": he(2 * h, (2 * h, h)), "b_v1": np.zeros(h),
            "w_v2": he(h, (h,)), "b_v2": np.zeros(1),
        }
        self.m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.params.items()}

    def copy(self) -> "NetParams":
        out = NetParams.__new__(NetParams)
        out.feature_width = self.feature_width
        out.hidden = self.hidden
        out.step = self.step
        out.params = {k: v.copy() for k, v in self.params.items()}
        out.m = {k: v.copy() for k, v in self.m.items()}
        out.v = {k: v.copy() for k, v in self.v.items()}
        return out


@dataclass
class NetOutput:
    policy: np.ndarray  # probabilities over the action rows, sums to 1
    value: float  # in (-1, 1)


def _forward_parts(p: dict, x: np.ndarray):
    h1 = np.maximum(x @ p["W_e1"] + p["b_e1"], 0.0)
    h2 = np.maximum(h1 @ p["W_e2"] + p["b_e2"], 0.0)
    g = np.concatenate([h2.mean(axis=0), h2.max(axis=0)])
    pin = np.concatenate([h2, np.broadcast_to(g, (len(h2), len(g)))], axis=1)
    q1 = np.maximum(pin @ p["W_p1"] + p["b_p1"], 0.0)
    logits = q1 @ p["w_p2"] + p["b_p2"][0]
    logits = logits - logits.max()
    exp = np.exp(logits)
    policy = exp / exp.sum()
    u1 = np.maximum(g @ p["W_v1"] + p["b_v1"], 0.0)
    value = float(np.tanh(u1 @ p["w_v2"] + p["b_v2"][0]))
    return h1, h2, g, pin, q1, logits, policy, u1, value


def forward(params: NetParams, feats: np.ndarray) -> NetOutput:
    """Policy over action rows and a scalar state value."""
    x = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    if x.shape[1] != params.feature_width:
        raise ValueError(
            f"feature width mismatch: got {x.shape[1]}, net expects {params.feature_width}"
        )
    parts = _forward_parts(params.params, x)
    policy, value = parts[6], parts[8]
    if not (np.all(np.isfinite(policy)) and np.isfinite(value)):
        _diagnose_forward(params.params, x)
    return NetOutput(policy, value)


def _diagnose_forward(p, x):
    names = ("embed-1", "embed-2", "pooled", "policy-input", "policy-hidden",
             "logits", "policy", "value-hidden", "value")
    for name, arr in zip(names, _forward_parts(p, x)):
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite activations at layer '{name}'")
    raise FloatingPointError("non-finite network output")


def loss_and_grads(params: NetParams, feats, target_policy, target_z: float):
    """Combined training loss and exact gradients for every parameter.

    loss = cross-entropy(target, policy) + (value - z)^2 + lambda * ||theta||^2
    """
    p = params.params
    x = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    t = np.asarray(target_policy, dtype=np.float64)
    if x.shape[0] != t.shape[0]:
        raise ValueError(f"target policy length {t.shape[0]} != action count {x.shape[0]}")
    h1, h2, g, pin, q1, logits, policy, u1, value = _forward_parts(p, x)
    n, h = x.shape[0], params.hidden

    logp = logits - np.log(np.exp(logits).sum())
    ce = -float(t @ logp)
    l2 = sum(float((w * w).sum()) for w in p.values())
    loss = ce + (value - target_z) ** 2 + L2_LAMBDA * l2

    grads = {}
    # policy head
    dlogits = policy - t
    grads["w_p2"] = q1.T @ dlogits
    grads["b_p2"] = np.array([dlogits.sum()])
    dq1 = np.outer(dlogits, p["w_p2"]) * (q1 > 0)
    grads["W_p1"] = pin.T @ dq1
    grads["b_p1"] = dq1.sum(axis=0)
    dpin = dq1 @ p["W_p1"].T
    dh2 = dpin[:, :h].copy()
    dg = dpin[:, h:].sum(axis=0)
    # value head
    dpre_v = 2.0 * (value - target_z) * (1.0 - value * value)
    grads["w_v2"] = u1 * dpre_v
    grads["b_v2"] = np.array([dpre_v])
    du1 = p["w_v2"] * dpre_v * (u1 > 0)
    grads["W_v1"] = np.outer(g, du1)
    grads["b_v1"] = du1
    dg = dg + p["W_v1"] @ du1
    # pooling: mean spreads evenly, max routes to the (first) argmax row
    dh2 += dg[:h] / n
    amax = h2.argmax(axis=0)
    dh2[amax, np.arange(h)] += dg[h:]
    # embedding
    dpre2 = dh2 * (h2 > 0)
    grads["W_e2"] = h1.T @ dpre2
    grads["b_e2"] = dpre2.sum(axis=0)
    dpre1 = (dpre2 @ p["W_e2"].T) * (h1 > 0)
    grads["W_e1"] = x.T @ dpre1
    grads["b_e1"] = dpre1.sum(axis=0)

    for k, w in p.items():
        grads[k] = grads[k] + 2.0 * L2_LAMBDA * w
    return loss, grads


def adam_step(params: NetParams, grads: dict, lr: float = 1e-3) -> NetParams:
    """One Adam update in place; aborts on non-finite parameters."""
    params.step += 1
    t = params.step
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for k, w in params.params.items():
        gk = grads[k]
        m = params.m[k]
        v = params.v[k]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * gk
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * gk * gk
        w -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        if not np.all(np.isfinite(w)):
            raise FloatingPointError(f"non-finite parameter '{k}' after Adam update")
    return params


def save_checkpoint(params: NetParams, path, extra: dict | None = None) -> None:
    """Write a versioned, content-hashed checkpoint.

    Layout: magic, 8-byte little-endian header length, a JSON header
    (array manifest, step counter, payload hash, optional ``extra``
    metadata), then the flat float64 parameter/optimizer arrays in the
    documented fixed order.
    """
    arrays = []
    payload = bytearray()
    for prefix, group in (("", params.params), ("m.", params.m), ("v.", params.v)):
        for name in PARAM_ORDER:
            arr = np.ascontiguousarray(group[name], dtype="<f8")
            arrays.append([prefix + name, list(arr.shape)])
            payload += arr.tobytes()
    header = {
        "format_version": CHECKPOINT_VERSION,
        "feature_width": params.feature_width,
        "hidden": params.hidden,
        "step": params.step,
        "arrays": arrays,
        "payload_sha256": hashlib.sha256(bytes(payload)).hexdigest(),
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        fh.write(bytes(payload))


def load_checkpoint(path, expect_feature_width: int | None = None):
    """Read a checkpoint, verifying hash and version; returns (params, extra)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    off = len(CHECKPOINT_MAGIC)
    if len(data) < off + 8:
        raise CheckpointError(f"{path}: truncated header")
    hlen = int.from_bytes(data[off : off + 8], "little")
    off += 8
    if len(data) < off + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[off : off + hlen])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    off += hlen
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {header.get('format_version')}"
        )
    payload = data[off:]
    expected = sum(8 * int(np.prod(shape)) for _, shape in header["arrays"])
    if len(payload) != expected:
        raise CheckpointError(
            f"{path}: truncated payload ({len(payload)} bytes, expected {expected})"
        )
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CheckpointError(f"{path}: payload hash mismatch")
    if expect_feature_width is not None and header["feature_width"] != expect_feature_width:
        raise CheckpointError(
            f"{path}: incompatible feature width {header['feature_width']}, "
            f"expected {expect_feature_width}"
        )
    params = NetParams.__new__(NetParams)
    params.feature_width = header["feature_width"]
    params.hidden = header["hidden"]
    params.step = header["step"]
    params.params, params.m, params.v = {}, {}, {}
    pos = 0
    for name, shape in header["arrays"]:
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=pos).reshape(shape).copy()
        pos += 8 * count
        if name.startswith("m."):
            params.m[name[2:]] = arr
        elif name.startswith("v."):
            params.v[name[2:]] = arr
        else:
            params.params[name] = arr
    missing = set(PARAM_ORDER) - set(params.params)
    if missing:
        raise CheckpointError(f"{path}: missing arrays {sorted(missing)}")
    return params, header.get("extra", {})
