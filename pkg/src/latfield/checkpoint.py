"""Binary chain checkpoints: magic + JSON header + little-endian float64
field payload.  Round-trip load/save is byte-identical, so resumed chains
continue exactly as an uninterrupted run would.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .gff import rng_stream
from .mcmc import ChainState

MAGIC = b"LATF"
CKPT_VERSION = 1


def _rng_state_to_jsonable(state_dict):
    def conv(x):
        if isinstance(x, np.ndarray):
            return {"__nd__": x.dtype.str, "data": x.tolist()}
        if isinstance(x, dict):
            return {k: conv(v) for k, v in x.items()}
        if isinstance(x, (np.integer,)):
            return int(x)
        return x
    return conv(state_dict)


def _rng_state_from_jsonable(obj):
    def conv(x):
        if isinstance(x, dict) and "__nd__" in x:
            return np.array(x["data"], dtype=np.dtype(x["__nd__"]))
        if isinstance(x, dict):
            return {k: conv(v) for k, v in x.items()}
        return x
    return conv(obj)


def save_checkpoint(path, state: ChainState, header_extra: dict = None):
    """Write the chain state.  The header records everything needed to
    reconstruct it (RNG state included); the payload is the raw field in
    C order, little-endian float64."""
    values = np.ascontiguousarray(state.values, dtype="<f8")
    header = {
        "version": CKPT_VERSION,
        "shape": list(values.shape),
        "sweep": state.sweep,
        "step_size": state.step_size,
        "n_leapfrog": state.n_leapfrog,
        "accepted": state.accepted,
        "proposed": state.proposed,
        "flagged": state.flagged,
        "rng_state": _rng_state_to_jsonable(state.rng.bit_generator.state),
    }
    if header_extra:
        header.update(header_extra)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(values.tobytes(order="C"))


def load_checkpoint(path):
    """Read a checkpoint; returns (ChainState, header dict)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        shape = tuple(header["shape"])
        count = int(np.prod(shape))
        payload = fh.read(count * 8)
        if len(payload) != count * 8:
            raise ValueError("truncated checkpoint payload")
        values = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    rng = rng_stream(0)
    rng.bit_generator.state = _rng_state_from_jsonable(header["rng_state"])
    state = ChainState(values, header["step_size"], header["n_leapfrog"], rng,
                       sweep=header["sweep"], accepted=header["accepted"],
                       proposed=header["proposed"], flagged=header["flagged"])
    return state, header
