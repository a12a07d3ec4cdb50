"""Binary checkpoint format.

Layout: the magic bytes "NATCKPT1", an unsigned 64-bit little-endian length,
a UTF-8 JSON manifest of exactly that many bytes, then the raw tensors as
little-endian float64 in manifest order. The manifest records every tensor
path and shape, the model hyperparameters, the Euler order used for metrics,
and the graph and positional-encoding settings, so a file is self-describing.

Writing is deterministic: tensors are ordered weights-then-buffers, each
sorted by path, and the manifest is serialized with sorted keys. Identical
states therefore produce identical bytes.
"""

import hashlib
import json
import struct

import numpy as np

from . import tensor as nt
from .errors import DataError
from .model import ModelConfig, ModelParams
from .posenc import PosEncConfig
from .skeleton import EULER_ORDERS, KinematicTree

MAGIC = b"NATCKPT1"
MODEL_KINDS = ("nat", "ar")


def _config_manifest(cfg):
    return {
        "tree_parents": list(cfg.tree.parents),
        "class_count": cfg.class_count,
        "ks_encoder": cfg.ks_encoder,
        "graph_type": cfg.graph_type,
        "graph_seed": cfg.graph_seed,
        "posenc": {
            "d_model": cfg.posenc.d_model,
            "alpha": cfg.posenc.alpha,
            "beta": cfg.posenc.beta,
        },
        "dropout_rate": cfg.dropout_rate,
        "leaky_slope": cfg.leaky_slope,
    }


def config_from_manifest(manifest):
    c = manifest["config"]
    try:
        return ModelConfig(
            tree=KinematicTree(parents=tuple(c["tree_parents"])),
            class_count=c["class_count"],
            ks_encoder=c["ks_encoder"],
            graph_type=c["graph_type"],
            graph_seed=c["graph_seed"],
            posenc=PosEncConfig(**c["posenc"]),
            dropout_rate=c["dropout_rate"],
            leaky_slope=c["leaky_slope"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid checkpoint config: {exc}") from exc


def save_checkpoint(path, params, cfg, model_kind="nat", euler_order="zyx",
                    extra=None):
    """Write params and config to path in the NATCKPT1 layout."""
    if model_kind not in MODEL_KINDS:
        raise DataError(f"unknown model kind {model_kind!r}, expected one of {MODEL_KINDS}")
    if euler_order not in EULER_ORDERS:
        raise DataError(f"unknown euler order {euler_order!r}")
    entries = []
    arrays = []
    for name in sorted(params.weights):
        arr = params.weights[name].data
        entries.append({"path": name, "kind": "weight", "shape": list(arr.shape)})
        arrays.append(arr)
    for name in sorted(params.buffers):
        arr = params.buffers[name]
        entries.append({"path": name, "kind": "buffer", "shape": list(arr.shape)})
        arrays.append(arr)
    manifest = {
        "model": model_kind,
        "euler_order": euler_order,
        "config": _config_manifest(cfg),
        "tensors": entries,
        "extra": {} if extra is None else extra,
    }
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(mbytes)))
        fh.write(mbytes)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a NATCKPT1 file; returns (ModelParams, ModelConfig, manifest)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if blob[:8] != MAGIC:
        raise DataError(f"{path} is not a checkpoint (bad magic {blob[:8]!r})")
    if len(blob) < 16:
        raise DataError(f"{path} is truncated before the manifest length")
    (mlen,) = struct.unpack("<Q", blob[8:16])
    if len(blob) < 16 + mlen:
        raise DataError(f"{path} is truncated inside the manifest")
    try:
        manifest = json.loads(blob[16:16 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path} has an unreadable manifest: {exc}") from exc

    weights, buffers = {}, {}
    offset = 16 + mlen
    for entry in manifest.get("tensors", []):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(blob):
            raise DataError(f"{path} is truncated inside tensor {entry['path']!r}")
        arr = np.frombuffer(blob[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
        if entry["kind"] == "weight":
            weights[entry["path"]] = nt.parameter(entry["path"], arr)
        elif entry["kind"] == "buffer":
            buffers[entry["path"]] = arr
        else:
            raise DataError(f"unknown tensor kind {entry['kind']!r} in {path}")
    if offset != len(blob):
        raise DataError(f"{path} has {len(blob) - offset} trailing bytes")
    cfg = config_from_manifest(manifest)
    return ModelParams(weights=weights, buffers=buffers), cfg, manifest


def checkpoint_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
