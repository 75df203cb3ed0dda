"""Binary tensor container: magic, JSON metadata, raw little-endian payloads.

Layout: 8-byte magic ``PNNCKPT1``, u64-LE metadata length, canonical-JSON
metadata (UTF-8), then each tensor's payload in declared order. Real tensors
are little-endian float64; complex tensors are interleaved re/im float64
(numpy ``<c16``). A SHA-256 of the concatenated payloads lives in the
metadata, so any byte flip fails loudly instead of loading as garbage.
"""

import hashlib
import json
import struct

import numpy as np

MAGIC = b"PNNCKPT1"


class CheckpointError(ValueError):
    """Raised on container corruption: bad magic, truncation, checksum."""


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def save_checkpoint(path, tensors: dict, meta: dict | None = None):
    """Write named tensors (declared order = dict order) plus metadata."""
    entries = []
    payloads = []
    for name, t in tensors.items():
        t = np.asarray(t)
        dtype = "<c16" if np.iscomplexobj(t) else "<f8"
        payloads.append(np.ascontiguousarray(t.astype(dtype)).tobytes())
        entries.append({"name": name, "shape": list(t.shape), "dtype": dtype})
    blob = b"".join(payloads)
    header = dict(meta or {})
    header["tensors"] = entries
    header["payload_sha256"] = hashlib.sha256(blob).hexdigest()
    meta_bytes = _canonical_json(header)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(meta_bytes)))
        f.write(meta_bytes)
        f.write(blob)


def load_checkpoint(path):
    """Read back (tensors, meta); exact round-trip of what was saved."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"magic mismatch in {path}: {raw[:8]!r}")
    if len(raw) < 16:
        raise CheckpointError(f"truncated header in {path}")
    (meta_len,) = struct.unpack("<Q", raw[8:16])
    meta_end = 16 + meta_len
    if len(raw) < meta_end:
        raise CheckpointError(f"truncated metadata in {path} at offset {len(raw)}")
    try:
        meta = json.loads(raw[16:meta_end])
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt metadata in {path}: {e}") from e
    blob = raw[meta_end:]
    sizes = []
    for entry in meta["tensors"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        sizes.append(count * dtype.itemsize)
    expected = sum(sizes)
    if len(blob) != expected:
        raise CheckpointError(
            f"payload length {len(blob)} != declared {expected} "
            f"(file truncated or padded at offset {meta_end + min(len(blob), expected)})")
    if hashlib.sha256(blob).hexdigest() != meta.get("payload_sha256"):
        raise CheckpointError(f"payload checksum mismatch in {path}")
    tensors = {}
    offset = 0
    for entry, nbytes in zip(meta["tensors"], sizes):
        arr = np.frombuffer(blob[offset:offset + nbytes], dtype=np.dtype(entry["dtype"]))
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
        offset += nbytes
    return tensors, meta
