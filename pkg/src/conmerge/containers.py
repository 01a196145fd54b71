"""Named-tensor container files and layer partitioning.

File layout: an unsigned 64-bit little-endian header length N, then N bytes
of UTF-8 JSON mapping tensor name -> {"dtype", "shape", "data_offsets"}
(plus an optional "__metadata__" string map), then the concatenated raw
tensor bytes.  Offsets are relative to the end of the header.  Writers emit
tensors in lexicographic name order so identical checkpoints produce
byte-identical files.

All tensor data is held in float32 in memory; the record's ``dtype`` field
remembers the storage dtype, and F16 records are downcast again on write
(lossless round trip, since every f16 value is exactly representable in f32).
"""

import json
import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContainerFormatError, ValidationError

UNASSIGNED = None

_DTYPES = {"F32": np.dtype("<f4"), "F16": np.dtype("<f2")}


@dataclass
class TensorRecord:
    """One named tensor: float32 values in memory, storage dtype remembered."""

    name: str
    dtype: str  # "F32" or "F16"
    shape: tuple
    data: np.ndarray  # float32, C-order, shape == self.shape

    def __post_init__(self):
        if self.dtype not in _DTYPES:
            raise ValidationError(f"unsupported dtype {self.dtype!r} for tensor {self.name!r}")
        self.shape = tuple(int(s) for s in self.shape)
        if any(s < 0 for s in self.shape):
            raise ValidationError(f"negative dimension in shape {self.shape} of {self.name!r}")
        self.data = np.ascontiguousarray(self.data, dtype=np.float32).reshape(self.shape)

    def storage_bytes(self) -> bytes:
        return np.ascontiguousarray(self.data, dtype=_DTYPES[self.dtype]).tobytes()

    def __eq__(self, other):
        if not isinstance(other, TensorRecord):
            return NotImplemented
        return (
            self.name == other.name
            and self.dtype == other.dtype
            and self.shape == other.shape
            and self.data.tobytes() == other.data.tobytes()
        )


@dataclass
class Checkpoint:
    """An immutable-by-convention set of named tensors plus string metadata."""

    tensors: dict = field(default_factory=dict)  # name -> TensorRecord
    metadata: dict = field(default_factory=dict)  # str -> str

    def __eq__(self, other):
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return self.tensors == other.tensors and self.metadata == other.metadata


@dataclass
class LayerMap:
    """Tensor-name -> layer-index assignment; unmatched names map to UNASSIGNED."""

    pattern: str
    assignments: dict  # name -> int layer index, or UNASSIGNED

    @property
    def num_layers(self) -> int:
        assigned = [l for l in self.assignments.values() if l is not UNASSIGNED]
        return max(assigned) + 1 if assigned else 0


def compatible(a: Checkpoint, b: Checkpoint) -> bool:
    """True iff both checkpoints have identical name sets, shapes, and dtypes."""
    if set(a.tensors) != set(b.tensors):
        return False
    return all(
        a.tensors[n].shape == b.tensors[n].shape and a.tensors[n].dtype == b.tensors[n].dtype
        for n in a.tensors
    )


def require_compatible(a: Checkpoint, b: Checkpoint):
    if set(a.tensors) != set(b.tensors):
        only_a = sorted(set(a.tensors) - set(b.tensors))[:3]
        only_b = sorted(set(b.tensors) - set(a.tensors))[:3]
        raise ValidationError(f"incompatible checkpoints: name sets differ (e.g. {only_a} vs {only_b})")
    for n in a.tensors:
        ra, rb = a.tensors[n], b.tensors[n]
        if ra.shape != rb.shape:
            raise ValidationError(f"incompatible checkpoints: shape of {n!r} differs ({ra.shape} vs {rb.shape})")
        if ra.dtype != rb.dtype:
            raise ValidationError(f"incompatible checkpoints: dtype of {n!r} differs ({ra.dtype} vs {rb.dtype})")


def read_container(path) -> Checkpoint:
    """Read a container file; tensor values come back bit-exact (f16 upcast to f32)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise ContainerFormatError(f"{path}: malformed header (file shorter than 8 bytes)")
    (header_len,) = struct.unpack("<Q", blob[:8])
    if 8 + header_len > len(blob):
        raise ContainerFormatError(f"{path}: malformed header (declared length {header_len} beyond end of file)")

    def reject_duplicates(pairs):
        seen = set()
        for k, _ in pairs:
            if k in seen:
                raise ContainerFormatError(f"{path}: duplicate tensor name {k!r}")
            seen.add(k)
        return dict(pairs)

    try:
        header = json.loads(blob[8 : 8 + header_len].decode("utf-8"), object_pairs_hook=reject_duplicates)
    except ContainerFormatError:
        raise
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerFormatError(f"{path}: malformed header ({exc})") from exc
    if not isinstance(header, dict):
        raise ContainerFormatError(f"{path}: malformed header (not a JSON object)")

    data_region = blob[8 + header_len :]
    metadata = header.pop("__metadata__", {})
    if not isinstance(metadata, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in metadata.items()
    ):
        raise ContainerFormatError(f"{path}: __metadata__ must be a string map")

    tensors = {}
    for name, entry in header.items():
        try:
            dtype, shape, (begin, end) = entry["dtype"], entry["shape"], entry["data_offsets"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ContainerFormatError(f"{path}: malformed entry for tensor {name!r} ({exc})") from exc
        if dtype not in _DTYPES:
            raise ContainerFormatError(f"{path}: unsupported dtype {dtype!r} for tensor {name!r}")
        shape = tuple(int(s) for s in shape)
        if any(s < 0 for s in shape):
            raise ContainerFormatError(f"{path}: negative dimension in shape of {name!r}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        np_dtype = _DTYPES[dtype]
        if end - begin != count * np_dtype.itemsize:
            raise ContainerFormatError(
                f"{path}: tensor {name!r} declares {count} {dtype} elements but "
                f"{end - begin} bytes of data"
            )
        if begin < 0 or end > len(data_region):
            raise ContainerFormatError(f"{path}: truncated data region (tensor {name!r} ends at {end}, region has {len(data_region)} bytes)")
        raw = np.frombuffer(data_region[begin:end], dtype=np_dtype)
        tensors[name] = TensorRecord(name=name, dtype=dtype, shape=shape, data=raw.astype(np.float32).reshape(shape))
    return Checkpoint(tensors=tensors, metadata=dict(metadata))


def write_container(ckpt: Checkpoint, path, forbid_nan: bool = False):
    """Write a container file; header and data are in lexicographic name order."""
    names = sorted(ckpt.tensors)
    header = {}
    if ckpt.metadata:
        header["__metadata__"] = {str(k): str(v) for k, v in sorted(ckpt.metadata.items())}
    offset = 0
    payloads = []
    for name in names:
        rec = ckpt.tensors[name]
        if rec.name != name:
            raise ValidationError(f"tensor keyed {name!r} carries name {rec.name!r}")
        if forbid_nan and np.isnan(rec.data).any():
            raise ValidationError(f"NaN policy violation: tensor {name!r} contains NaN")
        raw = rec.storage_bytes()
        header[name] = {
            "dtype": rec.dtype,
            "shape": list(rec.shape),
            "data_offsets": [offset, offset + len(raw)],
        }
        payloads.append(raw)
        offset += len(raw)
    header_bytes = json.dumps(header, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for raw in payloads:
            fh.write(raw)


def partition_layers(ckpt: Checkpoint, pattern: str) -> LayerMap:
    """Assign each tensor a layer index from the pattern's single integer capture group."""
    compiled = re.compile(pattern)
    if compiled.groups != 1:
        raise ValidationError(
            f"layer pattern must have exactly one capture group, got {compiled.groups}: {pattern!r}"
        )
    assignments = {}
    for name in ckpt.tensors:
        m = compiled.search(name)
        assignments[name] = int(m.group(1)) if m else UNASSIGNED
    assigned = sorted({l for l in assignments.values() if l is not UNASSIGNED})
    if assigned and assigned != list(range(assigned[-1] + 1)):
        raise ValidationError(f"non-contiguous layer indices {set(assigned)}")
    return LayerMap(pattern=pattern, assignments=assignments)
