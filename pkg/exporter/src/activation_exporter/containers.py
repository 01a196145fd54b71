"""Writer for the named-tensor container format consumed by the merge toolkit.

Layout: 8-byte little-endian header length, UTF-8 JSON header mapping tensor
name -> {"dtype", "shape", "data_offsets"} plus an optional "__metadata__"
string map, then concatenated raw little-endian tensor bytes with offsets
relative to the end of the header.  Tensors are emitted in lexicographic
name order.
"""

import json
import struct

import numpy as np


def write_container(tensors: dict, path, metadata: dict = None):
    """Write float32 arrays keyed by name, plus a string metadata map."""
    header = {}
    if metadata:
        header["__metadata__"] = {str(k): str(v) for k, v in sorted(metadata.items())}
    payloads = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw = arr.tobytes()
        header[name] = {
            "dtype": "F32",
            "shape": list(arr.shape),
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
