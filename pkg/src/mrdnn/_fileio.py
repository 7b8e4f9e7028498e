"""Tagged container used by graph, checkpoint and PCA transform files.

Layout::

    <magic>\\n
    <one-line JSON header>\\n
    <raw little-endian array payloads, back to back>

The header carries caller metadata under ``"meta"`` and, under ``"arrays"``,
the name, dtype and shape of each payload in order.  Round trips are exact.
"""

import hashlib
import json

import numpy as np


def write_tagged(path, magic, meta, arrays):
    specs = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        dt = arr.dtype.newbyteorder("<")
        specs.append({"name": name, "dtype": dt.str, "shape": list(arr.shape)})
        blobs.append(arr.astype(dt, copy=False).tobytes())
    header = json.dumps({"meta": meta, "arrays": specs}, sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(magic.encode("ascii") + b"\n")
        fh.write(header.encode("utf-8") + b"\n")
        for blob in blobs:
            fh.write(blob)


def read_tagged(path, magic):
    with open(path, "rb") as fh:
        raw = fh.read()
    first = raw.find(b"\n")
    if first < 0 or raw[:first] != magic.encode("ascii"):
        raise ValueError(f"{path}: not a {magic} file")
    second = raw.find(b"\n", first + 1)
    if second < 0:
        raise ValueError(f"{path}: truncated header")
    try:
        header = json.loads(raw[first + 1:second].decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: corrupt header ({exc})") from None
    offset = second + 1
    arrays = {}
    for entry in header["arrays"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        nbytes = count * dt.itemsize
        if offset + nbytes > len(raw):
            raise ValueError(f"{path}: truncated payload for {entry['name']!r}")
        arr = np.frombuffer(raw, dtype=dt, count=count, offset=offset)
        arrays[entry["name"]] = arr.reshape(entry["shape"]).astype(dt.newbyteorder("="))
        offset += nbytes
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
    return header["meta"], arrays


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
