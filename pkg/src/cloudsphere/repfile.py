"""Binary container for a fitted representation plus a JSON sidecar.

Layout (little-endian)::

    magic    4 bytes  b"CSPH"
    version  uint32   1
    n        uint64   template size
    K        uint32   index of the coarsest stage (K + 1 offset fields)
    radius   float64
    template n x 3 float64
    offsets  (K + 1) x n x 3 float64, stage 0 first, template order

The sidecar (same stem, ``.json``) holds the fit config, the normalization
transform and the loss history; it is optional for loading.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .fitter import CloudSphereRep
from .geometry import SphereTemplate

MAGIC = b"CSPH"
VERSION = 1
_HEADER = struct.Struct("<4sIQId")


def save_rep(rep, path):
    path = Path(path)
    header = _HEADER.pack(MAGIC, VERSION, rep.n, rep.K, float(rep.template.radius))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(rep.template.points, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(rep.offsets, dtype="<f8").tobytes())


def load_rep(path):
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("file shorter than header", path, offset=0)
    magic, version, n, K, radius = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", path, offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", path, offset=4)
    expected = _HEADER.size + 8 * 3 * n * (K + 2)
    if len(raw) != expected:
        raise FormatError(f"expected {expected} bytes, found {len(raw)}", path, offset=min(len(raw), expected))
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    template = body[: 3 * n].reshape(n, 3)
    offsets = body[3 * n:].reshape(K + 1, n, 3)
    return CloudSphereRep(SphereTemplate(template, radius), offsets)


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def save_sidecar(path, **payload):
    with open(sidecar_path(path), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_sidecar(path):
    p = sidecar_path(path)
    if not p.exists():
        return None
    with open(p) as fh:
        return json.load(fh)
