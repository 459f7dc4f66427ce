"""Reading and writing point clouds as XYZ text or PLY (ASCII / binary little-endian)."""

from pathlib import Path

import numpy as np

from .errors import EmptyInputError, FormatError

FORMATS = ("xyz", "ply-ascii", "ply-binary-le")

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def guess_format(path):
    path = Path(path)
    if path.suffix.lower() in (".xyz", ".txt", ".pts"):
        return "xyz"
    if path.suffix.lower() == ".ply":
        with open(path, "rb") as fh:
            head = fh.read(512)
        if b"binary_little_endian" in head:
            return "ply-binary-le"
        return "ply-ascii"
    raise FormatError("cannot infer format from extension; pass one of " + ", ".join(FORMATS), path)


def _read_xyz(path):
    rows = []
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.replace(",", " ").split()
            if len(parts) < 3:
                raise FormatError("expected at least 3 coordinates", path, line=lineno)
            try:
                rows.append([float(v) for v in parts[:3]])
            except ValueError as exc:
                raise FormatError(str(exc), path, line=lineno) from None
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def _parse_header(path, raw):
    end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or end < 0:
        raise FormatError("missing 'ply' magic or 'end_header'", path, line=1)
    nl = raw.find(b"\n", end)
    body_start = len(raw) if nl < 0 else nl + 1
    lines = raw[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements = []
    for lineno, line in enumerate(lines, 1):
        tok = line.split()
        if not tok or tok[0] in ("ply", "comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 2:
                raise FormatError("malformed format line", path, line=lineno)
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise FormatError("malformed element line", path, line=lineno)
            elements.append({"name": tok[1], "count": int(tok[2]), "props": []})
        elif tok[0] == "property":
            if not elements:
                raise FormatError("property before any element", path, line=lineno)
            if tok[1] == "list":
                if len(tok) != 5 or tok[2] not in _PLY_TYPES or tok[3] not in _PLY_TYPES:
                    raise FormatError("malformed list property", path, line=lineno)
                elements[-1]["props"].append((tok[4], ("list", _PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]])))
            else:
                if len(tok) != 3 or tok[1] not in _PLY_TYPES:
                    raise FormatError(f"unknown property type {tok[1:]}", path, line=lineno)
                elements[-1]["props"].append((tok[2], _PLY_TYPES[tok[1]]))
        else:
            raise FormatError(f"unexpected header keyword {tok[0]!r}", path, line=lineno)
    if fmt not in ("ascii", "binary_little_endian"):
        raise FormatError(f"unsupported PLY format {fmt!r}", path)
    return fmt, elements, body_start, len(lines) + 2


def _vertex_xyz(path, vertex, table):
    names = [p[0] for p in vertex["props"]]
    missing = [c for c in "xyz" if c not in names]
    if missing:
        raise FormatError(f"vertex element lacks properties {missing}", path)
    return np.stack([table[names.index(c)] for c in "xyz"], axis=1).astype(np.float64)


def _read_ply_ascii(path, raw, elements, body_start, first_line):
    lines = raw[body_start:].decode("ascii", errors="replace").splitlines()
    pos = 0
    for el in elements:
        if el["name"] != "vertex":
            # skip other elements, one line per item
            pos += el["count"]
            continue
        nprops = len(el["props"])
        if any(isinstance(t, tuple) for _, t in el["props"]):
            raise FormatError("list properties on vertices are not supported", path)
        cols = [[] for _ in range(nprops)]
        for i in range(el["count"]):
            if pos >= len(lines):
                raise FormatError("file ends before all vertices were read", path, line=first_line + pos)
            tok = lines[pos].split()
            if len(tok) < nprops:
                raise FormatError(f"expected {nprops} values, got {len(tok)}", path, line=first_line + pos)
            try:
                for c in range(nprops):
                    cols[c].append(float(tok[c]))
            except ValueError as exc:
                raise FormatError(str(exc), path, line=first_line + pos) from None
            pos += 1
        return _vertex_xyz(path, el, [np.array(c) for c in cols])
    raise EmptyInputError(f"{path}: no vertex element")


def _read_ply_binary(path, raw, elements, body_start):
    offset = body_start
    for el in elements:
        props = el["props"]
        has_list = any(isinstance(t, tuple) for _, t in props)
        if not has_list:
            dtype = np.dtype([(f"p{i}", "<" + t) for i, (_, t) in enumerate(props)])
            size = dtype.itemsize * el["count"]
            if offset + size > len(raw):
                raise FormatError(f"truncated {el['name']} data", path, offset=offset)
            if el["name"] == "vertex":
                arr = np.frombuffer(raw, dtype=dtype, count=el["count"], offset=offset)
                return _vertex_xyz(path, el, [arr[f"p{i}"] for i in range(len(props))])
            offset += size
            continue
        if el["name"] == "vertex":
            raise FormatError("list properties on vertices are not supported", path, offset=offset)
        # walk variable-length rows to find where the next element starts
        for _ in range(el["count"]):
            for _, t in props:
                if isinstance(t, tuple):
                    count_t, item_t = np.dtype("<" + t[1]), np.dtype("<" + t[2])
                    if offset + count_t.itemsize > len(raw):
                        raise FormatError("truncated list data", path, offset=offset)
                    cnt = int(np.frombuffer(raw, count_t, 1, offset)[0])
                    offset += count_t.itemsize + cnt * item_t.itemsize
                else:
                    offset += np.dtype(t).itemsize
    raise EmptyInputError(f"{path}: no vertex element")


def read_cloud(path, fmt=None):
    """Load the vertex coordinates of a point cloud, in file order."""
    path = Path(path)
    if not path.exists():
        raise FormatError("file does not exist", path)
    fmt = fmt or guess_format(path)
    if fmt == "xyz":
        pts = _read_xyz(path)
    elif fmt in ("ply-ascii", "ply-binary-le"):
        raw = path.read_bytes()
        file_fmt, elements, body_start, first_line = _parse_header(path, raw)
        if file_fmt == "ascii":
            pts = _read_ply_ascii(path, raw, elements, body_start, first_line)
        else:
            pts = _read_ply_binary(path, raw, elements, body_start)
    else:
        raise FormatError(f"unknown format {fmt!r}", path)
    if len(pts) == 0:
        raise EmptyInputError(f"{path}: zero vertices")
    if not np.all(np.isfinite(pts)):
        raise FormatError("non-finite coordinates", path)
    return pts


def write_cloud(cloud, path, fmt="ply-binary-le", colors=None):
    """Write coordinates (as doubles) and optional uchar RGB colors."""
    path = Path(path)
    pts = np.asarray(cloud, dtype=np.float64)
    if colors is not None:
        colors = np.asarray(colors)
        if colors.shape != (len(pts), 3):
            raise ValueError(f"colors must have shape ({len(pts)}, 3), got {colors.shape}")
        colors = np.clip(np.round(colors), 0, 255).astype(np.uint8) if colors.dtype != np.uint8 else colors
    try:
        if fmt == "xyz":
            with open(path, "w", encoding="ascii") as fh:
                # tolist gives Python floats, whose repr round-trips exactly
                for x, y, z in pts.tolist():
                    fh.write(f"{x!r} {y!r} {z!r}\n")
            return
        if fmt not in ("ply-ascii", "ply-binary-le"):
            raise FormatError(f"unknown format {fmt!r}", path)
        kind = "ascii" if fmt == "ply-ascii" else "binary_little_endian"
        header = [
            "ply",
            f"format {kind} 1.0",
            f"element vertex {len(pts)}",
            "property double x",
            "property double y",
            "property double z",
        ]
        if colors is not None:
            header += ["property uchar red", "property uchar green", "property uchar blue"]
        header.append("end_header")
        head = ("\n".join(header) + "\n").encode("ascii")
        with open(path, "wb") as fh:
            fh.write(head)
            if kind == "ascii":
                for i, (x, y, z) in enumerate(pts.tolist()):
                    line = f"{x!r} {y!r} {z!r}"
                    if colors is not None:
                        line += " {} {} {}".format(*colors[i])
                    fh.write((line + "\n").encode("ascii"))
            else:
                fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
                if colors is not None:
                    fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
                rec = np.empty(len(pts), dtype=fields)
                rec["x"], rec["y"], rec["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
                if colors is not None:
                    rec["red"], rec["green"], rec["blue"] = colors[:, 0], colors[:, 1], colors[:, 2]
                fh.write(rec.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def read_colors(path):
    """RGB vertex colors of a PLY written by :func:`write_cloud`, or None."""
    path = Path(path)
    raw = path.read_bytes()
    fmt, elements, body_start, _ = _parse_header(path, raw)
    vertex = next(el for el in elements if el["name"] == "vertex")
    names = [p[0] for p in vertex["props"]]
    if not all(c in names for c in ("red", "green", "blue")):
        return None
    if fmt == "ascii":
        lines = raw[body_start:].decode("ascii").splitlines()[:vertex["count"]]
        table = np.array([line.split() for line in lines], dtype=np.float64)
        return table[:, [names.index(c) for c in ("red", "green", "blue")]].astype(np.uint8)
    dtype = np.dtype([(n, "<" + t) for n, t in vertex["props"]])
    arr = np.frombuffer(raw, dtype=dtype, count=vertex["count"], offset=body_start)
    return np.stack([arr["red"], arr["green"], arr["blue"]], 1)
