"""Matrix and vector file formats shared by dictionaries and datasets.

Text format: a header line ``rows cols`` followed by ``rows * cols`` decimal
floats in row-major order, separated by arbitrary whitespace. Values are
written with 17 significant digits so a write/read cycle is lossless.

Binary format (``.bin``): little-endian uint64 rows, uint64 cols, then
``rows * cols`` little-endian float64 values in row-major order.
"""
import os
import struct

import numpy as np


class MatrixFormatError(ValueError):
    """Raised when a matrix or vector file cannot be parsed."""

    def __init__(self, path, message, line=None, offset=None):
        where = f"{path}"
        if line is not None:
            where += f":{line}"
        if offset is not None:
            where += f" (byte offset {offset})"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line
        self.offset = offset


def _fmt(v):
    return format(float(v), ".17g")


def save_matrix(path, M):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {M.shape}")
    path = os.fspath(path)
    if path.endswith(".bin"):
        with open(path, "wb") as fh:
            fh.write(struct.pack("<QQ", *M.shape))
            fh.write(np.ascontiguousarray(M).astype("<f8").tobytes())
        return
    with open(path, "w") as fh:
        fh.write(f"{M.shape[0]} {M.shape[1]}\n")
        for row in M:
            fh.write(" ".join(_fmt(v) for v in row))
            fh.write("\n")


def _load_bin(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise MatrixFormatError(path, "truncated header", offset=len(raw))
    rows, cols = struct.unpack_from("<QQ", raw, 0)
    need = 16 + 8 * rows * cols
    if len(raw) != need:
        raise MatrixFormatError(
            path, f"expected {need} bytes for {rows}x{cols}, found {len(raw)}",
            offset=min(len(raw), need))
    data = np.frombuffer(raw, dtype="<f8", offset=16, count=rows * cols)
    return data.astype(np.float64).reshape(rows, cols)


def load_matrix(path):
    path = os.fspath(path)
    if path.endswith(".bin"):
        return _load_bin(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    header_idx = None
    for i, line in enumerate(lines):
        if line.strip():
            header_idx = i
            break
    if header_idx is None:
        raise MatrixFormatError(path, "empty file", line=1)
    parts = lines[header_idx].split()
    if len(parts) != 2:
        raise MatrixFormatError(path, "header must be 'rows cols'", line=header_idx + 1)
    try:
        rows, cols = int(parts[0]), int(parts[1])
    except ValueError:
        raise MatrixFormatError(path, "non-integer dimensions in header",
                                line=header_idx + 1) from None
    if rows < 0 or cols < 0:
        raise MatrixFormatError(path, "negative dimensions", line=header_idx + 1)
    values = []
    for lineno in range(header_idx + 1, len(lines)):
        for tok in lines[lineno].split():
            try:
                values.append(float(tok))
            except ValueError:
                raise MatrixFormatError(path, f"cannot parse {tok!r} as a float",
                                        line=lineno + 1) from None
    if len(values) != rows * cols:
        raise MatrixFormatError(
            path, f"expected {rows * cols} values for {rows}x{cols}, found {len(values)}",
            line=len(lines))
    return np.array(values, dtype=np.float64).reshape(rows, cols)


def save_vector(path, v):
    v = np.asarray(v, dtype=np.float64).ravel()
    with open(os.fspath(path), "w") as fh:
        for x in v:
            fh.write(_fmt(x) + "\n")


def load_vector(path):
    path = os.fspath(path)
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tok = line.strip()
            if not tok:
                continue
            try:
                out.append(float(tok))
            except ValueError:
                raise MatrixFormatError(path, f"cannot parse {tok!r} as a float",
                                        line=lineno) from None
    return np.array(out, dtype=np.float64)
