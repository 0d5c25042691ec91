"""Emission matrix binary I/O.

An emission matrix is a T x P array of unnormalized log-scores, one row per
frame, one column per pdf id. On disk: magic bytes ``EMAT``, then three
little-endian uint32 (version=1, T, P), then T*P little-endian float32 in
row-major order. Matrices are upcast to float64 on load; all loss math runs
in double precision.

The same container stores feature matrices (P = feature dim).
"""

import numpy as np

from .errors import ParseError

MAGIC = b"EMAT"
VERSION = 1


def validate_emissions(values: np.ndarray) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"emission matrix must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("emission matrix contains non-finite entries")
    return arr


def write_emat(path, values: np.ndarray) -> None:
    arr = validate_emissions(values)
    t, p = arr.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.array([VERSION, t, p], dtype="<u4").tobytes())
        fh.write(arr.astype("<f4").tobytes())


def read_emat(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ParseError(f"{path}: bad magic bytes {data[:4]!r}")
    header = np.frombuffer(data, dtype="<u4", count=3, offset=4)
    if len(header) < 3:
        raise ParseError(f"{path}: truncated header")
    version, t, p = (int(x) for x in header)
    if version != VERSION:
        raise ParseError(f"{path}: unsupported version {version}")
    expected = 16 + 4 * t * p
    if len(data) != expected:
        raise ParseError(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f4", count=t * p, offset=16)
    if not np.all(np.isfinite(values)):
        raise ParseError(f"{path}: matrix contains non-finite entries")
    return values.reshape(t, p).astype(np.float64)
