"""Shared numerics: feature-matrix validation and I/O, seeded RNG streams,
and the small statistical helpers every other module leans on.

Feature matrices are plain ``float32`` numpy arrays (rows = samples); all
reductions accumulate in float64. Randomness everywhere in the package flows
through :class:`SeededRng`, a Philox (counter-based) generator whose child
streams are keyed by (seed, purpose tag, index) so parallel replications are
independently seeded yet bit-reproducible.
"""

from __future__ import annotations

import hashlib
import io
import struct

import numpy as np
from scipy.special import ndtr, ndtri

FEATURE_MAGIC = b"DCEF"
FEATURE_VERSION = 1


class DegenerateInputError(ValueError):
    """Input is structurally valid but statistically degenerate (e.g. zero variance)."""


class DataError(ValueError):
    """Malformed or inconsistent data (shape mismatches, non-finite entries, bad files)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to produce a finite/convergent result."""


# ---------------------------------------------------------------------------
# Seeded RNG
# ---------------------------------------------------------------------------


class SeededRng:
    """Philox-backed generator with keyed substreams.

    Identical ``(seed, path)`` pairs produce identical streams on every
    platform. Child streams are derived, never shared, so parallel workers
    each own their generator.
    """

    def __init__(self, seed: int, _path: tuple = ()):
        if not (0 <= int(seed) < 2**64):
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self.path = _path
        key = self._derive_key(self.seed, self.path)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    @staticmethod
    def _derive_key(seed: int, path: tuple) -> int:
        h = hashlib.sha256()
        h.update(seed.to_bytes(8, "little"))
        for part in path:
            if isinstance(part, str):
                raw = part.encode("utf-8")
                h.update(b"s" + len(raw).to_bytes(4, "little") + raw)
            else:
                h.update(b"i" + int(part).to_bytes(8, "little", signed=True))
        # Philox keys are 2x64 bits; take the first 128 bits of the digest.
        return int.from_bytes(h.digest()[:16], "little")

    def derive(self, tag: str, *indices: int) -> "SeededRng":
        """Child stream for one purpose (e.g. ``derive("dropout", epoch, batch)``)."""
        return SeededRng(self.seed, self.path + (tag, *indices))

    # Thin passthroughs for the draws the package actually uses.
    def normal(self, size=None, loc=0.0, scale=1.0) -> np.ndarray:
        return self.generator.normal(loc=loc, scale=scale, size=size)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self.generator.uniform(low, high, size=size)

    def random(self, size=None) -> np.ndarray:
        return self.generator.random(size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self.generator.integers(low, high, size=size)


# ---------------------------------------------------------------------------
# Feature matrices
# ---------------------------------------------------------------------------


def as_features(data, *, name: str = "features") -> np.ndarray:
    """Validate and coerce to the canonical feature layout.

    Returns a C-contiguous float32 array of shape (rows, cols) with
    rows, cols >= 1 and all entries finite.
    """
    arr = np.asarray(data)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DataError(f"{name}: expected a 2-D matrix, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DataError(f"{name}: empty matrix {arr.shape}")
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name}: non-finite entries present")
    return arr


def save_features(path, matrix: np.ndarray) -> None:
    """Write the binary feature format: magic 'DCEF', u32 version, u64 rows,
    u64 cols, then row-major little-endian float32 payload."""
    m = as_features(matrix)
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<I", FEATURE_VERSION))
        fh.write(struct.pack("<QQ", m.shape[0], m.shape[1]))
        fh.write(m.astype("<f4", copy=False).tobytes(order="C"))


def load_features(path) -> np.ndarray:
    """Read a feature matrix; accepts the binary format or a headered CSV."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head == FEATURE_MAGIC:
            (version,) = struct.unpack("<I", fh.read(4))
            if version != FEATURE_VERSION:
                raise DataError(f"{path}: unsupported feature-file version {version}")
            rows, cols = struct.unpack("<QQ", fh.read(16))
            payload = fh.read(rows * cols * 4)
            if len(payload) != rows * cols * 4:
                raise DataError(f"{path}: truncated payload")
            m = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
            return as_features(m, name=str(path))
    # Fall through: treat as headered CSV.
    raw = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=np.float64)
    if raw.size == 0:
        raise DataError(f"{path}: no data rows")
    return as_features(np.atleast_2d(raw), name=str(path))


def save_features_csv(path, matrix: np.ndarray, prefix: str = "f") -> None:
    m = as_features(matrix)
    header = ",".join(f"{prefix}{j}" for j in range(m.shape[1]))
    with io.open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in m:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def r2_score(actual, predicted) -> float:
    """Out-of-sample R^2: 1 - SS_res/SS_tot. May be negative.

    Raises DegenerateInputError when ``actual`` has zero variance (the
    diagnostic is undefined there).
    """
    a = np.asarray(actual, dtype=np.float64).ravel()
    p = np.asarray(predicted, dtype=np.float64).ravel()
    if a.shape != p.shape:
        raise DataError(f"r2_score: length mismatch {a.shape[0]} vs {p.shape[0]}")
    if a.size < 2:
        raise DataError("r2_score: need at least 2 observations")
    mean = a.mean()
    ss_tot = float(np.sum((a - mean) ** 2))
    if ss_tot <= 0.0:
        raise DegenerateInputError("r2_score: actual values have zero variance")
    ss_res = float(np.sum((a - p) ** 2))
    return 1.0 - ss_res / ss_tot


def standardize_columns(matrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center and scale each column to mean 0, population std 1.

    Columns with std below 1e-12 are centered only and their std is reported
    as 0. Returns (standardized float32 matrix, means, stds) with the moments
    in float64.
    """
    m = as_features(matrix)
    if m.shape[0] < 2:
        raise DataError("standardize_columns: need at least 2 rows")
    work = m.astype(np.float64)
    means = work.mean(axis=0)
    stds = work.std(axis=0)  # population (divide by N)
    reported = np.where(stds < 1e-12, 0.0, stds)
    scale = np.where(reported == 0.0, 1.0, reported)
    out = (work - means) / scale
    return out.astype(np.float32), means, reported


def normal_quantile(p: float) -> float:
    """Inverse standard-normal CDF."""
    if not (0.0 < p < 1.0):
        raise ValueError(f"normal_quantile: p={p} outside (0,1)")
    return float(ndtri(p))


def normal_interval(tau: float, se: float, level: float) -> tuple[float, float]:
    """Two-sided normal-approximation interval tau +/- z*se."""
    if not (0.0 < level < 1.0):
        raise ValueError(f"normal_interval: level={level} outside (0,1)")
    if se < 0:
        raise ValueError("normal_interval: se must be nonnegative")
    z = normal_quantile(0.5 * (1.0 + level))
    return (tau - z * se, tau + z * se)


def normal_p_value(tau: float, se: float) -> float:
    """Two-sided p-value for tau/se under the standard normal."""
    if se < 0:
        raise ValueError("normal_p_value: se must be nonnegative")
    if se == 0.0:
        return 1.0 if tau == 0.0 else 0.0
    z = abs(tau / se)
    return float(2.0 * (1.0 - ndtr(z)))
