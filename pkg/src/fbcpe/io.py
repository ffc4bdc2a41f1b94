"""Run configuration and the on-disk formats (diagnostics CSV, binary snapshots)."""

from __future__ import annotations

import dataclasses
import math
import struct
from pathlib import Path

import numpy as np

from .diagnostics import CSV_COLUMNS, DiagRecord
from .grid import Grid, Params, Variant, build_grid
from .state import State
from .stepper import Scheme, StepConfig, n_steps_for

SNAPSHOT_MAGIC = b"CPE1"
_HEADER = struct.Struct("<4s4Id")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


# ---------------------------------------------------------------------------
# configuration


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_int(text):
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


RUN_KEYS = {
    "dim_h": _parse_int, "nx": _parse_int, "ny": _parse_int, "nz": _parse_int,
    "gamma": float, "g": float, "mu": float, "lambda": float,
    "variant": str, "eps": float, "seed": _parse_int, "zero_momentum": _parse_bool,
    "dt": float, "scheme": str, "t_end": float, "diag_every": _parse_int,
    "snapshot_every": _parse_int, "out_dir": str,
}
VERIFY_KEYS = {**RUN_KEYS, "check": str, "beta": float}
CHECKS = ("hardy", "poincare", "equivalence", "all")


@dataclasses.dataclass(frozen=True)
class RunConfig:
    dim_h: int = 1
    nx: int = 64
    ny: int = 64
    nz: int = 32
    gamma: float = 2.0
    g: float = 1.0
    mu: float = 1.0
    lam: float = 1.0
    variant: str = "conservative"
    eps: float = 1e-3
    seed: int = 0
    zero_momentum: bool = False
    dt: float = 1e-3
    scheme: str = "ImexMidpoint"
    t_end: float = 1.0
    diag_every: int = 10
    snapshot_every: int = 0
    out_dir: str = "out"
    check: str = "all"
    beta: float = 1.0

    # -- builders that translate library errors into key-specific ones --

    def params(self) -> Params:
        try:
            variant = Variant(self.variant.strip().lower())
        except ValueError:
            raise ConfigError("variant", f"expected conservative or nonconservative, got {self.variant!r}") from None
        if not self.gamma > 1:
            raise ConfigError("gamma", f"must exceed 1, got {self.gamma}")
        if not self.mu > 0:
            raise ConfigError("mu", f"must be positive, got {self.mu}")
        if not self.mu + self.lam > 0:
            raise ConfigError("lambda", f"mu + lambda must be positive, got {self.mu + self.lam}")
        if not self.g > 0:
            raise ConfigError("g", f"must be positive, got {self.g}")
        return Params(gamma=self.gamma, g=self.g, mu=self.mu, lam=self.lam, variant=variant)

    def grid(self) -> Grid:
        if self.dim_h not in (1, 2):
            raise ConfigError("dim_h", f"must be 1 or 2, got {self.dim_h}")
        for key in ("nx",) + (("ny",) if self.dim_h == 2 else ()):
            n = getattr(self, key)
            if n < 4 or n & (n - 1):
                raise ConfigError(key, f"must be a power of two >= 4, got {n}")
        if self.nz < 2:
            raise ConfigError("nz", f"must be at least 2, got {self.nz}")
        return build_grid(self.dim_h, self.nx, self.ny, self.nz, self.params().alpha)

    def step_config(self) -> StepConfig:
        try:
            scheme = Scheme.parse(self.scheme)
        except ValueError as exc:
            raise ConfigError("scheme", str(exc)) from None
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("dt", f"must be positive, got {self.dt}")
        return StepConfig(dt=self.dt, scheme=scheme)

    def n_steps(self) -> int:
        if not self.t_end >= 0:
            raise ConfigError("t_end", f"must be non-negative, got {self.t_end}")
        try:
            return n_steps_for(self.t_end, self.dt)
        except ValueError as exc:
            raise ConfigError("t_end", str(exc)) from None

    def validate(self):
        self.params()
        self.grid()
        self.step_config()
        self.n_steps()
        if self.eps < 0:
            raise ConfigError("eps", f"must be non-negative, got {self.eps}")
        if self.diag_every < 1:
            raise ConfigError("diag_every", f"must be at least 1, got {self.diag_every}")
        if self.snapshot_every < 0:
            raise ConfigError("snapshot_every", f"must be non-negative, got {self.snapshot_every}")
        if self.check.strip().lower() not in CHECKS:
            raise ConfigError("check", f"expected one of {', '.join(CHECKS)}, got {self.check!r}")
        return self


def parse_config(text: str, allowed=RUN_KEYS) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line.split()[0], f"line {lineno} is not of the form key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in allowed:
            raise ConfigError(key, f"unknown key (line {lineno})")
        if key in values:
            raise ConfigError(key, f"given twice (line {lineno})")
        try:
            values[key] = allowed[key](value)
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
    if "lambda" in values:
        values["lam"] = values.pop("lambda")
    return RunConfig(**values).validate()


def load_config(path, allowed=RUN_KEYS) -> RunConfig:
    return parse_config(Path(path).read_text(), allowed)


# ---------------------------------------------------------------------------
# diagnostics CSV


def format_row(values) -> str:
    return ",".join("%.17g" % float(x) for x in values)


class CsvWriter:
    """Time-series writer: fixed header, 17 significant digits, LF endings."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="", encoding="ascii")
        self._fh.write(",".join(CSV_COLUMNS) + "\n")

    def write(self, rec: DiagRecord):
        self._fh.write(format_row(rec.row()) + "\n")

    def flush(self):
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv(path):
    """Return ``(header, rows)`` with rows as a float array."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    rows = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    return header, rows.reshape(-1, len(header))


# ---------------------------------------------------------------------------
# binary snapshots


@dataclasses.dataclass(frozen=True, eq=False)
class Snapshot:
    dim_h: int
    nx: int
    ny: int
    nz: int
    t: float
    Z: np.ndarray   # (nx, ny)
    v: np.ndarray   # (dim_h, nz, nx, ny), solver layout
    W: np.ndarray   # (nz, nx, ny), solver layout


def encode_snapshot(t: float, Z: np.ndarray, v: np.ndarray, W: np.ndarray) -> bytes:
    """Serialize fields given in solver layout.

    Volume fields are written row-major over ``(x, y, z)``.
    """
    dim_h, nz, nx, ny = v.shape
    parts = [_HEADER.pack(SNAPSHOT_MAGIC, dim_h, nx, ny, nz, float(t)),
             np.ascontiguousarray(Z, dtype="<f8").tobytes()]
    for c in range(dim_h):
        parts.append(np.ascontiguousarray(v[c].transpose(1, 2, 0), dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(W.transpose(1, 2, 0), dtype="<f8").tobytes())
    return b"".join(parts)


def decode_snapshot(data: bytes) -> Snapshot:
    if len(data) < _HEADER.size or data[:4] != SNAPSHOT_MAGIC:
        raise ValueError("not a snapshot file (bad magic)")
    _, dim_h, nx, ny, nz, t = _HEADER.unpack_from(data)
    nh, nv = nx * ny, nx * ny * nz
    expected = _HEADER.size + 8 * (nh + (dim_h + 1) * nv)
    if len(data) != expected:
        raise ValueError(f"snapshot size {len(data)} does not match header ({expected})")
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    Z = flat[:nh].reshape(nx, ny)
    vols = flat[nh:].reshape(dim_h + 1, nx, ny, nz).transpose(0, 3, 1, 2)
    return Snapshot(dim_h, nx, ny, nz, t, Z, np.ascontiguousarray(vols[:dim_h]),
                    np.ascontiguousarray(vols[dim_h]))


def write_snapshot(path, state: State, W: np.ndarray):
    Path(path).write_bytes(encode_snapshot(state.t, state.Z, state.v, W))


def read_snapshot(path) -> Snapshot:
    return decode_snapshot(Path(path).read_bytes())
