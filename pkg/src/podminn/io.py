"""File formats: MROM matrices, CSV tables and key=value run configs.

MROM layout (little endian)::

    magic        4 bytes  b"MROM"
    version      u32      1
    dtype tag    u32      1 (float64)
    rows         u64
    cols         u64
    payload      rows*cols float64 values, column-major
"""

import csv
import io
import os
import struct
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

MROM_MAGIC = b"MROM"
MROM_VERSION = 1
DTYPE_F64 = 1
_HEADER = struct.Struct("<4sIIQQ")


class FormatError(ValueError):
    """Raised when a file does not match its documented format."""


def atomic_write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_matrix(path, matrix):
    M = np.asarray(matrix, dtype=np.float64)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise ValueError("only 1D or 2D arrays can be stored")
    rows, cols = M.shape
    header = _HEADER.pack(MROM_MAGIC, MROM_VERSION, DTYPE_F64, rows, cols)
    payload = np.asfortranarray(M).astype("<f8").tobytes(order="F")
    atomic_write_bytes(path, header + payload)


def read_matrix_header(fh):
    raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise FormatError("truncated MROM header")
    magic, version, dtype, rows, cols = _HEADER.unpack(raw)
    if magic != MROM_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MROM_MAGIC!r}")
    if version != MROM_VERSION:
        raise FormatError(f"unsupported MROM version {version}")
    if dtype != DTYPE_F64:
        raise FormatError(f"unsupported dtype tag {dtype}")
    return rows, cols


def read_matrix(path):
    with open(path, "rb") as fh:
        rows, cols = read_matrix_header(fh)
        payload = fh.read()
    if len(payload) != 8 * rows * cols:
        raise FormatError(f"payload has {len(payload)} bytes, expected {8 * rows * cols}")
    M = np.frombuffer(payload, dtype="<f8").reshape((rows, cols), order="F")
    return np.array(M, dtype=np.float64)


def format_float(x):
    return f"{float(x):.17g}"


def write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v
                         for v in row])
    atomic_write_bytes(path, buf.getvalue().encode())


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader)


# --- run configuration -----------------------------------------------------

def _int_list(text):
    return [int(t) for t in text.replace(",", " ").split()]


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    """Pipeline configuration, read from a ``key = value`` text file.

    Lines starting with ``#`` are comments. Unknown keys are rejected.
    ``output_dir`` is resolved relative to the config file.
    """

    benchmark: int = 2
    fine_cells: int = 50
    coarse_cells: int = 25
    closure_cells: int = 35
    n_snapshots: int = 1000
    split: list = field(default_factory=lambda: [750, 50, 200])
    n_rb: int = 16
    curves_n_rb: list = field(default_factory=list)
    curves_closure: bool = True
    support_radius: float = 0.6
    closure_gain: float = 0.1
    optimizer: str = "lbfgs"
    learning_rate: float = None
    max_epochs: int = 250
    iterations_per_epoch: int = 1
    closure_max_epochs: int = 30
    closure_iterations_per_epoch: int = 20
    lbfgs_history: int = 10
    early_stop_window: int = 2
    inf_norm_term: bool = False
    seed: int = 0
    output_dir: str = "run"
    base_dir: Path = field(default=Path("."), repr=False)

    _PARSERS = {"split": _int_list, "curves_n_rb": _int_list,
                "curves_closure": _bool, "inf_norm_term": _bool}

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls) if f.name != "base_dir"]

    @classmethod
    def parse(cls, text, base_dir="."):
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise ValueError(f"line {lineno}: expected key = value")
            if key not in types or key == "base_dir":
                raise ValueError(f"line {lineno}: unknown config key {key!r}")
            parse = cls._PARSERS.get(key) or types[key]
            try:
                values[key] = parse(value)
            except ValueError as exc:
                raise ValueError(f"line {lineno}: bad value for {key}: {exc}") from None
        return cls(base_dir=Path(base_dir), **values)

    @classmethod
    def load(cls, path):
        path = Path(path)
        return cls.parse(path.read_text(), base_dir=path.resolve().parent)

    def dumps(self):
        lines = []
        for key in self.keys():
            v = getattr(self, key)
            if v is None:
                continue
            if isinstance(v, list):
                v = " ".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{key} = {v}")
        return "\n".join(lines) + "\n"

    def validate(self):
        """Raise ValueError on inconsistent settings."""
        if self.benchmark not in DEFAULT_SWEEPS:
            raise ValueError(f"benchmark must be 1 or 2, got {self.benchmark}")
        if min(self.fine_cells, self.coarse_cells, self.closure_cells) < 1:
            raise ValueError("mesh sizes must be positive")
        if len(self.split) != 3 or min(self.split) < 0 or sum(self.split) > self.n_snapshots:
            raise ValueError(f"split {self.split} does not fit {self.n_snapshots} snapshots")
        if self.split[0] < 1 or self.n_rb < 1 or min(self.sweep()) < 1:
            raise ValueError("training set size and n_rb values must be positive")
        if min(self.max_epochs, self.iterations_per_epoch, self.closure_max_epochs,
               self.closure_iterations_per_epoch, self.early_stop_window) < 1:
            raise ValueError("epoch counts and the early-stopping window must be positive")
        if self.optimizer not in ("lbfgs", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.support_radius <= 0:
            raise ValueError("support_radius must be positive")
        return self

    @property
    def out(self):
        return (self.base_dir / self.output_dir).resolve()

    def sweep(self):
        if self.curves_n_rb:
            return list(self.curves_n_rb)
        return list(DEFAULT_SWEEPS[self.benchmark])


DEFAULT_SWEEPS = {
    1: (2, 4, 8, 12, 16, 20, 30, 40, 60, 80, 100, 144),
    2: (2, 4, 8, 16, 24, 40, 60, 80),
}
