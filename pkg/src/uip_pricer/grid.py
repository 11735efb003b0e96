"""Rectilinear (t, x, z) grids and scalar fields over them.

Solves step on all N+1 time levels but surfaces retain a decimated subset
(``n_stored`` levels, endpoints always included): CFL-sized time grids can run
to thousands of levels and storing every slice is pointless for downstream
consumers.  Experiment configs keep N a multiple of (n_stored - 1) so probe
times like t = 0.5 land exactly on stored levels.
"""

import io
import json
from dataclasses import dataclass, field

import numpy as np

FORMAT_MAGIC = b"UIPSURF1"


@dataclass(frozen=True)
class Grid:
    """Equispaced grid on [0, T] x [x_min, x_max]^(1 or 2) x [0, z_max]."""

    horizon: float
    n_t: int
    x_bounds: tuple         # ((lo, hi),) or ((lo1, hi1), (lo2, hi2))
    n_x: tuple              # nodes-1 per factor axis
    z_max: float
    n_z: int
    n_stored: int = 41

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.n_t < 2 or self.n_z < 2 or any(n < 2 for n in self.n_x):
            raise ValueError("need at least 2 cells per axis")
        if len(self.x_bounds) != len(self.n_x) or len(self.n_x) not in (1, 2):
            raise ValueError("1 or 2 factor axes with matching bounds required")
        for lo, hi in self.x_bounds:
            if hi <= lo:
                raise ValueError("x_min must be below x_max")
        if self.z_max <= 0:
            raise ValueError("z_max must be positive")
        if self.n_stored < 2:
            raise ValueError("must store at least the terminal and initial slices")

    @property
    def dim(self):
        return len(self.n_x)

    @property
    def dt(self):
        return self.horizon / self.n_t

    @property
    def t_nodes(self):
        return np.linspace(0.0, self.horizon, self.n_t + 1)

    def x_nodes(self, axis=0):
        lo, hi = self.x_bounds[axis]
        return np.linspace(lo, hi, self.n_x[axis] + 1)

    def dx(self, axis=0):
        lo, hi = self.x_bounds[axis]
        return (hi - lo) / self.n_x[axis]

    @property
    def z_nodes(self):
        return np.linspace(0.0, self.z_max, self.n_z + 1)

    @property
    def dz(self):
        return self.z_max / self.n_z

    @property
    def stored_indices(self):
        if self.n_stored >= self.n_t + 1:
            return np.arange(self.n_t + 1)
        idx = np.unique(np.rint(np.linspace(0, self.n_t, self.n_stored)).astype(int))
        return idx

    @property
    def stored_times(self):
        return self.stored_indices * self.dt

    def to_dict(self):
        return {
            "horizon": self.horizon,
            "n_t": self.n_t,
            "x_bounds": [list(b) for b in self.x_bounds],
            "n_x": list(self.n_x),
            "z_max": self.z_max,
            "n_z": self.n_z,
            "n_stored": self.n_stored,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            horizon=d["horizon"],
            n_t=d["n_t"],
            x_bounds=tuple(tuple(b) for b in d["x_bounds"]),
            n_x=tuple(d["n_x"]),
            z_max=d["z_max"],
            n_z=d["n_z"],
            n_stored=d["n_stored"],
        )


@dataclass
class Surface:
    """Scalar field over stored time slices of a Grid.

    ``values`` has shape (n_stored, nx+1, nz+1) for one factor axis and
    (n_stored, nx1+1, nx2+1, nz+1) for two.  ``meta`` records which equation
    produced it and with what (q, gamma).
    """

    grid: Grid
    t_stored: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("surface contains non-finite values")
        expected = (len(self.t_stored),) + tuple(n + 1 for n in self.grid.n_x) \
            + (self.grid.n_z + 1,)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != expected {expected}")

    def slice_at(self, t, atol=1e-9):
        """Stored slice at time t (must be a stored level)."""
        k = int(np.argmin(np.abs(self.t_stored - t)))
        if abs(self.t_stored[k] - t) > atol:
            raise KeyError(
                f"t={t} is not a stored slice; nearest stored time is {self.t_stored[k]:.6g}"
            )
        return self.values[k]

    def value_at(self, t, x, z):
        """Multilinear interpolation in (x, z) on the stored slice at t."""
        sl = self.slice_at(t)
        z_nodes = self.grid.z_nodes
        if self.grid.dim == 1:
            xs = self.grid.x_nodes(0)
            fx = _locate(xs, float(x))
            fz = _locate(z_nodes, float(z))
            return _bilinear(sl, fx, fz)
        x = np.asarray(x, dtype=float)
        f1 = _locate(self.grid.x_nodes(0), float(x[0]))
        f2 = _locate(self.grid.x_nodes(1), float(x[1]))
        fz = _locate(z_nodes, float(z))
        return _trilinear(sl, f1, f2, fz)

    def interior(self):
        """View excluding factor-boundary nodes (all z, all stored t)."""
        if self.grid.dim == 1:
            return self.values[:, 1:-1, :]
        return self.values[:, 1:-1, 1:-1, :]

    # -- serialization ------------------------------------------------------

    def to_csv(self, buf=None, header_lines=(), times=None):
        """Write ``t,x[,x2],z,value`` rows for stored nodes.

        ``times`` restricts the export to a subset of stored slices (full
        surfaces run to millions of rows).  Floats use repr-faithful %.17g so
        identical runs emit identical bytes.
        """
        own = buf is None
        if own:
            buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        if times is None:
            indices = range(len(self.t_stored))
        else:
            indices = [int(np.argmin(np.abs(self.t_stored - t))) for t in times]
            for t, k in zip(times, indices):
                if abs(self.t_stored[k] - t) > 1e-9:
                    raise KeyError(f"t={t} is not a stored slice")
        if self.grid.dim == 1:
            buf.write("t,x,z,value\n")
            xs = self.grid.x_nodes(0)
            zs = self.grid.z_nodes
            for k in indices:
                t = self.t_stored[k]
                for i, x in enumerate(xs):
                    row = self.values[k, i]
                    for j, z in enumerate(zs):
                        buf.write(f"{t:.17g},{x:.17g},{z:.17g},{row[j]:.17g}\n")
        else:
            buf.write("t,x1,x2,z,value\n")
            x1s, x2s = self.grid.x_nodes(0), self.grid.x_nodes(1)
            zs = self.grid.z_nodes
            for k in indices:
                t = self.t_stored[k]
                for i1, x1 in enumerate(x1s):
                    for i2, x2 in enumerate(x2s):
                        row = self.values[k, i1, i2]
                        for j, z in enumerate(zs):
                            buf.write(f"{t:.17g},{x1:.17g},{x2:.17g},{z:.17g},{row[j]:.17g}\n")
        if own:
            return buf.getvalue()
        return None

    def save(self, path):
        """Compact binary cache: magic, json header, raw little-endian float64."""
        header = {
            "grid": self.grid.to_dict(),
            "t_stored": self.t_stored.tolist(),
            "shape": list(self.values.shape),
            "dtype": "<f8",
            "meta": self.meta,
        }
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(FORMAT_MAGIC)
            fh.write(len(blob).to_bytes(8, "little"))
            fh.write(blob)
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic = fh.read(len(FORMAT_MAGIC))
            if magic != FORMAT_MAGIC:
                raise ValueError(f"not a surface cache (magic {magic!r})")
            n = int.from_bytes(fh.read(8), "little")
            header = json.loads(fh.read(n).decode())
            raw = fh.read()
        values = np.frombuffer(raw, dtype="<f8").reshape(header["shape"]).copy()
        return cls(
            grid=Grid.from_dict(header["grid"]),
            t_stored=np.asarray(header["t_stored"], dtype=float),
            values=values,
            meta=header.get("meta", {}),
        )


def _locate(nodes, v):
    """(index, weight) for linear interpolation, clamped to the node range."""
    v = min(max(v, nodes[0]), nodes[-1])
    i = int(np.searchsorted(nodes, v, side="right") - 1)
    i = min(max(i, 0), len(nodes) - 2)
    w = (v - nodes[i]) / (nodes[i + 1] - nodes[i])
    return i, w


def _bilinear(sl, fx, fz):
    i, wx = fx
    j, wz = fz
    return float(
        (1 - wx) * (1 - wz) * sl[i, j]
        + wx * (1 - wz) * sl[i + 1, j]
        + (1 - wx) * wz * sl[i, j + 1]
        + wx * wz * sl[i + 1, j + 1]
    )


def _trilinear(sl, f1, f2, fz):
    i, w1 = f1
    out_lo = _bilinear(sl[i], f2, fz)
    out_hi = _bilinear(sl[i + 1], f2, fz)
    return (1 - w1) * out_lo + w1 * out_hi
