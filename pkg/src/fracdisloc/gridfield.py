"""Uniform 2-D cell grids carrying scalar, vector or 2x2-matrix samples."""

import csv
import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

_HEADER = struct.Struct("<3d3q")


@dataclass
class GridField:
    """Cell-centred samples on a uniform grid.

    Cell ``(j, i)`` (row ``j`` along y, column ``i`` along x) has centre
    ``origin + ((i + 1/2) h, (j + 1/2) h)``.  ``values`` has shape
    ``(ny, nx) + component_shape`` with component shape ``()``, ``(2,)`` or
    ``(2, 2)``.  ``mask`` marks the active cells; ``None`` means all.
    """

    origin: tuple
    h: float
    values: np.ndarray
    mask: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        self.origin = (float(self.origin[0]), float(self.origin[1]))
        self.h = float(self.h)
        self.values = np.asarray(self.values, dtype=float)
        if self.h <= 0:
            raise ValueError("cell size must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("GridField values must be finite")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.values.shape[:2]:
                raise ValueError("mask shape does not match grid")

    @property
    def ny(self):
        return self.values.shape[0]

    @property
    def nx(self):
        return self.values.shape[1]

    @property
    def component_shape(self):
        return self.values.shape[2:]

    @property
    def arity(self):
        return int(np.prod(self.component_shape, dtype=int))

    def active(self):
        if self.mask is None:
            return np.ones((self.ny, self.nx), dtype=bool)
        return self.mask

    def centers(self):
        """Arrays ``X, Y`` of cell centres, shape ``(ny, nx)``."""
        return cell_centers(self.origin, self.h, self.nx, self.ny)

    def like(self, values, mask="same"):
        if isinstance(mask, str):
            mask = self.mask
        return GridField(self.origin, self.h, values, mask)

    def integral(self):
        """Midpoint-rule integral over the active cells."""
        v = np.where(self.active().reshape(self.active().shape + (1,) * len(self.component_shape)),
                     self.values, 0.0)
        return v.sum(axis=(0, 1)) * self.h ** 2

    # -- serialization -------------------------------------------------
    def save(self, path):
        """Binary layout: header (origin_x, origin_y, h, nx, ny, arity) then
        row-major little-endian float64 values; JSON sidecar ``path + '.json'``."""
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(self.origin[0], self.origin[1], self.h,
                                  self.nx, self.ny, self.arity))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        meta = {
            "origin": list(self.origin),
            "h": self.h,
            "nx": self.nx,
            "ny": self.ny,
            "arity": self.arity,
            "component_shape": list(self.component_shape),
            "mask": None if self.mask is None else self.mask.astype(int).ravel().tolist(),
        }
        with open(str(path) + ".json", "w") as fh:
            json.dump(meta, fh)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            ox, oy, h, nx, ny, arity = _HEADER.unpack(fh.read(_HEADER.size))
            data = np.frombuffer(fh.read(), dtype="<f8").copy()
        shape = (ny, nx)
        mask = None
        try:
            with open(str(path) + ".json") as fh:
                meta = json.load(fh)
            shape = shape + tuple(meta["component_shape"])
            if meta.get("mask") is not None:
                mask = np.array(meta["mask"], dtype=bool).reshape(ny, nx)
        except FileNotFoundError:
            shape = shape + ((arity,) if arity > 1 else ())
        return cls((ox, oy), h, data.reshape(shape), mask)

    def to_csv(self, path):
        """One row per active cell: x, y, then the flattened components."""
        X, Y = self.centers()
        act = self.active()
        flat = self.values.reshape(self.ny, self.nx, -1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y"] + [f"v{k}" for k in range(flat.shape[2])])
            for j, i in zip(*np.nonzero(act)):
                w.writerow([repr(X[j, i]), repr(Y[j, i])] + [repr(v) for v in flat[j, i]])


def cell_centers(origin, h, nx, ny):
    x = origin[0] + (np.arange(nx) + 0.5) * h
    y = origin[1] + (np.arange(ny) + 0.5) * h
    return np.meshgrid(x, y)


def square_grid(center, half_width, n):
    """Origin and cell size of an ``n x n`` grid covering a centred square."""
    h = 2.0 * half_width / n
    return (center[0] - half_width, center[1] - half_width), h


def sample(fn, origin, h, nx, ny, mask=None):
    """Point-sample ``fn(X, Y)`` at cell centres into a GridField."""
    X, Y = cell_centers(origin, h, nx, ny)
    return GridField(origin, h, fn(X, Y), mask)
