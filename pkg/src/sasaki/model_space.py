"""
Heisenberg model space H^{2n+1}.

Points are stored as flat arrays ``[x_1..x_n, y_1..y_n, z]`` in exponential
coordinates. The left-invariant frame is

    X_i = d/dx_i - (y_i/2) d/dz,   Y_i = d/dy_i + (x_i/2) d/dz,   T = d/dz,

so that ``[X_i, Y_i] = T``. Haar measure is Lebesgue measure in these
coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelSpace",
    "BallVolume",
    "point",
    "covector",
    "dimension_of",
    "homogeneous_norm",
]


def point(x, z=0.0) -> np.ndarray:
    """Build a point from its horizontal coordinates ``x`` (length 2n) and height ``z``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size % 2:
        raise ValueError("horizontal part must have even length 2n")
    out = np.append(x, float(z))
    if not np.all(np.isfinite(out)):
        raise ValueError("point coordinates must be finite")
    return out


def covector(px, pz=0.0) -> np.ndarray:
    """Build a covector ``(px, pz)``; same layout as :func:`point`."""
    return point(px, pz)


def dimension_of(p) -> int:
    """CR dimension n of a point or covector array (last axis has length 2n+1)."""
    size = np.shape(p)[-1]
    if size < 3 or size % 2 == 0:
        raise ValueError(f"expected last axis of length 2n+1 with n >= 1, got {size}")
    return (size - 1) // 2


def _split(p):
    p = np.asarray(p, dtype=float)
    n = dimension_of(p)
    return p[..., :n], p[..., n:2 * n], p[..., 2 * n]


def _omega(a, b):
    ax, ay, _ = _split(a)
    bx, by, _ = _split(b)
    return np.sum(ax * by - ay * bx, axis=-1)


def homogeneous_norm(p) -> np.ndarray:
    """Homogeneous gauge ``max(|x|, |z|^{1/2})``; degree one under dilations."""
    p = np.asarray(p, dtype=float)
    h = np.linalg.norm(p[..., :-1], axis=-1)
    return np.maximum(h, np.sqrt(np.abs(p[..., -1])))


@dataclass(frozen=True)
class BallVolume:
    """Monte Carlo estimate of the volume of the sub-Riemannian ball B(0, r)."""

    radius: float
    estimate: float
    stderr: float
    samples: int
    seed: int


@dataclass(frozen=True)
class ModelSpace:
    """The Heisenberg group of CR dimension ``n`` (real dimension 2n+1)."""

    n: int = 1

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("CR dimension n must be an integer >= 1")

    @property
    def Q(self) -> int:
        """Homogeneous dimension 2n+2."""
        return 2 * self.n + 2

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    @property
    def origin(self) -> np.ndarray:
        return np.zeros(self.dim)

    def _check(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.dim:
            raise ValueError(f"point has {p.shape[-1]} coordinates, expected {self.dim}")
        return p

    def multiply(self, p, q) -> np.ndarray:
        """Group law ``(a, c)(b, c') = (a + b, c + c' + omega(a, b)/2)``."""
        p, q = self._check(p), self._check(q)
        out = p + q
        out[..., -1] = p[..., -1] + q[..., -1] + 0.5 * _omega(p, q)
        return out

    def inverse(self, p) -> np.ndarray:
        return -self._check(p)

    def dilate(self, lam: float, p) -> np.ndarray:
        """Anisotropic dilation ``(x, z) -> (lam x, lam^2 z)``."""
        if not lam > 0:
            raise ValueError("dilation factor must be positive")
        p = self._check(p).copy()
        p[..., :-1] *= lam
        p[..., -1] *= lam * lam
        return p

    def frame_at(self, p) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate expressions of the frame at ``p``.

        Returns
        -------
        horizontal : ndarray, shape (2n, 2n+1)
            Rows ``X_1..X_n, Y_1..Y_n``.
        reeb : ndarray, shape (2n+1,)
        """
        x, y, _ = _split(self._check(p))
        n = self.n
        horizontal = np.zeros((2 * n, self.dim))
        for i in range(n):
            horizontal[i, i] = 1.0
            horizontal[i, -1] = -0.5 * y[i]
            horizontal[n + i, n + i] = 1.0
            horizontal[n + i, -1] = 0.5 * x[i]
        reeb = np.zeros(self.dim)
        reeb[-1] = 1.0
        return horizontal, reeb

    def ball_volume(self, r: float, samples: int = 200_000, seed: int = 0) -> BallVolume:
        """Rejection Monte Carlo estimate of the Lebesgue volume of B(0, r).

        Samples uniformly from ``[-r, r]^{2n} x [-r^2/pi, r^2/pi]`` and counts
        points whose sub-Riemannian distance to the origin is at most ``r``.
        The box contains the ball: the horizontal projection of a curve of
        length r stays within distance r, and its height is the signed area
        cut off by a closed curve of perimeter at most 2r.
        """
        from .geodesics import gauge_distance

        if not r > 0:
            raise ValueError("radius must be positive")
        if samples < 10_000:
            raise ValueError("ball_volume needs at least 1e4 samples")
        rng = np.random.default_rng(seed)
        u = rng.uniform(-1.0, 1.0, size=(samples, self.dim))
        u[:, :-1] *= r
        u[:, -1] *= r * r / np.pi
        box = (2.0 * r) ** (2 * self.n) * 2.0 * r * r / np.pi
        dist = gauge_distance(np.linalg.norm(u[:, :-1], axis=1), u[:, -1])
        hit = dist <= r
        frac = hit.mean()
        stderr = box * np.sqrt(frac * (1.0 - frac) / samples)
        return BallVolume(radius=float(r), estimate=float(box * frac), stderr=float(stderr),
                          samples=int(samples), seed=int(seed))
