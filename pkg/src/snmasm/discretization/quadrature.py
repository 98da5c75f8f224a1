"""Discrete-ordinates angular quadrature sets on the unit sphere.

Two families are provided: level-symmetric (LQn) sets S2 to S8 and
Gauss-Chebyshev product sets.  All weights sum to ``4*pi``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

FOUR_PI = 4.0 * np.pi

# LQn tables (Lewis & Miller): first cosine and one weight per point class,
# classes keyed by the sorted level-index triple.  Octant weights are
# renormalized to sum exactly to one.
_LEVEL_SYMMETRIC = {
    2: (1.0 / np.sqrt(3.0), {(1, 1, 1): 1.0}),
    4: (0.3500212, {(1, 1, 2): 1.0 / 3.0}),
    6: (0.2666355, {(1, 1, 3): 0.1761263, (1, 2, 2): 0.1572071}),
    8: (0.2182179, {(1, 1, 4): 0.1209877, (1, 2, 3): 0.0907407,
                    (2, 2, 2): 0.0925926}),
}

# Gauss-Chebyshev: total directions -> (polar points per hemisphere,
# azimuthal points per quadrant).
_GAUSS_CHEBYSHEV = {8: (1, 1), 16: (1, 2), 32: (2, 2)}


@dataclass(frozen=True, eq=False)
class AngularQuadrature:
    directions: np.ndarray
    weights: np.ndarray
    kind: str
    order: int

    @property
    def n_directions(self):
        return len(self.weights)

    def mirror_map(self, normal, tol=1e-10):
        """Index of the reflection ``Omega - 2 (Omega . n) n`` for every direction.

        Raises ``ValueError`` if a reflected direction is missing from the set.
        """
        normal = np.asarray(normal, dtype=float)
        refl = self.directions - 2.0 * (self.directions @ normal)[:, None] * normal
        dist = np.linalg.norm(refl[:, None, :] - self.directions[None, :, :], axis=2)
        idx = np.argmin(dist, axis=1)
        if np.any(dist[np.arange(len(idx)), idx] > tol):
            raise ValueError(
                f"quadrature {self.kind} {self.order} is not symmetric about "
                f"the plane with normal {normal.tolist()}")
        return idx


def _octant_level_symmetric(n):
    mu1, classes = _LEVEL_SYMMETRIC[n]
    half = n // 2
    if n == 2:
        mu = np.array([mu1])
    else:
        delta = 2.0 * (1.0 - 3.0 * mu1**2) / (n - 2)
        mu = np.sqrt(mu1**2 + np.arange(half) * delta)
    pts, wts = [], []
    for i, j, k in product(range(1, half + 1), repeat=3):
        if i + j + k != half + 2:
            continue
        pts.append([mu[i - 1], mu[j - 1], mu[k - 1]])
        wts.append(classes[tuple(sorted((i, j, k)))])
    pts = np.array(pts)
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    wts = np.array(wts)
    return pts, wts / wts.sum()


def _level_symmetric(n):
    pts, wts = _octant_level_symmetric(n)
    dirs, weights = [], []
    for signs in product((1.0, -1.0), repeat=3):
        dirs.append(pts * np.array(signs))
        weights.append(wts * (np.pi / 2.0))
    return np.vstack(dirs), np.concatenate(weights)


def _gauss_chebyshev(n_dir):
    n_polar, n_azi = _GAUSS_CHEBYSHEV[n_dir]
    mu, w_mu = np.polynomial.legendre.leggauss(2 * n_polar)
    n_phi = 4 * n_azi
    phi = (np.arange(n_phi) + 0.5) * (2.0 * np.pi / n_phi)
    w_phi = 2.0 * np.pi / n_phi
    dirs, weights = [], []
    for m, wm in zip(mu, w_mu):
        s = np.sqrt(1.0 - m * m)
        for p in phi:
            dirs.append([s * np.cos(p), s * np.sin(p), m])
            weights.append(wm * w_phi)
    dirs = np.array(dirs)
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    return dirs, np.array(weights)


def build_quadrature(kind, order):
    """Build an angular quadrature set.

    Parameters
    ----------
    kind : {"level-symmetric", "gauss-chebyshev"}
    order : int
        SN order (2, 4, 6, 8) for level-symmetric sets, giving 8, 24, 48 and
        80 directions; total direction count (8, 16, 32) for Gauss-Chebyshev.

    Returns
    -------
    AngularQuadrature
    """
    kind = kind.lower().replace("_", "-")
    if kind in ("level-symmetric", "ls"):
        if order not in _LEVEL_SYMMETRIC:
            raise ValueError(f"unsupported level-symmetric order S{order}")
        dirs, w = _level_symmetric(order)
        kind = "level-symmetric"
    elif kind in ("gauss-chebyshev", "gc"):
        if order not in _GAUSS_CHEBYSHEV:
            raise ValueError(f"unsupported Gauss-Chebyshev direction count {order}")
        dirs, w = _gauss_chebyshev(order)
        kind = "gauss-chebyshev"
    else:
        raise ValueError(f"unknown quadrature kind {kind!r}")
    return AngularQuadrature(dirs, w, kind, order)

