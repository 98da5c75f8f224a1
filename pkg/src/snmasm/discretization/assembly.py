"""SAAF finite-element assembly of the multigroup SN transport operators.

For group ``g`` and direction ``Omega_d`` the preconditioning block is the
streaming/collision bilinear form

    tau (Omega.grad u, Omega.grad v) + (tau sigma_t - 1) (Omega.grad v, u)
        + sigma_t (v, u) + <v, u>_outflow

on trilinear hexahedra (2x2x2 Gauss).  Blocks are ordered field-major, so
the full preconditioning matrix is block diagonal.  Scattering, fission and
reflected inflow couple directions and groups; they are applied matrix-free
on top of the assembled blocks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..sparse import DROP_TOL, BlockLayout, CsrMatrix, block_diag
from .mesh import SIDES, SIDE_NORMALS
from .problem import compute_tau

FOUR_PI = 4.0 * np.pi

_GAUSS_1D = (np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]),
             np.array([0.5, 0.5]))


def _local_offsets():
    a = np.arange(8)
    return np.column_stack([a & 1, (a >> 1) & 1, (a >> 2) & 1])


def _basis(points, h):
    """Trilinear shape values ``(q, 8)`` and gradients ``(q, 8, 3)`` at
    reference points in ``[0, 1]^3`` of an element with edge lengths ``h``."""
    off = _local_offsets()
    pts = np.asarray(points, dtype=float)
    f = np.where(off[None, :, :] == 1, pts[:, None, :], 1.0 - pts[:, None, :])
    df = np.where(off[None, :, :] == 1, 1.0, -1.0) / np.asarray(h)[None, None, :]
    phi = f.prod(axis=2)
    grad = np.empty(phi.shape + (3,))
    for k in range(3):
        others = [m for m in range(3) if m != k]
        grad[..., k] = df[..., k] * f[..., others[0]] * f[..., others[1]]
    return phi, grad


def element_matrices(h):
    """Reference element integrals for a box with edge lengths ``h``.

    Returns
    -------
    dict
        ``mass[a, b] = int phi_a phi_b``;
        ``grad_test[k][a, b] = int d_k(phi_a) phi_b``;
        ``stiff[k, l][a, b] = int d_k(phi_a) d_l(phi_b)``;
        ``face[side][a, b] = int_side phi_a phi_b``.
    """
    h = np.asarray(h, dtype=float)
    x, w = _GAUSS_1D
    pts = np.array([[a, b, c] for c in x for b in x for a in x])
    wts = np.array([wa * wb * wc for wc in w for wb in w for wa in w]) * h.prod()
    phi, grad = _basis(pts, h)
    mass = np.einsum("q,qa,qb->ab", wts, phi, phi)
    grad_test = np.einsum("q,qak,qb->kab", wts, grad, phi)
    stiff = np.einsum("q,qak,qbl->klab", wts, grad, grad)
    face = {}
    for side in SIDES:
        axis = "xyz".index(side[0])
        fixed = 0.0 if side[1] == "-" else 1.0
        others = [m for m in range(3) if m != axis]
        fpts, fw = [], []
        for b, wb in zip(x, w):
            for a, wa in zip(x, w):
                p = np.empty(3)
                p[axis] = fixed
                p[others[0]], p[others[1]] = a, b
                fpts.append(p)
                fw.append(wa * wb)
        fphi, _ = _basis(np.array(fpts), h)
        area = h[others[0]] * h[others[1]]
        face[side] = np.einsum("q,qa,qb->ab", np.array(fw) * area, fphi, fphi)
    return {"mass": mass, "grad_test": grad_test, "stiff": stiff, "face": face}


def streaming_matrices(Omega, em):
    """Direction-dependent element matrices ``(Omega.grad v, Omega.grad u)``
    and ``(Omega.grad v, u)``."""
    Omega = np.asarray(Omega, dtype=float)
    K = np.einsum("k,l,klab->ab", Omega, Omega, em["stiff"])
    G = np.einsum("k,kab->ab", Omega, em["grad_test"])
    return K, G


class TransportSystem:
    """Assembled SAAF discretization of a :class:`ProblemSpec`.

    Holds the block-diagonal preconditioning matrix ``P`` and the
    precomputed pieces used to apply the full operators matrix-free.

    Parameters
    ----------
    spec : ProblemSpec
    threads : int, optional
        Worker count for assembling the ``(g, d)`` blocks.
    """

    def __init__(self, spec, threads=1):
        self.spec = spec
        mesh = spec.mesh
        quad = spec.quadrature
        self.n_space = mesh.n_vertices
        self.layout = BlockLayout(spec.n_groups, quad.n_directions, self.n_space)
        self.tau = compute_tau(spec)
        self.sigma_t = spec.element_xs("sigma_t")
        self.em = element_matrices(mesh.spacing)

        conn = mesh.connectivity()
        n = self.n_space
        keys = (conn[:, :, None] * n + conn[:, None, :]).ravel()
        ukeys, self._slot = np.unique(keys, return_inverse=True)
        rows = ukeys // n
        self._pattern_cols = ukeys - rows * n
        self._pattern_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=self._pattern_ptr[1:])
        self._n_el = mesh.n_elements

        # outflow face mass on the shared pattern, per side
        self._face_vals = {}
        self.face = {}
        for side in SIDES:
            els = mesh.boundary_elements(side)
            coef = np.zeros(self._n_el)
            coef[els] = 1.0
            vals = self._scatter([(coef, self.em["face"][side])])
            self._face_vals[side] = vals
            self.face[side] = self._on_pattern(vals)

        # scattering/fission weighting (M + tau G_d), split by material
        self._src = {}
        mat_map = spec.material_map
        for m in spec.material_ids:
            inside = (mat_map == m).astype(float)
            if not inside.any():
                continue
            M_m = self._on_pattern(self._scatter([(inside, self.em["mass"])]))
            G_tau = [[self._on_pattern(self._scatter([(inside * self.tau[:, g],
                                                        self.em["grad_test"][k])]))
                      for k in range(3)] for g in range(spec.n_groups)]
            self._src[m] = (M_m, G_tau)

        self._mirror = {}
        for side in SIDES:
            if spec.bcs[side] == "reflecting":
                normal = SIDE_NORMALS[side]
                mu = quad.directions @ normal
                incoming = np.flatnonzero(mu < 0)
                self._mirror[side] = (incoming, quad.mirror_map(normal)[incoming],
                                      np.abs(mu[incoming]))

        jobs = [(g, d) for g in range(spec.n_groups) for d in range(quad.n_directions)]
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                blocks = list(pool.map(lambda gd: self.block(*gd), jobs))
        else:
            blocks = [self.block(g, d) for g, d in jobs]
        self.P = block_diag(blocks)

    # assembly helpers ----------------------------------------------------

    def _scatter(self, terms):
        w = sum(coef[:, None, None] * mat[None, :, :] for coef, mat in terms)
        return np.bincount(self._slot, weights=w.ravel(), minlength=self._pattern_cols.size)

    def _on_pattern(self, vals):
        A = CsrMatrix(self.n_space, self.n_space, self._pattern_ptr.copy(),
                      self._pattern_cols.copy(), vals)
        if np.any(np.abs(vals) < DROP_TOL):
            A = CsrMatrix.from_coo(A.row_ids, A.col_idx, A.values, A.shape)
        return A

    def block(self, g, d):
        """Streaming/collision block for group ``g`` and direction ``d``."""
        self.layout.block_index(g, d)
        Omega = self.spec.quadrature.directions[d]
        K, G = streaming_matrices(Omega, self.em)
        tau = self.tau[:, g]
        sig = self.sigma_t[:, g]
        vals = self._scatter([(tau, K), (tau * sig - 1.0, G), (sig, self.em["mass"])])
        for side in SIDES:
            flow = float(Omega @ SIDE_NORMALS[side])
            if flow > 0:
                vals = vals + flow * self._face_vals[side]
        return self._on_pattern(vals)

    # matrix-free actions -------------------------------------------------

    def _split(self, psi):
        psi = np.asarray(psi, dtype=float)
        if psi.shape != (self.layout.size,):
            raise ValueError(f"expected a vector of length {self.layout.size}, "
                             f"got {psi.shape}")
        return psi.reshape(self.layout.n_groups, self.layout.n_directions, self.n_space)

    def scalar_flux(self, psi):
        """Scalar flux as a ``(G, n_space)`` array."""
        phi = compute_scalar_flux(psi, self.layout, self.spec.quadrature)
        return phi.reshape(self.layout.n_groups, self.n_space)

    def _weighted_source(self, rates):
        """``sum_m (M_m + tau G_d,m) q_m`` for nodal group sources ``q_m``.

        ``rates`` maps material id to a ``(G, n_space)`` array.
        """
        Omega = self.spec.quadrature.directions
        out = np.zeros((self.layout.n_groups, self.layout.n_directions, self.n_space))
        for m, q in rates.items():
            M_m, G_tau = self._src[m]
            for g in range(self.layout.n_groups):
                if not np.any(q[g]):
                    continue
                mq = M_m @ q[g]
                gq = np.stack([G_tau[g][k] @ q[g] for k in range(3)])
                out[g] += mq[None, :] + Omega @ gq
        return out.ravel()

    def apply_scattering(self, psi):
        self._split(psi)
        phi = self.scalar_flux(psi)
        rates = {m: self.spec.materials[m].sigma_s @ phi / FOUR_PI for m in self._src}
        return self._weighted_source(rates)

    def apply_fission(self, psi):
        self._split(psi)
        phi = self.scalar_flux(psi)
        rates = {}
        for m in self._src:
            mat = self.spec.materials[m]
            rates[m] = np.outer(mat.chi, mat.nu_sigma_f @ phi) / FOUR_PI
        return self._weighted_source(rates)

    def apply_reflection(self, psi):
        """Reflected inflow ``|Omega.n| <v, psi_mirror>`` on reflecting sides."""
        psi3 = self._split(psi)
        out = np.zeros_like(psi3)
        G = self.layout.n_groups
        for side, (incoming, partner, mu) in self._mirror.items():
            F = self.face[side].to_scipy()
            src = psi3[:, partner, :].reshape(-1, self.n_space).T
            res = (F @ src).T.reshape(G, len(incoming), self.n_space)
            out[:, incoming, :] += mu[None, :, None] * res
        return out.ravel()

    def apply_P(self, psi):
        return self.P @ np.asarray(psi, dtype=float)

    def apply_A(self, psi):
        """Full loss operator: streaming, collision, boundary and scattering."""
        return self.apply_P(psi) - self.apply_reflection(psi) - self.apply_scattering(psi)

    def apply_B(self, psi):
        return self.apply_fission(psi)


# functional interface ----------------------------------------------------

def assemble(spec, threads=1):
    return TransportSystem(spec, threads=threads)


def assemble_block(spec, g, d):
    """Preconditioning block for ``(g, d)`` as an ``n_vertices`` square matrix."""
    return TransportSystem(spec).block(g, d)


def assemble_preconditioner(spec, threads=1):
    """Block-diagonal preconditioning matrix and its layout."""
    system = TransportSystem(spec, threads=threads)
    return system.P, system.layout


def compute_scalar_flux(psi, layout, quad):
    """Angular integral ``Phi[g, s] = sum_d w_d psi[g, d, s]``, flattened group-major."""
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (layout.size,):
        raise ValueError(f"expected a vector of length {layout.size}, got {psi.shape}")
    psi3 = psi.reshape(layout.n_groups, layout.n_directions, layout.n_space)
    return np.einsum("d,gds->gs", quad.weights, psi3).ravel()


def apply_scattering(system, psi):
    return system.apply_scattering(psi)


def apply_fission(system, psi):
    return system.apply_fission(psi)


def apply_A(system, psi):
    return system.apply_A(psi)
