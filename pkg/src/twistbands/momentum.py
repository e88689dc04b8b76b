"""Momentum-space bases and truncated Hamiltonian assembly.

Plane-wave labels pair each layer with the *other* layer's reciprocal
lattice: layer-1 degrees of freedom carry G in R_2^*, layer-2 ones carry G in
R_1^*.  With integer coordinates n (so G = 2*pi*A_l^{-T} n on lattice l) the
moire image is

    layer 1:  G_M(G) = +2*pi*Theta n,      layer 2:  G_M(G) = -2*pi*Theta n,

and a basis keeps the sublattice pairs of every G whose moire image lies
within a disc of radius Lambda.  The Bloch Hamiltonian is block diagonal in
the intralayer part, h~_j(q+G), while the interlayer part couples
row (1, n, s) to column (2, n', s') through

    c*^2 T^{ss'}_{G,G'} h12(q+G+G'),   T^{ss'} = e^{i G'.tau_1s} e^{-i G.tau_2s'},

restricted to n + n' in the hopping-shell set B_tau (tau=None disables the
restriction).
"""

import math

import numpy as np

from .errors import ContractError, ParameterError, ResourceError
from .geometry import (
    SUBLATTICES,
    hopping_shells,
    valley_k_points,
)
from .model import interlayer_fourier_many, intralayer_bloch_many

__all__ = [
    "Basis",
    "MomentumHamiltonian",
    "build_basis",
    "assemble_hamiltonian",
    "coupling_strength_eta",
    "moire_shell_magnitudes",
]


class Basis:
    """Truncated plane-wave basis for one valley.

    Elements are ordered layer 1 then layer 2; within a layer by moire-image
    radius, then lexicographic integer coordinates, then sublattice, so two
    builds from identical inputs agree element for element.
    """

    def __init__(self, geom, moire, valley, Lambda, center, n_by_layer):
        self.geom = geom
        self.moire = moire
        self.valley = valley
        self.Lambda = float(Lambda)
        self.center = np.zeros(2) if center is None else np.asarray(center, float)
        self.n_by_layer = n_by_layer
        self.counts = {1: len(n_by_layer[1]), 2: len(n_by_layer[2])}
        self.offsets = {1: 0, 2: 2 * self.counts[1]}
        self.dim = 2 * (self.counts[1] + self.counts[2])
        # lattice hosting the labels of each layer (the other layer's)
        self.label_lattice = {1: 2, 2: 1}
        self.G_by_layer = {}
        self.GM_by_layer = {}
        for layer in (1, 2):
            n = n_by_layer[layer]
            lat = self.label_lattice[layer]
            self.G_by_layer[layer] = n @ geom.recip(lat).T
            sign = 1.0 if layer == 1 else -1.0
            self.GM_by_layer[layer] = sign * (n @ moire.RM_star.T)
        self.elements = []
        for layer in (1, 2):
            for n1, n2 in self.n_by_layer[layer]:
                for s in SUBLATTICES:
                    self.elements.append((layer, (int(n1), int(n2)), s))
        self.k_points = valley_k_points(geom, valley)
        self._shells = {}

    def shell_set(self, tau):
        """Hopping-shell integer pairs B_tau for this basis' valley."""
        if tau not in self._shells:
            self._shells[tau] = hopping_shells(self.geom, self.valley, tau)
        return self._shells[tau]

    def interlayer_pairs(self, tau):
        """Row/column index arrays of interlayer-coupled (layer1, layer2)
        label pairs; all pairs when tau is None."""
        n1 = self.n_by_layer[1]
        n2 = self.n_by_layer[2]
        if tau is None:
            ii, jj = np.meshgrid(
                np.arange(len(n1)), np.arange(len(n2)), indexing="ij"
            )
            return ii.ravel(), jj.ravel()
        mask = np.zeros((len(n1), len(n2)), dtype=bool)
        sx = n1[:, 0][:, None] + n2[:, 0][None, :]
        sy = n1[:, 1][:, None] + n2[:, 1][None, :]
        for bx, by in self.shell_set(tau):
            mask |= (sx == bx) & (sy == by)
        return np.nonzero(mask)

    def __len__(self):
        return self.dim

    def __repr__(self):
        return (
            f"Basis(valley={self.valley}, Lambda={self.Lambda:.6g}, "
            f"dim={self.dim})"
        )


def build_basis(geom, moire, Lambda, valley, center=None, max_dim=20000):
    """Enumerate the plane-wave basis with moire-image cutoff ``Lambda``.

    ``center`` shifts the cutoff disc (used to compare spectra at momenta a
    moire reciprocal vector apart); the default disc is centred at zero.
    Raises :class:`ResourceError` when the dimension would exceed
    ``max_dim``.
    """
    if Lambda <= 0:
        raise ParameterError(f"Lambda must be positive, got {Lambda}")
    c = np.zeros(2) if center is None else np.asarray(center, dtype=float)
    inv = moire.inv_RM
    # any n with |2 pi Theta n -+ c| < Lambda satisfies this box bound
    row_norms = np.linalg.norm(inv, axis=1)
    reach = float(np.max(row_norms)) * (Lambda + np.linalg.norm(c))
    half = int(math.ceil(reach)) + 2
    rng = np.arange(-half, half + 1)
    n1g, n2g = np.meshgrid(rng, rng, indexing="ij")
    grid = np.stack([n1g.ravel(), n2g.ravel()], axis=1)
    images = grid @ moire.RM_star.T

    n_by_layer = {}
    for layer, sign in ((1, 1.0), (2, -1.0)):
        radii = np.linalg.norm(sign * images - c, axis=1)
        keep = radii < Lambda
        pts, r = grid[keep], radii[keep]
        order = np.lexsort((pts[:, 1], pts[:, 0], r))
        n_by_layer[layer] = pts[order]

    dim = 2 * (len(n_by_layer[1]) + len(n_by_layer[2]))
    if dim > max_dim:
        raise ResourceError(
            f"basis dimension {dim} exceeds the cap max_dim={max_dim}"
        )
    if dim == 0:
        raise ParameterError(f"Lambda={Lambda} keeps no basis element")
    return Basis(geom, moire, valley, Lambda, center, n_by_layer)


class MomentumHamiltonian:
    """A concrete Bloch Hamiltonian: matrix + the basis and momentum used."""

    def __init__(self, matrix, q, basis, tau, family="exact"):
        self.matrix = matrix
        self.q = np.asarray(q, dtype=float)
        self.basis = basis
        self.tau = tau
        self.family = family

    @property
    def dimension(self):
        return self.matrix.shape[0]

    def __repr__(self):
        return (
            f"MomentumHamiltonian(family={self.family!r}, dim={self.dimension}, "
            f"q={tuple(self.q)}, tau={self.tau})"
        )


def _check_model_basis(model, basis):
    g1, g2 = model.geom, basis.geom
    if not (
        math.isclose(g1.a, g2.a, rel_tol=1e-12)
        and math.isclose(g1.theta, g2.theta, rel_tol=1e-12, abs_tol=1e-15)
    ):
        raise ParameterError(
            "model and basis were built for different geometries"
        )


def _scatter_diag_blocks(H, offset, blocks):
    n = len(blocks)
    idx = offset // 2 + np.arange(n)
    view = H.reshape(H.shape[0] // 2, 2, H.shape[1] // 2, 2)
    view[idx, :, idx, :] = blocks


def _interlayer_entries(model, basis, q, tau):
    """Row/col label indices and (npair, 2, 2) interlayer entries, with the
    momentum-transfer phases applied (upper-right block, layer 1 x layer 2)."""
    ii, jj = basis.interlayer_pairs(tau)
    if len(ii) == 0:
        return ii, jj, np.zeros((0, 2, 2), dtype=complex)
    Grow = basis.G_by_layer[1]
    Gcol = basis.G_by_layer[2]
    xi = q[None, :] + Grow[ii] + Gcol[jj]
    vals = interlayer_fourier_many(model, xi)
    tau1 = np.array([basis.geom.tau[(1, s)] for s in SUBLATTICES])
    tau2 = np.array([basis.geom.tau[(2, s)] for s in SUBLATTICES])
    col_phase = np.exp(1j * (Gcol[jj] @ tau1.T))  # (npair, sigma)
    row_phase = np.exp(-1j * (Grow[ii] @ tau2.T))  # (npair, sigma')
    return ii, jj, vals * col_phase[:, :, None] * row_phase[:, None, :]


def _place_interlayer(H, basis, ii, jj, entries):
    if len(ii) == 0:
        return
    off2 = basis.offsets[2]
    rows = 2 * ii[:, None, None] + np.arange(2)[None, :, None]
    cols = off2 + 2 * jj[:, None, None] + np.arange(2)[None, None, :]
    H[rows, cols] = entries
    H[off2:, :off2] = H[:off2, off2:].conj().T


def assemble_hamiltonian(model, basis, q, tau=None):
    """Assemble the truncated Bloch Hamiltonian at momentum ``q``.

    ``tau`` restricts the interlayer coupling to the ``tau`` nearest momentum
    shells; ``tau=None`` keeps every coupling.  The returned matrix is
    Hermitian by construction (the lower-left block is the conjugate
    transpose of the assembled upper-right one).
    """
    _check_model_basis(model, basis)
    q = np.asarray(q, dtype=float)
    H = np.zeros((basis.dim, basis.dim), dtype=complex)
    for layer in (1, 2):
        xi = q[None, :] + basis.G_by_layer[layer]
        blocks = intralayer_bloch_many(model, layer, xi)
        _scatter_diag_blocks(H, basis.offsets[layer], blocks)
    ii, jj, entries = _interlayer_entries(model, basis, q, tau)
    _place_interlayer(H, basis, ii, jj, entries)
    return MomentumHamiltonian(H, q, basis, tau, family="exact")


def coupling_strength_eta(model, basis, q, alpha_margin=0.1):
    """Diagnostic coupling strength (2 + alpha) * smax(interlayer block).

    The largest singular value is found by power iteration on B^H B with a
    deterministic start vector, iterated to a 1e-10 relative change.
    """
    if alpha_margin < 0:
        raise ParameterError("alpha_margin must be nonnegative")
    _check_model_basis(model, basis)
    q = np.asarray(q, dtype=float)
    n1, n2 = basis.counts[1], basis.counts[2]
    B = np.zeros((2 * n1, 2 * n2), dtype=complex)
    ii, jj, entries = _interlayer_entries(model, basis, q, None)
    rows = 2 * ii[:, None, None] + np.arange(2)[None, :, None]
    cols = 2 * jj[:, None, None] + np.arange(2)[None, None, :]
    B[rows, cols] = entries

    v = 1.0 + 0.001 * np.arange(B.shape[1])
    v = v.astype(complex) / np.linalg.norm(v)
    smax_old = 0.0
    for _ in range(100000):
        w = B @ v
        u = B.conj().T @ w
        norm_u = np.linalg.norm(u)
        if norm_u == 0.0:
            return 0.0  # zero coupling block
        smax = float(np.linalg.norm(w))  # |Bv| with |v| = 1
        v = u / norm_u
        if abs(smax - smax_old) <= 1e-10 * max(smax, 1e-300):
            return (2.0 + alpha_margin) * smax
        smax_old = smax
    raise ContractError("power iteration on the coupling block did not settle")


def moire_shell_magnitudes(moire, count):
    """The ``count`` smallest distinct nonzero lengths |2*pi*Theta n|.

    Useful for choosing cutoffs aligned with the jumps in basis size.
    """
    if count < 1:
        raise ParameterError("count must be >= 1")
    sigma_min = np.linalg.svd(moire.RM_star, compute_uv=False)[-1]
    half = int(math.ceil(math.sqrt(count))) + 3
    while True:
        rng = np.arange(-half, half + 1)
        n1g, n2g = np.meshgrid(rng, rng, indexing="ij")
        grid = np.stack([n1g.ravel(), n2g.ravel()], axis=1)
        mags = np.sort(np.linalg.norm(grid @ moire.RM_star.T, axis=1))
        mags = mags[mags > 0.0]
        distinct = []
        for m in mags:
            if not distinct or m > distinct[-1] * (1.0 + 1e-9):
                distinct.append(float(m))
            if len(distinct) == count:
                break
        if len(distinct) == count and distinct[-1] < sigma_min * half:
            return distinct
        half *= 2
