"""Lattice and moire geometry for a twisted honeycomb bilayer.

Conventions (lengths in the unit of ``a``'s unit, momenta reciprocal to it):

* unrotated cell vectors  a1 = (a/2)(1, sqrt(3)),  a2 = (a/2)(-1, sqrt(3)),
  sublattice offsets tau_A = 0, tau_B = (0, a/sqrt(3));
* layer 1 is rotated by -theta/2, layer 2 by +theta/2;
* reciprocal cells R_j^* = 2*pi*A_j^{-T} Z^2, Dirac points K_j, K_j';
* the moire matrix Theta = A_2^{-T} - A_1^{-T} generates the moire
  reciprocal lattice R_M^* = 2*pi*Theta Z^2.

All angles passed to this module are radians; the command-line layer converts
from degrees at the file boundary.
"""

import math

import numpy as np

from .errors import DomainError, ParameterError

__all__ = [
    "LayerGeometry",
    "MoireGeometry",
    "rotation",
    "build_layer_geometry",
    "build_moire_geometry",
    "map_to_moire",
    "map_from_moire",
    "hopping_shells",
    "valley_k_points",
]

SUBLATTICES = ("A", "B")
VALLEY_K = "K"
VALLEY_KPRIME = "Kprime"
_INT_TOL = 1e-6  # residual tolerance when snapping to integer lattice coords


def rotation(angle):
    """2x2 rotation matrix by ``angle`` radians."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


class LayerGeometry:
    """Cell vectors, reciprocal vectors and special points of both layers.

    Attributes
    ----------
    a, theta : float
        Lattice constant and twist angle (radians).
    A, A1, A2 : (2, 2) ndarray
        Unrotated / per-layer cell matrices (columns are cell vectors).
    B, B1, B2 : (2, 2) ndarray
        Matching reciprocal matrices, columns b_i with a_i . b_j = 2 pi d_ij.
    K1, K2, K1p, K2p : (2,) ndarray
        Dirac points of each layer for the two valleys.
    tau : dict
        Sublattice offsets keyed by (layer, sublattice), rotated per layer.
    cstar : float
        sqrt(|Gamma_j^*|), the Bloch normalisation constant (layer
        independent because rotations preserve the cell area).
    """

    def __init__(self, a, theta):
        if a <= 0.0:
            raise ParameterError(f"lattice constant must be positive, got {a}")
        if not (0.0 <= theta < math.pi / 6.0):
            raise ParameterError(
                f"twist angle must lie in [0, pi/6), got {theta} rad"
            )
        self.a = float(a)
        self.theta = float(theta)

        self.A = np.column_stack(
            [(a / 2.0) * np.array([1.0, math.sqrt(3.0)]),
             (a / 2.0) * np.array([-1.0, math.sqrt(3.0)])]
        )
        self.B = 2.0 * math.pi * np.linalg.inv(self.A).T
        self.K = (4.0 * math.pi / (3.0 * a)) * np.array([1.0, 0.0])
        tau_a = np.zeros(2)
        tau_b = np.array([0.0, a / math.sqrt(3.0)])

        r1 = rotation(-theta / 2.0)
        r2 = rotation(+theta / 2.0)
        self.R1, self.R2 = r1, r2
        self.A1, self.A2 = r1 @ self.A, r2 @ self.A
        self.B1, self.B2 = r1 @ self.B, r2 @ self.B
        self.K1, self.K2 = r1 @ self.K, r2 @ self.K
        self.K1p, self.K2p = -self.K1, -self.K2
        self.tau = {
            (1, "A"): r1 @ tau_a, (1, "B"): r1 @ tau_b,
            (2, "A"): r2 @ tau_a, (2, "B"): r2 @ tau_b,
        }

        self.cell_area = abs(np.linalg.det(self.A))
        self.bz_area = (2.0 * math.pi) ** 2 / self.cell_area  # |Gamma_j^*|
        self.cstar = math.sqrt(self.bz_area)

    def cell(self, layer):
        return self.A1 if layer == 1 else self.A2

    def recip(self, layer):
        return self.B1 if layer == 1 else self.B2

    def recip_vector(self, layer, n):
        """2*pi*A_layer^{-T} n for integer coordinates n."""
        return self.recip(layer) @ np.asarray(n, dtype=float)

    def __repr__(self):
        deg = math.degrees(self.theta)
        return f"LayerGeometry(a={self.a:g}, theta={deg:g} deg)"


def build_layer_geometry(a, theta):
    """Construct the per-layer geometry for lattice constant ``a`` and twist
    angle ``theta`` (radians)."""
    return LayerGeometry(a, theta)


class MoireGeometry:
    """Moire reciprocal lattice and Brillouin-zone special points.

    Attributes
    ----------
    Theta : (2, 2) ndarray
        A_2^{-T} - A_1^{-T}.
    RM_star : (2, 2) ndarray
        2*pi*Theta; columns generate the moire reciprocal lattice.
    KM, KMp : (2,) ndarray
        Moire zone corners, the layer Dirac points K_1 and K_2.
    GammaM, MM : (2,) ndarray
        Zone centre adjacent to the KM-KMp edge, and the edge midpoint.
    dK : float
        |K_1 - K_2|.
    cell_area : float
        |Gamma_M^*| = |det(2*pi*Theta)|.
    shortest_g : float
        Length of a shortest nonzero moire reciprocal vector.
    """

    def __init__(self, geom):
        if geom.theta <= 0.0:
            raise ParameterError("moire geometry needs a nonzero twist angle")
        self.geom = geom
        self.Theta = np.linalg.inv(geom.A2).T - np.linalg.inv(geom.A1).T
        self.RM_star = 2.0 * math.pi * self.Theta
        self.inv_RM = np.linalg.inv(self.RM_star)
        self.cell_area = abs(np.linalg.det(self.RM_star))

        self.KM = geom.K1.copy()
        self.KMp = geom.K2.copy()
        self.dK = float(np.linalg.norm(self.KM - self.KMp))
        self.MM = 0.5 * (self.KM + self.KMp)
        # Zone centre: of the two hexagon centres flanking the KM-KMp edge we
        # take the one on the clockwise side; the other differs by a moire
        # reciprocal vector.
        u = (self.KMp - self.KM) / self.dK
        self.GammaM = self.MM + (math.sqrt(3.0) / 2.0) * self.dK * (
            rotation(-math.pi / 2.0) @ u
        )

        norms = [np.linalg.norm(self.RM_star @ np.array([i, j]))
                 for i, j in ((1, 0), (0, 1), (1, 1), (1, -1))]
        self.shortest_g = float(min(norms))

    def vector(self, n):
        """Moire reciprocal vector 2*pi*Theta n for integer coordinates n."""
        return self.RM_star @ np.asarray(n, dtype=float)

    def index(self, G_M):
        """Integer coordinates of a moire reciprocal vector (validated)."""
        frac = self.inv_RM @ np.asarray(G_M, dtype=float)
        n = np.rint(frac)
        if np.max(np.abs(frac - n)) > 1e-9 * max(1.0, np.max(np.abs(frac))):
            raise DomainError(f"{G_M} is not on the moire reciprocal lattice")
        return n.astype(int)

    def __repr__(self):
        return f"MoireGeometry(dK={self.dK:.6g}, |cell|={self.cell_area:.6g})"


def build_moire_geometry(geom):
    """Construct the moire geometry derived from a :class:`LayerGeometry`."""
    return MoireGeometry(geom)


def _integer_coords(G, basis_matrix, what):
    frac = np.linalg.solve(basis_matrix, np.asarray(G, dtype=float))
    n = np.rint(frac)
    if np.max(np.abs(frac - n)) > _INT_TOL:
        raise DomainError(
            f"{np.asarray(G)} is not a {what} vector "
            f"(integer residual {np.max(np.abs(frac - n)):.3e})"
        )
    return n


def map_to_moire(G, layer, geom):
    """Image of a layer reciprocal vector on the moire reciprocal lattice.

    For G on lattice ``layer`` with integer coordinates n this is
    (-1)^layer * 2*pi*Theta * A_layer^T G / (2*pi) = (-1)^layer * 2*pi*Theta n,
    returned exactly on the moire lattice.
    """
    if layer not in (1, 2):
        raise ParameterError(f"layer must be 1 or 2, got {layer}")
    n = _integer_coords(G, geom.recip(layer), f"layer-{layer} reciprocal")
    moire = build_moire_geometry(geom)
    sign = -1.0 if layer == 1 else 1.0
    return sign * (moire.RM_star @ n)


def map_from_moire(G_M, layer, geom):
    """Preimage on layer ``layer`` of a moire reciprocal vector:
    A_layer^{-T} Theta^{-1} G_M, validated to be a lattice vector."""
    if layer not in (1, 2):
        raise ParameterError(f"layer must be 1 or 2, got {layer}")
    moire = build_moire_geometry(geom)
    frac = moire.inv_RM @ np.asarray(G_M, dtype=float)
    n = np.rint(frac)
    if np.max(np.abs(frac - n)) > _INT_TOL:
        raise DomainError(f"{np.asarray(G_M)} is not a moire reciprocal vector")
    return geom.recip(layer) @ n


def valley_k_points(geom, valley):
    """Dirac points (K~_1, K~_2) of the requested valley."""
    if valley == VALLEY_K:
        return geom.K1, geom.K2
    if valley == VALLEY_KPRIME:
        return geom.K1p, geom.K2p
    raise ParameterError(f"valley must be 'K' or 'Kprime', got {valley!r}")


def hopping_shells(geom, valley, tau):
    """Integer coordinates of the ``tau`` nearest interlayer momentum shells.

    Candidates are K~_1 + 2*pi*A_1^{-T} n over integer n; their magnitudes are
    grouped into shells with relative tolerance 1e-9 and the union of the
    ``tau`` smallest distinct shells is returned, sorted by (magnitude, n1,
    n2) so the order is reproducible.

    Returns
    -------
    list of (int, int)
    """
    if not (isinstance(tau, (int, np.integer)) and tau >= 1):
        raise ParameterError(f"tau must be a positive integer, got {tau!r}")
    k1, _ = valley_k_points(geom, valley)
    b1 = geom.B1
    sigma_min = np.linalg.svd(b1, compute_uv=False)[-1]
    kmag = float(np.linalg.norm(k1))

    half = 2 * tau + 4
    while True:
        rng = np.arange(-half, half + 1)
        n1g, n2g = np.meshgrid(rng, rng, indexing="ij")
        pts = np.stack([n1g.ravel(), n2g.ravel()], axis=1)
        vecs = pts @ b1.T + k1
        mags = np.linalg.norm(vecs, axis=1)
        order = np.lexsort((pts[:, 1], pts[:, 0], mags))
        mags, pts = mags[order], pts[order]

        shells = []  # list of (shell magnitude, [row indices])
        for i, m in enumerate(mags):
            if shells and m <= shells[-1][0] * (1.0 + 1e-9) + 1e-300:
                shells[-1][1].append(i)
            else:
                if len(shells) == tau:
                    break
                shells.append((m, [i]))
        # every |n|_inf > half candidate has magnitude >= this bound; the
        # box is large enough once the tau-th shell sits safely below it
        guaranteed = sigma_min * half - kmag
        if len(shells) == tau and shells[-1][0] < guaranteed:
            out = []
            for _, rows in shells:
                out.extend((int(pts[i, 0]), int(pts[i, 1])) for i in rows)
            return out
        half *= 2
