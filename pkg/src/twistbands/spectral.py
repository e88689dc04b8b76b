"""Spectra: eigenvalues, band structures along BZ paths, density of states."""

import concurrent.futures as _futures

import numpy as np
import scipy.linalg

from .errors import ContractError, ParameterError
from .geometry import VALLEY_K, VALLEY_KPRIME, valley_k_points
from .momentum import assemble_hamiltonian, build_basis
from .taylor import (
    assemble_expanded_hamiltonian,
    build_moire_basis,
    continuum_bloch_matrix,
)

__all__ = [
    "eigenvalues",
    "HamiltonianFamily",
    "BandPath",
    "bz_path",
    "band_structure",
    "BandData",
    "density_of_states",
    "DosCurve",
    "flat_band_stats",
    "write_band_csv",
    "write_dos_csv",
]

_HERMITICITY_TOL = 1e-10


def eigenvalues(H, check_residual=False):
    """Ascending eigenvalues of a Hermitian matrix.

    Raises :class:`ContractError` if the matrix fails the Hermiticity check
    (max-norm deviation above 1e-10 relative to the matrix scale).  With
    ``check_residual`` the residuals ||H v - e v|| of five representative
    eigenpairs are verified against 1e-9 * ||H||.
    """
    H = np.asarray(H)
    scale = max(1.0, float(np.max(np.abs(H))) if H.size else 0.0)
    dev = float(np.max(np.abs(H - H.conj().T))) if H.size else 0.0
    if dev > _HERMITICITY_TOL * scale:
        raise ContractError(
            f"matrix is not Hermitian: max deviation {dev:.3e}"
        )
    if not check_residual:
        return scipy.linalg.eigvalsh(H)
    evals, vecs = scipy.linalg.eigh(H)
    nrm = float(np.linalg.norm(H, 2))
    idx = np.unique(np.linspace(0, len(evals) - 1, 5).astype(int))
    for i in idx:
        res = float(np.linalg.norm(H @ vecs[:, i] - evals[i] * vecs[:, i]))
        if res > 1e-9 * max(nrm, 1e-300):
            raise ContractError(
                f"eigenpair residual {res:.3e} exceeds 1e-9 * ||H||"
            )
    return evals


class HamiltonianFamily:
    """A q -> H(q) map of one of the three kinds.

    kind="exact"      truncated Hamiltonian on a plane-wave basis,
    kind="expanded"   same basis, Taylor-expanded kernels (orders m, n),
    kind="continuum"  derived continuum model on a moire basis.
    """

    def __init__(self, kind, model=None, basis=None, tau=None, m=None,
                 n=None, continuum=None, moire_basis=None):
        if kind not in ("exact", "expanded", "continuum"):
            raise ParameterError(f"unknown family kind {kind!r}")
        self.kind = kind
        self.model = model
        self.basis = basis
        self.tau = tau
        self.m = m
        self.n = n
        self.continuum = continuum
        self.moire_basis = moire_basis
        if kind == "continuum":
            if continuum is None or moire_basis is None:
                raise ParameterError(
                    "continuum family needs continuum= and moire_basis="
                )
            self.dimension = moire_basis.dim
        else:
            if model is None or basis is None:
                raise ParameterError(f"{kind} family needs model= and basis=")
            self.dimension = basis.dim

    def at(self, q):
        """Hamiltonian of the family at momentum ``q``."""
        if self.kind == "exact":
            return assemble_hamiltonian(self.model, self.basis, q, self.tau)
        if self.kind == "expanded":
            return assemble_expanded_hamiltonian(
                self.model, self.basis, q, self.m, self.n, self.tau
            )
        return continuum_bloch_matrix(self.continuum, self.moire_basis, q)

    def eigenvalues(self, q):
        return eigenvalues(self.at(q).matrix)

    def describe(self):
        if self.kind == "continuum":
            cm = self.continuum
            return (
                f"continuum(m={cm.m}, n={cm.n}, tau={cm.tau}, "
                f"dim={self.dimension})"
            )
        return (
            f"{self.kind}(m={self.m}, n={self.n}, tau={self.tau}, "
            f"dim={self.dimension})"
        )


def exact_family(model, basis, tau=None):
    return HamiltonianFamily("exact", model=model, basis=basis, tau=tau)


def expanded_family(model, basis, m, n, tau):
    return HamiltonianFamily(
        "expanded", model=model, basis=basis, m=m, n=n, tau=tau
    )


def continuum_family(continuum, moire_basis):
    return HamiltonianFamily(
        "continuum", continuum=continuum, moire_basis=moire_basis
    )


class BandPath:
    """Piecewise-linear momentum path with cumulative arc length."""

    def __init__(self, points, s, labels, label_positions):
        self.points = np.asarray(points, dtype=float)
        self.s = np.asarray(s, dtype=float)
        self.labels = list(labels)
        self.label_positions = np.asarray(label_positions, dtype=float)

    def __len__(self):
        return len(self.points)


_PATH_POINTS = {
    "K_M": "KM",
    "Kprime_M": "KMp",
    "K'_M": "KMp",
    "Gamma_M": "GammaM",
    "M_M": "MM",
}


def bz_path(moire, labels=("K_M", "Gamma_M", "M_M", "K_M"),
            samples_per_segment=30, valley=VALLEY_K):
    """Sampled path through the listed moire BZ corner points.

    Each segment carries ``samples_per_segment`` points (the closing vertex
    of a segment coincides with the opener of the next; the final vertex is
    appended), so ``samples_per_segment=1`` yields just the vertices.  For
    the K' valley the path vertices are mirrored (q -> -q), matching that
    valley's own BZ corners.
    """
    if samples_per_segment < 1:
        raise ParameterError("samples_per_segment must be at least 1")
    verts = []
    for lab in labels:
        attr = _PATH_POINTS.get(lab)
        if attr is None:
            raise ParameterError(
                f"unknown path label {lab!r}; choose from "
                f"{sorted(_PATH_POINTS)}"
            )
        verts.append(np.asarray(getattr(moire, attr), dtype=float))
    if len(verts) < 2:
        raise ParameterError("a path needs at least two labels")
    if valley == VALLEY_KPRIME:
        verts = [-v for v in verts]
    elif valley != VALLEY_K:
        raise ParameterError(f"unknown valley {valley!r}")
    pts = []
    for a, b in zip(verts[:-1], verts[1:]):
        seg = np.linspace(a, b, samples_per_segment + 1)[:-1]
        pts.extend(seg)
    pts.append(verts[-1])
    pts = np.asarray(pts)
    s = np.concatenate(
        [[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))]
    )
    label_positions = [0.0]
    acc = 0.0
    for a, b in zip(verts[:-1], verts[1:]):
        acc += float(np.linalg.norm(b - a))
        label_positions.append(acc)
    return BandPath(pts, s, labels, label_positions)


class BandData:
    """Band energies along a path: ``energies[i, j]`` is the j-th eigenvalue
    at the i-th path point."""

    def __init__(self, path, energies, provenance=""):
        self.path = path
        self.energies = np.asarray(energies, dtype=float)
        self.provenance = provenance


def _map_over(func, items, threads):
    if threads and threads > 1:
        with _futures.ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(func, items))
    return [func(x) for x in items]


def band_structure(family, path, threads=None):
    """Eigenvalues of ``family`` at every point of ``path``.

    Expanded and continuum families are local approximations around the
    valley momentum; a warning is issued if the path strays outside the
    first moire cell around it.
    """
    if family.kind != "exact":
        if family.kind == "continuum":
            geom = family.continuum.geom
            moire = family.continuum.moire
            valley = family.continuum.valley
        else:
            geom = family.basis.geom
            moire = family.basis.moire
            valley = family.basis.valley
        k1, _ = valley_k_points(geom, valley)
        reach = float(
            np.max(np.linalg.norm(path.points - k1[None, :], axis=1))
        )
        if reach > moire.shortest_g:
            import warnings

            warnings.warn(
                f"path reaches {reach:.3g} from the valley momentum, "
                f"outside the first moire cell "
                f"({moire.shortest_g:.3g}); the {family.kind} family is "
                "a local approximation there",
                stacklevel=2,
            )
    rows = _map_over(family.eigenvalues, list(path.points), threads)
    return BandData(path, np.array(rows), provenance=family.describe())


def flat_band_stats(band_data):
    """Width of the two bands nearest zero and the gaps that flank them.

    Width is max minus min over the path of the two central bands.  The
    group gap is measured at the path point where the central pair is most
    degenerate (its Dirac vertex, K_M on the standard path): there the
    central group is unambiguous, whereas remote bands disperse through the
    group's energy range near Gamma_M (equal-strength interlayer tunnelling
    leaves no global gap), so the range separations are only reported as
    diagnostics.
    """
    E = band_data.energies
    nbands = E.shape[1]
    # the two bands framing zero are the middle two sorted columns
    lo = nbands // 2 - 1
    flat = E[:, lo:lo + 2]
    width = float(flat.max() - flat.min())
    vertex = int(np.argmin(flat[:, 1] - flat[:, 0]))
    below = (
        float(flat[vertex, 0] - E[vertex, lo - 1]) if lo >= 1 else np.inf
    )
    above = (
        float(E[vertex, lo + 2] - flat[vertex, 1])
        if lo + 2 < nbands
        else np.inf
    )
    gap = min(below, above)
    range_below = float(flat.min() - E[:, lo - 1].max()) if lo >= 1 else np.inf
    range_above = (
        float(E[:, lo + 2].min() - flat.max())
        if lo + 2 < nbands
        else np.inf
    )
    return {
        "width": width,
        "vertex_index": vertex,
        "gap_below": below,
        "gap_above": above,
        "gap": gap,
        "ratio": width / gap if gap > 0 else np.inf,
        "range_gap_below": range_below,
        "range_gap_above": range_above,
    }


class DosCurve:
    def __init__(self, energies, dos, epsilon, N, valleys, nu_star):
        self.energies = np.asarray(energies, dtype=float)
        self.dos = np.asarray(dos, dtype=float)
        self.epsilon = float(epsilon)
        self.N = int(N)
        self.valleys = tuple(valleys)
        self.nu_star = float(nu_star)

    def integral(self):
        return float(np.trapezoid(self.dos, self.energies))


def density_of_states(families, E_grid, epsilon, N, threads=None):
    """Gaussian-smeared density of states per unit area.

    ``families`` maps valley name -> HamiltonianFamily (one or both
    valleys).  The moire BZ is sampled on an N x N half-offset grid of
    momenta  K~_1(valley) + RM_star @ ((i+1/2)/N, (j+1/2)/N),  each
    eigenvalue contributing a normalised Gaussian of width ``epsilon``; the
    prefactor 1/(4 |BZ|) counts one electron per monolayer cell per spin.
    """
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    if N < 4:
        raise ParameterError(f"N must be at least 4, got {N}")
    E_grid = np.asarray(E_grid, dtype=float)
    dos = np.zeros_like(E_grid)
    gauss_norm = 1.0 / (epsilon * np.sqrt(np.pi))
    nu_star = 0.0
    for valley, family in families.items():
        if family.kind == "continuum":
            geom = family.continuum.geom
            moire = family.continuum.moire
        else:
            geom = family.basis.geom
            moire = family.basis.moire
        nu_star = 1.0 / (4.0 * geom.bz_area)
        k1, _ = valley_k_points(geom, valley)
        frac = (np.arange(N) + 0.5) / N
        f1, f2 = np.meshgrid(frac, frac, indexing="ij")
        qs = k1[None, :] + np.stack(
            [f1.ravel(), f2.ravel()], axis=1
        ) @ moire.RM_star.T
        weight = nu_star * moire.cell_area / (N * N)
        rows = _map_over(family.eigenvalues, list(qs), threads)
        for evs in rows:
            z = (E_grid[:, None] - evs[None, :]) / epsilon
            dos += weight * gauss_norm * np.exp(-(z**2)).sum(axis=1)
    return DosCurve(E_grid, dos, epsilon, N, tuple(families), nu_star)


def _fmt(x):
    return f"{x:.12g}"


def write_band_csv(band_data, path):
    """Write bands as CSV rows  s, qx, qy, E1..En  (12 significant digits)."""
    E = band_data.energies
    with open(path, "w") as fh:
        header = ["s", "qx", "qy"] + [f"E{i + 1}" for i in range(E.shape[1])]
        fh.write(",".join(header) + "\n")
        for i in range(len(E)):
            row = [
                _fmt(band_data.path.s[i]),
                _fmt(band_data.path.points[i][0]),
                _fmt(band_data.path.points[i][1]),
            ] + [_fmt(e) for e in E[i]]
            fh.write(",".join(row) + "\n")
    return path


def write_dos_csv(curve, path):
    """Write the density of states as CSV rows  E, D."""
    with open(path, "w") as fh:
        fh.write("E,D\n")
        for e, d in zip(curve.energies, curve.dos):
            fh.write(f"{_fmt(e)},{_fmt(d)}\n")
    return path
