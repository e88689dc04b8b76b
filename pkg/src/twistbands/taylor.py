"""Polynomial expansions of the momentum kernels and continuum models.

The truncated Hamiltonian admits a systematic small-momentum approximation:
about the layer Dirac points K~_j the intralayer Bloch matrices are replaced
by their degree-m Taylor polynomials P^m_j, and about K~_1 + G~ (G~ running
over the first-layer images of the hopping shells) the interlayer kernel by
degree-n polynomials U^n_{G~}.  These define

* an *expanded* Hamiltonian on the same plane-wave basis, entrywise

      intralayer:  e^{-i(G-G_M(G)).(tau_s-tau_s')} P^m_j(q - K~_j + G_M(G))
      interlayer:  T_{G,G'} U^n_{G~_1}(q - K~_1 + G_M(G)),
                   G~_1 = G + G' - G_M(G),

* a *continuum* model that forgets the microscopic lattice entirely: two
  intralayer polynomial matrices plus, per moire shell vector G_M0, a phase
  matrix, a momentum shift s = K~_1 - K~_2 - G_M0 and a polynomial U.  Its
  Bloch matrix on a moire plane-wave basis reproduces the expanded
  Hamiltonian entry for entry on matched bases.

The Gershgorin-style remainder bound assembled from per-entry Taylor tails
gives a rigorous ceiling on the operator-norm gap between the exact and
expanded Hamiltonians.
"""

import math

import numpy as np

from .errors import FormatError, ParameterError, ResourceError
from .geometry import (
    SUBLATTICES,
    LayerGeometry,
    build_moire_geometry,
    hopping_shells,
    valley_k_points,
)
from .model import derivative_table, interlayer_fourier_many, intralayer_bloch_many
from .momentum import MomentumHamiltonian, _check_model_basis

__all__ = [
    "PolynomialMatrix",
    "ContinuumModel",
    "MoireBasis",
    "expand_intralayer",
    "expand_interlayer",
    "assemble_expanded_hamiltonian",
    "derive_continuum_model",
    "build_moire_basis",
    "continuum_bloch_matrix",
    "taylor_remainder_bound",
    "write_continuum_model",
    "load_continuum_model",
]


class PolynomialMatrix:
    """2x2-matrix-valued polynomial in the momentum offset from a point.

    ``coeffs`` maps a multi-index beta = (b1, b2) to the 2x2 coefficient;
    evaluation returns  sum_beta c_beta xi1^b1 xi2^b2  for offsets xi.
    """

    def __init__(self, order, coeffs, expansion_point):
        self.order = int(order)
        self.coeffs = {tuple(k): np.asarray(v, dtype=complex) for k, v in coeffs.items()}
        self.expansion_point = np.asarray(expansion_point, dtype=float)
        betas = sorted(self.coeffs)
        self._exps = np.array(betas, dtype=int).reshape(-1, 2)
        self._coef = np.stack([self.coeffs[b] for b in betas]) if betas else np.zeros((0, 2, 2), complex)

    def evaluate_many(self, xi):
        """Evaluate at each offset row of xi; returns (N, 2, 2)."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if len(self._exps) == 0:
            return np.zeros((len(xi), 2, 2), dtype=complex)
        mono = xi[:, 0][:, None] ** self._exps[:, 0][None, :]
        mono = mono * xi[:, 1][:, None] ** self._exps[:, 1][None, :]
        return (mono @ self._coef.reshape(len(self._exps), 4)).reshape(-1, 2, 2)

    def evaluate(self, xi):
        return self.evaluate_many(xi)[0]

    def __repr__(self):
        return (
            f"PolynomialMatrix(order={self.order}, "
            f"point={tuple(self.expansion_point)})"
        )


def _poly_cache(model):
    cache = getattr(model, "_poly_cache", None)
    if cache is None:
        cache = {}
        model._poly_cache = cache
    return cache


def expand_intralayer(model, layer, valley, m):
    """Degree-m Taylor polynomial of the intralayer Bloch matrix about the
    layer Dirac point of ``valley`` (coefficients D^beta / beta!)."""
    if m < 0:
        raise ParameterError("expansion order m must be nonnegative")
    cache = _poly_cache(model)
    ck = ("intra", layer, valley, int(m))
    if ck in cache:
        return cache[ck]
    k1, k2 = valley_k_points(model.geom, valley)
    point = k1 if layer == 1 else k2
    coeffs = {}
    for entry in derivative_table(model, "intralayer", m, point, layer=layer):
        fact = math.factorial(entry.beta[0]) * math.factorial(entry.beta[1])
        coeffs[entry.beta] = entry.value / fact
    cache[ck] = PolynomialMatrix(m, coeffs, point)
    return cache[ck]


def expand_interlayer(model, valley, gtilde, n):
    """Degree-n Taylor polynomial of the interlayer kernel about K~_1 + G~.

    ``gtilde`` is a first-layer reciprocal vector, given either as its
    integer coordinates or as a 2-vector (validated against the lattice).
    """
    if n < 0:
        raise ParameterError("expansion order n must be nonnegative")
    gtilde = np.asarray(gtilde)
    if gtilde.dtype.kind in "iu" and gtilde.shape == (2,):
        nn = gtilde.astype(int)
    else:
        frac = np.linalg.solve(model.geom.B1, gtilde.astype(float))
        nn = np.rint(frac)
        if np.max(np.abs(frac - nn)) > 1e-6:
            raise ParameterError(
                f"{gtilde} is not a layer-1 reciprocal vector"
            )
        nn = nn.astype(int)
    cache = _poly_cache(model)
    ck = ("inter", valley, int(nn[0]), int(nn[1]), int(n))
    if ck in cache:
        return cache[ck]
    gvec = model.geom.recip_vector(1, nn)
    k1, _ = valley_k_points(model.geom, valley)
    point = k1 + gvec
    coeffs = {}
    for entry in derivative_table(model, "interlayer", n, point):
        fact = math.factorial(entry.beta[0]) * math.factorial(entry.beta[1])
        coeffs[entry.beta] = entry.value / fact
    cache[ck] = PolynomialMatrix(n, coeffs, point)
    return cache[ck]


def _intralayer_phases(basis, layer):
    """Per-element phase matrices e^{-i(G - G_M(G)).(tau_s - tau_s')}.

    The residual G - G_M(G) is the *own-layer* reciprocal vector with the
    same integer coordinates as the label.
    """
    geom = basis.geom
    res = basis.n_by_layer[layer] @ geom.recip(layer).T
    taus = np.array([geom.tau[(layer, s)] for s in SUBLATTICES])
    u = np.exp(-1j * (res @ taus.T))  # (N, sigma)
    return u[:, :, None] * u[:, None, :].conj()


def assemble_expanded_hamiltonian(model, basis, q, m, n, tau):
    """Assemble the Taylor-expanded Hamiltonian on ``basis`` at momentum q.

    ``m`` / ``n`` are the intralayer / interlayer polynomial degrees; passing
    ``None`` keeps the corresponding part exact (no polynomial
    approximation).  A finite ``n`` requires a finite shell count ``tau``.
    """
    _check_model_basis(model, basis)
    if n is not None and tau is None:
        raise ParameterError(
            "a finite interlayer expansion order needs a finite tau"
        )
    q = np.asarray(q, dtype=float)
    k1, k2 = basis.k_points
    kpts = {1: k1, 2: k2}
    H = np.zeros((basis.dim, basis.dim), dtype=complex)

    from .momentum import _interlayer_entries, _place_interlayer, _scatter_diag_blocks

    for layer in (1, 2):
        if m is None:
            xi = q[None, :] + basis.G_by_layer[layer]
            blocks = intralayer_bloch_many(model, layer, xi)
        else:
            poly = expand_intralayer(model, layer, basis.valley, m)
            args = q[None, :] - kpts[layer][None, :] + basis.GM_by_layer[layer]
            blocks = _intralayer_phases(basis, layer) * poly.evaluate_many(args)
        _scatter_diag_blocks(H, basis.offsets[layer], blocks)

    if n is None:
        ii, jj, entries = _interlayer_entries(model, basis, q, tau)
        _place_interlayer(H, basis, ii, jj, entries)
    else:
        ii, jj = basis.interlayer_pairs(tau)
        if len(ii):
            keys = basis.n_by_layer[1][ii] + basis.n_by_layer[2][jj]
            args = q[None, :] - k1[None, :] + basis.GM_by_layer[1][ii]
            vals = np.zeros((len(ii), 2, 2), dtype=complex)
            polys = {
                key: expand_interlayer(model, basis.valley, np.asarray(key), n)
                for key in sorted({(int(a), int(b)) for a, b in keys})
            }
            for key, poly in polys.items():
                sel = (keys[:, 0] == key[0]) & (keys[:, 1] == key[1])
                vals[sel] = poly.evaluate_many(args[sel])
            taus1 = np.array([basis.geom.tau[(1, s)] for s in SUBLATTICES])
            taus2 = np.array([basis.geom.tau[(2, s)] for s in SUBLATTICES])
            Grow = basis.G_by_layer[1][ii]
            Gcol = basis.G_by_layer[2][jj]
            col_phase = np.exp(1j * (Gcol @ taus1.T))
            row_phase = np.exp(-1j * (Grow @ taus2.T))
            entries = vals * col_phase[:, :, None] * row_phase[:, None, :]
        else:
            entries = np.zeros((0, 2, 2), dtype=complex)
        _place_interlayer(H, basis, ii, jj, entries)

    label = f"expanded(m={m}, n={n})"
    return MomentumHamiltonian(H, q, basis, tau, family=label)


# ---------------------------------------------------------------------------
# continuum model
# ---------------------------------------------------------------------------


class InterlayerChannel:
    """One moire harmonic of the continuum interlayer coupling."""

    def __init__(self, key, G_M, phase, shift, poly):
        self.key = (int(key[0]), int(key[1]))
        self.G_M = np.asarray(G_M, dtype=float)
        self.phase = np.asarray(phase, dtype=complex)
        self.shift = np.asarray(shift, dtype=float)
        self.poly = poly


class ContinuumModel:
    """Effective moire-periodic continuum model for one valley.

    ``intralayer[j]`` are the P^m_j about K~_j; ``channels`` hold, per shell
    vector G_M0, the sublattice phase matrix, the momentum shift
    K~_1 - K~_2 - G_M0 and the interlayer polynomial U^n.
    """

    def __init__(self, geom, moire, valley, m, n, tau, intralayer, channels):
        self.geom = geom
        self.moire = moire
        self.valley = valley
        self.m = int(m)
        self.n = int(n)
        self.tau = int(tau)
        self.intralayer = intralayer
        self.channels = list(channels)
        self.by_key = {ch.key: ch for ch in self.channels}

    def __repr__(self):
        return (
            f"ContinuumModel(valley={self.valley}, m={self.m}, n={self.n}, "
            f"tau={self.tau}, channels={len(self.channels)})"
        )


def derive_continuum_model(model, geom, moire, valley, m, n, tau):
    """Derive the (m, n, tau) continuum model of ``model`` for ``valley``."""
    if m is None or n is None or tau is None:
        raise ParameterError("continuum derivation needs finite m, n, tau")
    _check = (geom.a == model.geom.a) and (geom.theta == model.geom.theta)
    if not _check:
        raise ParameterError("geometry disagrees with the model's")
    k1, k2 = valley_k_points(geom, valley)
    intralayer = {
        1: expand_intralayer(model, 1, valley, m),
        2: expand_intralayer(model, 2, valley, m),
    }
    taus1 = np.array([geom.tau[(1, s)] for s in SUBLATTICES])
    taus2 = np.array([geom.tau[(2, s)] for s in SUBLATTICES])
    channels = []
    for key in hopping_shells(geom, valley, tau):
        nvec = np.asarray(key, dtype=int)
        G_M = moire.vector(nvec)
        g1 = geom.recip_vector(1, nvec)  # first-layer image of G_M
        g2 = geom.recip_vector(2, nvec)  # second-layer image of G_M
        phase = np.exp(1j * (taus1 @ g1))[:, None] * np.exp(
            -1j * (taus2 @ g2)
        )[None, :]
        shift = k1 - k2 - G_M
        poly = expand_interlayer(model, valley, nvec, n)
        channels.append(InterlayerChannel(key, G_M, phase, shift, poly))
    return ContinuumModel(geom, moire, valley, m, n, tau, intralayer, channels)


class MoireBasis:
    """Moire plane-wave basis: both layers carry the same set of moire
    reciprocal vectors |G_M| < Lambda, ordered like :class:`Basis`."""

    def __init__(self, moire, Lambda, max_dim=20000):
        if Lambda <= 0:
            raise ParameterError(f"Lambda must be positive, got {Lambda}")
        self.moire = moire
        self.Lambda = float(Lambda)
        inv = moire.inv_RM
        reach = float(np.max(np.linalg.norm(inv, axis=1))) * Lambda
        half = int(math.ceil(reach)) + 2
        rng = np.arange(-half, half + 1)
        n1g, n2g = np.meshgrid(rng, rng, indexing="ij")
        grid = np.stack([n1g.ravel(), n2g.ravel()], axis=1)
        radii = np.linalg.norm(grid @ moire.RM_star.T, axis=1)
        keep = radii < Lambda
        pts, r = grid[keep], radii[keep]
        order = np.lexsort((pts[:, 1], pts[:, 0], r))
        self.n = pts[order]
        self.G_M = self.n @ moire.RM_star.T
        self.count = len(self.n)
        self.dim = 4 * self.count
        if self.dim > max_dim:
            raise ResourceError(
                f"moire basis dimension {self.dim} exceeds max_dim={max_dim}"
            )
        self.offsets = {1: 0, 2: 2 * self.count}
        self.elements = [
            (layer, (int(n1), int(n2)), s)
            for layer in (1, 2)
            for n1, n2 in self.n
            for s in SUBLATTICES
        ]

    def __len__(self):
        return self.dim


def build_moire_basis(moire, Lambda, max_dim=20000):
    """Moire plane-wave basis with cutoff ``Lambda`` (see ``build_basis``)."""
    return MoireBasis(moire, Lambda, max_dim)


def continuum_bloch_matrix(cm, basis_M, q):
    """Bloch matrix of the continuum model on a moire basis at momentum q.

    Entries follow the momentum-space convention of the expanded
    Hamiltonian: the intralayer block is
    e^{i g_j(G_M).(tau_s' - tau_s)} P^m_j(q - K~_j +- G_M), diagonal in G_M
    (+ for layer 1, - for layer 2), and the interlayer block couples G_M to
    G_M' through T_{g_2(G_M), g_1(G_M')} U^n_{G_M+G_M'}(q - K~_1 + G_M) for
    G_M + G_M' in the shell set.
    """
    q = np.asarray(q, dtype=float)
    geom = cm.geom
    k1, k2 = valley_k_points(geom, cm.valley)
    taus = {
        1: np.array([geom.tau[(1, s)] for s in SUBLATTICES]),
        2: np.array([geom.tau[(2, s)] for s in SUBLATTICES]),
    }
    H = np.zeros((basis_M.dim, basis_M.dim), dtype=complex)

    layer_imgs = {j: basis_M.n @ geom.recip(j).T for j in (1, 2)}
    from .momentum import _place_interlayer, _scatter_diag_blocks

    for layer, kpt, sign in ((1, k1, 1.0), (2, k2, -1.0)):
        args = q[None, :] - kpt[None, :] + sign * basis_M.G_M
        u = np.exp(-1j * (layer_imgs[layer] @ taus[layer].T))
        phases = u[:, :, None] * u[:, None, :].conj()
        blocks = phases * cm.intralayer[layer].evaluate_many(args)
        _scatter_diag_blocks(H, basis_M.offsets[layer], blocks)

    nn = basis_M.n
    sx = nn[:, 0][:, None] + nn[:, 0][None, :]
    sy = nn[:, 1][:, None] + nn[:, 1][None, :]
    mask = np.zeros((basis_M.count, basis_M.count), dtype=bool)
    for bx, by in cm.by_key:
        mask |= (sx == bx) & (sy == by)
    ii, jj = np.nonzero(mask)
    if len(ii):
        args = q[None, :] - k1[None, :] + basis_M.G_M[ii]
        vals = np.zeros((len(ii), 2, 2), dtype=complex)
        kx, ky = sx[ii, jj], sy[ii, jj]
        for key, ch in cm.by_key.items():
            sel = (kx == key[0]) & (ky == key[1])
            if np.any(sel):
                vals[sel] = ch.poly.evaluate_many(args[sel])
        col_phase = np.exp(1j * (layer_imgs[1][jj] @ taus[1].T))
        row_phase = np.exp(-1j * (layer_imgs[2][ii] @ taus[2].T))
        entries = vals * col_phase[:, :, None] * row_phase[:, None, :]
    else:
        entries = np.zeros((0, 2, 2), dtype=complex)

    class _Shim:
        offsets = basis_M.offsets

    _place_interlayer(H, _Shim, ii, jj, entries)
    label = f"continuum(m={cm.m}, n={cm.n})"
    return MomentumHamiltonian(H, q, basis_M, cm.tau, family=label)


# ---------------------------------------------------------------------------
# remainder bound
# ---------------------------------------------------------------------------


def taylor_remainder_bound(model, basis, q, m, n, tau):
    """Rigorous operator-norm bound on H_exact(tau) - H_expanded(m, n, tau).

    Per-entry Taylor tails (exact hopping-moment sums for the intralayer
    part, closed-form kernel-moment tails for the interlayer part) are
    combined Gershgorin style: max over rows of |diagonal gap| plus the sum
    of off-diagonal gaps.
    """
    _check_model_basis(model, basis)
    q = np.asarray(q, dtype=float)
    k1, k2 = basis.k_points
    kpts = {1: k1, 2: k2}
    cstar = model.cstar

    radii = {}
    intra_bnd = {}
    for layer in (1, 2):
        r = np.linalg.norm(
            q[None, :] - kpts[layer][None, :] + basis.GM_by_layer[layer], axis=1
        )
        radii[layer] = r
        if m is None:
            intra_bnd[layer] = np.zeros((len(r), 2, 2))
        else:
            b = np.empty((len(r), 2, 2))
            for i, si in enumerate(SUBLATTICES):
                for j, sj in enumerate(SUBLATTICES):
                    b[:, i, j] = [
                        cstar
                        * model.intralayer_tail_bound(layer, si, sj, m, rv)
                        for rv in r
                    ]
            intra_bnd[layer] = b

    ii, jj = basis.interlayer_pairs(tau)
    inter_row = np.zeros(basis.counts[1])
    inter_col = np.zeros(basis.counts[2])
    if n is not None and len(ii):
        tails = np.array(
            [
                cstar**2 * model.interlayer.tail_bound(n, rv)
                for rv in radii[1]
            ]
        )
        np.add.at(inter_row, ii, tails[ii])
        np.add.at(inter_col, jj, tails[ii])

    best = 0.0
    for layer in (1, 2):
        b = intra_bnd[layer]
        inter = inter_row if layer == 1 else inter_col
        for i in range(2):
            row = b[:, i, i] + b[:, i, 1 - i] + inter
            best = max(best, float(np.max(row)) if len(row) else 0.0)
    return best


# ---------------------------------------------------------------------------
# continuum model files
# ---------------------------------------------------------------------------


def _fmt_c(z):
    return f"{z.real:.17g} {z.imag:.17g}"


def write_continuum_model(cm, path):
    """Serialise a continuum model (17 significant digits everywhere).

    For (m, n, tau) = (1, 0, 1) the header additionally reports the Dirac
    velocity v, the interlayer strength w and the sublattice phase angle phi
    read off the derived data.
    """
    geom = cm.geom
    lines = [
        "# continuum model",
        f"valley = {cm.valley}",
        f"m = {cm.m}",
        f"n = {cm.n}",
        f"tau = {cm.tau}",
        f"a = {geom.a:.17g}",
        f"theta_deg = {math.degrees(geom.theta):.17g}",
        f"theta_rad = {geom.theta:.17g}",
        f"dK = {cm.moire.dK:.17g}",
    ]
    if (cm.m, cm.n, cm.tau) == (1, 0, 1):
        v = abs(cm.intralayer[1].coeffs[(1, 0)][0, 1])
        w = abs(cm.channels[0].poly.coeffs[(0, 0)][0, 0])
        phi = max(float(np.angle(ch.phase[1, 0])) for ch in cm.channels)
        lines += [
            f"# v = {v:.17g}",
            f"# w = {w:.17g}",
            f"# phi = {phi:.17g}",
        ]
    for layer in (1, 2):
        lines.append("")
        lines.append(f"[intralayer.{layer}]")
        poly = cm.intralayer[layer]
        for beta in sorted(poly.coeffs):
            c = poly.coeffs[beta]
            for i, si in enumerate(SUBLATTICES):
                for j, sj in enumerate(SUBLATTICES):
                    lines.append(
                        f"{beta[0]} {beta[1]} {si} {sj} {_fmt_c(c[i, j])}"
                    )
    for idx, ch in enumerate(cm.channels, start=1):
        lines.append("")
        lines.append(f"[interlayer.{idx}]")
        lines.append(f"GM {ch.key[0]} {ch.key[1]}")
        lines.append(f"shift {ch.shift[0]:.17g} {ch.shift[1]:.17g}")
        for i, si in enumerate(SUBLATTICES):
            for j, sj in enumerate(SUBLATTICES):
                lines.append(f"phase {si} {sj} {_fmt_c(ch.phase[i, j])}")
        for beta in sorted(ch.poly.coeffs):
            c = ch.poly.coeffs[beta]
            for i, si in enumerate(SUBLATTICES):
                for j, sj in enumerate(SUBLATTICES):
                    lines.append(
                        f"coeff {beta[0]} {beta[1]} {si} {sj} {_fmt_c(c[i, j])}"
                    )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def load_continuum_model(path):
    """Load a continuum model written by :func:`write_continuum_model`."""
    header = {}
    intra = {1: {}, 2: {}}
    channels_raw = []
    section = None
    sub = {s: i for i, s in enumerate(SUBLATTICES)}
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1]
                if section.startswith("interlayer."):
                    channels_raw.append(
                        {"phase": np.zeros((2, 2), complex), "coeffs": {}}
                    )
                elif not section.startswith("intralayer."):
                    raise FormatError(f"unknown section [{section}]", path, ln)
                continue
            if section is None:
                key, _, val = line.partition("=")
                header[key.strip()] = val.strip()
                continue
            parts = line.split()
            try:
                if section.startswith("intralayer."):
                    layer = int(section.split(".")[1])
                    b = (int(parts[0]), int(parts[1]))
                    i, j = sub[parts[2]], sub[parts[3]]
                    intra[layer].setdefault(b, np.zeros((2, 2), complex))[
                        i, j
                    ] = complex(float(parts[4]), float(parts[5]))
                elif parts[0] == "GM":
                    channels_raw[-1]["key"] = (int(parts[1]), int(parts[2]))
                elif parts[0] == "shift":
                    channels_raw[-1]["shift"] = np.array(
                        [float(parts[1]), float(parts[2])]
                    )
                elif parts[0] == "phase":
                    i, j = sub[parts[1]], sub[parts[2]]
                    channels_raw[-1]["phase"][i, j] = complex(
                        float(parts[3]), float(parts[4])
                    )
                elif parts[0] == "coeff":
                    b = (int(parts[1]), int(parts[2]))
                    i, j = sub[parts[3]], sub[parts[4]]
                    channels_raw[-1]["coeffs"].setdefault(
                        b, np.zeros((2, 2), complex)
                    )[i, j] = complex(float(parts[5]), float(parts[6]))
                else:
                    raise FormatError(f"bad line {line!r}", path, ln)
            except (ValueError, KeyError, IndexError) as exc:
                raise FormatError(f"bad line: {exc}", path, ln)

    try:
        valley = header["valley"]
        m, n, tau = int(header["m"]), int(header["n"]), int(header["tau"])
        a = float(header["a"])
        theta = (
            float(header["theta_rad"])
            if "theta_rad" in header
            else math.radians(float(header["theta_deg"]))
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad or missing header field: {exc}", path)

    geom = LayerGeometry(a, theta)
    moire = build_moire_geometry(geom)
    k1, _ = valley_k_points(geom, valley)
    intralayer = {
        layer: PolynomialMatrix(
            m, intra[layer], valley_k_points(geom, valley)[layer - 1]
        )
        for layer in (1, 2)
    }
    channels = []
    for raw in channels_raw:
        if "key" not in raw or "shift" not in raw:
            raise FormatError("interlayer channel missing GM or shift", path)
        key = raw["key"]
        G_M = moire.vector(np.asarray(key, dtype=int))
        point = k1 + geom.recip_vector(1, np.asarray(key, dtype=int))
        poly = PolynomialMatrix(n, raw["coeffs"], point)
        channels.append(
            InterlayerChannel(key, G_M, raw["phase"], raw["shift"], poly)
        )
    return ContinuumModel(geom, moire, valley, m, n, tau, intralayer, channels)
