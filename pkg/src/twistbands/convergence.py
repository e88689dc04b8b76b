"""Convergence diagnostics: momentum-truncation error, expansion-order
sweeps, and operator-norm gaps between exact and expanded Hamiltonians."""

import numpy as np

from .errors import ParameterError
from .geometry import VALLEY_K
from .momentum import build_basis
from .spectral import band_structure, exact_family, expanded_family
from .taylor import assemble_expanded_hamiltonian

__all__ = [
    "SweepResult",
    "truncation_error",
    "truncation_error_curve",
    "expansion_error_sweep",
    "taylor_norm_gap",
]


class SweepResult:
    """One convergence sweep: ``errors[i]`` belongs to ``values[i]``."""

    def __init__(self, parameter, values, errors, config):
        self.parameter = str(parameter)
        self.values = list(values)
        self.errors = [float(e) for e in errors]
        self.config = dict(config)
        if len(self.values) != len(self.errors):
            raise ParameterError("values and errors must align")
        if any(e < 0 for e in self.errors):
            raise ParameterError("errors must be nonnegative")


def _split_center(evals):
    """Split an ascending spectrum at zero; both halves ordered outward
    from the center (ascending |value|)."""
    evals = np.asarray(evals)
    neg = evals[evals < 0][::-1]
    pos = evals[evals >= 0]
    return neg, pos


def _center_matched_error(ref, approx, window=None, count=None):
    """Max |ref - approx| over center-matched pairs.

    Pairs the k-th reference eigenvalue on each side of zero with the k-th
    approximate one on the same side.  ``window`` keeps reference
    eigenvalues with |e| <= window; ``count`` keeps the ``count`` reference
    eigenvalues of smallest |e|.  Returns (max abs diff, max |ref| used).
    """
    rneg, rpos = _split_center(ref)
    aneg, apos = _split_center(approx)
    if count is not None:
        take = np.sort(np.abs(np.asarray(ref)))[:count]
        thresh = take[-1] if len(take) else -1.0
        nneg = int(np.sum(np.abs(rneg) <= thresh))
        npos = int(np.sum(np.abs(rpos) <= thresh))
        # resolve boundary ties so exactly ``count`` survive
        while nneg + npos > count:
            if nneg and (not npos or abs(rneg[nneg - 1]) >= abs(rpos[npos - 1])):
                nneg -= 1
            else:
                npos -= 1
        rneg, rpos = rneg[:nneg], rpos[:npos]
    if window is not None:
        rneg = rneg[np.abs(rneg) <= window]
        rpos = rpos[np.abs(rpos) <= window]
    err = 0.0
    scale = 0.0
    for r, a in ((rneg, aneg), (rpos, apos)):
        k = min(len(r), len(a))
        if k:
            err = max(err, float(np.max(np.abs(r[:k] - a[:k]))))
            scale = max(scale, float(np.max(np.abs(r[:k]))))
        if len(r) > k:  # reference levels with no partner count in full
            err = max(err, float(np.max(np.abs(r[k:]))))
            scale = max(scale, float(np.max(np.abs(r[k:]))))
    return err, scale


def truncation_error_curve(model, Lambdas, Sigma, path, Lambda_ref,
                           valley=VALLEY_K, threads=None, max_dim=20000):
    """Err(Lambda, Sigma) for several cutoffs against one shared reference.

    The reference spectrum is computed once at ``Lambda_ref``; each entry is
    the max over path points of the center-matched gap between reference
    eigenvalues within ``Sigma`` of zero and the truncated spectrum.
    """
    if Sigma <= 0:
        raise ParameterError(f"Sigma must be positive, got {Sigma}")
    Lambdas = [float(L) for L in Lambdas]
    if any(L >= Lambda_ref for L in Lambdas):
        raise ParameterError(
            f"every Lambda must lie below Lambda_ref={Lambda_ref}"
        )
    from .geometry import build_moire_geometry

    geom = model.geom
    moire = build_moire_geometry(geom)
    basis_ref = build_basis(geom, moire, Lambda_ref, valley, max_dim=max_dim)
    ref = band_structure(exact_family(model, basis_ref, tau=None), path,
                         threads=threads).energies
    errors = []
    for L in Lambdas:
        basis = build_basis(geom, moire, L, valley, max_dim=max_dim)
        approx = band_structure(exact_family(model, basis, tau=None), path,
                                threads=threads).energies
        err = 0.0
        for i in range(len(ref)):
            e, _ = _center_matched_error(ref[i], approx[i], window=Sigma)
            err = max(err, e)
        errors.append(err)
    return errors


def truncation_error(model, Lambda, Sigma, path, Lambda_ref,
                     valley=VALLEY_K, threads=None, max_dim=20000):
    """Momentum-truncation error Err(Lambda, Sigma) along ``path``.

    Max over path points and reference eigenvalues within ``Sigma`` of zero
    of the gap to the center-matched eigenvalue at cutoff ``Lambda``; the
    reference truncates at ``Lambda_ref`` instead (its spectrum stands in
    for the untruncated one).
    """
    return truncation_error_curve(
        model, [Lambda], Sigma, path, Lambda_ref,
        valley=valley, threads=threads, max_dim=max_dim,
    )[0]


def _central6_error(ref_E, approx_E, floor):
    """Max relative error of the six most central eigenvalues along a path.

    Normalization: the largest |reference| value among the selected levels
    over the whole path, floored at ``floor``.
    """
    errs = []
    scales = []
    for i in range(len(ref_E)):
        e, s = _center_matched_error(ref_E[i], approx_E[i], count=6)
        errs.append(e)
        scales.append(s)
    W = max(max(scales), floor)
    return max(errs) / W


def expansion_error_sweep(model, theta, tau0, axis, values,
                          fixed_orders=None, Lambda=None, path=None,
                          valley=VALLEY_K, threads=None, max_dim=20000):
    """Relative-error sweep of the six central eigenvalues along a path.

    axis="m" or "n": sweeps the intralayer/interlayer expansion order at
    shell count ``tau0``; the reference keeps the same shell count with
    kernels at the orders ``fixed_orders["ref_m"]`` / ``["ref_n"]`` (default
    ``None`` = unexpanded).  axis="tau": sweeps the shell count; the
    reference is the fully coupled Hamiltonian (no shell mask).  The swept
    family's non-swept orders come from ``fixed_orders["m"]`` / ``["n"]``.

    ``values`` must be nonempty ascending.  Errors are normalised by the
    largest reference eigenvalue magnitude among the selected levels over
    the path, floored at 1e-12 of the model's energy scale.
    """
    if abs(theta - model.geom.theta) > 1e-12:
        raise ParameterError(
            f"theta={theta} disagrees with the model geometry "
            f"({model.geom.theta})"
        )
    if axis not in ("m", "n", "tau"):
        raise ParameterError(f"axis must be m, n or tau, got {axis!r}")
    values = list(values)
    if not values or any(b <= a for a, b in zip(values, values[1:])):
        raise ParameterError("values must be nonempty and ascending")
    fixed = dict(fixed_orders or {})
    from .geometry import build_moire_geometry
    from .spectral import bz_path

    geom = model.geom
    moire = build_moire_geometry(geom)
    if Lambda is None:
        Lambda = 6.0 * moire.shortest_g
    if path is None:
        path = bz_path(moire, valley=valley)
    basis = build_basis(geom, moire, Lambda, valley, max_dim=max_dim)

    if axis == "tau":
        ref_fam = expanded_family(
            model, basis, fixed.get("ref_m"), fixed.get("ref_n"), None
        )
    else:
        ref_fam = expanded_family(
            model, basis, fixed.get("ref_m"), fixed.get("ref_n"), tau0
        )
    ref_E = band_structure(ref_fam, path, threads=threads).energies
    floor = 1e-12 * model.energy_scale

    errors = []
    for v in values:
        if axis == "m":
            fam = expanded_family(model, basis, int(v), fixed.get("n"), tau0)
        elif axis == "n":
            fam = expanded_family(model, basis, fixed.get("m"), int(v), tau0)
        else:
            fam = expanded_family(
                model, basis, fixed.get("m"), fixed.get("n"), int(v)
            )
        approx_E = band_structure(fam, path, threads=threads).energies
        errors.append(_central6_error(ref_E, approx_E, floor))

    config = {
        "axis": axis,
        "values": values,
        "tau0": tau0,
        "theta": float(theta),
        "Lambda": float(Lambda),
        "valley": valley,
        "fixed_orders": {k: fixed.get(k) for k in ("m", "n", "ref_m", "ref_n")},
        "path_labels": list(path.labels),
        "path_points": int(len(path)),
        "model_kind": model.kind,
        "energy_scale": model.energy_scale,
    }
    return SweepResult(axis, values, errors, config)


def taylor_norm_gap(model, q, m, n, tau, Lambda, valley=VALLEY_K,
                    max_dim=20000):
    """Operator norm (dense SVD) of H_exact(tau) - H_expanded(m, n, tau)
    at momentum ``q`` with basis cutoff ``Lambda``."""
    from .geometry import build_moire_geometry
    from .momentum import assemble_hamiltonian

    geom = model.geom
    moire = build_moire_geometry(geom)
    basis = build_basis(geom, moire, Lambda, valley, max_dim=max_dim)
    He = assemble_hamiltonian(model, basis, q, tau).matrix
    Hx = assemble_expanded_hamiltonian(model, basis, q, m, n, tau).matrix
    return float(np.linalg.norm(He - Hx, 2))
