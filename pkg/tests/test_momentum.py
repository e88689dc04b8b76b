import math

import numpy as np
import pytest
import scipy.linalg

import twistbands as tb
from twistbands.spectral import eigenvalues

from oracles import moire_lattice_count


def test_basis_counts_match_brute_force(geom, moire):
    g = moire.shortest_g
    for lam in (1.8 * g, 3.2 * g, 4.7 * g):
        basis = tb.build_basis(geom, moire, lam, tb.VALLEY_K)
        want = moire_lattice_count(moire, lam)
        assert basis.counts[1] == want
        assert basis.counts[2] == want
        assert basis.dim == 4 * want


def test_basis_invariants(small_basis, moire):
    lam = small_basis.Lambda
    for layer in (1, 2):
        r = np.linalg.norm(small_basis.GM_by_layer[layer], axis=1)
        assert np.all(r < lam)
        # ordering: radius, then integer coordinates
        n = small_basis.n_by_layer[layer]
        order = np.lexsort((n[:, 1], n[:, 0], r))
        assert np.array_equal(order, np.arange(len(n)))
    # deterministic rebuild
    again = tb.build_basis(
        small_basis.geom, moire, lam, small_basis.valley
    )
    for layer in (1, 2):
        assert np.array_equal(
            again.n_by_layer[layer], small_basis.n_by_layer[layer]
        )


def test_basis_resource_and_parameter_errors(geom, moire):
    with pytest.raises(tb.ParameterError):
        tb.build_basis(geom, moire, -1.0, tb.VALLEY_K)
    with pytest.raises(tb.ResourceError):
        tb.build_basis(geom, moire, 20.0 * moire.shortest_g, tb.VALLEY_K,
                       max_dim=500)


def test_hamiltonian_is_hermitian(model, small_basis):
    rng = np.random.default_rng(7)
    for tau in (None, 1, 2):
        q = small_basis.moire.KM + rng.uniform(-0.5, 0.5, 2) * small_basis.moire.shortest_g
        H = tb.assemble_hamiltonian(model, small_basis, q, tau=tau).matrix
        dev = np.abs(H - H.conj().T).max()
        assert dev <= 1e-12 * max(1.0, np.abs(H).max())


def test_shell_mask_zeroes_distant_pairs(model, small_basis):
    # with tau=1 only first-shell integer offsets couple the layers
    q = small_basis.moire.KM
    H1 = tb.assemble_hamiltonian(model, small_basis, q, tau=1).matrix
    pairs1 = set(zip(*small_basis.interlayer_pairs(1)))
    pairs_all = set(zip(*small_basis.interlayer_pairs(None)))
    assert pairs1 < pairs_all
    # shell membership: coupled label pairs sum into the first shell
    first = set(small_basis.shell_set(1))
    for ii, jj in pairs1:
        s = small_basis.n_by_layer[1][ii] + small_basis.n_by_layer[2][jj]
        assert tuple(s) in first
    off2 = small_basis.offsets[2]
    n1 = small_basis.counts[1]
    n2 = small_basis.counts[2]
    for ii in range(n1):
        for jj in range(n2):
            blk = H1[2 * ii : 2 * ii + 2, off2 + 2 * jj : off2 + 2 * jj + 2]
            if (ii, jj) not in pairs1:
                assert np.abs(blk).max() == 0.0


def test_decoupled_spectrum_is_union_of_monolayer_energies(geom, moire, small_basis):
    # with the interlayer term switched off every plane wave contributes the
    # pair +-|h(q+G)| of monolayer energies
    dead = tb.simplified_model(theta=geom.theta, scale=1e-300)
    q = moire.KM + np.array([0.03, -0.07])
    H = tb.assemble_hamiltonian(dead, small_basis, q, tau=None).matrix
    got = eigenvalues(H)
    want = []
    for layer in (1, 2):
        k_layer, _ = (
            (geom.K1, None) if layer == 1 else (geom.K2, None)
        )
        pts = q + small_basis.G_by_layer[layer]
        h = tb.intralayer_bloch_many(dead, layer, pts)
        mags = np.abs(h[:, 0, 1])
        want.extend(mags)
        want.extend(-mags)
    assert np.abs(np.sort(got) - np.sort(want)).max() < 1e-12 * dead.energy_scale


def test_moire_periodicity_recentred(model, geom, moire):
    g = moire.shortest_g
    GM = moire.RM_star @ np.array([1, 0])
    q = moire.KM + np.array([0.2, -0.1]) * g
    b0 = tb.build_basis(geom, moire, 5.2 * g, tb.VALLEY_K)
    E0 = eigenvalues(tb.assemble_hamiltonian(model, b0, q, tau=None).matrix)
    mid0 = np.sort(E0[np.argsort(np.abs(E0))[:10]])
    # shifting the cutoff disc along with q relabels the basis exactly
    b1 = tb.build_basis(geom, moire, 5.2 * g, tb.VALLEY_K, center=-GM)
    E1 = eigenvalues(tb.assemble_hamiltonian(model, b1, q + GM, tau=None).matrix)
    mid1 = np.sort(E1[np.argsort(np.abs(E1))[:10]])
    assert np.abs(mid0 - mid1).max() < 1e-9 * model.energy_scale
    # an unshifted disc leaves only boundary-truncation residual
    E2 = eigenvalues(tb.assemble_hamiltonian(model, b0, q + GM, tau=None).matrix)
    mid2 = np.sort(E2[np.argsort(np.abs(E2))[:10]])
    assert np.abs(mid0 - mid2).max() < 1e-6 * model.energy_scale


def test_valley_symmetry(model, geom, moire):
    g = moire.shortest_g
    bK = tb.build_basis(geom, moire, 3.6 * g, tb.VALLEY_K)
    bKp = tb.build_basis(geom, moire, 3.6 * g, tb.VALLEY_KPRIME)
    rng = np.random.default_rng(9)
    for _ in range(3):
        dq = rng.uniform(-0.4, 0.4, 2) * g
        EK = eigenvalues(
            tb.assemble_hamiltonian(model, bK, moire.KM + dq, tau=None).matrix
        )
        EKp = eigenvalues(
            tb.assemble_hamiltonian(model, bKp, -moire.KM - dq, tau=None).matrix
        )
        assert np.abs(np.sort(EK) - np.sort(EKp)).max() < 1e-9 * model.energy_scale


def test_coupling_strength_matches_dense_svd(model, small_basis):
    q = small_basis.moire.KM
    eta = tb.coupling_strength_eta(model, small_basis, q, alpha_margin=0.1)
    H = tb.assemble_hamiltonian(model, small_basis, q, tau=None).matrix
    off2 = small_basis.offsets[2]
    block = H[:off2, off2:]
    smax = scipy.linalg.svdvals(block)[0]
    assert abs(eta - 2.1 * smax) < 1e-8 * max(smax, 1e-12)


def test_shell_magnitudes_monotone(moire):
    mags = tb.moire_shell_magnitudes(moire, 12)
    assert len(mags) == 12
    assert all(b > a * (1 + 1e-12) for a, b in zip(mags, mags[1:]))
    # first moire shell is the shortest reciprocal vector
    assert abs(mags[0] - moire.shortest_g) < 1e-12
