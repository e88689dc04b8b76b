"""End-to-end acceptance checks.

Each test exercises one release criterion end to end, prints a single
``ACCEPTANCE <n> PASS/FAIL`` line (visible even under captured output), and
enforces both the numerical tolerances and a wall-clock budget.
"""

import math
import time

import numpy as np

import twistbands as tb
from conftest import build_wannier_model
from oracles import moire_shell_magnitudes, richardson_derivative_batched

THETA = math.radians(1.1)
T_HOP = 2.7


def _report(capsys, n, checks, elapsed, budget):
    ok = all(checks.values()) and elapsed < budget
    with capsys.disabled():
        print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'} "
              f"({elapsed:.1f}s / budget {budget:.0f}s)")
    failed = {k: v for k, v in checks.items() if not v}
    assert not failed, f"criterion {n} failed checks: {sorted(failed)}"
    assert elapsed < budget, f"criterion {n} exceeded {budget}s: {elapsed:.1f}s"


def _mid_above(moire, x):
    """Cutoff halfway between the shell just above x*g and its predecessor."""
    g = moire.shortest_g
    rel = moire_shell_magnitudes(moire, 9) / g
    i = np.searchsorted(rel, x, side="right")
    return 0.5 * (rel[i - 1] + rel[i]) * g


def test_acceptance_1_bm_recovery(capsys):
    t0 = time.perf_counter()
    geom = tb.LayerGeometry(2.46, THETA)
    moire = tb.MoireGeometry(geom)
    model = tb.simplified_model(theta=THETA)
    cm = tb.derive_continuum_model(model, geom, moire, tb.VALLEY_K, 1, 0, 1)

    checks = {}
    v = math.sqrt(3.0) / 2.0 * geom.a * T_HOP
    phi = 2.0 * math.pi / 3.0
    T = {
        1: np.array([[1, 1], [1, 1]], complex),
        2: np.array([[1, np.exp(-1j * phi)], [np.exp(1j * phi), 1]]),
        3: np.array([[1, np.exp(1j * phi)], [np.exp(-1j * phi), 1]]),
    }
    dK = moire.dK
    s = {
        1: dK * np.array([0.0, -1.0]),
        2: dK * np.array([math.sqrt(3.0) / 2.0, 0.5]),
        3: dK * np.array([-math.sqrt(3.0) / 2.0, 0.5]),
    }
    keymap = {(0, 0): 1, (0, 1): 2, (-1, 0): 3}
    checks["three channels"] = set(keymap) == {ch.key for ch in cm.channels}
    k1, k2 = tb.valley_k_points(geom, tb.VALLEY_K)
    w = cm.by_key[(0, 0)].poly.coeffs[(0, 0)][0, 0] * cm.by_key[(0, 0)].phase[0, 0]
    for ch in cm.channels:
        j = keymap[ch.key]
        U = ch.poly.coeffs[(0, 0)] * ch.phase
        checks[f"tunnelling matrix {j}"] = (
            np.abs(U / w - T[j]).max() < 1e-12
        )
        GM = 2.0 * math.pi * moire.Theta @ np.array(ch.key, float)
        checks[f"shift {j} lattice form"] = (
            np.abs(ch.shift - (k1 - k2 - GM)).max() < 1e-12 * dK
        )
        checks[f"shift {j} aligned form"] = (
            np.abs(ch.shift - s[j]).max() < 1e-12 * dK
        )
    for layer, sign in ((1, -1.0), (2, 1.0)):
        Mx = cm.intralayer[layer].coeffs[(1, 0)]
        My = cm.intralayer[layer].coeffs[(0, 1)]
        checks[f"fermi velocity L{layer}"] = abs(abs(Mx[0, 1]) - v) < 1e-12 * v
        checks[f"linear term offdiag L{layer}"] = (
            abs(Mx[0, 0]) + abs(Mx[1, 1]) + abs(My[0, 0]) + abs(My[1, 1])
            < 1e-12 * v
        )
        # sigma rotated by -theta/2 on layer 1, +theta/2 on layer 2
        checks[f"sigma rotation L{layer}"] = (
            abs(np.angle(Mx[0, 1]) - sign * geom.theta / 2.0) < 1e-12
            and abs(My[0, 1] / Mx[0, 1] + 1j) < 1e-12
        )
    _report(capsys, 1, checks, time.perf_counter() - t0, 1.0)


def test_acceptance_2_fold_unfold(capsys):
    t0 = time.perf_counter()
    geom = tb.LayerGeometry(2.46, THETA)
    moire = tb.MoireGeometry(geom)
    model = tb.simplified_model(theta=THETA)
    g = moire.shortest_g
    rng = np.random.default_rng(5)
    checks = {}
    for (m, n, tau) in ((1, 0, 1), (2, 1, 2)):
        cm = tb.derive_continuum_model(model, geom, moire, tb.VALLEY_K, m, n, tau)
        mb = tb.build_moire_basis(moire, 3.4 * g)
        basis = tb.build_basis(geom, moire, 3.4 * g, tb.VALLEY_K)
        worst = 0.0
        for _ in range(20):
            q = moire.KM + rng.uniform(-0.5, 0.5, 2) @ moire.RM_star.T
            folded = tb.eigenvalues(tb.continuum_bloch_matrix(cm, mb, q).matrix)
            expanded = tb.eigenvalues(
                tb.assemble_expanded_hamiltonian(model, basis, q, m, n, tau).matrix
            )
            worst = max(worst, float(np.abs(folded - expanded).max()))
        checks[f"spectra match {(m, n, tau)}"] = worst <= 1e-9 * T_HOP
    _report(capsys, 2, checks, time.perf_counter() - t0, 10.0)


def test_acceptance_3_taylor_decay(capsys):
    t0 = time.perf_counter()
    geom = tb.LayerGeometry(2.46, THETA)
    moire = tb.MoireGeometry(geom)
    model = tb.simplified_model(theta=THETA)
    Lam = 4.7 * moire.shortest_g
    basis = tb.build_basis(geom, moire, Lam, tb.VALLEY_K)
    ks = np.arange(7)
    gaps = [tb.taylor_norm_gap(model, moire.KM, k, k, 2, Lam) for k in ks]
    bounds = [
        tb.taylor_remainder_bound(model, basis, moire.KM, k, k, 2) for k in ks
    ]
    slope, intercept = np.polyfit(ks, np.log(gaps), 1)
    resid = np.log(gaps) - (slope * ks + intercept)
    r2 = 1.0 - np.sum(resid**2) / np.sum(
        (np.log(gaps) - np.mean(np.log(gaps))) ** 2
    )
    checks = {
        "negative slope": slope < 0,
        "log-linear fit": r2 > 0.9,
        "gap within assembled bound": all(
            gap <= bound for gap, bound in zip(gaps, bounds)
        ),
    }
    _report(capsys, 3, checks, time.perf_counter() - t0, 60.0)


def test_acceptance_4_truncation_convergence(capsys):
    # The windowed eigenvalue error is resolved in the weak-coupling
    # diagnostic regime (interlayer scale 2.0), where the per-shell decay
    # reaches the 1e-6*t floor inside a desk-scale basis; at the flat-band
    # coupling the same curve decays too slowly per shell to cross 1e-6*t
    # below dimension ~10^4.
    t0 = time.perf_counter()
    geom = tb.LayerGeometry(2.46, THETA)
    moire = tb.MoireGeometry(geom)
    weak = tb.simplified_model(theta=THETA, scale=2.0)
    g = moire.shortest_g
    Sigma = 0.5 * weak.energy_scale
    path = tb.bz_path(moire, samples_per_segment=4)
    aligned = [_mid_above(moire, x) for x in (4.7, 5.05, 5.6, 6.01, 6.93)]
    # the last two cutoffs sit between the same pair of shells
    flat_pair = [5.65 * g, 5.90 * g]
    Lref = _mid_above(moire, 7.05)
    curve = tb.truncation_error_curve(
        weak, aligned + flat_pair, Sigma, path, Lref, threads=4
    )
    shell_curve, pair = curve[:5], curve[5:]
    checks = {
        "nonincreasing over shells": all(
            b <= a for a, b in zip(shell_curve, shell_curve[1:])
        ),
        "drops below 1e-6 t": shell_curve[-1] < 1e-6 * T_HOP,
        "reference is converged": shell_curve[-1] < 1e-8 * T_HOP,
        "piecewise constant between shells": pair[0] == pair[1],
    }
    _report(capsys, 4, checks, time.perf_counter() - t0, 300.0)


def test_acceptance_5_flat_bands(capsys):
    t0 = time.perf_counter()
    geom = tb.LayerGeometry(2.46, THETA)
    moire = tb.MoireGeometry(geom)
    model = tb.simplified_model(theta=THETA)
    basis = tb.build_basis(geom, moire, 4.2 * moire.shortest_g, tb.VALLEY_K)
    exact = tb.exact_family(model, basis, tau=None)
    path = tb.bz_path(moire, samples_per_segment=10)
    bd = tb.band_structure(exact, path, threads=4)
    stats = tb.flat_band_stats(bd)

    lo = exact.dimension // 2 - 3
    ref = bd.energies[:, lo:lo + 6]
    scale = np.abs(ref).max()
    errs = {}
    for orders in ((1, 0, 1), (2, 1, 6)):
        fam = tb.expanded_family(model, basis, *orders)
        approx = tb.band_structure(fam, path, threads=4)
        errs[orders] = np.abs(approx.energies[:, lo:lo + 6] - ref).max() / scale
    checks = {
        "flat group below 5% of gap": stats["ratio"] < 0.05,
        "higher orders at least 10x closer": (
            errs[(2, 1, 6)] <= 0.1 * errs[(1, 0, 1)]
        ),
    }
    _report(capsys, 5, checks, time.perf_counter() - t0, 300.0)


def test_acceptance_6_pairing_bound(capsys):
    t0 = time.perf_counter()
    geom = tb.LayerGeometry(2.46, THETA)
    moire = tb.MoireGeometry(geom)
    model = tb.simplified_model(theta=THETA)
    basis = tb.build_basis(geom, moire, 2.6 * moire.shortest_g, tb.VALLEY_K)
    rng = np.random.default_rng(77)
    bounded = True
    for _ in range(50):
        q = moire.KM + rng.uniform(-0.5, 0.5, 2) @ moire.RM_star.T
        m = int(rng.integers(0, 5))
        n = int(rng.integers(0, 5))
        tau = int(rng.choice([1, 2, 3, 6]))
        He = tb.assemble_hamiltonian(model, basis, q, tau).matrix
        Hx = tb.assemble_expanded_hamiltonian(model, basis, q, m, n, tau).matrix
        eig_gap = float(np.abs(tb.eigenvalues(He) - tb.eigenvalues(Hx)).max())
        op_gap = float(np.linalg.norm(He - Hx, 2))
        bounded &= eig_gap <= op_gap + 1e-10
    checks = {"sorted-eigenvalue gap within operator-norm gap": bounded}
    _report(capsys, 6, checks, time.perf_counter() - t0, 60.0)


def test_acceptance_7_dos_contracts(capsys):
    t0 = time.perf_counter()
    geom = tb.LayerGeometry(2.46, THETA)
    moire = tb.MoireGeometry(geom)
    model = tb.simplified_model(theta=THETA)
    g = moire.shortest_g
    famK = tb.exact_family(
        model, tb.build_basis(geom, moire, 3.2 * g, tb.VALLEY_K), tau=None
    )
    famKp = tb.exact_family(
        model, tb.build_basis(geom, moire, 3.2 * g, tb.VALLEY_KPRIME), tau=None
    )
    # grid wide enough to hold the whole spectrum plus the Gaussian tails
    E = np.linspace(-12.0, 12.0, 1201)
    eps = 0.35
    both = tb.density_of_states(
        {tb.VALLEY_K: famK, tb.VALLEY_KPRIME: famKp}, E, eps, 12, threads=4
    )
    expected = 2 * famK.dimension * both.nu_star * moire.cell_area
    single_K = tb.density_of_states({tb.VALLEY_K: famK}, E, eps, 12, threads=4)
    single_Kp = tb.density_of_states(
        {tb.VALLEY_KPRIME: famKp}, E, eps, 12, threads=4
    )
    linearity = np.abs(both.dos - single_K.dos - single_Kp.dos).max()
    doubled = tb.density_of_states(
        {tb.VALLEY_K: famK, tb.VALLEY_KPRIME: famKp}, E, eps, 24, threads=4
    )
    checks = {
        "mass equals state count": (
            abs(both.integral() - expected) < 0.01 * expected
        ),
        "valley sum is linear": linearity <= 1e-12 * both.dos.max(),
        "quadrature self-converged": (
            np.abs(both.dos - doubled.dos).max() < 0.02 * doubled.dos.max()
        ),
    }
    _report(capsys, 7, checks, time.perf_counter() - t0, 300.0)


def test_acceptance_8_derivative_engine(capsys):
    t0 = time.perf_counter()
    geom = tb.LayerGeometry(2.46, THETA)
    simplified = tb.simplified_model(theta=THETA)
    wannier = build_wannier_model(geom)
    betas = [
        (b1, b2) for b1 in range(5) for b2 in range(5) if b1 + b2 <= 4
    ]
    rng = np.random.default_rng(8)
    # points keep every stencil inside the table kernel's fitted disc
    r = 2.0 * np.sqrt(rng.uniform(0.2, 1.0, 20))
    ang = rng.uniform(0.0, 2.0 * math.pi, 20)
    qs = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)

    checks = {}
    for name, model in (("simplified", simplified), ("wannier", wannier)):
        worst = 0.0
        parts = (
            ("intralayer", 1, 0.15),
            ("intralayer", 2, 0.15),
            ("interlayer", None, 0.2),
        )
        for part, layer, h in parts:
            if part == "intralayer":
                fmany = lambda pts, L=layer: tb.intralayer_bloch_many(
                    model, L, pts
                )
            else:
                fmany = lambda pts: tb.interlayer_fourier_many(model, pts)
            for q in qs:
                for beta in betas:
                    exact = tb.hopping_derivative(
                        model, part, beta, q, layer=layer
                    )
                    fd = richardson_derivative_batched(
                        fmany, q, beta, h=h, levels=4
                    )
                    ref = max(np.abs(exact).max(), np.abs(fd).max(), 1e-30)
                    worst = max(worst, float(np.abs(exact - fd).max()) / ref)
        checks[f"{name} matches finite differences"] = worst <= 1e-6
    _report(capsys, 8, checks, time.perf_counter() - t0, 30.0)


def test_acceptance_9_symmetry_suite(capsys):
    t0 = time.perf_counter()
    geom = tb.LayerGeometry(2.46, THETA)
    moire = tb.MoireGeometry(geom)
    model = tb.simplified_model(theta=THETA)
    wannier = build_wannier_model(geom)
    g = moire.shortest_g
    rng = np.random.default_rng(13)
    checks = {}

    basis = tb.build_basis(geom, moire, 3.2 * g, tb.VALLEY_K)
    worst = 0.0
    for mod in (model, wannier):
        for tau in (None, 2):
            for _ in range(4):
                q = moire.KM + rng.uniform(-0.5, 0.5, 2) * g
                H = tb.assemble_hamiltonian(mod, basis, q, tau).matrix
                dev = np.abs(H - H.conj().T).max() / max(np.abs(H).max(), 1.0)
                worst = max(worst, float(dev))
    checks["hermiticity"] = worst <= 1e-12

    basis_p = tb.build_basis(geom, moire, 3.2 * g, tb.VALLEY_KPRIME)
    famK = tb.exact_family(model, basis, tau=None)
    famKp = tb.exact_family(model, basis_p, tau=None)
    worst = 0.0
    for _ in range(5):
        q = moire.KM + rng.uniform(-0.5, 0.5, 2) * g
        worst = max(
            worst,
            float(np.abs(famK.eigenvalues(q) - famKp.eigenvalues(-q)).max()),
        )
    checks["valley mirror"] = worst <= 1e-9 * T_HOP

    # periodicity under a moire reciprocal shift: with the same centred
    # disc the basis is only approximately invariant (plane waves at the
    # rim enter/leave), so only the interior bands agree, at the
    # truncation level; recentring the disc restores the exact relabelling
    def central(evals, count=10):
        return np.sort(evals[np.argsort(np.abs(evals))[:count]])

    GM = moire.RM_star @ np.array([1.0, 0.0])
    q = moire.KM + np.array([0.004, -0.003])
    wide = tb.build_basis(geom, moire, 5.2 * g, tb.VALLEY_K)
    base = central(
        tb.eigenvalues(tb.assemble_hamiltonian(model, wide, q, None).matrix)
    )
    shifted_same = central(
        tb.eigenvalues(
            tb.assemble_hamiltonian(model, wide, q + GM, None).matrix
        )
    )
    checks["periodicity (boundary caveat)"] = (
        float(np.abs(base - shifted_same).max()) <= 1e-6 * T_HOP
    )
    recentred = tb.build_basis(geom, moire, 5.2 * g, tb.VALLEY_K, center=-GM)
    shifted_exact = central(
        tb.eigenvalues(
            tb.assemble_hamiltonian(model, recentred, q + GM, None).matrix
        )
    )
    checks["periodicity (recentred)"] = (
        float(np.abs(base - shifted_exact).max()) <= 1e-9 * T_HOP
    )

    cm1 = tb.derive_continuum_model(model, geom, moire, tb.VALLEY_K, 1, 0, 1)
    cm2 = tb.derive_continuum_model(
        model.with_interlayer_scale(2.0), geom, moire, tb.VALLEY_K, 1, 0, 1
    )
    scaling_ok = True
    for ch1, ch2 in zip(cm1.channels, cm2.channels):
        scaling_ok &= np.array_equal(ch1.phase, ch2.phase)
        scaling_ok &= np.array_equal(ch1.shift, ch2.shift)
        for key, blk in ch1.poly.coeffs.items():
            scaling_ok &= np.array_equal(2.0 * blk, ch2.poly.coeffs[key])
    checks["positive scaling exact"] = scaling_ok
    _report(capsys, 9, checks, time.perf_counter() - t0, 60.0)
