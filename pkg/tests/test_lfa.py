import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from stokesdc import assembly, mesh
from stokesdc.assembly import StencilSet
from stokesdc.lfa import DefectCorrectionLFA, stokes_symbols
from stokesdc.lfa.optimize import free_parameters, multistart_minimize
from stokesdc.lfa.symbols import (BlockSymbol, LeakageError, extract_symbol_numeric, fourier_vectors,
                                  grid_frequencies, HARMONICS)
from stokesdc.lfa.twogrid import matrix_power, rho_hat, sample_low, spectral_radii
from stokesdc.multigrid import CycleParams, MgHierarchy
from stokesdc.relaxation import Relaxer

VANKA = CycleParams(nu1=1, nu2=1, gamma=2, tau=1.05, omega0=0.74, omega1=0.78, relaxer="vanka")
BSR = CycleParams(nu1=1, nu2=1, gamma=1, tau=0.97, omega0=0.91, omega1=1.04, relaxer="bsr",
                  alpha0=1.02, beta0=0.93, alpha1=0.78, beta1=0.86)


@pytest.fixture(scope="module")
def lfa():
    return DefectCorrectionLFA()


@pytest.fixture(scope="module")
def sym():
    return stokes_symbols(8)


def _q1_stencil():
    st = {(a, b): (8 / 3 if a == b == 0 else -1 / 3) for a in (-1, 0, 1) for b in (-1, 0, 1)}
    return StencilSet(1, 1, {(0, 0): st}, unit=1)


def test_scalar_q1_symbol():
    s = BlockSymbol(_q1_stencil())
    th = np.array([[0.0, 0.0], [np.pi, np.pi], [0.3, -1.1]])
    vals = s(th)[:, 0, 0]
    c1, c2 = np.cos(th[2])
    assert vals[0] == pytest.approx(0, abs=1e-14)
    assert vals[1] == pytest.approx(8 / 3)
    assert vals[2] == pytest.approx((8 - 2 * c1 - 2 * c2 - 4 * c1 * c2) / 3)


@pytest.mark.parametrize("name", ["K0", "K1"])
def test_fourier_diagonalization(sym, name):
    s = sym.sys0 if name == "K0" else sym.sys1
    pos, typ = s.layout
    thetas, numeric = extract_symbol_numeric(s.K, pos, typ, n=8)
    assert len(thetas) == 64
    assert np.abs(numeric - getattr(sym, name)(thetas)).max() < 1e-12


def test_symbol_periodicity_and_conjugacy(sym):
    th = np.random.default_rng(0).uniform(-np.pi, np.pi, (5, 2))
    K = sym.K0(th)
    # offsets are in half-h units: entries are 4 pi periodic, and a 2 pi
    # shift is a diagonal sign similarity
    assert np.allclose(sym.K0(th + 4 * np.pi), K, atol=1e-12)
    shifted = sym.K0(th + [2 * np.pi, 0])
    assert np.allclose(np.abs(shifted), np.abs(K), atol=1e-12)
    assert np.allclose(np.linalg.eigvalsh(shifted), np.linalg.eigvalsh(K), atol=1e-12)
    assert np.allclose(sym.K0(-th), K.conj(), atol=1e-12)
    # real symmetric operator -> Hermitian symbol
    assert np.allclose(K, K.conj().transpose(0, 2, 1), atol=1e-12)


def test_leakage_on_dirichlet():
    grid, spaces = mesh.build_unit_square(8)
    s = assembly.assemble(grid, spaces, "q2q1")
    pos, typ = s.layout
    with pytest.raises(LeakageError):
        extract_symbol_numeric(s.K, pos, typ, n=8, thetas=np.array([[np.pi / 4, 0.0]]))


def test_identity_symbol(sym):
    pos, typ = sym.sys0.layout
    _, S = extract_symbol_numeric(lambda v: v, pos, typ, n=8)
    assert np.allclose(S, np.eye(9))


def test_galerkin_symbol(lfa):
    th = sample_low(6)
    c = lfa.components(th)
    assert np.abs(c["R"] @ c["K1"] @ c["P"] - c["K2"]).max() < 1e-12


def test_coarse_correction_projector(lfa):
    th = sample_low(6)
    C = lfa.components(th)["CGC"]
    assert np.abs(C @ C - C).max() < 1e-10
    r = rho_hat(lambda t, p: (lfa.components(t)["CGC"], lfa.components(t)["ok"]), thetas=th)
    assert r.rho == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("level", [0, 1])
@pytest.mark.parametrize("alpha,beta", [(1.0, 1.0), (0.8, 1.3)])
def test_bsr_symbol_matches_numeric(sym, level, alpha, beta):
    s = sym.sys0 if level == 0 else sym.sys1
    pos, typ = s.layout
    Minv = Relaxer(s, "bsr", 1.0, alpha, beta).inverse_matrix()
    thetas, numeric = extract_symbol_numeric(Minv, pos, typ, n=8)
    raw = sym.evaluate(thetas)["raw"][f"K{level}"]
    composed = sym.bsr_inverse(raw, level, alpha, beta)[:, 0]
    assert np.abs(composed - numeric).max() < 1e-12


@pytest.mark.parametrize("params", [VANKA, BSR])
def test_cached_symbol_matches_reference(lfa, params):
    th = sample_low(5)
    a, _ = lfa.error_symbol(th, params)
    b, _ = lfa.error_symbol_reference(th, params)
    assert np.abs(a - b).max() < 1e-10


def test_gamma_zero(lfa):
    th = sample_low(4)
    p = CycleParams(**{**VANKA.to_dict(), "gamma": 0})
    E, _ = lfa.error_symbol(th, p)
    S0 = lfa.relaxation(lfa.components(th), 0, p)
    assert np.allclose(E, matrix_power(S0, 2))


def test_large_gamma_approaches_exact_solve(lfa):
    th = sample_low(4)
    c = lfa.components(th)
    p = VANKA
    S0 = lfa.relaxation(c, 0, p)
    I = np.eye(36)
    exact = S0 @ (I - p.tau * c["K1invK0"]) @ S0
    dist = []
    for g in (1, 2, 4, 8, 16):
        E, _ = lfa.error_symbol(th, CycleParams(**{**p.to_dict(), "gamma": g}))
        dist.append(np.linalg.norm(E - exact, 2, axis=(1, 2)).max())
    assert all(b <= a + 1e-12 for a, b in zip(dist, dist[1:]))
    assert dist[-1] < 1e-3 * dist[0]


@pytest.mark.parametrize("params", [VANKA, BSR])
def test_dihedral_symmetry(lfa, params):
    th = sample_low(8)
    r = lambda t: spectral_radii(lfa.error_symbol(t, params)[0])
    base = r(th)
    for image in (-th, th * [1, -1], th[:, ::-1]):
        assert np.allclose(r(image), base, atol=1e-12)
    full = lfa.predict(params, 8, symmetric=False).rho
    assert lfa.predict(params, 8).rho == pytest.approx(full, abs=1e-12)


def test_rho_hat_errors(lfa):
    with pytest.raises(ValueError):
        lfa.predict(VANKA, 0)


def _fourier_block(E, pos, typ, theta):
    F = np.column_stack([fourier_vectors(pos, typ, 9, theta + np.pi * xi) for xi in HARMONICS])
    return (F.conj().T @ E @ F) / (F.conj().T @ F).diagonal()[:, None]


@pytest.mark.parametrize("params", [VANKA, BSR])
def test_brute_force_equivalence(lfa, params):
    grid, _ = mesh.build_unit_square(8, "periodic")
    hier = MgHierarchy(grid, params, 2)
    E = hier.error_operator()
    pos, typ = hier.systems[0].layout
    low = [t for t in grid_frequencies(8) if np.all(np.abs(t) <= np.pi / 2) and np.all(t < np.pi / 2)]
    assert len(low) == 16
    worst = 0.0
    for t in low:
        if not np.any(t):
            continue
        block = _fourier_block(E, pos, typ, t)
        sym_E, ok = lfa.error_symbol(t[None], params)
        assert ok[0]
        assert np.abs(block - sym_E[0]).max() < 1e-10
        a = np.linalg.eigvals(block)
        b = np.linalg.eigvals(sym_E[0])
        i, j = linear_sum_assignment(np.abs(a[:, None] - b[None, :]))
        worst = max(worst, np.abs(a[i] - b[j]).max())
    assert worst < 1e-8


def _jacobi_two_grid_rho(omega, thetas):
    ht = thetas[:, None, :] + np.pi * HARMONICS[None]
    c = np.cos(ht)
    k = (8 - 2 * c[..., 0] - 2 * c[..., 1] - 4 * c[..., 0] * c[..., 1]) / 3
    p = (1 + c[..., 0]) * (1 + c[..., 1])
    K = np.einsum("ni,ij->nij", k, np.eye(4))
    P = p[:, :, None]
    R = P.transpose(0, 2, 1) / 4
    Kc = R @ K @ P
    S = np.eye(4) - omega * 3 / 8 * K
    E = S @ (np.eye(4) - P @ np.linalg.solve(Kc, R @ K)) @ S
    return spectral_radii(E).max()


def test_multistart_scalar_jacobi_interior_optimum():
    th = sample_low(16)
    scan = np.linspace(0.02, 2.0, 397)
    values = [_jacobi_two_grid_rho(w, th) for w in scan]
    w_scan = scan[int(np.argmin(values))]
    results, improved = multistart_minimize(lambda v: _jacobi_two_grid_rho(v[0], th), [0.02], [2.0],
                                            starts=8, seed=0, tol=1e-5)
    w_opt = results[0][1][0]
    assert 0.1 < w_opt < 1.9
    assert abs(w_opt - w_scan) < 0.01
    assert results[0][0] <= min(values) + 1e-4


def test_free_parameters():
    assert free_parameters(VANKA) == ["tau", "omega0", "omega1"]
    assert len(free_parameters(BSR)) == 7
    no_fine = CycleParams(nu1=0, nu2=0, gamma=1, omega0=0.0, omega1=0.5, relaxer="bsr", alpha1=1, beta1=1)
    assert free_parameters(no_fine) == ["tau", "omega1", "alpha1", "beta1"]


@pytest.mark.slow
@pytest.mark.parametrize("base,bound", [
    (CycleParams(nu1=1, nu2=0, gamma=1, relaxer="vanka"), 0.40),
    (CycleParams(nu1=1, nu2=1, gamma=1, relaxer="bsr", alpha0=1, beta0=1, alpha1=1, beta1=1), 0.10)])
def test_optimizer_reaches_reference(base, bound):
    from stokesdc.lfa.optimize import optimize_params
    res = optimize_params(base, starts=8, seed=0)
    assert res.improved
    assert res.rho <= bound
