import numpy as np
import pytest
import scipy.sparse as sp

from stokesdc import assembly, mesh
from stokesdc.relaxation import (Relaxer, RelaxationError, apply_bsr, build_bsr, build_vanka,
                                 patch_indices)


def _system(n, bc, disc):
    grid, spaces = mesh.build_unit_square(n, bc)
    return assembly.assemble(grid, spaces, disc)


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("disc", assembly.DISCRETIZATIONS)
@pytest.mark.parametrize("bc", ["dirichlet", "periodic"])
def test_partition_of_unity(n, disc, bc):
    s = _system(n, bc, disc)
    W = build_vanka(s, factor=False).weight_sum()
    assert abs(W - sp.identity(s.shape[0])).max() < 1e-14


def test_multiplicities_and_patch_size():
    s = _system(4, "periodic", "q2q1")
    v = build_vanka(s, factor=False)
    m = len(s.vel_nodes)
    cls = s.velocity.node_class[s.vel_nodes]
    expected = {mesh.NODE: 9, mesh.HEDGE: 6, mesh.VEDGE: 6, mesh.CENTER: 4}
    for c, k in expected.items():
        assert np.all(v.multiplicity[:m][cls == c] == k)
        assert np.all(v.multiplicity[m:2 * m][cls == c] == k)
    assert np.all(v.multiplicity[2 * m:] == 1)
    assert patch_indices(s).shape[1] == 2 * 25 + 1


def test_vanka_matches_explicit_patch_sum():
    s = _system(3, "dirichlet", "q2q1")
    K = s.K.toarray()
    idx = patch_indices(s)
    counts = np.zeros(s.shape[0])
    for row in idx:
        counts[row[row >= 0]] += 1
    M = np.zeros_like(K)
    for row in idx:
        i = row[row >= 0]
        W = np.diag(1.0 / counts[i])
        M[np.ix_(i, i)] += W @ np.linalg.inv(K[np.ix_(i, i)])
    v = build_vanka(s)
    assert np.abs(v.as_matrix() - M).max() < 1e-12
    assert np.abs(build_vanka(s, dedupe=False).as_matrix() - M).max() < 1e-12


def test_dedupe_collapses_interior_patches():
    s = _system(8, "periodic", "q1isoq2")
    v = build_vanka(s)
    assert len(v.inverses) == 1


@pytest.mark.parametrize("kind", ["vanka", "bsr"])
def test_fixed_point_and_linearity(kind, rng):
    s = _system(4, "dirichlet", "q2q1")
    r = Relaxer(s, kind, 0.7, alpha=1.1, beta=0.9)
    x_star = s.project_nullspace(rng.standard_normal(s.shape[0]))
    b = s.K @ x_star
    assert np.allclose(r(x_star, b), x_star, atol=1e-13)
    x, y = rng.standard_normal((2, s.shape[0]))
    c = rng.standard_normal(s.shape[0])
    lhs = r(2 * x + y, 2 * b + c)
    rhs = 2 * r(x, b) + r(y, c)
    assert np.allclose(lhs, rhs, atol=1e-12)
    # several columns relax independently
    X = np.column_stack([x, y])
    B = np.column_stack([b, c])
    assert np.allclose(r(X, B), np.column_stack([r(x, b), r(y, c)]), atol=1e-13)


def _shift_permutation(s, shift):
    pos, typ = s.layout
    period = s.period
    key = {(int(t), int(p[0]), int(p[1])): i for i, (p, t) in enumerate(zip(pos, typ))}
    return np.array([key[(int(t), int((p[0] + shift[0]) % period), int((p[1] + shift[1]) % period))]
                     for p, t in zip(pos, typ)])


@pytest.mark.parametrize("kind", ["vanka", "bsr"])
def test_commutes_with_translation(kind, rng):
    s = _system(6, "periodic", "q2q1")
    r = Relaxer(s, kind, 0.8, alpha=1.0, beta=1.0)
    perm = _shift_permutation(s, (2, 4))
    x, b = rng.standard_normal((2, s.shape[0]))
    assert np.allclose(r(x, b)[perm], r(x[perm], b[perm]), atol=1e-12)


def test_exact_braess_sarazin_solves():
    s = _system(4, "dirichlet", "q2q1")
    setup = build_bsr(s, 1.0, 1.0, exact=True)
    r = s.project_nullspace(np.random.default_rng(0).standard_normal(s.shape[0]))
    x = apply_bsr(setup, s, np.zeros_like(r), r, 1.0)
    assert np.linalg.norm(s.K @ x - r) < 1e-10 * np.linalg.norm(r)


def test_schur_approximation():
    s = _system(4, "dirichlet", "q1isoq2")
    setup = build_bsr(s, 1.0, 1.0)
    assert abs(setup.S - setup.S.T).max() < 1e-14
    assert np.all(setup.Sdiag > 0)
    ones = np.ones(s.n_p)
    assert np.abs(setup.S @ ones).max() < 1e-13


def test_bsr_inverse_matches_block_formula():
    # IBSR inverts [[alpha D, B^T], [B, S / alpha - diag(S) / (alpha beta)]]
    s = _system(3, "dirichlet", "q2q1")
    alpha, beta = 1.2, 0.8
    r = Relaxer(s, "bsr", 1.0, alpha=alpha, beta=beta)
    D = s.A.diagonal()
    Bd = s.B.toarray()
    S = (Bd / D) @ Bd.T
    M = np.block([[alpha * np.diag(D), Bd.T], [Bd, S / alpha - np.diag(np.diag(S)) / (alpha * beta)]])
    assert np.abs(r.inverse_matrix() @ M - np.eye(len(M))).max() < 1e-11


def test_errors():
    s = _system(2, "dirichlet", "q2q1")
    with pytest.raises(ValueError):
        Relaxer(s, "jacobi", 1.0)
    with pytest.raises(ValueError):
        Relaxer(s, "bsr", 1.0)
    with pytest.raises(ValueError):
        build_bsr(s, 0.0, 1.0)
    setup = build_bsr(s, 1.0, 1.0)
    with pytest.raises(ValueError):
        apply_bsr(setup, s, np.zeros(3), np.zeros(3), 1.0)


def test_zero_damping_is_identity(rng):
    s = _system(3, "dirichlet", "q2q1")
    r = Relaxer(s, "vanka", 0.0)
    x, b = rng.standard_normal((2, s.shape[0]))
    assert np.array_equal(r(x, b), x)
