import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import conj, dense_matmul, hprod, real_block
from quatkrylov.errors import DimensionError, DivisionByZero, InvalidParameter, StructureError
from quatkrylov.quaternion import (
    QMatrix,
    Quaternion,
    QVector,
    from_real_counterpart,
    inner,
    left_matrix,
    qinv,
    qmul,
    random_qmatrix,
    random_qvector,
    right_matrix,
    to_real_counterpart,
    vnorm,
)

ONE, I, J, K = (Quaternion(*e) for e in np.eye(4))
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
quats = st.tuples(finite, finite, finite, finite).map(lambda t: Quaternion(*t))


def qclose(a, b, tol=1e-12):
    return np.allclose(a.as_array(), b.as_array(), atol=tol, rtol=0)


# Hamilton table from the defining relations i^2 = j^2 = k^2 = ijk = -1
TABLE = {
    (0, 0): (1, 0), (0, 1): (1, 1), (0, 2): (1, 2), (0, 3): (1, 3),
    (1, 0): (1, 1), (1, 1): (-1, 0), (1, 2): (1, 3), (1, 3): (-1, 2),
    (2, 0): (1, 2), (2, 1): (-1, 3), (2, 2): (-1, 0), (2, 3): (1, 1),
    (3, 0): (1, 3), (3, 1): (1, 2), (3, 2): (-1, 1), (3, 3): (-1, 0),
}


@pytest.mark.parametrize("a,b", list(itertools.product(range(4), repeat=2)))
def test_hamilton_table_exact(a, b):
    sign, c = TABLE[(a, b)]
    got = qmul(Quaternion(*np.eye(4)[a]), Quaternion(*np.eye(4)[b])).as_array()
    want = sign * np.eye(4)[c]
    assert np.array_equal(got, want)


def test_ijk_is_minus_one():
    assert (I * J * K).as_array().tolist() == [-1, 0, 0, 0]
    assert (I * J).as_array().tolist() == K.as_array().tolist()
    assert (J * I).as_array().tolist() == (-K).as_array().tolist()


def test_qmul_examples():
    assert qclose(Quaternion(1, 1, 0, 0) * Quaternion(1, 0, 1, 0), Quaternion(1, 1, 1, 1))
    q = Quaternion(0.3, -2, 5, 1.5)
    assert qclose(q * ONE, q)


def test_qinv_examples():
    assert qclose(qinv(Quaternion(2)), Quaternion(0.5))
    assert qclose(qinv(I), -I)
    assert qclose(qinv(Quaternion(1, 1, 1, 1)), Quaternion(0.25, -0.25, -0.25, -0.25))
    with pytest.raises(DivisionByZero):
        qinv(Quaternion())


@given(quats, quats)
def test_qmul_matches_expanded_product(a, b):
    assert np.allclose((a * b).as_array(), hprod(a.as_array(), b.as_array()), atol=1e-9)


@given(quats, quats, quats)
def test_associativity(a, b, c):
    assert np.allclose(((a * b) * c).as_array(), (a * (b * c)).as_array(), atol=1e-9 * (1 + abs(a) * abs(b) * abs(c)))


@given(quats)
def test_conj_times_q_is_real_modulus(q):
    p = q.conj() * q
    assert np.allclose(p.as_array(), [abs(q) ** 2, 0, 0, 0], atol=1e-9 * (1 + abs(q) ** 2))


@given(quats)
def test_inverse_property(q):
    if abs(q) < 1e-3:
        return
    assert np.allclose((q * qinv(q)).as_array(), [1, 0, 0, 0], atol=1e-12)
    assert np.allclose((qinv(q) * q).as_array(), [1, 0, 0, 0], atol=1e-12)


@given(quats, quats)
def test_modulus_multiplicative(a, b):
    assert abs(abs(a * b) - abs(a) * abs(b)) <= 1e-9 * (1 + abs(a) * abs(b))


@given(quats, quats)
def test_left_right_matrices(a, b):
    p = (a * b).as_array()
    assert np.allclose(left_matrix(a) @ b.as_array(), p, atol=1e-9)
    assert np.allclose(right_matrix(b) @ a.as_array(), p, atol=1e-9)


def test_unit_quaternion_associativity_tight(rng):
    for _ in range(200):
        a, b, c = (Quaternion(*(v / np.linalg.norm(v))) for v in rng.standard_normal((3, 4)))
        assert np.allclose(((a * b) * c).as_array(), (a * (b * c)).as_array(), atol=1e-13, rtol=0)


def test_inner_examples():
    e1 = QVector.from_components(np.array([1.0]))
    assert qclose(inner(e1, e1), ONE)
    vi = QVector(np.array([[0.0], [1.0], [0.0], [0.0]]))
    vj = QVector(np.array([[0.0], [0.0], [1.0], [0.0]]))
    # <w, v> = conj(v) w with w = i, v = j: (-j) i = k
    assert qclose(inner(vi, vj), K)
    with pytest.raises(DimensionError):
        inner(vi, QVector.zeros(2))


def test_inner_conjugate_symmetry_and_right_linearity(rng):
    for _ in range(20):
        w, v = random_qvector(7, rng), random_qvector(7, rng)
        a = Quaternion(*rng.standard_normal(4))
        assert qclose(inner(w, v), inner(v, w).conj(), 1e-12)
        assert qclose(inner(w * a, v), inner(w, v) * a, 1e-11)
        vv = inner(v, v).as_array()
        assert np.allclose(vv[1:], 0, atol=1e-12) and np.isclose(vv[0], v.norm() ** 2)


def test_inner_matches_oracle(rng):
    w, v = rng.standard_normal((2, 4, 5))
    want = sum(hprod(conj(v[:, t]), w[:, t]) for t in range(5))
    assert np.allclose(inner(QVector(w), QVector(v)).as_array(), want)


def test_vnorm_examples(rng):
    assert vnorm(QVector(np.ones((4, 1)))) == pytest.approx(2.0)
    assert vnorm(QVector.zeros(5), 1) == 0.0
    v = rng.standard_normal((4, 9))
    mods = np.sqrt((v ** 2).sum(0))
    assert vnorm(QVector(v), 1) == pytest.approx(mods.sum())
    assert vnorm(QVector(v), 3) == pytest.approx((mods ** 3).sum() ** (1 / 3))
    with pytest.raises(InvalidParameter):
        vnorm(QVector(v), 0.5)


@settings(max_examples=50)
@given(arrays(np.float64, (2, 4, 6), elements=finite))
def test_norm_axioms(vw):
    v, w = QVector(vw[0]), QVector(vw[1])
    for p in (1, 2, 3.5):
        assert vnorm(v + w, p) <= vnorm(v, p) + vnorm(w, p) + 1e-9
        assert vnorm(v * 2.5, p) == pytest.approx(2.5 * vnorm(v, p), rel=1e-12, abs=1e-12)


def test_matvec_examples(rng):
    x = random_qvector(4, rng)
    assert QMatrix.identity(4).matvec(x).allclose(x)
    A = QMatrix.identity(3, q=I)
    got = A.matvec(QVector(np.tile([[0], [0], [1], [0]], (1, 3)).astype(float)))
    assert np.allclose(got.parts, np.tile([[0], [0], [0], [1]], (1, 3)))
    with pytest.raises(DimensionError):
        A.matvec(random_qvector(4, rng))


def test_matmul_matches_loop_oracle(rng):
    A, B = rng.standard_normal((4, 3, 4)), rng.standard_normal((4, 4, 2))
    got = (QMatrix.from_dense(A) @ QMatrix.from_dense(B)).dense()
    assert np.allclose(got, dense_matmul(A, B), atol=1e-12)
    x = rng.standard_normal((4, 4))
    y = QMatrix.from_dense(A).matvec(QVector(x)).parts
    assert np.allclose(y, dense_matmul(A, x[:, :, None])[:, :, 0], atol=1e-12)


def test_sparse_and_dense_agree(rng):
    A = random_qmatrix(6, 5, rng)
    x = random_qvector(5, rng)
    assert A.to_sparse().matvec(x).allclose(A.matvec(x))


def test_real_counterpart_examples():
    assert np.array_equal(to_real_counterpart(QMatrix.identity(1)), np.eye(4))
    Ri = to_real_counterpart(QMatrix.identity(1, q=I))
    assert np.array_equal(Ri, [[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]])


def test_real_counterpart_block_pattern(rng):
    A = rng.standard_normal((4, 3, 2))
    R = to_real_counterpart(QMatrix.from_dense(A))
    m, n = 3, 2
    blk = lambda r, c: R[r * m:(r + 1) * m, c * n:(c + 1) * n]
    A0, A1, A2, A3 = A
    want = [[A0, -A1, -A2, -A3], [A1, A0, -A3, A2], [A2, A3, A0, -A1], [A3, -A2, A1, A0]]
    for r in range(4):
        for c in range(4):
            assert np.array_equal(blk(r, c), want[r][c])


def test_real_counterpart_is_permuted_oracle(rng):
    A = rng.standard_normal((4, 3, 2))
    R = to_real_counterpart(QMatrix.from_dense(A))
    # interleaved oracle differs only by row/column permutations
    perm = lambda k: np.arange(4 * k).reshape(k, 4).T.reshape(-1)
    Ro = real_block(A)
    assert np.array_equal(Ro[np.ix_(perm(3), perm(2))], R)


def test_round_trip_and_isometry(rng):
    A = random_qmatrix(5, 3, rng)
    R = to_real_counterpart(A)
    assert from_real_counterpart(R).allclose(A, rtol=0, atol=0)
    assert np.linalg.norm(R) == pytest.approx(2 * A.fnorm(), rel=1e-14)
    Rs = to_real_counterpart(A.to_sparse())
    assert np.allclose(Rs.toarray(), R)
    assert from_real_counterpart(Rs).allclose(A)


def test_from_real_counterpart_rejects_bad_structure(rng):
    R = to_real_counterpart(random_qmatrix(2, 2, rng))
    R[0, 3] += 1.0
    with pytest.raises(StructureError):
        from_real_counterpart(R)
    with pytest.raises(StructureError):
        from_real_counterpart(np.zeros((5, 4)))


def test_homomorphism_rectangular(rng):
    A, B = random_qmatrix(5, 4, rng), random_qmatrix(4, 3, rng)
    lhs = to_real_counterpart(A @ B)
    rhs = to_real_counterpart(A) @ to_real_counterpart(B)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_conjugate_transpose_contravariance(rng):
    A, B = random_qmatrix(4, 3, rng), random_qmatrix(3, 5, rng)
    assert (A @ B).H.allclose(B.H @ A.H)
    assert A.H.H.allclose(A)


def test_norm_compatibility(rng):
    for _ in range(20):
        A, x = random_qmatrix(6, 4, rng), random_qvector(4, rng)
        assert A.matvec(x).norm() <= A.fnorm() * x.norm() * (1 + 1e-12)


def test_pure_matrix_iff_zero_real_part(rng):
    A = QMatrix(None, *rng.standard_normal((3, 2, 2)))
    assert np.all(A.part(0) == 0)
    assert QMatrix.from_dense(rng.standard_normal((4, 2, 2))).part(0).any()


def test_submatrix_and_diagonal(rng):
    A = random_qmatrix(5, 5, rng)
    assert np.array_equal(A.submatrix(3).dense(), A.dense()[:, :3, :3])
    assert np.array_equal(A.diagonal().parts, np.stack([np.diag(A.dense()[k]) for k in range(4)]))
    with pytest.raises(DimensionError):
        A.submatrix(6)
