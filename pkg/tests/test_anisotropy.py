import numpy as np
import pytest

from bbb.anisotropy import (
    NotPositiveDefinite,
    TensorDecomposition,
    apply_Lh,
    decompose_field,
    lh_matrix,
    reconstruct,
    selling_decompose,
    selling_many,
)
from bbb.exact import mapped_tensor
from bbb.grid import GridSpec


def random_spd(rng, n, max_cond=1e4):
    theta = rng.uniform(0, np.pi, n)
    cond = np.exp(rng.uniform(0, np.log(max_cond), n))
    scale = np.exp(rng.uniform(-2, 2, n))
    c, s = np.cos(theta), np.sin(theta)
    R = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    L = np.zeros((n, 2, 2))
    L[:, 0, 0] = scale * cond
    L[:, 1, 1] = scale
    return R @ L @ np.swapaxes(R, -1, -2)


@pytest.mark.parametrize("D,expected", [
    (np.eye(2), {(1, 0): 1.0, (0, 1): 1.0}),
    (np.diag([1.0, 9.0]), {(1, 0): 1.0, (0, 1): 9.0}),
    (np.array([[2.0, -1.0], [-1.0, 2.0]]), {(1, 0): 1.0, (0, 1): 1.0, (1, -1): 1.0}),
])
def test_selling_examples(D, expected):
    got = {e: w for e, w in selling_decompose(D) if w > 0}
    assert set(got) == set(expected)
    for e, w in expected.items():
        assert got[e] == pytest.approx(w, abs=1e-14)


def test_selling_reconstructs_random_spd():
    rng = np.random.default_rng(7)
    D = random_spd(rng, 1000)
    off, w = selling_many(D)
    assert np.all(w >= 0)
    err = np.abs(reconstruct(off, w) - D).max(axis=(-1, -2)) / np.abs(D).max(axis=(-1, -2))
    assert err.max() <= 1e-12


def test_selling_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        selling_decompose(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_selling_offsets_canonical():
    rng = np.random.default_rng(3)
    off, w = selling_many(random_spd(rng, 200))
    first = np.where(off[..., 0] != 0, off[..., 0], off[..., 1])
    assert np.all(first > 0)


def test_decompose_identity_field():
    s = GridSpec(0, 1, 2, 1, 6)
    dec = decompose_field(s, lambda x: np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)))
    assert sorted(map(tuple, dec.offsets.tolist())) == [(0, 1), (1, 0)]
    np.testing.assert_allclose(dec.weights, 1.0)
    dec3 = decompose_field(s, lambda x: np.broadcast_to(3 * np.eye(2), x.shape[:-1] + (2, 2)))
    np.testing.assert_allclose(dec3.weights, 3.0)


def test_mapped_offsets():
    s = GridSpec(0, 1, 2, 1, 48)
    dec = decompose_field(s, lambda x: mapped_tensor(x, 0.035))
    assert set(map(tuple, dec.offsets.tolist())) == {(1, 0), (0, 1), (1, 1), (1, -1)}
    assert np.all(dec.weights >= 0)


def _dense_L(dec, h):
    return lh_matrix(dec, h).toarray()


@pytest.mark.parametrize("d,N", [(1, 8), (1, 16), (2, 6)])
def test_lh_symmetric_zero_rows(d, N):
    s = GridSpec(0, 1, d, 1, N)
    rng = np.random.default_rng(N)
    if d == 1:
        dec = decompose_field(s, lambda x: 1 + 0.5 * np.sin(2 * np.pi * x[..., 0]))
    else:
        dec = decompose_field(s, lambda x: mapped_tensor(x, 0.035))
    L = _dense_L(dec, s.h)
    np.testing.assert_allclose(L, L.T, atol=1e-9 * np.abs(L).max())
    np.testing.assert_allclose(L.sum(axis=1), 0, atol=1e-9 * np.abs(L).max())
    u = rng.standard_normal(s.space_shape)
    np.testing.assert_allclose(apply_Lh(dec, u, s.h).ravel(), L @ u.ravel(), atol=1e-9 * np.abs(L).max())


@pytest.mark.parametrize("d,N", [(1, 16), (2, 8)])
def test_inverse_positivity(d, N):
    s = GridSpec(0, 1, d, 1, N)
    rng = np.random.default_rng(11)
    dec = TensorDecomposition.isotropic(d, N) if d == 1 else decompose_field(
        s, lambda x: mapped_tensor(x, 0.035))
    L = _dense_L(dec, s.h)
    for _ in range(5):
        u = rng.uniform(0, 3, L.shape[0])
        A = np.eye(L.shape[0]) + L * u[None, :]  # Id + L_h diag(u)
        inv = np.linalg.inv(A)
        assert inv.min() >= -1e-12 * np.abs(inv).max()


def test_delta_example():
    s = GridSpec(0, 1, 1, 1, 4)
    dec = TensorDecomposition.isotropic(1, 4)
    u = np.zeros(4)
    u[1] = 1.0
    out = -apply_Lh(dec, u, s.h)
    q = 1 / (2 * s.h) ** 2
    np.testing.assert_allclose(out, [q, -2 * q, q, 0])


def test_consistency_slope():
    errs, hs = [], []
    for N in (16, 32, 64, 128):
        s = GridSpec(0, 1, 2, 1, N)
        x = s.points()
        u = np.sin(2 * np.pi * x[..., 0])
        dec = TensorDecomposition.isotropic(2, N)
        errs.append(np.max(np.abs(apply_Lh(dec, u, s.h) - 4 * np.pi ** 2 * u)))
        hs.append(s.h)
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert 1.8 <= slope <= 2.2


def test_anisotropic_consistency():
    # L_h u approximates -div(D grad u) for the mapped tensor field
    eps = 0.035
    errs = []
    for N in (32, 64, 128):
        s = GridSpec(0, 1, 2, 1, N)
        x = s.points()
        dec = decompose_field(s, lambda y: mapped_tensor(y, eps))
        u = np.sin(2 * np.pi * x[..., 0]) * np.cos(2 * np.pi * x[..., 1])
        # reference: the same operator on a 4x finer grid, sampled at the coarse points
        sf = GridSpec(0, 1, 2, 1, 4 * N)
        xf = sf.points()
        decf = decompose_field(sf, lambda y: mapped_tensor(y, eps))
        uf = np.sin(2 * np.pi * xf[..., 0]) * np.cos(2 * np.pi * xf[..., 1])
        ref = apply_Lh(decf, uf, sf.h)[::4, ::4]
        errs.append(np.max(np.abs(apply_Lh(dec, u, s.h) - ref)))
    assert errs[0] > errs[1] > errs[2]
