import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bitjscc import kernels

BACKENDS = kernels.available_backends()


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(1, 3), c=st.integers(1, 3), h=st.integers(1, 9), w=st.integers(1, 9),
    k=st.integers(1, 4), stride=st.integers(1, 3), pad=st.integers(0, 2),
    seed=st.integers(0, 2**31),
)
def test_backends_agree_bitwise(n, c, h, w, k, stride, pad, seed):
    if h + 2 * pad < k or w + 2 * pad < k:
        return
    x = np.random.default_rng(seed).standard_normal((n, c, h, w)).astype(np.float32)
    cols = [kernels.im2col(x, k, k, stride, pad, backend=b) for b in BACKENDS]
    back = [kernels.col2im(cols[0], x.shape, k, k, stride, pad, backend=b) for b in BACKENDS]
    for other in cols[1:]:
        assert np.array_equal(cols[0], other)
    for other in back[1:]:
        assert np.array_equal(back[0], other)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("k,stride,pad", [(3, 1, 1), (4, 2, 1), (1, 1, 0), (3, 2, 0)])
def test_col2im_is_adjoint_of_im2col(backend, k, stride, pad):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 3, 8, 7))
    cols = kernels.im2col(x, k, k, stride, pad, backend=backend)
    y = rng.standard_normal(cols.shape)
    lhs = np.sum(cols * y)
    rhs = np.sum(x * kernels.col2im(y, x.shape, k, k, stride, pad, backend=backend))
    assert lhs == pytest.approx(rhs, rel=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_im2col_matches_direct_convolution(backend):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 2, 5, 6))
    wt = rng.standard_normal((3, 2, 3, 3))
    cols = kernels.im2col(x, 3, 3, 1, 1, backend=backend)
    got = (wt.reshape(3, -1) @ cols).reshape(3, 2, 5, 6).transpose(1, 0, 2, 3)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros_like(got)
    for i in range(5):
        for j in range(6):
            ref[:, :, i, j] = np.einsum("nchw,ochw->no", xp[:, :, i:i + 3, j:j + 3], wt)
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        kernels.im2col(np.zeros((1, 1, 2, 2)), 1, 1, backend="fortran")


def test_col2im_rejects_mismatched_columns():
    with pytest.raises(ValueError, match="col2im"):
        kernels.col2im(np.zeros((4, 5)), (1, 1, 3, 3), 2, 2)
