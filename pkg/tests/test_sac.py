import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from focalholo.sac import (compose_sa_kernel, sa_conv_reference, sac_backward, sac_forward,
                           si_conv, sv_backward, sv_conv)


def instance(seed, c_in=2, c_out=3, h=8, w=8, k=3):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(c_in, h, w))
    v = rng.normal(size=(h, w, c_in, k, k))
    wk = rng.normal(size=(c_out, c_in, k, k))
    return x, v, wk


def loop_oracle(x, a):
    """Direct summation over a materialized (c_out, h, w, c_in, k, k) kernel."""
    c_out, h, w, c_in, k, _ = a.shape
    r = k // 2
    out = np.zeros((c_out, h, w))
    for c in range(c_out):
        for i in range(h):
            for j in range(w):
                s = 0.0
                for cc in range(c_in):
                    for di in range(-r, r + 1):
                        for dj in range(-r, r + 1):
                            ii, jj = i + di, j + dj
                            if 0 <= ii < h and 0 <= jj < w:
                                s += a[c, i, j, cc, di + r, dj + r] * x[cc, ii, jj]
                out[c, i, j] = s
    return out


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_si_conv_hand_example():
    out = si_conv(np.ones((1, 3, 3)), np.ones((1, 1, 3, 3)))
    expected = np.array([[4, 6, 4], [6, 9, 6], [4, 6, 4]], dtype=float)
    np.testing.assert_array_equal(out[0], expected)


def test_si_conv_identity_and_shift():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 5, 6))
    eye = np.eye(3)[:, :, None, None]
    np.testing.assert_array_equal(si_conv(x, eye), x)
    delta = np.zeros((1, 1, 3, 3))
    delta[0, 0, 1, 2] = 1.0  # offset (0, +1)
    out = si_conv(x[:1], delta)
    np.testing.assert_array_equal(out[0, :, :-1], x[0, :, 1:])
    np.testing.assert_array_equal(out[0, :, -1], 0)


def test_si_conv_channel_mismatch():
    with pytest.raises(ValueError):
        si_conv(np.ones((2, 4, 4)), np.ones((1, 3, 3, 3)))
    with pytest.raises(ValueError):
        si_conv(np.ones((1, 4, 4)), np.ones((1, 1, 2, 2)))


def test_compose_sa_kernel_examples():
    x, v, w = instance(1, h=4, w=5)
    a = compose_sa_kernel(v, np.ones_like(w))
    for c in range(w.shape[0]):
        np.testing.assert_array_equal(a[c], v)
    a = compose_sa_kernel(np.ones_like(v), w)
    np.testing.assert_array_equal(a[:, 2, 3], w)
    a = compose_sa_kernel(np.full_like(v, 2.0), np.full_like(w, 3.0))
    assert np.all(a == 6)
    with pytest.raises(ValueError):
        compose_sa_kernel(v, w[:, :1])


def test_sac_all_ones_w_equals_sv_conv():
    x, v, w = instance(2)
    out = sac_forward(x, v, np.ones_like(w))
    sv = sv_conv(x, v)
    for c in range(w.shape[0]):
        assert rel(out[c], sv[0]) <= 1e-12


def test_sac_all_ones_v_equals_si_conv():
    x, v, w = instance(3)
    assert rel(sac_forward(x, np.ones_like(v), w), si_conv(x, w)) <= 1e-12


def test_sac_matches_brute_force():
    x, v, w = instance(4)
    a = compose_sa_kernel(v, w)
    fused = sac_forward(x, v, w)
    assert rel(fused, loop_oracle(x, a)) <= 1e-10
    assert rel(sa_conv_reference(x, a), loop_oracle(x, a)) <= 1e-12


def test_sv_conv_examples():
    x, v, _ = instance(5)
    assert np.all(sv_conv(x, np.zeros_like(v)) == 0)
    delta = np.zeros_like(v)
    delta[..., 1, 1] = 1.0
    np.testing.assert_allclose(sv_conv(x, delta)[0], x.sum(axis=0), rtol=1e-14)
    assert sv_conv(x, v).shape == (1, 8, 8)
    assert rel(sv_conv(x, v), sac_forward(x, v, np.ones((1, 2, 3, 3)))) <= 1e-12
    # a leading singleton output-channel axis is accepted
    np.testing.assert_array_equal(sv_conv(x, v[None]), sv_conv(x, v))


def test_sac_shape_errors():
    x, v, w = instance(6)
    with pytest.raises(ValueError):
        sac_forward(x[:, :7], v, w)
    with pytest.raises(ValueError):
        sac_forward(x, v, w[:, :1])
    with pytest.raises(ValueError):
        sac_backward(np.ones((3, 8, 7)), x, v, w)


def test_sac_backward_zero_and_scalar():
    x, v, w = instance(7)
    grads = sac_backward(np.zeros((3, 8, 8)), x, v, w)
    assert all(np.all(g == 0) for g in grads)
    gx, gv, gw = sac_backward(np.ones((1, 1, 1)), np.array([[[2.0]]]),
                              np.array([[[[[3.0]]]]]), np.array([[[[5.0]]]]))
    assert gx.item() == 15.0 and gv.item() == 10.0 and gw.item() == 6.0


def finite_difference(f, arr, eps=1e-4):
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + eps
        hi = f()
        arr[idx] = old - eps
        lo = f()
        arr[idx] = old
        g[idx] = (hi - lo) / (2 * eps)
    return g


def test_sac_backward_matches_finite_differences():
    # 2*4*4 + 4*4*2*9 + 2*2*9 = 356 parameters
    x, v, w = instance(8, c_in=2, c_out=2, h=4, w=4)
    g_out = np.random.default_rng(9).normal(size=(2, 4, 4))

    def loss():
        return float(np.sum(g_out * sac_forward(x, v, w)))

    gx, gv, gw = sac_backward(g_out, x, v, w)
    for analytic, arr in ((gx, x), (gv, v), (gw, w)):
        assert rel(analytic, finite_difference(loss, arr)) <= 1e-4


def test_sv_backward_matches_finite_differences():
    x, v, _ = instance(10, c_in=2, h=4, w=4)
    g_out = np.random.default_rng(11).normal(size=(1, 4, 4))

    def loss():
        return float(np.sum(g_out * sv_conv(x, v)))

    gx, gv = sv_backward(g_out, x, v)
    assert rel(gx, finite_difference(loss, x)) <= 1e-4
    assert rel(gv, finite_difference(loss, v)) <= 1e-4


dims = st.tuples(st.integers(1, 8), st.integers(1, 8), st.integers(1, 3), st.integers(1, 4),
                 st.sampled_from([1, 3]), st.integers(0, 2 ** 31 - 1))


@settings(max_examples=40, deadline=None)
@given(d=dims)
def test_property_fused_equals_materialized(d):
    h, w, c_in, c_out, k, seed = d
    x, v, wk = instance(seed, c_in, c_out, h, w, k)
    ref = sa_conv_reference(x, compose_sa_kernel(v, wk))
    assert rel(sac_forward(x, v, wk), ref) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(d=dims, a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_property_linear_in_input(d, a, b):
    h, w, c_in, c_out, k, seed = d
    x, v, wk = instance(seed, c_in, c_out, h, w, k)
    y = np.random.default_rng(seed + 1).normal(size=x.shape)
    lhs = sac_forward(a * x + b * y, v, wk)
    rhs = a * sac_forward(x, v, wk) + b * sac_forward(y, v, wk)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(1.0, np.linalg.norm(rhs))


@settings(max_examples=25, deadline=None)
@given(d=dims)
def test_property_adjoint_identity(d):
    # <g, J dx> == <J^T g, dx> for the input direction
    h, w, c_in, c_out, k, seed = d
    x, v, wk = instance(seed, c_in, c_out, h, w, k)
    rng = np.random.default_rng(seed + 2)
    g = rng.normal(size=(c_out, h, w))
    dx = rng.normal(size=x.shape)
    gx, _, _ = sac_backward(g, x, v, wk)
    lhs = np.sum(g * sac_forward(dx, v, wk))
    assert abs(lhs - np.sum(gx * dx)) <= 1e-10 * max(1.0, abs(lhs))
