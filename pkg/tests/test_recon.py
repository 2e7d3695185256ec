import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fereit.mesh import boundary_elements
from fereit.recon import (INF, FERReconstructor, MotionFilter, StandardReconstructor,
                          cosine_similarity, default_lambda_b, fer_reconstruct, motion_filter,
                          parse_lambda, standard_reconstruct, time_difference)
from fereit.sensitivity import boundary_submatrix


def brute_fer_inf(S, vdot):
    n = S.shape[1]
    out = np.zeros(n)
    for k in range(n):
        num = 0.0
        den = 0.0
        for l in range(n):
            den += abs(float(S[:, k] @ S[:, l]))
        for r in range(S.shape[0]):
            num += S[r, k] * vdot[r]
        out[k] = num / den
    return out


@pytest.fixture(scope="module")
def sb(disk):
    return boundary_submatrix(disk.S, boundary_elements(disk.mesh))


class TestFER:
    def test_zero_data(self, disk):
        for lam in (INF, 1.0, 1e4):
            img = fer_reconstruct(disk.S, disk.reg, np.zeros(208), lam)
            assert np.all(img.values == 0)

    def test_infinite_lambda_brute_force(self, small_disk, rng):
        v = rng.standard_normal(208) * 1e-3
        img = fer_reconstruct(small_disk.S, small_disk.reg, v)
        np.testing.assert_allclose(img.values, brute_fer_inf(small_disk.S, v), rtol=1e-10)

    def test_large_lambda_approaches_limit(self, disk, rng):
        v = disk.S @ rng.standard_normal(disk.mesh.n_elem) * 1e-3
        rec = FERReconstructor(disk.S, disk.reg)
        limit = rec(v, INF)
        dist = [np.linalg.norm(rec(v, lam) - limit) / np.linalg.norm(limit)
                for lam in (1e2, 1e4, 1e6, 1e8)]
        assert dist[-1] < 1e-3
        assert all(a >= b for a, b in zip(dist, dist[1:]))

    def test_finite_lambda_dense_oracle(self, small_disk, rng):
        S, w = small_disk.S, small_disk.reg.weights
        v = rng.standard_normal(208)
        lam = 3.0
        x = np.linalg.solve(S.T @ S + lam * np.diag(w), S.T @ v) * math.sqrt(1 + lam ** 2)
        got = fer_reconstruct(S, small_disk.reg, v, lam).values
        np.testing.assert_allclose(got, x, rtol=1e-8, atol=1e-10 * np.abs(x).max())

    def test_stacked_frames(self, disk, rng):
        V = rng.standard_normal((3, 208))
        rec = FERReconstructor(disk.S, disk.reg)
        for lam in (INF, 10.0):
            stacked = rec(V, lam)
            for m in range(3):
                one = rec(V[m], lam)
                np.testing.assert_allclose(stacked[m], one, rtol=1e-12, atol=1e-12 * np.abs(one).max())

    @pytest.mark.parametrize("lam", [0.0, -1.0, "nan"])
    def test_bad_lambda(self, disk, lam):
        with pytest.raises(ValueError):
            fer_reconstruct(disk.S, disk.reg, np.zeros(208), lam)

    def test_wrong_length(self, disk):
        with pytest.raises(ValueError):
            fer_reconstruct(disk.S, disk.reg, np.zeros(207))

    def test_metadata(self, disk):
        img = fer_reconstruct(disk.S, disk.reg, np.ones(208), "inf", frame_time=0.5)
        assert img.method == "fer" and math.isinf(img.lam) and img.frame_time == 0.5

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-5, 5), st.floats(-5, 5), st.sampled_from([INF, 1.0, 100.0]))
    def test_linear(self, small_disk, a, b, lam):
        rng = np.random.default_rng(7)
        v1, v2 = rng.standard_normal((2, 208))
        rec = FERReconstructor(small_disk.S, small_disk.reg)
        lhs = rec(a * v1 + b * v2, lam)
        rhs = a * rec(v1, lam) + b * rec(v2, lam)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * (np.abs(rhs).max() + 1))


class TestStandard:
    def test_dense_oracle(self, small_disk, rng):
        S = small_disk.S
        v = rng.standard_normal(208)
        lam = 1e-3
        scale = np.max(np.sum(S * S, axis=0))
        x = np.linalg.solve(S.T @ S + lam * scale * np.eye(S.shape[1]), S.T @ v)
        got = standard_reconstruct(S, v, lam).values
        np.testing.assert_allclose(got, x, rtol=1e-10, atol=1e-10 * np.abs(x).max())

    def test_large_lambda_vanishes(self, disk, rng):
        v = rng.standard_normal(208)
        small = np.linalg.norm(standard_reconstruct(disk.S, v, 1e12).values)
        ref = np.linalg.norm(standard_reconstruct(disk.S, v, 1e-2).values)
        assert small < 1e-9 * ref

    @pytest.mark.parametrize("lam", [INF, "inf", 0.0, -2.0])
    def test_rejects(self, disk, lam):
        with pytest.raises(ValueError):
            StandardReconstructor(disk.S)(np.zeros(208), lam)


class TestMotionFilter:
    def test_orthogonal_input(self, sb):
        q, _ = np.linalg.qr(sb.matrix, mode="complete")
        rank = np.linalg.matrix_rank(sb.matrix)
        if rank == 208:
            pytest.skip("boundary columns span the data space")
        v = q[:, rank:] @ np.ones(208 - rank)
        filtered, err = motion_filter(sb, v)
        assert np.linalg.norm(err) <= 1e-12 * np.linalg.norm(v)

    def test_removes_boundary_signature(self, sb, rng):
        # the boundary columns span (nearly) the whole data space, so a tiny
        # lambda_b removes a pure boundary-column signature almost entirely
        v = sb.matrix @ rng.standard_normal(sb.matrix.shape[1])
        filtered, _ = motion_filter(sb, v, lam_b=1e-8 * default_lambda_b(sb))
        assert np.linalg.norm(filtered) < 1e-3 * np.linalg.norm(v)

    def test_decomposition(self, sb, rng):
        v = rng.standard_normal(208)
        filtered, err = motion_filter(sb, v)
        np.testing.assert_allclose(filtered + err, v, rtol=0, atol=8 * np.finfo(float).eps * np.abs(v).max())

    def test_monotone_in_lambda(self, sb, rng):
        v = rng.standard_normal(208)
        norms = [np.linalg.norm(motion_filter(sb, v, lb)[1]) for lb in np.logspace(-6, 2, 9)]
        assert all(a >= b - 1e-15 for a, b in zip(norms, norms[1:]))

    def test_default_lambda(self, sb):
        f = MotionFilter(sb)
        assert f.lam_b == pytest.approx(0.01 * np.max(np.sum(sb.matrix ** 2, axis=0)))

    def test_stacked(self, sb, rng):
        V = rng.standard_normal((4, 208))
        f = MotionFilter(sb)
        a, _ = f(V)
        np.testing.assert_allclose(a[2], f(V[2])[0], rtol=1e-12)

    def test_rejects_nonpositive(self, sb):
        with pytest.raises(ValueError):
            MotionFilter(sb, 0.0)


class TestTimeDifference:
    def test_reference_zero(self):
        frames = np.arange(12.0).reshape(3, 4)
        d = time_difference(frames)
        assert np.all(d[0] == 0)
        np.testing.assert_array_equal(d[2], [8, 8, 8, 8])

    def test_other_reference(self):
        frames = np.arange(12.0).reshape(3, 4)
        np.testing.assert_array_equal(time_difference(frames, 2)[0], [-8, -8, -8, -8])

    def test_bad_reference(self):
        with pytest.raises(IndexError):
            time_difference(np.zeros((3, 4)), 3)


def test_parse_lambda():
    assert math.isinf(parse_lambda("inf")) and math.isinf(parse_lambda(" Infinity "))
    assert parse_lambda("0.5") == 0.5


def test_cosine_similarity():
    assert cosine_similarity([1, 0], [2, 0]) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [0, 3]) == pytest.approx(0.0)
