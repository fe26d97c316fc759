"""Network forward/Jacobian/initialization/projection tests."""

import numpy as np
import pytest

from swarmsim import dnn
from swarmsim.errors import ContractError

ARCHES = [
    dnn.Architecture((6, 4, 4, 4, 4, 3)),
    dnn.Architecture((2, 3, 1)),
    dnn.Architecture((3, 5, 5, 2)),
]


def random_instance(arch, rng, scale=1.0):
    kappa = rng.standard_normal(arch.input_dim) * scale
    theta = rng.standard_normal(dnn.param_count(arch)) * scale
    return kappa, theta


def fd_jacobian(kappa, theta, arch, h=1e-6):
    p = dnn.param_count(arch)
    jac = np.empty((arch.output_dim, p))
    for i in range(p):
        up = theta.copy()
        dn = theta.copy()
        up[i] += h
        dn[i] -= h
        jac[:, i] = (dnn.forward(kappa, up, arch)[0] - dnn.forward(kappa, dn, arch)[0]) / (2 * h)
    return jac


class TestCounting:
    def test_shipped_arch_103(self):
        assert dnn.param_count(ARCHES[0]) == 103

    def test_small_arch_13(self):
        assert dnn.param_count(ARCHES[1]) == (2 + 1) * 3 + (3 + 1) * 1 == 13

    def test_rejects_no_hidden(self):
        with pytest.raises(ContractError):
            dnn.Architecture((1, 1))

    def test_vec_unvec_roundtrip_exact(self):
        rng = np.random.default_rng(0)
        for arch in ARCHES:
            theta = rng.standard_normal(dnn.param_count(arch))
            mats = dnn.unvec_layers(theta, arch)
            assert np.array_equal(dnn.vec_layers(mats), theta)


class TestForward:
    def test_zero_weights_zero_output(self):
        arch = ARCHES[0]
        out, _ = dnn.forward(np.ones(6), np.zeros(dnn.param_count(arch)), arch)
        assert np.array_equal(out, np.zeros(3))

    def test_bias_only_path(self):
        # zero first layer, zero input: output is the bias row of the last matrix
        arch = dnn.Architecture((2, 3, 2))
        rng = np.random.default_rng(1)
        v2 = rng.standard_normal((4, 2))
        theta = dnn.vec_layers([np.zeros((3, 3)), v2])
        out, _ = dnn.forward(np.zeros(2), theta, arch)
        assert np.allclose(out, v2[-1, :], atol=1e-14)

    def test_shipped_jacobian_shape(self):
        arch = ARCHES[0]
        rng = np.random.default_rng(2)
        kappa, theta = random_instance(arch, rng)
        assert dnn.jacobian_weights(kappa, theta, arch).shape == (3, 103)

    def test_stale_trace_rejected(self):
        arch = ARCHES[1]
        rng = np.random.default_rng(3)
        kappa, theta = random_instance(arch, rng)
        _, trace = dnn.forward(kappa, theta, arch)
        with pytest.raises(ContractError):
            dnn.jacobian_weights(kappa + 1.0, theta, arch, trace)


class TestJacobian:
    @pytest.mark.parametrize("arch", ARCHES, ids=lambda a: "x".join(map(str, a.widths)))
    def test_matches_finite_differences(self, arch):
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(100):
            kappa, theta = random_instance(arch, rng)
            jac = dnn.jacobian_weights(kappa, theta, arch)
            ref = fd_jacobian(kappa, theta, arch)
            err = np.abs(jac - ref).max() / max(1.0, np.abs(ref).max())
            worst = max(worst, err)
        assert worst < 1e-5

    def test_zero_weights_structure(self):
        # upstream products vanish; only the last block survives as I (x) a_k
        arch = ARCHES[0]
        kappa = np.random.default_rng(4).standard_normal(6)
        theta = np.zeros(dnn.param_count(arch))
        out, trace = dnn.forward(kappa, theta, arch)
        jac = dnn.jacobian_weights(kappa, theta, arch, trace)
        assert np.array_equal(jac[:, :-15], np.zeros((3, 103 - 15)))
        a_last = trace.acts[-1]
        assert np.array_equal(a_last, [0, 0, 0, 0, 1])
        assert np.array_equal(jac[:, -15:], np.kron(np.eye(3), a_last))

    def test_vjp_matches_jacobian_transpose(self):
        rng = np.random.default_rng(5)
        for arch in ARCHES:
            kappa, theta = random_instance(arch, rng)
            out, trace = dnn.forward(kappa, theta, arch)
            v = rng.standard_normal(arch.output_dim)
            jac = dnn.jacobian_weights(kappa, theta, arch, trace)
            assert np.allclose(dnn.vjp_weights(v, trace, arch), jac.T @ v,
                               rtol=1e-12, atol=1e-12)


class TestActivations:
    def test_swish_at_zero(self):
        val, der = dnn.activation(0.0, "swish")
        assert val == 0.0 and der == 0.5

    def test_tanh_at_zero(self):
        val, der = dnn.activation(0.0, "tanh")
        assert val == 0.0 and der == 1.0

    @pytest.mark.parametrize("kind", ["swish", "tanh"])
    def test_derivative_finite_differences(self, kind):
        x = np.linspace(-10, 10, 201)
        h = 1e-5
        _, der = dnn.activation(x, kind)
        fd = (dnn.activation(x + h, kind)[0] - dnn.activation(x - h, kind)[0]) / (2 * h)
        assert np.abs(der - fd).max() < 1e-9


class TestKaiming:
    def test_deterministic_per_seed(self):
        arch = ARCHES[0]
        a = dnn.kaiming_init(arch, [3, 4])
        b = dnn.kaiming_init(arch, [3, 4])
        c = dnn.kaiming_init(arch, [3, 5])
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_layer_variance(self):
        # one wide layer so a single draw has >= 1e5 weight entries
        arch = dnn.Architecture((999, 200, 1))
        theta = dnn.kaiming_init(arch, 123)
        v1 = dnn.unvec_layers(theta, arch)[0]
        weights = v1[:-1, :].ravel()
        assert weights.size >= 1e5
        target = 2.0 / 1000.0
        assert abs(weights.var() - target) < 0.05 * target

    def test_bias_rows_zero(self):
        arch = ARCHES[0]
        for mat in dnn.unvec_layers(dnn.kaiming_init(arch, 9), arch):
            assert np.array_equal(mat[-1, :], np.zeros(mat.shape[1]))


class TestProjection:
    def test_interior_passthrough(self):
        rng = np.random.default_rng(6)
        theta = rng.standard_normal(10)
        theta *= 0.5 * 10.0 / np.linalg.norm(theta)
        raw = rng.standard_normal(10)
        assert np.array_equal(dnn.smooth_projection(raw, theta, 10.0), raw)

    def test_outer_shell_removes_radial(self):
        rng = np.random.default_rng(7)
        theta = rng.standard_normal(10)
        theta *= dnn.projection_shell_radius(10.0) / np.linalg.norm(theta)
        raw = 3.0 * theta  # radially outward
        out = dnn.smooth_projection(raw, theta, 10.0)
        assert abs(out @ theta) < 1e-9

    def test_never_increases_radial_growth(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            theta = rng.standard_normal(12)
            theta *= rng.uniform(1.0, 1.06) * 10.0 / np.linalg.norm(theta)
            raw = rng.standard_normal(12)
            out = dnn.smooth_projection(raw, theta, 10.0)
            assert theta @ out <= theta @ raw + 1e-12

    def test_inward_updates_untouched(self):
        rng = np.random.default_rng(9)
        theta = rng.standard_normal(8)
        theta *= 1.04 * 10.0 / np.linalg.norm(theta)
        raw = -theta
        assert np.array_equal(dnn.smooth_projection(raw, theta, 10.0), raw)


class TestBatched:
    def test_matches_single_sample(self):
        rng = np.random.default_rng(10)
        for arch in ARCHES:
            net = dnn.BatchedNet(arch)
            b = 5
            p = dnn.param_count(arch)
            thetas = rng.standard_normal((b, p))
            kappas = rng.standard_normal((b, arch.input_dim))
            vs = rng.standard_normal((b, arch.output_dim))
            out, trace = net.forward(thetas, kappas)
            gs = net.vjp(trace, vs)
            for i in range(b):
                oi, ti = dnn.forward(kappas[i], thetas[i], arch)
                assert np.allclose(out[i], oi, rtol=1e-13, atol=1e-13)
                assert np.allclose(gs[i], dnn.vjp_weights(vs[i], ti, arch),
                                   rtol=1e-12, atol=1e-12)

    def test_project_matches_single(self):
        rng = np.random.default_rng(11)
        arch = ARCHES[1]
        net = dnn.BatchedNet(arch)
        p = dnn.param_count(arch)
        thetas = rng.standard_normal((6, p)) * 8.0
        raws = rng.standard_normal((6, p))
        got = net.project(raws, thetas, 5.0)
        for i in range(6):
            assert np.allclose(got[i], dnn.smooth_projection(raws[i], thetas[i], 5.0),
                               rtol=1e-13, atol=1e-13)


class TestContinuity:
    def test_local_difference_quotient_bounded_by_jacobian(self):
        # ||Phi(k, t+d) - Phi(k, t)|| <= (sup ||J||) ||d|| locally
        rng = np.random.default_rng(12)
        arch = ARCHES[0]
        p = dnn.param_count(arch)
        for _ in range(50):
            kappa = rng.standard_normal(6) * 3
            theta = rng.standard_normal(p)
            delta = rng.standard_normal(p)
            delta *= 1e-4 / np.linalg.norm(delta)
            a, _ = dnn.forward(kappa, theta, arch)
            b, _ = dnn.forward(kappa, theta + delta, arch)
            quotient = np.linalg.norm(b - a) / np.linalg.norm(delta)
            jac_norm = np.linalg.norm(dnn.jacobian_weights(kappa, theta, arch), ord=2)
            assert quotient <= jac_norm * (1.0 + 1e-2) + 1e-9


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        arch = ARCHES[2]
        theta = dnn.kaiming_init(arch, 77)
        path = tmp_path / "weights.json"
        dnn.save_weights(path, theta, arch)
        theta2, arch2 = dnn.load_weights(path)
        assert arch2 == arch
        assert np.array_equal(theta, theta2)
