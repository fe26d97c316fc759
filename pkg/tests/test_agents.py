"""Agent-layer tests: measurement assembly, filter, observer, control,
adaptation, diagnostics, and the batched ensemble path."""

import inspect

import numpy as np
import pytest

from swarmsim import dnn
from swarmsim.agents import (AgentMessages, Gains, ObserverState, SwarmLayer,
                             adaptation_derivs, compute_eta, control_bracket,
                             control_input, diagnostic_errors, observer_derivs,
                             rho_value, w_aux_deriv, w_aux_init)
from swarmsim.errors import ConfigError, ProtocolError
from swarmsim.scenario import paper_scenario, validate_config
from swarmsim.topology import build_interaction_matrix, build_laplacian, ring_graph

G = Gains(k1=0.65, k2=0.65, k3=0.65, k4=0.65, k5=0.65, k6=1e-4, gamma=0.01)
ARCH = dnn.Architecture((6, 4, 4, 4, 4, 3))


def empty_messages():
    return AgentMessages(neighbors=(), d={}, gu={}, theta={})


class TestGains:
    def test_rejects_negative(self):
        with pytest.raises(ConfigError):
            Gains(k1=-0.1, k2=1, k3=1, k4=1, k5=1, k6=1, gamma=1)

    def test_composites(self):
        assert G.k34 == pytest.approx(1.3)
        assert G.k345 == pytest.approx(1.95)
        assert G.w_eta_coef == pytest.approx(1 - 0.65 ** 2 - 0.65 * 0.65)
        assert G.obs_eta_coef == pytest.approx(0.65 ** 2 - 2.0)
        assert G.obs_rho_coef == pytest.approx(2 * 0.65 + 0.65 + 0.65)


class TestComputeEta:
    def test_lone_agent_identity_sensing(self):
        e = np.array([3.0, -1.0, 2.0])
        eta = compute_eta(empty_messages(), e, np.eye(3), 1)
        assert np.array_equal(eta, e)

    def test_neighbors_only(self):
        msgs = AgentMessages(neighbors=(2,), d={2: np.array([1.0, 2.0, 3.0])},
                             gu={}, theta={})
        eta = compute_eta(msgs, np.zeros(1), np.zeros((1, 3)), 0)
        assert np.array_equal(eta, [1.0, 2.0, 3.0])

    def test_missing_message(self):
        msgs = AgentMessages(neighbors=(1, 2), d={1: np.zeros(3)}, gu={}, theta={})
        with pytest.raises(ProtocolError):
            compute_eta(msgs, np.zeros(1), np.zeros((1, 3)), 0)

    def test_measured_equals_analytic_form(self):
        # sum_j d_ij + b C^T y == b C^T C e_i - sum_j (e_j - e_i), noise-free
        rng = np.random.default_rng(31)
        cfg = validate_config(paper_scenario())
        graph = ring_graph(3)
        q0 = rng.uniform(-5, 5, 3)
        q = rng.uniform(-3000, 3000, (3, 3))
        e = q0[None, :] - q
        for i in range(3):
            c = cfg.sensing.outputs[i]
            nbrs = graph.neighbors(i)
            msgs = AgentMessages(neighbors=nbrs,
                                 d={j: q[j] - q[i] for j in nbrs}, gu={}, theta={})
            y = c @ (q0 - q[i])
            measured = compute_eta(msgs, y, c, 1)
            analytic = c.T @ c @ e[i] - sum(e[j] - e[i] for j in nbrs)
            assert np.allclose(measured, analytic, atol=1e-12 * max(1, abs(analytic).max()))


class TestRhoFilter:
    def test_zero_initialization(self):
        eta_tilde_0 = np.array([10.0, -4.0, 2.0])
        w0 = w_aux_init(eta_tilde_0, G)
        assert np.array_equal(rho_value(w0, eta_tilde_0, G), np.zeros(3))

    def test_rho_stays_zero_for_zero_error(self):
        w = np.zeros(3)
        for _ in range(100):
            rho = rho_value(w, np.zeros(3), G)
            w = w + 0.01 * w_aux_deriv(np.zeros(3), rho, G)
        assert np.array_equal(w, np.zeros(3))

    def test_constant_error_steady_state(self):
        # first-order ODE equilibrium: rho_ss = (1 - k3^2 - k3 k4)/(k3+k4+k5) c
        c = np.array([2.0, -1.0, 0.5])
        w = w_aux_init(c, G)
        dt = 0.005
        for _ in range(12000):  # 60 s >> time constant 1/1.95
            def f(wv):
                return w_aux_deriv(c, rho_value(wv, c, G), G)
            k1 = f(w)
            k2 = f(w + dt / 2 * k1)
            k3 = f(w + dt / 2 * k2)
            k4 = f(w + dt * k3)
            w = w + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        rho_ss = rho_value(w, c, G)
        expect = (1 - 0.65 ** 2 - 0.65 * 0.65) / 1.95 * c
        assert np.allclose(rho_ss, expect, rtol=1e-6)
        assert abs(expect[0] / c[0] - 0.07948717948717949) < 1e-15


class TestObserver:
    def test_all_zero_is_stationary(self):
        obs = ObserverState(np.zeros(3), np.zeros(3), np.zeros(3))
        d = observer_derivs(obs, empty_messages(), np.zeros(3), np.zeros(3),
                            np.zeros(3), G, 1, np.eye(3))
        assert np.array_equal(d.eta_hat_dot, np.zeros(3))
        assert np.array_equal(d.zeta_hat_dot, np.zeros(3))
        assert np.array_equal(d.w_aux_dot, np.zeros(3))

    def test_error_injection_gain(self):
        obs = ObserverState(np.zeros(3), np.zeros(3), np.zeros(3))
        d = observer_derivs(obs, empty_messages(), np.zeros(3),
                            np.array([1.0, 0, 0]), np.zeros(3), G, 0, np.zeros((1, 3)))
        assert np.allclose(d.zeta_hat_dot, [-(0.65 ** 2 - 2.0), 0.0, 0.0])
        assert abs(d.zeta_hat_dot[0] - 1.5775) < 1e-12

    def test_ensemble_identity(self):
        # stacked per-agent observer derivatives == -H g u - (k3^2-2) eta~ - (...) rho
        rng = np.random.default_rng(32)
        cfg = validate_config(paper_scenario())
        graph = ring_graph(3)
        sensing_outputs = cfg.sensing.outputs[:3]
        lap = build_laplacian(graph)
        from swarmsim.topology import SensingModel

        sensing = SensingModel(outputs=sensing_outputs, flags=(1, 1, 1))
        h = build_interaction_matrix(lap, sensing)
        gu = rng.standard_normal((3, 3))
        eta_t = rng.standard_normal((3, 3))
        rho = rng.standard_normal((3, 3))
        stacked = np.empty((3, 3))
        for i in range(3):
            nbrs = graph.neighbors(i)
            msgs = AgentMessages(neighbors=nbrs, d={},
                                 gu={j: gu[j] for j in nbrs}, theta={})
            obs = ObserverState(np.zeros(3), rng.standard_normal(3), np.zeros(3))
            d = observer_derivs(obs, msgs, gu[i], eta_t[i], rho[i], G, 1,
                                sensing_outputs[i])
            stacked[i] = d.zeta_hat_dot
        expect = (-(h @ gu.reshape(-1)).reshape(3, 3)
                  - G.obs_eta_coef * eta_t - G.obs_rho_coef * rho)
        assert np.allclose(stacked, expect, atol=1e-12)


class TestControl:
    def test_zero_everything(self):
        u = control_input(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3),
                          np.zeros(dnn.param_count(ARCH)), 1.0, G, ARCH)
        assert np.array_equal(u, np.zeros(3))

    def test_unit_range_proportional_term(self):
        u = control_input(np.array([1.0, 0, 0]), np.zeros(3), np.zeros(3),
                          np.zeros(3), np.zeros(dnn.param_count(ARCH)), 1.0, G, ARCH)
        assert np.allclose(u, [0.65 * 0.65, 0.0, 0.0], atol=1e-15)

    def test_range_scales_transverse_channels(self):
        eta = np.array([0.3, -0.4, 0.8])
        args = (eta, np.zeros(3), np.zeros(3), np.zeros(3),
                np.zeros(dnn.param_count(ARCH)))
        u1 = control_input(*args, 1.0, G, ARCH)
        u2 = control_input(*args, 2.0, G, ARCH)
        assert abs(u2[0] - u1[0]) < 1e-15
        assert np.allclose(u2[1:], 2.0 * u1[1:], rtol=1e-14)


class TestAdaptation:
    def test_all_zero(self):
        p = dnn.param_count(ARCH)
        out = adaptation_derivs(np.zeros(p), [], np.zeros(3), np.zeros(3), G, 10.0, ARCH)
        assert np.array_equal(out, np.zeros(p))

    def test_consensus_term_with_equal_weights(self):
        # zero drive (zeta_hat = -k1 eta) and equal neighbor weights leave
        # only the forgetting pull -gamma k6 theta
        rng = np.random.default_rng(33)
        p = dnn.param_count(ARCH)
        theta = rng.standard_normal(p)
        theta *= 0.3 * 10.0 / np.linalg.norm(theta)
        eta = rng.standard_normal(3)
        out = adaptation_derivs(theta, [theta, theta], eta, -G.k1 * eta, G, 10.0, ARCH)
        drive = dnn.vjp_weights(np.zeros(3), dnn.forward(
            np.concatenate([eta, -G.k1 * eta]), theta, ARCH)[1], ARCH)
        assert np.array_equal(drive, np.zeros(p))
        assert np.allclose(out, -G.gamma * G.k6 * theta, rtol=1e-12)

    def test_interior_weights_unprojected(self):
        rng = np.random.default_rng(34)
        p = dnn.param_count(ARCH)
        theta = rng.standard_normal(p)
        theta *= 0.5 * 10.0 / np.linalg.norm(theta)
        eta = rng.standard_normal(3)
        zeta = rng.standard_normal(3)
        kappa = np.concatenate([eta, zeta])
        _, trace = dnn.forward(kappa, theta, ARCH)
        raw = G.gamma * (dnn.vjp_weights(zeta + G.k1 * eta, trace, ARCH)
                         - G.k6 * theta)
        out = adaptation_derivs(theta, [], eta, zeta, G, 10.0, ARCH)
        assert np.allclose(out, raw, rtol=1e-13, atol=1e-15)


class TestDiagnostics:
    def test_perfect_observer(self):
        rng = np.random.default_rng(35)
        lap = build_laplacian(ring_graph(3))
        from swarmsim.topology import SensingModel

        cfg = validate_config(paper_scenario())
        sensing = SensingModel(outputs=cfg.sensing.outputs[:3], flags=(1, 1, 1))
        h = build_interaction_matrix(lap, sensing)
        q0 = rng.uniform(-5, 5, 3)
        q0d = rng.uniform(-1, 1, 3)
        q = rng.uniform(-2000, 2000, (3, 3))
        qd = rng.uniform(-5, 5, (3, 3))
        e = q0[None] - q
        ed = q0d[None] - qd
        eta = (h @ e.reshape(-1)).reshape(3, 3)
        zeta = (h @ ed.reshape(-1)).reshape(3, 3)
        err = diagnostic_errors(q0, q0d, q, qd, eta, zeta, np.zeros((3, 3)), G, h)
        assert np.allclose(err.eta_tilde, 0.0, atol=1e-12)
        assert np.allclose(err.zeta_tilde, 0.0, atol=1e-12)

    def test_single_agent_identity_sensing(self):
        h = np.eye(3)  # lone agent, b=1, C=I
        q0 = np.array([1.0, 2.0, 3.0])
        q0d = np.array([0.1, 0.2, 0.3])
        q = np.array([[0.5, 0.5, 0.5]])
        qd = np.array([[0.0, 0.0, 0.0]])
        err = diagnostic_errors(q0, q0d, q, qd, np.zeros((1, 3)), np.zeros((1, 3)),
                                np.zeros((1, 3)), G, h)
        assert np.allclose(err.eta, err.e)
        assert np.allclose(err.zeta, q0d[None] - qd)

    def test_filtered_error_ensemble_identity(self):
        # H r == eta_dot + k1 eta on random states
        rng = np.random.default_rng(36)
        cfg = validate_config(paper_scenario())
        lap = build_laplacian(ring_graph(6))
        h = build_interaction_matrix(lap, cfg.sensing)
        q0 = rng.uniform(-10, 10, 3)
        q0d = rng.uniform(-2, 2, 3)
        q = rng.uniform(-4000, 4000, (6, 3))
        qd = rng.uniform(-10, 10, (6, 3))
        err = diagnostic_errors(q0, q0d, q, qd, np.zeros((6, 3)), np.zeros((6, 3)),
                                np.zeros((6, 3)), G, h)
        lhs = (h @ err.r.reshape(-1)).reshape(6, 3)
        rhs = err.zeta + G.k1 * err.eta
        scale = max(1.0, np.abs(rhs).max())
        assert np.abs(lhs - rhs).max() / scale < 1e-10


class TestSwarmLayer:
    def make_layer(self, control_frame="rect"):
        cfg = validate_config(paper_scenario())
        lap = build_laplacian(cfg.graph)
        return cfg, SwarmLayer(cfg.sensing, lap, cfg.gains, cfg.arch,
                               cfg.theta_bar, cfg.eps_proj, control_frame)

    def test_matches_per_agent_operations(self):
        # the batched ensemble path equals the scalar operations stacked
        rng = np.random.default_rng(37)
        cfg, layer = self.make_layer()
        n = cfg.n_agents
        p = dnn.param_count(cfg.arch)
        eta = rng.standard_normal((n, 3)) * 100
        eta_hat = rng.standard_normal((n, 3)) * 50
        zeta_hat = rng.standard_normal((n, 3)) * 10
        w_aux = rng.standard_normal((n, 3))
        theta = rng.standard_normal((n, p))
        eh_d, zh_d, w_d, th_d, u, gu = layer.derivs(eta, eta_hat, zeta_hat,
                                                    w_aux, theta)
        eta_t = eta - eta_hat
        gains = cfg.gains
        gu_expect = np.empty((n, 3))
        for i in range(n):
            kappa = np.concatenate([eta[i], zeta_hat[i]])
            phi_out, _ = dnn.forward(kappa, theta[i], cfg.arch)
            rho_i = rho_value(w_aux[i], eta_t[i], gains)
            gu_expect[i] = control_bracket(phi_out, eta[i], zeta_hat[i],
                                           eta_t[i], rho_i, gains)
        assert np.allclose(gu, gu_expect, rtol=1e-12, atol=1e-12)
        assert np.allclose(u, gu_expect, rtol=1e-12, atol=1e-12)  # rect frame: g = I
        for i in range(n):
            nbrs = cfg.graph.neighbors(i)
            msgs = AgentMessages(neighbors=nbrs, d={},
                                 gu={j: gu[j] for j in nbrs},
                                 theta={j: theta[j] for j in nbrs})
            obs = ObserverState(eta_hat[i], zeta_hat[i], w_aux[i])
            rho_i = rho_value(w_aux[i], eta_t[i], gains)
            d = observer_derivs(obs, msgs, gu[i], eta_t[i], rho_i, gains, 1,
                                cfg.sensing.outputs[i])
            assert np.allclose(zh_d[i], d.zeta_hat_dot, rtol=1e-10, atol=1e-10)
            assert np.allclose(eh_d[i], d.eta_hat_dot, atol=1e-15)
            assert np.allclose(w_d[i], d.w_aux_dot, rtol=1e-12, atol=1e-14)
            th_expect = adaptation_derivs(theta[i], [theta[j] for j in nbrs],
                                          eta[i], zeta_hat[i], gains,
                                          cfg.theta_bar, cfg.arch, cfg.eps_proj)
            assert np.allclose(th_d[i], th_expect, rtol=1e-10, atol=1e-12)

    def test_spherical_frame_scales_transverse_channels(self):
        rng = np.random.default_rng(38)
        cfg, layer = self.make_layer("spherical")
        n = cfg.n_agents
        p = dnn.param_count(cfg.arch)
        eta = rng.standard_normal((n, 3))
        sigma = rng.uniform(1.0, 5.0, n)
        _, _, _, _, u, gu = layer.derivs(eta, np.zeros((n, 3)), np.zeros((n, 3)),
                                         np.zeros((n, 3)), np.zeros((n, p)), sigma)
        assert np.allclose(u[:, 0], gu[:, 0])
        assert np.allclose(u[:, 1], sigma * gu[:, 1])
        assert np.allclose(u[:, 2], sigma * gu[:, 2])

    def test_retraction_onto_shell(self):
        cfg, layer = self.make_layer()
        p = dnn.param_count(cfg.arch)
        theta = 2.0 * np.ones((3, p))
        norms = np.linalg.norm(theta, axis=1)
        shell = dnn.projection_shell_radius(cfg.theta_bar, cfg.eps_proj)
        assert norms[0] > shell
        moved = layer.retract_weights(theta)
        assert moved == 3
        assert np.allclose(np.linalg.norm(theta, axis=1), shell, rtol=1e-12)

    def test_information_hygiene_signatures(self):
        # agent-side operations must not accept ground-truth parameters
        forbidden = {"q0", "q0_dot", "q_truth", "world", "target"}
        for fn in (compute_eta, rho_value, w_aux_deriv, observer_derivs,
                   control_input, adaptation_derivs, SwarmLayer.derivs):
            params = set(inspect.signature(fn).parameters)
            assert not (params & forbidden), fn.__name__
        # the scorekeeper is the only truth consumer
        diag_params = set(inspect.signature(diagnostic_errors).parameters)
        assert {"q0", "q0_dot"} <= diag_params
