import numpy as np
import pytest

from lambdakit import errors, layer, relpos
from lambdakit.oracles import _loop_matmul, oracle_lambda_forward
from lambdakit.verify import suite_oracle


def cfg(**kw):
    base = dict(d_in=3, d_out=4, k=2, h=2, geometry=relpos.seq(4))
    base.update(kw)
    return layer.LambdaConfig(**base)


class TestConfig:
    def test_head_divisibility(self):
        with pytest.raises(errors.ConfigError):
            cfg(d_out=5)

    def test_value_depth(self):
        assert cfg(d_out=6, h=3).v == 2

    def test_bad_norm_and_impl(self):
        with pytest.raises(errors.ConfigError):
            cfg(key_norm="tanh")
        with pytest.raises(errors.ConfigError):
            cfg(impl="fft")
        with pytest.raises(errors.ConfigError):
            cfg(impl="conv", boundary="circular")


class TestInit:
    def test_seed_determinism(self):
        c = cfg()
        a, b = layer.init_params(c, seed=42), layer.init_params(c, seed=42)
        for x, y in zip(a.arrays().values(), b.arrays().values()):
            assert np.array_equal(x, y)
        other = layer.init_params(c, seed=43)
        assert not np.array_equal(a.w_q, other.w_q)

    def test_key_value_variance(self):
        # >= 1e5 draws of the stated distributions; variance within 5% of 1/d
        p = layer.init_params(cfg(d_in=1024, d_out=128, k=64, h=2), seed=7)
        draws = np.concatenate([p.w_k.ravel(), p.w_v.ravel()])
        assert draws.size >= 1e5
        assert abs(draws.var() * 1024 - 1) < 0.05

    def test_query_variance(self):
        c = cfg(d_in=256, d_out=128, k=8, h=64)
        p = layer.init_params(c, seed=11)
        assert p.w_q.size >= 1e5
        assert abs(p.w_q.var() * (c.k * c.d_in) - 1) < 0.05

    def test_embedding_unit_normal(self):
        c = cfg(geometry=relpos.seq(300), k=64, d_out=4, h=2)
        p = layer.init_params(c, seed=3)
        assert p.rel.shape == (599, 64)
        assert abs(p.rel.var() - 1) < 0.05

    def test_hook_identity_init(self):
        p = layer.init_params(cfg(qv_hook=True), seed=1)
        assert np.array_equal(p.q_scale, np.ones(4))
        assert np.array_equal(p.v_shift, np.zeros(2))


class TestProjectQkv:
    def test_zero_query_projection_zeroes_output(self, rng):
        c = cfg()
        p = layer.init_params(c, seed=5)
        p.w_q[:] = 0.0
        X = rng.standard_normal((2, 4, 3))
        assert not layer.lambda_layer_forward(X, None, p, c).any()

    def test_identity_hook_matches_disabled(self, rng):
        c_off, c_on = cfg(), cfg(qv_hook=True)
        p_on = layer.init_params(c_on, seed=5)
        p_off = layer.init_params(c_off, seed=5)
        X = rng.standard_normal((2, 4, 3))
        a = layer.lambda_layer_forward(X, None, p_off, c_off)
        b = layer.lambda_layer_forward(X, None, p_on, c_on)
        assert np.abs(a - b).max() == 0.0

    def test_projections_match_loop_oracle(self, rng):
        c = cfg()
        p = layer.init_params(c, seed=5)
        X = rng.standard_normal((2, 4, 3))
        Q, K, V = layer.project_qkv(X, X, p, c)
        assert np.abs(K - _loop_matmul(X, p.w_k)).max() < 1e-12
        assert np.abs(V - _loop_matmul(X, p.w_v)).max() < 1e-12
        q_flat = _loop_matmul(X, p.w_q).reshape(2, 4, 2, 2).transpose(0, 2, 1, 3)
        assert np.abs(Q - q_flat).max() < 1e-12

    def test_channel_mismatch(self, rng):
        c = cfg()
        p = layer.init_params(c, seed=5)
        with pytest.raises(errors.ShapeError):
            layer.project_qkv(rng.standard_normal((1, 4, 5)), rng.standard_normal((1, 4, 5)), p, c)


class TestNormalizeKeys:
    def test_softmax_constant_keys(self):
        K = np.ones((1, 4, 2))
        out = layer.normalize_keys(K, "softmax")
        assert np.abs(out - 0.25).max() < 1e-15

    def test_none_is_identity(self, rng):
        K = rng.standard_normal((2, 3, 2))
        assert layer.normalize_keys(K, "none") is K

    def test_softmax_columns_sum_to_one(self, rng):
        K = rng.standard_normal((3, 5, 4))
        out = layer.normalize_keys(K, "softmax")
        assert np.abs(out.sum(axis=1) - 1).max() < 1e-12

    def test_l2_normalizes_along_context(self, rng):
        K = rng.standard_normal((2, 5, 3))
        out = layer.normalize_keys(K, "l2")
        assert np.abs(np.linalg.norm(out, axis=1) - 1).max() < 1e-12

    def test_joint_intra_softmax_mass(self, rng):
        K = rng.standard_normal((2, 3, 2, 4))
        out = layer.normalize_keys(K, "softmax", "joint")
        assert np.abs(out.sum(axis=(1, 3)) - 1).max() < 1e-12

    def test_per_u_intra_softmax_mass(self, rng):
        K = rng.standard_normal((2, 3, 2, 4))
        out = layer.normalize_keys(K, "softmax", "per_u")
        assert np.abs(out.sum(axis=1) - 1).max() < 1e-12


class TestContentLambda:
    def test_symmetric_average(self):
        K_norm = np.array([[[0.5], [0.5]]])  # [b=1, m=2, k=1]
        V = np.array([[[2.0], [4.0]]])
        lam = layer.content_lambda(K_norm, V)
        assert lam.shape == (1, 1, 1)
        assert lam[0, 0, 0] == 3.0

    def test_zero_values(self, rng):
        lam = layer.content_lambda(rng.standard_normal((2, 3, 2)), np.zeros((2, 3, 2)))
        assert not lam.any()

    def test_seeded_vs_loop_oracle(self, rng):
        K_norm = rng.standard_normal((2, 4, 3))
        V = rng.standard_normal((2, 4, 2))
        from lambdakit.oracles import oracle_contract

        want = oracle_contract("bmk,bmv->bkv", K_norm, V)
        assert np.abs(layer.content_lambda(K_norm, V) - want).max() < 1e-12


class TestPositionLambdas:
    def test_zero_embeddings_collapse_to_content(self, rng):
        c = cfg()
        p = layer.init_params(c, seed=9)
        p.rel[:] = 0.0
        X = rng.standard_normal((2, 4, 3))
        from lambdakit.variants import content_only_forward

        full = layer.lambda_layer_forward(X, None, p, c)
        content = content_only_forward(X, None, p, c)
        assert np.array_equal(full, content)

    def test_single_query_collapses_to_content_form(self, rng):
        E = rng.standard_normal((1, 3, 2))   # n=1
        V = rng.standard_normal((2, 3, 4))
        lam_p = layer.position_lambdas_einsum(E, V)
        lam_c = layer.content_lambda(np.broadcast_to(E[0], (2, 3, 2)).copy(), V)
        assert np.abs(lam_p[:, 0] - lam_c).max() < 1e-12

    def test_seeded_vs_loop_oracle(self, rng):
        from lambdakit.oracles import oracle_contract

        E = rng.standard_normal((3, 4, 2))
        V = rng.standard_normal((2, 4, 3))
        want = oracle_contract("nmk,bmv->bnkv", E, V)
        assert np.abs(layer.position_lambdas_einsum(E, V) - want).max() < 1e-12


class TestApplyLambdas:
    def test_identity_lambda_returns_query(self):
        Q = np.array([0.3, 0.7]).reshape(1, 1, 1, 2)
        lam_c = np.eye(2).reshape(1, 2, 2)
        out = layer.apply_lambdas(Q, lam_c, None)
        assert np.abs(out - [0.3, 0.7]).max() == 0.0

    def test_linear_in_queries(self, rng):
        Q = rng.standard_normal((2, 2, 3, 2))
        lam_c = rng.standard_normal((2, 2, 4))
        lam_p = rng.standard_normal((2, 3, 2, 4))
        out = layer.apply_lambdas(Q, lam_c, lam_p)
        doubled = layer.apply_lambdas(2 * Q, lam_c, lam_p)
        assert np.abs(doubled - 2 * out).max() == 0.0

    def test_two_heads_equal_slice_and_stitch(self, rng):
        Q = rng.standard_normal((2, 2, 3, 2))
        lam_c = rng.standard_normal((2, 2, 4))
        lam_p = rng.standard_normal((2, 3, 2, 4))
        both = layer.apply_lambdas(Q, lam_c, lam_p)
        parts = [
            layer.apply_lambdas(Q[:, h : h + 1], lam_c, lam_p) for h in range(2)
        ]
        assert np.abs(both - np.concatenate(parts, axis=2)).max() < 1e-12


class TestForward:
    def test_seeded_vs_per_query_oracle(self, rng):
        c = cfg()
        p = layer.init_params(c, seed=21)
        X = rng.standard_normal((2, 4, 3))
        Y = layer.lambda_layer_forward(X, None, p, c)
        E = relpos.expand_embeddings(layer.config_index_map(c), p.rel)
        Y_ref = oracle_lambda_forward(X, X, p.w_q, p.w_k, p.w_v, E, h=2)
        assert np.abs(Y - Y_ref).max() < 1e-12

    def test_context_permutation_with_zero_embeddings(self, rng):
        c = cfg()
        p = layer.init_params(c, seed=23)
        p.rel[:] = 0.0
        X = rng.standard_normal((2, 4, 3))
        perm = rng.permutation(4)
        base = layer.lambda_layer_forward(X, X, p, c)
        shuffled = layer.lambda_layer_forward(X, X[:, perm], p, c)
        assert np.abs(base - shuffled).max() < 1e-12

    def test_circular_shift_equivariance_exact(self, rng):
        c = cfg(geometry=relpos.seq(6), boundary="circular")
        p = layer.init_params(c, seed=31)
        X = rng.standard_normal((1, 6, 3))
        base = layer.lambda_layer_forward(X, None, p, c, exact=True)
        for t in (1, 2, 5):
            rolled = layer.lambda_layer_forward(np.roll(X, t, axis=1), None, p, c, exact=True)
            assert np.array_equal(rolled, np.roll(base, t, axis=1)), f"shift {t}"

    def test_circular_grid_shift_equivariance_exact(self, rng):
        c = cfg(d_in=2, d_out=2, k=2, h=1, geometry=relpos.grid(3, 3), boundary="circular")
        p = layer.init_params(c, seed=33)
        X = rng.standard_normal((1, 9, 2))
        base = layer.lambda_layer_forward(X, None, p, c, exact=True)
        grid_x = X.reshape(1, 3, 3, 2)
        shifted = np.roll(grid_x, (1, 2), axis=(1, 2)).reshape(1, 9, 2)
        got = layer.lambda_layer_forward(shifted, None, p, c, exact=True)
        want = np.roll(base.reshape(1, 3, 3, 2), (1, 2), axis=(1, 2)).reshape(1, 9, 2)
        assert np.array_equal(got, want)

    def test_u_gt_one_rejected(self, rng):
        c = cfg(u=2)
        p = layer.init_params(c, seed=1)
        with pytest.raises(errors.ConfigError):
            layer.lambda_layer_forward(rng.standard_normal((1, 4, 3)), None, p, c)

    def test_parameter_count_closed_form(self):
        c = cfg(u=3)
        p = layer.init_params(c, seed=1)
        total = sum(a.size for a in (p.w_q, p.w_k, p.w_v, p.rel))
        assert total == layer.parameter_count(c)


def test_oracle_suite_green():
    rep = suite_oracle(1729)
    assert rep.passed, rep.failing()
