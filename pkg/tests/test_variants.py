import numpy as np
import pytest

from lambdakit import errors, layer, relpos, variants
from lambdakit.oracles import (
    counted_intra_depth_kernel,
    counted_lambda_kernel,
    counted_masked_kernel,
    counted_multihead_kernel,
)
from lambdakit.relpos import build_causal_mask, expand_embeddings, seq
from lambdakit.verify import suite_masked, suite_variants


def cfg(**kw):
    base = dict(d_in=3, d_out=4, k=2, h=2, geometry=seq(4))
    base.update(kw)
    return layer.LambdaConfig(**base)


class TestMaskSpec:
    def test_binary_required(self):
        with pytest.raises(errors.ConfigError):
            variants.MaskSpec(np.full((2, 2), 0.5))

    def test_empty_row_rejected(self):
        m = np.ones((3, 3))
        m[1] = 0
        with pytest.raises(errors.ConfigError):
            variants.MaskSpec(m)


class TestMasked:
    def test_all_ones_equals_unmasked(self, rng):
        c = cfg()
        p = layer.init_params(c, seed=3)
        X = rng.standard_normal((2, 4, 3))
        a = variants.masked_lambda_forward(X, None, p, c, variants.MaskSpec(np.ones((4, 4))))
        b = layer.lambda_layer_forward(X, None, p, c)
        # per-query renormalization computes the same value through a
        # different fp expression than softmax-then-contract
        assert np.abs(a - b).max() < 1e-12

    def test_future_perturbation_bit_identical(self, rng):
        c = cfg(geometry=seq(5))
        p = layer.init_params(c, seed=5)
        X = rng.standard_normal((2, 5, 3))
        mask = variants.MaskSpec(build_causal_mask(5))
        base = variants.masked_lambda_forward(X, None, p, c, mask)
        for cut in range(1, 5):
            X2 = X.copy()
            X2[:, cut:, :] = rng.standard_normal(X2[:, cut:, :].shape) * 50
            pert = variants.masked_lambda_forward(X2, None, p, c, mask)
            assert np.array_equal(base[:, :cut], pert[:, :cut])

    def test_future_garbage_and_overflow_tolerated(self, rng):
        # masked sums gather in-context terms, so even inf/NaN-producing
        # values in masked positions cannot poison earlier outputs
        c = cfg(geometry=seq(5))
        p = layer.init_params(c, seed=5)
        X = rng.standard_normal((2, 5, 3))
        mask = variants.MaskSpec(build_causal_mask(5))
        base = variants.masked_lambda_forward(X, None, p, c, mask)
        X2 = X.copy()
        X2[:, 3:, :] = 1e6  # exp(keys) overflows to inf at these positions
        pert = variants.masked_lambda_forward(X2, None, p, c, mask)
        assert np.array_equal(base[:, :3], pert[:, :3])
        assert np.isfinite(pert[:, :3]).all()

    def test_prefix_truncation_oracle(self, rng):
        c = cfg(geometry=seq(4))
        p = layer.init_params(c, seed=7)
        X = rng.standard_normal((2, 4, 3))
        mask = variants.MaskSpec(build_causal_mask(4))
        got = variants.masked_lambda_forward(X, None, p, c, mask)
        E = expand_embeddings(layer.config_index_map(c), p.rel)
        for n in range(4):
            y = layer.lambda_layer_forward(
                X[:, n : n + 1, :], X[:, : n + 1, :], p, c,
                E=E[n : n + 1, : n + 1, :],
            )
            assert np.abs(got[:, n : n + 1] - y).max() < 1e-12, n

    def test_vs_counted_oracle(self, rng):
        c = cfg(geometry=seq(4))
        p = layer.init_params(c, seed=9)
        X = rng.standard_normal((2, 4, 3))
        mask = build_causal_mask(4)
        got = variants.masked_lambda_forward(X, None, p, c, variants.MaskSpec(mask))
        Q, K, V = layer.project_qkv(X, X, p, c)
        E = expand_embeddings(layer.config_index_map(c), p.rel)
        want, counter = counted_masked_kernel(Q, K, E, V, mask)
        assert np.abs(got - want).max() < 1e-12
        z = 4 * 5 // 2
        assert counter.stages["generate_position"] == 2 * z * 2 * 2

    def test_mask_shape_checked(self, rng):
        c = cfg()
        p = layer.init_params(c, seed=1)
        with pytest.raises(errors.ShapeError):
            variants.masked_lambda_forward(
                rng.standard_normal((1, 4, 3)), None, p, c,
                variants.MaskSpec(np.ones((3, 3))),
            )

    def test_allocation_accounting(self, rng):
        c = cfg(d_out=8, k=1, h=8, geometry=seq(6))
        p = layer.init_params(c, seed=2)
        X = rng.standard_normal((2, 6, 3))
        log = []
        variants.masked_lambda_forward(
            X, None, p, c, variants.MaskSpec(build_causal_mask(6)), alloc_log=log
        )
        b, n, m, k, v, h = 2, 6, 6, 1, 1, 8
        bound = b * n * k * v + k * n * m
        assert max(s for _, _, s in log) <= bound
        assert bound < b * h * n * m  # an attention map would not fit the bound
        assert {name for name, _, _ in log} >= {
            "key_exp", "expanded_embeddings", "content_numer", "content_denom",
            "content_lambdas", "position_lambdas",
        }

    def test_suite_green(self):
        rep = suite_masked(1729)
        assert rep.passed, rep.failing()


class TestMultihead:
    def test_h1_collapses_to_multiquery(self, rng):
        c = cfg(h=1)
        p = layer.init_params(c, seed=11)
        mh = variants.tied_multihead_params(p, 1)
        X = rng.standard_normal((2, 4, 3))
        a = variants.multihead_lambda_forward(X, None, mh, c)
        b = layer.lambda_layer_forward(X, None, p, c)
        assert np.abs(a - b).max() < 1e-12

    def test_tied_heads_equal_multiquery(self, rng):
        c = cfg()
        p = layer.init_params(c, seed=13)
        mh = variants.tied_multihead_params(p, c.h)
        X = rng.standard_normal((2, 4, 3))
        a = variants.multihead_lambda_forward(X, None, mh, c)
        b = layer.lambda_layer_forward(X, None, p, c)
        assert np.abs(a - b).max() < 1e-12

    def test_vs_counted_oracle_and_ratio(self, rng):
        for h in (2, 4):
            c = cfg(d_out=2 * h, h=h, geometry=seq(2), k=2, d_in=2)
            mh = variants.init_multihead_params(c, seed=15)
            X = rng.standard_normal((2, 2, 2))
            got = variants.multihead_lambda_forward(X, None, mh, c)
            Q = (X @ mh.w_q).reshape(2, 2, h, 2).transpose(0, 2, 1, 3)
            K = np.einsum("bmd,hdk->bhmk", X, mh.w_k)
            V = np.einsum("bmd,hdv->bhmv", X, mh.w_v)
            Kn = layer.normalize_keys(K.reshape(2 * h, 2, 2), "softmax").reshape(2, h, 2, 2)
            E = np.stack([
                expand_embeddings(layer.config_index_map(c), mh.rel[i]) for i in range(h)
            ])
            want, counter = counted_multihead_kernel(Q, Kn, E, V)
            assert np.abs(got - want).max() < 1e-12
            # generate cost is h times the multi-query kernel's
            _, mq_counter = counted_lambda_kernel(Q, Kn[:, 0], E[0], V[:, 0])
            assert counter.generate_total() == h * mq_counter.generate_total()

    def test_u_rejected(self, rng):
        c = cfg(u=2)
        mh = variants.init_multihead_params(cfg(), seed=1)
        with pytest.raises(errors.ConfigError):
            variants.multihead_lambda_forward(rng.standard_normal((1, 4, 3)), None, mh, c)


class TestIntraDepth:
    def test_u1_bit_identical(self, rng):
        c = cfg()
        p = layer.init_params(c, seed=17)
        X = rng.standard_normal((2, 4, 3))
        a = variants.intra_depth_forward(X, None, p, c)
        b = layer.lambda_layer_forward(X, None, p, c)
        assert np.array_equal(a, b)

    def test_duplicated_values_halved_embeddings(self, rng):
        from lambdakit.tensor import contract

        E = rng.standard_normal((4, 4, 2))
        V = rng.standard_normal((2, 4, 3))
        E2 = np.repeat((E / 2)[..., None], 2, axis=3)
        V2 = np.repeat(V[..., None], 2, axis=3)
        lam1 = contract("nmk,bmv->bnkv", E, V)
        lam2 = contract("knmu,bmvu->bnkv", np.transpose(E2, (2, 0, 1, 3)), V2)
        assert np.abs(lam1 - lam2).max() < 1e-12

    def test_u3_vs_counted_oracle(self, rng):
        c = cfg(u=3)
        p = layer.init_params(c, seed=19)
        X = rng.standard_normal((2, 4, 3))
        got = variants.intra_depth_forward(X, None, p, c)
        Q, K, V = layer.project_qkv(X, X, p, c)
        Kn = layer.normalize_keys(K, "softmax", "joint")
        E = expand_embeddings(layer.config_index_map(c), p.rel)
        want, counter = counted_intra_depth_kernel(Q, Kn, E, V)
        assert np.abs(got - want).max() < 1e-12
        assert counter.stages["generate_position"] == 2 * 4 * 4 * 2 * 2 * 3

    def test_per_u_softmax_flag(self, rng):
        c = cfg(u=2, intra_softmax="per_u")
        p = layer.init_params(c, seed=21)
        X = rng.standard_normal((2, 4, 3))
        a = variants.intra_depth_forward(X, None, p, c)
        c_joint = cfg(u=2)
        b = variants.intra_depth_forward(X, None, p, c_joint)
        assert not np.allclose(a, b)  # genuinely different normalizations

    def test_invalid_u(self):
        with pytest.raises(errors.ConfigError):
            cfg(u=0)


class TestContentOnly:
    def test_equals_zeroed_embeddings(self, rng):
        c = cfg()
        p = layer.init_params(c, seed=23)
        p0 = p.copy()
        p0.rel[:] = 0.0
        X = rng.standard_normal((2, 4, 3))
        a = variants.content_only_forward(X, None, p, c)
        b = layer.lambda_layer_forward(X, None, p0, c)
        assert np.array_equal(a, b)

    def test_identical_queries_identical_outputs(self, rng):
        c = cfg()
        p = layer.init_params(c, seed=25)
        X = rng.standard_normal((2, 4, 3))
        Xq = np.broadcast_to(X[:, :1, :], X.shape).copy()
        out = variants.content_only_forward(Xq, X, p, c)
        assert np.abs(out - out[:, :1]).max() == 0.0

    def test_permutation_invariance_exhaustive(self, rng):
        import itertools

        c = cfg()
        p = layer.init_params(c, seed=27)
        X = rng.standard_normal((1, 4, 3))
        base = variants.content_only_forward(X, X, p, c)
        for perm in itertools.permutations(range(4)):
            out = variants.content_only_forward(X, X[:, list(perm)], p, c)
            assert np.abs(out - base).max() < 1e-12

    def test_position_only_complement(self, rng):
        c = cfg()
        p = layer.init_params(c, seed=29)
        X = rng.standard_normal((2, 4, 3))
        full = layer.lambda_layer_forward(X, None, p, c)
        tot = variants.content_only_forward(X, None, p, c) + variants.position_only_forward(
            X, None, p, c
        )
        assert np.array_equal(full, tot)

    def test_suite_green(self):
        rep = suite_variants(1729)
        assert rep.passed, rep.failing()
