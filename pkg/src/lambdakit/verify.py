"""Property suites behind ``verify``: each suite re-runs one module's invariants.

Suites return structured per-property results (shapes tried, worst error,
pass/fail) so the CLI can emit machine-readable reports and the test suite
can assert on the same code paths.  Randomness comes from named streams under
the run seed; adding a property never perturbs another property's draws.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import mutation
from .complexity import DimSet, RESNET50_STAGES, generate_cost, memory_report, time_cost
from .errors import ConfigError
from .grad import backward
from .layer import (
    LambdaConfig,
    apply_lambdas,
    config_index_map,
    init_params,
    lambda_layer_forward,
    normalize_keys,
    parameter_count,
    project_qkv,
)
from .oracles import (
    counted_conv_kernel,
    counted_content_only_kernel,
    counted_intra_depth_kernel,
    counted_lambda_kernel,
    counted_masked_kernel,
    counted_multihead_kernel,
    oracle_contract,
    oracle_lambda_forward,
)
from .relpos import (
    Geometry,
    build_causal_mask,
    build_rel_index_map,
    expand_embeddings,
    grid,
    seq,
)
from .rng import stream
from .tensor import KNOWN_SPECS, contract, contract_generic
from .variants import (
    MaskSpec,
    content_only_forward,
    intra_depth_forward,
    masked_lambda_forward,
    multihead_lambda_forward,
    position_only_forward,
    tied_multihead_params,
)


@dataclass
class PropertyResult:
    name: str
    passed: bool
    cases: int
    worst_error: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "cases": self.cases,
            "worst_error": self.worst_error,
            "detail": self.detail,
        }


@dataclass
class SuiteReport:
    suite: str
    properties: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.properties)

    def failing(self) -> list[str]:
        return [p.name for p in self.properties if not p.passed]

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "properties": [p.to_dict() for p in self.properties],
        }


def _result(name, err, tol, cases, detail=""):
    return PropertyResult(name, bool(err <= tol), cases, float(err), detail)


def _rand(seed, name, shape):
    return stream(seed, name).standard_normal(shape)


# --- tensor suite -------------------------------------------------------------


def suite_tensor(seed: int) -> SuiteReport:
    rep = SuiteReport("tensor")
    extents = {"b": 2, "m": 4, "k": 3, "v": 2, "n": 5, "h": 2, "u": 3}
    worst = 0.0
    for i, spec in enumerate(KNOWN_SPECS):
        ins, _ = spec.split("->")
        ops = [
            _rand(seed, f"tensor/{spec}/{j}", tuple(extents[c] for c in labels))
            for j, labels in enumerate(ins.split(","))
        ]
        worst = max(worst, float(np.abs(contract(spec, *ops) - oracle_contract(spec, *ops)).max()))
        worst = max(worst, float(np.abs(contract(spec, *ops) - contract_generic(spec, *ops)).max()))
    rep.properties.append(_result("contract_vs_loop_oracle", worst, 1e-12, len(KNOWN_SPECS)))

    worst = 0.0
    for spec in ("bmk,bmv->bkv", "nmk,bmv->bnkv"):
        ins, _ = spec.split("->")
        labels_a, labels_b = ins.split(",")
        a = _rand(seed, f"lin/{spec}/a", tuple(extents[c] for c in labels_a))
        a2 = _rand(seed, f"lin/{spec}/a2", a.shape)
        b = _rand(seed, f"lin/{spec}/b", tuple(extents[c] for c in labels_b))
        lhs = contract(spec, a + a2, b)
        rhs = contract(spec, a, b) + contract(spec, a2, b)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    rep.properties.append(_result("contract_linearity", worst, 1e-12, 2))

    from .tensor import softmax, tensor_from_bytes, tensor_to_bytes

    x = _rand(seed, "tensor/softmax", (3, 6, 2))
    s = softmax(x, axis=1)
    err = float(np.abs(s.sum(axis=1) - 1).max())
    shifted = softmax(x + 3.25, axis=1)
    err = max(err, float(np.abs(shifted - s).max()))
    rep.properties.append(_result("softmax_sums_and_shift_invariance", err, 1e-12, 2))

    worst = 0.0
    for shape in ((), (5,), (2, 3, 4)):
        t = _rand(seed, f"tensor/ser/{shape}", shape)
        back = tensor_from_bytes(tensor_to_bytes(t))
        worst = max(worst, float(np.abs(back - t).max()) if shape else abs(float(back - t)))
    rep.properties.append(_result("serialization_roundtrip", worst, 0, 3))
    return rep


# --- relpos suite --------------------------------------------------------------


def _check_clamped_equivariance(geometry: Geometry) -> int:
    table = build_rel_index_map(geometry).table
    extents = geometry.extents
    coords = list(itertools.product(*(range(e) for e in extents)))
    flat = {c: i for i, c in enumerate(coords)}
    violations = 0
    shifts = itertools.product(*(range(-e + 1, e) for e in extents))
    for t in shifts:
        for a in coords:
            for b in coords:
                a2 = tuple(x + dt for x, dt in zip(a, t))
                b2 = tuple(x + dt for x, dt in zip(b, t))
                if all(0 <= x < e for x, e in zip(a2, extents)) and all(
                    0 <= x < e for x, e in zip(b2, extents)
                ):
                    if table[flat[a], flat[b]] != table[flat[a2], flat[b2]]:
                        violations += 1
    return violations


def _check_circular_equivariance(geometry: Geometry) -> int:
    table = build_rel_index_map(geometry, boundary="circular").table
    extents = geometry.extents
    coords = list(itertools.product(*(range(e) for e in extents)))
    flat = {c: i for i, c in enumerate(coords)}
    violations = 0
    for t in itertools.product(*(range(e) for e in extents)):
        for a in coords:
            for b in coords:
                a2 = tuple((x + dt) % e for x, dt, e in zip(a, t, extents))
                b2 = tuple((x + dt) % e for x, dt, e in zip(b, t, extents))
                if table[flat[a], flat[b]] != table[flat[a2], flat[b2]]:
                    violations += 1
    return violations


def suite_relpos(seed: int) -> SuiteReport:
    rep = SuiteReport("relpos")
    cases = 0
    violations = 0
    for n in range(1, 9):
        violations += _check_clamped_equivariance(seq(n))
        cases += 1
    for hw in ((2, 2), (3, 2), (3, 3), (4, 4)):
        violations += _check_clamped_equivariance(grid(*hw))
        cases += 1
    rep.properties.append(_result("clamped_translation_property", violations, 0, cases))

    cases = violations = 0
    for n in range(1, 9):
        violations += _check_circular_equivariance(seq(n))
        cases += 1
    for hw in ((2, 2), (3, 2), (3, 3), (4, 4)):
        violations += _check_circular_equivariance(grid(*hw))
        cases += 1
    rep.properties.append(_result("circular_translation_property", violations, 0, cases))

    # scoped expansion == unscoped expansion with out-of-window entries zeroed
    worst = 0.0
    cases = 0
    for geometry, scope in ((seq(5), (3,)), (seq(7), (5,)), (grid(4, 4), (3, 3))):
        full = build_rel_index_map(geometry)
        scoped = build_rel_index_map(geometry, scope=scope)
        k = 3
        R_full = _rand(seed, f"relpos/{geometry}", (full.num_buckets, k))
        E_full = expand_embeddings(full, R_full)
        # rebuild the compact scoped table from the full one bucket-by-bucket
        R_scoped = np.zeros((scoped.num_buckets, k))
        for nn in range(geometry.size):
            for mm in range(geometry.size):
                bs = scoped.table[nn, mm]
                if bs >= 0:
                    R_scoped[bs] = R_full[full.table[nn, mm]]
        E_scoped = expand_embeddings(scoped, R_scoped)
        E_zeroed = np.where(scoped.in_scope[:, :, None], E_full, 0.0)
        worst = max(worst, float(np.abs(E_scoped - E_zeroed).max()))
        cases += 1
    rep.properties.append(_result("scope_equals_zeroed_full_expansion", worst, 0, cases))

    # sharing one table across layers yields identical expansions
    m = build_rel_index_map(seq(6))
    R = _rand(seed, "relpos/share", (m.num_buckets, 4))
    err = float(np.abs(expand_embeddings(m, R) - expand_embeddings(m, R)).max())
    rep.properties.append(_result("embedding_sharing_identical", err, 0, 1))

    mask = build_causal_mask(5)
    ok = np.array_equal(mask.sum(axis=1), np.arange(1, 6))
    rep.properties.append(_result("causal_mask_row_sums", 0.0 if ok else 1.0, 0, 1))
    return rep


# --- oracle suite (lambda core) ------------------------------------------------


def _shape_combos(seed, count=108):
    gen = stream(seed, "oracle/shapes")
    combos = []
    while len(combos) < count:
        b = int(gen.integers(1, 5))
        n = int(gen.integers(1, 5))
        k = int(gen.integers(1, 5))
        h = int(gen.integers(1, 5))
        v = int(gen.integers(1, 5))
        d_in = int(gen.integers(1, 5))
        use_grid = bool(gen.integers(0, 2)) and n >= 2
        geometry = grid(2, n) if use_grid else seq(n)
        combos.append((b, d_in, k, h, v, geometry))
    return combos


def suite_oracle(seed: int) -> SuiteReport:
    rep = SuiteReport("oracle")
    worst = 0.0
    decomp_worst = 0.0
    combos = _shape_combos(seed)
    for i, (b, d_in, k, h, v, geometry) in enumerate(combos):
        config = LambdaConfig(d_in=d_in, d_out=h * v, k=k, h=h, geometry=geometry)
        params = init_params(config, seed + i)
        X = _rand(seed, f"oracle/x/{i}", (b, geometry.size, d_in))
        Y = lambda_layer_forward(X, None, params, config)
        E = expand_embeddings(config_index_map(config), params.rel)
        Y_ref = oracle_lambda_forward(X, X, params.w_q, params.w_k, params.w_v, E, h)
        worst = max(worst, float(np.abs(Y - Y_ref).max()))
        Yc = content_only_forward(X, None, params, config)
        Yp = position_only_forward(X, None, params, config)
        decomp_worst = max(decomp_worst, float(np.abs(Y - (Yc + Yp)).max()))
    rep.properties.append(
        _result("forward_vs_per_query_oracle", worst, 1e-12, len(combos))
    )
    rep.properties.append(
        _result("additive_content_position_decomposition", decomp_worst, 1e-12, len(combos))
    )

    # context permutation leaves the content-only output unchanged
    config = LambdaConfig(d_in=3, d_out=4, k=3, h=2, geometry=seq(5))
    params = init_params(config, seed)
    X = _rand(seed, "oracle/perm", (2, 5, 3))
    perm = stream(seed, "oracle/perm_idx").permutation(5)
    base = content_only_forward(X, X, params, config)
    permuted = content_only_forward(X, X[:, perm], params, config)
    err = float(np.abs(base - permuted).max())
    rep.properties.append(_result("content_permutation_invariance", err, 1e-12, 1))

    # diagonal lambda == channel attention, scalar lambdas == spatial attention
    b, h, n, k = 2, 2, 4, 3
    Q = _rand(seed, "oracle/chan_q", (b, h, n, k))
    w = _rand(seed, "oracle/chan_w", (k,))
    lam_c = np.broadcast_to(np.diag(w), (b, k, k)).copy()
    Y = apply_lambdas(Q, lam_c, None).reshape(b, n, h, k).transpose(0, 2, 1, 3)
    err = float(np.abs(Y - w * Q).max())
    rep.properties.append(_result("channel_attention_diagonal_lambda", err, 0, 1))

    wn = _rand(seed, "oracle/spat_w", (n,))
    lam_p = np.einsum("n,kv->nkv", wn, np.eye(k))
    lam_p = np.broadcast_to(lam_p, (b, n, k, k)).copy()
    Y = apply_lambdas(Q, None, lam_p).reshape(b, n, h, k).transpose(0, 2, 1, 3)
    err = float(np.abs(Y - wn[None, None, :, None] * Q).max())
    rep.properties.append(_result("spatial_attention_scalar_lambda", err, 0, 1))

    # content-only path == kernel-factorized linear attention
    config = LambdaConfig(d_in=3, d_out=6, k=4, h=2, geometry=seq(5))
    params = init_params(config, seed + 1)
    X = _rand(seed, "oracle/linattn", (2, 5, 3))
    Yc = content_only_forward(X, None, params, config)
    Q, K, V = project_qkv(X, X, params, config)
    phiK = normalize_keys(K, "softmax")
    summary = np.einsum("bmk,bmv->bkv", phiK, V)
    Y_lin = np.einsum("bkv,bhnk->bnhv", summary, Q).reshape(Yc.shape)
    err = float(np.abs(Yc - Y_lin).max())
    rep.properties.append(_result("content_only_equals_linear_attention", err, 1e-12, 1))
    return rep


# --- equivalence suite (conv implementations) ----------------------------------


def suite_equivalence(seed: int, impl: str = "all") -> SuiteReport:
    """Conv-implementation agreement; ``impl`` restricts which convolution
    flavor is compared against the masked-einsum path ('all' checks both)."""
    from .conv import position_lambdas_conv, position_lambdas_depthwise

    impls = {
        "all": (position_lambdas_conv, position_lambdas_depthwise),
        "conv": (position_lambdas_conv,),
        "depthwise": (position_lambdas_depthwise,),
        "einsum": (position_lambdas_conv, position_lambdas_depthwise),
    }[impl]
    rep = SuiteReport("equivalence")
    worst = 0.0
    bitwise_ok = True
    cases = 0
    geoms = [seq(n) for n in (1, 2, 3, 4, 5, 6)] + [grid(2, 3), grid(3, 3), grid(4, 4), grid(6, 6)]
    for geometry in geoms:
        for s in (1, 3, 5):
            scope = (s,) * len(geometry.extents)
            if any(sc > 2 * e - 1 for sc, e in zip(scope, geometry.extents)):
                continue
            index_map = build_rel_index_map(geometry, scope=scope)
            k, v, b = 3, 2, 2
            R = _rand(seed, f"equiv/{geometry}/{s}/r", (index_map.num_buckets, k))
            V = _rand(seed, f"equiv/{geometry}/{s}/v", (b, geometry.size, v))
            E = expand_embeddings(index_map, R)
            lam_e = contract("nmk,bmv->bnkv", E, V)
            for fn in impls:
                worst = max(worst, float(np.abs(fn(R, V, scope, geometry) - lam_e).max()))
            lam_c = position_lambdas_conv(R, V, scope, geometry)
            lam_d = position_lambdas_depthwise(R, V, scope, geometry)
            bitwise_ok = bitwise_ok and np.array_equal(lam_c, lam_d)
            cases += 1
    rep.properties.append(_result("tri_implementation_agreement", worst, 1e-12, cases))
    rep.properties.append(
        _result("conv_depthwise_bitwise", 0.0 if bitwise_ok else 1.0, 0, cases)
    )

    # full clamped window equals the unscoped einsum path
    geometry = seq(5)
    full = build_rel_index_map(geometry)
    R = _rand(seed, "equiv/full/r", (full.num_buckets, 3))
    V = _rand(seed, "equiv/full/v", (2, 5, 2))
    lam_e = contract("nmk,bmv->bnkv", expand_embeddings(full, R), V)
    lam_c = position_lambdas_conv(R, V, (2 * 5 - 1,), geometry)
    err = float(np.abs(lam_c - lam_e).max())
    rep.properties.append(_result("full_window_equals_global_einsum", err, 1e-12, 1))

    # interior windows are exactly shift-equivariant (zero padding breaks edges)
    n, s, k, v = 8, 3, 2, 2
    geometry = seq(n)
    index_map = build_rel_index_map(geometry, scope=(s,))
    R = _rand(seed, "equiv/shift/r", (index_map.num_buckets, k))
    V = _rand(seed, "equiv/shift/v", (1, n, v))
    t = 2
    V_shift = np.zeros_like(V)
    V_shift[:, t:] = V[:, : n - t]
    lam = position_lambdas_conv(R, V, (s,), geometry)
    lam_shift = position_lambdas_conv(R, V_shift, (s,), geometry)
    half = (s - 1) // 2
    interior = slice(half + t, n - half)
    exact = np.array_equal(lam_shift[:, interior], lam[:, slice(half, n - half - t)])
    rep.properties.append(
        _result("interior_shift_equivariance_bitwise", 0.0 if exact else 1.0, 0, 1)
    )

    # instrumented conv multiply count is exactly b*n*r*k*v
    b, n, k, v, h, s = 2, 4, 2, 3, 1, 3
    geometry = seq(n)
    Q = _rand(seed, "equiv/count/q", (b, h, n, k))
    Kn = normalize_keys(_rand(seed, "equiv/count/k", (b, n, k)), "softmax")
    index_map = build_rel_index_map(geometry, scope=(s,))
    R = _rand(seed, "equiv/count/r", (index_map.num_buckets, k))
    V = _rand(seed, "equiv/count/v", (b, n, v))
    _, counter = counted_conv_kernel(Q, Kn, R, V, (s,), geometry)
    expected = b * n * s * k * v
    err = abs(counter.stages["generate_position"] - expected)
    rep.properties.append(_result("conv_multiply_count_linear", err, 0, 1))
    return rep


# --- masked suite ---------------------------------------------------------------


def suite_masked(seed: int) -> SuiteReport:
    rep = SuiteReport("masked")
    config = LambdaConfig(d_in=3, d_out=4, k=2, h=2, geometry=seq(5))
    params = init_params(config, seed)
    X = _rand(seed, "masked/x", (2, 5, 3))

    ones = MaskSpec(np.ones((5, 5)))
    err = float(
        np.abs(
            masked_lambda_forward(X, None, params, config, ones)
            - lambda_layer_forward(X, None, params, config)
        ).max()
    )
    rep.properties.append(_result("all_ones_mask_equals_unmasked", err, 1e-12, 1))

    causal = MaskSpec(build_causal_mask(5))
    base = masked_lambda_forward(X, None, params, config, causal)
    bit_ok = True
    for npos in range(1, 5):
        X2 = X.copy()
        X2[:, npos:, :] += _rand(seed, f"masked/perturb/{npos}", X2[:, npos:, :].shape)
        pert = masked_lambda_forward(X2, None, params, config, causal)
        bit_ok = bit_ok and np.array_equal(base[:, :npos], pert[:, :npos])
    rep.properties.append(_result("causal_future_perturbation_bitwise", 0.0 if bit_ok else 1.0, 0, 4))

    # prefix truncation oracle: y_n equals the unmasked layer run on C[0..n]
    worst = 0.0
    E = expand_embeddings(config_index_map(config), params.rel)
    for npos in range(5):
        C_trunc = X[:, : npos + 1, :]
        E_trunc = E[npos : npos + 1, : npos + 1, :]
        y = lambda_layer_forward(X[:, npos : npos + 1, :], C_trunc, params, config, E=E_trunc)
        worst = max(worst, float(np.abs(base[:, npos : npos + 1] - y).max()))
    rep.properties.append(_result("causal_prefix_truncation_oracle", worst, 1e-12, 5))

    # transient allocations stay within O(b n k v + k n m); with h=8, k=v=1 an
    # attention-map-sized [b, h, n, m] buffer would blow the bound
    cfg8 = LambdaConfig(d_in=3, d_out=8, k=1, h=8, geometry=seq(6))
    p8 = init_params(cfg8, seed)
    X8 = _rand(seed, "masked/alloc", (2, 6, 3))
    log: list = []
    masked_lambda_forward(X8, None, p8, cfg8, MaskSpec(build_causal_mask(6)), alloc_log=log)
    b, n, m, k, v = 2, 6, 6, 1, 1
    bound = b * n * k * v + k * n * m
    peak = max(size for _, _, size in log)
    attention_map = b * cfg8.h * n * m
    ok = peak <= bound and bound < attention_map
    rep.properties.append(
        _result("masked_transient_allocation_bound", 0.0 if ok else 1.0, 0, len(log),
                detail=f"peak={peak} bound={bound} map={attention_map}")
    )

    # gradient w.r.t. masked-out context entries is exactly zero
    up = np.zeros((2, 5, 4))
    up[:, 0, :] = 1.0
    bundle = backward("masked", X, None, params, config, up, mask=causal)
    # queries beyond position 0 receive gradient only through their own output;
    # context rows with m > 0 are masked out for query 0
    q_grad_future = bundle.x[:, 1:, :]
    err = float(np.abs(q_grad_future).max())
    rep.properties.append(_result("masked_context_gradient_exactly_zero", err, 0, 1))
    return rep


# --- variants suite -------------------------------------------------------------


def suite_variants(seed: int) -> SuiteReport:
    rep = SuiteReport("variants")
    config = LambdaConfig(d_in=3, d_out=4, k=2, h=2, geometry=seq(4))
    params = init_params(config, seed)
    X = _rand(seed, "variants/x", (2, 4, 3))

    Y = lambda_layer_forward(X, None, params, config)
    Yu = intra_depth_forward(X, None, params, config)
    rep.properties.append(
        _result("u1_bit_identical_to_default", 0.0 if np.array_equal(Y, Yu) else 1.0, 0, 1)
    )

    cfg1 = LambdaConfig(d_in=3, d_out=4, k=2, h=1, geometry=seq(4))
    p1 = init_params(cfg1, seed)
    mh1 = tied_multihead_params(p1, 1)
    err = float(
        np.abs(
            multihead_lambda_forward(X, None, mh1, cfg1)
            - lambda_layer_forward(X, None, p1, cfg1)
        ).max()
    )
    rep.properties.append(_result("multihead_h1_collapse", err, 1e-12, 1))

    mh = tied_multihead_params(params, config.h)
    err = float(np.abs(multihead_lambda_forward(X, None, mh, config) - Y).max())
    rep.properties.append(_result("tied_multihead_equals_multiquery", err, 1e-12, 1))

    p0 = params.copy()
    p0.rel[:] = 0.0
    err = float(
        np.abs(
            lambda_layer_forward(X, None, p0, config)
            - content_only_forward(X, None, params, config)
        ).max()
    )
    rep.properties.append(_result("zero_embeddings_equal_content_only", err, 0, 1))

    # content-only output is identical across queries when all queries match
    Xc = np.broadcast_to(X[:, :1, :], X.shape).copy()
    Yc = content_only_forward(Xc, X, params, config)
    err = float(np.abs(Yc - Yc[:, :1]).max())
    rep.properties.append(_result("content_only_identical_queries", err, 0, 1))

    # exhaustive context permutations for m <= 4
    worst = 0.0
    cases = 0
    for perm in itertools.permutations(range(4)):
        Yp = content_only_forward(X, X[:, list(perm)], params, config)
        base = content_only_forward(X, X, params, config)
        worst = max(worst, float(np.abs(Yp - base).max()))
        cases += 1
    rep.properties.append(_result("content_only_permutation_exhaustive", worst, 1e-12, cases))

    # parameter count closed form
    ok = True
    for u in (1, 2, 3):
        cfg_u = LambdaConfig(d_in=3, d_out=4, k=2, h=2, geometry=seq(4), u=u)
        p_u = init_params(cfg_u, seed)
        actual = sum(a.size for a in (p_u.w_q, p_u.w_k, p_u.w_v, p_u.rel))
        ok = ok and actual == parameter_count(cfg_u)
    rep.properties.append(_result("intra_depth_parameter_count", 0.0 if ok else 1.0, 0, 3))

    # duplicated intra-depth values with halved embeddings reduce to u=1
    # (position path, normalization off)
    k, v, b, n = 2, 3, 2, 4
    E = _rand(seed, "variants/dup/e", (n, n, k))
    V = _rand(seed, "variants/dup/v", (b, n, v))
    E2 = np.repeat((E / 2)[..., None], 2, axis=3)
    V2 = np.repeat(V[..., None], 2, axis=3)
    lam_u1 = contract("nmk,bmv->bnkv", E, V)
    lam_u2 = contract("knmu,bmvu->bnkv", np.transpose(E2, (2, 0, 1, 3)), V2)
    err = float(np.abs(lam_u1 - lam_u2).max())
    rep.properties.append(_result("intra_depth_duplication_linearity", err, 1e-12, 1))
    return rep


# --- complexity suite -----------------------------------------------------------


def _counted_case(kind, dims: DimSet, seed: int):
    b, n, m, k, v, h, u = dims.b, dims.n, dims.m, dims.k, dims.v, dims.h, dims.u
    Q = _rand(seed, f"cx/{kind}/q", (b, h, n, k))
    if kind == "multihead_lambda":
        Kn = normalize_keys(
            _rand(seed, f"cx/{kind}/k", (b * h, m, k)), "softmax"
        ).reshape(b, h, m, k)
        E = _rand(seed, f"cx/{kind}/e", (h, n, m, k))
        V = _rand(seed, f"cx/{kind}/v", (b, h, m, v))
        return counted_multihead_kernel(Q, Kn, E, V)[1]
    if kind == "intra_depth_lambda":
        Kn = normalize_keys(_rand(seed, f"cx/{kind}/k", (b, m, k, u)), "softmax")
        E = _rand(seed, f"cx/{kind}/e", (n, m, k, u))
        V = _rand(seed, f"cx/{kind}/v", (b, m, v, u))
        return counted_intra_depth_kernel(Q, Kn, E, V)[1]
    if kind == "masked_lambda":
        K = _rand(seed, f"cx/{kind}/k", (b, m, k))
        E = _rand(seed, f"cx/{kind}/e", (n, m, k))
        V = _rand(seed, f"cx/{kind}/v", (b, m, v))
        mask = build_causal_mask(n)
        return counted_masked_kernel(Q, K, E, V, mask)[1]
    Kn = normalize_keys(_rand(seed, f"cx/{kind}/k", (b, m, k)), "softmax")
    V = _rand(seed, f"cx/{kind}/v", (b, m, v))
    if kind == "lambda":
        E = _rand(seed, f"cx/{kind}/e", (n, m, k))
        return counted_lambda_kernel(Q, Kn, E, V)[1]
    if kind == "content_only":
        return counted_content_only_kernel(Q, Kn, V)[1]
    raise ConfigError(kind)


def suite_complexity(seed: int, exhaustive: bool = False) -> SuiteReport:
    rep = SuiteReport("complexity")
    rng_dims = range(1, 5) if exhaustive else (1, 2, 4)
    kinds = ("lambda", "content_only", "masked_lambda", "multihead_lambda", "intra_depth_lambda")
    mismatches = 0
    cases = 0
    for kind in kinds:
        for b, n, k, v, h in itertools.product(rng_dims, repeat=5):
            u = 2 if kind == "intra_depth_lambda" else 1
            mask_ones = n * (n + 1) // 2 if kind == "masked_lambda" else None
            dims = DimSet(b=b, n=n, m=n, k=k, v=v, h=h, u=u, mask_ones=mask_ones)
            counter = _counted_case(kind, dims, seed)
            model = time_cost(kind, dims)
            if counter.stages != {s: c for s, c in model.terms.items() if c}:
                mismatches += 1
            cases += 1
    rep.properties.append(_result("model_equals_instrumented_counter", mismatches, 0, cases))

    # conv kind against the tap-loop counter
    mismatches = 0
    cases = 0
    for n, s in ((3, 1), (4, 3), (6, 5)):
        geometry = seq(n)
        dims = DimSet(b=2, n=n, m=n, k=2, v=2, h=2, r=s)
        Q = _rand(seed, f"cx/conv/q/{n}", (2, 2, n, 2))
        Kn = normalize_keys(_rand(seed, f"cx/conv/k/{n}", (2, n, 2)), "softmax")
        index_map = build_rel_index_map(geometry, scope=(s,))
        R = _rand(seed, f"cx/conv/r/{n}", (index_map.num_buckets, 2))
        V = _rand(seed, f"cx/conv/v/{n}", (2, n, 2))
        counter = counted_conv_kernel(Q, Kn, R, V, (s,), geometry)[1]
        model = time_cost("lambda_conv", dims)
        if counter.stages != model.terms:
            mismatches += 1
        cases += 1
    rep.properties.append(_result("conv_model_equals_counter", mismatches, 0, cases))

    # Table-8 ratio: multihead / multiquery generate cost == h, exactly
    ok = True
    for h in (2, 4):
        dims = DimSet(b=2, n=2, m=2, k=2, v=2, h=h)
        ratio_model = generate_cost("multihead_lambda", dims) / generate_cost("lambda", dims)
        c_mh = _counted_case("multihead_lambda", dims, seed)
        c_mq = _counted_case("lambda", dims, seed)
        ratio_counted = c_mh.generate_total() / c_mq.generate_total()
        ok = ok and ratio_model == h and ratio_counted == h
    rep.properties.append(_result("multihead_multiquery_generate_ratio", 0.0 if ok else 1.0, 0, 2))

    # fixed d: doubling h halves generate cost, leaves apply cost unchanged
    d = 8
    g2 = time_cost("lambda", DimSet(b=2, n=3, m=3, k=2, h=2, d=d))
    g4 = time_cost("lambda", DimSet(b=2, n=3, m=3, k=2, h=4, d=d))
    gen2 = g2.terms["generate_content"] + g2.terms["generate_position"]
    gen4 = g4.terms["generate_content"] + g4.terms["generate_position"]
    ok = gen2 == 2 * gen4 and g2.terms["apply"] == g4.terms["apply"]
    rep.properties.append(_result("head_doubling_halves_generate", 0.0 if ok else 1.0, 0, 1))
    return rep


# --- memory suite ---------------------------------------------------------------


def suite_memory(seed: int) -> SuiteReport:
    del seed
    rep = SuiteReport("memory")
    dims = DimSet(b=128, h=8, k=16, v=64)
    rows = memory_report(
        RESNET50_STAGES, dims, ("attention", "axial_attention", "lambda", "lambda_shared")
    )
    dims8 = DimSet(b=128, h=8, k=8, v=64)
    rows8 = memory_report(RESNET50_STAGES, dims8, ("lambda",))
    targets = [
        ("lambda_k16", rows["lambda"]["gib"], 1.9, 0.02),
        ("lambda_k8", rows8["lambda"]["gib"], 0.95, 0.02),
        ("lambda_shared", rows["lambda_shared"]["gib"], 0.63, 0.02),
        ("axial_attention", rows["axial_attention"]["gib"], 4.8, 0.02),
        ("global_attention", rows["attention"]["gib"], 120.0, 0.15),
    ]
    for name, got, want, tol in targets:
        err = abs(got - want) / want
        rep.properties.append(
            _result(f"table_row_{name}", err, tol, 1, detail=f"modeled={got:.4f} target={want}")
        )
    from .complexity import StageSpec

    foot = memory_report(StageSpec(((1, 64),)), dims, ("attention",))
    err = abs(foot["attention"]["gib"] - 64.0) / 64.0
    rep.properties.append(
        _result("single_layer_64gib_case", err, 0.02, 1,
                detail=f"modeled={foot['attention']['gib']:.4f}")
    )

    dims_b256 = DimSet(b=256, h=8, k=16, v=64)
    rows_b256 = memory_report(RESNET50_STAGES, dims_b256, ("attention", "lambda"))
    ok = (
        rows_b256["attention"]["bytes"] == 2 * rows["attention"]["bytes"]
        and rows_b256["lambda"]["bytes"] == rows["lambda"]["bytes"]
    )
    rep.properties.append(_result("batch_scaling_structure", 0.0 if ok else 1.0, 0, 1))

    ok = True
    try:
        StageSpec(((0, 56),))
        ok = False
    except ConfigError:
        pass
    rep.properties.append(_result("zero_layer_stage_rejected", 0.0 if ok else 1.0, 0, 1))
    return rep


SUITES = {
    "tensor": suite_tensor,
    "relpos": suite_relpos,
    "oracle": suite_oracle,
    "equivalence": suite_equivalence,
    "masked": suite_masked,
    "variants": suite_variants,
    "complexity": suite_complexity,
    "memory": suite_memory,
}


def run_suites(
    names, seed: int, mutate: str | None = None, impl: str = "all"
) -> list[SuiteReport]:
    if names == ["all"]:
        names = list(SUITES)
    for name in names:
        if name not in SUITES:
            raise ConfigError(f"unknown suite {name!r}; known: {sorted(SUITES)} or 'all'")

    def run_one(name):
        if name == "equivalence":
            return suite_equivalence(seed, impl)
        return SUITES[name](seed)

    if mutate:
        with mutation.mutate(mutate):
            return [run_one(name) for name in names]
    return [run_one(name) for name in names]
