import numpy as np

from graphtalk import autodiff as ad
from graphtalk.autodiff import ParameterStore, Tensor, backward
from graphtalk.dialog_graph import (DepEdge, TokenSeq, build_graph,
                                    pad_predecessors, split_directional)
from graphtalk.encoder import (EncoderDirectionParams, attention_pool,
                               candidate_state, encode_bidirectional,
                               encode_direction, reset_gates)

from oracles import cell_reference, chain_recurrence, finite_diff, max_rel_error


def make_params(d=3, d_in=2, seed=0, zero=False):
    store = ParameterStore()
    params = EncoderDirectionParams(store, "enc", d, d_in, seed)
    if zero:
        for p in store:
            p.data = np.zeros_like(p.data)
    return params, store


def weights_of(params):
    return {name: getattr(params, name).data for name in EncoderDirectionParams.FIELDS}


def _tensors(arrays):
    return [Tensor(a) for a in arrays]


# ---------------------------------------------------------------------------
# reset gates


def test_reset_gates_zero_params_give_half():
    params, _ = make_params(zero=True)
    gates = reset_gates(params, Tensor(np.ones(2)), _tensors([np.ones(3), np.zeros(3)]))
    for r in gates:
        assert np.array_equal(r.data, np.full(3, 0.5))


def test_reset_gates_duplicate_predecessors_equal():
    params, _ = make_params(seed=4)
    h = np.random.default_rng(0).standard_normal(3)
    gates = reset_gates(params, Tensor(np.ones(2)), _tensors([h, h]))
    assert np.array_equal(gates[0].data, gates[1].data)


def test_reset_gates_match_scalar_evaluation():
    params, _ = make_params(d=2, d_in=2, seed=7)
    rng = np.random.default_rng(1)
    x = rng.standard_normal(2)
    h = rng.standard_normal(2)
    [r] = reset_gates(params, Tensor(x), _tensors([h]))
    w = weights_of(params)
    pre = w["reset_input"] @ x + w["reset_hidden"] @ h
    assert np.allclose(r.data, 1.0 / (1.0 + np.exp(-pre)), atol=1e-15)
    assert np.all((r.data > 0) & (r.data < 1))


# ---------------------------------------------------------------------------
# candidate state


def test_candidate_zero_gates_close_history():
    params, _ = make_params(seed=2)
    x = np.array([0.3, -0.8])
    rng = np.random.default_rng(5)
    hs = _tensors([rng.standard_normal(3)])
    zero_gate = [Tensor(np.zeros(3))]
    cand = candidate_state(params, Tensor(x), hs, zero_gate)
    assert np.allclose(cand.data, np.tanh(weights_of(params)["cand_input"] @ x), atol=1e-15)


def test_candidate_duplicate_predecessor_equals_single():
    params, _ = make_params(seed=3)
    rng = np.random.default_rng(6)
    x = Tensor(rng.standard_normal(2))
    h = rng.standard_normal(3)
    gates1 = reset_gates(params, x, _tensors([h]))
    one = candidate_state(params, x, _tensors([h]), gates1)
    gates2 = reset_gates(params, x, _tensors([h, h]))
    two = candidate_state(params, x, _tensors([h, h]), gates2)
    assert np.allclose(one.data, two.data, atol=1e-15)


def test_candidate_matches_bruteforce_loop():
    params, _ = make_params(d=4, d_in=3, seed=9)
    rng = np.random.default_rng(2)
    x = rng.standard_normal(3)
    hs = [rng.standard_normal(4) for _ in range(3)]
    gates = reset_gates(params, Tensor(x), _tensors(hs))
    cand = candidate_state(params, Tensor(x), _tensors(hs), gates)

    w = weights_of(params)
    acc = np.zeros(4)
    for h in hs:
        r = 1.0 / (1.0 + np.exp(-(w["reset_input"] @ x + w["reset_hidden"] @ h)))
        acc = acc + r * (w["cand_hidden"] @ h)
    expected = np.tanh(w["cand_input"] @ x + acc / 3.0)
    assert np.allclose(cand.data, expected, atol=1e-12)
    assert np.all(np.abs(cand.data) < 1.0)


# ---------------------------------------------------------------------------
# attention pooling


def test_attention_zero_vector_uniform():
    params, _ = make_params(seed=11)
    params.attn_vector.data = np.zeros(3)
    rng = np.random.default_rng(3)
    h = rng.standard_normal(3)
    cand = Tensor(rng.standard_normal(3))
    pooled, alpha = attention_pool(params, Tensor(rng.standard_normal(2)),
                                   _tensors([h]), [True], cand)
    assert np.allclose(alpha.data, [0.5, 0.5], atol=1e-15)
    key = weights_of(params)["attn_hidden"] @ h
    assert np.allclose(pooled.data, 0.5 * (key + cand.data), atol=1e-15)


def test_attention_all_slots_padded_collapses_to_candidate():
    params, _ = make_params(seed=12)
    rng = np.random.default_rng(4)
    cand = Tensor(rng.standard_normal(3))
    zeros = _tensors([np.zeros(3), np.zeros(3)])
    pooled, alpha = attention_pool(params, Tensor(rng.standard_normal(2)),
                                   zeros, [False, False], cand)
    assert np.array_equal(alpha.data, [0.0, 0.0, 1.0])
    assert np.array_equal(pooled.data, cand.data)


def test_attention_matches_duplicate_evaluation():
    params, _ = make_params(d=4, d_in=3, seed=13)
    rng = np.random.default_rng(5)
    x = rng.standard_normal(3)
    hs = [rng.standard_normal(4) for _ in range(3)]
    gates = reset_gates(params, Tensor(x), _tensors(hs))
    cand = candidate_state(params, Tensor(x), _tensors(hs), gates)
    pooled, alpha = attention_pool(params, Tensor(x), _tensors(hs),
                                   [True, True, True], cand)
    ref_h, ref_alpha = cell_reference(weights_of(params), x, hs)
    assert np.allclose(alpha.data, ref_alpha, atol=1e-12)
    assert np.allclose(pooled.data, ref_h, atol=1e-12)


def test_attention_weights_sum_to_one_pads_exact_zero():
    rng = np.random.default_rng(6)
    params, _ = make_params(d=5, d_in=4, seed=14)
    for _ in range(25):
        k_max = int(rng.integers(1, 6))
        k = int(rng.integers(1, k_max + 1))
        slots = _tensors([rng.standard_normal(5) for _ in range(k)]
                         + [np.zeros(5) for _ in range(k_max - k)])
        mask = [True] * k + [False] * (k_max - k)
        cand = Tensor(rng.standard_normal(5))
        _, alpha = attention_pool(params, Tensor(rng.standard_normal(4)), slots, mask, cand)
        assert abs(alpha.data.sum() - 1.0) < 1e-9
        assert np.all(alpha.data[k:k_max] == 0.0)


def test_pad_slot_states_receive_exact_zero_gradient():
    params, store = make_params(d=3, d_in=2, seed=15)
    rng = np.random.default_rng(7)
    x = Tensor(rng.standard_normal(2))
    real = Tensor(rng.standard_normal(3), requires_grad=True)
    pad = Tensor(rng.standard_normal(3), requires_grad=True)  # pad slot, nonzero on purpose
    gates = reset_gates(params, x, [real])
    cand = candidate_state(params, x, [real], gates)
    pooled, _ = attention_pool(params, x, [real, pad], [True, False], cand)
    backward(ad.tsum(ad.mul(pooled, pooled)))
    assert pad.grad is None or np.all(pad.grad == 0.0)
    assert real.grad is not None and np.any(real.grad != 0.0)


def test_attention_permutation_invariance_exact():
    params, _ = make_params(d=4, d_in=3, seed=16)
    rng = np.random.default_rng(8)
    x = Tensor(rng.standard_normal(3))
    states = [rng.standard_normal(4) for _ in range(3)] + [np.zeros(4)]
    mask = [True, True, True, False]
    cand = Tensor(rng.standard_normal(4))
    base_pool, base_alpha = attention_pool(params, x, _tensors(states), mask, cand)
    for seed in range(10):
        perm = list(np.random.default_rng(seed).permutation(4))
        pooled, alpha = attention_pool(params, x, _tensors([states[i] for i in perm]),
                                       [mask[i] for i in perm], cand)
        assert np.array_equal(pooled.data, base_pool.data)
        assert np.array_equal(alpha.data[:-1], base_alpha.data[perm])
        assert alpha.data[-1] == base_alpha.data[-1]


def test_pooled_state_in_convex_hull_of_keys():
    params, _ = make_params(d=4, d_in=3, seed=17)
    rng = np.random.default_rng(9)
    for _ in range(20):
        x = Tensor(rng.standard_normal(3))
        hs = [rng.standard_normal(4) for _ in range(int(rng.integers(1, 4)))]
        gates = reset_gates(params, x, _tensors(hs))
        cand = candidate_state(params, x, _tensors(hs), gates)
        pooled, _ = attention_pool(params, x, _tensors(hs), [True] * len(hs), cand)
        w = weights_of(params)
        keys = np.array([w["attn_hidden"] @ h for h in hs] + [cand.data])
        lo, hi = keys.min(axis=0), keys.max(axis=0)
        assert np.all(pooled.data >= lo - 1e-12) and np.all(pooled.data <= hi + 1e-12)


# ---------------------------------------------------------------------------
# directional encoding


def _embed(tokens, d_in, seed=0):
    rng = np.random.default_rng(seed)
    return [rng.standard_normal(d_in) for _ in tokens]


def _views(n_tokens, deps=(), k_max=4):
    g = build_graph(TokenSeq([f"w{i}" for i in range(n_tokens)]), list(deps))
    fwd, bwd = split_directional(g)
    return pad_predecessors(fwd, k_max), pad_predecessors(bwd, k_max)


def test_single_token_uses_virtual_predecessor():
    params, _ = make_params(d=3, d_in=2, seed=18)
    fwd, _ = _views(1)
    xs = _embed(range(1), 2, seed=1)
    last, states = encode_direction(params, fwd, _tensors(xs))
    ref = chain_recurrence(weights_of(params), xs)
    assert np.array_equal(last.data, ref)


def test_chain_equivalence_bitwise():
    rng = np.random.default_rng(10)
    for draw in range(10):
        d, d_in = int(rng.integers(2, 6)), int(rng.integers(2, 5))
        params, _ = make_params(d=d, d_in=d_in, seed=100 + draw)
        n = int(rng.integers(2, 9))
        fwd, bwd = _views(n, k_max=int(rng.integers(1, 5)))
        xs = _embed(range(n), d_in, seed=draw)
        last_f, _ = encode_direction(params, fwd, _tensors(xs))
        assert np.array_equal(last_f.data, chain_recurrence(weights_of(params), xs))
        last_b, _ = encode_direction(params, bwd, _tensors(xs))
        assert np.array_equal(last_b.data, chain_recurrence(weights_of(params), xs[::-1]))


def test_encode_deterministic():
    params, _ = make_params(seed=19)
    fwd, _ = _views(5, deps=[DepEdge(0, 3, "x")])
    xs = _embed(range(5), 2, seed=2)
    a, _ = encode_direction(params, fwd, _tensors(xs))
    b, _ = encode_direction(params, fwd, _tensors(xs))
    assert np.array_equal(a.data, b.data)


def test_padding_invariance_exact():
    params, _ = make_params(d=4, d_in=3, seed=20)
    deps = [DepEdge(0, 4, "a"), DepEdge(1, 4, "b")]
    xs = _embed(range(6), 3, seed=3)
    baseline = None
    for k_max in (3, 4, 6, 9):
        fwd, bwd = _views(6, deps=deps, k_max=k_max)
        out = encode_direction(params, fwd, _tensors(xs))[0].data
        out_b = encode_direction(params, bwd, _tensors(xs))[0].data
        if baseline is None:
            baseline = (out, out_b)
        else:
            assert np.array_equal(out, baseline[0])
            assert np.array_equal(out_b, baseline[1])


def test_bidirectional_shape_and_halves():
    params_f, store = make_params(d=2, d_in=2, seed=21)
    params_b = EncoderDirectionParams(store, "enc.bwd", 2, 2, seed=22)
    fwd, bwd = _views(4)
    xs = _tensors(_embed(range(4), 2, seed=4))
    out = encode_bidirectional(params_f, params_b, fwd, bwd, xs)
    assert out.shape == (4,)
    f_last, _ = encode_direction(params_f, fwd, xs)
    assert np.array_equal(out.data[:2], f_last.data)


def test_bidirectional_zero_everything_gives_zeros():
    params_f, store = make_params(d=2, d_in=2, seed=23, zero=True)
    params_b = EncoderDirectionParams(store, "enc.bwd", 2, 2, seed=24)
    for p in store:
        p.data = np.zeros_like(p.data)
    fwd, bwd = _views(3)
    xs = _tensors([np.zeros(2) for _ in range(3)])
    out = encode_bidirectional(params_f, params_b, fwd, bwd, xs)
    assert np.array_equal(out.data, np.zeros(4))


def test_palindrome_with_tied_directions_gives_equal_halves():
    # symmetric tokens and symmetric dependency edges: reversing the
    # sequence maps the forward view onto the backward view, so with one
    # shared parameter set the two final states coincide.
    params, _ = make_params(d=3, d_in=2, seed=25)
    n = 5
    deps = [DepEdge(0, 2, "s"), DepEdge(2, 4, "s")]  # symmetric under reversal
    fwd, bwd = _views(n, deps=deps)
    rng = np.random.default_rng(11)
    half = [rng.standard_normal(2) for _ in range(n // 2 + 1)]
    xs = half + half[:-1][::-1]  # palindrome
    out = encode_bidirectional(params, params, fwd, bwd, _tensors(xs))
    assert np.array_equal(out.data[:3], out.data[3:])


def test_encoder_gradients_match_finite_differences():
    params, store = make_params(d=3, d_in=2, seed=26)
    fwd, _ = _views(4, deps=[DepEdge(0, 2, "x")], k_max=3)
    xs = _embed(range(4), 2, seed=5)

    def run():
        last, _ = encode_direction(params, fwd, _tensors(xs))
        return float(np.sum(last.data * last.data))

    last, _ = encode_direction(params, fwd, _tensors(xs))
    backward(ad.tsum(ad.mul(last, last)))
    arrays = [p.data for p in store]
    fds = finite_diff(run, arrays)
    for p, fd in zip(store, fds):
        assert max_rel_error(p.grad, fd) < 1e-6, p.name
