import math

import numpy as np
import pytest

from graphtalk import autodiff as ad
from graphtalk.autodiff import ParameterStore, Tensor, backward
from graphtalk.decoder import (DecoderParams, copy_or_generate, graph_dist,
                               greedy_decode, gru_step, init_hidden,
                               joint_loss, vocab_dist)
from graphtalk.errors import DataError, ShapeError
from graphtalk.kgraph import KGParams, build_kb_graph, update_level
from graphtalk.vocab import SketchVocabulary

from oracles import finite_diff, gru_reference, max_rel_error


def make_vocab(extra=("is", "away"), tags=("@poi", "@distance")):
    return SketchVocabulary.build([list(extra) + list(tags)], set(tags))


def make_decoder(vocab_size=8, embed=3, hidden=6, d_e=4, seed=0, zero=False):
    store = ParameterStore()
    params = DecoderParams(store, vocab_size, embed, hidden, d_e, seed)
    if zero:
        for p in store:
            p.data = np.zeros_like(p.data)
    return params, store


def decoder_weights(params):
    return {
        "update_input": params.update_input.data,
        "update_hidden": params.update_hidden.data,
        "update_bias": params.update_bias.data,
        "reset_input": params.reset_input.data,
        "reset_hidden": params.reset_hidden.data,
        "reset_bias": params.reset_bias.data,
        "cand_input": params.cand_input.data,
        "cand_hidden": params.cand_hidden.data,
        "cand_bias": params.cand_bias.data,
    }


def _kg(triples, d_e=4, hops=2, seed=1):
    store = ParameterStore()
    params = KGParams(store, 8, d_e, hops, seed)
    graph = build_kb_graph(triples)
    tids = np.arange(len(graph)) % 8
    levels = [update_level(e, a, graph, tids)
              for e, a in zip(params.embeddings, params.attention)]
    return graph, levels, store


# ---------------------------------------------------------------------------
# init hidden


def test_init_hidden_concatenates():
    h0 = init_hidden(Tensor(np.array([1.0, 2.0])), Tensor(np.array([3.0, 4.0])))
    assert np.array_equal(h0.data, [1.0, 2.0, 3.0, 4.0])


def test_init_hidden_zeros():
    h0 = init_hidden(Tensor(np.zeros(2)), Tensor(np.zeros(3)))
    assert np.array_equal(h0.data, np.zeros(5))


def test_init_hidden_shape_contract():
    rng = np.random.default_rng(0)
    for d, d_e in [(2, 4), (3, 6), (5, 1)]:
        h0 = init_hidden(Tensor(rng.standard_normal(2 * d)),
                         Tensor(rng.standard_normal(d_e)))
        assert h0.shape == (2 * d + d_e,)


# ---------------------------------------------------------------------------
# GRU step


def test_gru_zero_params_halves_state():
    params, _ = make_decoder(zero=True)
    h_prev = np.array([0.4, -0.6, 1.0, 0.0, 2.0, -2.0])
    h = gru_step(params, Tensor(np.zeros(3)), Tensor(h_prev))
    assert np.allclose(h.data, 0.5 * h_prev, atol=1e-15)


def test_gru_zero_state_zero_params_stays_zero():
    params, _ = make_decoder(zero=True)
    h = gru_step(params, Tensor(np.zeros(3)), Tensor(np.zeros(6)))
    assert np.array_equal(h.data, np.zeros(6))


def test_gru_matches_scalar_reference():
    params, _ = make_decoder(hidden=2, embed=2, vocab_size=4, d_e=2, seed=3)
    rng = np.random.default_rng(2)
    x = rng.standard_normal(2)
    h_prev = rng.standard_normal(2)
    h = gru_step(params, Tensor(x), Tensor(h_prev))
    expected = gru_reference(decoder_weights(params), x, h_prev)
    assert np.allclose(h.data, expected, atol=1e-12)


def test_gru_shape_error():
    params, _ = make_decoder()
    with pytest.raises(ShapeError):
        gru_step(params, Tensor(np.zeros(5)), Tensor(np.zeros(6)))


# ---------------------------------------------------------------------------
# vocab head


def test_vocab_dist_zero_projection_uniform():
    params, _ = make_decoder(zero=True)
    pv = vocab_dist(params, Tensor(np.random.default_rng(1).standard_normal(6)))
    assert np.allclose(pv.data, np.full(8, 1.0 / 8.0), atol=1e-15)


def test_vocab_dist_shift_invariance():
    params, _ = make_decoder(seed=5)
    h = np.random.default_rng(3).standard_normal(6)
    base = vocab_dist(params, Tensor(h)).data
    params.out_proj.data = params.out_proj.data.copy()
    # adding a constant row offset shifts all logits equally per hidden unit
    logits = params.out_proj.data @ h
    shifted = ad.masked_softmax(Tensor(logits + 7.5), np.ones(8, dtype=bool)).data
    assert np.allclose(base, shifted, atol=1e-12)
    assert np.argmax(base) == np.argmax(shifted)


def test_vocab_dist_hand_logits():
    # softmax([0, ln2, ln4]) = [1/7, 2/7, 4/7]
    out = ad.masked_softmax(Tensor(np.array([0.0, math.log(2.0), math.log(4.0)])),
                            np.ones(3, dtype=bool))
    assert np.allclose(out.data, [1 / 7, 2 / 7, 4 / 7], atol=1e-12)


# ---------------------------------------------------------------------------
# graph head


def test_graph_dist_one_node():
    graph, levels, _ = _kg([("a", "self", "a")])
    params, _ = make_decoder(d_e=4)
    pg, trace = graph_dist(params, Tensor(np.zeros(6)), levels, 2, graph)
    assert abs(pg.data.sum() - 1.0) < 1e-12
    assert pg.shape == (len(graph),)


def test_graph_dist_zero_query_uniform():
    # with one hop the zero query scores every node equally
    graph, levels, _ = _kg([("a", "r", "b"), ("a", "q", "c")], hops=1)
    params, _ = make_decoder(zero=True)
    pg, _ = graph_dist(params, Tensor(np.zeros(6)), levels[:2], 1, graph)
    assert np.allclose(pg.data, np.full(len(graph), 1.0 / len(graph)), atol=1e-15)


def test_graph_dist_empty_graph_sentinel():
    graph = build_kb_graph([])
    params, _ = make_decoder()
    pg, trace = graph_dist(params, Tensor(np.zeros(6)), [], 2, graph)
    assert pg is None and trace is None


def test_graph_dist_consistent_with_multi_hop():
    from graphtalk.kgraph import multi_hop
    graph, levels, _ = _kg([("hub", "r1", "x"), ("hub", "r2", "y"), ("hub", "r3", "z")])
    params, _ = make_decoder(d_e=4, seed=9)
    h = np.random.default_rng(4).standard_normal(6)
    pg, _ = graph_dist(params, Tensor(h), levels, 2, graph)
    q0 = params.query_proj.data @ h
    _, p_direct, _ = multi_hop(Tensor(q0), levels, 2, graph)
    assert np.array_equal(pg.data, p_direct.data)


# ---------------------------------------------------------------------------
# copy rule


def test_copy_rule_tag_copies_argmax_node():
    vocab = make_vocab()
    graph = build_kb_graph([("palo_alto_garage", "distance", "1_miles")],
                           {"palo_alto_garage": "poi"})
    pv = np.zeros(len(vocab))
    pv[vocab.index["@poi"]] = 1.0
    pg = np.array([0.9, 0.1])
    surface, sid, node, failed = copy_or_generate(pv, pg, vocab, graph)
    assert surface == "palo_alto_garage"
    assert node == 0 and not failed


def test_copy_rule_non_tag_passthrough():
    vocab = make_vocab()
    graph = build_kb_graph([("a", "r", "b")])
    pv = np.zeros(len(vocab))
    pv[vocab.index["is"]] = 1.0
    surface, sid, node, failed = copy_or_generate(pv, np.array([0.5, 0.5]), vocab, graph)
    assert surface == "is" and node is None and not failed


def test_copy_rule_tag_with_empty_graph_flags_failure():
    vocab = make_vocab()
    graph = build_kb_graph([])
    pv = np.zeros(len(vocab))
    pv[vocab.index["@poi"]] = 1.0
    surface, sid, node, failed = copy_or_generate(pv, None, vocab, graph)
    assert surface == "@poi" and failed


def test_copy_rule_scaling_invariance_and_tie_break():
    vocab = make_vocab()
    graph = build_kb_graph([("a", "r", "b"), ("a", "q", "c")])
    pv = np.zeros(len(vocab))
    pv[vocab.index["@distance"]] = 1.0
    logits = np.array([0.2, 1.4, -0.3])
    for scale in (1.0, 0.5, 3.0):
        z = np.exp(scale * logits)
        pg = z / z.sum()
        surface, _, node, _ = copy_or_generate(pv, pg, vocab, graph)
        assert node == 1
    # exact tie resolves to the lowest node id
    surface, _, node, _ = copy_or_generate(pv, np.array([0.4, 0.4, 0.2]), vocab, graph)
    assert node == 0


# ---------------------------------------------------------------------------
# joint loss


def _onehot(n, i, eps=0.0):
    p = np.full(n, eps / (n - 1)) if eps else np.zeros(n)
    p[i] = 1.0 - eps
    return p


def test_joint_loss_perfect_predictions_zero():
    pv = [Tensor(_onehot(4, 1)), Tensor(_onehot(4, 3))]
    pg = [Tensor(_onehot(3, 0)), None]
    loss = joint_loss(pv, [1, 3], pg, [0, None])
    assert loss.item() == 0.0


def test_joint_loss_uniform_vocab_ln4():
    pv = [Tensor(np.full(4, 0.25))]
    loss = joint_loss(pv, [2], [None], [None])
    assert abs(loss.item() - math.log(4.0)) < 1e-12


def test_joint_loss_matches_manual_summation():
    rng = np.random.default_rng(5)
    T, V, N = 4, 6, 3
    pvs = []
    pgs = []
    ys = []
    labels = []
    for t in range(T):
        v = rng.random(V) + 0.05
        v /= v.sum()
        pvs.append(Tensor(v))
        ys.append(int(rng.integers(V)))
        if t % 2 == 0:
            g = rng.random(N) + 0.05
            g /= g.sum()
            pgs.append(Tensor(g))
            labels.append(int(rng.integers(N)))
        else:
            pgs.append(None)
            labels.append(None)
    loss = joint_loss(pvs, ys, pgs, labels)
    vocab_ce = [-math.log(pv.data[y]) for pv, y in zip(pvs, ys)]
    graph_ce = [-math.log(pg.data[l]) for pg, l in zip(pgs, labels) if l is not None]
    expected = sum(vocab_ce) / len(vocab_ce) + sum(graph_ce) / len(graph_ce)
    assert abs(loss.item() - expected) < 1e-12


def test_joint_loss_batch_order_invariance_exact():
    rng = np.random.default_rng(6)
    T, V = 6, 5
    pvs = []
    ys = []
    for _ in range(T):
        v = rng.random(V) + 0.01
        v /= v.sum()
        pvs.append(Tensor(v))
        ys.append(int(rng.integers(V)))
    base = joint_loss(pvs, ys, [None] * T, [None] * T).item()
    for seed in range(5):
        perm = list(np.random.default_rng(seed).permutation(T))
        shuffled = joint_loss([pvs[i] for i in perm], [ys[i] for i in perm],
                              [None] * T, [None] * T).item()
        assert shuffled == base


def test_joint_loss_label_out_of_range():
    pv = [Tensor(np.full(4, 0.25))]
    pg = [Tensor(np.full(3, 1 / 3))]
    with pytest.raises(DataError) as err:
        joint_loss(pv, [0], pg, [7])
    assert "timestep 0" in str(err.value)


def test_joint_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    logits_v = rng.standard_normal(5)
    logits_g = rng.standard_normal(3)
    pv_param = ad.Parameter("lv", logits_v.copy())
    pg_param = ad.Parameter("lg", logits_g.copy())

    def build(lv, lg):
        pv = ad.masked_softmax(lv, np.ones(5, dtype=bool))
        pg = ad.masked_softmax(lg, np.ones(3, dtype=bool))
        return joint_loss([pv], [2], [pg], [1])

    loss = build(pv_param, pg_param)
    backward(loss)

    def f():
        return build(Tensor(pv_param.data), Tensor(pg_param.data)).item()

    fds = finite_diff(f, [pv_param.data, pg_param.data])
    assert max_rel_error(pv_param.grad, fds[0]) < 1e-6
    assert max_rel_error(pg_param.grad, fds[1]) < 1e-6


# ---------------------------------------------------------------------------
# greedy decode


def test_greedy_decode_zero_length():
    vocab = make_vocab()
    params, _ = make_decoder(vocab_size=len(vocab), embed=3, hidden=6, d_e=4)
    graph, levels, _ = _kg([("a", "r", "b")])
    embed = Tensor(np.random.default_rng(1).standard_normal((len(vocab), 3)))
    steps = greedy_decode(params, vocab, embed, Tensor(np.zeros(6)), levels, 2, graph, 0)
    assert steps == []


def test_greedy_decode_deterministic():
    vocab = make_vocab()
    params, _ = make_decoder(vocab_size=len(vocab), embed=3, hidden=6, d_e=4, seed=11)
    graph, levels, _ = _kg([("a", "r", "b")])
    embed = Tensor(np.random.default_rng(2).standard_normal((len(vocab), 3)))
    h0 = Tensor(np.random.default_rng(3).standard_normal(6))
    a = greedy_decode(params, vocab, embed, h0, levels, 2, graph, 8)
    b = greedy_decode(params, vocab, embed, h0, levels, 2, graph, 8)
    assert [s.surface_token for s in a] == [s.surface_token for s in b]
    assert [s.sketch_id for s in a] == [s.sketch_id for s in b]


def test_greedy_decode_stops_at_eos_and_feeds_sketch_back():
    vocab = make_vocab()
    params, _ = make_decoder(vocab_size=len(vocab), embed=3, hidden=6, d_e=4, seed=13)
    graph, levels, _ = _kg([("a", "r", "b")])
    embed = Tensor(np.random.default_rng(4).standard_normal((len(vocab), 3)))
    h0 = Tensor(np.random.default_rng(5).standard_normal(6))
    steps = greedy_decode(params, vocab, embed, h0, levels, 2, graph, 11)
    assert len(steps) <= 11
    for s in steps:
        assert s.sketch_id != vocab.eos_id
        # sketch token is a vocabulary word even when a copy happened
        assert s.sketch_token == vocab.decode(s.sketch_id)
