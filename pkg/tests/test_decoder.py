import numpy as np
import pytest

from table2seq import autodiff as ad
from table2seq import decoder as dec
from table2seq.model import FIRST_GENERATED_ID, Model, ModelConfig
from table2seq.table_data import EOS, UNK, make_instance
from table2seq.trainer import nll_loss
from helpers import central_difference, exhaustive_best, max_rel_err, tiny_search_model, toy_instance, toy_model


def memory_for(model, inst=None):
    inst = inst or toy_instance()
    return dec.prepare(inst.row, model)


def _features(model, memory):
    st = dec.initial_state(memory, model)
    emb = dec.embed_token(st.prev_token, model)
    s = memory.encoded.initial_state
    local = ad.take(model["attr_embedding"], st.prev_attr)
    return dec.output_features(emb, s, s, s, local, model)


class TestAttention:
    def test_zero_scorer_is_uniform(self):
        model = toy_model()
        for name in ("att_Ws", "att_Wh", "att_Wcov", "att_b", "att_v"):
            model[name].value[:] = 0.0
        mem = memory_for(model, make_instance(["a", "b", "c"], ["x", "y", "z"], "x"))
        alpha = dec.attention_step(mem.encoded.initial_state, mem, ad.constant(np.zeros(12)), model)
        np.testing.assert_array_equal(alpha.value, np.full(3, 1 / 3))

    def test_single_state(self):
        model = toy_model()
        mem = memory_for(model, make_instance(["a"], ["x"], "x"))
        alpha = dec.attention_step(mem.encoded.initial_state, mem, ad.constant(np.ones(12)), model)
        assert alpha.value.tolist() == [1.0]

    def test_matches_direct_oracle(self):
        model = toy_model(seed=3, std=0.5)
        mem = memory_for(model)
        rng = np.random.default_rng(0)
        q, prev = rng.normal(size=12), rng.normal(size=12)
        alpha = dec.attention_step(ad.constant(q), mem, ad.constant(prev), model).value
        H = mem.states.value
        p = model.arrays()
        scores = np.array([
            p["att_v"] @ np.tanh(q @ p["att_Ws"] + h @ p["att_Wh"] + prev @ p["att_Wcov"] + p["att_b"]) for h in H
        ])
        expected = np.exp(scores) / np.exp(scores).sum()
        assert np.max(np.abs(alpha - expected)) < 1e-12

    def test_no_states(self):
        model = toy_model()
        mem = memory_for(model)
        mem.words = []
        with pytest.raises(ad.DomainError):
            dec.attention_step(mem.encoded.initial_state, mem, ad.constant(np.zeros(12)), model)

    def test_coverage_feedback_changes_scores(self):
        model = toy_model(seed=5, std=0.5)
        mem = memory_for(model, make_instance(["player", "team", "year"], ["ned", "cup", "final"], "ned"))
        q = mem.encoded.initial_state
        a1 = dec.attention_step(q, mem, ad.matmul(ad.constant([1.0, 0, 0]), mem.states), model).value
        a2 = dec.attention_step(q, mem, ad.matmul(ad.constant([0, 0, 1.0]), mem.states), model).value
        assert not np.allclose(a1, a2)


class TestContext:
    def test_one_hot(self):
        states = ad.constant(np.random.default_rng(1).normal(size=(4, 3)))
        c = dec.context(ad.constant([0, 0, 1.0, 0]), states)
        np.testing.assert_array_equal(c.value, states.value[2])

    def test_identical_columns(self):
        states = ad.constant(np.tile([0.3, -0.2], (3, 1)))
        np.testing.assert_allclose(dec.context(ad.constant(np.full(3, 1 / 3)), states).value, [0.3, -0.2], atol=1e-15)

    def test_convex_bounds(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            H = rng.normal(size=(5, 4))
            a = rng.dirichlet(np.ones(5))
            c = dec.context(ad.constant(a), ad.constant(H)).value
            assert np.all(c >= H.min(axis=0) - 1e-12) and np.all(c <= H.max(axis=0) + 1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ad.ShapeError):
            dec.context(ad.constant([0.5, 0.5]), ad.constant(np.zeros((3, 2))))


class TestGru:
    def _inputs(self, model, seed=0):
        rng = np.random.default_rng(seed)
        return (ad.constant(rng.normal(size=8)), ad.constant(rng.normal(size=12) * 0.5), ad.constant(rng.normal(size=12)))

    def test_update_gate_closed_carries_state(self):
        model = toy_model()
        model["gru_Wz"].value[:] = 0
        model["gru_Uz"].value[:] = 0
        model["gru_bz"].value[:] = -1e3
        emb, s, c = self._inputs(model)
        assert np.array_equal(dec.gru_step(emb, s, c, model).value, s.value)

    def test_update_gate_open_takes_candidate(self):
        model = toy_model()
        model["gru_Wz"].value[:] = 0
        model["gru_Uz"].value[:] = 0
        model["gru_bz"].value[:] = 1e3
        emb, s, c = self._inputs(model)
        p = model.arrays()
        x = np.concatenate([emb.value, c.value])
        r = 1 / (1 + np.exp(-(x @ p["gru_Wr"] + s.value @ p["gru_Ur"] + p["gru_br"])))
        cand = np.tanh(x @ p["gru_Wh"] + (r * s.value) @ p["gru_Uh"] + p["gru_bh"])
        np.testing.assert_allclose(dec.gru_step(emb, s, c, model).value, cand, atol=1e-15)

    def test_gradients(self):
        model = toy_model(seed=2, std=0.4)
        emb, s, c = self._inputs(model)
        w = np.random.default_rng(9).normal(size=12)

        def loss():
            return ad.total(ad.mul(dec.gru_step(emb, s, c, model), ad.constant(w)))

        ad.backward(loss())
        for name in ("gru_Wz", "gru_Uz", "gru_bz", "gru_Wr", "gru_Ur", "gru_br", "gru_Wh", "gru_Uh", "gru_bh"):
            p = model[name]
            numeric = central_difference(lambda: float(loss().value), p.value)
            assert max_rel_err(p.grad, numeric) < 1e-4, name


class TestOutputLayer:
    def test_zero_weights_uniform(self):
        model = toy_model()
        model["out_Wo"].value[:] = 0
        model["out_bo"].value[:] = 0
        beta = dec.generate_distribution(_features(model, memory_for(model)), model).value
        n = len(model.vocab) - FIRST_GENERATED_ID
        np.testing.assert_allclose(beta, np.full(n, 1 / n), atol=1e-15)

    def test_distribution_valid(self):
        for seed in range(5):
            model = toy_model(seed=seed, std=1.0)
            beta = dec.generate_distribution(_features(model, memory_for(model)), model).value
            assert np.all(beta > 0) and abs(beta.sum() - 1) < 1e-9

    def test_without_global_changes_beta(self):
        on = toy_model(seed=1, std=0.5)
        off = Model(ModelConfig(**{**on.config.to_dict(), "use_global": False}), on.vocab, on.attr_vocab, on.params)
        mem = memory_for(on)
        assert not np.allclose(
            dec.generate_distribution(_features(on, mem), on).value,
            dec.generate_distribution(_features(off, mem), off).value,
        )


class TestCopyGate:
    def test_zero_gate(self):
        model = toy_model()
        model["gate_w"].value[:] = 0
        model["gate_b"].value[:] = 0
        assert dec.copy_gate(_features(model, memory_for(model)), model).value.tolist() == [0.5]

    def test_large_bias_saturates(self):
        model = toy_model()
        model["gate_b"].value[:] = 50.0
        assert dec.copy_gate(_features(model, memory_for(model)), model).value[0] > 1 - 1e-15

    def test_gradient(self):
        model = toy_model(seed=6, std=0.4)
        mem = memory_for(model)

        def gate():
            return ad.total(dec.copy_gate(_features(model, mem), model))

        ad.backward(gate())
        for name in ("gate_w", "gate_b"):
            numeric = central_difference(lambda: float(gate().value), model[name].value)
            assert max_rel_err(model[name].grad, numeric) < 1e-4


class TestMixture:
    def setup_method(self):
        # "cup" is in the vocabulary and fills two columns; "zorba" is out of vocabulary
        self.model = toy_model()
        self.inst = make_instance(["team", "player", "year"], ["cup", "zorba", "cup"], "cup")
        self.mem = memory_for(self.model, self.inst)
        self.alpha = ad.constant([0.2, 0.5, 0.3])
        n = len(self.model.vocab) - FIRST_GENERATED_ID
        self.beta = ad.constant(np.random.default_rng(0).dirichlet(np.ones(n)))

    def test_gate_zero_is_beta(self):
        p = dec.mixture_distribution(ad.constant([0.0]), self.alpha, self.beta, self.mem, len(self.model.vocab)).value
        V = len(self.model.vocab)
        np.testing.assert_allclose(p[FIRST_GENERATED_ID:V], self.beta.value, atol=0)
        assert p[V:].sum() == 0 and p[:FIRST_GENERATED_ID].sum() == 0

    def test_gate_one_is_aggregated_attention(self):
        p = dec.mixture_distribution(ad.constant([1.0]), self.alpha, self.beta, self.mem, len(self.model.vocab)).value
        cup, zorba = self.model.vocab.id("cup"), len(self.model.vocab)
        assert p[cup] == pytest.approx(0.5, abs=1e-15)
        assert p[zorba] == pytest.approx(0.5, abs=1e-15)
        assert np.count_nonzero(p) == 2

    def test_hand_computed_overlap(self):
        g = 0.3
        p = dec.mixture_distribution(ad.constant([g]), self.alpha, self.beta, self.mem, len(self.model.vocab)).value
        cup = self.model.vocab.id("cup")
        beta_cup = self.beta.value[cup - FIRST_GENERATED_ID]
        assert p[cup] == pytest.approx(g * (0.2 + 0.3) + (1 - g) * beta_cup, abs=1e-15)
        assert abs(p.sum() - 1) < 1e-12

    def test_monotone_in_gate(self):
        V = len(self.model.vocab)
        gates = np.linspace(0, 1, 11)
        for word_id in range(FIRST_GENERATED_ID, V + 1):
            vals = [dec.mixture_distribution(ad.constant([g]), self.alpha, self.beta, self.mem, V).value[word_id] for g in gates]
            diffs = np.diff(vals)
            assert np.all(diffs >= -1e-15) or np.all(diffs <= 1e-15)


class TestDecodeStep:
    def test_copy_off_oov_target_is_unk(self):
        model = toy_model(copy=False)
        inst = toy_instance()
        mem = memory_for(model, inst)
        targets = dec.target_ids(inst.reference, mem, model)
        assert targets[0] == model.vocab.stoi[UNK]
        step = dec.decode_step(mem, dec.initial_state(mem, model), model)
        assert step.p.shape == (len(model.vocab),)
        assert step.gate is None

    def test_copy_on_oov_target_reachable(self):
        model = toy_model()
        inst = toy_instance()
        mem = memory_for(model, inst)
        targets = dec.target_ids(inst.reference, mem, model)
        assert targets[0] == len(model.vocab)
        step = dec.decode_step(mem, dec.initial_state(mem, model), model)
        assert step.p.value[targets[0]] > 0

    def test_all_flags_on_sums_to_one(self):
        model = toy_model(plusplus=True, std=1.0)
        mem = memory_for(model)
        step = dec.decode_step(mem, dec.initial_state(mem, model), model)
        assert abs(step.p.value.sum() - 1) < 1e-9 and abs(step.alpha.value.sum() - 1) < 1e-9

    def test_forced_reference_matches_loss(self):
        model = toy_model(seed=8, std=0.5)
        inst = toy_instance()
        logps = dec.reference_log_probs(inst.reference, memory_for(model, inst), model)
        assert len(logps) == len(inst.reference) + 1
        assert -sum(logps) == pytest.approx(float(nll_loss(inst, model).loss.value), abs=1e-10)

    def test_cumulative_attention(self):
        model = toy_model(seed=2)
        mem = memory_for(model)
        st = dec.initial_state(mem, model)
        s1 = dec.decode_step(mem, st, model)
        st2, _ = dec.advance(s1, model.vocab.id("the"), mem, model)
        s2 = dec.decode_step(mem, st2, model)
        np.testing.assert_allclose(s2.cumulative, s1.alpha.value + s2.alpha.value, atol=1e-15)

    def test_local_source_resolution(self):
        model = toy_model(seed=2)
        inst = make_instance(["team", "player"], ["cup", "cup"], "cup")
        mem = memory_for(model, inst)
        step = dec.decode_step(mem, dec.initial_state(mem, model), model)
        nxt, src = dec.advance(step, model.vocab.id("cup"), mem, model)
        assert src == int(np.argmax(step.alpha.value))
        assert nxt.prev_attr == mem.attribute_ids[src]
        nxt, src = dec.advance(step, model.vocab.id("the"), mem, model)
        assert src is None and nxt.prev_attr == model.attr_vocab.stoi["<unk_a>"]


class TestPlusPlus:
    def test_doubles_attendable_states(self):
        model = toy_model(plusplus=True)
        assert memory_for(model).size == 4
        assert memory_for(toy_model()).size == 2

    def test_attribute_word_copyable(self):
        model = toy_model(plusplus=True, std=0.5)
        inst = make_instance(["capacity", "player"], ["triple", "cyclone"], "the capacity of cyclone triple was triple")
        mem = memory_for(model, inst)
        assert "capacity" in mem.words
        targets = dec.target_ids(inst.reference, mem, model)
        cap_id = targets[1]
        assert dec.token_word(cap_id, mem, model) == "capacity"
        step = dec.decode_step(mem, dec.initial_state(mem, model), model)
        assert step.p.value[cap_id] > 0
        # without ++ the attribute word is unknown
        plain = toy_model(std=0.5)
        assert dec.target_ids(inst.reference, memory_for(plain, inst), plain)[1] == plain.vocab.unk_id

    def test_attribute_state_can_win_copy(self):
        model = toy_model(plusplus=True)
        inst = make_instance(["capacity"], ["triple"], "capacity")
        mem = memory_for(model, inst)
        model["gate_b"].value[:] = 60.0
        for name in ("att_Ws", "att_Wcov", "att_b"):
            model[name].value[:] = 0
        # bias attention toward the attribute state through its projection
        model["att_v"].value[:] = 1.0
        model["att_Wh"].value[:] = np.eye(12)
        model["attr_state_b"].value[:] = 5.0
        mem = memory_for(model, inst)
        hyp = dec.greedy_decode(mem, model, max_len=1)
        assert hyp.words == ["capacity"]


class TestBeamSearch:
    def test_candidate_space_is_four(self):
        model, mem = tiny_search_model(0)
        assert mem.ext_size(len(model.vocab)) - FIRST_GENERATED_ID == 4

    @pytest.mark.parametrize("seed", range(4))
    def test_exhaustive_oracle(self, seed):
        model, mem = tiny_search_model(seed)
        score, seq = exhaustive_best(model, mem, 3)
        top = dec.beam_search(mem, model, beam=64, max_len=3)[0]
        assert top.tokens == seq
        assert top.logp == pytest.approx(score, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_beam_one_is_greedy(self, seed):
        model = toy_model(seed=seed, std=0.8)
        mem = memory_for(model)
        greedy = dec.greedy_decode(mem, model, max_len=8)
        beam = dec.beam_search(mem, model, beam=1, max_len=8)[0]
        assert greedy.tokens == beam.tokens
        assert greedy.logp == pytest.approx(beam.logp, abs=1e-12)

    def test_results_sorted_and_bounded(self):
        model = toy_model(seed=1, std=0.8)
        hyps = dec.beam_search(memory_for(model), model, beam=5, max_len=6)
        assert 1 <= len(hyps) <= 5
        assert all(a.logp >= b.logp for a, b in zip(hyps, hyps[1:]))
        for h in hyps:
            if h.finished:
                assert h.tokens[-1] == model.vocab.stoi[EOS]

    def test_copy_off_never_emits_oov(self):
        model = toy_model(seed=3, std=1.0, copy=False)
        inst = toy_instance()
        for hyp in dec.beam_search(memory_for(model, inst), model, beam=5, max_len=8):
            assert all(w in model.vocab for w in hyp.words)

    def test_invalid_arguments(self):
        model = toy_model()
        with pytest.raises(ValueError):
            dec.beam_search(memory_for(model), model, beam=0)


def test_default_beam_width_is_five():
    import inspect

    from table2seq.cli import build_parser
    from table2seq.trainer import TrainConfig

    assert inspect.signature(dec.decode).parameters["beam"].default == 5
    assert inspect.signature(dec.beam_search).parameters["beam"].default == 5
    assert TrainConfig(ModelConfig()).beam == 5
    args = build_parser().parse_args(["generate", "--checkpoint", "c", "--input", "i"])
    assert args.beam == 5
