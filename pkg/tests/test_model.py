import numpy as np
import pytest

from cosum.autodiff import ContractViolation, Tape, grad_check
from cosum.model import (
    CopyGatedSeq2Seq,
    ModelConfig,
    apply_prior,
    copy_source_position,
)
from cosum.params import ParamStore
from cosum.rng import Prng
from cosum.textproc import corpus_vocab, generate_synthetic_corpus


@pytest.fixture(scope="module")
def small_model():
    config = ModelConfig(vocab_size=20, embed_dim=6, hidden_dim=8)
    return CopyGatedSeq2Seq.create(config, seed=11)


class TestConfig:
    def test_defaults(self):
        config = ModelConfig(vocab_size=10, embed_dim=4, hidden_dim=4)
        assert config.max_summary_sentences == 3
        assert config.max_tokens_per_sentence == 20

    @pytest.mark.parametrize("bad", [
        dict(vocab_size=0, embed_dim=4, hidden_dim=4),
        dict(vocab_size=4, embed_dim=4, hidden_dim=0),
        dict(vocab_size=4, embed_dim=4, hidden_dim=4, max_summary_sentences=0),
    ])
    def test_rejects_bad_dims(self, bad):
        with pytest.raises(ContractViolation):
            ModelConfig(**bad)


class TestEncode:
    def test_shapes(self, small_model):
        enc = small_model.encode([5, 6, 7, 8])
        assert enc.states_value.shape == (4, 8)
        assert enc.final_value.shape == (8,)

    def test_deterministic(self, small_model):
        a = small_model.encode([5, 6, 7])
        b = small_model.encode([5, 6, 7])
        assert np.array_equal(a.states_value, b.states_value)

    def test_order_sensitivity(self, small_model):
        a = small_model.encode([5, 6, 7])
        b = small_model.encode([6, 5, 7])
        assert not np.array_equal(a.states_value, b.states_value)

    def test_empty_input_rejected(self, small_model):
        with pytest.raises(ContractViolation):
            small_model.encode([])

    def test_out_of_vocab_rejected(self, small_model):
        with pytest.raises(ContractViolation):
            small_model.encode([25])


class TestHook:
    def test_zero_weights_give_half(self):
        config = ModelConfig(vocab_size=10, embed_dim=4, hidden_dim=4)
        model = CopyGatedSeq2Seq.create(config, seed=0)
        from cosum.autodiff import Tensor

        model.store.set("hook.w", Tensor(np.zeros(4)))
        model.store.set("hook.b", Tensor(0.0))
        enc = model.encode([5, 6, 7])
        probs = model.hook_forward(enc)
        assert probs.tolist() == [0.5, 0.5, 0.5]

    def test_one_probability_per_token(self, small_model):
        enc = small_model.encode([5, 6, 7, 8, 9])
        probs = small_model.hook_forward(enc)
        assert probs.shape == (5,)
        assert np.all(probs > 0.0) and np.all(probs < 1.0)


class TestApplyPrior:
    def test_forces_exact_zero(self):
        state = apply_prior(np.array([0.9, 0.8]), {0})
        assert state.effective.tolist() == [0.0, 0.8]
        assert state.prior == ["FORCED_ZERO", "FREE"]

    def test_deselect_all(self):
        state = apply_prior(np.array([0.9, 0.8]), {0, 1})
        assert state.effective.tolist() == [0.0, 0.0]

    def test_deselect_none_is_identity(self):
        probs = np.array([0.3, 0.6])
        state = apply_prior(probs, set())
        assert np.array_equal(state.effective, probs)

    def test_out_of_range_rejected(self):
        with pytest.raises(ContractViolation):
            apply_prior(np.array([0.5]), {3})


class TestDecodeStep:
    def test_masked_renormalization_with_unit_gates(self, small_model):
        """effective=[1,0,1] and raw attention scores proportional to
        [0.2, 0.3, 0.5] must renormalize the copy side to [2/7, 0, 5/7]."""
        enc = small_model.encode([5, 6, 7])
        tape = enc.states.tape
        bound = small_model.bind(tape)
        effective = tape.const(np.array([1.0, 0.0, 1.0]))
        step = bound.decode_step(enc, effective, 1, enc.final)
        scores = np.log(step.attention_value)  # monotone recovery of scores
        expected = np.exp(scores)
        expected[1] = 0.0
        expected = expected / expected.sum()
        np.testing.assert_allclose(step.copy_dist.value, expected, atol=1e-12)
        assert step.copy_dist.value[1] == 0.0

    def test_mixture_identity(self, small_model, tiny_engine):
        """output_dist == switch * gen + (1 - switch) * mapped copy, recomputed
        independently from the recorded parts."""
        engine, examples = tiny_engine
        prng = Prng(31)
        for _ in range(200):
            ex = examples[prng.randint(len(examples))]
            ids = engine.vocab.encode_tokens(ex.document.tokens)
            enc = engine.model.encode(ids)
            probs = engine.model.hook_forward(enc)
            deselect = {i for i in range(len(ids)) if prng.uniform() < 0.3}
            hook = apply_prior(probs, deselect)
            step = engine.model.decode_step(enc, hook, 1)
            p_gen = float(step.switch.value)
            mix = p_gen * step.gen_dist.value + (1 - p_gen) * step.copy_vocab.value
            assert np.abs(mix - step.output_value).max() < 1e-12
            assert abs(step.output_value.sum() - 1.0) < 1e-12
            assert abs(step.attention_value.sum() - 1.0) < 1e-12

    def test_switch_one_when_support_empty(self, small_model):
        enc = small_model.encode([5, 6])
        hook = apply_prior(np.array([0.5, 0.5]), {0, 1})
        step = small_model.decode_step(enc, hook, 1)
        assert step.empty_support
        assert float(step.switch.value) == 1.0
        assert np.array_equal(step.output_value, step.gen_dist.value)
        assert np.all(step.copy_dist.value == 0.0)

    def test_forced_zero_gets_no_copy_mass_bit_exact(self, small_model):
        prng = Prng(5)
        for _ in range(100):
            n = 3 + prng.randint(4)
            ids = [5 + prng.randint(10) for _ in range(n)]
            enc = small_model.encode(ids)
            probs = small_model.hook_forward(enc)
            forced = {i for i in range(n) if prng.uniform() < 0.5}
            if len(forced) == n:
                forced.pop()
            hook = apply_prior(probs, forced)
            step = small_model.decode_step(enc, hook, 1)
            for i in forced:
                assert step.copy_dist.value[i] == 0.0

    def test_length_mismatch_rejected(self, small_model):
        enc = small_model.encode([5, 6, 7])
        hook = apply_prior(np.array([0.5, 0.5]), set())
        with pytest.raises(ContractViolation):
            small_model.decode_step(enc, hook, 1)

    def test_deterministic(self, small_model):
        enc = small_model.encode([5, 6, 7])
        hook = apply_prior(small_model.hook_forward(enc), {1})
        a = small_model.decode_step(enc, hook, 2)
        b = small_model.decode_step(small_model.encode([5, 6, 7]), hook, 2)
        assert np.array_equal(a.output_value, b.output_value)
        assert np.array_equal(a.state.value, b.state.value)


class TestCopySourcePosition:
    def test_reports_matching_position(self, small_model):
        enc = small_model.encode([5, 6, 5])
        hook = apply_prior(np.array([1.0, 1.0, 1.0]), set())
        step = small_model.decode_step(enc, hook, 1)
        copy_vocab = step.copy_vocab.value
        token = int(np.argmax(copy_vocab))
        pos = copy_source_position(step, token, enc.token_ids)
        if pos is not None:
            assert enc.token_ids[pos] == token


class TestDecodeStepGradient:
    def test_full_step_loss_gradcheck(self):
        examples = generate_synthetic_corpus(Prng(3), 2, 2)
        vocab = corpus_vocab(examples)
        config = ModelConfig(vocab_size=len(vocab), embed_dim=5, hidden_dim=6)
        model = CopyGatedSeq2Seq.create(config, seed=3)
        ids = vocab.encode_tokens(examples[0].document.tokens)[:4]
        gold = np.array(examples[0].gold_tags[:4], dtype=float)
        if gold.sum() == 0:
            gold[0] = 1.0
        target = ids[0]

        def build(store: ParamStore):
            m = CopyGatedSeq2Seq(config, store)
            tape = Tape()
            bound = m.bind(tape)
            enc = bound.encode(ids)
            step = bound.decode_step(enc, tape.const(gold), 1, enc.final)
            picked = tape.gather(step.output_dist, [target])
            return tape, tape.affine(
                tape.sum(tape.log(tape.clamp_min(picked, 1e-12))), -1.0, 0.0
            )

        assert grad_check(build, model.store, 1e-4) < 1e-4


class TestCheckpointRoundtrip:
    def test_save_load_preserves_behavior(self, tmp_path, tiny_engine):
        engine, examples = tiny_engine
        path = tmp_path / "forward.ckpt"
        engine.model.save(path, engine.vocab)
        loaded, vocab = CopyGatedSeq2Seq.load(path)
        assert vocab.to_config() == engine.vocab.to_config()
        ids = engine.vocab.encode_tokens(examples[0].document.tokens)
        a = engine.model.encode(ids)
        b = loaded.encode(ids)
        assert np.array_equal(a.states_value, b.states_value)
