"""Joint loss semantics, negative sampling, the training loop, checkpoints."""

import numpy as np
import pytest
from scipy.stats import chisquare

from notefuse import autodiff as ad
from notefuse.autodiff import Tensor
from notefuse.config import TrainConfig
from notefuse.corpus import compute_idf, split
from notefuse.embeddings import make_provider
from notefuse.frames import ConceptLexicon, SemanticFrame, build_frames
from notefuse.model import FeatureExtractor, FusionModel
from notefuse.synth import SynthConfig, generate_synthetic
from notefuse.training import (
    Adam,
    NegativeFramePool,
    SmoothL1TargetProjector,
    contrastive_loss,
    evaluate_records,
    l2_penalty,
    load_checkpoint,
    save_checkpoint,
    smooth_l1,
    train,
)


def tiny_config(**overrides):
    base = dict(
        emb_dim=8, frame_emb_dim=6, f_L=8, conv_layers=3, conv_filters=(4, 4),
        kernel_sizes=(2,), strides=(1, 1), pad_len_n=8, d_ssm=4, ssm_window_w=1,
        ssm_filters=3, ssm_kernel=2, dropout=0.0, margin=1.0, lambda_l2=1e-3,
        negatives_per_pair=1, learning_rate=3e-3, epochs=2, batch_size=4, seed=0,
    )
    base.update(overrides)
    return TrainConfig.from_dict(base)


def _frame(types, subcategory="Plan", tokens=()):
    return SemanticFrame("Nursing", subcategory, list(tokens), list(types))


class TestNegativePool:
    def test_forced_draw(self):
        true = _frame(["O", "O"])
        other = _frame(["dsyn", "O"])
        pool = NegativeFramePool([true, other])
        rng = np.random.default_rng(0)
        assert pool.sample(true, rng) == other

    def test_negative_never_equals_positive(self):
        frames = [_frame(["O"] * 3, subcategory=f"s{i}") for i in range(5)]
        pool = NegativeFramePool(frames)
        rng = np.random.default_rng(1)
        for f in frames:
            for _ in range(50):
                assert pool.sample(f, rng) != f

    def test_uniform_over_same_length_candidates(self):
        frames = [_frame(["O", "O"], subcategory=f"s{i}") for i in range(5)]
        pool = NegativeFramePool(frames)
        rng = np.random.default_rng(2)
        counts = {i: 0 for i in range(1, 5)}
        for _ in range(1000):
            got = pool.sample(frames[0], rng)
            counts[int(got.subcategory[1:])] += 1
        result = chisquare(list(counts.values()))
        assert result.pvalue > 0.01

    def test_nearest_length_fallback_pads_with_null_tag(self):
        true = _frame(["O", "O", "O"])
        donor = _frame(["dsyn"], subcategory="Other")
        pool = NegativeFramePool([true, donor])
        got = pool.sample(true, np.random.default_rng(3))
        assert got.sem_types == ["dsyn", "O", "O"]
        assert pool.fallback_draws == 1

    def test_empty_pool_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            NegativeFramePool([])

    def test_exhausted_pool_rejected(self):
        true = _frame(["O", "O"])
        with pytest.raises(ValueError, match="exhausted"):
            NegativeFramePool([true]).sample(true, np.random.default_rng(0))


class TestContrastiveLoss:
    def test_satisfied_margins_give_zero(self):
        pos = Tensor(np.array([3.0, 5.0, 2.0]))
        neg = Tensor(np.array([1.0, 4.0, 1.0]))
        assert contrastive_loss(pos, neg).item() == 0.0

    def test_equal_scores_give_margin_each(self):
        pos = Tensor(np.array([2.0, 2.0, 2.0, 2.0]))
        assert contrastive_loss(pos, pos).item() == pytest.approx(4.0)

    def test_mixed_batch_matches_loop_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            pos = rng.normal(size=6)
            neg = rng.normal(size=6)
            want = sum(max(0.0, 1.0 - p + n) for p, n in zip(pos, neg))
            got = contrastive_loss(Tensor(pos), Tensor(neg)).item()
            assert got == pytest.approx(want, abs=1e-12)
            assert got >= 0.0

    def test_l2_term_added(self):
        p = ad.Parameter(np.array([2.0, -1.0]), name="x")
        loss = contrastive_loss(Tensor(np.array([5.0])), Tensor(np.array([0.0])),
                                sentence_params=[p], lambda_l2=0.5)
        assert loss.item() == pytest.approx(0.5 * 5.0)

    def test_pair_count_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            contrastive_loss(Tensor(np.zeros(2)), Tensor(np.zeros(3)))

    def test_accepts_lists_of_scalars(self):
        pos = [Tensor(np.asarray(2.0)), Tensor(np.asarray(0.0))]
        neg = [Tensor(np.asarray(0.0)), Tensor(np.asarray(0.5))]
        assert contrastive_loss(pos, neg).item() == pytest.approx(0.0 + 1.5)


class TestSmoothL1:
    def test_identical_vectors_zero(self):
        c = Tensor(np.array([1.0, 2.0]))
        assert smooth_l1(c, np.array([1.0, 2.0])).item() == 0.0

    def test_unit_difference_branch_boundary(self):
        c = Tensor(np.array([1.0, 0.0]))
        assert smooth_l1(c, np.array([0.0, 0.0])).item() == pytest.approx(0.5)

    def test_linear_branch(self):
        c = Tensor(np.array([2.0]))
        assert smooth_l1(c, np.array([0.0])).item() == pytest.approx(1.5)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            smooth_l1(Tensor(np.zeros(3)), np.zeros(4))

    def test_projector_target_is_fixed_and_scaled(self):
        proj = SmoothL1TargetProjector(emb_dim=4, out_dim=6, seed=0)
        base = np.random.default_rng(0).normal(size=(3, 4))
        t1, t2 = proj.target(base), proj.target(base)
        np.testing.assert_array_equal(t1, t2)
        assert t1.shape == (6,)
        other = SmoothL1TargetProjector(emb_dim=4, out_dim=6, seed=1).target(base)
        assert not np.allclose(t1, other)


def _fixture_note_item(config, seed=0):
    """One two-sentence note with frames, features, and a target."""
    corpus = generate_synthetic(SynthConfig(patients=6, sections_min=2, sections_max=2), seed=seed)
    note = corpus.records[0].notes[0]
    lexicon = corpus.lexicon
    frames = build_frames(note, lexicon)
    all_notes = [n for r in corpus.records for n in r.notes]
    stats = compute_idf(all_notes)
    from notefuse.training import build_vocabs

    vocabs = build_vocabs(f for n in all_notes for f in build_frames(n, lexicon))
    provider = make_provider("deterministic_hash", config.emb_dim, config.seed)
    model = FusionModel(config, vocabs)
    extractor = FeatureExtractor(config, provider, stats, lexicon)
    feats = extractor.extract(note, frames)
    pool_frames = [f for n in all_notes for f in build_frames(n, lexicon)]
    return model, feats, frames, pool_frames, stats


class TestJointLossGradients:
    def test_full_joint_loss_matches_finite_differences(self):
        config = tiny_config(pad_len_n=6, frame_emb_dim=4, emb_dim=6, f_L=8,
                             conv_filters=(3, 3), d_ssm=4, ssm_filters=2)
        model, feats, frames, pool_frames, _ = _fixture_note_item(config)
        pool = NegativeFramePool(pool_frames)
        rng = np.random.default_rng(5)
        neg_frames = [pool.sample(frames[i], rng) for i in range(feats.n_sentences)]
        projector = SmoothL1TargetProjector(config.emb_dim, 2 * config.d_s, config.seed)
        target = projector.target(feats.base_matrix)
        for p in model.params.values():  # generic point, off the ReLU kinks
            p.data = p.data + rng.normal(scale=0.05, size=p.data.shape)

        def loss():
            fwd = model.encode_note(feats)
            pos = [fwd.alpha[i] for i in range(feats.n_sentences)]
            neg = [model.corrupted_score(fwd, i, neg_frames[i])
                   for i in range(feats.n_sentences)]
            cmm = contrastive_loss(pos, neg, model.sentence_params(),
                                   config.lambda_l2, config.margin)
            return cmm + smooth_l1(fwd.c, target)

        errors = ad.gradcheck(loss, model.params)
        worst = max(errors.values())
        assert worst <= 1e-3, max(errors, key=errors.get) + f": {worst:.2e}"

    def test_l2_term_matches_explicit_enumeration(self):
        config = tiny_config()
        model, _, _, _, _ = _fixture_note_item(config)
        got = l2_penalty(model.sentence_params()).item()
        want = sum(np.sum(model.params[name].data ** 2)
                   for name in model.sentence_param_names)
        assert got == pytest.approx(want, rel=1e-12)
        # the sentence group excludes the fusion and salience parameters
        assert "trilinear/w_s" not in model.sentence_param_names
        assert "salience/w_n" not in model.sentence_param_names
        assert any(n.startswith("frame_table/") for n in model.sentence_param_names)
        assert any(n.startswith("ssm/") for n in model.sentence_param_names)


class TestAdam:
    def test_deterministic_updates(self):
        def run():
            p = ad.Parameter(np.array([1.0, -2.0]), name="p")
            opt = Adam([p], lr=0.1)
            for step in range(5):
                p.grad = np.array([0.5, -1.0]) * (step + 1)
                opt.step()
            return p.data.copy()

        np.testing.assert_array_equal(run(), run())

    def test_skips_params_without_grad(self):
        p = ad.Parameter(np.ones(2), name="p")
        opt = Adam([p], lr=0.5)
        opt.step()
        np.testing.assert_array_equal(p.data, 1.0)


@pytest.fixture(scope="module")
def small_corpus():
    # sized so the patient-level test split holds both classes
    return generate_synthetic(
        SynthConfig(patients=40, prevalence_30d=0.4, prevalence_1y=0.5), seed=21
    )


class TestTrainLoop:
    def test_loss_decreases_on_synthetic_data(self):
        corpus = generate_synthetic(SynthConfig(patients=10), seed=1)
        drops = []
        for seed in (0, 1, 2):
            config = tiny_config(epochs=6, seed=seed, learning_rate=5e-3)
            result = train(corpus.records, config, lexicon=corpus.lexicon)
            drops.append(result.log[5]["total"] < result.log[0]["total"])
        assert np.median(drops) == 1.0

    def test_log_schema(self, small_corpus):
        result = train(small_corpus.records, tiny_config(epochs=1), lexicon=small_corpus.lexicon)
        assert set(result.log[0]) == {"epoch", "L_cmm", "L_smooth", "total"}

    def test_no_struct_runs_without_lexicon_or_frames(self, small_corpus):
        config = tiny_config(ablation="no_struct", epochs=1)
        result = train(small_corpus.records, config, lexicon=None)
        assert result.vocabs is None
        assert "struct_const" in result.model.params
        assert result.log[0]["L_cmm"] == 0.0

    def test_no_unstruct_trains_supervised_head(self, small_corpus):
        config = tiny_config(ablation="no_unstruct", epochs=1)
        result = train(small_corpus.records, config, lexicon=small_corpus.lexicon)
        assert "clf/w" in result.model.params
        assert result.model.representation_dim == config.d_s

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts_with_diagnostic(self, small_corpus):
        config = tiny_config(learning_rate=1e300, epochs=2, batch_size=2)
        with pytest.raises(RuntimeError, match="diverged"):
            train(small_corpus.records, config, lexicon=small_corpus.lexicon)

    def test_determinism_bit_identical_checkpoints(self, small_corpus, tmp_path):
        config = tiny_config(epochs=2)
        a = train(small_corpus.records, config, lexicon=small_corpus.lexicon,
                  out_dir=tmp_path / "a")
        b = train(small_corpus.records, config, lexicon=small_corpus.lexicon,
                  out_dir=tmp_path / "b")
        assert a.checkpoint_path.read_bytes() == b.checkpoint_path.read_bytes()
        assert a.log == b.log

    def test_seed_changes_outcome(self, small_corpus, tmp_path):
        a = train(small_corpus.records, tiny_config(epochs=1, seed=0),
                  lexicon=small_corpus.lexicon, out_dir=tmp_path / "a")
        b = train(small_corpus.records, tiny_config(epochs=1, seed=1),
                  lexicon=small_corpus.lexicon, out_dir=tmp_path / "b")
        assert a.checkpoint_path.read_bytes() != b.checkpoint_path.read_bytes()


class TestCheckpointRoundTrip:
    def test_reload_reproduces_eval_bit_identically(self, small_corpus, tmp_path):
        config = tiny_config(epochs=1)
        result = train(small_corpus.records, config, lexicon=small_corpus.lexicon,
                       out_dir=tmp_path)
        bundle = load_checkpoint(result.checkpoint_path)
        note = small_corpus.records[0].notes[0]
        feats_a = result.extractor.extract(note)
        feats_b = bundle.make_extractor(small_corpus.lexicon).extract(note)
        rep_a = result.model.representation(feats_a)
        rep_b = bundle.model.representation(feats_b)
        np.testing.assert_array_equal(rep_a, rep_b)

    def test_reports_match_after_reload(self, small_corpus, tmp_path):
        config = tiny_config(epochs=1)
        result = train(small_corpus.records, config, lexicon=small_corpus.lexicon,
                       out_dir=tmp_path)
        bundle = load_checkpoint(result.checkpoint_path)
        r1 = evaluate_records(bundle, small_corpus.records, "30d", lexicon=small_corpus.lexicon)
        r2 = evaluate_records(bundle, small_corpus.records, "30d", lexicon=small_corpus.lexicon)
        assert r1 == r2
        assert 0.0 <= r1.auc_roc <= 1.0

    def test_corrupt_magic_rejected(self, tmp_path):
        path = tmp_path / "bogus.bin"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
        with pytest.raises(ValueError, match="not a checkpoint"):
            load_checkpoint(path)

    def test_mismatched_records_rejected(self, small_corpus, tmp_path):
        config = tiny_config(epochs=0)
        result = train(small_corpus.records, config, lexicon=small_corpus.lexicon,
                       out_dir=tmp_path)
        bundle = load_checkpoint(result.checkpoint_path)
        with pytest.raises(ValueError, match="missing"):
            evaluate_records(bundle, small_corpus.records[:3], "30d",
                             lexicon=small_corpus.lexicon)


class TestTrainConfig:
    def test_round_trip_through_toml(self, tmp_path):
        from notefuse.config import write_config

        config = tiny_config(ablation="no_struct", dropout=0.2)
        path = tmp_path / "config.toml"
        write_config(config, path)
        assert TrainConfig.from_file(path) == config

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config key"):
            TrainConfig.from_dict({"learning_rte": 0.1})

    def test_dimension_consistency_enforced(self):
        with pytest.raises(ValueError, match="d_ssm"):
            tiny_config(d_ssm=64, f_L=8)
        with pytest.raises(ValueError, match="kernel_sizes"):
            tiny_config(kernel_sizes=(3, 3))

    def test_enum_fields(self):
        with pytest.raises(ValueError, match="ablation"):
            tiny_config(ablation="nostruct")
        with pytest.raises(ValueError, match="horizon"):
            tiny_config(horizon="60d")

    def test_hash_tracks_content(self):
        assert tiny_config().config_hash() == tiny_config().config_hash()
        assert tiny_config().config_hash() != tiny_config(seed=1).config_hash()

    def test_derived_dims(self):
        config = tiny_config()
        assert config.d_s == 24 and config.d_sa == 20
