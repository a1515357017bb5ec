import numpy as np
import pytest

from bagdata import generate_synthetic
from diffcore import Param, grad_check
from milmodels import (
    BagClassifierParams,
    LeakyAttentionParams,
    PatchScoreParams,
    TanhAttentionParams,
    TrainConfig,
    amil_forward,
    attention_leaky,
    attention_tanh,
    build_model,
    fit,
    hybrid_forward,
    load_checkpoint,
    predict,
    run_experiment,
    save_checkpoint,
    score_map,
    train_model,
)
from utils.errors import ConfigError, DegenerateDatasetError, DimensionError, EmptyBagError

ARCHS = ["amil", "admil", "hybrid"]


def _tanh_params(M, L, V=None, w=None):
    return TanhAttentionParams(V=Param(np.zeros((L, M)) if V is None else V), w=Param(np.ones((L, 1)) if w is None else w))


def test_tanh_attention_singleton_and_identical_rows(rng):
    p = TanhAttentionParams.init(rng, 5, 4)
    assert attention_tanh(rng.standard_normal((1, 5)), p).tolist() == [1.0]
    same = np.tile(rng.standard_normal((1, 5)), (6, 1))
    np.testing.assert_allclose(attention_tanh(same, p), np.full(6, 1 / 6), atol=1e-15)


def test_zero_V_gives_uniform_attention(rng):
    p = _tanh_params(5, 4)
    np.testing.assert_allclose(attention_tanh(rng.standard_normal((4, 5)), p), np.full(4, 0.25), atol=1e-15)


def test_leaky_attention_zero_weights_gives_uniform(rng):
    p = LeakyAttentionParams.init(rng, 5, 3)
    p.W1.assign(np.zeros((5, 3)))
    p.W2.assign(np.zeros((3, 1)))
    np.testing.assert_allclose(attention_leaky(rng.standard_normal((5, 5)), p), np.full(5, 0.2), atol=1e-15)
    assert attention_leaky(rng.standard_normal((1, 5)), p).tolist() == [1.0]


def test_attention_rejects_empty_bag(rng):
    with pytest.raises(EmptyBagError):
        attention_tanh(np.zeros((0, 5)), TanhAttentionParams.init(rng, 5, 4))


def test_amil_hand_computation():
    clf = BagClassifierParams([(Param(np.array([[1.0]])), Param(np.array([[0.0]])))])
    out = amil_forward(np.array([[2.0], [4.0]]), _tanh_params(1, 3), clf)
    assert out.bag_prob == pytest.approx(1.0 / (1.0 + np.exp(-3.0)), abs=1e-12)
    assert out.patch_logits is None
    assert not out.additive


@pytest.mark.parametrize("arch", ARCHS)
def test_permutation_invariance_and_simplex(arch, rng):
    model = build_model(arch, 6, 4, seed=2)
    for _ in range(100):
        H = rng.standard_normal((int(rng.integers(1, 12)), 6))
        base = model.forward(H)
        assert abs(base.attention.sum() - 1.0) < 1e-12
        assert np.all(base.attention > 0)
        for _ in range(10):
            perm = rng.permutation(H.shape[0])
            out = model.forward(H[perm])
            assert abs(out.bag_prob - base.bag_prob) < 1e-9
            if base.additive:
                np.testing.assert_allclose(out.patch_logits, base.patch_logits[perm], atol=1e-9)


@pytest.mark.parametrize("arch", ["admil", "hybrid"])
def test_additive_decomposition(arch, rng):
    model = build_model(arch, 6, 4, seed=1)
    for _ in range(100):
        out = model.forward(rng.standard_normal((int(rng.integers(1, 15)), 6)))
        np.testing.assert_allclose(out.bag_scores, out.class_patch_logits.sum(axis=0), atol=1e-9)
        e = np.exp(out.bag_scores - out.bag_scores.max())
        assert out.bag_prob == pytest.approx(e[1] / e.sum(), abs=1e-12)
        np.testing.assert_allclose(out.bounded_contribs, 1 / (1 + np.exp(-out.patch_logits)), atol=1e-12)


def test_zero_patch_logit_sits_on_the_boundary(rng):
    ps = PatchScoreParams([(Param(np.zeros((4, 2))), Param(np.zeros((1, 2))))])
    out = hybrid_forward(rng.standard_normal((3, 4)), TanhAttentionParams.init(rng, 4, 2), ps)
    np.testing.assert_array_equal(out.bounded_contribs, [0.5, 0.5, 0.5])
    assert out.bag_prob == 0.5


def test_hybrid_single_instance_bag_score_is_its_patch_logit(rng):
    ps = PatchScoreParams.init(rng, 4)
    out = hybrid_forward(rng.standard_normal((1, 4)), TanhAttentionParams.init(rng, 4, 3), ps)
    np.testing.assert_allclose(out.bag_scores, out.class_patch_logits[0], atol=1e-15)


@pytest.mark.parametrize("arch", ARCHS)
@pytest.mark.parametrize("label", [0, 1])
def test_gradients_match_central_differences(arch, label, rng):
    model = build_model(arch, 8, 4, seed=7)
    H = rng.standard_normal((3, 8))
    assert grad_check(lambda tape: model.loss(tape, H, label), model.gradcheck_parameters()) < 1e-4


def test_model_checks_embedding_width():
    model = build_model("amil", 4, 2)
    with pytest.raises(DimensionError):
        model.forward(np.zeros((3, 5)))
    with pytest.raises(EmptyBagError):
        model.forward(np.zeros((0, 4)))


def test_unknown_architecture():
    with pytest.raises(ConfigError):
        build_model("transformer", 4)


@pytest.mark.parametrize("arch", ARCHS)
def test_training_lowers_the_loss(arch, small_bags):
    model = build_model(arch, small_bags[0].embed_dim, 4, seed=0)
    cfg = TrainConfig(architecture=arch, attention_dim=4, lr0=1e-2, lr_min=1e-4, epochs=20)
    losses = fit(model, small_bags, cfg, seed=0)
    assert len(losses) == 20
    assert losses[-1] < losses[0]


def test_constant_learning_rate():
    cfg = TrainConfig(lr0=0.01, use_cosine=False, epochs=5)
    assert [cfg.learning_rate(t) for t in range(5)] == [0.01] * 5


def test_train_model_is_deterministic(small_bags):
    cfg = TrainConfig(architecture="admil", attention_dim=4, lr0=1e-2, epochs=3, k_folds=3)
    a = train_model(small_bags, cfg, seed=4)
    b = train_model(small_bags, cfg, seed=4)
    assert len(a.folds) == 3
    assert 0 <= a.best_fold < 3
    np.testing.assert_array_equal(a.val_aucs, b.val_aucs)
    for (name, p), q in zip(a.model.named_parameters().items(), b.model.parameters()):
        np.testing.assert_array_equal(p.value, q.value, err_msg=name)


def test_train_model_parallel_folds_match_serial(small_bags):
    serial = train_model(small_bags, TrainConfig(attention_dim=4, lr0=1e-2, epochs=2, k_folds=3), seed=1)
    threaded = train_model(small_bags, TrainConfig(attention_dim=4, lr0=1e-2, epochs=2, k_folds=3, workers=3), seed=1)
    np.testing.assert_array_equal(serial.val_aucs, threaded.val_aucs)
    assert serial.best_fold == threaded.best_fold


def test_single_class_dataset_is_rejected(small_bags):
    negatives = [b for b in small_bags if b.label == 0]
    with pytest.raises(DegenerateDatasetError):
        train_model(negatives, TrainConfig(epochs=1, k_folds=2))


def test_predict_and_score_map(small_bags):
    model = build_model("hybrid", small_bags[0].embed_dim, 4)
    probs = predict(model, small_bags[:5])
    assert probs.shape == (5,)
    assert np.all((probs > 0) & (probs < 1))
    out = score_map(model, small_bags[0])
    assert out.attention.shape == (len(small_bags[0]),)
    assert out.bounded_contribs.shape == (len(small_bags[0]),)


@pytest.mark.parametrize("arch", ARCHS)
def test_checkpoint_round_trip(arch, tmp_path, rng):
    model = build_model(arch, 5, 3, classifier_hidden=(4,), seed=9)
    path = save_checkpoint(model, tmp_path / f"{arch}.npz")
    loaded = load_checkpoint(path)
    assert type(loaded) is type(model)
    assert loaded.classifier_hidden == (4,)
    for name, p in model.named_parameters().items():
        np.testing.assert_array_equal(loaded.named_parameters()[name].value, p.value)
    H = rng.standard_normal((4, 5))
    assert loaded.forward(H).bag_prob == model.forward(H).bag_prob


def test_protocol_on_separable_bags():
    bags = generate_synthetic({"num_bags": 60, "n_range": (10, 30), "embed_dim": 8,
                               "positive_instance_rate": 0.2, "class_separation": 3.0, "seed": 11})
    cfg = TrainConfig(architecture="amil", attention_dim=8, lr0=5e-3, lr_min=1e-5, epochs=15, k_folds=3)
    result = run_experiment(bags, cfg, runs=2, seed=0)
    assert len(result.runs) == 2
    assert result.summary.mean >= 0.85
    assert " ± " in result.summary.formatted
    row = result.metrics_row("synthetic", "5x")
    assert row["model"] == "amil" and row["auc"] == result.summary.formatted
    assert len(result.fold_rows()) == 6


def test_parallel_runs_match_serial(small_bags):
    cfg = TrainConfig(architecture="hybrid", attention_dim=4, lr0=1e-2, epochs=2, k_folds=3)
    serial = run_experiment(small_bags, cfg, runs=3, seed=4)
    threaded = run_experiment(small_bags, cfg.model_copy(update={"workers": 3}), runs=3, seed=4)
    assert [r.run for r in threaded.runs] == [0, 1, 2]
    assert [r.seed for r in threaded.runs] == [4, 5, 6]
    assert threaded.test_aucs == serial.test_aucs
    np.testing.assert_array_equal([f["val_auc"] for f in threaded.fold_rows()],
                                  [f["val_auc"] for f in serial.fold_rows()])


def _benchmark_bags(class_separation):
    return generate_synthetic({"num_bags": 200, "n_range": (20, 100), "embed_dim": 32,
                               "class_separation": class_separation, "seed": 0})


@pytest.mark.slow
@pytest.mark.parametrize("arch", ARCHS)
def test_benchmark_protocol_with_default_training(arch):
    result = run_experiment(_benchmark_bags(2.0), TrainConfig(architecture=arch, workers=5), runs=5, seed=0)
    assert len(result.runs) == 5
    assert all(len(r.train.folds) == 5 for r in result.runs)
    assert result.summary.mean >= 0.95


@pytest.mark.slow
@pytest.mark.parametrize("arch", ARCHS)
def test_null_signal_stays_at_chance(arch):
    cfg = TrainConfig(architecture=arch, epochs=10, workers=5)
    result = run_experiment(_benchmark_bags(0.0), cfg, runs=5, seed=0)
    assert abs(result.summary.mean - 0.5) <= 0.1
