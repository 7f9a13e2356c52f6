import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from citetrack.encoders import TextEncoder
from citetrack.textconv import (
    DegenerateInputError,
    PromptContext,
    TargetDescription,
    attribute_feature,
    build_prompts,
    category_feature,
    classify,
    describe,
    label_text_features,
    meta_net_forward,
)
from citetrack.tracker import build_model
from citetrack.vocab import ATTRIBUTE_KINDS, KINDS

from conftest import finite_diff, rel_err, small_config

torch.set_default_dtype(torch.float32)


def softmax_oracle(scores, tau):
    m = max(s / tau for s in scores)
    e = [math.exp(s / tau - m) for s in scores]
    z = sum(e)
    return [v / z for v in e]


def cosine_oracle(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    return dot / (math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b)))


# ---- Meta-Net ---------------------------------------------------------------

def test_meta_net_zero_weights():
    ctx = PromptContext(2, 32, 8)
    with torch.no_grad():
        for p in ctx.meta_net.parameters():
            p.zero_()
    out = meta_net_forward(torch.randn(3, 32), ctx)
    assert torch.equal(out, torch.zeros(3, 8))


def test_meta_net_rectifier_kills_negative_hidden():
    ctx = PromptContext(2, 32, 8)
    with torch.no_grad():
        ctx.meta_net.linear1.weight.zero_()
        ctx.meta_net.linear1.bias.fill_(-1.0)
    out = meta_net_forward(torch.randn(32), ctx)
    assert torch.equal(out, ctx.meta_net.linear2.bias)


def test_meta_net_hidden_width():
    ctx = PromptContext(4, 64, 32)
    assert ctx.meta_net.linear1.out_features == 4


def test_meta_net_dim_mismatch():
    with pytest.raises(ValueError):
        meta_net_forward(torch.randn(5), PromptContext(2, 32, 8))


# captured from the seeded forward below; regression lock
GOLDEN_META = [-0.311530283324476, 0.07507783507332895, -0.33716015745095823, -0.06859058970073223]


def test_meta_net_golden():
    torch.manual_seed(11)
    ctx = PromptContext(2, 32, 4).double()
    x = torch.linspace(-1, 1, 32, dtype=torch.float64)
    out = meta_net_forward(x, ctx)
    assert torch.allclose(out, torch.tensor(GOLDEN_META, dtype=torch.float64), atol=1e-12)


# ---- prompt construction ----------------------------------------------------

def test_build_prompts_zero_bias_and_lengths():
    prompts = torch.randn(1, 4)
    labels = torch.randn(3, 2, 4)
    mask = torch.tensor([[True, True], [True, False], [True, True]])
    tokens, m = build_prompts(prompts, torch.zeros(4), labels, mask)
    assert tokens.shape == (3, 3, 4)
    assert m.sum(-1).tolist() == [3, 2, 3]
    assert torch.equal(tokens[:, 0], prompts.expand(3, 4))
    assert torch.equal(tokens[:, 1:], labels)


def test_build_prompts_shared_shift():
    prompts = torch.randn(4, 6, dtype=torch.float64)
    bias = torch.randn(6, dtype=torch.float64)
    labels = torch.randn(5, 1, 6, dtype=torch.float64)
    tokens, _ = build_prompts(prompts, bias, labels, torch.ones(5, 1, dtype=torch.bool))
    diff = tokens[:, :4] - prompts
    assert torch.allclose(diff, bias.expand_as(diff), atol=1e-15)


# ---- classification ---------------------------------------------------------

def test_classify_identical_prompts_uniform():
    x = torch.randn(8)
    t = torch.randn(8).expand(2, 8)
    assert torch.allclose(classify(x, t, 0.07), torch.tensor([0.5, 0.5]))


def test_classify_scores_1_0():
    x = torch.tensor([1.0, 0.0], dtype=torch.float64)
    t = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
    p = classify(x, t, 1.0)
    expected = softmax_oracle([1.0, 0.0], 1.0)
    assert p.tolist() == pytest.approx(expected, abs=1e-12)
    assert p.tolist() == pytest.approx([0.7311, 0.2689], abs=1e-4)


def test_classify_low_temperature_one_hot():
    g = torch.Generator().manual_seed(0)
    x = torch.randn(8, generator=g)
    t = torch.randn(5, 8, generator=g)
    p = classify(x, t, 1e-3)
    one_hot = torch.zeros(5)
    one_hot[int(torch.argmax(p))] = 1
    assert torch.allclose(p, one_hot, atol=1e-2)


def test_classify_degenerate():
    with pytest.raises(DegenerateInputError):
        classify(torch.zeros(4), torch.randn(3, 4), 0.1)
    t = torch.randn(3, 4)
    t[1] = 0
    with pytest.raises(DegenerateInputError):
        classify(torch.randn(4), t, 0.1)


def test_classify_matches_oracle_random():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 12))
        d = int(rng.integers(2, 9))
        tau = float(rng.uniform(0.05, 2.0))
        x = rng.normal(size=d)
        t = rng.normal(size=(n, d))
        p = classify(torch.tensor(x), torch.tensor(t), tau).numpy()
        oracle = softmax_oracle([cosine_oracle(x, row) for row in t], tau)
        worst = max(worst, float(np.max(np.abs(p - oracle))))
    assert worst < 1e-12


@settings(max_examples=50, deadline=None)
@given(
    st.integers(min_value=0, max_value=10_000),
    st.floats(min_value=1e-3, max_value=1e3),
)
def test_classify_scale_invariant(seed, k):
    g = torch.Generator().manual_seed(seed)
    x = torch.randn(6, generator=g, dtype=torch.float64)
    t = torch.randn(4, 6, generator=g, dtype=torch.float64)
    p1 = classify(x, t, 0.07)
    p2 = classify(k * x, t, 0.07)
    assert torch.allclose(p1, p2, atol=1e-6)
    assert abs(float(p1.sum()) - 1) < 1e-6
    assert bool(((p1 >= 0) & (p1 <= 1)).all())


# ---- pooling ----------------------------------------------------------------

def test_category_feature_cases():
    t = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
    assert torch.equal(category_feature(torch.tensor([0.0, 1.0]), t), t[1])
    assert torch.allclose(category_feature(torch.tensor([0.5, 0.5]), t), torch.tensor([0.5, 0.5]))
    assert torch.allclose(category_feature(torch.tensor([0.25, 0.75]), t), torch.tensor([0.25, 0.75]))
    with pytest.raises(ValueError):
        category_feature(torch.tensor([1.0]), t)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_category_feature_linear(seed, alpha):
    g = torch.Generator().manual_seed(seed)
    t = torch.randn(5, 3, generator=g, dtype=torch.float64)
    p = torch.softmax(torch.randn(5, generator=g, dtype=torch.float64), 0)
    q = torch.softmax(torch.randn(5, generator=g, dtype=torch.float64), 0)
    lhs = category_feature(alpha * p + (1 - alpha) * q, t)
    rhs = alpha * category_feature(p, t) + (1 - alpha) * category_feature(q, t)
    assert torch.allclose(lhs, rhs, atol=1e-12)


def test_attribute_feature_cases():
    t = torch.tensor([[1.0, 2.0], [3.0, 4.0]])
    f, i = attribute_feature(torch.tensor([0.1, 0.9]), t)
    assert int(i) == 1 and torch.equal(f, t[1])  # second label
    f, i = attribute_feature(torch.tensor([0.5, 0.5]), t)
    assert int(i) == 0 and torch.equal(f, t[0])
    f, i = attribute_feature(torch.tensor([1.0]), t[:1])
    assert int(i) == 0 and torch.equal(f, t[0])


def test_attribute_feature_batched():
    t = torch.randn(3, 4, 5)
    p = torch.softmax(torch.randn(3, 4), -1)
    f, idx = attribute_feature(p, t)
    for b in range(3):
        assert torch.equal(f[b], t[b, int(torch.argmax(p[b]))])


# ---- full description -------------------------------------------------------

@pytest.fixture
def tiny_model(tiny_vocab):
    return build_model(small_config(), tiny_vocab).eval()


def test_describe_deterministic_and_consistent(tiny_model):
    g = torch.Generator().manual_seed(1)
    patch = torch.rand(3, 32, 32, generator=g)
    d1 = describe(patch, tiny_model.conversion)
    d2 = describe(patch, tiny_model.conversion)
    assert d1.equals(d2)
    for kind in KINDS:
        p = d1.probs[kind]
        assert abs(float(p.sum()) - 1) < 1e-6
        assert d1.indices[kind] == int(torch.argmax(p))
    assert torch.allclose(d1.features["classes"], category_feature(d1.probs["classes"], d1.label_features["classes"]), atol=1e-6)
    for kind in ATTRIBUTE_KINDS:
        assert torch.equal(d1.features[kind], d1.label_features[kind][d1.indices[kind]])


def test_label_text_features_count_and_identical_labels(tiny_vocab):
    enc = TextEncoder(4, 6)
    ctx = PromptContext(2, 16, 4)
    labels = torch.randn(3, 1, 4)
    labels[2] = labels[0]
    tokens, mask = build_prompts(ctx.prompts, torch.randn(4), labels, torch.ones(3, 1, dtype=torch.bool))
    feats = label_text_features(tokens, mask, enc)
    assert feats.shape == (3, 6)
    assert torch.equal(feats[0], feats[2])


# captured from the seeded tiny pipeline; regression lock
GOLDEN_DESCRIPTION = {
    "indices": {"classes": 0, "color": 2, "material": 0, "texture": 1},
    "color_probs": [0.3265707194805145, 0.14477074146270752, 0.5286585092544556],
}


def test_describe_golden(tiny_model):
    g = torch.Generator().manual_seed(42)
    patch = torch.rand(3, 32, 32, generator=g)
    d = describe(patch, tiny_model.conversion)
    assert d.indices == GOLDEN_DESCRIPTION["indices"]
    assert d.probs["color"].tolist() == pytest.approx(GOLDEN_DESCRIPTION["color_probs"], abs=1e-6)


# ---- gradients --------------------------------------------------------------

def test_classify_gradients_tau_and_prompts():
    """Central differences vs autograd through prompts -> text encoder -> softmax."""
    for seed in range(20):
        torch.manual_seed(seed)
        enc = TextEncoder(4, 6).double()
        ctx = PromptContext(3, 16, 4).double()
        x = torch.randn(6, dtype=torch.float64)
        img = torch.randn(16, dtype=torch.float64)
        labels = torch.randn(5, 2, 4, dtype=torch.float64)
        mask = torch.ones(5, 2, dtype=torch.bool)
        weights = torch.randn(5, dtype=torch.float64)

        def objective(prompts, tau):
            bias = meta_net_forward(img, ctx)
            tokens, m = build_prompts(prompts, bias, labels, mask)
            p = classify(x, label_text_features(tokens, m, enc), tau)
            return (p * weights).sum()

        prompts = ctx.prompts.detach().clone().requires_grad_(True)
        tau = torch.tensor(0.3, dtype=torch.float64, requires_grad=True)
        objective(prompts, tau).backward()
        with torch.no_grad():
            fd_prompts = finite_diff(lambda v: objective(v, tau.detach()), prompts.detach())
            fd_tau = finite_diff(lambda t: objective(prompts.detach(), t), tau.detach().reshape(1))
        assert rel_err(prompts.grad, fd_prompts) < 1e-4
        assert rel_err(tau.grad.reshape(1), fd_tau) < 1e-4


def test_target_description_checksum_changes():
    probs = {k: torch.tensor([0.5, 0.5]) for k in KINDS}
    feats = {k: torch.zeros(2) for k in KINDS}
    lf = {k: torch.eye(2) for k in KINDS}
    d = TargetDescription(probs, {k: 0 for k in KINDS}, feats, lf)
    probs2 = dict(probs, color=torch.tensor([0.4, 0.6]))
    d2 = TargetDescription(probs2, {k: 0 for k in KINDS}, feats, lf)
    assert d.checksum() != d2.checksum()


# captured from the seeded encoder and prompts below; regression lock
GOLDEN_LABEL_FEATURES = [
    [-0.13390760097677976, 0.098985855435602, 0.5191517692469267],
    [-0.10205334542636477, 0.19406158518464045, 0.6926699964873022],
]


def test_label_text_features_golden():
    torch.manual_seed(21)
    enc = TextEncoder(4, 3).double()
    ctx = PromptContext(2, 16, 4).double()
    labels = torch.randn(2, 2, 4, dtype=torch.float64)
    mask = torch.tensor([[True, True], [True, False]])
    tokens, m = build_prompts(ctx.prompts, torch.zeros(4, dtype=torch.float64), labels, mask)
    feats = label_text_features(tokens, m, enc)
    assert torch.allclose(feats, torch.tensor(GOLDEN_LABEL_FEATURES, dtype=torch.float64), atol=1e-12)
