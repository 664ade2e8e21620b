import pytest
import torch

from smagdi.errors import ValidationError
from smagdi.losses import contrastive_loss
from smagdi.student import (
    ByteTokenizer,
    LMConfig,
    StudentUnit,
    TinyCausalLM,
    encode_examples,
    load_student,
    mean_pool,
    save_student,
    score_chain,
)

TINY = LMConfig(d_model=16, n_layers=1, n_heads=2, d_ff=32, max_len=64)


def test_tokenizer_round_trip():
    tok = ByteTokenizer()
    text = "Is 9 > 7? Answer: True ✓"
    assert tok.decode(tok.encode(text)) == text
    assert tok.vocab_size == 259 and {tok.BOS, tok.EOS, tok.PAD} == {256, 257, 258}


def test_default_student_fits_the_budget():
    assert StudentUnit().num_parameters() <= 200_000


def test_forward_shapes():
    lm = TinyCausalLM(TINY, seed=0)
    logits, hidden = lm(torch.tensor([256, 72, 105]))
    assert logits.shape == (3, 259) and hidden.shape == (3, 16)
    logits, hidden = lm(torch.zeros(2, 5, dtype=torch.long))
    assert logits.shape == (2, 5, 259) and hidden.shape == (2, 5, 16)


def test_forward_is_causal():
    lm = TinyCausalLM(TINY, seed=0).eval()
    a = torch.tensor([[256, 10, 20, 30, 40]])
    b = a.clone()
    b[0, 4] = 99
    with torch.no_grad():
        la, _ = lm(a)
        lb, _ = lm(b)
    assert torch.equal(la[0, :4], lb[0, :4])
    assert not torch.equal(la[0, 4], lb[0, 4])


def test_greedy_generation_is_deterministic():
    lm = TinyCausalLM(TINY, seed=3)
    assert lm.generate("Why?", max_tokens=12) == lm.generate("Why?", max_tokens=12)
    sampled = lm.generate("Why?", max_tokens=12, temperature=1.0)
    assert sampled == lm.generate("Why?", max_tokens=12, temperature=1.0)


def test_encode_examples_supervises_completion_only():
    tok = ByteTokenizer()
    tokens, target_mask, token_mask = encode_examples(tok, ["ab", "abcd"], ["XY", "Z"], 32)
    # row 0: BOS a b X Y EOS -> targets at positions predicting X, Y, EOS
    assert tokens[0].tolist()[:6] == [tok.BOS, 97, 98, 88, 89, tok.EOS]
    assert target_mask[0].tolist()[:5] == [False, False, True, True, True]
    assert token_mask[0].sum().item() == 6 and token_mask[1].sum().item() == 7
    targets = tokens[:, 1:]
    assert targets[target_mask].tolist() == [88, 89, tok.EOS, 90, tok.EOS]


def test_encode_examples_truncates_prompt_first():
    tok = ByteTokenizer()
    tokens, target_mask, _ = encode_examples(tok, ["p" * 100], ["done"], 16)
    assert tokens.shape[1] == 16
    assert tokens[0, -5:].tolist() == tok.encode("done") + [tok.EOS]
    assert target_mask[0].sum().item() == 5


def test_mean_pool_ignores_padding():
    hidden = torch.tensor([[[1.0], [3.0], [100.0]]])
    assert mean_pool(hidden, torch.tensor([[True, True, False]])).item() == 2.0


def test_score_chain_properties():
    s = StudentUnit(TINY, proj_dim=8, seed=0)
    a = score_chain(s, "Tomatoes develop from flowers. Answer: True")
    assert torch.equal(a, score_chain(s, "Tomatoes develop from flowers. Answer: True"))
    with torch.no_grad():
        s.chain_scorer.weight.add_(1.0)
    assert not torch.equal(a, score_chain(s, "Tomatoes develop from flowers. Answer: True"))
    with pytest.raises(ValidationError):
        score_chain(s, "")


def test_hinge_gradient_reaches_solver():
    s = StudentUnit(TINY, proj_dim=8, seed=0).double()
    pos, neg = "Fruit come from ovaries. Answer: True", "Tomatoes are vegetables. Answer: False"
    param = s.solver.blocks[0].ff[0].weight

    def loss():
        return contrastive_loss(score_chain(s, pos).view(1), score_chain(s, neg).view(1))

    assert loss().item() > 0  # the pair violates the margin
    s.zero_grad()
    loss().backward()
    analytic = param.grad[0, 0].item()
    assert analytic != 0.0
    eps = 1e-6
    with torch.no_grad():
        param[0, 0] += eps
        hi = loss().item()
        param[0, 0] -= 2 * eps
        lo = loss().item()
        param[0, 0] += eps
    assert analytic == pytest.approx((hi - lo) / (2 * eps), rel=1e-4)
    assert all(p.grad is None or not p.grad.any() for p in s.decomposer.parameters())


def test_projection_heads_share_width():
    s = StudentUnit(TINY, proj_dim=12, seed=0)
    z_dec = s.proj_dec(s.pooled(s.decomposer, ["1. a?"]))
    z_sol = s.proj_sol(s.pooled(s.solver, ["b."]))
    assert z_dec.shape == z_sol.shape == (1, 12)


def test_checkpoint_round_trip(tmp_path):
    s = StudentUnit(TINY, proj_dim=8, seed=5)
    with torch.no_grad():
        for p in s.parameters():
            p.add_(torch.randn_like(p))
    save_student(s, tmp_path / "s.pt")
    back = load_student(tmp_path / "s.pt")
    assert back.config() == s.config()
    for (k, a), (_, b) in zip(s.state_dict().items(), back.state_dict().items()):
        assert torch.equal(a, b), k


def test_same_seed_same_weights():
    a, b = StudentUnit(TINY, 8, seed=9), StudentUnit(TINY, 8, seed=9)
    assert all(torch.equal(x, y) for x, y in zip(a.parameters(), b.parameters()))
