import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from avvad.model import (AVVAD, ArchConfig, FusionConfig, GLUConv, ImageBranch, ModelError, PoolConv,
                         align_index, context_stack, fuse, glu_conv, load_checkpoint, lut_combine, pooled_bins,
                         rule_wiring, save_checkpoint)
from avvad.taxonomy import DEFAULT_RULES, one_hot
from avvad.training import tiny_arch


def _glu_oracle(x, wl, bl, wg, bg):
    """Scalar-loop GLU conv with zero padding, (C, T, F) single item."""
    cin, t, f = x.shape
    cout, _, k, _ = wl.shape
    pad = k // 2
    xp = np.zeros((cin, t + 2 * pad, f + 2 * pad))
    xp[:, pad:pad + t, pad:pad + f] = x
    out = np.zeros((cout, t, f))
    for o in range(cout):
        for i in range(t):
            for j in range(f):
                lin, gate = bl[o], bg[o]
                for c in range(cin):
                    for u in range(k):
                        for v in range(k):
                            lin += wl[o, c, u, v] * xp[c, i + u, j + v]
                            gate += wg[o, c, u, v] * xp[c, i + u, j + v]
                out[o, i, j] = lin / (1.0 + np.exp(-gate))
    return out


def test_glu_matches_scalar_oracle(rng):
    # [DERIVED] explicit loops over an 8x8 map with 4 input channels
    x = rng.normal(size=(4, 8, 8))
    wl, wg = rng.normal(size=(3, 4, 3, 3)), rng.normal(size=(3, 4, 3, 3))
    bl, bg = rng.normal(size=3), rng.normal(size=3)
    got = glu_conv(*(torch.from_numpy(a) for a in (x[None], wl, bl, wg, bg)))[0].numpy()
    assert np.max(np.abs(got - _glu_oracle(x, wl, bl, wg, bg))) < 1e-5


def test_glu_gate_limits(rng):
    layer = GLUConv(2, 3).double()
    x = torch.from_numpy(rng.normal(size=(1, 2, 6, 6)))
    lin = layer.linear(x)
    with torch.no_grad():
        layer.gate.weight.zero_()
        layer.gate.bias.zero_()
        assert torch.allclose(layer(x), 0.5 * lin)  # [TRIVIAL] neutral gate halves
        layer.gate.bias.fill_(-50.0)
        assert layer(x).abs().max() < 1e-15  # closed gate


def test_glu_channel_mismatch():
    w = torch.zeros(3, 4, 3, 3)
    with pytest.raises(ModelError):
        glu_conv(torch.zeros(1, 2, 5, 5), w, None, w, None)


@pytest.mark.parametrize("f_in,f_out", [(64, 32), (5, 3), (2, 1)])
def test_pooling_halves_frequency_only(f_in, f_out):
    y = PoolConv(4)(torch.zeros(2, 4, 7, f_in))
    assert y.shape == (2, 4, 7, f_out)


def test_pooling_rejects_single_bin():
    with pytest.raises(ModelError):
        PoolConv(4)(torch.zeros(1, 4, 7, 1))


def test_pooled_bins():
    assert pooled_bins(64, 3) == 8 and pooled_bins(5, 2) == 2


@settings(max_examples=15, deadline=None)
@given(t=st.integers(1, 40))
def test_audio_branch_preserves_time(t):
    model = AVVAD(tiny_arch()).eval()
    p, e = model.audio(torch.randn(2, t, 64))
    assert p.shape == (2, t, 4) and e.shape == (2, t, 4, 4)
    assert torch.all((p >= 0) & (p <= 1))


def test_full_size_audio_forward():
    torch.manual_seed(0)
    model = AVVAD().eval()
    mel = torch.randn(1, 30, 64)
    with torch.no_grad():
        p1, e1 = model.audio(mel)
        p2, _ = model.audio(mel)
    assert e1.shape == (1, 30, 4, 128)
    assert torch.equal(p1, p2)


def test_audio_branch_rejects_wrong_band_count():
    with pytest.raises(ModelError):
        AVVAD(tiny_arch()).audio(torch.zeros(1, 5, 40))


def test_image_branch_neutral_output_on_zero_bias():
    # [DERIVED] black frames + zero output layers give sigmoid(0) = 0.5
    branch = ImageBranch(ArchConfig()).eval()
    with torch.no_grad():
        for h in branch.heads:
            h.out.weight.zero_()
            h.out.bias.zero_()
        p, e = branch(torch.zeros(1, 7, 64, 64, dtype=torch.uint8))
    assert p.shape == (1, 7, 2) and e.shape == (1, 7, 2, 128)
    assert torch.allclose(p, torch.full_like(p, 0.5))


def test_image_branch_rejects_wrong_size():
    with pytest.raises(ModelError):
        ImageBranch(ArchConfig())(torch.zeros(1, 3, 32, 32, dtype=torch.uint8))


def test_context_stack_repeats_edges():
    frames = torch.arange(4.0).reshape(1, 4, 1, 1).expand(1, 4, 2, 2)
    s = context_stack(frames, 5)[0, :, :, 0, 0]
    assert s.tolist() == [[0, 0, 0, 1, 2], [0, 0, 1, 2, 3], [0, 1, 2, 3, 3], [1, 2, 3, 3, 3]]


def test_align_index_nearest_frame():
    idx = align_index(45, 0.022, 25, 25.0)
    oracle = [min(24, int(np.floor((i + 0.5) * 0.022 * 25 + 0.5))) for i in range(45)]
    assert idx.tolist() == oracle
    assert idx[0] == 0 and idx[-1] == 24


@pytest.mark.parametrize("op,dim", [("hp", 128), ("sc", 256), ("mm", 16384)])
def test_fusion_dimensions(op, dim, rng):
    a, v = rng.normal(size=(3, 128)), rng.normal(size=(3, 128))
    assert fuse(a, v, op).shape == (3, dim)


def test_hadamard_identities(rng):
    a = rng.normal(size=16)
    assert np.array_equal(fuse(a, np.ones(16), "hp"), a)
    assert np.array_equal(fuse(a, np.zeros(16), "hp"), np.zeros(16))
    assert np.array_equal(fuse(a, a[::-1].copy(), "hp"), fuse(a[::-1].copy(), a, "hp"))


def test_concat_layout(rng):
    a, v = rng.normal(size=8), rng.normal(size=8)
    out = fuse(a, v, "sc")
    assert np.array_equal(out[:8], a) and np.array_equal(out[8:], v)


def test_outer_product_rank_one(rng):
    m = fuse(rng.normal(size=32), rng.normal(size=32), "mm").reshape(32, 32)
    s = np.linalg.svd(m, compute_uv=False)
    assert s[1] <= 1e-6 * s[0]


def test_fuse_rejects_lut_and_mismatch():
    with pytest.raises(ModelError):
        fuse(np.ones(4), np.ones(4), "lut")
    with pytest.raises(ModelError):
        fuse(np.ones(4), np.ones(5), "hp")


def test_bilinear_mm_equals_dense_over_flattened_outer_products():
    torch.manual_seed(3)
    model = AVVAD(tiny_arch("mm")).double().eval()
    a = torch.randn(1, 5, 4, 4, dtype=torch.float64)
    v = torch.randn(1, 5, 2, 4, dtype=torch.float64)
    got = model.av(a, v)
    for h, pairs in enumerate(model.av.pairs):
        w, b = model.av.dense_equivalent(h)
        flat = torch.cat([fuse(a[..., ai, :], v[..., vi, :], "mm") for ai, vi in pairs], -1)
        expect = torch.sigmoid(flat @ w.T + b).squeeze(-1)
        assert torch.allclose(got[..., h], expect, atol=1e-12)


def test_default_wiring_follows_rule_table():
    w = rule_wiring()
    assert w["av_sin"] == [("a_sin", "v_voc")]
    assert w["av_spe"] == [("a_spe", "v_voc")]
    assert set(w["av_oth"]) == {("a_oth", "v_voc"), ("a_spe", "v_nonvoc"), ("a_sin", "v_nonvoc"), ("a_oth", "v_nonvoc")}
    assert set(w["av_sil"]) == {("a_sil", "v_voc"), ("a_sil", "v_nonvoc")}
    assert sum(len(p) for p in w.values()) == 8


def test_unwired_head_rejected():
    wiring = rule_wiring()
    wiring["av_spe"] = []
    with pytest.raises(ModelError, match="av_spe"):
        FusionConfig(wiring=wiring)


@pytest.mark.parametrize("bad", [dict(operator="concat"), dict(lut_threshold=1.0), dict(lut_threshold=0.0)])
def test_fusion_config_validation(bad):
    with pytest.raises(ModelError):
        FusionConfig(**bad)


def test_lut_combine_examples():
    ap = np.array([[0.1, 0.8, 0.3, 0.2], [0.1, 0.8, 0.3, 0.2], [0.1, 0.2, 0.9, 0.2], [0.9, 0.1, 0.1, 0.1]])
    vp = np.array([[0.7, 0.3], [0.2, 0.8], [0.5, 0.5], [0.9, 0.1]])
    out = lut_combine(ap, vp)
    # speech+voc -> speech, speech+nonvoc -> others, singing at threshold -> singing, silence -> silence
    assert out.argmax(-1).tolist() == [1, 3, 2, 0]
    assert np.array_equal(out, one_hot(out.argmax(-1), 4))


def test_lut_combine_torch_matches_numpy(rng):
    ap, vp = rng.random((50, 4)), rng.random((50, 2))
    t = lut_combine(torch.from_numpy(ap), torch.from_numpy(vp))
    assert np.array_equal(t.numpy(), lut_combine(ap, vp))


def test_lut_model_av_output_is_rule_decision():
    torch.manual_seed(0)
    model = AVVAD(tiny_arch("lut")).eval()
    mel = torch.randn(1, 10, 64)
    faces = torch.randint(0, 255, (1, 6, 16, 16), dtype=torch.uint8)
    index = torch.from_numpy(np.arange(10) // 2)[None]
    out = model(mel, faces, index)
    assert torch.equal(out["av_probs"], lut_combine(out["audio_probs"], out["visual_probs"]))


def test_av_forward_needs_faces():
    with pytest.raises(ModelError):
        AVVAD(tiny_arch())(torch.zeros(1, 4, 64))


def test_checkpoint_round_trip(tmp_path):
    torch.manual_seed(1)
    model = AVVAD(tiny_arch("sc")).eval()
    digest = save_checkpoint(model, tmp_path / "ck", {"note": "x"})
    back = load_checkpoint(tmp_path / "ck")
    assert back.operator == "sc" and back.rules == DEFAULT_RULES
    for (k1, v1), (k2, v2) in zip(model.state_dict().items(), back.state_dict().items()):
        assert k1 == k2 and torch.equal(v1, v2)
    assert len(digest) == 64
    mel = torch.randn(1, 9, 64)
    assert torch.equal(model.audio(mel)[0], back.audio(mel)[0])
