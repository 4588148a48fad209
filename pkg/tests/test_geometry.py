from types import SimpleNamespace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlkit.geometry import PatchGrid, llm_token_count, smart_resize, vit_token_count


def nearest_multiple_by_enumeration(x, step=28):
    # scan all candidate multiples and keep the closest (ties go up)
    best = None
    for k in range(1, x // step + 3):
        c = k * step
        key = (abs(c - x), -c)
        if best is None or key < best[0]:
            best = (key, c)
    return best[1]


def test_aligned_input_unchanged():
    g = smart_resize(28, 28, 1, 10000)
    assert (g.resized_h, g.resized_w) == (28, 28)
    assert (g.grid_h, g.grid_w) == (2, 2)
    assert (g.merged_h, g.merged_w) == (1, 1)


def test_rounds_to_nearest_multiple():
    g = smart_resize(1000, 600, 1, 10**6)
    assert (g.resized_h, g.resized_w) == (nearest_multiple_by_enumeration(1000), nearest_multiple_by_enumeration(600))
    assert (g.resized_h, g.resized_w) == (1008, 588)
    assert (g.grid_h, g.grid_w) == (72, 42)
    assert (g.merged_h, g.merged_w) == (36, 21)


def test_tiny_image_clamps_up():
    g = smart_resize(14, 14, 1, 10**6)
    assert (g.resized_h, g.resized_w) == (28, 28)


@pytest.mark.parametrize("h,w,vit", [(112, 112, 64), (28, 28, 4), (224, 280, 320)])
def test_vit_token_count(h, w, vit):
    assert vit_token_count(smart_resize(h, w)) == vit


@pytest.mark.parametrize("gh,gw,llm", [(8, 8, 16), (2, 2, 1), (72, 42, 756)])
def test_llm_token_count(gh, gw, llm):
    g = PatchGrid(gh * 14, gw * 14, gh * 14, gw * 14)
    assert llm_token_count(g) == llm


def test_llm_token_count_rejects_odd_grid():
    with pytest.raises(ValueError):
        llm_token_count(SimpleNamespace(grid_h=3, grid_w=4))


def test_patch_grid_rejects_misaligned():
    with pytest.raises(ValueError):
        PatchGrid(10, 10, 30, 28)


def test_budget_scales_down():
    g = smart_resize(1000, 600, 1, 64)
    assert g.tokens <= 64
    # aspect preserved within one merge unit
    assert abs(g.merged_h / g.merged_w - 1000 / 600) < 0.35


def test_invalid_budget():
    with pytest.raises(ValueError):
        smart_resize(100, 100, 10, 5)
    with pytest.raises(ValueError):
        smart_resize(0, 100)


def test_min_tokens_scales_up():
    g = smart_resize(28, 28, 16, 10000)
    assert g.tokens >= 16
    assert g.merged_h == g.merged_w


dims = st.integers(1, 5000)


@given(dims, dims, st.integers(1, 500), st.integers(0, 20000))
@settings(max_examples=300)
def test_budget_respected(h, w, lo, extra):
    hi = lo + extra
    g = smart_resize(h, w, lo, hi)
    assert g.resized_h % 28 == 0 and g.resized_w % 28 == 0
    assert g.resized_h >= 28 and g.resized_w >= 28
    assert lo <= g.tokens <= hi
    assert g.grid_h % 2 == 0 and g.grid_w % 2 == 0


@given(dims, dims)
def test_llm_is_quarter_of_vit(h, w):
    g = smart_resize(h, w)
    assert llm_token_count(g) * 4 == vit_token_count(g)


@given(dims, dims, st.integers(1, 20000))
@settings(max_examples=300)
def test_idempotent(h, w, hi):
    g = smart_resize(h, w, 1, hi)
    g2 = smart_resize(g.resized_h, g.resized_w, 1, hi)
    assert (g2.resized_h, g2.resized_w) == (g.resized_h, g.resized_w)


@given(dims, dims, st.integers(1, 5000), st.integers(0, 5000))
@settings(max_examples=300)
def test_monotone_in_max_tokens(h, w, hi, extra):
    assert smart_resize(h, w, 1, hi + extra).tokens >= smart_resize(h, w, 1, hi).tokens
