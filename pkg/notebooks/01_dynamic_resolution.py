# %% [markdown]
# # Native resolution: sizes, tokens, windows
# Images keep roughly their own size. Each side snaps to a multiple of 28
# (14 px patch times the 2x2 merge) and a token budget caps the area.

# %%
import numpy as np

from vlkit import smart_resize, vit_token_count, llm_token_count
from vlkit.encoder import PRESETS, all_full, encode, init_weights, vit_forward, weight_shapes, window_partition
from vlkit.encoder import patch_embed
from vlkit.rope import rope2d_ids_vit

for h, w in [(28, 28), (112, 112), (1000, 600), (1080, 1920), (4000, 3000)]:
    g = smart_resize(h, w)
    print(f"{h:>5}x{w:<5} -> {g.resized_h:>5}x{g.resized_w:<5} vit={vit_token_count(g):>6} llm={llm_token_count(g):>5}")

# %%
# budget of 64 merged tokens: the aspect ratio survives, the area does not
g = smart_resize(1000, 600, max_tokens=64)
g.to_dict(), g.tokens

# %% [markdown]
# ## Window layout
# 8x8-patch windows (112 px), row-major, edge windows left unpadded.

# %%
lay = window_partition(20, 20)
print(lay.window_sizes)
print(lay.segments.reshape(20, 20)[::2, ::2])  # window id per patch, subsampled

# %% [markdown]
# ## A toy forward pass
# The full presets follow the published table; the toy preset keeps the same
# structure (window layers with a few full-attention layers) at a size that
# runs in milliseconds.

# %%
cfg = PRESETS["toy"]
w = init_weights(cfg, seed=0)
rng = np.random.default_rng(0)
img = rng.uniform(-1, 1, size=(84, 112, 3))
tokens = encode(img, cfg, w)
tokens.shape  # (merged_h, merged_w, merger_out)

# %%
# window layers only see their window; with one big window nothing changes
feats = patch_embed(img, w, cfg)
gh, gw = feats.shape[:2]
ids = rope2d_ids_vit(gh, gw)
windowed = vit_forward(feats, window_partition(gh, gw, cfg.window_patches), ids, cfg, w)
full = vit_forward(feats, window_partition(gh, gw, cfg.window_patches), ids, all_full(cfg), w)
np.abs(windowed - full).max()

# %%
# merger shapes of the 7B preset, without allocating anything
{k: v for k, v in weight_shapes(PRESETS["7b"]).items() if k.startswith("merger")}
