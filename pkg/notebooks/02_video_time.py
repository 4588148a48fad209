# %% [markdown]
# # Video: dynamic FPS and time-aligned position ids
# Temporal ids follow seconds (times tau), not frame indices, so the same
# moment gets the same id whatever the sampling rate.

# %%
from vlkit.rope import RopeConfig, mrope_ids_video, TextSpan, ImageSpan, VideoSpan, mrope_ids_sequence
from vlkit.videopipe import sample_frames, pair_frames, plan_video, format_timestamp, parse_timestamp

cfg = RopeConfig(tau=2.0)
for fps in (0.5, 1, 2):
    s = sample_frames(12, 30, fps)
    ids = mrope_ids_video(0, s.group_times, 1, 1, cfg)
    print(f"fps={fps:<4} group times {list(s.group_times)}")
    print(f"         temporal ids {ids.t.tolist()}")

# %%
# an hour of video hits the 768-frame cap; the rate drops to fit
s = sample_frames(3600, 30, 1)
len(s), round(s.effective_fps, 4), s.capped

# %%
# odd frame counts: the last frame pairs with itself
[g.frames for g in pair_frames([0.0, 0.5, 1.0])]

# %%
# full plan for a 20-minute 1080p clip at 2 fps
p = plan_video(1200, 30, 2, 1080, 1920)
p.n_frames, len(p.groups), p.grid.to_dict()["resized"], p.grid.tokens, p.total_tokens

# %% [markdown]
# ## Interleaved sequence ids

# %%
spans = [TextSpan(4), ImageSpan(2, 3), TextSpan(2), VideoSpan((0.0, 1.0, 2.0), 2, 2), TextSpan(1)]
seq = mrope_ids_sequence(spans, cfg)
for row in seq.as_tuples():
    print(row)

# %% [markdown]
# ## Timestamp strings

# %%
for t in (0, 12.5, 3725.5):
    print(t, format_timestamp(t, "sec"), format_timestamp(t, "hmsf", 30))
parse_timestamp("01:02:05:15", "hmsf", 30)
