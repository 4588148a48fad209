# %% [markdown]
# # Packing samples, scoring boxes

# %%
import numpy as np

from vlkit.packing import pack, balance_report, sample_length
from vlkit.grounding import BBox, TimeSpan, iou, miou, rescale_box, parse_spatial_output, serialize_spatial
from vlkit.geometry import smart_resize

batch = pack([5000, 3000, 4000, 2000, 8000], 8192)
[(b.ids, b.length) for b in batch.bins], balance_report(batch)["fills"]

# %%
# multimodal lengths: text + merged visual tokens + 2 marker tokens per span
rng = np.random.default_rng(0)
lengths = [sample_length(int(rng.integers(20, 400)), [smart_resize(int(h), int(w)).tokens])
           for h, w in rng.integers(200, 2000, size=(200, 2))]
r = balance_report(pack(lengths, 32768))
r["bins"], round(r["mean_fill"], 3), round(r["min_fill"], 3)

# %% [markdown]
# ## Boxes in absolute pixels
# Coordinates refer to the resized model input; rescale_box maps them back.

# %%
g = smart_resize(600, 1000)
box = BBox(0, 0, 500, 300, "cat")
on_input = rescale_box(box, (1000, 600), (g.resized_w, g.resized_h))
on_input, rescale_box(on_input, (g.resized_w, g.resized_h), (1000, 600))

# %%
out = 'Sure! [{"bbox_2d":[5,5,15,15],"label":"cat"},{"point_2d":[3,4],"label":"knob"}]'
objs = parse_spatial_output(out)
objs, serialize_spatial(objs, "xml")

# %%
iou(BBox(0, 0, 10, 10), BBox(5, 5, 15, 15)), miou([(TimeSpan(0, 10), TimeSpan(5, 15)), (TimeSpan(2, 3), TimeSpan(2, 3))])
