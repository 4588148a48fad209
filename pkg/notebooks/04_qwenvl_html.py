# %% [markdown]
# # The QwenVL HTML document format
# Every element carries its pixel box; figures wrap an <img> box plus content.

# %%
import json

from vlkit.docformat import parse_qwenvl_html, serialize_qwenvl_html, to_layout_json, validate, DocTree

page = """<html><body>
<p data-bbox="72 60 540 90"> Results </p>
<style>.table1 td { padding: 2px; }</style><table data-bbox="72 100 540 220" class="table1"> <tr><td>acc</td><td>0.91</td></tr> </table>
<div class="chart" data-bbox="72 230 540 480"> <img data-bbox="80 240 530 470" /><table> <tr><td>2024</td><td>12</td></tr> </table></div>
<div class="chemical formula" format="smile" data-bbox="72 490 300 600"> <img data-bbox="80 495 290 590" /> <div> c1ccccc1 </div></div>
</html></body>"""

tree = parse_qwenvl_html(page)
[e.kind for e in tree.elements]

# %%
# canonical output is byte-identical to canonical input
serialize_qwenvl_html(tree) == page

# %%
print(json.dumps(to_layout_json(tree)["elements"][2], indent=1))

# %%
# on a shorter page the formula and its image spill over the bottom edge
[(i.code, i.index) for i in validate(DocTree(tree.elements), (612, 500))]
