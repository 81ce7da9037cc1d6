"""
Block shapes of the three-decoder network
=========================================

Shapes are traced on torch's meta device, so the full 160 x 192 x 128
input costs neither memory nor compute.
"""

from mdnet.model import MDNet, ModelConfig, count_params, trace_shapes

trace = trace_shapes(ModelConfig())
for name, shape in trace.items():
    print(f"{name:12s} {' x '.join(map(str, shape))}")

# the top E concatenation has 192 channels with the default wiring and 240
# when it joins the C concatenation instead
wide = trace_shapes(ModelConfig(e_path_wide=True))
print("E-DecCat-2:", trace["E-DecCat-2"][0], "vs", wide["E-DecCat-2"][0])

print("trainable parameters", count_params(MDNet(ModelConfig())))
