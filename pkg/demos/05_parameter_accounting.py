"""Static parameter accounting for the reference 20-layer residual network.

Pure arithmetic: the dense parameter count and the fraction remaining after
substituting each stage's 3x3 convolutions by minimal butterfly chains.
No training happens here.
"""

from sparsemia import resnet20
from sparsemia.butterfly import select_min_param_chain

total = resnet20.param_count()
print(f"dense parameter total: {total}")

print("\nconvolution inventory (stage, shape, kernel matrix):")
for conv in resnet20.resnet20_shapes():
    tag = "projection" if conv.projection else "3x3" if conv.ksize == 3 else ""
    m, n = conv.matrix_shape
    print(f"  stage {conv.stage}: {conv.in_channels:>2} -> {conv.out_channels:>2} "
        f"k={conv.ksize}  W is {m}x{n}  {tag}")

print("\nminimal chains for the stage-3 kernel matrices:")
for m, n in ((64, 288), (64, 576)):
    for depth in (2, 3):
        chain = select_min_param_chain(m, n, depth)
        print(f"  {m}x{n}, {depth} factors: {chain.param_count} parameters "
              f"({100 * chain.param_count / (m * n):.1f}% of dense) "
              f"specs {chain.factor_specs}")

print("\nfraction of the dense total after substituting the last S stages:")
print(f"{'':>6}" + "".join(f"{f'{d} factors':>12}" for d in (2, 3)))
for segments in (1, 2, 3):
    row = "".join(
        f"{resnet20.butterfly_fraction(segments, depth):>11.1f}%"
        for depth in (2, 3)
    )
    print(f"S = {segments}{row}")
