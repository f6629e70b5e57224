"""Generate a fringe stack, decode it without any scene, and look at the
pieces the decoder produces along one image row.

    python3 demos/patterns_and_decoding.py
"""
import numpy as np

from cpscan.decode import decode_stack
from cpscan.patterns import PatternSpec, full_pattern_stack, gray_encode, valid_fringe_widths

spec_v = PatternSpec(1024, 768, 64, "vertical")
spec_h = PatternSpec(1024, 768, 96, "horizontal")
stack = full_pattern_stack(spec_v, spec_h)
print(f"{len(stack.images)} frames: " + ", ".join(e.file for e in stack.manifest.entries))
print("valid vertical fringe widths for 1024 px:", valid_fringe_widths(1024, minimum=16))

# the first eight Gray codewords differ from their neighbour in exactly one bit
print("gray codes:", [format(int(g), "04b") for g in gray_encode(np.arange(8))])

dec = decode_stack(stack.images, stack.manifest)
v = dec.orientations["vertical"]
row = 100
cols = np.arange(0, 200, 20)
print("\ncol  wrapped  code  unwrapped*w/2pi")
for c in cols:
    print(f"{c:4d}  {v.wrapped[row, c]:+.3f}  {v.codes[row, c]:4d}  {64 * v.unwrapped[row, c] / (2 * np.pi):8.3f}")

corr = dec.correspondence
err = np.abs(corr.xp - spec_v.coordinate_grid())
print(f"\nmax |xp - x| over the frame: {np.nanmax(err):.4f} px (8-bit quantization only)")
