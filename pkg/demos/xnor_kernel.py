"""
XNOR and popcount instead of multiply-add
=========================================

A +-1 dot product only needs to know where two sign vectors agree.
Packing signs 64 to a word turns that into XOR plus popcount.
"""

import numpy as np

from gecko import BitLayer, OpCounter, pack_signs, unpack_signs, xnor_dot, xnor_linear

rng = np.random.default_rng(0)

# two sign vectors of length 100 (not a multiple of 64, so the last word is padded)
x = rng.choice([-1.0, 1.0], size=(1, 100))
w = rng.choice([-1.0, 1.0], size=(1, 100))
px, pw = pack_signs(x), pack_signs(w)
print("words per row:", px.words.shape[1])
print("float dot    :", (x @ w.T)[0, 0])
print("xnor dot     :", xnor_dot(px.words[0], pw.words[0], 100))

# padding bits stay zero and unpack gives the original matrix back
assert np.array_equal(unpack_signs(px), x)

# a whole layer: 8 inputs of width 100 through 16 binary units
a = rng.choice([-1.0, 1.0], size=(8, 100))
weights = rng.choice([-1.0, 1.0], size=(100, 16))
layer = BitLayer.from_signs(weights)
counter = OpCounter()
out = xnor_linear(pack_signs(a), layer, counter)
print("matches float GEMM:", np.array_equal(out, a @ weights))
print("xnor ops:", counter.xnors, " MACs:", counter.macs)

# 32-bit floats vs packed bits for the same 100x16 matrix
print("float bytes:", 4 * weights.size, " packed bytes:", layer.weights.nbytes)
