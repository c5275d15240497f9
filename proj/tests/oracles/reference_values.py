"""Regenerates tests/unit/reference_values.hpp from independent implementations
(torch, scipy.ndimage, scikit-image, plain numpy loops).

    python3 tests/oracles/reference_values.py > tests/unit/reference_values.hpp
"""
import math

import numpy as np
import scipy.ndimage as ndi
import torch
import torch.nn.functional as F
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

M = (1 << 64) - 1


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & M
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & M
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & M
    return x ^ (x >> 31)


def uniform(n, seed, lo=0.0, hi=1.0):
    return np.array([lo + (hi - lo) * ((splitmix64(seed + i) >> 11) * 2.0**-53) for i in range(n)])


def emit(name, values):
    flat = np.asarray(values, dtype=np.float64).ravel()
    body = ",\n    ".join(", ".join(repr(float(v)) for v in flat[i:i + 4]) for i in range(0, len(flat), 4))
    print(f"inline constexpr double {name}[] = {{\n    {body}}};")


def emit_scalar(name, v):
    print(f"inline constexpr double {name} = {float(v)!r};")


print("#pragma once\n")
print("// Generated by tests/oracles/reference_values.py; do not edit by hand.\n")
print("namespace ref {\n")

# conv2d, pad 1: input (1,2,5,5) seed 11, kernel (3,2,3,3) seed 12, bias (3) seed 13, all in [-1, 1]
x = torch.tensor(uniform(50, 11, -1, 1)).reshape(1, 2, 5, 5)
k = torch.tensor(uniform(54, 12, -1, 1)).reshape(3, 2, 3, 3)
b = torch.tensor(uniform(3, 13, -1, 1))
emit("kConv2dOut", F.conv2d(x, k, b, padding=1).numpy())

# bilinear x2, align_corners=False: input (1,1,3,4) seed 21
u = torch.tensor(uniform(12, 21)).reshape(1, 1, 3, 4)
emit("kUpsampleOut", F.interpolate(u, scale_factor=2, mode="bilinear", align_corners=False).numpy())

# resize 12x12 (seed 22) -> 8x16
r = torch.tensor(uniform(144, 22)).reshape(1, 1, 12, 12)
emit("kResizeOut", F.interpolate(r, size=(8, 16), mode="bilinear", align_corners=False, antialias=False).numpy())

# classical filters on a 16x16 image, seed 31; scipy "reflect" is the half-sample mirror
img = uniform(256, 31).reshape(16, 16)
emit("kMean3", ndi.uniform_filter(img, size=3, mode="reflect"))
emit("kMedian3", ndi.median_filter(img, size=3, mode="reflect"))
emit("kGauss5", ndi.gaussian_filter(img, sigma=1.0, truncate=2.0, mode="reflect"))


def lee(img, k, noise_var=None):
    p = k // 2
    pad = np.pad(img, p, mode="symmetric")
    mu = np.zeros_like(img)
    var = np.zeros_like(img)
    for r in range(img.shape[0]):
        for c in range(img.shape[1]):
            w = pad[r:r + k, c:c + k]
            mu[r, c] = w.mean()
            var[r, c] = max(0.0, (w * w).mean() - w.mean() ** 2)
    nv = np.median(var) if noise_var is None else noise_var
    gain = np.where(np.maximum(var, nv) > 0, np.maximum(0.0, var - nv) / np.maximum(np.maximum(var, nv), 1e-300), 0.0)
    return mu + gain * (img - mu)


emit("kWiener5", lee(img, 5))


def nlm(img, patch, search, h):
    pp, sp = patch // 2, search // 2
    pad = np.pad(img, pp + sp, mode="symmetric")
    out = np.zeros_like(img)
    o = pp + sp
    for r in range(img.shape[0]):
        for c in range(img.shape[1]):
            ref = pad[r + o - pp:r + o + pp + 1, c + o - pp:c + o + pp + 1]
            num = den = 0.0
            for dr in range(-sp, sp + 1):
                for dc in range(-sp, sp + 1):
                    q = pad[r + o + dr - pp:r + o + dr + pp + 1, c + o + dc - pp:c + o + dc + pp + 1]
                    w = math.exp(-np.mean((ref - q) ** 2) / (h * h))
                    num += w * pad[r + o + dr, c + o + dc]
                    den += w
            out[r, c] = num / den
    return out


small = uniform(144, 71).reshape(12, 12)
emit("kNlm", nlm(small, 3, 5, 0.1))


def haar_matrix(n):
    a = np.zeros((n, n))
    s = 1 / math.sqrt(2)
    for i in range(n // 2):
        a[i, 2 * i] = a[i, 2 * i + 1] = s
        a[n // 2 + i, 2 * i] = s
        a[n // 2 + i, 2 * i + 1] = -s
    return a


def haar2(x, levels):
    x = x.copy()
    h, w = x.shape
    for _ in range(levels):
        x[:h, :w] = haar_matrix(h) @ x[:h, :w] @ haar_matrix(w).T
        h //= 2
        w //= 2
    return x


emit("kHaar2", haar2(uniform(64, 51).reshape(8, 8), 2))

# metrics on 32x32 pairs
a = uniform(1024, 41).reshape(32, 32)
b = np.clip(a + uniform(1024, 42, -0.2, 0.2).reshape(32, 32), 0, 1)
emit_scalar("kSsimWindowed", structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                                   data_range=1.0, K1=0.01, K2=0.03))
emit_scalar("kPsnr", peak_signal_noise_ratio(a, b, data_range=1.0))
mx, my = a.mean(), b.mean()
vx, vy, cxy = a.var(), b.var(), ((a - mx) * (b - my)).mean()
emit_scalar("kSsimGlobal", ((2 * mx * my + 1e-4) * (2 * cxy + 9e-4)) / ((mx * mx + my * my + 1e-4) * (vx + vy + 9e-4)))


# U-Net parameter count, base width 8, depth 4, enumerated from layer shapes
def unet_params(c, depth=4):
    enc = [c * 2 ** min(i, depth - 1) for i in range(depth + 1)]
    total = 0

    def conv(cin, cout, k):
        return cout * cin * k * k + cout

    total += conv(1, enc[0], 3) + conv(enc[0], enc[0], 3)
    for i in range(1, depth + 1):
        total += conv(enc[i - 1], enc[i], 3) + conv(enc[i], enc[i], 3)
    prev = enc[depth]
    for j in range(depth):
        skip = enc[depth - j - 1]
        out = enc[depth - j - 2] if j < depth - 1 else c
        total += conv(skip + prev, out, 3) + conv(out, out, 3)
        prev = out
    return total + conv(c, 1, 1)


print(f"inline constexpr unsigned long kUNetParams8 = {unet_params(8)};")
print(f"inline constexpr unsigned long kUNetParams64 = {unet_params(64)};")

s = 1 / (1 + math.exp(-0.5))
emit_scalar("kSigmoidPrimeHalf", s * (1 - s))

print("\n}  // namespace ref")
