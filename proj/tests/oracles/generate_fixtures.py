"""Independent reference values for the C++ tests.

Reimplements the seeded stream (mt19937_64, 53-bit uniforms, Box-Muller),
FNV-1a and splitmix seed derivation, the toy generator forward pass and the
hashed text encoder in plain Python, and takes SSIM, FID and bilinear resizing
from scikit-image, SciPy and OpenCV. Output is written once to
tests/fixtures/oracle_values.json and committed; the tests only read it.
"""
import json
import math
import pathlib

import cv2
import numpy as np
import scipy.linalg
from skimage.metrics import structural_similarity

MASK64 = (1 << 64) - 1


class MT19937_64:
    def __init__(self, seed):
        self.mt = [0] * 312
        self.mt[0] = seed & MASK64
        for i in range(1, 312):
            prev = self.mt[i - 1]
            self.mt[i] = (6364136223846793005 * (prev ^ (prev >> 62)) + i) & MASK64
        self.index = 312

    def twist(self):
        upper, lower = 0xFFFFFFFF80000000, 0x7FFFFFFF
        mt = self.mt
        for i in range(312):
            x = (mt[i] & upper) | (mt[(i + 1) % 312] & lower)
            xa = x >> 1
            if x & 1:
                xa ^= 0xB5026F5AA96619E9
            mt[i] = mt[(i + 156) % 312] ^ xa
        self.index = 0

    def __call__(self):
        if self.index >= 312:
            self.twist()
        y = self.mt[self.index]
        self.index += 1
        y ^= (y >> 29) & 0x5555555555555555
        y ^= (y << 17) & 0x71D67FFFEDA60000
        y ^= (y << 37) & 0xFFF7EEE000000000
        y ^= y >> 43
        return y & MASK64


class Stream:
    def __init__(self, seed):
        self.engine = MT19937_64(seed)
        self.spare = None

    def uniform(self):
        return (self.engine() >> 11) * 2.0 ** -53

    def uniform_int(self, lo, hi):
        span = hi - lo + 1
        limit = MASK64 - (MASK64 % span)
        while True:
            r = self.engine()
            if r < limit:
                return lo + r % span

    def normal(self, mean=0.0, sd=1.0):
        if self.spare is not None:
            z, self.spare = self.spare, None
            return mean + sd * z
        u1 = self.uniform()
        while u1 <= 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        radius = math.sqrt(-2.0 * math.log(u1))
        angle = 2.0 * math.pi * u2
        self.spare = radius * math.sin(angle)
        return mean + sd * radius * math.cos(angle)


def fnv1a64(data, basis=0xCBF29CE484222325):
    h = basis
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & MASK64
    return h


def derive_seed(base, stream):
    z = (base + 0x9E3779B97F4A7C15 * (stream + 1)) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def toy_generator(sides, seed, latent, gain=1.0, bias_scale=0.5):
    s = Stream(seed)
    std = gain / math.sqrt(512 * len(sides))
    h = None
    for m, side in enumerate(sides):
        n = side * side * 3
        bias = np.array([s.normal(0.0, bias_scale) for _ in range(n)])
        flat = np.array([s.normal(0.0, std) for _ in range(n * 512)])
        A = flat.reshape((n, 512), order="F")
        layer = A @ latent[m] + bias
        if h is None:
            h = layer
        else:
            f = side // sides[m - 1]
            grid = h.reshape(sides[m - 1], sides[m - 1], 3)
            h = np.repeat(np.repeat(grid, f, axis=0), f, axis=1).reshape(-1) + layer
    return 1.0 / (1.0 + np.exp(-h))


def hash_text(prompt, dim=64, seed=7):
    tokens, cur = [], ""
    for ch in prompt:
        if ch.isalnum():
            cur += ch.lower()
        elif cur:
            tokens.append(cur)
            cur = ""
    if cur:
        tokens.append(cur)
    total = np.zeros(dim)
    for t in tokens:
        s = Stream(derive_seed(seed, fnv1a64(t.encode())))
        total += np.array([s.normal() for _ in range(dim)])
    return total / np.linalg.norm(total)


def pattern_image(h, w, a, b):
    """Pixel (y, x, c) = 0.5 + 0.4 sin(a y + b x + 0.9 c) * cos(0.3 y - 0.2 x)."""
    y, x, c = np.meshgrid(np.arange(h), np.arange(w), np.arange(3), indexing="ij")
    return 0.5 + 0.4 * np.sin(a * y + b * x + 0.9 * c) * np.cos(0.3 * y - 0.2 * x)


def feature_rows(n, d, shift):
    """Row i, column j = sin(1.3 i + 0.7 j + shift) + 0.1 j."""
    i, j = np.meshgrid(np.arange(n), np.arange(d), indexing="ij")
    return np.sin(1.3 * i + 0.7 * j + shift) + 0.1 * j


def frechet(a, b):
    mu_a, mu_b = a.mean(0), b.mean(0)
    ca, cb = np.cov(a, rowvar=False), np.cov(b, rowvar=False)
    covmean = scipy.linalg.sqrtm(ca @ cb).real
    return float(((mu_a - mu_b) ** 2).sum() + np.trace(ca + cb - 2 * covmean))


def main():
    out = {}

    ref = MT19937_64(5489)
    for _ in range(9999):
        ref()
    out["mt19937_64_default_10000th"] = str(ref())

    s = Stream(42)
    out["stream42"] = {
        "u64": [str(s.engine()) for _ in range(3)],
        "uniform": [s.uniform() for _ in range(3)],
        "normal": [s.normal() for _ in range(4)],
        "uniform_int_0_9": [s.uniform_int(0, 9) for _ in range(8)],
    }
    out["fnv1a64"] = {"": str(fnv1a64(b"")), "a": str(fnv1a64(b"a")), "foobar": str(fnv1a64(b"foobar"))}
    out["derive_seed"] = {"7_0": str(derive_seed(7, 0)), "123_456": str(derive_seed(123, 456))}

    sides = [4, 8]
    latent = np.array([[0.5 * math.sin(0.37 * (m * 512 + j)) for j in range(512)] for m in range(len(sides))])
    img = toy_generator(sides, 3, latent)
    out["toy_generator_4_8_seed3"] = {
        "indices": [0, 1, 2, 50, 100, 191],
        "values": [float(img[i]) for i in [0, 1, 2, 50, 100, 191]],
        "sum": float(img.sum()),
    }

    # Default generator (sides 16, 32, 32, 32; seed 1) at zero latent and noise:
    # the bias image.
    sides_default = [16, 32, 32, 32]
    bias_img = toy_generator(sides_default, 1, np.zeros((4, 512)))
    picks = [0, 1, 2, 777, 1500, 3071]
    out["toy_generator_default_bias_image"] = {
        "indices": picks,
        "values": [float(bias_img[i]) for i in picks],
        "sum": float(bias_img.sum()),
    }

    out["hash_text_x"] = {"first": [float(v) for v in hash_text("x")[:8]]}

    emb = hash_text("a face with red lipstick.")
    out["hash_text_red_lipstick"] = {"first": [float(v) for v in emb[:6]]}

    x = pattern_image(24, 20, 0.31, 0.17)
    y = np.clip(pattern_image(24, 20, 0.29, 0.21) * 0.9 + 0.03, 0, 1)
    ssim = structural_similarity(x, y, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                 data_range=1.0, channel_axis=2, K1=0.01, K2=0.03)
    out["ssim_pattern_24x20"] = float(ssim)

    a, b = feature_rows(40, 5, 0.0), feature_rows(40, 5, 0.4) * 1.2 + 0.3
    out["fid_rows_40x5"] = frechet(a, b)

    src = pattern_image(10, 14, 0.5, 0.35).astype(np.float64)
    up = cv2.resize(src, (21, 17), interpolation=cv2.INTER_LINEAR)
    down = cv2.resize(src, (6, 4), interpolation=cv2.INTER_LINEAR)
    out["resize_10x14"] = {
        "up_17x21": [float(up[0, 0, 0]), float(up[5, 7, 1]), float(up[16, 20, 2]), float(up[9, 3, 0])],
        "down_4x6": [float(down[0, 0, 0]), float(down[2, 3, 1]), float(down[3, 5, 2])],
    }

    # Adam, three steps on theta_i = 0.1 i with gradient g_i(t) = sin(i + t) + 0.5.
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    theta = np.array([0.1 * i for i in range(4)])
    m = np.zeros(4)
    v = np.zeros(4)
    for t in range(1, 4):
        g = np.array([math.sin(i + t) + 0.5 for i in range(4)])
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        theta = theta - lr * mh / (np.sqrt(vh) + eps)
    out["adam_three_steps"] = [float(t) for t in theta]

    path = pathlib.Path(__file__).resolve().parent.parent / "fixtures" / "oracle_values.json"
    path.write_text(json.dumps(out, indent=2) + "\n")
    print("wrote", path)


if __name__ == "__main__":
    main()
