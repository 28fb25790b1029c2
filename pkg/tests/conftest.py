import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def brute_conv2d(filt, image):
    """Quadruple-loop zero-padded same convolution."""
    p = filt.shape[0]
    c = (p - 1) // 2
    H, W = image.shape
    out = np.zeros((H, W))
    for i in range(H):
        for j in range(W):
            acc = 0.0
            for u in range(p):
                for v in range(p):
                    a, b = i - u + c, j - v + c
                    if 0 <= a < H and 0 <= b < W:
                        acc += filt[u, v] * image[a, b]
            out[i, j] = acc
    return out


def rel_err(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-300)
