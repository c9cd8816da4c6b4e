"""Independent oracle for the pinned 16x16 block golden at QP 25.

Builds the block from a SplitMix64 sequence, codes it with scipy's
orthonormal DCT, and prints the (SSE, bits) pair the Rust test pins.
"""

import numpy as np
from scipy.fft import dctn, idctn

MASK = (1 << 64) - 1


def splitmix64(state):
    while True:
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        yield z ^ (z >> 31)


def block(seed, n=16):
    gen = splitmix64(seed)
    return np.array([(next(gen) >> 11) * 2.0**-53 for _ in range(n * n)]).reshape(n, n)


def zigzag(n):
    order = []
    for s in range(2 * n - 1):
        lo, hi = max(0, s - n + 1), min(s, n - 1)
        rows = range(hi, lo - 1, -1) if s % 2 == 0 else range(lo, hi + 1)
        order.extend(r * n + (s - r) for r in rows)
    return order


def ue_len(v):
    return 2 * int(v + 1).bit_length() - 1


def se_len(v):
    return ue_len(2 * v - 1 if v > 0 else -2 * v)


def main():
    x = block(2024)
    step = 2.0 ** ((25 - 4) / 6) / 255.0
    coeffs = dctn(x - 0.5, norm="ortho").ravel()
    zz = zigzag(16)
    scaled = coeffs[zz] / step
    levels = (np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)).astype(int)
    nz = np.nonzero(levels)[0]
    eob = int(nz[-1]) + 1 if len(nz) else 0
    bits = ue_len(eob) + sum(se_len(int(l)) for l in levels[:eob])
    if eob == 0:
        recon = np.full((16, 16), 0.5)
    else:
        deq = np.zeros(256)
        deq[zz] = levels * step
        recon = np.clip(idctn(deq.reshape(16, 16), norm="ortho") + 0.5, 0.0, 1.0)
    sse = float(np.sum((x - recon) ** 2))
    print(f"sse {sse!r}")
    print(f"bits {bits}")


if __name__ == "__main__":
    main()
