"""Independent reference implementations used as test oracles.

Everything here is deliberately slow and written from first principles
(scalar loops, textbook formulas, a from-scratch SHA-256) so that it shares no
code path with the package under test.
"""

import math

import mpmath
import numpy as np

# --- SHA-256 (FIPS 180-4), straightforward and unoptimized ---

_K = [
    0x428A2F98, 0x71374491, 0xB5C0FBCF, 0xE9B5DBA5, 0x3956C25B, 0x59F111F1,
    0x923F82A4, 0xAB1C5ED5, 0xD807AA98, 0x12835B01, 0x243185BE, 0x550C7DC3,
    0x72BE5D74, 0x80DEB1FE, 0x9BDC06A7, 0xC19BF174, 0xE49B69C1, 0xEFBE4786,
    0x0FC19DC6, 0x240CA1CC, 0x2DE92C6F, 0x4A7484AA, 0x5CB0A9DC, 0x76F988DA,
    0x983E5152, 0xA831C66D, 0xB00327C8, 0xBF597FC7, 0xC6E00BF3, 0xD5A79147,
    0x06CA6351, 0x14292967, 0x27B70A85, 0x2E1B2138, 0x4D2C6DFC, 0x53380D13,
    0x650A7354, 0x766A0ABB, 0x81C2C92E, 0x92722C85, 0xA2BFE8A1, 0xA81A664B,
    0xC24B8B70, 0xC76C51A3, 0xD192E819, 0xD6990624, 0xF40E3585, 0x106AA070,
    0x19A4C116, 0x1E376C08, 0x2748774C, 0x34B0BCB5, 0x391C0CB3, 0x4ED8AA4A,
    0x5B9CCA4F, 0x682E6FF3, 0x748F82EE, 0x78A5636F, 0x84C87814, 0x8CC70208,
    0x90BEFFFA, 0xA4506CEB, 0xBEF9A3F7, 0xC67178F2,
]


def _rotr(x, n):
    return ((x >> n) | (x << (32 - n))) & 0xFFFFFFFF


def sha256_reference(message: bytes) -> bytes:
    h = [
        0x6A09E667, 0xBB67AE85, 0x3C6EF372, 0xA54FF53A,
        0x510E527F, 0x9B05688C, 0x1F83D9AB, 0x5BE0CD19,
    ]
    bit_len = len(message) * 8
    message = message + b"\x80"
    while len(message) % 64 != 56:
        message += b"\x00"
    message += bit_len.to_bytes(8, "big")
    for off in range(0, len(message), 64):
        w = [int.from_bytes(message[off + 4 * i : off + 4 * i + 4], "big") for i in range(16)]
        for i in range(16, 64):
            s0 = _rotr(w[i - 15], 7) ^ _rotr(w[i - 15], 18) ^ (w[i - 15] >> 3)
            s1 = _rotr(w[i - 2], 17) ^ _rotr(w[i - 2], 19) ^ (w[i - 2] >> 10)
            w.append((w[i - 16] + s0 + w[i - 7] + s1) & 0xFFFFFFFF)
        a, b, c, d, e, f, g, hh = h
        for i in range(64):
            s1 = _rotr(e, 6) ^ _rotr(e, 11) ^ _rotr(e, 25)
            ch = (e & f) ^ (~e & g)
            t1 = (hh + s1 + ch + _K[i] + w[i]) & 0xFFFFFFFF
            s0 = _rotr(a, 2) ^ _rotr(a, 13) ^ _rotr(a, 22)
            maj = (a & b) ^ (a & c) ^ (b & c)
            t2 = (s0 + maj) & 0xFFFFFFFF
            hh, g, f, e, d, c, b, a = g, f, e, (d + t1) & 0xFFFFFFFF, c, b, a, (t1 + t2) & 0xFFFFFFFF
        h = [(x + y) & 0xFFFFFFFF for x, y in zip(h, (a, b, c, d, e, f, g, hh))]
    return b"".join(x.to_bytes(4, "big") for x in h)


def source_bits_reference(name: str, id_bits: int) -> list:
    digest = sha256_reference(name.encode("utf-8"))
    bits = []
    for byte in digest[: (id_bits + 7) // 8]:
        for k in range(7, -1, -1):
            bits.append(1 if (byte >> k) & 1 else -1)
    return bits[:id_bits]


# --- scalar-loop metric and loss oracles ---


def mse_loop(a, b):
    a, b = np.asarray(a, dtype=np.float64).ravel(), np.asarray(b, dtype=np.float64).ravel()
    total = 0.0
    for x, y in zip(a, b):
        total += (x - y) ** 2
    return total / len(a)


def landmark_loss_loop(pred, target):
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 136)
    target = np.asarray(target, dtype=np.float64).reshape(-1, 136)
    total, count = 0.0, 0
    for row_p, row_t in zip(pred, target):
        for i in range(68):
            dx = row_p[2 * i] - row_t[2 * i]
            dy = row_p[2 * i + 1] - row_t[2 * i + 1]
            total += math.sqrt(dx * dx + dy * dy)
            count += 1
    return total / count


def bce_logits_highprec(logits, targets01):
    """Mean BCE on logits via mpmath (50 digits)."""
    logits = np.asarray(logits, dtype=np.float64).ravel()
    targets01 = np.asarray(targets01, dtype=np.float64).ravel()
    with mpmath.workdps(50):
        total = mpmath.mpf(0)
        for x, t in zip(logits, targets01):
            x, t = mpmath.mpf(float(x)), mpmath.mpf(float(t))
            p = 1 / (1 + mpmath.e**-x)
            total += -(t * mpmath.log(p) + (1 - t) * mpmath.log(1 - p))
        return float(total / len(logits))


def ber_loop(logits, truth):
    logits = np.asarray(logits, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    errors = 0
    for x, t in zip(logits, truth):
        b = 1.0 if x >= 0 else -1.0
        errors += 0.5 * abs(b - t)
    return errors / len(logits)


def aed_px_loop(a, b, width, height):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    total = 0.0
    for i in range(68):
        dx = (a[2 * i] - b[2 * i]) * width
        dy = (a[2 * i + 1] - b[2 * i + 1]) * height
        total += math.sqrt(dx * dx + dy * dy)
    return total / 68.0


def psnr_loop(a, b):
    a = (np.asarray(a, dtype=np.float64) + 1.0) * 127.5
    b = (np.asarray(b, dtype=np.float64) + 1.0) * 127.5
    total = 0.0
    for x, y in zip(a.ravel(), b.ravel()):
        total += (x - y) ** 2
    mse = total / a.size
    if mse == 0:
        return 100.0
    return min(10.0 * math.log10(255.0**2 / mse), 100.0)


def ssim_loop(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Windowed SSIM with explicit loops over valid window positions."""
    a = (np.asarray(a, dtype=np.float64) + 1.0) * 127.5
    b = (np.asarray(b, dtype=np.float64) + 1.0) * 127.5
    half = window // 2
    xs = np.arange(window) - half
    g1 = np.exp(-0.5 * (xs / sigma) ** 2)
    g1 /= g1.sum()
    kernel = np.outer(g1, g1)
    c1 = (k1 * 255.0) ** 2
    c2 = (k2 * 255.0) ** 2
    channel_means = []
    for ch in range(a.shape[0]):
        x, y = a[ch], b[ch]
        h, w = x.shape
        vals = []
        for i in range(half, h - half):
            for j in range(half, w - half):
                wx = x[i - half : i + half + 1, j - half : j + half + 1]
                wy = y[i - half : i + half + 1, j - half : j + half + 1]
                mx = (kernel * wx).sum()
                my = (kernel * wy).sum()
                vx = (kernel * wx * wx).sum() - mx * mx
                vy = (kernel * wy * wy).sum() - my * my
                cxy = (kernel * wx * wy).sum() - mx * my
                vals.append(
                    ((2 * mx * my + c1) * (2 * cxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2))
                )
        channel_means.append(np.mean(vals))
    return float(np.mean(channel_means))


# --- naive JPEG-mask reference (O(N^4) DCT, restated color constants) ---

_RGB2YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168735892, -0.331264108, 0.5],
        [0.5, -0.418687589, -0.081312411],
    ]
)


def _dct2_naive(block):
    out = np.zeros((8, 8))
    for u in range(8):
        for v in range(8):
            au = math.sqrt(1.0 / 8.0) if u == 0 else math.sqrt(2.0 / 8.0)
            av = math.sqrt(1.0 / 8.0) if v == 0 else math.sqrt(2.0 / 8.0)
            total = 0.0
            for n in range(8):
                for m in range(8):
                    total += (
                        block[n, m]
                        * math.cos((2 * n + 1) * u * math.pi / 16.0)
                        * math.cos((2 * m + 1) * v * math.pi / 16.0)
                    )
            out[u, v] = au * av * total
    return out


def _idct2_naive(coeffs):
    out = np.zeros((8, 8))
    for n in range(8):
        for m in range(8):
            total = 0.0
            for u in range(8):
                for v in range(8):
                    au = math.sqrt(1.0 / 8.0) if u == 0 else math.sqrt(2.0 / 8.0)
                    av = math.sqrt(1.0 / 8.0) if v == 0 else math.sqrt(2.0 / 8.0)
                    total += (
                        au
                        * av
                        * coeffs[u, v]
                        * math.cos((2 * n + 1) * u * math.pi / 16.0)
                        * math.cos((2 * m + 1) * v * math.pi / 16.0)
                    )
            out[n, m] = total
    return out


def jpeg_mask_naive(image_chw, keep_y, keep_c):
    """Reference DCT masking for a (3, 8k, 8k) image in [-1, 1]."""
    img = np.asarray(image_chw, dtype=np.float64)
    unit = (img + 1.0) / 2.0
    ycc = np.einsum("ij,jhw->ihw", _RGB2YCC, unit)
    ycc[1] += 0.5
    ycc[2] += 0.5
    h, w = img.shape[1:]
    out = np.zeros_like(ycc)
    for ch in range(3):
        keep = keep_y if ch == 0 else keep_c
        for bi in range(0, h, 8):
            for bj in range(0, w, 8):
                coeffs = _dct2_naive(ycc[ch, bi : bi + 8, bj : bj + 8])
                for u in range(8):
                    for v in range(8):
                        if u >= keep or v >= keep:
                            coeffs[u, v] = 0.0
                out[ch, bi : bi + 8, bj : bj + 8] = _idct2_naive(coeffs)
    out[1] -= 0.5
    out[2] -= 0.5
    rgb = np.einsum("ij,jhw->ihw", np.linalg.inv(_RGB2YCC), out)
    return rgb * 2.0 - 1.0


# --- ROC / AUC oracles ---


def roc_sweep_exhaustive(real, fake):
    """O(n^2) sweep over distinct observed values with the >= rule."""
    real = list(map(float, real))
    fake = list(map(float, fake))
    candidates = sorted(set(real + fake), reverse=True)
    points = []
    best = None
    for thr in candidates:
        fpr = sum(1 for v in real if v >= thr) / len(real)
        tpr = sum(1 for v in fake if v >= thr) / len(fake)
        points.append((fpr, tpr, thr))
        j = tpr - fpr
        if best is None or j > best[0] or (j == best[0] and thr < best[1]):
            best = (j, thr)
    xs = [0.0] + [p[0] for p in points] + [1.0]
    ys = [0.0] + [p[1] for p in points] + [1.0]
    auc = 0.0
    for i in range(1, len(xs)):
        auc += (xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]) / 2.0
    return points, auc, best[1]


def pairwise_auc(real, fake):
    """P(fake > real) + 0.5 P(fake == real), by exhaustive comparison."""
    wins, ties = 0, 0
    for f in fake:
        for r in real:
            if f > r:
                wins += 1
            elif f == r:
                ties += 1
    return (wins + 0.5 * ties) / (len(real) * len(fake))


# --- finite differences ---


def directional_derivative_fd(func, x, direction, h=1e-3):
    """Central finite difference of a scalar func along a direction."""
    return (func(x + h * direction) - func(x - h * direction)) / (2.0 * h)
