"""Slow, literal reference implementations used only by the tests.

Nothing here imports the package's numerical code; each function transcribes
the defining formula pixel by pixel or element by element.
"""

import math

WEIGHT = {"pedestrian": 4, "cyclist": 4, "vehicle": 2, "traffic_sign": 2, "traffic_light": 2, "other": 1}


def heatmap_oracle(boxes, width, height):
    """boxes: iterable of (x_lb, y_lb, x_rt, y_rt, class_name). Returns (grid, Z)."""
    grid = [[0.0] * width for _ in range(height)]
    z_sum = 0.0
    for x_lb, y_lb, x_rt, y_rt, name in boxes:
        xs = [c for c in range(width) if x_lb <= c <= x_rt]
        ys = [r for r in range(height) if y_lb <= r <= y_rt]
        if not xs or not ys:
            continue
        n = WEIGHT[name]
        bx0, bx1 = min(xs), max(xs)
        by0, by1 = min(ys), max(ys)
        for r in ys:
            for c in xs:
                x_h = 0.0 if bx1 == bx0 else (c - bx0) * math.pi / (bx1 - bx0) - math.pi / 2
                y_v = 0.0 if by1 == by0 else (r - by0) * math.pi / (by1 - by0) - math.pi / 2
                z_h = math.exp(math.sqrt(n) * math.cos(x_h))
                z_v = math.exp(math.sqrt(n) * math.cos(y_v))
                z = math.sqrt(z_h**2 + z_v**2)
                grid[r][c] += z
                z_sum += z
    return grid, z_sum


def conv2d_oracle(x, w, stride=1, padding=0):
    """x: C x H x W nested lists / arrays, w: F x C x kh x kw. Direct sliding window."""
    c_in, h, wd = len(x), len(x[0]), len(x[0][0])
    f_out, _, kh, kw = len(w), len(w[0]), len(w[0][0]), len(w[0][0][0])
    sh, sw = (stride, stride) if isinstance(stride, int) else stride
    ph, pw = (padding, padding) if isinstance(padding, int) else padding
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    out = [[[0.0] * wo for _ in range(ho)] for _ in range(f_out)]
    for f in range(f_out):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0
                for c in range(c_in):
                    for a in range(kh):
                        for b in range(kw):
                            r, s = i * sh + a - ph, j * sw + b - pw
                            if 0 <= r < h and 0 <= s < wd:
                                acc += float(x[c][r][s]) * float(w[f][c][a][b])
                out[f][i][j] = acc
    return out


def softmax_oracle(row):
    m = max(row)
    e = [math.exp(v - m) for v in row]
    s = sum(e)
    return [v / s for v in e]


def attention_oracle(x, q, k, v, divisor=8.0, use_softmax=True):
    """Attention with plain loops: softmax(X Q (X K)^T / divisor) X V."""

    def matmul(a, b):
        return [[sum(a[i][t] * b[t][j] for t in range(len(b))) for j in range(len(b[0]))] for i in range(len(a))]

    q_out, k_out, v_out = matmul(x, q), matmul(x, k), matmul(x, v)
    k_t = [list(col) for col in zip(*k_out)]
    scores = [[s / divisor for s in row] for row in matmul(q_out, k_t)]
    weights = [softmax_oracle(row) for row in scores] if use_softmax else scores
    return matmul(weights, v_out), weights


def cross_entropy_oracle(logits, label):
    m = max(logits)
    lse = m + math.log(sum(math.exp(v - m) for v in logits))
    return lse - logits[label]


def accuracy_oracle(matrix):
    """Rows predicted, columns true. Returns (per-class % list, overall %)."""
    k = len(matrix)
    per = []
    for c in range(k):
        col = sum(matrix[r][c] for r in range(k))
        per.append(None if col == 0 else 100.0 * matrix[c][c] / col)
    total = sum(sum(row) for row in matrix)
    trace = sum(matrix[i][i] for i in range(k))
    return per, 100.0 * trace / total
