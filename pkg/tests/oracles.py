"""Independent reference implementations used to cross-check the
package. Everything here is deliberately naive: pure-Python loops,
explicit threshold sweeps, pairwise counting, direct per-pixel kernel
sums. No code is shared with the library paths under test."""

import math


def _flat(values2d):
    return [float(v) for row in values2d for v in row]


def _round_half_away(v):
    return int(math.floor(v + 0.5)) if v >= 0 else int(math.ceil(v - 0.5))


def pixel_of(x, y, width, height):
    c = min(max(_round_half_away(x), 0), width - 1)
    r = min(max(_round_half_away(y), 0), height - 1)
    return c, r


def mean(xs):
    return sum(xs) / len(xs)


def cc_naive(pred2d, gt2d):
    p, g = _flat(pred2d), _flat(gt2d)
    mp, mg = mean(p), mean(g)
    cov = mean([(a - mp) * (b - mg) for a, b in zip(p, g)])
    sp = math.sqrt(mean([(a - mp) ** 2 for a in p]))
    sg = math.sqrt(mean([(b - mg) ** 2 for b in g]))
    return cov / (sp * sg)


def kld_naive(pred2d, gt2d, eps=1e-12):
    p, g = _flat(pred2d), _flat(gt2d)
    sp, sg = sum(p), sum(g)
    total = 0.0
    for a, b in zip(p, g):
        gb = b / sg
        if gb > 0:
            total += gb * math.log(gb / (a / sp + eps))
    return total


def sim_naive(pred2d, gt2d):
    p, g = _flat(pred2d), _flat(gt2d)
    sp, sg = sum(p), sum(g)
    return sum(min(a / sp, b / sg) for a, b in zip(p, g))


def rmse_naive(pred2d, gt2d):
    p, g = _flat(pred2d), _flat(gt2d)
    return math.sqrt(mean([(a - b) ** 2 for a, b in zip(p, g)]))


def r2_naive(pred2d, gt2d):
    p, g = _flat(pred2d), _flat(gt2d)
    mg = mean(g)
    ss_res = sum((a - b) ** 2 for a, b in zip(p, g))
    ss_tot = sum((b - mg) ** 2 for b in g)
    return 1.0 - ss_res / ss_tot


def nss_naive(pred2d, fixations, width, height):
    v = _flat(pred2d)
    mu = mean(v)
    sd = math.sqrt(mean([(a - mu) ** 2 for a in v]))
    vals = []
    for x, y in fixations:
        c, r = pixel_of(x, y, width, height)
        vals.append((pred2d[r][c] - mu) / sd)
    return mean(vals)


def auc_judd_naive(pred2d, fixations, width, height):
    """Explicit ROC sweep: thresholds at every distinct fixated value,
    TPR over fixations, FPR over the non-fixated pixels, trapezoid
    with (0,0) and (1,1) endpoints."""
    fixated = set()
    pos = []
    for x, y in fixations:
        c, r = pixel_of(x, y, width, height)
        fixated.add((c, r))
        pos.append(float(pred2d[r][c]))
    neg = [float(pred2d[r][c]) for r in range(height) for c in range(width)
           if (c, r) not in fixated]
    thresholds = sorted(set(pos), reverse=True)
    pts = [(0.0, 0.0)]
    for t in thresholds:
        tpr = sum(1 for v in pos if v >= t) / len(pos)
        fpr = sum(1 for v in neg if v >= t) / len(neg)
        pts.append((fpr, tpr))
    pts.append((1.0, 1.0))
    area = 0.0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def auc_pairwise(pos, neg):
    """Probability a positive outranks a negative, ties counted half."""
    wins = 0.0
    for a in pos:
        for b in neg:
            if a > b:
                wins += 1.0
            elif a == b:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def gaussian_map_naive(fixations, width, height, sigma):
    """Direct per-pixel sum of truncated Gaussians (square support of
    radius ceil(3 sigma)) around each rounded fixation pixel, then
    max-rescaled."""
    r = int(math.ceil(3 * sigma))
    out = [[0.0] * width for _ in range(height)]
    centers = [pixel_of(x, y, width, height) for x, y in fixations]
    for py in range(height):
        for px in range(width):
            total = 0.0
            for cx, cy in centers:
                dx, dy = px - cx, py - cy
                if abs(dx) <= r and abs(dy) <= r:
                    total += math.exp(-(dx * dx + dy * dy) / (2 * sigma * sigma))
            out[py][px] = total
    peak = max(max(row) for row in out)
    return [[v / peak for v in row] for row in out]


def bilinear_naive(values2d, src_w, src_h, dst_w, dst_h):
    out = [[0.0] * dst_w for _ in range(dst_h)]
    for j in range(dst_h):
        for i in range(dst_w):
            sx = min(max((i + 0.5) * src_w / dst_w - 0.5, 0.0), src_w - 1)
            sy = min(max((j + 0.5) * src_h / dst_h - 0.5, 0.0), src_h - 1)
            x0, y0 = int(math.floor(sx)), int(math.floor(sy))
            x1, y1 = min(x0 + 1, src_w - 1), min(y0 + 1, src_h - 1)
            wx, wy = sx - x0, sy - y0
            top = values2d[y0][x0] * (1 - wx) + values2d[y0][x1] * wx
            bot = values2d[y1][x0] * (1 - wx) + values2d[y1][x1] * wx
            out[j][i] = top * (1 - wy) + bot * wy
    return out


def ranks_naive(xs):
    xs = list(xs)
    ranks = [0.0] * len(xs)
    for i, v in enumerate(xs):
        below = sum(1 for u in xs if u < v)
        ties = sum(1 for u in xs if u == v)
        ranks[i] = below + (ties + 1) / 2.0
    return ranks


def pearson_naive(xs, ys):
    mx, my = mean(xs), mean(ys)
    cov = mean([(a - mx) * (b - my) for a, b in zip(xs, ys)])
    sx = math.sqrt(mean([(a - mx) ** 2 for a in xs]))
    sy = math.sqrt(mean([(b - my) ** 2 for b in ys]))
    return cov / (sx * sy)


def srcc_naive(pred, obs):
    return pearson_naive(ranks_naive(pred), ranks_naive(obs))


def lcs_naive(a, b):
    """Longest common subsequence by memoized recursion."""
    from functools import lru_cache

    a, b = list(a), list(b)

    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + go(i + 1, j + 1)
        return max(go(i + 1, j), go(i, j + 1))

    return go(0, 0)


def levenshtein_naive(a, b):
    from functools import lru_cache

    a, b = list(a), list(b)

    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        sub = go(i + 1, j + 1) + (0 if a[i] == b[j] else 1)
        return min(sub, go(i + 1, j) + 1, go(i, j + 1) + 1)

    return go(0, 0)


def meanshift_naive(points, bandwidth, move_tol=1e-3, max_iter=300):
    """Fixed-point iteration per point, then first-come mode merging.
    Returns (centers, labels)."""
    pts = [(float(x), float(y)) for x, y in points]
    modes = []
    for x, y in pts:
        cx, cy = x, y
        for _ in range(max_iter):
            nx, ny, n = 0.0, 0.0, 0
            for px, py in pts:
                if math.hypot(px - cx, py - cy) <= bandwidth:
                    nx += px
                    ny += py
                    n += 1
            nx, ny = nx / n, ny / n
            moved = math.hypot(nx - cx, ny - cy)
            cx, cy = nx, ny
            if moved < move_tol:
                break
        modes.append((cx, cy))
    centers = []
    labels = []
    for cx, cy in modes:
        for k, (ox, oy) in enumerate(centers):
            if math.hypot(cx - ox, cy - oy) < bandwidth / 2.0:
                labels.append(k)
                break
        else:
            labels.append(len(centers))
            centers.append((cx, cy))
    return centers, labels


def conv2d_naive(x, w, stride=1, pad=0):
    """Quadruple-loop 2D convolution (cross-correlation), NHWC input
    (single image HWC here), weight (kh, kw, cin, cout)."""
    H = len(x)
    W = len(x[0])
    C = len(x[0][0])
    kh = len(w)
    kw = len(w[0])
    cout = len(w[0][0][0])
    oh = (H + 2 * pad - kh) // stride + 1
    ow = (W + 2 * pad - kw) // stride + 1
    out = [[[0.0] * cout for _ in range(ow)] for _ in range(oh)]
    for oy in range(oh):
        for ox in range(ow):
            for co in range(cout):
                acc = 0.0
                for ky in range(kh):
                    for kx in range(kw):
                        iy = oy * stride + ky - pad
                        ix = ox * stride + kx - pad
                        if 0 <= iy < H and 0 <= ix < W:
                            for ci in range(C):
                                acc += x[iy][ix][ci] * w[ky][kx][ci][co]
                out[oy][ox][co] = acc
    return out


def conv2d_transpose_naive(x, w, stride=2, pad=0):
    """Scatter form of the transposed convolution: every input pixel
    adds its kernel-weighted value into the (padded) output. Weight is
    (kh, kw, cout, cin)."""
    H = len(x)
    W = len(x[0])
    cin = len(x[0][0])
    kh = len(w)
    kw = len(w[0])
    cout = len(w[0][0])
    oh = (H - 1) * stride + kh - 2 * pad
    ow = (W - 1) * stride + kw - 2 * pad
    out = [[[0.0] * cout for _ in range(ow)] for _ in range(oh)]
    for iy in range(H):
        for ix in range(W):
            for ky in range(kh):
                for kx in range(kw):
                    oy = iy * stride + ky - pad
                    ox = ix * stride + kx - pad
                    if 0 <= oy < oh and 0 <= ox < ow:
                        for co in range(cout):
                            for ci in range(cin):
                                out[oy][ox][co] += x[iy][ix][ci] * w[ky][kx][co][ci]
    return out
