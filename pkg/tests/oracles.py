"""Reference implementations in plain Python loops.

Nothing here imports the numpy code paths under test; inputs are converted
to nested lists first.
"""

import itertools
import math


def tolist(m):
    return [list(map(float, row)) for row in m]


def naive_matmul(a, b):
    a, b = tolist(a), tolist(b)
    n, k, m = len(a), len(b), len(b[0])
    out = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i][t] * b[t][j]
            out[i][j] = s
    return out


def naive_rope_row(vec, pos, base):
    vec = list(map(float, vec))
    w = len(vec)
    out = [0.0] * w
    for i in range(w // 2):
        theta = pos * base ** (-(2 * i) / w)
        c, s = math.cos(theta), math.sin(theta)
        x0, x1 = vec[2 * i], vec[2 * i + 1]
        out[2 * i] = x0 * c - x1 * s
        out[2 * i + 1] = x0 * s + x1 * c
    return out


def naive_scores(h_t, h_v, wq_heads, wk_heads, d_k):
    """c[i][k] = mean_j sum_e (h_t[j] W_q^i)[e] (h_v[k] W_k^i)[e] / sqrt(d_k)."""
    h_t, h_v = tolist(h_t), tolist(h_v)
    n, m, d = len(h_t), len(h_v), len(h_t[0])
    out = []
    for wq, wk in zip(wq_heads, wk_heads):
        wq, wk = tolist(wq), tolist(wk)
        row = []
        for k in range(m):
            key = [sum(h_v[k][r] * wk[r][e] for r in range(d)) for e in range(d_k)]
            total = 0.0
            for j in range(n):
                query = [sum(h_t[j][r] * wq[r][e] for r in range(d)) for e in range(d_k)]
                total += sum(query[e] * key[e] for e in range(d_k)) / math.sqrt(d_k)
            row.append(total / n)
        out.append(row)
    return out


def naive_importance(c, w):
    return [sum(w[i] * c[i][k] for i in range(len(w))) for k in range(len(c[0]))]


def naive_top_k(v, k):
    """Sort (value desc, index asc), slice, return sorted indices."""
    ranked = sorted(range(len(v)), key=lambda i: (-v[i], i))
    return sorted(ranked[:k])


def naive_head_weights(base, scores):
    """Shifted drops, L1-normalized per dataset, averaged; all-zero column -> uniform."""
    n_h, n_d = len(scores), len(base)
    w = [0.0] * n_h
    for j in range(n_d):
        drop = [base[j] - scores[i][j] for i in range(n_h)]
        lo = min(drop)
        shifted = [x - lo for x in drop]
        tot = sum(shifted)
        for i in range(n_h):
            w[i] += (shifted[i] / tot if tot != 0 else 1.0 / n_h) / n_d
    return w


def kl(p, q, eps=1e-12):
    return sum(pi * math.log(max(pi, eps) / max(qi, eps)) for pi, qi in zip(p, q))


def best_max_min_pairs(x):
    """All index pairs achieving the largest cosine distance, by enumeration."""
    x = tolist(x)

    def cosd(a, b):
        na = math.sqrt(sum(t * t for t in a))
        nb = math.sqrt(sum(t * t for t in b))
        return 1.0 - sum(s * t for s, t in zip(a, b)) / (na * nb)

    pairs = {pair: cosd(x[pair[0]], x[pair[1]]) for pair in itertools.combinations(range(len(x)), 2)}
    best = max(pairs.values())
    return [p for p, v in pairs.items() if abs(v - best) < 1e-12]


def hypergeom_keep_prob(m, k):
    """Probability a fixed item survives a uniform k-of-m sample."""
    return math.comb(m - 1, k - 1) / math.comb(m, k)
