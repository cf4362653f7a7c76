"""Independent reference computations used only by the tests."""

from fractions import Fraction


def gauss_jordan_inverse(a):
    """Inverse of a small square matrix by Gauss-Jordan elimination in exact rationals."""
    n = len(a)
    m = [[Fraction(float(a[i][j])) for j in range(n)] + [Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(m[r][col]))
        m[col], m[piv] = m[piv], m[col]
        p = m[col][col]
        m[col] = [v / p for v in m[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                m[r] = [vr - f * vc for vr, vc in zip(m[r], m[col])]
    return [[float(v) for v in row[n:]] for row in m]


def ridge_closed_form(O, Y, alpha):
    """``Y O^T (O O^T + alpha I)^-1`` with plain Python loops and an explicit inverse."""
    d, n = len(O), len(O[0])
    gram = [[sum(O[i][t] * O[j][t] for t in range(n)) + (alpha if i == j else 0.0) for j in range(d)] for i in range(d)]
    inv = gauss_jordan_inverse(gram)
    yo = [sum(Y[t] * O[i][t] for t in range(n)) for i in range(d)]
    return [sum(yo[i] * inv[i][j] for i in range(d)) for j in range(d)]


def brute_features(x, k, s):
    """Feature columns for a list-of-lists input, by explicit enumeration."""
    m, T = len(x), len(x[0])
    cols = []
    for n in range(k * s, T):
        lin = [x[c][n - j * s] for j in range(k + 1) for c in range(m)]
        quad = [lin[i] * lin[j] for i in range(len(lin)) for j in range(i, len(lin))]
        cols.append([1.0] + lin + quad)
    return cols
