"""Independent reference implementations used as test oracles."""
import numpy as np


def rot_z(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def hooke_sum(x, edges):
    """Brute-force spring force sum: edges as (i, j, k, r) rows."""
    f = np.zeros_like(x)
    for i, j, k, r in edges:
        i, j = int(i), int(j)
        d = x[j] - x[i]
        n = np.sqrt(d @ d)
        fi = k * (n - r) * d / n
        f[i] += fi
        f[j] -= fi
    return f


def nearest_scan(x, pts):
    out = []
    for p in x:
        best, bi = np.inf, -1
        for q_i, q in enumerate(pts):
            d = np.sqrt(np.sum((p - q) ** 2))
            if d < best:
                best, bi = d, q_i
        out.append(pts[bi])
    return np.array(out)


def chamfer_scan(a, b):
    def one_way(p, q):
        return np.mean([min(np.sqrt(np.sum((u - v) ** 2)) for v in q) for u in p])
    return one_way(a, b) + one_way(b, a)


def fd_gradient(f, w, h=1e-5):
    g = np.zeros_like(w)
    for i in range(w.size):
        up, dn = w.copy(), w.copy()
        up.flat[i] += h
        dn.flat[i] -= h
        g.flat[i] = (f(up) - f(dn)) / (2 * h)
    return g


def canonical_reference(x, s, e, ground=0.0):
    """Push-frame features one particle at a time via an explicit rotation matrix."""
    d = np.asarray(e, float) - np.asarray(s, float)
    mag = np.sqrt(d @ d)
    c, sn = d / mag  # cos and sin of the push heading
    inv = np.array([[c, sn], [-sn, c]])
    rows = []
    for p in np.asarray(x, float):
        uv = inv @ (p[:2] - np.asarray(e, float))
        rows.append([uv[0], uv[1], p[2] - ground, mag])
    return np.array(rows)
