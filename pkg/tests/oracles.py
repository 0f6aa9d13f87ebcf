"""Independent reference implementations used only by the test suite.

Everything here is deliberately naive (nested loops, fine-stepped marches,
64-bit arithmetic) and shares no code with the package's vectorized paths.
"""

from __future__ import annotations

import numpy as np


def conv2d_loops(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int, pad: int) -> np.ndarray:
    """Six-nested-loop cross-correlation, float64."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    cin, h, wd = x.shape
    cout, cin_w, kh, kw = w.shape
    assert cin == cin_w
    xp = np.zeros((cin, h + 2 * pad, wd + 2 * pad))
    xp[:, pad : pad + h, pad : pad + wd] = x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    y = np.zeros((cout, ho, wo))
    for co in range(cout):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0
                for ci in range(cin):
                    for ki in range(kh):
                        for kj in range(kw):
                            acc += xp[ci, i * stride + ki, j * stride + kj] * w[co, ci, ki, kj]
                y[co, i, j] = acc + b[co]
    return y


def matmul_loops(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Naive dense layer: y[i] = sum_j x[j] * w[j, i] + b[i], float64."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    din, dout = w.shape
    y = np.zeros(dout)
    for i in range(dout):
        acc = 0.0
        for j in range(din):
            acc += x[j] * w[j, i]
        y[i] = acc + b[i]
    return y


def numeric_grad(f, x: np.ndarray, eps: float = 1e-3) -> np.ndarray:
    """Central finite differences of scalar-valued f at x, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise relative error with an absolute floor near zero."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(a) + np.abs(n), 1e-4)
    return float(np.max(np.abs(a - n) / denom))


def softmax_xent_highprec(logits: np.ndarray, label: int):
    """Direct loss/grad evaluation at float64 via mpmath-free stable math."""
    z = np.asarray(logits, dtype=np.float64)
    zs = z - z.max()
    e = np.exp(zs)
    p = e / e.sum()
    loss = -np.log(p[label])
    grad = p.copy()
    grad[label] -= 1.0
    return float(loss), grad


def ray_march(plan, x: float, y: float, angle: float, step: float = 2.5e-4,
              max_dist: float = 64.0) -> float:
    """Fine-stepped ray march through the occupancy grid, vectorized per ray."""
    from corridorpilot.world import CELL_SIZE

    ts = np.arange(step, max_dist, step)
    px = x + np.cos(angle) * ts
    py = y + np.sin(angle) * ts
    rows = np.floor(py / CELL_SIZE).astype(np.int64)
    cols = np.floor(px / CELL_SIZE).astype(np.int64)
    nr, nc = plan.cells.shape
    inside = (rows >= 0) & (rows < nr) & (cols >= 0) & (cols < nc)
    hit = np.zeros(ts.shape, dtype=bool)
    hit[inside] = plan.cells[rows[inside], cols[inside]] > 0
    hit |= ~inside
    idx = int(np.argmax(hit))
    return float(ts[idx])


def flood_fill_free(cells: np.ndarray, start_rc: tuple[int, int]) -> np.ndarray:
    """4-connected reachability of free cells from start; bool grid."""
    nr, nc = cells.shape
    seen = np.zeros((nr, nc), dtype=bool)
    stack = [start_rc]
    while stack:
        r, c = stack.pop()
        if not (0 <= r < nr and 0 <= c < nc):
            continue
        if seen[r, c] or cells[r, c] > 0:
            continue
        seen[r, c] = True
        stack.extend([(r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)])
    return seen
