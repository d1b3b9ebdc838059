"""Independent oracles and gradient-check utilities shared by the tests.

Everything here recomputes expected values from first principles (explicit
sums, full sorts, exhaustive sweeps) so the tests stay independent of the
implementation paths they check.
"""

from __future__ import annotations

import numpy as np

from microface import tensor as T
from microface.tensor import Tensor

FD_EPS = 1e-5


def finite_diff(value_fn, x: np.ndarray, eps: float = FD_EPS) -> np.ndarray:
    """Central finite differences of a scalar function w.r.t. every entry of x.

    Mutates x in place during probing and restores it.
    """
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = value_fn()
        flat[i] = orig - eps
        fm = value_fn()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def grad_check(build, leaves, rtol: float = 1e-4, atol: float = 1e-8, eps: float = FD_EPS) -> float:
    """Compare backward() gradients of ``build()`` against finite differences.

    ``build`` must reconstruct the loss from the same leaf tensors each call.
    Returns the worst relative error for reporting.
    """
    for leaf in leaves:
        leaf.grad = None
    loss = build()
    T.backward(loss)

    def value():
        with T.no_grad():
            return build().item()

    worst = 0.0
    for leaf in leaves:
        numeric = finite_diff(value, leaf.data, eps)
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        err = np.abs(analytic - numeric)
        tol = atol + rtol * np.maximum(np.abs(analytic), np.abs(numeric))
        assert (err <= tol).all(), (
            f"gradient mismatch on leaf {leaf.op!r}: max abs err {err.max():.3e}, "
            f"analytic {analytic.reshape(-1)[err.argmax()]:.6e} vs numeric {numeric.reshape(-1)[err.argmax()]:.6e}"
        )
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        worst = max(worst, float((err / denom).max()))
    return worst


def op_grad_cases() -> list[tuple[str, object, list[Tensor]]]:
    """One finite-difference case per differentiable operation.

    Each case is (name, build_loss, leaves); losses are fixed-weight sums so
    every output coordinate influences the scalar.
    """
    rng = np.random.default_rng(42)

    def leaf(shape, lo=-1.0, hi=1.0, name="leaf"):
        return Tensor(rng.uniform(lo, hi, shape), requires_grad=True, op=name)

    def away_from_zero(shape):
        mag = rng.uniform(0.2, 1.0, shape)
        sign = np.where(rng.uniform(size=shape) < 0.5, -1.0, 1.0)
        return Tensor(mag * sign, requires_grad=True, op="leaf")

    def wsum(t, salt=0):
        w = np.random.default_rng(1000 + salt).uniform(0.5, 1.5, t.shape)
        return T.tensor_sum(T.mul(t, w))

    cases: list[tuple[str, object, list[Tensor]]] = []

    a, b = leaf((3, 4)), leaf((3, 4))
    cases.append(("add", lambda a=a, b=b: wsum(T.add(a, b)), [a, b]))
    row = leaf((4,))
    cases.append(("add_broadcast", lambda a=a, row=row: wsum(T.add(a, row), 1), [a, row]))
    c, d = leaf((2, 5)), leaf((2, 5))
    cases.append(("sub", lambda c=c, d=d: wsum(T.sub(c, d), 2), [c, d]))
    cases.append(("mul", lambda c=c, d=d: wsum(T.mul(c, d), 3), [c, d]))
    col = leaf((2, 1))
    cases.append(("mul_broadcast", lambda c=c, col=col: wsum(T.mul(c, col), 4), [c, col]))
    num, den = leaf((3, 3)), away_from_zero((3, 3))
    cases.append(("div", lambda num=num, den=den: wsum(T.div(num, den), 5), [num, den]))
    e = leaf((6,))
    cases.append(("neg", lambda e=e: wsum(T.neg(e), 6), [e]))
    cases.append(("scale", lambda e=e: wsum(T.scale(e, 2.5), 7), [e]))
    pos = leaf((5,), lo=0.3, hi=2.0)
    cases.append(("power", lambda pos=pos: wsum(T.power(pos, 1.7), 8), [pos]))
    cases.append(("exp", lambda e=e: wsum(T.exp(e), 9), [e]))
    cases.append(("log", lambda pos=pos: wsum(T.log(pos), 10), [pos]))
    cases.append(("sqrt", lambda pos=pos: wsum(T.sqrt(pos), 11), [pos]))
    f = leaf((4, 3))
    cases.append(("sigmoid", lambda f=f: wsum(T.sigmoid(f), 12), [f]))
    g_relu = away_from_zero((4, 4))
    cases.append(("relu", lambda g=g_relu: wsum(T.relu(g), 13), [g_relu]))
    cases.append(("gelu", lambda f=f: wsum(T.gelu(f), 14), [f]))
    cases.append(("cos", lambda f=f: wsum(T.cos(f), 15), [f]))
    inner = leaf((6,), lo=-0.9, hi=0.9)
    cases.append(("arccos", lambda inner=inner: wsum(T.arccos(inner), 16), [inner]))
    cases.append(("clip_interior", lambda f=f: wsum(T.clip(f, -2.0, 2.0), 17), [f]))
    m1, m2 = leaf((3, 4)), leaf((4, 2))
    cases.append(("matmul", lambda m1=m1, m2=m2: wsum(T.matmul(m1, m2), 18), [m1, m2]))
    b1, b2 = leaf((2, 3, 4)), leaf((2, 4, 2))
    cases.append(("matmul_batched", lambda b1=b1, b2=b2: wsum(T.matmul(b1, b2), 19), [b1, b2]))
    h = leaf((2, 3, 4))
    cases.append(("transpose", lambda h=h: wsum(T.transpose(h, (1, 2, 0)), 20), [h]))
    cases.append(("reshape", lambda h=h: wsum(T.reshape(h, (6, 4)), 21), [h]))
    p1, p2 = leaf((2, 3)), leaf((4, 3))
    cases.append(("concat", lambda p1=p1, p2=p2: wsum(T.concat([p1, p2], axis=0), 22), [p1, p2]))
    s = leaf((5, 4))
    cases.append(("take_slice", lambda s=s: wsum(s[1:4, ::2], 23), [s]))
    cases.append(("take_int", lambda s=s: wsum(s[2], 24), [s]))
    cases.append(("sum_axis", lambda s=s: wsum(T.tensor_sum(s, axis=0), 25), [s]))
    cases.append(("sum_keepdims", lambda s=s: wsum(T.tensor_sum(s, axis=1, keepdims=True), 26), [s]))
    cases.append(("mean_axis", lambda s=s: wsum(T.tensor_mean(s, axis=-1), 27), [s]))
    cases.append(("mean_all", lambda s=s: T.tensor_mean(s), [s]))
    sm = leaf((3, 5))
    cases.append(("softmax", lambda sm=sm: wsum(T.softmax(sm, axis=-1), 28), [sm]))
    ln_x, ln_g, ln_b = leaf((3, 6)), leaf((6,), 0.5, 1.5), leaf((6,))
    cases.append(
        ("layernorm", lambda x=ln_x, g=ln_g, b=ln_b: wsum(T.layernorm(x, g, b), 29), [ln_x, ln_g, ln_b])
    )
    mv = leaf((4, 5))
    cases.append(
        (
            "reduce_mean_var",
            lambda mv=mv: T.add(wsum(T.reduce_mean_var(mv)[0], 30), wsum(T.reduce_mean_var(mv)[1], 31)),
            [mv],
        )
    )
    q, k, v = leaf((2, 3, 4)), leaf((2, 3, 4)), leaf((2, 3, 4))
    cases.append(
        (
            "scaled_dot_product_attention",
            lambda q=q, k=k, v=v: wsum(T.scaled_dot_product_attention(q, k, v)[0], 32),
            [q, k, v],
        )
    )
    vec, wmat = leaf((6,)), leaf((6, 3))
    cases.append(
        ("cosine_to_columns", lambda vec=vec, wmat=wmat: wsum(T.cosine_to_columns(vec, wmat), 33), [vec, wmat])
    )
    return cases


# -- Fourier oracle ---------------------------------------------------------


def naive_dft2(x: np.ndarray) -> np.ndarray:
    """Definitional O(N^4) double sum, one output bin at a time."""
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape
    hh = np.arange(h).reshape(-1, 1)
    ww = np.arange(w).reshape(1, -1)
    out = np.empty((h, w), dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            phase = np.exp(-2j * np.pi * (hh * u / h + ww * v / w))
            out[u, v] = (x * phase).sum()
    return out


def conjugate_mirror(spec_values: np.ndarray) -> np.ndarray:
    """conj(S((H-u) mod H, (W-v) mod W)) for every bin."""
    h, w = spec_values.shape
    mirrored = spec_values[(-np.arange(h)) % h][:, (-np.arange(w)) % w]
    return np.conj(mirrored)


# -- sorting / threshold oracles ---------------------------------------------


def topk_sort_oracle(scores: np.ndarray, k: int) -> np.ndarray:
    """Full sort by (-score, index); first k indices, ascending."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return np.array(sorted(order[:k]), dtype=int)


def tar_at_far_oracle(genuine, impostor, far: float) -> tuple[float, bool]:
    """Exhaustive sweep: smallest threshold t with FAR(t) <= far, tar = frac >= t."""
    gen = np.asarray(genuine, dtype=np.float64)
    imp = np.asarray(impostor, dtype=np.float64)
    values = np.unique(np.concatenate([gen, imp]))
    candidates = np.concatenate([[-np.inf], values, np.nextafter(values, np.inf)])
    feasible = [t for t in candidates if (imp >= t).mean() <= far]
    t = min(feasible)
    return float((gen >= t).mean()), far < 1.0 / imp.size
