"""Shared test utilities."""

import torch


def directional_fd_check(fn, params, n_dirs=3, eps=1e-6, seed=0):
    """Worst relative error between autograd and central differences.

    ``fn()`` must return a scalar and depend on ``params`` (float64 tensors
    with ``requires_grad``). Each random direction ``v`` compares
    ``grad . v`` with ``(f(p + eps v) - f(p - eps v)) / (2 eps)``.
    """
    g = torch.Generator().manual_seed(seed)
    params = list(params)
    for p in params:
        p.grad = None
    fn().backward()
    grads = [p.grad.clone() for p in params]
    worst = 0.0
    for _ in range(n_dirs):
        dirs = [torch.randn(p.shape, generator=g, dtype=p.dtype) for p in params]
        analytic = sum(float((gr * v).sum()) for gr, v in zip(grads, dirs))
        with torch.no_grad():
            for p, v in zip(params, dirs):
                p.add_(eps * v)
            plus = float(fn())
            for p, v in zip(params, dirs):
                p.sub_(2 * eps * v)
            minus = float(fn())
            for p, v in zip(params, dirs):
                p.add_(eps * v)
        numeric = (plus - minus) / (2 * eps)
        worst = max(worst, abs(analytic - numeric) / max(abs(numeric), abs(analytic), 1e-12))
    return worst
