"""Shared test utilities: finite-difference gradient oracle and toy fixtures."""

from __future__ import annotations

import numpy as np
import torch


def finite_difference_check(loss_fn, params, h=1e-3, floor=1e-6):
    """Compare autograd against central differences on every coordinate.

    Returns the per-coordinate relative errors
    ``|g_a - g_n| / max(|g_a|, |g_n|, floor)``.
    """
    params = list(params)
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [p.grad.detach().clone() for p in params]
    errors = []
    with torch.no_grad():
        for p, g in zip(params, analytic):
            flat, gflat = p.view(-1), g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = loss_fn().item()
                flat[i] = orig - h
                down = loss_fn().item()
                flat[i] = orig
                numeric = (up - down) / (2 * h)
                a = gflat[i].item()
                errors.append(abs(a - numeric) / max(abs(a), abs(numeric), floor))
    return np.asarray(errors)


def randomize_(module, seed=0, std=0.3):
    """Replace every parameter with N(0, std) draws (better-conditioned checks)."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.copy_(torch.randn(p.shape, generator=gen, dtype=p.dtype) * std)
