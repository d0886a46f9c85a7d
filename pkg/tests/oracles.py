"""Brute-force reference computations used by the replay and acceptance tests."""

import numpy as np


def nstep_returns(rewards, dones, n, gamma):
    """For every t: discounted sum of up to n rewards, the bootstrap horizon and the done flag."""
    out = []
    T = len(rewards)
    for t in range(T):
        total, k = 0.0, 0
        while k < n and t + k < T:
            total += gamma**k * rewards[t + k]
            k += 1
            if dones[t + k - 1]:
                break
        out.append((total, k, bool(dones[t + k - 1])))
    return out


def per_distribution(td, alpha, eps):
    p = (np.abs(np.asarray(td, dtype=float)) + eps) ** alpha
    return p / p.sum()


def assert_grads_match(module, loss_fn, max_params=60, h=1e-6, rtol=1e-3):
    """Compare autograd gradients of ``loss_fn`` with central differences.

    Every entry of small parameter tensors is checked; for larger ones a
    random subset of ``max_params`` entries is.
    """
    import torch

    module.zero_grad()
    loss_fn().backward()
    for p in module.parameters():
        analytic = p.grad.reshape(-1)
        flat = p.data.view(-1)
        idx = range(flat.numel()) if flat.numel() <= max_params else torch.randperm(flat.numel())[:max_params].tolist()
        for i in idx:
            old = flat[i].item()
            with torch.no_grad():
                flat[i] = old + h
                up = loss_fn().item()
                flat[i] = old - h
                down = loss_fn().item()
                flat[i] = old
            numeric = (up - down) / (2 * h)
            assert abs(numeric - analytic[i].item()) <= rtol * max(1.0, abs(numeric)), (
                f"{tuple(p.shape)}[{i}]: numeric {numeric} vs autograd {analytic[i].item()}"
            )
