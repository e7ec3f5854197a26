"""Direct evaluation, sampled error metric and direct-time estimation."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .geometry import PointSet

__all__ = ["ErrorReport", "direct_transform", "estimate_error", "sample_indices", "estimate_direct_time"]

DEFAULT_SAMPLE = 200
DEFAULT_SEED = 20071201


def _pts(ps):
    return ps.points if isinstance(ps, PointSet) else np.atleast_2d(np.asarray(ps, float))


def direct_transform(sources, charges, targets, N, *, block: int = 256) -> np.ndarray:
    """``u_i = sum_j exp(2 pi i x_i . k_j / N) f_j`` by direct summation.

    Targets are processed in blocks; within a block each sum runs over the
    sources in index order.
    """
    k = _pts(sources)
    x = _pts(targets)
    if charges is None and isinstance(sources, PointSet):
        charges = sources.charges
    f = np.asarray(charges, dtype=complex).ravel()
    if f.size != k.shape[0]:
        raise ValueError(f"got {f.size} charges for {k.shape[0]} sources")
    if k.shape[1] != x.shape[1]:
        raise ValueError("sources and targets differ in dimension")
    out = np.empty(x.shape[0], dtype=complex)
    scale = 2 * np.pi / N
    for lo in range(0, x.shape[0], block):
        phase = (x[lo : lo + block] @ k.T) * scale
        out[lo : lo + block] = np.exp(1j * phase) @ f
    return out


@dataclass(frozen=True)
class ErrorReport:
    sample_indices: np.ndarray
    eps_a: float
    exact_values: np.ndarray
    approx_values: np.ndarray

    def as_dict(self) -> dict:
        return {"eps_a": self.eps_a, "sample_size": int(self.sample_indices.size)}


def estimate_error(exact, approx, sample_indices=None) -> ErrorReport:
    """Relative L2 mismatch ``||u - u_a|| / ||u||`` over the sample."""
    exact = np.asarray(exact, dtype=complex).ravel()
    approx = np.asarray(approx, dtype=complex).ravel()
    if exact.shape != approx.shape:
        raise ValueError("exact and approximate samples differ in length")
    denom = np.linalg.norm(exact)
    if denom == 0:
        raise ZeroDivisionError("exact potentials are all zero on the sample")
    if sample_indices is None:
        sample_indices = np.arange(exact.size)
    eps = float(np.linalg.norm(exact - approx) / denom)
    return ErrorReport(np.asarray(sample_indices), eps, exact, approx)


def sample_indices(n_targets: int, size: int = DEFAULT_SAMPLE, seed: int = DEFAULT_SEED) -> np.ndarray:
    """Sorted uniform sample without replacement, reproducible for a seed."""
    rng = np.random.default_rng(seed)
    size = min(size, n_targets)
    return np.sort(rng.choice(n_targets, size=size, replace=False))


def estimate_direct_time(sources, targets, N, probe_count: int = DEFAULT_SAMPLE, *, seed: int = DEFAULT_SEED, repeats: int = 3) -> float:
    """Seconds for a full direct evaluation, extrapolated from a target probe.

    Times ``direct_transform`` on ``probe_count`` random targets (median of
    ``repeats``) and scales by ``n_targets / probe_count``.
    """
    k = _pts(sources)
    x = _pts(targets)
    n_t = x.shape[0]
    if probe_count > n_t:
        raise ValueError("probe_count exceeds the number of targets")
    if probe_count <= 0:
        return 0.0
    probe = x[sample_indices(n_t, probe_count, seed)]
    f = np.ones(k.shape[0], dtype=complex)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        direct_transform(k, f, probe, N)
        times.append(time.perf_counter() - t0)
    return float(np.median(times)) * n_t / probe_count
