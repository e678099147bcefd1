"""Kernel PCA with a polynomial kernel, via centered-kernel eigendecomposition.

The symmetric eigenproblem is solved with cyclic Jacobi rotations, which is
exact enough at desk scale (a few thousand rows) and has no external solver
dependency. Stored eigenvectors are scaled so projections are simply
``centered_kernel_rows @ alphas``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class KpcaError(Exception):
    pass


@dataclass(frozen=True)
class KernelConfig:
    degree: int = 3
    gamma: float | None = None  # None resolves to 1/d at fit time
    coef0: float = 1.0
    target_dim: int = 2

    def __post_init__(self):
        if self.degree < 1:
            raise KpcaError("degree must be >= 1")
        if self.gamma is not None and self.gamma <= 0:
            raise KpcaError("gamma must be > 0")
        if self.target_dim < 1:
            raise KpcaError("target_dim must be >= 1")

    def resolve_gamma(self, dim: int) -> float:
        return self.gamma if self.gamma is not None else 1.0 / dim


@dataclass(frozen=True)
class KpcaModel:
    train_rows: np.ndarray  # (m, d)
    row_means: np.ndarray  # (m,) column means of the uncentered training kernel
    grand_mean: float
    eigenvalues: np.ndarray  # (p,) descending, strictly positive
    alphas: np.ndarray  # (m, p) eigenvectors scaled to squared norm 1/eigenvalue
    config: KernelConfig
    gamma: float

    @property
    def dim(self) -> int:
        return self.train_rows.shape[1]


def poly_kernel(a: np.ndarray, b: np.ndarray, cfg: KernelConfig) -> float:
    """(gamma * <a,b> + coef0) ** degree."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise KpcaError("poly_kernel expects two equal-length vectors")
    gamma = cfg.resolve_gamma(a.shape[0])
    return float((gamma * np.dot(a, b) + cfg.coef0) ** cfg.degree)


def _kernel_matrix(a: np.ndarray, b: np.ndarray, cfg: KernelConfig, gamma: float) -> np.ndarray:
    return (gamma * (a @ b.T) + cfg.coef0) ** cfg.degree


def center_kernel(k: np.ndarray) -> np.ndarray:
    """Double centering: K' = K - 1K - K1 + 1K1 with 1 = ones/m."""
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise KpcaError("center_kernel expects a square matrix")
    col_means = k.mean(axis=0)
    row_means = k.mean(axis=1)
    grand = k.mean()
    return k - col_means[None, :] - row_means[:, None] + grand


def jacobi_eigh(
    a: np.ndarray, tol: float = 1e-9, max_sweeps: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues, eigenvectors) with columns as eigenvectors, unsorted.
    Sweeps stop when the off-diagonal Frobenius norm falls below tol (or below
    the matrix's floating-point noise floor for badly scaled inputs).
    """
    a = np.array(a, dtype=np.float64)
    m = a.shape[0]
    if m == 1:
        return a[0].copy(), np.ones((1, 1))
    v = np.eye(m)
    scale = np.linalg.norm(a, "fro")
    floor = max(tol, scale * 1e-13)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= floor:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p, q]
                if abs(apq) <= 1e-30:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J for the rotation J in the (p,q) plane
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v


def fit(rows: np.ndarray, cfg: KernelConfig) -> KpcaModel:
    """Fit on an m x d matrix; keeps the top target_dim positive eigenpairs."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise KpcaError("fit expects an m x d matrix")
    m = rows.shape[0]
    p = cfg.target_dim
    if m < p + 1:
        raise KpcaError(f"need at least {p + 1} rows to extract {p} components")
    gamma = cfg.resolve_gamma(rows.shape[1])
    k = _kernel_matrix(rows, rows, cfg, gamma)
    kc = center_kernel(k)
    vals, vecs = jacobi_eigh(kc)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    positive_floor = max(vals[0], 0.0) * 1e-10 + 1e-12
    n_pos = int(np.sum(vals > positive_floor))
    if n_pos < p:
        raise KpcaError(
            f"only {n_pos} positive eigenvalues; data too degenerate for {p} components"
        )
    vals = vals[:p]
    vecs = vecs[:, :p]
    # fix the arbitrary eigenvector sign: largest-magnitude component positive
    for j in range(p):
        i_star = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[i_star, j] < 0:
            vecs[:, j] = -vecs[:, j]
    alphas = vecs / np.sqrt(vals)[None, :]
    return KpcaModel(
        train_rows=rows.copy(),
        row_means=k.mean(axis=0),
        grand_mean=float(k.mean()),
        eigenvalues=vals,
        alphas=alphas,
        config=cfg,
        gamma=gamma,
    )


def transform(model: KpcaModel, rows: np.ndarray) -> np.ndarray:
    """Project a q x d matrix with the stored centering statistics."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.shape[1] != model.dim:
        raise KpcaError(f"dim mismatch: rows {rows.shape[1]}, model {model.dim}")
    k = _kernel_matrix(rows, model.train_rows, model.config, model.gamma)
    centered = (
        k
        - k.mean(axis=1, keepdims=True)
        - model.row_means[None, :]
        + model.grand_mean
    )
    return centered @ model.alphas


def write_projections(path: str | Path, projections: np.ndarray) -> None:
    """CSV dump: row_index,pc1,pc2[,...]."""
    projections = np.atleast_2d(np.asarray(projections))
    header = "row_index," + ",".join(f"pc{j + 1}" for j in range(projections.shape[1]))
    lines = [header]
    for i, row in enumerate(projections):
        lines.append(f"{i}," + ",".join(f"{x:.9g}" for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
