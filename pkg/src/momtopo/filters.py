"""Density filter, tanh projection, thresholding and sensitivity chain rule."""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.sparse as sp

from .mesh import TriMesh, neighborhoods


@dataclasses.dataclass(frozen=True)
class ProjectionSpec:
    beta: float = 1.0
    eta: float = 0.5

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")


@dataclasses.dataclass(frozen=True, eq=False)
class DensityFilter:
    """Row-stochastic hat-weight convolution over centroid neighborhoods.

    Attributes:
      Rmin: filter radius in meters.
      weights: sparse (T, T) CSR matrix W with rho_tilde = W @ rho.
    """

    Rmin: float
    weights: sp.csr_matrix

    @property
    def T(self) -> int:
        return self.weights.shape[0]


def build_density_filter(mesh: TriMesh, Rmin: float) -> DensityFilter:
    """Hat weights (Rmin - |r_t - r_j|) normalized per row.

    Rows whose neighborhood holds only the triangle itself (including
    ``Rmin == 0``) become identity rows. A neighbour sitting exactly at
    distance Rmin has zero weight and is left out of the sparsity pattern.
    """
    if not Rmin >= 0:
        raise ValueError("Rmin must be non-negative")
    T = mesh.num_triangles
    hoods = neighborhoods(mesh, Rmin)
    rows, cols, vals = [], [], []
    c = mesh.centroids
    for t, nb in enumerate(hoods):
        nb = np.asarray(nb)
        w = Rmin - np.linalg.norm(c[nb] - c[t], axis=1)
        w = np.clip(w, 0.0, None)
        if Rmin == 0 or w.sum() <= 0:
            nb, w = np.array([t]), np.array([1.0])
        keep = w > 0
        nb, w = nb[keep], w[keep]
        rows.append(np.full(len(nb), t))
        cols.append(nb)
        vals.append(w / w.sum())
    W = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(T, T))
    W.sort_indices()
    return DensityFilter(float(Rmin), W)


def apply_density(filt: DensityFilter, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (filt.T,):
        raise ValueError(f"expected {filt.T} densities, got shape {rho.shape}")
    return filt.weights @ rho


def project(rho_tilde, spec: ProjectionSpec) -> np.ndarray:
    """Smoothed Heaviside with sharpness ``beta`` and level ``eta``."""
    b, e = spec.beta, spec.eta
    rho_tilde = np.asarray(rho_tilde, dtype=float)
    den = np.tanh(b * e) + np.tanh(b * (1 - e))
    return (np.tanh(b * e) + np.tanh(b * (rho_tilde - e))) / den


def project_derivative(rho_tilde, spec: ProjectionSpec) -> np.ndarray:
    b, e = spec.beta, spec.eta
    rho_tilde = np.asarray(rho_tilde, dtype=float)
    den = np.tanh(b * e) + np.tanh(b * (1 - e))
    return b * (1 - np.tanh(b * (rho_tilde - e)) ** 2) / den


def hard_threshold(rho_bar, fixed_mask=None, fixed_values=None) -> np.ndarray:
    """0/1 design with rho_bar >= 0.5 counted as metal; pinned entries restored."""
    out = (np.asarray(rho_bar, dtype=float) >= 0.5).astype(float)
    if fixed_mask is not None:
        fixed_mask = np.asarray(fixed_mask, dtype=bool)
        out[fixed_mask] = 1.0 if fixed_values is None else np.asarray(fixed_values, dtype=float)[fixed_mask]
    return out


@dataclasses.dataclass
class DesignField:
    """Design, filtered and projected densities with a pinned-triangle mask.

    Pinned triangles keep ``fixed_values`` in all three fields; they still
    feed their design value into the filtered density of their neighbours.
    """

    rho: np.ndarray
    fixed_mask: np.ndarray
    fixed_values: np.ndarray
    rho_tilde: np.ndarray = None
    rho_bar: np.ndarray = None

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float).copy()
        self.fixed_mask = np.asarray(self.fixed_mask, dtype=bool)
        self.fixed_values = np.asarray(self.fixed_values, dtype=float)
        if not (self.rho.shape == self.fixed_mask.shape == self.fixed_values.shape):
            raise ValueError("rho, fixed_mask and fixed_values must have equal length")
        self.rho[self.fixed_mask] = self.fixed_values[self.fixed_mask]
        if np.any(self.rho < 0) or np.any(self.rho > 1):
            raise ValueError("densities must lie in [0, 1]")

    @property
    def T(self) -> int:
        return len(self.rho)

    def update(self, filt: DensityFilter, spec: ProjectionSpec) -> "DesignField":
        """Recompute rho_tilde and rho_bar from rho in place."""
        rt = np.clip(apply_density(filt, self.rho), 0.0, 1.0)
        rt[self.fixed_mask] = self.fixed_values[self.fixed_mask]
        rb = np.clip(project(rt, spec), 0.0, 1.0)
        rb[self.fixed_mask] = self.fixed_values[self.fixed_mask]
        self.rho_tilde, self.rho_bar = rt, rb
        return self

    def thresholded(self) -> np.ndarray:
        return hard_threshold(self.rho_bar, self.fixed_mask, self.fixed_values)


def backpropagate(dQ_drho_bar, filt: DensityFilter, rho_tilde, spec: ProjectionSpec,
                  fixed_mask=None) -> np.ndarray:
    """dQ/drho = W^T (dQ/drho_bar * d rho_bar / d rho_tilde), pinned entries zeroed.

    Pinned triangles have constant filtered and projected values, so their
    rows of the chain are cut before the filter transpose is applied.
    """
    g = np.asarray(dQ_drho_bar, dtype=float) * project_derivative(rho_tilde, spec)
    if g.shape != (filt.T,):
        raise ValueError(f"expected {filt.T} entries, got shape {g.shape}")
    if fixed_mask is not None:
        fixed_mask = np.asarray(fixed_mask, dtype=bool)
        g = np.where(fixed_mask, 0.0, g)
    out = filt.weights.T @ g
    if fixed_mask is not None:
        out[fixed_mask] = 0.0
    return out
