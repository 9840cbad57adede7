"""Subspace Hamiltonian construction and ground-state eigensolvers.

Matrices over determinant spaces are stored as lower-triangle sparse triples.
Small problems go through a dense solver; larger ones use a Davidson
iteration with a diagonal preconditioner, either on the stored sparse matrix
or on a caller-supplied matrix-free sigma operator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np
import scipy.linalg
import scipy.sparse

from .determinants import (
    Determinant,
    DeterminantSpace,
    double_excitations,
    full_sector_space,
    hf_reference,
    single_excitations,
    slater_condon_element,
)
from .integrals import IntegralSet

DENSE_DIMENSION_LIMIT = 2000


class DavidsonConvergenceError(RuntimeError):
    """Davidson failed to reach the residual tolerance; carries the best residual."""

    def __init__(self, message: str, best_residual: float):
        super().__init__(message)
        self.best_residual = best_residual


class SectorBudgetError(RuntimeError):
    """Requested full-CI sector exceeds the configured dimension budget."""


@dataclass(frozen=True)
class SparseSymmetricMatrix:
    """Lower triangle of a real symmetric matrix as (row, col, value) triples.

    The diagonal is always stored in full, explicit zeros included.
    """

    dim: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        values = np.asarray(self.values, dtype=float)
        if not (len(rows) == len(cols) == len(values)):
            raise ValueError("triple arrays must have equal length")
        if np.any(cols > rows):
            raise ValueError("only the lower triangle may be stored")
        if not np.all(np.isfinite(values)):
            raise ValueError("matrix values must be finite")
        for arr in (rows, cols, values):
            arr.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", values)

    def diagonal(self) -> np.ndarray:
        diag = np.zeros(self.dim)
        on_diag = self.rows == self.cols
        diag[self.rows[on_diag]] = self.values[on_diag]
        return diag

    def to_dense(self) -> np.ndarray:
        full = np.zeros((self.dim, self.dim))
        full[self.rows, self.cols] = self.values
        off = self.rows != self.cols
        full[self.cols[off], self.rows[off]] = self.values[off]
        return full

    def to_csr(self) -> scipy.sparse.csr_matrix:
        off = self.rows != self.cols
        rows = np.concatenate([self.rows, self.cols[off]])
        cols = np.concatenate([self.cols, self.rows[off]])
        vals = np.concatenate([self.values, self.values[off]])
        return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.to_csr() @ x

    def write_coordinate_text(self, path) -> None:
        """Dump `dim` then `i j value` lines (0-based) for external checks."""
        lines = [str(self.dim)]
        lines += [f"{i} {j} {v:.17g}" for i, j, v in zip(self.rows, self.cols, self.values)]
        from pathlib import Path

        Path(path).write_text("\n".join(lines) + "\n")


class SigmaOperator(Protocol):
    """Matrix-free interface accepted by ground_state."""

    dim: int

    def diagonal(self) -> np.ndarray: ...

    def matvec(self, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class SpectrumResult:
    energy: float
    vector: np.ndarray
    residual_norm: float
    n_iterations: int
    degenerate: bool | None = None

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=float)
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)


def build_subspace_hamiltonian(space: DeterminantSpace,
                               ints: IntegralSet) -> SparseSymmetricMatrix:
    """H[i][j] = <d_i|H|d_j> over a determinant space, lower triangle.

    Pairs with excitation degree above two are exact zeros and omitted.
    The space must live in a single particle sector.
    """
    space.sector()
    dets = space.determinants
    n = len(dets)
    amasks = space.alpha_masks()
    bmasks = space.beta_masks()
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for i in range(n):
        degree = (np.bitwise_count(amasks[: i + 1] ^ amasks[i])
                  + np.bitwise_count(bmasks[: i + 1] ^ bmasks[i]))
        for j in np.nonzero(degree <= 4)[0]:
            value = slater_condon_element(dets[i], dets[int(j)], ints)
            if value != 0.0 or i == j:
                rows.append(i)
                cols.append(int(j))
                vals.append(value)
    return SparseSymmetricMatrix(n, np.array(rows, dtype=np.int64),
                                 np.array(cols, dtype=np.int64), np.array(vals))


def _build_by_excitation(space: DeterminantSpace,
                         ints: IntegralSet) -> SparseSymmetricMatrix:
    """Connection-driven build: enumerate excitations instead of scanning pairs.

    Faster than the pair scan once the space is much smaller than the square
    of its excitation connectivity; exact same matrix.
    """
    space.sector()
    dets = space.determinants
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for i, det in enumerate(dets):
        rows.append(i)
        cols.append(i)
        vals.append(slater_condon_element(det, det, ints))
        seen = {det}
        for other in single_excitations(det, ints.m):
            if other in seen:
                continue
            seen.add(other)
            j = space.find(other)
            if j is not None and j < i:
                value = slater_condon_element(det, other, ints)
                if value != 0.0:
                    rows.append(i)
                    cols.append(j)
                    vals.append(value)
        for other in double_excitations(det, ints.m):
            if other in seen:
                continue
            seen.add(other)
            j = space.find(other)
            if j is not None and j < i:
                value = slater_condon_element(det, other, ints)
                if value != 0.0:
                    rows.append(i)
                    cols.append(j)
                    vals.append(value)
    return SparseSymmetricMatrix(len(dets), np.array(rows, dtype=np.int64),
                                 np.array(cols, dtype=np.int64), np.array(vals))


def ground_state(matrix: SparseSymmetricMatrix | SigmaOperator, *,
                 start_index: int | None = None,
                 residual_tol: float = 1e-9,
                 max_subspace: int = 30,
                 max_iterations: int = 300,
                 compute_degeneracy: bool = False) -> SpectrumResult:
    """Lowest eigenpair of a symmetric matrix or matrix-free sigma operator.

    Dense diagonalization below DENSE_DIMENSION_LIMIT, Davidson above. The
    eigenvector sign is fixed so its largest-magnitude component is positive.
    """
    dim = matrix.dim
    if dim < 1:
        raise ValueError("dimension must be at least 1")
    dense_ok = isinstance(matrix, SparseSymmetricMatrix) and dim <= DENSE_DIMENSION_LIMIT
    if dense_ok:
        full = matrix.to_dense()
        k = 2 if (compute_degeneracy and dim > 1) else 1
        vals, vecs = scipy.linalg.eigh(full, subset_by_index=[0, k - 1])
        vec = _fix_sign(vecs[:, 0])
        residual = float(np.linalg.norm(full @ vec - vals[0] * vec))
        degenerate = bool(vals[1] - vals[0] < 1e-8) if k == 2 else None
        return SpectrumResult(float(vals[0]), vec, residual, 1, degenerate)
    return _davidson(matrix, start_index, residual_tol, max_subspace,
                     max_iterations, compute_degeneracy)


def _davidson(op, start_index, residual_tol, max_subspace, max_iterations,
              compute_degeneracy) -> SpectrumResult:
    dim = op.dim
    diag = op.diagonal()
    if start_index is None:
        start_index = int(np.argmin(diag))
    v = np.zeros(dim)
    v[start_index] = 1.0

    basis: list[np.ndarray] = [v]
    sigmas: list[np.ndarray] = [op.matvec(v)]
    best_residual = np.inf
    theta = float(basis[0] @ sigmas[0])
    vec = basis[0]
    second = None

    for it in range(1, max_iterations + 1):
        nb = len(basis)
        vmat = np.column_stack(basis)
        smat = np.column_stack(sigmas)
        proj = vmat.T @ smat
        proj = 0.5 * (proj + proj.T)
        evals, evecs = scipy.linalg.eigh(proj)
        theta = float(evals[0])
        vec = vmat @ evecs[:, 0]
        sigma_vec = smat @ evecs[:, 0]
        if nb > 1:
            second = float(evals[1])
        residual = sigma_vec - theta * vec
        rnorm = float(np.linalg.norm(residual))
        best_residual = min(best_residual, rnorm)
        if rnorm < residual_tol:
            vec = _fix_sign(vec / np.linalg.norm(vec))
            degenerate = None
            if compute_degeneracy and second is not None:
                degenerate = bool(second - theta < 1e-8)
            return SpectrumResult(theta, vec, rnorm, it, degenerate)
        if nb >= max_subspace:
            basis = [vec / np.linalg.norm(vec)]
            sigmas = [sigma_vec / np.linalg.norm(vec)]
            continue
        denom = diag - theta
        denom = np.where(np.abs(denom) < 1e-8, np.copysign(1e-8, denom), denom)
        correction = residual / denom
        for b in basis:
            correction -= (b @ correction) * b
        for b in basis:
            correction -= (b @ correction) * b
        norm = np.linalg.norm(correction)
        if norm < 1e-12:
            correction = np.random.default_rng(it).standard_normal(dim)
            for b in basis:
                correction -= (b @ correction) * b
            norm = np.linalg.norm(correction)
        correction /= norm
        basis.append(correction)
        sigmas.append(op.matvec(correction))

    raise DavidsonConvergenceError(
        f"Davidson did not reach {residual_tol:.1e} in {max_iterations} iterations "
        f"(best residual {best_residual:.3e})",
        best_residual=best_residual,
    )


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    pivot = int(np.argmax(np.abs(vec)))
    return -vec if vec[pivot] < 0 else vec


def diagonalize_space(space: DeterminantSpace, ints: IntegralSet, *,
                      builder: str = "auto", **solver_kwargs) -> SpectrumResult:
    """Convenience: build the subspace Hamiltonian and solve for the ground state.

    builder: 'pairs' scans determinant pairs, 'excitations' enumerates
    connections, 'auto' picks by size. The Davidson start vector sits on the
    Hartree-Fock determinant when it belongs to the space.
    """
    if builder == "auto":
        builder = "excitations" if len(space) > DENSE_DIMENSION_LIMIT else "pairs"
    if builder == "pairs":
        matrix = build_subspace_hamiltonian(space, ints)
    elif builder == "excitations":
        matrix = _build_by_excitation(space, ints)
    else:
        raise ValueError(f"unknown builder {builder!r}")
    hf = hf_reference(ints.n_alpha, ints.n_beta, ints.m)
    start = space.find(hf)
    return ground_state(matrix, start_index=start, **solver_kwargs)


def full_ci(ints: IntegralSet, n_alpha: int | None = None,
            n_beta: int | None = None, *, max_dimension: int = 200_000,
            **solver_kwargs) -> tuple[SpectrumResult, DeterminantSpace]:
    """Ground state over the complete (n_alpha, n_beta) determinant sector."""
    n_alpha = ints.n_alpha if n_alpha is None else n_alpha
    n_beta = ints.n_beta if n_beta is None else n_beta
    from math import comb

    dim = comb(ints.m, n_alpha) * comb(ints.m, n_beta)
    if dim > max_dimension:
        raise SectorBudgetError(
            f"sector dimension {dim} exceeds the budget of {max_dimension}"
        )
    sector_ints = ints if (n_alpha, n_beta) == (ints.n_alpha, ints.n_beta) else IntegralSet(
        m=ints.m, n_alpha=n_alpha, n_beta=n_beta, e_core=ints.e_core, h=ints.h, g=ints.g)
    space = full_sector_space(n_alpha, n_beta, ints.m)
    result = diagonalize_space(space, sector_ints, **solver_kwargs)
    return result, space
