"""Molecular Hamiltonians in a localized molecular-orbital basis.

Two supply routes feed the CI machinery: a small in-repo integral engine for
hydrogen clusters (contracted s-type Gaussians, STO-3G parameters) followed by
RHF and block localization, or ingestion of precomputed integrals from FCIDUMP
files for general systems.

All energies are in Hartree, all distances in the geometry layer in Angstrom
(converted to Bohr internally). Two-electron integrals use chemist notation
(pq|rs) with full 8-fold permutational symmetry.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import eigh, fractional_matrix_power
from scipy.special import erf

BOHR_PER_ANGSTROM = 1.0 / 0.529177210903

# Published STO-3G parameters for hydrogen (exponents already carry the
# zeta = 1.24 scaling; contraction coefficients are for normalized primitives).
STO3G_H_EXPONENTS = (3.42525091, 0.62391373, 0.16885540)
STO3G_H_COEFFS = (0.15432897, 0.53532814, 0.44463454)

_ELEMENT_CHARGES = {
    "H": 1, "He": 2, "Li": 3, "Be": 4, "B": 5, "C": 6, "N": 7, "O": 8,
    "F": 9, "Ne": 10,
}


class UnsupportedElementError(ValueError):
    """Raised when the in-repo integral engine is asked for a non-hydrogen atom."""


class SCFConvergenceError(RuntimeError):
    """SCF failed to converge; carries the last RMS density change."""

    def __init__(self, message: str, last_density_change: float):
        super().__init__(message)
        self.last_density_change = last_density_change


class BlockLocalizationError(ValueError):
    """Fragments overlap too strongly for the non-interacting block construction."""


class FcidumpFormatError(ValueError):
    """Malformed FCIDUMP content (header, indices, or conflicting duplicates)."""


# ---------------------------------------------------------------------------
# Geometry


@dataclass(frozen=True)
class Geometry:
    """Atomic positions with per-atom fragment labels.

    Positions in Angstrom. Fragment labels partition the atoms; their order of
    first appearance fixes the fragment ordering used everywhere downstream.
    """

    symbols: tuple[str, ...]
    charges: tuple[int, ...]
    coords: np.ndarray
    fragments: tuple[str, ...]

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float).reshape(len(self.symbols), 3)
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        if len(self.symbols) == 0:
            raise ValueError("geometry needs at least one atom")
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("atomic positions must be finite")
        if len(self.charges) != len(self.symbols) or len(self.fragments) != len(self.symbols):
            raise ValueError("charges/fragments must have one entry per atom")
        for z in self.charges:
            if not isinstance(z, int) or z <= 0:
                raise ValueError(f"nuclear charges must be positive integers, got {z!r}")

    @property
    def n_atoms(self) -> int:
        return len(self.symbols)

    @property
    def coords_bohr(self) -> np.ndarray:
        return self.coords * BOHR_PER_ANGSTROM

    @property
    def fragment_labels(self) -> tuple[str, ...]:
        seen: list[str] = []
        for f in self.fragments:
            if f not in seen:
                seen.append(f)
        return tuple(seen)

    def subgeometry(self, fragment: str) -> "Geometry":
        idx = [i for i, f in enumerate(self.fragments) if f == fragment]
        if not idx:
            raise ValueError(f"no atoms in fragment {fragment!r}")
        return Geometry(
            symbols=tuple(self.symbols[i] for i in idx),
            charges=tuple(self.charges[i] for i in idx),
            coords=self.coords[idx],
            fragments=tuple(self.fragments[i] for i in idx),
        )

    def atom_indices(self, fragment: str) -> tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.fragments) if f == fragment)


def load_geometry(path) -> Geometry:
    """Read a plain-text geometry: one `element x y z fragment` line per atom."""
    symbols, charges, coords, fragments = [], [], [], []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"expected 'element x y z fragment', got {raw!r}")
        elem = parts[0].capitalize()
        if elem not in _ELEMENT_CHARGES:
            raise ValueError(f"unknown element {parts[0]!r}")
        symbols.append(elem)
        charges.append(_ELEMENT_CHARGES[elem])
        coords.append([float(p) for p in parts[1:4]])
        fragments.append(parts[4])
    return Geometry(tuple(symbols), tuple(charges), np.array(coords), tuple(fragments))


def write_geometry(geometry: Geometry, path) -> None:
    lines = [
        f"{s} {x:.10f} {y:.10f} {z:.10f} {f}"
        for s, (x, y, z), f in zip(geometry.symbols, geometry.coords, geometry.fragments)
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def square_h4_geometry(side_bohr: float = 2.0, fragment: str = "A",
                       origin_ang: Sequence[float] = (0.0, 0.0, 0.0)) -> Geometry:
    """Square tetrahydrogen cluster in the xy plane."""
    a = side_bohr / BOHR_PER_ANGSTROM
    ox, oy, oz = origin_ang
    coords = np.array([
        [ox, oy, oz], [ox + a, oy, oz], [ox, oy + a, oz], [ox + a, oy + a, oz],
    ])
    return Geometry(("H",) * 4, (1,) * 4, coords, (fragment,) * 4)


def stacked_h4_dimer_geometry(side_bohr: float = 2.0,
                              separation_ang: float = 100.0) -> Geometry:
    """Two square H4 clusters stacked along z (cuboid arrangement)."""
    a = square_h4_geometry(side_bohr, "A")
    b = square_h4_geometry(side_bohr, "B", origin_ang=(0.0, 0.0, separation_ang))
    return Geometry(a.symbols + b.symbols, a.charges + b.charges,
                    np.vstack([a.coords, b.coords]), a.fragments + b.fragments)


# ---------------------------------------------------------------------------
# Integral containers


@dataclass(frozen=True)
class IntegralSet:
    """Second-quantized Hamiltonian data.

    h is the M x M one-electron matrix, g the two-electron tensor in chemist
    notation (pq|rs) with 8-fold symmetry, e_core the scalar part (nuclear
    repulsion plus any frozen-core contribution). Arrays are frozen after
    construction and safe to share across threads.
    """

    m: int
    n_alpha: int
    n_beta: int
    e_core: float
    h: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if self.m < 1:
            raise ValueError("need at least one orbital")
        if h.shape != (self.m, self.m) or g.shape != (self.m,) * 4:
            raise ValueError("h/g dimensions inconsistent with orbital count")
        if self.n_alpha + self.n_beta > 2 * self.m:
            raise ValueError("more electrons than spin orbitals")
        if self.n_alpha < 0 or self.n_beta < 0:
            raise ValueError("negative electron count")
        h.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "g", g)

    def validate_symmetry(self, tol: float = 1e-12) -> None:
        if np.max(np.abs(self.h - self.h.T)) > tol:
            raise ValueError("one-electron matrix is not symmetric")
        g = self.g
        for perm in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
            if np.max(np.abs(g - g.transpose(perm))) > tol:
                raise ValueError("two-electron tensor violates 8-fold symmetry")

    @property
    def n_electrons(self) -> int:
        return self.n_alpha + self.n_beta


def nuclear_repulsion(geometry: Geometry) -> float:
    r = geometry.coords_bohr
    z = np.asarray(geometry.charges, dtype=float)
    e = 0.0
    for i in range(geometry.n_atoms):
        for j in range(i + 1, geometry.n_atoms):
            e += z[i] * z[j] / np.linalg.norm(r[i] - r[j])
    return e


# ---------------------------------------------------------------------------
# STO-3G s-orbital engine


def boys_f0(t):
    """Boys function F0 via erf, with a series fallback at tiny arguments."""
    t = np.asarray(t, dtype=float)
    small = t < 1e-12
    safe = np.where(small, 1.0, t)
    return np.where(small, 1.0 - t / 3.0,
                    0.5 * np.sqrt(np.pi / safe) * erf(np.sqrt(safe)))


def _hydrogen_s_basis(geometry: Geometry):
    """Flattened primitive data for one contracted s function per H atom."""
    for sym in geometry.symbols:
        if sym != "H":
            raise UnsupportedElementError(
                f"the built-in engine covers hydrogen s shells only (got {sym}); "
                "supply integrals for other elements through an FCIDUMP file"
            )
    n_ao = geometry.n_atoms
    exps = np.array(STO3G_H_EXPONENTS)
    raw = np.array(STO3G_H_COEFFS) * (2.0 * exps / np.pi) ** 0.75
    # Normalize the contracted function: <chi|chi> = 1 exactly.
    p = exps[:, None] + exps[None, :]
    s_prim = (np.pi / p) ** 1.5
    norm = math.sqrt(raw @ s_prim @ raw)
    coeffs = raw / norm

    centers = np.repeat(geometry.coords_bohr, len(exps), axis=0)
    alphas = np.tile(exps, n_ao)
    weights = np.tile(coeffs, n_ao)
    owners = np.repeat(np.arange(n_ao), len(exps))
    return n_ao, centers, alphas, weights, owners


def compute_sto3g_integrals(geometry: Geometry) -> tuple[IntegralSet, np.ndarray]:
    """AO-basis integrals over contracted s Gaussians for a hydrogen cluster.

    Returns the AO IntegralSet (e_core = nuclear repulsion, closed-shell
    electron counts) and the AO overlap matrix.
    """
    n_ao, centers, alphas, weights, owners = _hydrogen_s_basis(geometry)
    n_prim = len(alphas)

    a_i = alphas[:, None]
    a_j = alphas[None, :]
    p = a_i + a_j
    mu = a_i * a_j / p
    diff = centers[:, None, :] - centers[None, :, :]
    r2 = np.einsum("ijx,ijx->ij", diff, diff)
    kab = np.exp(-mu * r2)
    s_prim = (np.pi / p) ** 1.5 * kab
    t_prim = mu * (3.0 - 2.0 * mu * r2) * s_prim

    pc = (a_i[..., None] * centers[:, None, :] + a_j[..., None] * centers[None, :, :]) / p[..., None]
    v_prim = np.zeros((n_prim, n_prim))
    zs = np.asarray(geometry.charges, dtype=float)
    for z, rc in zip(zs, geometry.coords_bohr):
        d = pc - rc
        t = p * np.einsum("ijx,ijx->ij", d, d)
        v_prim -= z * (2.0 * np.pi / p) * kab * boys_f0(t)

    # Two-electron repulsion over primitive pairs u=(ij), v=(kl).
    pf = p.reshape(-1)
    kf = kab.reshape(-1)
    cf = pc.reshape(-1, 3)
    psum = pf[:, None] + pf[None, :]
    dq = cf[:, None, :] - cf[None, :, :]
    t = (pf[:, None] * pf[None, :] / psum) * np.einsum("uvx,uvx->uv", dq, dq)
    eri_prim = (2.0 * np.pi ** 2.5
                / (pf[:, None] * pf[None, :] * np.sqrt(psum))
                * kf[:, None] * kf[None, :] * boys_f0(t))
    eri_prim = eri_prim.reshape(n_prim, n_prim, n_prim, n_prim)

    w = np.zeros((n_ao, n_prim))
    w[owners, np.arange(n_prim)] = weights
    s = w @ s_prim @ w.T
    h = w @ (t_prim + v_prim) @ w.T
    g = np.einsum("pi,qj,ijkl,rk,sl->pqrs", w, w, eri_prim, w, w, optimize=True)

    n_elec = int(sum(geometry.charges))
    ints = IntegralSet(
        m=n_ao,
        n_alpha=(n_elec + 1) // 2,
        n_beta=n_elec // 2,
        e_core=nuclear_repulsion(geometry),
        h=h,
        g=g,
    )
    return ints, s


# ---------------------------------------------------------------------------
# Restricted Hartree-Fock


@dataclass
class RHFResult:
    energy: float
    mo_coeff: np.ndarray
    mo_energies: np.ndarray
    energy_history: list[float] = field(default_factory=list)
    n_iterations: int = 0


def run_rhf(ao: IntegralSet, overlap: np.ndarray, *, max_iterations: int = 200,
            e_tol: float = 1e-11, d_tol: float = 1e-10, damping: float = 0.3,
            damping_iterations: int = 4, diis_size: int = 8) -> RHFResult:
    """Converge closed-shell RHF from a core-Hamiltonian guess.

    Damped Roothaan steps for the first few iterations, then DIIS on the
    FPS - SPF error vector. Deterministic for fixed input.
    """
    if ao.n_alpha != ao.n_beta:
        raise ValueError("restricted HF requires a closed shell (n_alpha == n_beta)")
    n_occ = ao.n_alpha
    h, g, s = ao.h, ao.g, np.asarray(overlap, dtype=float)

    def fock(p):
        j = np.einsum("pqrs,rs->pq", g, p)
        k = np.einsum("prqs,rs->pq", g, p)
        return h + j - 0.5 * k

    def density(f):
        mo_e, c = eigh(f, s)
        occ = c[:, :n_occ]
        return 2.0 * occ @ occ.T, c, mo_e

    p, c, mo_e = density(h)
    energy = math.inf
    history: list[float] = []
    diis_f: list[np.ndarray] = []
    diis_err: list[np.ndarray] = []
    d_change = math.inf

    for it in range(1, max_iterations + 1):
        f = fock(p)
        err = f @ p @ s - s @ p @ f
        e_new = 0.5 * np.sum(p * (h + f)) + ao.e_core
        if it > damping_iterations:
            diis_f.append(f)
            diis_err.append(err)
            if len(diis_f) > diis_size:
                diis_f.pop(0)
                diis_err.pop(0)
            if len(diis_f) >= 2:
                f = _diis_extrapolate(diis_f, diis_err)
        p_new, c, mo_e = density(f)
        if it <= damping_iterations:
            p_new = (1.0 - damping) * p_new + damping * p
        d_change = math.sqrt(np.mean((p_new - p) ** 2))
        de = abs(e_new - energy)
        p, energy = p_new, e_new
        history.append(e_new)
        if d_change < d_tol and de < e_tol:
            return RHFResult(energy, c, mo_e, history, it)

    raise SCFConvergenceError(
        f"SCF not converged in {max_iterations} iterations "
        f"(last RMS density change {d_change:.3e})",
        last_density_change=d_change,
    )


def _diis_extrapolate(focks, errors):
    n = len(focks)
    b = -np.ones((n + 1, n + 1))
    b[n, n] = 0.0
    for i in range(n):
        for j in range(n):
            b[i, j] = np.sum(errors[i] * errors[j])
    rhs = np.zeros(n + 1)
    rhs[n] = -1.0
    try:
        w = np.linalg.solve(b, rhs)
    except np.linalg.LinAlgError:
        w = np.linalg.lstsq(b, rhs, rcond=None)[0]
    f = np.zeros_like(focks[0])
    for wi, fi in zip(w[:n], focks):
        f += wi * fi
    return f


# ---------------------------------------------------------------------------
# Orbital partition and block localization


@dataclass(frozen=True)
class OrbitalPartition:
    """Assignment of dimer orbitals to fragments plus the reference populations.

    assignments[p] = (fragment, local index) for each dimer orbital p;
    ref_counts maps each fragment to the (n_alpha, n_beta) of its Hartree-Fock
    reference. The assignment must be a bijection onto contiguous per-fragment
    local ranges 0..m_F-1.
    """

    assignments: tuple[tuple[str, int], ...]
    ref_counts: Mapping[str, tuple[int, int]]

    def __post_init__(self):
        object.__setattr__(self, "ref_counts",
                           {k: (int(a), int(b)) for k, (a, b) in self.ref_counts.items()})
        per_frag: dict[str, list[int]] = {}
        for frag, loc in self.assignments:
            per_frag.setdefault(frag, []).append(loc)
        if set(per_frag) != set(self.ref_counts):
            raise ValueError("fragments in assignment and ref_counts differ")
        for frag, locs in per_frag.items():
            if sorted(locs) != list(range(len(locs))):
                raise ValueError(f"local indices of fragment {frag} are not 0..{len(locs)-1}")

    @property
    def n_orbitals(self) -> int:
        return len(self.assignments)

    @property
    def fragments(self) -> tuple[str, ...]:
        seen: list[str] = []
        for frag, _ in self.assignments:
            if frag not in seen:
                seen.append(frag)
        return tuple(seen)

    def fragment_size(self, fragment: str) -> int:
        return sum(1 for frag, _ in self.assignments if frag == fragment)

    def orbital_mask(self, fragment: str) -> int:
        mask = 0
        for p, (frag, _) in enumerate(self.assignments):
            if frag == fragment:
                mask |= 1 << p
        return mask

    def dimer_orbitals(self, fragment: str) -> tuple[int, ...]:
        """Dimer orbital indices of a fragment, ordered by local index."""
        pairs = [(loc, p) for p, (frag, loc) in enumerate(self.assignments) if frag == fragment]
        return tuple(p for _, p in sorted(pairs))

    @property
    def total_counts(self) -> tuple[int, int]:
        na = sum(v[0] for v in self.ref_counts.values())
        nb = sum(v[1] for v in self.ref_counts.values())
        return na, nb


def read_orbital_map(path, ref_counts: Mapping[str, tuple[int, int]]) -> OrbitalPartition:
    """Read a `dimer_orbital fragment fragment_orbital` table (0-based)."""
    rows: dict[int, tuple[str, int]] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"expected 'dimer_orbital fragment fragment_orbital', got {raw!r}")
        p = int(parts[0])
        if p in rows:
            raise ValueError(f"dimer orbital {p} assigned twice")
        rows[p] = (parts[1], int(parts[2]))
    if sorted(rows) != list(range(len(rows))):
        raise ValueError("dimer orbital indices must cover 0..M-1")
    assignments = tuple(rows[p] for p in range(len(rows)))
    return OrbitalPartition(assignments, ref_counts)


def write_orbital_map(partition: OrbitalPartition, path) -> None:
    lines = [f"{p} {frag} {loc}" for p, (frag, loc) in enumerate(partition.assignments)]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class BlockLocalizedOrbitals:
    coeff: np.ndarray
    partition: OrbitalPartition


def localize_block_rhf(dimer_geometry: Geometry,
                       fragment_solutions: Mapping[str, RHFResult],
                       overlap: np.ndarray | None = None,
                       overlap_threshold: float = 1e-6) -> BlockLocalizedOrbitals:
    """Assemble dimer MOs as the direct sum of fragment MOs, then re-orthonormalize.

    Valid only in the non-interacting regime: refuses if any inter-fragment AO
    overlap exceeds the threshold. Columns are ordered with all fragments'
    occupied orbitals first (fragment order of first appearance), then the
    virtuals, so the dimer aufbau reference is the product of fragment
    references. Lowdin symmetric orthonormalization keeps each orbital on its
    fragment.
    """
    labels = dimer_geometry.fragment_labels
    if overlap is None:
        _, overlap = compute_sto3g_integrals(dimer_geometry)
    s = np.asarray(overlap, dtype=float)
    n_ao = s.shape[0]

    ao_of = {lab: list(dimer_geometry.atom_indices(lab)) for lab in labels}
    for i, la in enumerate(labels):
        for lb in labels[i + 1:]:
            cross = np.max(np.abs(s[np.ix_(ao_of[la], ao_of[lb])]))
            if cross > overlap_threshold:
                raise BlockLocalizationError(
                    f"inter-fragment AO overlap {cross:.3e} between {la} and {lb} exceeds "
                    f"{overlap_threshold:.1e}; block localization is only valid for "
                    "non-interacting fragments"
                )

    occ_cols: list[np.ndarray] = []
    virt_cols: list[np.ndarray] = []
    occ_assign: list[tuple[str, int]] = []
    virt_assign: list[tuple[str, int]] = []
    ref_counts: dict[str, tuple[int, int]] = {}
    for lab in labels:
        res = fragment_solutions[lab]
        sub = dimer_geometry.subgeometry(lab)
        n_elec = int(sum(sub.charges))
        if n_elec % 2:
            raise ValueError(f"fragment {lab} is open shell; block RHF needs closed shells")
        n_occ = n_elec // 2
        ref_counts[lab] = (n_occ, n_occ)
        c_frag = res.mo_coeff
        if c_frag.shape[0] != len(ao_of[lab]):
            raise ValueError(f"fragment {lab} MO matrix does not match its AO count")
        for i in range(c_frag.shape[1]):
            col = np.zeros(n_ao)
            col[ao_of[lab]] = c_frag[:, i]
            if i < n_occ:
                occ_cols.append(col)
                occ_assign.append((lab, i))
            else:
                virt_cols.append(col)
                virt_assign.append((lab, i))

    c_block = np.column_stack(occ_cols + virt_cols)
    assignments = tuple(occ_assign + virt_assign)

    metric = c_block.T @ s @ c_block
    c = c_block @ fractional_matrix_power(metric, -0.5).real
    check = c.T @ s @ c
    if np.max(np.abs(check - np.eye(check.shape[0]))) > 1e-10:
        raise BlockLocalizationError("re-orthonormalized orbitals are not orthonormal")

    partition = OrbitalPartition(assignments, ref_counts)
    for p, (lab, _) in enumerate(assignments):
        weight = fragment_orbital_weight(c[:, p], s, ao_of[lab])
        if weight < 0.9999:
            raise BlockLocalizationError(
                f"orbital {p} has only {weight:.6f} of its weight on fragment {lab}"
            )
    return BlockLocalizedOrbitals(coeff=c, partition=partition)


def fragment_orbital_weight(column: np.ndarray, overlap: np.ndarray,
                            fragment_aos: Sequence[int]) -> float:
    """Mulliken weight of one MO on a set of AO indices."""
    contrib = column * (overlap @ column)
    return float(np.sum(contrib[list(fragment_aos)]))


# ---------------------------------------------------------------------------
# Basis transformation


def transform_to_mo(ao: IntegralSet, coeff: np.ndarray,
                    overlap: np.ndarray | None = None) -> IntegralSet:
    """Four-index transform of an AO IntegralSet into an orthonormal MO basis."""
    c = np.asarray(coeff, dtype=float)
    if c.shape[0] != ao.m:
        raise ValueError(f"coefficient rows ({c.shape[0]}) do not match AO count ({ao.m})")
    if overlap is not None:
        check = c.T @ np.asarray(overlap) @ c
        if np.max(np.abs(check - np.eye(c.shape[1]))) > 1e-8:
            raise ValueError("MO coefficients are not orthonormal under the given overlap")

    h_mo = c.T @ ao.h @ c
    g_mo = np.einsum("pqrs,pi->iqrs", ao.g, c, optimize=True)
    g_mo = np.einsum("iqrs,qj->ijrs", g_mo, c, optimize=True)
    g_mo = np.einsum("ijrs,rk->ijks", g_mo, c, optimize=True)
    g_mo = np.einsum("ijks,sl->ijkl", g_mo, c, optimize=True)
    return IntegralSet(m=c.shape[1], n_alpha=ao.n_alpha, n_beta=ao.n_beta,
                       e_core=ao.e_core, h=h_mo, g=g_mo)


# ---------------------------------------------------------------------------
# FCIDUMP I/O


def write_fcidump(ints: IntegralSet, path, *, orbsym: Sequence[int] | None = None,
                  threshold: float = 0.0) -> None:
    """Write integrals in FCIDUMP text form (chemist notation, 1-based indices).

    Values are written with 17 significant digits so a read-back reproduces
    them exactly. Only canonical representatives of the 8-fold symmetry are
    emitted; entries smaller in magnitude than `threshold` are skipped
    (defaults to writing everything nonzero).
    """
    m = ints.m
    ms2 = ints.n_alpha - ints.n_beta
    sym = list(orbsym) if orbsym is not None else [1] * m
    lines = [f" &FCI NORB={m},NELEC={ints.n_electrons},MS2={ms2},",
             "  ORBSYM=" + ",".join(str(x) for x in sym) + ",",
             "  ISYM=1,",
             " &END"]

    def fmt(value, p, q, r, s):
        return f" {value:.16E} {p:3d} {q:3d} {r:3d} {s:3d}"

    for p in range(m):
        for q in range(p + 1):
            for r in range(p + 1):
                s_max = q if r == p else r
                for s in range(s_max + 1):
                    v = ints.g[p, q, r, s]
                    if v != 0.0 and abs(v) >= threshold:
                        lines.append(fmt(v, p + 1, q + 1, r + 1, s + 1))
    for p in range(m):
        for q in range(p + 1):
            v = ints.h[p, q]
            if v != 0.0 and abs(v) >= threshold:
                lines.append(fmt(v, p + 1, q + 1, 0, 0))
    lines.append(fmt(ints.e_core, 0, 0, 0, 0))
    Path(path).write_text("\n".join(lines) + "\n")


_FCIDUMP_KEY = re.compile(r"([A-Za-z0-9]+)\s*=\s*([^=]*?)(?=(?:,?\s*[A-Za-z0-9]+\s*=)|$)")


def read_fcidump(path) -> IntegralSet:
    """Parse an FCIDUMP file into an IntegralSet.

    Accepts `&END`, `/`, or `$END` as header terminators; ORBSYM/ISYM are
    parsed and ignored. Unspecified integrals are zero. Duplicate entries
    related by permutational symmetry must agree within 1e-10.
    """
    text = Path(path).read_text()
    lines = text.splitlines()
    header_parts: list[str] = []
    data_start = None
    for i, line in enumerate(lines):
        stripped = line.strip()
        header_parts.append(stripped)
        if stripped.endswith(("&END", "$END", "/")) or stripped in ("&END", "$END", "/"):
            data_start = i + 1
            break
    if data_start is None:
        raise FcidumpFormatError("no &END/$END// header terminator found")
    header = " ".join(header_parts)
    if "&FCI" not in header.upper():
        raise FcidumpFormatError("missing &FCI header")
    header = re.sub(r"[&$]END|&FCI|/", " ", header, flags=re.IGNORECASE)

    fields: dict[str, str] = {}
    for key, value in _FCIDUMP_KEY.findall(header):
        fields[key.upper()] = value.strip().rstrip(",")
    try:
        m = int(fields["NORB"])
        n_elec = int(fields["NELEC"])
    except KeyError as missing:
        raise FcidumpFormatError(f"header lacks {missing.args[0]}") from None
    except ValueError as bad:
        raise FcidumpFormatError(f"malformed header field: {bad}") from None
    ms2 = int(fields.get("MS2", "0") or 0)
    if m < 1:
        raise FcidumpFormatError(f"NORB must be positive, got {m}")
    if (n_elec + ms2) % 2:
        raise FcidumpFormatError(f"NELEC={n_elec} and MS2={ms2} have incompatible parity")
    n_alpha = (n_elec + ms2) // 2
    n_beta = (n_elec - ms2) // 2

    h = np.zeros((m, m))
    g = np.zeros((m, m, m, m))
    h_set = np.zeros((m, m), dtype=bool)
    g_set = np.zeros((m, m, m, m), dtype=bool)
    e_core = 0.0

    def assign(array, mask, idx, value, what):
        if mask[idx] and abs(array[idx] - value) > 1e-10:
            raise FcidumpFormatError(
                f"conflicting duplicate {what} entry at {tuple(i + 1 for i in idx)}: "
                f"{array[idx]!r} vs {value!r}"
            )
        array[idx] = value
        mask[idx] = True

    for lineno, line in enumerate(lines[data_start:], start=data_start + 1):
        stripped = line.strip()
        if not stripped:
            continue
        parts = stripped.split()
        if len(parts) != 5:
            raise FcidumpFormatError(f"line {lineno}: expected 'value p q r s'")
        try:
            value = float(parts[0].replace("D", "E").replace("d", "e"))
            p, q, r, s = (int(x) for x in parts[1:])
        except ValueError:
            raise FcidumpFormatError(f"line {lineno}: unparsable entry {stripped!r}") from None
        for idx in (p, q, r, s):
            if idx < 0 or idx > m:
                raise FcidumpFormatError(f"line {lineno}: orbital index {idx} out of range 1..{m}")
        if p == q == r == s == 0:
            e_core = value
        elif r == 0 and s == 0:
            if p == 0 or q == 0:
                raise FcidumpFormatError(f"line {lineno}: malformed one-electron indices")
            assign(h, h_set, (p - 1, q - 1), value, "h")
            assign(h, h_set, (q - 1, p - 1), value, "h")
        elif 0 in (p, q, r, s):
            raise FcidumpFormatError(f"line {lineno}: malformed two-electron indices")
        else:
            i, j, k, l = p - 1, q - 1, r - 1, s - 1
            for a, b, c, d in ((i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k),
                               (k, l, i, j), (l, k, i, j), (k, l, j, i), (l, k, j, i)):
                assign(g, g_set, (a, b, c, d), value, "g")

    return IntegralSet(m=m, n_alpha=n_alpha, n_beta=n_beta, e_core=e_core, h=h, g=g)
