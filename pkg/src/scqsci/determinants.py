"""Slater determinants as bitmask pairs and their Hamiltonian matrix elements.

A determinant stores one occupation bitmask per spin over M spatial orbitals
(bit p set means spin orbital p occupied). Matrix elements follow the
Slater-Condon rules with chemist-notation integrals. The permutation-parity
convention orders occupied spin orbitals alpha block first, then beta block,
each by ascending spatial index; any consistent convention yields the same
spectra, and this one is fixed so independent oracles can compare elements.

Masks are single machine words: M <= 64 spatial orbitals.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .integrals import IntegralSet

MAX_ORBITALS = 64


class SectorMismatchError(ValueError):
    """Determinants do not share one (n_alpha, n_beta) particle sector."""


@dataclass(frozen=True, order=True)
class Determinant:
    alpha_mask: int
    beta_mask: int

    def __post_init__(self):
        if self.alpha_mask < 0 or self.beta_mask < 0:
            raise ValueError("occupation masks must be non-negative")
        if max(self.alpha_mask, self.beta_mask).bit_length() > MAX_ORBITALS:
            raise ValueError(f"masks must fit in {MAX_ORBITALS} bits")

    @property
    def n_alpha(self) -> int:
        return self.alpha_mask.bit_count()

    @property
    def n_beta(self) -> int:
        return self.beta_mask.bit_count()

    @property
    def sector(self) -> tuple[int, int]:
        return self.n_alpha, self.n_beta

    def alpha_occupied(self) -> tuple[int, ...]:
        return _bits(self.alpha_mask)

    def beta_occupied(self) -> tuple[int, ...]:
        return _bits(self.beta_mask)

    def excitation_degree(self, other: "Determinant") -> int:
        return ((self.alpha_mask ^ other.alpha_mask).bit_count()
                + (self.beta_mask ^ other.beta_mask).bit_count()) // 2

    def to_text(self, m: int) -> str:
        """Render `|alpha_bits,beta_bits>` with orbital 0 leftmost."""
        a = "".join("1" if self.alpha_mask >> p & 1 else "0" for p in range(m))
        b = "".join("1" if self.beta_mask >> p & 1 else "0" for p in range(m))
        return f"|{a},{b}⟩"

    @classmethod
    def from_text(cls, text: str) -> "Determinant":
        body = text.strip().lstrip("|").rstrip("⟩>").strip()
        a, b = body.split(",")
        return cls(_mask_from_bits(a), _mask_from_bits(b))


def _bits(mask: int) -> tuple[int, ...]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return tuple(out)


def _mask_from_bits(bits: str) -> int:
    mask = 0
    for p, ch in enumerate(bits.strip()):
        if ch == "1":
            mask |= 1 << p
        elif ch != "0":
            raise ValueError(f"occupation strings are 0/1 only, got {ch!r}")
    return mask


def hf_reference(n_alpha: int, n_beta: int, m: int) -> Determinant:
    """Aufbau determinant: lowest n_alpha / n_beta spatial orbitals occupied."""
    if n_alpha > m or n_beta > m:
        raise ValueError(f"cannot place ({n_alpha},{n_beta}) electrons in {m} orbitals")
    return Determinant((1 << n_alpha) - 1, (1 << n_beta) - 1)


class DeterminantSpace:
    """Ordered set of unique determinants with index lookup.

    Iteration order is the canonical sort by (alpha_mask, beta_mask), so a
    space built from any permutation of the same determinants is identical.
    """

    def __init__(self, determinants: Iterable[Determinant]):
        unique = sorted(set(determinants))
        self._dets: tuple[Determinant, ...] = tuple(unique)
        self._index = {d: i for i, d in enumerate(self._dets)}

    def __len__(self) -> int:
        return len(self._dets)

    def __iter__(self) -> Iterator[Determinant]:
        return iter(self._dets)

    def __getitem__(self, i: int) -> Determinant:
        return self._dets[i]

    def __contains__(self, det: Determinant) -> bool:
        return det in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, DeterminantSpace) and self._dets == other._dets

    def __hash__(self):
        return hash(self._dets)

    def index(self, det: Determinant) -> int:
        return self._index[det]

    def find(self, det: Determinant) -> int | None:
        return self._index.get(det)

    @property
    def determinants(self) -> tuple[Determinant, ...]:
        return self._dets

    def issubset(self, other: "DeterminantSpace") -> bool:
        return all(d in other for d in self._dets)

    def union(self, other: Iterable[Determinant]) -> "DeterminantSpace":
        return DeterminantSpace(itertools.chain(self._dets, other))

    def sector(self) -> tuple[int, int]:
        if not self._dets:
            raise ValueError("empty determinant space has no sector")
        sec = self._dets[0].sector
        for d in self._dets:
            if d.sector != sec:
                raise SectorMismatchError(
                    f"mixed particle sectors: {sec} vs {d.sector}"
                )
        return sec

    def alpha_masks(self) -> np.ndarray:
        return np.fromiter((d.alpha_mask for d in self._dets), dtype=np.uint64,
                           count=len(self._dets))

    def beta_masks(self) -> np.ndarray:
        return np.fromiter((d.beta_mask for d in self._dets), dtype=np.uint64,
                           count=len(self._dets))


def full_sector_space(n_alpha: int, n_beta: int, m: int) -> DeterminantSpace:
    """Every determinant in the (n_alpha, n_beta) sector over m orbitals."""
    alphas = [_mask_from_positions(c) for c in itertools.combinations(range(m), n_alpha)]
    betas = [_mask_from_positions(c) for c in itertools.combinations(range(m), n_beta)]
    return DeterminantSpace(Determinant(a, b) for a in alphas for b in betas)


def _mask_from_positions(positions: Sequence[int]) -> int:
    mask = 0
    for p in positions:
        mask |= 1 << p
    return mask


# ---------------------------------------------------------------------------
# Slater-Condon matrix elements


def _single_phase(mask: int, p: int, q: int) -> float:
    """Parity of moving one electron p -> q within a single spin block."""
    lo, hi = (p, q) if p < q else (q, p)
    between = mask & (((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1))
    return -1.0 if between.bit_count() & 1 else 1.0


def slater_condon_element(d1: Determinant, d2: Determinant,
                          ints: IntegralSet) -> float:
    """<d1|H|d2> in Hartree, including e_core on the diagonal.

    Zero for excitation degree above two. Determinants must share a particle
    sector.
    """
    if d1.sector != d2.sector:
        raise SectorMismatchError(f"sectors differ: {d1.sector} vs {d2.sector}")
    axor = d1.alpha_mask ^ d2.alpha_mask
    bxor = d1.beta_mask ^ d2.beta_mask
    degree = (axor.bit_count() + bxor.bit_count()) // 2
    if degree > 2:
        return 0.0
    if degree == 0:
        return _diagonal_element(d1, ints)
    if degree == 1:
        return _single_element(d1, d2, axor, bxor, ints)
    return _double_element(d1, d2, axor, bxor, ints)


def _diagonal_element(det: Determinant, ints: IntegralSet) -> float:
    h, g = ints.h, ints.g
    occ_a = np.array(det.alpha_occupied(), dtype=int)
    occ_b = np.array(det.beta_occupied(), dtype=int)
    e = ints.e_core
    for occ in (occ_a, occ_b):
        if len(occ):
            e += h[occ, occ].sum()
            coul = g[occ[:, None], occ[:, None], occ[None, :], occ[None, :]]
            exch = g[occ[:, None], occ[None, :], occ[None, :], occ[:, None]]
            e += 0.5 * (coul.sum() - exch.sum())
    if len(occ_a) and len(occ_b):
        e += g[occ_a[:, None], occ_a[:, None], occ_b[None, :], occ_b[None, :]].sum()
    return float(e)


def _single_element(d1, d2, axor, bxor, ints) -> float:
    h, g = ints.h, ints.g
    if axor:
        p = (axor & d1.alpha_mask).bit_length() - 1
        q = (axor & d2.alpha_mask).bit_length() - 1
        phase = _single_phase(d1.alpha_mask, p, q)
        same = np.array(_bits(d1.alpha_mask & d2.alpha_mask), dtype=int)
        other = np.array(d1.beta_occupied(), dtype=int)
    else:
        p = (bxor & d1.beta_mask).bit_length() - 1
        q = (bxor & d2.beta_mask).bit_length() - 1
        phase = _single_phase(d1.beta_mask, p, q)
        same = np.array(_bits(d1.beta_mask & d2.beta_mask), dtype=int)
        other = np.array(d1.alpha_occupied(), dtype=int)
    value = h[p, q]
    if len(same):
        value += g[p, q, same, same].sum() - g[p, same, same, q].sum()
    if len(other):
        value += g[p, q, other, other].sum()
    return float(phase * value)


def _double_element(d1, d2, axor, bxor, ints) -> float:
    g = ints.g
    if axor and bxor:
        # One alpha and one beta excitation; phases factorize across blocks.
        pa = (axor & d1.alpha_mask).bit_length() - 1
        ra = (axor & d2.alpha_mask).bit_length() - 1
        pb = (bxor & d1.beta_mask).bit_length() - 1
        rb = (bxor & d2.beta_mask).bit_length() - 1
        phase = (_single_phase(d1.alpha_mask, pa, ra)
                 * _single_phase(d1.beta_mask, pb, rb))
        return float(phase * g[pa, ra, pb, rb])
    # Same-spin double excitation.
    if axor:
        holes = _bits(axor & d1.alpha_mask)
        parts = _bits(axor & d2.alpha_mask)
        mask = d1.alpha_mask
    else:
        holes = _bits(bxor & d1.beta_mask)
        parts = _bits(bxor & d2.beta_mask)
        mask = d1.beta_mask
    (p, q), (r, s) = holes, parts
    # Excite p -> r first, then q -> s on the updated mask.
    phase = _single_phase(mask, p, r)
    mask = (mask ^ (1 << p)) | (1 << r)
    phase *= _single_phase(mask, q, s)
    return float(phase * (g[p, r, q, s] - g[p, s, q, r]))


# ---------------------------------------------------------------------------
# Excitation enumeration


def single_excitations(det: Determinant, m: int) -> Iterator[Determinant]:
    """All determinants one excitation away within the same sector."""
    for occ, virt_mask, make in _spin_views(det, m):
        for p in occ:
            for q in _bits(virt_mask):
                yield make(det, p, q)


def double_excitations(det: Determinant, m: int) -> Iterator[Determinant]:
    """All determinants exactly two excitations away within the same sector."""
    views = _spin_views(det, m)
    for occ, virt_mask, make in views:
        virts = _bits(virt_mask)
        for p, q in itertools.combinations(occ, 2):
            for r, s in itertools.combinations(virts, 2):
                yield make(make(det, p, r), q, s)
    (occ_a, virt_a, make_a), (occ_b, virt_b, make_b) = views
    for p in occ_a:
        for r in _bits(virt_a):
            half = make_a(det, p, r)
            for q in occ_b:
                for s in _bits(virt_b):
                    yield make_b(half, q, s)


def _spin_views(det: Determinant, m: int):
    full = (1 << m) - 1

    def excite_alpha(d, p, q):
        return Determinant((d.alpha_mask ^ (1 << p)) | (1 << q), d.beta_mask)

    def excite_beta(d, p, q):
        return Determinant(d.alpha_mask, (d.beta_mask ^ (1 << p)) | (1 << q))

    return (
        (det.alpha_occupied(), full & ~det.alpha_mask, excite_alpha),
        (det.beta_occupied(), full & ~det.beta_mask, excite_beta),
    )


# ---------------------------------------------------------------------------
# Spin-symmetry completion


def symmetry_complete(space: DeterminantSpace | Iterable[Determinant]) -> DeterminantSpace:
    """Close a determinant set under alpha/beta reassignment of open shells.

    For each determinant, adds every distribution of its alpha and beta spins
    over its singly occupied orbitals (the doubly occupied core is kept).
    The result spans the S^2 eigenfunctions reachable from the set; the
    operation is idempotent and monotone.
    """
    dets = list(space)
    if not dets:
        return DeterminantSpace([])
    sector = dets[0].sector
    out: set[Determinant] = set()
    for det in dets:
        if det.sector != sector:
            raise SectorMismatchError(
                f"mixed particle sectors: {sector} vs {det.sector}"
            )
        out.update(_spin_recouplings(det))
    return DeterminantSpace(out)


def _spin_recouplings(det: Determinant) -> Iterator[Determinant]:
    closed = det.alpha_mask & det.beta_mask
    open_orbs = _bits(det.alpha_mask ^ det.beta_mask)
    n_open_alpha = (det.alpha_mask & ~closed).bit_count()
    if not open_orbs:
        yield det
        return
    for choice in itertools.combinations(open_orbs, n_open_alpha):
        a = closed | _mask_from_positions(choice)
        b = closed | _mask_from_positions(tuple(o for o in open_orbs if o not in choice))
        yield Determinant(a, b)
