"""Quantum-computer surrogate: Jordan-Wigner encoding, Trotterized real-time
evolution on a statevector, and shot sampling.

Qubit layout: spin orbital (p, alpha) -> qubit 2p, (p, beta) -> qubit 2p+1.
Bitstrings are little-endian (qubit 0 is bit 0 of the integer index, and the
leftmost character in text form). Pauli strings are stored symplectically as
(x_mask, z_mask) with the usual Hermitian convention Y = i X Z, so a real
Hamiltonian has real string coefficients.

Terms are canonically ordered by their X/Y support. All strings sharing one
X/Y support commute (their Y counts are even for a real particle-conserving
Hamiltonian), so each contiguous group exponentiates exactly as a block of
independent 2x2 rotations between basis states b and b ^ x_mask. Evolution
therefore conserves the particle sector exactly: amplitudes outside the
initial (n_alpha, n_beta) sector are never touched.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .determinants import Determinant, hf_reference
from .integrals import IntegralSet

DEFAULT_MAX_QUBITS = 24


class StatevectorLimitError(RuntimeError):
    """System needs more qubits than the configured statevector limit."""


# ---------------------------------------------------------------------------
# Determinant <-> qubit bitstring mapping


def determinant_to_bits(det: Determinant) -> int:
    """JW basis index of a determinant (alpha on even, beta on odd qubits)."""
    bits = 0
    mask = det.alpha_mask
    while mask:
        low = mask & -mask
        bits |= 1 << (2 * (low.bit_length() - 1))
        mask ^= low
    mask = det.beta_mask
    while mask:
        low = mask & -mask
        bits |= 1 << (2 * (low.bit_length() - 1) + 1)
        mask ^= low
    return bits


def bits_to_determinant(bits: int, m: int) -> Determinant:
    alpha = beta = 0
    for p in range(m):
        if bits >> (2 * p) & 1:
            alpha |= 1 << p
        if bits >> (2 * p + 1) & 1:
            beta |= 1 << p
    return Determinant(alpha, beta)


def bits_to_text(bits: int, n_qubits: int) -> str:
    """Little-endian text form, qubit 0 leftmost."""
    return format(bits, f"0{n_qubits}b")[::-1]


def text_to_bits(text: str) -> int:
    return int(text[::-1], 2)


def blocked_to_mode_sign(det: Determinant) -> int:
    """Parity relating alpha-block-then-beta creation order to ascending mode order.

    The CI phase convention orders occupied spin orbitals alpha block first;
    the JW basis state corresponds to creation in ascending qubit order. The
    two differ by (-1)^t with t the number of (alpha p, beta q) occupied pairs
    with p > q.
    """
    t = 0
    for q in Determinant(det.beta_mask, 0).alpha_occupied():
        t += (det.alpha_mask >> (q + 1)).bit_count()
    return -1 if t & 1 else 1


def sector_bits(m: int, n_alpha: int, n_beta: int) -> np.ndarray:
    """Sorted JW indices of every determinant in the (n_alpha, n_beta) sector."""
    def spread(positions: Sequence[int], offset: int) -> int:
        bits = 0
        for p in positions:
            bits |= 1 << (2 * p + offset)
        return bits

    alphas = np.array([spread(c, 0) for c in itertools.combinations(range(m), n_alpha)],
                      dtype=np.int64)
    betas = np.array([spread(c, 1) for c in itertools.combinations(range(m), n_beta)],
                     dtype=np.int64)
    basis = (alphas[:, None] | betas[None, :]).reshape(-1)
    basis.sort()
    return basis


# ---------------------------------------------------------------------------
# Qubit Hamiltonian


@dataclass(frozen=True)
class PauliTerm:
    x_mask: int
    z_mask: int
    coeff: float

    @property
    def n_y(self) -> int:
        return (self.x_mask & self.z_mask).bit_count()

    def label(self, n_qubits: int) -> str:
        chars = []
        for q in range(n_qubits):
            x = self.x_mask >> q & 1
            z = self.z_mask >> q & 1
            chars.append("IXZY"[x + 2 * z] if x + 2 * z != 3 else "Y")
        return "".join(chars)

    def support(self) -> tuple[int, ...]:
        mask = self.x_mask if self.x_mask else self.z_mask
        return Determinant(mask, 0).alpha_occupied()


@dataclass(frozen=True)
class QubitHamiltonian:
    """Real-coefficient Pauli-string decomposition of the electronic Hamiltonian."""

    n_qubits: int
    terms: tuple[PauliTerm, ...]

    def labels(self) -> list[tuple[str, float]]:
        return [(t.label(self.n_qubits), t.coeff) for t in self.terms]


_LADDER_CACHE: dict[tuple[int, bool], tuple[tuple[int, int, complex], ...]] = {}


def _ladder(mode: int, dagger: bool) -> tuple[tuple[int, int, complex], ...]:
    # a_m = Z_{<m} (X_m + i Y_m)/2 = (X^b Z^c - X^b Z^{c|b})/2 in X^x Z^z form;
    # the adjoint flips the relative sign.
    key = (mode, dagger)
    cached = _LADDER_CACHE.get(key)
    if cached is None:
        bit = 1 << mode
        chain = bit - 1
        sign = 1.0 if dagger else -1.0
        cached = ((bit, chain, 0.5), (bit, chain | bit, 0.5 * sign))
        _LADDER_CACHE[key] = cached
    return cached


def _multiply_into(acc: dict[tuple[int, int], complex],
                   factors: Sequence[tuple[tuple[int, int, complex], ...]],
                   scale: float) -> None:
    # Product over X^x Z^z strings: Z^z X^x' = (-1)^{|z & x'|} X^x' Z^z.
    products: Iterable[tuple[int, int, complex]] = factors[0]
    for nxt in factors[1:]:
        out = []
        for x1, z1, c1 in products:
            for x2, z2, c2 in nxt:
                sign = -1.0 if (z1 & x2).bit_count() & 1 else 1.0
                out.append((x1 ^ x2, z1 ^ z2, c1 * c2 * sign))
        products = out
    for x, z, c in products:
        key = (x, z)
        acc[key] = acc.get(key, 0.0) + scale * c


def jordan_wigner(ints: IntegralSet, *, max_qubits: int = DEFAULT_MAX_QUBITS,
                  coefficient_cutoff: float = 1e-12) -> QubitHamiltonian:
    """Map an IntegralSet to a qubit Hamiltonian under the Jordan-Wigner encoding.

    The identity term carries e_core plus the constants arising from the
    occupation-number expansions. Terms are deduplicated and canonically
    ordered by (X/Y support, diagonal-before-mixing, label).
    """
    n_qubits = 2 * ints.m
    if n_qubits > max_qubits:
        raise StatevectorLimitError(
            f"{n_qubits} qubits exceed the statevector limit of {max_qubits}; "
            "raise max_qubits explicitly if you really want a dense simulation"
        )
    acc: dict[tuple[int, int], complex] = {(0, 0): complex(ints.e_core)}
    h, g = ints.h, ints.g
    m = ints.m

    for p in range(m):
        for q in range(m):
            hpq = h[p, q]
            if hpq == 0.0:
                continue
            for spin in (0, 1):
                _multiply_into(acc, (_ladder(2 * p + spin, True),
                                     _ladder(2 * q + spin, False)), hpq)
    for p in range(m):
        for q in range(m):
            for r in range(m):
                for s in range(m):
                    v = g[p, q, r, s]
                    if v == 0.0:
                        continue
                    half = 0.5 * v
                    for sp in (0, 1):
                        for tau in (0, 1):
                            _multiply_into(
                                acc,
                                (_ladder(2 * p + sp, True), _ladder(2 * r + tau, True),
                                 _ladder(2 * s + tau, False), _ladder(2 * q + sp, False)),
                                half,
                            )

    terms = []
    for (x, z), c in acc.items():
        n_y = (x & z).bit_count()
        coeff = c * (-1j) ** n_y
        if abs(coeff.imag) > 1e-10:
            raise ValueError("non-Hermitian accumulation; integrals must be real")
        value = float(coeff.real)
        if (x, z) != (0, 0) and abs(value) < coefficient_cutoff:
            continue
        if x and n_y & 1:
            raise ValueError("odd-Y string from a particle-conserving Hamiltonian")
        terms.append(PauliTerm(x, z, value))

    def sort_key(t: PauliTerm):
        return (t.support(), 0 if t.x_mask == 0 else 1, t.label(n_qubits))

    terms.sort(key=sort_key)
    return QubitHamiltonian(n_qubits, tuple(terms))


# ---------------------------------------------------------------------------
# Trotter schedule


@dataclass(frozen=True)
class RotationStep:
    x_mask: int
    z_mask: int
    angle: float

    @property
    def n_y(self) -> int:
        return (self.x_mask & self.z_mask).bit_count()


@dataclass(frozen=True)
class TrotterSchedule:
    """Ordered product of Pauli rotations exp(-i angle P) approximating exp(-iHdt)."""

    n_qubits: int
    dt: float
    order: int
    steps: tuple[RotationStep, ...]


def build_trotter_schedule(hamiltonian: QubitHamiltonian, dt: float = 1.0,
                           *, order: int = 2) -> TrotterSchedule:
    """Trotter-Suzuki rotation schedule for one time step of length dt.

    order=2 gives the symmetric (palindromic) splitting: a half-angle sweep in
    canonical term order followed by the reverse sweep. order=1 is the plain
    single sweep with full angles.
    """
    if not np.isfinite(dt):
        raise ValueError("dt must be finite")
    if order not in (1, 2):
        raise ValueError("only first- and second-order schedules are supported")
    if order == 1:
        steps = tuple(RotationStep(t.x_mask, t.z_mask, t.coeff * dt)
                      for t in hamiltonian.terms)
    else:
        half = tuple(RotationStep(t.x_mask, t.z_mask, 0.5 * t.coeff * dt)
                     for t in hamiltonian.terms)
        steps = half + tuple(reversed(half))
    return TrotterSchedule(hamiltonian.n_qubits, dt, order, steps)


# ---------------------------------------------------------------------------
# Statevector and evolution


@dataclass
class Statevector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (1 << self.n_qubits,):
            raise ValueError("amplitude vector length must be 2^n_qubits")
        self.amplitudes = amps

    @classmethod
    def basis_state(cls, n_qubits: int, bits: int) -> "Statevector":
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[bits] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def for_determinant(cls, m: int, det: Determinant) -> "Statevector":
        return cls.basis_state(2 * m, determinant_to_bits(det))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def sector_of_support(self) -> tuple[int, int]:
        """(n_alpha, n_beta) common to every nonzero amplitude."""
        idx = np.nonzero(self.amplitudes)[0]
        if len(idx) == 0:
            raise ValueError("zero statevector has no sector")
        even = np.int64(0x5555555555555555 & ((1 << self.n_qubits) - 1))
        n_a = np.bitwise_count(idx & even)
        n_b = np.bitwise_count(idx & ~even)
        if n_a.min() != n_a.max() or n_b.min() != n_b.max():
            raise ValueError("statevector support spans several particle sectors")
        return int(n_a[0]), int(n_b[0])


def _parity(values: np.ndarray, mask: int) -> np.ndarray:
    return np.bitwise_count(values & np.int64(mask)) & 1


class SectorPropagator:
    """Compiled single-step propagator restricted to one particle sector.

    Groups contiguous schedule runs: diagonal strings merge into one phase
    array, and mixing strings sharing an X/Y support merge into exact 2x2
    rotations between paired basis states. The compiled operations reproduce
    the ordered product of the schedule's rotations exactly.
    """

    def __init__(self, schedule: TrotterSchedule, basis: np.ndarray):
        self.basis = basis
        self._ops: list[tuple] = []
        self._compile(schedule)

    def _compile(self, schedule: TrotterSchedule) -> None:
        steps = schedule.steps
        i = 0
        while i < len(steps):
            if steps[i].x_mask == 0:
                j = i
                phase = np.zeros(len(self.basis))
                while j < len(steps) and steps[j].x_mask == 0:
                    s = steps[j]
                    signs = 1.0 - 2.0 * _parity(self.basis, s.z_mask)
                    phase = phase + s.angle * signs
                    j += 1
                self._ops.append(("phase", np.exp(-1j * phase)))
                i = j
            else:
                x = steps[i].x_mask
                j = i
                group = []
                while j < len(steps) and steps[j].x_mask == x:
                    group.append(steps[j])
                    j += 1
                self._ops.append(self._compile_mixing(x, group))
                i = j

    def _compile_mixing(self, x_mask: int, group: list[RotationStep]):
        basis = self.basis
        partner = basis ^ np.int64(x_mask)
        pos = np.searchsorted(basis, partner)
        pos_c = np.minimum(pos, len(basis) - 1)
        paired = (basis[pos_c] == partner) & (basis < partner)
        low = np.nonzero(paired)[0]
        high = pos_c[paired]
        gamma = np.zeros(len(low), dtype=np.complex128)
        states = basis[low]
        for s in group:
            phi = (1j) ** s.n_y * (1.0 - 2.0 * _parity(states, s.z_mask))
            gamma = gamma + s.angle * phi
        mag = np.abs(gamma)
        unit = np.where(mag > 0, gamma / np.where(mag > 0, mag, 1.0), 0.0)
        return ("rotate", low, high, np.cos(mag), -1j * np.sin(mag) * unit)

    def apply(self, vec: np.ndarray) -> np.ndarray:
        for op in self._ops:
            if op[0] == "phase":
                vec = vec * op[1]
            else:
                _, low, high, cos_t, sin_u = op
                a = vec[low]
                b = vec[high]
                vec = vec.copy()
                vec[low] = cos_t * a + np.conj(sin_u) * b
                vec[high] = cos_t * b + sin_u * a
        return vec


def evolve(state: Statevector, schedule: TrotterSchedule,
           repetitions: int = 1) -> Statevector:
    """Apply the Trotter step `repetitions` times (evolution time k * dt).

    The state must occupy a single particle sector; amplitudes outside that
    sector are untouched and remain exactly zero.
    """
    if repetitions < 0:
        raise ValueError("repetitions must be non-negative")
    if repetitions == 0:
        return Statevector(state.n_qubits, state.amplitudes.copy())
    n_a, n_b = state.sector_of_support()
    m = state.n_qubits // 2
    basis = sector_bits(m, n_a, n_b)
    prop = SectorPropagator(schedule, basis)
    vec = state.amplitudes[basis]
    for _ in range(repetitions):
        vec = prop.apply(vec)
    amps = np.zeros_like(state.amplitudes)
    amps[basis] = vec
    return Statevector(state.n_qubits, amps)


# ---------------------------------------------------------------------------
# Sampling


def _philox(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array(
        [seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)))


def sample(state: Statevector, shots: int, seed: int, *,
           stream: int = 0) -> dict[int, int]:
    """Multiset of measured bitstrings: `shots` i.i.d. draws from |amplitude|^2.

    Counter-based RNG keyed by (seed, stream); deterministic regardless of
    thread schedule. Returns {bitstring int: count}.
    """
    if shots < 1:
        raise ValueError("shots must be at least 1")
    probs = state.probabilities()
    support = np.nonzero(probs)[0]
    weights = probs[support]
    weights = weights / weights.sum()
    counts = _philox(seed, stream).multinomial(shots, weights)
    return {int(b): int(c) for b, c in zip(support, counts) if c > 0}


# ---------------------------------------------------------------------------
# Sample pools


@dataclass
class SamplePool:
    """Per-evolution-time multisets of sampled bitstrings plus run metadata.

    per_k[k] maps bitstring integers to counts for evolution time k * dt. The
    reference (Hartree-Fock) bitstring is carried separately and always
    participates in subspace construction, even if never drawn.
    """

    m: int
    n_alpha: int
    n_beta: int
    dt: float
    shots: int
    seed: int
    reference_bits: int
    per_k: dict[int, dict[int, int]] = field(default_factory=dict)
    system: str = ""

    @property
    def k_max(self) -> int:
        return max(self.per_k, default=0)

    @property
    def n_qubits(self) -> int:
        return 2 * self.m

    def validate(self) -> None:
        even = 0x5555555555555555 & ((1 << self.n_qubits) - 1)
        for k, counts in self.per_k.items():
            total = sum(counts.values())
            if total != self.shots:
                raise ValueError(f"k={k}: multiset holds {total} shots, expected {self.shots}")
            for bits in counts:
                if ((bits & even).bit_count() != self.n_alpha
                        or (bits & ~even & ((1 << self.n_qubits) - 1)).bit_count() != self.n_beta):
                    raise ValueError(f"k={k}: bitstring {bits:#x} leaves the particle sector")

    def distinct_bits(self, k_max: int | None = None) -> list[int]:
        """Sorted distinct sampled bitstrings for k <= k_max, plus the reference."""
        limit = self.k_max if k_max is None else k_max
        out = {self.reference_bits}
        for k, counts in self.per_k.items():
            if k <= limit:
                out.update(counts)
        return sorted(out)

    def sampled_bits(self, k_max: int | None = None) -> list[int]:
        """Sorted distinct sampled bitstrings (reference not injected)."""
        limit = self.k_max if k_max is None else k_max
        out: set[int] = set()
        for k, counts in self.per_k.items():
            if k <= limit:
                out.update(counts)
        return sorted(out)

    def determinants(self, k_max: int | None = None) -> list[Determinant]:
        return [bits_to_determinant(b, self.m) for b in self.distinct_bits(k_max)]

    def to_json_dict(self) -> dict:
        return {
            "system": self.system,
            "M": self.m,
            "N_alpha": self.n_alpha,
            "N_beta": self.n_beta,
            "dt": self.dt,
            "shots": self.shots,
            "seed": self.seed,
            "reference": bits_to_text(self.reference_bits, self.n_qubits),
            "per_k": {
                str(k): [
                    {"bits": bits_to_text(b, self.n_qubits), "count": c}
                    for b, c in sorted(counts.items())
                ]
                for k, counts in sorted(self.per_k.items())
            },
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=1) + "\n")

    @classmethod
    def from_json_dict(cls, payload: Mapping) -> "SamplePool":
        pool = cls(
            m=int(payload["M"]),
            n_alpha=int(payload["N_alpha"]),
            n_beta=int(payload["N_beta"]),
            dt=float(payload["dt"]),
            shots=int(payload["shots"]),
            seed=int(payload["seed"]),
            reference_bits=text_to_bits(payload["reference"]),
            per_k={
                int(k): {text_to_bits(e["bits"]): int(e["count"]) for e in entries}
                for k, entries in payload["per_k"].items()
            },
            system=payload.get("system", ""),
        )
        pool.validate()
        return pool

    @classmethod
    def load(cls, path) -> "SamplePool":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def build_sample_pool(ints: IntegralSet, *, dt: float = 1.0, k_max: int = 5,
                      shots: int = 10_000, seed: int = 0, system: str = "",
                      extra_k: Sequence[int] = (),
                      max_qubits: int = DEFAULT_MAX_QUBITS) -> SamplePool:
    """Sample bitstrings from Trotterized evolution at every k in 1..k_max.

    The state for evolution time k reuses the state for k-1, and the sampling
    stream for each k is keyed by (seed, k), so a pool built with a larger
    k_max is a superset of one built with a smaller k_max. extra_k adds
    isolated larger k values (their states continue from k_max).
    """
    hf = hf_reference(ints.n_alpha, ints.n_beta, ints.m)
    hamiltonian = jordan_wigner(ints, max_qubits=max_qubits)
    schedule = build_trotter_schedule(hamiltonian, dt)
    basis = sector_bits(ints.m, ints.n_alpha, ints.n_beta)
    prop = SectorPropagator(schedule, basis)

    vec = np.zeros(len(basis), dtype=np.complex128)
    hf_bits = determinant_to_bits(hf)
    vec[np.searchsorted(basis, hf_bits)] = 1.0

    ks = sorted(set(range(1, k_max + 1)) | {int(k) for k in extra_k})
    pool = SamplePool(m=ints.m, n_alpha=ints.n_alpha, n_beta=ints.n_beta,
                      dt=dt, shots=shots, seed=seed, reference_bits=hf_bits,
                      system=system)
    current = 0
    for k in ks:
        for _ in range(k - current):
            vec = prop.apply(vec)
        current = k
        weights = np.abs(vec) ** 2
        weights = weights / weights.sum()
        counts = _philox(seed, k).multinomial(shots, weights)
        drawn = np.nonzero(counts)[0]
        pool.per_k[k] = {int(basis[i]): int(counts[i]) for i in drawn}
    pool.validate()
    return pool
