"""Dense complex linear algebra for small qubit registers.

States and operators are immutable, validated wrappers around dense numpy
arrays.  A single ordering convention is used throughout the package: the
leftmost tensor factor owns the most significant bit of a computational
basis index, so the two-qubit basis state ``|10>`` has index 2 and
``tensor(a, b)`` places ``a`` on the high bits.

Registers are tiny (at most 8 qubits), so everything is dense and every
eigenproblem goes through a plain Hermitian solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

NORM_TOL = 1e-12
HERM_TOL = 1e-12
TRACE_TOL = 1e-12
NEG_EIG_TOL = 1e-10
UNITARY_TOL = 1e-12

_INV_SQRT2 = 1.0 / math.sqrt(2.0)

#: The six single-qubit tomography states: computational, diagonal and
#: circular bases.  Together they form three mutually unbiased bases.
BASIS_LABELS = ("0", "1", "+", "-", "L", "R")

_KETS = {
    "0": np.array([1.0, 0.0], dtype=complex),
    "1": np.array([0.0, 1.0], dtype=complex),
    "+": np.array([_INV_SQRT2, _INV_SQRT2], dtype=complex),
    "-": np.array([_INV_SQRT2, -_INV_SQRT2], dtype=complex),
    "L": np.array([_INV_SQRT2, 1j * _INV_SQRT2], dtype=complex),
    "R": np.array([_INV_SQRT2, -1j * _INV_SQRT2], dtype=complex),
}

PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}


class InvalidStateError(ValueError):
    """A state or operator violates its physicality invariants."""


class DimensionMismatchError(ValueError):
    """Operands act on registers of incompatible dimension."""


class KindMismatchError(TypeError):
    """Binary operation applied to operands of different kinds."""


def _qubit_count(dim: int) -> int:
    n = int(round(math.log2(dim))) if dim > 0 else -1
    if n < 0 or 2**n != dim:
        raise InvalidStateError(f"dimension {dim} is not a power of two")
    return n


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized state vector of an ``n``-qubit register."""

    amplitudes: np.ndarray
    n: int = 0

    def __post_init__(self):
        amps = _freeze(np.asarray(self.amplitudes).ravel())
        n = _qubit_count(amps.size)
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-9:
            raise InvalidStateError(f"state vector norm {norm} is not 1")
        if abs(norm - 1.0) > NORM_TOL:
            amps = _freeze(amps / norm)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "n", n)

    @classmethod
    def from_label(cls, labels: str | Sequence[str]) -> "PureState":
        """Product state from per-qubit labels, e.g. ``"+"`` or ``("0", "L")``."""
        kets = [ket(lab) for lab in labels]
        if not kets:
            raise InvalidStateError("empty label sequence")
        return cls(reduce(np.kron, kets))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Trace-one positive operator on an ``n``-qubit register."""

    matrix: np.ndarray
    n: int = 0

    def __post_init__(self):
        mat = _freeze(np.asarray(self.matrix))
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise InvalidStateError(f"density matrix must be square, got {mat.shape}")
        n = _qubit_count(mat.shape[0])
        if np.abs(mat - mat.conj().T).max() > max(HERM_TOL, 1e-12):
            raise InvalidStateError("density matrix is not Hermitian")
        tr = mat.trace()
        if abs(tr - 1.0) > 1e-9:
            raise InvalidStateError(f"density matrix trace {tr} is not 1")
        evals = np.linalg.eigvalsh(mat)
        if evals.min() < -NEG_EIG_TOL:
            raise InvalidStateError(f"density matrix has negative eigenvalue {evals.min()}")
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "n", n)

    @classmethod
    def maximally_mixed(cls, n: int) -> "DensityMatrix":
        d = 2**n
        return cls(np.eye(d, dtype=complex) / d)

    @classmethod
    def from_label(cls, labels: str | Sequence[str]) -> "DensityMatrix":
        return PureState.from_label(labels).to_density()

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """General complex operator on an ``n``-qubit register.

    Set ``unitary=True`` to assert U†U = I on construction; filters
    (non-unitary postselection elements) leave the flag off.
    """

    matrix: np.ndarray
    n: int = 0
    unitary: bool = False

    def __post_init__(self):
        mat = _freeze(np.asarray(self.matrix))
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise InvalidStateError(f"operator must be square, got {mat.shape}")
        n = _qubit_count(mat.shape[0])
        if self.unitary:
            defect = np.abs(mat.conj().T @ mat - np.eye(mat.shape[0])).max()
            if defect > max(UNITARY_TOL, 1e-12):
                raise InvalidStateError(f"operator flagged unitary has defect {defect}")
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "n", n)

    @classmethod
    def identity(cls, n: int) -> "OperatorMatrix":
        return cls(np.eye(2**n, dtype=complex), unitary=True)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def ket(label: str) -> np.ndarray:
    """Single-qubit ket for one of the six basis labels."""
    try:
        return _KETS[label].copy()
    except KeyError:
        raise KeyError(f"unknown state label {label!r}; expected one of {BASIS_LABELS}")


def product_ket(labels: Iterable[str]) -> np.ndarray:
    """Product ket over several qubits, leftmost label most significant."""
    kets = [ket(lab) for lab in labels]
    return reduce(np.kron, kets)


def rotation(axis: str, angle: float) -> np.ndarray:
    """Single-qubit rotation exp(i angle/2 sigma_axis)."""
    sigma = PAULI[axis]
    return math.cos(angle / 2) * np.eye(2, dtype=complex) + 1j * math.sin(angle / 2) * sigma


def projector(vec: np.ndarray) -> np.ndarray:
    """|v><v| for a ket given as a 1-d array."""
    v = np.asarray(vec, dtype=complex).ravel()
    return np.outer(v, v.conj())


def tensor(a, b):
    """Kronecker product of two same-kind objects.

    The left operand becomes the most significant qubits of the result.
    """
    if isinstance(a, PureState) and isinstance(b, PureState):
        return PureState(np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        return DensityMatrix(np.kron(a.matrix, b.matrix))
    if isinstance(a, OperatorMatrix) and isinstance(b, OperatorMatrix):
        return OperatorMatrix(np.kron(a.matrix, b.matrix), unitary=a.unitary and b.unitary)
    raise KindMismatchError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")


def partial_trace_array(mat: np.ndarray, n: int, keep: Iterable[int]) -> np.ndarray:
    """Partial trace on a raw 2^n x 2^n array, keeping the listed qubits.

    Qubit 0 is the most significant (leftmost) factor.  The kept qubits
    retain their relative order.
    """
    keep = sorted(set(keep))
    if not keep:
        raise DimensionMismatchError("keep set must be nonempty")
    if keep[0] < 0 or keep[-1] >= n:
        raise DimensionMismatchError(f"keep set {keep} out of range for {n} qubits")
    remaining = list(range(n))
    t = np.asarray(mat, dtype=complex).reshape((2,) * (2 * n))
    for q in sorted(set(range(n)) - set(keep), reverse=True):
        pos = remaining.index(q)
        m = len(remaining)
        t = np.trace(t, axis1=pos, axis2=pos + m)
        remaining.remove(q)
    d = 2 ** len(remaining)
    return t.reshape(d, d)


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Reduced density matrix on the kept qubit indices."""
    return DensityMatrix(partial_trace_array(rho.matrix, rho.n, keep))


def expand_operator(op: np.ndarray, n: int, targets: Sequence[int]) -> np.ndarray:
    """Embed an operator acting on ``targets`` into an ``n``-qubit register.

    ``targets`` gives the register positions of the operator's qubits, in
    the operator's own ordering (first target = operator's most
    significant qubit).
    """
    op = np.asarray(op, dtype=complex)
    k = len(targets)
    if op.shape != (2**k, 2**k):
        raise DimensionMismatchError(f"operator shape {op.shape} does not match {k} targets")
    if len(set(targets)) != k or not all(0 <= t < n for t in targets):
        raise DimensionMismatchError(f"invalid target set {targets} for {n} qubits")
    rest = [q for q in range(n) if q not in targets]
    full = np.kron(op, np.eye(2 ** len(rest), dtype=complex))
    order = list(targets) + rest
    perm = [order.index(q) for q in range(n)]
    t = full.reshape((2,) * (2 * n))
    t = t.transpose(perm + [n + p for p in perm])
    return np.ascontiguousarray(t.reshape(2**n, 2**n))


def apply_unitary(rho: np.ndarray, u: np.ndarray, n: int | None = None,
                  targets: Sequence[int] | None = None) -> np.ndarray:
    """U rho U† on a raw array, optionally embedding U on target qubits."""
    if targets is not None:
        u = expand_operator(u, n if n is not None else _qubit_count(rho.shape[0]), targets)
    return u @ rho @ u.conj().T


def apply_kraus(rho: np.ndarray, kraus: Sequence[np.ndarray]) -> np.ndarray:
    """Sum_k K rho K† for a list of full-register Kraus operators."""
    out = np.zeros_like(np.asarray(rho, dtype=complex))
    for k in kraus:
        out += k @ rho @ k.conj().T
    return out


def project(rho: np.ndarray, proj: np.ndarray) -> tuple[float, np.ndarray | None]:
    """Apply a projector; return (weight, renormalized state or None).

    Weights at roundoff scale count as zero: renormalizing them would
    amplify floating-point asymmetry into an unphysical state.
    """
    sub = proj @ rho @ proj.conj().T
    w = float(sub.trace().real)
    scale = abs(float(np.trace(rho).real)) or 1.0
    if w <= 1e-14 * scale:
        return max(w, 0.0), None
    out = sub / w
    return w, 0.5 * (out + out.conj().T)


def max_entangled(n: int) -> PureState:
    """Maximally entangled state of 2n qubits, sum_i |i>|i> / sqrt(2^n)."""
    d = 2**n
    amps = np.zeros(d * d, dtype=complex)
    amps[np.arange(d) * d + np.arange(d)] = 1.0 / math.sqrt(d)
    return PureState(amps)


def state_fidelity(rho: DensityMatrix, psi: PureState) -> float:
    """<psi| rho |psi>."""
    if rho.dim != psi.dim:
        raise DimensionMismatchError(f"dimension mismatch {rho.dim} vs {psi.dim}")
    val = psi.amplitudes.conj() @ rho.matrix @ psi.amplitudes
    if abs(val.imag) > 1e-10:
        raise InvalidStateError(f"fidelity has imaginary part {val.imag}")
    return float(val.real)


def purity(rho: DensityMatrix) -> float:
    """Tr[rho^2]."""
    return float(np.trace(rho.matrix @ rho.matrix).real)


def binary_entropy(x: float) -> float:
    """h(x) = -x log2 x - (1-x) log2 (1-x), with h(0) = h(1) = 0."""
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return float(-x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x))


def concurrence(rho: DensityMatrix) -> float:
    """Two-qubit concurrence, C = max(0, l1 - l2 - l3 - l4).

    The l_i are the decreasingly sorted square roots of the eigenvalues of
    rho (sy ⊗ sy) rho* (sy ⊗ sy), evaluated through the Hermitian form
    sqrt(rho) rho~ sqrt(rho) so that degenerate zero eigenvalues stay
    accurate to machine precision.
    """
    if rho.dim != 4:
        raise DimensionMismatchError("concurrence is defined for two qubits only")
    yy = np.kron(PAULI["y"], PAULI["y"])
    rho_tilde = yy @ rho.matrix.conj() @ yy
    evals, vecs = np.linalg.eigh(rho.matrix)
    # eigenvalues at the numerical noise floor must become exact zeros:
    # the square root otherwise amplifies 1e-16 noise to 1e-8 in sqrt(rho)
    evals = np.where(evals < 1e-13 * evals.max(), 0.0, evals)
    sqrt_rho = (vecs * np.sqrt(evals)) @ vecs.conj().T
    herm = sqrt_rho @ rho_tilde @ sqrt_rho
    herm = 0.5 * (herm + herm.conj().T)
    lams_sq = np.linalg.eigvalsh(herm)
    lams_sq = np.where(lams_sq < 1e-13 * max(lams_sq.max(), 0.0), 0.0, lams_sq)
    lams = np.sqrt(lams_sq)
    return float(max(0.0, lams[3] - lams[2] - lams[1] - lams[0]))


def entanglement_of_formation(rho: DensityMatrix) -> float:
    """Two-qubit entanglement of formation via the concurrence closed form."""
    c = concurrence(rho)
    return binary_entropy((1.0 + math.sqrt(max(0.0, 1.0 - c * c))) / 2.0)


def random_pure_state(n: int, rng: np.random.Generator) -> PureState:
    """Haar-ish random pure state (normalized complex Gaussian vector)."""
    d = 2**n
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return PureState(v / np.linalg.norm(v))


def random_density_matrix(n: int, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Random mixed state from a Wishart-style construction."""
    d = 2**n
    r = rank or d
    g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    m = g @ g.conj().T
    return DensityMatrix(m / m.trace())
