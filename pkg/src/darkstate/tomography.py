"""Simulated coincidence counting and maximum-likelihood reconstruction.

Measurement settings draw from the six-state alphabet per qubit (three
mutually unbiased bases), counts are Poissonian, and states / process
matrices are reconstructed with the iterative R-rho-R fixed-point method:

    R(rho) = sum_j (f_j / p_j(rho)) Pi_j,    rho <- N[R rho R]

Process matrices are handled through channel-state duality: a preparation-
projection pair maps to the product ket conj(prep) (x) proj on the doubled
register, which turns process estimation into state estimation.  No trace
preservation is imposed, so postselected (trace-decreasing) channels
reconstruct naturally; the quality metrics normalize away the scale.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .qmath import (
    BASIS_LABELS,
    DensityMatrix,
    OperatorMatrix,
    max_entangled,
    partial_trace_array,
    product_ket,
    projector,
)

MLE_TOL = 1e-10
MLE_MAX_ITERS = 20000
_PROB_FLOOR = 1e-14

SERIAL_HEADER = "# darkstate-tomogram v1"


class IncompleteMeasurementError(ValueError):
    """The measurement set cannot determine the state (singular frame)."""


def _as_seed(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


@dataclass(frozen=True)
class MeasurementSetting:
    """One preparation/projection record.

    ``preparation`` is empty for state tomography; for process tomography
    it lists the input product-state labels, one per qubit.
    """

    preparation: tuple[str, ...]
    projection: tuple[str, ...]
    duration: float = 1.0

    def __post_init__(self):
        for lab in (*self.preparation, *self.projection):
            if lab not in BASIS_LABELS:
                raise ValueError(f"unknown state label {lab!r}")
        if not self.projection:
            raise ValueError("projection labels must be nonempty")
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")


@dataclass(frozen=True)
class Tomogram:
    """Raw tomography data: settings with their detection-event counts."""

    settings: tuple[MeasurementSetting, ...]
    counts: np.ndarray
    rate_reference: float = 300.0

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        if counts.shape != (len(self.settings),):
            raise ValueError("counts length must match settings length")
        if (counts < 0).any():
            raise ValueError("counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "settings", tuple(self.settings))


@dataclass(frozen=True)
class ProcessMatrix:
    """Choi-form representation of an n-qubit channel on 2n qubits.

    The trace is free: postselected channels carry their success weight.
    """

    chi: np.ndarray
    n: int

    def __post_init__(self):
        chi = np.asarray(self.chi, dtype=complex)
        d = 4**self.n
        if chi.shape != (d, d):
            raise ValueError(f"chi shape {chi.shape} does not match n = {self.n}")
        scale = max(abs(chi.trace().real), 1.0)
        if np.abs(chi - chi.conj().T).max() > 1e-10 * scale:
            raise ValueError("chi is not Hermitian")
        if np.linalg.eigvalsh(chi).min() < -1e-10 * scale:
            raise ValueError("chi is not positive semidefinite")
        chi.setflags(write=False)
        object.__setattr__(self, "chi", chi)

    def normalized_state(self) -> DensityMatrix:
        tr = self.chi.trace().real
        if tr <= 0.0:
            raise ValueError("chi has nonpositive trace")
        return DensityMatrix(self.chi / tr)


@dataclass(frozen=True)
class BootstrapEstimate:
    """Monte-Carlo resampling summary of a scalar statistic."""

    value: float
    std: float
    samples: int = 1000

    def __post_init__(self):
        if self.std < 0.0:
            raise ValueError("std must be nonnegative")
        if self.samples < 1:
            raise ValueError("samples must be positive")


def build_state_settings(n: int, duration: float = 1.0) -> tuple[MeasurementSetting, ...]:
    """All 6^n product projections for state tomography of n qubits."""
    return tuple(
        MeasurementSetting((), proj, duration)
        for proj in itertools.product(BASIS_LABELS, repeat=n)
    )


def build_process_settings(n: int, duration: float = 1.0) -> tuple[MeasurementSetting, ...]:
    """All 6^n x 6^n preparation-projection pairs for process tomography."""
    return tuple(
        MeasurementSetting(prep, proj, duration)
        for prep in itertools.product(BASIS_LABELS, repeat=n)
        for proj in itertools.product(BASIS_LABELS, repeat=n)
    )


def setting_kets(settings: Sequence[MeasurementSetting], process: bool) -> np.ndarray:
    """Stack of measurement kets, one row per setting.

    For process settings the preparation half is conjugated, which is the
    channel-state duality convention that makes the Choi matrix appear as
    an ordinary state to the estimator.
    """
    rows = []
    for s in settings:
        kp = product_ket(s.projection)
        if process:
            if not s.preparation:
                raise ValueError("process setting lacks preparation labels")
            rows.append(np.kron(product_ket(s.preparation).conj(), kp))
        else:
            if s.preparation:
                raise ValueError("state setting carries preparation labels")
            rows.append(kp)
    return np.array(rows, dtype=complex)


def setting_probability(rho: np.ndarray | DensityMatrix, setting: MeasurementSetting) -> float:
    """Born probability Tr[Pi rho] of one projection."""
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    k = product_ket(setting.projection)
    return float(np.real(k.conj() @ mat @ k))


def simulate_counts(true_state: DensityMatrix | np.ndarray,
                    settings: Sequence[MeasurementSetting],
                    rate: float, seed: int) -> Tomogram:
    """Draw Poissonian counts for every setting, mean = rate * t * Tr[Pi rho]."""
    if rate <= 0.0:
        raise ValueError("rate must be positive")
    mat = true_state.matrix if isinstance(true_state, DensityMatrix) else np.asarray(true_state)
    kets = setting_kets(settings, process=False)
    if kets.shape[1] != mat.shape[0]:
        raise ValueError("projection dimension does not match state dimension")
    probs = np.einsum("nd,de,ne->n", kets.conj(), mat, kets).real.clip(0.0, None)
    durations = np.array([s.duration for s in settings])
    rng = np.random.default_rng(_as_seed(seed))
    counts = rng.poisson(rate * durations * probs)
    return Tomogram(tuple(settings), counts, rate_reference=rate)


def simulate_channel_counts(channel: Callable[[np.ndarray], np.ndarray], n: int,
                            rate: float, seed: int,
                            settings: Sequence[MeasurementSetting] | None = None) -> Tomogram:
    """Poissonian process-tomography counts for a (possibly trace-decreasing) channel."""
    if rate <= 0.0:
        raise ValueError("rate must be positive")
    if settings is None:
        settings = build_process_settings(n)
    outputs: dict[tuple[str, ...], np.ndarray] = {}
    means = np.empty(len(settings))
    for i, s in enumerate(settings):
        if s.preparation not in outputs:
            outputs[s.preparation] = channel(projector(product_ket(s.preparation)))
        out = outputs[s.preparation]
        k = product_ket(s.projection)
        p = float(np.real(k.conj() @ out @ k))
        means[i] = rate * s.duration * max(p, 0.0)
    rng = np.random.default_rng(_as_seed(seed))
    return Tomogram(tuple(settings), rng.poisson(means), rate_reference=rate)


def _check_complete(kets: np.ndarray) -> None:
    """Verify the projectors span the full operator space.

    The rank test vectorizes each projector; for very large setting lists
    (the 6^6 case) that matrix would not fit comfortably, so only the cheap
    necessary conditions are applied there.
    """
    n_set, d = kets.shape
    if n_set < d * d:
        raise IncompleteMeasurementError(
            f"{n_set} settings cannot determine a dimension-{d} state")
    if n_set * d * d <= 2_000_000:
        frame = np.einsum("nd,ne->nde", kets, kets.conj()).reshape(n_set, d * d)
        svals = np.linalg.svd(frame, compute_uv=False)
        if svals[d * d - 1] < 1e-9 * svals[0]:
            raise IncompleteMeasurementError(
                "measurement set is informationally incomplete (singular frame)")
    else:
        gram = kets.T @ kets.conj()
        evals = np.linalg.eigvalsh(gram)
        if evals.min() < 1e-9 * max(evals.max(), 1.0):
            raise IncompleteMeasurementError(
                "measurement set is informationally incomplete (singular frame)")


def _mle_engine(kets: np.ndarray, counts: np.ndarray, tol: float, max_iters: int,
                track_likelihood: bool = False):
    """Batched R-rho-R iteration.

    ``counts`` has shape (B, N); returns (rho (B, d, d), info).  The
    likelihood trace is recorded only for B = 1.
    """
    b, n_set = counts.shape
    d = kets.shape[1]
    eye = np.eye(d, dtype=complex)
    rho = np.tile(eye / d, (b, 1, 1))
    zero_total = counts.sum(axis=1) == 0
    loglik: list[float] = []
    kc = kets.conj()
    iterations = 0
    converged = False
    for iterations in range(1, max_iters + 1):
        if b == 1:
            x = kc @ rho[0]
            p = np.einsum("ne,ne->n", x, kets).real[None, :]
        else:
            p = np.einsum("nd,bde,ne->bn", kc, rho, kets).real
        p = p.clip(_PROB_FLOOR, None)
        if track_likelihood and b == 1:
            pos = counts[0] > 0
            loglik.append(float(np.sum(counts[0, pos] * np.log(p[0, pos]))))
        w = counts / p
        if b == 1:
            r_op = (kets.T * w[0]) @ kc
            new = r_op @ rho[0] @ r_op
            new = new[None, :, :]
        else:
            r_op = np.einsum("bn,nd,ne->bde", w, kets, kc)
            new = r_op @ rho @ r_op
        new = 0.5 * (new + np.conj(np.swapaxes(new, 1, 2)))
        traces = np.einsum("bdd->b", new).real
        traces[traces <= 0.0] = 1.0
        new /= traces[:, None, None]
        if zero_total.any():
            new[zero_total] = eye / d
        delta = np.abs(new - rho).max()
        rho = new
        if delta < tol:
            converged = True
            break
    info = {"iterations": iterations, "converged": converged,
            "loglik": np.array(loglik)}
    return rho, info


def mle_state(tomogram: Tomogram, dim: int | None = None, tol: float = MLE_TOL,
              max_iters: int = MLE_MAX_ITERS, return_info: bool = False):
    """Maximum-likelihood state reconstruction from a tomogram."""
    kets = setting_kets(tomogram.settings, process=False)
    if dim is not None and kets.shape[1] != dim:
        raise ValueError(f"settings act on dimension {kets.shape[1]}, expected {dim}")
    if tomogram.counts.sum() == 0:
        raise ValueError("tomogram has zero total counts")
    _check_complete(kets)
    rho, info = _mle_engine(kets, tomogram.counts[None, :], tol, max_iters,
                            track_likelihood=return_info)
    state = DensityMatrix(rho[0])
    return (state, info) if return_info else state


def mle_state_batched(settings: Sequence[MeasurementSetting], counts: np.ndarray,
                      tol: float = MLE_TOL, max_iters: int = MLE_MAX_ITERS) -> np.ndarray:
    """Reconstruct many resampled tomograms at once; returns (B, d, d)."""
    kets = setting_kets(settings, process=False)
    _check_complete(kets)
    rho, _ = _mle_engine(kets, np.asarray(counts, dtype=float), tol, max_iters)
    return rho


def mle_process(tomogram: Tomogram, n: int | None = None, tol: float = MLE_TOL,
                max_iters: int = MLE_MAX_ITERS, return_info: bool = False):
    """Maximum-likelihood process reconstruction (Choi form, trace free)."""
    if not tomogram.settings or not tomogram.settings[0].preparation:
        raise ValueError("process tomography requires preparation labels")
    if n is None:
        n = len(tomogram.settings[0].projection)
    if any(len(s.preparation) != n or len(s.projection) != n for s in tomogram.settings):
        raise ValueError(f"settings do not describe an {n}-qubit channel")
    if tomogram.counts.sum() == 0:
        raise ValueError("tomogram has zero total counts")
    kets = setting_kets(tomogram.settings, process=True)
    _check_complete(kets)
    chi, info = _mle_engine(kets, tomogram.counts[None, :], tol, max_iters,
                            track_likelihood=return_info)
    proc = ProcessMatrix(chi[0], n)
    return (proc, info) if return_info else proc


def mle_process_batched(settings: Sequence[MeasurementSetting], counts: np.ndarray,
                        tol: float = MLE_TOL, max_iters: int = MLE_MAX_ITERS) -> np.ndarray:
    """Batched process reconstruction; returns (B, 4^n, 4^n) raw arrays."""
    kets = setting_kets(settings, process=True)
    _check_complete(kets)
    chi, _ = _mle_engine(kets, np.asarray(counts, dtype=float), tol, max_iters)
    return chi


def channel_to_choi(operators, n: int | None = None) -> ProcessMatrix:
    """Exact Choi matrix of a channel given by Kraus operators (or one unitary).

    chi = sum_k (I (x) K_k) |Phi_n><Phi_n| (I (x) K_k)† with the input copy
    on the high qubits.
    """
    if isinstance(operators, (OperatorMatrix, np.ndarray)):
        operators = [operators]
    mats = [op.matrix if isinstance(op, OperatorMatrix) else np.asarray(op, dtype=complex)
            for op in operators]
    if not mats:
        raise ValueError("empty Kraus list")
    d = mats[0].shape[0]
    if n is None:
        n = int(round(math.log2(d)))
    if any(m.shape != (d, d) for m in mats) or 2**n != d:
        raise ValueError("Kraus operators must be square with dimension 2^n")
    phi = max_entangled(n).amplitudes
    eye = np.eye(d, dtype=complex)
    chi = np.zeros((d * d, d * d), dtype=complex)
    for m in mats:
        v = np.kron(eye, m) @ phi
        chi += np.outer(v, v.conj())
    return ProcessMatrix(chi, n)


def apply_choi(proc: ProcessMatrix, rho: np.ndarray | DensityMatrix) -> np.ndarray:
    """Act with the channel encoded by a Choi matrix; output may lose trace."""
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    d = 2**proc.n
    if mat.shape != (d, d):
        raise ValueError("input dimension does not match the channel")
    weighted = np.kron(mat.T, np.eye(d, dtype=complex)) @ proc.chi
    return d * partial_trace_array(weighted, 2 * proc.n, range(proc.n, 2 * proc.n))


def _chi_array(chi) -> np.ndarray:
    return chi.chi if isinstance(chi, ProcessMatrix) else np.asarray(chi, dtype=complex)


def process_fidelity(chi, chi_ideal) -> float:
    """Normalized overlap Tr[chi chi_ideal] / (Tr[chi] Tr[chi_ideal])."""
    a, b_mat = _chi_array(chi), _chi_array(chi_ideal)
    if a.shape != b_mat.shape:
        raise ValueError("process matrices have different dimensions")
    ta, tb = a.trace().real, b_mat.trace().real
    if ta <= 0.0 or tb <= 0.0:
        raise ValueError("process matrix has nonpositive trace")
    return float(np.trace(a @ b_mat).real / (ta * tb))


def process_purity(chi) -> float:
    """Tr[chi^2] / Tr[chi]^2; equals 1 only for a single-Kraus operation."""
    a = _chi_array(chi)
    tr = a.trace().real
    if tr <= 0.0:
        raise ValueError("process matrix has nonpositive trace")
    return float(np.trace(a @ a).real / tr**2)


def resample_counts(counts: np.ndarray, samples: int, seed: int,
                    key: tuple[int, ...] = ()) -> np.ndarray:
    """Poisson-resampled count matrix of shape (samples, N)."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(*key, 1)))
    base = np.asarray(counts, dtype=float)
    return rng.poisson(np.broadcast_to(base, (samples, base.size)))


def bootstrap(tomogram: Tomogram, statistic: Callable[[Tomogram], float],
              samples: int = 1000, seed: int = 0) -> BootstrapEstimate:
    """Poissonian parametric bootstrap of a scalar statistic.

    Every count is redrawn as Poisson with mean equal to the observed
    count; the statistic is evaluated on each replica.  Replica i derives
    its stream from (seed, i), so results do not depend on evaluation
    order.
    """
    if samples < 2:
        raise ValueError("bootstrap needs at least 2 samples")
    values = np.empty(samples)
    base = tomogram.counts
    for i in range(samples):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(i,)))
        replica = Tomogram(tomogram.settings, rng.poisson(base), tomogram.rate_reference)
        values[i] = statistic(replica)
    return BootstrapEstimate(value=float(values.mean()),
                             std=float(values.std(ddof=1)),
                             samples=samples)


def tomogram_to_text(tomogram: Tomogram) -> str:
    """Serialize to the versioned plain-text record format.

    One line per setting: preparation labels (comma separated, ``-`` when
    absent), projection labels, duration, count.
    """
    lines = [SERIAL_HEADER,
             "# columns: preparation projection duration count",
             f"# rate_reference: {tomogram.rate_reference!r}"]
    for s, c in zip(tomogram.settings, tomogram.counts):
        # '.' marks "no preparation"; '-' is taken by the diagonal-basis label
        prep = ",".join(s.preparation) if s.preparation else "."
        proj = ",".join(s.projection)
        count = int(c) if float(c).is_integer() else float(c)
        lines.append(f"{prep} {proj} {s.duration!r} {count}")
    return "\n".join(lines) + "\n"


def tomogram_from_text(text: str) -> Tomogram:
    """Parse the plain-text record format produced by ``tomogram_to_text``."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != SERIAL_HEADER:
        raise ValueError("missing or unsupported tomogram header")
    rate = 300.0
    settings: list[MeasurementSetting] = []
    counts: list[float] = []
    for raw in lines[1:]:
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("# rate_reference:"):
                rate = float(line.split(":", 1)[1])
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"malformed tomogram record: {raw!r}")
        prep = () if parts[0] == "." else tuple(parts[0].split(","))
        proj = tuple(parts[1].split(","))
        settings.append(MeasurementSetting(prep, proj, float(parts[2])))
        counts.append(float(parts[3]))
    return Tomogram(tuple(settings), np.array(counts), rate_reference=rate)


def save_tomogram(tomogram: Tomogram, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(tomogram_to_text(tomogram))


def load_tomogram(path) -> Tomogram:
    with open(path, "r", encoding="ascii") as fh:
        return tomogram_from_text(fh.read())
