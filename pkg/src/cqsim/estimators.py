"""Analysis pipeline: Ramsey fits, charge-noise conversion, sensor
calibration, crosstalk removal, probability projection and truth tables.

Sensor-level naming follows ``l<ldd><rdd>``: ``l10`` is the left-sensor
level with the left qubit excited and the right qubit initialized.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares, minimize

from .core import PLANCK_EV_S

INPUT_LABELS = ("00", "01", "10", "11")


class FitError(RuntimeError):
    """A fit did not converge or the data carry no usable oscillation."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NormalizationWarning(UserWarning):
    """Normalization levels do not follow the expected ordering."""


class ProjectionWarning(UserWarning):
    """Probability projection hit a degenerate or unphysical input."""


# ---------------------------------------------------------------------------
# sensor traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SensorTrace:
    """One swept charge-sensor record."""

    axis: np.ndarray
    values: np.ndarray
    sensor: str = "right"

    def __post_init__(self) -> None:
        axis = np.asarray(self.axis, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if axis.ndim != 1 or axis.shape != values.shape:
            raise ValueError(f"axis and values must be 1-D of equal length, "
                             f"got {axis.shape} and {values.shape}")
        if not (np.all(np.isfinite(axis)) and np.all(np.isfinite(values))):
            raise ValueError("sensor trace contains non-finite values")
        if self.sensor not in ("left", "right"):
            raise ValueError(f"sensor must be 'left' or 'right', got {self.sensor!r}")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.axis)


def read_trace_csv(path, sensor: str = "right") -> SensorTrace:
    """Read a two-column ``axis,value`` CSV file."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["axis", "value"]:
        raise ValueError(f"{path}: expected header 'axis,value'")
    axis, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ValueError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
        try:
            axis.append(float(row[0]))
            values.append(float(row[1]))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return SensorTrace(np.array(axis), np.array(values), sensor)


def write_trace_csv(trace: SensorTrace, path) -> None:
    lines = ["axis,value"] + [f"{a:.12g},{v:.12g}" for a, v in zip(trace.axis, trace.values)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def amplitude_spectrum(values, step: float, *, axis: int = -1):
    """One-sided magnitude spectrum of mean-removed samples.

    Returns ``(freqs, magnitude)`` with ``freqs`` in cycles per unit of
    ``step``; with ``step`` in ps that is THz, so multiply by 1e3 for GHz.
    """
    values = np.asarray(values, dtype=float)
    centred = values - values.mean(axis=axis, keepdims=True)
    n = values.shape[axis]
    return np.fft.rfftfreq(n, step), np.abs(np.fft.rfft(centred, axis=axis))


# ---------------------------------------------------------------------------
# Ramsey fitting and charge noise
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RamseyFit:
    """Gaussian-damped cosine ``A exp(-t^2/T2*^2) cos(omega t + phi) + B``.

    Times are in ns and ``omega`` in rad/ns. ``t2star`` is ``inf`` for an
    undamped trace.
    """

    A: float
    B: float
    omega: float
    phi: float
    t2star: float
    covariance: np.ndarray = field(repr=False)
    residual_norm: float = 0.0
    nfev: int = 0

    @property
    def frequency(self) -> float:
        """Oscillation frequency in GHz."""
        return self.omega / (2 * math.pi)

    def __call__(self, tau):
        return ramsey_model(np.asarray(tau, float), self.A, self.B, self.omega, self.phi,
                            self.t2star)


def ramsey_model(tau, A, B, omega, phi, t2star):
    decay = 0.0 if math.isinf(t2star) else 1.0 / t2star ** 2
    return A * np.exp(-decay * tau ** 2) * np.cos(omega * tau + phi) + B


def _dominant_frequency(t: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Peak of a zero-padded spectrum on a uniform resampling of the trace."""
    n = len(t)
    grid = np.linspace(t[0], t[-1], n)
    yu = np.interp(grid, t, y)
    yu = yu - yu.mean()
    pad = 8 * int(2 ** math.ceil(math.log2(n)))
    mag = np.abs(np.fft.rfft(yu, pad))
    freqs = np.fft.rfftfreq(pad, grid[1] - grid[0])
    mag[0] = 0.0
    k = int(np.argmax(mag))
    return float(freqs[k]), float(mag[k] / max(np.abs(yu).sum(), 1e-300))


def fit_ramsey(trace: SensorTrace | tuple, *, time_scale: float = 1.0,
               subtract_background: bool = False, max_nfev: int = 2000) -> RamseyFit:
    """Least-squares fit of a Ramsey fringe.

    ``time_scale`` converts the trace axis to ns (``1e-3`` for ps). With
    ``subtract_background`` the mean is removed first and ``B`` is pinned
    to zero, which is how washed-out background linecuts are handled.
    """
    if isinstance(trace, SensorTrace):
        t, y = trace.axis * time_scale, trace.values
    else:
        t, y = (np.asarray(a, float) for a in trace)
        t = t * time_scale
    order = np.argsort(t, kind="stable")
    t, y = t[order], y[order]
    if len(t) < 8:
        raise FitError(f"need at least 8 points, got {len(t)}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise FitError("trace has non-finite values")
    if subtract_background:
        y = y - y.mean()
    spread = float(np.ptp(y))
    if spread <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        raise FitError("signal is constant; no oscillation to fit", {"ptp": spread})

    f0, strength = _dominant_frequency(t, y)
    span = float(t[-1] - t[0])
    if f0 <= 0 or f0 * span < 1.0:
        raise FitError("trace spans less than one oscillation period",
                       {"frequency": f0, "span": span})
    omega0 = 2 * math.pi * f0

    # parameters: A, B, omega, phi, k = 1/T2*^2 >= 0
    def residual(p):
        a, b, w, ph, k = p
        if subtract_background:
            b = 0.0
        return a * np.exp(-k * t ** 2) * np.cos(w * t + ph) + b - y

    b0 = 0.0 if subtract_background else float(np.mean(y))
    best = None
    for k0 in (0.0, 1.0 / span ** 2, 4.0 / span ** 2, 16.0 / span ** 2):
        # amplitude and phase by linear projection under the trial envelope
        env = np.exp(-k0 * t ** 2)
        basis = np.column_stack([env * np.cos(omega0 * t), env * np.sin(omega0 * t)])
        (c, s), *_ = np.linalg.lstsq(basis, y - b0, rcond=None)
        a0 = math.hypot(c, s)
        phi0 = math.atan2(-s, c)
        sol = least_squares(
            residual, [max(a0, 1e-12), b0, omega0, phi0, k0],
            bounds=([-np.inf, -np.inf, 0.0, -np.inf, 0.0], np.inf),
            x_scale=[max(spread, 1e-12), max(spread, 1e-12), omega0, 1.0, 1.0 / span ** 2],
            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev, method="trf",
        )
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None or best.status <= 0 or not np.all(np.isfinite(best.x)):
        raise FitError("least-squares did not converge",
                       {"status": getattr(best, "status", None),
                        "message": getattr(best, "message", "")})

    a, b, w, ph, k = (float(v) for v in best.x)
    if subtract_background:
        b = 0.0
    if a < 0:
        a, ph = -a, ph + math.pi
    ph = math.remainder(ph, 2 * math.pi)
    t2 = math.inf if k <= 0 else 1.0 / math.sqrt(k)

    jac = best.jac
    dof = max(len(t) - len(best.x), 1)
    s2 = 2 * best.cost / dof
    try:
        cov = np.linalg.pinv(jac.T @ jac) * s2
    except np.linalg.LinAlgError:
        cov = np.full((5, 5), np.nan)
    return RamseyFit(A=a, B=b, omega=w, phi=ph, t2star=t2, covariance=cov,
                     residual_norm=float(np.sqrt(2 * best.cost)), nfev=int(best.nfev))


def charge_noise_from_t2(t2star_ns: float) -> float:
    """Detuning noise ``h / (sqrt(2) pi T2*)`` in micro-eV."""
    if not t2star_ns > 0:
        raise ValueError(f"t2star must be > 0, got {t2star_ns}")
    if math.isinf(t2star_ns):
        return 0.0
    return PLANCK_EV_S / (math.sqrt(2) * math.pi * t2star_ns * 1e-9) * 1e6


def t2_from_sigma(sigma_ueV: float) -> float:
    """Inverse of :func:`charge_noise_from_t2`; returns ns."""
    if not sigma_ueV > 0:
        raise ValueError(f"sigma must be > 0, got {sigma_ueV}")
    return PLANCK_EV_S / (math.sqrt(2) * math.pi * sigma_ueV * 1e-6) * 1e9


# ---------------------------------------------------------------------------
# sensor calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalizationSet:
    """Sensor levels recorded for the four position-state preparations."""

    r00: float
    r01: float
    l00: float
    l01: float
    l10: float
    l11: float

    def __post_init__(self) -> None:
        for name in ("r00", "r01", "l00", "l01", "l10", "l11"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"normalization level {name} must be finite")
        if not (self.l10 > self.l11 > self.l01 > self.l00):
            warnings.warn(
                "left-sensor levels are not ordered l10 > l11 > l01 > l00 "
                f"({self.l10}, {self.l11}, {self.l01}, {self.l00})",
                NormalizationWarning, stacklevel=3)

    @classmethod
    def from_mapping(cls, data) -> "NormalizationSet":
        missing = [k for k in ("r00", "r01", "l00", "l01", "l10", "l11") if k not in data]
        if missing:
            raise ValueError(f"normalization is missing {', '.join(missing)}")
        return cls(**{k: float(data[k]) for k in ("r00", "r01", "l00", "l01", "l10", "l11")})


def calibrate_right(r, norm: NormalizationSet):
    """Right-qubit excited probability from the right sensor (may leave [0, 1])."""
    span = norm.r01 - norm.r00
    if span == 0:
        raise ValueError("degenerate normalization: r01 == r00")
    return (np.asarray(r, dtype=float) - norm.r00) / span if np.ndim(r) else \
        (float(r) - norm.r00) / span


def rdd_contribution(p1_rdd, norm: NormalizationSet):
    """Right-qubit share of the left-sensor signal."""
    return np.asarray(p1_rdd, dtype=float) * (norm.l01 - norm.l00)


def crosstalk_range(p1_rdd, norm: NormalizationSet):
    """Left-sensor levels ``(c_min, c_max)`` for the left qubit in 0 and 1."""
    p = np.asarray(p1_rdd, dtype=float)
    c_min = norm.l01 * p + norm.l00 * (1 - p)
    c_max = norm.l11 * p + norm.l10 * (1 - p)
    return c_min, c_max


def subtract_crosstalk(l, p1_rdd, norm: NormalizationSet):
    """Left-qubit excited probability with the right qubit's share removed.

    The right qubit adds ``rdd_contribution`` to both bounds of the left
    qubit's range, so it cancels and the bounds are used as raw levels.
    """
    c_min, c_max = crosstalk_range(p1_rdd, norm)
    width = c_max - c_min
    if np.any(width == 0):
        raise ValueError("degenerate crosstalk range: c_max == c_min")
    out = (np.asarray(l, dtype=float) - c_min) / width
    return float(out) if out.ndim == 0 else out


def forward_signals(p1_ldd, p1_rdd, norm: NormalizationSet):
    """Left and right sensor signals produced by given excited probabilities."""
    p_l = np.asarray(p1_ldd, dtype=float)
    p_r = np.asarray(p1_rdd, dtype=float)
    r = norm.r00 + p_r * (norm.r01 - norm.r00)
    c_min, c_max = crosstalk_range(p_r, norm)
    return c_min + p_l * (c_max - c_min), r


# ---------------------------------------------------------------------------
# probability projection
# ---------------------------------------------------------------------------


def mle_objective(p, q) -> float:
    """Gaussian likelihood cost with variance equal to the model probability."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    out = 0.0
    for pi, qi in zip(p, q):
        if pi > 0:
            out += (pi - qi) ** 2 / (2 * pi)
        elif qi != 0:
            return math.inf
    return out


@dataclass(frozen=True)
class MleResult:
    probabilities: np.ndarray
    degenerate: bool
    objective: float


def mle_project_with_info(p_exp) -> MleResult:
    """Closed-form minimizer of :func:`mle_objective` over the simplex.

    Stationarity of the cost gives ``p_i`` proportional to ``|q_i|``, so the
    optimum is the normalized absolute value. All-zero input is reported as
    degenerate and mapped to the uniform distribution.
    """
    q = np.asarray(p_exp, dtype=float)
    if q.ndim != 1 or q.size not in (2, 4):
        raise ValueError(f"expected a probability vector of length 2 or 4, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("probability vector has non-finite entries")
    mag = np.abs(q)
    total = mag.sum()
    if total == 0:
        uniform = np.full(q.size, 1.0 / q.size)
        return MleResult(uniform, True, mle_objective(uniform, q))
    p = mag / total
    return MleResult(p, False, mle_objective(p, q))


def mle_project(p_exp) -> np.ndarray:
    """Nearest valid distribution under the variance-weighted likelihood."""
    res = mle_project_with_info(p_exp)
    if res.degenerate:
        warnings.warn("all-zero input; returning the uniform distribution",
                      ProjectionWarning, stacklevel=2)
    return res.probabilities


def mle_project_numeric(p_exp, *, grid: int = 4) -> np.ndarray:
    """Direct minimization over ``p_i = t_i^2 / sum t^2``.

    Deterministic multistart from a coarse simplex grid followed by
    Nelder-Mead refinement. Slower than :func:`mle_project`; kept as an
    independent check of the closed form.
    """
    q = np.asarray(p_exp, dtype=float)
    n = q.size

    def cost(tv):
        s = float(np.dot(tv, tv))
        if s == 0:
            return math.inf
        p = tv ** 2 / s
        return sum((pi - qi) ** 2 / (2 * pi) if pi > 0 else (0.0 if qi == 0 else 1e300)
                   for pi, qi in zip(p, q))

    starts = []
    for combo in itertools.product(range(1, grid + 1), repeat=n):
        p = np.array(combo, float)
        starts.append(np.sqrt(p / p.sum()))
    best = None
    for x0 in starts:
        sol = minimize(cost, x0, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000})
        if best is None or sol.fun < best.fun:
            best = sol
    t = best.x
    return t ** 2 / np.dot(t, t)


def joint_distribution(p1_control: float, p1_target: float) -> np.ndarray:
    """Product distribution over ``00, 01, 10, 11`` (control bit first)."""
    return np.kron([1 - p1_control, p1_control], [1 - p1_target, p1_target])


def project_pair(p1_control: float, p1_target: float, *, mode: str = "per_qubit") -> np.ndarray:
    """Joint output distribution from two raw excited probabilities.

    ``per_qubit`` projects each qubit then takes the product; ``joint``
    projects the raw product. They agree for these separable inputs.
    """
    if mode == "per_qubit":
        c = mle_project([1 - p1_control, p1_control])
        t = mle_project([1 - p1_target, p1_target])
        return np.kron(c, t)
    if mode == "joint":
        return mle_project(joint_distribution(p1_control, p1_target))
    raise ValueError(f"unknown projection mode {mode!r}")


# ---------------------------------------------------------------------------
# truth tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruthTable:
    """Column-stochastic 4x4 matrix; column j is the output for input j."""

    matrix: np.ndarray
    column_tol: float = 1e-9

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        if m.shape != (4, 4):
            raise ValueError(f"truth table must be 4x4, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("truth table has non-finite entries")
        if np.min(m) < 0:
            raise ValueError("truth table has negative entries")
        sums = m.sum(axis=0)
        bad = np.abs(sums - 1) > self.column_tol
        if np.any(bad):
            cols = ", ".join(f"{INPUT_LABELS[j]}: {sums[j]:.6g}" for j in np.flatnonzero(bad))
            raise ValueError(f"truth-table columns do not sum to 1 ({cols})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def is_permutation(self) -> bool:
        m = self.matrix
        return bool(np.all((m == 0) | (m == 1)) and np.all(m.sum(axis=0) == 1)
                    and np.all(m.sum(axis=1) == 1))


CONDITIONAL_PI = TruthTable(np.array([
    [0, 1, 0, 0],
    [1, 0, 0, 0],
    [0, 0, 1, 0],
    [0, 0, 0, 1],
], dtype=float))
"""Target flips only when the control is in 0."""

IDENTITY_TABLE = TruthTable(np.eye(4))


def build_truth_table(outputs: Sequence, *, tol: float = 1e-6) -> TruthTable:
    """Stack four output distributions (inputs 00, 01, 10, 11) as columns."""
    cols = [np.asarray(o, dtype=float) for o in outputs]
    if len(cols) != 4 or any(c.shape != (4,) for c in cols):
        raise ValueError("need four length-4 output distributions")
    m = np.column_stack(cols)
    return TruthTable(m, column_tol=tol)


def _as_table(m, column_tol: float) -> TruthTable:
    if isinstance(m, TruthTable):
        return m
    return TruthTable(np.asarray(m, float), column_tol=column_tol)


def inquisition(m_exp, m_ideal=CONDITIONAL_PI, *, column_tol: float = 1e-6) -> float:
    """Mean probability of the ideal output over the four inputs."""
    exp = _as_table(m_exp, column_tol)
    ideal = _as_table(m_ideal, 1e-12)
    if not ideal.is_permutation():
        raise ValueError("ideal truth table must be a permutation matrix")
    return float(np.trace(ideal.matrix.T @ exp.matrix) / 4)


def electron_temperature(t0_mK: float, t_mc_mK: float) -> float:
    """Electron temperature as the quadrature sum of base and fridge terms."""
    if t0_mK < 0 or t_mc_mK < 0:
        raise ValueError("temperatures must be non-negative")
    return math.hypot(t0_mK, t_mc_mK)
