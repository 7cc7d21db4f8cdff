"""Simulation and analysis tools for two capacitively coupled charge qubits."""

__version__ = "0.1.0"

from .core import (
    CoupledParams,
    InvalidParameterError,
    QubitParams,
    build_h1q,
    build_h2q,
    conditional_detuning,
    ghz_to_ueV,
    splitting,
    ueV_to_ghz,
)
from .dynamics import (
    NoiseModel,
    ReadoutModel,
    SimResult,
    average_over_noise,
    excited_population,
    latched_signal,
    propagate_piecewise,
    simulate_conditional,
    simulate_correlated,
    simulate_ramsey,
)
from .estimators import (
    CONDITIONAL_PI,
    NormalizationSet,
    RamseyFit,
    SensorTrace,
    TruthTable,
    build_truth_table,
    calibrate_right,
    charge_noise_from_t2,
    electron_temperature,
    fit_ramsey,
    inquisition,
    mle_project,
    subtract_crosstalk,
    t2_from_sigma,
)
from .pulseprog import compile_timeline, format_program, parse_program
