"""Globally optimal operating points for MISO wireless power transfer links."""

__version__ = "0.1.0"

from .circuit import (
    C0,
    PRESET_FREQUENCY,
    PRESETS,
    GeometryError,
    GeometrySpec,
    ImpedanceMatrix,
    Loading,
    Loop,
    PassivityError,
    SchemaError,
    apply_loading,
    build_loop_system,
    load_impedance_file,
    matrix_from_json,
    matrix_to_json,
    mutual_inductance,
    partition,
    save_impedance_file,
)
from .closedform import (
    ClosedFormSolution,
    NoCouplingError,
    max_pte,
    mutual_q,
    optimal_load,
    output_impedance,
    solve_closed_form,
    solve_min_loss_qp,
)
from .oracle import (
    IdentityReport,
    OracleReport,
    brute_force_qcqp,
    minimize_loss_descent,
    verify_identities,
)
from .pims import PimEigensystem, pim_eigensystem, pim_split, port_impedance_matrices
from .pipeline import (
    LoadSearch,
    PipelineOptions,
    RelaxationError,
    SdrResult,
    full_pipeline,
    optimize_load,
    result_record,
    solve_relaxation,
)
from .qcqp import QcqpProblem, build_problem, evaluate, realify
from .sdp import KktReport, SdpInstance, SdpOptions, SdpSolution, check_kkt, solve

__all__ = [
    "C0",
    "PRESET_FREQUENCY",
    "PRESETS",
    "ClosedFormSolution",
    "GeometryError",
    "GeometrySpec",
    "IdentityReport",
    "ImpedanceMatrix",
    "KktReport",
    "LoadSearch",
    "Loading",
    "Loop",
    "NoCouplingError",
    "OracleReport",
    "PassivityError",
    "PimEigensystem",
    "PipelineOptions",
    "QcqpProblem",
    "RelaxationError",
    "SchemaError",
    "SdpInstance",
    "SdpOptions",
    "SdpSolution",
    "SdrResult",
    "apply_loading",
    "brute_force_qcqp",
    "build_loop_system",
    "build_problem",
    "check_kkt",
    "evaluate",
    "full_pipeline",
    "load_impedance_file",
    "matrix_from_json",
    "matrix_to_json",
    "max_pte",
    "minimize_loss_descent",
    "mutual_inductance",
    "mutual_q",
    "optimal_load",
    "optimize_load",
    "output_impedance",
    "partition",
    "pim_eigensystem",
    "pim_split",
    "port_impedance_matrices",
    "realify",
    "result_record",
    "save_impedance_file",
    "solve",
    "solve_closed_form",
    "solve_min_loss_qp",
    "solve_relaxation",
    "verify_identities",
    "__version__",
]
