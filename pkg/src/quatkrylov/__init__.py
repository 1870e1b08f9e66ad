"""Quaternion Krylov solvers with total variation regularization.

The package is organised in layers: :mod:`quaternion` (algebra and real
counterparts), :mod:`krylov` (QGMRES family), :mod:`preconditioners`,
:mod:`tv` (QTV norm, reweighting and the regularized solvers),
:mod:`imaging` (forward models and metrics), :mod:`io` and :mod:`cli`.
"""

from .errors import (
    DimensionError,
    DivisionByZero,
    FormatError,
    InvalidParameter,
    PreconditionerError,
    QuatKrylovError,
    StructureError,
    VersionError,
)
from .quaternion import QMatrix, Quaternion, QVector, from_real_counterpart, to_real_counterpart
from .krylov import (
    SolveReport,
    SolverConfig,
    Termination,
    fqgmres,
    gmres_real,
    grade,
    irfgmres_real,
    qgmres,
    qgmres_left,
    qgmres_right,
)
from .preconditioners import jacobi_sqrt_residual, sgs_preconditioner
from .tv import DifferenceStack, QTVConfig, ctv_norm, qtv, qtv_fqgmres, qtv_fqgmres_improved

__version__ = "0.1.0"
