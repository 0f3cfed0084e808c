"""Single-case fixed-point power flow.

The demand-node balance is rearranged into the iteration

    v_(n+1) = F (v_(n)*)^(-1) + w

with constant matrices built once per operating point:

    A = diag(alpha_p . s*)
    B = diag(alpha_z . s*) + Y_dd
    c = Y_ds v_s + alpha_i . s*
    F = -B^(-1) A,   w = -B^(-1) c

where ``.`` is elementwise product and ``(.)^(-1)`` the elementwise
reciprocal.  F and w are applied through a single LU factorization of B.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .network import NetworkModel

__all__ = [
    "SolveOptions",
    "SolveResult",
    "FpiMatrices",
    "SingularSystemError",
    "assemble_fpi",
    "fpi_solve",
    "power_residual",
    "contraction_estimate",
]

# below this magnitude an iterate entry is perturbed; 1/conj(v) is singular
# at the origin and basin scans must survive near-zero starts
ZERO_VOLTAGE_GUARD = 1e-12


class SingularSystemError(RuntimeError):
    """Raised when the constant iteration matrix B cannot be factorized."""


@dataclass(frozen=True)
class SolveOptions:
    """Iteration controls shared by the FPI and NR solvers."""

    tolerance: float = 1e-10
    max_iterations: int = 100
    initial_voltage: np.ndarray | None = None
    residual_tolerance: float = 1e-8
    compute_contraction: bool = False

    def __post_init__(self) -> None:
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class SolveResult:
    """Converged (or final) voltages plus convergence diagnostics."""

    v: np.ndarray
    iterations: int
    converged: bool
    residual: float
    contraction_k: float | None = None
    diagnostic: str | None = None
    # per-iteration max-norm and 1-norm step sizes, for convergence analysis
    step_inf: np.ndarray = field(default_factory=lambda: np.empty(0))
    step_l1: np.ndarray = field(default_factory=lambda: np.empty(0))


@dataclass
class FpiMatrices:
    """Constant terms of the iteration for one operating point.

    ``a`` is the diagonal of A; ``F`` is available explicitly via
    :meth:`f_dense` but the solver applies it through ``lu``.
    """

    a: np.ndarray
    B: sparse.csc_matrix
    c: np.ndarray
    w: np.ndarray
    lu: object

    def f_dense(self) -> np.ndarray:
        """Materialize F = -B^(-1) diag(a) (small systems / inspection)."""
        return -self.lu.solve(np.diag(self.a).astype(complex))

    def apply_f(self, u: np.ndarray) -> np.ndarray:
        return -self.lu.solve(self.a * u)


def _find_empty_rows(m: sparse.csc_matrix) -> list[int]:
    csr = m.tocsr()
    return [int(i) for i in np.where(np.diff(csr.indptr) == 0)[0]]


def assemble_fpi(model: NetworkModel, s: np.ndarray) -> FpiMatrices:
    """Build A, B, c, F, w for demand powers ``s`` (consumption positive)."""
    s = np.asarray(s, dtype=complex).ravel()
    b = model.n_demand
    if s.shape[0] != b:
        raise ValueError(f"load vector sized {s.shape[0]}, expected {b}")
    zc = model.zip
    sc = np.conj(s)
    a = zc.alpha_p * sc
    B = (sparse.diags(zc.alpha_z * sc) + model.admittance.y_dd).tocsc()
    c = model.source_injection() + zc.alpha_i * sc
    try:
        lu = splu(B)
    except RuntimeError as exc:
        empty = _find_empty_rows(B)
        detail = f"; structurally empty rows {empty}" if empty else ""
        raise SingularSystemError(
            f"iteration matrix B is singular: {exc}{detail}"
        ) from exc
    w = -lu.solve(c.astype(complex))
    return FpiMatrices(a=a, B=B, c=c, w=w, lu=lu)


def _flat_start(model: NetworkModel) -> np.ndarray:
    return np.full(model.n_demand, abs(model.slack.v_s) * (1.0 + 0.0j))


def fpi_solve(
    model: NetworkModel, s: np.ndarray, opts: SolveOptions = SolveOptions()
) -> SolveResult:
    """Fixed-point iteration until max|dv| < tolerance or the iteration cap.

    Convergence is confirmed by a mandatory power-residual post-check;
    non-convergence is reported in the result, not raised.
    """
    s = np.asarray(s, dtype=complex).ravel()
    mats = assemble_fpi(model, s)
    if opts.initial_voltage is not None:
        v = np.asarray(opts.initial_voltage, dtype=complex).ravel().copy()
        if v.shape[0] != model.n_demand:
            raise ValueError("initial voltage length mismatch")
    else:
        v = _flat_start(model)

    if np.all(mats.a == 0):
        # A = 0 makes the map constant: one application reaches the fixed
        # point exactly (zero load, or a purely linear alpha_z/alpha_i load)
        dv = np.abs(mats.w - v)
        residual = power_residual(model, mats.w, s)
        return SolveResult(
            v=mats.w.copy(),
            iterations=1,
            converged=residual < opts.residual_tolerance,
            residual=residual,
            contraction_k=0.0 if opts.compute_contraction else None,
            step_inf=np.array([dv.max()]),
            step_l1=np.array([dv.sum()]),
        )

    step_inf: list[float] = []
    step_l1: list[float] = []
    diagnostic = None
    step_met = False
    n = 0
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        while n < opts.max_iterations:
            small = np.abs(v) < ZERO_VOLTAGE_GUARD
            if small.any():
                v = np.where(small, ZERO_VOLTAGE_GUARD * (1.0 + 0.0j), v)
                diagnostic = f"zero-voltage guard applied at iteration {n + 1}"
            v_next = mats.apply_f(1.0 / np.conj(v)) + mats.w
            n += 1
            if not np.all(np.isfinite(v_next.view(float))):
                diagnostic = f"diverged: non-finite iterate at iteration {n}"
                v = v_next
                break
            dv = np.abs(v_next - v)
            step_inf.append(float(dv.max()))
            step_l1.append(float(dv.sum()))
            v = v_next
            if step_inf[-1] < opts.tolerance:
                step_met = True
                break

    with np.errstate(invalid="ignore", over="ignore"):
        residual = power_residual(model, v, s)
    converged = step_met and residual < opts.residual_tolerance
    k = None
    if opts.compute_contraction and np.all(np.isfinite(v.view(float))):
        k = contraction_estimate(model, v, s)
    return SolveResult(
        v=v,
        iterations=n,
        converged=converged,
        residual=residual,
        contraction_k=k,
        diagnostic=diagnostic,
        step_inf=np.array(step_inf),
        step_l1=np.array(step_l1),
    )


def zip_power(model: NetworkModel, v: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Power drawn by the ZIP load at voltage ``v``.

    The constant-current fraction holds the current phasor at its nominal
    value, so its power term scales with complex v (not |v|).
    """
    zc = model.zip
    return (
        zc.alpha_z * s * np.abs(v) ** 2 + zc.alpha_i * s * v + zc.alpha_p * s
    )


def residual_per_case(
    model: NetworkModel, v: np.ndarray, s: np.ndarray
) -> np.ndarray:
    """Max nodal power-balance error; columns are cases for 2-D input."""
    v = np.asarray(v, dtype=complex)
    s = np.asarray(s, dtype=complex)
    src = model.source_injection()
    if v.ndim == 2:
        src = src[:, None]
        zc = model.zip
        s_load = (
            zc.alpha_z[:, None] * s * np.abs(v) ** 2
            + zc.alpha_i[:, None] * s * v
            + zc.alpha_p[:, None] * s
        )
    else:
        s_load = zip_power(model, v, s)
    mismatch = s_load + v * np.conj(src + model.admittance.y_dd @ v)
    out = np.abs(mismatch).max(axis=0)
    return out


def power_residual(model: NetworkModel, v: np.ndarray, s: np.ndarray) -> float:
    """Max over nodes of |s_zip(v) + v * conj(Y_ds v_s + Y_dd v)|."""
    return float(residual_per_case(model, v, s))


def contraction_estimate(
    model: NetworkModel, v: np.ndarray, s: np.ndarray
) -> float:
    """Contraction scalar k = ||B^(-1) diag(1/z_l)||_1 at the point ``v``.

    z_l = |v|^2 / s* is the equivalent load impedance per node; zero-load
    nodes contribute nothing (infinite load impedance).  The 1-norm is the
    maximum absolute column sum, so

        k = max_j  colsum_j(|B^(-1)|) * |s_j| / |v_j|^2

    k < 1 certifies the iteration is a contraction at the solution.
    """
    s = np.asarray(s, dtype=complex).ravel()
    v = np.asarray(v, dtype=complex).ravel()
    if np.any(np.abs(v) == 0):
        raise ValueError("contraction estimate requires nonzero voltages")
    mats = assemble_fpi(model, s)
    zb = mats.lu.solve(np.eye(model.n_demand, dtype=complex))
    colsums = np.abs(zb).sum(axis=0)
    inv_zl = np.abs(s) / np.abs(v) ** 2
    return float(np.max(colsums * inv_zl, initial=0.0))
