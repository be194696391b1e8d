"""Spatially varying coefficients and nonlinearities of the intrinsic beam model.

The intrinsic model evolves the 12-vector ``y = (v, s)`` of body-frame
velocities and strains,

    dt y + A dx y + Bbar(x) y = gbar(y),

with ``A`` constant (see :mod:`beamstab.params`) and ``Bbar`` built from the
initial strain matrix of the undeformed (possibly precurved) shape.  In
characteristic variables ``r = L y`` the same dynamics read

    dt r + diag(-D, D) dx r + B(x) r = g(r),      B = L Bbar L^{-1},
    g(r) = L gbar(L^{-1} r).

This module assembles the per-node coefficient tables for a given reference
shape, evaluates the quadratic nonlinearity in both representations, and
implements the map from a pose history ``(p, R)`` to intrinsic variables.

Coefficient tables are immutable after assembly; all evaluation functions
are pure and accept batched inputs (leading axes broadcast).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import NotARotation, ValidationError
from .fd import diff1
from .params import BeamMatrices

__all__ = [
    "hat",
    "vec",
    "PrecurvedReference",
    "StateField",
    "straight_reference",
    "curved_reference",
    "assemble_coupling_physical",
    "coupling_pattern_blocks",
    "gbar",
    "gbar_pair",
    "gbar_jacobian_apply",
    "g_diag",
    "g_diag_pair",
    "quadratic_forms",
    "to_diagonal",
    "to_physical",
    "strains_velocities_from_pose",
    "dissipative_boundary",
    "reference_centerline",
    "reference_to_csv",
    "reference_from_csv",
]

E1 = np.array([1.0, 0.0, 0.0])


def hat(u: np.ndarray) -> np.ndarray:
    """Skew matrix of a 3-vector, so that hat(u) @ w == cross(u, w)."""
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape[:-1] + (3, 3))
    out[..., 0, 1] = -u[..., 2]
    out[..., 0, 2] = u[..., 1]
    out[..., 1, 0] = u[..., 2]
    out[..., 1, 2] = -u[..., 0]
    out[..., 2, 0] = -u[..., 1]
    out[..., 2, 1] = u[..., 0]
    return out


def vec(m: np.ndarray) -> np.ndarray:
    """Axial vector of the skew part of a 3x3 matrix (inverse of hat)."""
    m = np.asarray(m, dtype=float)
    return 0.5 * np.stack(
        [
            m[..., 2, 1] - m[..., 1, 2],
            m[..., 0, 2] - m[..., 2, 0],
            m[..., 1, 0] - m[..., 0, 1],
        ],
        axis=-1,
    )


@dataclass(frozen=True)
class PrecurvedReference:
    """Per-node data describing the beam before deformation.

    ``rotation`` holds the reference rotation R(x) on each grid node,
    ``curvature`` the rotational strain of the undeformed shape,
    ``strain_matrix`` the 6x6 block matrix [hat(curv), 0; hat(e1), hat(curv)],
    and ``coupling_phys`` / ``coupling_char`` the 12x12 lower-order coupling
    in physical and characteristic variables.
    """

    grid: np.ndarray            # (N+1,)
    rotation: np.ndarray        # (N+1, 3, 3)
    curvature: np.ndarray       # (N+1, 3)
    strain_matrix: np.ndarray   # (N+1, 6, 6)
    coupling_phys: np.ndarray   # (N+1, 12, 12)
    coupling_char: np.ndarray   # (N+1, 12, 12)

    @property
    def n_cells(self) -> int:
        return len(self.grid) - 1

    @property
    def dx(self) -> float:
        return float(self.grid[1] - self.grid[0])


@dataclass(frozen=True)
class StateField:
    """Grid samples of the 12-component state at one instant."""

    grid: np.ndarray       # (N+1,)
    repr: str              # "physical" | "diagonal"
    values: np.ndarray     # (N+1, 12)
    time: float = 0.0


def _strain_matrix(curvature: np.ndarray) -> np.ndarray:
    """Initial strain matrix samples from curvature samples (..., 3)."""
    hc = hat(curvature)
    n = curvature.shape[:-1]
    out = np.zeros(n + (6, 6))
    out[..., :3, :3] = hc
    out[..., 3:, 3:] = hc
    out[..., 3:, :3] = hat(np.broadcast_to(E1, n + (3,)))
    return out


def assemble_coupling_physical(matrices: BeamMatrices, strain_matrix: np.ndarray) -> np.ndarray:
    """Physical-variable coupling  [0, -M^{-1} E C^{-1}; E^T, 0]  at one or many nodes."""
    eb = np.asarray(strain_matrix, dtype=float)
    lead = eb.shape[:-2]
    minv = 1.0 / np.diag(matrices.mass)
    cinv = 1.0 / np.diag(matrices.flexibility)
    out = np.zeros(lead + (12, 12))
    # -M^{-1} E C^{-1}: row scale by 1/m_i, column scale by 1/c_j
    out[..., :6, 6:] = -(minv[:, None] * eb * cinv[None, :])
    out[..., 6:, :6] = np.swapaxes(eb, -1, -2)
    return out


def _coupling_char(matrices: BeamMatrices, coupling_phys: np.ndarray) -> np.ndarray:
    """Characteristic coupling  B = L Bbar L^{-1}  (batched)."""
    return np.einsum(
        "ij,...jk,kl->...il", matrices.to_char, coupling_phys, matrices.from_char
    )


def coupling_pattern_blocks(matrices: BeamMatrices, strain_matrix: np.ndarray) -> np.ndarray:
    """Closed-form characteristic coupling from the strain matrix alone.

    With P = D E^T and S = M^{-1} E D M, equals
    0.5 * [[P - S, P + S], [-(P + S), -(P - S)]]; agrees with
    L Bbar L^{-1} to machine precision and is used as a cross-check.
    """
    eb = np.asarray(strain_matrix, dtype=float)
    lead = eb.shape[:-2]
    d = np.diag(matrices.speed)
    m = np.diag(matrices.mass)
    p = d[:, None] * np.swapaxes(eb, -1, -2)
    s = (1.0 / m)[:, None] * eb * (d * m)[None, :]
    out = np.zeros(lead + (12, 12))
    out[..., :6, :6] = 0.5 * (p - s)
    out[..., :6, 6:] = 0.5 * (p + s)
    out[..., 6:, :6] = -0.5 * (p + s)
    out[..., 6:, 6:] = -0.5 * (p - s)
    return out


def _reference_from_samples(
    matrices: BeamMatrices,
    grid: np.ndarray,
    rotation: np.ndarray,
    curvature: np.ndarray,
) -> PrecurvedReference:
    strain = _strain_matrix(curvature)
    coupling_phys = assemble_coupling_physical(matrices, strain)
    return PrecurvedReference(
        grid=grid,
        rotation=rotation,
        curvature=curvature,
        strain_matrix=strain,
        coupling_phys=coupling_phys,
        coupling_char=_coupling_char(matrices, coupling_phys),
    )


def straight_reference(params, n_cells: int) -> PrecurvedReference:
    """Reference data for a straight, untwisted beam (zero curvature)."""
    from .params import derive_matrices

    if n_cells < 2:
        raise ValueError("need at least 2 cells")
    matrices = derive_matrices(params)
    grid = np.linspace(0.0, params.length, n_cells + 1)
    rotation = np.broadcast_to(np.eye(3), (n_cells + 1, 3, 3)).copy()
    curvature = np.zeros((n_cells + 1, 3))
    return _reference_from_samples(matrices, grid, rotation, curvature)


def _polar_project(r: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (polar factor) of a near-rotation 3x3 matrix."""
    u, _, vt = np.linalg.svd(r)
    out = u @ vt
    if np.linalg.det(out) < 0.0:
        u[:, -1] *= -1.0
        out = u @ vt
    return out


def curved_reference(params, n_cells: int, curvature_fn) -> PrecurvedReference:
    """Reference data for a precurved/pretwisted beam.

    ``curvature_fn(x) -> 3-vector`` is the rotational strain of the
    undeformed shape; the rotation field solves dR/dx = R hat(curv) from
    R(0) = I with classical RK4 and a polar re-projection each step, which
    keeps the orthogonality defect at roundoff level over long beams.
    C2-smooth curvature is recommended for second-order convergence of
    everything built on top; this is documented, not checked.
    """
    from .params import derive_matrices

    if n_cells < 2:
        raise ValueError("need at least 2 cells")
    matrices = derive_matrices(params)
    grid = np.linspace(0.0, params.length, n_cells + 1)
    h = grid[1] - grid[0]

    curvature = np.array([np.asarray(curvature_fn(x), dtype=float) for x in grid])
    if curvature.shape != (n_cells + 1, 3) or not np.all(np.isfinite(curvature)):
        raise ValidationError(["curvature_fn must return finite 3-vectors"])

    rotation = np.empty((n_cells + 1, 3, 3))
    rotation[0] = np.eye(3)
    for j in range(n_cells):
        x = grid[j]
        r = rotation[j]
        k1 = r @ hat(curvature_fn(x))
        k2 = (r + 0.5 * h * k1) @ hat(curvature_fn(x + 0.5 * h))
        k3 = (r + 0.5 * h * k2) @ hat(curvature_fn(x + 0.5 * h))
        k4 = (r + h * k3) @ hat(curvature_fn(x + h))
        rotation[j + 1] = _polar_project(r + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
    return _reference_from_samples(matrices, grid, rotation, curvature)


# --- quadratic nonlinearity -------------------------------------------------


def gbar_pair(matrices: BeamMatrices, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear map whose diagonal is the physical nonlinearity: gbar(y) = gbar_pair(y, y)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u1, u2, u3, u4 = (u[..., 3 * i : 3 * i + 3] for i in range(4))
    v1, v2, v3, v4 = (v[..., 3 * i : 3 * i + 3] for i in range(4))
    p = matrices.params
    s1 = np.diag(matrices.stiff_force)
    s2 = np.diag(matrices.stiff_moment)
    jd = np.diag(matrices.inertia)

    g1 = -(np.cross(u2, v1) + np.cross(s1 * u3, v4) / (p.rho * p.area))
    g2 = -(
        p.rho * np.cross(u2, jd * v2)
        + np.cross(s1 * u3, v3)
        + np.cross(s2 * u4, v4)
    ) / (p.rho * jd)
    g3 = -(np.cross(u2, v3) + np.cross(u1, v4))
    g4 = -np.cross(u2, v4)
    return np.concatenate([g1, g2, g3, g4], axis=-1)


def gbar(matrices: BeamMatrices, y: np.ndarray) -> np.ndarray:
    """Quadratic nonlinearity in physical variables; vanishes with its Jacobian at 0."""
    return gbar_pair(matrices, y, y)


def gbar_jacobian_apply(matrices: BeamMatrices, y: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Directional derivative (Jac gbar)(y) h, exact by bilinearity."""
    return gbar_pair(matrices, y, h) + gbar_pair(matrices, h, y)


def g_diag(matrices: BeamMatrices, r: np.ndarray) -> np.ndarray:
    """Nonlinearity in characteristic variables: g(r) = L gbar(L^{-1} r)."""
    y = np.asarray(r, dtype=float) @ matrices.from_char.T
    return gbar(matrices, y) @ matrices.to_char.T


def g_diag_pair(matrices: BeamMatrices, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear version of g_diag, used for exact Jacobian products."""
    yu = np.asarray(u, dtype=float) @ matrices.from_char.T
    yv = np.asarray(v, dtype=float) @ matrices.from_char.T
    return gbar_pair(matrices, yu, yv) @ matrices.to_char.T


def quadratic_forms(matrices: BeamMatrices) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric coefficient matrices of both nonlinearities.

    Returns stacks (12, 12, 12) ``Gp`` and ``Gc`` with
    gbar_i(y) = <y, Gp[i] y> and g_i(r) = <r, Gc[i] r>.  Each Gp[i] is
    symmetric with zero diagonal.
    """
    eye = np.eye(12)
    raw = np.empty((12, 12, 12))
    for j in range(12):
        raw[:, j, :] = gbar_pair(matrices, eye[j], eye).T  # raw[i, j, k] = pair(e_j, e_k)_i
    gp = 0.5 * (raw + np.swapaxes(raw, 1, 2))
    linv = matrices.from_char
    mixed = np.einsum("ij,jkl->ikl", matrices.to_char, gp)
    gc = np.einsum("jk,ijl,lm->ikm", linv, mixed, linv)
    return gp, gc


# --- representation changes -------------------------------------------------


def to_diagonal(state: StateField, matrices: BeamMatrices) -> StateField:
    """Node-wise change to characteristic variables r = L y."""
    if state.repr != "physical":
        raise ValueError(f"expected a physical state, got {state.repr!r}")
    return StateField(state.grid, "diagonal", state.values @ matrices.to_char.T, state.time)


def to_physical(state: StateField, matrices: BeamMatrices) -> StateField:
    """Node-wise change back to physical variables y = L^{-1} r."""
    if state.repr != "diagonal":
        raise ValueError(f"expected a diagonal state, got {state.repr!r}")
    return StateField(state.grid, "physical", state.values @ matrices.from_char.T, state.time)


# --- pose -> intrinsic variables ---------------------------------------------


def strains_velocities_from_pose(pose, reference: PrecurvedReference, grid=None, times=None):
    """Intrinsic variables of a sampled pose history.

    ``pose`` needs centerline positions ``p`` (T, N+1, 3) and rotations
    ``R`` (T, N+1, 3, 3) on a uniform lattice.  Velocities and strains are
    evaluated with the shared second-order stencils:

        V = R^T dt p,        W = vec(R^T dt R),
        Gamma = R^T dx p - e1,  Upsilon = vec(R^T dx R) - curvature.

    Returns one physical :class:`StateField` per time sample.  Raises
    :class:`NotARotation` when a rotation sample is not orthogonal.
    """
    grid = np.asarray(reference.grid if grid is None else grid, dtype=float)
    times = np.asarray(pose.times if times is None else times, dtype=float)
    rot = np.asarray(pose.R, dtype=float)
    pos = np.asarray(pose.p, dtype=float)
    dx = grid[1] - grid[0]
    dt = times[1] - times[0]

    defect = np.abs(np.einsum("tnji,tnjk->tnik", rot, rot) - np.eye(3)).max()
    if defect > 1e-6:
        raise NotARotation(f"rotation samples have orthogonality defect {defect:.3g}")

    dp_dt = diff1(pos, dt, axis=0)
    dp_dx = diff1(pos, dx, axis=1)
    dr_dt = diff1(rot, dt, axis=0)
    dr_dx = diff1(rot, dx, axis=1)

    v_lin = np.einsum("tnji,tnj->tni", rot, dp_dt)
    w_ang = vec(np.einsum("tnji,tnjk->tnik", rot, dr_dt))
    gamma = np.einsum("tnji,tnj->tni", rot, dp_dx) - E1
    upsilon = vec(np.einsum("tnji,tnjk->tnik", rot, dr_dx)) - reference.curvature

    values = np.concatenate([v_lin, w_ang, gamma, upsilon], axis=-1)
    return [
        StateField(grid, "physical", values[k], float(times[k])) for k in range(len(times))
    ]


def dissipative_boundary(matrices: BeamMatrices, eps: float = 1e-3) -> tuple[bool, float]:
    """Weighted row-sum check of boundary dissipativity.

    Evaluates R_inf(S K S^{-1}) for K = [0, -I; kappa, 0] and the scaling
    S = diag((1+eps) |kappa|, I); returns (value < 1, value).  Entries of
    |kappa| are floored at 1e-9 so the scaling stays invertible when some
    reflection vanishes (the infimum over positive scalings is unchanged).
    """
    kd = np.abs(np.diag(matrices.kappa))
    scale = np.concatenate([(1.0 + eps) * np.maximum(kd, 1e-9), np.ones(6)])
    k_mat = np.zeros((12, 12))
    k_mat[:6, 6:] = -np.eye(6)
    k_mat[6:, :6] = matrices.kappa
    scaled = scale[:, None] * k_mat / scale[None, :]
    value = float(np.abs(scaled).sum(axis=1).max())
    return value < 1.0, value


def reference_centerline(reference: PrecurvedReference) -> np.ndarray:
    """Centerline of the undeformed beam: trapezoid quadrature of R e1 from 0."""
    tangents = reference.rotation[:, :, 0]
    dx = reference.dx
    out = np.zeros_like(tangents)
    increments = 0.5 * dx * (tangents[1:] + tangents[:-1])
    out[1:] = np.cumsum(increments, axis=0)
    return out


# --- serialization -----------------------------------------------------------


def reference_to_csv(reference: PrecurvedReference) -> str:
    """Reference samples as CSV: x, nine rotation entries (row-major), curvature."""
    out = io.StringIO()
    cols = ["x"] + [f"R{i}{j}" for i in range(1, 4) for j in range(1, 4)] + [
        "curv1",
        "curv2",
        "curv3",
    ]
    out.write(",".join(cols) + "\n")
    for k, x in enumerate(reference.grid):
        row = [x, *reference.rotation[k].ravel(), *reference.curvature[k]]
        out.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return out.getvalue()


def reference_from_csv(text: str, matrices: BeamMatrices) -> PrecurvedReference:
    """Rebuild a reference (including coupling tables) from its CSV form."""
    lines = [ln for ln in text.strip().splitlines() if ln and not ln.startswith("#")]
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    grid = data[:, 0]
    rotation = data[:, 1:10].reshape(-1, 3, 3)
    curvature = data[:, 10:13]
    return _reference_from_samples(matrices, grid, rotation, curvature)
