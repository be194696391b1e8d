"""Quadratic Lyapunov certificate for the characteristic beam system.

The closed loop is certified stable when a diagonal matrix field Q(x) > 0
satisfies

* boundary conditions:  kappa^2 Q+(0) - Q-(0)  and  Q-(L) - Q+(L)
  negative semi-definite,
* interior condition:   dQ/dx diag(-D, D) - Q B - B^T Q  negative definite
  on [0, L].

Following the weighted-energy ansatz Q = diag(w- I6, w+ I6) Q_char with
w- = phi, w+ = 2 phi(L) - phi, everything reduces to a scalar generator
phi that must satisfy  phi > 0,  phi' > 0,  phi' > 2 c (phi(L) - phi)
with c = max_x q_m(x), plus the endpoint window
phi(L) in [phi(0), (1 + 1/C_kappa)/2 * phi(0)].  The generator

    phi(x) = phi(L) - exp(-2 c x) (1 - x/L) (phi(L) - phi(0))

satisfies all three strictly (its slack is exp(-2cx) (phiL - phi0) / L).

Two sufficient per-node margins are reported alongside the directly
eigensolved interior condition: a diagonal-dominance slack built from the
closed-form row sums q_1, and a Weyl-bound slack built from the largest
eigenvalue of the symmetric coupling Theta(x) via q_2.  Either margin
being positive implies the interior matrix is negative definite; the
eigensolve is the ground truth either way.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace

import numpy as np

from .errors import CkappaDegenerate, ValidationError, WindowViolation
from .model import PrecurvedReference
from .params import BeamMatrices

__all__ = [
    "LyapunovCertificate",
    "VerificationReport",
    "theta_matrix",
    "theta_functions",
    "build_phi",
    "phi_window",
    "build_certificate",
    "verify_certificate",
    "decay_rate_estimate",
    "equivalence_constants",
    "certificate_to_csv",
]

# Negative-definiteness is asserted up to this relative eigenvalue margin.
MARGIN_RTOL = 1e-10


@dataclass(frozen=True)
class LyapunovCertificate:
    """Weight field, per-node matrices and verification margins.

    ``gap`` carries phi(L) - phi(x) in analytic product form.  For stiff
    beams the admissible gap decays like exp(-2 C_q x) and must never be
    recovered by subtracting near-equal weights: every verification
    quantity that involves the gap or the derivative uses these analytic
    fields, which stay accurate down to the underflow threshold.
    """

    m: int                       # which q_m bound generated phi (1 or 2)
    c: float                     # C_{q_m} = max_x q_m(x)
    phi0: float
    phiL: float
    grid: np.ndarray             # (N+1,)
    phi: np.ndarray              # (N+1,)
    dphi: np.ndarray             # (N+1,) analytic derivative
    gap: np.ndarray              # (N+1,) analytic phi(L) - phi(x)
    w_minus: np.ndarray          # (N+1,)
    w_plus: np.ndarray           # (N+1,)
    q_diag: np.ndarray           # (N+1, 12) diagonal of Q(x)
    reflection_bound: float      # C_kappa used for the window
    boundary_margins_0: np.ndarray | None = None   # (6,) eigs of k^2 Q+(0) - Q-(0)
    boundary_margins_L: np.ndarray | None = None   # (6,) eigs of Q-(L) - Q+(L)
    interior_margins: np.ndarray | None = None     # (N+1,) largest interior eigenvalue
    dominance_slack: np.ndarray | None = None      # (N+1,)
    weyl_slack: np.ndarray | None = None           # (N+1,)
    valid: bool = False


@dataclass(frozen=True)
class VerificationReport:
    boundary_margins_0: np.ndarray
    boundary_margins_L: np.ndarray
    interior_margins: np.ndarray
    dominance_slack: np.ndarray
    weyl_slack: np.ndarray
    boundary_ok: bool
    interior_ok: bool

    @property
    def valid(self) -> bool:
        return self.boundary_ok and self.interior_ok


def theta_matrix(matrices: BeamMatrices, curvature: np.ndarray) -> np.ndarray:
    """Symmetric indefinite coupling Theta(x) = -[[0, X], [X, 0]], X = EDM + (EDM)^T."""
    from .model import _strain_matrix

    eb = _strain_matrix(np.asarray(curvature, dtype=float))
    dm = np.diag(matrices.mass) * np.diag(matrices.speed)
    x = eb * dm[None, :] if eb.ndim == 2 else eb * dm
    x = x + np.swapaxes(x, -1, -2)
    lead = x.shape[:-2]
    out = np.zeros(lead + (12, 12))
    out[..., :6, 6:] = -x
    out[..., 6:, :6] = -x
    return out


def theta_functions(matrices: BeamMatrices, curvature: np.ndarray):
    """Row-sum functions theta_1..theta_6 and the bounds q_1, q_2.

    ``curvature`` is a 3-vector or a batch (..., 3).  Returns
    (theta (..., 6), q1 (...), q2 (...)).  The thetas are the weighted
    absolute row sums of the coupling relative to the characteristic
    weights M_i lambda_{i+6}; q2 uses the largest eigenvalue of Theta(x)
    over the smallest of the six weights.
    """
    curvature = np.asarray(curvature, dtype=float)
    u1, u2, u3 = (np.abs(curvature[..., i]) for i in range(3))
    lam = matrices.wave_speeds[6:]
    l7, l8, l9, l10 = lam[0], lam[1], lam[2], lam[3]
    j1, j2, j3 = np.diag(matrices.inertia)
    a = matrices.params.area

    th1 = abs(1.0 - l8 / l7) * u3 + abs(1.0 - l9 / l7) * u2
    th2 = abs(1.0 - l7 / l8) * u3 + abs(1.0 - l9 / l8) * u1 + 1.0
    th3 = abs(1.0 - l7 / l9) * u2 + abs(1.0 - l8 / l9) * u1 + 1.0
    th4 = abs(1.0 - l7 * j2 / (l10 * j1)) * u3 + abs(1.0 - l7 * j3 / (l10 * j1)) * u2
    th5 = (
        a * l9 / (l7 * j2)
        + abs(1.0 - l10 * j1 / (l7 * j2)) * u3
        + abs(1.0 - j3 / j2) * u1
    )
    th6 = (
        a * l8 / (l7 * j3)
        + abs(1.0 - l10 * j1 / (l7 * j3)) * u2
        + abs(1.0 - j2 / j3) * u1
    )
    theta = np.stack(
        [th1, th2 * np.ones_like(th1), th3 * np.ones_like(th1), th4, th5, th6], axis=-1
    )
    q1 = theta.max(axis=-1)

    big = theta_matrix(matrices, curvature)
    sigma = np.linalg.eigvalsh(big)[..., -1]
    weights = np.diag(matrices.mass) * lam
    q2 = sigma / weights.min()
    return theta, q1, q2


def build_phi(c: float, phi0: float, phiL: float, grid: np.ndarray):
    """Weight generator phi, its analytic derivative, and the analytic gap.

    phi(x) = phiL - exp(-2 c x) (1 - x/L) (phiL - phi0).  Requires
    0 < phi0 < phiL.  Returns (phi, dphi, gap) with gap = phiL - phi kept
    in product form; the three generator conditions are re-checked at every
    node on the analytic quantities (the slack dphi - 2 c gap equals
    exp(-2 c x) (phiL - phi0) / L, positive until it underflows, and the
    check refuses grids on which it underflows to zero).
    """
    if not (phi0 > 0.0 and phi0 < phiL):
        raise ValidationError([f"need 0 < phi0 < phiL, got phi0={phi0!r} phiL={phiL!r}"])
    if c < 0.0:
        raise ValidationError([f"need c >= 0, got {c!r}"])
    grid = np.asarray(grid, dtype=float)
    length = grid[-1]
    alpha = 2.0 * c
    span = phiL - phi0
    damp = np.exp(-alpha * grid)
    gap = damp * (1.0 - grid / length) * span
    gap[-1] = 0.0
    phi = phiL - gap
    dphi = damp * span * (alpha * (1.0 - grid / length) + 1.0 / length)
    slack = damp * span / length
    ok = (phi > 0.0) & (dphi > 0.0) & (slack > 0.0)
    if not np.all(ok):
        raise ValidationError(
            ["generator conditions failed (likely exp(-2 c x) underflow: "
             f"2 c L = {alpha * length:.3g} exceeds the double range)"]
        )
    return phi, dphi, gap


def phi_window(reflection_bound: float, phi0: float) -> tuple[float, float]:
    """Admissible interval for phi(L): [phi0, (1 + 1/C_kappa)/2 * phi0]."""
    if reflection_bound >= 1.0:
        raise CkappaDegenerate("reflection bound >= 1, no admissible weights")
    if reflection_bound == 0.0:
        return phi0, np.inf
    return phi0, 0.5 * (1.0 + 1.0 / reflection_bound) * phi0


def build_certificate(
    matrices: BeamMatrices,
    reference: PrecurvedReference,
    m: int = 1,
    phi0: float = 1.0,
    phiL: float | None = None,
) -> LyapunovCertificate:
    """Construct and verify a certificate on the reference grid.

    ``phiL=None`` picks min(window midpoint, 1.5 phi0).  ``phiL == phi0``
    is accepted and produces constant weights; the interior condition then
    fails and the certificate comes back with ``valid=False`` (useful as a
    negative control).
    """
    if m not in (1, 2):
        raise ValidationError([f"m must be 1 or 2, got {m!r}"])
    if phi0 <= 0.0:
        raise ValidationError([f"phi0 must be > 0, got {phi0!r}"])
    lo, hi = phi_window(matrices.reflection_bound, phi0)
    if phiL is None:
        midpoint = 0.5 * (lo + hi) if np.isfinite(hi) else np.inf
        phiL = min(midpoint, 1.5 * phi0)
    if phiL < lo or phiL > hi * (1.0 + 1e-12):
        raise WindowViolation(
            f"phiL={phiL:.17g} outside [{lo:.17g}, {hi:.17g}] "
            f"for C_kappa={matrices.reflection_bound:.17g}"
        )

    _, q1, q2 = theta_functions(matrices, reference.curvature)
    c = float(np.max(q1 if m == 1 else q2))

    grid = reference.grid
    if phiL == phi0:
        phi = np.full_like(grid, float(phiL))
        dphi = np.zeros_like(grid)
        gap = np.zeros_like(grid)
    else:
        phi, dphi, gap = build_phi(c, phi0, phiL, grid)

    w_minus = phi
    w_plus = phi[-1] + gap
    half_mass = 0.5 * np.diag(matrices.mass)
    q_diag = np.concatenate(
        [w_minus[:, None] * half_mass[None, :], w_plus[:, None] * half_mass[None, :]],
        axis=1,
    )
    cert = LyapunovCertificate(
        m=m,
        c=c,
        phi0=float(phi0),
        phiL=float(phiL),
        grid=grid,
        phi=phi,
        dphi=dphi,
        gap=gap,
        w_minus=w_minus,
        w_plus=w_plus,
        q_diag=q_diag,
        reflection_bound=matrices.reflection_bound,
    )
    report = verify_certificate(cert, matrices, reference)
    return replace(
        cert,
        boundary_margins_0=report.boundary_margins_0,
        boundary_margins_L=report.boundary_margins_L,
        interior_margins=report.interior_margins,
        dominance_slack=report.dominance_slack,
        weyl_slack=report.weyl_slack,
        valid=report.valid,
    )


def interior_matrices(
    cert: LyapunovCertificate, matrices: BeamMatrices, reference: PrecurvedReference
) -> np.ndarray:
    """Per-node symmetric matrices dQ/dx diag(-D, D) - Q B - B^T Q.

    Assembled through the structured identity
    dQ/dx diag(-D, D) = -phi'/2 Lambda  and  Q B + B^T Q = gap/2 Theta,
    so the analytic derivative and gap enter directly.  A dense product
    assembly would subtract near-equal weights and lose the (relatively
    thin, absolutely tiny) margin on stiff beams.
    """
    theta = theta_matrix(matrices, reference.curvature)
    lam = np.diag(matrices.char_weight)
    out = -0.5 * cert.gap[:, None, None] * theta
    idx = np.arange(12)
    out[:, idx, idx] += -0.5 * cert.dphi[:, None] * lam[None, :]
    return out


def verify_certificate(
    cert: LyapunovCertificate, matrices: BeamMatrices, reference: PrecurvedReference
) -> VerificationReport:
    """Eigenvalue margins of the boundary and interior matrix conditions.

    Failures are reported, never raised.  The interior matrix is eigensolved
    node by node; the two sufficient slacks
    min(|w-'|, |w+'|) - (w+ - w-) q_m for m = 1, 2 are reported alongside.
    """
    if len(cert.grid) != len(reference.grid) or not np.allclose(
        cert.grid, reference.grid
    ):
        raise ValidationError(["certificate and reference grids differ"])

    kd = np.diag(matrices.kappa)
    mass = np.diag(matrices.mass)
    b0 = 0.5 * (cert.w_plus[0] * kd**2 - cert.w_minus[0]) * mass
    bL = 0.5 * (cert.w_minus[-1] - cert.w_plus[-1]) * mass

    interior = interior_matrices(cert, matrices, reference)
    eigs = np.linalg.eigvalsh(interior)
    margins = eigs[:, -1]
    scale = np.abs(interior).sum(axis=2).max(axis=1)
    # strict negativity with a relative margin; a zero matrix (constant
    # weights) must fail, so the inequality is strict on both counts
    interior_ok = bool(np.all(margins < 0.0) and np.all(margins <= -MARGIN_RTOL * scale))

    bscale = max(np.abs(b0).max(), np.abs(bL).max(), 1e-300)
    boundary_ok = bool(
        np.all(b0 <= MARGIN_RTOL * bscale) and np.all(bL <= MARGIN_RTOL * bscale)
    )

    _, q1, q2 = theta_functions(matrices, reference.curvature)
    # dw-/dx = phi' and dw+/dx = -phi', so the minimum modulus is |phi'|;
    # w+ - w- = 2 gap, taken from the analytic product form
    min_dw = np.abs(cert.dphi)
    gap = 2.0 * cert.gap
    dominance = min_dw - gap * q1
    weyl = min_dw - gap * q2

    return VerificationReport(
        boundary_margins_0=b0,
        boundary_margins_L=bL,
        interior_margins=margins,
        dominance_slack=dominance,
        weyl_slack=weyl,
        boundary_ok=boundary_ok,
        interior_ok=interior_ok,
    )


def sigma_matrices(
    cert: LyapunovCertificate, matrices: BeamMatrices, reference: PrecurvedReference
) -> np.ndarray:
    """Per-node -phi' Lambda + 2 (phi(L) - phi) Theta (the decay-rate field)."""
    theta = theta_matrix(matrices, reference.curvature)
    lam = np.diag(matrices.char_weight)
    out = 2.0 * cert.gap[:, None, None] * theta
    idx = np.arange(12)
    out[:, idx, idx] += -cert.dphi[:, None] * lam[None, :]
    return out


def lipschitz_coefficient(matrices: BeamMatrices, samples: int = 256) -> float:
    """Sampled coefficient K with ||Jac g(r)||_2 <= K |r| (g quadratic, K global)."""
    from .model import g_diag_pair

    rng = np.random.default_rng(20240)
    best = 0.0
    eye = np.eye(12)
    for _ in range(samples):
        u = rng.normal(size=12)
        u /= np.linalg.norm(u)
        jac = (g_diag_pair(matrices, u, eye) + g_diag_pair(matrices, eye, u)).T
        best = max(best, float(np.linalg.norm(jac, 2)))
    return best


def lipschitz_bound(matrices: BeamMatrices) -> float:
    """Provable coefficient: ||Jac g(r)||_2 <= 2 sqrt(sum_i ||Gc_i||_2^2) |r|."""
    from .model import quadratic_forms

    _, gc = quadratic_forms(matrices)
    norms = np.linalg.norm(gc, 2, axis=(1, 2))
    return float(2.0 * np.sqrt(np.sum(norms**2)))


def decay_rate_estimate(
    cert: LyapunovCertificate,
    matrices: BeamMatrices,
    reference: PrecurvedReference,
    delta: float,
) -> float:
    """Heuristic decay-rate lower estimate 0.5 C_Q (-C_S - 4 C_Q C_g delta).

    C_S is the largest eigenvalue of -phi' Lambda + 2 (phi(L) - phi) Theta
    over the grid (negative for a valid certificate), C_Q the max/min ratio
    of the diagonal of Q over the beam, and C_g a sampled Lipschitz
    coefficient of the nonlinearity per unit state magnitude.  The result
    is clipped at zero; treat it as indicative, not proof-grade.
    """
    sig = sigma_matrices(cert, matrices, reference)
    c_s = float(np.linalg.eigvalsh(sig)[:, -1].max())
    c_q = float(cert.q_diag.max() / cert.q_diag.min())
    c_g = lipschitz_coefficient(matrices)
    return max(0.0, 0.5 * c_q * (-c_s - 4.0 * c_q * c_g * delta))


def equivalence_constants(
    cert: LyapunovCertificate,
    matrices: BeamMatrices,
    reference: PrecurvedReference,
    delta: float,
) -> tuple[float, float]:
    """Constants with c1 ||r||_H1^2 <= L(r) <= c2 ||r||_H1^2 on the delta-ball.

    Exact for the discrete operators: the time derivative inside the
    functional is computed from the same spatial stencil that defines the
    discrete H1 norm, so the chain of pointwise bounds holds sample-wise.
    """
    qmin = float(cert.q_diag.min())
    qmax = float(cert.q_diag.max())
    lam_max = float(np.abs(matrices.wave_speeds).max())
    lam_min = float(np.diag(matrices.speed).min())
    bnorm = float(max(np.linalg.norm(b, 2) for b in reference.coupling_char))
    a = bnorm + lipschitz_bound(matrices) * delta
    c2 = qmax * max(1.0 + 2.0 * a * a, 2.0 * lam_max * lam_max)
    c1 = qmin / max(2.0 / lam_min**2, 1.0 + 2.0 * a * a / lam_min**2)
    return c1, c2


def certificate_to_csv(
    cert: LyapunovCertificate,
    matrices: BeamMatrices,
    reference: PrecurvedReference,
    alpha_estimate: float | None = None,
) -> str:
    """Report CSV: per-node margins plus a scalar summary block."""
    _, q1, q2 = theta_functions(matrices, reference.curvature)
    out = io.StringIO()
    out.write("# certificate report\n")
    out.write("x,w_minus,w_plus,interior_max_eig,dominance_slack,weyl_slack\n")
    for k, x in enumerate(cert.grid):
        row = [
            x,
            cert.w_minus[k],
            cert.w_plus[k],
            cert.interior_margins[k],
            cert.dominance_slack[k],
            cert.weyl_slack[k],
        ]
        out.write(",".join(f"{v:.17g}" for v in row) + "\n")
    out.write("\n# summary\nname,value\n")
    out.write(f"valid,{int(cert.valid)}\n")
    out.write(f"m,{cert.m}\n")
    out.write(f"C_kappa,{cert.reflection_bound:.17g}\n")
    out.write(f"C_q1,{float(np.max(q1)):.17g}\n")
    out.write(f"C_q2,{float(np.max(q2)):.17g}\n")
    out.write(f"phi0,{cert.phi0:.17g}\n")
    out.write(f"phiL,{cert.phiL:.17g}\n")
    for i, v in enumerate(cert.boundary_margins_0):
        out.write(f"boundary0_eig_{i + 1},{v:.17g}\n")
    for i, v in enumerate(cert.boundary_margins_L):
        out.write(f"boundaryL_eig_{i + 1},{v:.17g}\n")
    if alpha_estimate is not None:
        out.write(f"alpha_estimate_heuristic,{alpha_estimate:.17g}\n")
    return out.getvalue()
