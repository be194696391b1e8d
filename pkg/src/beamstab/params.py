"""Beam constants and every matrix derived from them.

The beam is uniform, isotropic and linear-elastic, so all coefficient
matrices are constant diagonal matrices built from a handful of scalars:
mass density, section area, elastic moduli, area moments and correction
factors.  From those we assemble

* the 6x6 mass matrix ``M`` and flexibility matrix ``C``,
* the positive wave-speed matrix ``D = (M C)^{-1/2}`` and the signed
  12x12 version ``diag(-D, D)``,
* the characteristic transform ``L`` (and its inverse) that takes the
  physical state ``y = (velocities, strains)`` to Riemann invariants
  ``r = L y``, diagonalizing the flux matrix ``A = L^{-1} diag(-D, D) L``,
* the energy weights for both representations,
* the boundary reflection matrix ``kappa`` induced by the velocity
  feedback gains ``mu1, mu2`` applied at the controlled end ``x = 0``.

Everything is a plain dense numpy array inside immutable dataclasses;
sizes are tiny and fixed, so no sparsity or laziness is worth having.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, fields

import numpy as np

from .errors import ValidationError

__all__ = [
    "BeamParams",
    "BeamMatrices",
    "derive_matrices",
    "optimal_feedback",
    "stresses_from_strains",
    "feedback_reflection",
    "reflection_bound",
    "with_reflection",
    "dump_matrices",
]


@dataclass(frozen=True)
class BeamParams:
    """Raw physical and geometric constants plus the feedback gains.

    Units: SI throughout (kg/m^3, m^2, Pa, m^4, m).  All fields must be
    strictly positive; the correction factors k1..k3 are dimensionless.
    """

    rho: float        # mass density
    area: float       # cross-section area
    young: float      # Young modulus E
    shear: float      # shear modulus G
    moment2: float    # area moment of inertia I2
    moment3: float    # area moment of inertia I3
    k1: float         # polar-moment correction factor
    k2: float         # shear correction factor (axis 2)
    k3: float         # shear correction factor (axis 3)
    length: float     # beam length
    mu1: float        # force feedback gain at x = 0
    mu2: float        # moment feedback gain at x = 0

    def validate(self) -> "BeamParams":
        problems = []
        for f in fields(self):
            value = getattr(self, f.name)
            if not np.isfinite(value) or value <= 0.0:
                problems.append(f"{f.name} must be finite and > 0, got {value!r}")
        if problems:
            raise ValidationError(problems)
        return self


@dataclass(frozen=True)
class BeamMatrices:
    """All constant matrices derived from a :class:`BeamParams`.

    ``wave_speeds`` lists the twelve characteristic speeds with the fixed
    ordering: entries 1..6 negative (left-moving), 7..12 positive, and
    ``wave_speeds[i] = -wave_speeds[i+6]``.
    """

    params: BeamParams
    inertia: np.ndarray          # 3x3, J
    stiff_force: np.ndarray      # 3x3, S1 (shear/extension rigidity)
    stiff_moment: np.ndarray     # 3x3, S2 (torsion/bending rigidity)
    mass: np.ndarray             # 6x6, M
    flexibility: np.ndarray      # 6x6, C
    speed: np.ndarray            # 6x6, D = (M C)^{-1/2}
    speed_signed: np.ndarray     # 12x12, diag(-D, D)
    to_char: np.ndarray          # 12x12, L with r = L y
    from_char: np.ndarray        # 12x12, L^{-1}
    flux: np.ndarray             # 12x12, A
    energy_phys: np.ndarray      # 12x12, diag(M, C^{-1})
    energy_char: np.ndarray      # 12x12, (L^{-1})^T energy_phys L^{-1}
    mu: np.ndarray               # 6-vector, diag of the feedback matrix
    kappa: np.ndarray            # 6x6 diagonal reflection matrix
    wave_speeds: np.ndarray      # 12-vector
    char_weight: np.ndarray      # 12x12, diag(M D, M D)
    reflection_bound: float      # C_kappa = max_i kappa_i^2


def reflection_bound(kappa_diag: np.ndarray) -> float:
    """Largest squared entry of the diagonal reflection matrix."""
    return float(np.max(np.asarray(kappa_diag, dtype=float) ** 2))


def feedback_reflection(md_diag: np.ndarray, mu_diag: np.ndarray) -> np.ndarray:
    """Diagonal of (M D + mu)^{-1} (M D - mu) for diagonal inputs."""
    md = np.asarray(md_diag, dtype=float)
    mu = np.asarray(mu_diag, dtype=float)
    return (md - mu) / (md + mu)


def derive_matrices(params: BeamParams) -> BeamMatrices:
    """Build every derived matrix for a validated parameter set.

    Raises :class:`ValidationError` naming each non-positive field.
    """
    params.validate()
    p = params

    inertia = np.diag([(p.moment2 + p.moment3) * p.k1, p.moment2, p.moment3])
    stiff_force = p.area * np.diag([p.young, p.k2 * p.shear, p.k3 * p.shear])
    stiff_moment = inertia @ np.diag([p.shear, p.young, p.young])

    mass = p.rho * np.diag(np.concatenate([p.area * np.ones(3), np.diag(inertia)]))
    flexibility = np.diag(1.0 / np.concatenate([np.diag(stiff_force), np.diag(stiff_moment)]))

    speed_diag = 1.0 / np.sqrt(np.diag(mass) * np.diag(flexibility))
    speed = np.diag(speed_diag)
    speed_signed = np.diag(np.concatenate([-speed_diag, speed_diag]))
    wave_speeds = np.concatenate([-speed_diag, speed_diag])

    eye6 = np.eye(6)
    to_char = np.block([[eye6, speed], [eye6, -speed]])
    inv_speed = np.diag(1.0 / speed_diag)
    from_char = 0.5 * np.block([[eye6, eye6], [inv_speed, -inv_speed]])

    zeros6 = np.zeros((6, 6))
    flux = np.block([
        [zeros6, -np.diag(1.0 / (np.diag(mass) * np.diag(flexibility)))],
        [-eye6, zeros6],
    ])

    energy_phys = np.block([
        [mass, zeros6],
        [zeros6, np.diag(1.0 / np.diag(flexibility))],
    ])
    energy_char = from_char.T @ energy_phys @ from_char

    mu = np.array([p.mu1, p.mu1, p.mu1, p.mu2, p.mu2, p.mu2])
    md_diag = np.diag(mass) * speed_diag
    kappa_diag = feedback_reflection(md_diag, mu)
    kappa = np.diag(kappa_diag)

    char_weight = np.diag(np.concatenate([md_diag, md_diag]))

    return BeamMatrices(
        params=params,
        inertia=inertia,
        stiff_force=stiff_force,
        stiff_moment=stiff_moment,
        mass=mass,
        flexibility=flexibility,
        speed=speed,
        speed_signed=speed_signed,
        to_char=to_char,
        from_char=from_char,
        flux=flux,
        energy_phys=energy_phys,
        energy_char=energy_char,
        mu=mu,
        kappa=kappa,
        wave_speeds=wave_speeds,
        char_weight=char_weight,
        reflection_bound=reflection_bound(kappa_diag),
    )


def with_reflection(matrices: BeamMatrices, kappa_diag: np.ndarray) -> BeamMatrices:
    """Copy of ``matrices`` with the boundary reflection replaced.

    Lets experiments impose reflections that no (mu1, mu2) pair realizes,
    e.g. the transparent condition kappa = 0 on an arbitrary beam.
    """
    import dataclasses

    kappa_diag = np.asarray(kappa_diag, dtype=float)
    if kappa_diag.shape != (6,):
        raise ValueError("kappa_diag must be a 6-vector")
    if np.any(np.abs(kappa_diag) >= 1.0):
        raise ValueError("reflection entries must lie in (-1, 1)")
    return dataclasses.replace(
        matrices,
        kappa=np.diag(kappa_diag),
        reflection_bound=reflection_bound(kappa_diag),
    )


def optimal_feedback(params: BeamParams) -> tuple[float, float]:
    """Gains minimizing the reflection bound C_kappa.

    With b = diag(M D), the minimizing pair is the geometric mean of the
    extreme entries within each 3-block:
    mu1 = sqrt(min(b_1..b_3) max(b_1..b_3)), mu2 likewise over b_4..b_6.
    Existing mu1/mu2 in ``params`` are ignored.
    """
    m = derive_matrices(params)
    b = np.diag(m.mass) * np.diag(m.speed)
    mu1 = float(np.sqrt(b[:3].min() * b[:3].max()))
    mu2 = float(np.sqrt(b[3:].min() * b[3:].max()))
    return mu1, mu2


def stresses_from_strains(matrices: BeamMatrices, s: np.ndarray) -> np.ndarray:
    """Internal forces and moments F = C^{-1} s for a 6-vector of strains."""
    return np.asarray(s, dtype=float) / np.diag(matrices.flexibility)


_DUMP_BLOCKS = [
    ("inertia", "inertia"),
    ("stiff_force", "stiff_force"),
    ("stiff_moment", "stiff_moment"),
    ("mass", "mass"),
    ("flexibility", "flexibility"),
    ("speed", "speed"),
    ("speed_signed", "speed_signed"),
    ("to_char", "to_char"),
    ("from_char", "from_char"),
    ("flux", "flux"),
    ("energy_phys", "energy_phys"),
    ("energy_char", "energy_char"),
    ("kappa", "kappa"),
    ("char_weight", "char_weight"),
]


def dump_matrices(matrices: BeamMatrices) -> str:
    """All derived matrices as labelled CSV blocks (debug aid)."""
    out = io.StringIO()
    for title, attr in _DUMP_BLOCKS:
        mat = getattr(matrices, attr)
        n = mat.shape[1]
        out.write(f"# {title} ({mat.shape[0]}x{n})\n")
        out.write("row," + ",".join(f"c{j + 1}" for j in range(n)) + "\n")
        for i, row in enumerate(mat):
            out.write(f"r{i + 1}," + ",".join(f"{v:.17g}" for v in row) + "\n")
        out.write("\n")
    out.write("# wave_speeds\n")
    out.write("index,value\n")
    for i, v in enumerate(matrices.wave_speeds):
        out.write(f"{i + 1},{v:.17g}\n")
    out.write("\n# scalars\nname,value\n")
    out.write(f"reflection_bound,{matrices.reflection_bound:.17g}\n")
    for i, v in enumerate(matrices.mu):
        out.write(f"mu_{i + 1},{v:.17g}\n")
    return out.getvalue()
