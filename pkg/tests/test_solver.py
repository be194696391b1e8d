import numpy as np
import pytest

from beamstab.errors import (
    BlowupDetected,
    CFLViolation,
    NonPositiveValues,
    ValidationError,
)
from beamstab.fd import diff1, trapezoid
from beamstab.model import PrecurvedReference, StateField, straight_reference, to_physical
from beamstab.params import derive_matrices, with_reflection
from beamstab.solver import (
    SimConfig,
    check_compatibility,
    energies,
    fit_decay,
    generate_initial_datum,
    lyapunov_value,
    simulate,
    snapshot_to_csv,
    sobolev_norms,
    trajectory_to_csv,
)


def null_coupling_reference(ref: PrecurvedReference) -> PrecurvedReference:
    """Reference with the lower-order coupling switched off (pure transport)."""
    return PrecurvedReference(
        grid=ref.grid,
        rotation=ref.rotation,
        curvature=np.zeros_like(ref.curvature),
        strain_matrix=np.zeros_like(ref.strain_matrix),
        coupling_phys=np.zeros_like(ref.coupling_phys),
        coupling_char=np.zeros_like(ref.coupling_char),
    )


def smooth_mode_datum(ref, amplitude, seed=11):
    """Single low-frequency mode, order-0 compatible, exact H1 amplitude."""
    rng = np.random.default_rng(seed)
    xi = ref.grid / ref.grid[-1]
    coeffs = rng.normal(size=12)
    values = coeffs[None, :] * (np.sin(np.pi * xi) ** 2)[:, None]
    dx = ref.dx
    norm = np.sqrt(
        float(trapezoid((values**2).sum(1) + (diff1(values, dx, 0) ** 2).sum(1), dx))
    )
    values *= amplitude / norm
    return StateField(ref.grid, "physical", values, 0.0)


def test_config_validation():
    with pytest.raises(CFLViolation):
        SimConfig(n_cells=8).validate()
    with pytest.raises(CFLViolation):
        SimConfig(cfl=0.0).validate()
    with pytest.raises(CFLViolation):
        SimConfig(cfl=0.96).validate()
    with pytest.raises(CFLViolation):
        SimConfig(scheme="weno5").validate()
    SimConfig().validate()


class TestCompatibility:
    def test_zero_datum(self, toy_matrices, toy_reference):
        zero = StateField(toy_reference.grid, "physical",
                          np.zeros((len(toy_reference.grid), 12)), 0.0)
        rep = check_compatibility(zero, toy_matrices, toy_reference, order=1)
        assert rep.max_residual() == 0.0

    def test_unit_velocity_at_clamp(self, toy_matrices, toy_reference):
        values = np.zeros((len(toy_reference.grid), 12))
        values[-1, 0] = 1.0
        state = StateField(toy_reference.grid, "physical", values, 0.0)
        rep = check_compatibility(state, toy_matrices, toy_reference, order=0)
        assert rep.clamped == pytest.approx(1.0, abs=0)

    def test_generated_datum_order0(self, toy_matrices, toy_reference):
        datum = generate_initial_datum(toy_matrices, toy_reference, 0.5, seed=1, order=0)
        rep = check_compatibility(datum, toy_matrices, toy_reference, order=0)
        assert rep.max_residual() < 1e-10

    def test_generated_datum_order1(self, toy_matrices, toy_reference):
        datum = generate_initial_datum(toy_matrices, toy_reference, 0.5, seed=2, order=1)
        rep = check_compatibility(datum, toy_matrices, toy_reference, order=1)
        assert rep.max_residual() < 1e-8


class TestInitialDatum:
    def test_scaling_is_linear(self, toy_matrices, toy_reference):
        d1 = generate_initial_datum(toy_matrices, toy_reference, 0.01, seed=9, order=0)
        d2 = generate_initial_datum(toy_matrices, toy_reference, 0.02, seed=9, order=0)
        assert np.array_equal(d2.values, 2.0 * d1.values)
        rep = check_compatibility(d2, toy_matrices, toy_reference, order=0)
        assert rep.max_residual() < 1e-12

    def test_determinism_and_seeds(self, toy_matrices, toy_reference):
        a = generate_initial_datum(toy_matrices, toy_reference, 0.1, seed=4, order=1)
        b = generate_initial_datum(toy_matrices, toy_reference, 0.1, seed=4, order=1)
        c = generate_initial_datum(toy_matrices, toy_reference, 0.1, seed=5, order=1)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_h1_amplitude(self, toy_matrices, toy_reference):
        datum = generate_initial_datum(toy_matrices, toy_reference, 0.37, seed=6, order=1)
        assert sobolev_norms(datum.values, toy_reference.dx, 1) == pytest.approx(0.37, rel=1e-12)

    def test_zero_amplitude_gives_zero_field(self, toy_matrices, toy_reference):
        datum = generate_initial_datum(toy_matrices, toy_reference, 0.0, seed=6, order=1)
        assert np.all(datum.values == 0.0)

    def test_negative_amplitude_rejected(self, toy_matrices, toy_reference):
        with pytest.raises(ValidationError):
            generate_initial_datum(toy_matrices, toy_reference, -1.0, seed=6, order=1)


class TestEnergies:
    def test_zero(self, toy_matrices, toy_reference):
        zero = StateField(toy_reference.grid, "physical",
                          np.zeros((len(toy_reference.grid), 12)), 0.0)
        assert energies(zero, toy_matrices) == (0.0, 0.0)

    def test_representations_agree(self, asym_matrices, toy_reference):
        rng = np.random.default_rng(13)
        values = rng.normal(size=(len(toy_reference.grid), 12))
        state = StateField(toy_reference.grid, "physical", values, 0.0)
        e_p, e_d = energies(state, asym_matrices)
        assert abs(e_p - e_d) <= 1e-12 * e_p

    def test_constant_unit_velocity(self, toy_params, toy_matrices, toy_reference):
        values = np.zeros((len(toy_reference.grid), 12))
        values[:, 0] = 1.0
        state = StateField(toy_reference.grid, "physical", values, 0.0)
        e_p, _ = energies(state, toy_matrices)
        expected = toy_params.rho * toy_params.area * toy_params.length
        assert e_p == pytest.approx(expected, rel=1e-14)


class TestSimulate:
    def test_zero_state_invariant(self, toy_matrices, toy_reference):
        zero = StateField(toy_reference.grid, "physical",
                          np.zeros((len(toy_reference.grid), 12)), 0.0)
        cfg = SimConfig(n_cells=32, cfl=0.9, t_end=0.5, output_stride=4, store_snapshots=True)
        traj = simulate(cfg, toy_matrices, toy_reference, zero)
        assert np.all(traj.energy_char == 0.0)
        for snap in traj.snapshots:
            assert np.all(snap.values == 0.0)

    def test_incompatible_datum_rejected(self, toy_matrices, toy_reference):
        values = np.zeros((len(toy_reference.grid), 12))
        values[-1, 0] = 1.0
        bad = StateField(toy_reference.grid, "physical", values, 0.0)
        with pytest.raises(ValidationError):
            simulate(SimConfig(n_cells=32), toy_matrices, toy_reference, bad)

    def test_boundary_traces_exact(self, toy_matrices, toy_reference):
        datum = generate_initial_datum(toy_matrices, toy_reference, 1e-2, seed=8, order=1)
        cfg = SimConfig(n_cells=32, cfl=0.9, t_end=1.0, output_stride=3)
        traj = simulate(cfg, toy_matrices, toy_reference, datum)
        kd = np.diag(toy_matrices.kappa)
        assert np.abs(traj.trace_plus_0 - kd[None, :] * traj.trace_minus_0).max() < 1e-12
        assert np.abs(traj.trace_minus_L + traj.trace_plus_L).max() < 1e-12

    def test_energy_monotone_small_amplitude(self, toy_matrices, toy_reference):
        datum = generate_initial_datum(toy_matrices, toy_reference, 1e-2, seed=8, order=1)
        cfg = SimConfig(n_cells=32, cfl=0.9, t_end=2.0, output_stride=1)
        traj = simulate(cfg, toy_matrices, toy_reference, datum)
        e = traj.energy_char
        assert np.all(e[1:] <= e[:-1] * (1.0 + 1e-6))

    def test_blowup_detection(self, toy_matrices, toy_reference):
        datum = generate_initial_datum(toy_matrices, toy_reference, 1e-2, seed=8, order=1)
        cfg = SimConfig(n_cells=32, cfl=0.9, t_end=1.0, blowup_threshold=1e-9)
        with pytest.raises(BlowupDetected) as err:
            simulate(cfg, toy_matrices, toy_reference, datum)
        assert err.value.time > 0.0

    def test_step_cap(self, toy_matrices, toy_reference):
        cfg = SimConfig(n_cells=32, cfl=0.9, t_end=1.0, step_cap=3)
        zero = StateField(toy_reference.grid, "physical",
                          np.zeros((len(toy_reference.grid), 12)), 0.0)
        with pytest.raises(CFLViolation):
            simulate(cfg, toy_matrices, toy_reference, zero)

    def test_grid_mismatch(self, toy_matrices, toy_reference):
        zero = StateField(toy_reference.grid, "physical",
                          np.zeros((len(toy_reference.grid), 12)), 0.0)
        with pytest.raises(ValidationError):
            simulate(SimConfig(n_cells=64), toy_matrices, toy_reference, zero)


def test_transport_pulse_method_of_characteristics(toy_params):
    """Decoupled single pulse: exact reflection with sign flip, then absorption."""
    n = 256
    matrices = with_reflection(derive_matrices(toy_params), np.zeros(6))
    ref = null_coupling_reference(straight_reference(toy_params, n))
    x = ref.grid
    x0, width = 0.35, 0.2

    def pulse(z):
        inside = np.abs(z - x0) < width
        safe = np.where(inside, 1.0 - ((z - x0) / width) ** 2, 1.0)
        return np.where(inside, np.exp(1.0 - 1.0 / safe), 0.0)

    r0 = np.zeros((n + 1, 12))
    r0[:, 6] = pulse(x)
    y0 = StateField(x, "physical", r0 @ matrices.from_char.T, 0.0)
    speed = matrices.wave_speeds[6]

    for t_probe in (0.25, 0.75):
        cfg = SimConfig(n_cells=n, cfl=0.95, t_end=t_probe, output_stride=10**9,
                        store_snapshots=True, scheme="upwind2")
        traj = simulate(cfg, matrices, ref, y0, include_nonlinearity=False)
        final = traj.snapshots[-1].values
        oracle = np.zeros_like(final)
        oracle[:, 6] = pulse(x - speed * t_probe)
        oracle[:, 0] = -pulse(2.0 * toy_params.length - x - speed * t_probe)
        l1_err = float(np.abs(final - oracle).sum()) * ref.dx
        assert l1_err < 5.0 * ref.dx * np.abs(pulse(x)).max()

    round_trip = 2.0 * toy_params.length / speed
    cfg = SimConfig(n_cells=n, cfl=0.95, t_end=1.4 * round_trip, output_stride=10**9,
                    store_snapshots=True, scheme="upwind2")
    traj = simulate(cfg, matrices, ref, y0, include_nonlinearity=False)
    mass = float(np.abs(traj.snapshots[-1].values).sum()) * ref.dx
    assert mass < 1e-6


def test_convergence_against_refined_reference(toy_params):
    """Halving dx shrinks the error vs a common fine run by the scheme order."""
    m = derive_matrices(toy_params)

    def terminal(n, scheme):
        ref = straight_reference(toy_params, n)
        datum = smooth_mode_datum(ref, 1e-2)
        cfg = SimConfig(n_cells=n, cfl=0.9, t_end=0.2, output_stride=10**9,
                        store_snapshots=True, scheme=scheme)
        return simulate(cfg, m, ref, datum).snapshots[-1].values

    for scheme, factor in (("upwind1", 1.8), ("upwind2", 3.5)):
        fine = terminal(512, scheme)
        err_coarse = np.sqrt(((terminal(64, scheme) - fine[::8]) ** 2).mean())
        err_half = np.sqrt(((terminal(128, scheme) - fine[::4]) ** 2).mean())
        assert err_coarse / err_half >= factor


def test_nonlinearity_onset_quadratic(toy_params):
    m = derive_matrices(toy_params)
    ref = straight_reference(toy_params, 64)

    def deviation(amplitude):
        datum = generate_initial_datum(m, ref, amplitude, seed=3, order=1)
        cfg = SimConfig(n_cells=64, cfl=0.9, t_end=1.0, output_stride=8, store_snapshots=True)
        full = simulate(cfg, m, ref, datum, include_nonlinearity=True)
        linear = simulate(cfg, m, ref, datum, include_nonlinearity=False)
        return max(
            float(np.sqrt(((a.values - b.values) ** 2).mean()))
            for a, b in zip(full.snapshots, linear.snapshots)
        )

    ratio = deviation(1e-2) / deviation(1e-3)
    assert 70.0 <= ratio <= 130.0


class TestLyapunovValue:
    def test_zero(self, toy_params, toy_matrices, toy_reference):
        from beamstab.certificate import build_certificate

        cert = build_certificate(toy_matrices, toy_reference, m=1, phi0=1.0, phiL=None)
        zero = StateField(toy_reference.grid, "diagonal",
                          np.zeros((len(toy_reference.grid), 12)), 0.0)
        assert lyapunov_value(zero, cert, toy_matrices, toy_reference, k=1) == 0.0
        assert lyapunov_value(zero, cert, toy_matrices, toy_reference, k=2) == 0.0

    def test_decreasing_along_simulation(self, toy_params, toy_matrices):
        from beamstab.certificate import build_certificate

        ref = straight_reference(toy_params, 64)
        cert = build_certificate(toy_matrices, ref, m=1, phi0=1.0, phiL=None)
        datum = generate_initial_datum(toy_matrices, ref, 1e-2, seed=12, order=1)
        cfg = SimConfig(n_cells=64, cfl=0.9, t_end=5.0, output_stride=8)
        traj = simulate(cfg, toy_matrices, ref, datum, cert=cert, lyap_order=2)
        logs = np.log(traj.lyap)
        # allow early transients, require overall decreasing trend afterwards
        after = logs[traj.times >= 1.0]
        assert after[-1] < after[0]
        alpha, _, _ = fit_decay(traj.times, traj.lyap, t_min=1.0)
        assert alpha > 0.0
        assert traj.h2 is not None  # k = 2 records the H2 norm


class TestFitDecay:
    def test_exact_exponential(self):
        t = np.linspace(0.0, 10.0, 200)
        alpha, eta, r2 = fit_decay(t, np.exp(-0.3 * t))
        assert alpha == pytest.approx(0.3, abs=1e-10)
        assert eta == pytest.approx(1.0, rel=1e-10)
        assert r2 == pytest.approx(1.0, abs=1e-12)

    def test_prefactor(self):
        t = np.linspace(0.0, 10.0, 100)
        alpha, eta, _ = fit_decay(t, 5.0 * np.exp(-0.3 * t))
        assert alpha == pytest.approx(0.3, abs=1e-10)
        assert eta == pytest.approx(5.0, rel=1e-10)

    def test_window(self):
        t = np.linspace(0.0, 10.0, 100)
        v = np.where(t < 2.0, 1.0, np.exp(-0.5 * (t - 2.0)))
        alpha, _, _ = fit_decay(t, v, t_min=2.0)
        assert alpha == pytest.approx(0.5, abs=1e-10)

    def test_rejects_nonpositive(self):
        t = np.linspace(0.0, 1.0, 20)
        with pytest.raises(NonPositiveValues):
            fit_decay(t, np.linspace(1.0, -0.1, 20))

    def test_rejects_short(self):
        with pytest.raises(ValidationError):
            fit_decay(np.linspace(0, 1, 5), np.ones(5))


def test_csv_outputs(toy_matrices, toy_reference):
    datum = generate_initial_datum(toy_matrices, toy_reference, 1e-2, seed=8, order=1)
    cfg = SimConfig(n_cells=32, cfl=0.9, t_end=0.5, output_stride=4, store_snapshots=True)
    traj = simulate(cfg, toy_matrices, toy_reference, datum)
    text = trajectory_to_csv(traj, header={"scenario": "unit-test"})
    assert "# scenario = unit-test" in text
    assert text.splitlines()[7].startswith("t,")
    snap_text = snapshot_to_csv(traj.snapshots[-1], toy_matrices)
    header = snap_text.splitlines()[1].split(",")
    assert header[:2] == ["x", "r1"] and header[-1] == "y12"
    # physical and characteristic columns are consistent
    row = np.array([float(v) for v in snap_text.splitlines()[2].split(",")])
    r = row[1:13]
    y = row[13:25]
    assert np.abs(r @ toy_matrices.from_char.T - y).max() < 1e-12
