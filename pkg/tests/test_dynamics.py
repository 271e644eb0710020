import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlslab.dynamics import (
    EnergyLedger,
    SolverConfig,
    difference_nonlinearity_G,
    evolve,
    exact_solution,
    hamiltonian,
    lyapunov,
    mass,
    modified_energy_D,
    modified_energy_I,
    modified_energy_refined,
    nonlinearity_F,
    rough_data,
    standard_probes,
    step,
)
from nlslab.ground_state import eval_Q
from nlslab.spectral import (
    ConfigurationError,
    Field,
    GridSpec,
    NumericalError,
    derivative,
    hs_norm,
)

BOX = 40.0 * math.pi


def _h1_error(u, v):
    return hs_norm(u - v, 1.0)


# --- configuration ----------------------------------------------------------------

def test_solver_config_validation():
    with pytest.raises(ConfigurationError):
        SolverConfig(dt=0.0)
    with pytest.raises(ConfigurationError):
        SolverConfig(dt=1e-3, t_end=-1.0)
    with pytest.raises(ConfigurationError):
        SolverConfig(dt=1e-3, sign="sideways")
    with pytest.raises(ConfigurationError):
        SolverConfig(dt=1e-3, record_stride=0)


def test_resolution_check():
    g = GridSpec(2048, 2 * math.pi)
    with pytest.raises(ConfigurationError):
        SolverConfig(dt=1e-3).check_resolution(g)
    SolverConfig(dt=1e-7).check_resolution(g)


# --- nonlinearity -----------------------------------------------------------------

def test_F_pointwise(small_grid):
    c = 0.3 - 1.2j
    f = Field(small_grid, np.full(small_grid.num_modes, c))
    assert np.allclose(nonlinearity_F(f).values, abs(c) ** 2 * c, rtol=0, atol=1e-15)
    assert np.all(nonlinearity_F(Field.zeros(small_grid)).values == 0)


def test_F_of_Q_at_origin(soliton_grid):
    Q = eval_Q(soliton_grid)
    j = int(np.argmin(np.abs(soliton_grid.x)))
    assert nonlinearity_F(Q).values[j].real == pytest.approx(2.0**1.5, rel=1e-14)


def test_dealiased_F_matches_plain_for_band_limited(small_grid):
    g = small_grid
    # modes up to |k| = 5: the cube lives in |k| <= 15 < M/2, so no aliasing occurs
    u = Field(g, np.exp(1j * g.x) + 0.5 * np.exp(-5j * g.x) + 0.2)
    assert np.max(np.abs(nonlinearity_F(u, True).values - nonlinearity_F(u).values)) <= 1e-13


def test_G_examples(soliton_grid):
    Q = eval_Q(soliton_grid)
    zero = Field.zeros(soliton_grid)
    assert np.all(difference_nonlinearity_G(zero, Q).values == 0)
    w = rough_data(soliton_grid, 0.5, 3)
    assert np.allclose(difference_nonlinearity_G(w, zero).values, nonlinearity_F(w).values,
                       atol=1e-14)
    eps = 0.07
    expected = ((1 + eps) ** 3 - 1) * Q.values**3
    assert np.allclose(difference_nonlinearity_G(eps * Q, Q).values, expected, atol=1e-13)


@given(st.integers(0, 10_000))
def test_G_is_difference_of_F(seed):
    g = GridSpec(128, 30.0)
    rng = np.random.default_rng(seed)
    q = Field(g, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    w = Field(g, rng.standard_normal(128) + 1j * rng.standard_normal(128))
    direct = nonlinearity_F(q + w).values - nonlinearity_F(q).values
    assert np.allclose(difference_nonlinearity_G(w, q).values, direct, atol=1e-12)


def test_G_grid_mismatch(small_grid):
    with pytest.raises(ConfigurationError):
        difference_nonlinearity_G(Field.zeros(small_grid), Field.zeros(GridSpec(32, 1.0)))


# --- exact solutions ---------------------------------------------------------------

def test_exact_solutions_at_t0(soliton_grid):
    g = soliton_grid
    Q = eval_Q(g)
    assert np.array_equal(exact_solution(g, "soliton", 0.0).values, Q.values)
    gal = exact_solution(g, "galilean", 0.0, eps=0.1)
    assert np.allclose(gal.values, np.exp(0.1j * g.x) * Q.values, atol=1e-15)


def test_plane_wave_off_lattice_rejected(small_grid):
    with pytest.raises(ConfigurationError):
        exact_solution(small_grid, "plane_wave", 0.0, k=1.5)
    with pytest.raises(ConfigurationError):
        exact_solution(small_grid, "plane_wave", 0.0, k=small_grid.num_modes // 2)
    with pytest.raises(ConfigurationError):
        exact_solution(small_grid, "bogus", 0.0)


def test_plane_wave_discrete_residual(small_grid):
    # i u_t + u_xx + |u|^2 u with u_t taken from the closed form
    g = small_grid
    A, k, t = 0.8 - 0.3j, 3, 0.37
    u = exact_solution(g, "plane_wave", t, amplitude=A, k=k)
    xi = 2 * math.pi * k / g.box_length
    u_t = 1j * (-xi**2 + abs(A) ** 2) * u.values
    res = 1j * u_t + derivative(u, 2).values + np.abs(u.values) ** 2 * u.values
    assert np.max(np.abs(res)) <= 1e-10


def test_plane_wave_is_exact_under_splitting(small_grid):
    g = small_grid
    u0 = exact_solution(g, "plane_wave", 0.0, amplitude=0.9, k=2)
    led = evolve(u0, SolverConfig(dt=1e-3, t_end=1.0, record_stride=1000), {}, keep_fields=True)
    exact = exact_solution(g, "plane_wave", 1.0, amplitude=0.9, k=2)
    assert np.max(np.abs(led.fields[-1].values - exact.values)) <= 1e-10


def test_zero_stays_zero(small_grid):
    u = step(Field.zeros(small_grid), SolverConfig(dt=1e-3))
    assert np.all(u.values == 0)


# --- convergence and conservation ---------------------------------------------------

def _soliton_error(dt, t_end=1.0, M=1024):
    g = GridSpec(M, BOX)
    cfg = SolverConfig(dt=dt, t_end=t_end, record_stride=10**9)
    led = evolve(exact_solution(g, "soliton", 0.0), cfg, {"L": lyapunov}, keep_fields=True)
    err = _h1_error(led.fields[-1], exact_solution(g, "soliton", t_end))
    return err, abs(led["L"][-1] - led["L"][0])


def test_soliton_second_order():
    e1, _ = _soliton_error(4e-3)
    e2, _ = _soliton_error(2e-3)
    e3, _ = _soliton_error(1e-3)
    assert 3.5 <= e1 / e2 <= 4.5
    assert 3.5 <= e2 / e3 <= 4.5


def test_galilean_second_order():
    g = GridSpec(1024, BOX)
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        u0 = exact_solution(g, "galilean", 0.0, eps=0.2)
        led = evolve(u0, SolverConfig(dt=dt, t_end=1.0, record_stride=10**9), {}, keep_fields=True)
        errs.append(_h1_error(led.fields[-1], exact_solution(g, "galilean", 1.0, eps=0.2)))
    assert 3.5 <= errs[0] / errs[1] <= 4.5
    assert 3.5 <= errs[1] / errs[2] <= 4.5


@pytest.mark.parametrize("sign", ["focusing", "defocusing"])
def test_mass_conserved_over_many_steps(sign):
    g = GridSpec(256, 20.0)
    u0 = rough_data(g, 0.5, 1, norm=2.0)
    led = evolve(u0, SolverConfig(dt=1e-4, t_end=1.0, sign=sign, record_stride=2000),
                 {"mass": mass})
    m = led["mass"]
    assert led.times.size == 6
    assert np.max(np.abs(m - m[0])) <= 1e-10 * m[0]


@pytest.mark.parametrize("sign", ["focusing", "defocusing"])
def test_energy_drift_second_order(sign):
    g = GridSpec(256, 20.0)
    u0 = rough_data(g, 0.9, 2, norm=1.0, kmax=20)
    drifts = []
    for dt in (2e-3, 1e-3, 5e-4):
        led = evolve(u0, SolverConfig(dt=dt, t_end=0.5, sign=sign, record_stride=10**9),
                     {"H": lambda u: hamiltonian(u, sign)})
        drifts.append(abs(led["H"][-1] - led["H"][0]))
    assert 3.5 <= drifts[0] / drifts[1] <= 4.5
    assert 3.5 <= drifts[1] / drifts[2] <= 4.5


def test_time_reversibility():
    g = GridSpec(256, 20.0)
    u = rough_data(g, 0.5, 4)
    cfg = SolverConfig(dt=1e-3)
    back = step(step(u, cfg), cfg, -1e-3)
    assert np.max(np.abs(back.values - u.values)) <= 1e-12


@given(st.floats(0.0, 2 * math.pi), st.integers(-50, 50))
def test_flow_commutes_with_gauge_and_lattice_shift(alpha, shift):
    g = GridSpec(128, 20.0)
    u = rough_data(g, 0.5, 5)
    cfg = SolverConfig(dt=1e-3, dealias=True)
    lhs = step(Field(g, np.exp(1j * alpha) * np.roll(u.values, shift)), cfg)
    rhs = np.exp(1j * alpha) * np.roll(step(u, cfg).values, shift)
    assert np.max(np.abs(lhs.values - rhs)) <= 1e-12


def test_non_finite_state_aborts():
    g = GridSpec(64, 10.0)
    u = Field(g, np.full(64, 1e160 + 0j))
    with pytest.raises(NumericalError):
        step(u, SolverConfig(dt=1e-3))


# --- functionals ---------------------------------------------------------------------

@given(st.floats(0.0, 2 * math.pi), st.integers(-100, 100))
def test_functionals_are_gauge_and_translation_invariant(alpha, shift):
    g = GridSpec(256, 30.0)
    u = rough_data(g, 0.5, 6)
    v = Field(g, np.exp(1j * alpha) * np.roll(u.values, shift))
    for fn in (mass, hamiltonian, lyapunov,
               lambda f: modified_energy_D(f, 0.5, 4.0),
               lambda f: modified_energy_I(f, 0.5, 4.0)):
        a, b = fn(u), fn(v)
        assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_functionals_vanish_at_zero(small_grid):
    z = Field.zeros(small_grid)
    assert mass(z) == hamiltonian(z) == lyapunov(z) == 0.0
    assert modified_energy_I(z, 0.5, 2.0) == 0.0


def test_modified_energies_on_low_modes():
    g = GridSpec(256, 2 * math.pi)
    u = rough_data(g, 0.5, 7, kmax=4)
    assert modified_energy_D(u, 0.5, 4.0) == pytest.approx(mass(u), rel=1e-13)
    assert modified_energy_I(u, 0.5, 4.0) == pytest.approx(lyapunov(u), rel=1e-12)


def test_modified_energy_D_on_pure_mode():
    g = GridSpec(256, 2 * math.pi)
    N = 8.0
    u = Field(g, np.exp(32j * (g.x - g.x[0])))
    # theta(4N) = 4^{1/2} = 2, so the energy is 4 times the mass
    assert modified_energy_D(u, 0.5, N) == pytest.approx(4.0 * mass(u), rel=1e-13)


@given(st.integers(0, 1000), st.floats(0.1, 0.9))
def test_hs_norm_bounded_by_modified_energy(seed, s):
    g = GridSpec(512, 2 * math.pi)
    u = rough_data(g, s, seed)
    for N in (2.0, 8.0, 32.0):
        ratio = hs_norm(u, s) / (N**s * modified_energy_D(u, s, N) ** 0.5)
        assert ratio <= 2.0 ** (2 * s) * 2.0


def test_modified_energy_I_of_Q_close_to_L():
    g = GridSpec(2048, BOX)
    Q = eval_Q(g)
    gaps = [abs(modified_energy_I(Q, 0.5, N) - lyapunov(Q)) for N in (4.0, 8.0, 16.0)]
    assert gaps[0] < 1e-4 and gaps[2] < 1e-12
    assert gaps[1] < gaps[0]


def test_refined_energy(soliton_grid):
    Q = eval_Q(soliton_grid)
    z = Field.zeros(soliton_grid)
    assert modified_energy_refined(Q, z, 0.5, 8.0) == lyapunov(Q)
    w = rough_data(soliton_grid, 0.5, 8, norm=0.01, kmax=20)
    assert modified_energy_refined(Q, w, 0.5, 64.0) == pytest.approx(
        modified_energy_I(Q + w, 0.5, 64.0), abs=1e-12)


def test_hamiltonian_sign_validated(small_grid):
    with pytest.raises(ConfigurationError):
        hamiltonian(Field.zeros(small_grid), "up")


# --- ledger and evolve -----------------------------------------------------------------

def test_t_end_zero_gives_single_entry(small_grid):
    u = rough_data(small_grid, 0.5, 0)
    led = evolve(u, SolverConfig(dt=1e-3), standard_probes(0.5, 2.0))
    assert led.times.tolist() == [0.0]
    assert set(led.columns) == {"mass", "H", "L", "hs_norm", "E_D", "E_I"}


def test_final_time_always_recorded(small_grid):
    u = rough_data(small_grid, 0.5, 0)
    led = evolve(u, SolverConfig(dt=1e-3, t_end=0.01, record_stride=3), {"mass": mass})
    assert led.times[-1] == pytest.approx(0.01)
    assert np.all(np.diff(led.times) > 0)


def test_evolve_is_deterministic(small_grid):
    u = rough_data(small_grid, 0.5, 0)
    cfg = SolverConfig(dt=1e-3, t_end=0.05, record_stride=5, dealias=True)
    a = evolve(u, cfg, standard_probes(0.5, 2.0)).to_csv()
    b = evolve(u, cfg, standard_probes(0.5, 2.0)).to_csv()
    assert a == b


def test_ledger_validation():
    with pytest.raises(NumericalError):
        EnergyLedger(np.array([0.0, 0.0]), {})
    with pytest.raises(NumericalError):
        EnergyLedger(np.array([0.0, 1.0]), {"mass": np.array([1.0, np.nan])})
    with pytest.raises(NumericalError):
        EnergyLedger(np.array([0.0, 1.0]), {"mass": np.array([1.0])})
    # modulation columns may have gaps, written as empty cells
    led = EnergyLedger(np.array([0.0, 1.0]), {"theta": np.array([0.5, np.nan])})
    lines = led.to_csv().splitlines()
    assert lines[0] == "t,mass,H,L,E_D,E_I,hs_norm,dist_hs,theta,x0,iw_h1,res0,res1"
    assert lines[1] == "0.0,,,,,,,,0.5,,,,"
    assert lines[2] == "1.0,,,,,,,,,,,,"


def test_rough_data_normalization_and_support():
    g = GridSpec(512, 10.0)
    u = rough_data(g, 0.5, 3, norm=2.5, kmax=30)
    assert hs_norm(u, 0.5) == pytest.approx(2.5, rel=1e-12)
    assert np.all(u.spectrum[np.abs(g.k) > 30] == 0)
    assert np.array_equal(u.values, rough_data(g, 0.5, 3, norm=2.5, kmax=30).values)
