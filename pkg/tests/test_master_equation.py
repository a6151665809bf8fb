import numpy as np
import pytest

from ryddecay.lattice import LatticeSpec
from ryddecay.master_equation import (
    ObservableSeries,
    check_density_matrix,
    excitation_density,
    integrate_exact,
    lindblad_rhs,
    product_density,
    pure_state_density,
    relative_difference,
    scan_steady_state,
    steady_state_window_average,
    vacuum_density,
    window_times,
)
from ryddecay.operators import (
    COLLECTIVE,
    SINGLE,
    ModelParams,
    build_system,
)

LAT1 = LatticeSpec(1, (1,), "open")
LAT3 = LatticeSpec(1, (3,), "periodic")
LAT4 = LatticeSpec(1, (4,), "periodic")


def up_state_density():
    rho = np.zeros((2, 2), dtype=complex)
    rho[1, 1] = 1.0
    return rho


def random_density(rng, dim, diagonal=False):
    if diagonal:
        p = rng.random(dim)
        return np.diag(p / p.sum()).astype(complex)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def test_rhs_single_atom_decay_rate():
    h, jumps = build_system(LAT1, ModelParams(gamma=1.0), SINGLE)
    drho = lindblad_rhs(up_state_density(), h, jumps)
    assert drho[1, 1].real == pytest.approx(-1.0, abs=1e-14)


def test_rhs_traceless_and_hermiticity_preserving():
    rng = np.random.default_rng(5)
    h, jumps = build_system(LAT3, ModelParams(V=3.0, Omega=1.0, Delta=-1.0), COLLECTIVE)
    for _ in range(5):
        rho = random_density(rng, 8)
        drho = lindblad_rhs(rho, h, jumps)
        assert abs(np.trace(drho)) < 1e-12
        assert np.max(np.abs(drho - drho.conj().T)) < 1e-12


def test_rhs_single_equals_collective_for_one_atom():
    hs, js = build_system(LAT1, ModelParams(gamma=1.0), SINGLE)
    hc, jc = build_system(LAT1, ModelParams(gamma=1.0), COLLECTIVE)
    rng = np.random.default_rng(11)
    rho = random_density(rng, 2)
    assert np.array_equal(lindblad_rhs(rho, hs, js), lindblad_rhs(rho, hc, jc))


def test_rhs_dimension_mismatch():
    h, jumps = build_system(LAT1, ModelParams(), SINGLE)
    with pytest.raises(ValueError):
        lindblad_rhs(np.eye(4, dtype=complex) / 4, h, jumps)


def test_single_atom_decay_curve():
    h, jumps = build_system(LAT1, ModelParams(gamma=1.0), SINGLE)
    ts = np.linspace(0.0, 5.0, 26)
    res = integrate_exact(up_state_density(), h, jumps, 5.0, sample_times=ts)
    ns = np.array([excitation_density(r, LAT1) for r in res.states])
    assert np.max(np.abs(ns - np.exp(-ts)) / np.exp(-ts)) < 1e-8


def test_fully_mixed_populations_decay_per_site():
    rho0 = np.eye(8, dtype=complex) / 8
    h, jumps = build_system(LAT3, ModelParams(V=10.0), COLLECTIVE)
    res = integrate_exact(rho0, h, jumps, 1.0, sample_times=[1.0])
    expect = 0.5 * np.exp(-1.0)
    assert excitation_density(res.states[-1], LAT3) == pytest.approx(expect, rel=1e-7)


def test_diagonal_initial_state_model_equivalence():
    rng = np.random.default_rng(3)
    rho0 = random_density(rng, 16, diagonal=True)
    mp = ModelParams(V=10.0, gamma=1.0)
    out = {}
    for model in (SINGLE, COLLECTIVE):
        h, jumps = build_system(LAT4, mp, model)
        res = integrate_exact(rho0, h, jumps, 1.0, sample_times=[1.0])
        out[model] = res.states[-1]
    assert np.max(np.abs(out[SINGLE] - out[COLLECTIVE])) < 1e-10


def test_undriven_excitation_monotone_to_vacuum():
    rng = np.random.default_rng(9)
    rho0 = random_density(rng, 16)
    h, jumps = build_system(LAT4, ModelParams(V=10.0), COLLECTIVE)
    ts = np.linspace(0.0, 8.0, 33)
    res = integrate_exact(rho0, h, jumps, 8.0, sample_times=ts)
    ns = np.array([excitation_density(r, LAT4) for r in res.states])
    assert np.all(np.diff(ns) <= 1e-12)
    assert ns[-1] < 1e-3
    assert res.max_trace_drift < 1e-10
    assert res.max_herm_drift < 1e-10


def test_positivity_preserved_driven():
    h, jumps = build_system(LAT4, ModelParams(V=10.0, Omega=2.5, Delta=-6.0), COLLECTIVE)
    res = integrate_exact(vacuum_density(16), h, jumps, 1.0, sample_times=[0.3, 1.0])
    for rho in res.states:
        assert np.linalg.eigvalsh(rho).min() > -1e-10


def test_density_matrix_validation():
    with pytest.raises(ValueError):
        check_density_matrix(np.eye(4) * 0.5)  # trace 2
    bad = np.eye(2, dtype=complex)
    bad[0, 1] = 0.5  # not Hermitian
    with pytest.raises(ValueError):
        check_density_matrix(bad)
    check_density_matrix(vacuum_density(8))


def test_state_builders():
    psi = np.zeros(4, dtype=complex)
    psi[2] = 1.0
    rho = pure_state_density(psi)
    assert rho[2, 2] == 1.0 and np.trace(rho) == 1.0
    lat2 = LatticeSpec(1, (2,), "open")
    assert excitation_density(rho, lat2) == pytest.approx(0.5)  # |up down>
    single = np.array([[0.25, 0.0], [0.0, 0.75]], dtype=complex)
    prod = product_density(single, 2)
    assert prod[3, 3] == pytest.approx(0.75**2)


def test_excitation_density_extremes():
    lat2 = LatticeSpec(1, (2,), "open")
    up = np.zeros((4, 4), dtype=complex)
    up[3, 3] = 1.0
    assert excitation_density(up, lat2) == pytest.approx(1.0)
    assert excitation_density(vacuum_density(4), lat2) == pytest.approx(0.0)


def test_observable_series_validation():
    with pytest.raises(ValueError):
        ObservableSeries(times=np.array([0.0, 0.0, 1.0]), values=np.zeros(3), label="x")
    with pytest.raises(ValueError):
        ObservableSeries(times=np.array([0.0, 1.0]), values=np.zeros(3), label="x")


def test_window_times_definition():
    tw = window_times(1.0)
    assert len(tw) == 100
    assert tw[0] == pytest.approx(4.75) and tw[-1] == pytest.approx(5.0)
    tw2 = window_times(2.0)
    assert tw2[0] == pytest.approx(2.375)


def test_window_average_constant_and_ramp():
    ts = np.linspace(4.0, 6.0, 401)
    const = ObservableSeries(times=ts, values=np.full(401, 0.37), label="c")
    assert steady_state_window_average(const) == pytest.approx(0.37)
    ramp = ObservableSeries(times=ts, values=1.0 + 2.0 * ts, label="r")
    assert steady_state_window_average(ramp) == pytest.approx(1.0 + 2.0 * 4.875)


def test_window_average_exponential():
    tw = window_times(1.0)
    series = ObservableSeries(times=tw, values=np.exp(-tw), label="e")
    # independent oracle: geometric closed form of the 100-sample mean
    h = 0.25 / 99
    expect = np.exp(-4.75) * (1 - np.exp(-100 * h)) / (1 - np.exp(-h)) / 100
    assert steady_state_window_average(series) == pytest.approx(expect, abs=1e-15)
    assert expect == pytest.approx(0.00765540, abs=5e-8)


def test_window_average_requires_coverage():
    ts = np.linspace(0.0, 3.0, 31)
    with pytest.raises(ValueError):
        steady_state_window_average(
            ObservableSeries(times=ts, values=np.zeros(31), label="x")
        )


def test_relative_difference():
    assert relative_difference(0.4, 0.2) == pytest.approx(1.0)
    assert relative_difference(0.3, 0.3) == 0.0
    assert relative_difference(0.3, 0.1) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        relative_difference(0.3, 0.0)


def test_scan_matches_single_cell_integration():
    mp = ModelParams(V=10.0, gamma=1.0)
    scan = scan_steady_state(
        LAT3, mp, np.array([-6.0]), np.array([2.5]), t_final=5.0
    )
    for model, grid in ((SINGLE, scan.n_single), (COLLECTIVE, scan.n_collective)):
        cell = ModelParams(V=10.0, gamma=1.0, Omega=2.5, Delta=-6.0)
        h, jumps = build_system(LAT3, cell, model)
        res = integrate_exact(
            vacuum_density(8), h, jumps, 5.0, sample_times=window_times(1.0)
        )
        direct = float(
            np.mean([excitation_density(r, LAT3) for r in res.states])
        )
        assert grid[0, 0] == pytest.approx(direct, abs=1e-12)


def test_scan_requires_window_coverage():
    with pytest.raises(ValueError):
        scan_steady_state(
            LAT3, ModelParams(V=10.0), np.array([0.0]), np.array([1.0]), t_final=2.0
        )
