import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from ipchain.errors import DomainError
from ipchain.spectral import (
    SpectralDensityModel,
    ThermalizedWeight,
    eval_density,
    eval_thermalized,
    reorganization_energy,
)


def drude(eta=1.0, omega_c=1.0):
    return SpectralDensityModel(eta=eta, omega_c=omega_c)


@pytest.mark.parametrize(
    "eta, omega_c, omega, expected",
    [(1.0, 1.0, 1.0, 0.5), (2.0, 0.25, 0.25, 1.0), (1.0, 1.0, math.inf, 0.0)],
)
def test_eval_density_examples(eta, omega_c, omega, expected):
    assert eval_density(drude(eta, omega_c), omega) == pytest.approx(expected, abs=1e-15)


def test_eval_density_decays():
    model = drude()
    values = [eval_density(model, w) for w in (1e2, 1e4, 1e6)]
    assert values[0] > values[1] > values[2] > 0
    assert values[2] < 1e-5


@pytest.mark.parametrize("omega", [0.0, -1.0])
def test_eval_density_rejects_nonpositive(omega):
    with pytest.raises(DomainError):
        eval_density(drude(), omega)


def test_thermalized_small_omega_limit():
    weight = ThermalizedWeight(drude(), beta=1.0)
    # coth(x) ~ 1/x gives eta / (omega_c beta)
    assert eval_thermalized(weight, 1e-12) == pytest.approx(1.0, rel=1e-12)
    assert eval_thermalized(weight, 0.0) == pytest.approx(1.0, rel=1e-12)
    assert eval_thermalized(weight, 1e-4) == pytest.approx(1.0, rel=1e-4)


def test_thermalized_direct_value():
    weight = ThermalizedWeight(drude(), beta=1.0)
    expected = 0.5 * (1 + 1 / math.tanh(0.5)) / 2
    assert expected == pytest.approx(0.790988, abs=1e-6)
    assert eval_thermalized(weight, 1.0) == pytest.approx(expected, rel=1e-14)
    ratio = eval_thermalized(weight, -1.0) / eval_thermalized(weight, 1.0)
    assert ratio == pytest.approx(math.exp(-1.0), rel=1e-14)


def test_thermalized_zero_temperature_matches_density():
    model = drude(1.0, 0.5)
    weight = ThermalizedWeight(model, beta=math.inf)
    assert weight.domain[0] == 0.0
    for omega in (0.1, 0.5, 3.0):
        assert eval_thermalized(weight, omega) == eval_density(model, omega)


def test_thermalized_outside_domain():
    weight = ThermalizedWeight(drude(), beta=1.0, omega_max=5.0)
    with pytest.raises(DomainError):
        eval_thermalized(weight, 6.0)
    with pytest.raises(DomainError):
        eval_thermalized(ThermalizedWeight(drude(), beta=math.inf), -0.5)


def test_default_cutoff():
    weight = ThermalizedWeight(drude(1.0, 0.25), beta=1.0)
    assert weight.domain == (-11.25, 11.25)
    assert ThermalizedWeight(drude(1.0, 4.0), beta=0.25).omega_max == pytest.approx(60.0)


def test_detailed_balance_on_grid():
    for beta in (0.25, 1.0, 3.0):
        weight = ThermalizedWeight(drude(1.3, 0.7), beta=beta)
        grid = np.linspace(1e-3, weight.omega_max, 400)
        lhs = weight.h2(-grid) * np.exp(beta * grid)
        np.testing.assert_allclose(lhs, weight.h2(grid), rtol=1e-12)


def test_zero_temperature_consistency():
    model = drude(1.0, 0.25)
    weight = ThermalizedWeight(model, beta=1e6)
    grid = np.linspace(0.01, 10.0, 300) * model.omega_c
    assert np.max(np.abs(weight.h2(grid) - model(grid))) < 1e-9


def test_drude_peak_at_omega_c():
    model = drude(1.7, 0.4)
    grid = np.linspace(1e-3, 20, 5000)
    assert np.all(model(model.omega_c) >= model(grid))


@settings(max_examples=60, deadline=None)
@given(
    eta=st.floats(0.0, 5.0),
    omega_c=st.floats(0.05, 5.0),
    beta=st.floats(0.05, 20.0),
    x=st.floats(-1.0, 1.0),
)
def test_thermalized_nonnegative_and_balanced(eta, omega_c, beta, x):
    weight = ThermalizedWeight(drude(eta, omega_c), beta=beta)
    omega = x * weight.omega_max
    value = eval_thermalized(weight, omega)
    assert value >= 0.0
    assert math.isfinite(value)
    if abs(omega) > 1e-6 and beta * abs(omega) < 600:
        mirrored = eval_thermalized(weight, -omega)
        assert mirrored * math.exp(beta * omega) == pytest.approx(value, rel=1e-10, abs=1e-300)


def test_h_is_sqrt_of_weight():
    weight = ThermalizedWeight(drude(), beta=2.0)
    grid = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(weight.h(grid) ** 2, weight.h2(grid), rtol=1e-14)


@pytest.mark.parametrize("eta, omega_c", [(1.0, 1.0), (2.0, 0.25), (0.3, 4.0)])
def test_reorganization_energy(eta, omega_c):
    assert reorganization_energy(drude(eta, omega_c)) == pytest.approx(2 * eta, abs=1e-6)
    weight = ThermalizedWeight(drude(eta, omega_c), beta=1.0)
    assert reorganization_energy(weight) == pytest.approx(2 * eta, abs=1e-6)


def test_reorganization_energy_zero_coupling():
    assert reorganization_energy(drude(0.0, 3.0)) == 0.0


def test_total_weight_matches_adaptive_quadrature():
    weight = ThermalizedWeight(drude(1.0, 0.25), beta=1.0)
    lo, hi = weight.domain
    expected, _ = integrate.quad(lambda w: float(weight.h2(w)), lo, hi, points=[0.0], epsabs=1e-13, limit=200)
    assert expected > 0
    # lower bound from the zero-temperature part alone
    zero_t, _ = integrate.quad(lambda w: float(weight.base(w)), 0, hi)
    assert expected > zero_t


@pytest.mark.parametrize("kwargs", [dict(eta=-1.0), dict(omega_c=0.0)])
def test_model_validation(kwargs):
    with pytest.raises(DomainError):
        SpectralDensityModel(**kwargs)
