import numpy as np
import pytest

from bathpositive.bplus import decompose
from bathpositive.dephasing import (
    DephasingSpec,
    GaussianBathState,
    TruncationError,
    char_fn_gaussian,
    char_fn_numeric,
    check_truncation,
    conditional_displacement_state,
    conditional_phase_state,
    dephase_correlated,
    dephasing_oracle,
    displacement_vector,
    fock_state,
    gaussian_match,
    gaussian_to_truncated,
    thermal_state,
)
from bathpositive.frames import qubit_sic_frame

PLUS = np.full((2, 2), 0.5, dtype=complex)
CUTOFF = 30


def test_displacement_vector_periodic():
    spec = DephasingSpec(1.0, ((2.0, 0.3),))
    assert np.allclose(displacement_vector(spec, 0.0), 0)
    assert np.allclose(displacement_vector(spec, np.pi), 0, atol=1e-12)


def test_gaussian_char_fn_matches_numeric():
    state = GaussianBathState((0.3 - 0.2j,), (0.5,))
    rho = gaussian_to_truncated(state, CUTOFF)
    for xi in (0.2, 0.4j, -0.3 + 0.1j):
        assert char_fn_numeric(rho, [xi], CUTOFF) == pytest.approx(char_fn_gaussian(state, [xi]), abs=1e-8)


def test_gaussian_match_roundtrip():
    state = GaussianBathState((0.25 + 0.1j,), (0.7,))
    got = gaussian_match(gaussian_to_truncated(state, CUTOFF), CUTOFF)
    assert got.alpha[0] == pytest.approx(state.alpha[0], abs=1e-6)
    assert got.nbar[0] == pytest.approx(state.nbar[0], abs=1e-5)


def test_truncation_guard():
    with pytest.raises(TruncationError):
        check_truncation(fock_state(5, 5), 5)
    with pytest.raises(TruncationError):
        char_fn_numeric(thermal_state(5.0, 10), [0.1], 10)


def _max_dev(rho, spec, times):
    dec = decompose(rho, qubit_sic_frame(), (2, CUTOFF + 1))
    dev = diag = 0.0
    for t in times:
        a = dephase_correlated(dec, spec, t, CUTOFF)
        o = dephasing_oracle(rho, spec, t, CUTOFF)
        dev = max(dev, abs(abs(a[0, 1]) - abs(o[0, 1])))
        diag = max(diag, abs(a[0, 0] - rho[: CUTOFF + 1, : CUTOFF + 1].trace()), abs(o[0, 0] - a[0, 0]))
    return dev, diag


@pytest.mark.parametrize("nbar", [0.0, 0.5, 1.0])
def test_factorisable_matches_oracle(nbar):
    spec = DephasingSpec(1.3, ((1.0, 0.2),))
    rho = np.kron(PLUS, thermal_state(nbar, CUTOFF))
    dev, diag = _max_dev(rho, spec, np.linspace(0, 4 * np.pi, 6))
    assert dev < 1e-3
    assert diag < 1e-10


@pytest.mark.parametrize("nbar", [0.0, 1.0])
def test_correlated_states_match_oracle(nbar):
    spec = DephasingSpec(1.0, ((1.0, 0.2),))
    times = np.linspace(0, 4 * np.pi, 6)
    for rho in (conditional_displacement_state(PLUS, 0.3, nbar, CUTOFF),
                conditional_phase_state(PLUS, 0.4, nbar, 0.6, CUTOFF)):
        dev, diag = _max_dev(rho, spec, times)
        assert dev < 1e-3
        assert diag < 1e-10


def test_gaussian_bath_entries():
    spec = DephasingSpec(1.0, ((1.0, 0.2),))
    state = GaussianBathState((0.0,), (0.5,))
    dec = decompose(np.kron(PLUS, gaussian_to_truncated(state, CUTOFF)), qubit_sic_frame(), (2, CUTOFF + 1))
    from dataclasses import replace

    gdec = replace(dec, bath_states=tuple(state for _ in dec.bath_states))
    t = 1.7
    expected = 0.5 * char_fn_gaussian(state, displacement_vector(spec, t))
    assert dephase_correlated(gdec, spec, t)[0, 1] == pytest.approx(expected, abs=1e-12)


def test_invalid_spec():
    with pytest.raises(ValueError):
        DephasingSpec(1.0, ((0.0, 0.1),))
    with pytest.raises(ValueError):
        GaussianBathState((0.0,), (-1.0,))
