import numpy as np
import pytest

from bathpositive import lat
from bathpositive.control import cpmg_sequence, resonance_frequencies
from bathpositive.opcore import PAULIS, partial_trace

NOISELESS = lat.NoiseModel(0.0, 0.0, 1)


def test_hamiltonian_is_hermitian_and_sized():
    cfg = lat.benchmark_config("full")
    H = lat.build_dipolar_hamiltonian(cfg)
    assert H.shape == (8, 8)
    assert np.allclose(H, H.conj().T)


def test_bath_resonances_and_published_values():
    cfg = lat.benchmark_config("full")
    res = lat.lat_resonances(cfg)
    hb = lat.bath_hamiltonian(cfg)
    assert np.allclose(np.sort(np.linalg.eigvalsh(hb)), [-1 - 2 * np.sqrt(2), -3, -1 + 2 * np.sqrt(2), 5])
    assert lat.default_resonances(cfg) == pytest.approx((4 - 2 * np.sqrt(2) + 2, 2 * np.sqrt(2) - 2))
    # the two strongest resonances are eigen-gaps of the bath Hamiltonian
    gaps = resonance_frequencies(hb).frequencies
    for r in lat.default_resonances(cfg):
        assert np.min(np.abs(gaps - r)) < 1e-9
    assert res.positive.size >= 2


def test_preparations_are_36_cp_maps():
    preps = lat.preparation_maps()
    assert len(preps) == 36
    rho = np.eye(2) / 2
    for p in preps:
        out = p.op(rho)
        assert np.trace(out).real == pytest.approx(0.5)


@pytest.mark.parametrize("menu", ["single", "double", "full"])
def test_noiseless_recovery(menu):
    res = lat.run_lat(lat.benchmark_config(menu, noise=NOISELESS))
    assert res.F_SB > 1 - 1e-6
    assert res.F_S > 1 - 1e-9


def test_condition_number_decreases_with_menu():
    conds = [lat.run_lat(lat.benchmark_config(m, noise=NOISELESS)).condition_number for m in ("single", "double", "full")]
    assert conds[0] > conds[1] > conds[2]


def test_noisy_run_is_seed_deterministic():
    a = lat.run_lat(lat.benchmark_config("single", seed=3))
    b = lat.run_lat(lat.benchmark_config("single", seed=3))
    c = lat.run_lat(lat.benchmark_config("single", seed=3, jobs=4))
    assert a.F_SB == b.F_SB == c.F_SB
    assert np.array_equal(a.physical, c.physical)


def test_underdetermined_menu_names_unknowns():
    cfg = lat.benchmark_config("single", noise=NOISELESS, free_steps=0)
    with pytest.raises(lat.IdentifiabilityError) as err:
        lat.run_lat(cfg)
    assert err.value.unidentifiable
    assert all("*" in lab for lab in err.value.unidentifiable)


def test_empty_menu_rejected():
    cfg = lat.benchmark_config("single", noise=NOISELESS)
    cfg.menu = ()
    with pytest.raises(ValueError):
        lat.run_lat(cfg)


def test_factorisable_assumption_is_worse():
    cfg = lat.benchmark_config("full", noise=NOISELESS)
    corr = lat.run_lat(cfg)
    fact = lat.run_lat(cfg, mode="factorisable")
    assert fact.F_SB < corr.F_SB - 0.1


def test_eqsp_trace_identity():
    cfg = lat.benchmark_config("full", noise=NOISELESS)
    seq = cpmg_sequence(2 * np.pi / lat.default_resonances(cfg)[0], 3, "x")
    for obs in ("x", "z"):
        _, direct, from_y = lat.eqsp_check(cfg, seq, obs)
        assert from_y == pytest.approx(direct, abs=1e-9)


def test_benchmark_state_marginal():
    rho = lat.benchmark_state()
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.linalg.eigvalsh(rho)[0] > -1e-12
    rho_s = partial_trace(rho, (2, 4))
    assert np.trace(rho_s @ PAULIS["z"]).real <= 1.0


def test_noise_model_validation():
    with pytest.raises(ValueError):
        lat.NoiseModel(variance=-0.1)
