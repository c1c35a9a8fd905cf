import numpy as np
import pytest

from bathpositive.frames import (
    NotAFrameError,
    PositiveFrame,
    SIC_BLOCH,
    bloch_operator,
    canonicalize_povm,
    dual_frame,
    overcomplete_pauli_frame,
    pauli_frame,
    qubit_sic_frame,
    sic_dual_closed_form,
    transfer_matrix,
    validate_frame,
)
from bathpositive.opcore import PAULIS, ket, projector


@pytest.mark.parametrize("builder", [qubit_sic_frame, pauli_frame, overcomplete_pauli_frame])
def test_duals_reconstruct(builder):
    frame = builder()
    report = validate_frame(frame, dual_frame(frame))
    assert report.ok()


def test_sic_dual_matches_closed_forms():
    frame = qubit_sic_frame()
    dual = dual_frame(frame).elements
    bloch = [0.5 * (np.eye(2) + 3 * sum(m[k] * PAULIS[a] for k, a in enumerate("xyz"))) for m in SIC_BLOCH]
    assert np.max(np.abs(np.array(dual) - np.array(bloch))) < 1e-12
    assert np.max(np.abs(np.array(dual) - np.array(sic_dual_closed_form(frame, a=0.25)))) < 1e-12


def test_sic_frame_bounds():
    lo, hi = transfer_matrix(qubit_sic_frame()).frame_bounds
    assert lo == pytest.approx(1 / 6)
    assert hi == pytest.approx(1 / 2)


def test_pauli_frame_duals():
    dual = dual_frame(pauli_frame()).elements
    x, y, z = PAULIS["x"], PAULIS["y"], PAULIS["z"]
    assert np.allclose(dual[0], (np.eye(2) - x - y - z) / 2)
    for q, s in zip(dual[1:], (x, y, z)):
        assert np.allclose(q, s / 2)
    assert not pauli_frame().is_povm()


def test_perturbed_dual_is_reported():
    frame = qubit_sic_frame()
    dual = list(dual_frame(frame).elements)
    dual[0] = dual[0] + 1e-6 * PAULIS["x"]
    assert not validate_frame(frame, dual).ok()


def test_rank_deficient_frame_rejected():
    with pytest.raises(NotAFrameError):
        PositiveFrame((np.eye(2) / 2, np.eye(2) / 2))


def test_non_positive_element_rejected():
    with pytest.raises(ValueError):
        PositiveFrame((PAULIS["z"], np.eye(2), bloch_operator([1, 0, 0]), bloch_operator([0, 1, 0])))


def test_canonicalize_makes_povm():
    raw = [bloch_operator(m, 0.3 + 0.1 * k) for k, m in enumerate(SIC_BLOCH)]
    frame = canonicalize_povm(raw)
    assert frame.is_povm()
    assert all(np.linalg.eigvalsh(p)[0] > -1e-12 for p in frame.elements)


def test_canonicalize_rejects_dependent_elements():
    p = projector(ket(1, 0))
    with pytest.raises(NotAFrameError):
        canonicalize_povm([p, p, np.eye(2) - p, bloch_operator([1, 0, 0])])


def test_qutrit_frames_are_valid():
    from bathpositive.frames import mub_frame, qutrit_sic_frame, random_projector_frame
    rng = np.random.default_rng(0)
    for frame, n in [(qutrit_sic_frame(), 9), (mub_frame(3), 12), (random_projector_frame(3, rng), 9)]:
        assert len(frame.elements) == n
        assert np.allclose(sum(frame.elements), np.eye(3), atol=1e-10)


def test_qutrit_sic_dual_matches_closed_form():
    from bathpositive.frames import qutrit_sic_frame
    frame = qutrit_sic_frame()
    dual = np.array(dual_frame(frame).elements)
    assert np.allclose(dual, np.array(sic_dual_closed_form(frame, a=1 / 9)), atol=1e-12)
