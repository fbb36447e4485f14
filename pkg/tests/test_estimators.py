import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from shotfrugal._utils import popcounts
from shotfrugal.estimators import EnergyLandscape, QAOAParameterTuner
from shotfrugal.problems import build_hamiltonian, generate_maxcut_instance, generate_po_instance, rescale_instance
from shotfrugal.protocol import EXACT, ProtocolConfig, run_protocol
from shotfrugal.simulator import QaoaParams, expectation_energy, run_qaoa


def test_tuner_matches_protocol():
    inst = generate_maxcut_instance(8, 1)
    tuner = QAOAParameterTuner(p=2, seed=4).fit(inst)
    direct = run_protocol(inst, 2, ProtocolConfig(seed=4))
    np.testing.assert_array_equal(tuner.params_.to_vector(), direct.final_params.to_vector())
    assert tuner.score(inst) == pytest.approx(direct.ar_final, abs=1e-12)
    assert tuner.relative_improvement_ == direct.relative_improvement


def test_tuner_params_and_clone():
    tuner = QAOAParameterTuner(p=3, extra_evals=5, backend=EXACT)
    assert tuner.get_params()["extra_evals"] == 5
    copy = clone(tuner.set_params(seed=9))
    assert copy.seed == 9 and not hasattr(copy, "params_")


def test_tuner_validation():
    with pytest.raises(NotFittedError):
        QAOAParameterTuner().score(generate_maxcut_instance(4, 0))
    with pytest.raises(TypeError):
        QAOAParameterTuner().fit(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        QAOAParameterTuner(p=0).fit(generate_maxcut_instance(4, 0))


def test_tuner_po_samples_feasible():
    inst = generate_po_instance(6, 3)
    tuner = QAOAParameterTuner(p=1, total_shots=2000).fit(inst, reference=(None, 1.0))
    draws = tuner.sample(inst, 500, seed=1)
    assert np.all(popcounts(6)[draws] == inst.K)


def test_landscape_predict_at_nodes():
    inst = generate_maxcut_instance(6, 2)
    model = EnergyLandscape(p=1, resolution=9).fit(inst)
    scaled = rescale_instance(inst)[0]
    h = build_hamiltonian(scaled)
    nodes = model.grid_.nodes()[::7]
    expected = [expectation_energy(run_qaoa(scaled, QaoaParams.from_vector(x)), h) for x in nodes]
    np.testing.assert_allclose(model.predict(nodes), expected, atol=1e-12)
    assert np.all(model.predict_std(nodes) >= 0)
    with pytest.raises(ValueError):
        model.predict(np.zeros((2, 3)))


def test_landscape_explicit_center():
    model = EnergyLandscape(p=1, resolution=4, width=0.2, center=[0.5, 0.3]).fit(generate_maxcut_instance(4, 0))
    np.testing.assert_allclose(model.grid_.bounds, [[0.4, 0.6], [0.2, 0.4]])
