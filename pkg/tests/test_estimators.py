import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from oddinverse.estimators import ForwardSolver, SourceReconstructor
from oddinverse.manufactured import generate_manufactured
from oddinverse.model import ProblemData
from oddinverse.presets import preset


def test_forward_solver_params_and_predict():
    est = ForwardSolver(system="airy", Nx=32, Nt=32)
    assert est.get_params()["Nx"] == 32
    assert clone(est).set_params(Nt=16).Nt == 16
    with pytest.raises(NotFittedError):
        est.predict()
    case = generate_manufactured(preset("airy"), ["exp(-t)*sin(pi*x)"])
    est.fit(case.problem())
    assert est.predict().shape == (33, 1, 34)
    mid = est.predict([0.5])[0, 0]
    assert np.max(np.abs(mid - np.exp(-0.5) * np.sin(np.pi * est.grid_.x))) < 1e-2
    with pytest.raises(ValueError):
        est.predict([2.0])


def test_source_reconstructor_recovers_amplitude():
    case = generate_manufactured(preset("airy"), ["t*x*(2-x)**2*(1+x)/8"], F={0: ["sin(t)"]},
                                 controls={0: ["1"]}, weights={0: ["x**2*(2-x)/4"]}, R=2.0)
    est = SourceReconstructor(system="airy", R=2.0, Nx=64, Nt=128).fit(case.problem())
    F = est.predict()
    assert F.shape == (129, 1)
    assert np.max(np.abs(F[:, 0] - np.sin(est.grid_.t))) < 2e-2
    np.testing.assert_allclose(est.predict([1.0])[0, 0], np.sin(1.0), atol=2e-2)


def test_data_dimension_check():
    with pytest.raises(ValueError):
        ForwardSolver(system="majda_biello", Nx=16, Nt=8).fit(ProblemData(1, 1))
    with pytest.raises(TypeError):
        ForwardSolver(Nx=16, Nt=8).fit(np.zeros(3))
