import subprocess
import sys

import numpy as np
import pytest

from gpds_ep import backend
from gpds_ep.gp import GPHyper, train
from gpds_ep.uncertain import moment_matched_core


def _case(seed, n=20, D=2, E=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, D))
    Y = rng.normal(size=(n, E))
    h = [GPHyper(rng.uniform(0.5, 2.0, size=D), rng.uniform(0.5, 2.0),
                 rng.uniform(0.01, 0.1)) for _ in range(E)]
    gp = train(X, Y, h)
    mean = rng.normal(size=D)
    A = rng.normal(size=(D, D))
    cov = A @ A.T + 0.1 * np.eye(D)
    return gp, mean, cov


def test_numpy_backend_always_listed():
    names = backend.available_backends()
    assert "numpy" in names
    assert backend.BACKEND_NAME in names


def test_backends_agree():
    impls = backend.available_backends()
    if len(impls) < 2:
        pytest.skip("only one backend built")
    for seed in range(5):
        gp, mean, cov = _case(seed)
        nu = gp.X - mean
        args = (nu, gp.inv_ell2, gp.log_sf2, gp.sw2, gp.beta, gp.iK, cov)
        results = {name: fn(*args) for name, fn in impls.items()}
        ref = results.pop("numpy")
        for name, got in results.items():
            for a, b in zip(got, ref):
                np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12,
                                           err_msg=name)


def _import_with_backend(value):
    code = "import gpds_ep.backend as b; print(b.BACKEND_NAME)"
    return subprocess.run([sys.executable, "-c", code],
                          env={"PATH": "/usr/bin:/bin",
                               "GPDS_EP_BACKEND": value},
                          capture_output=True, text=True)


def test_env_var_forces_numpy():
    r = _import_with_backend("numpy")
    assert r.returncode == 0
    assert r.stdout.strip() == "numpy"


def test_env_var_forces_compiled_when_built():
    if "compiled" not in backend.available_backends():
        pytest.skip("extension not built")
    r = _import_with_backend("compiled")
    assert r.returncode == 0
    assert r.stdout.strip() == "compiled"


def test_env_var_rejects_unknown_value():
    r = _import_with_backend("vectorized")
    assert r.returncode != 0
    assert "GPDS_EP_BACKEND" in r.stderr
