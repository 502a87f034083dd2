"""Compiled and numpy kernels agree, and the numpy kernels agree with loops."""

import subprocess
import sys

import numpy as np
import pytest

from mpple import estimation, kernels

compiled_only = pytest.mark.skipif(kernels.BACKEND != "compiled",
                                   reason="compiled core not built")


def _cox_inputs(n=60, p=3, groups=25, seed=0):
    rng = np.random.default_rng(seed)
    cuts = np.sort(rng.choice(np.arange(1, n), size=groups - 1, replace=False))
    starts = np.concatenate([[0], cuts, [n]]).astype(np.int64)
    risk = np.exp(rng.normal(size=n))
    Z = rng.normal(size=(n, p))
    dn = np.where(rng.uniform(size=groups) < 0.6, rng.uniform(0.2, 2.0, size=groups), 0.0)
    zw = rng.normal(size=(groups, p)) * (dn > 0)[:, None]
    return starts, risk, Z, dn, zw


def _cox_loop(starts, risk, Z, dn, zw):
    G, p = dn.size, Z.shape[1]
    s0, s1 = np.zeros(G), np.zeros((G, p))
    score, info, logsum = zw.sum(axis=0).copy(), np.zeros((p, p)), 0.0
    for g in range(G):
        rows = slice(starts[g], None)
        s0[g] = risk[rows].sum()
        s1[g] = risk[rows] @ Z[rows]
        if dn[g] > 0:
            e = s1[g] / s0[g]
            s2 = (risk[rows, None, None] * Z[rows, :, None] * Z[rows, None, :]).sum(axis=0)
            score -= dn[g] * e
            info += dn[g] * (s2 / s0[g] - np.outer(e, e))
            logsum += dn[g] * np.log(s0[g])
    return s0, s1, score, info, logsum


def _cif_inputs(k=3, n=20, M=15, seed=1):
    rng = np.random.default_rng(seed)
    phi = rng.normal(size=(k, n, M))
    s_minus = np.cumprod(np.concatenate([[1.0], rng.uniform(0.9, 1.0, size=M - 1)]))
    dlam = rng.uniform(0, 0.1, size=M)
    return phi, s_minus, dlam


def _cif_loop(phi, s_minus, dlam, j):
    k, n, M = phi.shape
    out = np.zeros((n, M))
    for i in range(n):
        acc = 0.0
        for m in range(M):
            own_prev = phi[j, i, m - 1] if m else 0.0
            all_prev = phi[:, i, m - 1].sum() if m else 0.0
            acc += s_minus[m] * (phi[j, i, m] - own_prev) - all_prev * s_minus[m] * dlam[m]
            out[i, m] = acc
    return out


class TestNumpyKernels:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_cox_pass_matches_loop(self, seed):
        args = _cox_inputs(seed=seed)
        for got, want in zip(kernels.cox_pass(*args, backend="python"), _cox_loop(*args)):
            np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("j", [0, 2])
    def test_cif_pass_matches_loop(self, j):
        args = _cif_inputs()
        np.testing.assert_allclose(kernels.cif_influence_pass(*args, j, backend="python"),
                                   _cif_loop(*args, j), rtol=1e-12, atol=1e-13)


@compiled_only
class TestCompiledEquivalence:
    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    @pytest.mark.parametrize("p", [1, 4])
    def test_cox_pass(self, seed, p):
        args = _cox_inputs(n=200, p=p, groups=90, seed=seed)
        a = kernels.cox_pass(*args, backend="compiled")
        b = kernels.cox_pass(*args, backend="python")
        for x, y in zip(a, b):
            np.testing.assert_allclose(x, y, rtol=1e-11, atol=1e-12)

    def test_cox_pass_all_tied(self):
        args = _cox_inputs(n=10, p=2, groups=2, seed=5)
        args = (np.array([0, 10], dtype=np.int64), *args[1:3], np.array([3.0]),
                np.ones((1, 2)))
        for x, y in zip(kernels.cox_pass(*args, backend="compiled"),
                        kernels.cox_pass(*args, backend="python")):
            np.testing.assert_allclose(x, y, rtol=1e-12)

    @pytest.mark.parametrize("j", [0, 1, 2])
    def test_cif_influence_pass(self, j):
        args = _cif_inputs(n=300, M=120, seed=j)
        np.testing.assert_allclose(kernels.cif_influence_pass(*args, j, backend="compiled"),
                                   kernels.cif_influence_pass(*args, j, backend="python"),
                                   rtol=1e-10, atol=1e-12)

    def test_fit_identical_up_to_rounding(self, sim_ds, monkeypatch):
        layout = estimation.RiskSetLayout(sim_ds.time)
        d = (sim_ds.cause == 1).astype(float)
        compiled = estimation.fit_cox(layout, sim_ds.covariates, d, cause=1)
        monkeypatch.setattr(estimation, "cox_pass",
                            lambda *a: kernels.cox_pass(*a, backend="python"))
        python = estimation.fit_cox(layout, sim_ds.covariates, d, cause=1)
        np.testing.assert_allclose(compiled.beta, python.beta, rtol=1e-10)
        np.testing.assert_allclose(compiled.dlambda, python.dlambda, rtol=1e-10)


class TestDispatch:
    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            kernels.cox_pass(*_cox_inputs(), backend="gpu")

    def test_environment_forces_numpy(self):
        code = "import mpple.kernels as k; print(k.BACKEND)"
        out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                             env={"MPPLE_PURE_PYTHON": "1", "PATH": ""}, check=True)
        assert out.stdout.strip() == "python"
