import numpy as np
import pytest

from ipad import inner
from ipad.error import ConfigError, FactorizationError, NonFiniteError
from ipad.data import overcomplete_dct
from ipad.framework import accept_block
from ipad.inner import (AdmmConfig, AdmmDictionarySolver, AdmmState,
                        PithConfig, PithSolver, PithState, ProxLinearSolver,
                        ProxLinearState, admm_kkt_residual, gram_bound,
                        pith_step, prox_linear_step)
from ipad.prox import project_unit_columns, prox_hard_threshold
from ipad.sdl import SdlInstance, as_nnp, code_lipschitz, data_fit, grad_H_w


def random_instance(seed, n=6, m=4, p=10, lam=0.05):
    rng = np.random.default_rng(seed)
    inst = SdlInstance(data=rng.standard_normal((n, p)), lam=lam, m=m)
    D = project_unit_columns(rng.standard_normal((n, m)))
    W = rng.standard_normal((p, m))
    return inst, D, W


def code_subproblem(inst, D, W, W_prev, eta):
    return data_fit(inst, D, W) + inst.lam * np.count_nonzero(W) + \
        0.5 * eta * float(np.sum((W - W_prev) ** 2))


def fitted_instance(seed, n=6, m=4, p=10, lam=0.05):
    """Codes close to the truth, dictionary a perturbed ground truth."""
    rng = np.random.default_rng(seed)
    D_true = project_unit_columns(rng.standard_normal((n, m)))
    W_true = rng.standard_normal((p, m))
    data = D_true @ W_true.T + 0.01 * rng.standard_normal((n, p))
    D = project_unit_columns(D_true + 0.1 * rng.standard_normal((n, m)))
    W = W_true + 0.01 * rng.standard_normal((p, m))
    return SdlInstance(data=data, lam=lam, m=m), D, W


def scalar_pith_state(**kwargs):
    values = dict(D=np.array([[1.0]]), data=np.array([[2.0]]), eta=1.0,
                  W_prev=np.zeros((1, 1)), lam=0.5, step_scale=1.0)
    values.update(kwargs)
    return PithState(**values)


def test_pith_step_scalar():
    state = scalar_pith_state()
    assert state.lipschitz == pytest.approx(2.0)
    assert pith_step(np.zeros((1, 1)), state)[0, 0] == pytest.approx(1.0)


def test_pith_step_large_penalty_zeroes():
    state = scalar_pith_state(lam=10.0)
    assert pith_step(np.zeros((1, 1)), state)[0, 0] == 0.0


def test_pith_step_fixed_point():
    state = scalar_pith_state(W_prev=np.array([[2.0]]))
    W = np.array([[2.0]])
    assert pith_step(W, state)[0, 0] == pytest.approx(2.0)


def test_pith_step_box():
    state = scalar_pith_state(bound=0.5)
    assert pith_step(np.zeros((1, 1)), state)[0, 0] == pytest.approx(0.5)


@pytest.mark.parametrize('seed', range(10))
def test_pith_majorizes(seed):
    inst, D, W_prev = random_instance(seed)
    eta = 2.5
    state = PithState(D=D, data=inst.data, eta=eta, W_prev=W_prev,
                      lam=inst.lam)
    W = W_prev
    value = code_subproblem(inst, D, W, W_prev, eta)
    for _ in range(30):
        W = pith_step(W, state)
        new_value = code_subproblem(inst, D, W, W_prev, eta)
        assert new_value <= value + 1e-12 * (1 + abs(value))
        value = new_value


def test_prox_linear_step_scalar():
    state = ProxLinearState(grad=lambda W: W - 2.0, lipschitz=1.0,
                            prox=lambda v, tau: prox_hard_threshold(v, tau,
                                                                    0.5))
    assert prox_linear_step(np.zeros(1), state)[0] == pytest.approx(2.0)


def test_prox_linear_step_zero_gradient():
    state = ProxLinearState(grad=np.zeros_like, lipschitz=3.0,
                            prox=lambda v, tau: project_unit_columns(v))
    u = np.array([[3.0], [4.0]])
    assert np.allclose(prox_linear_step(u, state), [[0.6], [0.8]])


@pytest.mark.parametrize('lipschitz', [0.0, -1.0])
def test_prox_linear_step_rejects_lipschitz(lipschitz):
    state = ProxLinearState(grad=np.zeros_like, lipschitz=lipschitz,
                            prox=lambda v, tau: v)
    with pytest.raises(ConfigError):
        prox_linear_step(np.zeros(1), state)


def test_prox_linear_descent():
    for seed in range(100):
        inst, D, W = random_instance(seed, n=4, m=3, p=6, lam=0.1)
        problem = as_nnp(inst)
        state = ProxLinearState(grad=lambda W: grad_H_w(inst, D, W),
                                lipschitz=1.01 * code_lipschitz(D),
                                prox=problem.prox_f)
        before = data_fit(inst, D, W) + inst.lam * np.count_nonzero(W)
        W_new = prox_linear_step(W, state)
        after = data_fit(inst, D, W_new) + inst.lam * np.count_nonzero(W_new)
        if np.array_equal(W_new, W):
            assert after == before
        else:
            assert after < before


def test_prox_linear_solver_first_step_is_palm():
    inst, D, W = random_instance(1)
    eta = 2.5
    problem = as_nnp(inst)
    solver = ProxLinearSolver(problem.prox_f,
                              lambda W, D: grad_H_w(inst, D, W),
                              code_lipschitz)
    solver.reset(W, D, eta)
    L = code_lipschitz(D) + eta
    expected = problem.prox_f(W - grad_H_w(inst, D, W) / L, L)
    assert np.allclose(solver.step(), expected)


def test_prox_linear_solver_non_finite():
    solver = ProxLinearSolver(lambda v, tau: v * np.nan,
                              lambda u, v: np.zeros_like(u),
                              lambda v: 1.0, name='broken')
    solver.reset(np.ones(2), None, 2.5)
    with pytest.raises(NonFiniteError) as excinfo:
        solver.step()
    assert excinfo.value.oracle == 'inner:broken'


def test_pith_solver_budget():
    inst, D, W = random_instance(2)
    solver = PithSolver(inst, PithConfig(max_steps=2))
    assert solver.max_steps == 2
    solver.reset(W, D, 2.5)
    first = solver.step()
    assert first.shape == W.shape


@pytest.mark.parametrize('kwargs', [
    dict(step_scale=0.99),
    dict(max_steps=0),
])
def test_pith_config_rejects(kwargs):
    with pytest.raises(ConfigError):
        PithConfig(**kwargs)


@pytest.mark.parametrize('kwargs', [
    dict(rho=0.0),
    dict(max_steps=0),
    dict(refactor_policy='never'),
])
def test_admm_config_rejects(kwargs):
    with pytest.raises(ConfigError):
        AdmmConfig(**kwargs)


def test_admm_zero_codes_keep_dictionary():
    inst, D, _ = random_instance(4)
    solver = AdmmDictionarySolver(inst)
    W = np.zeros((inst.p, inst.m))
    solver.reset(D, W, 2.5)
    assert solver.state.rho == 2.5
    for _ in range(5):
        Z = solver.step()
    assert np.allclose(Z, project_unit_columns(D))


def test_admm_default_rho():
    inst, D, W = random_instance(5)
    solver = AdmmDictionarySolver(inst)
    expected = np.linalg.norm(W, 2) ** 2 + 2.5
    assert solver.default_rho(W, 2.5) == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize('seed', range(5))
def test_admm_single_atom_closed_form(seed):
    inst, D, W = random_instance(seed, m=1)
    eta = 2.5
    rho = float(W[:, 0] @ W[:, 0]) + eta
    solver = AdmmDictionarySolver(inst, AdmmConfig(rho=rho))
    solver.reset(D, W, eta)
    for _ in range(2000):
        Z = solver.step()
    r = inst.data @ W[:, 0] + eta * D[:, 0]
    assert np.allclose(Z[:, 0], r / np.linalg.norm(r), atol=1e-8)


def test_admm_warm_start_rescales_dual():
    inst, D, W = random_instance(6)
    solver = AdmmDictionarySolver(inst, AdmmConfig(rho=2.0))
    solver.reset(D, W, 2.5)
    solver.step()
    Z, U = solver._Z.copy(), solver._U.copy()
    solver.config = AdmmConfig(rho=4.0)
    solver.reset(Z, W, 2.5)
    assert np.array_equal(solver._Z, Z)
    assert np.allclose(solver._U, U / 2.0)


def test_admm_factorization_failure():
    inst, D, W = random_instance(7)
    with pytest.raises(FactorizationError):
        AdmmState(W=W, data=inst.data, eta=-1e6, D_prev=D, rho=1.0)


@pytest.mark.parametrize('seed', range(20))
def test_admm_kkt_at_acceptance(seed):
    inst, D, W = fitted_instance(seed)
    problem = as_nnp(inst)
    eta = 2.5
    solver = AdmmDictionarySolver(inst)

    def grad_y(u, v):
        return problem.grad_H_y(v, u)

    update = accept_block(D, W, problem.prox_g, grad_y, eta, 1e-10, solver,
                          20000, 0.0)
    assert not update.capped
    assert solver.kkt_residual() < 1e-8
    assert admm_kkt_residual(update.u, solver.state) < 1e-8


@pytest.mark.parametrize('seed', range(10))
def test_admm_default_config_accepts(seed):
    inst, D, W = fitted_instance(seed, n=8, m=12, p=60)
    problem = as_nnp(inst)
    solver = AdmmDictionarySolver(inst)

    def grad_y(u, v):
        return problem.grad_H_y(v, u)

    update = accept_block(D, W, problem.prox_g, grad_y, 2.5, 1.0, solver,
                          20)
    assert not update.capped
    assert update.inner_count < 20


def test_gram_bound_falls_back_to_frobenius(mocker):
    A = np.arange(6.0).reshape(3, 2)
    mocker.patch.object(inner, 'spectral_norm', return_value=(0.5, False))
    assert gram_bound(A) == pytest.approx(float(np.sum(A * A)))


def test_pith_lipschitz_on_dct_dictionary():
    D = overcomplete_dct()
    state = scalar_pith_state(D=D, data=np.zeros((64, 3)),
                              W_prev=np.zeros((3, D.shape[1])))
    assert state.lipschitz == pytest.approx(
        np.linalg.norm(D, 2) ** 2 + 1.0, rel=1e-6)
    assert state.lipschitz > 10.0


def test_capped_pith_keeps_last_iterate():
    inst, D, W = random_instance(3, n=6, m=12, p=10)
    problem = as_nnp(inst)
    solver = PithSolver(inst, PithConfig(max_steps=2))
    eta = 2.5

    def grad_x(u, v):
        return problem.grad_H_x(u, v)

    update = accept_block(W, D, problem.prox_f, grad_x, eta, 0.0, solver,
                          20, 0.0, keep_last=True)
    assert update.capped
    assert update.monotone
    assert update.inner_count == 2
    assert np.array_equal(update.u, solver._W)
    assert code_subproblem(inst, D, update.u, W, eta) <= \
        code_subproblem(inst, D, W, W, eta)
