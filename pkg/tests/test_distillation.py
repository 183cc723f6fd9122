import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zenodistill.distillation import (
    ConditionalPropagator,
    DistillationExtinguished,
    apply_conditional,
    asymptotic_projector,
    branch_operators,
    channel_report,
    closed_form_v,
    conditional_propagator,
    spectral_decompose,
    zeno_lower_bound,
)
from zenodistill.hilbert import (
    BipartiteSpace,
    DefectiveMatrixError,
    NumericalError,
    StateVector,
)
from zenodistill.models import (
    HamiltonianModel,
    TrappedIonParams,
    build_trapped_ion,
    lamb_dicke_f,
)
from zenodistill.steering import design_qnd_tau

from oracles import f_oracle, random_unitary, three_level_return


def plus_state(dim=2):
    return StateVector.from_amplitudes(np.ones(dim))


def uniform(dim, upto):
    a = np.zeros(dim)
    a[: upto + 1] = 1
    return StateVector.from_amplitudes(a)


def rabi_model(omega, slave_dim):
    sx = np.array([[0, 1], [1, 0]])
    return HamiltonianModel(BipartiteSpace(2, slave_dim), omega * np.kron(sx, np.eye(slave_dim)))


def test_propagator_at_zero_time_is_identity():
    m = build_trapped_ion(TrappedIonParams(1.0, 3.0, 0, 1, 0.2, 0.2, 6))
    v = conditional_propagator(m, 0, 0.0)
    np.testing.assert_allclose(v.matrix, np.eye(7), atol=1e-14)


def test_slave_independent_rabi():
    v = conditional_propagator(rabi_model(1.3, 3), 0, 0.9)
    np.testing.assert_allclose(v.matrix, np.cos(1.3 * 0.9) * np.eye(3), atol=1e-12)


def test_qnd_propagator_is_cosine_diagonal():
    params = TrappedIonParams(1.0, 0.0, 0, 0, 0.3, 0.0, 10)
    v = conditional_propagator(build_trapped_ion(params), 0, 2.2)
    expected = [np.cos(f_oracle(0, n, 0.3) * 2.2) for n in range(11)]
    np.testing.assert_allclose(v.matrix, np.diag(expected), atol=1e-12)


def test_propagator_rejects_negative_tau():
    with pytest.raises(ValueError):
        conditional_propagator(rabi_model(1.0, 1), 0, -1.0)


def test_spectral_diag():
    d = spectral_decompose(ConditionalPropagator(np.diag([1.0, 0.5])))
    np.testing.assert_array_equal(d.eigenvalues, [1.0, 0.5])
    np.testing.assert_array_equal(d.projectors[0], np.diag([1.0, 0.0]))
    np.testing.assert_array_equal(d.projectors[1], np.diag([0.0, 1.0]))
    assert d.is_normal


def test_spectral_qnd_fock_projectors():
    params = TrappedIonParams(1.0, 0.0, 0, 0, 0.3, 0.0, 8)
    v = conditional_propagator(build_trapped_ion(params), 0, 1.7)
    d = spectral_decompose(v)
    assert d.labels == tuple(range(9))
    expected = [np.cos(lamb_dicke_f(0, n, 0.3) * 1.7) for n in range(9)]
    np.testing.assert_allclose(d.eigenvalues, expected, atol=1e-12)
    for n, p in enumerate(d.projectors):
        ref = np.zeros((9, 9))
        ref[n, n] = 1
        np.testing.assert_allclose(p, ref, atol=1e-10)


def _check_spectral_invariants(v):
    d = spectral_decompose(v)
    dim = v.shape[0]
    assert np.max(np.abs(sum(d.projectors) - np.eye(dim))) < 1e-8
    for j, pj in enumerate(d.projectors):
        for k, pk in enumerate(d.projectors):
            target = pk if j == k else np.zeros_like(pk)
            assert np.max(np.abs(pj @ pk - target)) < 1e-8
    assert np.max(np.abs(d.reconstruct() - v)) < 1e-8


def test_spectral_random_compression_dim6():
    rng = np.random.default_rng(6)
    u = random_unitary(12, rng)
    _check_spectral_invariants(u[:6, :6])


def test_spectral_defective_propagator():
    with pytest.raises(DefectiveMatrixError):
        spectral_decompose(np.array([[0.5, 0.3], [0.0, 0.5]]))


def test_apply_conditional_projector_one_step():
    run = apply_conditional(np.diag([1.0, 0.0]), plus_state(), 1)
    np.testing.assert_allclose(run.final_state.amplitudes, [1, 0], atol=1e-15)
    assert run.step_success_probs == [pytest.approx(0.5)]
    assert run.cumulative_success == pytest.approx(0.5)


def test_apply_conditional_geometric_suppression():
    run = apply_conditional(np.diag([1.0, 0.5]), plus_state(), 60)
    assert run.final_state.fidelity([1, 0]) == pytest.approx(1.0, abs=1e-30 + 1e-15)
    assert run.cumulative_success == pytest.approx(0.5, rel=1e-12)
    assert np.prod(run.step_success_probs) == pytest.approx(run.cumulative_success, rel=1e-12)
    for s in run.conditioned_states:
        assert abs(np.linalg.norm(s.amplitudes) - 1) < 1e-12


def test_apply_conditional_qnd_converges_to_target():
    params = TrappedIonParams(1.0, 0.0, 0, 0, 0.3, 0.0, 10)
    tau = design_qnd_tau(2, 1.0, 0.3)
    v = conditional_propagator(build_trapped_ion(params), 0, tau)
    psi0 = uniform(11, 4)
    run = apply_conditional(v, psi0, 150)
    direct = np.linalg.matrix_power(v.matrix, 150) @ psi0.amplitudes
    assert run.cumulative_success == pytest.approx(np.vdot(direct, direct).real, rel=1e-12)
    assert run.final_state.fidelity(StateVector.basis(11, 2)) > 0.999


def test_apply_conditional_extinguished():
    with pytest.raises(DistillationExtinguished) as info:
        apply_conditional(np.diag([1.0, 0.0]), StateVector([0, 1]), 3)
    assert info.value.step == 1


def test_apply_conditional_rejects_zero_steps():
    with pytest.raises(ValueError):
        apply_conditional(np.eye(2), plus_state(), 0)


def test_channel_report_projector():
    rep = channel_report(spectral_decompose(np.diag([1.0, 0.0])))
    np.testing.assert_array_equal(rep.survival, [1.0, 0.0])
    assert [c.classification for c in rep] == ["closed", "open"]


def test_channel_report_phase_and_survival():
    g = 0.9 * np.exp(-1j * np.pi)
    rep = channel_report(spectral_decompose(np.diag([g, 0.3j])))
    ch = rep.channels[0]
    assert ch.survival_probability == pytest.approx(0.81)
    assert -np.pi < ch.phase <= np.pi
    assert ch.phase == pytest.approx(np.pi)
    assert np.sqrt(ch.survival_probability) * np.exp(1j * ch.phase) == pytest.approx(g)


def test_channel_report_zeno_closed():
    params = TrappedIonParams(1.0, 100.0, 0, 2, 0.3, 0.01, 10)
    rep = channel_report(spectral_decompose(closed_form_v(params, 1.0)))
    for ch in rep:
        if ch.label >= 2:
            o2 = abs(params.omega_n(ch.label)) ** 2
            w2 = o2 + abs(params.kappa_n(ch.label)) ** 2
            assert ch.survival_probability >= (1 - 2 * o2 / w2) ** 2
            assert ch.closed


def test_channel_report_cosine_zero_open():
    params = TrappedIonParams(1.0, 0.0, 0, 0, 0.3, 0.0, 6)
    tau = np.pi / (2 * lamb_dicke_f(0, 3, 0.3))
    rep = channel_report(spectral_decompose(conditional_propagator(build_trapped_ion(params), 0, tau)))
    ch = rep.channels[3]
    assert ch.label == 3
    assert ch.survival_probability < 1e-24
    assert not ch.closed


def test_asymptotic_single_state():
    a = asymptotic_projector(spectral_decompose(np.diag([1.0, 0.8 * np.exp(0.3j), 0.3])))
    np.testing.assert_allclose(a.projector, np.diag([1, 0, 0]), atol=1e-15)
    assert a.is_single_state
    assert a.dominant_modulus == 1.0


def test_asymptotic_degenerate_moduli():
    a = asymptotic_projector(spectral_decompose(np.diag([np.exp(0.4j), np.exp(-1.1j), 0.5])))
    np.testing.assert_allclose(a.projector, np.diag([1, 1, 0]), atol=1e-12)
    assert not a.is_single_state
    assert a.rank == 2


def test_asymptotic_complement_of_low_fock_states():
    params = TrappedIonParams(1.0, 100.0, 0, 2, 0.3, 0.01, 12)
    d = spectral_decompose(closed_form_v(params, 1.0))
    a = asymptotic_projector(d, degeneracy_tol=1e-3)
    expected = np.eye(13)
    expected[0, 0] = expected[1, 1] = 0
    np.testing.assert_allclose(a.projector, expected, atol=1e-12)


def test_asymptotic_all_zero():
    with pytest.raises(NumericalError):
        asymptotic_projector(spectral_decompose(np.zeros((2, 2))))


def test_closed_form_without_freezing_is_qnd():
    params = TrappedIonParams(1.3, 0.0, 0, 2, 0.5, 0.2, 8)
    v = closed_form_v(params, 0.8)
    expected = [np.cos(1.3 * f_oracle(0, n, 0.5) * 0.8) for n in range(9)]
    np.testing.assert_allclose(np.diag(v.matrix), expected, atol=1e-14)


def test_closed_form_open_channel_at_coupling_zero():
    # eta2 = 1 puts K_1 at the zero of f_0(1, .)
    params = TrappedIonParams(1.0, 50.0, 0, 0, 0.0, 1.0, 6)
    v = np.diag(closed_form_v(params, 0.77).matrix)
    assert v[1] == pytest.approx(np.cos(0.77), abs=1e-14)


def test_closed_form_zeno_limit():
    vals = []
    for kappa in (1e1, 1e2, 1e3, 1e4):
        params = TrappedIonParams(1.0, kappa, 0, 1, 0.1, 0.05, 6)
        vals.append(np.diag(closed_form_v(params, 1.234).matrix).real)
    # channel 0 has no e2 partner for q = 1 and is never frozen
    assert np.all(1 - vals[-1][1:] < 1e-7)


def test_closed_form_rejects_sideband_first_coupling():
    with pytest.raises(NotImplementedError):
        closed_form_v(TrappedIonParams(1.0, 1.0, 1, 1, 0.1, 0.1, 6), 1.0)


def test_closed_form_matches_three_level_oracle():
    params = TrappedIonParams(0.8, 5.0, 0, 1, 0.4, 0.3, 9)
    v = np.diag(closed_form_v(params, 2.5).matrix).real
    for n in range(1, 10):
        assert v[n] == pytest.approx(
            three_level_return(abs(params.omega_n(n)), abs(params.kappa_n(n)), 2.5), abs=1e-14
        )


ion = st.builds(
    TrappedIonParams,
    omega=st.floats(0.1, 3),
    kappa=st.floats(0, 60),
    p=st.just(0),
    q=st.integers(-2, 3),
    eta1=st.floats(0, 1.2),
    eta2=st.floats(0, 1.2),
    n_max=st.integers(5, 30),
)


@settings(max_examples=40, deadline=None)
@given(ion, st.floats(0, 20))
def test_closed_form_equals_numeric(params, tau_scaled):
    tau = tau_scaled / params.omega
    numeric = conditional_propagator(build_trapped_ion(params), 0, tau).matrix
    closed = closed_form_v(params, tau).matrix
    assert np.max(np.abs(numeric - closed)) < 1e-9


@settings(max_examples=40, deadline=None)
@given(ion, st.floats(0, 20), st.integers(0, 2**32 - 1))
def test_outcome_completeness(params, tau, seed):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=params.slave_dim) + 1j * rng.normal(size=params.slave_dim)
    psi /= np.linalg.norm(psi)
    b = branch_operators(build_trapped_ion(params), 0, tau)
    total = sum(np.linalg.norm(bj @ psi) ** 2 for bj in b)
    assert abs(total - 1) < 1e-10
    assert np.linalg.norm(b[0], 2) <= 1 + 1e-10


@settings(max_examples=40, deadline=None)
@given(ion, st.floats(0.05, 20), st.integers(1, 40))
def test_power_identity(params, tau, steps):
    v = conditional_propagator(build_trapped_ion(params), 0, tau)
    psi0 = uniform(params.slave_dim, min(5, params.n_max))
    try:
        run = apply_conditional(v, psi0, steps)
    except DistillationExtinguished:
        return
    d = spectral_decompose(v)
    direct = d.power(steps) @ psi0.amplitudes
    norm2 = np.vdot(direct, direct).real
    assert run.cumulative_success == pytest.approx(norm2, rel=1e-9, abs=1e-300)
    if norm2 > 1e-200:
        np.testing.assert_allclose(run.final_state.amplitudes, direct / np.sqrt(norm2), atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1), st.integers(5, 40))
def test_monotone_fidelity_for_normal_v(dim, seed, steps):
    rng = np.random.default_rng(seed)
    q = random_unitary(dim, rng)
    mods = np.sort(rng.uniform(0, 0.95, dim))[::-1]
    mods[0] = 1.0
    phases = np.exp(1j * rng.uniform(-np.pi, np.pi, dim))
    v = q @ np.diag(mods * phases) @ q.conj().T
    target = q[:, 0]
    psi0 = StateVector.from_amplitudes(rng.normal(size=dim) + 1j * rng.normal(size=dim))
    run = apply_conditional(v, psi0, steps)
    fids = [psi0.fidelity(target)] + [s.fidelity(target) for s in run.conditioned_states]
    assert all(b >= a - 1e-12 for a, b in zip(fids, fids[1:]))


@settings(max_examples=40, deadline=None)
@given(ion)
def test_zeno_bound_holds(params):
    taus = np.linspace(0, 30 / params.omega, 100)
    for tau in taus:
        v = np.diag(closed_form_v(params, tau).matrix).real
        for n in range(max(params.q, 0), params.slave_dim):
            assert v[n] >= zeno_lower_bound(params, n) - 1e-12
