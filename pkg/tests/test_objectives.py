import numpy as np
import pytest

from efftemp.ansatz import ansatz_spec, load_checkpoint
from efftemp.model import build_hamiltonian, build_lattice, full_spectrum, ham_terms
from efftemp.objectives import (
    ObjectiveError,
    build_ites,
    energy,
    export_target_checkpoint,
    ground_target,
    infidelity,
    objective_spec,
    resolve_target,
)
from efftemp.prng import TAG_PHASE, uniform_angles


class TestSpecValidation:
    def test_vocabulary_is_closed(self):
        with pytest.raises(ObjectiveError):
            objective_spec("variance")
        with pytest.raises(ObjectiveError):
            objective_spec("fidelity", target="thermal")
        with pytest.raises(ObjectiveError):
            objective_spec("fidelity", target="ites", beta=-0.5)
        objective_spec("energy")
        objective_spec("fidelity", target="ground")
        objective_spec("fidelity", target="ites", beta=0.7, phase_seed=3)

    def test_energy_takes_no_target(self):
        with pytest.raises(ObjectiveError):
            objective_spec("energy", target="ground")


class TestEnergy:
    def test_matches_dense_quadratic_form(self, chain8):
        lattice, params, _ = chain8
        terms = ham_terms(lattice, params)
        H = build_hamiltonian(lattice, params).toarray()
        rng = np.random.default_rng(0)
        psi = rng.normal(size=256) + 1j * rng.normal(size=256)
        want = (psi.conj() @ H @ psi).real / (psi.conj() @ psi).real
        assert abs(energy(psi, terms) - want) < 1e-12

    def test_eigenvector_gives_eigenvalue(self, chain8):
        lattice, params, spectrum = chain8
        terms = ham_terms(lattice, params)
        for i in (0, 7, 100):
            e = energy(spectrum.vectors[:, i], terms)
            assert abs(e - spectrum.energies[i]) < 1e-10

    def test_scale_invariant(self, chain8):
        lattice, params, spectrum = chain8
        terms = ham_terms(lattice, params)
        psi = spectrum.vectors[:, 3]
        assert abs(energy(37.0 * psi, terms) - energy(psi, terms)) < 1e-12


class TestInfidelity:
    def test_self_and_orthogonal(self, chain8):
        _, _, spectrum = chain8
        a, b = spectrum.vectors[:, 0], spectrum.vectors[:, 1]
        assert infidelity(a, a) < 1e-14
        assert abs(infidelity(a, b) - 1.0) < 1e-14

    def test_phase_and_scale_invariant(self, chain8):
        _, _, spectrum = chain8
        a = spectrum.vectors[:, 2]
        assert infidelity(np.exp(0.4j) * 2.5 * a, a) < 1e-13


class TestITES:
    def test_beta_zero_is_uniform(self, chain8):
        _, _, spectrum = chain8
        t = build_ites(spectrum, beta=0.0)
        c = spectrum.vectors.conj().T @ t.state
        assert np.allclose(np.abs(c) ** 2, 1.0 / spectrum.dim, atol=1e-12)

    def test_thermal_energy_oracle(self, chain8):
        # <H> in the state with weights e^{-beta eps} must equal the
        # canonical average computed directly from the spectrum
        lattice, params, spectrum = chain8
        terms = ham_terms(lattice, params)
        eps = spectrum.energies
        for beta in (0.2, 0.7, 1.5):
            t = build_ites(spectrum, beta=beta)
            w = np.exp(-beta * (eps - eps[0]))
            want = float((eps * w).sum() / w.sum())
            assert abs(energy(t.state, terms) - want) < 1e-10

    def test_large_beta_approaches_ground(self, chain8):
        _, _, spectrum = chain8
        t = build_ites(spectrum, beta=100.0)
        assert infidelity(t.state, spectrum.vectors[:, 0]) < 1e-8

    def test_random_phases_change_state_not_weights(self, chain8):
        _, _, spectrum = chain8
        plain = build_ites(spectrum, beta=0.5)
        dressed = build_ites(spectrum, beta=0.5, phase_seed=7)
        again = build_ites(spectrum, beta=0.5, phase_seed=7)
        assert np.array_equal(dressed.state, again.state)
        assert infidelity(dressed.state, plain.state) > 1e-3
        cp = np.abs(spectrum.vectors.conj().T @ plain.state) ** 2
        cd = np.abs(spectrum.vectors.conj().T @ dressed.state) ** 2
        assert np.allclose(cp, cd, atol=1e-13)

    def test_phases_come_from_tagged_stream(self, chain8):
        _, _, spectrum = chain8
        t = build_ites(spectrum, beta=0.5, phase_seed=7)
        omega = uniform_angles(TAG_PHASE, 7, spectrum.dim)
        want = t.coeffs / np.exp(1j * omega)
        assert np.allclose(want.imag, 0.0, atol=1e-13)

    def test_normalized(self, square43):
        _, _, spectrum = square43
        for beta in (0.0, 0.3, 2.0):
            t = build_ites(spectrum, beta=beta)
            assert abs(np.linalg.norm(t.state) - 1.0) < 1e-12


class TestResolveTarget:
    def test_ground_target(self, chain8):
        _, _, spectrum = chain8
        t = ground_target(spectrum)
        assert t.kind == "ground"
        assert infidelity(t.state, spectrum.vectors[:, 0]) < 1e-14

    def test_dispatch(self, chain8):
        _, _, spectrum = chain8
        spec = objective_spec("fidelity", target="ites", beta=0.4, phase_seed=2)
        t = resolve_target(spec, spectrum)
        assert t.kind == "ites" and t.beta == 0.4 and t.phase_seed == 2
        assert resolve_target(objective_spec("energy"), spectrum) is None


class TestExport:
    def test_target_checkpoint_round_trip(self, chain8, tmp_path):
        lattice, _, spectrum = chain8
        t = build_ites(spectrum, beta=0.6, phase_seed=1)
        path = tmp_path / "target.bin"
        export_target_checkpoint(path, t, lattice, seed=1)
        ck = load_checkpoint(path)
        assert ck.spec == ansatz_spec("vec", lattice)
        psi = ck.params[0::2] + 1j * ck.params[1::2]
        assert np.allclose(psi, t.state, atol=1e-15)
