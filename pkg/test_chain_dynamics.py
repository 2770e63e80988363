#!/usr/bin/env python3
"""
Tests for the Lennard-Jones chain: initial conditions, pair forces,
energies and Velocity Verlet time stepping
"""

import os
import sys
import tempfile
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

# Add the current directory to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from closure_engine.chain_dynamics import (ChainState, InitialCondition, PotentialSpec,
                                           calibrate_dt, energy_components, export_energy,
                                           export_trajectory, init_chain, lj_derivative,
                                           lj_potential, minimal_image, net_forces,
                                           simulate, total_energy, velocity_verlet_step)
from closure_engine.errors import InvalidArgumentError, SingularityError


def _perturbed_state(N=8, scale=0.05, seed=7):
    rng = np.random.default_rng(seed)
    base = init_chain(N, 1.0, "sine")
    q = base.q + scale / N * rng.uniform(-1.0, 1.0, N)
    v = rng.normal(0.0, 1e-2, N)
    return ChainState(t=0.0, L=1.0, N=N, q=q, v=v)


def _all_pairs_forces(state, spec):
    forces = np.zeros(state.N)
    for i in range(state.N):
        for j in range(i + 1, state.N):
            r = minimal_image(state.q[j] - state.q[i], state.L)
            if abs(r) > spec.cutoff:
                continue
            f = spec.force_scale * lj_derivative(abs(r), spec) * np.sign(r)
            forces[i] += f
            forces[j] -= f
    return forces


def _all_pairs_potential(state, spec):
    total = 0.0
    for i in range(state.N):
        for j in range(i + 1, state.N):
            r = abs(minimal_image(state.q[j] - state.q[i], state.L))
            if r <= spec.cutoff:
                total += lj_potential(r, spec, shifted=True)
    return spec.force_scale * total


def test_initial_conditions():
    state = init_chain(4, 1.0, "sine")
    np.testing.assert_allclose(state.q, [0.125, 0.375, 0.625, 0.875], atol=1e-15)
    assert state.particle_mass == pytest.approx(0.25)

    sine = init_chain(1000, 1.0, InitialCondition.SINE)
    assert np.max(sine.v) == pytest.approx(1e-2, rel=1e-4)

    quartic = init_chain(1000, 1.0, "quartic")
    assert np.max(quartic.v) == pytest.approx(25.0 / 1296.0, rel=1e-4)
    assert np.all(quartic.v[quartic.q < 1.0 / 3.0] == 0.0)
    assert np.all(quartic.v[quartic.q > 2.0 / 3.0] == 0.0)

    with pytest.raises(InvalidArgumentError):
        init_chain(1, 1.0, "sine")
    with pytest.raises(InvalidArgumentError):
        init_chain(8, 1.0, "cosine")


def test_lennard_jones_values():
    spec = PotentialSpec.for_lattice(1000, 1.0)
    assert lj_potential(spec.sigma, spec) == pytest.approx(0.0, abs=1e-18)
    assert lj_potential(spec.equilibrium_distance, spec) == pytest.approx(-0.025)
    assert lj_potential(2.0 * spec.sigma, spec) == pytest.approx(4 * 0.025 * (2.0 ** -12 - 2.0 ** -6))
    assert lj_potential(2.0 * spec.sigma, spec) == pytest.approx(-1.5381e-3, rel=1e-4)
    assert lj_derivative(spec.equilibrium_distance, spec) == pytest.approx(0.0, abs=1e-12)
    assert lj_potential(spec.cutoff, spec, shifted=True) == pytest.approx(0.0, abs=1e-18)
    assert lj_potential(1.01 * spec.cutoff, spec) == 0.0
    assert lj_derivative(1.01 * spec.cutoff, spec) == 0.0
    assert lj_derivative(1.01 * spec.cutoff, spec, truncated=False) != 0.0

    with pytest.raises(InvalidArgumentError):
        lj_potential(0.0, spec)
    with pytest.raises(InvalidArgumentError):
        lj_derivative(-1e-3, spec)


def test_potential_for_lattice():
    spec = PotentialSpec.for_lattice(500, 1.0)
    assert spec.equilibrium_distance == pytest.approx(1.0 / 500)
    assert spec.force_scale == pytest.approx(1.0 / 500)
    assert spec.cutoff == pytest.approx(2.5 / 500)
    assert spec.neighbor_count == 3


def test_equilibrium_forces_vanish():
    state = init_chain(16, 1.0, "sine")
    spec = PotentialSpec.for_lattice(16, 1.0)
    forces = net_forces(state, spec)
    assert np.max(np.abs(forces)) < 1e-12


def test_forces_match_all_pairs():
    for seed in (1, 2, 3):
        state = _perturbed_state(N=8, seed=seed)
        spec = PotentialSpec.for_lattice(8, 1.0)
        np.testing.assert_allclose(net_forces(state, spec), _all_pairs_forces(state, spec),
                                   rtol=1e-12, atol=1e-14)
        assert abs(np.sum(net_forces(state, spec))) < 1e-13


def test_single_pair_third_law():
    spec = PotentialSpec(epsilon_well=0.025, sigma=0.01, cutoff_factor=2.5, force_scale=1.0)
    q = (np.arange(8) + 0.5) / 8
    q[1] = q[0] + 0.0115
    state = ChainState(t=0.0, L=1.0, N=8, q=q, v=np.zeros(8))
    forces = net_forces(state, spec)
    assert forces[0] != 0.0
    assert forces[0] == pytest.approx(-forces[1], abs=1e-15)
    assert np.all(forces[2:] == 0.0)


def test_coincident_particles():
    state = _perturbed_state(N=8)
    q = state.q.copy()
    q[4] = q[3]
    with pytest.raises(SingularityError) as excinfo:
        net_forces(replace(state, q=q), PotentialSpec.for_lattice(8, 1.0))
    assert set(excinfo.value.indices) == {3, 4}


def test_too_few_particles():
    state = init_chain(6, 1.0, "sine")
    with pytest.raises(InvalidArgumentError):
        net_forces(state, PotentialSpec.for_lattice(6, 1.0))


def test_energy_components():
    state = init_chain(16, 1.0, "sine")
    state = replace(state, v=np.zeros(16))
    spec = PotentialSpec.for_lattice(16, 1.0)
    kinetic, potential, total = energy_components(state, spec)
    a = 1.0 / 16
    reference = lj_potential(a, spec, shifted=True) + lj_potential(2 * a, spec, shifted=True)
    assert kinetic == 0.0
    assert potential == pytest.approx(reference, rel=1e-12)
    assert total == potential

    perturbed = _perturbed_state(N=8)
    spec8 = PotentialSpec.for_lattice(8, 1.0)
    _, potential8, _ = energy_components(perturbed, spec8)
    assert potential8 == pytest.approx(_all_pairs_potential(perturbed, spec8), rel=1e-12, abs=1e-14)

    moving = replace(perturbed, v=np.linspace(-0.2, 0.2, 8))
    kinetic8, potential8, _ = energy_components(moving, spec8)
    assert kinetic8 > 0.0
    assert total_energy(moving, spec8) == pytest.approx(kinetic8 + potential8, rel=1e-14)


def test_free_streaming():
    spec = replace(PotentialSpec.for_lattice(16, 1.0), epsilon_well=0.0)
    state = replace(init_chain(16, 1.0, "sine"), v=np.full(16, 0.3))
    stepped = velocity_verlet_step(state, 1e-3, spec)
    np.testing.assert_array_equal(stepped.q, np.mod(state.q + 0.3 * 1e-3, 1.0))
    np.testing.assert_array_equal(stepped.v, state.v)
    assert stepped.t == pytest.approx(1e-3)

    with pytest.raises(InvalidArgumentError):
        velocity_verlet_step(state, 0.0, spec)


def test_time_reversibility():
    spec = PotentialSpec.for_lattice(32, 1.0)
    start = init_chain(32, 1.0, "sine")
    state = start
    for _ in range(50):
        state = velocity_verlet_step(state, 1e-4, spec)
    state = replace(state, v=-state.v)
    for _ in range(50):
        state = velocity_verlet_step(state, 1e-4, spec)
    assert np.max(np.abs(minimal_image(state.q - start.q, 1.0))) < 1e-12
    np.testing.assert_allclose(-state.v, start.v, atol=1e-12)


def test_simulation_conserves_momentum_and_energy():
    trajectory = simulate(64, 1.0, "sine", 1e-4, 0.2, [0.0, 0.1, 0.2])
    assert trajectory.times == pytest.approx([0.0, 0.1, 0.2])
    for snapshot in trajectory.snapshots:
        assert abs(snapshot.momentum) < 1e-13
    absolute, relative = trajectory.energy_deviation()
    assert relative <= 5e-4
    assert absolute < 1e-5
    assert trajectory.min_pair_distance() > 0.5 / 64


def test_simulation_zero_end_time():
    trajectory = simulate(16, 1.0, "quartic", 1e-4, 0.0, [0.0])
    assert len(trajectory.snapshots) == 1
    start = init_chain(16, 1.0, "quartic")
    np.testing.assert_array_equal(trajectory.snapshots[0].q, start.q)
    np.testing.assert_array_equal(trajectory.snapshots[0].v, start.v)

    with pytest.raises(InvalidArgumentError):
        simulate(16, 1.0, "sine", 1e-4, 0.1, [0.2])


def test_simulation_is_deterministic():
    first = simulate(16, 1.0, "quartic", 1e-4, 0.05, [0.05])
    second = simulate(16, 1.0, "quartic", 1e-4, 0.05, [0.05])
    np.testing.assert_array_equal(first.snapshots[-1].q, second.snapshots[-1].q)
    np.testing.assert_array_equal(first.snapshots[-1].v, second.snapshots[-1].v)
    assert first.state_at(0.05).t == pytest.approx(0.05)
    with pytest.raises(InvalidArgumentError):
        first.state_at(0.5)


def test_calibrate_dt():
    spec = PotentialSpec.for_lattice(16, 1.0)
    assert calibrate_dt(16, 1.0, "sine", 1e-4, spec, horizon=1e-3) == 1e-4
    # A negative tolerance is never met, so every halving is spent
    assert calibrate_dt(16, 1.0, "sine", 1e-4, spec, horizon=1e-3,
                        tolerance=-1.0, max_halvings=2) == pytest.approx(2.5e-5)


def test_exports():
    trajectory = simulate(16, 1.0, "sine", 1e-4, 0.01, [0.0, 0.01])
    with tempfile.TemporaryDirectory() as tmp:
        traj_path = os.path.join(tmp, "trajectory.csv")
        energy_path = os.path.join(tmp, "energy.csv")
        export_trajectory(trajectory, traj_path)
        export_energy(trajectory, energy_path)
        frame = pd.read_csv(traj_path)
        energy = pd.read_csv(energy_path)
    assert list(frame.columns) == ["t", "index", "q", "v"]
    assert len(frame) == 32
    assert list(energy.columns) == ["t", "kinetic", "potential", "total"]
    assert len(energy) == 2


def main():
    print("Chain Dynamics Test")
    print("=" * 40)
    tests = [
        test_initial_conditions,
        test_lennard_jones_values,
        test_potential_for_lattice,
        test_equilibrium_forces_vanish,
        test_forces_match_all_pairs,
        test_single_pair_third_law,
        test_coincident_particles,
        test_too_few_particles,
        test_energy_components,
        test_free_streaming,
        test_time_reversibility,
        test_simulation_conserves_momentum_and_energy,
        test_simulation_zero_end_time,
        test_simulation_is_deterministic,
        test_calibrate_dt,
        test_exports,
    ]
    failures = 0
    for test in tests:
        try:
            test()
            print(f"✓ {test.__name__}")
        except Exception as e:
            failures += 1
            print(f"✗ {test.__name__}: {e}")
    print("=" * 40)
    print(f"{len(tests) - failures}/{len(tests)} passed")
    return failures == 0


if __name__ == "__main__":
    sys.exit(0 if main() else 1)
