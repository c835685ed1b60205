from dataclasses import replace

import numpy as np
import pytest

from rydnept.exceptions import ParameterError
from rydnept.metrology import max_slope, rabi_from_field
from rydnept.params import DetectorModel, LadderParams
from rydnept.physics import self_consistent_branches
from rydnept.sweep import (
    Optics,
    cell_seed,
    hysteresis_pair,
    jump_position,
    loop_area,
    run_grid,
    sweep,
    sweep_detuning,
    sweep_mw_amplitude,
)
from rydnept.trace import SweepSpec, Trace
from rydnept.workflows import park_detuning, steady_spectrum

QUIET = DetectorModel(sigma0=0.0)
FAST_ATOMS = LadderParams(omega_p=8.0, gamma_r1=2.0, gamma_r2=2.0, gamma_d=4.0)


def quiet(cfg, mode=None):
    return replace(cfg.optics(mode), detector=QUIET)


# --- sweep specs and traces ------------------------------------------------------

def test_point_count_formula():
    spec = SweepSpec(start=0.0, stop=10.0, rate=0.5, t_int=2.0)
    assert spec.n_points == 10
    assert len(spec.positions()) == 10
    assert SweepSpec.from_total_time("coupling_detuning", -1, 1, 18.0, 1000).n_points == 1000


def test_spec_rejects_bad_values():
    with pytest.raises(ParameterError):
        SweepSpec(start=1.0, stop=1.0)
    with pytest.raises(ParameterError):
        SweepSpec(rate=0.0)
    with pytest.raises(ParameterError):
        SweepSpec(start=0.0, stop=1.0, direction="down")
    with pytest.raises(ParameterError):
        SweepSpec(start=0.0, stop=1.0, rate=1.0, t_int=1.0)


def test_trace_requires_monotone_x():
    with pytest.raises(ParameterError):
        Trace([0.0, 1.0, 0.5], [1.0, 1.0, 1.0])


# --- detuning sweeps -------------------------------------------------------------

def test_no_probe_gives_flat_unit_transmission():
    spec = SweepSpec(start=-30, stop=30, rate=1.0, t_int=0.5)
    tr = sweep_detuning(FAST_ATOMS.replace(omega_p=0.0), Optics(detector=QUIET), spec)
    assert np.allclose(tr.y, 1.0, rtol=0, atol=1e-12)


@pytest.mark.parametrize("mode", ["free_space", "cavity"])
def test_slow_sweep_without_interaction_follows_steady_state(mode):
    optics = Optics(mode=mode, detector=QUIET, reference=1.0)
    spec = SweepSpec(start=-40, stop=40, rate=0.2, t_int=2.0)
    tr = sweep(FAST_ATOMS, optics, spec)
    idx = slice(None) if mode == "free_space" else slice(5, None, 40)
    ref = steady_spectrum(FAST_ATOMS, optics, tr.x[idx])
    assert np.max(np.abs(tr.y[idx] - ref)) < 1e-3


def test_axis_mismatch_is_rejected():
    spec = SweepSpec(axis="mw_amplitude", start=0, stop=1, rate=0.01, t_int=5)
    with pytest.raises(ParameterError):
        sweep_detuning(FAST_ATOMS, Optics(), spec)


# --- MW amplitude sweeps -----------------------------------------------------------

def test_decoupled_mw_gives_flat_trace():
    p = FAST_ATOMS.replace(delta_c=-5.0)
    spec = SweepSpec(axis="mw_amplitude", start=0.0, stop=10.0, rate=0.5, t_int=1.0)
    tr = sweep_mw_amplitude(p, Optics(detector=QUIET), spec, mw_off=True)
    assert np.ptp(tr.y) < 1e-12


def test_slow_mw_ramp_without_interaction_follows_steady_state():
    p = FAST_ATOMS.replace(delta_c=-5.0, delta_mw=-20.0)
    spec = SweepSpec(axis="mw_amplitude", start=0.0, stop=10.0, rate=0.05, t_int=4.0)
    tr = sweep_mw_amplitude(p, Optics(detector=QUIET, reference=1.0), spec)
    ref = []
    for E in tr.x:
        b = self_consistent_branches(p.replace(omega_mw=rabi_from_field(E)))[0]
        ref.append(np.exp(-2.0 * p.gamma_e * b.state.rho_eg.imag / p.omega_p))
    assert np.max(np.abs(tr.y - np.array(ref))) < 1e-3


def test_stepped_ramp_records_plateau_values():
    spec = SweepSpec(axis="mw_amplitude", start=4.6, stop=5.2, rate=0.002, t_int=5.0,
                     stepped=True)
    assert spec.n_points == 60
    assert spec.positions()[1] - spec.positions()[0] == pytest.approx(0.01)


def test_sensing_demo_has_a_sharp_transition_in_window(sensing_demo):
    optics = quiet(sensing_demo, "cavity")
    spec = sensing_demo.sweep
    mid = 0.5 * (spec.start + spec.stop)
    dc = park_detuning(sensing_demo.physics, optics, mid, *sensing_demo.sensing["park_range"])
    tr = sweep(sensing_demo.physics.replace(delta_c=dc), optics, spec)
    cp = max_slope(tr)
    assert spec.start < cp.x_c < spec.stop
    # coarse pre-scan oracle: one dominant step, far steeper than the mean slope
    mean_slope = abs(tr.y[-1] - tr.y[0]) / abs(spec.stop - spec.start)
    assert abs(cp.k) > 10 * mean_slope


# --- hysteresis ---------------------------------------------------------------------

def test_bistable_demo_hysteresis(bistable_demo):
    up, down = hysteresis_pair(bistable_demo.physics, bistable_demo.optics(),
                               bistable_demo.sweep)
    assert up.direction == "up" and down.direction == "down"
    assert down.x[0] == pytest.approx(up.x[-1], abs=1e-9)
    assert jump_position(up) > jump_position(down)
    assert loop_area(up, down) > 0.5


def test_no_interaction_no_hysteresis(bistable_demo):
    p = bistable_demo.physics.replace(V=0.0)
    up, down = hysteresis_pair(p, quiet(bistable_demo), bistable_demo.sweep)
    assert loop_area(up, down) < 1e-3 * abs(bistable_demo.sweep.stop - bistable_demo.sweep.start)


def test_hysteresis_is_repeatable(bistable_demo):
    a = hysteresis_pair(bistable_demo.physics, bistable_demo.optics(), bistable_demo.sweep)
    b = hysteresis_pair(bistable_demo.physics, bistable_demo.optics(), bistable_demo.sweep)
    assert a[0] == b[0] and a[1] == b[1]


def test_slower_sweeps_do_not_soften_the_cavity_edge(cavity_demo):
    optics = quiet(cavity_demo, "cavity")
    ks = []
    for T in (18.0, 180.0, 1800.0):
        spec = SweepSpec.from_total_time("coupling_detuning", cavity_demo.sweep.start,
                                         cavity_demo.sweep.stop, T, 1000)
        ks.append(abs(max_slope(sweep(cavity_demo.physics, optics, spec)).k))
    assert ks == sorted(ks)


# --- grids ----------------------------------------------------------------------------

def test_empty_grid():
    res = run_grid(FAST_ATOMS, Optics(), SweepSpec(start=-5, stop=5, rate=1, t_int=1), [])
    assert res.traces == [] and res.errors == {}


def test_grid_keeps_order_and_is_thread_independent(bistable_demo):
    spec = replace(bistable_demo.sweep, rate=1.0, t_int=0.2)
    fields = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 15.2]
    ov = [{"omega_mw": rabi_from_field(E)} for E in fields]
    one = run_grid(bistable_demo.physics, bistable_demo.optics(), spec, ov, 7, threads=1)
    four = run_grid(bistable_demo.physics, bistable_demo.optics(), spec, ov, 7, threads=4)
    assert not one.errors
    for i, (a, b) in enumerate(zip(one.traces, four.traces)):
        assert a == b
        assert a.meta["sweep"]["seed"] == cell_seed(7, i)
        assert a.meta["params"]["omega_mw"] == pytest.approx(rabi_from_field(fields[i]))
    # the MW field moves the up-sweep edge
    xs = [max_slope(t).x_c for t in one.traces]
    assert xs[-1] != xs[0]


def test_grid_collects_cell_errors():
    spec = SweepSpec(start=-5, stop=5, rate=1, t_int=1)
    ov = [{"omega_p": 4.0}, {"no_such_key": 1.0}, {"gamma_e": -1.0}]
    res = run_grid(FAST_ATOMS, Optics(detector=QUIET), spec, ov)
    assert res.traces[0] is not None
    assert res.traces[1] is None and res.traces[2] is None
    assert set(res.errors) == {1, 2}


def test_cell_seeds_differ():
    assert len({cell_seed(0, i) for i in range(100)}) == 100
