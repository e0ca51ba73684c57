import math

import numpy as np
import pytest

from flexopf import apply_overlay, load_overlay, validate_case
from flexopf.network import (BranchParams, BranchTypology, Bus, Generator, Horizon, SystemCase,
                             branch_violations)

from conftest import two_bus

T = BranchTypology


def test_case6ww_default_overlay_is_valid(case6ww):
    from flexopf.ingest import FlexOverlay
    case, horizon = apply_overlay(case6ww, FlexOverlay())
    assert validate_case(case, horizon) == []


@pytest.mark.parametrize("name", ["case_a", "case_b", "case_c", "case_d", "case_e"])
def test_six_bus_overlays_valid(case6ww, name):
    case, horizon = apply_overlay(case6ww, load_overlay(f"{name}.toml"))
    assert validate_case(case, horizon) == []


def test_two_reference_buses_named_in_one_violation():
    case = two_bus()
    case = SystemCase(case.base_mva, [Bus(1, 0, True), Bus(2, 50, True)], case.generators, case.branches)
    problems = validate_case(case)
    assert len(problems) == 1
    assert "1" in problems[0] and "2" in problems[0] and "reference" in problems[0]


def test_zil_with_angle_limit_violates():
    br = BranchParams(1, 2, T.ZIL, p_c=100.0, delta_max=0.1)
    problems = branch_violations(br)
    assert len(problems) == 1 and "delta_max = 0" in problems[0]


@pytest.mark.parametrize("br, ok", [
    (BranchParams(1, 2, T.FIXED_AC, 5, 5), True),
    (BranchParams(1, 2, T.FIXED_AC, 4, 5), False),                       # fixed needs b_min == b_max
    (BranchParams(1, 2, T.FIXED_AC, 5, 5, phi_min=-0.1, phi_max=0.1), False),
    (BranchParams(1, 2, T.VSSA, 4, 6, phi_min=-0.2, phi_max=0.2), True),
    (BranchParams(1, 2, T.VSSA, 5, 5, phi_min=-0.2, phi_max=0.2), True),  # PST
    (BranchParams(1, 2, T.VSSA, 4, 6, p_c=10), False),                    # p_c must be 0
    (BranchParams(1, 2, T.HVDC, p_c=70), True),
    (BranchParams(1, 2, T.HVDC, 1, 1, p_c=70), False),                    # B must be 0
    (BranchParams(1, 2, T.HVDC), False),                                  # needs p_c > 0
    (BranchParams(1, 2, T.ZIL, p_c=100, delta_max=0.0), True),
    (BranchParams(1, 2, T.ZIL, p_c=100, delta_max=0.0, phi_max=0.1), False),
    (BranchParams(1, 2, T.VSSA, 4, 6, phi_min=0.1, phi_max=0.2), False),  # range must contain 0
    (BranchParams(1, 2, T.FIXED_AC, 6, 5), False),
    (BranchParams(1, 2, T.FIXED_AC, 5, 5, f_max=0.0), False),
    (BranchParams(1, 2, T.FIXED_AC, 5, 5, in_service=False), False),      # must be switchable
])
def test_typology_rules(br, ok):
    assert (branch_violations(br) == []) is ok


def test_generator_and_horizon_rules():
    case = two_bus()
    bad = case.with_generators([Generator(1, 60.0, 50.0), Generator(1, 0.0, 10.0, ramp_up=0.0)])
    problems = validate_case(bad)
    assert any("p_min" in p for p in problems)
    assert any("ramp_up" in p for p in problems)
    with pytest.raises(ValueError):
        Horizon(2, (1.0,))
    with pytest.raises(ValueError):
        Horizon(1, (0.0,))
    with pytest.raises(ValueError):
        Horizon(1, (1.0,), reserve_fraction=1.0)


def test_negative_load_flagged_unless_allowed():
    case = two_bus(load=-5.0)
    assert any("negative" in p for p in validate_case(case))
    assert validate_case(case, allow_negative_load=True) == []


def test_disconnected_graph_flagged():
    case = SystemCase(100, [Bus(1, 0, True), Bus(2, 10), Bus(3, 0), Bus(4, 0)], [Generator(1, 0, 50)],
                      [BranchParams(1, 2, b_min=1, b_max=1), BranchParams(3, 4, b_min=1, b_max=1)])
    assert any("connected components" in p for p in validate_case(case))


def test_connection_matrix(case6ww):
    cft = case6ww.cft.toarray()
    assert cft.shape == (11, 6)
    assert np.all(cft.sum(axis=1) == 0)
    assert np.all((cft == 1).sum(axis=1) == 1) and np.all((cft == -1).sum(axis=1) == 1)
    gm = case6ww.gen_map.toarray()
    assert gm.shape == (6, 3) and np.all(gm.sum(axis=0) == 1)
