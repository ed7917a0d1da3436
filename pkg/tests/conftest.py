"""Session fixtures for the heavier robot-scenario tests.

Leader generation is the slow part, so one pooled dataset plus its
calibration artifacts is built once and shared; tests wanting a different
miscoverage level re-quantile the cached scores with radii_for_delta.
"""

from types import SimpleNamespace

import pytest

from stlcp.casestudies.robot import (
    RobotScenario,
    gen_robot_leader_dataset,
    mean_path_predictor,
)
from stlcp.conformal import calibrate, compute_normalizers, trajectory_scores


@pytest.fixture(scope="session")
def leader_bundle():
    sc = RobotScenario()
    ds = gen_robot_leader_dataset(250, seed=5, scenario=sc, sizes=(50, 100, 100))
    train = ds.subset("train")
    predictor = mean_path_predictor(train, sc.horizon)
    sigma = compute_normalizers(train, predictor, sc.horizon)
    cal = ds.subset("cal")
    cal_ol, cal_cl = trajectory_scores(cal, predictor, sigma)
    return SimpleNamespace(
        sc=sc,
        dataset=ds,
        predictor=predictor,
        sigma=sigma,
        radii=calibrate(cal, predictor, sigma, sc.delta),
        cal_ol=cal_ol,
        cal_cl=cal_cl,
    )
