"""Shared discrete-design fixtures for exact moment probes."""

import pytest

from spw.residuals import DiscreteDesign


@pytest.fixture
def design_moderate() -> DiscreteDesign:
    return DiscreteDesign.binary(
        points=(1, 2, 3),
        masses=(0.5, 0.3, 0.2),
        e=(0.3, 0.5, 0.7),
        mu0=(1.0, -0.5, 2.0),
        mu1=(2.5, 0.5, 1.0),
    )


@pytest.fixture
def design_extreme() -> DiscreteDesign:
    return DiscreteDesign.binary(
        points=(1, 2),
        masses=(0.6, 0.4),
        e=(0.001, 0.92),
        mu0=(4.0, -1.0),
        mu1=(9.0, 3.0),
    )


@pytest.fixture
def design_grid() -> DiscreteDesign:
    return DiscreteDesign.binary(
        points=(1, 2, 3, 4),
        masses=(0.25, 0.25, 0.25, 0.25),
        e=(0.05, 0.35, 0.65, 0.95),
        mu0=(0.0, 1.0, 2.0, 3.0),
        mu1=(1.0, 1.0, 1.0, 1.0),
    )


@pytest.fixture
def design_atoms() -> DiscreteDesign:
    # Outcome atoms per (treatment, point); means must match mu below.
    dists = {
        (0, 1): ((0.0, 2.0), (0.5, 0.5)),
        (1, 1): ((1.0, 3.0), (0.25, 0.75)),
        (0, 2): ((-1.0, 1.0), (0.5, 0.5)),
        (1, 2): ((0.0, 4.0), (0.5, 0.5)),
    }
    return DiscreteDesign.binary(
        points=(1, 2),
        masses=(0.5, 0.5),
        e=(0.2, 0.6),
        mu0=(1.0, 0.0),
        mu1=(2.5, 2.0),
        outcome_dists=dists,
    )


@pytest.fixture
def design_three_arm() -> DiscreteDesign:
    return DiscreteDesign(
        points=(1, 2),
        masses=(0.4, 0.6),
        treatments=(0, 1, 2),
        lam=((0.2, 0.3, 0.5), (0.6, 0.1, 0.3)),
        mu=((1.0, 2.0, 4.0), (0.0, -1.0, 3.0)),
    )
