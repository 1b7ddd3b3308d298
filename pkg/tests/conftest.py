import numpy as np
import pytest

from polypruner.garden import (GardenState, PlantState, PlantTypeCatalog,
                               PlantTypeParams, Stage, new_garden)


@pytest.fixture
def catalog():
    return PlantTypeCatalog((
        PlantTypeParams(1, "big", 6, 36, 30.0, wilting_rate=0.5),
        PlantTypeParams(2, "mid", 5, 35, 20.0, wilting_rate=0.4),
        PlantTypeParams(3, "small", 8, 48, 10.0, wilting_rate=0.2),
    ))


@pytest.fixture
def garden(catalog):
    return new_garden(100, 100, [(1, 30, 30), (2, 70, 40), (3, 45, 70)],
                      catalog)


def grown(state: GardenState, radii: dict[int, float]) -> GardenState:
    """Copy of state with given radii (plant_index -> cm)."""
    plants = tuple(
        PlantState(p.plant_index, p.type_id, p.center,
                   radii.get(p.plant_index, p.radius), Stage.GROWTH)
        for p in state.plants)
    return GardenState(state.day, state.bed_width, state.bed_height, plants)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
