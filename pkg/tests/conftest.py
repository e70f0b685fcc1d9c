import numpy as np
import pytest
import torch

from attrvae.dataio import ANNULUS_ATTRIBUTES, AnnulusSpec, generate_annulus_dataset
from attrvae.losses import AttributeMapping
from attrvae.model import ModelConfig

# keep CPU runs reproducible and polite on small machines
torch.manual_seed(0)

MAPPING4 = AttributeMapping.from_names(ANNULUS_ATTRIBUTES)


def tiny_annulus_spec(n_samples: int, seed: int, scar_probability: float = 0.6) -> AnnulusSpec:
    """32x32 annulus cohort scaled down for fast unit tests."""
    return AnnulusSpec(
        n_samples=n_samples,
        image_size=32,
        outer_radius=(9.0, 13.0),
        wall_thickness=(2.5, 4.5),
        wall_intensity=(0.65, 1.0),
        scar_fraction=(0.1, 0.5),
        scar_probability=scar_probability,
        seed=seed,
    )


def tiny_model_config(**overrides) -> ModelConfig:
    base = dict(
        latent_dim=8,
        embedding_dim=24,
        conv_channels=(4, 4, 8, 8, 8),
        image_shape=(32, 32, 1),
        mlp_hidden=(8, 4),
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_annulus_dataset(tiny_annulus_spec(n_samples=64, seed=19))
