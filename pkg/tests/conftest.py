import numpy as np
import pytest

from layerfield.field import FieldConfig, desk_field_config
from layerfield.synthetic import desk_scene, synthesize_scene


def narrow_field_config(**kw) -> FieldConfig:
    """Desk-profile topology shrunk to width 16 for fast unit tests."""
    base = desk_field_config()
    over = dict(
        deform_hidden=(16, 16),
        deform_skips=(1,),
        trunk_hidden=(16, 16),
        trunk_skips=(1,),
        color_hidden=(16,),
    )
    over.update(kw)
    return type(base)(**{**base.__dict__, **over})


@pytest.fixture(scope="session")
def tiny_ds():
    """2 cameras, 3 frames, 24 px: smallest scene that still has moving
    entities, labels, depths and boxes."""
    return synthesize_scene(desk_scene(n_train_cams=2, n_frames=3, size=24,
                                       with_holdout=False))
