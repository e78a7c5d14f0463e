"""Targeted adversarial point clouds against a miniature PointNet classifier."""

from .estimator import (
    ClusterAttack,
    ObjectAttack,
    PerturbationAttack,
    PointAdditionAttack,
    PointNetClassifier,
    UnitBallNormalizer,
)
from .geometry import MetricKind, RigidTransform, normalize_unit_ball
from .model import ModelParams, load_checkpoint, save_checkpoint
from .shapes import SHAPE_KINDS, ShapeSpec, sample_shape

__version__ = "0.1.0"

__all__ = [
    "ClusterAttack",
    "MetricKind",
    "ModelParams",
    "ObjectAttack",
    "PerturbationAttack",
    "PointAdditionAttack",
    "PointNetClassifier",
    "RigidTransform",
    "SHAPE_KINDS",
    "ShapeSpec",
    "UnitBallNormalizer",
    "load_checkpoint",
    "normalize_unit_ball",
    "sample_shape",
    "save_checkpoint",
]
