from .attacks import (
    attack_add_clusters,
    attack_add_objects,
    attack_add_points,
    attack_perturb,
    default_template,
    run_attack,
    verify_success,
)
from .config import ATTACK_KINDS, AttackConfig, AttackResult, ClusterSeed
from .dbscan import NOISE, Clustering, dbscan
from .search import lambda_search, optimize_inner
from .seeding import SeedingError, vulnerable_regions

__all__ = [
    "ATTACK_KINDS",
    "AttackConfig",
    "AttackResult",
    "ClusterSeed",
    "Clustering",
    "NOISE",
    "SeedingError",
    "attack_add_clusters",
    "attack_add_objects",
    "attack_add_points",
    "attack_perturb",
    "dbscan",
    "default_template",
    "lambda_search",
    "optimize_inner",
    "run_attack",
    "verify_success",
]
