from .atlas import (bounded_geometry_report, christoffel_transformation_residual, curvature_report,
                    verify_uniform_atlas)
from .curvature import (CurvatureEval, MetricEval, christoffel, christoffel_derivative, connection_batch,
                        curvature_at, metric_at, ricci, riemann, sectional, tensor_norm)
from .models import (EUCLIDEAN, HYPERBOLIC, KINDS, SPHERE, TORUS, ChartPoint, Euclidean, FlatTorus,
                     Hyperbolic, ManifoldModel, Sphere, exact_distance, make_model, transition)

__all__ = [
    "ChartPoint", "CurvatureEval", "Euclidean", "FlatTorus", "Hyperbolic", "ManifoldModel", "MetricEval",
    "Sphere", "EUCLIDEAN", "HYPERBOLIC", "KINDS", "SPHERE", "TORUS",
    "bounded_geometry_report", "christoffel", "christoffel_derivative", "christoffel_transformation_residual",
    "connection_batch", "curvature_at", "curvature_report", "exact_distance", "make_model", "metric_at", "ricci", "riemann",
    "sectional", "tensor_norm", "transition", "verify_uniform_atlas",
]
