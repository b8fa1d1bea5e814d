import os

CRITICAL_POINT_THRESHOLD: float = float(
    os.environ.get("PLAP_CRITICAL_POINT_THRESHOLD", "1e-12")
)

CFL_SAFETY: float = float(os.environ.get("PLAP_CFL_SAFETY", "0.9"))

# slope of tolerance(h) = C_tol * h, frozen from `calibrate` on configs/heat-2d.yaml
TOLERANCE_CONSTANT: float = float(os.environ.get("PLAP_TOLERANCE_CONSTANT", "4.0"))

# headroom of the frozen slope over the worst identity residual of the heat run
CALIBRATION_SAFETY: float = float(os.environ.get("PLAP_CALIBRATION_SAFETY", "2.0"))

BOUNDEDNESS_FACTOR: float = float(os.environ.get("PLAP_BOUNDEDNESS_FACTOR", "1.5"))
GRADIENT_STABILITY_FACTOR: float = float(
    os.environ.get("PLAP_GRADIENT_STABILITY_FACTOR", "2.0")
)

EVALUATION_MARGIN_CELLS: int = int(os.environ.get("PLAP_EVALUATION_MARGIN_CELLS", "2"))

LOG_LEVEL: str = os.environ.get("PLAP_LOG_LEVEL", "INFO")
DEFAULT_JOBS: int = int(os.environ.get("PLAP_JOBS", "1"))
