"""Flat ``key = value`` run configuration.

Unknown keys are errors. Lists are comma separated; an empty value gives
an empty list (``stages =`` means a single-stage fit).
"""

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import InvalidArgumentError
from .fitter import DEFAULT_CENTROID_COUNTS, FitConfig


def _ints(text):
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


def _floats(text):
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v)


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    points: int = 4096
    stages: tuple = DEFAULT_CENTROID_COUNTS
    sigma_factor: float = 0.25
    alpha: tuple = None
    beta: tuple = None
    reg_normalization: str = "edges"
    k_reg: int = 8
    iterations: int = 500
    joint_iterations: int = 500
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    schedule: str = "sequential"
    grid_res: int = 32
    spread_res: int = 8
    metric_cd: bool = True
    metric_emd: bool = True
    metric_iou: bool = True
    metric_spread: bool = True
    metric_shift: bool = True
    format: str = "ply-binary-le"

    def fit_config(self):
        return FitConfig(
            centroid_counts=self.stages,
            sigma_factor=self.sigma_factor,
            alpha=self.alpha,
            beta=self.beta,
            reg_normalization=self.reg_normalization,
            k_reg=self.k_reg,
            iterations=self.iterations,
            joint_iterations=self.joint_iterations,
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            adam_eps=self.adam_eps,
            seed=self.seed,
            schedule=self.schedule,
        )

    def dump(self):
        """Text that :func:`parse_config` turns back into an equal config."""
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, tuple):
                text = ", ".join(repr(v) for v in value)
            elif isinstance(value, bool):
                text = "true" if value else "false"
            else:
                text = repr(value) if isinstance(value, float) else str(value)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"


_PARSERS = {
    "points": int, "stages": _ints, "sigma_factor": float, "alpha": _floats,
    "beta": _floats, "reg_normalization": str, "k_reg": int, "iterations": int,
    "joint_iterations": int, "lr": float, "beta1": float, "beta2": float,
    "adam_eps": float, "seed": int, "schedule": str, "grid_res": int,
    "spread_res": int, "metric_cd": _bool, "metric_emd": _bool, "metric_iou": _bool,
    "metric_spread": _bool, "metric_shift": _bool, "format": str,
}


def parse_config(text, source="<config>"):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise InvalidArgumentError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in _PARSERS:
            raise InvalidArgumentError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise InvalidArgumentError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return RunConfig(**values)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
