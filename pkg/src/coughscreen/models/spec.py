"""Classifier families and their hyperparameters."""

import itertools
from dataclasses import asdict, dataclass, fields, replace

FAMILIES = ("LR", "SVM", "MLP", "CNN", "LSTM", "ResNet")
SEGMENT_FAMILIES = frozenset({"LR", "SVM", "MLP"})
MATRIX_FAMILIES = frozenset({"CNN", "LSTM", "ResNet"})
RESNET_PRESETS = ("tiny", "resnet50_audio")

# hyperparameters that matter per family, in grid-coordinate order
RELEVANT = {
    "LR": ("reg_strength", "l1_weight", "l2_weight", "epochs"),
    "SVM": ("reg_strength", "epochs"),
    "MLP": ("hidden_units", "l2_penalty", "learning_rate", "batch_size", "epochs"),
    "CNN": ("conv_filters", "kernel_size", "dropout", "dense_units", "learning_rate",
            "batch_size", "epochs"),
    "LSTM": ("lstm_units", "learning_rate", "dropout", "dense_units", "batch_size", "epochs"),
    "ResNet": ("preset", "learning_rate", "batch_size", "epochs"),
}

DEFAULT_LEARNING_RATE = {"MLP": 0.05, "CNN": 0.01, "LSTM": 0.01, "ResNet": 0.1}
DEFAULT_EPOCHS = {"LR": 300, "SVM": 300, "MLP": 50, "CNN": 10, "LSTM": 10, "ResNet": 20}
DEFAULT_BATCH = {"MLP": 64, "CNN": 64, "LSTM": 64, "ResNet": 64}


@dataclass(frozen=True)
class ModelSpec:
    family: str
    reg_strength: float = 1.0   # LR/SVM; larger means weaker penalty
    l1_weight: float = 0.0      # LR lasso share
    l2_weight: float = 1.0      # LR ridge share
    hidden_units: int = 50      # MLP
    l2_penalty: float = 1e-4    # MLP
    learning_rate: float = None
    conv_filters: int = 24      # CNN
    kernel_size: int = 3        # CNN
    dropout: float = 0.1        # CNN, LSTM
    dense_units: int = 16       # CNN, LSTM
    lstm_units: int = 64        # LSTM
    batch_size: int = None      # None: full batch for LR/SVM, 64 otherwise
    epochs: int = None
    preset: str = "tiny"        # ResNet

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.preset not in RESNET_PRESETS:
            raise ValueError(f"unknown ResNet preset {self.preset!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def segment_level(self):
        return self.family in SEGMENT_FAMILIES

    def resolved(self):
        """Copy with family defaults filled in for unset fields."""
        return replace(
            self,
            learning_rate=(DEFAULT_LEARNING_RATE.get(self.family)
                           if self.learning_rate is None else self.learning_rate),
            epochs=DEFAULT_EPOCHS[self.family] if self.epochs is None else self.epochs,
            batch_size=DEFAULT_BATCH.get(self.family) if self.batch_size is None else self.batch_size,
        )

    def hyperparameters(self):
        r = self.resolved()
        return {k: getattr(r, k) for k in RELEVANT[self.family]}

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown ModelSpec fields {sorted(unknown)}")
        return cls(**d)

    def label(self):
        hp = ", ".join(f"{k}={v}" for k, v in self.hyperparameters().items())
        return f"{self.family}({hp})"


def _steps(lo, hi, step):
    n = int(round((hi - lo) / step))
    return tuple(round(lo + i * step, 10) for i in range(n + 1))


POWERS_OF_TEN = tuple(10.0 ** i for i in range(-7, 8))

# published search ranges; the epoch range is read as the two values {10, 20}
STANDARD_RANGES = {
    "reg_strength": POWERS_OF_TEN,
    "l1_weight": _steps(0.0, 1.0, 0.05),
    "l2_weight": _steps(0.0, 1.0, 0.05),
    "hidden_units": tuple(range(10, 101, 10)),
    "l2_penalty": POWERS_OF_TEN,
    "mlp_learning_rate": _steps(0.0, 1.0, 0.05),
    "batch_size": (64, 128, 256),
    "epochs": (10, 20),
    "conv_filters": (24, 48, 96),
    "kernel_size": (2, 3),
    "dropout": (0.1, 0.3, 0.5),
    "dense_units": (16, 32),
    "lstm_units": (64, 128, 256),
    "lstm_learning_rate": (1e-2, 1e-3, 1e-4),
}

_STANDARD_AXES = {
    "LR": {"reg_strength": "reg_strength", "l1_weight": "l1_weight", "l2_weight": "l2_weight"},
    "SVM": {"reg_strength": "reg_strength"},
    "MLP": {"hidden_units": "hidden_units", "l2_penalty": "l2_penalty",
            "learning_rate": "mlp_learning_rate"},
    "CNN": {"conv_filters": "conv_filters", "kernel_size": "kernel_size", "dropout": "dropout",
            "dense_units": "dense_units", "batch_size": "batch_size", "epochs": "epochs"},
    "LSTM": {"lstm_units": "lstm_units", "learning_rate": "lstm_learning_rate",
             "dropout": "dropout", "dense_units": "dense_units", "batch_size": "batch_size",
             "epochs": "epochs"},
    "ResNet": {"batch_size": "batch_size", "epochs": "epochs"},
}


def standard_grid(family, **fixed):
    """Yield every :class:`ModelSpec` of ``family`` on the published grid.

    ``fixed`` pins fields (e.g. ``preset="resnet50_audio"``) outside the grid.
    """
    axes = _STANDARD_AXES[family]
    names = list(axes)
    for combo in itertools.product(*(STANDARD_RANGES[axes[n]] for n in names)):
        yield ModelSpec(family, **dict(zip(names, combo)), **fixed)


def in_standard_range(spec):
    """True when every searched hyperparameter of ``spec`` lies on the published grid."""
    for field_name, range_name in _STANDARD_AXES[spec.family].items():
        if getattr(spec, field_name) not in STANDARD_RANGES[range_name]:
            return False
    return True
