"""Architecture description, layer geometry and exact parameter counts."""

from dataclasses import asdict, dataclass
from math import prod
from typing import Optional

from ..dsp import VOLUME_SHAPE
from ..errors import ConfigurationError

HEADS = ("DNN", "ELM")


@dataclass(frozen=True)
class ArchConfig:
    """One homogeneous-kernel 3D-CNN architecture.

    Pooling is implied by ``head``: the first conv layer is never pooled;
    later layers pool (2, 2, 2) for the DNN head and (1, 2, 2) for the ELM
    head, which keeps the long-term axis intact for per-step outputs.
    """

    n_conv_layers: int = 3
    kernel_resolution: tuple = (2, 2, 32)
    kernels_per_layer: int = 4
    fc_width: int = 512
    fc_layers: int = 2
    head: str = "DNN"
    dropout_p: float = 0.5
    n_classes: int = 4
    input_shape: tuple = VOLUME_SHAPE

    def __post_init__(self):
        object.__setattr__(self, "kernel_resolution", tuple(int(k) for k in self.kernel_resolution))
        object.__setattr__(self, "input_shape", tuple(int(k) for k in self.input_shape))
        self.validate()

    def validate(self) -> None:
        if self.head not in HEADS:
            raise ConfigurationError(f"head must be one of {HEADS}, got {self.head!r}")
        if len(self.kernel_resolution) != 3 or min(self.kernel_resolution) < 1:
            raise ConfigurationError(f"kernel resolution must be 3 positive extents, "
                                     f"got {self.kernel_resolution}")
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ConfigurationError(f"input shape must be 3 positive extents, got {self.input_shape}")
        for name in ("n_conv_layers", "kernels_per_layer", "fc_width", "n_classes"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.fc_layers < 0:
            raise ConfigurationError("fc_layers must be >= 0")
        if self.n_classes < 2:
            raise ConfigurationError("n_classes must be >= 2")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigurationError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        extents = self.input_shape
        for i in range(self.n_conv_layers):
            if any(k > e for k, e in zip(self.kernel_resolution, extents)):
                raise ConfigurationError(
                    f"conv layer {i + 1}: kernel {self.kernel_resolution} exceeds its input "
                    f"extents {extents}")
            win = self.pool_window(i)
            if win is not None:
                extents = tuple(e // w for e, w in zip(extents, win))
                if min(extents) < 1:
                    raise ConfigurationError(
                        f"pooling after conv layer {i + 1} leaves non-positive extents {extents}")

    def pool_window(self, layer: int) -> Optional[tuple]:
        if layer == 0:
            return None
        return (2, 2, 2) if self.head == "DNN" else (1, 2, 2)

    def conv_output_extents(self) -> tuple:
        extents = self.input_shape
        for i in range(self.n_conv_layers):
            win = self.pool_window(i)
            if win is not None:
                extents = tuple(e // w for e, w in zip(extents, win))
        return extents

    @property
    def steps(self) -> int:
        """Number of per-step outputs: 1 for the DNN head, L for the ELM head."""
        return 1 if self.head == "DNN" else self.conv_output_extents()[0]

    @property
    def flatten_size(self) -> int:
        L, T, S = self.conv_output_extents()
        per_volume = L * T * S * self.kernels_per_layer
        return per_volume if self.head == "DNN" else per_volume // L

    def param_shapes(self) -> dict:
        """Ordered name -> shape map of every trainable tensor."""
        shapes = {}
        cin = 1
        K = self.kernels_per_layer
        for i in range(self.n_conv_layers):
            shapes[f"conv{i}.kernels"] = (K, *self.kernel_resolution, cin)
            shapes[f"conv{i}.bias"] = (K,)
            cin = K
        width_in = self.flatten_size
        for j in range(self.fc_layers):
            shapes[f"fc{j}.weights"] = (self.fc_width, width_in)
            shapes[f"fc{j}.bias"] = (self.fc_width,)
            width_in = self.fc_width
        shapes["out.weights"] = (self.n_classes, width_in)
        shapes["out.bias"] = (self.n_classes,)
        return shapes

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel_resolution"] = list(self.kernel_resolution)
        d["input_shape"] = list(self.input_shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown architecture keys: {sorted(unknown)}")
        return cls(**d)


def count_params(config: ArchConfig) -> int:
    return sum(prod(shape) for shape in config.param_shapes().values())


def layer_table(config: ArchConfig) -> list[tuple[str, str, int]]:
    """Rows of (layer, output shape, parameter count) for display."""
    rows = []
    shapes = config.param_shapes()
    extents = config.input_shape
    K = config.kernels_per_layer
    rows.append(("input", "x".join(map(str, (*extents, 1))), 0))
    for i in range(config.n_conv_layers):
        n = prod(shapes[f"conv{i}.kernels"]) + prod(shapes[f"conv{i}.bias"])
        rows.append((f"conv{i + 1} {'x'.join(map(str, config.kernel_resolution))} +relu",
                     "x".join(map(str, (*extents, K))), n))
        win = config.pool_window(i)
        if win is not None:
            extents = tuple(e // w for e, w in zip(extents, win))
            rows.append((f"maxpool {'x'.join(map(str, win))}",
                         "x".join(map(str, (*extents, K))), 0))
    prefix = "" if config.head == "DNN" else f"{config.steps}x"
    rows.append(("flatten" if config.head == "DNN" else "per-step flatten",
                 f"{prefix}{config.flatten_size}", 0))
    for j in range(config.fc_layers):
        n = prod(shapes[f"fc{j}.weights"]) + prod(shapes[f"fc{j}.bias"])
        rows.append((f"fc{j + 1} +relu +dropout", f"{prefix}{config.fc_width}", n))
    n = prod(shapes["out.weights"]) + prod(shapes["out.bias"])
    rows.append(("softmax", f"{prefix}{config.n_classes}", n))
    return rows

