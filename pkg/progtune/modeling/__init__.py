from .config import SHIPPED_ARCHITECTURES, ArchitectureDims, HeadKind, ModelConfig, resolve_architecture
from .encoder import (
    Adapter,
    Encoder,
    Linear,
    LoraFactors,
    ParameterFactory,
    TransformerBlock,
    block_forward,
    build_model,
    encode,
    forward,
)
from .registry import (
    LORA_MATRICES,
    CountKey,
    ParameterCounts,
    ParameterRegistry,
    ParameterTag,
    RegisteredParameter,
    TagKind,
)

# counting depends on progtune.peft, import it as progtune.modeling.counting

__all__ = [
    "LORA_MATRICES",
    "SHIPPED_ARCHITECTURES",
    "Adapter",
    "ArchitectureDims",
    "CountKey",
    "Encoder",
    "HeadKind",
    "Linear",
    "LoraFactors",
    "ModelConfig",
    "ParameterCounts",
    "ParameterFactory",
    "ParameterRegistry",
    "ParameterTag",
    "RegisteredParameter",
    "TagKind",
    "TransformerBlock",
    "block_forward",
    "build_model",
    "encode",
    "forward",
    "resolve_architecture",
]
