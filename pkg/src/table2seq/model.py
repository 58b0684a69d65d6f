"""Model configuration and the learnable parameter set."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .autodiff import Tensor, parameter
from .table_data import Vocabulary

# ids below this are <pad> and <bos>, never produced by the output softmax
FIRST_GENERATED_ID = 2


@dataclass
class ModelConfig:
    embed_dim: int = 300
    attr_dim: int = 300
    hidden_dim: int = 500
    attention_dim: int = 500
    init_std: float = 0.08
    copy: bool = True
    use_global: bool = True
    use_local: bool = True
    use_attention: bool = True
    use_caption: bool = True
    plusplus: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    @classmethod
    def tc_nlm(cls, **kw) -> "ModelConfig":
        """Table-conditioned RNN language model: no attention, no copying."""
        kw.update(copy=False, use_attention=False, use_global=True, use_local=True, plusplus=False)
        return cls(**kw)


def parameter_shapes(config: ModelConfig, n_words: int, n_attrs: int) -> dict[str, tuple[int, ...]]:
    dc, da, dh, k = config.embed_dim, config.attr_dim, config.hidden_dim, config.attention_dim
    dx = dc + dh
    dm = dc + dh + dh + dh + da
    shapes = {
        "cell_embedding": (n_words, dc),
        "attr_embedding": (n_attrs, da),
        "enc_W": (dc + da, dh),
        "enc_b": (dh,),
        "word_embedding": (n_words, dc),
        "att_Ws": (dh, k),
        "att_Wh": (dh, k),
        "att_Wcov": (dh, k),
        "att_b": (k,),
        "att_v": (k,),
        "gru_Wz": (dx, dh),
        "gru_Uz": (dh, dh),
        "gru_bz": (dh,),
        "gru_Wr": (dx, dh),
        "gru_Ur": (dh, dh),
        "gru_br": (dh,),
        "gru_Wh": (dx, dh),
        "gru_Uh": (dh, dh),
        "gru_bh": (dh,),
        "out_Wm": (dm, dh),
        "out_bm": (dh,),
        "out_Wo": (dh, n_words - FIRST_GENERATED_ID),
        "out_bo": (n_words - FIRST_GENERATED_ID,),
        "gate_w": (dm,),
        "gate_b": (1,),
    }
    if config.plusplus:
        shapes["attr_state_W"] = (da, dh)
        shapes["attr_state_b"] = (dh,)
    return shapes


class Model:
    """Parameters plus the vocabularies and flags needed to run them."""

    def __init__(
        self,
        config: ModelConfig,
        vocab: Vocabulary,
        attr_vocab: Vocabulary,
        params: dict[str, Tensor] | None = None,
        seed: int = 0,
    ):
        self.config = config
        self.vocab = vocab
        self.attr_vocab = attr_vocab
        shapes = parameter_shapes(config, len(vocab), len(attr_vocab))
        if params is None:
            rng = np.random.default_rng(seed)
            params = {
                name: parameter(rng.normal(0.0, config.init_std, size=shape))
                for name, shape in shapes.items()
            }
        else:
            for name, shape in shapes.items():
                if name not in params:
                    raise ValueError(f"missing parameter {name}")
                if params[name].shape != shape:
                    raise ValueError(f"parameter {name} has shape {params[name].shape}, expected {shape}")
        self.params = params

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def names(self) -> list[str]:
        return list(self.params)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.value for k, v in self.params.items()}

    def copy_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.value.copy() for k, v in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for k, v in arrays.items():
            self.params[k].value = np.array(v, dtype=np.float64)
