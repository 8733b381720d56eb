from typing import Dict, List, Sequence

import numpy as np

from imml_lab.autodiff import Tensor, concat, hadamard, matmul, softmax, take, tanh
from imml_lab.config import LossConfig, ModelConfig
from imml_lab.errors import DimensionMismatch

MODALITIES = ("p", "a")


class ImmlModel:
    """
    Late-fusion classifier over a predominant modality ``p`` and an
    auxiliary modality ``a``.

    Per modality: a one-hidden-layer encoder f^m, a per-dimension weight
    vector omega^m gating its output, and a linear projection head into the
    shared contrastive space. Fusion weights are softmax(theta) and a single
    linear classifier maps the fused feature to class logits.
    """

    def __init__(
            self, input_dims: Sequence[int], num_classes: int, cfg: ModelConfig, loss_cfg: LossConfig,
            fusion_kind: str = "concat", rng: np.random.Generator = None,
        ) -> None:
        if len(input_dims) != len(MODALITIES):
            raise DimensionMismatch(f"Expected {len(MODALITIES)} input dims, got {len(input_dims)}.")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_dims = tuple(int(d) for d in input_dims)
        self.feature_dims = (cfg.feature_dim_p, cfg.feature_dim_a)
        self.num_classes = num_classes
        self.fusion_kind = fusion_kind
        if fusion_kind == "weighted_sum" and len(set(self.feature_dims)) != 1:
            raise DimensionMismatch(f"weighted_sum fusion needs equal feature dims, got {self.feature_dims}.")

        def dense(fan_in: int, fan_out: int) -> Tensor:
            return Tensor(rng.normal(0.0, cfg.init_scale / np.sqrt(fan_in), size=(fan_in, fan_out)), requires_grad=True)

        def zeros(size: int) -> Tensor:
            return Tensor(np.zeros(size), requires_grad=True)

        self.params: Dict[str, Tensor] = {}
        for name, d_in, d_feat in zip(MODALITIES, self.input_dims, self.feature_dims):
            self.params[f"enc_{name}.w1"] = dense(d_in, cfg.hidden_dim)
            self.params[f"enc_{name}.b1"] = zeros(cfg.hidden_dim)
            self.params[f"enc_{name}.w2"] = dense(cfg.hidden_dim, d_feat)
            self.params[f"enc_{name}.b2"] = zeros(d_feat)
            self.params[f"omega_{name}"] = Tensor(np.ones(d_feat), requires_grad=True)
            self.params[f"proj_{name}.w"] = dense(d_feat, loss_cfg.proj_dim)
            self.params[f"proj_{name}.b"] = zeros(loss_cfg.proj_dim)
        self.params["theta"] = zeros(len(MODALITIES))
        classifier_in = sum(self.feature_dims) if fusion_kind == "concat" else self.feature_dims[0]
        self.params["cls.w"] = dense(classifier_in, num_classes)
        self.params["cls.b"] = zeros(num_classes)

    def parameters(self) -> List[Tensor]:
        return list(self.params.values())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for name, value in state.items():
            if name not in self.params:
                raise ValueError(f"Unknown parameter '{name}'.")
            if value.shape != self.params[name].shape:
                raise DimensionMismatch(f"Parameter '{name}' expects {self.params[name].shape}, got {value.shape}.")
            self.params[name].data = np.array(value, dtype=np.float64)

    def encode(self, inputs: Sequence[np.ndarray]) -> List[Tensor]:
        """Gated features h_hat^m = f^m(x^m) * omega^m, one (N, D_m) tensor per modality."""
        features = []
        for name, x, d_in in zip(MODALITIES, inputs, self.input_dims):
            x = Tensor(np.asarray(x, dtype=np.float64))
            if x.ndim != 2 or x.shape[1] != d_in:
                raise DimensionMismatch(f"Modality '{name}' expects inputs of width {d_in}, got {x.shape}.")
            p = self.params
            hidden = tanh(matmul(x, p[f"enc_{name}.w1"]) + p[f"enc_{name}.b1"])
            encoded = matmul(hidden, p[f"enc_{name}.w2"]) + p[f"enc_{name}.b2"]
            features.append(hadamard(encoded, p[f"omega_{name}"]))
        return features

    def project(self, features: Sequence[Tensor]) -> List[Tensor]:
        return [
            matmul(h, self.params[f"proj_{name}.w"]) + self.params[f"proj_{name}.b"]
            for name, h in zip(MODALITIES, features)
        ]

    def fusion_weights(self) -> Tensor:
        return softmax(self.params["theta"])

    def classify(self, fused: Tensor) -> Tensor:
        return matmul(fused, self.params["cls.w"]) + self.params["cls.b"]

    def fused_logits(self, features: Sequence[Tensor]) -> Tensor:
        phi = self.fusion_weights()
        weighted = [hadamard(h, take(phi, [m])) for m, h in enumerate(features)]
        if self.fusion_kind == "concat":
            return self.classify(concat(weighted, axis=-1))
        fused = weighted[0]
        for part in weighted[1:]:
            fused = fused + part
        return self.classify(fused)

    def modality_logits(self, features: Sequence[Tensor]) -> List[Tensor]:
        """
        Logits each modality would produce alone; the fused logits equal
        their phi-weighted sum.
        """
        w, b = self.params["cls.w"], self.params["cls.b"]
        if self.fusion_kind == "weighted_sum":
            return [self.classify(h) for h in features]
        logits, offset = [], 0
        for h in features:
            width = h.shape[-1]
            block = take(w, np.arange(offset, offset + width))
            logits.append(matmul(h, block) + b)
            offset += width
        return logits

    def predict_proba(self, inputs: Sequence[np.ndarray]) -> np.ndarray:
        logits = self.fused_logits(self.encode(inputs)).data
        shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
        return shifted / shifted.sum(axis=1, keepdims=True)

    def predict(self, inputs: Sequence[np.ndarray]) -> np.ndarray:
        return np.argmax(self.fused_logits(self.encode(inputs)).data, axis=1)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def sgd_step(self, learning_rate: float) -> None:
        for p in self.params.values():
            if p.grad is not None:
                p.data -= learning_rate * p.grad
