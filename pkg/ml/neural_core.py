#!/usr/bin/env python3
"""Núcleo diferenciável mínimo: tensores com gradiente reverso, MLPs, perdas,
otimizadores Adam/AdamW, RNG com semente e verificação de gradiente por
diferenças finitas.

O conjunto de operadores é fixo (o necessário para NTM, encoder e mutual
learning). Todos os valores são float64.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import joblib
import numpy as np

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-8

ACTIVATIONS = ("relu", "tanh", "softplus", "identity")
OUTPUT_ACTIVATIONS = ("identity", "softmax")


class ShapeError(ValueError):
    pass


class NonFiniteError(ValueError):
    pass


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    # soma os eixos que o broadcasting expandiu
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Array float64 que registra a operação que o produziu.

    ``backward()`` percorre o grafo em ordem topológica reversa acumulando
    ``grad`` em cada nó.
    """

    __array_priority__ = 1000
    __array_ufunc__ = None

    def __init__(self, data, _children: Tuple["Tensor", ...] = (), _op: str = "", name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self._backward: Callable[[], None] = lambda: None
        self._prev = tuple(_children)
        self._op = _op
        self.name = name

    # ------------------------------------------------------------------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op!r})"

    def _accumulate(self, grad: np.ndarray) -> None:
        grad = _unbroadcast(np.asarray(grad, dtype=np.float64), self.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    def backward(self) -> None:
        topo: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for child in node._prev:
                if id(child) not in visited:
                    stack.append((child, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node.grad is not None:
                node._backward()

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # ------------------------------------------------------------------
    # aritmética
    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.data + other.data, (self, other), "+")

        def _backward():
            self._accumulate(out.grad)
            other._accumulate(out.grad)

        out._backward = _backward
        return out

    def __radd__(self, other) -> "Tensor":
        return as_tensor(other) + self

    def __neg__(self) -> "Tensor":
        out = Tensor(-self.data, (self,), "neg")

        def _backward():
            self._accumulate(-out.grad)

        out._backward = _backward
        return out

    def __sub__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.data - other.data, (self, other), "-")

        def _backward():
            self._accumulate(out.grad)
            other._accumulate(-out.grad)

        out._backward = _backward
        return out

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) - self

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.data * other.data, (self, other), "*")

        def _backward():
            self._accumulate(other.data * out.grad)
            other._accumulate(self.data * out.grad)

        out._backward = _backward
        return out

    def __rmul__(self, other) -> "Tensor":
        return as_tensor(other) * self

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.data / other.data, (self, other), "/")

        def _backward():
            self._accumulate(out.grad / other.data)
            other._accumulate(-out.grad * self.data / (other.data ** 2))

        out._backward = _backward
        return out

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        if not isinstance(exponent, (int, float)):
            raise TypeError("apenas expoentes escalares são suportados")
        out = Tensor(self.data ** exponent, (self,), f"**{exponent}")

        def _backward():
            self._accumulate(exponent * self.data ** (exponent - 1) * out.grad)

        out._backward = _backward
        return out

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        if self.shape[-1] != other.shape[0]:
            raise ShapeError(f"matmul incompatível: {self.shape} @ {other.shape}")
        out = Tensor(self.data @ other.data, (self, other), "@")

        def _backward():
            g = out.grad
            if other.ndim == 1:
                self._accumulate(np.multiply.outer(g, other.data))
                a = self.data.reshape(-1, self.shape[-1])
                other._accumulate(a.T @ g.reshape(-1))
                return
            self._accumulate(g @ other.data.T)
            a = self.data.reshape(-1, self.shape[-1])
            other._accumulate(a.T @ g.reshape(-1, other.shape[-1]))

        out._backward = _backward
        return out

    def __rmatmul__(self, other) -> "Tensor":
        return as_tensor(other) @ self

    # ------------------------------------------------------------------
    # funções elementares
    def exp(self) -> "Tensor":
        out = Tensor(np.exp(self.data), (self,), "exp")

        def _backward():
            self._accumulate(out.data * out.grad)

        out._backward = _backward
        return out

    def log(self) -> "Tensor":
        out = Tensor(np.log(self.data), (self,), "log")

        def _backward():
            self._accumulate(out.grad / self.data)

        out._backward = _backward
        return out

    def relu(self) -> "Tensor":
        out = Tensor(np.maximum(self.data, 0.0), (self,), "relu")

        def _backward():
            self._accumulate((self.data > 0) * out.grad)

        out._backward = _backward
        return out

    def tanh(self) -> "Tensor":
        out = Tensor(np.tanh(self.data), (self,), "tanh")

        def _backward():
            self._accumulate((1.0 - out.data ** 2) * out.grad)

        out._backward = _backward
        return out

    def softplus(self) -> "Tensor":
        out = Tensor(np.logaddexp(0.0, self.data), (self,), "softplus")

        def _backward():
            sig = np.exp(-np.logaddexp(0.0, -self.data))
            self._accumulate(sig * out.grad)

        out._backward = _backward
        return out

    def clip_min(self, lower: float) -> "Tensor":
        out = Tensor(np.maximum(self.data, lower), (self,), "clip_min")

        def _backward():
            self._accumulate((self.data > lower) * out.grad)

        out._backward = _backward
        return out

    # ------------------------------------------------------------------
    # reduções e forma
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum")

        def _backward():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.shape))

        out._backward = _backward
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        out = Tensor(self.data.reshape(*shape), (self,), "reshape")

        def _backward():
            self._accumulate(out.grad.reshape(self.shape))

        out._backward = _backward
        return out

    def __getitem__(self, index) -> "Tensor":
        out = Tensor(self.data[index], (self,), "getitem")

        def _backward():
            grad = np.zeros_like(self.data)
            np.add.at(grad, index, out.grad)
            self._accumulate(grad)

        out._backward = _backward
        return out

    def softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = Tensor(e / e.sum(axis=axis, keepdims=True), (self,), "softmax")

        def _backward():
            s = out.data
            dot = (out.grad * s).sum(axis=axis, keepdims=True)
            self._accumulate(s * (out.grad - dot))

        out._backward = _backward
        return out

    def log_softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        out = Tensor(shifted - logz, (self,), "log_softmax")

        def _backward():
            s = np.exp(out.data)
            self._accumulate(out.grad - s * out.grad.sum(axis=axis, keepdims=True))

        out._backward = _backward
        return out


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), "concat")
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def _backward():
        for t, start, stop in zip(tensors, bounds[:-1], bounds[1:]):
            index = [slice(None)] * out.grad.ndim
            index[axis] = slice(start, stop)
            t._accumulate(out.grad[tuple(index)])

    out._backward = _backward
    return out


ParameterSet = Dict[str, Tensor]


# ======================================================================
# RNG com semente
# ======================================================================


class SeededRng:
    """Gerador reprodutível: mesma semente, mesma sequência de sorteios."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.generator = np.random.default_rng(self.seed)

    def normal(self, shape) -> np.ndarray:
        return self.generator.standard_normal(shape)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self.generator.uniform(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def integers(self, low: int, high: int, size=None):
        return self.generator.integers(low, high, size=size)

    def derive(self, offset: int) -> "SeededRng":
        return SeededRng(self.seed * 1000003 + offset)

    def get_state(self) -> dict:
        return {"seed": self.seed, "bit_generator": self.generator.bit_generator.state}

    @classmethod
    def from_state(cls, state: dict) -> "SeededRng":
        rng = cls(state["seed"])
        rng.generator.bit_generator.state = state["bit_generator"]
        return rng


# ======================================================================
# MLP
# ======================================================================


@dataclass(frozen=True)
class MlpSpec:
    """``layer_widths`` inclui a largura de entrada: (entrada, oculta..., saída)."""

    layer_widths: Tuple[int, ...]
    activations: Tuple[str, ...] = ()
    output_activation: str = "identity"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("MlpSpec precisa de pelo menos uma camada")
        if any(w < 1 for w in widths):
            raise ValueError(f"larguras devem ser >= 1: {widths}")
        acts = tuple(self.activations)
        if not acts:
            acts = ("relu",) * (len(widths) - 2)
        if len(acts) != len(widths) - 2:
            raise ValueError("uma ativação por camada oculta")
        for act in acts:
            if act not in ACTIVATIONS:
                raise ValueError(f"ativação desconhecida: {act}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"ativação de saída desconhecida: {self.output_activation}")
        object.__setattr__(self, "activations", acts)

    @property
    def num_layers(self) -> int:
        return len(self.layer_widths) - 1


def glorot_uniform(rng: SeededRng, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_in, fan_out))


def init_mlp(spec: MlpSpec, rng: SeededRng, zero: bool = False) -> ParameterSet:
    params: ParameterSet = {}
    for i in range(spec.num_layers):
        fan_in, fan_out = spec.layer_widths[i], spec.layer_widths[i + 1]
        weights = np.zeros((fan_in, fan_out)) if zero else glorot_uniform(rng, fan_in, fan_out)
        params[f"W{i}"] = Tensor(weights, name=f"W{i}")
        params[f"b{i}"] = Tensor(np.zeros(fan_out), name=f"b{i}")
    return params


def _activate(x: Tensor, activation: str) -> Tensor:
    if activation == "relu":
        return x.relu()
    if activation == "tanh":
        return x.tanh()
    if activation == "softplus":
        return x.softplus()
    return x


def mlp_forward(spec: MlpSpec, params: ParameterSet, x) -> Tensor:
    h = as_tensor(x)
    if h.shape[-1] != spec.layer_widths[0]:
        raise ShapeError(f"entrada com largura {h.shape[-1]}, esperado {spec.layer_widths[0]}")
    for i in range(spec.num_layers):
        h = h @ params[f"W{i}"] + params[f"b{i}"]
        if i < spec.num_layers - 1:
            h = _activate(h, spec.activations[i])
    if spec.output_activation == "softmax":
        h = h.softmax(axis=-1)
    return h


# ======================================================================
# perdas
# ======================================================================


def softmax(logits, axis: int = -1) -> Tensor:
    return as_tensor(logits).softmax(axis=axis)


def cross_entropy(predicted, gold: int) -> float:
    """-log p[gold] com piso de probabilidade."""
    probs = np.asarray(predicted.data if isinstance(predicted, Tensor) else predicted, dtype=np.float64)
    if not 0 <= gold < probs.shape[-1]:
        raise ValueError(f"classe {gold} fora do intervalo [0, {probs.shape[-1]})")
    return float(-np.log(max(probs[..., gold], PROB_FLOOR)))


def cross_entropy_from_logits(logits: Tensor, golds: Sequence[int]) -> Tensor:
    """Soma das entropias cruzadas de um lote de logits (B, C)."""
    golds = np.asarray(golds, dtype=np.int64)
    if golds.size and (golds.min() < 0 or golds.max() >= logits.shape[-1]):
        raise ValueError("classe fora do intervalo")
    log_probs = logits.log_softmax(axis=-1)
    picked = log_probs[np.arange(len(golds)), golds]
    return -picked.sum()


def kl_categorical(p, q, eps: float = PROB_FLOOR) -> Tensor:
    """D_KL(p || q) ao longo do último eixo, com piso ``eps``."""
    p, q = as_tensor(p), as_tensor(q)
    if p.shape != q.shape:
        raise ShapeError(f"distribuições com tamanhos diferentes: {p.shape} vs {q.shape}")
    ratio = ((p + eps) / (q + eps)).log()
    return (p * ratio).sum(axis=-1).clip_min(0.0)


def gaussian_kl(mu, logvar) -> Tensor:
    """KL de N(mu, exp(logvar)) para N(0, I), somado no último eixo."""
    mu, logvar = as_tensor(mu), as_tensor(logvar)
    if mu.shape != logvar.shape:
        raise ShapeError(f"mu {mu.shape} e logvar {logvar.shape} diferem")
    return ((logvar.exp() + mu * mu - 1.0 - logvar) * 0.5).sum(axis=-1)


# ======================================================================
# otimizadores
# ======================================================================


@dataclass
class OptimizerState:
    algorithm: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ("adam", "adamw"):
            raise ValueError(f"otimizador desconhecido: {self.algorithm}")


def optimizer_step(state: OptimizerState, params: ParameterSet, gradients: Dict[str, Optional[np.ndarray]]) -> ParameterSet:
    for name, grad in gradients.items():
        if grad is not None and not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"gradiente não finito no parâmetro {name!r}")

    state.step += 1
    bias1 = 1.0 - state.beta1 ** state.step
    bias2 = 1.0 - state.beta2 ** state.step
    for name, param in params.items():
        grad = gradients.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v

        data = param.data
        if state.algorithm == "adamw" and state.weight_decay:
            data = data - state.learning_rate * state.weight_decay * data
        update = state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        param.data = data - update
    return params


def collect_gradients(params: ParameterSet) -> Dict[str, Optional[np.ndarray]]:
    return {name: p.grad for name, p in params.items()}


def zero_grad(params: ParameterSet) -> None:
    for p in params.values():
        p.grad = None


# ======================================================================
# verificação de gradiente
# ======================================================================


@dataclass
class GradCheckReport:
    max_relative_error: float
    tolerance: float
    coordinates: List[Tuple[str, Tuple[int, ...], float, float, float]]

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.tolerance


def grad_check(
    loss_function: Callable[[], Tensor],
    params: ParameterSet,
    samples: int = 20,
    tolerance: float = 1e-4,
    rng: Optional[SeededRng] = None,
    step: float = 1e-6,
    analytic: Optional[Dict[str, np.ndarray]] = None,
) -> GradCheckReport:
    """Compara o gradiente analítico com diferenças centrais em coordenadas sorteadas.

    ``loss_function`` deve recomputar a perda a partir do estado atual de
    ``params`` (mesma semente de ruído a cada chamada).
    """
    rng = rng or SeededRng(0)
    if analytic is None:
        zero_grad(params)
        loss_function().backward()
        analytic = {name: (p.grad if p.grad is not None else np.zeros_like(p.data)) for name, p in params.items()}

    names = [name for name, p in params.items() if p.data.size > 0]
    sizes = np.array([params[name].data.size for name in names], dtype=np.float64)
    records = []
    worst = 0.0
    for _ in range(samples):
        name = names[int(rng.generator.choice(len(names), p=sizes / sizes.sum()))]
        param = params[name]
        flat = int(rng.integers(0, param.data.size))
        index = np.unravel_index(flat, param.data.shape)

        original = param.data[index]
        param.data[index] = original + step
        plus = loss_function().item()
        param.data[index] = original - step
        minus = loss_function().item()
        param.data[index] = original

        numeric = (plus - minus) / (2.0 * step)
        value = float(analytic[name][index])
        rel = abs(value - numeric) / max(abs(value), abs(numeric), 1e-5)
        worst = max(worst, rel)
        records.append((name, tuple(int(i) for i in index), value, numeric, rel))

    report = GradCheckReport(max_relative_error=worst, tolerance=tolerance, coordinates=records)
    logger.debug("grad_check: erro relativo máximo %.3e em %d coordenadas", worst, samples)
    return report


# ======================================================================
# checkpoints
# ======================================================================


def save_checkpoint(path: str, groups: Dict[str, ParameterSet], rng_states: Optional[Dict[str, dict]] = None,
                    steps: Optional[Dict[str, int]] = None, extra: Optional[dict] = None) -> str:
    payload = {
        "params": {
            group: {name: {"shape": list(p.data.shape), "values": p.data.ravel(order="C").copy()}
                    for name, p in params.items()}
            for group, params in groups.items()
        },
        "rng": rng_states or {},
        "steps": steps or {},
        "extra": extra or {},
    }
    joblib.dump(payload, path)
    return path


def load_checkpoint(path: str) -> dict:
    payload = joblib.load(path)
    payload["params"] = {
        group: {name: Tensor(np.asarray(entry["values"]).reshape(entry["shape"]), name=name)
                for name, entry in params.items()}
        for group, params in payload["params"].items()
    }
    return payload


def copy_params(params: ParameterSet) -> Dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in params.items()}


def restore_params(params: ParameterSet, snapshot: Dict[str, np.ndarray]) -> None:
    for name, values in snapshot.items():
        params[name].data = values.copy()


def prefixed(groups: Iterable[Tuple[str, ParameterSet]]) -> ParameterSet:
    flat: ParameterSet = {}
    for prefix, params in groups:
        for name, p in params.items():
            flat[f"{prefix}.{name}"] = p
    return flat
