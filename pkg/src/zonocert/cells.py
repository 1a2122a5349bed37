"""Concrete and abstract forward passes for vanilla RNN, LSTM and GRU cells."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import torch
from torch import Tensor

from .domains import (
    DTYPE,
    Abstract,
    InterZono,
    NoisePool,
    Zonotope,
    apply_activation,
    apply_add,
    apply_affine,
    apply_concat,
    apply_hadamard,
    apply_scale_shift,
    apply_sigmoid_tanh,
    consolidate,
    lift_to_interzono,
    main_of,
)

GATES = {"vanilla": ("",), "lstm": ("i", "f", "g", "o"), "gru": ("r", "z", "n")}


def param_names(kind: str) -> List[str]:
    try:
        gates = GATES[kind]
    except KeyError:
        raise ValueError(f"unknown cell kind {kind!r}; expected one of {sorted(GATES)}") from None
    names = []
    for g in gates:
        names += [f"W_x{g}", f"b_x{g}", f"W_h{g}", f"b_h{g}"]
    return names


def param_shape(name: str, input_size: int, hidden_size: int) -> Tuple[int, ...]:
    if name.startswith("W_x"):
        return (hidden_size, input_size)
    if name.startswith("W_h"):
        return (hidden_size, hidden_size)
    return (hidden_size,)


@dataclass
class CellWeights:
    kind: str
    input_size: int
    hidden_size: int
    params: Dict[str, Tensor]

    def __post_init__(self):
        if self.input_size < 1 or self.hidden_size < 1:
            raise ValueError("input_size and hidden_size must be positive")
        expected = param_names(self.kind)
        missing = [n for n in expected if n not in self.params]
        if missing:
            raise ValueError(f"{self.kind} cell is missing weights {missing}")
        extra = sorted(set(self.params) - set(expected))
        if extra:
            raise ValueError(f"unexpected weights for a {self.kind} cell: {extra}")
        for name in expected:
            shape = param_shape(name, self.input_size, self.hidden_size)
            if tuple(self.params[name].shape) != shape:
                raise ValueError(f"{name} has shape {tuple(self.params[name].shape)}, expected {shape}")

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]


@dataclass
class OutputLayer:
    W_o: Tensor
    b_o: Tensor

    def __post_init__(self):
        if self.W_o.dim() != 2 or self.b_o.shape != (self.W_o.shape[0],):
            raise ValueError(f"output layer shapes {tuple(self.W_o.shape)} / {tuple(self.b_o.shape)} do not conform")
        if self.classes < 2:
            raise ValueError("output layer needs at least 2 classes")

    @property
    def classes(self) -> int:
        return self.W_o.shape[0]


@dataclass
class RNNModel:
    cell: CellWeights
    output: OutputLayer

    def __post_init__(self):
        if self.output.W_o.shape[1] != self.cell.hidden_size:
            raise ValueError("output layer width does not match hidden size")

    @property
    def kind(self) -> str:
        return self.cell.kind

    @property
    def input_size(self) -> int:
        return self.cell.input_size

    @property
    def hidden_size(self) -> int:
        return self.cell.hidden_size

    @property
    def classes(self) -> int:
        return self.output.classes

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        for name in param_names(self.kind):
            yield name, self.cell.params[name]
        yield "W_o", self.output.W_o
        yield "b_o", self.output.b_o

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def requires_grad_(self, flag: bool = True) -> "RNNModel":
        for p in self.parameters():
            p.requires_grad_(flag)
        return self

    def clone(self) -> "RNNModel":
        params = {k: v.detach().clone() for k, v in self.cell.params.items()}
        cell = CellWeights(self.kind, self.input_size, self.hidden_size, params)
        return RNNModel(cell, OutputLayer(self.output.W_o.detach().clone(), self.output.b_o.detach().clone()))

    @classmethod
    def from_dict(cls, kind: str, input_size: int, hidden_size: int, weights: Dict[str, Tensor]) -> "RNNModel":
        weights = dict(weights)
        W_o, b_o = weights.pop("W_o"), weights.pop("b_o")
        return cls(CellWeights(kind, input_size, hidden_size, weights), OutputLayer(W_o, b_o))

    @classmethod
    def random(
        cls,
        kind: str,
        input_size: int,
        hidden_size: int,
        classes: int = 2,
        generator: Optional[torch.Generator] = None,
        scale: Optional[float] = None,
    ) -> "RNNModel":
        """Uniform init in ``[-scale, scale]``, default ``1/sqrt(hidden_size)`` like torch.nn.RNN."""
        scale = hidden_size ** -0.5 if scale is None else scale

        def u(*shape):
            return (torch.rand(*shape, generator=generator, dtype=DTYPE) * 2 - 1) * scale

        params = {n: u(*param_shape(n, input_size, hidden_size)) for n in param_names(kind)}
        return cls(CellWeights(kind, input_size, hidden_size, params), OutputLayer(u(classes, hidden_size), u(classes)))


# ---------------------------------------------------------------------------
# concrete


def _lin(cell: CellWeights, gate: str, x: Tensor, h: Tensor) -> Tensor:
    return x @ cell[f"W_x{gate}"].T + cell[f"b_x{gate}"] + h @ cell[f"W_h{gate}"].T + cell[f"b_h{gate}"]


def cell_concrete(cell: CellWeights, x: Tensor, h: Tensor, c: Optional[Tensor] = None):
    """One recurrent update; returns ``(h', c')`` with ``c'`` None except for LSTM."""
    if x.shape[-1] != cell.input_size or h.shape[-1] != cell.hidden_size:
        raise ValueError(f"frame/state sizes {x.shape[-1]}/{h.shape[-1]} do not match cell {cell.input_size}/{cell.hidden_size}")
    if cell.kind == "vanilla":
        return torch.tanh(_lin(cell, "", x, h)), None
    if cell.kind == "lstm":
        if c is None:
            c = torch.zeros_like(h)
        i = torch.sigmoid(_lin(cell, "i", x, h))
        f = torch.sigmoid(_lin(cell, "f", x, h))
        g = torch.tanh(_lin(cell, "g", x, h))
        o = torch.sigmoid(_lin(cell, "o", x, h))
        c_new = f * c + i * g
        return o * torch.tanh(c_new), c_new
    r = torch.sigmoid(_lin(cell, "r", x, h))
    z = torch.sigmoid(_lin(cell, "z", x, h))
    hn = h @ cell["W_hn"].T + cell["b_hn"]
    n = torch.tanh(x @ cell["W_xn"].T + cell["b_xn"] + r * hn)
    return (1 - z) * n + z * h, None


def forward_concrete(model: RNNModel, X: Tensor) -> Tensor:
    """Logits ``W_o h_T + b_o`` for sequences ``X`` of shape ``(..., T, d)``."""
    if X.dim() < 2 or X.shape[-2] < 1:
        raise ValueError("sequence must have at least one frame")
    if X.shape[-1] != model.input_size:
        raise ValueError(f"frames have dimension {X.shape[-1]}, model expects {model.input_size}")
    h = X.new_zeros(*X.shape[:-2], model.hidden_size)
    c = torch.zeros_like(h) if model.kind == "lstm" else None
    for t in range(X.shape[-2]):
        h, c = cell_concrete(model.cell, X[..., t, :], h, c)
    return h @ model.output.W_o.T + model.output.b_o


# ---------------------------------------------------------------------------
# abstract


@dataclass(frozen=True)
class AbstractState:
    h: Abstract
    c: Optional[Abstract] = None


def zero_state(model: RNNModel, like: Abstract) -> AbstractState:
    zeros = torch.zeros(*like.batch_shape, model.hidden_size, dtype=DTYPE)
    z = Zonotope.point(zeros)
    h = lift_to_interzono(z) if isinstance(like, InterZono) else z
    return AbstractState(h, h if model.kind == "lstm" else None)


def _pre(cell: CellWeights, gates, dx: Abstract, h: Abstract) -> list:
    """Pre-activations ``W_x x + b_x + W_h h + b_h`` for several gates.

    Computed as one affine map of the stacked ``[x; h]`` domain.
    """
    W = torch.cat([torch.cat([cell[f"W_x{g}"], cell[f"W_h{g}"]], dim=1) for g in gates])
    b = torch.cat([cell[f"b_x{g}"] + cell[f"b_h{g}"] for g in gates])
    pre = apply_affine(apply_concat([dx, h]), W, b)
    pre.bounds  # computed once for the stack, inherited by the gate slices
    H = cell.hidden_size
    return [pre[k * H : (k + 1) * H] for k in range(len(gates))]


def cell_abstract(cell: CellWeights, dx: Abstract, state: AbstractState, pool: NoisePool) -> AbstractState:
    """Sound abstract counterpart of :func:`cell_concrete`."""
    if dx.n != cell.input_size:
        raise ValueError(f"frame domain has {dx.n} variables, cell expects {cell.input_size}")
    h = state.h
    if cell.kind == "vanilla":
        (pre,) = _pre(cell, [""], dx, h)
        return AbstractState(apply_activation(pre, "tanh", pool))
    if cell.kind == "lstm":
        pre_i, pre_f, pre_g, pre_o = _pre(cell, "ifgo", dx, h)
        f = apply_activation(pre_f, "sigmoid", pool)
        ig = apply_sigmoid_tanh(pre_i, pre_g, pool)
        c_new = apply_add(apply_hadamard(f, state.c, pool), ig)
        h_new = apply_sigmoid_tanh(pre_o, c_new, pool)
        return AbstractState(h_new, c_new)
    pre_rz = _pre(cell, "rz", dx, h)
    r = apply_activation(pre_rz[0], "sigmoid", pool)
    z = apply_activation(pre_rz[1], "sigmoid", pool)
    hn = apply_affine(h, cell["W_hn"], cell["b_hn"])
    n_pre = apply_add(apply_affine(dx, cell["W_xn"], cell["b_xn"]), apply_hadamard(r, hn, pool))
    n = apply_activation(n_pre, "tanh", pool)
    keep = apply_hadamard(apply_scale_shift(z, -1.0, 1.0), n, pool)
    return AbstractState(apply_add(keep, apply_hadamard(z, h, pool)))


def _consolidate_state(state: AbstractState, cap: int, pool: NoisePool) -> AbstractState:
    def fold(v):
        if v is None:
            return None
        m = consolidate(main_of(v), cap, pool)
        return InterZono(m, v.support) if isinstance(v, InterZono) else m

    return AbstractState(fold(state.h), fold(state.c))


def forward_abstract(
    model: RNNModel,
    input_domains: Sequence[Abstract],
    pool: NoisePool,
    max_noise: Optional[int] = None,
) -> Abstract:
    """Propagate per-frame input domains and return the logit domain.

    The domain kind (plain Zonotope or InterZono) follows the inputs.
    ``max_noise`` enables generator consolidation of the recurrent state.
    """
    if len(input_domains) < 1:
        raise ValueError("need at least one frame")
    state = zero_state(model, input_domains[0])
    for dx in input_domains:
        state = cell_abstract(model.cell, dx, state, pool)
        if max_noise is not None:
            state = _consolidate_state(state, max_noise, pool)
    return apply_affine(state.h, model.output.W_o, model.output.b_o)


def fresh_symbols_per_step(kind: str, hidden_size: int) -> int:
    """Main-domain noise symbols one abstract cell step allocates."""
    return {"vanilla": 1, "lstm": 4, "gru": 6}[kind] * hidden_size
