from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_sequence = itertools.count()


@dataclass(eq=False)
class Node:
    """A recorded operation: its operands and the rule that maps the output
    gradient onto operand gradients."""

    op: str
    inputs: Tuple["Tensor", ...]
    backward_fn: BackwardFn
    output_id: int = 0
    seq: int = field(default_factory=lambda: next(_sequence))


class Tensor:
    """Dense float64 array that records the operations producing it."""

    __slots__ = ("data", "requires_grad", "grad", "node", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[Node] = None
        self.name = name

    @classmethod
    def _from_op(cls, data: np.ndarray, node: Optional[Node]) -> "Tensor":
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        out.requires_grad = node is not None
        out.grad = None
        out.node = node
        out.name = None
        if node is not None:
            node.output_id = id(out)
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(
                "item() needs a single-element tensor",
                {"shape": list(self.shape)},
            )
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # Arithmetic delegates to the op library.
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops

        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops

        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        from . import ops

        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        from . import ops

        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        from . import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        from . import ops

        return ops.transpose(self, axes or None)


class Tape:
    """The operations reachable from a root tensor, in recording order.

    Sequence numbers are assigned when an operation runs, so recording order is a
    topological order: every operand of a node was produced by an earlier node or
    is a leaf.
    """

    def __init__(self, nodes: List[Node]):
        self.nodes = nodes

    @classmethod
    def from_root(cls, root: Tensor) -> "Tape":
        seen: Dict[int, Node] = {}
        stack = [root]
        while stack:
            tensor = stack.pop()
            node = tensor.node
            if node is None or id(node) in seen:
                continue
            seen[id(node)] = node
            stack.extend(node.inputs)
        return cls(sorted(seen.values(), key=lambda n: n.seq))

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> Iterator[Node]:
        return iter(self.nodes)


def backward(loss: Tensor, leaves: Optional[Iterable[Tensor]] = None) -> Tape:
    """Populate ``grad`` on every requires_grad leaf that ``loss`` depends on.

    Gradients accumulate into existing buffers. Leaves passed in ``leaves`` that
    require grad but are not reached end up with a zero buffer.
    """
    if loss.data.size != 1:
        raise ContractError(
            "backward needs a scalar loss",
            {"shape": list(loss.shape)},
        )

    tape = Tape.from_root(loss)
    if loss.node is None:
        if loss.requires_grad:
            _accumulate_leaf(loss, np.ones_like(loss.data))
    else:
        pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(tape.nodes):
            upstream = pending.pop(node.output_id, None)
            if upstream is None:
                continue
            operand_grads = node.backward_fn(upstream)
            for operand, grad in zip(node.inputs, operand_grads):
                if grad is None or not operand.requires_grad:
                    continue
                if operand.node is None:
                    _accumulate_leaf(operand, grad)
                elif id(operand) in pending:
                    pending[id(operand)] = pending[id(operand)] + grad
                else:
                    pending[id(operand)] = grad

    if leaves is not None:
        for leaf in leaves:
            if leaf.requires_grad and leaf.grad is None:
                leaf.zero_grad()
    return tape


def _accumulate_leaf(leaf: Tensor, grad: np.ndarray) -> None:
    grad = np.asarray(grad, dtype=np.float64).reshape(leaf.shape)
    if leaf.grad is None:
        leaf.grad = grad.copy()
    else:
        leaf.grad += grad
