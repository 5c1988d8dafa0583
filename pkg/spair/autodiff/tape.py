"""Reverse-mode tape.

Every differentiable op produces a :class:`Variable` that remembers its parents and a
vector-Jacobian product. Values that do not depend on a trainable leaf are recorded as
constants, so masks and data never enter the graph.
"""
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from spair.core.errors import ShapeError, StructuralError

Vjp = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Variable:
    """A node on the tape: forward value, parents and the rule to push gradients to them."""

    __slots__ = ("value", "grad", "parents", "vjp", "op", "requires_grad", "name")

    def __init__(
        self,
        value,
        parents: Tuple["Variable", ...] = (),
        vjp: Optional[Vjp] = None,
        op: str = "leaf",
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        self.value = np.asarray(value)
        self.grad: Optional[np.ndarray] = None
        self.parents = parents
        self.vjp = vjp
        self.op = op
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def is_leaf(self) -> bool:
        return not self.parents

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        label = self.name or self.op
        return f"Variable({label}, shape={self.shape}, dtype={self.dtype})"

    # Operator sugar; the rules live in spair.autodiff.functional
    def __add__(self, other):
        from spair.autodiff import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from spair.autodiff import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from spair.autodiff import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from spair.autodiff import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from spair.autodiff import functional as F
        return F.div(self, other)

    def __neg__(self):
        from spair.autodiff import functional as F
        return F.scale(self, -1.0)


def parameter(value, name: Optional[str] = None) -> Variable:
    """Trainable leaf."""
    return Variable(np.array(value, copy=True), requires_grad=True, name=name)


def constant(value) -> Variable:
    return Variable(value)


def as_variable(x) -> Variable:
    return x if isinstance(x, Variable) else Variable(x)


def record(value: np.ndarray, parents: Iterable[Variable], vjp: Vjp, op: str) -> Variable:
    """Create an op output; drops the graph edge when no parent needs a gradient."""
    parents = tuple(parents)
    if not any(p.requires_grad for p in parents):
        return Variable(value, op=op)
    return Variable(value, parents=parents, vjp=vjp, op=op, requires_grad=True)


def topological_order(root: Variable) -> List[Variable]:
    """Parents-before-children order of every node reachable from ``root``."""
    order: List[Variable] = []
    state: Dict[int, int] = {}  # 1 = on stack, 2 = done
    stack = [(root, 0)]
    while stack:
        node, i = stack.pop()
        if i == 0:
            mark = state.get(id(node))
            if mark == 2:
                continue
            if mark == 1:
                raise StructuralError(f"cycle detected at {node!r}")
            state[id(node)] = 1
        if i < len(node.parents):
            stack.append((node, i + 1))
            parent = node.parents[i]
            if not parent.requires_grad:
                continue
            mark = state.get(id(parent))
            if mark == 1:
                raise StructuralError(f"cycle detected at {parent!r}")
            if mark is None:
                stack.append((parent, 0))
        else:
            state[id(node)] = 2
            order.append(node)
    return order


def backward(
    loss: Variable,
    params: Optional[Mapping[str, Variable]] = None,
    seed: Optional[np.ndarray] = None,
) -> Dict[str, np.ndarray]:
    """Propagate d(loss) to every trainable leaf.

    Leaf ``.grad`` fields are overwritten (not accumulated across calls), so repeating the
    pass over the same tape yields identical gradients. Returns ``{name: grad}`` for the
    given parameter mapping, or for every named leaf reached when ``params`` is None.
    """
    if seed is None:
        if loss.value.size != 1:
            raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
        seed = np.ones_like(loss.value)
    elif np.shape(seed) != loss.shape:
        raise StructuralError(f"seed shape {np.shape(seed)} does not match output {loss.shape}")

    grads: Dict[int, np.ndarray] = {id(loss): np.asarray(seed, dtype=loss.dtype)}
    order = topological_order(loss) if loss.requires_grad else []
    leaves: List[Variable] = []
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if node.is_leaf:
            node.grad = g if g is not None else np.zeros_like(node.value)
            leaves.append(node)
            continue
        if g is None:
            continue
        parent_grads = node.vjp(g)
        if len(parent_grads) != len(node.parents):
            raise StructuralError(f"{node.op}: vjp returned {len(parent_grads)} grads for {len(node.parents)} inputs")
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise StructuralError(
                    f"{node.op}: gradient shape {pg.shape} does not match input {parent.shape}"
                )
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg

    if params is not None:
        reached = {id(leaf) for leaf in leaves}
        result = {}
        for name, p in params.items():
            if id(p) not in reached:
                p.grad = np.zeros_like(p.value)
            result[name] = p.grad
        return result
    return {leaf.name: leaf.grad for leaf in leaves if leaf.name is not None}
