"""Reverse-mode differentiation over numpy arrays.

Every operation returns a new `Tensor` holding its parents and a closure
that maps the output gradient to parent gradients. Nodes are only recorded
when a parent requires a gradient, so a forward pass over constants costs
plain numpy.
"""
import numpy as np

from linalg.kernels import (invert, matrix_exponential,
                            matrix_exponential_frechet)


def unbroadcast(grad, shape):
    """Sum `grad` down to `shape` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


class Tensor:
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None

    def __repr__(self):
        label = f' {self.name}' if self.name else ''
        return f'Tensor{label}(shape={self.shape})'

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    @classmethod
    def _result(cls, data, parents, backward):
        """Wrap `data`; record the node only if some parent needs it."""
        out = cls(data)
        if any(parent.requires_grad for parent in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    def backward(self, grad=None):
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend((parent, False) for parent in node._parents)
        grads = {id(self): np.ones_like(self.data) if grad is None
                 else np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue
            if node._backward is None:
                node.grad = node_grad if node.grad is None \
                    else node.grad + node_grad
                continue
            for parent, parent_grad in zip(
                node._parents, node._backward(node_grad)
            ):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads \
                    else grads[key] + parent_grad

    # arithmetic

    def __add__(self, other):
        other = as_tensor(other)
        return Tensor._result(
            self.data + other.data, (self, other),
            lambda g: (unbroadcast(g, self.shape),
                       unbroadcast(g, other.shape)),
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor._result(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        return Tensor._result(
            self.data * other.data, (self, other),
            lambda g: (unbroadcast(g * other.data, self.shape),
                       unbroadcast(g * self.data, other.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        return Tensor._result(
            self.data / other.data, (self, other),
            lambda g: (
                unbroadcast(g / other.data, self.shape),
                unbroadcast(-g * self.data / other.data ** 2, other.shape),
            ),
        )

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent):
        return Tensor._result(
            self.data ** exponent, (self,),
            lambda g: (g * exponent * self.data ** (exponent - 1),),
        )

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._result(
            a @ b, (self, other),
            lambda g: (unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape),
                       unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape)),
        )

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    # reductions and shape

    def sum(self, axis=None, keepdims=False):
        shape = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._result(
            self.data.sum(axis=axis, keepdims=keepdims), (self,), backward
        )

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else np.prod(
            [self.shape[i] for i in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        original = self.shape
        return Tensor._result(
            self.data.reshape(*shape), (self,),
            lambda g: (g.reshape(original),),
        )

    def transpose(self, *axes):
        axes = axes or tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return Tensor._result(
            self.data.transpose(axes), (self,),
            lambda g: (g.transpose(inverse),),
        )

    @property
    def T(self):
        return self.transpose()

    def swap_last(self):
        axes = list(range(self.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
        return self.transpose(*axes)

    def __getitem__(self, index):
        shape = self.shape

        def backward(g):
            full = np.zeros(shape)
            np.add.at(full, index, g)
            return (full,)

        return Tensor._result(self.data[index], (self,), backward)

    # elementwise

    def exp(self):
        out = np.exp(self.data)
        return Tensor._result(out, (self,), lambda g: (g * out,))

    def log(self):
        return Tensor._result(
            np.log(self.data), (self,), lambda g: (g / self.data,)
        )

    def sqrt(self):
        out = np.sqrt(self.data)
        return Tensor._result(out, (self,), lambda g: (g / (2.0 * out),))

    def silu(self):
        sigmoid = 1.0 / (1.0 + np.exp(-self.data))
        return Tensor._result(
            self.data * sigmoid, (self,),
            lambda g: (g * sigmoid * (1.0 + self.data * (1.0 - sigmoid)),),
        )

    def softmax(self, axis=-1, mask=None):
        """Softmax along `axis`; entries where `mask` is False get zero."""
        x = self.data if mask is None else np.where(mask, self.data, -np.inf)
        shifted = np.exp(x - x.max(axis=axis, keepdims=True))
        out = shifted / shifted.sum(axis=axis, keepdims=True)
        return Tensor._result(
            out, (self,),
            lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),),
        )

    def log_softmax(self, axis=-1):
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        out = shifted - log_norm
        probs = np.exp(out)
        return Tensor._result(
            out, (self,),
            lambda g: (g - probs * g.sum(axis=axis, keepdims=True),),
        )

    # matrix functions

    def inverse(self):
        out = invert(self.data)
        return Tensor._result(
            out, (self,), lambda g: (-out.T @ g @ out.T,)
        )

    def expm(self):
        x = self.data
        return Tensor._result(
            matrix_exponential(x), (self,),
            lambda g: (matrix_exponential_frechet(x.T, g),),
        )


def tril(tensor, k=0):
    return tensor * np.tril(np.ones(tensor.shape), k)


def triu(tensor, k=0):
    return tensor * np.triu(np.ones(tensor.shape), k)


def diag(vector):
    return Tensor._result(
        np.diag(vector.data), (vector,), lambda g: (np.diag(g).copy(),)
    )


def where(mask, a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(
        np.where(mask, a.data, b.data), (a, b),
        lambda g: (unbroadcast(np.where(mask, g, 0.0), a.shape),
                   unbroadcast(np.where(mask, 0.0, g), b.shape)),
    )
