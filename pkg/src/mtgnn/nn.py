"""Tiny module system: parameter discovery, train/eval mode, state dicts."""
import numpy as np

from .tensor import Tensor


def uniform_param(rng, shape, bound, name=None):
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


class Module:
    training = True

    def children(self):
        for key, value in vars(self).items():
            if isinstance(value, Module):
                yield key, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{key}.{i}", item

    def named_tensors(self, prefix=""):
        """Every tensor attribute, trainable or frozen, in a stable order."""
        for key, value in vars(self).items():
            if isinstance(value, Tensor):
                yield prefix + key, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Tensor):
                        yield f"{prefix}{key}.{i}", item
        for key, child in self.children():
            yield from child.named_tensors(prefix + key + ".")

    def named_parameters(self, prefix=""):
        for name, t in self.named_tensors(prefix):
            if t.requires_grad:
                yield name, t

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def zero_grad(self):
        for t in self.parameters():
            t.grad = None

    def train(self, mode=True):
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def state_dict(self):
        return {name: t.data.copy() for name, t in self.named_tensors()}

    def load_state_dict(self, state):
        own = dict(self.named_tensors())
        missing = set(own) - set(state)
        if missing:
            raise KeyError(f"missing tensors in state: {sorted(missing)}")
        for name, t in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {t.shape}")
            t.data = arr.copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def count_parameters(module):
    """Return ``(total, per_submodule)`` trainable scalar counts."""
    per = {}
    total = 0
    for name, t in module.named_parameters():
        head = name.split(".", 1)[0]
        per[head] = per.get(head, 0) + t.size
        total += t.size
    return total, per
