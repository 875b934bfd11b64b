"""Solver options, kept apart from the solver so configs can load them."""
from dataclasses import dataclass, field

from .errors import ValidationError
from .nfunction import INFINITE, parse_order


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 5000
    grad_tol: float = 1e-9
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    k_schedule: tuple = (1, 2, 4, 8, INFINITE)
    delta_schedule: tuple = (0.1, 0.01)
    seed: int = 0
    # L-BFGS memory; not part of the config file
    memory: int = field(default=8, compare=False)
    # shift discrete interfaces node by node after the last delta stage
    polish: bool = field(default=True, compare=False)

    def __post_init__(self):
        try:
            ks = tuple(parse_order(k) for k in self.k_schedule)
        except Exception as exc:
            raise ValidationError(f"bad k_schedule: {exc}") from exc
        ds = tuple(float(d) for d in self.delta_schedule)
        object.__setattr__(self, "k_schedule", ks)
        object.__setattr__(self, "delta_schedule", ds)
        if not ks:
            raise ValidationError("k_schedule must not be empty")
        if not ds:
            raise ValidationError("delta_schedule must not be empty")
        if any(k < 1 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValidationError(f"k_schedule must be strictly ascending orders >= 1: {ks}")
        if any(d <= 0 for d in ds) or any(b >= a for a, b in zip(ds, ds[1:])):
            raise ValidationError(f"delta_schedule must be strictly descending and positive: {ds}")
        if int(self.max_iters) < 1:
            raise ValidationError("max_iters must be >= 1")
        if not self.grad_tol > 0:
            raise ValidationError("grad_tol must be positive")
        if not 0 < self.armijo_c < 1:
            raise ValidationError("armijo_c must lie in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise ValidationError("backtrack must lie in (0, 1)")
        if int(self.memory) < 1:
            raise ValidationError("memory must be >= 1")
        object.__setattr__(self, "max_iters", int(self.max_iters))
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self):
        return {
            "max_iters": self.max_iters,
            "grad_tol": self.grad_tol,
            "armijo_c": self.armijo_c,
            "backtrack": self.backtrack_factor,
            "k_schedule": ["inf" if k == INFINITE else int(k) for k in self.k_schedule],
            "delta_schedule": list(self.delta_schedule),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        allowed = {"max_iters", "grad_tol", "armijo_c", "backtrack",
                   "k_schedule", "delta_schedule", "seed"}
        unknown = set(d) - allowed
        if unknown:
            raise ValidationError(f"unknown solver keys: {sorted(unknown)}")
        kw = dict(d)
        if "backtrack" in kw:
            kw["backtrack_factor"] = kw.pop("backtrack")
        return cls(**kw)
