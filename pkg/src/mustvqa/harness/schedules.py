"""Learning-rate schedules: milestone step decay and linear warmup/decay."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ..exceptions import IterOutOfRange


@dataclass(frozen=True)
class ScheduleSpec:
    """``step_decay``: ``base_lr * factor ** (#milestones <= i)``.

    ``warmup_linear``: linear from ``base_lr`` to ``peak_lr`` over
    ``[0, warmup_iters]``, then linear down to 0 at ``total_iters``.
    """

    kind: str = "step_decay"
    base_lr: float = 1e-4
    total_iters: int = 24000
    milestones: tuple[int, ...] = (14000, 19000)
    factor: float = 0.1
    warmup_iters: int = 1000
    peak_lr: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "milestones", tuple(int(m) for m in self.milestones))
        if self.kind not in ("step_decay", "warmup_linear"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.total_iters <= 0:
            raise ValueError("total_iters must be positive")
        if self.base_lr < 0:
            raise ValueError("base_lr must be non-negative")
        if self.kind == "step_decay":
            if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
                raise ValueError(f"milestones must be strictly increasing: {self.milestones}")
            if self.factor < 0:
                raise ValueError("factor must be non-negative")
        else:
            if not 0 <= self.warmup_iters < self.total_iters:
                raise ValueError("need 0 <= warmup_iters < total_iters")
            if self.peak_lr < 0:
                raise ValueError("peak_lr must be non-negative")

    def scaled(self, total_iters: int) -> "ScheduleSpec":
        """Same shape stretched to ``total_iters``; milestones and warmup scale.

        Milestones that collapse onto one iteration at small scales merge.
        """
        ratio = total_iters / self.total_iters
        return ScheduleSpec(
            kind=self.kind,
            base_lr=self.base_lr,
            total_iters=total_iters,
            milestones=tuple(sorted({max(1, round(m * ratio)) for m in self.milestones})),
            factor=self.factor,
            warmup_iters=min(total_iters - 1, round(self.warmup_iters * ratio)),
            peak_lr=self.peak_lr,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["milestones"] = list(self.milestones)
        return d

    @classmethod
    def from_dict(cls, d) -> "ScheduleSpec":
        return cls(**d)


def lr_at(spec: ScheduleSpec, it: int) -> float:
    if not 0 <= it <= spec.total_iters:
        raise IterOutOfRange(f"iteration {it} outside [0, {spec.total_iters}]")
    if spec.kind == "step_decay":
        passed = sum(1 for m in spec.milestones if m <= it)
        if passed == 0:
            return spec.base_lr
        if spec.factor == 0:
            return 0.0
        # Dividing by 1/factor keeps decimal factors such as 0.1 exact.
        return spec.base_lr / (1.0 / spec.factor) ** passed
    w = spec.warmup_iters
    if it < w:
        return (spec.base_lr * (w - it) + spec.peak_lr * it) / w
    if it == w:
        return spec.peak_lr
    remaining = spec.total_iters - it
    return spec.peak_lr * remaining / (spec.total_iters - spec.warmup_iters)
