"""Run reports shared by all trainers."""

from dataclasses import dataclass, field


@dataclass
class RunReport:
    """Per-epoch curves plus side artifacts from one training run.

    ``curves`` rows are (epoch, split, accuracy, loss); ``loss_traces`` rows
    are (epoch, layer, step, loss). ``extras`` carries method-specific results
    (e.g. twin-vs-real accuracies, recovery traces).
    """

    method: str = ""
    seed: int = 0
    config_hash: str = ""
    curves: list = field(default_factory=list)
    loss_traces: list = field(default_factory=list)
    confusions: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    wall_clock: list = field(default_factory=list)
    status: str = "ok"
    extras: dict = field(default_factory=dict)

    def add_curve(self, epoch, split, accuracy, loss):
        if not (0.0 <= accuracy <= 1.0):
            raise ValueError(f"accuracy {accuracy} outside [0, 1]")
        self.curves.append((int(epoch), str(split), float(accuracy), float(loss)))

    def accuracies(self, split):
        return [(e, a) for (e, s, a, _) in self.curves if s == split]

    def final_accuracy(self, split):
        acc = self.accuracies(split)
        return acc[-1][1] if acc else None
