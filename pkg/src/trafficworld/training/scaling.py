"""Scaling harness: loss-vs-tokens curves for multiple model sizes."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..synthworld.types import ScenarioLog
from ..model import ModelConfig, WorldModel
from .losses import LossWeights
from .trainer import OptimConfig, TrainReport, train_model


@dataclass
class ScalingRow:
    name: str
    n_parameters: int
    tokens: list[int]
    ce: list[float]

    @property
    def final_ce(self) -> float:
        return self.ce[-1] if self.ce else float("nan")


@dataclass
class ScalingReport:
    rows: list[ScalingRow] = field(default_factory=list)
    token_budget: int = 0

    def to_tsv(self) -> str:
        lines = ["config\tparams\ttokens\tce"]
        for row in self.rows:
            for tok, ce in zip(row.tokens, row.ce):
                lines.append(f"{row.name}\t{row.n_parameters}\t{tok}\t{ce:.6f}")
        return "\n".join(lines) + "\n"

    def comparison_table(self) -> str:
        lines = ["config\tparams\tfinal_tokens\tfinal_ce"]
        for row in self.rows:
            tok = row.tokens[-1] if row.tokens else 0
            lines.append(f"{row.name}\t{row.n_parameters}\t{tok}\t{row.final_ce:.6f}")
        return "\n".join(lines) + "\n"


def scaling_report(configs: dict[str, ModelConfig], corpus: list[ScenarioLog],
                   token_budget: int, optim_cfg: OptimConfig | None = None,
                   seed: int = 0) -> ScalingReport:
    """Train each config on the shared corpus until the supervised-token
    budget is consumed; curves share the token axis definition."""
    if len(configs) < 1:
        raise ValueError("need at least one config")
    report = ScalingReport(token_budget=token_budget)
    for name, cfg in configs.items():
        ocfg = optim_cfg or OptimConfig()

        def stop(r: TrainReport) -> bool:
            return r.tokens[-1] >= token_budget

        model, train_rep = train_model(corpus, cfg, LossWeights(), ocfg, seed=seed,
                                       stop_fn=stop, log_every=5)
        report.rows.append(ScalingRow(name=name,
                                      n_parameters=model.n_parameters(),
                                      tokens=list(train_rep.tokens),
                                      ce=list(train_rep.ce)))
    return report
