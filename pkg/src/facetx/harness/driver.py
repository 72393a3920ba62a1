"""Training, swapping, evaluation and gradient-check drivers."""

from __future__ import annotations

import contextlib
import logging
from pathlib import Path

import numpy as np

from .. import tensor as T
from ..geometry import MICRO
from ..losses import LossReport, TrainingAbort, total_loss
from ..metrics import EvalReport, expression_distance, id_distance, shape_distance, ssim
from ..synthdata import SwapPair, SynthSample, make_pairs, read_dataset, render
from ..tensor import GradCheckReport, NonFiniteError, ParamCheck
from .checkpoint import TrainState, load_checkpoint, new_state, save_checkpoint
from .config import Config
from .model import GROUPS, FaceSwapModel, report

log = logging.getLogger(__name__)

GRADCHECK_TOL = 1e-4
ADVERSARIAL_TOL = 1e-3


class NaNAbort(RuntimeError):
    """Training stopped on a non-finite loss; the last saved checkpoint is kept."""

    def __init__(self, step: int, reason: str):
        super().__init__(f"non-finite loss at step {step}: {reason}")
        self.step = step


class DataError(ValueError):
    """Dataset missing, empty or unreadable."""


@contextlib.contextmanager
def single_thread(enabled: bool = True):
    """Pin BLAS to one thread so reductions are reproducible."""
    if not enabled:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        yield
        return
    with threadpool_limits(limits=1):
        yield


def load_pairs(config: Config) -> list[SwapPair]:
    if config.data_path:
        path = Path(config.data_path)
        if not (path / "manifest.json").exists():
            raise DataError(f"no dataset manifest in {path}")
        try:
            pairs = read_dataset(path)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot read dataset {path}: {exc}") from None
    else:
        pairs = make_pairs(config.n_pairs, config.data_seed, config.image_size)
    if not pairs:
        raise DataError("dataset is empty")
    if pairs[0].source.image.shape[-1] != config.image_size:
        raise DataError("dataset image size does not match config.image_size")
    return pairs


def batch_indices(config: Config, step: int, n: int) -> np.ndarray:
    """Batch for ``step``, a pure function of (seed, step) so resumed runs line up."""
    rng = np.random.default_rng([config.seed, step])
    return rng.choice(n, size=config.batch_size, replace=config.batch_size > n)


def train_step(state: TrainState, batch: list[tuple[SynthSample, SynthSample]]) -> LossReport:
    """One discriminator update followed by one generator update."""
    cfg, model = state.config, state.model
    forwards = [model.forward(s, t) for s, t in batch]

    d_loss = model.discriminator_loss(batch, forwards)
    state.opt_d.zero_grad()
    T.backward(d_loss)
    state.opt_d.step()

    terms = model.generator_terms(batch, forwards, cfg.cx_select)
    total = total_loss(terms, cfg.weights)
    state.opt_g.zero_grad()
    T.backward(total)
    state.opt_g.step()
    state.opt_d.zero_grad()
    return report(terms, d_loss.item(), cfg.weights)


def train(config: Config, resume: bool = False) -> TrainState:
    """Run ``config.steps`` alternating D/G steps, logging one line per step.

    The metrics log gets ``step, l_f, l_adv_g, l_adv_d, l_perc, l_context, total``
    tab-separated. The checkpoint is rewritten every ``ckpt_every`` steps and at
    the end.
    """
    pairs = load_pairs(config)
    ckpt = Path(config.ckpt_path)
    if resume and ckpt.exists():
        state = load_checkpoint(ckpt, config)
    else:
        state = new_state(config)
    metrics = Path(config.metrics_path)
    metrics.parent.mkdir(parents=True, exist_ok=True)
    if state.step == 0 or not metrics.exists():
        metrics.write_text("")
    else:
        _truncate_log(metrics, state.step)
    with single_thread(config.deterministic), open(metrics, "a") as out:
        while state.step < config.steps:
            idx = batch_indices(config, state.step, len(pairs))
            batch = [(pairs[i].source, pairs[i].target) for i in idx]
            try:
                rep = train_step(state, batch)
            except (NonFiniteError, TrainingAbort) as exc:
                raise NaNAbort(state.step + 1, str(exc)) from exc
            state.step += 1
            out.write(rep.as_row(state.step) + "\n")
            out.flush()
            if state.step % 50 == 0:
                log.info("step %d total %.4f", state.step, rep.total)
            if config.ckpt_every and state.step % config.ckpt_every == 0:
                save_checkpoint(state, ckpt)
    if not (config.ckpt_every and state.step % config.ckpt_every == 0 and state.step):
        save_checkpoint(state, ckpt)
    return state


def _truncate_log(path: Path, steps: int) -> None:
    lines = path.read_text().splitlines(keepends=True)[:steps]
    path.write_text("".join(lines))


def read_metrics(path) -> np.ndarray:
    """Metrics log as an array with columns step, l_f, l_adv_g, l_adv_d, l_perc, l_context, total."""
    rows = [list(map(float, line.split("\t"))) for line in Path(path).read_text().splitlines() if line]
    return np.array(rows).reshape(-1, 7)


def report_row(output: np.ndarray, output_mask: np.ndarray, output_landmarks: np.ndarray,
               source: SynthSample, reference: SynthSample, pyramid) -> tuple[float, float, float, float]:
    """(id, expression, shape, ssim) of an output against its source and reference face."""
    return (
        id_distance(output, source.image, output_mask, source.mask, pyramid),
        expression_distance(output_landmarks, reference.landmarks),
        shape_distance(output_mask, reference.mask),
        ssim(output, reference.image),
    )


def swap(model: FaceSwapModel, source: SynthSample, target: SynthSample):
    """Swapped image plus its metric row.

    No parser or landmark detector runs on the output: its mask is the target
    mask and its landmarks are those of the ideal swap rendered from the source
    identity and target attributes.
    """
    out = model.swap(source, target)
    ideal = render(source.identity, target.attribute, target.image.shape[-1])
    row = report_row(out, target.mask, ideal.landmarks, source, target, model.pyramid)
    return out, row


def evaluate(model: FaceSwapModel, pairs: list[SwapPair]) -> EvalReport:
    if not pairs:
        raise DataError("cannot evaluate an empty dataset")
    rep = EvalReport()
    for pair in pairs:
        rep.add(*swap(model, pair.source, pair.target)[1])
    return rep


def micro_pair(seed: int = 0) -> SwapPair:
    """An 8×8 pair whose masks survive downsampling to the 2×2 grid."""
    from ..losses import resize_mask

    for s in range(seed, seed + 1000):
        pair = make_pairs(1, s, size=8)[0]
        if all(resize_mask(x.mask, 2, 2).sum() >= 2 for x in (pair.source, pair.target)):
            return pair
    raise DataError("no usable micro pair found")  # pragma: no cover


def gradcheck(config: Config, max_entries: int | None = None, step: float = 1e-5) -> GradCheckReport:
    """Finite-difference check of the generator objective for every parameter group at 8×8.

    Each group appears once with its worst relative error. The discriminator
    only reaches the objective through the adversarial term and gets the
    softer tolerance.
    """
    model = FaceSwapModel(MICRO, config.seed)
    pair = micro_pair(config.seed)
    batch = [(pair.source, pair.target)]

    def objective():
        return model.objective(batch, config.weights, config.cx_select)

    result = GradCheckReport()
    with single_thread(config.deterministic):
        for group, params in model.groups().items():
            tol = ADVERSARIAL_TOL if group == "discriminator" else GRADCHECK_TOL
            sub = T.finite_diff_check(objective, params, step=step, tol=tol,
                                      max_entries=max_entries, seed=config.seed)
            worst = max(sub.params, key=lambda p: p.max_rel_err)
            result.params.append(ParamCheck(group, worst.max_rel_err,
                                            (worst.name,) + tuple(worst.worst_index or ()),
                                            sum(p.n_checked for p in sub.params), tol))
    return result


__all__ = ["train", "train_step", "swap", "evaluate", "gradcheck", "NaNAbort", "DataError",
           "load_pairs", "read_metrics", "report_row", "GROUPS"]
